fn main() {
    std::process::exit(cfx::cli::run(std::env::args_os()));
}
