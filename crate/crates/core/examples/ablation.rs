//! Counter-loss ablation at desk scale: trains the translation bundle twice
//! from the same seed, once with gamma = 1 and once with gamma = 0, and
//! compares flip accuracy on the TEST split.
//!
//! `cargo run --release --example ablation [out_dir]`

use cfx::classifier::{build, evaluate_classifier, train};
use cfx::dataset::synthesize_dataset;
use cfx::eval::{ablation, DeskAblation};
use cfx::Split;

fn main() -> cfx::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("cfx_ablation"));
    let setup = DeskAblation::default();
    let data = synthesize_dataset(&setup.synth)?;
    let c = train(build(&setup.classifier, setup.classifier_seed)?, &data, setup.classifier_seed)?;
    println!("classifier TEST accuracy {:.4}", evaluate_classifier(&c, &data, Split::Test)?.accuracy);

    let before = c.checksum();
    let report = ablation(&data, &c, &setup.gan, setup.gan_seed, &out)?;
    assert_eq!(before, c.checksum());

    print!("{}", report.to_text());
    println!("reports in {}", out.display());
    Ok(())
}
