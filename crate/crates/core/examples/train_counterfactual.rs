//! Trains a translation bundle against a frozen classifier and prints the
//! per-epoch loss breakdown. Checkpoints land in `<out>/epoch_<n>/`.
//!
//! `cargo run --release --example train_counterfactual [out_dir]`

use cfx::classifier::{build, train, ClassifierConfig};
use cfx::dataset::{synthesize_dataset, SynthSpec};
use cfx::gan::{read_losses, train_gan_with_checkpoints, GanBundle, GanConfig, LOSSES_FILE};

fn main() -> cfx::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("cfx_gan"));
    let spec = SynthSpec {
        n_per_class: 100,
        resolution: 32,
        ..SynthSpec::default()
    };
    let data = synthesize_dataset(&spec)?;
    let c = train(build(&ClassifierConfig::small_cnn(32), 1)?, &data, 1)?;

    let mut config = GanConfig::desk(32);
    config.epochs = 2;
    config.steps_per_epoch = Some(40);
    let bundle = train_gan_with_checkpoints(&data, &c, &config, 5, &out)?;

    println!("epoch  adv_g  adv_f  cycle  ident  counter  gen_total  disc_total");
    for r in &bundle.training_log {
        println!(
            "{:>5} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>8.3} {:>10.3} {:>11.3}",
            r.epoch, r.adv_g, r.adv_f, r.cycle, r.identity, r.counter, r.gen_total, r.disc_total
        );
    }
    println!("{} per-step rows in {}", read_losses(&out.join(LOSSES_FILE))?.len(), out.display());

    // Reload the last checkpoint; the bundle remembers which classifier it was trained against.
    let reloaded = GanBundle::load_latest(&out)?;
    reloaded.verify_classifier(&c)?;
    println!("bundle {}", reloaded.checksum());
    Ok(())
}
