//! Flip-accuracy reports: an identity bundle (which can never flip a
//! decision) next to a briefly trained one.
//!
//! `cargo run --release --example evaluate_flips`

use cfx::classifier::{build, train, ClassifierConfig};
use cfx::dataset::{synthesize_dataset, SynthSpec};
use cfx::eval::evaluate_flips;
use cfx::gan::{train_gan, GanBundle, GanConfig};
use cfx::Split;

fn main() -> cfx::Result<()> {
    let spec = SynthSpec {
        n_per_class: 100,
        resolution: 32,
        ..SynthSpec::default()
    };
    let data = synthesize_dataset(&spec)?;
    let c = train(build(&ClassifierConfig::small_cnn(32), 1)?, &data, 1)?;

    let identity = GanBundle::identity(&c)?;
    println!("identity generators:");
    print!("{}", evaluate_flips(&identity, &c, &data, Split::Test)?.to_text());

    let mut config = GanConfig::desk(32);
    config.epochs = 1;
    config.steps_per_epoch = Some(80);
    let trained = train_gan(&data, &c, &config, 5)?;
    let report = evaluate_flips(&trained, &c, &data, Split::Test)?;
    println!("\ntrained for {} steps:", 80);
    print!("{}", report.to_text());
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
