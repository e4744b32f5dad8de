//! Explains single TEST images: routes each through the generator for its
//! current decision, then writes JSON, both PNGs, and a 9-frame slider.
//!
//! `cargo run --release --example explain_image [out_dir]`

use cfx::classifier::{build, train, ClassifierConfig};
use cfx::dataset::{synthesize_dataset, SynthSpec};
use cfx::explain::{explain, interpolate};
use cfx::gan::{train_gan, GanConfig};
use cfx::Split;

fn main() -> cfx::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("cfx_explain"));
    let spec = SynthSpec {
        n_per_class: 100,
        resolution: 32,
        ..SynthSpec::default()
    };
    let data = synthesize_dataset(&spec)?;
    let c = train(build(&ClassifierConfig::small_cnn(32), 1)?, &data, 1)?;
    let mut config = GanConfig::desk(32);
    config.epochs = 1;
    config.steps_per_epoch = Some(80);
    let bundle = train_gan(&data, &c, &config, 5)?;

    for s in data.split(Split::Test).into_iter().step_by(10) {
        let e = explain(&bundle, &c, &s.id, &s.image)?;
        println!(
            "{:<14} label {:<7} {:?}: {} -> {}  p_y {:.3} -> {:.3}  L1 {:.3}",
            s.id,
            s.label,
            e.generator_used,
            e.original_decision,
            e.counterfactual_decision,
            e.original_probs.p_y,
            e.counterfactual_probs.p_y,
            e.l1_proximity
        );
        e.save(&out, Some(9))?;
    }

    // The slider: classifier view along the straight line between the two images.
    let s = data.split(Split::Test)[0];
    let e = explain(&bundle, &c, &s.id, &s.image)?;
    let probs: Vec<String> = interpolate(e.original(), e.counterfactual(), 5)?
        .iter()
        .map(|f| c.predict(f).map(|p| format!("{:.3}", p.p_y)))
        .collect::<cfx::Result<_>>()?;
    println!("p_y along the slider for {}: {}", s.id, probs.join(" "));
    println!("written to {}", out.display());
    Ok(())
}
