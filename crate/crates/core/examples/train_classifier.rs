//! Trains the small CNN on the synthetic two-class set and reports test metrics.

use cfx::classifier::{build, evaluate_classifier, train, ClassifierConfig};
use cfx::dataset::{synthesize_dataset, SynthSpec};
use cfx::Split;

fn main() -> cfx::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let spec = SynthSpec::default();
    let data = synthesize_dataset(&spec)?;
    let config = ClassifierConfig::small_cnn(spec.resolution);
    let t = std::time::Instant::now();
    let model = train(build(&config, 1)?, &data, 1)?;
    let m = evaluate_classifier(&model, &data, Split::Test)?;
    println!(
        "test accuracy {:.4}  f1 {:.4}  f2 {:.4}  ({:.1}s)",
        m.accuracy,
        m.f1,
        m.f2,
        t.elapsed().as_secs_f64()
    );
    Ok(())
}
