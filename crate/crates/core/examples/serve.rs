//! Starts the HTTP service on 127.0.0.1:8080 with an untrained identity
//! bundle over a fresh classifier; useful for wiring up clients.
//!
//! ```text
//! cargo run --example serve
//! curl -s localhost:8080/health
//! curl -s localhost:8080/samples?limit=3
//! curl -s --data-binary @image.png 'localhost:8080/explain?frames=5'
//! ```

use cfx::classifier::{build, train, ClassifierConfig};
use cfx::dataset::{synthesize_dataset, SynthSpec};
use cfx::gan::GanBundle;
use cfx::service::{serve, ServiceState};

#[tokio::main]
async fn main() -> cfx::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let spec = SynthSpec {
        n_per_class: 60,
        resolution: 32,
        ..SynthSpec::default()
    };
    let data = synthesize_dataset(&spec)?;
    let mut config = ClassifierConfig::small_cnn(32);
    config.epochs = 5;
    let c = tokio::task::block_in_place(|| train(build(&config, 1)?, &data, 1))?;
    let bundle = GanBundle::identity(&c)?;
    serve(ServiceState::new(c, bundle, Some(data))?, ([127, 0, 0, 1], 8080).into()).await
}
