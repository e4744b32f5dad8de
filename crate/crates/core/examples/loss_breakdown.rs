//! Evaluates the composite objective on one batch and shows how each weight
//! enters the generator total.

use cfx::classifier::{build, ClassifierConfig};
use cfx::gan::{total_objective, GanBundle, GanConfig, GeneratorArch, LossWeights};
use cfx::nn::Tensor;
use cfx::Image;

fn main() -> cfx::Result<()> {
    let res = 16;
    let c = build(&ClassifierConfig::tiny_dense(res), 0)?.freeze();
    let mut config = GanConfig::desk(res);
    config.generator.arch = GeneratorArch::SingleConv;
    let bundle = GanBundle::new(&config, &c, 1)?;

    let x = Tensor::from_images([Image::filled(res, -0.5)?, Image::filled(res, -0.4)?].iter())?;
    let y = Tensor::from_images([Image::filled(res, 0.5)?, Image::filled(res, 0.6)?].iter())?;
    for (name, w) in [
        ("full", LossWeights::default()),
        ("plain cycle", LossWeights::plain_cycle()),
        ("near boundary", LossWeights::near_boundary(0.01)?),
    ] {
        let v = total_objective(&bundle, &c, &x, &y, &w)?;
        println!("{name:<14} generator {:.5}  discriminator {:.5}", v.generator_total, v.discriminator_total);
        println!("               {:?}", v.components);
    }
    Ok(())
}
