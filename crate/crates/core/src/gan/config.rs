use serde::{Deserialize, Serialize};

use crate::classifier::ProbPair;
use crate::error::{Error, Result};

/// Weights and targets of the composite objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_cycle: f64,
    pub mu_identity: f64,
    pub gamma_counter: f64,
    /// Counter-loss target for `G` outputs (should be classified OPACITY).
    pub target_y: ProbPair,
    /// Counter-loss target for `F` outputs (should be classified NORMAL).
    pub target_x: ProbPair,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_cycle: 10.0,
            mu_identity: 1.0,
            gamma_counter: 1.0,
            target_y: ProbPair { p_x: 0.0, p_y: 1.0 },
            target_x: ProbPair { p_x: 1.0, p_y: 0.0 },
        }
    }
}

impl LossWeights {
    /// Plain cycle-consistent objective: no counter or identity term.
    pub fn plain_cycle() -> Self {
        LossWeights {
            mu_identity: 0.0,
            gamma_counter: 0.0,
            ..LossWeights::default()
        }
    }

    /// Targets just across the decision boundary, e.g. `margin = 0.01` gives (0.49, 0.51).
    pub fn near_boundary(margin: f64) -> Result<Self> {
        Ok(LossWeights {
            target_y: ProbPair::new(0.5 - margin, 0.5 + margin)?,
            target_x: ProbPair::new(0.5 + margin, 0.5 - margin)?,
            ..LossWeights::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_cycle", self.lambda_cycle),
            ("mu_identity", self.mu_identity),
            ("gamma_counter", self.gamma_counter),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be a nonnegative number, got {v}")));
            }
        }
        ProbPair::new(self.target_y.p_x, self.target_y.p_y)?;
        ProbPair::new(self.target_x.p_x, self.target_x.p_y)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialForm {
    /// `mean((D(real)-1)^2) + mean(D(fake)^2)`, generator `mean((D(fake)-1)^2)`.
    #[default]
    LeastSquares,
    /// Cross-entropy on sigmoid scores; non-saturating generator term.
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.0002,
            beta1: 0.5,
            beta2: 0.999,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GeneratorArch {
    /// Encoder / residual blocks / decoder with a tanh output.
    Resnet,
    /// One same-size convolution followed by tanh.
    SingleConv,
    /// Parameter-free identity map (fixtures and baselines).
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub arch: GeneratorArch,
    /// Filters of the first convolution; doubled by each downsampling step.
    pub ngf: usize,
    /// Residual blocks; `None` picks 6 at resolution <= 128 and 9 above.
    #[serde(default)]
    pub n_blocks: Option<usize>,
}

impl GeneratorConfig {
    pub fn blocks_for(&self, resolution: usize) -> usize {
        self.n_blocks.unwrap_or(if resolution <= 128 { 6 } else { 9 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchGanConfig {
    /// Stride-2 convolutions before the two stride-1 layers (3 gives the 70x70 receptive field).
    pub n_downsample_layers: usize,
    pub ndf: usize,
}

impl PatchGanConfig {
    /// Deepest discriminator (at most 3 downsampling layers) whose receptive
    /// field stays within 70/256 of the image side, the proportion of the
    /// 70x70 discriminator on 256x256 inputs. Never fewer than 1 layer.
    pub fn for_resolution(resolution: usize, ndf: usize) -> Self {
        let limit = resolution as f64 * 70.0 / 256.0;
        let n = (1..=3).rev().find(|&n| receptive_field(n) as f64 <= limit).unwrap_or(1);
        PatchGanConfig {
            n_downsample_layers: n,
            ndf,
        }
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(self.n_downsample_layers)
    }
}

/// Receptive field of the PatchGAN stack: `n` stride-2 4x4 convolutions, then two stride-1 4x4 convolutions.
fn receptive_field(n_downsample: usize) -> usize {
    // Walk backwards from one output score: each layer adds (k - 1) * jump.
    let mut rf = 1;
    let mut jump = 1 << n_downsample;
    for _ in 0..2 {
        rf += 3 * jump;
    }
    for _ in 0..n_downsample {
        jump /= 2;
        rf += 3 * jump;
    }
    rf
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanConfig {
    pub resolution: usize,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub weights: LossWeights,
    pub patch_gan: PatchGanConfig,
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub adversarial: AdversarialForm,
    /// Image-history buffer size for discriminator updates (0 disables it).
    pub pool_size: usize,
    /// Caps the steps per epoch; `None` iterates over the larger class once.
    #[serde(default)]
    pub steps_per_epoch: Option<usize>,
}

impl GanConfig {
    /// Full-size networks: 64 generator / discriminator filters, 20 epochs.
    pub fn reference(resolution: usize) -> Self {
        GanConfig {
            resolution,
            optimizer: AdamConfig::default(),
            batch_size: 1,
            epochs: 20,
            weights: LossWeights::default(),
            patch_gan: PatchGanConfig::for_resolution(resolution, 64),
            generator: GeneratorConfig {
                arch: GeneratorArch::Resnet,
                ngf: 64,
                n_blocks: None,
            },
            adversarial: AdversarialForm::LeastSquares,
            pool_size: 50,
            steps_per_epoch: None,
        }
    }

    /// Narrow networks for single-CPU runs; optimizer and loss settings unchanged.
    pub fn desk(resolution: usize) -> Self {
        let mut c = GanConfig::reference(resolution);
        c.generator.ngf = 8;
        c.patch_gan.ndf = 8;
        c.epochs = 4;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.resolution == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("resolution, batch_size and epochs must be positive"));
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return Err(Error::invalid("learning_rate must be positive and betas in [0, 1)"));
        }
        if self.generator.ngf == 0 || self.patch_gan.ndf == 0 || self.patch_gan.n_downsample_layers == 0 {
            return Err(Error::invalid("ngf, ndf and n_downsample_layers must be positive"));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::invalid("steps_per_epoch must be positive when set"));
        }
        Ok(())
    }
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig::desk(64)
    }
}
