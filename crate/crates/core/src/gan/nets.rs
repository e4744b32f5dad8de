use super::config::{GeneratorArch, GeneratorConfig, PatchGanConfig};
use crate::error::{Error, Result};
use crate::nn::{Init, Network, NetworkBuilder};

const INIT: Init = Init::Normal(0.02);

/// Image translator; output has the input's shape and lies in [-1, 1]
/// (except for the identity map, which returns its input unchanged).
pub fn build_generator(cfg: &GeneratorConfig, resolution: usize, seed: u64) -> Result<Network> {
    let mut b = NetworkBuilder::new([1, resolution, resolution], INIT, seed);
    match cfg.arch {
        GeneratorArch::Identity => {}
        GeneratorArch::SingleConv => {
            b.conv(1, 3, 1, 1)?.tanh();
        }
        GeneratorArch::Resnet => {
            if resolution % 4 != 0 {
                return Err(Error::IncompatibleResolution {
                    resolution,
                    layer: 0,
                    detail: "the encoder/decoder generator needs a resolution divisible by 4".into(),
                });
            }
            let ngf = cfg.ngf;
            b.reflection_pad(3)?.conv(ngf, 7, 1, 0)?.instance_norm().relu();
            b.conv(ngf * 2, 3, 2, 1)?.instance_norm().relu();
            b.conv(ngf * 4, 3, 2, 1)?.instance_norm().relu();
            for _ in 0..cfg.blocks_for(resolution) {
                b.residual(|r| {
                    r.reflection_pad(1)?.conv(ngf * 4, 3, 1, 0)?.instance_norm().relu();
                    r.reflection_pad(1)?.conv(ngf * 4, 3, 1, 0)?.instance_norm();
                    Ok(())
                })?;
            }
            b.conv_transpose(ngf * 2, 3, 2, 1, 1)?.instance_norm().relu();
            b.conv_transpose(ngf, 3, 2, 1, 1)?.instance_norm().relu();
            b.reflection_pad(3)?.conv(1, 7, 1, 0)?.tanh();
        }
    }
    debug_assert_eq!(b.shape(), [1, resolution, resolution]);
    Ok(b.build())
}

/// PatchGAN: one validity score per overlapping input patch.
pub fn build_discriminator(cfg: &PatchGanConfig, resolution: usize, seed: u64) -> Result<Network> {
    let mut b = NetworkBuilder::new([1, resolution, resolution], INIT, seed);
    let width = |i: usize| cfg.ndf * (1usize << i.min(3));
    b.conv(cfg.ndf, 4, 2, 1)?.leaky_relu(0.2);
    for i in 1..cfg.n_downsample_layers {
        b.conv(width(i), 4, 2, 1)?.instance_norm().leaky_relu(0.2);
    }
    b.conv(width(cfg.n_downsample_layers), 4, 1, 1)?.instance_norm().leaky_relu(0.2);
    b.conv(1, 4, 1, 1)?;
    Ok(b.build())
}

/// Side length of the discriminator's score grid at `resolution`.
pub fn patch_grid(cfg: &PatchGanConfig, resolution: usize) -> usize {
    let mut n = resolution;
    for _ in 0..cfg.n_downsample_layers {
        n /= 2;
    }
    n.saturating_sub(2)
}
