use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{Init, NetworkBuilder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Architecture {
    /// AlexNet-shaped stack: five convolutions (96/256/384/384/256 filters),
    /// three max-pools, batch normalization after every block, and dense
    /// 4096/4096/1000/2 with dropout. 24 numbered layers.
    AlexnetVariant,
    /// Three conv/pool blocks and two dense layers (~100k parameters at 64x64).
    SmallCnn,
    /// Flatten, one tanh hidden layer, two outputs. Used for gradient checks.
    TinyDense,
}

impl Architecture {
    /// Appends the layer stack for `resolution`-square single-channel inputs.
    pub(crate) fn assemble(self, b: &mut NetworkBuilder, dropout: f64) -> Result<()> {
        match self {
            Architecture::AlexnetVariant => {
                b.conv(96, 11, 4, 0)?.relu().max_pool(2, 2)?.batch_norm();
                b.conv(256, 11, 1, 0)?.relu().max_pool(2, 2)?.batch_norm();
                b.conv(384, 3, 1, 0)?.relu().batch_norm();
                b.conv(384, 3, 1, 0)?.relu().batch_norm();
                b.conv(256, 3, 1, 0)?.relu().max_pool(2, 2)?.batch_norm();
                b.flatten();
                b.dense(4096)?.relu().dropout(dropout).batch_norm();
                b.dense(4096)?.relu().dropout(dropout).batch_norm();
                b.dense(1000)?.relu().dropout(dropout).batch_norm();
                b.dense(2)?;
            }
            Architecture::SmallCnn => {
                b.conv(8, 3, 1, 1)?.relu().max_pool(2, 2)?;
                b.conv(16, 3, 1, 1)?.relu().max_pool(2, 2)?;
                b.conv(32, 3, 1, 1)?.relu().max_pool(2, 2)?;
                b.flatten();
                b.dense(48)?.relu().dropout(dropout);
                b.dense(2)?;
            }
            Architecture::TinyDense => {
                b.flatten();
                b.dense(16)?.tanh();
                b.dense(2)?;
            }
        }
        Ok(())
    }

    pub(crate) fn init(self) -> Init {
        match self {
            Architecture::TinyDense => Init::Normal(0.1),
            _ => Init::GlorotUniform,
        }
    }
}
