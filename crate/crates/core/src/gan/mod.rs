//! Counterfactual translation networks: generators `G` (NORMAL -> OPACITY)
//! and `F` (OPACITY -> NORMAL), PatchGAN discriminators `D_X` and `D_Y`, the
//! loss terms, and the alternating training loop.
//!
//! The generator objective is
//! `adv_g + adv_f + lambda * cycle + mu * identity + gamma * counter`;
//! `gamma = mu = 0` leaves the plain cycle-consistent objective.

mod config;
mod losses;
mod nets;
mod objective;
mod pool;
mod train;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    AdamConfig, AdversarialForm, GanConfig, GeneratorArch, GeneratorConfig, LossWeights, PatchGanConfig,
};
pub use losses::{adversarial_loss, counter_loss, counter_term, cycle_loss, disc_adv, gen_adv, identity_loss, l1_mean};
pub use nets::{build_discriminator, build_generator, patch_grid};
pub use objective::{generator_gradients, total_objective, LossComponents, ObjectiveValue};
pub use pool::ImagePool;
pub use train::{read_losses, train_gan, train_gan_with_checkpoints, LossRecord, LOSSES_FILE};

use crate::classifier::ClassifierModel;
use crate::dataset::Image;
use crate::error::{Error, Result};
use crate::nn::{self, Network, Tensor};

/// Which translator produced a counterfactual.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Generator {
    /// NORMAL -> OPACITY
    G,
    /// OPACITY -> NORMAL
    F,
}

const CONFIG_FILE: &str = "config.json";
const CLASSIFIER_REF_FILE: &str = "classifier_ref.txt";
const LOG_FILE: &str = "training_log.csv";
const NET_FILES: [&str; 4] = ["G.bin", "F.bin", "DX.bin", "DY.bin"];

/// The four trained networks, their configuration, and the checksum of the
/// classifier they were trained against.
#[derive(Clone, Debug)]
pub struct GanBundle {
    pub g: Network,
    pub f: Network,
    pub dx: Network,
    pub dy: Network,
    pub classifier_ref: String,
    pub config: GanConfig,
    /// Per-epoch means of the step losses (`step` holds the number of steps).
    pub training_log: Vec<LossRecord>,
}

impl GanBundle {
    /// Freshly initialized networks bound to `classifier`.
    pub fn new(config: &GanConfig, classifier: &ClassifierModel, seed: u64) -> Result<GanBundle> {
        config.validate()?;
        if classifier.resolution() != config.resolution {
            return Err(Error::shape(format!(
                "classifier resolution {} differs from translation resolution {}",
                classifier.resolution(),
                config.resolution
            )));
        }
        let mut b = Self::untrained(config, seed)?;
        b.classifier_ref = classifier.checksum();
        Ok(b)
    }

    fn untrained(config: &GanConfig, seed: u64) -> Result<GanBundle> {
        let r = config.resolution;
        let s = seed.wrapping_mul(4);
        Ok(GanBundle {
            g: build_generator(&config.generator, r, s)?,
            f: build_generator(&config.generator, r, s.wrapping_add(1))?,
            dx: build_discriminator(&config.patch_gan, r, s.wrapping_add(2))?,
            dy: build_discriminator(&config.patch_gan, r, s.wrapping_add(3))?,
            classifier_ref: String::new(),
            config: config.clone(),
            training_log: Vec::new(),
        })
    }

    /// Bundle whose generators return their input unchanged.
    pub fn identity(classifier: &ClassifierModel) -> Result<GanBundle> {
        let mut config = GanConfig::desk(classifier.resolution());
        config.generator.arch = GeneratorArch::Identity;
        config.patch_gan = PatchGanConfig::for_resolution(classifier.resolution(), 2);
        Self::new(&config, classifier, 0)
    }

    pub fn resolution(&self) -> usize {
        self.config.resolution
    }

    pub fn generator(&self, which: Generator) -> &Network {
        match which {
            Generator::G => &self.g,
            Generator::F => &self.f,
        }
    }

    /// Errors unless `classifier` is the one this bundle was trained against.
    pub fn verify_classifier(&self, classifier: &ClassifierModel) -> Result<()> {
        let actual = classifier.checksum();
        if actual != self.classifier_ref {
            return Err(Error::ChecksumMismatch {
                expected: self.classifier_ref.clone(),
                actual,
            });
        }
        Ok(())
    }

    /// SHA-256 over the four network checksums.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for net in [&self.g, &self.f, &self.dx, &self.dy] {
            h.update(net.checksum().as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn translate(&self, which: Generator, img: &Image) -> Result<Image> {
        if img.side() != self.resolution() {
            return Err(Error::shape(format!(
                "translator expects {0}x{0} images, got {1}x{1}",
                self.resolution(),
                img.side()
            )));
        }
        let out = self.generator(which).infer(&Tensor::from_images([img])?)?;
        Image::new(img.side(), out.into_vec().into_iter().map(|v| v.clamp(-1.0, 1.0)).collect())
    }

    /// Writes `{G,F,DX,DY}.bin`, `config.json`, `classifier_ref.txt` and the epoch log.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, net) in NET_FILES.iter().zip([&self.g, &self.f, &self.dx, &self.dy]) {
            nn::save_weights(net, &dir.join(name))?;
        }
        let cfg = dir.join(CONFIG_FILE);
        fs::write(&cfg, serde_json::to_vec_pretty(&self.config)?).map_err(|e| Error::io(&cfg, e))?;
        let r = dir.join(CLASSIFIER_REF_FILE);
        fs::write(&r, format!("{}\n", self.classifier_ref)).map_err(|e| Error::io(&r, e))?;
        train::write_records(&self.training_log, &dir.join(LOG_FILE))
    }

    pub fn load(dir: &Path) -> Result<GanBundle> {
        let cfg = dir.join(CONFIG_FILE);
        let text = fs::read_to_string(&cfg).map_err(|e| Error::io(&cfg, e))?;
        let config: GanConfig = serde_json::from_str(&text)?;
        let mut b = Self::untrained(&config, 0)?;
        for (name, net) in NET_FILES.iter().zip([&mut b.g, &mut b.f, &mut b.dx, &mut b.dy]) {
            nn::load_weights(net, &dir.join(name))?;
        }
        let r = dir.join(CLASSIFIER_REF_FILE);
        b.classifier_ref = fs::read_to_string(&r).map_err(|e| Error::io(&r, e))?.trim().to_string();
        let log = dir.join(LOG_FILE);
        if log.exists() {
            b.training_log = read_losses(&log)?;
        }
        Ok(b)
    }

    /// Loads `dir` itself if it is a checkpoint, otherwise its highest `epoch_<n>` child.
    pub fn load_latest(dir: &Path) -> Result<GanBundle> {
        if dir.join(CONFIG_FILE).exists() {
            return Self::load(dir);
        }
        let latest = latest_epoch_dir(dir)?.ok_or_else(|| Error::MissingPath(dir.join("epoch_<n>")))?;
        Self::load(&latest)
    }
}

pub(crate) fn epoch_dir(root: &Path, epoch: usize) -> PathBuf {
    root.join(format!("epoch_{epoch}"))
}

fn latest_epoch_dir(dir: &Path) -> Result<Option<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut best: Option<(usize, PathBuf)> = None;
    for e in entries {
        let e = e.map_err(|err| Error::io(dir, err))?;
        let name = e.file_name();
        let Some(n) = name.to_str().and_then(|s| s.strip_prefix("epoch_")).and_then(|s| s.parse().ok()) else {
            continue;
        };
        if best.as_ref().map_or(true, |(m, _)| n > *m) {
            best = Some((n, e.path()));
        }
    }
    Ok(best.map(|(_, p)| p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{build, ClassifierConfig};

    fn tiny_classifier(res: usize) -> ClassifierModel {
        build(&ClassifierConfig::tiny_dense(res), 3).unwrap().freeze()
    }

    fn micro_config(res: usize) -> GanConfig {
        let mut c = GanConfig::desk(res);
        c.generator = GeneratorConfig { arch: GeneratorArch::SingleConv, ngf: 1, n_blocks: None };
        c.patch_gan = PatchGanConfig { n_downsample_layers: 1, ndf: 2 };
        c
    }

    #[test]
    fn save_load_round_trip() {
        let c = tiny_classifier(8);
        let b = GanBundle::new(&micro_config(8), &c, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        b.save(&epoch_dir(dir.path(), 1)).unwrap();
        b.save(&epoch_dir(dir.path(), 2)).unwrap();
        let back = GanBundle::load_latest(dir.path()).unwrap();
        assert_eq!(back.checksum(), b.checksum());
        assert_eq!(back.config, b.config);
        back.verify_classifier(&c).unwrap();
        for f in NET_FILES.iter().chain(&[CONFIG_FILE, CLASSIFIER_REF_FILE]) {
            assert!(dir.path().join("epoch_2").join(f).exists(), "{f}");
        }
    }

    #[test]
    fn checksum_mismatch_detected() {
        let c = tiny_classifier(8);
        let other = build(&ClassifierConfig::tiny_dense(8), 4).unwrap().freeze();
        let b = GanBundle::new(&micro_config(8), &c, 5).unwrap();
        assert!(matches!(b.verify_classifier(&other), Err(Error::ChecksumMismatch { .. })));
    }

    #[test]
    fn translations_stay_in_range() {
        let c = tiny_classifier(8);
        let b = GanBundle::new(&micro_config(8), &c, 5).unwrap();
        let img = Image::new(8, (0..64).map(|i| (i as f64 / 32.0) - 1.0).collect()).unwrap();
        for which in [Generator::G, Generator::F] {
            let out = b.translate(which, &img).unwrap();
            assert_eq!(out.side(), 8);
            assert!(out.pixels().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        let id = GanBundle::identity(&c).unwrap();
        assert_eq!(id.translate(Generator::G, &img).unwrap(), img);
    }
}
