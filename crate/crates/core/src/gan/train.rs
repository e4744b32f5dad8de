use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::GanConfig;
use super::objective::{discriminator_pass, generator_pass, LossComponents};
use super::pool::ImagePool;
use super::{epoch_dir, GanBundle};
use crate::classifier::ClassifierModel;
use crate::dataset::{Dataset, ImageSample, Label, Split};
use crate::error::{Error, Result};
use crate::nn::{Adam, Tensor};

pub const LOSSES_FILE: &str = "losses.csv";

/// One row of `losses.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: usize,
    pub adv_g: f64,
    pub adv_f: f64,
    pub adv_dx: f64,
    pub adv_dy: f64,
    pub cycle: f64,
    pub identity: f64,
    pub counter: f64,
    pub gen_total: f64,
    pub disc_total: f64,
}

impl LossRecord {
    fn new(epoch: usize, step: usize, c: &LossComponents, gen_total: f64) -> Self {
        LossRecord {
            epoch,
            step,
            adv_g: c.adv_g,
            adv_f: c.adv_f,
            adv_dx: c.adv_dx,
            adv_dy: c.adv_dy,
            cycle: c.cycle,
            identity: c.identity,
            counter: c.counter,
            gen_total,
            disc_total: c.discriminator_total(),
        }
    }

    fn mean(epoch: usize, rows: &[LossRecord]) -> Self {
        let n = rows.len() as f64;
        let avg = |f: fn(&LossRecord) -> f64| rows.iter().map(f).sum::<f64>() / n;
        LossRecord {
            epoch,
            step: rows.len(),
            adv_g: avg(|r| r.adv_g),
            adv_f: avg(|r| r.adv_f),
            adv_dx: avg(|r| r.adv_dx),
            adv_dy: avg(|r| r.adv_dy),
            cycle: avg(|r| r.cycle),
            identity: avg(|r| r.identity),
            counter: avg(|r| r.counter),
            gen_total: avg(|r| r.gen_total),
            disc_total: avg(|r| r.disc_total),
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::format("loss log", e.to_string())
}

pub(crate) fn write_records(rows: &[LossRecord], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err)?;
    w.write_record(HEADER).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const HEADER: [&str; 11] = [
    "epoch", "step", "adv_g", "adv_f", "adv_dx", "adv_dy", "cycle", "identity", "counter", "gen_total", "disc_total",
];

pub fn read_losses(path: &Path) -> Result<Vec<LossRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
        _ => csv_err(e),
    })?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn batch(samples: &[&ImageSample], order: &[usize], start: usize, size: usize) -> Result<Tensor> {
    Tensor::from_images((0..size).map(|j| &samples[order[(start + j) % order.len()]].image))
}

/// Trains a bundle in memory; see [`train_gan_with_checkpoints`].
pub fn train_gan(data: &Dataset, classifier: &ClassifierModel, config: &GanConfig, seed: u64) -> Result<GanBundle> {
    run(data, classifier, config, seed, None)
}

/// Trains a bundle and writes `out_dir/losses.csv` (one row per step) and
/// `out_dir/epoch_<n>/` checkpoints after every epoch.
pub fn train_gan_with_checkpoints(
    data: &Dataset,
    classifier: &ClassifierModel,
    config: &GanConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<GanBundle> {
    run(data, classifier, config, seed, Some(out_dir))
}

fn run(
    data: &Dataset,
    classifier: &ClassifierModel,
    config: &GanConfig,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<GanBundle> {
    if !classifier.is_frozen() {
        return Err(Error::NotFrozen);
    }
    config.validate()?;
    if data.resolution() != config.resolution {
        return Err(Error::shape(format!(
            "dataset resolution {} differs from translation resolution {}",
            data.resolution(),
            config.resolution
        )));
    }
    let mut xs = data.split_label(Split::Train, Label::Normal);
    let mut ys = data.split_label(Split::Train, Label::Opacity);
    for (set, label) in [(&xs, Label::Normal), (&ys, Label::Opacity)] {
        if set.is_empty() {
            return Err(Error::EmptyClass(format!("{} (TRAIN split)", label.as_str())));
        }
    }
    xs.sort_by(|a, b| a.id.cmp(&b.id));
    ys.sort_by(|a, b| a.id.cmp(&b.id));

    let checksum_before = classifier.checksum();
    let mut bundle = GanBundle::new(config, classifier, seed)?;
    let o = config.optimizer;
    let adam = |n| Adam::new(o.learning_rate, o.beta1, o.beta2, n);
    let (mut opt_g, mut opt_f) = (adam(bundle.g.num_params()), adam(bundle.f.num_params()));
    let (mut opt_dx, mut opt_dy) = (adam(bundle.dx.num_params()), adam(bundle.dy.num_params()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pool_x, mut pool_y) = (ImagePool::new(config.pool_size), ImagePool::new(config.pool_size));

    let bs = config.batch_size;
    let steps = config
        .steps_per_epoch
        .unwrap_or_else(|| xs.len().max(ys.len()).div_ceil(bs));
    let mut log_writer = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(LOSSES_FILE);
            let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path).map_err(csv_err)?;
            w.write_record(HEADER).map_err(csv_err)?;
            Some((w, path))
        }
        None => None,
    };

    let w = config.weights;
    let form = config.adversarial;
    let mut order_x: Vec<usize> = (0..xs.len()).collect();
    let mut order_y: Vec<usize> = (0..ys.len()).collect();
    for epoch in 1..=config.epochs {
        order_x.shuffle(&mut rng);
        order_y.shuffle(&mut rng);
        let mut rows = Vec::with_capacity(steps);
        for step in 0..steps {
            let x = batch(&xs, &order_x, step * bs, bs)?;
            let y = batch(&ys, &order_y, step * bs, bs)?;

            // (1) discriminators, on generated images drawn through the history pools
            let fake_y = pool_y.query(&bundle.g.infer(&x)?, &mut rng);
            let fake_x = pool_x.query(&bundle.f.infer(&y)?, &mut rng);
            let dp = discriminator_pass(&bundle.dx, &bundle.dy, &x, &y, &fake_x, &fake_y, form, true)?;
            let (gdx, gdy) = dp.grads.expect("gradients requested");
            opt_dx.step(bundle.dx.params_mut(), &gdx);
            opt_dy.step(bundle.dy.params_mut(), &gdy);

            // (2) both generators jointly on the generator total
            let gp = generator_pass(&bundle.g, &bundle.f, &bundle.dx, &bundle.dy, classifier, &x, &y, &w, form, true)?;
            let components = LossComponents {
                adv_dx: dp.adv_dx,
                adv_dy: dp.adv_dy,
                ..gp.components
            };
            let named = components.named();
            if named.iter().any(|(_, v)| !v.is_finite()) || !gp.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("step {}: {}", step + 1, components.breakdown()),
                });
            }
            if let Some((name, v)) = named.iter().find(|(_, v)| *v < 0.0) {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("negative {name} loss {v} at step {}", step + 1),
                });
            }
            let (gg, gf) = gp.grads.expect("gradients requested");
            opt_g.step(bundle.g.params_mut(), &gg);
            opt_f.step(bundle.f.params_mut(), &gf);

            let row = LossRecord::new(epoch, step + 1, &components, gp.total);
            if let Some((wr, _)) = log_writer.as_mut() {
                wr.serialize(row).map_err(csv_err)?;
            }
            rows.push(row);
        }
        let summary = LossRecord::mean(epoch, &rows);
        log::info!(
            "translation epoch {epoch}: gen {:.4} disc {:.4} cycle {:.4} identity {:.4} counter {:.4}",
            summary.gen_total,
            summary.disc_total,
            summary.cycle,
            summary.identity,
            summary.counter
        );
        bundle.training_log.push(summary);
        if let Some((wr, path)) = log_writer.as_mut() {
            wr.flush().map_err(|e| Error::io(path.as_path(), e))?;
        }
        if let Some(dir) = out_dir {
            bundle.save(&epoch_dir(dir, epoch))?;
        }
    }

    let checksum_after = classifier.checksum();
    if checksum_after != checksum_before {
        return Err(Error::ChecksumMismatch {
            expected: checksum_before,
            actual: checksum_after,
        });
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{build, ClassifierConfig};
    use crate::dataset::{synthesize_dataset, SynthSpec};
    use crate::gan::{GeneratorArch, GeneratorConfig, PatchGanConfig};

    fn micro() -> (Dataset, ClassifierModel, GanConfig) {
        let data = synthesize_dataset(&SynthSpec { n_per_class: 6, resolution: 16, ..SynthSpec::default() }).unwrap();
        let c = build(&ClassifierConfig::tiny_dense(16), 1).unwrap().freeze();
        let mut cfg = GanConfig::desk(16);
        cfg.generator = GeneratorConfig { arch: GeneratorArch::SingleConv, ngf: 1, n_blocks: None };
        cfg.patch_gan = PatchGanConfig { n_downsample_layers: 1, ndf: 2 };
        cfg.epochs = 2;
        cfg.pool_size = 3;
        (data, c, cfg)
    }

    #[test]
    fn unfrozen_classifier_rejected() {
        let (data, _, cfg) = micro();
        let c = build(&ClassifierConfig::tiny_dense(16), 1).unwrap();
        assert!(matches!(train_gan(&data, &c, &cfg, 0), Err(Error::NotFrozen)));
    }

    #[test]
    fn deterministic_and_logged() {
        let (data, c, cfg) = micro();
        let dir = tempfile::tempdir().unwrap();
        let a = train_gan_with_checkpoints(&data, &c, &cfg, 11, dir.path()).unwrap();
        let b = train_gan(&data, &c, &cfg, 11).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(a.training_log, b.training_log);
        let rows = read_losses(&dir.path().join(LOSSES_FILE)).unwrap();
        assert_eq!(rows.len(), 2 * a.training_log[0].step);
        assert!(rows.iter().all(|r| r.cycle >= 0.0 && r.counter >= 0.0 && r.identity >= 0.0));
        let header = std::fs::read_to_string(dir.path().join(LOSSES_FILE)).unwrap();
        assert!(header.starts_with("epoch,step,adv_g,adv_f,adv_dx,adv_dy,cycle,identity,counter,gen_total,disc_total\n"));
        let back = GanBundle::load_latest(dir.path()).unwrap();
        assert_eq!(back.checksum(), a.checksum());
        assert!(dir.path().join("epoch_1/G.bin").exists());
    }

    #[test]
    fn missing_class_rejected() {
        let (data, c, cfg) = micro();
        let only_normal: Vec<_> = data.samples().iter().filter(|s| s.label == Label::Normal).cloned().collect();
        let data = Dataset::from_samples(16, 0, only_normal).unwrap();
        assert!(matches!(train_gan(&data, &c, &cfg, 0), Err(Error::EmptyClass(_))));
    }
}
