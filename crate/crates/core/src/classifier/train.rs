use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{softmax_rows, ClassifierModel};
use crate::dataset::{Dataset, ImageSample, Label, Split};
use crate::error::{Error, Result};
use crate::nn::{Sgd, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Mean squared error between softmax outputs and one-hot targets, averaged
/// over the batch and both outputs. Returns the loss and `d loss / d probs`.
pub fn mse_loss(probs: &[super::ProbPair], labels: &[Label]) -> (f64, Vec<[f64; 2]>) {
    let n = probs.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(probs.len());
    for (p, l) in probs.iter().zip(labels) {
        let t = one_hot(*l);
        let p = p.as_array();
        let d = [p[0] - t[0], p[1] - t[1]];
        loss += d[0] * d[0] + d[1] * d[1];
        grads.push([d[0] / n, d[1] / n]);
    }
    (loss / (2.0 * n), grads)
}

fn one_hot(label: Label) -> [f64; 2] {
    match label {
        Label::Normal => [1.0, 0.0],
        Label::Opacity => [0.0, 1.0],
    }
}

/// Mini-batch SGD driver over an unfrozen model. Exposed so that single steps
/// can be inspected; [`train`] runs full epochs on top of it.
pub struct Trainer {
    model: ClassifierModel,
    sgd: Sgd,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: ClassifierModel, seed: u64) -> Result<Trainer> {
        if model.is_frozen() {
            return Err(Error::invalid("cannot train a frozen classifier"));
        }
        let opt = model.config().optimizer;
        let sgd = Sgd::new(opt.learning_rate, opt.momentum, model.network().num_params());
        Ok(Trainer {
            model,
            sgd,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn model(&self) -> &ClassifierModel {
        &self.model
    }

    /// L2 penalty `l2 * sum w^2` over convolution and dense kernels and biases.
    fn l2_penalty(&self, grads: Option<&mut [f64]>) -> f64 {
        let l2 = self.model.config().l2_factor;
        if l2 == 0.0 {
            return 0.0;
        }
        let params = self.model.network().params();
        let mut sum = 0.0;
        let ranges = self.model.network().regularized_ranges();
        for &(start, len) in ranges {
            sum += params[start..start + len].iter().map(|w| w * w).sum::<f64>();
        }
        if let Some(g) = grads {
            for &(start, len) in ranges {
                for i in start..start + len {
                    g[i] += 2.0 * l2 * params[i];
                }
            }
        }
        l2 * sum
    }

    /// One optimizer step on a batch; returns the data loss (without the L2 term)
    /// measured on the training-mode forward pass.
    pub fn step(&mut self, batch: &[&ImageSample]) -> Result<f64> {
        let x = Tensor::from_images(batch.iter().map(|s| &s.image))?;
        let labels: Vec<Label> = batch.iter().map(|s| s.label).collect();
        let net = self.model.network_mut();
        let (logits, tape) = net.forward_train(&x, &mut self.rng)?;
        let probs = softmax_rows(&logits);
        let (loss, dprobs) = mse_loss(&probs, &labels);
        let dlogits = super::softmax_backward(&probs, &dprobs);
        let mut grads = self.model.network().zero_grads();
        self.model.network().backward(&tape, &dlogits, Some(&mut grads));
        self.l2_penalty(Some(&mut grads));
        self.sgd.step(self.model.network_mut().params_mut(), &grads);
        Ok(loss)
    }

    /// Data loss of a batch in inference mode (no parameter update).
    pub fn eval_loss(&self, batch: &[&ImageSample]) -> Result<f64> {
        Ok(evaluate(&self.model, batch)?.0)
    }

    pub fn into_model(self) -> ClassifierModel {
        self.model
    }
}

/// (mean loss, accuracy) in inference mode.
fn evaluate(model: &ClassifierModel, samples: &[&ImageSample]) -> Result<(f64, f64)> {
    let images: Vec<_> = samples.iter().map(|s| &s.image).collect();
    let probs = model.predict_batch(&images)?;
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let (loss, _) = mse_loss(&probs, &labels);
    let correct = probs.iter().zip(&labels).filter(|(p, l)| p.decision() == **l).count();
    Ok((loss, correct as f64 / samples.len() as f64))
}

/// Trains with SGD + momentum on MSE against one-hot targets and returns the
/// frozen best-validation-accuracy checkpoint (ties go to the later epoch).
pub fn train(model: ClassifierModel, data: &Dataset, seed: u64) -> Result<ClassifierModel> {
    let cfg = model.config().clone();
    if data.resolution() != cfg.resolution {
        return Err(Error::shape(format!(
            "dataset resolution {} does not match classifier resolution {}",
            data.resolution(),
            cfg.resolution
        )));
    }
    let mut train_set = data.split(Split::Train);
    let val_set = data.split(Split::Val);
    if train_set.is_empty() {
        return Err(Error::invalid("TRAIN split is empty"));
    }
    if val_set.is_empty() {
        return Err(Error::invalid("VAL split is empty; a validation split is needed for checkpoint selection"));
    }
    // Canonical order before shuffling so the run does not depend on manifest order.
    train_set.sort_by(|a, b| a.id.cmp(&b.id));

    let mut trainer = Trainer::new(model, seed)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;

    for epoch in 1..=cfg.epochs {
        train_set.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in train_set.chunks(cfg.batch_size) {
            let loss = trainer.step(batch)?;
            if !loss.is_finite() || !trainer.model.network().params().iter().all(|w| w.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("training loss became {loss}"),
                });
            }
            loss_sum += loss * batch.len() as f64;
        }
        let (_, train_accuracy) = evaluate(&trainer.model, &train_set)?;
        let (val_loss, val_accuracy) = evaluate(&trainer.model, &val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("validation loss became {val_loss}"),
            });
        }
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy,
            val_loss,
            val_accuracy,
        };
        log::info!(
            "classifier epoch {epoch}: loss {:.5} train acc {:.4} val acc {:.4}",
            rec.train_loss,
            rec.train_accuracy,
            rec.val_accuracy
        );
        log.push(rec);
        if best.as_ref().map_or(true, |(acc, _, _)| val_accuracy >= *acc) {
            let net = trainer.model.network();
            best = Some((val_accuracy, net.params().to_vec(), net.buffers().to_vec()));
        }
    }

    let mut model = trainer.into_model();
    if let Some((_, params, buffers)) = best {
        model.network_mut().load_state(params, buffers)?;
    }
    model.set_training_log(log);
    Ok(model.freeze())
}

pub(crate) fn write_log(log: &[EpochRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format("training log", e.to_string()))?;
    if log.is_empty() {
        w.write_record(["epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy"])
            .map_err(|e| Error::format("training log", e.to_string()))?;
    }
    for r in log {
        w.serialize(r).map_err(|e| Error::format("training log", e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_log(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format("training log", e.to_string()))?;
    r.deserialize()
        .map(|rec| rec.map_err(|e| Error::format("training log", e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{build, ClassifierConfig, ProbPair};
    use crate::dataset::{synthesize_dataset, SynthSpec};

    #[test]
    fn mse_matches_hand_value() {
        let probs = [ProbPair { p_x: 0.8, p_y: 0.2 }, ProbPair { p_x: 0.5, p_y: 0.5 }];
        let (loss, g) = mse_loss(&probs, &[Label::Normal, Label::Opacity]);
        // (0.04 + 0.04 + 0.25 + 0.25) / 4
        assert!((loss - 0.145).abs() < 1e-12);
        assert!((g[0][0] - (-0.1)).abs() < 1e-12);
        assert!((g[1][1] - (-0.25)).abs() < 1e-12);
    }

    #[test]
    fn empty_val_split_rejected() {
        let spec = SynthSpec { n_per_class: 4, resolution: 32, ..SynthSpec::default() };
        let ds = synthesize_dataset(&spec).unwrap();
        let samples = ds
            .samples()
            .iter()
            .cloned()
            .map(|mut s| {
                s.split = Split::Train;
                s
            })
            .collect();
        let ds = Dataset::from_samples(32, 0, samples).unwrap();
        let model = build(&ClassifierConfig::small_cnn(32), 0).unwrap();
        assert!(matches!(train(model, &ds, 0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn divergence_names_epoch() {
        let spec = SynthSpec { n_per_class: 10, resolution: 32, ..SynthSpec::default() };
        let ds = synthesize_dataset(&spec).unwrap();
        let mut cfg = ClassifierConfig::tiny_dense(32);
        cfg.optimizer.learning_rate = 1e300;
        cfg.epochs = 3;
        let model = build(&cfg, 0).unwrap();
        match train(model, &ds, 0) {
            Err(e @ Error::Diverged { .. }) => assert!(e.to_string().contains("epoch")),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let log = vec![EpochRecord { epoch: 1, train_loss: 0.25, train_accuracy: 0.5, val_loss: 0.2, val_accuracy: 0.75 }];
        write_log(&log, &path).unwrap();
        assert_eq!(read_log(&path).unwrap(), log);
    }
}
