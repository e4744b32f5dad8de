//! Counterfactual image explanations for binary image classifiers.
//!
//! A frozen classifier `C` is explained by a pair of image translators
//! (`G`: NORMAL -> OPACITY, `F`: OPACITY -> NORMAL) trained with the usual
//! cycle-consistent adversarial objective plus a term that penalizes
//! translations the classifier does not assign to the opposite class.
//!
//! Modules, bottom-up:
//! - [`nn`]: small CPU tensor/layer engine with explicit backprop.
//! - [`dataset`]: manifests, stratified splits, ingestion and a synthetic two-class set.
//! - [`classifier`]: the binary CNN under explanation.
//! - [`gan`]: generators, PatchGAN discriminators, loss terms and the training loop.
//! - [`explain`]: per-image counterfactuals, slider interpolation, pairwise planning.
//! - [`eval`]: flip-accuracy reports and the counterfactual-loss ablation.
//! - [`service`]: HTTP inference service; [`cli`]: command-line front end.

pub mod classifier;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod explain;
pub mod gan;
pub mod nn;
pub mod service;

pub use classifier::{ClassifierConfig, ClassifierModel, ProbPair};
pub use dataset::{DatasetManifest, Image, ImageSample, Label, Split};
pub use error::{Error, Result};
pub use explain::{ExplanationResult, PairPlan};
pub use eval::FlipReport;
pub use gan::{GanBundle, GanConfig, LossWeights};
