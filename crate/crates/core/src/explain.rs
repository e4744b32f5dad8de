//! Per-image counterfactuals, slider frames, and pairwise model planning.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierModel, ProbPair};
use crate::dataset::{Image, Label};
use crate::error::{Error, Result};
use crate::gan::{GanBundle, Generator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationResult {
    pub original_id: String,
    #[serde(skip)]
    pub original_pixels: Option<Image>,
    #[serde(skip)]
    pub counterfactual_pixels: Option<Image>,
    pub original_probs: ProbPair,
    pub counterfactual_probs: ProbPair,
    pub original_decision: Label,
    pub counterfactual_decision: Label,
    pub flipped: bool,
    /// Mean absolute pixel difference between counterfactual and original.
    pub l1_proximity: f64,
    pub generator_used: Generator,
}

impl ExplanationResult {
    pub fn original(&self) -> &Image {
        self.original_pixels.as_ref().expect("explanations carry their images")
    }

    pub fn counterfactual(&self) -> &Image {
        self.counterfactual_pixels.as_ref().expect("explanations carry their images")
    }

    /// Writes `<id>.json`, `<id>_original.png`, `<id>_counterfactual.png` and,
    /// with `frames >= 2`, `<id>_frames/frame_<i>.png`.
    pub fn save(&self, dir: &Path, frames: Option<usize>) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let id = sanitize(&self.original_id);
        let json = dir.join(format!("{id}.json"));
        fs::write(&json, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(&json, e))?;
        self.original().save_png(&dir.join(format!("{id}_original.png")))?;
        self.counterfactual().save_png(&dir.join(format!("{id}_counterfactual.png")))?;
        if let Some(n) = frames {
            let fdir = dir.join(format!("{id}_frames"));
            fs::create_dir_all(&fdir).map_err(|e| Error::io(&fdir, e))?;
            for (i, f) in interpolate(self.original(), self.counterfactual(), n)?.iter().enumerate() {
                f.save_png(&fdir.join(format!("frame_{i:02}.png")))?;
            }
        }
        Ok(())
    }
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Generator for an image the classifier assigns to `decision`.
pub fn route(decision: Label) -> Generator {
    match decision {
        Label::Normal => Generator::G,
        Label::Opacity => Generator::F,
    }
}

/// Translates `image` towards the class the classifier does not currently
/// assign it to, and reports the classifier's view before and after.
pub fn explain(bundle: &GanBundle, classifier: &ClassifierModel, id: &str, image: &Image) -> Result<ExplanationResult> {
    bundle.verify_classifier(classifier)?;
    explain_verified(bundle, classifier, id, image)
}

/// [`explain`] without re-hashing the classifier; callers must have verified it.
pub(crate) fn explain_verified(
    bundle: &GanBundle,
    classifier: &ClassifierModel,
    id: &str,
    image: &Image,
) -> Result<ExplanationResult> {
    let original_probs = classifier.predict(image)?;
    let original_decision = original_probs.decision();
    let generator_used = route(original_decision);
    let cf = bundle.translate(generator_used, image)?;
    let counterfactual_probs = classifier.predict(&cf)?;
    let counterfactual_decision = counterfactual_probs.decision();
    Ok(ExplanationResult {
        original_id: id.to_string(),
        l1_proximity: image.l1_distance(&cf)?,
        original_pixels: Some(image.clone()),
        counterfactual_pixels: Some(cf),
        original_probs,
        counterfactual_probs,
        original_decision,
        counterfactual_decision,
        flipped: original_decision != counterfactual_decision,
        generator_used,
    })
}

/// `steps` frames blending `original` into `counterfactual` linearly;
/// the first and last frames are exact copies of the endpoints.
pub fn interpolate(original: &Image, counterfactual: &Image, steps: usize) -> Result<Vec<Image>> {
    if steps < 2 {
        return Err(Error::invalid(format!("interpolation needs at least 2 frames, got {steps}")));
    }
    if original.side() != counterfactual.side() {
        return Err(Error::shape(format!(
            "cannot blend {0}x{0} with {1}x{1}",
            original.side(),
            counterfactual.side()
        )));
    }
    let last = steps - 1;
    (0..steps)
        .map(|i| {
            if i == 0 {
                return Ok(original.clone());
            }
            if i == last {
                return Ok(counterfactual.clone());
            }
            let t = i as f64 / last as f64;
            let px = original
                .pixels()
                .iter()
                .zip(counterfactual.pixels())
                .map(|(a, b)| ((1.0 - t) * a + t * b).clamp(-1.0, 1.0))
                .collect();
            Image::new(original.side(), px)
        })
        .collect()
}

/// Unordered class pairs, one translation model each.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairPlan {
    pub class_names: Vec<String>,
    pub pairs: Vec<(String, String)>,
}

/// All `k(k-1)/2` unordered pairs of `class_names`, each pair and the list
/// in lexicographic order.
pub fn plan_pairs(class_names: &[String]) -> Result<PairPlan> {
    if class_names.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 classes, got {}", class_names.len())));
    }
    let mut seen = BTreeSet::new();
    for name in class_names {
        if name.trim().is_empty() {
            return Err(Error::invalid("class names must be non-empty"));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::invalid(format!("duplicate class name `{name}`")));
        }
    }
    let sorted: Vec<&str> = seen.into_iter().collect();
    let mut pairs = Vec::with_capacity(sorted.len() * (sorted.len() - 1) / 2);
    for (i, a) in sorted.iter().enumerate() {
        for b in &sorted[i + 1..] {
            pairs.push((a.to_string(), b.to_string()));
        }
    }
    Ok(PairPlan {
        class_names: class_names.to_vec(),
        pairs,
    })
}
