//! Labeled grayscale image collections: manifests, stratified splits,
//! ingestion from class-per-directory layouts, and a synthetic two-class set.

pub(crate) mod image;
mod ingest;
mod manifest;
mod split;
mod synth;

pub use self::image::{from_byte, quantize, to_byte, Image, Label, Split};
pub use ingest::{ingest, parse_class_map, IngestReport, SkippedFile, INGEST_REPORT_FILE};
pub use manifest::{DatasetManifest, ImageSample, ManifestEntry, MANIFEST_FILE};
pub use split::{split, SplitRatios};
pub use synth::{synthesize, synthesize_images, SynthSpec};

use std::path::Path;

use crate::error::{Error, Result};

/// A manifest together with its decoded images, in manifest order.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    samples: Vec<ImageSample>,
}

impl Dataset {
    /// Loads `manifest.csv` and every image it lists; paths resolve relative
    /// to the manifest's directory.
    pub fn load(manifest_path: &Path) -> Result<Dataset> {
        let manifest = DatasetManifest::load(manifest_path)?;
        let root = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let samples = manifest
            .entries
            .iter()
            .map(|e| {
                Ok(ImageSample {
                    id: e.id.clone(),
                    image: manifest.load_image(root, e)?,
                    label: e.label,
                    split: e.split,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { manifest, samples })
    }

    /// Builds a dataset from in-memory samples; `path` entries are synthesized
    /// as `images/<id>.png`.
    pub fn from_samples(resolution: usize, seed: u64, samples: Vec<ImageSample>) -> Result<Dataset> {
        if let Some(bad) = samples.iter().find(|s| s.image.side() != resolution) {
            return Err(Error::shape(format!(
                "sample `{}` is {}x{}, dataset resolution is {resolution}",
                bad.id,
                bad.image.side(),
                bad.image.side()
            )));
        }
        let entries = samples
            .iter()
            .map(|s| ManifestEntry {
                id: s.id.clone(),
                path: format!("images/{}.png", s.id),
                label: s.label,
                split: s.split,
            })
            .collect();
        let manifest = DatasetManifest::new(resolution, seed, entries)?;
        Ok(Dataset { manifest, samples })
    }

    pub fn resolution(&self) -> usize {
        self.manifest.resolution
    }

    pub fn samples(&self) -> &[ImageSample] {
        &self.samples
    }

    pub fn split(&self, split: Split) -> Vec<&ImageSample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }

    pub fn split_label(&self, split: Split, label: Label) -> Vec<&ImageSample> {
        self.samples
            .iter()
            .filter(|s| s.split == split && s.label == label)
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<&ImageSample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Re-splits the dataset (see [`split`]).
    pub fn resplit(&self, ratios: SplitRatios, seed: u64) -> Result<Dataset> {
        let manifest = split(&self.manifest, ratios, seed)?;
        let mut samples = self.samples.clone();
        for (s, e) in samples.iter_mut().zip(&manifest.entries) {
            s.split = e.split;
        }
        Ok(Dataset { manifest, samples })
    }

    /// Writes images and `manifest.csv` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let img_dir = dir.join("images");
        std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
        for (s, e) in self.samples.iter().zip(&self.manifest.entries) {
            s.image.save_png(&dir.join(&e.path))?;
        }
        self.manifest.save(&dir.join(MANIFEST_FILE))
    }
}

/// In-memory synthetic dataset, split 70/10/20 with `noise_seed`.
pub fn synthesize_dataset(spec: &SynthSpec) -> Result<Dataset> {
    let samples = synthesize_images(spec)?
        .into_iter()
        .map(|(id, label, image)| ImageSample {
            id,
            image,
            label,
            split: Split::Train,
        })
        .collect();
    let ds = Dataset::from_samples(spec.resolution, spec.noise_seed, samples)?;
    if spec.n_per_class >= 3 {
        ds.resplit(SplitRatios::default(), spec.noise_seed)
    } else {
        Ok(ds)
    }
}
