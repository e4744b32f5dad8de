//! Synthetic two-class "chest film" images.
//!
//! NORMAL images are a bright, slowly varying background with two dark
//! elliptical lung fields. OPACITY images use the same generator and then
//! blend blotchy mid-gray clouds into the lung fields, so the class signal is
//! a local texture/brightness change inside the dark regions.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, Image, Label};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_per_class: usize,
    pub resolution: usize,
    pub opacity_strength: f64,
    pub noise_seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_per_class: 200,
            resolution: 64,
            opacity_strength: 0.6,
            noise_seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 {
            return Err(Error::invalid("n_per_class must be at least 1"));
        }
        if self.resolution < 16 {
            return Err(Error::invalid(format!(
                "resolution {} is below the minimum of 16 for synthetic images",
                self.resolution
            )));
        }
        if !(self.opacity_strength > 0.0 && self.opacity_strength <= 1.0) {
            return Err(Error::invalid(format!(
                "opacity_strength must lie in (0, 1], got {}",
                self.opacity_strength
            )));
        }
        Ok(())
    }
}

struct Lung {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
}

impl Lung {
    /// Normalized elliptical radius: < 1 inside.
    fn radius(&self, u: f64, v: f64) -> f64 {
        (((u - self.cx) / self.rx).powi(2) + ((v - self.cy) / self.ry).powi(2)).sqrt()
    }

    fn mask(&self, u: f64, v: f64) -> f64 {
        1.0 / (1.0 + ((self.radius(u, v) - 1.0) / 0.06).exp())
    }
}

struct Cloud {
    cx: f64,
    cy: f64,
    radius: f64,
    freq: f64,
    phase: (f64, f64),
}

fn image_rng(seed: u64, label: Label, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((label.index() as u64) << 40) | index as u64);
    rng
}

fn render(spec: &SynthSpec, label: Label, index: usize) -> Image {
    let mut rng = image_rng(spec.noise_seed, label, index);
    let res = spec.resolution;
    let base = rng.gen_range(0.42..0.48);
    let lung_level = rng.gen_range(-0.68..-0.62);
    let cy = rng.gen_range(0.48..0.52);
    let dx = rng.gen_range(0.18..0.20);
    let (rx, ry) = (rng.gen_range(0.12..0.13), rng.gen_range(0.27..0.29));
    let lungs = [
        Lung { cx: 0.5 - dx, cy, rx, ry },
        Lung { cx: 0.5 + dx, cy, rx, ry },
    ];
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(0.01..0.03),
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    // Cloud parameters are drawn for both classes so that the shared anatomy
    // consumes the same random stream; they are only rendered for OPACITY.
    let n_clouds = rng.gen_range(3..=5);
    let clouds: Vec<Cloud> = (0..n_clouds)
        .map(|_| {
            let lung = &lungs[rng.gen_range(0..2)];
            let ang = rng.gen_range(0.0..2.0 * PI);
            let r = rng.gen_range(0.0..0.6);
            Cloud {
                cx: lung.cx + r * lung.rx * ang.cos(),
                cy: lung.cy + r * lung.ry * ang.sin(),
                radius: rng.gen_range(0.07..0.11),
                freq: rng.gen_range(14.0..22.0),
                phase: (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)),
            }
        })
        .collect();
    let noise = Normal::new(0.0, 0.02).expect("valid std");
    let cloud_level = 0.1;

    let mut pixels = Vec::with_capacity(res * res);
    for row in 0..res {
        let v = (row as f64 + 0.5) / res as f64;
        for col in 0..res {
            let u = (col as f64 + 0.5) / res as f64;
            let mut px = base + 0.12 * (v - 0.5);
            for &(amp, fu, fv, ph) in &waves {
                px += amp * (2.0 * PI * (fu * u + fv * v) + ph).sin();
            }
            let lung_mask = lungs.iter().map(|l| l.mask(u, v)).fold(0.0, f64::max);
            px = px * (1.0 - lung_mask) + lung_level * lung_mask;
            if label == Label::Opacity {
                let mut cover: f64 = 0.0;
                for c in &clouds {
                    let d2 = (u - c.cx).powi(2) + (v - c.cy).powi(2);
                    let blob = (-d2 / (2.0 * c.radius * c.radius)).exp();
                    let texture = 0.75
                        + 0.25 * (c.freq * u + c.phase.0).sin() * (c.freq * v + c.phase.1).cos();
                    cover += blob * texture;
                }
                let cover = cover.min(1.0) * lung_mask;
                px += spec.opacity_strength * cover * (cloud_level - px);
            }
            px += noise.sample(&mut rng);
            pixels.push(super::image::quantize(px.clamp(-1.0, 1.0)));
        }
    }
    Image::new(res, pixels).expect("pixels clamped to range")
}

/// Generates `n_per_class` images per class in memory, NORMAL first.
/// Pixels are already on the 8-bit grid, so they survive a PNG round trip unchanged.
pub fn synthesize_images(spec: &SynthSpec) -> Result<Vec<(String, Label, Image)>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(2 * spec.n_per_class);
    for label in Label::ALL {
        for i in 0..spec.n_per_class {
            let id = format!("{}_{i:05}", label.as_str().to_ascii_lowercase());
            out.push((id, label, render(spec, label, i)));
        }
    }
    Ok(out)
}

/// Writes the synthetic images under `out_dir/images/` and a manifest at
/// `out_dir/manifest.csv`, split 70/10/20 with `noise_seed`.
pub fn synthesize(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest> {
    let ds = super::synthesize_dataset(spec)?;
    ds.save(out_dir)?;
    Ok(ds.manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> SynthSpec {
        SynthSpec {
            n_per_class: n,
            resolution: 32,
            opacity_strength: 0.6,
            noise_seed: 7,
        }
    }

    #[test]
    fn deterministic() {
        let a = synthesize_images(&small(5)).unwrap();
        let b = synthesize_images(&small(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn classes_balanced() {
        let imgs = synthesize_images(&small(4)).unwrap();
        assert_eq!(imgs.iter().filter(|(_, l, _)| *l == Label::Normal).count(), 4);
        assert_eq!(imgs.iter().filter(|(_, l, _)| *l == Label::Opacity).count(), 4);
    }

    #[test]
    fn preconditions() {
        let mut s = small(1);
        s.opacity_strength = 0.0;
        assert!(synthesize_images(&s).is_err());
        s.opacity_strength = 1.2;
        assert!(synthesize_images(&s).is_err());
        let mut s = small(1);
        s.resolution = 15;
        assert!(synthesize_images(&s).is_err());
        let mut s = small(0);
        s.n_per_class = 0;
        assert!(synthesize_images(&s).is_err());
    }

    #[test]
    fn opacity_is_brighter_on_average() {
        let spec = SynthSpec { n_per_class: 200, resolution: 64, ..SynthSpec::default() };
        let imgs = synthesize_images(&spec).unwrap();
        let mean_of = |label: Label| {
            let sel: Vec<f64> = imgs.iter().filter(|(_, l, _)| *l == label).map(|(_, _, i)| i.mean()).collect();
            sel.iter().sum::<f64>() / sel.len() as f64
        };
        assert!(mean_of(Label::Opacity) > mean_of(Label::Normal));
    }

    #[test]
    fn pixel_mean_threshold_separates_classes() {
        // Best single threshold on the image mean, chosen by exhaustive search.
        let spec = SynthSpec { n_per_class: 200, resolution: 64, ..SynthSpec::default() };
        let imgs = synthesize_images(&spec).unwrap();
        let mut scored: Vec<(f64, Label)> = imgs.iter().map(|(_, l, i)| (i.mean(), *l)).collect();
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let n = scored.len();
        let best = (0..=n)
            .map(|cut| {
                let below = scored[..cut].iter().filter(|(_, l)| *l == Label::Normal).count();
                let above = scored[cut..].iter().filter(|(_, l)| *l == Label::Opacity).count();
                below + above
            })
            .max()
            .unwrap();
        let acc = best as f64 / n as f64;
        assert!(acc >= 0.8, "threshold accuracy {acc}");
    }
}
