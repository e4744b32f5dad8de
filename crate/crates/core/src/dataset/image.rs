use std::fmt;
use std::io::Cursor;
use std::str::FromStr;

use image::imageops::FilterType;
use image::{GrayImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class label. Index 0 (NORMAL) is domain X, index 1 (OPACITY) is domain Y.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Normal,
    Opacity,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Normal, Label::Opacity];

    pub fn index(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Opacity => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Normal
        } else {
            Label::Opacity
        }
    }

    pub fn opposite(self) -> Label {
        Label::from_index(1 - self.index())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "NORMAL",
            Label::Opacity => "OPACITY",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NORMAL" => Ok(Label::Normal),
            "OPACITY" => Ok(Label::Opacity),
            other => Err(Error::invalid(format!("unknown label `{other}` (expected NORMAL or OPACITY)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "TRAIN",
            Split::Val => "VAL",
            Split::Test => "TEST",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TRAIN" => Ok(Split::Train),
            "VAL" | "VALIDATION" => Ok(Split::Val),
            "TEST" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}` (expected TRAIN, VAL or TEST)"))),
        }
    }
}

/// Maps a pixel in [-1, 1] to an 8-bit gray level.
pub fn to_byte(v: f64) -> u8 {
    (((v + 1.0) * 127.5).round()).clamp(0.0, 255.0) as u8
}

pub fn from_byte(b: u8) -> f64 {
    b as f64 / 127.5 - 1.0
}

/// Rounds a pixel value to the nearest value representable in an 8-bit PNG.
pub fn quantize(v: f64) -> f64 {
    from_byte(to_byte(v))
}

/// Square single-channel image with every pixel in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    side: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(side: usize, pixels: Vec<f64>) -> Result<Self> {
        if side == 0 || pixels.len() != side * side {
            return Err(Error::shape(format!(
                "{} pixels do not form a {side}x{side} image",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("pixel value {bad} outside [-1, 1]")));
        }
        Ok(Image { side, pixels })
    }

    pub fn filled(side: usize, value: f64) -> Result<Self> {
        Image::new(side, vec![value; side * side])
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Same image snapped to the 8-bit grid used on disk and over the wire.
    pub fn quantized(&self) -> Image {
        Image {
            side: self.side,
            pixels: self.pixels.iter().map(|&v| quantize(v)).collect(),
        }
    }

    /// Mean absolute pixel difference.
    pub fn l1_distance(&self, other: &Image) -> Result<f64> {
        if self.side != other.side {
            return Err(Error::shape(format!(
                "{0}x{0} vs {1}x{1}",
                self.side, other.side
            )));
        }
        Ok(self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / self.pixels.len() as f64)
    }

    pub fn to_gray(&self) -> GrayImage {
        let bytes = self.pixels.iter().map(|&v| to_byte(v)).collect();
        GrayImage::from_raw(self.side as u32, self.side as u32, bytes).expect("square buffer")
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Cursor::new(Vec::new());
        self.to_gray()
            .write_to(&mut out, ImageFormat::Png)
            .expect("in-memory PNG encoding");
        out.into_inner()
    }

    /// Converts any decoded image to grayscale, resizing to `side` x `side` if needed.
    pub fn from_dynamic(img: image::DynamicImage, side: usize) -> Result<Image> {
        let gray = img.to_luma8();
        let gray = if gray.width() as usize == side && gray.height() as usize == side {
            gray
        } else {
            image::imageops::resize(&gray, side as u32, side as u32, FilterType::Triangle)
        };
        Image::new(side, gray.as_raw().iter().map(|&b| from_byte(b)).collect())
    }

    /// Decodes PNG/JPEG bytes.
    pub fn from_encoded(bytes: &[u8], side: usize) -> Result<Image> {
        let img = image::load_from_memory(bytes)?;
        Image::from_dynamic(img, side)
    }

    pub fn save_png(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_png()).map_err(|e| Error::io(path, e))
    }

    pub fn load_png(path: &std::path::Path, side: usize) -> Result<Image> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Image::from_encoded(&bytes, side)
    }
}
