//! Annotated patches, dot-to-mask conversion and the stochastic augmentations
//! used by the counter, detector and classifier training loops.

mod augment;
mod crop;
mod io;
mod mask;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use augment::{augment_mask, augment_patch, erode, AugmentationConfig};
pub use crop::{cell_patches, crop_centered};
pub use io::{load_dataset, load_images, save_dataset, ANNOTATIONS_DIR, IMAGES_DIR};
pub use mask::{build_pseudo_mask, BinaryMask, PseudoMask};

/// Side length of detection patches.
pub const DETECTION_PATCH_SIZE: usize = 224;
/// Side length of single-cell classifier patches.
pub const CLASSIFIER_PATCH_SIZE: usize = 28;
/// Disc radius used to turn dot annotations into pseudo-segmentations.
pub const DEFAULT_MASK_RADIUS: f64 = 4.0;

/// The five annotated cell types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "CD8")]
    Cd8,
    #[serde(rename = "GAL8+pSTAT−", alias = "GAL8+pSTAT-")]
    PstatNegative,
    #[serde(rename = "GAL8+pSTAT+strong")]
    PstatStrong,
    #[serde(rename = "GAL8+pSTAT+moderate")]
    PstatModerate,
    #[serde(rename = "GAL8+pSTAT+weak")]
    PstatWeak,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Cd8,
        Category::PstatNegative,
        Category::PstatStrong,
        Category::PstatModerate,
        Category::PstatWeak,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Cd8 => "CD8",
            Category::PstatNegative => "GAL8+pSTAT−",
            Category::PstatStrong => "GAL8+pSTAT+strong",
            Category::PstatModerate => "GAL8+pSTAT+moderate",
            Category::PstatWeak => "GAL8+pSTAT+weak",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Category> {
        Category::ALL.get(index).copied()
    }

    /// True for the three pSTAT-positive expression levels.
    pub fn is_pstat_positive(self) -> bool {
        matches!(
            self,
            Category::PstatStrong | Category::PstatModerate | Category::PstatWeak
        )
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let normalized = s.replace('-', "−");
        Category::ALL
            .into_iter()
            .find(|c| c.name() == normalized)
            .ok_or_else(|| Error::InvalidInput(format!("unknown cell category `{s}`")))
    }
}

/// A single cell-centre annotation. `x` is the pixel column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DotAnnotation {
    pub x: u32,
    pub y: u32,
    pub category: Category,
}

impl DotAnnotation {
    pub fn new(x: u32, y: u32, category: Category) -> Self {
        Self { x, y, category }
    }
}

/// Interleaved (row-major, channel-last) floating point image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch {
                expected: format!("{width}x{height}x{channels}"),
                found: format!("{} values", data.len()),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f32) {
        self.data[(y * self.width + x) * self.channels + c] = value;
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn flip_horizontal(&self) -> Image {
        let mut out = self.clone();
        let c = self.channels;
        for y in 0..self.height {
            for x in 0..self.width {
                let src = (y * self.width + (self.width - 1 - x)) * c;
                let dst = (y * self.width + x) * c;
                out.data[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
            }
        }
        out
    }

    pub fn flip_vertical(&self) -> Image {
        let mut out = self.clone();
        let row = self.width * self.channels;
        for y in 0..self.height {
            let src = (self.height - 1 - y) * row;
            out.data[y * row..(y + 1) * row].copy_from_slice(&self.data[src..src + row]);
        }
        out
    }

    /// Planar (channel-first) copy of the pixel data.
    pub fn to_planar(&self) -> Vec<f32> {
        let plane = self.width * self.height;
        let mut out = vec![0.0; plane * self.channels];
        for (i, px) in self.data.chunks_exact(self.channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                out[c * plane + i] = v;
            }
        }
        out
    }

    /// Snaps every value onto the 16-bit lattice used by the PNG codec, so a
    /// save/load round trip is lossless.
    pub fn quantize_16bit(&mut self) {
        for v in &mut self.data {
            *v = dequantize_u16(quantize_u16(*v));
        }
    }
}

#[inline]
pub(crate) fn quantize_u16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

#[inline]
pub(crate) fn dequantize_u16(q: u16) -> f32 {
    q as f32 / 65535.0
}

/// An RGB patch with its dot annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedPatch {
    pub id: String,
    pub image: Image,
    pub dots: Vec<DotAnnotation>,
}

impl AnnotatedPatch {
    pub fn new(id: impl Into<String>, image: Image, dots: Vec<DotAnnotation>) -> Result<Self> {
        let patch = Self {
            id: id.into(),
            image,
            dots,
        };
        patch.validate()?;
        Ok(patch)
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    /// Checks dot bounds and intensity range.
    pub fn validate(&self) -> Result<()> {
        for (index, dot) in self.dots.iter().enumerate() {
            if dot.x as usize >= self.width() || dot.y as usize >= self.height() {
                return Err(Error::DotOutOfBounds {
                    patch: Some(self.id.clone()),
                    index,
                    x: dot.x as i64,
                    y: dot.y as i64,
                    width: self.width(),
                    height: self.height(),
                });
            }
        }
        if let Some(v) = self
            .image
            .data()
            .iter()
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidInput(format!(
                "patch `{}` has intensity {v} outside [0, 1]",
                self.id
            )));
        }
        Ok(())
    }

    /// Dot positions as `(x, y)` floating point coordinates.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.dots.iter().map(|d| (d.x as f64, d.y as f64)).collect()
    }

    pub fn flip_horizontal(&self) -> AnnotatedPatch {
        let w = self.width() as u32;
        AnnotatedPatch {
            id: self.id.clone(),
            image: self.image.flip_horizontal(),
            dots: self
                .dots
                .iter()
                .map(|d| DotAnnotation::new(w - 1 - d.x, d.y, d.category))
                .collect(),
        }
    }

    pub fn flip_vertical(&self) -> AnnotatedPatch {
        let h = self.height() as u32;
        AnnotatedPatch {
            id: self.id.clone(),
            image: self.image.flip_vertical(),
            dots: self
                .dots
                .iter()
                .map(|d| DotAnnotation::new(d.x, h - 1 - d.y, d.category))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_names_round_trip() {
        for c in Category::ALL {
            assert_eq!(c.name().parse::<Category>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.name()));
        }
        assert_eq!(
            "GAL8+pSTAT-".parse::<Category>().unwrap(),
            Category::PstatNegative
        );
        assert!("CD4".parse::<Category>().is_err());
    }

    #[test]
    fn horizontal_flip_reflects_dot() {
        let img = Image::zeros(224, 224, 3);
        let p = AnnotatedPatch::new("a", img, vec![DotAnnotation::new(10, 5, Category::Cd8)]).unwrap();
        let f = p.flip_horizontal();
        assert_eq!(f.dots[0].x, 224 - 1 - 10);
        assert_eq!(f.dots[0].y, 5);
    }

    #[test]
    fn out_of_bounds_dot_is_rejected() {
        let img = Image::zeros(224, 224, 3);
        let err = AnnotatedPatch::new("p7", img, vec![DotAnnotation::new(300, 10, Category::Cd8)])
            .unwrap_err();
        assert!(err.to_string().contains("p7"), "{err}");
    }

    #[test]
    fn planar_layout() {
        let img = Image::from_vec(2, 1, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(img.to_planar(), vec![1., 4., 2., 5., 3., 6.]);
    }
}
