use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{AnnotatedPatch, BinaryMask, DotAnnotation, Image, PseudoMask};

/// Probabilities and ranges for the training-time augmentations.
///
/// `augment_mask` uses the erosion, intensity and flip settings;
/// `augment_patch` uses flips and zoom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub erosion_width: usize,
    pub erosion_prob: f64,
    pub intensity_prob: f64,
    pub intensity_range: (f32, f32),
    pub zoom_range: (f64, f64),
    pub zoom_prob: f64,
    pub flips_enabled: bool,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            erosion_width: 2,
            erosion_prob: 0.4,
            intensity_prob: 0.4,
            intensity_range: (0.7, 1.0),
            zoom_range: (0.85, 1.15),
            zoom_prob: 0.4,
            flips_enabled: true,
        }
    }
}

impl AugmentationConfig {
    /// No-op configuration.
    pub fn identity() -> Self {
        Self {
            erosion_prob: 0.0,
            intensity_prob: 0.0,
            zoom_prob: 0.0,
            flips_enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("erosion_prob", self.erosion_prob),
            ("intensity_prob", self.intensity_prob),
            ("zoom_prob", self.zoom_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        let (lo, hi) = self.intensity_range;
        if !(lo <= hi && lo >= 0.0 && hi <= 1.0) {
            return Err(Error::Config(format!(
                "intensity_range must satisfy 0 <= lo <= hi <= 1, got [{lo}, {hi}]"
            )));
        }
        let (lo, hi) = self.zoom_range;
        if !(lo <= hi && lo > 0.0) {
            return Err(Error::Config(format!(
                "zoom_range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            )));
        }
        if self.erosion_width == 0 {
            return Err(Error::Config("erosion_width must be at least 1".into()));
        }
        Ok(())
    }
}

/// Binary erosion by a `width`×`width` square. Pixels outside the image do
/// not erode their neighbours.
pub fn erode(mask: &BinaryMask, width: usize) -> BinaryMask {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let lo = -(width as i64 / 2);
    let hi = lo + width as i64 - 1;
    let mut out = BinaryMask::zeros(mask.width(), mask.height());
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as usize, y as usize) {
                continue;
            }
            let mut keep = true;
            'se: for dy in lo..=hi {
                for dx in lo..=hi {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    if !mask.get(nx as usize, ny as usize) {
                        keep = false;
                        break 'se;
                    }
                }
            }
            out.set(x as usize, y as usize, keep);
        }
    }
    out
}

/// Turns a binary pseudo-mask into the kind of soft map the counter sees
/// when attached to the detector: random erosion, random intensity
/// attenuation and random flips. Returns a single-channel image.
pub fn augment_mask<R: Rng + ?Sized>(
    mask: &PseudoMask,
    cfg: &AugmentationConfig,
    rng: &mut R,
) -> Image {
    let erode_now = rng.random::<f64>() < cfg.erosion_prob;
    let attenuate = rng.random::<f64>() < cfg.intensity_prob;
    let (flip_h, flip_v) = draw_flips(cfg, rng);

    let base = if erode_now {
        erode(&mask.mask, cfg.erosion_width)
    } else {
        mask.mask.clone()
    };
    let (w, h) = (base.width(), base.height());
    let mut values = base.to_f32();
    if attenuate {
        let (lo, hi) = cfg.intensity_range;
        for v in &mut values {
            let factor = if lo < hi { rng.random_range(lo..=hi) } else { lo };
            *v *= factor;
        }
    }
    let mut img = Image::from_vec(w, h, 1, values).expect("mask dimensions");
    if flip_h {
        img = img.flip_horizontal();
    }
    if flip_v {
        img = img.flip_vertical();
    }
    img
}

/// Flip and zoom augmentation for RGB patches; dot coordinates follow the
/// image. Zoom only fires when `cfg.zoom_prob > 0`, which the detector
/// training loop never sets.
pub fn augment_patch<R: Rng + ?Sized>(
    patch: &AnnotatedPatch,
    cfg: &AugmentationConfig,
    rng: &mut R,
) -> AnnotatedPatch {
    let (flip_h, flip_v) = draw_flips(cfg, rng);
    let zoom = if cfg.zoom_prob > 0.0 && rng.random::<f64>() < cfg.zoom_prob {
        let (lo, hi) = cfg.zoom_range;
        Some(if lo < hi { rng.random_range(lo..=hi) } else { lo })
    } else {
        None
    };

    let mut out = patch.clone();
    if flip_h {
        out = out.flip_horizontal();
    }
    if flip_v {
        out = out.flip_vertical();
    }
    if let Some(scale) = zoom {
        out = zoom_patch(&out, scale);
    }
    out
}

fn draw_flips<R: Rng + ?Sized>(cfg: &AugmentationConfig, rng: &mut R) -> (bool, bool) {
    if cfg.flips_enabled {
        (rng.random_bool(0.5), rng.random_bool(0.5))
    } else {
        (false, false)
    }
}

/// Rescales about the patch centre with bilinear resampling and edge
/// replication; dots are scaled and rounded, and dropped if they leave the
/// patch.
pub(crate) fn zoom_patch(patch: &AnnotatedPatch, scale: f64) -> AnnotatedPatch {
    if scale == 1.0 {
        return patch.clone();
    }
    let img = &patch.image;
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut out = Image::zeros(w, h, ch);
    for y in 0..h {
        let sy = (cy + (y as f64 - cy) / scale).clamp(0.0, h as f64 - 1.0);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = (sy - y0 as f64) as f32;
        for x in 0..w {
            let sx = (cx + (x as f64 - cx) / scale).clamp(0.0, w as f64 - 1.0);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = (sx - x0 as f64) as f32;
            for c in 0..ch {
                let top = img.get(x0, y0, c) * (1.0 - fx) + img.get(x1, y0, c) * fx;
                let bottom = img.get(x0, y1, c) * (1.0 - fx) + img.get(x1, y1, c) * fx;
                out.set(x, y, c, (top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
            }
        }
    }
    let dots = patch
        .dots
        .iter()
        .filter_map(|d| {
            let x = (cx + (d.x as f64 - cx) * scale).round();
            let y = (cy + (d.y as f64 - cy) * scale).round();
            (x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64)
                .then(|| DotAnnotation::new(x as u32, y as u32, d.category))
        })
        .collect();
    AnnotatedPatch {
        id: patch.id.clone(),
        image: out,
        dots,
    }
}
