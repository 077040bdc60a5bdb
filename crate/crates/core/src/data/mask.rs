use crate::error::{Error, Result};

use super::DotAnnotation;

/// Row-major binary image with values in {0, 1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch {
                expected: format!("{width}x{height}"),
                found: format!("{} values", data.len()),
            });
        }
        if let Some((index, &v)) = data.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(Error::NotBinary {
                index,
                value: v as f64,
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[y * self.width + x] = on as u8;
    }

    pub fn foreground(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }
}

/// Pseudo-segmentation target: disc mask plus the number of dots it was
/// built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoMask {
    pub mask: BinaryMask,
    /// Number of dots. Merged discs of nearby dots still count separately.
    pub count: usize,
}

/// Marks every pixel whose Euclidean distance to some dot is strictly less
/// than `r`.
pub fn build_pseudo_mask(
    dots: &[DotAnnotation],
    height: usize,
    width: usize,
    r: f64,
) -> Result<PseudoMask> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidInput(format!("mask radius must be positive, got {r}")));
    }
    let mut mask = BinaryMask::zeros(width, height);
    let reach = r.ceil() as i64;
    let r2 = r * r;
    for (index, dot) in dots.iter().enumerate() {
        let (cx, cy) = (dot.x as i64, dot.y as i64);
        if dot.x as usize >= width || dot.y as usize >= height {
            return Err(Error::DotOutOfBounds {
                patch: None,
                index,
                x: cx,
                y: cy,
                width,
                height,
            });
        }
        let y0 = (cy - reach).max(0);
        let y1 = (cy + reach).min(height as i64 - 1);
        let x0 = (cx - reach).max(0);
        let x1 = (cx + reach).min(width as i64 - 1);
        for y in y0..=y1 {
            let dy = (y - cy) as f64;
            for x in x0..=x1 {
                let dx = (x - cx) as f64;
                if dx * dx + dy * dy < r2 {
                    mask.data[y as usize * width + x as usize] = 1;
                }
            }
        }
    }
    Ok(PseudoMask {
        mask,
        count: dots.len(),
    })
}
