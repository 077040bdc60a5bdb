use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Category, Image};

use super::CellTruth;

const BACKGROUND: [f32; 3] = [0.92, 0.90, 0.88];
const JITTER: f32 = 0.04;

/// Base RGB signature per category. The three pSTAT-positive levels share
/// red and blue and differ only in green.
pub fn category_color(category: Category) -> [f32; 3] {
    match category {
        Category::Cd8 => [0.50, 0.28, 0.10],
        Category::PstatNegative => [0.20, 0.35, 0.75],
        Category::PstatStrong => [0.80, 0.15, 0.20],
        Category::PstatModerate => [0.80, 0.40, 0.20],
        Category::PstatWeak => [0.80, 0.65, 0.20],
    }
}

pub(super) fn jittered_color<R: Rng + ?Sized>(category: Category, rng: &mut R) -> [f32; 3] {
    let mut c = category_color(category);
    for v in &mut c {
        *v = (*v + rng.random_range(-JITTER..=JITTER)).clamp(0.0, 1.0);
    }
    c
}

/// Near-white background with low-frequency blotches and salt specks.
pub(super) fn background<R: Rng + ?Sized>(size: usize, artefact_density: f64, rng: &mut R) -> Image {
    let mut img = Image::zeros(size, size, 3);
    for (i, v) in img.data_mut().iter_mut().enumerate() {
        *v = BACKGROUND[i % 3];
    }
    let area = (size * size) as f64;
    let blotches = (artefact_density * area / 10_000.0).round() as usize;
    for _ in 0..blotches {
        let cx = rng.random_range(0.0..size as f64);
        let cy = rng.random_range(0.0..size as f64);
        let sigma = rng.random_range(12.0..40.0) * size as f64 / 224.0;
        let amp = rng.random_range(0.02..0.08) as f32;
        let tint = [
            rng.random_range(0.6..1.0f32),
            rng.random_range(0.6..1.0f32),
            rng.random_range(0.6..1.0f32),
        ];
        let reach = (3.0 * sigma).ceil() as i64;
        let (x0, x1) = ((cx as i64 - reach).max(0), (cx as i64 + reach).min(size as i64 - 1));
        let (y0, y1) = ((cy as i64 - reach).max(0), (cy as i64 + reach).min(size as i64 - 1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                let w = amp * (-d2 / (2.0 * sigma * sigma)).exp() as f32;
                for (c, t) in tint.iter().enumerate() {
                    let v = img.get(x as usize, y as usize, c);
                    img.set(x as usize, y as usize, c, v - w * t);
                }
            }
        }
    }
    let specks = (artefact_density * area * 0.002).round() as usize;
    for _ in 0..specks {
        let x = rng.random_range(0..size);
        let y = rng.random_range(0..size);
        let level = rng.random_range(0.3..1.0f32);
        for c in 0..3 {
            img.set(x, y, c, level);
        }
    }
    img
}

/// Paints cells with a centre-peaked opacity; where cells overlap the more
/// opaque one wins.
pub(super) fn paint_cells(img: &mut Image, cells: &[CellTruth]) {
    let (w, h) = (img.width(), img.height());
    let mut alpha_max = vec![0.0f32; w * h];
    let mut colour = vec![[0.0f32; 3]; w * h];
    for cell in cells {
        let (cos, sin) = (cell.angle.cos(), cell.angle.sin());
        let reach = cell.semi_major.ceil() as i64 + 1;
        let (cx, cy) = (cell.x as i64, cell.y as i64);
        for y in (cy - reach).max(0)..=(cy + reach).min(h as i64 - 1) {
            for x in (cx - reach).max(0)..=(cx + reach).min(w as i64 - 1) {
                let (dx, dy) = ((x - cx) as f64, (y - cy) as f64);
                let u = (dx * cos + dy * sin) / cell.semi_major;
                let v = (-dx * sin + dy * cos) / cell.semi_minor;
                let rho = (u * u + v * v).sqrt();
                let edge = ((1.0 - rho) * cell.semi_minor + 0.5).clamp(0.0, 1.0);
                if edge <= 0.0 {
                    continue;
                }
                let a = (cell.contrast * (1.0 - 0.3 * rho * rho).max(0.0) * edge) as f32;
                let i = y as usize * w + x as usize;
                if a > alpha_max[i] {
                    alpha_max[i] = a;
                    colour[i] = cell.color;
                }
            }
        }
    }
    for i in 0..w * h {
        let a = alpha_max[i];
        if a > 0.0 {
            let px = &mut img.data_mut()[3 * i..3 * i + 3];
            for c in 0..3 {
                px[c] = px[c] * (1.0 - a) + colour[i][c] * a;
            }
        }
    }
}

pub(super) fn add_noise<R: Rng + ?Sized>(img: &mut Image, sigma: f64, rng: &mut R) {
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        for v in img.data_mut() {
            *v += normal.sample(rng) as f32;
        }
    }
    for v in img.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}
