use std::path::Path;

use image::{Rgb, RgbImage};

use crate::data::{Category, Image};
use crate::error::{Error, Result};
use crate::eval::RocCurve;

/// Dot colours per category: white, red, yellow, cyan, dark green.
pub fn category_rgb(category: Category) -> [u8; 3] {
    match category {
        Category::Cd8 => [255, 255, 255],
        Category::PstatNegative => [255, 0, 0],
        Category::PstatStrong => [255, 255, 0],
        Category::PstatModerate => [0, 255, 255],
        Category::PstatWeak => [0, 100, 0],
    }
}

/// Colour for detections without a category.
pub const UNCLASSIFIED_RGB: [u8; 3] = [255, 0, 255];

fn to_rgb8(image: &Image) -> RgbImage {
    let mut out = RgbImage::new(image.width() as u32, image.height() as u32);
    for (x, y, px) in out.enumerate_pixels_mut() {
        let p = image.pixel(x as usize, y as usize);
        let g = |c: usize| (p[c.min(p.len() - 1)].clamp(0.0, 1.0) * 255.0).round() as u8;
        *px = Rgb([g(0), g(1), g(2)]);
    }
    out
}

/// Filled disc of radius 2 with a one-pixel black rim at each point.
pub fn overlay(image: &Image, dots: &[(f64, f64, [u8; 3])]) -> RgbImage {
    let mut out = to_rgb8(image);
    let (w, h) = (out.width() as i64, out.height() as i64);
    for &(x, y, colour) in dots {
        let (cx, cy) = (x.round() as i64, y.round() as i64);
        for dy in -3i64..=3 {
            for dx in -3i64..=3 {
                let (px, py) = (cx + dx, cy + dy);
                let d2 = dx * dx + dy * dy;
                if px < 0 || py < 0 || px >= w || py >= h || d2 > 10 {
                    continue;
                }
                let c = if d2 <= 5 { colour } else { [0, 0, 0] };
                out.put_pixel(px as u32, py as u32, Rgb(c));
            }
        }
    }
    out
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save(path).map_err(|e| Error::image(path, e))
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), colour: [u8; 3], dashed: bool) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    let mut step = 0usize;
    loop {
        if !dashed || (step / 6) % 2 == 0 {
            for (ox, oy) in [(0, 0), (1, 0), (0, 1)] {
                let (px, py) = (x + ox, y + oy);
                if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height() {
                    img.put_pixel(px as u32, py as u32, Rgb(colour));
                }
            }
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
        step += 1;
    }
}

fn curve_colour(name: &str, index: usize) -> [u8; 3] {
    const CYCLE: [[u8; 3]; 6] = [[31, 119, 180], [214, 39, 40], [44, 160, 44], [148, 103, 189], [255, 127, 14], [23, 190, 207]];
    match name.parse::<Category>() {
        // White would vanish on the plot background.
        Ok(Category::Cd8) => [90, 90, 90],
        Ok(c) => category_rgb(c),
        Err(_) => CYCLE[index % CYCLE.len()],
    }
}

/// ROC curves on a square canvas: unit box, chance diagonal, one polyline
/// per curve.
pub fn plot_roc(curves: &[(String, RocCurve)], size: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(size, size, Rgb([255, 255, 255]));
    let margin = (size / 10) as i64;
    let span = size as i64 - 2 * margin;
    let to_px = |fpr: f64, tpr: f64| {
        (
            margin + (fpr.clamp(0.0, 1.0) * span as f64).round() as i64,
            margin + span - (tpr.clamp(0.0, 1.0) * span as f64).round() as i64,
        )
    };
    let corners = [to_px(0.0, 0.0), to_px(1.0, 0.0), to_px(1.0, 1.0), to_px(0.0, 1.0)];
    for i in 0..4 {
        line(&mut img, corners[i], corners[(i + 1) % 4], [0, 0, 0], false);
    }
    for t in 1..10 {
        let v = t as f64 / 10.0;
        let (x, y0) = to_px(v, 0.0);
        line(&mut img, (x, y0), (x, y0 + 6), [0, 0, 0], false);
        let (x0, y) = to_px(0.0, v);
        line(&mut img, (x0 - 6, y), (x0, y), [0, 0, 0], false);
    }
    line(&mut img, to_px(0.0, 0.0), to_px(1.0, 1.0), [160, 160, 160], true);
    for (i, (name, c)) in curves.iter().enumerate() {
        let colour = curve_colour(name, i);
        for k in 1..c.fpr.len() {
            line(&mut img, to_px(c.fpr[k - 1], c.tpr[k - 1]), to_px(c.fpr[k], c.tpr[k]), colour, false);
        }
    }
    img
}
