use super::{AnnotatedPatch, DotAnnotation, Image};

/// Crops a `size`×`size` window whose pixel `(size/2, size/2)` is `(x, y)`.
/// Out-of-image samples replicate the nearest edge pixel.
pub fn crop_centered(image: &Image, x: i64, y: i64, size: usize) -> Image {
    let half = (size / 2) as i64;
    let ch = image.channels();
    let mut out = Image::zeros(size, size, ch);
    let max_x = image.width() as i64 - 1;
    let max_y = image.height() as i64 - 1;
    for oy in 0..size {
        let sy = (y - half + oy as i64).clamp(0, max_y) as usize;
        for ox in 0..size {
            let sx = (x - half + ox as i64).clamp(0, max_x) as usize;
            for c in 0..ch {
                out.set(ox, oy, c, image.get(sx, sy, c));
            }
        }
    }
    out
}

/// One classifier patch per annotated cell, labelled by that cell's category.
pub fn cell_patches(patch: &AnnotatedPatch, size: usize) -> Vec<AnnotatedPatch> {
    let centre = (size / 2) as u32;
    patch
        .dots
        .iter()
        .enumerate()
        .map(|(i, d)| AnnotatedPatch {
            id: format!("{}_{i:04}", patch.id),
            image: crop_centered(&patch.image, d.x as i64, d.y as i64, size),
            dots: vec![DotAnnotation::new(centre, centre, d.category)],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Category;

    #[test]
    fn crop_centres_on_dot_and_replicates_edges() {
        let mut img = Image::zeros(40, 40, 1);
        img.set(5, 7, 0, 1.0);
        img.set(0, 0, 0, 0.5);
        let c = crop_centered(&img, 5, 7, 28);
        assert_eq!(c.get(14, 14, 0), 1.0);
        // (0,0) of the crop maps to (-9,-7), clamped to (0,0).
        assert_eq!(c.get(0, 0, 0), 0.5);
    }

    #[test]
    fn one_patch_per_dot() {
        let img = Image::zeros(64, 64, 3);
        let p = AnnotatedPatch::new(
            "p",
            img,
            vec![
                DotAnnotation::new(3, 3, Category::Cd8),
                DotAnnotation::new(60, 50, Category::PstatStrong),
            ],
        )
        .unwrap();
        let cells = cell_patches(&p, 28);
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[1].dots, vec![DotAnnotation::new(14, 14, Category::PstatStrong)]);
        assert_eq!(cells[1].image.width(), 28);
    }
}
