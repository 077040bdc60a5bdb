use std::collections::VecDeque;

use super::{Point, ProbabilityMap};

/// Default binarization threshold for probability maps.
pub const DEFAULT_THRESHOLD: f64 = 0.85;

/// Sets background pixels that cannot reach the border (through
/// 4-connected background) to foreground.
pub fn fill_holes(mask: &mut [bool], width: usize, height: usize) {
    let mut outside = vec![false; mask.len()];
    let mut queue = VecDeque::new();
    let seed = |x: usize, y: usize, outside: &mut Vec<bool>, queue: &mut VecDeque<usize>| {
        let i = y * width + x;
        if !mask[i] && !outside[i] {
            outside[i] = true;
            queue.push_back(i);
        }
    };
    for x in 0..width {
        seed(x, 0, &mut outside, &mut queue);
        seed(x, height - 1, &mut outside, &mut queue);
    }
    for y in 0..height {
        seed(0, y, &mut outside, &mut queue);
        seed(width - 1, y, &mut outside, &mut queue);
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % width, i / width);
        let neighbours = [
            (x > 0).then(|| i - 1),
            (x + 1 < width).then(|| i + 1),
            (y > 0).then(|| i - width),
            (y + 1 < height).then(|| i + width),
        ];
        for j in neighbours.into_iter().flatten() {
            if !mask[j] && !outside[j] {
                outside[j] = true;
                queue.push_back(j);
            }
        }
    }
    for (m, o) in mask.iter_mut().zip(outside) {
        if !o {
            *m = true;
        }
    }
}

/// 8-connected component labels (`0` = background, components numbered
/// from 1 in raster order of their first pixel). Returns the label image and
/// the number of components.
pub fn label_components(mask: &[bool], width: usize, height: usize) -> (Vec<u32>, usize) {
    let mut labels = vec![0u32; mask.len()];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % width) as isize, (i / width) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                        continue;
                    }
                    let j = ny as usize * width + nx as usize;
                    if mask[j] && labels[j] == 0 {
                        labels[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

/// Threshold (`>= threshold`), fill holes, label 8-connected components and
/// return each component's centroid (unweighted pixel mean, rounded to the
/// nearest pixel), in raster order of first pixel.
pub fn extract_centroids(map: &ProbabilityMap, threshold: f64) -> Vec<Point> {
    let (w, h) = (map.width(), map.height());
    if w == 0 || h == 0 {
        return Vec::new();
    }
    let mut mask: Vec<bool> = map.values().iter().map(|&v| v >= threshold as f32).collect();
    fill_holes(&mut mask, w, h);
    let (labels, n) = label_components(&mask, w, h);
    let mut sums = vec![(0.0f64, 0.0f64, 0usize); n];
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            let s = &mut sums[l as usize - 1];
            s.0 += (i % w) as f64;
            s.1 += (i / w) as f64;
            s.2 += 1;
        }
    }
    sums.into_iter()
        .map(|(sx, sy, c)| Point::new((sx / c as f64).round(), (sy / c as f64).round()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_with(w: usize, h: usize, f: impl Fn(usize, usize) -> f32) -> ProbabilityMap {
        let values = (0..w * h).map(|i| f(i % w, i / w)).collect();
        ProbabilityMap::new("m", w, h, values).unwrap()
    }

    #[test]
    fn empty_map_has_no_centroids() {
        let m = map_with(224, 224, |_, _| 0.0);
        assert!(extract_centroids(&m, 0.85).is_empty());
    }

    #[test]
    fn ring_is_filled_to_one_centroid() {
        // 0.9 ring of radius 6..8 around (30, 40) with a 0.1 interior
        let m = map_with(64, 64, |x, y| {
            let d = ((x as f64 - 30.0).powi(2) + (y as f64 - 40.0).powi(2)).sqrt();
            if (6.0..8.0).contains(&d) {
                0.9
            } else if d < 6.0 {
                0.1
            } else {
                0.0
            }
        });
        assert_eq!(extract_centroids(&m, 0.85), vec![Point::new(30.0, 40.0)]);
    }

    #[test]
    fn two_squares() {
        let m = map_with(100, 100, |x, y| {
            let near = |cx: usize, cy: usize| x.abs_diff(cx) <= 2 && y.abs_diff(cy) <= 2;
            if near(20, 20) || near(60, 60) {
                0.9
            } else {
                0.0
            }
        });
        assert_eq!(
            extract_centroids(&m, 0.85),
            vec![Point::new(20.0, 20.0), Point::new(60.0, 60.0)]
        );
    }

    #[test]
    fn threshold_is_inclusive_and_above_max_is_empty() {
        let m = map_with(10, 10, |x, y| if (x, y) == (4, 4) { 0.85 } else { 0.0 });
        assert_eq!(extract_centroids(&m, 0.85).len(), 1);
        assert!(extract_centroids(&m, 0.86).is_empty());
    }

    #[test]
    fn diagonal_pixels_join() {
        let m = map_with(8, 8, |x, y| if (x, y) == (2, 2) || (x, y) == (3, 3) { 1.0 } else { 0.0 });
        assert_eq!(extract_centroids(&m, 0.5).len(), 1);
    }

    #[test]
    fn background_touching_border_is_not_a_hole() {
        // U shape open to the top border
        let mut mask = vec![false; 25];
        for y in 1..5 {
            mask[y * 5 + 1] = true;
            mask[y * 5 + 3] = true;
        }
        mask[4 * 5 + 2] = true;
        let before = mask.clone();
        fill_holes(&mut mask, 5, 5);
        assert_eq!(mask, before);
    }
}
