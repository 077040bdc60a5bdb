//! Scores hand-made probability maps against dot annotations: centroid
//! extraction, greedy and optimal matching, and a threshold sweep.
//!
//! cargo run --release --example evaluate_detections

use concorde::eval::{
    default_thresholds, extract_centroids, match_detections_with, sweep_threshold, MatchStrategy, Point,
    ProbabilityMap, DEFAULT_MATCH_RADIUS,
};
use concorde::synthgen::{generate, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gaussian blobs at jittered cell positions, with some cells dropped and a
/// few spurious blobs added.
fn fake_map(id: &str, size: usize, cells: &[Point], rng: &mut ChaCha8Rng) -> ProbabilityMap {
    let mut blobs = Vec::new();
    for c in cells {
        if rng.random_bool(0.9) {
            blobs.push((c.x + rng.random_range(-2.0..2.0), c.y + rng.random_range(-2.0..2.0), rng.random_range(0.6..1.0)));
        }
    }
    for _ in 0..3 {
        blobs.push((rng.random_range(0.0..size as f64), rng.random_range(0.0..size as f64), rng.random_range(0.5..0.95)));
    }
    let mut values = vec![0.0f32; size * size];
    for (i, v) in values.iter_mut().enumerate() {
        let (x, y) = ((i % size) as f64, (i / size) as f64);
        let p = blobs
            .iter()
            .map(|&(bx, by, peak)| peak * (-((x - bx).powi(2) + (y - by).powi(2)) / 8.0).exp())
            .fold(0.0, f64::max);
        *v = p as f32;
    }
    ProbabilityMap::new(id, size, size, values).expect("map size")
}

fn main() -> concorde::Result<()> {
    let cfg = SynthConfig { overlap_fraction: 0.4, seed: 8, ..SynthConfig::default() };
    let patches = generate(&cfg, 6)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let gt: Vec<Vec<Point>> = patches.iter().map(|p| p.points().into_iter().map(Point::from).collect()).collect();
    let maps: Vec<ProbabilityMap> = patches.iter().zip(&gt).map(|(p, g)| fake_map(&p.id, 224, g, &mut rng)).collect();

    let pred = extract_centroids(&maps[0], 0.5);
    for strategy in [MatchStrategy::Greedy, MatchStrategy::Optimal] {
        let r = match_detections_with(&gt[0], &pred, DEFAULT_MATCH_RADIUS, strategy)?;
        println!(
            "{strategy:?}: tp {} fp {} fn {} precision {:.3} recall {:.3} F1 {:.3}",
            r.tp, r.fp, r.fn_, r.precision, r.recall, r.f1
        );
    }

    let table = sweep_threshold(&maps, &gt, &default_thresholds(), DEFAULT_MATCH_RADIUS)?;
    println!("threshold,tp,fp,fn,precision,recall,f1");
    for r in &table.rows {
        println!("{:.2},{},{},{},{:.3},{:.3},{:.3}", r.threshold, r.tp, r.fp, r.fn_, r.precision, r.recall, r.f1);
    }
    println!("best F1 {:.3} at T={:.2}", table.best_f1, table.best_threshold);
    Ok(())
}
