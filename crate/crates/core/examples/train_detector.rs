//! Trains the detector with and without the count term on the `touching`
//! suite and compares test precision/recall/F1 at each model's best
//! threshold.
//!
//! cargo run --release --example train_detector -- [size] [epochs] [seed]

use std::time::Instant;

use concorde::data::{build_pseudo_mask, PseudoMask, DEFAULT_MASK_RADIUS};
use concorde::eval::{default_thresholds, sweep_threshold, Point, DEFAULT_MATCH_RADIUS};
use concorde::models::{pretrain_counter, probability_maps, train_detector, Detector, TrainConfig};
use concorde::synthgen::{benchmark_suite, generate, SynthConfig};

fn arg(i: usize, default: u64) -> u64 {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> concorde::Result<()> {
    let size = arg(1, 112) as usize;
    let epochs = arg(2, 20) as usize;
    let seed = arg(3, 11);
    let suite = benchmark_suite("touching", seed, size)?;

    let mask_cfg = SynthConfig { seed: seed + 500, cells_per_patch: (0, suite.config.cells_per_patch.1 * 2), ..suite.config.clone() };
    let to_masks = |cfg: &SynthConfig, n| -> concorde::Result<Vec<PseudoMask>> {
        generate(cfg, n)?
            .iter()
            .map(|p| build_pseudo_mask(&p.dots, size, size, DEFAULT_MASK_RADIUS))
            .collect()
    };
    let counter_cfg = TrainConfig { max_epochs: 30, patience: 5, seed, ..TrainConfig::default() };
    let t = Instant::now();
    let counter = pretrain_counter(
        &to_masks(&mask_cfg, 512)?,
        &to_masks(&SynthConfig { seed: seed + 501, ..mask_cfg.clone() }, 128)?,
        &counter_cfg,
    )?;
    println!("counter: val pearson {:.4} ({:.0}s)", counter.archive.manifest.metrics["val_pearson"], t.elapsed().as_secs_f64());

    let gt: Vec<Vec<Point>> = suite.test.iter().map(|p| p.points().into_iter().map(Point::from).collect()).collect();
    for k in [0.3, 0.0] {
        let mut cfg = TrainConfig { max_epochs: epochs, patience: epochs, seed, batch_size: arg(4, 4) as usize, ..TrainConfig::default() };
        cfg.loss.k = k;
        let t = Instant::now();
        let run = train_detector(&suite.train, &suite.val, &counter.archive, &cfg)?;
        print!("{}", run.outcome.log.to_csv());
        let detector = Detector::new(run.outcome.network.clone(), counter.network.clone())?;
        let maps = probability_maps(&detector, &suite.test)?;
        let table = sweep_threshold(&maps, &gt, &default_thresholds(), DEFAULT_MATCH_RADIUS)?;
        let best = table.best();
        println!(
            "K={k}: T={:.2} precision {:.3} recall {:.3} F1 {:.3} ({:.0}s)",
            best.threshold, best.precision, best.recall, best.f1, t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
