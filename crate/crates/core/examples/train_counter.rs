//! Pretrains the cell counter on synthetic pseudo-masks and reports the
//! validation Pearson correlation.
//!
//! cargo run --release --example train_counter -- [size] [masks] [epochs] [seed]

use std::time::Instant;

use concorde::data::{build_pseudo_mask, PseudoMask, DEFAULT_MASK_RADIUS};
use concorde::models::{pretrain_counter, TrainConfig};
use concorde::synthgen::{generate, SynthConfig};

fn arg(i: usize, default: u64) -> u64 {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn masks(cfg: &SynthConfig, n: usize) -> concorde::Result<Vec<PseudoMask>> {
    generate(cfg, n)?
        .iter()
        .map(|p| build_pseudo_mask(&p.dots, p.height(), p.width(), DEFAULT_MASK_RADIUS))
        .collect()
}

fn main() -> concorde::Result<()> {
    let size = arg(1, 112) as usize;
    let n = arg(2, 512) as usize;
    let epochs = arg(3, 30) as usize;
    let seed = arg(4, 7);

    let scale = (size as f64 / 112.0).powi(2);
    let synth = SynthConfig {
        patch_size: size,
        cells_per_patch: (2, (30.0 * scale) as usize),
        overlap_fraction: 0.3,
        artefact_density: 0.0,
        noise_sigma: 0.0,
        seed,
        ..SynthConfig::default()
    };
    let train = masks(&synth, n)?;
    let val = masks(&SynthConfig { seed: seed + 1000, ..synth }, n / 4)?;

    let cfg = TrainConfig {
        max_epochs: epochs,
        patience: epochs,
        seed,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let out = pretrain_counter(&train, &val, &cfg)?;
    print!("{}", out.log.to_csv());
    println!(
        "best epoch {} val pearson {:.4} ({:.1}s)",
        out.best_epoch,
        out.archive.manifest.metrics["val_pearson"],
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
