//! Generates the four benchmark suites and prints their statistics; with an
//! output directory the suites are also written in the dataset layout.
//!
//! cargo run --release --example synth_suites -- [seed] [size] [out_dir]

use concorde::synthgen::{benchmark_suites_sized, category_frequencies, overlap_fraction};

fn main() -> concorde::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let size = args.next().and_then(|s| s.parse().ok()).unwrap_or(224);
    let out = args.next();

    println!("suite,split,patches,cells,overlap,CD8,pSTAT-,strong,moderate,weak");
    for suite in benchmark_suites_sized(seed, size)? {
        for (split, patches) in suite.splits() {
            let cells: usize = patches.iter().map(|p| p.dots.len()).sum();
            let overlap = overlap_fraction(patches, suite.config.mean_diameter()).unwrap_or(0.0);
            let f = category_frequencies(patches);
            println!(
                "{},{split},{},{cells},{overlap:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
                suite.name,
                patches.len(),
                f[0], f[1], f[2], f[3], f[4]
            );
        }
        if let Some(out) = &out {
            suite.save(std::path::Path::new(out))?;
        }
    }
    Ok(())
}
