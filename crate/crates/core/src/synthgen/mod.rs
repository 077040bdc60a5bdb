//! Deterministic synthetic multiplex-stain patches with exact dot ground
//! truth, and the fixed benchmark suites built from them.

mod render;

use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{save_dataset, AnnotatedPatch, Category, DotAnnotation, DETECTION_PATCH_SIZE};
use crate::error::{Error, Result};
use crate::models::dataset_fingerprint;

pub use render::category_color;

/// Training-set cell counts per category, in [`Category::ALL`] order.
pub const TABLE1_TRAIN_COUNTS: [u32; 5] = [2971, 4118, 919, 1558, 4770];

/// Names of the benchmark suites, in generation order.
pub const SUITE_NAMES: [&str; 4] = ["easy", "touching", "weak-stain", "mixed"];

/// Patches per split: train, validation, test.
pub const SPLIT_SIZES: [(&str, usize); 3] = [("train", 120), ("val", 28), ("test", 27)];

const EDGE_MARGIN: usize = 3;
const ASPECT_RANGE: (f64, f64) = (0.7, 1.0);
const NORMAL_CONTRAST: (f64, f64) = (0.75, 1.0);
const WEAK_CONTRAST: (f64, f64) = (0.15, 0.35);
const PARTNER_DISTANCE: (f64, f64) = (0.75, 1.2);
const ATTEMPTS_PER_CELL: usize = 400;
const RESTARTS: usize = 20;

pub fn table1_mixture() -> [f64; 5] {
    let total: u32 = TABLE1_TRAIN_COUNTS.iter().sum();
    TABLE1_TRAIN_COUNTS.map(|c| c as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub patch_size: usize,
    /// Inclusive range of cells drawn per patch.
    pub cells_per_patch: (usize, usize),
    /// Inclusive range of the semi-major axis in pixels.
    pub cell_radius: (f64, f64),
    /// Target fraction of cells whose nearest neighbour sits closer than
    /// 1.5 mean diameters.
    pub overlap_fraction: f64,
    pub weak_stain_fraction: f64,
    /// Category probabilities in [`Category::ALL`] order.
    pub class_mixture: [f64; 5],
    /// Blotches per 10⁴ pixels; salt specks scale with it too.
    pub artefact_density: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            patch_size: DETECTION_PATCH_SIZE,
            cells_per_patch: (20, 40),
            cell_radius: (4.0, 6.0),
            overlap_fraction: 0.2,
            weak_stain_fraction: 0.1,
            class_mixture: table1_mixture(),
            artefact_density: 1.0,
            noise_sigma: 0.02,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patch_size < 2 * EDGE_MARGIN + 1 {
            return bad(format!("patch_size {} too small", self.patch_size));
        }
        if self.cells_per_patch.0 > self.cells_per_patch.1 {
            return bad("cells_per_patch range is reversed".into());
        }
        let (lo, hi) = self.cell_radius;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("cell_radius must be a positive range, got ({lo}, {hi})"));
        }
        for (name, v) in [
            ("overlap_fraction", self.overlap_fraction),
            ("weak_stain_fraction", self.weak_stain_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.class_mixture.iter().any(|p| !(*p >= 0.0)) {
            return bad("class_mixture entries must be non-negative".into());
        }
        let sum: f64 = self.class_mixture.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return bad(format!("class_mixture must sum to 1, got {sum}"));
        }
        if !(self.artefact_density >= 0.0) || !(self.noise_sigma >= 0.0) {
            return bad("artefact_density and noise_sigma must be non-negative".into());
        }
        Ok(())
    }

    pub fn mean_diameter(&self) -> f64 {
        self.cell_radius.0 + self.cell_radius.1
    }

    /// Same densities on a different patch size: cell counts scale with area.
    pub fn resized(&self, size: usize) -> SynthConfig {
        let scale = (size as f64 / self.patch_size as f64).powi(2);
        let lo = (self.cells_per_patch.0 as f64 * scale).round() as usize;
        let hi = ((self.cells_per_patch.1 as f64 * scale).round() as usize).max(lo);
        SynthConfig {
            patch_size: size,
            cells_per_patch: (lo, hi),
            ..self.clone()
        }
    }
}

/// Exact geometry and rendering parameters of one generated cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTruth {
    pub x: u32,
    pub y: u32,
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Rotation of the major axis in radians.
    pub angle: f64,
    pub category: Category,
    pub contrast: f64,
    pub weak: bool,
    pub color: [f32; 3],
}

impl CellTruth {
    /// Whether pixel `(px, py)` falls inside the ellipse.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let (dx, dy) = (px - self.x as f64, py - self.y as f64);
        let (cos, sin) = (self.angle.cos(), self.angle.sin());
        let u = (dx * cos + dy * sin) / self.semi_major;
        let v = (-dx * sin + dy * cos) / self.semi_minor;
        u * u + v * v <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPatch {
    pub patch: AnnotatedPatch,
    pub cells: Vec<CellTruth>,
}

pub fn generate(config: &SynthConfig, n_patches: usize) -> Result<Vec<AnnotatedPatch>> {
    Ok(generate_with_truth(config, n_patches, "synth")?
        .into_iter()
        .map(|s| s.patch)
        .collect())
}

/// Patches with ids `{prefix}_{i:04}`; patch `i` uses its own random stream,
/// so results do not depend on thread count.
pub fn generate_with_truth(config: &SynthConfig, n_patches: usize, prefix: &str) -> Result<Vec<SynthPatch>> {
    generate_streams(config, n_patches, prefix, 0)
}

fn generate_streams(config: &SynthConfig, n: usize, prefix: &str, stream_base: u64) -> Result<Vec<SynthPatch>> {
    config.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(stream_base + i as u64);
            generate_patch(config, format!("{prefix}_{i:04}"), &mut rng)
        })
        .collect()
}

fn generate_patch(config: &SynthConfig, id: String, rng: &mut ChaCha8Rng) -> Result<SynthPatch> {
    let size = config.patch_size;
    let (lo, hi) = config.cells_per_patch;
    let n = rng.random_range(lo..=hi);
    let centres = place_centres(config, n, rng)?;
    let mixture = WeightedIndex::new(config.class_mixture).map_err(|e| Error::Config(e.to_string()))?;
    let cells: Vec<CellTruth> = centres
        .into_iter()
        .map(|(x, y)| {
            let category = Category::ALL[mixture.sample(rng)];
            let semi_major = rng.random_range(config.cell_radius.0..=config.cell_radius.1);
            let aspect = rng.random_range(ASPECT_RANGE.0..=ASPECT_RANGE.1);
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            let weak = rng.random_bool(config.weak_stain_fraction);
            let range = if weak { WEAK_CONTRAST } else { NORMAL_CONTRAST };
            let contrast = rng.random_range(range.0..=range.1);
            let color = render::jittered_color(category, rng);
            CellTruth {
                x,
                y,
                semi_major,
                semi_minor: semi_major * aspect,
                angle,
                category,
                contrast,
                weak,
                color,
            }
        })
        .collect();
    let mut image = render::background(size, config.artefact_density, rng);
    render::paint_cells(&mut image, &cells);
    render::add_noise(&mut image, config.noise_sigma, rng);
    image.quantize_16bit();
    let dots = cells
        .iter()
        .map(|c| DotAnnotation::new(c.x, c.y, c.category))
        .collect();
    Ok(SynthPatch {
        patch: AnnotatedPatch::new(id, image, dots)?,
        cells,
    })
}

/// Integer cell centres. A share of the cells is placed in close pairs; all
/// others keep at least 1.5 mean diameters from every other cell.
fn place_centres(config: &SynthConfig, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(u32, u32)>> {
    let size = config.patch_size;
    let d = config.mean_diameter();
    let near = 1.5 * d;
    let expected_pairs = config.overlap_fraction * n as f64 / 2.0;
    let mut pairs = expected_pairs.floor() as usize;
    if rng.random_bool(expected_pairs - pairs as f64) {
        pairs += 1;
    }
    let pairs = pairs.min(n / 2);
    let (min_c, max_c) = (EDGE_MARGIN as f64, (size - 1 - EDGE_MARGIN) as f64);
    let in_bounds = |x: f64, y: f64| x >= min_c && x <= max_c && y >= min_c && y <= max_c;
    let clear = |pts: &[(u32, u32)], x: f64, y: f64, skip: Option<usize>| {
        pts.iter().enumerate().all(|(j, &(px, py))| {
            Some(j) == skip || ((px as f64 - x).powi(2) + (py as f64 - y).powi(2)).sqrt() >= near
        })
    };
    let mut attempts = 0;
    'restart: for _ in 0..RESTARTS {
        let mut pts: Vec<(u32, u32)> = Vec::with_capacity(n);
        for k in 0..n {
            let paired = k < 2 * pairs;
            let placed = (0..ATTEMPTS_PER_CELL).find_map(|_| {
                attempts += 1;
                let (x, y) = if paired && k % 2 == 1 {
                    let (ax, ay) = pts[k - 1];
                    let dist = rng.random_range(PARTNER_DISTANCE.0..=PARTNER_DISTANCE.1) * d;
                    let theta = rng.random_range(0.0..std::f64::consts::TAU);
                    ((ax as f64 + dist * theta.cos()).round(), (ay as f64 + dist * theta.sin()).round())
                } else {
                    (
                        rng.random_range(EDGE_MARGIN..size - EDGE_MARGIN) as f64,
                        rng.random_range(EDGE_MARGIN..size - EDGE_MARGIN) as f64,
                    )
                };
                let skip = (paired && k % 2 == 1).then(|| k - 1);
                let ok = in_bounds(x, y) && clear(&pts, x, y, skip);
                ok.then_some((x as u32, y as u32))
            });
            match placed {
                Some(p) => pts.push(p),
                None => continue 'restart,
            }
        }
        return Ok(pts);
    }
    Err(Error::InfeasiblePacking {
        requested: n,
        size,
        attempts,
    })
}

/// Fraction of cells whose nearest neighbour is closer than
/// `1.5 * mean_diameter`, pooled over patches; `None` without cells.
pub fn overlap_fraction(patches: &[AnnotatedPatch], mean_diameter: f64) -> Option<f64> {
    let near = 1.5 * mean_diameter;
    let (mut close, mut total) = (0usize, 0usize);
    for p in patches {
        let pts = p.points();
        total += pts.len();
        close += pts
            .iter()
            .enumerate()
            .filter(|(i, a)| {
                pts.iter()
                    .enumerate()
                    .any(|(j, b)| j != *i && ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt() < near)
            })
            .count();
    }
    (total > 0).then(|| close as f64 / total as f64)
}

/// Empirical category frequencies in [`Category::ALL`] order.
pub fn category_frequencies(patches: &[AnnotatedPatch]) -> [f64; 5] {
    let mut counts = [0usize; 5];
    for d in patches.iter().flat_map(|p| &p.dots) {
        counts[d.category.index()] += 1;
    }
    let total = counts.iter().sum::<usize>().max(1) as f64;
    counts.map(|c| c as f64 / total)
}

/// Generation settings of a named suite at the given patch size.
pub fn suite_config(name: &str, seed: u64, size: usize) -> Result<SynthConfig> {
    let index = SUITE_NAMES
        .iter()
        .position(|n| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown suite {name:?}; expected one of {SUITE_NAMES:?}")))?;
    let base = SynthConfig {
        seed: seed.wrapping_add(index as u64),
        ..SynthConfig::default()
    };
    let cfg = match name {
        "easy" => SynthConfig {
            overlap_fraction: 0.1,
            weak_stain_fraction: 0.0,
            artefact_density: 0.5,
            ..base
        },
        "touching" => SynthConfig {
            overlap_fraction: 0.5,
            weak_stain_fraction: 0.1,
            ..base
        },
        "weak-stain" => SynthConfig {
            overlap_fraction: 0.2,
            weak_stain_fraction: 0.6,
            ..base
        },
        _ => SynthConfig {
            overlap_fraction: 0.35,
            weak_stain_fraction: 0.3,
            artefact_density: 2.0,
            noise_sigma: 0.03,
            ..base
        },
    };
    Ok(cfg.resized(size))
}

#[derive(Debug, Clone)]
pub struct BenchmarkSuite {
    pub name: String,
    pub config: SynthConfig,
    pub train: Vec<AnnotatedPatch>,
    pub val: Vec<AnnotatedPatch>,
    pub test: Vec<AnnotatedPatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub patches: usize,
    pub cells: usize,
    pub fingerprint: String,
    pub ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub name: String,
    pub config: SynthConfig,
    pub overlap_fraction: Option<f64>,
    pub splits: BTreeMap<String, SplitManifest>,
}

impl BenchmarkSuite {
    pub fn splits(&self) -> [(&'static str, &[AnnotatedPatch]); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }

    pub fn manifest(&self) -> SuiteManifest {
        let all: Vec<AnnotatedPatch> = self.splits().iter().flat_map(|(_, s)| s.iter().cloned()).collect();
        SuiteManifest {
            name: self.name.clone(),
            config: self.config.clone(),
            overlap_fraction: overlap_fraction(&all, self.config.mean_diameter()),
            splits: self
                .splits()
                .iter()
                .map(|(name, s)| {
                    (
                        name.to_string(),
                        SplitManifest {
                            patches: s.len(),
                            cells: s.iter().map(|p| p.dots.len()).sum(),
                            fingerprint: dataset_fingerprint(s),
                            ids: s.iter().map(|p| p.id.clone()).collect(),
                        },
                    )
                })
                .collect(),
        }
    }

    /// Writes `<root>/<name>/{train,val,test}` datasets and `suite.json`.
    pub fn save(&self, root: &Path) -> Result<()> {
        let dir = root.join(&self.name);
        for (split, patches) in self.splits() {
            save_dataset(patches, dir.join(split))?;
        }
        crate::eval::write_json(&dir.join("suite.json"), &self.manifest())
    }
}

pub fn benchmark_suite(name: &str, seed: u64, size: usize) -> Result<BenchmarkSuite> {
    let config = suite_config(name, seed, size)?;
    let mut splits = Vec::with_capacity(3);
    for (k, (split, n)) in SPLIT_SIZES.iter().enumerate() {
        let prefix = format!("{name}_{split}");
        let patches = generate_streams(&config, *n, &prefix, (k as u64) << 32)?;
        splits.push(patches.into_iter().map(|s| s.patch).collect::<Vec<_>>());
    }
    let test = splits.pop().unwrap();
    let val = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(BenchmarkSuite {
        name: name.to_string(),
        config,
        train,
        val,
        test,
    })
}

/// All four suites at full patch size.
pub fn benchmark_suites(seed: u64) -> Result<Vec<BenchmarkSuite>> {
    benchmark_suites_sized(seed, DETECTION_PATCH_SIZE)
}

pub fn benchmark_suites_sized(seed: u64, size: usize) -> Result<Vec<BenchmarkSuite>> {
    SUITE_NAMES.iter().map(|n| benchmark_suite(n, seed, size)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_under_seed() {
        let cfg = SynthConfig { seed: 9, ..SynthConfig::default() }.resized(96);
        let a = generate(&cfg, 3).unwrap();
        let b = generate(&cfg, 3).unwrap();
        assert_eq!(a, b);
        let c = generate(&SynthConfig { seed: 10, ..cfg }, 3).unwrap();
        assert_ne!(a[0].image, c[0].image);
    }

    #[test]
    fn zero_cells_give_empty_patches() {
        let cfg = SynthConfig {
            cells_per_patch: (0, 0),
            patch_size: 64,
            ..SynthConfig::default()
        };
        for p in generate(&cfg, 4).unwrap() {
            assert!(p.dots.is_empty());
            assert_eq!(p.width(), 64);
        }
    }

    #[test]
    fn dots_lie_inside_their_ellipses() {
        let cfg = SynthConfig { seed: 4, ..SynthConfig::default() };
        for s in generate_with_truth(&cfg, 5, "t").unwrap() {
            assert_eq!(s.cells.len(), s.patch.dots.len());
            for (c, d) in s.cells.iter().zip(&s.patch.dots) {
                assert!(c.contains(d.x as f64, d.y as f64));
                assert_eq!(c.category, d.category);
            }
        }
    }

    #[test]
    fn table1_mixture_is_reproduced() {
        let mix = table1_mixture();
        for (m, expected) in mix.iter().zip([0.207, 0.287, 0.064, 0.109, 0.333]) {
            assert!((m - expected).abs() < 0.0005, "{m} vs {expected}");
        }
        let cfg = SynthConfig { seed: 1, ..SynthConfig::default() };
        let freq = category_frequencies(&generate(&cfg, 200).unwrap());
        for (f, m) in freq.iter().zip(mix) {
            assert!((f - m).abs() <= 0.03, "{f} vs {m}");
        }
    }

    #[test]
    fn achieved_overlap_tracks_target() {
        for target in [0.0, 0.3, 0.6] {
            let cfg = SynthConfig {
                overlap_fraction: target,
                seed: 3,
                ..SynthConfig::default()
            };
            let got = overlap_fraction(&generate(&cfg, 30).unwrap(), cfg.mean_diameter()).unwrap();
            assert!((got - target).abs() <= 0.1, "target {target} got {got}");
        }
    }

    #[test]
    fn infeasible_packing_is_an_error() {
        let cfg = SynthConfig {
            patch_size: 32,
            cells_per_patch: (50, 50),
            ..SynthConfig::default()
        };
        assert!(matches!(generate(&cfg, 1), Err(Error::InfeasiblePacking { requested: 50, .. })));
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig::default().validate().is_ok());
        let bad = [
            SynthConfig { overlap_fraction: 1.5, ..SynthConfig::default() },
            SynthConfig { class_mixture: [0.5; 5], ..SynthConfig::default() },
            SynthConfig { cell_radius: (0.0, 3.0), ..SynthConfig::default() },
            SynthConfig { cells_per_patch: (5, 2), ..SynthConfig::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn resized_scales_counts_with_area() {
        let cfg = SynthConfig::default().resized(112);
        assert_eq!(cfg.cells_per_patch, (5, 10));
        assert_eq!(cfg.patch_size, 112);
    }

    #[test]
    fn signatures_are_well_separated() {
        let mut min_inter = f32::INFINITY;
        for a in Category::ALL {
            for b in Category::ALL {
                if a != b {
                    let (ca, cb) = (category_color(a), category_color(b));
                    let d = ca.iter().zip(cb).map(|(x, y)| (x - y).powi(2)).sum::<f32>().sqrt();
                    min_inter = min_inter.min(d);
                }
            }
        }
        // Worst-case jitter displacement is the diagonal of the jitter cube.
        assert!(min_inter >= 3.0 * render_jitter_diagonal());
    }

    fn render_jitter_diagonal() -> f32 {
        0.04 * 3f32.sqrt()
    }
}
