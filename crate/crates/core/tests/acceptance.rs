//! Acceptance suite. Runs every criterion and prints one PASS/FAIL line each.
//!
//! cargo test --release --test acceptance            all criteria
//! cargo test --release --test acceptance -- 1 6 8   a subset

use std::path::Path;
use std::time::Instant;

use concorde::cli::pipeline::{cells_of, evaluate_cascade, run_ablation, synthetic_masks};
use concorde::cli::{run, EvalConfig};
use concorde::data::{build_pseudo_mask, Category, DotAnnotation, DEFAULT_MASK_RADIUS};
use concorde::eval::{match_detections, Point};
use concorde::losses::{count_loss_with_grad, detection_loss_with_grad, dice_loss_with_grad, DiceReduction, LossConfig};
use concorde::models::{
    classifier_spec, counter_spec, detector_spec, pretrain_counter, train_classifier, ClassifierStage, Network,
    Shape, TrainConfig,
};
use concorde::nn::Tensor;
use concorde::synthgen::{benchmark_suite, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

// Independent oracles, written from the formulas directly.

fn oracle_count(pred: &[f64], truth: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..pred.len() {
        total += (pred[i] - truth[i]).abs();
    }
    1.0 - 1.0 / (1.0 + total / pred.len() as f64)
}

fn oracle_dice(pred: &[f64], target: &[f64]) -> f64 {
    let (mut pg, mut p, mut g) = (0.0, 0.0, 0.0);
    for i in 0..pred.len() {
        pg += pred[i] * target[i];
        p += pred[i];
        g += target[i];
    }
    1.0 - 2.0 * pg / (1.0 + p + g)
}

fn fd(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let h = 1e-6 * x[i].abs().max(1.0);
    let (mut up, mut down) = (x.to_vec(), x.to_vec());
    up[i] += h;
    down[i] -= h;
    (f(&up) - f(&down)) / (2.0 * h)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_value, mut worst_grad) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let batch = rng.random_range(1..=4);
        let side = rng.random_range(1..=6);
        let n = batch * side * side;
        let pred: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let target: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 }).collect();
        let truth: Vec<f64> = (0..batch).map(|_| rng.random_range(0..40) as f64).collect();
        let counts: Vec<f64> = truth
            .iter()
            .map(|t| {
                let off: f64 = rng.random_range(0.01..15.0);
                if rng.random_bool(0.5) { t + off } else { t - off }
            })
            .collect();
        let k = rng.random_range(0.0..1.0);
        let cfg = LossConfig { k, ..LossConfig::default() };

        let (count, count_grad) = count_loss_with_grad(&counts, &truth).map_err(|e| e.to_string())?;
        let (dice, dice_grad) = dice_loss_with_grad(&pred, &target, batch, DiceReduction::Pooled).map_err(|e| e.to_string())?;
        let det = detection_loss_with_grad(&pred, &target, &counts, &truth, &cfg).map_err(|e| e.to_string())?;
        let expected_total = oracle_dice(&pred, &target) + k * oracle_count(&counts, &truth);
        for (got, want) in [
            (count, oracle_count(&counts, &truth)),
            (dice, oracle_dice(&pred, &target)),
            (det.loss.total, expected_total),
        ] {
            worst_value = worst_value.max(rel(got, want, 1e-300));
        }

        let f_count = |c: &[f64]| oracle_count(c, &truth);
        let f_dice = |p: &[f64]| oracle_dice(p, &target);
        for i in 0..counts.len() {
            worst_grad = worst_grad.max(rel(count_grad[i], fd(&f_count, &counts, i), 1e-8));
            worst_grad = worst_grad.max(rel(det.counts[i], k * fd(&f_count, &counts, i), 1e-8));
        }
        for i in 0..pred.len() {
            worst_grad = worst_grad.max(rel(dice_grad[i], fd(&f_dice, &pred, i), 1e-8));
        }
    }
    check(
        worst_value <= 1e-10 && worst_grad <= 1e-4,
        format!("1000 instances, max value rel err {worst_value:.2e}, max gradient rel err {worst_grad:.2e}"),
    )
}

fn criterion_2() -> Outcome {
    let mut prev = -1.0;
    let mut first = None;
    let mut max = 0.0f64;
    for i in 0..=5000 {
        let e = i as f64 * 0.01;
        let (l, _) = count_loss_with_grad(&[30.0 + e], &[30.0]).map_err(|e| e.to_string())?;
        first.get_or_insert(l);
        if !(l > prev) {
            return Err(format!("not increasing at |Cp-Ct| = {e}: {l} <= {prev}"));
        }
        if !(l < 1.0) {
            return Err(format!("reached 1 at |Cp-Ct| = {e}"));
        }
        prev = l;
        max = max.max(l);
    }
    check(first == Some(0.0), format!("5001 points on [0, 50]: starts at {:?}, max {max:.6}", first.unwrap()))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for case in 0..100 {
        let (w, h) = (rng.random_range(1..=64), rng.random_range(1..=64));
        let r: f64 = if case % 2 == 0 { DEFAULT_MASK_RADIUS } else { rng.random_range(0.5..10.0) };
        let dots: Vec<DotAnnotation> = (0..rng.random_range(0..30))
            .map(|_| DotAnnotation::new(rng.random_range(0..w as u32), rng.random_range(0..h as u32), Category::Cd8))
            .collect();
        let pm = build_pseudo_mask(&dots, h, w, r).map_err(|e| e.to_string())?;
        for y in 0..h {
            for x in 0..w {
                let inside = dots.iter().any(|d| {
                    let (dx, dy) = (x as f64 - d.x as f64, y as f64 - d.y as f64);
                    (dx * dx + dy * dy).sqrt() < r
                });
                if pm.mask.get(x, y) != inside {
                    return Err(format!("case {case}: pixel ({x}, {y}) differs"));
                }
            }
        }
        if pm.count != dots.len() {
            return Err(format!("case {case}: count {} for {} dots", pm.count, dots.len()));
        }
    }
    let single = build_pseudo_mask(&[DotAnnotation::new(32, 32, Category::Cd8)], 64, 64, 4.0).map_err(|e| e.to_string())?;
    check(single.mask.foreground() == 45, format!("100 instances equal; single r=4 disc has {} px", single.mask.foreground()))
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let synth = SynthConfig {
        cells_per_patch: (2, 60),
        overlap_fraction: 0.3,
        artefact_density: 0.0,
        noise_sigma: 0.0,
        seed: 4,
        ..SynthConfig::default()
    };
    let train = synthetic_masks(&synth, 512, DEFAULT_MASK_RADIUS).map_err(|e| e.to_string())?;
    let val = synthetic_masks(&SynthConfig { seed: 1004, ..synth }, 128, DEFAULT_MASK_RADIUS).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { max_epochs: 12, patience: 12, seed: 4, ..TrainConfig::default() };
    let out = pretrain_counter(&train, &val, &cfg).map_err(|e| e.to_string())?;
    let r = out.archive.manifest.metrics["val_pearson"];
    check(
        r >= 0.95,
        format!(
            "224px, 512 masks, {} epochs: val pearson {r:.4} (best epoch {}, {:.0}s)",
            out.log.rows.len() - 1,
            out.best_epoch,
            t.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let (size, seed) = (112, 11);
    let suite = benchmark_suite("touching", seed, size).map_err(|e| e.to_string())?;
    let mask_cfg = SynthConfig {
        seed: seed + 500,
        cells_per_patch: (0, suite.config.cells_per_patch.1 * 2),
        ..suite.config.clone()
    };
    let counter_cfg = TrainConfig { max_epochs: 30, patience: 5, seed, ..TrainConfig::default() };
    let counter = pretrain_counter(
        &synthetic_masks(&mask_cfg, 512, DEFAULT_MASK_RADIUS).map_err(|e| e.to_string())?,
        &synthetic_masks(&SynthConfig { seed: seed + 501, ..mask_cfg }, 128, DEFAULT_MASK_RADIUS).map_err(|e| e.to_string())?,
        &counter_cfg,
    )
    .map_err(|e| e.to_string())?;
    let cfg = TrainConfig { max_epochs: 25, patience: 25, batch_size: 2, seed, ..TrainConfig::default() };
    let (report, _) = run_ablation(&suite.train, &suite.val, &suite.test, &counter.archive, &cfg, &[0.3, 0.0], &EvalConfig::default())
        .map_err(|e| e.to_string())?;
    let (with, without) = (report.row(0.3).unwrap(), report.row(0.0).unwrap());
    let line = |r: &concorde::cli::pipeline::AblationRow| {
        format!("K={} T={:.2} P {:.3} R {:.3} F1 {:.3}", r.k, r.threshold, r.precision, r.recall, r.f1)
    };
    check(
        with.recall >= without.recall && with.f1 >= without.f1,
        format!("touching {size}px: {} | {} ({:.0}s)", line(with), line(without), t.elapsed().as_secs_f64()),
    )
}

/// Maximum number of disjoint pairs within `radius`, by dynamic programming
/// over subsets of predictions.
fn oracle_max_matching(gt: &[Point], pred: &[Point], radius: f64) -> usize {
    let full = 1usize << pred.len();
    let mut best = vec![0usize; full];
    for g in gt {
        let mut next = best.clone();
        for used in 0..full {
            for (j, p) in pred.iter().enumerate() {
                if used & (1 << j) == 0 && g.distance(p) <= radius {
                    let with = used | (1 << j);
                    next[with] = next[with].max(best[used] + 1);
                }
            }
        }
        best = next;
    }
    best.into_iter().max().unwrap_or(0)
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut contested = 0;
    for case in 0..1000 {
        let extent = rng.random_range(10.0..60.0f64);
        let (ng, np) = (rng.random_range(0..=12), rng.random_range(0..=12));
        let mut points = |n: usize| -> Vec<Point> {
            (0..n)
                .map(|_| {
                    let (x, y) = (rng.random_range(0.0..extent), rng.random_range(0.0..extent));
                    if case % 3 == 0 { Point::new(x.round(), y.round()) } else { Point::new(x, y) }
                })
                .collect()
        };
        let gt = points(ng);
        let pred = points(np);
        let report = match_detections(&gt, &pred, 8.0).map_err(|e| e.to_string())?;
        let optimal = oracle_max_matching(&gt, &pred, 8.0);
        if report.tp != optimal {
            return Err(format!("case {case}: greedy tp {} vs optimal {optimal}", report.tp));
        }
        if report.fp != np - optimal || report.fn_ != ng - optimal {
            return Err(format!("case {case}: fp/fn inconsistent"));
        }
        let candidates = gt.iter().flat_map(|g| pred.iter().map(move |p| g.distance(p))).filter(|d| *d <= 8.0).count();
        if candidates > optimal {
            contested += 1;
        }
    }
    let edge = match_detections(&[Point::new(0.0, 0.0)], &[Point::new(8.0, 0.0)], 8.0).map_err(|e| e.to_string())?;
    let diag = match_detections(&[Point::new(10.0, 10.0)], &[Point::new(10.0 + 4.8, 10.0 + 6.4)], 8.0).map_err(|e| e.to_string())?;
    check(
        edge.tp == 1 && diag.tp == 1,
        format!("1000 instances agree ({contested} with competing pairs); distance 8 counts as TP"),
    )
}

fn criterion_7() -> Outcome {
    let t = Instant::now();
    let seed = 5;
    let suite = benchmark_suite("easy", seed, 224).map_err(|e| e.to_string())?;
    let (train, val, test) = (cells_of(&suite.train), cells_of(&suite.val), cells_of(&suite.test));
    let cfg = TrainConfig { max_epochs: 15, seed, ..TrainConfig::classifier() };
    let s1 = train_classifier(ClassifierStage::One, &train, &val, &cfg).map_err(|e| e.to_string())?;
    let s2 = train_classifier(ClassifierStage::Two, &train, &val, &cfg).map_err(|e| e.to_string())?;
    let ev = evaluate_cascade(&s1.archive, &s2.archive, &test).map_err(|e| e.to_string())?;
    let stage2 = ev.stage2.as_ref().ok_or("no pSTAT+ test cells")?;
    let aucs: Vec<f64> = ev.stage1.auc.iter().chain(&stage2.auc).map(|a| a.unwrap_or(0.0)).collect();
    let min_auc = aucs.iter().cloned().fold(1.0, f64::min);
    let (a1, a2, ac) = (ev.stage1.confusion.accuracy, stage2.confusion.accuracy, ev.cascade.accuracy);
    check(
        a1 >= 0.98 && a2 >= 0.90 && ac >= 0.93 && min_auc >= 0.97,
        format!(
            "{} test cells: stage-1 {a1:.4}, stage-2 {a2:.4}, cascade {ac:.4}, min AUC {min_auc:.4} ({:.0}s)",
            ev.cells,
            t.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_8() -> Outcome {
    let err = |e: concorde::Error| e.to_string();
    let counter = counter_spec(224).map_err(err)?;
    let flat = counter.shapes().map_err(err)?[counter.layer_index("flatten").ok_or("no flatten layer")?].len();
    let det = detector_spec();
    let shapes = det.shapes().map_err(err)?;
    let bottleneck = shapes[det.layer_index("bottleneck/concat").ok_or("no bottleneck")?];
    let pre_output = shapes[det.layer_index("dec2/concat").ok_or("no decoder output")?];
    let cls = Network::glorot(classifier_spec(), &mut ChaCha8Rng::seed_from_u64(8)).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let input = Tensor::from_vec([5, 3, 28, 28], (0..5 * 3 * 28 * 28).map(|_| rng.random::<f32>()).collect());
    let probs = cls.predict(input).map_err(err)?;
    let simplex = probs.shape() == [5, 3, 1, 1]
        && (0..5).all(|i| {
            let p = probs.sample(i);
            p.iter().all(|v| *v >= 0.0) && (p.iter().sum::<f32>() - 1.0).abs() < 1e-5
        });
    check(
        flat == 25088
            && (bottleneck.height, bottleneck.width) == (56, 56)
            && pre_output == Shape::new(32, 224, 224)
            && simplex,
        format!(
            "flatten {flat}, bottleneck {}x{}, pre-output {}x{}x{}, classifier simplex {simplex}",
            bottleneck.height, bottleneck.width, pre_output.height, pre_output.width, pre_output.channels
        ),
    )
}

const PIPELINE: &str = "seed = 21\n[data]\npatch_size = 112\npatches = 16\ncounter_masks = 32\n\
[train.counter]\nmax_epochs = 2\n[train.detector]\nmax_epochs = 2\n[train.classifier]\nmax_epochs = 2\n";

fn pipeline(dir: &Path) -> Result<(), String> {
    let config = dir.join("run.toml");
    std::fs::write(&config, PIPELINE).map_err(|e| e.to_string())?;
    let d = |s: &str| dir.join(s).to_string_lossy().to_string();
    let steps: Vec<Vec<String>> = [
        vec!["generate"],
        vec!["train", "counter"],
        vec!["train", "detector", "--train", &d("dataset"), "--val", &d("dataset"), "--counter", &d("counter")],
        vec!["train", "classifier1", "--train", &d("dataset"), "--val", &d("dataset")],
        vec!["train", "classifier2", "--train", &d("dataset"), "--val", &d("dataset")],
        vec![
            "evaluate", "--data", &d("dataset"), "--detector", &d("detector"), "--counter", &d("counter"),
            "--classifier1", &d("classifier1"), "--classifier2", &d("classifier2"),
        ],
    ]
    .into_iter()
    .map(|s| s.into_iter().map(String::from).collect())
    .collect();
    for step in steps {
        let mut args = vec!["concorde".to_string(), "--jobs".into(), "1".into(), "--config".into(), d("run.toml"), "--out".into(), d("")];
        args.extend(step);
        run(&args).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn criterion_9() -> Outcome {
    let files = [
        "metrics.json",
        "sweep.csv",
        "matches.json",
        "roc_classifier1.csv",
        "roc_classifier2.csv",
        "counter/metrics.csv",
        "detector/metrics.csv",
        "classifier1/metrics.csv",
        "classifier2/metrics.csv",
        "counter/model.params",
        "detector/model.params",
        "classifier1/model.params",
        "classifier2/model.params",
    ];
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    pipeline(a.path())?;
    pipeline(b.path())?;
    for f in files {
        let read = |root: &Path| std::fs::read(root.join(f)).map_err(|e| format!("{f}: {e}"));
        if read(a.path())? != read(b.path())? {
            return Err(format!("{f} differs between runs"));
        }
    }
    Ok(format!("{} output files byte-identical across two single-threaded runs", files.len()))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "loss exactness", criterion_1),
        (2, "count-loss profile", criterion_2),
        (3, "pseudo-mask oracle", criterion_3),
        (4, "counter correlation", criterion_4),
        (5, "count-regularization ablation", criterion_5),
        (6, "matching oracle", criterion_6),
        (7, "classifier cascade", criterion_7),
        (8, "shape pins", criterion_8),
        (9, "reproducibility", criterion_9),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let line = match f() {
            Ok(detail) => format!("PASS  {id}. {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                format!("FAIL  {id}. {name}: {detail}")
            }
        };
        println!("{line}");
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
