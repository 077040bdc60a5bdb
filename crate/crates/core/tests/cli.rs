use std::path::Path;
use std::process::Command;

use concorde::cli::{run, PredictionFile, RUN_MANIFEST_FILE};
use concorde::data::load_dataset;

const QUICK: &str = "seed = 2\n[data]\npatch_size = 112\npatches = 6\ncounter_masks = 8\n\
[train.counter]\nmax_epochs = 1\n[train.detector]\nmax_epochs = 1\n[train.classifier]\nmax_epochs = 1\n";

fn concorde(dir: &Path, args: &[&str]) -> concorde::cli::RunSummary {
    let config = dir.join("run.toml");
    if !config.exists() {
        std::fs::write(&config, QUICK).unwrap();
    }
    let mut argv = vec!["concorde", "--config", config.to_str().unwrap()];
    argv.extend_from_slice(args);
    run(argv).unwrap_or_else(|e| panic!("{args:?}: {e}"))
}

fn p(dir: &Path, sub: &str) -> String {
    dir.join(sub).to_str().unwrap().to_string()
}

fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn generate_is_deterministic_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = p(dir.path(), "a");
    let b = p(dir.path(), "b");
    concorde(dir.path(), &["--out", &a, "generate"]);
    concorde(dir.path(), &["--out", &b, "--jobs", "3", "generate"]);
    let (ta, tb) = (read_tree(&dir.path().join("a/dataset")), read_tree(&dir.path().join("b/dataset")));
    assert_eq!(ta.len(), 12);
    assert_eq!(ta, tb);
    let patches = load_dataset(dir.path().join("a/dataset")).unwrap();
    assert!(patches.iter().all(|q| q.width() == 112 && q.height() == 112));
    assert!(dir.path().join("a").join(RUN_MANIFEST_FILE).exists());
}

#[test]
fn build_masks_counts_every_dot() {
    let dir = tempfile::tempdir().unwrap();
    concorde(dir.path(), &["--out", &p(dir.path(), "g"), "generate"]);
    concorde(dir.path(), &["--out", &p(dir.path(), "m"), "build-masks", "--data", &p(dir.path(), "g/dataset")]);
    let patches = load_dataset(dir.path().join("g/dataset")).unwrap();
    let table = std::fs::read_to_string(dir.path().join("m/masks/counts.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), patches.len());
    for (row, patch) in rows.iter().zip(&patches) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[0], patch.id);
        assert_eq!(cols[1].parse::<usize>().unwrap(), patch.dots.len());
        assert!(cols[3].parse::<usize>().unwrap() <= patch.dots.len());
        assert!(dir.path().join(format!("m/masks/{}.png", patch.id)).exists());
    }
}

#[test]
fn train_evaluate_predict_overlay_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = p(d, "run");
    concorde(d, &["--out", &out, "generate"]);
    concorde(d, &["--out", &p(d, "more"), "--seed", "9", "generate", "--patches", "20"]);
    let data = p(d, "run/dataset");
    let more = p(d, "more/dataset");
    concorde(d, &["--out", &out, "train", "counter"]);
    concorde(d, &["--out", &out, "train", "detector", "--train", &data, "--val", &data, "--counter", &p(d, "run/counter")]);
    concorde(d, &["--out", &out, "train", "classifier1", "--train", &more, "--val", &data]);
    concorde(d, &["--out", &out, "train", "classifier2", "--train", &more, "--val", &more]);
    for net in ["counter", "detector", "classifier1", "classifier2"] {
        for f in ["model.params", "manifest.json", "metrics.csv"] {
            assert!(d.join("run").join(net).join(f).exists(), "{net}/{f}");
        }
    }

    let ckpts = [
        "--detector", &p(d, "run/detector"), "--counter", &p(d, "run/counter"),
        "--classifier1", &p(d, "run/classifier1"), "--classifier2", &p(d, "run/classifier2"),
    ]
    .map(String::from);
    let ckpts: Vec<&str> = ckpts.iter().map(String::as_str).collect();
    let eval_out = p(d, "eval");
    concorde(d, &[&["--out", &eval_out, "evaluate", "--data", &data][..], &ckpts].concat());
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("eval/metrics.json")).unwrap()).unwrap();
    let det = &metrics["detection"];
    let dots: usize = load_dataset(&data).unwrap().iter().map(|q| q.dots.len()).sum();
    let (tp, fp, fn_) = (det["tp"].as_u64().unwrap(), det["fp"].as_u64().unwrap(), det["fn"].as_u64().unwrap());
    assert_eq!((tp + fn_) as usize, dots);
    let sweep = std::fs::read_to_string(d.join("eval/sweep.csv")).unwrap();
    let row = sweep.lines().find(|l| l.starts_with("0.85,")).expect("0.85 row in sweep");
    assert!(row.starts_with(&format!("0.85,{tp},{fp},{fn_},")), "{row}");
    let matches: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("eval/matches.json")).unwrap()).unwrap();
    let sum = |key: &str| -> u64 { matches.as_array().unwrap().iter().map(|m| m["report"][key].as_u64().unwrap()).sum() };
    assert_eq!((sum("tp"), sum("fp"), sum("fn")), (tp, fp, fn_));
    let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
    assert!((det["f1"].as_f64().unwrap() - f1).abs() < 1e-12);
    assert_eq!(metrics["cascade"]["cells"].as_u64().unwrap() as usize, dots);
    for f in ["matches.json", "roc_classifier1.csv"] {
        assert!(d.join("eval").join(f).exists(), "{f}");
    }

    let pred_out = p(d, "pred");
    concorde(d, &[&["--out", &pred_out, "predict", "--images", &data, "--threshold", "0.4"][..], &ckpts].concat());
    let file = PredictionFile::load(&d.join("pred/predictions.json")).unwrap();
    assert_eq!(file.patches.len(), 6);
    assert_eq!(file.threshold, 0.4);
    for patch in &file.patches {
        assert_eq!((patch.width, patch.height), (112, 112));
        for c in &patch.cells {
            assert!(c.category.is_some());
            assert_eq!(c.stage1.as_ref().unwrap().len(), 3);
        }
    }

    concorde(d, &["--out", &p(d, "ov"), "overlay", "--predictions", &p(d, "pred/predictions.json"), "--images", &data]);
    let overlays = std::fs::read_dir(d.join("ov/overlays")).unwrap().count();
    assert_eq!(overlays, 6);

    concorde(d, &["--out", &p(d, "plot"), "plot", "--roc", &p(d, "eval/roc_classifier1.csv")]);
    let png = image::open(d.join("plot/roc_classifier1.png")).unwrap();
    assert_eq!((png.width(), png.height()), (480, 480));
}

#[test]
fn predict_on_blank_background_finds_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    concorde(d, &["--out", &p(d, "r"), "train", "counter"]);
    concorde(d, &["--out", &p(d, "r"), "generate"]);
    let data = p(d, "r/dataset");
    concorde(d, &["--out", &p(d, "r"), "train", "detector", "--train", &data, "--val", &data, "--counter", &p(d, "r/counter")]);
    let blank = d.join("blank");
    std::fs::create_dir_all(&blank).unwrap();
    image::RgbImage::from_pixel(112, 112, image::Rgb([235, 230, 224])).save(blank.join("bg.png")).unwrap();
    concorde(d, &[
        "--out", &p(d, "pb"), "predict", "--images", blank.to_str().unwrap(),
        "--detector", &p(d, "r/detector"), "--counter", &p(d, "r/counter"), "--threshold", "0.95",
    ]);
    let file = PredictionFile::load(&d.join("pb/predictions.json")).unwrap();
    assert_eq!(file.patches.len(), 1);
    assert_eq!(file.patches[0].id, "bg");
    assert!(file.patches[0].cells.is_empty(), "{:?}", file.patches[0].cells);
}

fn binary(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_concorde")).args(args).output().unwrap()
}

#[test]
fn failures_print_one_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = binary(&["--config", dir.path().join("missing.toml").to_str().unwrap(), "generate"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
    let v: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(v["kind"], "io");

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "sed = 3\n").unwrap();
    let out = binary(&["--config", bad.to_str().unwrap(), "generate"]);
    let v: serde_json::Value = serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["kind"], "config");

    let out = binary(&["evaluate", "--out", dir.path().join("e").to_str().unwrap()]);
    assert!(!out.status.success());
    let v: serde_json::Value = serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert!(v["message"].as_str().unwrap().contains("data.test"));
}

#[test]
fn help_and_version_exit_zero() {
    let out = binary(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for verb in ["generate", "build-masks", "train", "evaluate", "predict", "overlay", "ablate", "plot"] {
        assert!(text.contains(verb), "{verb}");
    }
    assert!(binary(&["--version"]).status.success());
    assert_eq!(binary(&["train"]).status.code(), Some(2));
}
