//! Drives the `concorde` command-line verbs in-process on a small synthetic
//! dataset: generate, train every network briefly, evaluate, predict,
//! overlay and plot.
//!
//! cargo run --release --example cli_pipeline -- [work_dir]

use concorde::cli::run;

fn main() -> concorde::Result<()> {
    let work = std::env::args().nth(1).unwrap_or_else(|| "cli_pipeline_out".into());
    let config = format!("{work}/run.toml");
    std::fs::create_dir_all(&work).expect("work directory");
    std::fs::write(
        &config,
        "seed = 1\n[data]\npatch_size = 112\npatches = 24\ncounter_masks = 64\n\
         [train.counter]\nmax_epochs = 3\n[train.detector]\nmax_epochs = 2\n[train.classifier]\nmax_epochs = 3\n",
    )
    .expect("write config");

    let w = |dir: &str| format!("{work}/{dir}");
    let steps: Vec<Vec<String>> = vec![
        vec!["generate".into()],
        vec!["train".into(), "counter".into()],
        vec!["train".into(), "detector".into(), "--train".into(), w("dataset"), "--val".into(), w("dataset"), "--counter".into(), w("counter")],
        vec!["train".into(), "classifier1".into(), "--train".into(), w("dataset"), "--val".into(), w("dataset")],
        vec!["train".into(), "classifier2".into(), "--train".into(), w("dataset"), "--val".into(), w("dataset")],
    ];
    let ckpts = [
        "--detector".to_string(), w("detector"), "--counter".into(), w("counter"),
        "--classifier1".into(), w("classifier1"), "--classifier2".into(), w("classifier2"),
    ];
    let mut all = steps;
    all.push([vec!["evaluate".into(), "--data".into(), w("dataset")], ckpts.to_vec()].concat());
    all.push([vec!["predict".into(), "--images".into(), w("dataset")], ckpts.to_vec()].concat());
    all.push(vec!["overlay".into(), "--predictions".into(), w("predictions.json"), "--images".into(), w("dataset")]);
    all.push(vec!["plot".into(), "--roc".into(), w("roc_classifier1.csv")]);

    for step in all {
        let mut args = vec!["concorde".to_string(), "--config".into(), config.clone(), "--out".into(), work.clone()];
        args.extend(step);
        let summary = run(&args)?;
        println!("{}: {}", summary.command, summary.message);
    }
    Ok(())
}
