//! Trains both classifier stages on 28x28 cell crops from the `easy` suite
//! and reports per-stage AUCs and the five-way accuracy of the cascade.
//!
//! cargo run --release --example classifier_cascade -- [epochs] [seed]

use concorde::cli::pipeline::{cells_of, evaluate_cascade};
use concorde::models::{train_classifier, ClassifierStage, TrainConfig};
use concorde::synthgen::benchmark_suite;

fn main() -> concorde::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let suite = benchmark_suite("easy", seed, 224)?;
    let (train, val, test) = (cells_of(&suite.train), cells_of(&suite.val), cells_of(&suite.test));
    println!("cells: train {} val {} test {}", train.len(), val.len(), test.len());

    let cfg = TrainConfig { max_epochs: epochs, seed, ..TrainConfig::classifier() };
    let stage1 = train_classifier(ClassifierStage::One, &train, &val, &cfg)?;
    let stage2 = train_classifier(ClassifierStage::Two, &train, &val, &cfg)?;
    for (name, run) in [("stage 1", &stage1), ("stage 2", &stage2)] {
        println!("{name}: val accuracy {:.3} (epoch {})", run.archive.manifest.metrics["val_accuracy"], run.best_epoch);
    }

    let ev = evaluate_cascade(&stage1.archive, &stage2.archive, &test)?;
    let stages = std::iter::once(&ev.stage1).chain(ev.stage2.as_ref());
    for stage in stages {
        for (class, auc) in stage.classes.iter().zip(&stage.auc) {
            match auc {
                Some(a) => println!("  {class}: AUC {a:.4}"),
                None => println!("  {class}: no positives"),
            }
        }
    }
    println!("cascade accuracy {:.4} over {} cells", ev.cascade.accuracy, ev.cells);
    for (name, row) in ev.categories.iter().zip(&ev.cascade.matrix) {
        println!("  {name:>20}: {row:?}");
    }
    Ok(())
}
