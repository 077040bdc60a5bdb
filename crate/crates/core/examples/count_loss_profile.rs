//! Prints the count loss against the count error and compares the detection
//! objective with and without the count term on a toy batch.
//!
//! cargo run --release --example count_loss_profile

use concorde::losses::{count_loss, count_loss_with_grad, detection_loss, LossConfig};

fn main() -> concorde::Result<()> {
    println!("error,count_loss,grad");
    for err in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0] {
        let (loss, grad) = count_loss_with_grad(&[30.0 + err], &[30.0])?;
        println!("{err},{loss:.6},{:.6}", grad[0]);
    }
    println!("batch mean of |errors| 2 and 6 -> {:.4}", count_loss(&[12.0, 16.0], &[10.0, 10.0])?);

    // two 4x4 maps with a 2x2 blob each
    let target: Vec<f64> = (0..32).map(|i| if matches!(i % 16, 5 | 6 | 9 | 10) { 1.0 } else { 0.0 }).collect();
    let pred: Vec<f64> = target.iter().map(|t| 0.2 + 0.6 * t).collect();
    for k in [0.0, 0.3] {
        let cfg = LossConfig { k, ..LossConfig::default() };
        for counts in [[1.0, 1.0], [3.0, 0.0]] {
            let l = detection_loss(&pred, &target, &counts, &[1.0, 1.0], &cfg)?;
            println!(
                "K={k} counts={counts:?}: total {:.4} = dice {:.4} + K * count {:.4}",
                l.total, l.dice, l.count
            );
        }
    }
    Ok(())
}
