use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

use super::{RocCurve, SweepTable};

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn sweep_to_csv(table: &SweepTable) -> String {
    let mut out = String::from("threshold,tp,fp,fn,precision,recall,f1\n");
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.threshold, r.tp, r.fp, r.fn_, r.precision, r.recall, r.f1
        );
    }
    out
}

/// ROC points as `category,threshold,fpr,tpr` rows.
pub fn roc_to_csv(curves: &[(String, RocCurve)]) -> String {
    let mut out = String::from("category,threshold,fpr,tpr\n");
    for (name, c) in curves {
        for i in 0..c.fpr.len() {
            let _ = writeln!(out, "{},{},{},{}", name, c.thresholds[i], c.fpr[i], c.tpr[i]);
        }
    }
    out
}

/// Inverse of [`roc_to_csv`]; AUC is recomputed from the points.
pub fn read_roc_csv(text: &str) -> Result<Vec<(String, RocCurve)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "category,threshold,fpr,tpr" => {}
        other => {
            return Err(Error::InvalidInput(format!("unexpected ROC CSV header {other:?}")));
        }
    }
    let mut curves: Vec<(String, RocCurve)> = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.rsplitn(4, ',').collect();
        if fields.len() != 4 {
            return Err(Error::InvalidInput(format!("ROC CSV line {}: expected 4 fields", n + 2)));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("ROC CSV line {}: bad number {s:?}", n + 2)))
        };
        let (tpr, fpr, thr, name) = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?, fields[3]);
        if curves.last().map(|(c, _)| c.as_str()) != Some(name) {
            curves.push((
                name.to_string(),
                RocCurve { fpr: vec![], tpr: vec![], thresholds: vec![], auc: 0.0 },
            ));
        }
        let c = &mut curves.last_mut().unwrap().1;
        c.fpr.push(fpr);
        c.tpr.push(tpr);
        c.thresholds.push(thr);
    }
    for (_, c) in &mut curves {
        c.auc = c
            .fpr
            .windows(2)
            .zip(c.tpr.windows(2))
            .map(|(f, t)| (f[1] - f[0]) * (t[1] + t[0]) / 2.0)
            .sum();
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::roc_curve;

    #[test]
    fn roc_csv_round_trip() {
        let a = roc_curve(&[0.9, 0.4, 0.6, 0.1], &[true, false, true, false]).unwrap().unwrap();
        let b = roc_curve(&[0.2, 0.4, 0.6, 0.1], &[true, false, true, false]).unwrap().unwrap();
        let curves = vec![("CD8".to_string(), a), ("GAL8+pSTAT−".to_string(), b)];
        let back = read_roc_csv(&roc_to_csv(&curves)).unwrap();
        assert_eq!(back.len(), 2);
        for ((n0, c0), (n1, c1)) in curves.iter().zip(&back) {
            assert_eq!(n0, n1);
            assert_eq!(c0.fpr, c1.fpr);
            assert!((c0.auc - c1.auc).abs() < 1e-12);
        }
        assert!(read_roc_csv("a,b\n").is_err());
    }
}
