use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Point;

/// Matching tolerance in pixels (twice the pseudo-mask radius).
pub const DEFAULT_MATCH_RADIUS: f64 = 8.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStrategy {
    /// Distance-sorted greedy pairing, completed with augmenting paths so
    /// the number of pairs is always maximal.
    #[default]
    Greedy,
    /// Maximum number of pairs with minimum total distance (Hungarian).
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub gt: usize,
    pub pred: usize,
    pub distance: f64,
}

/// One-to-one matching of predictions to ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMatchReport {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub radius: f64,
}

pub(crate) fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    let f1 = if tp > 0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f1)
}

/// Greedy matching with a pixel `radius`; a distance equal to the radius
/// still counts.
pub fn match_detections(gt: &[Point], pred: &[Point], radius: f64) -> Result<DetectionMatchReport> {
    match_detections_with(gt, pred, radius, MatchStrategy::Greedy)
}

pub fn match_detections_with(
    gt: &[Point],
    pred: &[Point],
    radius: f64,
    strategy: MatchStrategy,
) -> Result<DetectionMatchReport> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput(format!("match radius must be positive, got {radius}")));
    }
    let assignment = match strategy {
        MatchStrategy::Greedy => greedy_augmented(gt, pred, radius),
        MatchStrategy::Optimal => hungarian(gt, pred, radius),
    };
    let mut pairs: Vec<MatchedPair> = assignment
        .iter()
        .enumerate()
        .filter_map(|(g, p)| {
            p.map(|p| MatchedPair {
                gt: g,
                pred: p,
                distance: gt[g].distance(&pred[p]),
            })
        })
        .collect();
    pairs.sort_by_key(|p| p.gt);
    let mut pred_used = vec![false; pred.len()];
    for p in &pairs {
        pred_used[p.pred] = true;
    }
    let unmatched_gt = (0..gt.len()).filter(|&g| assignment[g].is_none()).collect::<Vec<_>>();
    let unmatched_pred = (0..pred.len()).filter(|&p| !pred_used[p]).collect::<Vec<_>>();
    let tp = pairs.len();
    let (fp, fn_) = (unmatched_pred.len(), unmatched_gt.len());
    let (precision, recall, f1) = prf(tp, fp, fn_);
    Ok(DetectionMatchReport {
        pairs,
        unmatched_gt,
        unmatched_pred,
        tp,
        fp,
        fn_,
        precision,
        recall,
        f1,
        radius,
    })
}

/// Candidate edges per ground-truth point, nearest first.
fn neighbours(gt: &[Point], pred: &[Point], radius: f64) -> Vec<Vec<(f64, usize)>> {
    gt.iter()
        .map(|g| {
            let mut near: Vec<(f64, usize)> = pred
                .iter()
                .enumerate()
                .map(|(j, p)| (g.distance(p), j))
                .filter(|(d, _)| *d <= radius)
                .collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            near
        })
        .collect()
}

fn greedy_augmented(gt: &[Point], pred: &[Point], radius: f64) -> Vec<Option<usize>> {
    let adj = neighbours(gt, pred, radius);
    let mut edges: Vec<(f64, usize, usize)> = adj
        .iter()
        .enumerate()
        .flat_map(|(g, near)| near.iter().map(move |&(d, p)| (d, g, p)))
        .collect();
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_to_pred = vec![None; gt.len()];
    let mut pred_to_gt = vec![None; pred.len()];
    for (_, g, p) in edges {
        if gt_to_pred[g].is_none() && pred_to_gt[p].is_none() {
            gt_to_pred[g] = Some(p);
            pred_to_gt[p] = Some(g);
        }
    }
    // Greedy can strand a pair that a re-routing would recover; augmenting
    // paths restore maximum cardinality without unmatching anyone.
    for g in 0..gt.len() {
        if gt_to_pred[g].is_none() {
            let mut visited = vec![false; pred.len()];
            augment(g, &adj, &mut visited, &mut gt_to_pred, &mut pred_to_gt);
        }
    }
    gt_to_pred
}

fn augment(
    g: usize,
    adj: &[Vec<(f64, usize)>],
    visited: &mut [bool],
    gt_to_pred: &mut [Option<usize>],
    pred_to_gt: &mut [Option<usize>],
) -> bool {
    for &(_, p) in &adj[g] {
        if visited[p] {
            continue;
        }
        visited[p] = true;
        let free = match pred_to_gt[p] {
            None => true,
            Some(other) => augment(other, adj, visited, gt_to_pred, pred_to_gt),
        };
        if free {
            gt_to_pred[g] = Some(p);
            pred_to_gt[p] = Some(g);
            return true;
        }
    }
    false
}

/// Min-cost assignment where out-of-radius pairs cost more than any
/// combination of in-radius pairs, so cardinality is maximized first.
fn hungarian(gt: &[Point], pred: &[Point], radius: f64) -> Vec<Option<usize>> {
    let (n_gt, n_pred) = (gt.len(), pred.len());
    let n = n_gt.max(n_pred);
    if n == 0 || n_gt == 0 || n_pred == 0 {
        return vec![None; n_gt];
    }
    let big = (radius + 1.0) * (n as f64 + 1.0);
    let cost = |i: usize, j: usize| -> f64 {
        if i < n_gt && j < n_pred {
            let d = gt[i].distance(&pred[j]);
            if d <= radius {
                d
            } else {
                big
            }
        } else {
            big
        }
    };
    // Shortest augmenting path formulation with potentials, 1-indexed.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; n_gt];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= n_gt && j <= n_pred && gt[i - 1].distance(&pred[j - 1]) <= radius {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point> {
        v.iter().map(|&p| p.into()).collect()
    }

    #[test]
    fn single_pair_within_radius() {
        let r = match_detections(&pts(&[(0.0, 0.0)]), &pts(&[(3.0, 4.0)]), 8.0).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (1, 0, 0));
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.pairs[0].distance, 5.0);
    }

    #[test]
    fn boundary_distance_counts() {
        let r = match_detections(&pts(&[(0.0, 0.0)]), &pts(&[(8.0, 0.0)]), 8.0).unwrap();
        assert_eq!(r.tp, 1);
        let r = match_detections(&pts(&[(0.0, 0.0)]), &pts(&[(8.01, 0.0)]), 8.0).unwrap();
        assert_eq!(r.tp, 0);
    }

    #[test]
    fn one_prediction_cannot_serve_two_cells() {
        for s in [MatchStrategy::Greedy, MatchStrategy::Optimal] {
            let r = match_detections_with(&pts(&[(0.0, 0.0), (0.0, 6.0)]), &pts(&[(0.0, 3.0)]), 8.0, s).unwrap();
            assert_eq!((r.tp, r.fn_, r.fp), (1, 1, 0));
            assert_eq!(r.precision, 1.0);
            assert_eq!(r.recall, 0.5);
        }
    }

    #[test]
    fn augmenting_path_recovers_stranded_pair() {
        // Plain nearest-first greedy takes (g0,p0) and strands both g1 and p1.
        let gt = pts(&[(0.0, 0.0), (0.0, 6.0)]);
        let pred = pts(&[(0.0, 3.0), (0.0, -4.0)]);
        let r = match_detections(&gt, &pred, 8.0).unwrap();
        assert_eq!(r.tp, 2);
        let o = match_detections_with(&gt, &pred, 8.0, MatchStrategy::Optimal).unwrap();
        assert_eq!(o.tp, 2);
    }

    #[test]
    fn empty_inputs() {
        let r = match_detections(&[], &[], 8.0).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_, r.f1), (0, 0, 0, 0.0));
        let r = match_detections(&pts(&[(1.0, 1.0)]), &[], 8.0).unwrap();
        assert_eq!((r.fn_, r.recall), (1, 0.0));
        let r = match_detections_with(&[], &pts(&[(1.0, 1.0)]), 8.0, MatchStrategy::Optimal).unwrap();
        assert_eq!(r.fp, 1);
        assert!(match_detections(&[], &[], 0.0).is_err());
    }
}
