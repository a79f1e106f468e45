//! Evaluation: PCP, PCK@t, MPJPE, Recall@t, invalid rate, and F1 on the
//! 13 evaluation keypoints.
//!
//! Inputs are in meters; every reported distance is in millimeters.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::skeleton::{builtin_joint_set, JointSet, SkeletonError};

/// A skeleton as optional joint positions in meters.
pub type Pose = Vec<Option<Vec3>>;

pub const DEFAULT_MATCH_THRESHOLD_MM: f64 = 500.0;
pub const DEFAULT_THRESHOLDS_MM: [f64; 2] = [100.0, 500.0];
/// Assignment cost used when two poses share no joints.
const NO_OVERLAP_COST: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("ground truth has {gt} frames but predictions have {pred}")]
    FrameMisalignment { gt: usize, pred: usize },
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub pcp: f64,
    /// Threshold in mm, formatted without decimals, to percent.
    pub pck: BTreeMap<String, f64>,
    pub mpjpe: f64,
    pub recall: BTreeMap<String, f64>,
    pub invalid: f64,
    pub f1: f64,
    pub per_joint_mpjpe: Vec<f64>,
    pub joint_names: Vec<String>,
    pub gt_persons: usize,
    pub pred_persons: usize,
    pub matched: usize,
}

/// Options for [`evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub thresholds_mm: Vec<f64>,
    pub match_threshold_mm: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            thresholds_mm: DEFAULT_THRESHOLDS_MM.to_vec(),
            match_threshold_mm: DEFAULT_MATCH_THRESHOLD_MM,
        }
    }
}

pub fn threshold_key(t: f64) -> String {
    format!("{t}")
}

/// Mean per-joint error in mm over joints present in both poses, with the shared count.
pub fn pose_mpjpe_mm(gt: &[Option<Vec3>], pred: &[Option<Vec3>]) -> Option<(f64, usize)> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (g, p) in gt.iter().zip(pred) {
        if let (Some(g), Some(p)) = (g, p) {
            sum += (g - p).norm() * 1000.0;
            n += 1;
        }
    }
    (n > 0).then(|| (sum / n as f64, n))
}

/// Minimum-cost assignment of rows to columns; returns the column for each row.
///
/// Requires `rows <= cols`.
fn hungarian(cost: &[Vec<f64>], cols: usize) -> Vec<usize> {
    let n = cost.len();
    let m = cols;
    assert!(n <= m);
    // 1-based potentials over rows (u) and columns (v); way[j] tracks augmenting paths.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
            for j in 0..=m {
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
    let mut assignment = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// A matched ground-truth/prediction pair with its MPJPE in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub gt: usize,
    pub pred: usize,
    pub mpjpe_mm: f64,
}

/// Optimal one-to-one assignment minimizing total MPJPE; matches above the threshold are discarded.
pub fn match_predictions(gt: &[Pose], pred: &[Pose], match_threshold_mm: f64) -> Vec<Match> {
    if gt.is_empty() || pred.is_empty() {
        return Vec::new();
    }
    let cost_of = |g: &Pose, p: &Pose| pose_mpjpe_mm(g, p).map_or(NO_OVERLAP_COST, |(c, _)| c);
    let transpose = gt.len() > pred.len();
    let (rows, cols) = if transpose {
        (pred.len(), gt.len())
    } else {
        (gt.len(), pred.len())
    };
    let cost: Vec<Vec<f64>> = (0..rows)
        .map(|r| {
            (0..cols)
                .map(|c| {
                    if transpose {
                        cost_of(&gt[c], &pred[r])
                    } else {
                        cost_of(&gt[r], &pred[c])
                    }
                })
                .collect()
        })
        .collect();
    let mut matches: Vec<Match> = hungarian(&cost, cols)
        .into_iter()
        .enumerate()
        .map(|(r, c)| {
            let (g, p) = if transpose { (c, r) } else { (r, c) };
            Match {
                gt: g,
                pred: p,
                mpjpe_mm: cost[r][c],
            }
        })
        .filter(|m| m.mpjpe_mm <= match_threshold_mm)
        .collect();
    matches.sort_by_key(|m| m.gt);
    matches
}

fn pct(num: usize, den: usize, vacuous: f64) -> f64 {
    if den == 0 {
        vacuous
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Projects poses of `source` onto the evaluation joint set by joint name.
pub fn to_eval_joints(poses: &[Pose], index_map: &[usize]) -> Vec<Pose> {
    poses
        .iter()
        .map(|p| index_map.iter().map(|&i| p.get(i).copied().flatten()).collect())
        .collect()
}

/// Evaluates predictions against ground truth, frame by frame.
///
/// `source` is the joint set of both inputs; joints are mapped onto `eval_set` by name.
pub fn evaluate(
    gt_frames: &[Vec<Pose>],
    pred_frames: &[Vec<Pose>],
    source: &JointSet,
    eval_set: &JointSet,
    opts: &EvalOptions,
) -> Result<EvalResult, MetricsError> {
    if gt_frames.len() != pred_frames.len() {
        return Err(MetricsError::FrameMisalignment {
            gt: gt_frames.len(),
            pred: pred_frames.len(),
        });
    }
    let map = source.index_map_from(eval_set)?;
    let nj = eval_set.joint_count();
    let mut joint_errors: Vec<f64> = Vec::new();
    let mut per_joint_sum = vec![0.0; nj];
    let mut per_joint_n = vec![0usize; nj];
    let mut person_mpjpe: Vec<f64> = Vec::new();
    let (mut gt_total, mut pred_total, mut matched_total) = (0usize, 0usize, 0usize);
    let (mut limbs_total, mut limbs_correct) = (0usize, 0usize);

    for (gt_raw, pred_raw) in gt_frames.iter().zip(pred_frames) {
        let gt = to_eval_joints(gt_raw, &map);
        let pred = to_eval_joints(pred_raw, &map);
        gt_total += gt.len();
        pred_total += pred.len();
        let matches = match_predictions(&gt, &pred, opts.match_threshold_mm);
        matched_total += matches.len();
        let mut pred_of_gt = vec![None; gt.len()];
        for m in &matches {
            pred_of_gt[m.gt] = Some(m.pred);
            person_mpjpe.push(m.mpjpe_mm);
            for j in 0..nj {
                if let (Some(g), Some(p)) = (gt[m.gt][j], pred[m.pred][j]) {
                    let e = (g - p).norm() * 1000.0;
                    joint_errors.push(e);
                    per_joint_sum[j] += e;
                    per_joint_n[j] += 1;
                }
            }
        }
        for (gi, g) in gt.iter().enumerate() {
            for limb in &eval_set.limbs {
                let (Some(ga), Some(gb)) = (g[limb.a], g[limb.b]) else { continue };
                limbs_total += 1;
                let Some(pi) = pred_of_gt[gi] else { continue };
                let (Some(pa), Some(pb)) = (pred[pi][limb.a], pred[pi][limb.b]) else { continue };
                let half = 0.5 * (ga - gb).norm();
                if (pa - ga).norm() <= half && (pb - gb).norm() <= half {
                    limbs_correct += 1;
                }
            }
        }
    }

    let mut pck = BTreeMap::new();
    let mut recall = BTreeMap::new();
    let vacuous = if gt_total == 0 { 100.0 } else { 0.0 };
    for &t in &opts.thresholds_mm {
        let within = joint_errors.iter().filter(|e| **e < t).count();
        pck.insert(threshold_key(t), pct(within, joint_errors.len(), vacuous));
        let recalled = person_mpjpe.iter().filter(|e| **e < t).count();
        recall.insert(threshold_key(t), pct(recalled, gt_total, 100.0));
    }
    let mpjpe = if joint_errors.is_empty() {
        0.0
    } else {
        joint_errors.iter().sum::<f64>() / joint_errors.len() as f64
    };
    let invalid = pct(pred_total - matched_total, pred_total, 0.0);
    let recall_500 = pct(
        person_mpjpe.iter().filter(|e| **e < 500.0).count(),
        gt_total,
        100.0,
    );
    let precision = 100.0 - invalid;
    let f1 = if recall_500 + precision > 0.0 {
        2.0 * recall_500 * precision / (recall_500 + precision)
    } else {
        0.0
    };
    Ok(EvalResult {
        pcp: pct(limbs_correct, limbs_total, vacuous),
        pck,
        mpjpe,
        recall,
        invalid,
        f1,
        per_joint_mpjpe: per_joint_sum
            .iter()
            .zip(&per_joint_n)
            .map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
            .collect(),
        joint_names: eval_set.joint_names.clone(),
        gt_persons: gt_total,
        pred_persons: pred_total,
        matched: matched_total,
    })
}

/// [`evaluate`] on the built-in 13-joint evaluation set.
pub fn evaluate_eval13(
    gt_frames: &[Vec<Pose>],
    pred_frames: &[Vec<Pose>],
    source: &JointSet,
    opts: &EvalOptions,
) -> Result<EvalResult, MetricsError> {
    let eval_set = builtin_joint_set("eval13")?;
    evaluate(gt_frames, pred_frames, source, &eval_set, opts)
}

/// Aligned text table: PCP, PCK@t..., MPJPE, Recall@t..., Invalid, F1.
pub fn format_table(result: &EvalResult, thresholds_mm: &[f64]) -> String {
    let mut header: Vec<String> = vec!["PCP".into()];
    let mut values: Vec<String> = vec![format!("{:.1}", result.pcp)];
    for &t in thresholds_mm {
        header.push(format!("PCK@{}", threshold_key(t)));
        values.push(format!("{:.1}", result.pck.get(&threshold_key(t)).copied().unwrap_or(0.0)));
    }
    header.push("MPJPE".into());
    values.push(format!("{:.1}", result.mpjpe));
    for &t in thresholds_mm {
        header.push(format!("Recall@{}", threshold_key(t)));
        values.push(format!(
            "{:.1}",
            result.recall.get(&threshold_key(t)).copied().unwrap_or(0.0)
        ));
    }
    header.push("Invalid".into());
    values.push(format!("{:.1}", result.invalid));
    header.push("F1".into());
    values.push(format!("{:.1}", result.f1));

    let widths: Vec<usize> = header
        .iter()
        .zip(&values)
        .map(|(h, v)| h.len().max(v.len()))
        .collect();
    let mut out = String::new();
    for (h, w) in header.iter().zip(&widths) {
        let _ = write!(out, "| {h:>w$} ");
    }
    out.push_str("|\n");
    for (v, w) in values.iter().zip(&widths) {
        let _ = write!(out, "| {v:>w$} ");
    }
    out.push_str("|\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(offset: f64) -> Pose {
        (0..13)
            .map(|i| Some(Vec3::new(offset, 0.1 * i as f64, 0.13 * i as f64)))
            .collect()
    }

    // Exhaustive search over injective assignments of the smaller side.
    fn brute_force_cost(gt: &[Pose], pred: &[Pose]) -> f64 {
        fn rec(i: usize, rows: &[Vec<f64>], used: &mut Vec<bool>) -> f64 {
            if i == rows.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(rows[i][j] + rec(i + 1, rows, used));
                    used[j] = false;
                }
            }
            best
        }
        let c = |g: &Pose, p: &Pose| pose_mpjpe_mm(g, p).map_or(NO_OVERLAP_COST, |x| x.0);
        let rows: Vec<Vec<f64>> = if gt.len() <= pred.len() {
            gt.iter().map(|g| pred.iter().map(|p| c(g, p)).collect()).collect()
        } else {
            pred.iter().map(|p| gt.iter().map(|g| c(g, p)).collect()).collect()
        };
        let width = rows.first().map_or(0, Vec::len);
        rec(0, &rows, &mut vec![false; width])
    }

    #[test]
    fn identical_lists_match_identity() {
        let gt = vec![pose(0.0), pose(1.0), pose(2.0)];
        let m = match_predictions(&gt, &gt, 500.0);
        assert_eq!(m.len(), 3);
        for (i, mm) in m.iter().enumerate() {
            assert_eq!((mm.gt, mm.pred), (i, i));
            assert_eq!(mm.mpjpe_mm, 0.0);
        }
    }

    #[test]
    fn single_prediction_matches_second_gt() {
        let gt = vec![pose(0.0), pose(1.0)];
        let pred = vec![pose(1.0)];
        let m = match_predictions(&gt, &pred, 500.0);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].gt, m[0].pred), (1, 0));
    }

    #[test]
    fn assignment_matches_exhaustive_search() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let ng = rng.random_range(0..=4);
            let np = rng.random_range(0..=4);
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                let off = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
                pose(0.0)
                    .into_iter()
                    .map(|j| (rng.random_bool(0.9)).then(|| j.unwrap() + off))
                    .collect::<Pose>()
            };
            let gt: Vec<Pose> = (0..ng).map(|_| mk(&mut rng)).collect();
            let pred: Vec<Pose> = (0..np).map(|_| mk(&mut rng)).collect();
            let m = match_predictions(&gt, &pred, f64::INFINITY);
            let total: f64 = m.iter().map(|x| x.mpjpe_mm).sum();
            let oracle = if ng == 0 || np == 0 { 0.0 } else { brute_force_cost(&gt, &pred) };
            assert!((total - oracle).abs() < 1e-6 * oracle.max(1.0), "{total} vs {oracle}");
        }
    }

    #[test]
    fn perfect_score() {
        let set = builtin_joint_set("eval13").unwrap();
        let frames = vec![vec![pose(0.0), pose(2.0)], vec![pose(1.0)]];
        let r = evaluate(&frames, &frames, &set, &set, &EvalOptions::default()).unwrap();
        assert_eq!(r.pcp, 100.0);
        assert_eq!(r.pck["100"], 100.0);
        assert_eq!(r.pck["500"], 100.0);
        assert_eq!(r.mpjpe, 0.0);
        assert_eq!(r.recall["100"], 100.0);
        assert_eq!(r.invalid, 0.0);
        assert_eq!(r.f1, 100.0);
    }

    #[test]
    fn constant_offset() {
        let set = builtin_joint_set("eval13").unwrap();
        let gt = vec![vec![pose(0.0)]];
        let pred = vec![vec![pose(0.01)]];
        let r = evaluate(&gt, &pred, &set, &set, &EvalOptions::default()).unwrap();
        assert!((r.mpjpe - 10.0).abs() < 1e-9);
        assert_eq!(r.pck["100"], 100.0);
    }

    #[test]
    fn misaligned_frames() {
        let set = builtin_joint_set("eval13").unwrap();
        let err = evaluate(&[vec![]], &[], &set, &set, &EvalOptions::default()).unwrap_err();
        assert_eq!(err, MetricsError::FrameMisalignment { gt: 1, pred: 0 });
    }

    #[test]
    fn table_has_expected_column_order() {
        let set = builtin_joint_set("eval13").unwrap();
        let frames = vec![vec![pose(0.0)]];
        let r = evaluate(&frames, &frames, &set, &set, &EvalOptions::default()).unwrap();
        let table = format_table(&r, &[100.0, 500.0]);
        let header = table.lines().next().unwrap();
        let cols: Vec<&str> = header.split('|').map(str::trim).filter(|s| !s.is_empty()).collect();
        assert_eq!(
            cols,
            ["PCP", "PCK@100", "PCK@500", "MPJPE", "Recall@100", "Recall@500", "Invalid", "F1"]
        );
    }
}
