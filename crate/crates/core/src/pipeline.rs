//! Single-frame 2D-to-3D fusion: pairing, filtering, triangulation, scoring,
//! grouping, merging, and post-processing.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, normalized_to_direction, CameraCalib, Vec2, Vec3};
use crate::skeleton::{in_room, limb_plausible, JointSet, RoomBounds};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("at least two views are required, got {0}")]
    TooFewViews(usize),
    #[error("no calibration for view '{0}'")]
    CalibrationMissing(String),
    #[error("view '{view}' detection {index}: expected {expected} joints, got {got}")]
    ShapeMismatch {
        view: String,
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("view '{view}' detection {index}: {reason}")]
    InvalidDetection {
        view: String,
        index: usize,
        reason: String,
    },
    #[error("duplicate view '{0}' in frame")]
    DuplicateView(String),
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
}

/// One person's 2D keypoints in one view. Its person index is its position in the view's list.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection2D {
    pub joints: Vec<Vec2>,
    /// Per-joint score in `[0, 1]`.
    pub confidence: Vec<f64>,
}

/// All detections of one camera in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewDetections {
    pub view: String,
    pub detections: Vec<Detection2D>,
}

/// Calibrated cameras addressed by id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CameraRig {
    pub cameras: Vec<CameraCalib>,
}

impl CameraRig {
    pub fn new(cameras: Vec<CameraCalib>) -> Self {
        CameraRig { cameras }
    }

    pub fn get(&self, id: &str) -> Option<&CameraCalib> {
        self.cameras.iter().find(|c| c.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    Combined,
    TriangulationOnly,
    ReprojectionOnly,
}

/// Every threshold and ablation switch of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Joints below this confidence are treated as missing.
    pub conf_floor: f64,
    /// Mean pixel distance for matching a detection to a previous person.
    pub prev_match_px: f64,
    /// Proposals scoring above this are dropped.
    pub max_reproj_err_px: f64,
    pub use_confidence_weighting: bool,
    pub score_mode: ScoreMode,
    /// Converts a triangulation gap in meters into an equivalent pixel error.
    pub gap_to_px: f64,
    /// Linkage distance between proposal centers.
    pub group_dist_m: f64,
    pub min_group_size: usize,
    pub outlier_dist_m: f64,
    pub merge_top_k: usize,
    pub min_valid_joints: usize,
    pub min_height_m: f64,
    pub max_height_m: f64,
    pub room: RoomBounds,
    pub room_margin_m: f64,
    pub enable_pair_prefilter: bool,
    pub enable_outlier_reject: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            conf_floor: 0.3,
            prev_match_px: 40.0,
            max_reproj_err_px: 25.0,
            use_confidence_weighting: true,
            score_mode: ScoreMode::Combined,
            gap_to_px: 250.0,
            group_dist_m: 0.3,
            min_group_size: 1,
            outlier_dist_m: 0.15,
            merge_top_k: 4,
            min_valid_joints: 6,
            min_height_m: 0.5,
            max_height_m: 2.5,
            room: RoomBounds {
                min_corner: [-3.0, -3.0, -0.2],
                max_corner: [3.0, 3.0, 3.0],
            },
            room_margin_m: 0.25,
            enable_pair_prefilter: true,
            enable_outlier_reject: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.conf_floor) {
            return bad("conf_floor must be in [0, 1]");
        }
        let positive = [
            ("prev_match_px", self.prev_match_px),
            ("max_reproj_err_px", self.max_reproj_err_px),
            ("gap_to_px", self.gap_to_px),
            ("group_dist_m", self.group_dist_m),
            ("outlier_dist_m", self.outlier_dist_m),
            ("min_height_m", self.min_height_m),
            ("max_height_m", self.max_height_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(PipelineError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.room_margin_m >= 0.0) {
            return bad("room_margin_m must be non-negative");
        }
        if self.merge_top_k < 1 {
            return bad("merge_top_k must be at least 1");
        }
        if self.min_group_size < 1 {
            return bad("min_group_size must be at least 1");
        }
        if self.min_valid_joints < 1 {
            return bad("min_valid_joints must be at least 1");
        }
        if self.min_height_m >= self.max_height_m {
            return bad("min_height_m must be below max_height_m");
        }
        self.room
            .validate()
            .map_err(|e| PipelineError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairState {
    Candidate,
    FilteredOut,
    Scored,
    Dropped,
    Grouped,
}

/// Two detections from different views; `view_*` index the frame's view list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewPair {
    pub view_a: usize,
    pub idx_a: usize,
    pub view_b: usize,
    pub idx_b: usize,
    pub state: PairState,
}

/// A 3D skeleton triangulated from one view pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal3D {
    pub pair: ViewPair,
    pub joints: Vec<Option<Vec3>>,
    /// Midpoint gap per joint, meters; zero where the joint is absent.
    pub tri_gap: Vec<f64>,
    pub reproj_err_px: f64,
    pub score: f64,
}

impl Proposal3D {
    pub fn present_count(&self) -> usize {
        self.joints.iter().filter(|j| j.is_some()).count()
    }

    fn remove_joint(&mut self, j: usize) {
        self.joints[j] = None;
        self.tri_gap[j] = 0.0;
    }
}

/// Orders persons by the detections of their best pair: view ids first, then person indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct PersonKey {
    pub view_a: String,
    pub idx_a: usize,
    pub view_b: String,
    pub idx_b: usize,
}

/// A merged 3D person.
#[derive(Debug, Clone, PartialEq)]
pub struct Person3D {
    pub joints: Vec<Option<Vec3>>,
    pub joint_valid: Vec<bool>,
    /// Number of proposals averaged into each joint.
    pub joint_support: Vec<u32>,
    /// Set where the joint was copied from a neighbor.
    pub filled: Vec<bool>,
    pub group_size: usize,
    pub track_id: Option<u64>,
    pub key: PersonKey,
}

impl Person3D {
    /// A person made directly from joint positions, e.g. ground truth.
    pub fn from_joints(joints: Vec<Option<Vec3>>) -> Self {
        let n = joints.len();
        Person3D {
            joint_valid: joints.iter().map(Option::is_some).collect(),
            joint_support: joints.iter().map(|j| j.is_some() as u32).collect(),
            filled: vec![false; n],
            joints,
            group_size: 1,
            track_id: None,
            key: PersonKey::default(),
        }
    }

    pub fn valid_count(&self) -> usize {
        self.joint_valid.iter().filter(|v| **v).count()
    }

    /// Mean of valid joints that were not neighbor-filled.
    pub fn centroid(&self) -> Option<Vec3> {
        let mut sum = Vec3::zeros();
        let mut n = 0usize;
        for ((j, valid), filled) in self.joints.iter().zip(&self.joint_valid).zip(&self.filled) {
            if let (Some(p), true, false) = (j, valid, filled) {
                sum += p;
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }
}

/// Wall time spent in each pipeline step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepTimings {
    pub undistortion: Duration,
    pub pair_creation: Duration,
    pub pair_filtering: Duration,
    pub triangulate_score: Duration,
    pub grouping: Duration,
    pub triangulate_score_full: Duration,
    pub merge: Duration,
    pub postprocess: Duration,
}

impl StepTimings {
    pub const ROW_NAMES: [&'static str; 8] = [
        "Pose undistortion",
        "Pair creation (1)",
        "Pair filtering (2)",
        "Triangulate and Score (3-7)",
        "Grouping (9)",
        "Triangulate and Score (10)",
        "Merge (11)",
        "Post-process (12)",
    ];

    pub fn rows(&self) -> [Duration; 8] {
        [
            self.undistortion,
            self.pair_creation,
            self.pair_filtering,
            self.triangulate_score,
            self.grouping,
            self.triangulate_score_full,
            self.merge,
            self.postprocess,
        ]
    }

    pub fn total(&self) -> Duration {
        self.rows().iter().sum()
    }
}

/// Pair and proposal counts after each stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrameStats {
    pub pairs_created: usize,
    pub pairs_after_filter: usize,
    pub proposals_kept: usize,
    pub groups: usize,
    pub full_proposals: usize,
    pub persons: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub persons: Vec<Person3D>,
    pub timings: StepTimings,
    pub stats: FrameStats,
}

/// A detection after undistortion: world ray directions per joint.
#[derive(Debug, Clone)]
pub struct PreparedDetection {
    pub pixels: Vec<Vec2>,
    pub confidence: Vec<f64>,
    /// `None` when the joint is below the confidence floor or failed to undistort.
    pub directions: Vec<Option<Vec3>>,
}

#[derive(Debug, Clone)]
pub struct PreparedView<'a> {
    pub id: &'a str,
    pub cam: &'a CameraCalib,
    pub center: Vec3,
    pub detections: Vec<PreparedDetection>,
}

/// Frame detections joined with their cameras and undistorted.
#[derive(Debug, Clone)]
pub struct PreparedFrame<'a> {
    pub views: Vec<PreparedView<'a>>,
}

/// Validates shapes and undistorts every joint of every detection.
pub fn prepare_frame<'a>(
    views: &'a [ViewDetections],
    rig: &'a CameraRig,
    joint_count: usize,
    cfg: &PipelineConfig,
) -> Result<PreparedFrame<'a>, PipelineError> {
    let mut out = Vec::with_capacity(views.len());
    for (vi, view) in views.iter().enumerate() {
        if views[..vi].iter().any(|v| v.view == view.view) {
            return Err(PipelineError::DuplicateView(view.view.clone()));
        }
        let cam = rig
            .get(&view.view)
            .ok_or_else(|| PipelineError::CalibrationMissing(view.view.clone()))?;
        let center = cam.center();
        let mut detections = Vec::with_capacity(view.detections.len());
        for (index, det) in view.detections.iter().enumerate() {
            for got in [det.joints.len(), det.confidence.len()] {
                if got != joint_count {
                    return Err(PipelineError::ShapeMismatch {
                        view: view.view.clone(),
                        index,
                        expected: joint_count,
                        got,
                    });
                }
            }
            if det.confidence.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(PipelineError::InvalidDetection {
                    view: view.view.clone(),
                    index,
                    reason: "confidence outside [0, 1]".into(),
                });
            }
            let directions = det
                .joints
                .iter()
                .zip(&det.confidence)
                .map(|(px, &c)| {
                    if c < cfg.conf_floor || !px.x.is_finite() || !px.y.is_finite() {
                        return None;
                    }
                    geometry::undistort_point(px, cam)
                        .ok()
                        .map(|n| normalized_to_direction(&n, cam))
                })
                .collect();
            detections.push(PreparedDetection {
                pixels: det.joints.clone(),
                confidence: det.confidence.clone(),
                directions,
            });
        }
        out.push(PreparedView {
            id: &view.view,
            cam,
            center,
            detections,
        });
    }
    Ok(PreparedFrame { views: out })
}

/// Step 1: one pair per unordered combination of detections from different views.
pub fn create_pairs(frame: &PreparedFrame<'_>) -> Result<Vec<ViewPair>, PipelineError> {
    let counts: Vec<usize> = frame.views.iter().map(|v| v.detections.len()).collect();
    create_pairs_from_counts(&counts)
}

pub fn create_pairs_from_counts(counts: &[usize]) -> Result<Vec<ViewPair>, PipelineError> {
    if counts.len() < 2 {
        return Err(PipelineError::TooFewViews(counts.len()));
    }
    let mut pairs = Vec::new();
    for view_a in 0..counts.len() {
        for view_b in view_a + 1..counts.len() {
            for idx_a in 0..counts[view_a] {
                for idx_b in 0..counts[view_b] {
                    pairs.push(ViewPair {
                        view_a,
                        idx_a,
                        view_b,
                        idx_b,
                        state: PairState::Candidate,
                    });
                }
            }
        }
    }
    Ok(pairs)
}

/// For every detection, the previous person it reprojects onto, if any.
///
/// Distance is the mean pixel error over core joints valid in both; the nearest
/// person within `prev_match_px` wins, ties going to the lower person index.
pub fn match_detections_to_previous(
    frame: &PreparedFrame<'_>,
    prev_persons: &[Person3D],
    joint_set: &JointSet,
    cfg: &PipelineConfig,
) -> Vec<Vec<Option<usize>>> {
    let core = &joint_set.core_indices;
    let mut projected: Vec<Option<Vec2>> = vec![None; core.len()];
    let mut matches: Vec<Vec<Option<usize>>> = frame
        .views
        .iter()
        .map(|v| vec![None; v.detections.len()])
        .collect();
    for (vi, view) in frame.views.iter().enumerate() {
        let mut best: Vec<Option<(f64, usize)>> = vec![None; view.detections.len()];
        for (pi, person) in prev_persons.iter().enumerate() {
            for (slot, &j) in projected.iter_mut().zip(core) {
                *slot = match (person.joints.get(j), person.joint_valid.get(j)) {
                    (Some(Some(p)), Some(true)) => geometry::project(p, view.cam).ok(),
                    _ => None,
                };
            }
            for (di, det) in view.detections.iter().enumerate() {
                let mut sum = 0.0;
                let mut n = 0usize;
                for (proj, &j) in projected.iter().zip(core) {
                    if let (Some(q), Some(_)) = (proj, det.directions[j]) {
                        sum += (q - det.pixels[j]).norm();
                        n += 1;
                    }
                }
                if n == 0 {
                    continue;
                }
                let dist = sum / n as f64;
                if dist <= cfg.prev_match_px && best[di].is_none_or(|(d, _)| dist < d) {
                    best[di] = Some((dist, pi));
                }
            }
        }
        matches[vi] = best.into_iter().map(|b| b.map(|(_, pi)| pi)).collect();
    }
    matches
}

/// Step 2: keeps a pair when both parts match the same previous person or neither matches.
pub fn filter_pairs_with_previous(
    pairs: &[ViewPair],
    frame: &PreparedFrame<'_>,
    prev_persons: &[Person3D],
    joint_set: &JointSet,
    cfg: &PipelineConfig,
) -> Vec<ViewPair> {
    if prev_persons.is_empty() {
        return pairs.to_vec();
    }
    let matches = match_detections_to_previous(frame, prev_persons, joint_set, cfg);
    pairs
        .iter()
        .map(|p| {
            let keep = matches[p.view_a][p.idx_a] == matches[p.view_b][p.idx_b];
            ViewPair {
                state: if keep {
                    PairState::Candidate
                } else {
                    PairState::FilteredOut
                },
                ..*p
            }
        })
        .collect()
}

/// Steps 3-4: midpoint-triangulates the selected joints of one pair.
pub fn triangulate_pair(
    pair: &ViewPair,
    frame: &PreparedFrame<'_>,
    joint_indices: &[usize],
    joint_count: usize,
) -> Proposal3D {
    let va = &frame.views[pair.view_a];
    let vb = &frame.views[pair.view_b];
    let da = &va.detections[pair.idx_a];
    let db = &vb.detections[pair.idx_b];
    let mut joints = vec![None; joint_count];
    let mut tri_gap = vec![0.0; joint_count];
    for &j in joint_indices {
        if let (Some(ra), Some(rb)) = (da.directions[j], db.directions[j]) {
            if let Ok((p, gap)) = geometry::midpoint_between(&va.center, &ra, &vb.center, &rb) {
                joints[j] = Some(p);
                tri_gap[j] = gap;
            }
        }
    }
    let state = if joints.iter().any(Option::is_some) {
        PairState::Candidate
    } else {
        PairState::Dropped
    };
    Proposal3D {
        pair: ViewPair { state, ..*pair },
        joints,
        tri_gap,
        reproj_err_px: 0.0,
        score: 0.0,
    }
}

/// Step 5: removes joints outside the room, or the whole proposal when its center is outside.
pub fn drop_outside_room(proposal: &mut Proposal3D, room: &RoomBounds, margin_m: f64) {
    let mut center = Vec3::zeros();
    let mut n = 0usize;
    for p in proposal.joints.iter().flatten() {
        center += p;
        n += 1;
    }
    if n == 0 || !in_room(&(center / n as f64), room, margin_m) {
        for j in 0..proposal.joints.len() {
            proposal.remove_joint(j);
        }
        proposal.pair.state = PairState::Dropped;
        return;
    }
    for j in 0..proposal.joints.len() {
        if let Some(p) = proposal.joints[j] {
            if !in_room(&p, room, margin_m) {
                proposal.remove_joint(j);
            }
        }
    }
}

/// Removes both endpoints of every limb whose length is out of range.
pub fn prune_implausible_limbs(proposal: &mut Proposal3D, joint_set: &JointSet) {
    let mut bad = Vec::new();
    for limb in &joint_set.limbs {
        if let (Some(a), Some(b)) = (proposal.joints[limb.a], proposal.joints[limb.b]) {
            if !limb_plausible(&a, &b, limb) {
                bad.push(limb.a);
                bad.push(limb.b);
            }
        }
    }
    for j in bad {
        proposal.remove_joint(j);
    }
}

/// Steps 6-7: limb pruning, reprojection into both source views, and scoring.
pub fn score_proposal(
    mut proposal: Proposal3D,
    frame: &PreparedFrame<'_>,
    joint_set: &JointSet,
    cfg: &PipelineConfig,
) -> Proposal3D {
    prune_implausible_limbs(&mut proposal, joint_set);
    let pair = proposal.pair;
    let va = &frame.views[pair.view_a];
    let vb = &frame.views[pair.view_b];
    let da = &va.detections[pair.idx_a];
    let db = &vb.detections[pair.idx_b];

    let mut weight_sum = 0.0;
    let mut err_sum = 0.0;
    let mut gap_sum = 0.0;
    for j in 0..proposal.joints.len() {
        let Some(p) = proposal.joints[j] else { continue };
        let (Ok(qa), Ok(qb)) = (geometry::project(&p, va.cam), geometry::project(&p, vb.cam)) else {
            proposal.remove_joint(j);
            continue;
        };
        let err = 0.5 * ((qa - da.pixels[j]).norm() + (qb - db.pixels[j]).norm());
        let w = if cfg.use_confidence_weighting {
            da.confidence[j] * db.confidence[j]
        } else {
            1.0
        };
        weight_sum += w;
        err_sum += w * err;
        gap_sum += w * proposal.tri_gap[j];
    }
    if weight_sum > 0.0 {
        proposal.reproj_err_px = err_sum / weight_sum;
        let gap_px = cfg.gap_to_px * gap_sum / weight_sum;
        proposal.score = match cfg.score_mode {
            ScoreMode::Combined => proposal.reproj_err_px + gap_px,
            ScoreMode::TriangulationOnly => gap_px,
            ScoreMode::ReprojectionOnly => proposal.reproj_err_px,
        };
        proposal.pair.state = PairState::Scored;
    } else {
        proposal.reproj_err_px = 0.0;
        proposal.score = 0.0;
        proposal.pair.state = PairState::Dropped;
    }
    proposal
}

/// Step 8: keeps proposals with at least one joint whose score is within `max_reproj_err_px`.
pub fn drop_bad_pairs(proposals: Vec<Proposal3D>, cfg: &PipelineConfig) -> Vec<Proposal3D> {
    proposals
        .into_iter()
        .filter(|p| p.pair.state != PairState::Dropped)
        .filter(|p| p.score <= cfg.max_reproj_err_px && p.present_count() > 0)
        .collect()
}

/// Mean of the present core joints, falling back to all present joints.
pub fn proposal_center(proposal: &Proposal3D, joint_set: &JointSet) -> Option<Vec3> {
    let mean = |iter: &mut dyn Iterator<Item = &Vec3>| {
        let mut sum = Vec3::zeros();
        let mut n = 0usize;
        for p in iter {
            sum += p;
            n += 1;
        }
        (n > 0).then(|| sum / n as f64)
    };
    mean(&mut joint_set.core_indices.iter().filter_map(|&j| proposal.joints[j].as_ref()))
        .or_else(|| mean(&mut proposal.joints.iter().flatten()))
}

/// Connected components of the graph linking items closer than `max_dist`.
///
/// Components are listed by their first member; members keep input order.
pub fn single_linkage(points: &[Vec3], max_dist: f64) -> Vec<Vec<usize>> {
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let max_sq = max_dist * max_dist;
    for i in 0..n {
        for j in i + 1..n {
            if (points[i] - points[j]).norm_squared() <= max_sq {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    let (lo, hi) = if ri < rj { (ri, rj) } else { (rj, ri) };
                    parent[hi] = lo;
                }
            }
        }
    }
    let mut slot_of_root = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot_of_root[r] == usize::MAX {
            slot_of_root[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot_of_root[r]].push(i);
    }
    groups
}

/// Step 9: single-linkage grouping of proposal centers.
pub fn group_proposals(
    proposals: Vec<Proposal3D>,
    joint_set: &JointSet,
    cfg: &PipelineConfig,
) -> Vec<Vec<Proposal3D>> {
    let (proposals, centers): (Vec<_>, Vec<_>) = proposals
        .into_iter()
        .filter_map(|p| proposal_center(&p, joint_set).map(|c| (p, c)))
        .unzip();
    let mut slots: Vec<Option<Proposal3D>> = proposals.into_iter().map(Some).collect();
    single_linkage(&centers, cfg.group_dist_m)
        .into_iter()
        .filter(|members| members.len() >= cfg.min_group_size)
        .map(|members| {
            members
                .into_iter()
                .map(|i| {
                    let mut p = slots[i].take().expect("each proposal is in one group");
                    p.pair.state = PairState::Grouped;
                    p
                })
                .collect()
        })
        .collect()
}

fn triangulate_and_score(
    pair: &ViewPair,
    frame: &PreparedFrame<'_>,
    joint_indices: &[usize],
    joint_set: &JointSet,
    cfg: &PipelineConfig,
) -> Proposal3D {
    let mut proposal = triangulate_pair(pair, frame, joint_indices, joint_set.joint_count());
    if proposal.pair.state == PairState::Dropped {
        return proposal;
    }
    drop_outside_room(&mut proposal, &cfg.room, cfg.room_margin_m);
    if proposal.pair.state == PairState::Dropped {
        return proposal;
    }
    score_proposal(proposal, frame, joint_set, cfg)
}

/// Step 10: re-triangulates every grouped pair over the full joint set and re-applies step 8.
pub fn retriangulate_full(
    groups: Vec<Vec<Proposal3D>>,
    frame: &PreparedFrame<'_>,
    joint_set: &JointSet,
    cfg: &PipelineConfig,
) -> Vec<Vec<Proposal3D>> {
    let all: Vec<usize> = (0..joint_set.joint_count()).collect();
    groups
        .into_iter()
        .filter_map(|group| {
            let full: Vec<Proposal3D> = group
                .iter()
                .map(|p| triangulate_and_score(&p.pair, frame, &all, joint_set, cfg))
                .collect();
            let kept = drop_bad_pairs(full, cfg);
            (kept.len() >= cfg.min_group_size && !kept.is_empty()).then_some(kept)
        })
        .collect()
}

/// Step 11 for one joint: mean, distance rejection, top-k closest, mean again.
///
/// Returns the merged position and how many contributions it averages.
pub fn merge_joint(contributions: &[Vec3], cfg: &PipelineConfig) -> Option<(Vec3, u32)> {
    if contributions.is_empty() {
        return None;
    }
    let mean = contributions.iter().sum::<Vec3>() / contributions.len() as f64;
    let mut ranked: Vec<(f64, usize)> = contributions
        .iter()
        .enumerate()
        .map(|(i, c)| ((c - mean).norm(), i))
        .filter(|(d, _)| !cfg.enable_outlier_reject || *d <= cfg.outlier_dist_m)
        .collect();
    if ranked.is_empty() {
        return None;
    }
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
    ranked.truncate(cfg.merge_top_k);
    let sum: Vec3 = ranked.iter().map(|&(_, i)| contributions[i]).sum();
    Some((sum / ranked.len() as f64, ranked.len() as u32))
}

fn pair_key(pair: &ViewPair, frame: &PreparedFrame<'_>) -> PersonKey {
    let a = (frame.views[pair.view_a].id, pair.idx_a);
    let b = (frame.views[pair.view_b].id, pair.idx_b);
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    PersonKey {
        view_a: a.0.to_string(),
        idx_a: a.1,
        view_b: b.0.to_string(),
        idx_b: b.1,
    }
}

/// Step 11: merges a group's proposals into one person.
pub fn merge_group(group: &[Proposal3D], cfg: &PipelineConfig) -> Person3D {
    let n = group.first().map_or(0, |p| p.joints.len());
    let mut joints = vec![None; n];
    let mut support = vec![0u32; n];
    let mut contributions = Vec::with_capacity(group.len());
    for j in 0..n {
        contributions.clear();
        contributions.extend(group.iter().filter_map(|p| p.joints[j]));
        if let Some((pos, count)) = merge_joint(&contributions, cfg) {
            joints[j] = Some(pos);
            support[j] = count;
        }
    }
    Person3D {
        joint_valid: joints.iter().map(Option::is_some).collect(),
        joint_support: support,
        filled: vec![false; n],
        joints,
        group_size: group.len(),
        track_id: None,
        key: PersonKey::default(),
    }
}

/// Largest axis-aligned extent of the valid joints.
pub fn bounding_box_size(person: &Person3D) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in person.joints.iter().flatten() {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let ext = hi - lo;
    if ext.x.is_finite() {
        ext.max()
    } else {
        0.0
    }
}

/// Step 12: drops implausible persons and fills missing joints from neighbors.
pub fn postprocess_persons(
    persons: Vec<Person3D>,
    cfg: &PipelineConfig,
    joint_set: &JointSet,
) -> Vec<Person3D> {
    persons
        .into_iter()
        .filter(|p| p.valid_count() >= cfg.min_valid_joints)
        .filter(|p| {
            let size = bounding_box_size(p);
            size >= cfg.min_height_m && size <= cfg.max_height_m
        })
        .filter(|p| {
            p.centroid()
                .is_some_and(|c| in_room(&c, &cfg.room, cfg.room_margin_m))
        })
        .map(|mut p| {
            let original = p.joints.clone();
            for j in 0..original.len() {
                if original[j].is_some() {
                    continue;
                }
                let source = joint_set.neighbors[j].iter().find_map(|&k| original[k]);
                if let Some(pos) = source {
                    p.joints[j] = Some(pos);
                    p.joint_valid[j] = true;
                    p.filled[j] = true;
                }
            }
            p
        })
        .collect()
}

/// The full single-frame pipeline. Holds no state between frames.
#[derive(Debug)]
pub struct Pipeline {
    pub joint_set: JointSet,
    pub config: PipelineConfig,
    pool: Option<rayon::ThreadPool>,
}

impl Pipeline {
    pub fn new(joint_set: JointSet, config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        joint_set
            .validate()
            .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        Ok(Pipeline {
            joint_set,
            config,
            pool: None,
        })
    }

    /// Spreads per-pair work over `threads` workers. Output does not depend on the count.
    pub fn with_threads(mut self, threads: usize) -> Self {
        self.pool = if threads > 1 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .ok()
        } else {
            None
        };
        self
    }

    fn map_pairs<T, F>(&self, pairs: &[ViewPair], f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&ViewPair) -> T + Sync + Send,
    {
        match &self.pool {
            Some(pool) if pairs.len() >= 16 => pool.install(|| pairs.par_iter().map(&f).collect()),
            _ => pairs.iter().map(f).collect(),
        }
    }

    /// Runs steps 1-12 on one frame.
    pub fn process_frame(
        &self,
        views: &[ViewDetections],
        rig: &CameraRig,
        prev_persons: &[Person3D],
    ) -> Result<FrameResult, PipelineError> {
        let cfg = &self.config;
        let set = &self.joint_set;
        let mut timings = StepTimings::default();
        let mut stats = FrameStats::default();
        if views.len() < 2 {
            return Err(PipelineError::TooFewViews(views.len()));
        }

        let t = Instant::now();
        let frame = prepare_frame(views, rig, set.joint_count(), cfg)?;
        timings.undistortion = t.elapsed();

        let t = Instant::now();
        let pairs = create_pairs(&frame)?;
        stats.pairs_created = pairs.len();
        timings.pair_creation = t.elapsed();

        let t = Instant::now();
        let pairs: Vec<ViewPair> = if cfg.enable_pair_prefilter && !prev_persons.is_empty() {
            filter_pairs_with_previous(&pairs, &frame, prev_persons, set, cfg)
                .into_iter()
                .filter(|p| p.state == PairState::Candidate)
                .collect()
        } else {
            pairs
        };
        stats.pairs_after_filter = pairs.len();
        timings.pair_filtering = t.elapsed();

        let t = Instant::now();
        let proposals = self.map_pairs(&pairs, |pair| {
            triangulate_and_score(pair, &frame, &set.core_indices, set, cfg)
        });
        let proposals = drop_bad_pairs(proposals, cfg);
        stats.proposals_kept = proposals.len();
        timings.triangulate_score = t.elapsed();

        let t = Instant::now();
        let groups = group_proposals(proposals, set, cfg);
        stats.groups = groups.len();
        timings.grouping = t.elapsed();

        let t = Instant::now();
        let groups = match &self.pool {
            Some(pool) if groups.len() > 1 => pool.install(|| {
                groups
                    .into_par_iter()
                    .map(|g| retriangulate_full(vec![g], &frame, set, cfg))
                    .flatten()
                    .collect()
            }),
            _ => retriangulate_full(groups, &frame, set, cfg),
        };
        stats.full_proposals = groups.iter().map(Vec::len).sum();
        timings.triangulate_score_full = t.elapsed();

        let t = Instant::now();
        let persons: Vec<Person3D> = groups
            .iter()
            .map(|g| {
                let mut person = merge_group(g, cfg);
                let best = g
                    .iter()
                    .min_by(|a, b| {
                        a.score
                            .partial_cmp(&b.score)
                            .unwrap_or(Ordering::Equal)
                            .then_with(|| pair_key(&a.pair, &frame).cmp(&pair_key(&b.pair, &frame)))
                    })
                    .expect("groups are non-empty");
                person.key = pair_key(&best.pair, &frame);
                person
            })
            .collect();
        timings.merge = t.elapsed();

        let t = Instant::now();
        let mut persons = postprocess_persons(persons, cfg, set);
        persons.sort_by(|a, b| a.key.cmp(&b.key));
        stats.persons = persons.len();
        timings.postprocess = t.elapsed();

        Ok(FrameResult {
            persons,
            timings,
            stats,
        })
    }
}
