//! Synthetic multi-camera scenes with known ground truth.
//!
//! Generates anthropometric skeletons, camera rings, exact and corrupted 2D
//! detections, and a least-squares reference triangulation that uses the true
//! detection-to-person assignment.

use std::collections::HashMap;

use nalgebra::{DMatrix, Matrix3, Rotation3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, CameraCalib, Distortion, Vec2, Vec3};
use crate::metrics::Pose;
use crate::pipeline::{CameraRig, Detection2D, PipelineConfig, ViewDetections};
use crate::skeleton::{
    face_joint_name, hand_joint_name, hand_parent, JointSet, RoomBounds, BODY20_JOINTS,
    FACE_JOINT_COUNT, HAND_JOINT_COUNT,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("infeasible scene: {0}")]
    InfeasibleSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    Static,
    /// Constant velocity in a random horizontal direction, reflecting at the spawn area edges.
    Linear { speed_mps: f64 },
    /// Each frame moves a fixed distance in a random horizontal direction.
    RandomWalk { step_m: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RigLayout {
    /// All cameras on a horizontal ring at one height.
    Ring,
    /// Ring with alternating low and high cameras, like a capture dome.
    Dome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub n_persons: usize,
    pub n_cameras: usize,
    pub room: RoomBounds,
    pub joint_set: JointSet,
    pub motion: Motion,
    pub seed: u64,
    pub n_frames: usize,
    /// Minimum horizontal distance between person roots at spawn.
    pub min_separation_m: f64,
    /// Keeps spawn positions this far from the walls.
    pub wall_margin_m: f64,
    pub frame_dt_s: f64,
    pub layout: RigLayout,
    pub camera_height_m: f64,
    pub focal_px: f64,
    pub image_size: (u32, u32),
    pub lens: Distortion,
}

impl SceneSpec {
    /// Shelf-like defaults: 5 x 5 x 3 m room, 1100 px focal length at 1920 x 1080.
    pub fn new(n_persons: usize, n_cameras: usize, joint_set: JointSet, seed: u64) -> Self {
        SceneSpec {
            n_persons,
            n_cameras,
            room: RoomBounds {
                min_corner: [-2.5, -2.5, 0.0],
                max_corner: [2.5, 2.5, 3.0],
            },
            joint_set,
            motion: Motion::Static,
            seed,
            n_frames: 1,
            min_separation_m: 1.0,
            wall_margin_m: 0.5,
            frame_dt_s: 0.04,
            layout: RigLayout::Ring,
            camera_height_m: 2.2,
            focal_px: 1100.0,
            image_size: (1920, 1080),
            lens: Distortion::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// Ground-truth poses per frame, one entry per person in person order.
    pub frames: Vec<Vec<Pose>>,
    pub rig: CameraRig,
    pub room: RoomBounds,
    pub frame_dt_s: f64,
}

/// How reported confidence reflects corruption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfidenceModel {
    pub base: f64,
    /// Confidence lost per pixel of applied noise.
    pub noise_slope: f64,
    pub min: f64,
    pub swapped: f64,
    pub false_positive: f64,
}

impl Default for ConfidenceModel {
    fn default() -> Self {
        ConfidenceModel {
            base: 0.9,
            noise_slope: 0.02,
            min: 0.35,
            swapped: 0.5,
            false_positive: 0.6,
        }
    }
}

/// Corruptions applied in order: truncation, occlusion, swap, noise, false positives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionSpec {
    pub pixel_noise_sigma_px: f64,
    /// Per-joint probability of being hidden.
    pub occlusion_rate: f64,
    /// Hide joints that project outside the image.
    pub truncation: bool,
    /// Per-view probability of one extra detection.
    pub false_positive_rate: f64,
    /// Per-detection probability of exchanging one joint with the nearest other person.
    pub swap_rate: f64,
    pub confidence: ConfidenceModel,
    pub seed: u64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        CorruptionSpec {
            pixel_noise_sigma_px: 0.0,
            occlusion_rate: 0.0,
            truncation: false,
            false_positive_rate: 0.0,
            swap_rate: 0.0,
            confidence: ConfidenceModel::default(),
            seed: 0,
        }
    }
}

impl CorruptionSpec {
    pub fn clean() -> Self {
        Self::default()
    }

    pub fn noisy(sigma_px: f64, seed: u64) -> Self {
        CorruptionSpec {
            pixel_noise_sigma_px: sigma_px,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let rates = [
            ("occlusion_rate", self.occlusion_rate),
            ("false_positive_rate", self.false_positive_rate),
            ("swap_rate", self.swap_rate),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(SynthError::InfeasibleSpec(format!("{name} must be in [0, 1]")));
            }
        }
        if !(self.pixel_noise_sigma_px >= 0.0) {
            return Err(SynthError::InfeasibleSpec("noise sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// Which ground-truth person each detection came from; `None` marks false positives.
pub type Assignment = Vec<Vec<Option<usize>>>;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDetections {
    pub frames: Vec<Vec<ViewDetections>>,
    /// Per frame, per view, per detection.
    pub assignment: Vec<Assignment>,
}

/// Mixes a seed with a stream tag and index (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit(pitch: f64, roll: f64) -> Vec3 {
    // Rotates straight down by `pitch` toward +x and `roll` toward +y.
    Vec3::new(pitch.sin() * roll.cos(), roll.sin(), -pitch.cos() * roll.cos()).normalize()
}

/// Bends `dir` by `angle` toward `toward` (projected orthogonal to `dir`).
fn bend(dir: &Vec3, toward: &Vec3, angle: f64) -> Vec3 {
    let ortho = toward - dir * dir.dot(toward);
    let ortho = if ortho.norm() < 1e-9 {
        let alt = if dir.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        (alt - dir * dir.dot(&alt)).normalize()
    } else {
        ortho.normalize()
    };
    (dir * angle.cos() + ortho * angle.sin()).normalize()
}

/// A full 136-joint skeleton in the person's local frame: x forward, y left, z up,
/// root between the hips at the origin.
pub fn sample_local_skeleton(rng: &mut impl Rng) -> HashMap<String, Vec3> {
    let s: f64 = rng.random_range(0.9..1.1);
    let mut j: HashMap<String, Vec3> = HashMap::new();
    let hip_mid = Vec3::zeros();
    j.insert("hip_middle".into(), hip_mid);
    let lean = unit(rng.random_range(-0.3..0.2), rng.random_range(-0.1..0.1));
    let up = -lean;
    let shoulder_mid = hip_mid + up * 0.52 * s;
    j.insert("shoulder_middle".into(), shoulder_mid);
    let head = shoulder_mid + up * 0.25 * s;
    j.insert("head".into(), head);
    let nose = head + Vec3::new(0.09, 0.0, -0.03) * s;
    j.insert("nose".into(), nose);

    for (side, sign) in [("left", 1.0), ("right", -1.0)] {
        let eye = nose + Vec3::new(-0.02, 0.035 * sign, 0.04) * s;
        j.insert(format!("{side}_eye"), eye);
        j.insert(format!("{side}_ear"), eye + Vec3::new(-0.07, 0.04 * sign, -0.01) * s);

        let hip = hip_mid + Vec3::new(0.0, 0.10 * sign, 0.0) * s;
        let thigh_pitch = rng.random_range(-0.5..0.4);
        let thigh = unit(thigh_pitch, sign * rng.random_range(-0.05..0.15));
        let knee = hip + thigh * 0.44 * s;
        let shin = unit(thigh_pitch - rng.random_range(0.0..0.9), sign * rng.random_range(-0.05..0.1));
        let ankle = knee + shin * 0.42 * s;
        j.insert(format!("{side}_hip"), hip);
        j.insert(format!("{side}_knee"), knee);
        j.insert(format!("{side}_ankle"), ankle);
        j.insert(format!("{side}_big_toe"), ankle + Vec3::new(0.17, 0.03 * sign, -0.06) * s);
        j.insert(format!("{side}_small_toe"), ankle + Vec3::new(0.15, 0.07 * sign, -0.06) * s);
        j.insert(format!("{side}_heel"), ankle + Vec3::new(-0.05, 0.0, -0.06) * s);

        let shoulder = shoulder_mid + Vec3::new(0.0, 0.19 * sign, 0.0) * s;
        let upper = unit(rng.random_range(-0.6..1.6), sign * rng.random_range(0.0..1.2));
        let elbow = shoulder + upper * 0.30 * s;
        let fore = bend(&upper, &Vec3::new(1.0, 0.0, 0.3), rng.random_range(0.0..1.8));
        let wrist = elbow + fore * 0.27 * s;
        j.insert(format!("{side}_shoulder"), shoulder);
        j.insert(format!("{side}_elbow"), elbow);
        j.insert(format!("{side}_wrist"), wrist);

        let palm = wrist + fore * 0.02 * s;
        let lateral = fore.cross(&Vec3::z());
        let lateral = if lateral.norm() < 1e-6 { Vec3::y() } else { lateral.normalize() };
        let curl = rng.random_range(0.0..0.8);
        let mut hand = vec![Vec3::zeros(); HAND_JOINT_COUNT];
        hand[0] = palm;
        for finger in 0..5 {
            let spread = (finger as f64 - 2.0) * 0.25 * sign;
            let mut dir = (fore + lateral * spread).normalize();
            for k in 0..4 {
                let idx = 1 + 4 * finger + k;
                let parent = hand_parent(idx).unwrap();
                let len = if k == 0 { 0.06 } else { 0.03 };
                hand[idx] = hand[parent] + dir * len * s;
                dir = bend(&dir, &Vec3::new(0.0, 0.0, -1.0), curl * 0.3);
            }
        }
        for (i, p) in hand.into_iter().enumerate() {
            j.insert(hand_joint_name(side, i), p);
        }
    }
    for i in 0..FACE_JOINT_COUNT {
        let a = -1.2 + 2.4 * i as f64 / (FACE_JOINT_COUNT - 1) as f64;
        let row = (i % 17) as f64 / 17.0;
        let p = head + Vec3::new(0.08 * a.cos(), 0.07 * a.sin(), -0.07 + 0.12 * row) * s;
        j.insert(face_joint_name(i), p);
    }
    j
}

/// Places a local skeleton: yaw about z, then translate so the lower ankle sits above the floor.
fn place(local: &HashMap<String, Vec3>, yaw: f64, x: f64, y: f64, floor: f64) -> HashMap<String, Vec3> {
    let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), yaw);
    let lowest = ["left_ankle", "right_ankle"]
        .iter()
        .map(|n| local[*n].z)
        .fold(f64::INFINITY, f64::min);
    let lift = floor + 0.08 - lowest;
    local
        .iter()
        .map(|(k, p)| {
            let q = rot * p;
            (k.clone(), Vec3::new(q.x + x, q.y + y, q.z + lift))
        })
        .collect()
}

fn select(named: &HashMap<String, Vec3>, set: &JointSet) -> Result<Pose, SynthError> {
    set.joint_names
        .iter()
        .map(|n| {
            named
                .get(n)
                .map(|p| Some(*p))
                .ok_or_else(|| SynthError::InfeasibleSpec(format!("generator has no joint '{n}'")))
        })
        .collect()
}

/// Cameras around the room looking at its center at 1 m height.
pub fn make_rig(spec: &SceneSpec) -> CameraRig {
    let center = spec.room.center();
    let ext = spec.room.extent();
    let radius = 0.5 * (ext.x * ext.x + ext.y * ext.y).sqrt() + 2.0;
    let target = Vec3::new(center.x, center.y, 1.0);
    let (w, h) = spec.image_size;
    let cameras = (0..spec.n_cameras)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / spec.n_cameras as f64 + 0.3;
            let height = match spec.layout {
                RigLayout::Ring => spec.camera_height_m,
                RigLayout::Dome => {
                    if i % 2 == 0 {
                        spec.camera_height_m
                    } else {
                        spec.camera_height_m - 1.0
                    }
                }
            };
            let eye = Vec3::new(center.x + radius * a.cos(), center.y + radius * a.sin(), height);
            let mut cam = CameraCalib::look_at(
                format!("cam{i:02}"),
                eye,
                target,
                Vec3::z(),
                (spec.focal_px, spec.focal_px, w as f64 / 2.0, h as f64 / 2.0),
                (w, h),
            );
            cam.distortion = spec.lens;
            cam
        })
        .collect();
    CameraRig::new(cameras)
}

/// Generates ground-truth poses for every frame plus the camera rig.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene, SynthError> {
    if spec.n_cameras < 2 {
        return Err(SynthError::InfeasibleSpec("need at least two cameras".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 1, 0));
    let lo = Vec2::new(
        spec.room.min_corner[0] + spec.wall_margin_m,
        spec.room.min_corner[1] + spec.wall_margin_m,
    );
    let hi = Vec2::new(
        spec.room.max_corner[0] - spec.wall_margin_m,
        spec.room.max_corner[1] - spec.wall_margin_m,
    );
    if !(lo.x < hi.x && lo.y < hi.y) {
        return Err(SynthError::InfeasibleSpec("room too small for wall margin".into()));
    }

    let mut roots: Vec<Vec2> = Vec::new();
    let mut attempts = 0;
    while roots.len() < spec.n_persons {
        attempts += 1;
        if attempts > 20_000 {
            return Err(SynthError::InfeasibleSpec(format!(
                "cannot place {} persons {} m apart",
                spec.n_persons, spec.min_separation_m
            )));
        }
        let c = Vec2::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        if roots.iter().all(|r| (r - c).norm() >= spec.min_separation_m) {
            roots.push(c);
        }
    }
    let people: Vec<(HashMap<String, Vec3>, f64)> = (0..spec.n_persons)
        .map(|_| {
            let local = sample_local_skeleton(&mut rng);
            (local, rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let mut velocity: Vec<Vec2> = (0..spec.n_persons)
        .map(|_| {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            Vec2::new(a.cos(), a.sin())
        })
        .collect();

    let floor = spec.room.min_corner[2];
    let mut frames = Vec::with_capacity(spec.n_frames);
    let mut pos = roots;
    for frame in 0..spec.n_frames {
        if frame > 0 {
            let mut step_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 2, frame as u64));
            for (p, v) in pos.iter_mut().zip(velocity.iter_mut()) {
                let delta = match spec.motion {
                    Motion::Static => Vec2::zeros(),
                    Motion::Linear { speed_mps } => *v * speed_mps * spec.frame_dt_s,
                    Motion::RandomWalk { step_m } => {
                        let a: f64 = step_rng.random_range(0.0..std::f64::consts::TAU);
                        Vec2::new(a.cos(), a.sin()) * step_m
                    }
                };
                let mut next = *p + delta;
                for k in 0..2 {
                    if next[k] < lo[k] || next[k] > hi[k] {
                        v[k] = -v[k];
                        next[k] = next[k].clamp(lo[k], hi[k]);
                    }
                }
                *p = next;
            }
        }
        let poses = people
            .iter()
            .zip(&pos)
            .map(|((local, yaw), root)| select(&place(local, *yaw, root.x, root.y, floor), &spec.joint_set))
            .collect::<Result<Vec<_>, _>>()?;
        frames.push(poses);
    }
    Ok(Scene {
        frames,
        rig: make_rig(spec),
        room: spec.room,
        frame_dt_s: spec.frame_dt_s,
    })
}

/// Exact projection of one pose; joints behind the camera get `None`.
pub fn project_pose(pose: &Pose, cam: &CameraCalib) -> Vec<Option<Vec2>> {
    pose.iter()
        .map(|j| j.and_then(|p| geometry::project(&p, cam).ok()))
        .collect()
}

fn pixel_centroid(det: &Detection2D) -> Vec2 {
    let mut sum = Vec2::zeros();
    let mut n = 0usize;
    for (p, c) in det.joints.iter().zip(&det.confidence) {
        if *c > 0.0 {
            sum += p;
            n += 1;
        }
    }
    if n == 0 {
        Vec2::repeat(f64::INFINITY)
    } else {
        sum / n as f64
    }
}

/// A random person somewhere in the room, for false positives.
fn random_person(rng: &mut ChaCha8Rng, room: &RoomBounds, joint_count_names: &[String]) -> Pose {
    let local = sample_local_skeleton(rng);
    let x = rng.random_range(room.min_corner[0]..room.max_corner[0]);
    let y = rng.random_range(room.min_corner[1]..room.max_corner[1]);
    let yaw = rng.random_range(0.0..std::f64::consts::TAU);
    let named = place(&local, yaw, x, y, room.min_corner[2]);
    joint_count_names.iter().map(|n| named.get(n).copied()).collect()
}

/// Projects every frame into every view and applies the corruptions.
pub fn project_scene(
    scene: &Scene,
    joint_set: &JointSet,
    corruption: &CorruptionSpec,
) -> Result<SynthDetections, SynthError> {
    corruption.validate()?;
    let conf = &corruption.confidence;
    let noise = Normal::new(0.0, corruption.pixel_noise_sigma_px.max(0.0))
        .map_err(|e| SynthError::InfeasibleSpec(e.to_string()))?;
    let mut frames = Vec::with_capacity(scene.frames.len());
    let mut assignment = Vec::with_capacity(scene.frames.len());
    for (fi, poses) in scene.frames.iter().enumerate() {
        let mut views = Vec::with_capacity(scene.rig.cameras.len());
        let mut frame_assign = Vec::with_capacity(scene.rig.cameras.len());
        for (vi, cam) in scene.rig.cameras.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                corruption.seed,
                3,
                (fi as u64) << 16 | vi as u64,
            ));
            let mut dets: Vec<Detection2D> = poses
                .iter()
                .map(|pose| {
                    let projected = project_pose(pose, cam);
                    let mut joints = Vec::with_capacity(projected.len());
                    let mut confidence = Vec::with_capacity(projected.len());
                    for p in projected {
                        match p {
                            Some(px) if !corruption.truncation || cam.contains_pixel(&px) => {
                                joints.push(px);
                                confidence.push(conf.base);
                            }
                            Some(px) => {
                                joints.push(px);
                                confidence.push(0.0);
                            }
                            None => {
                                joints.push(Vec2::zeros());
                                confidence.push(0.0);
                            }
                        }
                    }
                    Detection2D { joints, confidence }
                })
                .collect();

            if corruption.occlusion_rate > 0.0 {
                for det in &mut dets {
                    for c in &mut det.confidence {
                        if rng.random_bool(corruption.occlusion_rate) {
                            *c = 0.0;
                        }
                    }
                }
            }

            if corruption.swap_rate > 0.0 && dets.len() > 1 {
                let centroids: Vec<Vec2> = dets.iter().map(pixel_centroid).collect();
                for i in 0..dets.len() {
                    if !rng.random_bool(corruption.swap_rate) {
                        continue;
                    }
                    let other = (0..dets.len())
                        .filter(|&k| k != i)
                        .min_by(|&a, &b| {
                            let da = (centroids[a] - centroids[i]).norm();
                            let db = (centroids[b] - centroids[i]).norm();
                            da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
                        })
                        .expect("at least two detections");
                    let j = rng.random_range(0..joint_set.joint_count());
                    if dets[i].confidence[j] > 0.0 && dets[other].confidence[j] > 0.0 {
                        let (pi, po) = (dets[i].joints[j], dets[other].joints[j]);
                        dets[i].joints[j] = po;
                        dets[other].joints[j] = pi;
                        dets[i].confidence[j] = conf.swapped;
                        dets[other].confidence[j] = conf.swapped;
                    }
                }
            }

            if corruption.pixel_noise_sigma_px > 0.0 {
                for det in &mut dets {
                    for (p, c) in det.joints.iter_mut().zip(det.confidence.iter_mut()) {
                        if *c <= 0.0 {
                            continue;
                        }
                        let d = Vec2::new(noise.sample(&mut rng), noise.sample(&mut rng));
                        *p += d;
                        *c = (*c - conf.noise_slope * d.norm()).clamp(conf.min, 1.0);
                    }
                }
            }

            let mut who: Vec<Option<usize>> = (0..dets.len()).map(Some).collect();
            if corruption.false_positive_rate > 0.0 && rng.random_bool(corruption.false_positive_rate) {
                let pose = random_person(&mut rng, &scene.room, &joint_set.joint_names);
                let projected = project_pose(&pose, cam);
                let det = Detection2D {
                    joints: projected.iter().map(|p| p.unwrap_or_else(Vec2::zeros)).collect(),
                    confidence: projected
                        .iter()
                        .map(|p| match p {
                            Some(px) if !corruption.truncation || cam.contains_pixel(px) => {
                                conf.false_positive
                            }
                            _ => 0.0,
                        })
                        .collect(),
                };
                dets.push(det);
                who.push(None);
            }

            // Detectors report people in no particular order.
            let mut order: Vec<usize> = (0..dets.len()).collect();
            order.shuffle(&mut rng);
            let mut slots: Vec<Option<Detection2D>> = dets.into_iter().map(Some).collect();
            let detections: Vec<Detection2D> = order.iter().map(|&k| slots[k].take().unwrap()).collect();
            frame_assign.push(order.iter().map(|&k| who[k]).collect());
            views.push(ViewDetections {
                view: cam.id.clone(),
                detections,
            });
        }
        frames.push(views);
        assignment.push(frame_assign);
    }
    Ok(SynthDetections { frames, assignment })
}

/// Linear (DLT) triangulation of one point from undistorted normalized observations.
pub fn dlt_triangulate(observations: &[(Vec2, &CameraCalib)]) -> Option<Vec3> {
    if observations.len() < 2 {
        return None;
    }
    let mut a = DMatrix::<f64>::zeros(2 * observations.len(), 4);
    for (k, (n, cam)) in observations.iter().enumerate() {
        let r: &Matrix3<f64> = &cam.rotation;
        let t = &cam.translation;
        for (row, coord, axis) in [(2 * k, n.x, 0usize), (2 * k + 1, n.y, 1usize)] {
            for c in 0..3 {
                a[(row, c)] = coord * r[(2, c)] - r[(axis, c)];
            }
            a[(row, 3)] = coord * t[2] - t[axis];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (min_idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.partial_cmp(y.1).unwrap_or(std::cmp::Ordering::Equal))?;
    let h = v_t.row(min_idx);
    if h[3].abs() < 1e-12 {
        return None;
    }
    Some(Vec3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]))
}

/// Least-squares reconstruction of every ground-truth person using the true assignment.
///
/// Each joint uses every view whose assigned detection reports it above `conf_floor`.
pub fn oracle_triangulate(
    views: &[ViewDetections],
    rig: &CameraRig,
    assignment: &Assignment,
    n_persons: usize,
    joint_count: usize,
    conf_floor: f64,
) -> Vec<Pose> {
    let mut obs: Vec<Vec<Vec<(Vec2, &CameraCalib)>>> = vec![vec![Vec::new(); joint_count]; n_persons];
    for (view, who) in views.iter().zip(assignment) {
        let Some(cam) = rig.get(&view.view) else { continue };
        for (det, person) in view.detections.iter().zip(who) {
            let Some(person) = *person else { continue };
            for j in 0..joint_count {
                if det.confidence[j] < conf_floor || det.confidence[j] <= 0.0 {
                    continue;
                }
                if let Ok(n) = geometry::undistort_point(&det.joints[j], cam) {
                    obs[person][j].push((n, cam));
                }
            }
        }
    }
    obs.iter()
        .map(|joints| joints.iter().map(|o| dlt_triangulate(o)).collect())
        .collect()
}

/// Mean per-joint error in mm over all persons and joints present in both.
pub fn mpjpe_mm(gt: &[Pose], pred: &[Pose]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (g, p) in gt.iter().zip(pred) {
        for (a, b) in g.iter().zip(p) {
            if let (Some(a), Some(b)) = (a, b) {
                sum += (a - b).norm() * 1000.0;
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Number of cameras in which each joint of each person projects inside the image.
pub fn visibility_counts(pose: &Pose, rig: &CameraRig) -> Vec<usize> {
    let mut counts = vec![0; pose.len()];
    for cam in &rig.cameras {
        for (k, p) in project_pose(pose, cam).into_iter().enumerate() {
            if p.is_some_and(|px| cam.contains_pixel(&px)) {
                counts[k] += 1;
            }
        }
    }
    counts
}

/// Names of the joints the generator can produce.
pub fn generated_joint_names() -> Vec<String> {
    let mut names: Vec<String> = BODY20_JOINTS.iter().map(|s| s.to_string()).collect();
    names.extend(sample_local_skeleton(&mut ChaCha8Rng::seed_from_u64(0)).into_keys());
    names.sort();
    names.dedup();
    names
}

/// A generated scene together with its corrupted detections.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub spec: SceneSpec,
    pub scene: Scene,
    pub detections: SynthDetections,
}

pub fn build_fixture(spec: &SceneSpec, corruption: &CorruptionSpec) -> Result<Fixture, SynthError> {
    let scene = generate_scene(spec)?;
    let detections = project_scene(&scene, &spec.joint_set, corruption)?;
    Ok(Fixture {
        spec: spec.clone(),
        scene,
        detections,
    })
}

/// Default pipeline settings with the room set to the scene's room.
pub fn pipeline_config_for(scene: &Scene) -> PipelineConfig {
    PipelineConfig {
        room: scene.room,
        ..PipelineConfig::default()
    }
}
