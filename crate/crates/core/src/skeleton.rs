//! Joint sets, limb topology, and anatomical plausibility checks.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkeletonError {
    #[error("unknown joint set '{0}'")]
    UnknownJointSet(String),
    #[error("invalid joint set '{name}': {reason}")]
    Invalid { name: String, reason: String },
    #[error("invalid room bounds: min {min:?} must be below max {max:?} on every axis")]
    InvalidRoom { min: [f64; 3], max: [f64; 3] },
}

/// The 12 joints used for cross-view association, in canonical order.
pub const CORE_JOINTS: [&str; 12] = [
    "left_shoulder",
    "right_shoulder",
    "left_hip",
    "right_hip",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

/// COCO-17 keypoints followed by mid-hip, neck, and head center.
pub const BODY20_JOINTS: [&str; 20] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
    "hip_middle",
    "shoulder_middle",
    "head",
];

pub const FOOT_JOINTS: [&str; 6] = [
    "left_big_toe",
    "left_small_toe",
    "left_heel",
    "right_big_toe",
    "right_small_toe",
    "right_heel",
];

pub const FACE_JOINT_COUNT: usize = 68;
pub const HAND_JOINT_COUNT: usize = 21;

/// A bone with admissible length range in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limb {
    pub a: usize,
    pub b: usize,
    pub min_len_m: f64,
    pub max_len_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSet {
    pub name: String,
    pub joint_names: Vec<String>,
    /// Index of each [`CORE_JOINTS`] entry, in that order.
    pub core_indices: Vec<usize>,
    pub limbs: Vec<Limb>,
    /// Fallback neighbors per joint: skeletal parent first, then children.
    pub neighbors: Vec<Vec<usize>>,
}

impl JointSet {
    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    pub fn validate(&self) -> Result<(), SkeletonError> {
        let fail = |reason: String| SkeletonError::Invalid {
            name: self.name.clone(),
            reason,
        };
        let n = self.joint_count();
        if n == 0 {
            return Err(fail("no joints".into()));
        }
        let mut seen = HashMap::new();
        for (i, name) in self.joint_names.iter().enumerate() {
            if let Some(prev) = seen.insert(name.as_str(), i) {
                return Err(fail(format!("duplicate joint '{name}' at {prev} and {i}")));
            }
        }
        if self.core_indices.len() != CORE_JOINTS.len() {
            return Err(fail(format!(
                "expected {} core joints, got {}",
                CORE_JOINTS.len(),
                self.core_indices.len()
            )));
        }
        for (&idx, expected) in self.core_indices.iter().zip(CORE_JOINTS) {
            match self.joint_names.get(idx) {
                Some(name) if name == expected => {}
                _ => return Err(fail(format!("core joint '{expected}' not at index {idx}"))),
            }
        }
        for limb in &self.limbs {
            if limb.a >= n || limb.b >= n || limb.a == limb.b {
                return Err(fail(format!("limb ({}, {}) out of range", limb.a, limb.b)));
            }
            if !(limb.min_len_m >= 0.0 && limb.min_len_m < limb.max_len_m) {
                return Err(fail(format!(
                    "limb ({}, {}) has bad bounds [{}, {}]",
                    limb.a, limb.b, limb.min_len_m, limb.max_len_m
                )));
            }
        }
        if self.neighbors.len() != n {
            return Err(fail("neighbor map must cover every joint".into()));
        }
        for (i, list) in self.neighbors.iter().enumerate() {
            if list.is_empty() {
                return Err(fail(format!("joint '{}' has no neighbors", self.joint_names[i])));
            }
            if list.iter().any(|&j| j >= n || j == i) {
                return Err(fail(format!("joint '{}' has an invalid neighbor", self.joint_names[i])));
            }
        }
        Ok(())
    }

    /// Maps each joint of `subset` to its index here, by name.
    pub fn index_map_from(&self, subset: &JointSet) -> Result<Vec<usize>, SkeletonError> {
        subset
            .joint_names
            .iter()
            .map(|name| {
                self.index_of(name).ok_or_else(|| SkeletonError::Invalid {
                    name: self.name.clone(),
                    reason: format!("missing joint '{name}' required by '{}'", subset.name),
                })
            })
            .collect()
    }

    /// Builds a joint set from names, a parent table, and named limbs.
    ///
    /// Neighbor lists are derived from the parent table.
    fn from_tree(
        name: &str,
        joint_names: Vec<String>,
        parents: &[(&str, &str)],
        limbs: &[(&str, &str, f64, f64)],
    ) -> JointSet {
        let index: HashMap<&str, usize> = joint_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let idx = |n: &str| *index.get(n).unwrap_or_else(|| panic!("joint '{n}' not in '{name}'"));
        let mut parent = vec![None; joint_names.len()];
        for (child, par) in parents {
            parent[idx(child)] = Some(idx(par));
        }
        let mut neighbors: Vec<Vec<usize>> = parent.iter().map(|p| p.iter().copied().collect()).collect();
        for (child, par) in parent.iter().enumerate() {
            if let Some(par) = par {
                neighbors[*par].push(child);
            }
        }
        let limbs = limbs
            .iter()
            .map(|&(a, b, lo, hi)| Limb {
                a: idx(a),
                b: idx(b),
                min_len_m: lo,
                max_len_m: hi,
            })
            .collect();
        let core_indices = CORE_JOINTS.iter().map(|n| idx(n)).collect();
        JointSet {
            name: name.to_string(),
            joint_names,
            core_indices,
            limbs,
            neighbors,
        }
    }
}

/// Names of the built-in joint sets.
pub const BUILTIN_JOINT_SETS: [&str; 4] = ["core12", "body20", "wholebody136", "eval13"];

// Generous anthropometric ranges; they only need to catch gross errors.
const LIMB_UPPER_ARM: (f64, f64) = (0.15, 0.50);
const LIMB_FOREARM: (f64, f64) = (0.15, 0.45);
const LIMB_THIGH: (f64, f64) = (0.20, 0.70);
const LIMB_SHIN: (f64, f64) = (0.20, 0.65);
const LIMB_SHOULDERS: (f64, f64) = (0.15, 0.65);
const LIMB_HIPS: (f64, f64) = (0.08, 0.50);
const LIMB_TORSO_SIDE: (f64, f64) = (0.25, 0.90);

fn arm_leg_limbs() -> Vec<(&'static str, &'static str, f64, f64)> {
    vec![
        ("left_shoulder", "left_elbow", LIMB_UPPER_ARM.0, LIMB_UPPER_ARM.1),
        ("right_shoulder", "right_elbow", LIMB_UPPER_ARM.0, LIMB_UPPER_ARM.1),
        ("left_elbow", "left_wrist", LIMB_FOREARM.0, LIMB_FOREARM.1),
        ("right_elbow", "right_wrist", LIMB_FOREARM.0, LIMB_FOREARM.1),
        ("left_hip", "left_knee", LIMB_THIGH.0, LIMB_THIGH.1),
        ("right_hip", "right_knee", LIMB_THIGH.0, LIMB_THIGH.1),
        ("left_knee", "left_ankle", LIMB_SHIN.0, LIMB_SHIN.1),
        ("right_knee", "right_ankle", LIMB_SHIN.0, LIMB_SHIN.1),
    ]
}

fn trunk_limbs() -> Vec<(&'static str, &'static str, f64, f64)> {
    vec![
        ("left_shoulder", "right_shoulder", LIMB_SHOULDERS.0, LIMB_SHOULDERS.1),
        ("left_hip", "right_hip", LIMB_HIPS.0, LIMB_HIPS.1),
        ("left_shoulder", "left_hip", LIMB_TORSO_SIDE.0, LIMB_TORSO_SIDE.1),
        ("right_shoulder", "right_hip", LIMB_TORSO_SIDE.0, LIMB_TORSO_SIDE.1),
    ]
}

fn limb_parents() -> Vec<(&'static str, &'static str)> {
    vec![
        ("left_elbow", "left_shoulder"),
        ("right_elbow", "right_shoulder"),
        ("left_wrist", "left_elbow"),
        ("right_wrist", "right_elbow"),
        ("left_knee", "left_hip"),
        ("right_knee", "right_hip"),
        ("left_ankle", "left_knee"),
        ("right_ankle", "right_knee"),
    ]
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn core12() -> JointSet {
    let mut parents = limb_parents();
    parents.extend([
        ("right_shoulder", "left_shoulder"),
        ("left_hip", "left_shoulder"),
        ("right_hip", "left_hip"),
    ]);
    let mut limbs = arm_leg_limbs();
    limbs.extend(trunk_limbs());
    JointSet::from_tree("core12", names(&CORE_JOINTS), &parents, &limbs)
}

fn eval13() -> JointSet {
    let mut joints = names(&CORE_JOINTS);
    joints.push("head".into());
    let mut parents = limb_parents();
    parents.extend([
        ("right_shoulder", "left_shoulder"),
        ("left_hip", "left_shoulder"),
        ("right_hip", "left_hip"),
        ("head", "left_shoulder"),
    ]);
    // Evaluation parts: eight limb segments plus both torso sides.
    let mut limbs = arm_leg_limbs();
    limbs.extend([
        ("left_shoulder", "left_hip", LIMB_TORSO_SIDE.0, LIMB_TORSO_SIDE.1),
        ("right_shoulder", "right_hip", LIMB_TORSO_SIDE.0, LIMB_TORSO_SIDE.1),
    ]);
    JointSet::from_tree("eval13", joints, &parents, &limbs)
}

fn body_parents() -> Vec<(&'static str, &'static str)> {
    let mut parents = limb_parents();
    parents.extend([
        ("left_hip", "hip_middle"),
        ("right_hip", "hip_middle"),
        ("shoulder_middle", "hip_middle"),
        ("left_shoulder", "shoulder_middle"),
        ("right_shoulder", "shoulder_middle"),
        ("head", "shoulder_middle"),
        ("nose", "head"),
        ("left_eye", "nose"),
        ("right_eye", "nose"),
        ("left_ear", "left_eye"),
        ("right_ear", "right_eye"),
    ]);
    parents
}

fn body_limbs() -> Vec<(&'static str, &'static str, f64, f64)> {
    let mut limbs = arm_leg_limbs();
    limbs.extend(trunk_limbs());
    limbs.extend([
        ("shoulder_middle", "hip_middle", 0.25, 0.85),
        ("shoulder_middle", "head", 0.10, 0.50),
        ("head", "nose", 0.02, 0.25),
        ("nose", "left_eye", 0.01, 0.12),
        ("nose", "right_eye", 0.01, 0.12),
        ("left_eye", "left_ear", 0.02, 0.18),
        ("right_eye", "right_ear", 0.02, 0.18),
    ]);
    limbs
}

fn body20() -> JointSet {
    JointSet::from_tree("body20", names(&BODY20_JOINTS), &body_parents(), &body_limbs())
}

pub fn face_joint_name(i: usize) -> String {
    format!("face_{i}")
}

pub fn hand_joint_name(side: &str, i: usize) -> String {
    format!("{side}_hand_{i}")
}

/// Parent of keypoint `i` within the 21-point hand layout (0 is the hand root).
pub fn hand_parent(i: usize) -> Option<usize> {
    match i {
        0 => None,
        1 | 5 | 9 | 13 | 17 => Some(0),
        _ => Some(i - 1),
    }
}

fn wholebody136() -> JointSet {
    let mut joints = names(&BODY20_JOINTS);
    joints.extend(names(&FOOT_JOINTS));
    joints.extend((0..FACE_JOINT_COUNT).map(face_joint_name));
    for side in ["left", "right"] {
        joints.extend((0..HAND_JOINT_COUNT).map(|i| hand_joint_name(side, i)));
    }
    let owned_parents: Vec<(String, String)> = {
        let mut v = Vec::new();
        for side in ["left", "right"] {
            for toe in ["big_toe", "small_toe", "heel"] {
                v.push((format!("{side}_{toe}"), format!("{side}_ankle")));
            }
            for i in 0..HAND_JOINT_COUNT {
                let parent = match hand_parent(i) {
                    None => format!("{side}_wrist"),
                    Some(p) => hand_joint_name(side, p),
                };
                v.push((hand_joint_name(side, i), parent));
            }
        }
        for i in 0..FACE_JOINT_COUNT {
            v.push((face_joint_name(i), "nose".to_string()));
        }
        v
    };
    let mut parents = body_parents();
    parents.extend(owned_parents.iter().map(|(a, b)| (a.as_str(), b.as_str())));

    let owned_limbs: Vec<(String, String, f64, f64)> = {
        let mut v = Vec::new();
        for side in ["left", "right"] {
            v.push((format!("{side}_ankle"), format!("{side}_big_toe"), 0.05, 0.35));
            v.push((format!("{side}_ankle"), format!("{side}_small_toe"), 0.05, 0.35));
            v.push((format!("{side}_ankle"), format!("{side}_heel"), 0.02, 0.20));
            v.push((format!("{side}_wrist"), hand_joint_name(side, 0), 0.0, 0.10));
            for i in 1..HAND_JOINT_COUNT {
                let p = hand_parent(i).unwrap();
                v.push((hand_joint_name(side, p), hand_joint_name(side, i), 0.0, 0.15));
            }
        }
        v
    };
    let mut limbs = body_limbs();
    limbs.extend(owned_limbs.iter().map(|(a, b, lo, hi)| (a.as_str(), b.as_str(), *lo, *hi)));
    JointSet::from_tree("wholebody136", joints, &parents, &limbs)
}

/// Returns one of the built-in joint sets by name.
pub fn builtin_joint_set(name: &str) -> Result<JointSet, SkeletonError> {
    match name {
        "core12" => Ok(core12()),
        "body20" => Ok(body20()),
        "wholebody136" => Ok(wholebody136()),
        "eval13" => Ok(eval13()),
        other => Err(SkeletonError::UnknownJointSet(other.to_string())),
    }
}

/// Declarative joint-set document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointSetDoc {
    pub name: String,
    pub joints: Vec<String>,
    pub limbs: Vec<LimbDoc>,
    /// Joint name to ordered fallback neighbors.
    pub neighbors: HashMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimbDoc {
    pub a: String,
    pub b: String,
    pub min_len_m: f64,
    pub max_len_m: f64,
}

impl JointSetDoc {
    pub fn into_joint_set(self) -> Result<JointSet, SkeletonError> {
        let name = self.name.clone();
        let fail = |reason: String| SkeletonError::Invalid {
            name: name.clone(),
            reason,
        };
        let index: HashMap<&str, usize> = self
            .joints
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let lookup = |n: &str| {
            index
                .get(n)
                .copied()
                .ok_or_else(|| fail(format!("unknown joint '{n}'")))
        };
        let core_indices = CORE_JOINTS
            .iter()
            .map(|n| lookup(n))
            .collect::<Result<Vec<_>, _>>()?;
        let limbs = self
            .limbs
            .iter()
            .map(|l| {
                Ok(Limb {
                    a: lookup(&l.a)?,
                    b: lookup(&l.b)?,
                    min_len_m: l.min_len_m,
                    max_len_m: l.max_len_m,
                })
            })
            .collect::<Result<Vec<_>, SkeletonError>>()?;
        let neighbors = self
            .joints
            .iter()
            .map(|j| {
                self.neighbors
                    .get(j)
                    .ok_or_else(|| fail(format!("joint '{j}' has no neighbor entry")))?
                    .iter()
                    .map(|n| lookup(n))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let set = JointSet {
            name: self.name,
            joint_names: self.joints,
            core_indices,
            limbs,
            neighbors,
        };
        set.validate()?;
        Ok(set)
    }
}

impl From<&JointSet> for JointSetDoc {
    fn from(set: &JointSet) -> Self {
        JointSetDoc {
            name: set.name.clone(),
            joints: set.joint_names.clone(),
            limbs: set
                .limbs
                .iter()
                .map(|l| LimbDoc {
                    a: set.joint_names[l.a].clone(),
                    b: set.joint_names[l.b].clone(),
                    min_len_m: l.min_len_m,
                    max_len_m: l.max_len_m,
                })
                .collect(),
            neighbors: set
                .neighbors
                .iter()
                .enumerate()
                .map(|(i, list)| {
                    (
                        set.joint_names[i].clone(),
                        list.iter().map(|&j| set.joint_names[j].clone()).collect(),
                    )
                })
                .collect(),
        }
    }
}

/// Axis-aligned room volume, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomBounds {
    pub min_corner: [f64; 3],
    pub max_corner: [f64; 3],
}

impl RoomBounds {
    pub fn new(min_corner: [f64; 3], max_corner: [f64; 3]) -> Result<Self, SkeletonError> {
        let room = RoomBounds {
            min_corner,
            max_corner,
        };
        room.validate()?;
        Ok(room)
    }

    pub fn validate(&self) -> Result<(), SkeletonError> {
        if (0..3).all(|i| self.min_corner[i] < self.max_corner[i]) {
            Ok(())
        } else {
            Err(SkeletonError::InvalidRoom {
                min: self.min_corner,
                max: self.max_corner,
            })
        }
    }

    pub fn center(&self) -> Vec3 {
        Vec3::from_fn(|i, _| 0.5 * (self.min_corner[i] + self.max_corner[i]))
    }

    pub fn extent(&self) -> Vec3 {
        Vec3::from_fn(|i, _| self.max_corner[i] - self.min_corner[i])
    }
}

/// True iff `point` lies inside `bounds` grown by `margin_m` on every side.
pub fn in_room(point: &Vec3, bounds: &RoomBounds, margin_m: f64) -> bool {
    (0..3).all(|i| {
        point[i] >= bounds.min_corner[i] - margin_m && point[i] <= bounds.max_corner[i] + margin_m
    })
}

/// True iff the distance between the endpoints is within the limb's range.
pub fn limb_plausible(p_a: &Vec3, p_b: &Vec3, limb: &Limb) -> bool {
    let len = (p_a - p_b).norm();
    limb.min_len_m <= len && len <= limb.max_len_m
}
