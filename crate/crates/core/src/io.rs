//! Versioned JSON documents for calibration, detections, poses, and evaluation results.
//!
//! Every writer goes through a temporary file in the destination directory and a rename,
//! so readers never observe partial output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraCalib, Distortion, Vec2, Vec3};
use crate::metrics::{EvalResult, Pose};
use crate::pipeline::{CameraRig, Detection2D, Person3D, StepTimings, ViewDetections};
use crate::skeleton::{builtin_joint_set, JointSet, JointSetDoc};

pub const CALIBRATION_SCHEMA: &str = "rpt.calibration/1";
pub const DETECTIONS_SCHEMA: &str = "rpt.detections/1";
pub const POSES_SCHEMA: &str = "rpt.poses/1";
pub const EVAL_SCHEMA: &str = "rpt.eval/1";
pub const JOINT_SET_SCHEMA: &str = "rpt.joint_set/1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: parse error: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: schema error: {message}")]
    Schema { path: PathBuf, message: String },
}

impl IoError {
    pub fn path(&self) -> &Path {
        match self {
            IoError::Io { path, .. } | IoError::Parse { path, .. } | IoError::Schema { path, .. } => path,
        }
    }
}

fn schema_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Schema {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes `bytes` to `path` through a sibling temporary file and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let io_err = |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.flush().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents always serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    write_atomic(path, to_json_string(value).as_bytes())
}

fn check_schema(path: &Path, found: &str, expected: &str) -> Result<(), IoError> {
    if found != expected {
        return Err(schema_err(path, format!("expected schema '{expected}', found '{found}'")));
    }
    Ok(())
}

/// Length unit of a document; converted to meters on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Units {
    #[default]
    #[serde(rename = "m")]
    Meters,
    #[serde(rename = "mm")]
    Millimeters,
}

impl Units {
    pub fn to_meters(self) -> f64 {
        match self {
            Units::Meters => 1.0,
            Units::Millimeters => 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionDoc {
    pub kind: String,
    #[serde(default)]
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraDoc {
    pub id: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation, row-major.
    pub rotation: [f64; 9],
    /// World-to-camera translation in the document's units.
    pub translation: [f64; 3],
    pub distortion: DistortionDoc,
    pub image_width: u32,
    pub image_height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationDoc {
    pub schema: String,
    #[serde(default)]
    pub units: Units,
    pub cameras: Vec<CameraDoc>,
}

impl CalibrationDoc {
    pub fn from_rig(rig: &CameraRig) -> Self {
        CalibrationDoc {
            schema: CALIBRATION_SCHEMA.into(),
            units: Units::Meters,
            cameras: rig
                .cameras
                .iter()
                .map(|c| CameraDoc {
                    id: c.id.clone(),
                    fx: c.fx,
                    fy: c.fy,
                    cx: c.cx,
                    cy: c.cy,
                    rotation: std::array::from_fn(|k| c.rotation[(k / 3, k % 3)]),
                    translation: [c.translation.x, c.translation.y, c.translation.z],
                    distortion: DistortionDoc {
                        kind: c.distortion.kind_name().into(),
                        coefficients: c.distortion.coefficients(),
                    },
                    image_width: c.image_width,
                    image_height: c.image_height,
                })
                .collect(),
        }
    }

    pub fn into_rig(self, path: &Path) -> Result<CameraRig, IoError> {
        check_schema(path, &self.schema, CALIBRATION_SCHEMA)?;
        let scale = self.units.to_meters();
        let mut cameras: Vec<CameraCalib> = Vec::with_capacity(self.cameras.len());
        for doc in self.cameras {
            if cameras.iter().any(|c| c.id == doc.id) {
                return Err(schema_err(path, format!("duplicate camera id '{}'", doc.id)));
            }
            let distortion = Distortion::from_parts(&doc.distortion.kind, &doc.distortion.coefficients)
                .map_err(|m| schema_err(path, format!("camera '{}': {m}", doc.id)))?;
            let cam = CameraCalib {
                id: doc.id,
                fx: doc.fx,
                fy: doc.fy,
                cx: doc.cx,
                cy: doc.cy,
                rotation: Matrix3::from_row_slice(&doc.rotation),
                translation: Vec3::from(doc.translation) * scale,
                distortion,
                image_width: doc.image_width,
                image_height: doc.image_height,
            };
            cam.validate().map_err(|e| schema_err(path, e.to_string()))?;
            cameras.push(cam);
        }
        if cameras.is_empty() {
            return Err(schema_err(path, "no cameras"));
        }
        Ok(CameraRig::new(cameras))
    }
}

pub fn load_calibration(path: &Path) -> Result<CameraRig, IoError> {
    read_json::<CalibrationDoc>(path)?.into_rig(path)
}

pub fn save_calibration(path: &Path, rig: &CameraRig) -> Result<(), IoError> {
    write_json(path, &CalibrationDoc::from_rig(rig))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionDoc {
    pub joints: Vec<[f64; 2]>,
    pub confidence: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewDoc {
    pub view: String,
    pub detections: Vec<DetectionDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionFrameDoc {
    pub frame: usize,
    pub views: Vec<ViewDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionsDoc {
    pub schema: String,
    pub joint_set: String,
    pub frames: Vec<DetectionFrameDoc>,
}

/// Detections of a whole sequence, validated against their joint set.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSequence {
    pub joint_set: String,
    pub frames: Vec<Vec<ViewDetections>>,
}

impl DetectionsDoc {
    pub fn from_frames(joint_set: &str, frames: &[Vec<ViewDetections>]) -> Self {
        DetectionsDoc {
            schema: DETECTIONS_SCHEMA.into(),
            joint_set: joint_set.into(),
            frames: frames
                .iter()
                .enumerate()
                .map(|(i, views)| DetectionFrameDoc {
                    frame: i,
                    views: views
                        .iter()
                        .map(|v| ViewDoc {
                            view: v.view.clone(),
                            detections: v
                                .detections
                                .iter()
                                .map(|d| DetectionDoc {
                                    joints: d.joints.iter().map(|p| [p.x, p.y]).collect(),
                                    confidence: d.confidence.clone(),
                                })
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Checks the schema, frame numbering, and per-detection array lengths.
    pub fn into_sequence(self, path: &Path, joint_count: usize) -> Result<DetectionSequence, IoError> {
        check_schema(path, &self.schema, DETECTIONS_SCHEMA)?;
        let mut frames = Vec::with_capacity(self.frames.len());
        for (i, frame) in self.frames.into_iter().enumerate() {
            if frame.frame != i {
                return Err(schema_err(path, format!("frame {} listed at position {i}", frame.frame)));
            }
            let mut views = Vec::with_capacity(frame.views.len());
            for view in frame.views {
                let mut dets = Vec::with_capacity(view.detections.len());
                for (k, d) in view.detections.into_iter().enumerate() {
                    if d.joints.len() != joint_count || d.confidence.len() != joint_count {
                        return Err(schema_err(
                            path,
                            format!(
                                "frame {i} view '{}' detection {k}: expected {joint_count} joints, got {} positions and {} confidences",
                                view.view,
                                d.joints.len(),
                                d.confidence.len()
                            ),
                        ));
                    }
                    dets.push(Detection2D {
                        joints: d.joints.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
                        confidence: d.confidence,
                    });
                }
                views.push(ViewDetections {
                    view: view.view,
                    detections: dets,
                });
            }
            frames.push(views);
        }
        Ok(DetectionSequence {
            joint_set: self.joint_set,
            frames,
        })
    }
}

/// Loads detections; `joint_set` must match the document's declared set.
pub fn load_detections(path: &Path, joint_set: &JointSet) -> Result<DetectionSequence, IoError> {
    let doc: DetectionsDoc = read_json(path)?;
    if doc.joint_set != joint_set.name {
        return Err(schema_err(
            path,
            format!("detections use joint set '{}', expected '{}'", doc.joint_set, joint_set.name),
        ));
    }
    doc.into_sequence(path, joint_set.joint_count())
}

pub fn save_detections(path: &Path, joint_set: &str, frames: &[Vec<ViewDetections>]) -> Result<(), IoError> {
    write_json(path, &DetectionsDoc::from_frames(joint_set, frames))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonDoc {
    /// Joint positions; `null` where the joint is missing.
    pub joints: Vec<Option<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub support: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub filled: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingsDoc {
    pub undistortion_us: f64,
    pub pair_creation_us: f64,
    pub pair_filtering_us: f64,
    pub triangulate_score_us: f64,
    pub grouping_us: f64,
    pub triangulate_score_full_us: f64,
    pub merge_us: f64,
    pub postprocess_us: f64,
    pub total_us: f64,
}

impl From<&StepTimings> for TimingsDoc {
    fn from(t: &StepTimings) -> Self {
        let us = |d: std::time::Duration| d.as_secs_f64() * 1e6;
        TimingsDoc {
            undistortion_us: us(t.undistortion),
            pair_creation_us: us(t.pair_creation),
            pair_filtering_us: us(t.pair_filtering),
            triangulate_score_us: us(t.triangulate_score),
            grouping_us: us(t.grouping),
            triangulate_score_full_us: us(t.triangulate_score_full),
            merge_us: us(t.merge),
            postprocess_us: us(t.postprocess),
            total_us: us(t.total()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseFrameDoc {
    pub frame: usize,
    pub persons: Vec<PersonDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<TimingsDoc>,
}

/// Pipeline output and ground truth share this document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosesDoc {
    pub schema: String,
    #[serde(default)]
    pub units: Units,
    pub joint_set: String,
    pub joint_names: Vec<String>,
    pub frames: Vec<PoseFrameDoc>,
}

impl PersonDoc {
    pub fn from_person(p: &Person3D) -> Self {
        PersonDoc {
            joints: p.joints.iter().map(|j| j.map(|v| [v.x, v.y, v.z])).collect(),
            support: p.joint_support.clone(),
            filled: p.filled.clone(),
            track_id: p.track_id,
        }
    }

    pub fn from_pose(p: &Pose) -> Self {
        PersonDoc {
            joints: p.iter().map(|j| j.map(|v| [v.x, v.y, v.z])).collect(),
            support: Vec::new(),
            filled: Vec::new(),
            track_id: None,
        }
    }
}

impl PosesDoc {
    pub fn new(joint_set: &JointSet) -> Self {
        PosesDoc {
            schema: POSES_SCHEMA.into(),
            units: Units::Meters,
            joint_set: joint_set.name.clone(),
            joint_names: joint_set.joint_names.clone(),
            frames: Vec::new(),
        }
    }

    pub fn from_poses(joint_set: &JointSet, frames: &[Vec<Pose>]) -> Self {
        let mut doc = Self::new(joint_set);
        doc.frames = frames
            .iter()
            .enumerate()
            .map(|(i, persons)| PoseFrameDoc {
                frame: i,
                persons: persons.iter().map(PersonDoc::from_pose).collect(),
                timings: None,
            })
            .collect();
        doc
    }

    /// Validates and converts to per-frame poses in meters.
    pub fn to_poses(&self, path: &Path) -> Result<Vec<Vec<Pose>>, IoError> {
        check_schema(path, &self.schema, POSES_SCHEMA)?;
        let n = self.joint_names.len();
        let scale = self.units.to_meters();
        self.frames
            .iter()
            .enumerate()
            .map(|(i, frame)| {
                if frame.frame != i {
                    return Err(schema_err(path, format!("frame {} listed at position {i}", frame.frame)));
                }
                frame
                    .persons
                    .iter()
                    .enumerate()
                    .map(|(k, p)| {
                        if p.joints.len() != n {
                            return Err(schema_err(
                                path,
                                format!("frame {i} person {k}: expected {n} joints, got {}", p.joints.len()),
                            ));
                        }
                        Ok(p.joints.iter().map(|j| j.map(|v| Vec3::from(v) * scale)).collect())
                    })
                    .collect()
            })
            .collect()
    }

    /// The joint set these poses use: a builtin with matching names, or an ad-hoc set.
    pub fn joint_set(&self) -> JointSet {
        match builtin_joint_set(&self.joint_set) {
            Ok(set) if set.joint_names == self.joint_names => set,
            _ => JointSet {
                name: self.joint_set.clone(),
                joint_names: self.joint_names.clone(),
                core_indices: Vec::new(),
                limbs: Vec::new(),
                neighbors: vec![Vec::new(); self.joint_names.len()],
            },
        }
    }
}

pub fn load_poses(path: &Path) -> Result<(PosesDoc, Vec<Vec<Pose>>), IoError> {
    let doc: PosesDoc = read_json(path)?;
    let poses = doc.to_poses(path)?;
    Ok((doc, poses))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalDoc {
    pub schema: String,
    pub eval_joint_set: String,
    pub thresholds_mm: Vec<f64>,
    pub match_threshold_mm: f64,
    pub result: EvalResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct JointSetFile {
    schema: String,
    #[serde(flatten)]
    doc: JointSetDoc,
}

/// A joint set from a builtin name or a `.json` file path.
pub fn resolve_joint_set(name_or_path: &str) -> Result<JointSet, IoError> {
    if let Ok(set) = builtin_joint_set(name_or_path) {
        return Ok(set);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(schema_err(path, "not a builtin joint set and no such file"));
    }
    let file: JointSetFile = read_json(path)?;
    check_schema(path, &file.schema, JOINT_SET_SCHEMA)?;
    file.doc
        .into_joint_set()
        .map_err(|e| schema_err(path, e.to_string()))
}
