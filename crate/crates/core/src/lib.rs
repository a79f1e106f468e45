//! Multi-view, multi-person 3D human pose triangulation.

pub mod bench;
pub mod cli;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod runner;
pub mod skeleton;
pub mod synth;
pub mod tracking;

pub use geometry::{CameraCalib, Distortion, GeometryError, Ray3, Vec2, Vec3};
pub use metrics::{evaluate, EvalOptions, EvalResult, MetricsError, Pose};
pub use pipeline::{
    CameraRig, Detection2D, FrameResult, Person3D, Pipeline, PipelineConfig, PipelineError,
    ScoreMode, StepTimings, ViewDetections,
};
pub use skeleton::{builtin_joint_set, JointSet, RoomBounds, SkeletonError};
pub use tracking::{Tracker, TrackerConfig};
