//! Sequence processing shared by the CLI, the benchmark, and the ablation grid.

use std::time::{Duration, Instant};

use crate::io::{PersonDoc, PoseFrameDoc, PosesDoc, TimingsDoc};
use crate::metrics::{self, EvalOptions, EvalResult, MetricsError, Pose};
use crate::pipeline::{CameraRig, FrameResult, Person3D, Pipeline, PipelineError, ViewDetections};
use crate::skeleton::{builtin_joint_set, JointSet};
use crate::tracking::{Tracker, TrackerConfig};

/// One processed frame: raw pipeline result plus the persons emitted after tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub result: FrameResult,
    pub persons: Vec<Person3D>,
    pub tracking_time: Duration,
}

/// Runs every frame in order. Each frame's pipeline persons seed the next frame's pair filter.
pub fn run_sequence(
    pipeline: &Pipeline,
    rig: &CameraRig,
    frames: &[Vec<ViewDetections>],
    tracker: Option<&TrackerConfig>,
    frame_dt_s: f64,
) -> Result<Vec<FrameOutput>, PipelineError> {
    let mut tracker = tracker.map(|cfg| Tracker::new(cfg.clone()));
    let mut prev: Vec<Person3D> = Vec::new();
    let mut out = Vec::with_capacity(frames.len());
    for views in frames {
        let result = pipeline.process_frame(views, rig, &prev)?;
        let t = Instant::now();
        let persons = match tracker.as_mut() {
            Some(tr) => tr.update(result.persons.clone(), frame_dt_s),
            None => result.persons.clone(),
        };
        let tracking_time = t.elapsed();
        prev = result.persons.clone();
        out.push(FrameOutput {
            result,
            persons,
            tracking_time,
        });
    }
    Ok(out)
}

/// Output document for a processed sequence. Timings are optional since they vary run to run.
pub fn poses_document(joint_set: &JointSet, outputs: &[FrameOutput], with_timings: bool) -> PosesDoc {
    let mut doc = PosesDoc::new(joint_set);
    doc.frames = outputs
        .iter()
        .enumerate()
        .map(|(i, o)| PoseFrameDoc {
            frame: i,
            persons: o.persons.iter().map(PersonDoc::from_person).collect(),
            timings: with_timings.then(|| TimingsDoc::from(&o.result.timings)),
        })
        .collect();
    doc
}

pub fn output_poses(outputs: &[FrameOutput]) -> Vec<Vec<Pose>> {
    outputs
        .iter()
        .map(|o| o.persons.iter().map(|p| p.joints.clone()).collect())
        .collect()
}

/// The 13-joint evaluation set when `source` names all its joints, else `source` itself.
pub fn eval_set_for(source: &JointSet) -> JointSet {
    let eval13 = builtin_joint_set("eval13").expect("builtin");
    if source.index_map_from(&eval13).is_ok() {
        eval13
    } else {
        source.clone()
    }
}

pub fn evaluate_outputs(
    joint_set: &JointSet,
    gt: &[Vec<Pose>],
    outputs: &[FrameOutput],
    opts: &EvalOptions,
) -> Result<EvalResult, MetricsError> {
    metrics::evaluate(gt, &output_poses(outputs), joint_set, &eval_set_for(joint_set), opts)
}
