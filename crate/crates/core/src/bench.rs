//! Per-step latency benchmark and the ablation grid.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::metrics::{threshold_key, EvalOptions, EvalResult, Pose};
use crate::pipeline::{
    CameraRig, Person3D, Pipeline, PipelineConfig, PipelineError, ScoreMode, StepTimings,
    ViewDetections,
};
use crate::runner::{evaluate_outputs, run_sequence};
use crate::skeleton::JointSet;
use crate::tracking::{Tracker, TrackerConfig};

pub const BENCH_SCHEMA: &str = "rpt.bench/1";
pub const ABLATION_SCHEMA: &str = "rpt.ablation/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub step: String,
    pub mean_us: f64,
    pub median_us: f64,
    pub p99_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: String,
    pub joint_set: String,
    pub views: usize,
    pub frames: usize,
    pub repetitions: usize,
    /// Step rows, then tracking, then the total.
    pub rows: Vec<BenchRow>,
    /// Statistics of the 3D stage alone (steps 1-12).
    pub pipeline_total: BenchRow,
}

impl BenchReport {
    pub fn row(&self, step: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.step == step)
    }

    pub fn total(&self) -> &BenchRow {
        self.rows.last().expect("report always has a total row")
    }
}

pub const TRACKING_ROW: &str = "Tracking (13-14)";
pub const TOTAL_ROW: &str = "Total";

fn stats(step: &str, samples: &mut [f64]) -> BenchRow {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len();
    let pick = |q: f64| {
        if n == 0 {
            0.0
        } else {
            samples[((q * (n - 1) as f64).round() as usize).min(n - 1)]
        }
    };
    let median = if n == 0 {
        0.0
    } else if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    };
    BenchRow {
        step: step.to_string(),
        mean_us: if n == 0 { 0.0 } else { samples.iter().sum::<f64>() / n as f64 },
        median_us: median,
        p99_us: pick(0.99),
    }
}

fn micros(d: Duration) -> f64 {
    d.as_secs_f64() * 1e6
}

/// Times `repetitions` frame calls on one worker, cycling through `frames`.
///
/// Each call receives the persons of the preceding frame, as in a live stream.
/// Tracking is timed separately on the pipeline output when `tracker` is given.
pub fn bench_sequence(
    joint_set: &JointSet,
    config: &PipelineConfig,
    rig: &CameraRig,
    frames: &[Vec<ViewDetections>],
    tracker: Option<&TrackerConfig>,
    frame_dt_s: f64,
    repetitions: usize,
) -> Result<BenchReport, PipelineError> {
    let pipeline = Pipeline::new(joint_set.clone(), config.clone())?;
    if frames.is_empty() {
        return Err(PipelineError::TooFewViews(0));
    }
    let warm = run_sequence(&pipeline, rig, frames, None, frame_dt_s)?;
    let prev_of: Vec<Vec<Person3D>> = (0..frames.len())
        .map(|i| if i == 0 { Vec::new() } else { warm[i - 1].result.persons.clone() })
        .collect();

    let mut step_samples: Vec<Vec<f64>> = vec![Vec::with_capacity(repetitions); 8];
    let mut pipeline_samples = Vec::with_capacity(repetitions);
    let mut tracking_samples = Vec::with_capacity(repetitions);
    let mut total_samples = Vec::with_capacity(repetitions);
    let mut tracker_state = tracker.map(|cfg| Tracker::new(cfg.clone()));
    for rep in 0..repetitions {
        let k = rep % frames.len();
        let result = pipeline.process_frame(&frames[k], rig, &prev_of[k])?;
        let timings: StepTimings = result.timings;
        for (s, d) in step_samples.iter_mut().zip(timings.rows()) {
            s.push(micros(d));
        }
        let t3d = micros(timings.total());
        let track_us = match tracker_state.as_mut() {
            Some(tr) => {
                let t = Instant::now();
                let out = tr.update(result.persons, frame_dt_s);
                let d = t.elapsed();
                std::hint::black_box(out);
                micros(d)
            }
            None => 0.0,
        };
        pipeline_samples.push(t3d);
        tracking_samples.push(track_us);
        total_samples.push(t3d + track_us);
    }

    let mut rows: Vec<BenchRow> = StepTimings::ROW_NAMES
        .iter()
        .zip(step_samples.iter_mut())
        .map(|(name, s)| stats(name, s))
        .collect();
    rows.push(stats(TRACKING_ROW, &mut tracking_samples));
    rows.push(stats(TOTAL_ROW, &mut total_samples));
    Ok(BenchReport {
        schema: BENCH_SCHEMA.into(),
        joint_set: joint_set.name.clone(),
        views: rig.cameras.len(),
        frames: frames.len(),
        repetitions,
        rows,
        pipeline_total: stats("3D total (1-12)", &mut pipeline_samples),
    })
}

pub fn format_bench(report: &BenchReport) -> String {
    let width = report
        .rows
        .iter()
        .map(|r| r.step.len())
        .max()
        .unwrap_or(0)
        .max(report.pipeline_total.step.len());
    let mut out = format!(
        "{:<width$}  {:>10}  {:>10}  {:>10}\n",
        "Step", "mean us", "median us", "p99 us"
    );
    for r in report.rows.iter().chain(std::iter::once(&report.pipeline_total)) {
        out.push_str(&format!(
            "{:<width$}  {:>10.2}  {:>10.2}  {:>10.2}\n",
            r.step, r.mean_us, r.median_us, r.p99_us
        ));
    }
    out
}

/// One ablation setting.
#[derive(Debug, Clone, PartialEq)]
pub struct Ablation {
    pub name: String,
    pub config: PipelineConfig,
    pub tracking: bool,
}

/// The fixed grid: each row changes one switch relative to `base`.
pub fn ablation_grid(base: &PipelineConfig, tracking: bool) -> Vec<Ablation> {
    let row = |name: &str, f: &dyn Fn(&mut PipelineConfig), tracking: bool| {
        let mut config = base.clone();
        f(&mut config);
        Ablation {
            name: name.to_string(),
            config,
            tracking,
        }
    };
    vec![
        row("default", &|_| {}, tracking),
        row("no confidence weighting", &|c| c.use_confidence_weighting = false, tracking),
        row("no pair pre-filtering", &|c| c.enable_pair_prefilter = false, tracking),
        row("keep topk outliers", &|c| c.merge_top_k = usize::MAX, tracking),
        row(
            "keep topk+distance outliers",
            &|c| {
                c.merge_top_k = usize::MAX;
                c.enable_outlier_reject = false;
            },
            tracking,
        ),
        row("score triangulation only", &|c| c.score_mode = ScoreMode::TriangulationOnly, tracking),
        row("score reprojection only", &|c| c.score_mode = ScoreMode::ReprojectionOnly, tracking),
        row("min group size 1", &|c| c.min_group_size = 1, tracking),
        row("min group size 2", &|c| c.min_group_size = 2, tracking),
        row("min group size 3", &|c| c.min_group_size = 3, tracking),
        row("no tracking", &|_| {}, false),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub eval: EvalResult,
    /// Mean 3D time per frame in milliseconds.
    pub time_ms: f64,
    /// Pairs passed on to triangulation, summed over frames.
    pub pairs_triangulated: usize,
    pub persons: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub schema: String,
    pub rows: Vec<AblationRow>,
}

pub fn run_ablation(
    ablation: &Ablation,
    joint_set: &JointSet,
    rig: &CameraRig,
    frames: &[Vec<ViewDetections>],
    gt: &[Vec<Pose>],
    tracker: &TrackerConfig,
    frame_dt_s: f64,
    opts: &EvalOptions,
) -> Result<AblationRow, String> {
    let pipeline = Pipeline::new(joint_set.clone(), ablation.config.clone()).map_err(|e| e.to_string())?;
    let outputs = run_sequence(
        &pipeline,
        rig,
        frames,
        ablation.tracking.then_some(tracker),
        frame_dt_s,
    )
    .map_err(|e| e.to_string())?;
    let eval = evaluate_outputs(joint_set, gt, &outputs, opts).map_err(|e| e.to_string())?;
    let n = outputs.len().max(1) as f64;
    Ok(AblationRow {
        name: ablation.name.clone(),
        eval,
        time_ms: outputs
            .iter()
            .map(|o| o.result.timings.total().as_secs_f64() * 1e3)
            .sum::<f64>()
            / n,
        pairs_triangulated: outputs.iter().map(|o| o.result.stats.pairs_after_filter).sum(),
        persons: outputs.iter().map(|o| o.persons.len()).sum(),
    })
}

pub fn format_ablation_table(rows: &[AblationRow], thresholds_mm: &[f64]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(8);
    let mut header = vec![format!("{:<width$}", "Ablation"), format!("{:>6}", "PCP")];
    for t in thresholds_mm {
        header.push(format!("{:>9}", format!("PCK@{}", threshold_key(*t))));
    }
    header.push(format!("{:>7}", "MPJPE"));
    for t in thresholds_mm {
        header.push(format!("{:>10}", format!("Recall@{}", threshold_key(*t))));
    }
    for h in ["Invalid", "F1", "3D ms", "pairs"] {
        header.push(format!("{h:>8}"));
    }
    let mut out = header.join("  ");
    out.push('\n');
    for r in rows {
        let e = &r.eval;
        let mut cells = vec![format!("{:<width$}", r.name), format!("{:>6.1}", e.pcp)];
        for t in thresholds_mm {
            cells.push(format!("{:>9.1}", e.pck.get(&threshold_key(*t)).copied().unwrap_or(0.0)));
        }
        cells.push(format!("{:>7.1}", e.mpjpe));
        for t in thresholds_mm {
            cells.push(format!("{:>10.1}", e.recall.get(&threshold_key(*t)).copied().unwrap_or(0.0)));
        }
        cells.push(format!("{:>8.1}", e.invalid));
        cells.push(format!("{:>8.1}", e.f1));
        cells.push(format!("{:>8.3}", r.time_ms));
        cells.push(format!("{:>8}", r.pairs_triangulated));
        out.push_str(&cells.join("  "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_on_known_samples() {
        let mut s: Vec<f64> = (1..=100).map(f64::from).collect();
        let r = stats("x", &mut s);
        assert_eq!(r.mean_us, 50.5);
        assert_eq!(r.median_us, 50.5);
        assert_eq!(r.p99_us, 99.0);
    }

    #[test]
    fn grid_changes_one_switch_each() {
        let base = PipelineConfig::default();
        let grid = ablation_grid(&base, true);
        assert_eq!(grid[0].config, base);
        assert!(!grid.last().unwrap().tracking);
        let names: Vec<_> = grid.iter().map(|a| a.name.as_str()).collect();
        assert!(names.contains(&"no pair pre-filtering"));
        assert!(names.contains(&"min group size 3"));
    }
}
