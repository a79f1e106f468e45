//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rapidpose::bench::{bench_sequence, TOTAL_ROW, TRACKING_ROW};
use rapidpose::geometry::{CameraCalib, Vec3};
use rapidpose::metrics::{self, match_predictions, EvalOptions, EvalResult, Pose};
use rapidpose::pipeline::{
    merge_joint, single_linkage, CameraRig, Detection2D, Person3D, Pipeline, PipelineConfig,
    StepTimings, ViewDetections,
};
use rapidpose::runner::{eval_set_for, evaluate_outputs, run_sequence, FrameOutput};
use rapidpose::skeleton::{builtin_joint_set, JointSet};
use rapidpose::synth::{
    build_fixture, oracle_triangulate, project_pose, sample_local_skeleton, CorruptionSpec,
    Fixture, Motion, RigLayout, SceneSpec,
};
use rapidpose::tracking::{clip_speed, Tracker, TrackerConfig};

const SEEDS: u64 = 20;
const DT: f64 = 0.04;

fn body20() -> JointSet {
    builtin_joint_set("body20").unwrap()
}

/// Settings for the 5+ camera synthetic fixtures: proposals must be confirmed by two view pairs.
fn multi_view_config(fx: &Fixture) -> PipelineConfig {
    PipelineConfig {
        room: fx.scene.room,
        min_group_size: 2,
        ..PipelineConfig::default()
    }
}

fn run_fixture(fx: &Fixture, cfg: &PipelineConfig, tracking: bool) -> Vec<FrameOutput> {
    let pipeline = Pipeline::new(fx.spec.joint_set.clone(), cfg.clone()).unwrap();
    let tracker = TrackerConfig::default();
    run_sequence(
        &pipeline,
        &fx.scene.rig,
        &fx.detections.frames,
        tracking.then_some(&tracker),
        DT,
    )
    .unwrap()
}

fn eval_fixture(fx: &Fixture, outputs: &[FrameOutput]) -> EvalResult {
    evaluate_outputs(&fx.spec.joint_set, &fx.scene.frames, outputs, &EvalOptions::default()).unwrap()
}

fn oracle_mpjpe(fx: &Fixture, conf_floor: f64) -> f64 {
    let set = &fx.spec.joint_set;
    let frames: Vec<Vec<Pose>> = fx
        .detections
        .frames
        .iter()
        .zip(&fx.detections.assignment)
        .map(|(views, who)| {
            oracle_triangulate(views, &fx.scene.rig, who, fx.spec.n_persons, set.joint_count(), conf_floor)
        })
        .collect();
    metrics::evaluate(&fx.scene.frames, &frames, set, &eval_set_for(set), &EvalOptions::default())
        .unwrap()
        .mpjpe
}

fn clean_closure() -> Result<String, String> {
    let start = Instant::now();
    let mut worst_mpjpe: f64 = 0.0;
    for seed in 0..SEEDS {
        let fx = build_fixture(&SceneSpec::new(4, 5, body20(), seed), &CorruptionSpec::clean()).unwrap();
        let e = eval_fixture(&fx, &run_fixture(&fx, &multi_view_config(&fx), false));
        if e.recall["100"] != 100.0 || e.invalid != 0.0 || e.mpjpe >= 1e-3 {
            return Err(format!(
                "seed {seed}: recall@100 {} invalid {} mpjpe {} mm",
                e.recall["100"], e.invalid, e.mpjpe
            ));
        }
        worst_mpjpe = worst_mpjpe.max(e.mpjpe);
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 10.0 {
        return Err(format!("took {secs:.2} s"));
    }
    Ok(format!("worst MPJPE {worst_mpjpe:.2e} mm, {secs:.2} s"))
}

/// Two people seen by two cameras; the second view also holds a small false positive.
fn two_view_fixture() -> (CameraRig, Vec<ViewDetections>, Vec<Pose>) {
    let set = body20();
    let intr = (1100.0, 1100.0, 960.0, 540.0);
    let target = Vec3::new(0.0, 0.0, 1.0);
    let cams = vec![
        CameraCalib::look_at("front", Vec3::new(0.5, -4.5, 2.4), target, Vec3::z(), intr, (1920, 1080)),
        CameraCalib::look_at("side", Vec3::new(4.5, 0.8, 1.8), target, Vec3::z(), intr, (1920, 1080)),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let place = |rng: &mut ChaCha8Rng, x: f64, y: f64, scale: f64| -> Pose {
        let local = sample_local_skeleton(rng);
        let low = local["left_ankle"].z.min(local["right_ankle"].z);
        set.joint_names
            .iter()
            .map(|n| {
                let p = (local[n] - Vec3::new(0.0, 0.0, low)) * scale;
                Some(Vec3::new(p.x + x, p.y + y, p.z + 0.08))
            })
            .collect()
    };
    let people = vec![place(&mut rng, -0.7, 0.4, 1.0), place(&mut rng, 0.8, -0.5, 1.0)];
    let small = place(&mut rng, -1.6, -1.9, 0.45);
    let det = |pose: &Pose, cam: &CameraCalib| Detection2D {
        joints: project_pose(pose, cam).into_iter().map(Option::unwrap).collect(),
        confidence: vec![0.9; pose.len()],
    };
    let views = vec![
        ViewDetections {
            view: "front".into(),
            detections: people.iter().map(|p| det(p, &cams[0])).collect(),
        },
        ViewDetections {
            view: "side".into(),
            detections: vec![det(&people[1], &cams[1]), det(&small, &cams[1]), det(&people[0], &cams[1])],
        },
    ];
    (CameraRig::new(cams), views, people)
}

fn two_view_scenario() -> Result<String, String> {
    let (rig, views, people) = two_view_fixture();
    let pipeline = Pipeline::new(body20(), PipelineConfig::default()).unwrap();
    let r = pipeline.process_frame(&views, &rig, &[]).unwrap();
    let s = r.stats;
    if s.pairs_created != 6 || s.proposals_kept != 2 || r.persons.len() != 2 {
        return Err(format!(
            "pairs {} kept {} persons {}",
            s.pairs_created,
            s.proposals_kept,
            r.persons.len()
        ));
    }
    let preds: Vec<Pose> = r.persons.iter().map(|p| p.joints.clone()).collect();
    let m = match_predictions(&people, &preds, 500.0);
    if m.len() != 2 || m.iter().any(|x| x.mpjpe_mm > 1e-3) {
        return Err(format!("persons do not match ground truth: {m:?}"));
    }
    Ok("6 pairs, 2 survive scoring, 2 persons".into())
}

fn noise_robustness() -> Result<String, String> {
    let sigmas = [0.0, 1.0, 2.0, 4.0];
    let mut means = Vec::new();
    let mut oracle_at_2 = 0.0;
    for &sigma in &sigmas {
        let mut sum = 0.0;
        for seed in 0..SEEDS {
            let spec = SceneSpec::new(4, 5, body20(), seed);
            let fx = build_fixture(&spec, &CorruptionSpec::noisy(sigma, 1000 + seed)).unwrap();
            let cfg = multi_view_config(&fx);
            sum += eval_fixture(&fx, &run_fixture(&fx, &cfg, false)).mpjpe;
            if sigma == 2.0 {
                oracle_at_2 += oracle_mpjpe(&fx, cfg.conf_floor);
            }
        }
        means.push(sum / SEEDS as f64);
    }
    let oracle = oracle_at_2 / SEEDS as f64;
    let ratio = means[2] / oracle;
    let line = format!(
        "MPJPE mm by sigma {:?}: {:.3?}; oracle at 2 px {oracle:.3}, ratio {ratio:.3}",
        sigmas, means
    );
    if ratio > 1.5 {
        return Err(line);
    }
    if means.windows(2).any(|w| w[1] < w[0]) {
        return Err(line);
    }
    Ok(line)
}

fn shelf_fixture(set: JointSet, seed: u64, frames: usize) -> Fixture {
    let mut spec = SceneSpec::new(4, 5, set, seed);
    spec.n_frames = frames;
    spec.motion = Motion::Linear { speed_mps: 0.8 };
    build_fixture(&spec, &CorruptionSpec::noisy(1.0, seed)).unwrap()
}

fn timing() -> Result<String, String> {
    let fx = shelf_fixture(body20(), 7, 20);
    let cfg = multi_view_config(&fx);
    let tracker = TrackerConfig::default();
    let report = bench_sequence(
        &fx.spec.joint_set,
        &cfg,
        &fx.scene.rig,
        &fx.detections.frames,
        Some(&tracker),
        DT,
        2000,
    )
    .unwrap();
    let mut missing: Vec<&str> = StepTimings::ROW_NAMES
        .iter()
        .copied()
        .filter(|r| report.row(r).is_none())
        .collect();
    for r in [TRACKING_ROW, TOTAL_ROW] {
        if report.row(r).is_none() {
            missing.push(r);
        }
    }
    let median_ms = report.pipeline_total.median_us / 1000.0;
    let pairs_mean = report.row(StepTimings::ROW_NAMES[1]).unwrap().mean_us
        + report.row(StepTimings::ROW_NAMES[2]).unwrap().mean_us;
    let share = pairs_mean / report.pipeline_total.mean_us;
    let line = format!(
        "median 3D time {:.1} us, pair creation+filtering {:.1}% of total, tracking median {:.1} us",
        report.pipeline_total.median_us,
        share * 100.0,
        report.row(TRACKING_ROW).unwrap().median_us
    );
    if !missing.is_empty() {
        return Err(format!("missing rows {missing:?}"));
    }
    if median_ms > 2.0 || share >= 0.2 {
        return Err(line);
    }
    Ok(line)
}

fn median_3d_us(fx: &Fixture, cfg: &PipelineConfig, reps: usize) -> f64 {
    bench_sequence(&fx.spec.joint_set, cfg, &fx.scene.rig, &fx.detections.frames, None, DT, reps)
        .unwrap()
        .pipeline_total
        .median_us
}

fn wholebody_scaling() -> Result<String, String> {
    let mut body = 0.0;
    let mut whole = 0.0;
    for seed in 0..3 {
        let b = shelf_fixture(body20(), seed, 10);
        let w = shelf_fixture(builtin_joint_set("wholebody136").unwrap(), seed, 10);
        body += median_3d_us(&b, &multi_view_config(&b), 1000);
        whole += median_3d_us(&w, &multi_view_config(&w), 1000);
    }
    let ratio = whole / body;
    let line = format!("wholebody136 / body20 median 3D time = {ratio:.2}");
    if ratio > 6.0 {
        return Err(line);
    }
    Ok(line)
}

fn ablation_directionality() -> Result<String, String> {
    let mut notes = Vec::new();

    // Pre-filter: same accuracy, strictly more pairs without it.
    let (mut mp_on, mut mp_off, mut pairs_on, mut pairs_off) = (0.0, 0.0, 0usize, 0usize);
    for seed in 0..5 {
        let fx = shelf_fixture(body20(), 100 + seed, 10);
        let on = multi_view_config(&fx);
        let off = PipelineConfig {
            enable_pair_prefilter: false,
            ..on.clone()
        };
        let (a, b) = (run_fixture(&fx, &on, true), run_fixture(&fx, &off, true));
        mp_on += eval_fixture(&fx, &a).mpjpe / 5.0;
        mp_off += eval_fixture(&fx, &b).mpjpe / 5.0;
        pairs_on += a.iter().map(|o| o.result.stats.pairs_after_filter).sum::<usize>();
        pairs_off += b.iter().map(|o| o.result.stats.pairs_after_filter).sum::<usize>();
    }
    notes.push(format!(
        "prefilter MPJPE {mp_on:.3} vs off {mp_off:.3}, pairs {pairs_on} vs {pairs_off}"
    ));
    let prefilter_ok = (mp_on - mp_off).abs() <= 0.5 && pairs_off > pairs_on;

    // Outlier handling on swapped-joint detections.
    let (mut mp_def, mut mp_keep, mut mp_keep_all) = (0.0, 0.0, 0.0);
    for seed in 0..SEEDS {
        let mut spec = SceneSpec::new(4, 5, body20(), 200 + seed);
        spec.min_separation_m = 0.8;
        let corruption = CorruptionSpec {
            pixel_noise_sigma_px: 2.0,
            swap_rate: 0.5,
            seed,
            ..CorruptionSpec::default()
        };
        let fx = build_fixture(&spec, &corruption).unwrap();
        let def = multi_view_config(&fx);
        let keep = PipelineConfig {
            merge_top_k: usize::MAX,
            ..def.clone()
        };
        let keep_all = PipelineConfig {
            enable_outlier_reject: false,
            ..keep.clone()
        };
        mp_def += eval_fixture(&fx, &run_fixture(&fx, &def, false)).mpjpe;
        mp_keep += eval_fixture(&fx, &run_fixture(&fx, &keep, false)).mpjpe;
        mp_keep_all += eval_fixture(&fx, &run_fixture(&fx, &keep_all, false)).mpjpe;
    }
    let n = SEEDS as f64;
    notes.push(format!(
        "outliers MPJPE default {:.2}, keep topk {:.2}, keep topk+distance {:.2}",
        mp_def / n,
        mp_keep / n,
        mp_keep_all / n
    ));
    let outlier_ok = mp_keep > mp_def && mp_keep_all > mp_def;

    // Group size on a 12-camera rig.
    let (mut inv1, mut inv3) = (0.0, 0.0);
    for seed in 0..5 {
        let fx = build_fixture(&SceneSpec::new(4, 12, body20(), 300 + seed), &CorruptionSpec::noisy(2.0, seed)).unwrap();
        let one = PipelineConfig {
            room: fx.scene.room,
            min_group_size: 1,
            ..PipelineConfig::default()
        };
        let three = PipelineConfig {
            min_group_size: 3,
            ..one.clone()
        };
        inv1 += eval_fixture(&fx, &run_fixture(&fx, &one, false)).invalid / 5.0;
        inv3 += eval_fixture(&fx, &run_fixture(&fx, &three, false)).invalid / 5.0;
    }
    notes.push(format!("12 cameras Invalid: group size 1 {inv1:.1}%, 3 {inv3:.1}%"));
    let group_ok = inv1 > inv3;

    let line = notes.join("; ");
    if prefilter_ok && outlier_ok && group_ok {
        Ok(line)
    } else {
        Err(line)
    }
}

fn camera_scaling() -> Result<String, String> {
    let counts = [3usize, 5, 7, 10];
    let mut mpjpe = Vec::new();
    let mut times = Vec::new();
    for &n in &counts {
        let (mut m, mut t) = (0.0, 0.0);
        for seed in 0..SEEDS {
            let mut spec = SceneSpec::new(4, n, body20(), 400 + seed);
            spec.layout = RigLayout::Dome;
            let fx = build_fixture(&spec, &CorruptionSpec::noisy(2.0, seed)).unwrap();
            let cfg = multi_view_config(&fx);
            m += eval_fixture(&fx, &run_fixture(&fx, &cfg, false)).mpjpe;
            t += median_3d_us(&fx, &cfg, 50);
        }
        mpjpe.push(m / SEEDS as f64);
        times.push(t / SEEDS as f64);
    }
    let line = format!(
        "cameras {counts:?}: MPJPE {:.3?} mm, median 3D time {:.1?} us",
        mpjpe, times
    );
    let mpjpe_ok = mpjpe.windows(2).all(|w| w[1] <= w[0]);
    let time_ok = times.windows(2).all(|w| w[1] > w[0]);
    if mpjpe_ok && time_ok {
        Ok(line)
    } else {
        Err(line)
    }
}

/// Connected components by depth-first search over the full adjacency matrix.
fn brute_components(points: &[Vec3], max_dist: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut comp = vec![];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(i) = stack.pop() {
            comp.push(i);
            for j in 0..n {
                if !seen[j] && (points[i] - points[j]).norm() <= max_dist {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

fn direct_merge(c: &[Vec3], outlier: f64, top_k: usize, reject: bool) -> Option<Vec3> {
    if c.is_empty() {
        return None;
    }
    let mut mean = Vec3::zeros();
    for p in c {
        mean += p;
    }
    mean /= c.len() as f64;
    let mut kept: Vec<(f64, usize)> = Vec::new();
    for (i, p) in c.iter().enumerate() {
        let d = (p - mean).norm();
        if !reject || d <= outlier {
            kept.push((d, i));
        }
    }
    if kept.is_empty() {
        return None;
    }
    kept.sort_by(|a, b| a.partial_cmp(b).unwrap());
    kept.truncate(top_k);
    let mut sum = Vec3::zeros();
    for (_, i) in &kept {
        sum += c[*i];
    }
    Some(sum / kept.len() as f64)
}

fn oracle_equivalences() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..200 {
        let n = rng.random_range(1..60);
        let pts: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..2.0)))
            .collect();
        let d = rng.random_range(0.1..1.0);
        let mut got = single_linkage(&pts, d);
        for g in &mut got {
            g.sort_unstable();
        }
        got.sort();
        let mut want = brute_components(&pts, d);
        want.sort();
        if got != want {
            return Err(format!("grouping differs on cloud {case}"));
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        let n = rng.random_range(0..12);
        let center = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 1.0);
        let c: Vec<Vec3> = (0..n)
            .map(|_| center + Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)))
            .collect();
        let cfg = PipelineConfig {
            outlier_dist_m: rng.random_range(0.05..0.4),
            merge_top_k: rng.random_range(1..8),
            enable_outlier_reject: rng.random_bool(0.7),
            ..PipelineConfig::default()
        };
        let got = merge_joint(&c, &cfg).map(|(p, _)| p);
        let want = direct_merge(&c, cfg.outlier_dist_m, cfg.merge_top_k, cfg.enable_outlier_reject);
        match (got, want) {
            (None, None) => {}
            (Some(a), Some(b)) => worst = worst.max((a - b).norm()),
            _ => return Err("merge presence differs".into()),
        }
    }
    if worst > 1e-12 {
        return Err(format!("merge differs by {worst:e} m"));
    }
    for case in 0..500 {
        let ng = rng.random_range(0..5);
        let np = rng.random_range(0..5);
        let pose = |rng: &mut ChaCha8Rng| -> Pose {
            (0..4)
                .map(|_| rng.random_bool(0.85).then(|| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..0.6))))
                .collect()
        };
        let gt: Vec<Pose> = (0..ng).map(|_| pose(&mut rng)).collect();
        let pred: Vec<Pose> = (0..np).map(|_| pose(&mut rng)).collect();
        let got = match_predictions(&gt, &pred, f64::INFINITY);
        let got_cost: f64 = got.iter().map(|m| m.mpjpe_mm).sum();
        let want = best_assignment(&gt, &pred);
        if got.len() != ng.min(np) || (got_cost - want).abs() > 1e-6 {
            return Err(format!("matching case {case}: cost {got_cost} vs {want}"));
        }
    }
    Ok(format!("200 grouping clouds, 2000 merges (max diff {worst:.1e} m), 500 assignments"))
}

fn pose_cost(a: &Pose, b: &Pose) -> f64 {
    metrics::pose_mpjpe_mm(a, b).map_or(1e12, |(e, _)| e)
}

/// Minimum total cost over all injective maps of the smaller side into the larger.
fn best_assignment(gt: &[Pose], pred: &[Pose]) -> f64 {
    fn rec(i: usize, gt: &[Pose], pred: &[Pose], used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if i == gt.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..pred.len() {
            if !used[j] {
                used[j] = true;
                rec(i + 1, gt, pred, used, acc + pose_cost(&gt[i], &pred[j]), best);
                used[j] = false;
            }
        }
    }
    let (a, b) = if gt.len() <= pred.len() { (gt, pred) } else { (pred, gt) };
    let mut best = f64::INFINITY;
    rec(0, a, b, &mut vec![false; b.len()], 0.0, &mut best);
    if a.is_empty() {
        0.0
    } else {
        best
    }
}

fn tracking_properties() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = TrackerConfig::default();
    let cap = cfg.max_speed_mps * DT;

    // Speed cap: 500 trajectories x 20 joints.
    let mut joints_checked = 0;
    for _ in 0..500 {
        let prev = Person3D::from_joints(
            (0..20)
                .map(|_| Some(Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.0..2.0))))
                .collect(),
        );
        let scale = rng.random_range(0.0..0.6);
        let cur = Person3D::from_joints(
            prev.joints
                .iter()
                .map(|p| p.map(|p| p + Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale))
                .collect(),
        );
        let out = clip_speed(&cur, &prev, &cfg, DT);
        for ((o, p), c) in out.joints.iter().zip(&prev.joints).zip(&cur.joints) {
            let (o, p, c) = (o.unwrap(), p.unwrap(), c.unwrap());
            if (o - p).norm() / DT > cfg.max_speed_mps + 1e-9 {
                return Err("speed cap exceeded".into());
            }
            if (c - p).norm() <= cap && o != c {
                return Err("under-cap motion altered".into());
            }
            joints_checked += 1;
        }
    }

    // Identity: random walks with separation >= 10x the step.
    let step = 0.03;
    let mut frames_checked = 0;
    for trial in 0..50 {
        let k = 2 + trial % 4;
        let mut pos: Vec<Vec3> = (0..k).map(|i| Vec3::new(i as f64 * 10.0 * step * 1.5, 0.0, 1.0)).collect();
        let mut tracker = Tracker::new(cfg.clone());
        let mut ids: Option<Vec<Option<u64>>> = None;
        for _ in 0..40 {
            for p in &mut pos {
                let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                *p += Vec3::new(a.cos(), a.sin(), 0.0) * step;
            }
            let min_sep = (0..k)
                .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
                .map(|(i, j)| (pos[i] - pos[j]).norm())
                .fold(f64::INFINITY, f64::min);
            if min_sep < 10.0 * step {
                break;
            }
            let persons: Vec<Person3D> = pos
                .iter()
                .map(|c| Person3D::from_joints(vec![Some(c - Vec3::new(0.0, 0.0, 0.9)), Some(*c), Some(c + Vec3::new(0.0, 0.0, 0.7))]))
                .collect();
            let out = tracker.update(persons, DT);
            let now: Vec<Option<u64>> = out.iter().take(k).map(|p| p.track_id).collect();
            if let Some(prev) = &ids {
                if *prev != now {
                    return Err(format!("identity changed in trial {trial}"));
                }
            }
            ids = Some(now);
            frames_checked += 1;
        }
    }
    Ok(format!("{joints_checked} joints clipped within cap, {frames_checked} tracked frames kept ids"))
}

fn determinism() -> Result<String, String> {
    let bin = env!("CARGO_BIN_EXE_rpt");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(bin).args(args).output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
        }
        Ok(())
    };
    let p = |name: &str| d.join(name).display().to_string();
    run(&[
        "--seed", "11", "synth", "--out-dir", &p(""), "--frames", "10", "--noise-px", "2", "--fp-rate", "0.2",
    ])?;
    let calib = p("calibration.json");
    let det = p("detections.json");
    for (name, threads) in [("a.json", "1"), ("b.json", "1"), ("c.json", "8")] {
        run(&["--threads", threads, "run", "--calibration", &calib, "--detections", &det, "--output", &p(name)])?;
    }
    let read = |name: &str| std::fs::read(Path::new(&p(name))).unwrap();
    let (a, b, c) = (read("a.json"), read("b.json"), read("c.json"));
    if a != b || a != c {
        return Err("outputs differ".into());
    }
    Ok(format!("3 runs ({} bytes each) identical, threads 1 and 8", a.len()))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Result<String, String>)> = vec![
        ("clean-scene closure", clean_closure),
        ("two-view false-positive scenario", two_view_scenario),
        ("noise robustness", noise_robustness),
        ("shelf-scale timing", timing),
        ("whole-body scaling", wholebody_scaling),
        ("ablation directionality", ablation_directionality),
        ("camera-count scaling", camera_scaling),
        ("oracle equivalences", oracle_equivalences),
        ("tracking properties", tracking_properties),
        ("run determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| name.contains(x.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
