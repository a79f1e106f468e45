use rapidpose::synth::{build_fixture, project_pose, CorruptionSpec, SceneSpec};
use rapidpose::builtin_joint_set;

#[test]
fn pixel_noise_has_requested_spread() {
    let sigma = 3.0;
    let mut spec = SceneSpec::new(3, 5, builtin_joint_set("body20").unwrap(), 21);
    spec.n_frames = 20;
    let fx = build_fixture(&spec, &CorruptionSpec::noisy(sigma, 4)).unwrap();
    let mut residuals = Vec::new();
    for ((views, who), poses) in fx.detections.frames.iter().zip(&fx.detections.assignment).zip(&fx.scene.frames) {
        for (view, owners) in views.iter().zip(who) {
            let cam = fx.scene.rig.get(&view.view).unwrap();
            for (det, owner) in view.detections.iter().zip(owners) {
                let clean = project_pose(&poses[owner.unwrap()], cam);
                for (noisy, truth) in det.joints.iter().zip(&clean) {
                    let d = noisy - truth.unwrap();
                    residuals.extend([d.x, d.y]);
                }
            }
        }
    }
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let std = (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(n > 10_000.0);
    assert!(mean.abs() < 0.1, "mean {mean}");
    assert!((std / sigma - 1.0).abs() < 0.05, "std {std}");
}

#[test]
fn false_positive_count_is_binomial() {
    let rate = 0.3;
    let mut spec = SceneSpec::new(2, 6, builtin_joint_set("body20").unwrap(), 8);
    spec.n_frames = 200;
    let corruption = CorruptionSpec {
        false_positive_rate: rate,
        seed: 17,
        ..CorruptionSpec::default()
    };
    let fx = build_fixture(&spec, &corruption).unwrap();
    let trials = (spec.n_frames * spec.n_cameras) as f64;
    let hits = fx
        .detections
        .assignment
        .iter()
        .flatten()
        .flatten()
        .filter(|o| o.is_none())
        .count() as f64;
    let expected = trials * rate;
    let sd = (trials * rate * (1.0 - rate)).sqrt();
    assert!((hits - expected).abs() < 4.0 * sd, "{hits} false positives, expected {expected} +- {sd}");
}

#[test]
fn same_seed_same_fixture() {
    let spec = SceneSpec::new(4, 5, builtin_joint_set("body20").unwrap(), 77);
    let c = CorruptionSpec {
        occlusion_rate: 0.2,
        false_positive_rate: 0.2,
        swap_rate: 0.1,
        ..CorruptionSpec::noisy(2.0, 9)
    };
    let a = build_fixture(&spec, &c).unwrap();
    let b = build_fixture(&spec, &c).unwrap();
    assert_eq!(a.detections, b.detections);
    assert_eq!(a.scene.frames, b.scene.frames);
}
