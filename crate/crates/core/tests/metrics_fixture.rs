//! Two-frame fixture with hand-computed metric values.

use approx::assert_relative_eq;
use rapidpose::metrics::{evaluate, EvalOptions, Pose};
use rapidpose::{builtin_joint_set, JointSet, Vec3};

fn template(set: &JointSet, offset: Vec3) -> Pose {
    let at = |name: &str| -> Vec3 {
        let (x, z) = match name {
            "left_shoulder" => (0.2, 1.4),
            "right_shoulder" => (-0.2, 1.4),
            "left_elbow" => (0.2, 1.1),
            "right_elbow" => (-0.2, 1.1),
            "left_wrist" => (0.2, 0.85),
            "right_wrist" => (-0.2, 0.85),
            "left_hip" => (0.1, 0.9),
            "right_hip" => (-0.1, 0.9),
            "left_knee" => (0.1, 0.5),
            "right_knee" => (-0.1, 0.5),
            "left_ankle" => (0.1, 0.1),
            "right_ankle" => (-0.1, 0.1),
            "head" => (0.0, 1.6),
            other => panic!("unexpected joint {other}"),
        };
        Vec3::new(x, 0.0, z) + offset
    };
    set.joint_names.iter().map(|n| Some(at(n))).collect()
}

#[test]
fn two_frame_fixture_matches_hand_values() {
    let set = builtin_joint_set("eval13").unwrap();
    let wrist = set.index_of("left_wrist").unwrap();
    let head = set.index_of("head").unwrap();

    // Frame 0: one person predicted 10 mm off plus a ghost 3 m away.
    let a = template(&set, Vec3::zeros());
    let a_pred = template(&set, Vec3::new(0.01, 0.0, 0.0));
    let ghost = template(&set, Vec3::new(3.0, 0.0, 0.0));

    // Frame 1: one person exact except a wrist 120 mm off and a missing head; a second person missed.
    let b = template(&set, Vec3::new(1.0, 1.0, 0.0));
    let c = template(&set, Vec3::new(-1.0, -1.0, 0.0));
    let mut b_pred = b.clone();
    b_pred[wrist] = b_pred[wrist].map(|p| p + Vec3::new(0.0, 0.0, 0.12));
    b_pred[head] = None;

    let gt = vec![vec![a], vec![b, c]];
    let pred = vec![vec![ghost, a_pred], vec![b_pred]];
    let r = evaluate(&gt, &pred, &set, &set, &EvalOptions::default()).unwrap();

    // 13 errors of 10 mm, 11 of 0 mm, one of 120 mm.
    assert_relative_eq!(r.mpjpe, 250.0 / 25.0, epsilon = 1e-9);
    assert_relative_eq!(r.pck["100"], 96.0, epsilon = 1e-9);
    assert_relative_eq!(r.pck["500"], 100.0, epsilon = 1e-9);
    // Two of three people matched within 100 mm (10 mm each).
    assert_relative_eq!(r.recall["100"], 200.0 / 3.0, epsilon = 1e-9);
    assert_relative_eq!(r.recall["500"], 200.0 / 3.0, epsilon = 1e-9);
    assert_relative_eq!(r.invalid, 100.0 / 3.0, epsilon = 1e-9);
    assert_relative_eq!(r.f1, 200.0 / 3.0, epsilon = 1e-9);
    // 10 parts per person; the missed person contributes none. The 120 mm wrist
    // error is below half the 250 mm forearm.
    assert_relative_eq!(r.pcp, 200.0 / 3.0, epsilon = 1e-9);
    assert_relative_eq!(r.per_joint_mpjpe[wrist], 65.0, epsilon = 1e-9);
    assert_relative_eq!(r.per_joint_mpjpe[head], 10.0, epsilon = 1e-9);
    assert_eq!((r.gt_persons, r.pred_persons, r.matched), (3, 3, 2));
}

#[test]
fn tighter_match_threshold_unmatches_people() {
    let set = builtin_joint_set("eval13").unwrap();
    let a = template(&set, Vec3::zeros());
    let off = template(&set, Vec3::new(0.2, 0.0, 0.0));
    let opts = EvalOptions {
        match_threshold_mm: 150.0,
        ..EvalOptions::default()
    };
    let r = evaluate(&[vec![a]], &[vec![off]], &set, &set, &opts).unwrap();
    assert_eq!(r.matched, 0);
    assert_eq!(r.invalid, 100.0);
    assert_eq!(r.recall["500"], 0.0);
}
