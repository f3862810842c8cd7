//! End-to-end library workflows across modules.

use mimic_core::autodiff::Op;
use mimic_core::eval::{evaluate, success_steps, OpenLoop, PolicyController, SuccessCriterion};
use mimic_core::math::Vec3;
use mimic_core::policy::{feature_dim, PolicyParams};
use mimic_core::reference::{
    generate_reference, ReferenceKind, ReferenceMotion, Track, WaveParams,
};
use mimic_core::sim::{Character, StepConfig};
use mimic_core::train::{gradcheck, train, GradCheckOptions, TrainConfig};
use tempfile::TempDir;

const CHARACTERS: [&str; 4] = ["pendulum", "acrobot", "walker", "hopper"];

fn motion(ch: &Character, kind: ReferenceKind) -> ReferenceMotion {
    generate_reference(ch, kind, &WaveParams::preset(ch, kind)).unwrap()
}

fn dt() -> f64 {
    StepConfig::default().control_dt()
}

#[test]
fn saved_artifacts_reproduce_the_trained_evaluation() {
    let dir = TempDir::new().unwrap();
    let ch = Character::builtin("acrobot").unwrap();
    let m = motion(&ch, ReferenceKind::SplineTrack);
    let motion_path = dir.path().join("acrobot.motion");
    m.save(&motion_path).unwrap();
    let m = ReferenceMotion::load(&motion_path).unwrap();

    let cfg = TrainConfig {
        iterations: 3,
        episode_steps: 20,
        batch: 2,
        hidden: vec![16],
        ..TrainConfig::default()
    };
    let initial = PolicyParams::init(feature_dim(&ch), &cfg.hidden, ch.action_dim(), cfg.seed);
    let out = train(&initial, &ch, &m, &cfg, |_| {}).unwrap();
    assert_eq!(out.log.len(), 3);

    let policy_path = dir.path().join("policy.json");
    out.policy.save(ch.name(), &policy_path).unwrap();
    let (name, policy) = PolicyParams::load(&policy_path).unwrap();
    assert_eq!(name, "acrobot");
    assert_eq!(policy.theta(), out.policy.theta());

    let track = Track::new(&m, &ch, dt(), cfg.eval_steps()).unwrap();
    let again = evaluate(&ch, &track, &mut PolicyController(&policy), None).unwrap();
    assert_eq!(
        again.pose.mean.to_bits(),
        out.evaluation.pose.mean.to_bits()
    );
}

#[test]
fn gradients_agree_with_finite_differences_for_every_character_and_motion() {
    for name in CHARACTERS {
        let ch = Character::builtin(name).unwrap();
        for kind in [ReferenceKind::SplineTrack, ReferenceKind::OraclePd] {
            let m = motion(&ch, kind);
            let cfg = TrainConfig {
                episode_steps: 12,
                hidden: vec![16, 16],
                ..TrainConfig::default()
            };
            let policy = PolicyParams::init(feature_dim(&ch), &cfg.hidden, ch.action_dim(), 3);
            let track = Track::new(&m, &ch, dt(), cfg.episode_steps).unwrap();
            let report =
                gradcheck(&policy, &ch, &track, &cfg, &GradCheckOptions::default()).unwrap();
            assert!(
                report.passed,
                "{name} {kind:?}: {}",
                report.max_relative_error
            );
            let bad = GradCheckOptions {
                corrupt: Some((Op::Mul, 1.2)),
                ..GradCheckOptions::default()
            };
            let report = gradcheck(&policy, &ch, &track, &cfg, &bad).unwrap();
            assert!(!report.passed, "{name} {kind:?}: corrupted adjoint passed");
        }
    }
}

#[test]
fn oracle_motions_replay_open_loop_for_their_full_length() {
    for name in CHARACTERS {
        let ch = Character::builtin(name).unwrap();
        let m = motion(&ch, ReferenceKind::OraclePd);
        let steps = success_steps(&m, dt());
        let track = Track::new(&m, &ch, dt(), steps).unwrap();
        let actions = m.actions.clone().unwrap();
        let e = evaluate(&ch, &track, &mut OpenLoop(&actions), None).unwrap();
        assert!(e.pose.mean < 1e-6, "{name}: {}", e.pose.mean);
        assert!(
            e.succeeds(&SuccessCriterion::for_character(&ch, dt())),
            "{name}"
        );
    }
}

#[test]
fn a_zero_policy_holds_a_pendulum_at_rest() {
    // With a resting reference every visited state matches, so the pose
    // error is exactly zero.
    let ch = Character::builtin("pendulum").unwrap();
    let frames = vec![ch.rest_state().links; 31];
    let m = ReferenceMotion::new(
        ch.name(),
        ch.link_names(),
        30.0,
        false,
        Vec3::ZERO,
        frames,
        None,
    )
    .unwrap();
    let policy = PolicyParams::zeros(feature_dim(&ch), &[4], ch.action_dim());
    let track = Track::new(&m, &ch, dt(), 30).unwrap();
    let e = evaluate(&ch, &track, &mut PolicyController(&policy), None).unwrap();
    assert_eq!(e.pose.mean, 0.0);
}
