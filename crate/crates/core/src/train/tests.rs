use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::Var;
use crate::math::{UnitQuat, Vec3};
use crate::reference::{generate_reference, ReferenceKind, WaveParams};
use crate::sim::LinkState;

struct Task {
    ch: Character,
    motion: ReferenceMotion,
    policy: PolicyParams,
}

fn task(name: &str, kind: ReferenceKind, hidden: &[usize]) -> Task {
    let ch = Character::builtin(name).unwrap();
    let motion = generate_reference(&ch, kind, &WaveParams::preset(&ch, kind)).unwrap();
    let policy = PolicyParams::init(feature_dim(&ch), hidden, ch.action_dim(), 7);
    Task { ch, motion, policy }
}

fn pendulum() -> Task {
    task("pendulum", ReferenceKind::SplineTrack, &[16, 16])
}

fn track(t: &Task, steps: usize) -> Track {
    Track::new(&t.motion, &t.ch, StepConfig::default().control_dt(), steps).unwrap()
}

fn cfg(steps: usize) -> TrainConfig {
    TrainConfig {
        episode_steps: steps,
        ..TrainConfig::default()
    }
}

fn f64_loss(t: &Task, theta: &[f64], tr: &Track, c: &TrainConfig, rng: ChaCha8Rng) -> f64 {
    let mut rng = rng;
    rollout(&t.policy, theta, &t.ch, tr, c, &mut rng)
        .unwrap()
        .loss
}

fn with(theta: &[f64], k: usize, dx: f64) -> Vec<f64> {
    let mut v = theta.to_vec();
    v[k] += dx;
    v
}

fn central(f: impl Fn(&[f64]) -> f64, theta: &[f64], k: usize, h: f64) -> f64 {
    (f(&with(theta, k, h)) - f(&with(theta, k, -h))) / (2.0 * h)
}

// ---- state distance ----

fn rot6_oracle(q: &UnitQuat) -> [f64; 6] {
    // rotate the basis vectors with the quaternion sandwich product
    let rot = |v: [f64; 3]| {
        let (w, x, y, z) = (q.w, q.x, q.y, q.z);
        let t = [
            -x * v[0] - y * v[1] - z * v[2],
            w * v[0] + y * v[2] - z * v[1],
            w * v[1] + z * v[0] - x * v[2],
            w * v[2] + x * v[1] - y * v[0],
        ];
        let (cw, cx, cy, cz) = (w, -x, -y, -z);
        [
            t[0] * cx + t[1] * cw + t[2] * cz - t[3] * cy,
            t[0] * cy + t[2] * cw + t[3] * cx - t[1] * cz,
            t[0] * cz + t[3] * cw + t[1] * cy - t[2] * cx,
        ]
    };
    let a = rot([1.0, 0.0, 0.0]);
    let b = rot([0.0, 1.0, 0.0]);
    [a[0], a[1], a[2], b[0], b[1], b[2]]
}

fn distance_oracle(s: &SimState, r: &SimState, w: &LossWeights) -> f64 {
    let mut total = 0.0;
    for (a, b) in s.links.iter().zip(&r.links) {
        let sq =
            |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
        total += w.position * sq(&a.p.to_array(), &b.p.to_array())
            + w.rotation * sq(&rot6_oracle(&a.q), &rot6_oracle(&b.q))
            + w.velocity * sq(&a.v.to_array(), &b.v.to_array())
            + w.angular_velocity * sq(&a.w.to_array(), &b.w.to_array());
    }
    total / s.links.len() as f64
}

fn random_state(ch: &Character, rng: &mut ChaCha8Rng) -> SimState {
    let mut s = ch.rest_state();
    let v3 = |rng: &mut ChaCha8Rng| {
        Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
    };
    for l in &mut s.links {
        let axis = v3(rng);
        l.p = v3(rng);
        l.q = UnitQuat::from_axis_angle(axis.scale_by(1.0 / axis.norm()), rng.gen_range(-3.0..3.0));
        l.v = v3(rng);
        l.w = v3(rng);
    }
    s
}

#[test]
fn identical_states_are_at_distance_zero() {
    let t = task("walker", ReferenceKind::OraclePd, &[8]);
    let s = t.motion.state_at(&t.ch, 1.3).unwrap();
    let d = state_distance(&s, &s, &t.ch.spec().loss_weights).unwrap();
    assert_eq!(d, 0.0);
}

#[test]
fn unit_root_displacement_of_a_single_link_costs_one() {
    let ch = Character::builtin("pendulum").unwrap();
    let s = ch.rest_state();
    let mut r = s.clone();
    r.links[0].p += Vec3::new(0.0, 1.0, 0.0);
    let w = LossWeights {
        position: 1.0,
        ..LossWeights::default()
    };
    assert_eq!(state_distance(&s, &r, &w).unwrap(), 1.0);
}

#[test]
fn distance_matches_an_independent_scalar_computation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for name in ["acrobot", "walker", "hopper"] {
        let ch = Character::builtin(name).unwrap();
        for _ in 0..5 {
            let (a, b) = (random_state(&ch, &mut rng), random_state(&ch, &mut rng));
            let w = LossWeights {
                position: rng.gen_range(0.0..2.0),
                rotation: rng.gen_range(0.0..2.0),
                velocity: rng.gen_range(0.0..2.0),
                angular_velocity: rng.gen_range(0.0..2.0),
            };
            let d = state_distance(&a, &b, &w).unwrap();
            let o = distance_oracle(&a, &b, &w);
            assert!((d - o).abs() <= 1e-12 * o.max(1.0), "{name}: {d} vs {o}");
        }
    }
}

#[test]
fn distance_rejects_link_count_mismatch() {
    let a = Character::builtin("pendulum").unwrap().rest_state();
    let b = Character::builtin("acrobot").unwrap().rest_state();
    let w = LossWeights::default();
    assert!(matches!(
        state_distance(&a, &b, &w),
        Err(TrainError::LinkCount(1, 2))
    ));
}

proptest! {
    #[test]
    fn distance_is_zero_only_for_matching_states(
        link in 0usize..5, field in 0usize..4, comp in 0usize..3, delta in 1e-6f64..1.0
    ) {
        let ch = Character::builtin("walker").unwrap();
        let s = ch.rest_state();
        let mut r = s.clone();
        let l: &mut LinkState = &mut r.links[link];
        let bump = |v: &mut Vec3| match comp { 0 => v.x += delta, 1 => v.y += delta, _ => v.z += delta };
        match field {
            0 => bump(&mut l.p),
            1 => l.q = UnitQuat::from_axis_angle([Vec3::X, Vec3::Y, Vec3::Z][comp], delta).mul(&l.q),
            2 => bump(&mut l.v),
            _ => bump(&mut l.w),
        }
        let w = LossWeights::default();
        prop_assert!(state_distance(&s, &r, &w).unwrap() > 0.0);
        prop_assert_eq!(state_distance(&s, &s, &w).unwrap(), 0.0);
    }
}

// ---- replay decisions ----

#[test]
fn replay_decisions_follow_their_mode() {
    let t = task("acrobot", ReferenceKind::SplineTrack, &[8]);
    let w = t.ch.spec().loss_weights;
    let s = t.motion.state_at(&t.ch, 0.0).unwrap();
    let r = t.motion.state_at(&t.ch, 0.5).unwrap();
    let d = state_distance(&s, &r, &w).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let thr = |epsilon| ReplayMode::Threshold { epsilon };
    assert!(!replay_decide(&thr(0.1), &s, &s, &w, &mut rng).unwrap());
    assert!(replay_decide(&thr(d), &s, &r, &w, &mut rng).unwrap());
    assert!(!replay_decide(&thr(d * 1.000001), &s, &r, &w, &mut rng).unwrap());
    assert!(!replay_decide(&ReplayMode::None, &s, &r, &w, &mut rng).unwrap());
    for _ in 0..200 {
        assert!(!replay_decide(&ReplayMode::Random { gamma: 0.0 }, &s, &r, &w, &mut rng).unwrap());
        assert!(replay_decide(&ReplayMode::Random { gamma: 1.0 }, &s, &r, &w, &mut rng).unwrap());
    }
}

// ---- rollouts ----

#[test]
fn single_step_gradient_matches_finite_differences() {
    let t = pendulum();
    let tr = track(&t, 1);
    let c = cfg(1);
    let (rec, g) = rollout_gradient(&t.policy, &t.ch, &tr, &c, &mut env_rng(3, 0, 0)).unwrap();
    assert_eq!(rec.states.len(), 1);
    assert_eq!(rec.actions.len(), 1);
    assert_eq!(rec.replayed, vec![false]);
    let theta = t.policy.theta();
    let f = |th: &[f64]| f64_loss(&t, th, &tr, &c, env_rng(3, 0, 0));
    let mut worst: f64 = 0.0;
    for k in 0..theta.len() {
        let fd = central(f, theta, k, 1e-6);
        worst = worst.max((g[k] - fd).abs() / (fd.abs() + 1e-6));
    }
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn sixty_step_pendulum_gradient_matches_finite_differences() {
    let t = task("pendulum", ReferenceKind::SplineTrack, &[64, 64]);
    let tr = track(&t, 60);
    let c = cfg(60);
    let (_, g) = rollout_gradient(&t.policy, &t.ch, &tr, &c, &mut env_rng(5, 0, 0)).unwrap();
    let theta = t.policy.theta();
    let n = theta.len();
    // the dominant coordinate of each parameter block; central differences
    // on near-zero entries are swamped by roundoff at this step size
    let argmax = |r: std::ops::Range<usize>| {
        r.max_by(|&a, &b| g[a].abs().total_cmp(&g[b].abs()))
            .unwrap()
    };
    let picks = [
        argmax(0..n / 3),
        argmax(n / 3..2 * n / 3),
        argmax(2 * n / 3..n - 2),
        n - 2,
        n - 1,
    ];
    let f = |th: &[f64]| f64_loss(&t, th, &tr, &c, env_rng(5, 0, 0));
    for k in picks {
        let fd = central(f, theta, k, 1e-5);
        let rel = (g[k] - fd).abs() / g[k].abs().max(fd.abs());
        assert!(
            rel < 1e-6,
            "theta[{k}]: analytic {} vs fd {fd} (rel {rel})",
            g[k]
        );
    }
}

#[test]
fn full_replay_restarts_every_transition_from_the_reference() {
    let t = task("acrobot", ReferenceKind::SplineTrack, &[8]);
    let tr = track(&t, 20);
    let c = TrainConfig {
        replay: ReplayMode::Random { gamma: 1.0 },
        ..cfg(20)
    };
    let rec = rollout::<f64>(
        &t.policy,
        t.policy.theta(),
        &t.ch,
        &tr,
        &c,
        &mut env_rng(1, 0, 0),
    )
    .unwrap()
    .record;
    assert!(rec.replayed.iter().all(|r| *r));
    let step_cfg = StepConfig {
        cycle_period: tr.cycle_period(),
        ..StepConfig::default()
    };
    let w = t.ch.spec().loss_weights;
    let mut expected = 0.0;
    for k in 0..20 {
        let next =
            t.ch.control_step(tr.state(k), &t.ch.clamp_action(&rec.actions[k]), &step_cfg)
                .unwrap();
        assert!(next.bitwise_eq(&rec.states[k]));
        expected += state_distance(&next, tr.state(k + 1), &w).unwrap();
    }
    assert_eq!(rec.loss, expected);
}

#[test]
fn rollouts_with_equal_seeds_are_bitwise_identical() {
    let t = task("hopper", ReferenceKind::OraclePd, &[8]);
    let tr = track(&t, 6);
    let c = TrainConfig {
        replay: ReplayMode::Random { gamma: 0.3 },
        rsi: true,
        ..cfg(6)
    };
    let run = || rollout_gradient(&t.policy, &t.ch, &tr, &c, &mut env_rng(9, 4, 2)).unwrap();
    let ((a, ga), (b, gb)) = (run(), run());
    assert!(a.bitwise_eq(&b));
    assert_eq!(
        ga.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        gb.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn infinite_threshold_is_bitwise_the_same_as_no_replay() {
    let t = task("acrobot", ReferenceKind::SplineTrack, &[8]);
    let tr = track(&t, 30);
    let none = cfg(30);
    let inf = TrainConfig {
        replay: ReplayMode::Threshold {
            epsilon: f64::INFINITY,
        },
        ..cfg(30)
    };
    let (a, ga) = rollout_gradient(&t.policy, &t.ch, &tr, &none, &mut env_rng(2, 0, 0)).unwrap();
    let (b, gb) = rollout_gradient(&t.policy, &t.ch, &tr, &inf, &mut env_rng(2, 0, 0)).unwrap();
    assert!(a.bitwise_eq(&b));
    assert!(ga.iter().zip(&gb).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn raising_the_threshold_never_raises_the_replay_rate() {
    let t = task("acrobot", ReferenceKind::SplineTrack, &[16]);
    let tr = track(&t, 60);
    let mut last = f64::INFINITY;
    for epsilon in [1e-4, 1e-3, 1e-2, 0.05, 0.2, 0.4, 1.0, 10.0] {
        let c = TrainConfig {
            replay: ReplayMode::Threshold { epsilon },
            ..cfg(60)
        };
        let rate = rollout::<f64>(
            &t.policy,
            t.policy.theta(),
            &t.ch,
            &tr,
            &c,
            &mut env_rng(4, 0, 0),
        )
        .unwrap()
        .record
        .replay_fraction();
        assert!(rate <= last, "epsilon {epsilon}: rate {rate} above {last}");
        last = rate;
    }
}

#[test]
fn batch_gradient_is_the_mean_of_rollout_gradients() {
    let t = pendulum();
    let tr = track(&t, 15);
    let c = TrainConfig {
        replay: ReplayMode::Random { gamma: 0.2 },
        ..cfg(15)
    };
    let tape = Tape::new();
    let theta: Vec<Var> = tape.leaves(t.policy.theta());
    let mut total = Var::constant(0.0);
    let mut each = Vec::new();
    for env in 0..3 {
        let out = rollout(&t.policy, &theta, &t.ch, &tr, &c, &mut env_rng(8, 0, env)).unwrap();
        total += out.loss;
        each.push(
            rollout_gradient(&t.policy, &t.ch, &tr, &c, &mut env_rng(8, 0, env))
                .unwrap()
                .1,
        );
    }
    let joint = tape.gradient(total * (1.0 / 3.0), &theta).unwrap();
    for k in 0..joint.len() {
        let mean = (each[0][k] + each[1][k] + each[2][k]) / 3.0;
        assert!(
            (joint[k] - mean).abs() <= 1e-12 * mean.abs().max(1.0),
            "k {k}"
        );
    }
}

// ---- truncation ----

#[test]
fn truncation_at_the_horizon_equals_the_full_gradient_bitwise() {
    let t = task("acrobot", ReferenceKind::SplineTrack, &[8]);
    let tr = track(&t, 25);
    let full = cfg(25);
    let cut = TrainConfig {
        truncation: Some(25),
        ..cfg(25)
    };
    let (a, ga) = rollout_gradient(&t.policy, &t.ch, &tr, &full, &mut env_rng(6, 0, 0)).unwrap();
    let (b, gb) = rollout_gradient(&t.policy, &t.ch, &tr, &cut, &mut env_rng(6, 0, 0)).unwrap();
    assert!(a.bitwise_eq(&b));
    assert!(ga.iter().zip(&gb).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn unit_truncation_keeps_only_per_step_action_gradients() {
    let t = task("acrobot", ReferenceKind::SplineTrack, &[8]);
    let tr = track(&t, 12);
    let c = TrainConfig {
        truncation: Some(1),
        ..cfg(12)
    };
    let (rec, g) = rollout_gradient(&t.policy, &t.ch, &tr, &c, &mut env_rng(12, 0, 0)).unwrap();
    let step_cfg = StepConfig {
        cycle_period: tr.cycle_period(),
        ..StepConfig::default()
    };
    let w = t.ch.spec().loss_weights;
    // each step from its recorded (frozen) start state
    let decomposed = |th: &[f64]| -> f64 {
        let mut total = 0.0;
        for k in 0..12 {
            let from = if k == 0 {
                tr.state(0)
            } else {
                &rec.states[k - 1]
            };
            let a = t
                .policy
                .sample(th, &state_features(from), &rec.noise[k])
                .unwrap();
            let next =
                t.ch.control_step(from, &t.ch.clamp_action(&a), &step_cfg)
                    .unwrap();
            total += state_distance(&next, tr.state(k + 1), &w).unwrap();
        }
        total
    };
    let theta = t.policy.theta();
    assert!((decomposed(theta) - rec.loss).abs() <= 1e-12 * rec.loss);
    for k in 0..theta.len() {
        let fd = central(decomposed, theta, k, 1e-5);
        // absolute floor: roundoff of a central difference on a loss of O(1)
        assert!(
            (g[k] - fd).abs() <= 1e-5 * fd.abs() + 1e-9,
            "theta[{k}]: {} vs {fd}",
            g[k]
        );
    }
    let (_, full) =
        rollout_gradient(&t.policy, &t.ch, &tr, &cfg(12), &mut env_rng(12, 0, 0)).unwrap();
    assert!(full.iter().zip(&g).any(|(a, b)| (a - b).abs() > 1e-6));
}

// ---- training loop ----

fn tiny(iterations: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        episode_steps: 10,
        batch: 3,
        seed: 21,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_iterations_return_the_policy_unchanged() {
    let t = pendulum();
    let out = train(&t.policy, &t.ch, &t.motion, &tiny(0), |_| {}).unwrap();
    assert!(out.log.is_empty());
    assert_eq!(out.policy, t.policy);
}

#[test]
fn training_logs_are_reproducible() {
    let t = pendulum();
    let run = || {
        let mut lines = Vec::new();
        let out = train(&t.policy, &t.ch, &t.motion, &tiny(4), |r| {
            lines.push(r.to_json_line())
        })
        .unwrap();
        (lines, out)
    };
    let ((a, pa), (b, pb)) = (run(), run());
    assert_eq!(a.len(), 4);
    assert_eq!(a, b);
    assert_eq!(pa.policy, pb.policy);
    let adam = Adam::new(1, 4);
    for (i, r) in pa.log.iter().enumerate() {
        assert_eq!(r.iteration, i);
        assert_eq!(r.lr, adam.lr_at(i));
        assert!(r.loss.is_finite() && r.pose_error.is_finite() && r.grad_norm > 0.0);
        assert_eq!(r.replay_fraction, 0.0);
        let back: IterationLog = serde_json::from_str(&r.to_json_line()).unwrap();
        assert_eq!(&back, r);
    }
    assert_ne!(pa.policy, t.policy);
}

#[test]
fn training_lowers_the_pendulum_loss() {
    let t = pendulum();
    let c = TrainConfig {
        iterations: 40,
        episode_steps: 30,
        batch: 4,
        learning_rate: 3e-3,
        ..TrainConfig::default()
    };
    let out = train(&t.policy, &t.ch, &t.motion, &c, |_| {}).unwrap();
    let first = out.log[0].loss;
    let last = out.log.last().unwrap().loss;
    assert!(last < 0.5 * first, "loss {first} -> {last}");
}

#[test]
fn non_finite_parameters_abort_with_the_iteration() {
    let t = pendulum();
    let mut bad = t.policy.clone();
    bad.theta_mut()[0] = f64::NAN;
    match train(&bad, &t.ch, &t.motion, &tiny(2), |_| {}) {
        Err(TrainError::Diverged {
            iteration,
            diagnostics,
        }) => {
            assert_eq!(iteration, 0);
            assert_eq!(diagnostics.environments.len(), 3);
        }
        other => panic!("expected divergence, got {:?}", other.err()),
    }
}

#[test]
fn policy_shape_must_fit_the_character() {
    let t = pendulum();
    let walker = Character::builtin("walker").unwrap();
    let err = train(&t.policy, &walker, &t.motion, &tiny(1), |_| {})
        .err()
        .unwrap();
    assert!(matches!(err, TrainError::Config(_)), "{err}");
}

// ---- configuration ----

#[test]
fn config_ranges_are_checked() {
    let ok = TrainConfig::default();
    assert!(ok.validate().is_ok());
    let bad = [
        TrainConfig {
            batch: 0,
            ..ok.clone()
        },
        TrainConfig {
            episode_steps: 0,
            ..ok.clone()
        },
        TrainConfig {
            replay: ReplayMode::Random { gamma: 1.5 },
            ..ok.clone()
        },
        TrainConfig {
            replay: ReplayMode::Threshold { epsilon: 0.0 },
            ..ok.clone()
        },
        TrainConfig {
            truncation: Some(0),
            ..ok.clone()
        },
        TrainConfig {
            truncation: Some(121),
            ..ok.clone()
        },
        TrainConfig {
            weights: Some(LossWeights {
                velocity: -1.0,
                ..LossWeights::default()
            }),
            ..ok.clone()
        },
    ];
    for c in bad {
        assert!(matches!(c.validate(), Err(TrainError::Config(_))), "{c:?}");
    }
}

#[test]
fn replay_modes_parse_and_print() {
    for s in ["none", "random:0.05", "threshold:0.2", "threshold:inf"] {
        let m: ReplayMode = s.parse().unwrap();
        assert_eq!(m.to_string(), s);
    }
    assert!("sometimes".parse::<ReplayMode>().is_err());
    assert!("random:x".parse::<ReplayMode>().is_err());
}

#[test]
fn config_round_trips_through_toml_and_fills_defaults() {
    let empty: TrainConfig = toml::from_str("").unwrap();
    assert_eq!(empty, TrainConfig::default());
    let c = TrainConfig {
        replay: ReplayMode::Threshold { epsilon: 0.4 },
        truncation: Some(10),
        rsi: true,
        ..TrainConfig::default()
    };
    let text = toml::to_string(&c).unwrap();
    assert_eq!(toml::from_str::<TrainConfig>(&text).unwrap(), c);
    let inline: TrainConfig =
        toml::from_str("replay = { mode = \"random\", gamma = 0.1 }").unwrap();
    assert_eq!(inline.replay, ReplayMode::Random { gamma: 0.1 });
    assert!(toml::from_str::<TrainConfig>("iterationz = 3").is_err());
}

// ---- gradient check ----

#[test]
fn gradcheck_passes_on_the_pendulum_and_fails_when_corrupted() {
    let t = pendulum();
    let tr = track(&t, 30);
    let c = cfg(30);
    let opts = GradCheckOptions::default();
    let ok = gradcheck(&t.policy, &t.ch, &tr, &c, &opts).unwrap();
    assert_eq!(ok.coords.len(), GRADCHECK_MIN_COORDS);
    assert_eq!(
        ok.probes.iter().map(|p| p.h).collect::<Vec<_>>(),
        GRADCHECK_STEPS
    );
    assert!(ok.passed, "max relative error {}", ok.max_relative_error);
    let bad = GradCheckOptions {
        corrupt: Some((crate::autodiff::Op::Affine, 1.5)),
        ..opts
    };
    let corrupted = gradcheck(&t.policy, &t.ch, &tr, &c, &bad).unwrap();
    assert!(!corrupted.passed);
    assert_eq!(corrupted.coords, ok.coords);
}

#[test]
fn relative_error_is_scale_free() {
    assert_eq!(relative_error(0.0, 0.0, 0.0), 0.0);
    assert_eq!(relative_error(2.0, 1.0, 0.0), 0.5);
    assert_eq!(relative_error(2e-9, 1e-9, 0.0), 0.5);
    assert_eq!(relative_error(2e-9, 1e-9, 1e-6), 1e-3);
}
