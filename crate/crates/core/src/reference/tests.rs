use proptest::prelude::*;

use super::*;
use crate::sim::{Character, StepConfig};

fn link(p: [f64; 3]) -> LinkState {
    LinkState {
        p: Vec3::from_array(p),
        q: UnitQuat::identity(),
        v: Vec3::ZERO,
        w: Vec3::ZERO,
    }
}

fn two_frame_text() -> String {
    let m = ReferenceMotion::new(
        "ball",
        vec!["ball".into()],
        30.0,
        false,
        Vec3::ZERO,
        vec![vec![link([0.0, 0.0, 1.0])], vec![link([0.1, 0.0, 1.0])]],
        None,
    )
    .unwrap();
    m.to_jsonl()
}

/// One link sliding forward 0.3 m per cycle over 4 frames.
fn sliding_cycle() -> ReferenceMotion {
    let frames = (0..4)
        .map(|i| {
            let mut l = link([0.1 * i as f64, 0.0, 1.0]);
            l.v = Vec3::new(3.0, 0.0, 0.0);
            vec![l]
        })
        .collect();
    ReferenceMotion::new(
        "ball",
        vec!["ball".into()],
        30.0,
        true,
        Vec3::new(0.3, 0.0, 0.0),
        frames,
        None,
    )
    .unwrap()
}

fn spline(name: &str) -> (Character, ReferenceMotion) {
    let ch = Character::builtin(name).unwrap();
    let params = WaveParams::preset(&ch, ReferenceKind::SplineTrack);
    let m = generate_reference(&ch, ReferenceKind::SplineTrack, &params).unwrap();
    (ch, m)
}

#[test]
fn two_frame_file_spans_one_control_step() {
    let m = ReferenceMotion::from_jsonl(&two_frame_text()).unwrap();
    assert_eq!(m.frame_count(), 2);
    assert_eq!(m.cycle_period(), 1.0 / 30.0);
}

#[test]
fn near_unit_quaternions_are_renormalized() {
    let text =
        two_frame_text().replacen("\"q\":[1.0,0.0,0.0,0.0]", "\"q\":[-0.999,0.0,0.0,0.0]", 1);
    let m = ReferenceMotion::from_jsonl(&text).unwrap();
    let q = m.frames[0][0].q;
    assert!((q.norm() - 1.0).abs() <= 1e-9);
    assert!(q.w > 0.0);
}

#[test]
fn invalid_frames_are_rejected_with_their_index() {
    let text = two_frame_text();
    let nan = text.replacen("\"p\":[0.1,0.0,1.0]", "\"p\":[0.1,NaN,1.0]", 1);
    let err = ReferenceMotion::from_jsonl(&nan).unwrap_err().to_string();
    assert!(err.starts_with("frame 1"), "{err}");

    let nan = text.replacen("\"q\":[1.0,0.0,0.0,0.0]", "\"q\":[1.0,0.0,0.0,1e400]", 1);
    assert!(ReferenceMotion::from_jsonl(&nan)
        .unwrap_err()
        .to_string()
        .starts_with("frame 0"));

    let swapped = text.replacen("\"frame\":1", "\"frame\":0", 1);
    let err = ReferenceMotion::from_jsonl(&swapped)
        .unwrap_err()
        .to_string();
    assert!(err.starts_with("frame 1"), "{err}");

    let short = text.replacen("\"q\":[1.0,0.0,0.0,0.0]", "\"q\":[0.5,0.0,0.0,0.0]", 1);
    assert!(ReferenceMotion::from_jsonl(&short)
        .unwrap_err()
        .to_string()
        .starts_with("frame 0"));

    assert!(ReferenceMotion::from_jsonl(&text.replace("motion/v1", "motion/v2")).is_err());
    assert!(ReferenceMotion::from_jsonl(&text.replace("\"frames\":2", "\"frames\":3")).is_err());
    assert!(ReferenceMotion::from_jsonl("").is_err());
}

#[test]
fn lookup_at_zero_is_the_first_frame() {
    let (ch, m) = spline("acrobot");
    let (links, phase) = m.links_at(0.0).unwrap();
    assert_eq!(links, m.frames[0]);
    assert_eq!(phase, 0.0);
    let s = m.state_at(&ch, 0.0).unwrap();
    assert_eq!(s.links, m.frames[0]);
}

#[test]
fn one_cycle_later_is_the_first_frame_shifted_by_the_offset() {
    let m = sliding_cycle();
    let (links, phase) = m.links_at(m.cycle_period()).unwrap();
    assert_eq!(links[0].p, m.frames[0][0].p + m.cycle_offset);
    assert_eq!(links[0].v, m.frames[0][0].v);
    assert_eq!(phase, 0.0);
    let (links, _) = m.links_at(2.0 * m.cycle_period() + 1.0 / 30.0).unwrap();
    assert!((links[0].p.x - (0.1 + 0.6)).abs() < 1e-12);
}

#[test]
fn midpoint_lookup_averages_neighbours() {
    let (_, m) = spline("acrobot");
    let (links, _) = m.links_at(1.5 / 30.0).unwrap();
    for (l, (a, b)) in links.iter().zip(m.frames[1].iter().zip(&m.frames[2])) {
        let mid = (a.p + b.p).scale_by(0.5);
        assert!((l.p - mid).norm() < 1e-12);
        let vmid = (a.v + b.v).scale_by(0.5);
        assert!((l.v - vmid).norm() < 1e-12);
        let qmid = a.q.slerp(&b.q, 0.5);
        assert!(l.q.angle_to(&qmid) < 1e-12);
    }
}

#[test]
fn acyclic_lookup_past_the_end_is_an_error() {
    let m = ReferenceMotion::from_jsonl(&two_frame_text()).unwrap();
    assert!(m.links_at(1.0 / 30.0).is_ok());
    assert!(matches!(
        m.links_at(0.5),
        Err(MotionError::OutOfRange { .. })
    ));
    assert!(m.links_at(-0.1).is_err());
}

#[test]
fn cyclic_boundary_mismatch_needs_an_offset() {
    let mut m = sliding_cycle();
    m.cycle_offset = Vec3::ZERO;
    assert!(ReferenceMotion::new(
        &m.character.clone(),
        m.link_names.clone(),
        m.fps,
        true,
        Vec3::ZERO,
        m.frames.clone(),
        None
    )
    .is_err());
}

#[test]
fn save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["pendulum", "walker"] {
        let ch = Character::builtin(name).unwrap();
        for kind in [ReferenceKind::SplineTrack, ReferenceKind::OraclePd] {
            let mut params = WaveParams::preset(&ch, kind);
            params.duration = 1.0;
            let m = generate_reference(&ch, kind, &params).unwrap();
            let a = dir.path().join("a.motion");
            let b = dir.path().join("b.motion");
            m.save(&a).unwrap();
            let back = ReferenceMotion::load(&a).unwrap();
            assert_eq!(back, m);
            back.save(&b).unwrap();
            assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        }
    }
}

#[test]
fn zero_amplitude_spline_stays_at_rest() {
    let ch = Character::builtin("pendulum").unwrap();
    let mut params = WaveParams::preset(&ch, ReferenceKind::SplineTrack);
    params.amplitude = vec![0.0];
    let m = generate_reference(&ch, ReferenceKind::SplineTrack, &params).unwrap();
    let rest = ch.rest_state();
    for f in &m.frames {
        assert_eq!(f, &rest.links);
    }
}

#[test]
fn spline_outside_joint_limits_is_infeasible() {
    let ch = Character::builtin("pendulum").unwrap();
    let mut params = WaveParams::preset(&ch, ReferenceKind::SplineTrack);
    params.amplitude = vec![3.5];
    assert!(matches!(
        generate_reference(&ch, ReferenceKind::SplineTrack, &params),
        Err(MotionError::Infeasible(_))
    ));
    params.amplitude = vec![0.1, 0.1];
    assert!(generate_reference(&ch, ReferenceKind::SplineTrack, &params).is_err());
}

#[test]
fn spline_velocities_match_central_differences_to_second_order() {
    // max |(p[i+1] − p[i−1]) / 2h − v[i]| should shrink ~4× when h halves
    let fd_error = |fps: f64| -> f64 {
        let ch = Character::builtin("acrobot").unwrap();
        let mut params = WaveParams::preset(&ch, ReferenceKind::SplineTrack);
        params.fps = fps;
        let m = generate_reference(&ch, ReferenceKind::SplineTrack, &params).unwrap();
        let h = 1.0 / fps;
        let mut worst = 0.0f64;
        for i in 1..m.frame_count() - 1 {
            for l in 0..m.link_names.len() {
                let fd = (m.frames[i + 1][l].p - m.frames[i - 1][l].p).scale_by(0.5 / h);
                worst = worst.max((fd - m.frames[i][l].v).norm());
            }
        }
        worst
    };
    let (coarse, fine) = (fd_error(30.0), fd_error(60.0));
    assert!(coarse < 2e-2, "{coarse}");
    let order = (coarse / fine).log2();
    assert!((order - 2.0).abs() < 0.1, "observed order {order}");
}

#[test]
fn oracle_pd_replays_open_loop_from_its_start() {
    for name in ["pendulum", "acrobot", "walker", "hopper"] {
        let ch = Character::builtin(name).unwrap();
        let params = WaveParams::preset(&ch, ReferenceKind::OraclePd);
        let m = generate_reference(&ch, ReferenceKind::OraclePd, &params).unwrap();
        let actions = m.actions.as_ref().unwrap();
        let cfg = StepConfig::with_period(m.cycle_period());
        let mut s = m.state_at(&ch, 0.0).unwrap();
        for (t, a) in actions.iter().enumerate().take(30) {
            s = ch.control_step(&s, a, &cfg).unwrap();
            for (x, y) in s.links.iter().zip(&m.frames[t + 1]) {
                assert!((x.p - y.p).norm() < 1e-6, "{name} step {t}");
                assert!((x.v - y.v).norm() < 1e-6, "{name} step {t}");
            }
        }
    }
}

#[test]
fn oracle_pd_presets_stay_upright() {
    for name in ["walker", "hopper"] {
        let ch = Character::builtin(name).unwrap();
        let params = WaveParams::preset(&ch, ReferenceKind::OraclePd);
        let m = generate_reference(&ch, ReferenceKind::OraclePd, &params).unwrap();
        let floor = ch.spec().fall.root_height_ratio.unwrap() * ch.rest_root_height();
        let lowest = m
            .frames
            .iter()
            .map(|f| f[0].p.z)
            .fold(f64::INFINITY, f64::min);
        assert!(lowest > floor, "{name} root dropped to {lowest}");
    }
}

#[test]
fn motions_only_match_their_character() {
    let (_, m) = spline("acrobot");
    assert!(m
        .check_character(&Character::builtin("acrobot").unwrap())
        .is_ok());
    assert!(matches!(
        m.check_character(&Character::builtin("pendulum").unwrap()),
        Err(MotionError::Character { .. })
    ));
}

proptest! {
    #[test]
    fn cyclic_lookup_is_periodic(t in 0.0f64..10.0) {
        for m in [sliding_cycle(), spline("walker").1] {
            let period = m.cycle_period();
            let (a, pa) = m.links_at(t).unwrap();
            let (b, pb) = m.links_at(t + period).unwrap();
            prop_assert!((pa - pb).abs() < 1e-9 || (pa - pb).abs() > 1.0 - 1e-9);
            let (ra, rb) = (a[0].p, b[0].p);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(((x.p - ra) - (y.p - rb)).norm() < 1e-9);
                prop_assert!(x.q.angle_to(&y.q) < 1e-7);
                prop_assert!((x.v - y.v).norm() < 1e-9);
            }
        }
    }
}
