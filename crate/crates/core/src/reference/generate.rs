use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use super::{MotionError, ReferenceMotion, DEFAULT_FPS};
use crate::math::Vec3;
use crate::sim::{Character, StepConfig};

/// How a reference is produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    /// Joint angles follow sinusoids; link states come from forward
    /// kinematics. Floating roots stay at their rest pose. Cyclic.
    SplineTrack,
    /// The simulator tracks sinusoidal PD targets from the rest state and the
    /// visited states are recorded, so the motion is dynamically feasible.
    /// Acyclic; the targets are stored as the motion's actions.
    OraclePd,
}

impl std::str::FromStr for ReferenceKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "spline-track" => Ok(Self::SplineTrack),
            "oracle-pd" => Ok(Self::OraclePd),
            other => Err(format!(
                "unknown reference kind {other:?} (spline-track, oracle-pd)"
            )),
        }
    }
}

/// Per-actuator sinusoid `bias + amplitude·sin(2πt/period + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveParams {
    pub amplitude: Vec<f64>,
    pub bias: Vec<f64>,
    /// Phase offsets, rad.
    pub phase: Vec<f64>,
    /// Shared period, s.
    pub period: f64,
    /// Length of an oracle-pd recording, s. Spline tracks span one period.
    pub duration: f64,
    pub fps: f64,
}

impl WaveParams {
    /// Default motion for a character and generator kind.
    pub fn preset(ch: &Character, kind: ReferenceKind) -> Self {
        let wave = |amplitude: Vec<f64>, bias: Vec<f64>, phase: Vec<f64>, period: f64| Self {
            amplitude,
            bias,
            phase,
            period,
            duration: 4.0,
            fps: DEFAULT_FPS,
        };
        match (ch.name(), kind) {
            ("pendulum", _) => wave(vec![0.5], vec![0.0], vec![0.0], 2.0),
            ("acrobot", _) => wave(vec![0.6, 0.8], vec![0.0, 0.0], vec![0.0, FRAC_PI_2], 2.0),
            // in-phase bow: the torso leans forward as the knees bend so
            // the mass center stays over the feet (hip ≈ −2.95·knee)
            ("walker", _) => wave(
                vec![0.44, 0.15, 0.44, 0.15],
                vec![-0.44, 0.15, -0.44, 0.15],
                vec![FRAC_PI_2, -FRAC_PI_2, FRAC_PI_2, -FRAC_PI_2],
                1.0,
            ),
            ("hopper", _) => wave(vec![0.25, 0.25], vec![0.0, 0.0], vec![0.0, PI], 1.0),
            _ => {
                let acts = ch.actuators();
                let amplitude = acts.iter().map(|a| 0.3 * (a.hi - a.lo) / 2.0).collect();
                let bias = acts.iter().map(|a| (a.hi + a.lo) / 2.0).collect();
                let phase = (0..acts.len()).map(|i| i as f64 * FRAC_PI_2).collect();
                wave(amplitude, bias, phase, 2.0)
            }
        }
    }

    fn at(&self, i: usize, t: f64) -> (f64, f64) {
        let w = TAU / self.period;
        let arg = w * t + self.phase[i];
        (
            self.bias[i] + self.amplitude[i] * arg.sin(),
            self.amplitude[i] * w * arg.cos(),
        )
    }

    fn frames_over(&self, seconds: f64) -> Result<usize, MotionError> {
        let n = seconds * self.fps;
        if !(n >= 1.0) || (n - n.round()).abs() > 1e-9 {
            return Err(MotionError::Infeasible(format!(
                "{seconds} s is not a whole number of frames at {} fps",
                self.fps
            )));
        }
        Ok(n.round() as usize + 1)
    }

    fn check(&self, ch: &Character) -> Result<(), MotionError> {
        let n = ch.action_dim();
        for (name, v) in [
            ("amplitude", &self.amplitude),
            ("bias", &self.bias),
            ("phase", &self.phase),
        ] {
            if v.len() != n {
                return Err(MotionError::Infeasible(format!(
                    "{name} has {} entries, {} has {n} actuators",
                    v.len(),
                    ch.name()
                )));
            }
        }
        if !(self.period > 0.0 && self.fps > 0.0 && self.duration > 0.0) {
            return Err(MotionError::Infeasible(
                "period, duration and fps must be positive".into(),
            ));
        }
        for (i, act) in ch.actuators().iter().enumerate() {
            let (lo, hi) = (
                self.bias[i] - self.amplitude[i].abs(),
                self.bias[i] + self.amplitude[i].abs(),
            );
            if lo < act.lo || hi > act.hi {
                return Err(MotionError::Infeasible(format!(
                    "actuator {i} sweeps [{lo}, {hi}], outside its limits [{}, {}]",
                    act.lo, act.hi
                )));
            }
        }
        Ok(())
    }
}

/// Builds a reference motion for `ch`.
pub fn generate_reference(
    ch: &Character,
    kind: ReferenceKind,
    params: &WaveParams,
) -> Result<ReferenceMotion, MotionError> {
    params.check(ch)?;
    match kind {
        ReferenceKind::SplineTrack => spline_track(ch, params),
        ReferenceKind::OraclePd => oracle_pd(ch, params),
    }
}

fn spline_track(ch: &Character, params: &WaveParams) -> Result<ReferenceMotion, MotionError> {
    let n = params.frames_over(params.period)?;
    let first_joint = ch.nq() - ch.action_dim();
    let first_joint_vel = ch.nv() - ch.action_dim();
    let mut frames = Vec::with_capacity(n);
    for f in 0..n {
        let t = f as f64 / params.fps;
        let mut q = ch.rest_coords();
        let mut u = vec![0.0; ch.nv()];
        for i in 0..ch.action_dim() {
            let (angle, rate) = params.at(i, t);
            q[first_joint + i] = angle;
            u[first_joint_vel + i] = rate;
        }
        frames.push(ch.state_from_coords(q, u, 0.0)?.links);
    }
    // the sampled cycle closes on itself; copy the first frame so the
    // boundary is exact rather than equal to round-off
    frames[n - 1] = frames[0].clone();
    ReferenceMotion::new(
        ch.name(),
        ch.link_names(),
        params.fps,
        true,
        Vec3::ZERO,
        frames,
        None,
    )
}

fn oracle_pd(ch: &Character, params: &WaveParams) -> Result<ReferenceMotion, MotionError> {
    let n = params.frames_over(params.duration)?;
    let cfg = StepConfig {
        dt: 1.0 / (params.fps * crate::sim::SUBSTEPS as f64),
        ..StepConfig::with_period(params.duration)
    };
    let mut s = ch.rest_state();
    let mut frames = vec![s.links.clone()];
    let mut actions = Vec::with_capacity(n - 1);
    for f in 0..n - 1 {
        let t = f as f64 / params.fps;
        let a: Vec<f64> = (0..ch.action_dim()).map(|i| params.at(i, t).0).collect();
        s = ch.control_step(&s, &a, &cfg)?;
        frames.push(s.links.clone());
        actions.push(a);
    }
    ReferenceMotion::new(
        ch.name(),
        ch.link_names(),
        params.fps,
        false,
        Vec3::ZERO,
        frames,
        Some(actions),
    )
}
