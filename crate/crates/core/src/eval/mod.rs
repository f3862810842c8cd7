//! Evaluation: root-relative pose error, dynamic time warping, worst-frame
//! statistics, fall detection, samples-to-success, push robustness and
//! friction sensitivity.
//!
//! ```
//! use mimic_core::eval::{dtw_align, pose_absurdity};
//!
//! let a = [0.0, 1.0, 2.0];
//! let b = [0.0, 0.0, 1.0, 1.0, 2.0, 2.0];
//! let al = dtw_align(&a, &b, |x: &f64, y: &f64| (x - y).abs()).unwrap();
//! assert_eq!(al.cost, 0.0);
//! assert_eq!(pose_absurdity(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap(), 3.5);
//! ```

mod report;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{EvalReport, EVAL_SCHEMA};

use crate::math::Vec3;
use crate::policy::{state_features, PolicyError, PolicyParams};
use crate::reference::{MotionError, ReferenceMotion, Track};
use crate::sim::{Character, SimError, SimState, StepConfig};
use crate::train::{train, IterationLog, TrainConfig, TrainError};

/// Worst-frame fractions reported as pose absurdity.
pub const ABSURDITY_FRACTIONS: [f64; 3] = [0.01, 0.05, 0.10];
/// Length of a rollout that counts as success, s.
pub const SUCCESS_SECONDS: f64 = 20.0;
/// How long a push lasts, s.
pub const PUSH_DURATION: f64 = 0.2;
/// Granularity of the push-force search, N.
pub const PUSH_RESOLUTION: f64 = 10.0;
/// The push search stops here and reports a capped result, N.
pub const PUSH_LIMIT: f64 = 5000.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty sequence")]
    Empty,
    #[error("fraction must lie in (0, 1], got {0}")]
    Fraction(f64),
    #[error("friction coefficients must be positive, got {0}")]
    Friction(f64),
    #[error("open-loop controller has no action for step {0}")]
    OpenLoopExhausted(usize),
    #[error("simulation failed at control step {step}: {source}")]
    Sim {
        step: usize,
        #[source]
        source: SimError,
    },
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Train(Box<TrainError>),
}

impl From<TrainError> for EvalError {
    fn from(e: TrainError) -> Self {
        EvalError::Train(Box::new(e))
    }
}

/// Link positions of one frame together with the point they are measured
/// from: the root link for floating characters, the world anchor for
/// characters hinged to the world.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseFrame {
    pub origin: Vec3,
    pub points: Vec<Vec3>,
}

impl PoseFrame {
    pub fn of(ch: &Character, s: &SimState) -> Self {
        Self {
            origin: ch.fixed_anchor().unwrap_or(s.links[0].p),
            points: s.links.iter().map(|l| l.p).collect(),
        }
    }

    pub fn translated(&self, d: Vec3) -> Self {
        Self {
            origin: self.origin + d,
            points: self.points.iter().map(|p| *p + d).collect(),
        }
    }
}

/// Mean distance between origin-relative link positions of two frames, m.
pub fn frame_error(a: &PoseFrame, b: &PoseFrame) -> Result<f64, EvalError> {
    if a.points.len() != b.points.len() || a.points.is_empty() {
        return Err(EvalError::Shape(format!(
            "frames hold {} and {} links",
            a.points.len(),
            b.points.len()
        )));
    }
    let sum: f64 = a
        .points
        .iter()
        .zip(&b.points)
        .map(|(p, q)| ((*p - a.origin) - (*q - b.origin)).norm())
        .sum();
    Ok(sum / a.points.len() as f64)
}

/// Frame-by-frame pose error of two sequences of equal length, m.
pub fn pose_error(sim: &[PoseFrame], reference: &[PoseFrame]) -> Result<f64, EvalError> {
    if sim.len() != reference.len() {
        return Err(EvalError::Shape(format!(
            "{} simulated frames, {} reference frames",
            sim.len(),
            reference.len()
        )));
    }
    if sim.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut sum = 0.0;
    for (a, b) in sim.iter().zip(reference) {
        sum += frame_error(a, b)?;
    }
    Ok(sum / sim.len() as f64)
}

/// Monotone pairing of two sequences found by dynamic time warping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// `(index into the first sequence, index into the second)`, from
    /// `(0, 0)` to the two last indices.
    pub path: Vec<(usize, usize)>,
    /// Sum of the frame metric along the path.
    pub cost: f64,
}

#[derive(Clone, Copy)]
enum Step {
    Diagonal,
    First,
    Second,
}

/// Dynamic time warping with steps `(1,1)`, `(1,0)`, `(0,1)`, anchored at
/// both ends. Ties prefer the diagonal step, then advancing the first
/// sequence.
pub fn dtw_align<A, B>(
    a: &[A],
    b: &[B],
    mut metric: impl FnMut(&A, &B) -> f64,
) -> Result<Alignment, EvalError> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(EvalError::Empty);
    }
    let mut acc = vec![0.0; n * m];
    let mut from = vec![Step::Diagonal; n * m];
    for i in 0..n {
        for j in 0..m {
            let c = metric(&a[i], &b[j]);
            let k = i * m + j;
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => {
                    from[k] = Step::Second;
                    acc[k - 1]
                }
                (_, 0) => {
                    from[k] = Step::First;
                    acc[k - m]
                }
                _ => {
                    let mut best = acc[k - m - 1];
                    if acc[k - m] < best {
                        best = acc[k - m];
                        from[k] = Step::First;
                    }
                    if acc[k - 1] < best {
                        best = acc[k - 1];
                        from[k] = Step::Second;
                    }
                    best
                }
            };
            acc[k] = best + c;
        }
    }
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        match from[i * m + j] {
            Step::Diagonal => {
                i -= 1;
                j -= 1;
            }
            Step::First => i -= 1,
            Step::Second => j -= 1,
        }
        path.push((i, j));
    }
    path.reverse();
    Ok(Alignment {
        path,
        cost: acc[n * m - 1],
    })
}

/// Mean of the `⌈k·T⌉` largest entries of `errors`.
pub fn pose_absurdity(errors: &[f64], k: f64) -> Result<f64, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::Empty);
    }
    if !(k > 0.0 && k <= 1.0) {
        return Err(EvalError::Fraction(k));
    }
    let count = ((k * errors.len() as f64 - 1e-9).ceil() as usize).clamp(1, errors.len());
    let mut order: Vec<usize> = (0..errors.len()).collect();
    order.sort_by(|&x, &y| errors[y].total_cmp(&errors[x]));
    let mut worst = order[..count].to_vec();
    // summing in sequence order makes k = 1 reproduce the plain mean exactly
    worst.sort_unstable();
    Ok(worst.iter().map(|&i| errors[i]).sum::<f64>() / count as f64)
}

/// DTW-aligned pose error of a rollout against its reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseErrorReport {
    /// Average of `per_frame`, m.
    pub mean: f64,
    /// Error of every aligned frame pair, in path order.
    pub per_frame: Vec<f64>,
    pub path: Vec<(usize, usize)>,
    /// `(k, L2@k)` for each of [`ABSURDITY_FRACTIONS`].
    pub absurdity: Vec<(f64, f64)>,
}

impl PoseErrorReport {
    pub fn new(sim: &[PoseFrame], reference: &[PoseFrame]) -> Result<Self, EvalError> {
        let mut failure = None;
        let al = dtw_align(sim, reference, |a, b| match frame_error(a, b) {
            Ok(e) => e,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        let per_frame = al
            .path
            .iter()
            .map(|&(i, j)| frame_error(&sim[i], &reference[j]))
            .collect::<Result<Vec<_>, _>>()?;
        let mean = per_frame.iter().sum::<f64>() / per_frame.len() as f64;
        let absurdity = ABSURDITY_FRACTIONS
            .iter()
            .map(|&k| pose_absurdity(&per_frame, k).map(|v| (k, v)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            mean,
            per_frame,
            path: al.path,
            absurdity,
        })
    }

    /// `L2@k` for one of the reported fractions.
    pub fn l2_at(&self, k: f64) -> Option<f64> {
        self.absurdity
            .iter()
            .find(|(f, _)| *f == k)
            .map(|(_, v)| *v)
    }

    /// Per-frame series as CSV: `pair,sim_frame,ref_frame,error`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair,sim_frame,ref_frame,error\n");
        for (n, (&(i, j), e)) in self.path.iter().zip(&self.per_frame).enumerate() {
            out.push_str(&format!("{n},{i},{j},{e}\n"));
        }
        out
    }
}

/// What counts as failing a rollout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SuccessCriterion {
    /// Fall when the root stays below `min_height` for `sustain_steps`
    /// consecutive control steps.
    RootHeight {
        min_height: f64,
        sustain_steps: usize,
    },
    /// Succeed when the pose error does not exceed the bound.
    PoseBound(f64),
    /// Every rollout succeeds.
    Always,
}

impl SuccessCriterion {
    pub fn for_character(ch: &Character, control_dt: f64) -> Self {
        let fall = &ch.spec().fall;
        match (fall.root_height_ratio, fall.pose_error_bound) {
            (Some(ratio), _) => Self::RootHeight {
                min_height: ratio * ch.rest_root_height(),
                sustain_steps: ((fall.sustain / control_dt - 1e-9).ceil() as usize).max(1),
            },
            (None, Some(bound)) => Self::PoseBound(bound),
            (None, None) => Self::Always,
        }
    }

    /// Same criterion with the fall height scaled to `ratio` of `rest`.
    pub fn with_height_ratio(self, ratio: f64, rest: f64) -> Self {
        match self {
            Self::RootHeight { sustain_steps, .. } => Self::RootHeight {
                min_height: ratio * rest,
                sustain_steps,
            },
            other => other,
        }
    }

    /// Decides from a pose error and the rollout's sustained-low root
    /// height (see [`sustained_low`]).
    pub fn succeeds(&self, pose_error: f64, sustained_low_root: Option<f64>) -> bool {
        match *self {
            Self::RootHeight { min_height, .. } => {
                sustained_low_root.map_or(true, |h| h >= min_height)
            }
            Self::PoseBound(b) => pose_error <= b,
            Self::Always => true,
        }
    }
}

/// Smallest height the series stays at or below for `window` consecutive
/// samples: the minimum over windows of the window maximum. A fall with
/// threshold `h` happened iff this is `< h`. `None` if the series is
/// shorter than the window.
pub fn sustained_low(heights: &[f64], window: usize) -> Option<f64> {
    if window == 0 || heights.len() < window {
        return None;
    }
    heights
        .windows(window)
        .map(|w| w.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .reduce(f64::min)
}

/// First control step at which a fall is complete, if any.
pub fn fall_step(heights: &[f64], min_height: f64, sustain: usize) -> Option<usize> {
    let mut run = 0;
    for (i, &h) in heights.iter().enumerate() {
        run = if h < min_height { run + 1 } else { 0 };
        if run >= sustain.max(1) {
            return Some(i);
        }
    }
    None
}

/// Produces actions during an evaluation rollout.
pub trait Controller {
    fn action(&mut self, step: usize, s: &SimState) -> Result<Vec<f64>, EvalError>;
}

/// A policy's mean action.
pub struct PolicyController<'a>(pub &'a PolicyParams);

impl Controller for PolicyController<'_> {
    fn action(&mut self, _step: usize, s: &SimState) -> Result<Vec<f64>, EvalError> {
        let x = state_features(s);
        Ok(self.0.mean(self.0.theta(), &x)?)
    }
}

/// A fixed action sequence, for example the targets stored in an
/// oracle-pd motion.
pub struct OpenLoop<'a>(pub &'a [Vec<f64>]);

impl Controller for OpenLoop<'_> {
    fn action(&mut self, step: usize, _s: &SimState) -> Result<Vec<f64>, EvalError> {
        self.0
            .get(step)
            .cloned()
            .ok_or(EvalError::OpenLoopExhausted(step))
    }
}

/// A constant force on the root COM over a window of control steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Push {
    pub force: Vec3,
    pub start_step: usize,
    pub steps: usize,
}

impl Push {
    fn active(&self, step: usize) -> bool {
        step >= self.start_step && step < self.start_step + self.steps
    }
}

/// Runs `ctrl` from the track's first state for `steps` control steps and
/// returns every visited state, the start state included.
pub fn run_controller(
    ch: &Character,
    track: &Track,
    ctrl: &mut dyn Controller,
    steps: usize,
    push: Option<&Push>,
) -> Result<Vec<SimState>, EvalError> {
    let cfg = StepConfig {
        cycle_period: track.cycle_period(),
        ..StepConfig::default()
    };
    let mut s = track.state(0).clone();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(s.clone());
    for t in 0..steps {
        let a = ch.clamp_action(&ctrl.action(t, &s)?);
        let force = push.filter(|p| p.active(t)).map_or(Vec3::ZERO, |p| p.force);
        s = ch
            .control_step_with_force(&s, &a, &cfg, force)
            .map_err(|source| EvalError::Sim { step: t, source })?;
        states.push(s.clone());
    }
    Ok(states)
}

/// Outcome of a deterministic evaluation rollout.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub pose: PoseErrorReport,
    /// See [`sustained_low`]; `None` for characters without a height
    /// criterion.
    pub sustained_low_root: Option<f64>,
    /// Control step at which a fall completed.
    pub fell_at: Option<usize>,
    pub steps: usize,
    pub states: Vec<SimState>,
}

impl Evaluation {
    pub fn succeeds(&self, criterion: &SuccessCriterion) -> bool {
        criterion.succeeds(self.pose.mean, self.sustained_low_root)
    }
}

/// Rolls out `ctrl` for the track's horizon and scores it against the
/// track's reference states.
pub fn evaluate(
    ch: &Character,
    track: &Track,
    ctrl: &mut dyn Controller,
    push: Option<&Push>,
) -> Result<Evaluation, EvalError> {
    let steps = track.horizon();
    let states = run_controller(ch, track, ctrl, steps, push)?;
    let sim: Vec<PoseFrame> = states[1..].iter().map(|s| PoseFrame::of(ch, s)).collect();
    let reference: Vec<PoseFrame> = (1..=steps)
        .map(|i| PoseFrame::of(ch, track.state(i)))
        .collect();
    let pose = PoseErrorReport::new(&sim, &reference)?;
    let criterion = SuccessCriterion::for_character(ch, track.control_dt());
    let (sustained_low_root, fell_at) = match criterion {
        SuccessCriterion::RootHeight {
            min_height,
            sustain_steps,
        } => {
            let heights: Vec<f64> = states[1..].iter().map(|s| s.links[0].p.z).collect();
            (
                sustained_low(&heights, sustain_steps),
                fall_step(&heights, min_height, sustain_steps),
            )
        }
        _ => (None, None),
    };
    Ok(Evaluation {
        pose,
        sustained_low_root,
        fell_at,
        steps,
        states,
    })
}

/// Evaluation horizon for success checks: [`SUCCESS_SECONDS`], shortened to
/// the motion's length for acyclic motions.
pub fn success_steps(motion: &ReferenceMotion, control_dt: f64) -> usize {
    let seconds = SUCCESS_SECONDS.min(motion.duration());
    ((seconds / control_dt + 1e-9).floor() as usize).max(1)
}

/// First logged iteration whose evaluation succeeded.
pub fn iterations_to_success(log: &[IterationLog], criterion: &SuccessCriterion) -> Option<usize> {
    log.iter()
        .find(|r| criterion.succeeds(r.pose_error, r.sustained_low_root))
        .map(|r| r.iteration)
}

/// Population standard deviation of every `window`-long run of `xs`.
pub fn rolling_std(xs: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || xs.len() < window {
        return Vec::new();
    }
    xs.windows(window)
        .map(|w| {
            let mean = w.iter().sum::<f64>() / window as f64;
            (w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / window as f64).sqrt()
        })
        .collect()
}

/// Environment samples consumed before the first logged iteration whose
/// evaluation succeeded. Iteration `i` evaluates the parameters produced by
/// `i` updates, so success at iteration 0 costs nothing.
pub fn samples_to_success(
    log: &[IterationLog],
    criterion: &SuccessCriterion,
    samples_per_iteration: u64,
) -> Option<u64> {
    iterations_to_success(log, criterion).map(|i| i as u64 * samples_per_iteration)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PushDirection {
    /// World +x.
    Forward,
    /// World +y.
    Sideways,
}

impl PushDirection {
    pub fn unit(self) -> Vec3 {
        match self {
            Self::Forward => Vec3::X,
            Self::Sideways => Vec3::Y,
        }
    }
}

impl std::str::FromStr for PushDirection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "forward" => Ok(Self::Forward),
            "sideways" => Ok(Self::Sideways),
            _ => Err(format!("unknown push direction {s:?} (forward, sideways)")),
        }
    }
}

impl fmt::Display for PushDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Forward => "forward",
            Self::Sideways => "sideways",
        })
    }
}

/// Result of a push-force search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PushReport {
    pub direction: PushDirection,
    /// Largest tested force that did not cause a fall, N; `None` if the
    /// unpushed rollout already fails.
    pub max_force: Option<f64>,
    /// No failure was found up to [`PUSH_LIMIT`].
    pub capped: bool,
    /// Every tested magnitude with its outcome, in test order.
    pub trials: Vec<(f64, bool)>,
}

/// Largest push (multiples of [`PUSH_RESOLUTION`]) applied to the root for
/// [`PUSH_DURATION`] from half a motion cycle on that the policy survives
/// over the rest of the track's horizon.
pub fn push_robustness(
    policy: &PolicyParams,
    ch: &Character,
    track: &Track,
    direction: PushDirection,
) -> Result<PushReport, EvalError> {
    let dt = track.control_dt();
    let criterion = SuccessCriterion::for_character(ch, dt);
    let start_step = (track.cycle_period() / 2.0 / dt).round() as usize;
    let steps = (PUSH_DURATION / dt).round() as usize;
    let mut trials = Vec::new();
    let survives = |units: u64, trials: &mut Vec<(f64, bool)>| -> Result<bool, EvalError> {
        let magnitude = units as f64 * PUSH_RESOLUTION;
        let push = Push {
            force: direction.unit().scale_by(magnitude),
            start_step,
            steps,
        };
        let ok = match evaluate(ch, track, &mut PolicyController(policy), Some(&push)) {
            Ok(e) => e.succeeds(&criterion),
            Err(EvalError::Sim { .. }) => false,
            Err(e) => return Err(e),
        };
        trials.push((magnitude, ok));
        Ok(ok)
    };
    let report = |max: Option<u64>, capped, trials| PushReport {
        direction,
        max_force: max.map(|u| u as f64 * PUSH_RESOLUTION),
        capped,
        trials,
    };
    if !survives(0, &mut trials)? {
        return Ok(report(None, false, trials));
    }
    let limit = (PUSH_LIMIT / PUSH_RESOLUTION) as u64;
    let (mut lo, mut hi) = (0u64, 1u64);
    while survives(hi, &mut trials)? {
        lo = hi;
        if hi == limit {
            return Ok(report(Some(lo), true, trials));
        }
        hi = (hi * 2).min(limit);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if survives(mid, &mut trials)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(report(Some(lo), false, trials))
}

/// Pose error at one friction coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrictionPoint {
    pub mu: f64,
    pub pose_error: f64,
    /// The evaluation rollout succeeded.
    pub success: bool,
}

/// Whether a sweep re-evaluates one policy or trains afresh per value.
pub enum SweepMode<'a> {
    Evaluate(&'a PolicyParams),
    Train {
        initial: &'a PolicyParams,
        config: &'a TrainConfig,
    },
}

/// Pose error per friction coefficient, in the order given.
pub fn friction_sweep(
    ch: &Character,
    motion: &ReferenceMotion,
    mus: &[f64],
    mode: SweepMode<'_>,
    eval_steps: usize,
) -> Result<Vec<FrictionPoint>, EvalError> {
    if let Some(&mu) = mus.iter().find(|&&m| !(m > 0.0 && m.is_finite())) {
        return Err(EvalError::Friction(mu));
    }
    let dt = StepConfig::default().control_dt();
    mus.iter()
        .map(|&mu| {
            let variant = ch
                .with_friction(mu)
                .map_err(|source| EvalError::Sim { step: 0, source })?;
            let track = Track::new(motion, &variant, dt, eval_steps)?;
            let criterion = SuccessCriterion::for_character(&variant, dt);
            let evaluation = match &mode {
                SweepMode::Evaluate(policy) => {
                    evaluate(&variant, &track, &mut PolicyController(policy), None)?
                }
                SweepMode::Train { initial, config } => {
                    let outcome = train(initial, &variant, motion, config, |_| {})?;
                    evaluate(
                        &variant,
                        &track,
                        &mut PolicyController(&outcome.policy),
                        None,
                    )?
                }
            };
            Ok(FrictionPoint {
                mu,
                pose_error: evaluation.pose.mean,
                success: evaluation.succeeds(&criterion),
            })
        })
        .collect()
}
