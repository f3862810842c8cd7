//! Policy optimization through the differentiable simulator.
//!
//! Each iteration rolls out a batch of environments, one tape per
//! environment, sums the per-step state distance to the reference over the
//! simulated states, differentiates that loss with respect to the policy
//! parameters and applies one Adam step to the batch-mean gradient.
//!
//! Demonstration replay feeds the reference state instead of the simulated
//! one into the next transition. The simulated state still enters the loss;
//! the replaced input is a constant, so no gradient crosses a replayed step.
//!
//! * [`ReplayMode::Random`] replays with probability `γ` per step.
//! * [`ReplayMode::Threshold`] replays when the state distance reaches `ε`.

mod ablation;
mod config;
mod gradcheck;

use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ablation::{
    ablation_variants, AblationAxis, Variant, RANDOM_REPLAY_RATES, REPLAY_THRESHOLDS,
    TRUNCATION_STEPS,
};
pub use config::{ReplayMode, TrainConfig};
pub use gradcheck::{
    gradcheck, relative_error, GradCheckOptions, GradCheckReport, StepProbe, GRADCHECK_FLOOR,
    GRADCHECK_MIN_COORDS, GRADCHECK_STEPS, GRADCHECK_TOLERANCE,
};

use crate::autodiff::{Real, Tape};
use crate::eval::{evaluate, EvalError, Evaluation, PolicyController};
use crate::policy::{feature_dim, state_features, Adam, PolicyError, PolicyParams};
use crate::reference::{MotionError, ReferenceMotion, Track};
use crate::sim::{Character, LossWeights, SimError, SimState, StepConfig};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training config: {0}")]
    Config(String),
    #[error("states hold {0} and {1} links")]
    LinkCount(usize, usize),
    #[error("simulation failed at rollout step {step}: {source}")]
    Sim {
        step: usize,
        #[source]
        source: SimError,
    },
    #[error("training diverged at iteration {iteration}: {}", .diagnostics.summary)]
    Diverged {
        iteration: usize,
        diagnostics: Box<Diagnostics>,
    },
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("evaluation: {0}")]
    Eval(String),
}

/// State of a failed iteration, written out for post-mortem inspection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iteration: usize,
    pub summary: String,
    /// Per environment: its loss, or the error that stopped it.
    pub environments: Vec<String>,
    pub grad_norm: Option<f64>,
    pub theta_norm: f64,
}

/// The four weighted terms of the state distance, each averaged over links.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub position: f64,
    pub rotation: f64,
    pub velocity: f64,
    pub angular_velocity: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.position + self.rotation + self.velocity + self.angular_velocity
    }
}

fn distance_terms<R: Real>(
    s: &SimState<R>,
    r: &SimState<R>,
    w: &LossWeights,
) -> Result<[R; 4], TrainError> {
    if s.links.len() != r.links.len() {
        return Err(TrainError::LinkCount(s.links.len(), r.links.len()));
    }
    let sq = |a: &[R], b: &[R]| {
        let d: Vec<R> = a.iter().zip(b).map(|(x, y)| *x - *y).collect();
        R::dot(&d, &d)
    };
    let mut t = [R::zero(); 4];
    for (a, b) in s.links.iter().zip(&r.links) {
        t[0] += sq(&a.p.to_array(), &b.p.to_array());
        t[1] += sq(&a.q.to_rot6().0, &b.q.to_rot6().0);
        t[2] += sq(&a.v.to_array(), &b.v.to_array());
        t[3] += sq(&a.w.to_array(), &b.w.to_array());
    }
    let n = s.links.len() as f64;
    let weights = [w.position, w.rotation, w.velocity, w.angular_velocity];
    Ok(std::array::from_fn(|k| t[k] * (weights[k] / n)))
}

/// Weighted squared distance between two states, averaged over links:
/// world positions, 6D world rotations, linear and angular velocities.
pub fn state_distance<R: Real>(
    s: &SimState<R>,
    r: &SimState<R>,
    w: &LossWeights,
) -> Result<R, TrainError> {
    let [p, q, v, a] = distance_terms(s, r, w)?;
    Ok(p + q + v + a)
}

/// Whether step `t` starts from the reference state. Only the random mode
/// draws from `rng`.
pub fn replay_decide(
    mode: &ReplayMode,
    s: &SimState,
    reference: &SimState,
    w: &LossWeights,
    rng: &mut impl Rng,
) -> Result<bool, TrainError> {
    Ok(match *mode {
        ReplayMode::None => false,
        ReplayMode::Random { gamma } => rng.gen_bool(gamma),
        ReplayMode::Threshold { epsilon } => state_distance(s, reference, w)? >= epsilon,
    })
}

/// Random stream of environment `env` in iteration `iteration`. Streams are
/// independent of each other and of thread scheduling.
pub fn env_rng(seed: u64, iteration: usize, env: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((iteration as u64) << 24) | env as u64);
    rng
}

/// Everything a rollout did, as plain values.
#[derive(Clone, Debug)]
pub struct RolloutRecord {
    /// Reference index the rollout started from.
    pub start: usize,
    /// Simulated states `s_1 … s_T`.
    pub states: Vec<SimState>,
    /// Policy outputs `a_0 … a_{T−1}` before clamping to joint limits.
    pub actions: Vec<Vec<f64>>,
    /// Standard normal draws behind each action.
    pub noise: Vec<Vec<f64>>,
    /// Step `t` started from the reference state.
    pub replayed: Vec<bool>,
    /// Distance of `s_{t+1}` to its reference, split by term.
    pub terms: Vec<LossTerms>,
    pub loss: f64,
}

impl RolloutRecord {
    pub fn replay_fraction(&self) -> f64 {
        self.replayed.iter().filter(|r| **r).count() as f64 / self.replayed.len() as f64
    }

    /// Every stored number and flag is bitwise equal.
    pub fn bitwise_eq(&self, o: &Self) -> bool {
        let bits =
            |v: &[Vec<f64>]| -> Vec<u64> { v.iter().flatten().map(|x| x.to_bits()).collect() };
        let term_bits = |t: &[LossTerms]| -> Vec<u64> {
            t.iter()
                .flat_map(|t| [t.position, t.rotation, t.velocity, t.angular_velocity])
                .map(f64::to_bits)
                .collect()
        };
        self.start == o.start
            && self.states.len() == o.states.len()
            && self
                .states
                .iter()
                .zip(&o.states)
                .all(|(a, b)| a.bitwise_eq(b))
            && bits(&self.actions) == bits(&o.actions)
            && bits(&self.noise) == bits(&o.noise)
            && self.replayed == o.replayed
            && term_bits(&self.terms) == term_bits(&o.terms)
            && self.loss.to_bits() == o.loss.to_bits()
    }
}

/// A rollout's record plus its loss as a (possibly taped) scalar.
pub struct Rollout<R> {
    pub record: RolloutRecord,
    pub loss: R,
}

/// Rolls out the stochastic policy with parameters `theta` for
/// `cfg.episode_steps` control steps against `track`.
///
/// Random draws, in order: the start index (with RSI), then per step the
/// replay coin (random mode only) and the action noise.
pub fn rollout<R: Real>(
    policy: &PolicyParams,
    theta: &[R],
    ch: &Character,
    track: &Track,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Rollout<R>, TrainError> {
    let steps = cfg.episode_steps;
    if track.horizon() < steps {
        return Err(TrainError::Config(format!(
            "track covers {} steps, the episode needs {steps}",
            track.horizon()
        )));
    }
    let w = cfg.loss_weights(ch);
    let step_cfg = StepConfig {
        cycle_period: track.cycle_period(),
        ..StepConfig::default()
    };
    let start = if cfg.rsi {
        rng.gen_range(0..track.starts())
    } else {
        0
    };
    let mut record = RolloutRecord {
        start,
        states: Vec::with_capacity(steps),
        actions: Vec::with_capacity(steps),
        noise: Vec::with_capacity(steps),
        replayed: Vec::with_capacity(steps),
        terms: Vec::with_capacity(steps),
        loss: 0.0,
    };
    let mut loss = R::zero();
    let mut s: SimState<R> = SimState::constant(track.state(start));
    for t in 0..steps {
        let reference = track.state(start + t);
        let replay = replay_decide(&cfg.replay, &s.value(), reference, &w, rng)?;
        let input = if replay {
            SimState::constant(reference)
        } else if cfg.truncation.is_some_and(|n| t > 0 && t % n == 0) {
            s.stop_gradient()
        } else {
            s
        };
        let noise: Vec<f64> = (0..ch.action_dim())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let a = policy.sample(theta, &state_features(&input), &noise)?;
        let next = ch
            .control_step(&input, &ch.clamp_action(&a), &step_cfg)
            .map_err(|source| TrainError::Sim { step: t, source })?;
        let terms = distance_terms(&next, &SimState::constant(track.state(start + t + 1)), &w)?;
        let d = terms[0] + terms[1] + terms[2] + terms[3];
        loss += d;
        record.terms.push(LossTerms {
            position: terms[0].value(),
            rotation: terms[1].value(),
            velocity: terms[2].value(),
            angular_velocity: terms[3].value(),
        });
        record.actions.push(a.iter().map(|x| x.value()).collect());
        record.noise.push(noise);
        record.replayed.push(replay);
        record.states.push(next.value());
        s = next;
    }
    record.loss = loss.value();
    Ok(Rollout { record, loss })
}

/// One rollout on a fresh tape: its record and the loss gradient with
/// respect to the policy parameters. With `cfg.truncation = Some(n)` the
/// state is cut from the graph every `n` steps.
pub fn rollout_gradient(
    policy: &PolicyParams,
    ch: &Character,
    track: &Track,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(RolloutRecord, Vec<f64>), TrainError> {
    let tape = Tape::new();
    let theta = tape.leaves(policy.theta());
    let out = rollout(policy, &theta, ch, track, cfg, rng)?;
    let grad = tape
        .gradient(out.loss, &theta)
        .unwrap_or_else(|_| vec![0.0; theta.len()]);
    Ok((out.record, grad))
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationLog {
    pub iteration: usize,
    /// Batch-mean rollout loss.
    pub loss: f64,
    /// DTW pose error of the deterministic evaluation rollout, m.
    pub pose_error: f64,
    /// Fraction of replayed steps over the batch.
    pub replay_fraction: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
    pub lr: f64,
    /// Evaluation horizon, control steps.
    pub eval_steps: usize,
    /// Lowest root height held for the fall window during evaluation.
    pub sustained_low_root: Option<f64>,
}

impl IterationLog {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log record serializes")
    }
}

/// Result of [`train`].
pub struct TrainOutcome {
    pub policy: PolicyParams,
    pub log: Vec<IterationLog>,
    /// Deterministic evaluation of the returned policy.
    pub evaluation: Evaluation,
}

fn eval_error(e: EvalError) -> TrainError {
    TrainError::Eval(e.to_string())
}

/// Runs `cfg.iterations` optimization iterations starting from `initial`,
/// calling `on_iteration` after each one.
pub fn train(
    initial: &PolicyParams,
    ch: &Character,
    motion: &ReferenceMotion,
    cfg: &TrainConfig,
    mut on_iteration: impl FnMut(&IterationLog),
) -> Result<TrainOutcome, TrainError> {
    train_until(initial, ch, motion, cfg, |r| {
        on_iteration(r);
        ControlFlow::Continue(())
    })
}

/// [`train`] that stops early once the callback breaks. The learning-rate
/// schedule still spans `cfg.iterations`, so a stopped run is a prefix of
/// the full one.
pub fn train_until(
    initial: &PolicyParams,
    ch: &Character,
    motion: &ReferenceMotion,
    cfg: &TrainConfig,
    mut on_iteration: impl FnMut(&IterationLog) -> ControlFlow<()>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if initial.input_dim() != feature_dim(ch) || initial.action_dim() != ch.action_dim() {
        return Err(TrainError::Config(format!(
            "policy maps {} features to {} actions, {} needs {} and {}",
            initial.input_dim(),
            initial.action_dim(),
            ch.name(),
            feature_dim(ch),
            ch.action_dim()
        )));
    }
    let dt = StepConfig::default().control_dt();
    let track = Track::new(motion, ch, dt, cfg.episode_steps)?;
    let eval_track = Track::new(motion, ch, dt, cfg.eval_steps())?;
    let mut policy = initial.clone();
    let mut adam = Adam::new(policy.param_count(), cfg.iterations);
    adam.lr = cfg.learning_rate;
    let mut log = Vec::with_capacity(cfg.iterations);
    let batch = cfg.batch;
    for iteration in 0..cfg.iterations {
        let results: Vec<Result<(RolloutRecord, Vec<f64>), TrainError>> = (0..batch)
            .into_par_iter()
            .map(|env| {
                let mut rng = env_rng(cfg.seed, iteration, env);
                rollout_gradient(&policy, ch, &track, cfg, &mut rng)
            })
            .collect();
        let diverged =
            |summary: String, environments: Vec<String>, grad_norm| TrainError::Diverged {
                iteration,
                diagnostics: Box::new(Diagnostics {
                    iteration,
                    summary,
                    environments,
                    grad_norm,
                    theta_norm: policy.theta().iter().map(|x| x * x).sum::<f64>().sqrt(),
                }),
            };
        let describe = |results: &[Result<(RolloutRecord, Vec<f64>), TrainError>]| {
            results
                .iter()
                .enumerate()
                .map(|(e, r)| match r {
                    Ok((rec, _)) => format!("env {e}: loss {}", rec.loss),
                    Err(err) => format!("env {e}: {err}"),
                })
                .collect::<Vec<_>>()
        };
        if let Some(Err(e)) = results.iter().find(|r| r.is_err()) {
            return Err(diverged(e.to_string(), describe(&results), None));
        }
        let n = policy.param_count();
        let mut grad = vec![0.0; n];
        let (mut loss, mut replayed) = (0.0, 0.0);
        for (rec, g) in results.iter().flatten() {
            for (acc, x) in grad.iter_mut().zip(g) {
                *acc += x;
            }
            loss += rec.loss;
            replayed += rec.replay_fraction();
        }
        let b = batch as f64;
        grad.iter_mut().for_each(|g| *g /= b);
        let (loss, replay_fraction) = (loss / b, replayed / b);
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !loss.is_finite() || !grad_norm.is_finite() {
            return Err(diverged(
                format!("non-finite loss {loss} or gradient norm {grad_norm}"),
                describe(&results),
                Some(grad_norm),
            ));
        }
        let evaluation =
            evaluate(ch, &eval_track, &mut PolicyController(&policy), None).map_err(|e| {
                diverged(
                    format!("evaluation rollout: {e}"),
                    describe(&results),
                    Some(grad_norm),
                )
            })?;
        let report = adam.update(policy.theta_mut(), &grad);
        let record = IterationLog {
            iteration,
            loss,
            pose_error: evaluation.pose.mean,
            replay_fraction,
            grad_norm: report.grad_norm,
            lr: report.lr,
            eval_steps: evaluation.steps,
            sustained_low_root: evaluation.sustained_low_root,
        };
        let flow = on_iteration(&record);
        log.push(record);
        if flow.is_break() {
            break;
        }
    }
    let evaluation =
        evaluate(ch, &eval_track, &mut PolicyController(&policy), None).map_err(eval_error)?;
    Ok(TrainOutcome {
        policy,
        log,
        evaluation,
    })
}

#[cfg(test)]
mod tests;
