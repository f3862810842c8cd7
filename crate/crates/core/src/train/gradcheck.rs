//! Analytic rollout gradients against central finite differences.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{env_rng, rollout, TrainConfig, TrainError};
use crate::autodiff::{Op, Tape};
use crate::policy::PolicyParams;
use crate::reference::Track;
use crate::sim::Character;

/// Finite-difference steps probed, largest first.
pub const GRADCHECK_STEPS: [f64; 3] = [1e-4, 1e-5, 1e-6];
/// Maximum relative error for a pass.
pub const GRADCHECK_TOLERANCE: f64 = 1e-3;
/// Entries smaller than this fraction of the largest sampled gradient entry
/// are judged against that floor instead of their own magnitude; their
/// central differences carry roundoff of the same absolute size as the
/// large entries'.
pub const GRADCHECK_FLOOR: f64 = 1e-5;
/// Fewest coordinates a check may sample.
pub const GRADCHECK_MIN_COORDS: usize = 32;

/// Options of one gradient check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckOptions {
    /// Parameter coordinates sampled; clamped to the parameter count.
    pub coords: usize,
    /// Seeds both the coordinate draw and the rollout noise.
    pub seed: u64,
    /// Scale the adjoint of one primitive kind (negative control).
    pub corrupt: Option<(Op, f64)>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            coords: GRADCHECK_MIN_COORDS,
            seed: 0,
            corrupt: None,
        }
    }
}

/// Finite-difference estimates at one step size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepProbe {
    pub h: f64,
    pub numeric: Vec<f64>,
    pub max_relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub coords: Vec<usize>,
    pub analytic: Vec<f64>,
    pub probes: Vec<StepProbe>,
    /// Smallest per-step maximum error over [`GRADCHECK_STEPS`].
    pub max_relative_error: f64,
    pub best_h: f64,
    /// Denominator floor, see [`GRADCHECK_FLOOR`].
    pub floor: f64,
    pub passed: bool,
    pub loss: f64,
}

/// `|a − n| / max(|a|, |n|, floor)`, zero when all three vanish.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(floor);
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Compares the taped rollout-loss gradient with central differences of the
/// plain rollout loss on a random coordinate subset. Both passes draw the
/// same noise, so the comparison is between two derivatives of one
/// deterministic function.
pub fn gradcheck(
    policy: &PolicyParams,
    ch: &Character,
    track: &Track,
    cfg: &TrainConfig,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, TrainError> {
    let n = policy.param_count();
    let count = opts.coords.clamp(1, n);
    let mut pick = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut coords = sample(&mut pick, n, count).into_vec();
    coords.sort_unstable();

    let tape = Tape::new();
    if let Some((op, factor)) = opts.corrupt {
        tape.corrupt_adjoint(op, factor);
    }
    let theta = tape.leaves(policy.theta());
    let out = rollout(
        policy,
        &theta,
        ch,
        track,
        cfg,
        &mut env_rng(opts.seed, 0, 0),
    )?;
    let loss = out.loss.value();
    let full = tape
        .gradient(out.loss, &theta)
        .map_err(|e| TrainError::Eval(format!("backward pass: {e}")))?;
    let analytic: Vec<f64> = coords.iter().map(|&k| full[k]).collect();

    let loss_at = |k: usize, dx: f64| -> Result<f64, TrainError> {
        let mut th = policy.theta().to_vec();
        th[k] += dx;
        let r = rollout::<f64>(policy, &th, ch, track, cfg, &mut env_rng(opts.seed, 0, 0))?;
        Ok(r.loss)
    };
    let floor = GRADCHECK_FLOOR * analytic.iter().fold(0.0, |m: f64, a| m.max(a.abs()));
    let mut probes = Vec::with_capacity(GRADCHECK_STEPS.len());
    for h in GRADCHECK_STEPS {
        let mut numeric = Vec::with_capacity(count);
        for &k in &coords {
            numeric.push((loss_at(k, h)? - loss_at(k, -h)?) / (2.0 * h));
        }
        let max_relative_error = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| relative_error(*a, *n, floor))
            .fold(0.0, f64::max);
        probes.push(StepProbe {
            h,
            numeric,
            max_relative_error,
        });
    }
    let best = probes
        .iter()
        .min_by(|a, b| a.max_relative_error.total_cmp(&b.max_relative_error))
        .expect("at least one step");
    let (max_relative_error, best_h) = (best.max_relative_error, best.h);
    Ok(GradCheckReport {
        coords,
        analytic,
        passed: max_relative_error < GRADCHECK_TOLERANCE,
        max_relative_error,
        best_h,
        floor,
        probes,
        loss,
    })
}
