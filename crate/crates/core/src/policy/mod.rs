//! Stochastic MLP policy, state features and the Adam optimizer.
//!
//! All parameters live in one flat vector θ: for each layer the row-major
//! weight matrix followed by its bias, then the per-action log standard
//! deviations. Keeping θ flat lets the same forward pass run on `f64` or on
//! taped [`Var`](crate::autodiff::Var)s, and lets the optimizer treat the
//! policy as a plain slice.
//!
//! ```
//! use mimic_core::policy::{state_features, PolicyParams};
//! use mimic_core::sim::Character;
//!
//! let pendulum = Character::builtin("pendulum").unwrap();
//! let s = pendulum.rest_state();
//! let x = state_features(&s);
//! assert_eq!(x.len(), 16);
//!
//! let policy = PolicyParams::init(x.len(), &[64, 64], pendulum.action_dim(), 7);
//! let a = policy.mean(policy.theta(), &x).unwrap();
//! assert_eq!(a.len(), 1);
//! ```

mod adam;
mod features;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{Adam, AdamReport, BETA1, BETA2, EPSILON, LEARNING_RATE, MAX_GRAD_NORM};
pub use features::{feature_dim, state_features};

use crate::autodiff::Real;

/// Checkpoint schema tag.
pub const POLICY_SCHEMA: &str = "policy/v1";
/// Initial per-action standard deviation.
pub const INITIAL_STD: f64 = 0.05;
/// Lower bound on the sampling standard deviation.
pub const MIN_STD: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// MLP weights and biases plus per-action log σ, stored flat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    input_dim: usize,
    hidden: Vec<usize>,
    action_dim: usize,
    theta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    schema: String,
    character: String,
    #[serde(flatten)]
    params: PolicyParams,
}

impl PolicyParams {
    /// All weights and biases zero, log σ at its initial value.
    pub fn zeros(input_dim: usize, hidden: &[usize], action_dim: usize) -> Self {
        let mut p = Self {
            input_dim,
            hidden: hidden.to_vec(),
            action_dim,
            theta: Vec::new(),
        };
        p.theta = vec![0.0; p.param_count()];
        let off = p.log_std_offset();
        p.theta[off..].fill(INITIAL_STD.ln());
        p
    }

    /// Orthogonal initialization: gain 1 on hidden layers, 0.01 on the
    /// output layer, zero biases.
    pub fn init(input_dim: usize, hidden: &[usize], action_dim: usize, seed: u64) -> Self {
        let mut p = Self::zeros(input_dim, hidden, action_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = p.layer_shapes();
        let mut off = 0;
        for (i, &(rows, cols)) in shapes.iter().enumerate() {
            let gain = if i + 1 == shapes.len() { 0.01 } else { 1.0 };
            let w = orthogonal(rows, cols, &mut rng);
            for (dst, src) in p.theta[off..off + rows * cols].iter_mut().zip(w) {
                *dst = gain * src;
            }
            off += rows * cols + rows;
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// `(outputs, inputs)` of each affine layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden);
        dims.push(self.action_dim);
        dims.windows(2).map(|w| (w[1], w[0])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.log_std_offset() + self.action_dim
    }

    /// Index of the first log σ entry in θ.
    pub fn log_std_offset(&self) -> usize {
        self.layer_shapes().iter().map(|(r, c)| r * c + r).sum()
    }

    /// Sampling standard deviations, clamped below at [`MIN_STD`].
    pub fn std(&self) -> Vec<f64> {
        self.theta[self.log_std_offset()..]
            .iter()
            .map(|l| l.exp().max(MIN_STD))
            .collect()
    }

    /// Deterministic action: the MLP output for features `x` under
    /// parameters `theta` (which must have this policy's layout).
    pub fn mean<R: Real>(&self, theta: &[R], x: &[R]) -> Result<Vec<R>, PolicyError> {
        self.check(theta.len(), x.len())?;
        let shapes = self.layer_shapes();
        let mut h = x.to_vec();
        let mut off = 0;
        for (i, &(rows, cols)) in shapes.iter().enumerate() {
            let w = &theta[off..off + rows * cols];
            let b = &theta[off + rows * cols..off + rows * cols + rows];
            off += rows * cols + rows;
            let output = i + 1 == shapes.len();
            h = (0..rows)
                .map(|r| {
                    let z = R::affine(&w[r * cols..(r + 1) * cols], &h, b[r]);
                    if output {
                        z
                    } else {
                        z.swish()
                    }
                })
                .collect();
        }
        Ok(h)
    }

    /// Reparameterized sample `mean + σ ⊙ noise`, differentiable in θ.
    pub fn sample<R: Real>(
        &self,
        theta: &[R],
        x: &[R],
        noise: &[f64],
    ) -> Result<Vec<R>, PolicyError> {
        if noise.len() != self.action_dim {
            return Err(PolicyError::Shape(format!(
                "noise has {} entries, policy has {} actions",
                noise.len(),
                self.action_dim
            )));
        }
        let mut a = self.mean(theta, x)?;
        let log_std = &theta[self.log_std_offset()..];
        for ((ai, ls), n) in a.iter_mut().zip(log_std).zip(noise) {
            if *n != 0.0 {
                *ai += ls.clamp(MIN_STD.ln(), f64::INFINITY).exp() * *n;
            }
        }
        Ok(a)
    }

    fn check(&self, theta: usize, x: usize) -> Result<(), PolicyError> {
        if theta != self.param_count() {
            return Err(PolicyError::Shape(format!(
                "θ has {theta} entries, policy needs {}",
                self.param_count()
            )));
        }
        if x != self.input_dim {
            return Err(PolicyError::Shape(format!(
                "features have {x} entries, policy expects {}",
                self.input_dim
            )));
        }
        Ok(())
    }

    /// `policy/v1` JSON, tagged with the character it was trained for.
    pub fn to_json(&self, character: &str) -> String {
        let ck = Checkpoint {
            schema: POLICY_SCHEMA.into(),
            character: character.into(),
            params: self.clone(),
        };
        serde_json::to_string_pretty(&ck).expect("checkpoint serializes") + "\n"
    }

    /// Parses a checkpoint, returning the character name and the policy.
    pub fn from_json(text: &str) -> Result<(String, Self), PolicyError> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| PolicyError::Format(e.to_string()))?;
        if ck.schema != POLICY_SCHEMA {
            return Err(PolicyError::Format(format!(
                "schema {:?}, expected {POLICY_SCHEMA:?}",
                ck.schema
            )));
        }
        let p = ck.params;
        let expected = Self::zeros(p.input_dim, &p.hidden, p.action_dim).param_count();
        if p.theta.len() != expected {
            return Err(PolicyError::Format(format!(
                "θ has {} entries, layout needs {expected}",
                p.theta.len()
            )));
        }
        if let Some(i) = p.theta.iter().position(|v| !v.is_finite()) {
            return Err(PolicyError::Format(format!("θ[{i}] is not finite")));
        }
        Ok((ck.character, p))
    }

    pub fn save(&self, character: &str, path: &Path) -> Result<(), PolicyError> {
        std::fs::write(path, self.to_json(character)).map_err(|source| PolicyError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<(String, Self), PolicyError> {
        let text = std::fs::read_to_string(path).map_err(|source| PolicyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Row-major `rows × cols` matrix with orthonormal rows (if `rows ≤ cols`)
/// or columns, from Gram–Schmidt on a Gaussian draw.
fn orthogonal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (n, len) = (rows.min(cols), rows.max(cols));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = if rows <= cols {
                basis[r][c]
            } else {
                basis[c][r]
            };
        }
    }
    out
}
