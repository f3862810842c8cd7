use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::policy::LEARNING_RATE;
use crate::sim::{Character, LossWeights};

/// When a rollout step starts from the reference state instead of the
/// simulated one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum ReplayMode {
    /// Never; full-horizon gradients.
    #[default]
    None,
    /// Draw `b ~ Bernoulli(γ)` each step and replay when `b = 1`, so `γ`
    /// is the replay probability.
    Random { gamma: f64 },
    /// Replay when the state distance to the reference is `≥ ε`.
    Threshold { epsilon: f64 },
}

impl FromStr for ReplayMode {
    type Err = String;

    /// `none`, `random:<γ>` or `threshold:<ε>`.
    fn from_str(s: &str) -> Result<Self, String> {
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|e| format!("replay parameter {v:?}: {e}"))
        };
        match s.split_once(':') {
            None if s == "none" => Ok(Self::None),
            Some(("random", v)) => Ok(Self::Random { gamma: num(v)? }),
            Some(("threshold", v)) => Ok(Self::Threshold { epsilon: num(v)? }),
            _ => Err(format!(
                "unknown replay mode {s:?} (none, random:<gamma>, threshold:<epsilon>)"
            )),
        }
    }
}

impl fmt::Display for ReplayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => write!(f, "none"),
            Self::Random { gamma } => write!(f, "random:{gamma}"),
            Self::Threshold { epsilon } => write!(f, "threshold:{epsilon}"),
        }
    }
}

/// Training hyperparameters. Every field has a default, so a config file
/// only needs the values it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Optimization iterations `I`.
    pub iterations: usize,
    /// Episode length `T` in control steps.
    pub episode_steps: usize,
    /// Parallel environments per iteration.
    pub batch: usize,
    /// Overrides the character's loss weights.
    pub weights: Option<LossWeights>,
    pub replay: ReplayMode,
    /// Cut the state gradient every `n` steps; `None` is the full horizon.
    pub truncation: Option<usize>,
    /// Start each rollout at a uniformly drawn reference index.
    pub rsi: bool,
    pub seed: u64,
    /// Hidden layer widths of a freshly initialized policy.
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    /// Length of the per-iteration evaluation rollout; defaults to the
    /// episode length.
    pub eval_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            episode_steps: 120,
            batch: 16,
            weights: None,
            replay: ReplayMode::None,
            truncation: None,
            rsi: false,
            seed: 0,
            hidden: vec![64, 64],
            learning_rate: LEARNING_RATE,
            eval_steps: None,
        }
    }
}

impl TrainConfig {
    /// Checks ranges. `iterations = 0` is allowed and leaves the policy
    /// untouched.
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.episode_steps == 0 || self.batch == 0 {
            return bad("episode_steps and batch must be ≥ 1".into());
        }
        if self.eval_steps == Some(0) {
            return bad("eval_steps must be ≥ 1".into());
        }
        if let Some(w) = &self.weights {
            let all = [w.position, w.rotation, w.velocity, w.angular_velocity];
            if !all.iter().all(|x| *x >= 0.0 && x.is_finite()) {
                return bad("loss weights must be finite and ≥ 0".into());
            }
        }
        match self.replay {
            ReplayMode::Random { gamma } if !(0.0..=1.0).contains(&gamma) => {
                return bad(format!("gamma must lie in [0, 1], got {gamma}"));
            }
            ReplayMode::Threshold { epsilon } if !(epsilon > 0.0) => {
                return bad(format!("epsilon must be > 0, got {epsilon}"));
            }
            _ => {}
        }
        if let Some(n) = self.truncation {
            if n == 0 || n > self.episode_steps {
                return bad(format!(
                    "truncation must lie in [1, {}], got {n}",
                    self.episode_steps
                ));
            }
        }
        if self.hidden.contains(&0) {
            return bad("hidden layers must have at least one unit".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be ≥ 0, got {}",
                self.learning_rate
            ));
        }
        Ok(())
    }

    pub fn loss_weights(&self, ch: &Character) -> LossWeights {
        self.weights.unwrap_or(ch.spec().loss_weights)
    }

    pub fn eval_steps(&self) -> usize {
        self.eval_steps.unwrap_or(self.episode_steps)
    }

    /// Environment samples (control steps) consumed per iteration.
    pub fn samples_per_iteration(&self) -> u64 {
        (self.batch * self.episode_steps) as u64
    }
}
