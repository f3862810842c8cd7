use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ReplayMode, TrainConfig};

/// Random replay probabilities compared in the replay ablation.
pub const RANDOM_REPLAY_RATES: [f64; 3] = [0.01, 0.05, 0.10];
/// Replay thresholds compared in the replay ablation.
pub const REPLAY_THRESHOLDS: [f64; 3] = [0.1, 0.2, 0.4];
/// Segment length of the truncated variant.
pub const TRUNCATION_STEPS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationAxis {
    Replay,
    Truncation,
    Rsi,
}

impl FromStr for AblationAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "replay" => Ok(Self::Replay),
            "truncation" => Ok(Self::Truncation),
            "rsi" => Ok(Self::Rsi),
            _ => Err(format!(
                "unknown ablation axis {s:?} (replay, truncation, rsi)"
            )),
        }
    }
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Replay => "replay",
            Self::Truncation => "truncation",
            Self::Rsi => "rsi",
        })
    }
}

/// One cell of an ablation grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    /// File-name safe label, e.g. `threshold-0.2`.
    pub label: String,
    pub config: TrainConfig,
}

/// The grid for `axis`, each cell a copy of `base` with one setting changed.
/// The first cell is always the full-horizon baseline without replay,
/// truncation or RSI.
pub fn ablation_variants(axis: AblationAxis, base: &TrainConfig) -> Vec<Variant> {
    let baseline = TrainConfig {
        replay: ReplayMode::None,
        truncation: None,
        rsi: false,
        ..base.clone()
    };
    let cell = |label: String, config: TrainConfig| Variant { label, config };
    let mut out = vec![cell("full".into(), baseline.clone())];
    match axis {
        AblationAxis::Replay => {
            for gamma in RANDOM_REPLAY_RATES {
                out.push(cell(
                    format!("random-{gamma}"),
                    TrainConfig {
                        replay: ReplayMode::Random { gamma },
                        ..baseline.clone()
                    },
                ));
            }
            for epsilon in REPLAY_THRESHOLDS {
                out.push(cell(
                    format!("threshold-{epsilon}"),
                    TrainConfig {
                        replay: ReplayMode::Threshold { epsilon },
                        ..baseline.clone()
                    },
                ));
            }
        }
        AblationAxis::Truncation => out.push(cell(
            format!("truncation-{TRUNCATION_STEPS}"),
            TrainConfig {
                truncation: Some(TRUNCATION_STEPS),
                ..baseline.clone()
            },
        )),
        AblationAxis::Rsi => out.push(cell(
            "rsi".into(),
            TrainConfig {
                rsi: true,
                ..baseline.clone()
            },
        )),
    }
    out
}
