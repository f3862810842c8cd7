use serde::{Deserialize, Serialize};

use super::{Evaluation, SuccessCriterion};
use crate::sim::Character;

pub const EVAL_SCHEMA: &str = "eval-report/v1";

/// Summary of one evaluation rollout, written as pretty JSON next to the
/// per-frame CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub schema: String,
    pub character: String,
    pub steps: usize,
    /// DTW-aligned mean pose error, m.
    pub pose_error: f64,
    /// `[k, L2@k]` pairs.
    pub absurdity: Vec<(f64, f64)>,
    pub success: bool,
    pub fell_at: Option<usize>,
    pub sustained_low_root: Option<f64>,
}

impl EvalReport {
    pub fn new(ch: &Character, e: &Evaluation, criterion: &SuccessCriterion) -> Self {
        Self {
            schema: EVAL_SCHEMA.into(),
            character: ch.name().into(),
            steps: e.steps,
            pose_error: e.pose.mean,
            absurdity: e.pose.absurdity.clone(),
            success: e.succeeds(criterion),
            fell_at: e.fell_at,
            sustained_low_root: e.sustained_low_root,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
