//! Serialized outcome of one scenario run.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::attacks::AttackKind;
use crate::Core;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Success,
    Partial,
    Failed,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Success => "success",
            Verdict::Partial => "partial",
            Verdict::Failed => "failed",
        }
    }
}

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackReport {
    pub format_version: u32,
    pub kind: AttackKind,
    pub attacker_core: Core,
    pub attack_enabled: bool,
    pub seed: u64,
    pub duration_ns: u64,
    pub verdict: Verdict,
    /// Short kind-specific label, e.g. the DoS class.
    pub outcome: String,
    pub metrics: Value,
    pub trace_path: Option<String>,
    pub crash_logs: Vec<String>,
}

impl AttackReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// JSON Schema for `report.json`.
pub const REPORT_SCHEMA: &str = include_str!("../../../schemas/report.schema.json");
