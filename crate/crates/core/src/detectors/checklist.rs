use serde::{Deserialize, Serialize};

use super::contraction::ContractionReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub value: bool,
    pub rationale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UsageAnswer {
    pub value: bool,
    pub p: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RuntimeFlags {
    pub baseline_alarm: bool,
    pub drift_alarm: bool,
}

impl RuntimeFlags {
    pub fn any(&self) -> bool {
        self.baseline_alarm || self.drift_alarm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "loop indicated")]
    LoopIndicated,
    #[serde(rename = "no loop indicated")]
    NoLoopIndicated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChecklistReport {
    /// Does the system learn from data produced by users who rely on it?
    pub q1_data_from_influenced_users: Answer,
    /// Can usage exceed one half while adherence stays below one?
    pub q2_p_gt_half_and_s_lt_one: UsageAnswer,
    pub q3_contraction: Option<ContractionReport>,
    pub runtime_flags: Option<RuntimeFlags>,
    pub verdict: Verdict,
}

/// Loop indicated iff `(q1 && q2) || contraction detected || any runtime flag`.
pub fn build_checklist(
    q1: Answer,
    p: f64,
    s: f64,
    contraction: Option<ContractionReport>,
    runtime_flags: Option<RuntimeFlags>,
) -> ChecklistReport {
    let q2 = UsageAnswer {
        value: p > 0.5 && s < 1.0,
        p,
        s,
    };
    let indicated = (q1.value && q2.value)
        || contraction.as_ref().is_some_and(|c| c.contraction_detected)
        || runtime_flags.is_some_and(|f| f.any());
    ChecklistReport {
        q1_data_from_influenced_users: q1,
        q2_p_gt_half_and_s_lt_one: q2,
        q3_contraction: contraction,
        runtime_flags,
        verdict: if indicated {
            Verdict::LoopIndicated
        } else {
            Verdict::NoLoopIndicated
        },
    }
}
