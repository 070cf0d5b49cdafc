use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::review::{AuditKind, ReviewSession};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Step1,
    Step2,
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "step1" => Ok(Stage::Step1),
            "step2" => Ok(Stage::Step2),
            other => Err(format!("unknown stage {other:?}, expected step1 or step2")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("no sessions to summarize")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentStats {
    pub total_items: u64,
    pub adjusted_items: u64,
    /// Percentage rounded half-up to two decimals.
    pub adjustment_percentage: f64,
}

impl AdjustmentStats {
    pub fn new(total_items: u64, adjusted_items: u64) -> Self {
        let hundredths = percentage_hundredths(total_items, adjusted_items);
        AdjustmentStats {
            total_items,
            adjusted_items,
            adjustment_percentage: hundredths as f64 / 100.0,
        }
    }

    pub fn percentage_text(&self) -> String {
        let h = percentage_hundredths(self.total_items, self.adjusted_items);
        format!("{}.{:02}", h / 100, h % 100)
    }
}

impl fmt::Display for AdjustmentStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} of {} adjusted ({}%)",
            self.adjusted_items,
            self.total_items,
            self.percentage_text()
        )
    }
}

/// `round(100 * adjusted / total, 2)` in hundredths of a percent, exact.
pub fn percentage_hundredths(total: u64, adjusted: u64) -> u64 {
    if total == 0 {
        return 0;
    }
    let (total, adjusted) = (u128::from(total), u128::from(adjusted));
    ((adjusted * 20_000 + total) / (2 * total)) as u64
}

/// Items presented and items adjusted in one session for a stage.
///
/// Step 1 counts extracted factors and distinct overridden factors. Step 2
/// counts recommendations presented at the start of step 2 plus any
/// clinician-added items, and distinct items touched by an edit, add, move
/// or remove.
pub fn session_counts(session: &ReviewSession, stage: Stage) -> (u64, u64) {
    match stage {
        Stage::Step1 => {
            let total = session.header.answers.len() as u64;
            let adjusted: BTreeSet<&str> = session
                .audit
                .iter()
                .filter(|e| e.kind == AuditKind::FactorOverride)
                .map(|e| e.subject.as_str())
                .collect();
            (total, adjusted.len() as u64)
        }
        Stage::Step2 => {
            let presented = session
                .audit
                .iter()
                .find(|e| e.kind == AuditKind::StepFinalized && e.subject == "step1")
                .and_then(|e| e.after.get("results"))
                .and_then(|r| r.as_array())
                .map_or(0, |r| r.len() as u64);
            let added: BTreeSet<&str> = session
                .audit
                .iter()
                .filter(|e| e.kind == AuditKind::RecAdd)
                .map(|e| e.subject.as_str())
                .collect();
            let adjusted: BTreeSet<&str> = session
                .audit
                .iter()
                .filter(|e| e.kind.is_recommendation_change())
                .map(|e| e.subject.as_str())
                .collect();
            (presented + added.len() as u64, adjusted.len() as u64)
        }
    }
}

pub fn compute_stats<'a>(
    sessions: impl IntoIterator<Item = &'a ReviewSession>,
    stage: Stage,
) -> Result<AdjustmentStats, StatsError> {
    let mut any = false;
    let (mut total, mut adjusted) = (0u64, 0u64);
    for session in sessions {
        any = true;
        let (t, a) = session_counts(session, stage);
        total += t;
        adjusted += a;
    }
    if !any {
        return Err(StatsError::EmptyInput);
    }
    Ok(AdjustmentStats::new(total, adjusted))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reported_percentages() {
        assert_eq!(AdjustmentStats::new(12532, 260).percentage_text(), "2.07");
        assert_eq!(AdjustmentStats::new(2971, 135).percentage_text(), "4.54");
        assert_eq!(AdjustmentStats::new(8932, 172).percentage_text(), "1.93");
        assert_eq!(AdjustmentStats::new(10, 0).percentage_text(), "0.00");
        assert_eq!(AdjustmentStats::new(12532, 260).adjustment_percentage, 2.07);
    }

    #[test]
    fn rounds_half_up() {
        // 1/8 = 12.5%, 1/16 = 6.25%, 1/32 = 3.125%
        assert_eq!(AdjustmentStats::new(8, 1).percentage_text(), "12.50");
        assert_eq!(AdjustmentStats::new(32, 1).percentage_text(), "3.13");
        assert_eq!(AdjustmentStats::new(3, 3).percentage_text(), "100.00");
        assert_eq!(AdjustmentStats::new(3, 1).percentage_text(), "33.33");
        assert_eq!(AdjustmentStats::new(3, 2).percentage_text(), "66.67");
    }

    #[test]
    fn empty_input() {
        assert_eq!(compute_stats([], Stage::Step1), Err(StatsError::EmptyInput));
    }
}
