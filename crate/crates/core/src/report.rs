//! Verdicts on the structural and regularity conditions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Condition {
    H1,
    H2,
    H3,
    H4,
    H5,
    P1,
    P2,
    P3,
    P4,
    P5,
}

impl Condition {
    pub const ALL: [Condition; 10] = [
        Condition::H1,
        Condition::H2,
        Condition::H3,
        Condition::H4,
        Condition::H5,
        Condition::P1,
        Condition::P2,
        Condition::P3,
        Condition::P4,
        Condition::P5,
    ];

    /// Conditions that need the normalizing constant `s`.
    pub fn needs_normalization(self) -> bool {
        matches!(self, Condition::P1 | Condition::P4 | Condition::P5)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::ALL
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::config(format!("unknown condition `{s}` (expected H1..H5 or P1..P5)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Truncation {
    #[serde(rename = "N")]
    pub n: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub verdict: Verdict,
    pub fitted_constants: BTreeMap<String, f64>,
    pub truncation: Truncation,
    pub tail_note: String,
    /// Symbols or samples that violated the condition.
    pub violations: Vec<String>,
    pub flags: Vec<String>,
}

impl ConditionReport {
    pub fn new(condition: Condition, n: usize, depth: usize) -> Self {
        ConditionReport {
            condition,
            verdict: Verdict::Inconclusive,
            fitted_constants: BTreeMap::new(),
            truncation: Truncation { n, depth },
            tail_note: String::new(),
            violations: Vec::new(),
            flags: Vec::new(),
        }
    }

    pub fn constant(&self, key: &str) -> Option<f64> {
        self.fitted_constants.get(key).copied()
    }

    pub(crate) fn set(&mut self, key: &str, v: f64) {
        self.fitted_constants.insert(key.to_string(), v);
    }
}

/// Aggregate verdict: any fail wins, then any inconclusive.
pub fn aggregate(reports: &[ConditionReport]) -> Verdict {
    if reports.iter().any(|r| r.verdict == Verdict::Fail) {
        Verdict::Fail
    } else if reports.iter().any(|r| r.verdict == Verdict::Inconclusive) {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for c in Condition::ALL {
            assert_eq!(c.to_string().parse::<Condition>().unwrap(), c);
        }
        assert!("p6".parse::<Condition>().is_err());
        assert_eq!("p3".parse::<Condition>().unwrap(), Condition::P3);
    }

    #[test]
    fn aggregate_prefers_failure() {
        let mut a = ConditionReport::new(Condition::P1, 1, 1);
        a.verdict = Verdict::Pass;
        let mut b = a.clone();
        b.verdict = Verdict::Inconclusive;
        let mut c = a.clone();
        c.verdict = Verdict::Fail;
        assert_eq!(aggregate(&[a.clone()]), Verdict::Pass);
        assert_eq!(aggregate(&[a.clone(), b.clone()]), Verdict::Inconclusive);
        assert_eq!(aggregate(&[a, b, c]), Verdict::Fail);
    }
}
