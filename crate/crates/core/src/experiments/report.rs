use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::observables::fmt_f64;

use super::ExperimentConfig;

/// Outcome of one asserted bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub tolerance: f64,
    pub detail: String,
    pub first_violation_time: Option<f64>,
}

impl Verdict {
    pub fn new(name: &str, passed: bool, tolerance: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            tolerance,
            detail,
            first_violation_time: None,
        }
    }

    pub fn at(mut self, first_violation_time: Option<f64>) -> Self {
        self.first_violation_time = first_violation_time;
        self
    }
}

/// Numeric table written as one CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub id: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub verdicts: Vec<Verdict>,
    pub tables: Vec<Table>,
    /// Report-only quantities (fitted rates, sups, unasserted variants).
    pub metrics: BTreeMap<String, serde_json::Value>,
    pub wall_clock_seconds: f64,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn metric(&self, name: &str) -> Option<&serde_json::Value> {
        self.metrics.get(name)
    }

    /// Deterministic summary; the wall clock is left out so that equal runs
    /// serialize to equal bytes.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "id": self.id,
            "seed": self.seed,
            "passed": self.passed(),
            "config": self.config,
            "verdicts": self.verdicts,
            "metrics": self.metrics,
            "tables": self.tables.iter().map(|t| &t.name).collect::<Vec<_>>(),
        })
    }
}

/// Tracks `G ≤ 2√F` over every recorded configuration of an experiment.
#[derive(Clone, Debug, Default)]
pub(crate) struct PairCheck {
    worst_excess: f64,
    checked: usize,
    first_violation: Option<f64>,
}

pub(crate) const PAIR_TOL: f64 = 1e-12;

impl PairCheck {
    pub(crate) fn observe(&mut self, t: f64, f: f64, g: f64) {
        let excess = g - 2.0 * f.sqrt();
        self.checked += 1;
        self.worst_excess = self.worst_excess.max(excess);
        if excess > PAIR_TOL && self.first_violation.is_none() {
            self.first_violation = Some(t);
        }
    }

    pub(crate) fn merge(&mut self, other: &PairCheck) {
        self.worst_excess = self.worst_excess.max(other.worst_excess);
        self.checked += other.checked;
        if self.first_violation.is_none() {
            self.first_violation = other.first_violation;
        }
    }

    pub(crate) fn verdict(&self) -> Verdict {
        Verdict::new(
            "pair_inequality",
            self.first_violation.is_none(),
            PAIR_TOL,
            format!(
                "G <= 2 sqrt(F) at {} recorded configurations, max(G - 2 sqrt(F)) = {:e}",
                self.checked, self.worst_excess
            ),
        )
        .at(self.first_violation)
    }
}
