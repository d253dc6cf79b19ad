//! Output formats: CSV tables with `#`-prefixed metadata lines, and the JSON
//! verification report.
//!
//! Report schema (version 1):
//!
//! ```text
//! { "version": 1, "all_pass": bool, "tolerance_scale": f64,
//!   "criteria": [ { "id", "key", "title", "pass", "seconds"?, "budget_seconds",
//!                   "note", "checks": [ { "name", "lhs", "rhs", "tolerance",
//!                                         "relation", "pass" } ] } ] }
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Version of the JSON report schema.
pub const REPORT_VERSION: u32 = 1;

/// A table written as CSV after `# key: value` metadata lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            meta: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Numbers use Rust's shortest round-trip formatting, so output is
    /// byte-identical across runs.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}: {v}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// How a check compares its two sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `|lhs - rhs| ≤ tol·|rhs|`.
    RelClose,
    /// `|lhs - rhs| ≤ tol`.
    AbsClose,
    /// `lhs ≤ rhs + tol`.
    AtMost,
    /// `lhs ≥ rhs - tol`.
    AtLeast,
    /// `lhs > rhs`, tolerance unused.
    Above,
}

/// One measured comparison inside a criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub relation: Relation,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64, relation: Relation) -> Self {
        let pass = match relation {
            Relation::RelClose => (lhs - rhs).abs() <= tolerance * rhs.abs(),
            Relation::AbsClose => (lhs - rhs).abs() <= tolerance,
            Relation::AtMost => lhs <= rhs + tolerance,
            Relation::AtLeast => lhs >= rhs - tolerance,
            Relation::Above => lhs > rhs,
        };
        Self {
            name: name.into(),
            lhs,
            rhs,
            tolerance,
            relation,
            pass: pass && lhs.is_finite() && rhs.is_finite(),
        }
    }

    /// A check that could not be evaluated.
    pub fn failed(name: impl Into<String>, tolerance: f64, relation: Relation) -> Self {
        Self {
            name: name.into(),
            lhs: f64::NAN,
            rhs: f64::NAN,
            tolerance,
            relation,
            pass: false,
        }
    }
}

/// Result of one acceptance criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub key: String,
    pub title: String,
    pub pass: bool,
    /// Absent when timings are disabled, which makes reports reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
    pub budget_seconds: f64,
    pub note: Option<String>,
    pub checks: Vec<Check>,
}

impl CriterionReport {
    /// One line: id, verdict, key, worst check and runtime.
    pub fn summary_line(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let worst = self
            .checks
            .iter()
            .find(|c| !c.pass)
            .or(self.checks.first())
            .map(|c| format!("{} lhs={:.6e} rhs={:.6e} tol={:.1e}", c.name, c.lhs, c.rhs, c.tolerance))
            .unwrap_or_default();
        let time = match self.seconds {
            Some(s) => format!(" ({s:.2}s / {:.0}s)", self.budget_seconds),
            None => String::new(),
        };
        let mut line = format!("[{verdict}] {:>2} {:<20} {}{time}", self.id, self.key, worst);
        if let Some(n) = &self.note {
            line.push_str(" -- ");
            line.push_str(n);
        }
        line
    }
}

/// The full verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub version: u32,
    pub all_pass: bool,
    pub tolerance_scale: f64,
    pub criteria: Vec<CriterionReport>,
}

impl VerifyReport {
    pub fn new(tolerance_scale: f64, criteria: Vec<CriterionReport>) -> Self {
        Self {
            version: REPORT_VERSION,
            all_pass: criteria.iter().all(|c| c.pass),
            tolerance_scale,
            criteria,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_metadata_then_header() {
        let mut t = CsvTable::new(&["rho", "value"]).meta("n", 3).meta("gamma", 0.5);
        t.push(vec![0.5, 1.25]);
        let s = t.render();
        assert_eq!(s, "# n: 3\n# gamma: 0.5\nrho,value\n5e-1,1.25e0\n");
    }

    #[test]
    fn relations() {
        assert!(Check::new("a", 1.0 + 1e-7, 1.0, 1e-6, Relation::RelClose).pass);
        assert!(!Check::new("a", 1.1, 1.0, 1e-6, Relation::RelClose).pass);
        assert!(Check::new("a", 0.5, 1.0, 0.0, Relation::AtMost).pass);
        assert!(Check::new("a", -1e-9, 0.0, 1e-8, Relation::AtLeast).pass);
        assert!(!Check::new("a", 1.0, 1.0, 1.0, Relation::Above).pass);
        assert!(!Check::new("a", f64::NAN, 1.0, 1.0, Relation::AtMost).pass);
    }

    #[test]
    fn report_round_trips() {
        let c = CriterionReport {
            id: 2,
            key: "energy-constant".into(),
            title: "t".into(),
            pass: true,
            seconds: Some(0.1),
            budget_seconds: 5.0,
            note: None,
            checks: vec![Check::new("x", 1.0, 1.0, 1e-4, Relation::RelClose)],
        };
        let r = VerifyReport::new(1.0, vec![c]);
        let back: VerifyReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.version, REPORT_VERSION);
    }
}
