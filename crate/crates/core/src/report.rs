//! Test reports and the JSON envelope every CLI command writes.

use serde::{Deserialize, Serialize};

use crate::paths::{GridKind, ProcessTag, TimeGrid};
use crate::pi::ResidualReport;

/// Identifier of the JSON report schema (`schema/report.schema.json`).
pub const REPORT_SCHEMA: &str = "wlab.report/1";

/// Serializes non-finite floats as `null` and reads `null` back as NaN.
pub(crate) mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// One statistic compared against its threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub name: String,
    #[serde(with = "finite_or_null")]
    pub statistic: f64,
    #[serde(with = "finite_or_null")]
    pub threshold: f64,
    pub p_value: Option<f64>,
    pub n1: usize,
    pub n2: usize,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    /// A check that passes when `|statistic| <= threshold`.
    pub fn within(name: impl Into<String>, statistic: f64, threshold: f64, n: usize) -> Self {
        Check {
            name: name.into(),
            statistic,
            threshold,
            p_value: None,
            n1: n,
            n2: 0,
            pass: statistic.abs() <= threshold,
            note: None,
        }
    }

    /// A check that passes when `p_value > alpha`.
    pub fn p_above(name: impl Into<String>, statistic: f64, p_value: f64, alpha: f64, n1: usize, n2: usize) -> Self {
        Check {
            name: name.into(),
            statistic,
            threshold: alpha,
            p_value: Some(p_value),
            n1,
            n2,
            pass: p_value > alpha,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestReport {
    pub name: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl TestReport {
    pub fn new(name: impl Into<String>) -> Self {
        TestReport {
            name: name.into(),
            pass: true,
            checks: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn push(&mut self, check: Check) {
        self.pass &= check.pass;
        self.checks.push(check);
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    /// Marks the report failed without a numeric check behind it.
    pub fn fail(&mut self, msg: impl Into<String>) {
        self.pass = false;
        self.warnings.push(msg.into());
    }

    /// Concatenates checks and warnings; keeps the left name. Associative.
    pub fn merge(mut self, other: TestReport) -> TestReport {
        self.pass &= other.pass;
        self.checks.extend(other.checks);
        self.warnings.extend(other.warnings);
        self
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSummary {
    pub kind: GridKind,
    pub len: usize,
    pub start: f64,
    pub horizon: f64,
    pub min_step: f64,
    pub max_step: f64,
}

impl From<&TimeGrid> for GridSummary {
    fn from(g: &TimeGrid) -> Self {
        let min_step = g.times().windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        GridSummary {
            kind: g.kind(),
            len: g.len(),
            start: g.start(),
            horizon: g.horizon(),
            min_step,
            max_step: g.max_step(),
        }
    }
}

/// The single JSON document written by every command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema: String,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub grid: Option<GridSummary>,
    pub process: Option<ProcessTag>,
    pub parameters: serde_json::Map<String, serde_json::Value>,
    pub pass: bool,
    pub reports: Vec<TestReport>,
    pub residuals: Vec<ResidualReport>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn new(command: impl Into<String>, seed: u64) -> Self {
        RunReport {
            schema: REPORT_SCHEMA.to_string(),
            tool_version: crate::VERSION.to_string(),
            command: command.into(),
            seed,
            grid: None,
            process: None,
            parameters: serde_json::Map::new(),
            pass: true,
            reports: Vec::new(),
            residuals: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.parameters.insert(key.to_string(), value.into());
    }

    pub fn add_report(&mut self, report: TestReport) {
        self.pass &= report.pass;
        self.reports.push(report);
    }

    pub fn add_residuals(&mut self, residuals: ResidualReport) {
        self.pass &= residuals.pass;
        self.residuals.push(residuals);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(name: &str, pass: bool) -> TestReport {
        let mut r = TestReport::new(name);
        r.push(Check::within(format!("{name}.c"), if pass { 0.0 } else { 9.0 }, 1.0, 10));
        r
    }

    #[test]
    fn merge_is_associative() {
        let (a, b, c) = (report("a", true), report("b", false), report("c", true));
        let left = a.clone().merge(b.clone()).merge(c.clone());
        let right = a.merge(b.merge(c));
        assert_eq!(left, right);
        assert!(!left.pass);
        assert_eq!(left.checks.len(), 3);
    }

    #[test]
    fn non_finite_statistics_serialize_as_null() {
        let mut r = TestReport::new("x");
        r.push(Check::within("nan", f64::NAN, 1.0, 3));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"statistic\":null"));
        let back: TestReport = serde_json::from_str(&json).unwrap();
        assert!(back.checks[0].statistic.is_nan());
        assert!(!back.pass);
    }
}
