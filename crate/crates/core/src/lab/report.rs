//! Campaign reports: one row per temperature, trend summaries, and their
//! CSV/JSON serializations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::lab::config::RunConfig;

/// Rows that can be flattened into one CSV record each.
pub trait TableRow {
    fn header(&self) -> Vec<String>;
    fn record(&self) -> Vec<String>;
}

pub(crate) fn num(x: f64) -> String {
    format!("{x:.12e}")
}

/// A temperature whose computation was abandoned, with the reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbortedRow {
    pub temperature: f64,
    pub reason: String,
}

/// Monotonicity summary of one tracked quantity along the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trend {
    pub name: String,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub strictly_decreasing: bool,
    /// No step increases by more than [`Trend::SIGMAS`] joint standard errors
    /// (plus a rounding floor).
    pub decreasing_within_uncertainty: bool,
    /// Every value is within [`Trend::SIGMAS`] standard errors of zero.
    pub consistent_with_zero: bool,
    pub final_over_initial: f64,
}

impl Trend {
    pub const SIGMAS: f64 = 3.0;

    pub fn new(name: impl Into<String>, values: Vec<f64>, stderr: Vec<f64>) -> Self {
        assert_eq!(values.len(), stderr.len());
        let strictly_decreasing = values.len() >= 2 && values.windows(2).all(|w| w[1] < w[0]);
        let decreasing_within_uncertainty = values
            .windows(2)
            .zip(stderr.windows(2))
            .all(|(v, s)| v[1] <= v[0] + Self::SIGMAS * s[0].hypot(s[1]) + 1e-12 * v[0].abs().max(1.0));
        let consistent_with_zero = values
            .iter()
            .zip(&stderr)
            .all(|(v, s)| v.abs() <= Self::SIGMAS * s + 1e-12);
        let final_over_initial = match (values.first(), values.last()) {
            (Some(&a), Some(&b)) if a != 0.0 => b / a,
            _ => f64::NAN,
        };
        Self {
            name: name.into(),
            values,
            stderr,
            strictly_decreasing,
            decreasing_within_uncertainty,
            consistent_with_zero,
            final_over_initial,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport<R> {
    pub campaign: String,
    pub config: RunConfig,
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub rows: Vec<R>,
    pub aborted: Vec<AbortedRow>,
    pub trends: Vec<Trend>,
    /// Wall-clock seconds per row, kept apart from the reproducible rows.
    pub timings: Vec<f64>,
}

impl<R> ConvergenceReport<R> {
    pub fn trend(&self, name: &str) -> Option<&Trend> {
        self.trends.iter().find(|t| t.name == name)
    }
}

impl<R: Serialize + TableRow> ConvergenceReport<R> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if let Some(first) = self.rows.first() {
            w.write_record(first.header()).map_err(csv_err)?;
        }
        for row in &self.rows {
            w.write_record(row.record()).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| LabError::Config(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| LabError::Config(e.to_string()))
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir` and returns both paths.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let json = dir.join(format!("{stem}.json"));
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&json, self.to_json()?)?;
        std::fs::write(&csv, self.to_csv()?)?;
        Ok((json, csv))
    }
}

fn csv_err(e: csv::Error) -> LabError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => LabError::Io(io),
        other => LabError::Config(format!("{other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row(f64);

    impl TableRow for Row {
        fn header(&self) -> Vec<String> {
            vec!["x".into()]
        }
        fn record(&self) -> Vec<String> {
            vec![num(self.0)]
        }
    }

    #[test]
    fn trend_flags() {
        let t = Trend::new("a", vec![4.0, 2.0, 1.0], vec![0.0; 3]);
        assert!(t.strictly_decreasing && t.decreasing_within_uncertainty && !t.consistent_with_zero);
        assert_eq!(t.final_over_initial, 0.25);
        let t = Trend::new("b", vec![1.0, 1.1], vec![0.1, 0.1]);
        assert!(!t.strictly_decreasing && t.decreasing_within_uncertainty);
        let t = Trend::new("c", vec![0.0, 0.0], vec![0.0, 0.0]);
        assert!(t.consistent_with_zero && !t.strictly_decreasing);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let report = ConvergenceReport {
            campaign: "test".into(),
            config: RunConfig::default(),
            metadata: BTreeMap::new(),
            rows: vec![Row(1.0), Row(0.5)],
            aborted: vec![],
            trends: vec![],
            timings: vec![],
        };
        let csv = report.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines, ["x", "1.000000000000e0", "5.000000000000e-1"]);
        let v: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        assert_eq!(v["rows"][1], 0.5);
    }
}
