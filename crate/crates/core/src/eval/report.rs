//! Report files. JSON reports share one envelope:
//!
//! ```json
//! {"schema": "report_v1", "kind": "...", "config": {...}, "body": {...}}
//! ```
//!
//! where `config` is the fully resolved run configuration. CSV reports are
//! a header row followed by one row per record of the body.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{AlignmentReport, Metrics, SweepResult};
use crate::error::{Result, RiskError};
use crate::model::TrainReport;

pub const REPORT_SCHEMA: &str = "report_v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    /// `.csv` selects CSV; anything else is JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

impl FromStr for ReportFormat {
    type Err = RiskError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(RiskError::UnknownFormat(other.into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report<T> {
    pub schema: String,
    pub kind: String,
    pub config: serde_json::Value,
    pub body: T,
}

impl<T: Serialize + DeserializeOwned> Report<T> {
    pub fn new(kind: &str, config: &impl Serialize, body: T) -> Result<Self> {
        Ok(Self {
            schema: REPORT_SCHEMA.into(),
            kind: kind.into(),
            config: serde_json::to_value(config)?,
            body,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.schema != REPORT_SCHEMA {
            return Err(RiskError::UnknownFormat(r.schema));
        }
        Ok(r)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Tabular view of a report body.
pub trait CsvTable {
    fn csv_header(&self) -> Vec<&'static str>;
    fn csv_rows(&self) -> Vec<Vec<String>>;

    fn to_csv(&self) -> String {
        let mut out = self.csv_header().join(",");
        out.push('\n');
        for row in self.csv_rows() {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

impl CsvTable for Metrics {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["split", "group", "class", "count", "correct", "accuracy"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let split = self.split.to_string();
        let mut rows = vec![vec![
            split.clone(),
            "all".into(),
            "all".into(),
            self.n_examples.to_string(),
            self.correct.to_string(),
            num(self.accuracy),
        ]];
        for c in &self.cells {
            let group = serde_json::to_value(c.group).unwrap();
            rows.push(vec![
                split.clone(),
                group.as_str().unwrap_or_default().to_string(),
                c.class.to_string(),
                c.count.to_string(),
                c.correct.to_string(),
                num(c.accuracy),
            ]);
        }
        rows
    }
}

impl CsvTable for SweepResult {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["parameter", "row", "value", "seed", "id_test", "id_test_std", "ood", "ood_std"]
    }

    /// One row per (value, seed) run, then one `mean` row per grid value.
    fn csv_rows(&self) -> Vec<Vec<String>> {
        let p = self.parameter.name().to_string();
        let mut rows: Vec<Vec<String>> = self
            .runs
            .iter()
            .map(|r| {
                vec![
                    p.clone(),
                    "run".into(),
                    num(r.value),
                    r.seed.to_string(),
                    num(r.id_test),
                    String::new(),
                    num(r.ood),
                    String::new(),
                ]
            })
            .collect();
        rows.extend(self.points.iter().map(|a| {
            vec![
                p.clone(),
                "mean".into(),
                num(a.value),
                String::new(),
                num(a.id_test_mean),
                num(a.id_test_std),
                num(a.ood_mean),
                num(a.ood_std),
            ]
        }));
        rows
    }
}

impl CsvTable for TrainReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["epoch", "ce", "recon", "proj", "total"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.epochs
            .iter()
            .map(|e| vec![e.epoch.to_string(), num(e.ce), num(e.recon), num(e.proj), num(e.total)])
            .collect()
    }
}

impl CsvTable for AlignmentReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["index", "angle_rad", "angle_deg"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.angles
            .iter()
            .enumerate()
            .map(|(i, a)| vec![i.to_string(), num(*a), num(a.to_degrees())])
            .collect()
    }
}

pub fn write_report<T>(report: &Report<T>, path: &Path, format: ReportFormat) -> Result<()>
where
    T: Serialize + DeserializeOwned + CsvTable,
{
    let text = match format {
        ReportFormat::Json => report.to_json()?,
        ReportFormat::Csv => report.body.to_csv(),
    };
    std::fs::write(path, text)?;
    Ok(())
}
