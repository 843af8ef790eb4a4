//! Run reports and their on-disk form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

/// One asserted property with its measured value and tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: Option<f64>,
    pub tolerance: Option<f64>,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    /// Passes when `measured ≤ tolerance`.
    pub fn at_most(name: &str, measured: f64, tolerance: f64) -> Self {
        Self::verdict(name, measured, tolerance, measured <= tolerance)
    }

    /// Passes when `measured ≥ tolerance`.
    pub fn at_least(name: &str, measured: f64, tolerance: f64) -> Self {
        Self::verdict(name, measured, tolerance, measured >= tolerance)
    }

    fn verdict(name: &str, measured: f64, tolerance: f64, ok: bool) -> Self {
        Self {
            name: name.to_string(),
            measured: Some(measured),
            tolerance: Some(tolerance),
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            note: None,
        }
    }

    pub fn not_applicable(name: &str, note: &str) -> Self {
        Self {
            name: name.to_string(),
            measured: None,
            tolerance: None,
            verdict: Verdict::NotApplicable,
            note: Some(note.to_string()),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// A CSV table; rendered with a provenance header and 17 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, config_sha256: &str) -> String {
        let mut out = format!("# emzkit {VERSION} config-sha256 {config_sha256}\n");
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{v:.16e}").expect("write to string");
            }
            out.push('\n');
        }
        out
    }
}

/// Output of one command. Timings are kept apart so that everything else
/// is reproducible byte for byte.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: BTreeMap<String, BTreeMap<String, String>>,
    pub sections: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    pub tables: BTreeMap<String, Table>,
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Folds another stage's results into this report.
    pub fn absorb(&mut self, other: RunReport) {
        self.sections.extend(other.sections);
        self.checks.extend(other.checks);
        self.tables.extend(other.tables);
        self.timings.extend(other.timings);
    }

    pub fn report_json(&self) -> String {
        let value = serde_json::json!({
            "tool": "emzkit",
            "version": VERSION,
            "command": self.command,
            "seed": self.seed,
            "config_sha256": self.config_sha256,
            "config": self.config,
            "results": self.sections,
            "checks": self.checks,
            "passed": self.passed(),
        });
        serde_json::to_string_pretty(&value).expect("report serializes") + "\n"
    }

    pub fn timings_json(&self) -> String {
        let value = serde_json::json!({
            "command": self.command,
            "seconds": self.timings,
        });
        serde_json::to_string_pretty(&value).expect("timings serialize") + "\n"
    }

    /// Writes `report.json`, `timings.json` and one CSV per table.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.report_json())?;
        std::fs::write(dir.join("timings.json"), self.timings_json())?;
        for (name, table) in &self.tables {
            std::fs::write(dir.join(format!("{name}.csv")), table.render(&self.config_sha256))?;
        }
        Ok(())
    }
}
