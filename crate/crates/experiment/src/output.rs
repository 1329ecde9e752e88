//! On-disk artifacts: CSV tables, the run manifest and plot scripts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Scenario};
use crate::error::{ExperimentError, Result};
use crate::scenarios::Table;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const MANIFEST_VERSION: u32 = 1;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn realization_file(k: usize) -> String {
    format!("realization_{k:04}.csv")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn write_table(path: &Path, table: &Table) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|&x| format_float(x)))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_table(path: &Path, key_columns: usize) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new().from_path(path)?;
    let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| ExperimentError::RunDir(format!("{}: bad number {s:?}: {e}", path.display())))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { columns, key_columns, rows })
}

/// Mean and standard error per cell over realizations with identical key columns.
pub fn aggregate(tables: &[&Table]) -> Result<Table> {
    let first = tables.first().ok_or_else(|| ExperimentError::RunDir("no successful realization".into()))?;
    let k = first.key_columns;
    for t in tables {
        if t.columns != first.columns || t.rows.len() != first.rows.len() {
            return Err(ExperimentError::RunDir("realization tables differ in shape".into()));
        }
        for (a, b) in t.rows.iter().zip(&first.rows) {
            if a[..k] != b[..k] {
                return Err(ExperimentError::RunDir("realization tables differ in key columns".into()));
            }
        }
    }
    let mut columns: Vec<String> = first.columns[..k].to_vec();
    for c in &first.columns[k..] {
        columns.push(format!("{c}_mean"));
        columns.push(format!("{c}_stderr"));
    }
    let n = tables.len() as f64;
    let rows = (0..first.rows.len())
        .map(|i| {
            let mut row = first.rows[i][..k].to_vec();
            for j in k..first.columns.len() {
                let mean = tables.iter().map(|t| t.rows[i][j]).sum::<f64>() / n;
                let stderr = if tables.len() > 1 {
                    let ss: f64 = tables.iter().map(|t| (t.rows[i][j] - mean).powi(2)).sum();
                    (ss / (n - 1.0) / n).sqrt()
                } else {
                    f64::NAN
                };
                row.push(mean);
                row.push(stderr);
            }
            row
        })
        .collect();
    Ok(Table { columns, key_columns: k, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RealizationStatus {
    Planned,
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub index: usize,
    /// Hexadecimal, since TOML integers are signed.
    pub seed: String,
    pub status: RealizationStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub derived: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    DryRun,
    Complete,
    Partial,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub software_version: String,
    pub status: RunStatus,
    pub wall_clock_seconds: f64,
    pub workers: usize,
    pub n_ok: usize,
    pub n_failed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prepare_error: Option<String>,
    /// Means over successful realizations.
    #[serde(default)]
    pub derived: BTreeMap<String, f64>,
    pub config: ExperimentConfig,
    #[serde(default)]
    pub realizations: Vec<RealizationRecord>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let text = toml::to_string(self).map_err(|e| ExperimentError::Serialize(e.to_string()))?;
        write_text(&path, &text)?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        toml::from_str(&text).map_err(|e| ExperimentError::RunDir(format!("{}: {}", path.display(), e.message())))
    }
}

/// Mean of each derived quantity over the records that report it.
pub fn mean_derived(records: &[RealizationRecord]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status == RealizationStatus::Ok) {
        for (k, &v) in &r.derived {
            let e = acc.entry(k.clone()).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Standalone matplotlib script plotting the aggregate CSV.
pub fn plot_script(scenario: Scenario) -> String {
    let (x, ys, loglog) = match scenario {
        Scenario::RmtMicrocanonical => ("alpha", vec!["mc_average", "de_average"], false),
        Scenario::RmtQfi => ("t", vec!["F_Q_exact", "F_Q_rmt"], true),
        Scenario::SpinQfi => ("t", vec!["F_Q_exact", "F_Q_rmt", "CFI_pop"], true),
        Scenario::SpinRegimes => ("t", vec!["F_Q_exact", "F_Q_rmt"], true),
        Scenario::CouplingSweep => ("t", vec!["F_Q_exact", "F_Q_rmt"], true),
        Scenario::TwoSpinRatio => ("t", vec!["ratio", "ratio_ref"], false),
        Scenario::Correlators => ("pattern", vec!["value", "analytic"], false),
    };
    let ys = ys.iter().map(|y| format!("{y:?}")).collect::<Vec<_>>().join(", ");
    let scale = if loglog { "ax.set_xscale(\"log\")\nax.set_yscale(\"log\")\n" } else { "" };
    let xscale = if scenario == Scenario::TwoSpinRatio { "ax.set_xscale(\"log\")\n" } else { "" };
    format!(
        r#"#!/usr/bin/env python3
"""Plot {name} from aggregate.csv (mean with standard-error band)."""
import csv
import pathlib

import matplotlib.pyplot as plt

here = pathlib.Path(__file__).resolve().parent
with open(here / "aggregate.csv", newline="") as f:
    rows = list(csv.DictReader(f))
x = [float(r["{x}"]) for r in rows]
fig, ax = plt.subplots()
for name in [{ys}]:
    m = [float(r[name + "_mean"]) for r in rows]
    s = [float(r[name + "_stderr"]) for r in rows]
    ax.plot(x, m, label=name)
    lo = [a - b for a, b in zip(m, s)]
    hi = [a + b for a, b in zip(m, s)]
    if all(v == v for v in s):
        ax.fill_between(x, lo, hi, alpha=0.3)
{scale}{xscale}ax.set_xlabel("{x}")
ax.legend()
fig.savefig(here / "{name}.png", dpi=150)
"#,
        name = scenario.name(),
    )
}
