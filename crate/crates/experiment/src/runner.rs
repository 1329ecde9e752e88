//! Orchestration: worker pool, deterministic merge, exit status, sweeps and reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{ExperimentError, Result};
use crate::output::{
    aggregate, create_dir, format_float, mean_derived, plot_script, read_table, realization_file, write_table,
    write_text, RealizationRecord, RealizationStatus, RunManifest, RunStatus, AGGREGATE_FILE, MANIFEST_VERSION,
};
use crate::scenarios::{prepare, realize, seed_for, Table};

pub const WORKERS_ENV: &str = "QFI_WORKERS";

/// Fraction of failed realizations above which a run is reported as partial failure.
pub const FAILURE_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
    pub dry_run: bool,
}

impl RunOptions {
    /// Worker count from `QFI_WORKERS`, else the available parallelism.
    pub fn from_env() -> Result<Self> {
        Ok(Self { workers: default_workers()?, dry_run: false })
    }
}

pub fn default_workers() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(ExperimentError::Config {
                field: WORKERS_ENV.into(),
                message: format!("must be a positive integer, got {v:?}"),
            }),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunOutcome {
    /// 0 on success, 1 when more than 20% of realizations failed.
    pub fn exit_code(&self) -> i32 {
        run_exit_code(&self.manifest)
    }
}

fn run_exit_code(m: &RunManifest) -> i32 {
    let total = m.n_ok + m.n_failed;
    if m.status == RunStatus::DryRun || total == 0 {
        return 0;
    }
    if m.n_failed as f64 > FAILURE_THRESHOLD * total as f64 {
        1
    } else {
        0
    }
}

/// Runs every realization and writes the run directory.
pub fn run(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let config = config.clone().validated()?;
    let clock = Instant::now();
    let dir = config.output_dir.clone();
    create_dir(&dir)?;
    let n = config.n_realizations;
    let seeds: Vec<u64> = (0..n).map(|k| seed_for(&config, k)).collect();
    let planned = |k: usize, status| RealizationRecord {
        index: k,
        seed: format!("{:#018x}", seeds[k]),
        status,
        csv: None,
        error: None,
        derived: Default::default(),
    };
    let mut manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        status: RunStatus::DryRun,
        wall_clock_seconds: 0.0,
        workers: opts.workers,
        n_ok: 0,
        n_failed: 0,
        prepare_error: None,
        derived: Default::default(),
        config: config.clone(),
        realizations: (0..n).map(|k| planned(k, RealizationStatus::Planned)).collect(),
    };
    if opts.dry_run {
        manifest.write(&dir)?;
        return Ok(RunOutcome { dir, manifest });
    }

    // Realization-level parallelism only; faer stays sequential so results do not
    // depend on the worker count.
    faer::set_global_parallelism(faer::Par::Seq);
    let results: Vec<std::result::Result<crate::scenarios::RealizationOutput, String>> = match prepare(&config) {
        Ok(prepared) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(opts.workers.max(1))
                .build()
                .map_err(|e| ExperimentError::Serialize(format!("worker pool: {e}")))?;
            pool.install(|| {
                (0..n)
                    .into_par_iter()
                    .map(|k| realize(&config, &prepared, k).map_err(|e| e.to_string()))
                    .collect()
            })
        }
        Err(e) => {
            manifest.prepare_error = Some(e.to_string());
            (0..n).map(|_| Err(format!("preparation failed: {e}"))).collect()
        }
    };

    let mut ok_tables: Vec<Table> = Vec::new();
    for (k, res) in results.into_iter().enumerate() {
        let rec = &mut manifest.realizations[k];
        match res {
            Ok(out) => {
                let file = realization_file(k);
                write_table(&dir.join(&file), &out.table)?;
                rec.status = RealizationStatus::Ok;
                rec.csv = Some(file);
                rec.derived = out.derived;
                ok_tables.push(out.table);
            }
            Err(msg) => {
                rec.status = RealizationStatus::Failed;
                rec.error = Some(msg);
            }
        }
    }
    manifest.n_ok = ok_tables.len();
    manifest.n_failed = n - manifest.n_ok;
    manifest.derived = mean_derived(&manifest.realizations);
    if !ok_tables.is_empty() {
        let refs: Vec<&Table> = ok_tables.iter().collect();
        write_table(&dir.join(AGGREGATE_FILE), &aggregate(&refs)?)?;
        if config.plot_script {
            write_text(&dir.join("plot.py"), &plot_script(config.scenario))?;
        }
    }
    manifest.status = match (manifest.n_ok, manifest.n_failed) {
        (_, 0) => RunStatus::Complete,
        (0, _) => RunStatus::Failed,
        _ => RunStatus::Partial,
    };
    manifest.wall_clock_seconds = clock.elapsed().as_secs_f64();
    manifest.write(&dir)?;
    Ok(RunOutcome { dir, manifest })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Increasing,
    Decreasing,
    Constant,
    NonMonotonic,
    Unavailable,
}

impl Trend {
    pub fn of(values: &[f64]) -> Self {
        if values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
            return Trend::Unavailable;
        }
        let d: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
        if d.iter().all(|&x| x == 0.0) {
            Trend::Constant
        } else if d.iter().all(|&x| x > 0.0) {
            Trend::Increasing
        } else if d.iter().all(|&x| x < 0.0) {
            Trend::Decreasing
        } else {
            Trend::NonMonotonic
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Trend::Increasing => "increasing",
            Trend::Decreasing => "decreasing",
            Trend::Constant => "constant",
            Trend::NonMonotonic => "non-monotonic",
            Trend::Unavailable => "unavailable",
        }
    }
}

pub const SUMMARY_COLUMNS: [&str; 4] = ["qfi_at_probe", "gamma_hat", "median_rel_dev", "d_eff"];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub dir: PathBuf,
    pub points: Vec<RunOutcome>,
    pub summary: Table,
    pub trends: Vec<(String, Trend)>,
    pub report: String,
}

impl SweepOutcome {
    pub fn exit_code(&self) -> i32 {
        self.points.iter().map(RunOutcome::exit_code).max().unwrap_or(0)
    }
}

/// Trends the physics predicts for a given swept parameter.
pub fn expected_trends(parameter: &str) -> &'static [(&'static str, Trend)] {
    match parameter {
        "spin.jx_sb" => &[("gamma_hat", Trend::Increasing), ("qfi_at_probe", Trend::Decreasing)],
        "rmt.n" => &[("median_rel_dev", Trend::Decreasing)],
        _ => &[],
    }
}

/// One run per axis value under `output_dir/point_XXX`, plus a summary table.
pub fn sweep(config: &ExperimentConfig, opts: &RunOptions) -> Result<SweepOutcome> {
    let config = config.clone().validated()?;
    let sw = config.sweep.clone().ok_or_else(|| ExperimentError::Config {
        field: "sweep".into(),
        message: "the sweep command needs a [sweep] section".into(),
    })?;
    let base = config.output_dir.clone();
    create_dir(&base)?;
    // resolve every point before running any, so a bad value fails fast
    let mut configs = Vec::new();
    for (i, &v) in sw.values.iter().enumerate() {
        let mut c = config.with_parameter(&sw.parameter, v)?;
        c.output_dir = base.join(format!("point_{i:03}"));
        c.probe_time = sw.probe_time.or(config.probe_time);
        configs.push(c);
    }
    let mut points = Vec::new();
    for c in &configs {
        points.push(run(c, opts)?);
    }
    let mut cols = vec!["axis_value"];
    cols.extend(SUMMARY_COLUMNS);
    cols.extend(["n_ok", "n_failed"]);
    let mut summary = Table { columns: cols.iter().map(|s| s.to_string()).collect(), key_columns: 1, rows: vec![] };
    for (&v, p) in sw.values.iter().zip(&points) {
        let d = &p.manifest.derived;
        let mut row = vec![v];
        for name in SUMMARY_COLUMNS {
            let value = d.get(name).or_else(|| if name == "gamma_hat" { d.get("gamma") } else { None });
            row.push(value.copied().unwrap_or(f64::NAN));
        }
        row.push(p.manifest.n_ok as f64);
        row.push(p.manifest.n_failed as f64);
        summary.rows.push(row);
    }
    write_table(&base.join("summary.csv"), &summary)?;
    let trends: Vec<(String, Trend)> = SUMMARY_COLUMNS
        .iter()
        .map(|&c| (c.to_string(), Trend::of(&summary.column(c).expect("summary column"))))
        .collect();
    let mut report = format!("sweep over {} = {:?}\n", sw.parameter, sw.values);
    for (c, t) in &trends {
        let _ = writeln!(report, "{c}: {}", t.label());
    }
    for (c, want) in expected_trends(&sw.parameter) {
        let got = trends.iter().find(|(n, _)| n == c).map(|(_, t)| *t).unwrap_or(Trend::Unavailable);
        let verdict = if got == *want { "as expected" } else { "NOT as expected" };
        let _ = writeln!(report, "expected {c} {}: {verdict}", want.label());
    }
    write_text(&base.join("monotonicity.txt"), &report)?;
    write_text(&base.join("sweep.toml"), &config.to_toml()?)?;
    Ok(SweepOutcome { dir: base, points, summary, trends, report })
}

/// Human-readable summary of a finished run directory.
pub fn report(dir: &Path) -> Result<String> {
    let m = RunManifest::read(dir)?;
    let mut s = String::new();
    let _ = writeln!(s, "scenario: {}", m.config.scenario.name());
    let _ = writeln!(s, "status: {:?}", m.status);
    let _ = writeln!(s, "realizations: {} ok, {} failed", m.n_ok, m.n_failed);
    let _ = writeln!(s, "wall clock: {:.3} s on {} workers", m.wall_clock_seconds, m.workers);
    if let Some(e) = &m.prepare_error {
        let _ = writeln!(s, "preparation error: {e}");
    }
    for r in m.realizations.iter().filter(|r| r.status == RealizationStatus::Failed) {
        let _ = writeln!(s, "realization {} failed: {}", r.index, r.error.as_deref().unwrap_or("?"));
    }
    for (k, v) in &m.derived {
        let _ = writeln!(s, "{k} = {}", format_float(*v));
    }
    let agg_path = dir.join(AGGREGATE_FILE);
    if agg_path.exists() {
        let key_columns = match m.config.scenario {
            crate::config::Scenario::Correlators => 6,
            _ => 1,
        };
        let agg = read_table(&agg_path, key_columns)?;
        let _ = writeln!(s, "aggregate: {} rows, columns {}", agg.rows.len(), agg.columns.join(","));
        if let (Some(v), Some(e), Some(a)) =
            (agg.column("value_mean"), agg.column("value_stderr"), agg.column("analytic_mean"))
        {
            let worst = v
                .iter()
                .zip(&e)
                .zip(&a)
                .map(|((v, e), a)| (v - a).abs() / e)
                .fold(0.0, f64::max);
            let _ = writeln!(s, "max |MC - analytic| / stderr = {worst:.3}");
        }
    }
    Ok(s)
}
