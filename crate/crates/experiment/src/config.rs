//! Experiment configuration: TOML schema, defaults and field-level validation.

use std::path::{Path, PathBuf};

use qfi_core::spin::{InitialStateKind, SpinChainSpec};
use serde::{Deserialize, Serialize};

use crate::error::{ExperimentError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    RmtMicrocanonical,
    RmtQfi,
    SpinQfi,
    SpinRegimes,
    CouplingSweep,
    TwoSpinRatio,
    Correlators,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::RmtMicrocanonical => "rmt-microcanonical",
            Scenario::RmtQfi => "rmt-qfi",
            Scenario::SpinQfi => "spin-qfi",
            Scenario::SpinRegimes => "spin-regimes",
            Scenario::CouplingSweep => "coupling-sweep",
            Scenario::TwoSpinRatio => "two-spin-ratio",
            Scenario::Correlators => "correlators",
        }
    }

    pub fn uses_rmt(self) -> bool {
        matches!(self, Scenario::RmtMicrocanonical | Scenario::RmtQfi | Scenario::Correlators)
    }

    pub fn needs_time_grid(self) -> bool {
        !matches!(self, Scenario::RmtMicrocanonical | Scenario::Correlators)
    }
}

/// Random-matrix model parameters; the realization seeds come from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmtSection {
    pub n: usize,
    #[serde(default = "one")]
    pub omega: f64,
    pub g: f64,
    /// 1-based label of the initial bare state `|φ_α⟩`; defaults to `n/2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_alpha: Option<usize>,
    /// Initial labels for the microcanonical scenario; defaults to 21 points over the middle half.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<usize>>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    Linear,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeUnit {
    Absolute,
    /// Times multiply `1/Γ` (analytic for the random-matrix model, fitted for spins).
    InverseGamma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default = "geometric")]
    pub spacing: Spacing,
    #[serde(default = "absolute")]
    pub unit: TimeUnit,
}

fn geometric() -> Spacing {
    Spacing::Geometric
}

fn absolute() -> TimeUnit {
    TimeUnit::Absolute
}

impl TimeGrid {
    /// Grid points, with `scale` applied for `InverseGamma` units.
    pub fn times(&self, gamma: f64) -> Vec<f64> {
        let s = match self.unit {
            TimeUnit::Absolute => 1.0,
            TimeUnit::InverseGamma => 1.0 / gamma,
        };
        let n = self.points;
        (0..n)
            .map(|k| {
                let f = k as f64 / (n - 1) as f64;
                let t = match self.spacing {
                    Spacing::Linear => self.start + f * (self.stop - self.start),
                    Spacing::Geometric => self.start * (self.stop / self.start).powf(f),
                };
                t * s
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(field("time.points", "must be at least 2"));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(field("time", "start and stop must be finite"));
        }
        if self.start < 0.0 {
            return Err(field("time.start", "must be nonnegative"));
        }
        if self.spacing == Spacing::Geometric && self.start <= 0.0 {
            return Err(field("time.start", "must be positive for geometric spacing"));
        }
        if self.stop <= self.start {
            return Err(field("time.stop", "must exceed time.start"));
        }
        Ok(())
    }
}

/// Spin-chain analysis options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinAnalysisSection {
    /// One realization per entry.
    pub initial_states: Vec<InitialStateKind>,
    /// Basis eigenstate whose `σ^z₁` decay fixes Γ̂; defaults to the index of the
    /// first initial state, or the bare state closest in energy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_index: Option<usize>,
    #[serde(default = "fit_stop")]
    pub fit_stop: f64,
    #[serde(default = "fit_points")]
    pub fit_points: usize,
    /// Computational-basis CFI via a `B ± δ` stencil (two extra diagonalizations).
    #[serde(default = "yes")]
    pub cfi: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfi_delta: Option<f64>,
}

fn fit_stop() -> f64 {
    50.0
}

fn fit_points() -> usize {
    200
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoSpinSection {
    /// Bath sites of the SQL reference chain.
    pub reference_sites: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelatorSection {
    /// 0-based eigenstate indices `μ ≠ ν`.
    pub mu: usize,
    pub nu: usize,
    /// Basis indices probed, 0-based.
    pub basis: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Dotted parameter path, e.g. `spin.jx_sb` or `rmt.n`.
    pub parameter: String,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_time: Option<f64>,
}

pub const SWEEP_PARAMETERS: [&str; 10] = [
    "rmt.n",
    "rmt.g",
    "rmt.omega",
    "spin.n",
    "spin.b",
    "spin.bx_bath",
    "spin.jx",
    "spin.jz_sb",
    "spin.jx_sb",
    "n_realizations",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n_realizations: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "yes")]
    pub plot_script: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmt: Option<RmtSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spin: Option<SpinChainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<SpinAnalysisSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_spin: Option<TwoSpinSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlators: Option<CorrelatorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

fn field(name: &str, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Config { field: name.to_string(), message: message.into() }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let span = e.span().map(|s| format!(" (bytes {}..{})", s.start, s.end)).unwrap_or_default();
            field("config", format!("{msg}{span}"))
        })?;
        cfg.validated()
    }

    /// Reads a config file, or the `config` table of a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let value: toml::Table = toml::from_str(&text).map_err(|e| field("config", e.message().to_string()))?;
        if value.contains_key("manifest_version") {
            let cfg = match value.get("config") {
                Some(toml::Value::Table(t)) => t,
                _ => return Err(field("config", "manifest has no config table")),
            };
            let text = toml::to_string(cfg).map_err(|e| ExperimentError::Serialize(e.to_string()))?;
            Self::from_toml_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| ExperimentError::Serialize(e.to_string()))
    }

    /// Checks required sections and fills defaults.
    pub fn validated(mut self) -> Result<Self> {
        if self.n_realizations < 1 {
            return Err(field("n_realizations", "must be at least 1"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(field("seed", "must fit in a signed 64-bit integer"));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(field("output_dir", "must not be empty"));
        }
        if let Some(t) = self.probe_time {
            if !(t > 0.0 && t.is_finite()) {
                return Err(field("probe_time", "must be positive and finite"));
            }
        }
        let sc = self.scenario;
        if sc.needs_time_grid() {
            self.time.as_ref().ok_or_else(|| field("time", format!("required by scenario {}", sc.name())))?.validate()?;
        }
        if sc.uses_rmt() {
            if self.spin.is_some() {
                return Err(field("spin", format!("not used by scenario {}", sc.name())));
            }
            let rmt = self.rmt.as_mut().ok_or_else(|| field("rmt", format!("required by scenario {}", sc.name())))?;
            validate_rmt(rmt)?;
        } else {
            if self.rmt.is_some() {
                return Err(field("rmt", format!("not used by scenario {}", sc.name())));
            }
            let spin = self.spin.as_ref().ok_or_else(|| field("spin", format!("required by scenario {}", sc.name())))?;
            spin.validate().map_err(|e| field("spin", e.to_string()))?;
            let analysis =
                self.analysis.as_ref().ok_or_else(|| field("analysis", format!("required by scenario {}", sc.name())))?;
            if analysis.initial_states.is_empty() {
                return Err(field("analysis.initial_states", "must list at least one state"));
            }
            if analysis.initial_states.len() != self.n_realizations {
                return Err(field(
                    "n_realizations",
                    format!(
                        "spin scenarios run one realization per initial state; expected {}",
                        analysis.initial_states.len()
                    ),
                ));
            }
            if analysis.fit_points < 20 {
                return Err(field("analysis.fit_points", "must be at least 20"));
            }
            if !(analysis.fit_stop > 0.0 && analysis.fit_stop.is_finite()) {
                return Err(field("analysis.fit_stop", "must be positive and finite"));
            }
            if let Some(d) = analysis.cfi_delta {
                if !(d > 0.0 && d.is_finite()) {
                    return Err(field("analysis.cfi_delta", "must be positive and finite"));
                }
            }
            let dim = spin.dim();
            if let Some(i) = analysis.fit_index {
                if i >= dim {
                    return Err(field("analysis.fit_index", format!("outside 0..{dim}")));
                }
            }
            for (k, s) in analysis.initial_states.iter().enumerate() {
                let bad = match s {
                    InitialStateKind::BasisEigenstate { index } | InitialStateKind::SystemSuperposition { index } => {
                        *index >= dim
                    }
                    InitialStateKind::Product { spins } => spins.len() != spin.n,
                    InitialStateKind::Antiferromagnetic => false,
                };
                if bad {
                    return Err(field(&format!("analysis.initial_states[{k}]"), "index or spin string does not fit the chain"));
                }
            }
        }
        match sc {
            Scenario::TwoSpinRatio => {
                let ts = self.two_spin.as_ref().ok_or_else(|| field("two_spin", "required by scenario two-spin-ratio"))?;
                let spin = self.spin.as_ref().expect("checked above");
                if spin.n_system != 2 {
                    return Err(field("spin.n_system", "two-spin-ratio needs two system spins"));
                }
                let mut reference = spin.clone();
                for (c, &r) in reference.couplings.iter_mut().zip(&ts.reference_sites) {
                    c.bath_site = r;
                }
                reference.validate().map_err(|e| field("two_spin.reference_sites", e.to_string()))?;
            }
            _ if self.two_spin.is_some() => {
                return Err(field("two_spin", format!("not used by scenario {}", sc.name())));
            }
            _ => {}
        }
        match sc {
            Scenario::Correlators => {
                let c = self.correlators.as_ref().ok_or_else(|| field("correlators", "required by scenario correlators"))?;
                let n = self.rmt.as_ref().expect("checked above").n;
                if c.mu == c.nu {
                    return Err(field("correlators.nu", "must differ from mu"));
                }
                if c.mu >= n || c.nu >= n {
                    return Err(field("correlators", format!("mu and nu must lie in 0..{n}")));
                }
                if c.basis.is_empty() || c.basis.len() > 8 {
                    return Err(field("correlators.basis", "needs 1 to 8 indices"));
                }
                if let Some(b) = c.basis.iter().find(|&&b| b >= n) {
                    return Err(field("correlators.basis", format!("index {b} outside 0..{n}")));
                }
                if self.n_realizations < qfi_core::correlators::MIN_REALIZATIONS {
                    return Err(field(
                        "n_realizations",
                        format!("correlators need at least {}", qfi_core::correlators::MIN_REALIZATIONS),
                    ));
                }
            }
            _ if self.correlators.is_some() => {
                return Err(field("correlators", format!("not used by scenario {}", sc.name())));
            }
            _ => {}
        }
        if sc.uses_rmt() && self.analysis.is_some() {
            return Err(field("analysis", format!("not used by scenario {}", sc.name())));
        }
        if let Some(sw) = &self.sweep {
            validate_sweep(sw, sc)?;
        }
        Ok(self)
    }

    /// Copy with `parameter` set to `value`, revalidated.
    pub fn with_parameter(&self, parameter: &str, value: f64) -> Result<Self> {
        let mut c = self.clone();
        let as_count = |name: &str| -> Result<usize> {
            if value.fract() != 0.0 || value < 1.0 {
                return Err(field(name, format!("{value} is not a positive integer")));
            }
            Ok(value as usize)
        };
        fn spin<'a>(c: &'a mut ExperimentConfig, p: &str) -> Result<&'a mut SpinChainSpec> {
            c.spin.as_mut().ok_or_else(|| field(p, "config has no spin section"))
        }
        fn rmt<'a>(c: &'a mut ExperimentConfig, p: &str) -> Result<&'a mut RmtSection> {
            c.rmt.as_mut().ok_or_else(|| field(p, "config has no rmt section"))
        }
        match parameter {
            "rmt.n" => {
                let n = as_count(parameter)?;
                let r = rmt(&mut c, parameter)?;
                r.n = n;
                r.initial_alpha = None;
                r.alphas = None;
            }
            "rmt.g" => rmt(&mut c, parameter)?.g = value,
            "rmt.omega" => rmt(&mut c, parameter)?.omega = value,
            "spin.n" => spin(&mut c, parameter)?.n = as_count(parameter)?,
            "spin.b" => spin(&mut c, parameter)?.b = value,
            "spin.bx_bath" => spin(&mut c, parameter)?.bx_bath = value,
            "spin.jx" => spin(&mut c, parameter)?.jx = value,
            "spin.jz_sb" => spin(&mut c, parameter)?.jz_sb = value,
            "spin.jx_sb" => spin(&mut c, parameter)?.jx_sb = value,
            "n_realizations" => c.n_realizations = as_count(parameter)?,
            other => return Err(field("sweep.parameter", format!("unknown parameter {other}"))),
        }
        c.sweep = None;
        c.validated()
    }
}

fn validate_rmt(rmt: &mut RmtSection) -> Result<()> {
    if rmt.n < 2 {
        return Err(field("rmt.n", "must be at least 2"));
    }
    if !(rmt.omega > 0.0 && rmt.omega.is_finite()) {
        return Err(field("rmt.omega", "must be positive and finite"));
    }
    if !(rmt.g > 0.0 && rmt.g.is_finite()) {
        return Err(field("rmt.g", "must be positive and finite"));
    }
    let n = rmt.n;
    let alpha = *rmt.initial_alpha.get_or_insert((n / 2).max(1));
    if alpha == 0 || alpha > n {
        return Err(field("rmt.initial_alpha", format!("must lie in 1..={n}")));
    }
    let alphas = rmt.alphas.get_or_insert_with(|| {
        let lo = n / 4 + 1;
        let hi = 3 * n / 4;
        let k = 21.min(hi - lo + 1);
        let mut v: Vec<usize> = (0..k).map(|i| lo + i * (hi - lo) / (k - 1).max(1)).collect();
        v.dedup();
        v
    });
    if alphas.is_empty() {
        return Err(field("rmt.alphas", "must not be empty"));
    }
    if let Some(a) = alphas.iter().find(|&&a| a == 0 || a > n) {
        return Err(field("rmt.alphas", format!("label {a} outside 1..={n}")));
    }
    Ok(())
}

fn validate_sweep(sw: &SweepSection, sc: Scenario) -> Result<()> {
    if !SWEEP_PARAMETERS.contains(&sw.parameter.as_str()) {
        return Err(field(
            "sweep.parameter",
            format!("unknown parameter {}; expected one of {}", sw.parameter, SWEEP_PARAMETERS.join(", ")),
        ));
    }
    let section_ok = match sw.parameter.split('.').next() {
        Some("rmt") => sc.uses_rmt(),
        Some("spin") => !sc.uses_rmt(),
        _ => true,
    };
    if !section_ok {
        return Err(field("sweep.parameter", format!("{} does not apply to scenario {}", sw.parameter, sc.name())));
    }
    if sw.values.len() < 2 {
        return Err(field("sweep.values", "a sweep needs at least 2 points"));
    }
    if let Some(v) = sw.values.iter().find(|v| !v.is_finite()) {
        return Err(field("sweep.values", format!("non-finite value {v}")));
    }
    if let Some(t) = sw.probe_time {
        if !(t > 0.0 && t.is_finite()) {
            return Err(field("sweep.probe_time", "must be positive and finite"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const RMT: &str = r#"
scenario = "rmt-qfi"
n_realizations = 3
seed = 7
output_dir = "out"

[rmt]
n = 40
g = 2.0

[time]
start = 0.1
stop = 10.0
points = 5
unit = "inverse-gamma"
"#;

    #[test]
    fn defaults_are_resolved() {
        let c = ExperimentConfig::from_toml_str(RMT).unwrap();
        let r = c.rmt.as_ref().unwrap();
        assert_eq!(r.omega, 1.0);
        assert_eq!(r.initial_alpha, Some(20));
        assert!(r.alphas.as_ref().unwrap().iter().all(|&a| (11..=30).contains(&a)));
        let again = ExperimentConfig::from_toml_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn unknown_key_is_rejected_with_its_name() {
        let err = ExperimentConfig::from_toml_str(&RMT.replace("g = 2.0", "g = 2.0\nbogus = 1")).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn missing_section_names_the_field() {
        let text = RMT.replace("[rmt]\nn = 40\ng = 2.0\n", "");
        match ExperimentConfig::from_toml_str(&text) {
            Err(ExperimentError::Config { field, .. }) => assert_eq!(field, "rmt"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn time_grid_spacing() {
        let g = TimeGrid { start: 1.0, stop: 100.0, points: 3, spacing: Spacing::Geometric, unit: TimeUnit::InverseGamma };
        let t = g.times(0.5);
        assert!((t[1] - 20.0).abs() < 1e-12 && (t[2] - 200.0).abs() < 1e-12);
        let l = TimeGrid { spacing: Spacing::Linear, unit: TimeUnit::Absolute, ..g };
        assert_eq!(l.times(0.5), vec![1.0, 50.5, 100.0]);
    }

    #[test]
    fn sweep_needs_two_points() {
        let text = format!("{RMT}\n[sweep]\nparameter = \"rmt.n\"\nvalues = [100.0]\n");
        match ExperimentConfig::from_toml_str(&text) {
            Err(ExperimentError::Config { field, .. }) => assert_eq!(field, "sweep.values"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parameter_override() {
        let c = ExperimentConfig::from_toml_str(RMT).unwrap();
        let d = c.with_parameter("rmt.n", 80.0).unwrap();
        assert_eq!(d.rmt.as_ref().unwrap().n, 80);
        assert_eq!(d.rmt.as_ref().unwrap().initial_alpha, Some(40));
        assert!(c.with_parameter("rmt.n", 80.5).is_err());
        assert!(c.with_parameter("spin.b", 0.1).is_err());
    }
}
