//! Scenario pipelines. `prepare` does the shared, expensive work once; each
//! realization then runs independently against the immutable result.

use std::collections::BTreeMap;

use qfi_core::analytics::{qfi_rmt, GammaFit, RmtPredictionInputs};
use qfi_core::correlators::{four_point_diff, four_point_same};
use qfi_core::measurement::{population_cfi, ParameterStencil};
use qfi_core::qfi::{diagonal_ensemble_average, effective_dimension, qfi_exact, EvolutionContext};
use qfi_core::rmt::{realization_seed, RmtModelSpec};
use qfi_core::spin::{sigma_z, sigma_z_product, InitialStateKind};
use qfi_core::{to_eigenbasis, EigenSystem, SymmetricMatrix};

use crate::analysis::{
    expectation_at, fixed_power_prefactor, geometric_grid, power_law_fit, RmtRealization, SpinSystem,
};
use crate::config::{ExperimentConfig, RmtSection, Scenario, TimeGrid};
use crate::error::Result;

/// Numeric table; the first `key_columns` columns identify a row across realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub key_columns: usize,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(columns: &[&str], key_columns: usize) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), key_columns, rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizationOutput {
    pub table: Table,
    pub derived: BTreeMap<String, f64>,
}

/// Shared state built once per run.
pub enum Prepared {
    Rmt(RmtSection),
    Spin(Box<SpinPrepared>),
    TwoSpin(Box<TwoSpinPrepared>),
}

pub struct SpinPrepared {
    pub system: SpinSystem,
    pub fit: GammaFit,
    pub fit_index: usize,
    pub stencil: Option<(EigenSystem, EigenSystem, f64)>,
}

pub struct TwoSpinPrepared {
    pub case: SpinSystem,
    pub reference: SpinSystem,
    pub fit: GammaFit,
    case_zz: SymmetricMatrix,
    reference_zz: SymmetricMatrix,
    reference_sz1: EvolutionContext,
    reference_sz2: EvolutionContext,
}

fn rmt_spec(section: &RmtSection, seed: u64) -> RmtModelSpec {
    RmtModelSpec { n: section.n, omega: section.omega, g: section.g, seed }
}

/// Seed of realization `k`.
pub fn seed_for(config: &ExperimentConfig, k: usize) -> u64 {
    realization_seed(config.seed, k as u64)
}

/// Γ̂ fit index: explicit, or the index of the first initial state, or the bare
/// state closest in energy to it.
fn resolve_fit_index(system: &SpinSystem, config: &ExperimentConfig) -> Result<usize> {
    let analysis = config.analysis.as_ref().expect("validated");
    if let Some(i) = analysis.fit_index {
        return Ok(i);
    }
    let first = &analysis.initial_states[0];
    Ok(match first {
        InitialStateKind::BasisEigenstate { index } | InitialStateKind::SystemSuperposition { index } => *index,
        other => {
            let a = system.amplitudes(&system.prepare(other)?)?;
            let e0: f64 = a.iter().zip(system.es.eigenvalues()).map(|(x, e)| x.norm_sqr() * e).sum();
            system.nearest_basis_index(e0)
        }
    })
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let sc = config.scenario;
    if sc.uses_rmt() {
        return Ok(Prepared::Rmt(config.rmt.clone().expect("validated")));
    }
    let analysis = config.analysis.as_ref().expect("validated");
    let spec = config.spin.as_ref().expect("validated");
    let system = SpinSystem::new(spec)?;
    let fit_index = resolve_fit_index(&system, config)?;
    let fit = system.fit_decay(fit_index, analysis.fit_stop, analysis.fit_points)?;
    if sc == Scenario::TwoSpinRatio {
        let sites = config.two_spin.as_ref().expect("validated").reference_sites;
        let mut ref_spec = spec.clone();
        for (c, &r) in ref_spec.couplings.iter_mut().zip(&sites) {
            c.bath_site = r;
        }
        let reference = SpinSystem::new(&ref_spec)?;
        let zz = sigma_z_product(&[1, 2], spec.n)?;
        let case_zz = to_eigenbasis(&zz, &system.es)?;
        let reference_zz = to_eigenbasis(&zz, &reference.es)?;
        let energies = reference.es.eigenvalues().to_vec();
        let unit = unit_amplitudes(reference.dim());
        let reference_sz1 =
            EvolutionContext::from_parts(energies.clone(), unit.clone(), reference.sigma_z1_eig().clone())?;
        let reference_sz2 = EvolutionContext::from_parts(
            energies,
            unit,
            to_eigenbasis(&sigma_z(2, spec.n)?, &reference.es)?,
        )?;
        return Ok(Prepared::TwoSpin(Box::new(TwoSpinPrepared {
            case: system,
            reference,
            fit,
            case_zz,
            reference_zz,
            reference_sz1,
            reference_sz2,
        })));
    }
    let stencil = if sc == Scenario::SpinQfi && analysis.cfi {
        let delta = analysis.cfi_delta.unwrap_or_else(|| ParameterStencil::default_delta(spec.b));
        let (m, p) = system.stencil(delta)?;
        Some((m, p, delta))
    } else {
        None
    };
    Ok(Prepared::Spin(Box::new(SpinPrepared { system, fit, fit_index, stencil })))
}

fn unit_amplitudes(dim: usize) -> Vec<qfi_core::C64> {
    let mut a = vec![qfi_core::C64::new(0.0, 0.0); dim];
    a[0] = qfi_core::C64::new(1.0, 0.0);
    a
}

fn median(mut v: Vec<f64>) -> f64 {
    v.retain(|x| !x.is_nan());
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn grid(config: &ExperimentConfig) -> &TimeGrid {
    config.time.as_ref().expect("validated")
}

/// Runs realization `k`.
pub fn realize(config: &ExperimentConfig, prepared: &Prepared, k: usize) -> Result<RealizationOutput> {
    let seed = seed_for(config, k);
    match (config.scenario, prepared) {
        (Scenario::RmtMicrocanonical, Prepared::Rmt(s)) => rmt_microcanonical(s, seed),
        (Scenario::RmtQfi, Prepared::Rmt(s)) => rmt_qfi(config, s, seed),
        (Scenario::Correlators, Prepared::Rmt(s)) => correlators(config, s, seed),
        (Scenario::TwoSpinRatio, Prepared::TwoSpin(p)) => two_spin_ratio(config, p, k),
        (_, Prepared::Spin(p)) => spin_qfi(config, p, k),
        (sc, _) => unreachable!("scenario {} prepared with the wrong state", sc.name()),
    }
}

fn rmt_microcanonical(section: &RmtSection, seed: u64) -> Result<RealizationOutput> {
    let r = RmtRealization::new(&rmt_spec(section, seed))?;
    let diag = r.h0_prime_eig_diagonal();
    let mut table = Table::new(&["alpha", "e0", "mc_average", "de_average", "rel_diff"], 1);
    let mut worst: f64 = 0.0;
    for &alpha in section.alphas.as_ref().expect("resolved") {
        let a0 = r.bare_state_amplitudes(alpha);
        let e0: f64 = a0.iter().zip(r.es.eigenvalues()).map(|(a, e)| a.norm_sqr() * e).sum();
        let (mc, _) = r.microcanonical_moments(e0)?;
        let de = diagonal_ensemble_average(&a0, &diag)?;
        let rel = (mc - de).abs() / de.abs();
        worst = worst.max(rel);
        table.rows.push(vec![alpha as f64, e0, mc, de, rel]);
    }
    let derived = BTreeMap::from([("gamma".to_string(), r.gamma), ("max_rel_diff".to_string(), worst)]);
    Ok(RealizationOutput { table, derived })
}

fn rmt_qfi(config: &ExperimentConfig, section: &RmtSection, seed: u64) -> Result<RealizationOutput> {
    let r = RmtRealization::new(&rmt_spec(section, seed))?;
    let alpha = section.initial_alpha.expect("resolved");
    let ctx = r.context(alpha)?;
    let e0 = ctx.mean_energy();
    let (m1, m2) = r.microcanonical_moments(e0)?;
    let inputs = RmtPredictionInputs::from_moments(r.gamma, section.omega, m1, m2)?;
    let mut table = Table::new(&["t", "F_Q_exact", "F_Q_rmt", "rel_dev"], 1);
    for t in grid(config).times(r.gamma) {
        let exact = qfi_exact(&ctx, t)?;
        let rmt = qfi_rmt(&inputs, t)?;
        table.rows.push(vec![t, exact, rmt, (1.0 - rmt / exact).abs()]);
    }
    let mut derived = BTreeMap::from([
        ("gamma".to_string(), r.gamma),
        ("e0".to_string(), e0),
        ("d_eff".to_string(), effective_dimension(ctx.initial_amplitudes())?),
        ("m1".to_string(), m1),
        ("m2".to_string(), m2),
        ("median_rel_dev".to_string(), median(table.column("rel_dev").expect("column"))),
    ]);
    if let Some(t) = config.probe_time {
        derived.insert("qfi_at_probe".into(), qfi_exact(&ctx, t)?);
    }
    Ok(RealizationOutput { table, derived })
}

/// Index patterns probed by the correlator scenario: `(same, [a, b, a′, b′])`.
pub fn correlator_patterns(basis: &[usize]) -> Vec<(bool, [usize; 4])> {
    let mut out = Vec::new();
    for &a in basis {
        out.push((true, [a, a, a, a]));
    }
    for (i, &a) in basis.iter().enumerate() {
        for &b in &basis[i + 1..] {
            out.push((true, [a, a, b, b]));
        }
    }
    for &a in basis {
        out.push((false, [a, a, a, a]));
    }
    for (i, &a) in basis.iter().enumerate() {
        for &b in &basis[i + 1..] {
            out.push((false, [a, b, a, b]));
            out.push((false, [a, a, b, b]));
        }
    }
    out
}

fn correlators(config: &ExperimentConfig, section: &RmtSection, seed: u64) -> Result<RealizationOutput> {
    let c = config.correlators.as_ref().expect("validated");
    let spec = rmt_spec(section, seed);
    let r = RmtRealization::new(&spec)?;
    let (gamma, omega) = (spec.gamma(), spec.omega);
    let mut table = Table::new(&["pattern", "same_state", "a", "b", "a_prime", "b_prime", "value", "analytic"], 6);
    for (id, (same, [a, b, ap, bp])) in correlator_patterns(&c.basis).into_iter().enumerate() {
        let (m, n) = if same { (c.mu, c.mu) } else { (c.mu, c.nu) };
        let value = r.es.component(m, a) * r.es.component(n, b) * r.es.component(m, ap) * r.es.component(n, bp);
        let analytic = if same {
            four_point_same(c.mu, [a, b, ap, bp], gamma, omega)?
        } else {
            four_point_diff(c.mu, c.nu, [a, b, ap, bp], gamma, omega)?
        };
        table.rows.push(vec![
            id as f64,
            if same { 1.0 } else { 0.0 },
            a as f64,
            b as f64,
            ap as f64,
            bp as f64,
            value,
            analytic,
        ]);
    }
    Ok(RealizationOutput { table, derived: BTreeMap::from([("gamma".to_string(), gamma)]) })
}

fn spin_qfi(config: &ExperimentConfig, p: &SpinPrepared, k: usize) -> Result<RealizationOutput> {
    let analysis = config.analysis.as_ref().expect("validated");
    let sys = &p.system;
    let gamma = p.fit.gamma_hat;
    let psi = sys.prepare(&analysis.initial_states[k])?;
    let a0 = sys.amplitudes(&psi)?;
    let ctx = sys.context(a0.clone())?;
    let an = sys.analyze(&a0, gamma)?;
    let times = grid(config).times(gamma);
    let mut derived = BTreeMap::from([
        ("gamma_hat".to_string(), gamma),
        ("fit_relative_residual".to_string(), p.fit.relative_residual),
        ("fit_index".to_string(), p.fit_index as f64),
        ("e0".to_string(), an.e0),
        ("density_e0".to_string(), an.density_e0),
        ("d_eff".to_string(), an.d_eff),
        ("d_eff_rmt".to_string(), an.d_eff_rmt),
        ("tau".to_string(), an.tau),
        ("m1".to_string(), an.m1),
        ("m2".to_string(), an.m2),
        ("var".to_string(), an.var),
    ]);
    if let Some(t) = config.probe_time {
        derived.insert("qfi_at_probe".into(), qfi_exact(&ctx, t)?);
    }
    match config.scenario {
        Scenario::SpinRegimes => {
            let mut table = Table::new(&["t", "F_Q_exact", "F_Q_rmt", "regime"], 1);
            for &t in &times {
                let regime = if t <= 0.05 / gamma {
                    1.0
                } else if t >= 2.0 / gamma && t <= 0.3 * an.tau {
                    2.0
                } else if t >= 3.0 * an.tau {
                    3.0
                } else {
                    0.0
                };
                table.rows.push(vec![t, qfi_exact(&ctx, t)?, qfi_rmt(&an.inputs, t)?, regime]);
            }
            let windows = [
                ("a", 1e-3 / gamma, 0.05 / gamma, 4.0 * an.var),
                ("b", 2.0 / gamma, 0.3 * an.tau, f64::NAN),
                ("c", 3.0 * an.tau, 30.0 * an.tau, 4.0 * an.inputs.late_coefficient()),
            ];
            for (name, lo, hi, reference) in windows {
                if hi <= lo {
                    continue;
                }
                let ts = geometric_grid(lo, hi, 15);
                let fs = ts.iter().map(|&t| qfi_exact(&ctx, t)).collect::<qfi_core::Result<Vec<f64>>>()?;
                let (slope, _) = power_law_fit(&ts, &fs)?;
                derived.insert(format!("slope_{name}"), slope);
                if reference.is_finite() {
                    derived.insert(format!("coef_{name}"), fixed_power_prefactor(&ts, &fs, 2.0)?);
                    derived.insert(format!("coef_{name}_reference"), reference);
                }
            }
            Ok(RealizationOutput { table, derived })
        }
        _ => {
            let with_cfi = config.scenario == Scenario::SpinQfi;
            let cols: &[&str] = if with_cfi {
                &["t", "F_Q_exact", "F_Q_rmt", "CFI_pop", "sigma_z1"]
            } else {
                &["t", "F_Q_exact", "F_Q_rmt", "sigma_z1"]
            };
            let mut table = Table::new(cols, 1);
            let stencil = match &p.stencil {
                Some((m, pl, d)) => Some(ParameterStencil::new(&sys.es, m, pl, &psi, *d)?),
                None => None,
            };
            let mut excluded = 0usize;
            for &t in &times {
                let mut row = vec![t, qfi_exact(&ctx, t)?, qfi_rmt(&an.inputs, t)?];
                if with_cfi {
                    row.push(match &stencil {
                        Some(s) => {
                            let c = population_cfi(s, t)?;
                            excluded = excluded.max(c.excluded_states);
                            c.value
                        }
                        None => f64::NAN,
                    });
                }
                row.push(expectation_at(sys.es.eigenvalues(), &a0, sys.sigma_z1_eig(), t)?);
                table.rows.push(row);
            }
            if let Some((_, _, d)) = &p.stencil {
                derived.insert("cfi_delta".into(), *d);
                derived.insert("cfi_max_excluded_states".into(), excluded as f64);
            }
            Ok(RealizationOutput { table, derived })
        }
    }
}

fn two_spin_ratio(config: &ExperimentConfig, p: &TwoSpinPrepared, k: usize) -> Result<RealizationOutput> {
    let analysis = config.analysis.as_ref().expect("validated");
    let gamma = p.fit.gamma_hat;
    let kind = &analysis.initial_states[k];
    let a_case = p.case.amplitudes(&p.case.prepare(kind)?)?;
    let a_ref = p.reference.amplitudes(&p.reference.prepare(kind)?)?;
    let ctx_case = p.case.context(a_case.clone())?;
    let ctx_ref = p.reference.context(a_ref.clone())?;
    let ref_sz1 = p.reference_sz1.with_initial_amplitudes(a_ref.clone())?;
    let ref_sz2 = p.reference_sz2.with_initial_amplitudes(a_ref.clone())?;
    let an = p.case.analyze(&a_case, gamma)?;
    let mut table = Table::new(
        &["t", "F_Q_1", "F_Q_SQL", "ratio", "F_Q_ref_sz1", "F_Q_ref_sz2", "ratio_ref", "zz_1", "zz_ref"],
        1,
    );
    let mut late = Vec::new();
    let mut late_ref = Vec::new();
    for t in grid(config).times(gamma) {
        let f1 = qfi_exact(&ctx_case, t)?;
        let fsql = qfi_exact(&ctx_ref, t)?;
        let s1 = qfi_exact(&ref_sz1, t)?;
        let s2 = qfi_exact(&ref_sz2, t)?;
        let ratio = f1 / fsql;
        let ratio_ref = fsql / (s1 + s2);
        if t >= 3.0 * an.tau {
            late.push(ratio);
            late_ref.push(ratio_ref);
        }
        table.rows.push(vec![
            t,
            f1,
            fsql,
            ratio,
            s1,
            s2,
            ratio_ref,
            expectation_at(p.case.es.eigenvalues(), &a_case, &p.case_zz, t)?,
            expectation_at(p.reference.es.eigenvalues(), &a_ref, &p.reference_zz, t)?,
        ]);
    }
    let derived = BTreeMap::from([
        ("gamma_hat".to_string(), gamma),
        ("e0".to_string(), an.e0),
        ("density_e0".to_string(), an.density_e0),
        ("tau".to_string(), an.tau),
        ("d_eff".to_string(), an.d_eff),
        ("zz_mc_1".to_string(), diagonal_ensemble_average(&a_case, &p.case_zz.diagonal())?),
        ("zz_mc_ref".to_string(), diagonal_ensemble_average(&a_ref, &p.reference_zz.diagonal())?),
        ("median_ratio_late".to_string(), median(late)),
        ("median_ratio_ref_late".to_string(), median(late_ref)),
    ]);
    Ok(RealizationOutput { table, derived })
}
