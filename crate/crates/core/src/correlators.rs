//! Two- and four-point correlators of random eigenvector components
//! `c_μ(α) = ⟨φ_α|ψ_μ⟩` in the Deutsch model, with Monte-Carlo estimators.
//!
//! Indices are 0-based and sit on the bare grid: index `k` has energy
//! `(k + 1)ω`, for eigenstates and bare states alike.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, QfiError, Result};
use crate::linalg::eigh;
use crate::rmt::{build_deutsch_hamiltonian, lorentzian, realization_seed, RmtModelSpec};

fn grid_energy(k: usize, omega: f64) -> f64 {
    (k + 1) as f64 * omega
}

fn lambda(state: usize, basis: usize, gamma: f64, omega: f64) -> f64 {
    lorentzian(grid_energy(state, omega), grid_energy(basis, omega), gamma, omega)
}

fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// `⟨c_μ(α) c_μ(β) c_μ(α′) c_μ(β′)⟩` from Wick pairing of independent Gaussians.
pub fn four_point_same(mu: usize, [a, b, ap, bp]: [usize; 4], gamma: f64, omega: f64) -> Result<f64> {
    ensure_positive("gamma", gamma)?;
    ensure_positive("omega", omega)?;
    let l = |x| lambda(mu, x, gamma, omega);
    // pairings (αβ)(α′β′), (αα′)(ββ′), (αβ′)(βα′)
    Ok(l(a) * l(ap) * delta(a, b) * delta(ap, bp)
        + l(a) * l(b) * delta(a, ap) * delta(b, bp)
        + l(a) * l(b) * delta(a, bp) * delta(b, ap))
}

/// `⟨c_μ(α) c_ν(β) c_μ(α′) c_ν(β′)⟩` for `μ ≠ ν`, including the correction
/// enforced by orthogonality of the two eigenvectors.
pub fn four_point_diff(mu: usize, nu: usize, [a, b, ap, bp]: [usize; 4], gamma: f64, omega: f64) -> Result<f64> {
    if mu == nu {
        return Err(QfiError::InvalidInput("μ = ν: use four_point_same".into()));
    }
    ensure_positive("gamma", gamma)?;
    ensure_positive("omega", omega)?;
    let lm = |x| lambda(mu, x, gamma, omega);
    let ln = |x| lambda(nu, x, gamma, omega);
    let gaussian = lm(a) * ln(b) * delta(a, ap) * delta(b, bp);
    let pairing = delta(a, b) * delta(ap, bp) + delta(a, bp) * delta(ap, b);
    if pairing == 0.0 {
        return Ok(gaussian);
    }
    let s = overlap_sum(grid_energy(mu, omega), grid_energy(nu, omega), gamma, omega)?;
    Ok(gaussian - lm(a) * ln(b) * lm(ap) * ln(bp) / s * pairing)
}

/// `Σ_γ Λ(μ,γ)Λ(ν,γ)`.
///
/// Continuum value `(2ωΓ/π)/((E_μ−E_ν)² + 4Γ²)` when `Γ/ω ≥ 3`; otherwise the
/// sum is done explicitly over an unbounded grid of spacing `ω`.
pub fn overlap_sum(e_mu: f64, e_nu: f64, gamma: f64, omega: f64) -> Result<f64> {
    ensure_positive("gamma", gamma)?;
    ensure_positive("omega", omega)?;
    if gamma / omega >= 3.0 {
        Ok(overlap_sum_continuum(e_mu, e_nu, gamma, omega))
    } else {
        Ok(overlap_sum_discrete(e_mu, e_nu, gamma, omega))
    }
}

pub fn overlap_sum_continuum(e_mu: f64, e_nu: f64, gamma: f64, omega: f64) -> f64 {
    let d = e_mu - e_nu;
    2.0 * omega * gamma / std::f64::consts::PI / (d * d + 4.0 * gamma * gamma)
}

/// Explicit grid sum over `γω` for integer `γ`, truncated where the tails are below 1e-12.
pub fn overlap_sum_discrete(e_mu: f64, e_nu: f64, gamma: f64, omega: f64) -> f64 {
    let reach = 1e4 * gamma.max(omega);
    let lo = ((e_mu.min(e_nu) - reach) / omega).floor() as i64;
    let hi = ((e_mu.max(e_nu) + reach) / omega).ceil() as i64;
    (lo..=hi)
        .map(|k| {
            let e = k as f64 * omega;
            lorentzian(e_mu, e, gamma, omega) * lorentzian(e_nu, e, gamma, omega)
        })
        .sum()
}

/// One factor `c_state(basis)` of a correlator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub state: usize,
    pub basis: usize,
}

impl Factor {
    pub fn new(state: usize, basis: usize) -> Self {
        Self { state, basis }
    }
}

/// Sign-gauge behaviour of a product of components.
pub fn is_gauge_invariant(pattern: &[Factor]) -> bool {
    let mut states: Vec<usize> = pattern.iter().map(|f| f.state).collect();
    states.sort_unstable();
    states.chunk_by(|a, b| a == b).all(|c| c.len() % 2 == 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_realizations: usize,
    /// False when some eigenvector appears an odd number of times; the value
    /// then depends on the largest-component-positive sign convention.
    pub gauge_invariant: bool,
}

pub const MIN_REALIZATIONS: usize = 10;

/// Monte-Carlo estimates of several component products over the same realizations.
///
/// Realization `k` uses the seed `realization_seed(spec.seed, k)`.
pub fn mc_correlators(
    spec: &RmtModelSpec,
    patterns: &[Vec<Factor>],
    n_realizations: usize,
) -> Result<Vec<CorrelatorEstimate>> {
    spec.validate()?;
    if n_realizations < MIN_REALIZATIONS {
        return Err(QfiError::InvalidInput(format!(
            "need at least {MIN_REALIZATIONS} realizations, got {n_realizations}"
        )));
    }
    for f in patterns.iter().flatten() {
        if f.state >= spec.n || f.basis >= spec.n {
            return Err(QfiError::InvalidInput(format!(
                "index ({}, {}) outside 0..{}",
                f.state, f.basis, spec.n
            )));
        }
    }
    let mut acc = vec![Welford::default(); patterns.len()];
    for k in 0..n_realizations {
        let (_, h) = build_deutsch_hamiltonian(&spec.with_seed(realization_seed(spec.seed, k as u64)))?;
        let es = eigh(&h)?;
        for (w, p) in acc.iter_mut().zip(patterns) {
            w.push(p.iter().map(|f| es.component(f.state, f.basis)).product());
        }
    }
    Ok(acc
        .iter()
        .zip(patterns)
        .map(|(w, p)| CorrelatorEstimate {
            mean: w.mean,
            stderr: w.stderr(),
            n_realizations,
            gauge_invariant: is_gauge_invariant(p),
        })
        .collect())
}

pub fn mc_correlator(spec: &RmtModelSpec, pattern: &[Factor], n_realizations: usize) -> Result<CorrelatorEstimate> {
    Ok(mc_correlators(spec, &[pattern.to_vec()], n_realizations)?.remove(0))
}

/// Running mean and variance.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn stderr(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}
