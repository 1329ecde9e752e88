//! Exact QFI of `e^{-iH(λ)t}|Ψ₀⟩` in the eigenbasis of `H`.
//!
//! The derivative of the propagator is `∂_λ e^{-iHt} = e^{-iHt} K` with
//!
//! ```text
//! K_ρν = -i t H'_ρν e^{iθ_ρν t} sinc(θ_ρν t),   θ_ρν = (E_ρ - E_ν)/2,
//! ```
//!
//! so `F_Q = 4(‖K a₀‖² − |a₀†K a₀|²)`. Applying `K` to `a₀` costs `O(D²)` per
//! time point, which is the triple sum over `ρ, μ, ν` with the `ρ` sum done as
//! a matrix-vector product.

use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dims, ensure_finite, QfiError, Result};
use crate::linalg::{inner, norm, to_eigenbasis, ComplexState, EigenSystem, SymmetricMatrix, C64};

const NORM_TOL: f64 = 1e-10;

/// `sin(x)/x` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// `e^{ix} sinc(x) = (e^{2ix} − 1)/(2ix)`, given `e^{2ix}` as `phase`.
#[inline]
fn phase_sinc(x: f64, phase: C64) -> C64 {
    if x.abs() < 1e-2 {
        // Σ (2ix)^n/(n+1)!, truncation error below (2·10⁻²)⁷/8! ≈ 3e-16
        let y = C64::new(0.0, 2.0 * x);
        let mut acc = C64::new(1.0, 0.0);
        let mut term = C64::new(1.0, 0.0);
        for n in 1..7 {
            term = term * y / (n as f64 + 1.0);
            acc += term;
        }
        acc
    } else {
        (phase - 1.0) / C64::new(0.0, 2.0 * x)
    }
}

/// Everything needed to evolve `Ψ₀` and differentiate with respect to λ.
///
/// The spectrum and `H'` are shared, so contexts for several initial states
/// of one Hamiltonian are cheap.
#[derive(Debug, Clone)]
pub struct EvolutionContext {
    energies: Arc<[f64]>,
    a0: Vec<C64>,
    h0_prime: Arc<SymmetricMatrix>,
}

impl EvolutionContext {
    /// `psi0` and `h0_prime` are given in the original (unperturbed) basis.
    pub fn new(es: &EigenSystem, psi0: &[C64], h0_prime: &SymmetricMatrix) -> Result<Self> {
        ComplexState::new(psi0.to_vec()).check_normalized(NORM_TOL)?;
        let a0 = es.amplitudes(psi0)?;
        let h0_prime = to_eigenbasis(h0_prime, es)?;
        Self::from_parts(es.eigenvalues().to_vec(), a0, h0_prime)
    }

    /// Everything already in the interacting basis.
    pub fn from_parts(energies: Vec<f64>, a0: Vec<C64>, h0_prime_eig: SymmetricMatrix) -> Result<Self> {
        ensure_dims(energies.len(), a0.len())?;
        ensure_dims(energies.len(), h0_prime_eig.dim())?;
        ComplexState::new(a0.clone()).check_normalized(NORM_TOL)?;
        if energies.iter().any(|e| !e.is_finite()) || !h0_prime_eig.is_finite() {
            return Err(QfiError::InvalidInput("non-finite energies or derivative operator".into()));
        }
        Ok(Self { energies: energies.into(), a0, h0_prime: Arc::new(h0_prime_eig) })
    }

    /// Same Hamiltonian and `H'`, different initial amplitudes.
    pub fn with_initial_amplitudes(&self, a0: Vec<C64>) -> Result<Self> {
        ensure_dims(self.dim(), a0.len())?;
        ComplexState::new(a0.clone()).check_normalized(NORM_TOL)?;
        Ok(Self { energies: Arc::clone(&self.energies), a0, h0_prime: Arc::clone(&self.h0_prime) })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn initial_amplitudes(&self) -> &[C64] {
        &self.a0
    }

    pub fn h0_prime_eig(&self) -> &SymmetricMatrix {
        &self.h0_prime
    }

    /// `θ_ρν = (E_ρ − E_ν)/2`, computed on demand.
    pub fn theta(&self, rho: usize, nu: usize) -> f64 {
        0.5 * (self.energies[rho] - self.energies[nu])
    }

    /// Mean energy `⟨Ψ₀|H|Ψ₀⟩`.
    pub fn mean_energy(&self) -> f64 {
        self.a0.iter().zip(self.energies.iter()).map(|(a, e)| a.norm_sqr() * e).sum()
    }

    fn phases(&self, t: f64) -> Vec<C64> {
        self.energies.iter().map(|&e| C64::from_polar(1.0, e * t)).collect()
    }

    /// `K a₀`.
    pub fn kernel_times_a0(&self, t: f64) -> Result<Vec<C64>> {
        ensure_finite("t", t)?;
        let n = self.dim();
        let mut out = vec![C64::new(0.0, 0.0); n];
        if t == 0.0 {
            return Ok(out);
        }
        let p = self.phases(t);
        let minus_it = C64::new(0.0, -t);
        // K is not symmetric, but H' is: column ν of H' is row ν
        for nu in 0..n {
            let a = self.a0[nu];
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            let col = self.h0_prime.column(nu);
            let pn = p[nu].conj();
            let e_nu = self.energies[nu];
            for rho in 0..n {
                let h = col[rho];
                if h == 0.0 {
                    continue;
                }
                let x = 0.5 * (self.energies[rho] - e_nu) * t;
                out[rho] += phase_sinc(x, p[rho] * pn) * (a * h);
            }
        }
        for o in &mut out {
            *o *= minus_it;
        }
        Ok(out)
    }
}

/// `a_μ e^{-iE_μ t}` in the interacting basis.
pub fn evolve_state(ctx: &EvolutionContext, t: f64) -> Result<ComplexState> {
    ensure_finite("t", t)?;
    Ok(ComplexState::new(
        ctx.a0
            .iter()
            .zip(ctx.energies.iter())
            .map(|(a, &e)| a * C64::from_polar(1.0, -e * t))
            .collect(),
    ))
}

/// Full kernel matrix `K(t)`; `O(D²)` memory, meant for inspection and tests.
pub fn derivative_kernel(ctx: &EvolutionContext, t: f64) -> Result<Mat<C64>> {
    ensure_finite("t", t)?;
    let n = ctx.dim();
    let p = ctx.phases(t);
    Ok(Mat::from_fn(n, n, |rho, nu| {
        if t == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let x = ctx.theta(rho, nu) * t;
        C64::new(0.0, -t) * ctx.h0_prime.get(rho, nu) * phase_sinc(x, p[rho] * p[nu].conj())
    }))
}

/// `|∂_λψ(t)⟩ = e^{-iHt} K a₀` in the interacting basis.
pub fn derivative_state(ctx: &EvolutionContext, t: f64) -> Result<ComplexState> {
    let ka = ctx.kernel_times_a0(t)?;
    Ok(ComplexState::new(
        ka.into_iter()
            .zip(ctx.energies.iter())
            .map(|(k, &e)| k * C64::from_polar(1.0, -e * t))
            .collect(),
    ))
}

/// `F_Q(t) = 4(‖K a₀‖² − |a₀†K a₀|²)`.
pub fn qfi_exact(ctx: &EvolutionContext, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(QfiError::InvalidInput(format!("t must be nonnegative, got {t}")));
    }
    let ka = ctx.kernel_times_a0(t)?;
    let n2 = norm(&ka).powi(2);
    let overlap = inner(&ctx.a0, &ka).norm_sqr();
    Ok(4.0 * (n2 - overlap))
}

pub fn qfi_series(ctx: &EvolutionContext, times: &[f64]) -> Result<Vec<f64>> {
    times.iter().map(|&t| qfi_exact(ctx, t)).collect()
}

/// `8(1 − |⟨ψ_λ(t)|ψ_{λ+δ}(t)⟩|)/δ²`, evaluated without cancellation as
/// `4‖ψ_λ − u ψ_{λ+δ}‖²/δ²` with the phase `u` aligning the two states.
pub fn qfi_fidelity_oracle(
    es_lambda: &EigenSystem,
    es_shifted: &EigenSystem,
    psi0: &[C64],
    t: f64,
    delta: f64,
) -> Result<f64> {
    if delta == 0.0 || !delta.is_finite() {
        return Err(QfiError::InvalidInput(format!("fidelity step must be finite and nonzero, got {delta}")));
    }
    ensure_dims(es_lambda.dim(), es_shifted.dim())?;
    let a = es_lambda.propagate(psi0, t)?;
    let b = es_shifted.propagate(psi0, t)?;
    let z = inner(&a, &b);
    let u = if z.norm() > 0.0 { z.conj() / z.norm() } else { C64::new(1.0, 0.0) };
    let d2: f64 = a.iter().zip(&b).map(|(x, y)| (x - u * y).norm_sqr()).sum();
    Ok(4.0 * d2 / (delta * delta))
}

/// `⟨Ψ(t)|O|Ψ(t)⟩` for `O` given in the interacting basis.
pub fn observable_evolution(ctx: &EvolutionContext, observable_eig: &SymmetricMatrix, t: f64) -> Result<f64> {
    let psi = evolve_state(ctx, t)?;
    observable_eig.expectation(&psi.amplitudes)
}

/// `Σ_μ |a_μ|² O_μμ`.
pub fn diagonal_ensemble_average(a0: &[C64], observable_diag_eig: &[f64]) -> Result<f64> {
    ensure_dims(a0.len(), observable_diag_eig.len())?;
    Ok(a0.iter().zip(observable_diag_eig).map(|(a, o)| a.norm_sqr() * o).sum())
}

/// Inverse participation ratio `1/Σ|a_μ|⁴`.
pub fn effective_dimension(a0: &[C64]) -> Result<f64> {
    let s: f64 = a0.iter().map(|a| a.norm_sqr().powi(2)).sum();
    if !(s > 0.0) {
        return Err(QfiError::InvalidInput("zero state has no effective dimension".into()));
    }
    Ok(1.0 / s)
}

/// Columns of a QFI run on a shared time grid; empty columns were not computed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QfiSeries {
    pub realization: usize,
    pub times: Vec<f64>,
    pub qfi_exact: Vec<f64>,
    pub qfi_rmt: Vec<f64>,
    pub cfi_populations: Vec<f64>,
    pub cfi_sld: Vec<f64>,
}
