//! Per-Hamiltonian analysis shared by the scenarios: diagonalization, the Γ̂
//! fit, density of states and the moments entering the RMT prediction.

use qfi_core::analytics::{
    deff_rmt_estimate, fit_gamma, heisenberg_time, microcanonical_average, GammaFit, RmtPredictionInputs,
};
use qfi_core::qfi::{diagonal_ensemble_average, effective_dimension, EvolutionContext};
use qfi_core::rmt::{build_deutsch_hamiltonian, RmtModelSpec};
use qfi_core::spin::{
    build_h0_prime, build_hamiltonian, density_of_states, freedman_diaconis_width, sigma_z, DensityOfStates,
    InitialStateKind, NonInteractingBasis, SpinChainSpec,
};
use qfi_core::{eigh, to_eigenbasis, EigenSystem, QfiError, SymmetricMatrix, C64};

/// `⟨Ψ(t)|O|Ψ(t)⟩` with `O` in the eigenbasis and `a0` the initial amplitudes.
pub fn expectation_at(energies: &[f64], a0: &[C64], observable_eig: &SymmetricMatrix, t: f64) -> qfi_core::Result<f64> {
    let psi: Vec<C64> = a0.iter().zip(energies).map(|(a, &e)| a * C64::from_polar(1.0, -e * t)).collect();
    observable_eig.expectation(&psi)
}

/// `(O²)_μμ = Σ_ρ O_μρ²` for symmetric `O`.
pub fn squared_diagonal(o: &SymmetricMatrix) -> Vec<f64> {
    (0..o.dim()).map(|mu| o.column(mu).iter().map(|x| x * x).sum()).collect()
}

/// Least-squares line through `(ln t, ln f)`: `(slope, prefactor)` of `f ≈ c·t^s`.
pub fn power_law_fit(times: &[f64], values: &[f64]) -> qfi_core::Result<(f64, f64)> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(QfiError::InvalidInput("power-law fit needs two or more paired samples".into()));
    }
    if times.iter().chain(values).any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(QfiError::InvalidInput("power-law fit needs positive finite samples".into()));
    }
    let n = times.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = times.iter().zip(values).map(|(t, f)| (t.ln(), f.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(QfiError::Degenerate("all sample times coincide".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, (my - slope * mx).exp()))
}

/// Geometric mean of `f/t^power`: the prefactor of `f ≈ c·t^power` with the exponent held fixed.
pub fn fixed_power_prefactor(times: &[f64], values: &[f64], power: f64) -> qfi_core::Result<f64> {
    if times.len() != values.len() || times.is_empty() {
        return Err(QfiError::InvalidInput("prefactor fit needs paired samples".into()));
    }
    if times.iter().chain(values).any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(QfiError::InvalidInput("prefactor fit needs positive finite samples".into()));
    }
    let s: f64 = times.iter().zip(values).map(|(t, f)| f.ln() - power * t.ln()).sum();
    Ok((s / times.len() as f64).exp())
}

/// `n` points from `a` to `b` with constant ratio.
pub fn geometric_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a * (b / a).powf(k as f64 / (n - 1).max(1) as f64)).collect()
}

/// Reference quantities for one initial state of a spin chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateAnalysis {
    pub e0: f64,
    pub density_e0: f64,
    pub m1: f64,
    pub m2: f64,
    pub var: f64,
    pub tau: f64,
    pub d_eff: f64,
    pub d_eff_rmt: f64,
    pub inputs: RmtPredictionInputs,
}

/// A diagonalized spin chain with `H'` and `σ^z₁` in its eigenbasis.
pub struct SpinSystem {
    pub spec: SpinChainSpec,
    pub es: EigenSystem,
    pub basis: NonInteractingBasis,
    pub dos: DensityOfStates,
    template: EvolutionContext,
    h0_prime_sq_diag: Vec<f64>,
    /// Only stored when `σ^z₁` differs from `H'`.
    sigma_z1: Option<SymmetricMatrix>,
}

impl SpinSystem {
    pub fn new(spec: &SpinChainSpec) -> qfi_core::Result<Self> {
        let h = build_hamiltonian(spec)?;
        let es = eigh(&h)?;
        drop(h);
        let basis = NonInteractingBasis::new(spec)?;
        let hp = to_eigenbasis(&build_h0_prime(spec)?, &es)?;
        let sigma_z1 = if spec.n_system > 1 { Some(to_eigenbasis(&sigma_z(1, spec.n)?, &es)?) } else { None };
        let width = freedman_diaconis_width(es.eigenvalues())?;
        let dos = density_of_states(es.eigenvalues(), width)?;
        let h0_prime_sq_diag = squared_diagonal(&hp);
        let mut a0 = vec![C64::new(0.0, 0.0); es.dim()];
        a0[0] = C64::new(1.0, 0.0);
        let template = EvolutionContext::from_parts(es.eigenvalues().to_vec(), a0, hp)?;
        Ok(Self { spec: spec.clone(), es, basis, dos, template, h0_prime_sq_diag, sigma_z1 })
    }

    pub fn dim(&self) -> usize {
        self.es.dim()
    }

    pub fn h0_prime_eig(&self) -> &SymmetricMatrix {
        self.template.h0_prime_eig()
    }

    pub fn sigma_z1_eig(&self) -> &SymmetricMatrix {
        self.sigma_z1.as_ref().unwrap_or_else(|| self.template.h0_prime_eig())
    }

    pub fn prepare(&self, kind: &InitialStateKind) -> qfi_core::Result<Vec<C64>> {
        let psi: Vec<C64> =
            kind.prepare(&self.spec, Some(&self.basis))?.into_iter().map(|x| C64::new(x, 0.0)).collect();
        Ok(psi)
    }

    pub fn amplitudes(&self, psi: &[C64]) -> qfi_core::Result<Vec<C64>> {
        self.es.amplitudes(psi)
    }

    pub fn context(&self, a0: Vec<C64>) -> qfi_core::Result<EvolutionContext> {
        self.template.with_initial_amplitudes(a0)
    }

    /// Non-interacting eigenstate closest in energy to `e`.
    pub fn nearest_basis_index(&self, e: f64) -> usize {
        let energies = self.basis.energies();
        let mut best = 0;
        for (k, &x) in energies.iter().enumerate() {
            if (x - e).abs() < (energies[best] - e).abs() {
                best = k;
            }
        }
        best
    }

    /// Γ̂ from the `σ^z₁` relaxation of `|φ_index⟩` on `[0, stop]`.
    pub fn fit_decay(&self, index: usize, stop: f64, points: usize) -> qfi_core::Result<GammaFit> {
        let phi = self.prepare(&InitialStateKind::BasisEigenstate { index })?;
        let a = self.amplitudes(&phi)?;
        let sz = self.sigma_z1_eig();
        let times: Vec<f64> = (0..points).map(|k| stop * k as f64 / (points - 1) as f64).collect();
        let series = times
            .iter()
            .map(|&t| expectation_at(self.es.eigenvalues(), &a, sz, t))
            .collect::<qfi_core::Result<Vec<f64>>>()?;
        let o_bar = diagonal_ensemble_average(&a, &sz.diagonal())?;
        fit_gamma(&times, &series, series[0], o_bar)
    }

    /// Diagonal-ensemble moments of `H'`, `D(E₀)`, τ and `d_eff` for amplitudes `a0`.
    pub fn analyze(&self, a0: &[C64], gamma_hat: f64) -> qfi_core::Result<StateAnalysis> {
        let e0: f64 = a0.iter().zip(self.es.eigenvalues()).map(|(a, e)| a.norm_sqr() * e).sum();
        let density_e0 = self.dos.at(e0);
        if !(density_e0 > 0.0) {
            return Err(QfiError::Numerical(format!("density of states vanishes at E0 = {e0}")));
        }
        let m1 = diagonal_ensemble_average(a0, &self.h0_prime_eig().diagonal())?;
        let m2 = diagonal_ensemble_average(a0, &self.h0_prime_sq_diag)?;
        let var = (m2 - m1 * m1).max(0.0);
        let inputs = RmtPredictionInputs::for_density(gamma_hat, density_e0, m2, var)?;
        Ok(StateAnalysis {
            e0,
            density_e0,
            m1,
            m2,
            var,
            tau: heisenberg_time(density_e0, var, m2)?,
            d_eff: effective_dimension(a0)?,
            d_eff_rmt: deff_rmt_estimate(density_e0, gamma_hat)?,
            inputs,
        })
    }

    /// Eigensystems of `H(B − δ)` and `H(B + δ)`.
    pub fn stencil(&self, delta: f64) -> qfi_core::Result<(EigenSystem, EigenSystem)> {
        let minus = eigh(&build_hamiltonian(&self.spec.with_b(self.spec.b - delta))?)?;
        let plus = eigh(&build_hamiltonian(&self.spec.with_b(self.spec.b + delta))?)?;
        Ok((minus, plus))
    }
}

/// One sampled Deutsch Hamiltonian with `H' = diag(α)`, `α = 1..N`.
pub struct RmtRealization {
    pub spec: RmtModelSpec,
    pub es: EigenSystem,
    pub gamma: f64,
    labels: Vec<f64>,
}

impl RmtRealization {
    pub fn new(spec: &RmtModelSpec) -> qfi_core::Result<Self> {
        let (_, h) = build_deutsch_hamiltonian(spec)?;
        let es = eigh(&h)?;
        let labels = (1..=spec.n).map(|a| a as f64).collect();
        Ok(Self { spec: *spec, es, gamma: spec.gamma(), labels })
    }

    /// `H' = diag(α)`.
    pub fn h0_prime(&self) -> qfi_core::Result<SymmetricMatrix> {
        SymmetricMatrix::from_diagonal(&self.labels)
    }

    /// Amplitudes of `|φ_α⟩` (1-based `α`) in the eigenbasis.
    pub fn bare_state_amplitudes(&self, alpha: usize) -> Vec<C64> {
        (0..self.es.dim()).map(|mu| C64::new(self.es.component(mu, alpha - 1), 0.0)).collect()
    }

    /// `(H')_μμ = Σ_α α c_μ(α)²` without forming the full transform.
    pub fn h0_prime_eig_diagonal(&self) -> Vec<f64> {
        (0..self.es.dim())
            .map(|mu| self.es.vector(mu).iter().zip(&self.labels).map(|(c, a)| a * c * c).sum())
            .collect()
    }

    pub fn context(&self, alpha: usize) -> qfi_core::Result<EvolutionContext> {
        let hp = to_eigenbasis(&self.h0_prime()?, &self.es)?;
        EvolutionContext::from_parts(self.es.eigenvalues().to_vec(), self.bare_state_amplitudes(alpha), hp)
    }

    /// Lorentzian microcanonical averages of `α` and `α²` around `e0`.
    pub fn microcanonical_moments(&self, e0: f64) -> qfi_core::Result<(f64, f64)> {
        let bare = self.spec.bare_energies();
        let m1 = microcanonical_average(&self.labels, &bare, e0, self.gamma, self.spec.omega)?.value;
        let sq: Vec<f64> = self.labels.iter().map(|a| a * a).collect();
        let m2 = microcanonical_average(&sq, &bare, e0, self.gamma, self.spec.omega)?.value;
        Ok((m1, m2))
    }

    /// Inputs of the growth law with `level_density = ω`.
    pub fn prediction_inputs(&self, e0: f64) -> qfi_core::Result<RmtPredictionInputs> {
        let (m1, m2) = self.microcanonical_moments(e0)?;
        RmtPredictionInputs::from_moments(self.gamma, self.spec.omega, m1, m2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qfi_core::qfi::observable_evolution;

    #[test]
    fn expectation_matches_context_evolution() {
        let spec = RmtModelSpec { n: 30, omega: 1.0, g: 2.0, seed: 3 };
        let r = RmtRealization::new(&spec).unwrap();
        let ctx = r.context(15).unwrap();
        for t in [0.0, 0.7, 3.0] {
            let a = expectation_at(ctx.energies(), ctx.initial_amplitudes(), ctx.h0_prime_eig(), t).unwrap();
            let b = observable_evolution(&ctx, ctx.h0_prime_eig(), t).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_shortcut_matches_transform() {
        let spec = RmtModelSpec { n: 25, omega: 1.0, g: 1.5, seed: 11 };
        let r = RmtRealization::new(&spec).unwrap();
        let full = to_eigenbasis(&r.h0_prime().unwrap(), &r.es).unwrap().diagonal();
        for (x, y) in full.iter().zip(r.h0_prime_eig_diagonal()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn power_law_recovers_exponent() {
        let ts = geometric_grid(0.1, 10.0, 9);
        let fs: Vec<f64> = ts.iter().map(|t| 3.0 * t.powf(1.5)).collect();
        let (s, c) = power_law_fit(&ts, &fs).unwrap();
        assert!((s - 1.5).abs() < 1e-12 && (c - 3.0).abs() < 1e-12);
        assert!((fixed_power_prefactor(&ts, &fs, 1.5).unwrap() - 3.0).abs() < 1e-12);
        assert!(power_law_fit(&[1.0], &[1.0]).is_err());
        assert!(power_law_fit(&[1.0, 2.0], &[1.0, -1.0]).is_err());
    }

    #[test]
    fn squared_diagonal_of_projector_is_diagonal() {
        let p = SymmetricMatrix::from_diagonal(&[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(squared_diagonal(&p), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn spin_system_moments_for_sigma_z_eigenstate() {
        let spec = SpinChainSpec::reference(7);
        let sys = SpinSystem::new(&spec).unwrap();
        let idx = 20;
        let a = sys.amplitudes(&sys.prepare(&InitialStateKind::BasisEigenstate { index: idx }).unwrap()).unwrap();
        let an = sys.analyze(&a, 0.1).unwrap();
        // H' = σ^z₁ squares to the identity
        assert!((an.m2 - 1.0).abs() < 1e-10);
        assert!(an.var <= 1.0 && an.d_eff >= 1.0);
        let found = sys.nearest_basis_index(sys.basis.energy(idx));
        assert_eq!(sys.basis.energy(found), sys.basis.energy(idx));
    }
}
