//! Classical Fisher information of concrete measurements.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dims, QfiError, Result};
use crate::linalg::{inner, norm, EigenSystem, C64};

/// Probabilities below this are left out of the Fisher sum.
pub const P_FLOOR: f64 = 1e-14;
/// Relative change under `δ → δ/2` above which the step is flagged.
pub const RICHARDSON_TOLERANCE: f64 = 0.01;

/// `p(n|λ)` and `∂_λ p(n|λ)` for one measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementDistribution {
    pub probabilities: Vec<f64>,
    pub d_probabilities: Vec<f64>,
}

impl MeasurementDistribution {
    pub fn new(probabilities: Vec<f64>, d_probabilities: Vec<f64>) -> Result<Self> {
        ensure_dims(probabilities.len(), d_probabilities.len())?;
        if probabilities.iter().any(|&p| !(p >= -1e-15)) {
            return Err(QfiError::InvalidInput("probabilities must be nonnegative".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(QfiError::InvalidInput(format!("probabilities sum to {total}")));
        }
        let dtotal: f64 = d_probabilities.iter().sum();
        if dtotal.abs() > 1e-8 {
            return Err(QfiError::InvalidInput(format!("probability derivatives sum to {dtotal}")));
        }
        Ok(Self { probabilities, d_probabilities })
    }

    /// `Σ (∂p)²/p` over outcomes with `p > p_floor`, and the number left out.
    pub fn fisher_information(&self, p_floor: f64) -> (f64, usize) {
        let mut f = 0.0;
        let mut excluded = 0;
        for (&p, &dp) in self.probabilities.iter().zip(&self.d_probabilities) {
            if p > p_floor {
                f += dp * dp / p;
            } else {
                excluded += 1;
            }
        }
        (f, excluded)
    }
}

/// CFI of the projective measurement in the eigenbasis of the symmetric
/// logarithmic derivative `L = 2(|∂ψ⟩⟨ψ| + |ψ⟩⟨∂ψ|)`.
///
/// `L` lives in `span{ψ, ∂ψ}`; outside it every outcome has `p = ∂p = 0`.
pub fn sld_cfi(psi: &[C64], d_psi: &[C64]) -> Result<f64> {
    ensure_dims(psi.len(), d_psi.len())?;
    let n = norm(psi);
    if (n - 1.0).abs() > 1e-10 {
        return Err(QfiError::InvalidInput(format!("state norm is {n}, expected 1")));
    }
    let c1 = inner(psi, d_psi);
    let perp: Vec<C64> = d_psi.iter().zip(psi).map(|(d, p)| d - c1 * p).collect();
    let c2 = norm(&perp);
    if c2 <= 1e-14 * norm(d_psi).max(1.0) {
        return Ok(0.0);
    }
    // basis e1 = ψ, e2 = perp/c2: L = [[4 Re c1, 2 c2], [2 c2, 0]], ψ = (1, 0), ∂ψ = (c1, c2)
    let a = 4.0 * c1.re;
    let b = 2.0 * c2;
    let root = (0.25 * a * a + b * b).sqrt();
    let mut f = 0.0;
    for lambda in [0.5 * a + root, 0.5 * a - root] {
        let (x, y) = (b, lambda - a);
        let r = (x * x + y * y).sqrt();
        let (x, y) = (x / r, y / r);
        // ⟨φ|ψ⟩ = x, ⟨φ|∂ψ⟩ = x c1 + y c2
        let p = x * x;
        let dp = 2.0 * (x * (c1 * x + y * c2)).re;
        if p > P_FLOOR {
            f += dp * dp / p;
        }
    }
    Ok(f)
}

/// Eigensystems of `H(B)` and `H(B ± δ)`, optionally also `H(B ± δ/2)`,
/// with the initial state's amplitudes in each.
pub struct ParameterStencil<'a> {
    delta: f64,
    psi0: Vec<C64>,
    center: StencilPoint<'a>,
    minus: StencilPoint<'a>,
    plus: StencilPoint<'a>,
    half: Option<(StencilPoint<'a>, StencilPoint<'a>)>,
}

struct StencilPoint<'a> {
    es: &'a EigenSystem,
    a0: Vec<C64>,
}

impl<'a> StencilPoint<'a> {
    fn new(es: &'a EigenSystem, psi0: &[C64]) -> Result<Self> {
        Ok(Self { es, a0: es.amplitudes(psi0)? })
    }

    fn populations(&self, t: f64) -> Result<Vec<f64>> {
        let amps: Vec<C64> = self
            .a0
            .iter()
            .zip(self.es.eigenvalues())
            .map(|(a, &e)| a * C64::from_polar(1.0, -e * t))
            .collect();
        Ok(self.es.to_original_basis(&amps)?.iter().map(|z| z.norm_sqr()).collect())
    }
}

impl<'a> ParameterStencil<'a> {
    pub fn new(
        center: &'a EigenSystem,
        minus: &'a EigenSystem,
        plus: &'a EigenSystem,
        psi0: &[C64],
        delta: f64,
    ) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(QfiError::InvalidInput(format!("δ must be positive, got {delta}")));
        }
        ensure_dims(center.dim(), minus.dim())?;
        ensure_dims(center.dim(), plus.dim())?;
        ensure_dims(center.dim(), psi0.len())?;
        Ok(Self {
            delta,
            psi0: psi0.to_vec(),
            center: StencilPoint::new(center, psi0)?,
            minus: StencilPoint::new(minus, psi0)?,
            plus: StencilPoint::new(plus, psi0)?,
            half: None,
        })
    }

    /// Adds `H(B ± δ/2)` for the step-halving check.
    pub fn with_half_step(mut self, minus_half: &'a EigenSystem, plus_half: &'a EigenSystem) -> Result<Self> {
        ensure_dims(self.center.es.dim(), minus_half.dim())?;
        ensure_dims(self.center.es.dim(), plus_half.dim())?;
        self.half = Some((
            StencilPoint::new(minus_half, &self.psi0)?,
            StencilPoint::new(plus_half, &self.psi0)?,
        ));
        Ok(self)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Default step `max(1e-4·|B|, 1e-6)`.
    pub fn default_delta(b: f64) -> f64 {
        (1e-4 * b.abs()).max(1e-6)
    }

    /// Computational-basis distribution at time `t` with central-difference derivatives.
    pub fn distribution(&self, t: f64) -> Result<MeasurementDistribution> {
        self.distribution_with(t, &self.minus, &self.plus, self.delta)
    }

    fn distribution_with(
        &self,
        t: f64,
        minus: &StencilPoint<'_>,
        plus: &StencilPoint<'_>,
        delta: f64,
    ) -> Result<MeasurementDistribution> {
        let p = self.center.populations(t)?;
        let pm = minus.populations(t)?;
        let pp = plus.populations(t)?;
        let dp = pp.iter().zip(&pm).map(|(a, b)| (a - b) / (2.0 * delta)).collect();
        MeasurementDistribution::new(p, dp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationCfi {
    pub value: f64,
    /// `|F(δ/2) − F(δ)| / F(δ)` when the half step was supplied.
    pub richardson_change: Option<f64>,
    pub delta_warning: bool,
    pub excluded_states: usize,
    pub p_floor: f64,
}

/// CFI of measuring every spin in the computational basis.
pub fn population_cfi(stencil: &ParameterStencil<'_>, t: f64) -> Result<PopulationCfi> {
    let (value, excluded_states) = stencil.distribution(t)?.fisher_information(P_FLOOR);
    let richardson_change = match &stencil.half {
        Some((m, p)) => {
            let (half, _) = stencil
                .distribution_with(t, m, p, 0.5 * stencil.delta)?
                .fisher_information(P_FLOOR);
            Some(if value > 0.0 { (half - value).abs() / value } else { (half - value).abs() })
        }
        None => None,
    };
    Ok(PopulationCfi {
        value,
        richardson_change,
        delta_warning: richardson_change.is_some_and(|c| c > RICHARDSON_TOLERANCE),
        excluded_states,
        p_floor: P_FLOOR,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigh, SymmetricMatrix};
    use crate::qfi::{derivative_state, evolve_state, qfi_exact, EvolutionContext};
    use crate::rmt::{build_deutsch_hamiltonian, RmtModelSpec};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn distribution_invariants() {
        assert!(MeasurementDistribution::new(vec![0.5, 0.5], vec![0.1, -0.1]).is_ok());
        assert!(MeasurementDistribution::new(vec![0.5, 0.6], vec![0.0, 0.0]).is_err());
        assert!(MeasurementDistribution::new(vec![0.5, 0.5], vec![0.1, 0.1]).is_err());
        assert!(MeasurementDistribution::new(vec![1.5, -0.5], vec![0.0, 0.0]).is_err());
        let d = MeasurementDistribution::new(vec![0.25, 0.75, 0.0], vec![0.5, -0.5, 0.0]).unwrap();
        let (f, excluded) = d.fisher_information(P_FLOOR);
        assert!((f - (1.0 + 1.0 / 3.0)).abs() < 1e-14);
        assert_eq!(excluded, 1);
    }

    #[test]
    fn sld_global_phase_is_zero() {
        let psi = vec![c(0.6), C64::new(0.0, 0.8)];
        let d: Vec<C64> = psi.iter().map(|p| p * C64::new(0.0, 1.3)).collect();
        assert_eq!(sld_cfi(&psi, &d).unwrap(), 0.0);
        assert_eq!(sld_cfi(&psi, &[c(0.0), c(0.0)]).unwrap(), 0.0);
        assert!(sld_cfi(&[c(1.0), c(1.0)], &[c(0.0), c(0.0)]).is_err());
    }

    #[test]
    fn sld_two_level_dephasing() {
        let hp = SymmetricMatrix::from_diagonal(&[1.0, 2.0]).unwrap();
        let es = eigh(&hp.scaled(0.4)).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let ctx = EvolutionContext::new(&es, &[c(s), c(s)], &hp).unwrap();
        for t in [0.3, 1.0, 4.0] {
            let psi = evolve_state(&ctx, t).unwrap();
            let d = derivative_state(&ctx, t).unwrap();
            let f = sld_cfi(&psi.amplitudes, &d.amplitudes).unwrap();
            assert!((f - t * t).abs() < 1e-12 * t * t);
        }
    }

    #[test]
    fn sld_saturates_qfi_on_random_instance() {
        let spec = RmtModelSpec { n: 80, omega: 1.0, g: 2.5, seed: 4 };
        let (h0, h) = build_deutsch_hamiltonian(&spec).unwrap();
        let es = eigh(&h).unwrap();
        let mut psi0 = vec![c(0.0); 80];
        psi0[40] = c(1.0);
        let ctx = EvolutionContext::new(&es, &psi0, &h0).unwrap();
        for t in [0.1, 1.0, 10.0, 300.0] {
            let q = qfi_exact(&ctx, t).unwrap();
            let psi = evolve_state(&ctx, t).unwrap();
            let d = derivative_state(&ctx, t).unwrap();
            let f = sld_cfi(&psi.amplitudes, &d.amplitudes).unwrap();
            assert!((f / q - 1.0).abs() < 1e-6, "t={t}: {f} vs {q}");
        }
    }

    #[test]
    fn population_cfi_bounds() {
        let spec = RmtModelSpec { n: 64, omega: 1.0, g: 2.0, seed: 8 };
        let (h0, h) = build_deutsch_hamiltonian(&spec).unwrap();
        let lam = 1.0;
        let delta = ParameterStencil::default_delta(lam);
        let at = |l: f64| eigh(&h.add(&h0.scaled(l - lam)).unwrap()).unwrap();
        let (center, minus, plus) = (at(lam), at(lam - delta), at(lam + delta));
        let (mh, ph) = (at(lam - 0.5 * delta), at(lam + 0.5 * delta));
        // a superposition so the computational-basis populations depend on λ
        let mut psi0 = vec![c(0.0); 64];
        psi0[30] = c(0.6);
        psi0[33] = c(0.8);
        let stencil = ParameterStencil::new(&center, &minus, &plus, &psi0, delta)
            .unwrap()
            .with_half_step(&mh, &ph)
            .unwrap();
        let ctx = EvolutionContext::new(&center, &psi0, &h0).unwrap();
        assert!(population_cfi(&stencil, 0.0).unwrap().value < 1e-12);
        for t in [0.5, 2.0, 20.0] {
            let cfi = population_cfi(&stencil, t).unwrap();
            let q = qfi_exact(&ctx, t).unwrap();
            assert!(cfi.value >= 0.0 && cfi.value <= q * (1.0 + 1e-3), "t={t}: {} vs {q}", cfi.value);
            assert!(!cfi.delta_warning);
            let total: f64 = stencil.distribution(t).unwrap().probabilities.iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
        }
        assert!(ParameterStencil::new(&center, &minus, &plus, &psi0, 0.0).is_err());
    }
}
