//! Deutsch random-matrix model: an equally spaced diagonal Hamiltonian plus a
//! GOE perturbation, and the Lorentzian profile of its eigenstates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, QfiError, Result};
use crate::linalg::SymmetricMatrix;

/// Parameters of `H = H0 + h`, with `H0 = diag(α ω)` for `α = 1..N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmtModelSpec {
    pub n: usize,
    pub omega: f64,
    pub g: f64,
    pub seed: u64,
}

impl RmtModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(QfiError::InvalidInput(format!("N must be at least 2, got {}", self.n)));
        }
        ensure_positive("omega", self.omega)?;
        ensure_positive("g", self.g)
    }

    /// Coupling giving a target ratio Γ/ω for this `n` and `omega`.
    pub fn coupling_for_width_ratio(n: usize, omega: f64, ratio: f64) -> f64 {
        (ratio * omega * n as f64 * omega / std::f64::consts::PI).sqrt()
    }

    pub fn gamma(&self) -> f64 {
        gamma_width(self.g, self.n as f64, self.omega)
    }

    /// Unperturbed energies `α ω`, `α = 1..N`.
    pub fn bare_energies(&self) -> Vec<f64> {
        (1..=self.n).map(|a| a as f64 * self.omega).collect()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

/// Seed of realization `index` within a run seeded by `master`.
///
/// SplitMix64 finalizer over the pair; distinct indices give decorrelated streams.
pub fn realization_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// GOE sample with `<h_ab> = 0` and `<h_ab²> = g²(1 + δ_ab)/N`.
pub fn sample_goe(n: usize, g: f64, seed: u64) -> Result<SymmetricMatrix> {
    if n < 2 {
        return Err(QfiError::InvalidInput(format!("N must be at least 2, got {n}")));
    }
    ensure_positive("g", g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let off = g / (n as f64).sqrt();
    let diag = off * std::f64::consts::SQRT_2;
    // upper triangle drawn in row-major order
    let mut h = SymmetricMatrix::zeros(n)?;
    for i in 0..n {
        for j in i..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            h.add_symmetric(i, j, if i == j { diag * z } else { off * z });
        }
    }
    Ok(h)
}

/// Returns `(H0, H)` for the Deutsch model.
pub fn build_deutsch_hamiltonian(spec: &RmtModelSpec) -> Result<(SymmetricMatrix, SymmetricMatrix)> {
    spec.validate()?;
    let h0 = SymmetricMatrix::from_diagonal(&spec.bare_energies())?;
    let h = h0.add(&sample_goe(spec.n, spec.g, spec.seed)?)?;
    Ok((h0, h))
}

/// Wave-function width `Γ = π g² / (N ω)`.
pub fn gamma_width(g: f64, n: f64, omega: f64) -> f64 {
    std::f64::consts::PI * g * g / (n * omega)
}

/// `Λ(μ,α) = (ωΓ/π) / ((E_μ − E_α)² + Γ²)`.
pub fn lorentzian(e_mu: f64, e_alpha: f64, gamma: f64, omega: f64) -> f64 {
    let d = e_mu - e_alpha;
    omega * gamma / std::f64::consts::PI / (d * d + gamma * gamma)
}

/// Lorentzian eigenstate profile of width `gamma` on a grid of spacing `omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianProfile {
    pub gamma: f64,
    pub omega: f64,
}

impl LorentzianProfile {
    pub fn new(gamma: f64, omega: f64) -> Result<Self> {
        ensure_positive("gamma", gamma)?;
        ensure_positive("omega", omega)?;
        Ok(Self { gamma, omega })
    }

    pub fn from_model(spec: &RmtModelSpec) -> Result<Self> {
        spec.validate()?;
        Self::new(spec.gamma(), spec.omega)
    }

    pub fn weight(&self, e_mu: f64, e_alpha: f64) -> f64 {
        lorentzian(e_mu, e_alpha, self.gamma, self.omega)
    }

    pub fn peak(&self) -> f64 {
        self.omega / (std::f64::consts::PI * self.gamma)
    }

    pub fn width_ratio(&self) -> f64 {
        self.gamma / self.omega
    }
}
