//! Open spin chain: one or two system spins in a field `B`, coupled to a
//! transverse-field bath with flip-flop hopping.
//!
//! Site 1 is the leftmost tensor factor, so in a basis index the bit for site
//! `j` of an `N`-site chain is `(index >> (N - j)) & 1`, with bit 0 meaning
//! spin up (`σ^z = +1`).

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dims, ensure_finite, ensure_positive, QfiError, Result};
use crate::linalg::{eigh, kron, SymmetricMatrix, C64};

/// Largest chain accepted without the explicit `large` opt-in.
pub const DESK_MAX_SITES: usize = 13;
/// Hard ceiling: a dense 2^15 matrix is 8 GiB.
pub const MAX_SITES: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PauliOp {
    X,
    Y,
    Z,
    Plus,
    Minus,
}

impl PauliOp {
    fn matrix(self) -> Mat<C64> {
        let z = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        let entries = match self {
            PauliOp::X => [z, one, one, z],
            PauliOp::Y => [z, -i, i, z],
            PauliOp::Z => [one, z, z, -one],
            PauliOp::Plus => [z, one, z, z],
            PauliOp::Minus => [z, z, one, z],
        };
        Mat::from_fn(2, 2, |r, c| entries[2 * r + c])
    }
}

/// `I ⊗ … ⊗ σ^q ⊗ … ⊗ I` with the Pauli factor at `site` (1-based).
pub fn pauli_site(op: PauliOp, site: usize, n_sites: usize) -> Result<Mat<C64>> {
    if site == 0 || site > n_sites {
        return Err(QfiError::InvalidInput(format!("site {site} outside 1..={n_sites}")));
    }
    let id = Mat::<C64>::identity(2, 2);
    let mut out = Mat::<C64>::identity(1, 1);
    for j in 1..=n_sites {
        let factor = if j == site { op.matrix() } else { id.clone() };
        out = kron(out.as_ref(), factor.as_ref())?;
    }
    Ok(out)
}

/// A system–bath coupling between `system_site` and bath site `bath_site`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coupling {
    pub system_site: usize,
    pub bath_site: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinChainSpec {
    pub n: usize,
    pub b: f64,
    pub bx_bath: f64,
    pub jx: f64,
    pub jz_sb: f64,
    pub jx_sb: f64,
    pub couplings: Vec<Coupling>,
    pub n_system: usize,
    #[serde(default)]
    pub large: bool,
}

impl SpinChainSpec {
    /// Single system spin with the reference couplings, bath spin `r = 5`.
    pub fn reference(n: usize) -> Self {
        Self {
            n,
            b: 0.01,
            bx_bath: 0.3,
            jx: 1.0,
            jz_sb: 0.2,
            jx_sb: 0.4,
            couplings: vec![Coupling { system_site: 1, bath_site: 5 }],
            n_system: 1,
            large: false,
        }
    }

    /// Two system spins coupled to bath sites `r1` and `r2` (equal for a shared bath spin).
    pub fn two_spin(n: usize, r1: usize, r2: usize) -> Self {
        Self {
            couplings: vec![
                Coupling { system_site: 1, bath_site: r1 },
                Coupling { system_site: 2, bath_site: r2 },
            ],
            n_system: 2,
            ..Self::reference(n)
        }
    }

    pub fn with_b(&self, b: f64) -> Self {
        Self { b, ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        1usize << self.n
    }

    pub fn n_bath(&self) -> usize {
        self.n - self.n_system
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(QfiError::InvalidInput(format!("N must be at least 3, got {}", self.n)));
        }
        if self.n > MAX_SITES || (self.n > DESK_MAX_SITES && !self.large) {
            return Err(QfiError::Size(format!(
                "N = {} exceeds the desk-scale limit {DESK_MAX_SITES} (set `large` for up to {MAX_SITES})",
                self.n
            )));
        }
        if !(1..=2).contains(&self.n_system) {
            return Err(QfiError::InvalidInput(format!(
                "n_system must be 1 or 2, got {}",
                self.n_system
            )));
        }
        if self.couplings.is_empty() {
            return Err(QfiError::InvalidInput("at least one system-bath coupling is required".into()));
        }
        for c in &self.couplings {
            if c.system_site == 0 || c.system_site > self.n_system {
                return Err(QfiError::InvalidInput(format!(
                    "coupling system site {} outside 1..={}",
                    c.system_site, self.n_system
                )));
            }
            if c.bath_site <= self.n_system || c.bath_site > self.n {
                return Err(QfiError::InvalidInput(format!(
                    "coupling bath site {} outside {}..={}",
                    c.bath_site,
                    self.n_system + 1,
                    self.n
                )));
            }
        }
        for (name, v) in [
            ("B", self.b),
            ("Bx_bath", self.bx_bath),
            ("Jx", self.jx),
            ("Jz_sb", self.jz_sb),
            ("Jx_sb", self.jx_sb),
        ] {
            ensure_finite(name, v)?;
        }
        Ok(())
    }
}

/// Terms of a Hamiltonian on `n_sites` spins, all real in the computational basis.
#[derive(Default)]
struct Terms {
    z: Vec<(usize, f64)>,
    zz: Vec<(usize, usize, f64)>,
    x: Vec<(usize, f64)>,
    flip_flop: Vec<(usize, usize, f64)>,
}

impl Terms {
    fn system(spec: &SpinChainSpec) -> Self {
        Self { z: (1..=spec.n_system).map(|s| (s, spec.b)).collect(), ..Self::default() }
    }

    /// Bath terms with sites shifted by `-offset`.
    fn bath(spec: &SpinChainSpec, offset: usize) -> Self {
        let first = spec.n_system + 1;
        Self {
            x: (first..=spec.n).map(|k| (k - offset, spec.bx_bath)).collect(),
            flip_flop: (first..spec.n).map(|k| (k - offset, k + 1 - offset, spec.jx)).collect(),
            ..Self::default()
        }
    }

    fn interaction(spec: &SpinChainSpec) -> Self {
        Self {
            zz: spec
                .couplings
                .iter()
                .map(|c| (c.system_site, c.bath_site, spec.jz_sb))
                .collect(),
            flip_flop: spec
                .couplings
                .iter()
                .map(|c| (c.system_site, c.bath_site, spec.jx_sb))
                .collect(),
            ..Self::default()
        }
    }

    fn extend(mut self, other: Self) -> Self {
        self.z.extend(other.z);
        self.zz.extend(other.zz);
        self.x.extend(other.x);
        self.flip_flop.extend(other.flip_flop);
        self
    }

    fn build(&self, n_sites: usize) -> Result<SymmetricMatrix> {
        let dim = 1usize << n_sites;
        let mask = |site: usize| 1usize << (n_sites - site);
        let sz = |i: usize, site: usize| if i & mask(site) == 0 { 1.0 } else { -1.0 };
        let mut h = SymmetricMatrix::zeros(dim)?;
        // every (j, i) entry is added while visiting column i, so the result stays symmetric
        for i in 0..dim {
            let mut diag = 0.0;
            for &(s, c) in &self.z {
                diag += c * sz(i, s);
            }
            for &(a, b, c) in &self.zz {
                diag += c * sz(i, a) * sz(i, b);
            }
            if diag != 0.0 {
                h.add_entry(i, i, diag);
            }
            for &(s, c) in &self.x {
                if c != 0.0 {
                    h.add_entry(i ^ mask(s), i, c);
                }
            }
            for &(a, b, c) in &self.flip_flop {
                if c != 0.0 && (i & mask(a) == 0) != (i & mask(b) == 0) {
                    h.add_entry(i ^ mask(a) ^ mask(b), i, c);
                }
            }
        }
        Ok(h)
    }
}

/// Full Hamiltonian `H_S + H_B + H_SB`.
pub fn build_hamiltonian(spec: &SpinChainSpec) -> Result<SymmetricMatrix> {
    spec.validate()?;
    Terms::system(spec)
        .extend(Terms::bath(spec, 0))
        .extend(Terms::interaction(spec))
        .build(spec.n)
}

/// Non-interacting part `H_S + H_B`.
pub fn build_noninteracting(spec: &SpinChainSpec) -> Result<SymmetricMatrix> {
    spec.validate()?;
    Terms::system(spec).extend(Terms::bath(spec, 0)).build(spec.n)
}

/// `∂H/∂B = Σ_system σ^z`.
pub fn build_h0_prime(spec: &SpinChainSpec) -> Result<SymmetricMatrix> {
    spec.validate()?;
    let sites: Vec<usize> = (1..=spec.n_system).collect();
    let mut h = SymmetricMatrix::zeros(spec.dim())?;
    for &s in &sites {
        h = h.add(&sigma_z(s, spec.n)?)?;
    }
    Ok(h)
}

/// Diagonal of `σ^z_site` on `n_sites` spins.
pub fn sigma_z_diagonal(site: usize, n_sites: usize) -> Result<Vec<f64>> {
    sigma_z_product_diagonal(&[site], n_sites)
}

/// Diagonal of `Π σ^z_s` over `sites`.
pub fn sigma_z_product_diagonal(sites: &[usize], n_sites: usize) -> Result<Vec<f64>> {
    for &s in sites {
        if s == 0 || s > n_sites {
            return Err(QfiError::InvalidInput(format!("site {s} outside 1..={n_sites}")));
        }
    }
    Ok((0..1usize << n_sites)
        .map(|i| {
            sites
                .iter()
                .map(|&s| if (i >> (n_sites - s)) & 1 == 0 { 1.0 } else { -1.0 })
                .product()
        })
        .collect())
}

pub fn sigma_z(site: usize, n_sites: usize) -> Result<SymmetricMatrix> {
    SymmetricMatrix::from_diagonal(&sigma_z_diagonal(site, n_sites)?)
}

pub fn sigma_z_product(sites: &[usize], n_sites: usize) -> Result<SymmetricMatrix> {
    SymmetricMatrix::from_diagonal(&sigma_z_product_diagonal(sites, n_sites)?)
}

/// Eigenbasis of `H_S + H_B` as products `|s⟩_S ⊗ |φ_b⟩_B`, sorted by energy.
///
/// `H_S` is diagonal in the computational basis of the system spins, so only
/// the bath block needs a dense eigensolve.
#[derive(Debug, Clone)]
pub struct NonInteractingBasis {
    n_system: usize,
    n_bath: usize,
    bath: crate::linalg::EigenSystem,
    /// `(energy, system configuration, bath eigen-index)`, ascending.
    order: Vec<(f64, usize, usize)>,
}

impl NonInteractingBasis {
    pub fn new(spec: &SpinChainSpec) -> Result<Self> {
        spec.validate()?;
        let n_bath = spec.n_bath();
        let bath_h = Terms::bath(spec, spec.n_system).build(n_bath)?;
        let bath = eigh(&bath_h)?;
        let n_sys = spec.n_system;
        let mut order = Vec::with_capacity(1 << spec.n);
        for s in 0..1usize << n_sys {
            let eps: f64 = (0..n_sys)
                .map(|k| if (s >> (n_sys - 1 - k)) & 1 == 0 { spec.b } else { -spec.b })
                .sum();
            for (b, e) in bath.eigenvalues().iter().enumerate() {
                order.push((eps + e, s, b));
            }
        }
        order.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        Ok(Self { n_system: n_sys, n_bath, bath, order })
    }

    pub fn dim(&self) -> usize {
        self.order.len()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.order.iter().map(|o| o.0).collect()
    }

    pub fn energy(&self, alpha: usize) -> f64 {
        self.order[alpha].0
    }

    /// System configuration (bit pattern, site 1 most significant) of state `alpha`.
    pub fn system_config(&self, alpha: usize) -> usize {
        self.order[alpha].1
    }

    pub fn bath_index(&self, alpha: usize) -> usize {
        self.order[alpha].2
    }

    pub fn bath_eigensystem(&self) -> &crate::linalg::EigenSystem {
        &self.bath
    }

    /// `|φ_alpha⟩` in the full computational basis.
    pub fn state(&self, alpha: usize) -> Result<Vec<f64>> {
        if alpha >= self.dim() {
            return Err(QfiError::InvalidInput(format!(
                "basis index {alpha} outside 0..{}",
                self.dim()
            )));
        }
        let (_, s, b) = self.order[alpha];
        let mut sys = vec![0.0; 1 << self.n_system];
        sys[s] = 1.0;
        Ok(self.product(&sys, b))
    }

    /// `|χ⟩_S ⊗ |φ_b⟩_B` for a system vector `chi`.
    pub fn product(&self, chi: &[f64], bath_index: usize) -> Vec<f64> {
        let nb = 1usize << self.n_bath;
        let phi = self.bath.vector(bath_index);
        let mut out = vec![0.0; chi.len() * nb];
        for (s, &c) in chi.iter().enumerate() {
            if c != 0.0 {
                for (o, &p) in out[s * nb..(s + 1) * nb].iter_mut().zip(phi) {
                    *o = c * p;
                }
            }
        }
        out
    }
}

/// How to prepare `|Ψ₀⟩`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialStateKind {
    /// `|φ_α⟩`, the `index`-th eigenstate of `H_S + H_B` by ascending energy.
    BasisEigenstate { index: usize },
    /// System spins up, bath `↓↑↓…`.
    Antiferromagnetic,
    /// Computational basis state, one of `u`/`d` per site from site 1.
    Product { spins: String },
    /// The bath factor of `|φ_α⟩` with every system spin in `|+x⟩`.
    SystemSuperposition { index: usize },
}

impl InitialStateKind {
    /// Normalized real state vector in the computational basis.
    pub fn prepare(&self, spec: &SpinChainSpec, basis: Option<&NonInteractingBasis>) -> Result<Vec<f64>> {
        spec.validate()?;
        let dim = spec.dim();
        let need_basis = || {
            basis.ok_or_else(|| {
                QfiError::InvalidInput("this initial state needs the non-interacting eigenbasis".into())
            })
        };
        match self {
            InitialStateKind::BasisEigenstate { index } => {
                let b = need_basis()?;
                ensure_dims(dim, b.dim())?;
                b.state(*index)
            }
            InitialStateKind::SystemSuperposition { index } => {
                let b = need_basis()?;
                ensure_dims(dim, b.dim())?;
                if *index >= dim {
                    return Err(QfiError::InvalidInput(format!("basis index {index} outside 0..{dim}")));
                }
                let ns = 1usize << spec.n_system;
                let chi = vec![1.0 / (ns as f64).sqrt(); ns];
                Ok(b.product(&chi, b.bath_index(*index)))
            }
            InitialStateKind::Antiferromagnetic => {
                let spins: String = (1..=spec.n)
                    .map(|site| {
                        if site <= spec.n_system || (site - spec.n_system).is_multiple_of(2) {
                            'u'
                        } else {
                            'd'
                        }
                    })
                    .collect();
                computational_state(&spins, spec.n)
            }
            InitialStateKind::Product { spins } => computational_state(spins, spec.n),
        }
    }
}

/// Basis vector for a `u`/`d` string, site 1 first.
pub fn computational_state(spins: &str, n_sites: usize) -> Result<Vec<f64>> {
    let chars: Vec<char> = spins.chars().filter(|c| !c.is_whitespace() && *c != '|').collect();
    ensure_dims(n_sites, chars.len())?;
    let mut index = 0usize;
    for c in chars {
        index = (index << 1)
            | match c {
                'u' | 'U' => 0,
                'd' | 'D' => 1,
                other => {
                    return Err(QfiError::InvalidInput(format!("spin '{other}' is not u or d")))
                }
            };
    }
    let mut v = vec![0.0; 1 << n_sites];
    v[index] = 1.0;
    Ok(v)
}

/// Histogram density of states with linear interpolation between bin centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityOfStates {
    pub bin_centers: Vec<f64>,
    pub density: Vec<f64>,
    pub bin_width: f64,
}

impl DensityOfStates {
    /// `D(E)`; zero outside the histogram, flat in the outer half-bins.
    pub fn at(&self, e: f64) -> f64 {
        let n = self.bin_centers.len();
        let half = 0.5 * self.bin_width;
        if e < self.bin_centers[0] - half || e > self.bin_centers[n - 1] + half {
            return 0.0;
        }
        if e <= self.bin_centers[0] {
            return self.density[0];
        }
        if e >= self.bin_centers[n - 1] {
            return self.density[n - 1];
        }
        let k = (((e - self.bin_centers[0]) / self.bin_width).floor() as usize).min(n - 2);
        let f = (e - self.bin_centers[k]) / self.bin_width;
        self.density[k] * (1.0 - f) + self.density[k + 1] * f
    }

    /// Midpoint-rule integral over all bins.
    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width
    }

    /// Index of the bin with the largest density.
    pub fn peak_bin(&self) -> usize {
        let mut best = 0;
        for (k, &d) in self.density.iter().enumerate() {
            if d > self.density[best] {
                best = k;
            }
        }
        best
    }
}

pub fn density_of_states(eigenvalues: &[f64], bin_width: f64) -> Result<DensityOfStates> {
    if eigenvalues.len() < 100 {
        return Err(QfiError::InvalidInput(format!(
            "density of states needs at least 100 eigenvalues, got {}",
            eigenvalues.len()
        )));
    }
    ensure_positive("bin width", bin_width)?;
    let (lo, hi) = eigenvalues
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| (a.min(e), b.max(e)));
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(QfiError::InvalidInput("eigenvalues must be finite".into()));
    }
    let n_bins = (((hi - lo) / bin_width).floor() as usize + 1).max(1);
    // centre the bins on the spectrum so both edges get the same slack
    let start = 0.5 * (lo + hi) - 0.5 * n_bins as f64 * bin_width;
    let mut counts = vec![0usize; n_bins];
    for &e in eigenvalues {
        let k = (((e - start) / bin_width).floor() as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    Ok(DensityOfStates {
        bin_centers: (0..n_bins).map(|k| start + (k as f64 + 0.5) * bin_width).collect(),
        density: counts.iter().map(|&c| c as f64 / bin_width).collect(),
        bin_width,
    })
}

/// Freedman–Diaconis width `2·IQR/n^{1/3}`.
pub fn freedman_diaconis_width(values: &[f64]) -> Result<f64> {
    if values.len() < 4 {
        return Err(QfiError::InvalidInput("need at least 4 values for a bin width".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let x = p * (v.len() - 1) as f64;
        let k = x.floor() as usize;
        let f = x - k as f64;
        if k + 1 < v.len() {
            v[k] * (1.0 - f) + v[k + 1] * f
        } else {
            v[k]
        }
    };
    let w = 2.0 * (q(0.75) - q(0.25)) / (v.len() as f64).cbrt();
    if !(w > 0.0) {
        return Err(QfiError::Degenerate("interquartile range is zero".into()));
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn real_part(m: &Mat<C64>) -> Mat<f64> {
        Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re)
    }

    fn max_diff(a: &SymmetricMatrix, b: &Mat<f64>) -> f64 {
        let mut d = 0.0f64;
        for j in 0..a.dim() {
            for i in 0..a.dim() {
                d = d.max((a.get(i, j) - b[(i, j)]).abs());
            }
        }
        d
    }

    /// Kron-built Hamiltonian, independent of the bit-twiddling builder.
    fn kron_hamiltonian(spec: &SpinChainSpec) -> Mat<f64> {
        let n = spec.n;
        let p = |op, s| pauli_site(op, s, n).unwrap();
        let dim = 1 << n;
        let mut h = Mat::<C64>::zeros(dim, dim);
        let c = |x: f64| C64::new(x, 0.0);
        let flip = |a, b| &p(PauliOp::Plus, a) * &p(PauliOp::Minus, b) + &p(PauliOp::Minus, a) * &p(PauliOp::Plus, b);
        for s in 1..=spec.n_system {
            h += p(PauliOp::Z, s) * faer::Scale(c(spec.b));
        }
        for k in spec.n_system + 1..=n {
            h += p(PauliOp::X, k) * faer::Scale(c(spec.bx_bath));
        }
        for k in spec.n_system + 1..n {
            h += flip(k, k + 1) * faer::Scale(c(spec.jx));
        }
        for cp in &spec.couplings {
            h += (&p(PauliOp::Z, cp.system_site) * &p(PauliOp::Z, cp.bath_site)) * faer::Scale(c(spec.jz_sb));
            h += flip(cp.system_site, cp.bath_site) * faer::Scale(c(spec.jx_sb));
        }
        for j in 0..dim {
            for i in 0..dim {
                assert!(h[(i, j)].im.abs() < 1e-15);
            }
        }
        real_part(&h)
    }

    #[test]
    fn pauli_single_site() {
        let z = pauli_site(PauliOp::Z, 1, 1).unwrap();
        assert_eq!(z[(0, 0)], C64::new(1.0, 0.0));
        assert_eq!(z[(1, 1)], C64::new(-1.0, 0.0));
        assert!(pauli_site(PauliOp::Z, 2, 1).is_err());
        assert!(pauli_site(PauliOp::Z, 0, 1).is_err());
    }

    #[test]
    fn pauli_zz_two_sites() {
        let zz = &pauli_site(PauliOp::Z, 1, 2).unwrap() * &pauli_site(PauliOp::Z, 2, 2).unwrap();
        for (k, d) in [1.0, -1.0, -1.0, 1.0].iter().enumerate() {
            assert_eq!(zz[(k, k)].re, *d);
        }
        assert_eq!(sigma_z_product_diagonal(&[1, 2], 2).unwrap(), vec![1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn pauli_commutators() {
        let n = 3;
        let comm_norm = |j, k| {
            let x = pauli_site(PauliOp::X, j, n).unwrap();
            let z = pauli_site(PauliOp::Z, k, n).unwrap();
            let c = &x * &z - &z * &x;
            (0..8).flat_map(|a| (0..8).map(move |b| (a, b))).map(|(a, b)| c[(a, b)].norm()).fold(0.0, f64::max)
        };
        assert_eq!(comm_norm(1, 2), 0.0);
        assert_eq!(comm_norm(3, 1), 0.0);
        // [σx, σz] = -2iσy on the same site
        let x = pauli_site(PauliOp::X, 2, n).unwrap();
        let z = pauli_site(PauliOp::Z, 2, n).unwrap();
        let y = pauli_site(PauliOp::Y, 2, n).unwrap();
        let c = &x * &z - &z * &x;
        let want = y * faer::Scale(C64::new(0.0, -2.0));
        assert!(comm_norm(2, 2) > 1.0);
        for a in 0..8 {
            for b in 0..8 {
                assert!((c[(a, b)] - want[(a, b)]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn decoupled_system_spin_spectrum() {
        let spec = SpinChainSpec {
            n: 3,
            b: 0.01,
            bx_bath: 0.0,
            jx: 0.0,
            jz_sb: 0.0,
            jx_sb: 0.0,
            couplings: vec![Coupling { system_site: 1, bath_site: 3 }],
            n_system: 1,
            large: false,
        };
        let es = eigh(&build_hamiltonian(&spec).unwrap()).unwrap();
        let e = es.eigenvalues();
        assert!(e[..4].iter().all(|x| (x + 0.01).abs() < 1e-15));
        assert!(e[4..].iter().all(|x| (x - 0.01).abs() < 1e-15));
    }

    #[test]
    fn reference_parameters_give_finite_symmetric_matrix() {
        let h = build_hamiltonian(&SpinChainSpec::reference(8)).unwrap();
        assert!(h.is_finite());
        assert_eq!(h.max_asymmetry(), 0.0);
        assert!(h.frobenius_norm() > 0.0);
    }

    #[test]
    fn bit_builder_matches_kron_builder() {
        for spec in [SpinChainSpec::reference(6), SpinChainSpec::two_spin(6, 4, 6), SpinChainSpec::two_spin(5, 4, 4)] {
            let h = build_hamiltonian(&spec).unwrap();
            assert!(max_diff(&h, &kron_hamiltonian(&spec)) < 1e-14);
        }
    }

    #[test]
    fn random_specs_are_exactly_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(3..=7);
            let n_system = rng.random_range(1..=2).min(n - 2);
            let couplings = (1..=n_system)
                .map(|s| Coupling { system_site: s, bath_site: rng.random_range(n_system + 1..=n) })
                .collect();
            let spec = SpinChainSpec {
                n,
                b: rng.random_range(-1.0..1.0),
                bx_bath: rng.random_range(-1.0..1.0),
                jx: rng.random_range(-1.0..1.0),
                jz_sb: rng.random_range(-1.0..1.0),
                jx_sb: rng.random_range(-1.0..1.0),
                couplings,
                n_system,
                large: false,
            };
            let h = build_hamiltonian(&spec).unwrap();
            assert_eq!(h.max_asymmetry(), 0.0);
            // linear in B with slope build_h0_prime
            let h0 = build_hamiltonian(&spec.with_b(0.0)).unwrap();
            let hp = build_h0_prime(&spec).unwrap();
            let diff = h.sub(&h0).unwrap().sub(&hp.scaled(spec.b)).unwrap();
            assert!(diff.max_abs() < 1e-15);
        }
    }

    #[test]
    fn h0_prime_is_the_b_derivative_and_independent_of_other_parameters() {
        let spec = SpinChainSpec::reference(6);
        let d = 1e-3;
        let fd = build_hamiltonian(&spec.with_b(spec.b + d))
            .unwrap()
            .sub(&build_hamiltonian(&spec.with_b(spec.b - d)).unwrap())
            .unwrap()
            .scaled(0.5 / d);
        let hp = build_h0_prime(&spec).unwrap();
        assert!(fd.sub(&hp).unwrap().max_abs() < 1e-12);
        let other = SpinChainSpec { b: 3.0, bx_bath: -2.0, jx: 0.1, ..spec.clone() };
        assert_eq!(build_h0_prime(&other).unwrap(), hp);
    }

    #[test]
    fn h0_prime_squares() {
        let one = build_h0_prime(&SpinChainSpec::reference(5)).unwrap();
        let sq = one.matmul(&one).unwrap();
        let id = SymmetricMatrix::identity(32).unwrap();
        assert!(max_diff(&id, &sq) == 0.0);

        let two = build_h0_prime(&SpinChainSpec::two_spin(5, 4, 5)).unwrap();
        let sq = two.matmul(&two).unwrap();
        let want = SymmetricMatrix::identity(32)
            .unwrap()
            .scaled(2.0)
            .add(&sigma_z_product(&[1, 2], 5).unwrap().scaled(2.0))
            .unwrap();
        assert!(max_diff(&want, &sq) == 0.0);
    }

    #[test]
    fn basis_state_energy_matches_diagonal() {
        let spec = SpinChainSpec::reference(6);
        let h = build_hamiltonian(&spec).unwrap();
        for spins in ["uduudu", "dddddd", "uuuuuu"] {
            let psi = computational_state(spins, 6).unwrap();
            let k = psi.iter().position(|&x| x == 1.0).unwrap();
            assert!((h.quadratic_form(&psi).unwrap() - h.get(k, k)).abs() < 1e-12);
        }
    }

    #[test]
    fn noninteracting_basis_diagonalizes_h0() {
        for spec in [SpinChainSpec::reference(6), SpinChainSpec::two_spin(6, 4, 4)] {
            let basis = NonInteractingBasis::new(&spec).unwrap();
            let h0 = build_noninteracting(&spec).unwrap();
            let full = eigh(&h0).unwrap();
            for (a, b) in basis.energies().iter().zip(full.eigenvalues()) {
                assert!((a - b).abs() < 1e-12);
            }
            for alpha in [0, 7, 40, 63] {
                let v = basis.state(alpha).unwrap();
                let hv = h0.mul_vec(&v).unwrap();
                let e = basis.energy(alpha);
                let r = hv.iter().zip(&v).map(|(x, y)| (x - e * y).abs()).fold(0.0, f64::max);
                assert!(r < 1e-12);
            }
            assert!(basis.energies().windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn initial_states() {
        let spec = SpinChainSpec::reference(5);
        let basis = NonInteractingBasis::new(&spec).unwrap();
        let af = InitialStateKind::Antiferromagnetic.prepare(&spec, None).unwrap();
        assert_eq!(af, computational_state("ududu", 5).unwrap());
        let sup = InitialStateKind::SystemSuperposition { index: 10 }.prepare(&spec, Some(&basis)).unwrap();
        let norm: f64 = sup.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        // ⟨σz1⟩ = 0 in |+x⟩
        let z = sigma_z(1, 5).unwrap();
        assert!(z.quadratic_form(&sup).unwrap().abs() < 1e-12);
        assert!(InitialStateKind::BasisEigenstate { index: 32 }.prepare(&spec, Some(&basis)).is_err());
        assert!(InitialStateKind::BasisEigenstate { index: 3 }.prepare(&spec, None).is_err());
        assert!(computational_state("udx", 3).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(SpinChainSpec::reference(2).validate().is_err());
        assert!(SpinChainSpec::reference(14).validate().is_err());
        assert!(SpinChainSpec { large: true, ..SpinChainSpec::reference(14) }.validate().is_ok());
        assert!(SpinChainSpec::two_spin(6, 2, 4).validate().is_err());
        assert!(SpinChainSpec { b: f64::NAN, ..SpinChainSpec::reference(6) }.validate().is_err());
        assert!(SpinChainSpec { couplings: vec![], ..SpinChainSpec::reference(6) }.validate().is_err());
    }

    #[test]
    fn dos_uniform_spectrum() {
        let e: Vec<f64> = (0..2000).map(|k| k as f64 * 0.5).collect();
        let dos = density_of_states(&e, 10.0).unwrap();
        assert!((dos.integral() - 2000.0).abs() < 20.0);
        for &x in &[200.0, 500.0, 800.0] {
            assert!((dos.at(x) - 2.0).abs() < 0.04, "D({x}) = {}", dos.at(x));
        }
        assert!(density_of_states(&e[..50], 1.0).is_err());
        assert!(density_of_states(&e, 0.0).is_err());
    }

    #[test]
    fn dos_of_chain_is_unimodal() {
        let spec = SpinChainSpec::reference(9);
        let es = eigh(&build_hamiltonian(&spec).unwrap()).unwrap();
        let w = freedman_diaconis_width(es.eigenvalues()).unwrap();
        let dos = density_of_states(es.eigenvalues(), w).unwrap();
        let mid = 0.5 * (es.eigenvalues()[0] + es.eigenvalues()[511]);
        let span = es.eigenvalues()[511] - es.eigenvalues()[0];
        assert!((dos.bin_centers[dos.peak_bin()] - mid).abs() < 0.2 * span);
        assert!((dos.integral() - 512.0).abs() < 5.12);
    }
}
