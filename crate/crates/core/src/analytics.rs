//! Closed-form random-matrix predictions and the decay-rate fit.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dims, ensure_finite, ensure_positive, QfiError, Result};

/// Inputs of the RMT growth law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmtPredictionInputs {
    /// Wave-function width Γ.
    pub gamma: f64,
    /// Mean level spacing: ω for the random-matrix model, `1/D(E₀)` for a spin chain.
    pub level_density: f64,
    /// Microcanonical second moment of the derivative operator.
    pub m2: f64,
    /// Microcanonical variance of the derivative operator.
    pub var: f64,
}

impl RmtPredictionInputs {
    pub fn new(gamma: f64, level_density: f64, m2: f64, var: f64) -> Result<Self> {
        let s = Self { gamma, level_density, m2, var };
        s.validate()?;
        Ok(s)
    }

    /// From the first and second microcanonical moments, `var = m2 − m1²`.
    pub fn from_moments(gamma: f64, level_density: f64, m1: f64, m2: f64) -> Result<Self> {
        Self::new(gamma, level_density, m2, (m2 - m1 * m1).max(0.0))
    }

    /// Spin-chain form with level spacing `1/D(E₀)`.
    pub fn for_density(gamma: f64, density_e0: f64, m2: f64, var: f64) -> Result<Self> {
        ensure_positive("D(E0)", density_e0)?;
        Self::new(gamma, 1.0 / density_e0, m2, var)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("gamma", self.gamma)?;
        ensure_positive("level density", self.level_density)?;
        ensure_finite("m2", self.m2)?;
        ensure_finite("var", self.var)?;
        if self.var < 0.0 {
            return Err(QfiError::InvalidInput(format!("variance must be nonnegative, got {}", self.var)));
        }
        if self.m2 < self.var * (1.0 - 1e-12) {
            return Err(QfiError::InvalidInput(format!(
                "second moment {} below variance {}",
                self.m2, self.var
            )));
        }
        Ok(())
    }

    /// Coefficient of the late quadratic term, `level_density/(πΓ)·m2`.
    pub fn late_coefficient(&self) -> f64 {
        self.level_density / (std::f64::consts::PI * self.gamma) * self.m2
    }
}

/// `(e^{-2x} − 1 + 2x)/(2x²)`: 1 at `x = 0`, `~1/x` for large `x`.
pub fn relaxation_kernel(x: f64) -> f64 {
    let y = 2.0 * x;
    if y.abs() < 1e-2 {
        // 2 Σ (−y)^n/(n+2)!
        let mut term = 1.0;
        let mut acc = 0.0;
        for n in 0..8 {
            if n > 0 {
                term *= -y / (n as f64 + 2.0);
            }
            acc += term;
        }
        acc
    } else {
        ((-y).exp_m1() + y) / (2.0 * x * x)
    }
}

/// RMT growth law `4t²{(level_density/πΓ)·m2 + var·k(Γt)}`.
pub fn qfi_rmt(inputs: &RmtPredictionInputs, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(QfiError::InvalidInput(format!("t must be finite and nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(4.0 * t * t * (inputs.late_coefficient() + inputs.var * relaxation_kernel(inputs.gamma * t)))
}

/// Result of a Lorentzian-weighted average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicrocanonicalAverage {
    pub value: f64,
    /// `Σ_α Λ(μ,α)`; close to 1 when the window is fully inside the spectrum.
    pub weight_sum: f64,
    /// Set when `Γ/ω < 3`, where the smooth-profile picture is unreliable.
    pub narrow_window: bool,
}

/// `Σ_α Λ(μ,α) v_α / Σ_α Λ(μ,α)` around `center`.
pub fn microcanonical_average(
    values: &[f64],
    energies: &[f64],
    center: f64,
    gamma: f64,
    omega: f64,
) -> Result<MicrocanonicalAverage> {
    if values.is_empty() {
        return Err(QfiError::InvalidInput("no values to average".into()));
    }
    ensure_dims(values.len(), energies.len())?;
    ensure_positive("gamma", gamma)?;
    ensure_positive("omega", omega)?;
    ensure_finite("center", center)?;
    // Λ up to the constant ωΓ/π, scaled by Γ² so that Γ → 0 stays finite
    let mut num = 0.0;
    let mut den = 0.0;
    for (&v, &e) in values.iter().zip(energies) {
        let d = (e - center) / gamma;
        let w = 1.0 / (1.0 + d * d);
        num += w * v;
        den += w;
    }
    if !(den > 0.0) {
        return Err(QfiError::Numerical(format!("Lorentzian weights vanish for Γ = {gamma:e}")));
    }
    Ok(MicrocanonicalAverage {
        value: num / den,
        weight_sum: den * omega / (std::f64::consts::PI * gamma),
        narrow_window: gamma / omega < 3.0,
    })
}

/// `O(t) = o_free·e^{-2Γt} + o_bar·(1 − e^{-2Γt})`.
pub fn decay_law(t: f64, o_free: f64, o_bar: f64, gamma: f64) -> f64 {
    let e = (-2.0 * gamma * t).exp();
    o_free * e + o_bar * (1.0 - e)
}

/// RMS misfit of the decay law over all samples.
pub fn decay_residual(times: &[f64], series: &[f64], o_free: f64, o_bar: f64, gamma: f64) -> Result<f64> {
    ensure_dims(times.len(), series.len())?;
    if times.is_empty() {
        return Err(QfiError::InvalidInput("empty series".into()));
    }
    Ok(sse(times, series, o_free, o_bar, gamma).sqrt() / (times.len() as f64).sqrt())
}

fn sse(times: &[f64], series: &[f64], o_free: f64, o_bar: f64, gamma: f64) -> f64 {
    times
        .iter()
        .zip(series)
        .map(|(&t, &o)| (o - decay_law(t, o_free, o_bar, gamma)).powi(2))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub gamma_hat: f64,
    pub o_bar: f64,
    /// RMS residual over the fit window.
    pub residual_rms: f64,
    /// `residual_rms / |o_free − o_bar|`.
    pub relative_residual: f64,
    pub window: (f64, f64),
    /// The refined minimizer did worse than the coarse grid and the grid value was kept.
    pub grid_fallback: bool,
}

pub const FIT_GRID_MIN: f64 = 1e-3;
pub const FIT_GRID_MAX: f64 = 10.0;
const FIT_GRID_POINTS: usize = 200;
const MIN_SAMPLES: usize = 20;

/// Least-squares Γ with `o_free` and `o_bar` held fixed.
///
/// A log-spaced scan over `[1e-3, 10]` on all samples picks the window
/// `[0, min(5/Γ_grid, t_max)]`; golden-section search then refines Γ inside the
/// bracketing grid cells using only samples in that window.
pub fn fit_gamma(times: &[f64], series: &[f64], o_free: f64, o_bar: f64) -> Result<GammaFit> {
    ensure_dims(times.len(), series.len())?;
    if times.len() < MIN_SAMPLES {
        return Err(QfiError::InvalidInput(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            times.len()
        )));
    }
    if times.iter().chain(series).any(|x| !x.is_finite()) {
        return Err(QfiError::InvalidInput("non-finite sample".into()));
    }
    let amplitude = (o_free - o_bar).abs();
    let scale = o_free.abs().max(o_bar.abs()).max(f64::MIN_POSITIVE);
    if amplitude <= 1e-12 * scale {
        return Err(QfiError::Degenerate("initial and equilibrium values coincide".into()));
    }
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if hi - lo <= 1e-12 * amplitude {
        return Err(QfiError::Degenerate("series is constant, no decay information".into()));
    }

    let ratio = (FIT_GRID_MAX / FIT_GRID_MIN).powf(1.0 / (FIT_GRID_POINTS - 1) as f64);
    let grid: Vec<f64> = (0..FIT_GRID_POINTS).map(|k| FIT_GRID_MIN * ratio.powi(k as i32)).collect();
    let best_on = |ts: &[f64], os: &[f64]| {
        let mut best = (0usize, f64::INFINITY);
        for (k, &g) in grid.iter().enumerate() {
            let s = sse(ts, os, o_free, o_bar, g);
            if s < best.1 {
                best = (k, s);
            }
        }
        best
    };
    let (k_all, _) = best_on(times, series);

    let t_max = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let t_min = times.iter().cloned().fold(f64::INFINITY, f64::min).min(0.0);
    let mut t_end = (5.0 / grid[k_all]).min(t_max);
    let mut sorted: Vec<f64> = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.iter().filter(|&&t| t <= t_end).count() < MIN_SAMPLES {
        t_end = sorted[MIN_SAMPLES - 1];
    }
    let (ts, os): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(series)
        .filter(|(&t, _)| t <= t_end)
        .map(|(&t, &o)| (t, o))
        .unzip();

    let (k, grid_sse) = best_on(&ts, &os);
    let a = grid[k.saturating_sub(1)].ln();
    let b = grid[(k + 1).min(FIT_GRID_POINTS - 1)].ln();
    let f = |lg: f64| sse(&ts, &os, o_free, o_bar, lg.exp());
    let lg = golden_section(f, a, b, 1e-12);
    let refined_sse = f(lg);
    let (gamma_hat, best_sse, grid_fallback) = if refined_sse <= grid_sse {
        (lg.exp(), refined_sse, false)
    } else {
        (grid[k], grid_sse, true)
    };
    let residual_rms = (best_sse / ts.len() as f64).sqrt();
    Ok(GammaFit {
        gamma_hat,
        o_bar,
        residual_rms,
        relative_residual: residual_rms / amplitude,
        window: (t_min, t_end),
        grid_fallback,
    })
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// `τ = π·D(E₀)·var/m2`.
pub fn heisenberg_time(density_e0: f64, var: f64, m2: f64) -> Result<f64> {
    if m2 == 0.0 {
        return Err(QfiError::InvalidInput("second moment is zero".into()));
    }
    ensure_positive("D(E0)", density_e0)?;
    ensure_finite("var", var)?;
    Ok(std::f64::consts::PI * density_e0 * var / m2)
}

/// `d_eff ≈ (2π/3)·D(E₀)·Γ`.
pub fn deff_rmt_estimate(density_e0: f64, gamma: f64) -> Result<f64> {
    ensure_positive("D(E0)", density_e0)?;
    ensure_positive("gamma", gamma)?;
    Ok(2.0 * std::f64::consts::PI / 3.0 * density_e0 * gamma)
}

/// Two system spins sharing correlations `zz_mc = (σ^z₁σ^z₂)_mc` on top of the
/// uncorrelated prediction `base`.
pub fn two_spin_prediction(base: f64, zz_mc: f64, gamma: f64, density_e0: f64, t: f64) -> Result<f64> {
    if !(zz_mc.abs() <= 1.0 + 1e-12) {
        return Err(QfiError::InvalidInput(format!("|zz_mc| must be at most 1, got {zz_mc}")));
    }
    ensure_positive("gamma", gamma)?;
    ensure_positive("D(E0)", density_e0)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(QfiError::InvalidInput(format!("t must be finite and nonnegative, got {t}")));
    }
    let late = 2.0 / (std::f64::consts::PI * density_e0 * gamma);
    // (1/(Γt)²)(e^{-2Γt} − 1 + 2Γt) = 2·k(Γt)
    let bracket = late + 2.0 * relaxation_kernel(gamma * t);
    Ok(base + 4.0 * t * t * zz_mc * bracket)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn inputs(level_density: f64, gamma: f64) -> RmtPredictionInputs {
        RmtPredictionInputs::new(gamma, level_density, 1.0, 1.0).unwrap()
    }

    #[test]
    fn kernel_series_and_direct_agree() {
        for x in [1e-3_f64, 4.9e-3, 5.1e-3, 0.1, 1.0, 30.0] {
            let y = 2.0 * x;
            let direct = ((-y).exp_m1() + y) / (2.0 * x * x);
            assert!((relaxation_kernel(x) - direct).abs() <= 1e-10 * direct, "x={x}");
        }
        // k(x) = 1 − 2x/3 + x²/3 − …
        let x = 1e-6;
        assert!((relaxation_kernel(x) - (1.0 - 2.0 * x / 3.0 + x * x / 3.0)).abs() < 1e-16);
        assert_eq!(relaxation_kernel(0.0), 1.0);
    }

    #[test]
    fn short_time_limit() {
        let p = inputs(1e-4, 1.0);
        let t = 1e-3;
        let f = qfi_rmt(&p, t).unwrap();
        assert!((f / (4.0 * t * t) - 1.0).abs() < 2e-3);
        assert_eq!(qfi_rmt(&p, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn linear_regime() {
        let gamma = 0.2;
        let p = RmtPredictionInputs::new(gamma, 1e-4 * gamma, 1.0, 0.7).unwrap();
        let t = 50.0 / gamma;
        let r = qfi_rmt(&p, t).unwrap() / (4.0 * t * p.var / gamma);
        assert!((0.95..=1.05).contains(&r), "ratio {r}");
    }

    #[test]
    fn long_time_limit_matches_effective_dimension_form() {
        let d = 300.0;
        let gamma = 0.15;
        let p = RmtPredictionInputs::for_density(gamma, d, 1.0, 1.0).unwrap();
        let d_eff = deff_rmt_estimate(d, gamma).unwrap();
        let t = 1e3 / gamma * 1e3;
        let want = 8.0 * t * t / (3.0 * d_eff);
        assert!((qfi_rmt(&p, t).unwrap() / want - 1.0).abs() < 5e-3);
    }

    #[test]
    fn qfi_rmt_is_smooth() {
        let p = RmtPredictionInputs::new(0.3, 0.01, 1.0, 0.6).unwrap();
        let h = 1e-4;
        let step = 0.01;
        let deriv = |t: f64| (qfi_rmt(&p, t + h).unwrap() - qfi_rmt(&p, t - h).unwrap()) / (2.0 * h);
        let d: Vec<f64> = (1..4000).map(|k| deriv(k as f64 * step)).collect();
        let scale = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        // a jump in F' would show up as an outlier in its second differences
        for w in d.windows(3) {
            assert!((w[2] - 2.0 * w[1] + w[0]).abs() < 1e-4 * scale);
        }
    }

    #[test]
    fn input_validation() {
        assert!(RmtPredictionInputs::new(0.0, 1.0, 1.0, 0.5).is_err());
        assert!(RmtPredictionInputs::new(1.0, 1.0, 0.4, 0.5).is_err());
        assert!(RmtPredictionInputs::new(1.0, 1.0, 1.0, -0.1).is_err());
        let p = RmtPredictionInputs::from_moments(1.0, 1.0, 0.5, 1.0).unwrap();
        assert!((p.var - 0.75).abs() < 1e-15);
    }

    #[test]
    fn microcanonical_constant_values() {
        let e: Vec<f64> = (1..=2000).map(|a| a as f64).collect();
        let v = vec![3.5; 2000];
        let avg = microcanonical_average(&v, &e, 1000.0, 20.0, 1.0).unwrap();
        assert!((avg.value - 3.5).abs() < 0.035);
        assert!(!avg.narrow_window);
        // the unnormalized weights sum to 1 up to the Lorentzian tails
        assert!((avg.weight_sum - 1.0).abs() < 0.02);
    }

    #[test]
    fn microcanonical_linear_values_are_centred() {
        let e: Vec<f64> = (1..=1000).map(|a| a as f64).collect();
        let avg = microcanonical_average(&e, &e, 500.0, 10.0, 1.0).unwrap();
        assert!((avg.value - 500.0).abs() < 1.0);
    }

    #[test]
    fn microcanonical_delta_limit() {
        let e: Vec<f64> = (1..=50).map(|a| a as f64).collect();
        let v: Vec<f64> = e.iter().map(|x| x * x).collect();
        let avg = microcanonical_average(&v, &e, 17.0, 1e-9, 1.0).unwrap();
        assert!((avg.value - 289.0).abs() < 1e-9);
        assert!(avg.narrow_window);
        assert!(microcanonical_average(&[], &[], 0.0, 1.0, 1.0).is_err());
    }

    fn synthetic(gamma: f64, noise: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, noise).unwrap();
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.1).collect();
        let series = times.iter().map(|&t| decay_law(t, 1.0, 0.0, gamma) + n.sample(&mut rng)).collect();
        (times, series)
    }

    #[test]
    fn fit_recovers_reference_rate() {
        let (t, o) = synthetic(0.15, 0.01, 42);
        let fit = fit_gamma(&t, &o, 1.0, 0.0).unwrap();
        assert!((fit.gamma_hat - 0.15).abs() < 0.005, "Γ̂ = {}", fit.gamma_hat);
        assert!(fit.relative_residual < 0.02);
        let (t, o) = synthetic(0.15, 0.0, 0);
        assert!((fit_gamma(&t, &o, 1.0, 0.0).unwrap().gamma_hat - 0.15).abs() < 1e-8);
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        let t: Vec<f64> = (0..30).map(|k| k as f64).collect();
        let flat = vec![0.2; 30];
        assert!(matches!(fit_gamma(&t, &flat, 1.0, 0.2), Err(QfiError::Degenerate(_))));
        assert!(matches!(fit_gamma(&t, &flat, 0.2, 0.2), Err(QfiError::Degenerate(_))));
        assert!(fit_gamma(&t[..10], &flat[..10], 1.0, 0.0).is_err());
    }

    #[test]
    fn residual_is_time_unit_invariant() {
        let (t, o) = synthetic(0.15, 0.01, 7);
        for s in [1e-3, 0.5, 7.0, 1e4] {
            let ts: Vec<f64> = t.iter().map(|x| x * s).collect();
            let a = decay_residual(&t, &o, 1.0, 0.0, 0.13).unwrap();
            let b = decay_residual(&ts, &o, 1.0, 0.0, 0.13 / s).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn heisenberg_time_properties() {
        assert!((heisenberg_time(40.0, 1.0, 1.0).unwrap() - std::f64::consts::PI * 40.0).abs() < 1e-12);
        assert!(heisenberg_time(1.0, 1.0, 0.0).is_err());
        let a = heisenberg_time(10.0, 0.3, 0.9).unwrap();
        assert!((heisenberg_time(20.0, 0.3, 0.9).unwrap() - 2.0 * a).abs() < 1e-12);
        // the linear and late-quadratic terms cross at τ
        let (d, var, m2, gamma) = (50.0, 0.4, 1.0, 0.2);
        let tau = heisenberg_time(d, var, m2).unwrap();
        let linear = 4.0 * tau / gamma * var;
        let late = 4.0 * tau * tau / (std::f64::consts::PI * gamma) * m2 / d;
        assert!((linear - late).abs() < 1e-12 * linear);
    }

    #[test]
    fn deff_estimate() {
        let (g, n, omega) = (0.5, 1000.0, 1.0);
        let gamma = crate::rmt::gamma_width(g, n, omega);
        let d = deff_rmt_estimate(1.0 / omega, gamma).unwrap();
        assert!((d - 2.0 * std::f64::consts::PI / 3.0 * gamma).abs() < 1e-15);
        assert!((deff_rmt_estimate(3.0, 2.0 * gamma).unwrap() - 2.0 * deff_rmt_estimate(3.0, gamma).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn two_spin_formula() {
        let (gamma, d) = (0.15, 200.0);
        let single = RmtPredictionInputs::for_density(gamma, d, 1.0, 1.0).unwrap();
        for t in [0.0, 0.5, 10.0, 1e3, 1e6] {
            let base = 2.0 * qfi_rmt(&single, t).unwrap();
            assert_eq!(two_spin_prediction(base, 0.0, gamma, d, t).unwrap(), base);
            if t > 0.0 {
                assert!(two_spin_prediction(base, 0.3, gamma, d, t).unwrap() > base);
            }
        }
        let t = 1e8;
        let base = 2.0 * qfi_rmt(&single, t).unwrap();
        let r = two_spin_prediction(base, 1.0, gamma, d, t).unwrap() / base;
        assert!((r - 2.0).abs() < 1e-3);
        assert!(two_spin_prediction(1.0, 1.5, gamma, d, 1.0).is_err());
    }
}
