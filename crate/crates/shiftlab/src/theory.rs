//! High-dimensional asymptotics of random feature ridge regression under covariate shift.
//!
//! Everything is driven by the scalar x solving
//!
//! ```text
//! x = (1 − γτ) / (ω + I₁,₁(x))
//! ```
//!
//! with τ, τ̄ the Stieltjes-transform companions of the feature Gram matrix.
//! The ridgeless (γ → 0) and infinitely wide (ψ → 0) limits have their own
//! closed forms and are routed to dedicated branches.

use crate::activation::{gaussian_constants, ActivationSpec, GaussianStats};
use crate::error::{Error, Result};
use crate::ljsd::{envelopes, Ljsd};

/// Below this, γ or ψ is treated as exactly zero.
pub const REGIME_EPS: f64 = 1e-14;
pub const MAX_ITERATIONS: usize = 50_000;
pub const RESIDUAL_TOL: f64 = 1e-12;
const DAMPING: f64 = 0.5;
const TARGET_RESIDUAL: f64 = 1e-14;
const STALL_WINDOW: usize = 100;
/// Tiny negative variances above this are treated as rounding noise.
pub const VARIANCE_NOISE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub phi: f64,
    pub psi: f64,
    pub gamma: f64,
    pub sigma_eps2: f64,
    pub sigma: ActivationSpec,
}

/// ψ for a given overparameterization ratio φ/ψ; a ratio of 0 stands for infinitely many features.
pub fn psi_from_ratio(phi: f64, ratio: f64) -> f64 {
    if ratio == 0.0 || ratio.is_infinite() {
        0.0
    } else {
        phi / ratio
    }
}

impl ModelConfig {
    pub fn new(phi: f64, psi: f64, gamma: f64, sigma_eps2: f64, sigma: ActivationSpec) -> Self {
        ModelConfig { phi, psi, gamma, sigma_eps2, sigma }
    }

    pub fn with_ratio(phi: f64, ratio: f64, gamma: f64, sigma_eps2: f64, sigma: ActivationSpec) -> Self {
        ModelConfig::new(phi, psi_from_ratio(phi, ratio), gamma, sigma_eps2, sigma)
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        ModelConfig { gamma, ..self.clone() }
    }

    pub fn with_psi(&self, psi: f64) -> Self {
        ModelConfig { psi, ..self.clone() }
    }

    /// φ/ψ, infinite when ψ = 0.
    pub fn ratio(&self) -> f64 {
        if self.psi == 0.0 {
            f64::INFINITY
        } else {
            self.phi / self.psi
        }
    }

    pub fn regime(&self) -> Regime {
        if self.psi < REGIME_EPS {
            Regime::InfiniteWidth
        } else if self.gamma.abs() < REGIME_EPS {
            Regime::Ridgeless
        } else {
            Regime::General
        }
    }

    fn validate(&self, train: &GaussianStats) -> Result<Regime> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.phi.is_finite() && self.phi > 0.0) {
            return bad(format!("phi must be positive, got {}", self.phi));
        }
        if !(self.psi.is_finite() && self.psi >= 0.0) {
            return bad(format!("psi must be nonnegative, got {}", self.psi));
        }
        if !(self.sigma_eps2.is_finite() && self.sigma_eps2 >= 0.0) {
            return bad(format!("label noise must be nonnegative, got {}", self.sigma_eps2));
        }
        if !self.gamma.is_finite() {
            return bad(format!("gamma must be finite, got {}", self.gamma));
        }
        let regime = self.regime();
        match regime {
            Regime::InfiniteWidth => {
                let floor = -train.rho * train.omega;
                if self.gamma < floor - REGIME_EPS {
                    return bad(format!("gamma must be >= -rho*omega = {floor} when psi = 0, got {}", self.gamma));
                }
            }
            Regime::Ridgeless => {
                if (self.phi - self.psi).abs() <= 1e-12 * self.phi {
                    return Err(Error::InterpolationThreshold { phi: self.phi });
                }
            }
            Regime::General => {
                if self.gamma < 0.0 {
                    return bad(format!("negative gamma ({}) is only admitted when psi = 0", self.gamma));
                }
            }
        }
        Ok(regime)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    General,
    Ridgeless,
    InfiniteWidth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfConsistentState {
    pub x: f64,
    pub tau: f64,
    pub tau_bar: f64,
    pub dx_dgamma: f64,
    pub residual: f64,
    pub iterations: usize,
    pub regime: Regime,
    pub used_bisection: bool,
    /// γτ and γτ̄, finite even where τ or τ̄ themselves diverge.
    pub gamma_tau: f64,
    pub gamma_tau_bar: f64,
}

#[derive(Debug, Clone)]
pub struct TheoryPrediction {
    pub bias: f64,
    pub variance: f64,
    pub error: f64,
    pub state: SelfConsistentState,
    pub train: GaussianStats,
    pub test: GaussianStats,
    pub xi: f64,
    /// The raw variance came out slightly negative and was set to zero.
    pub variance_clamped: bool,
}

/// I_{a,b}(x) = φ E[λ^a (φ + xλ)^{−b}].
pub fn functional_i(mu: &Ljsd, a: u32, b: u32, x: f64, phi: f64) -> f64 {
    phi * mu.expect(|l, _| l.powi(a as i32) * (phi + x * l).powi(-(b as i32)))
}

/// I*_{a,b}(x) = φ E[r λ^{a−1} (φ + xλ)^{−b}].
pub fn functional_istar(mu: &Ljsd, a: u32, b: u32, x: f64, phi: f64) -> f64 {
    phi * mu.expect(|l, r| r * l.powi(a as i32 - 1) * (phi + x * l).powi(-(b as i32)))
}

fn i11(mu: &Ljsd, x: f64, phi: f64) -> f64 {
    phi * mu.expect(|l, _| l / (phi + x * l))
}

/// The six functionals that enter bias and variance.
#[derive(Debug, Clone, Copy)]
struct Functionals {
    i11: f64,
    i12: f64,
    i22: f64,
    s11: f64,
    s12: f64,
    s22: f64,
}

fn functionals(mu: &Ljsd, x: f64, phi: f64) -> Functionals {
    let mut f = Functionals { i11: 0.0, i12: 0.0, i22: 0.0, s11: 0.0, s12: 0.0, s22: 0.0 };
    for a in mu.atoms() {
        let d = 1.0 / (phi + x * a.lambda);
        let w = a.weight * phi;
        f.i11 += w * a.lambda * d;
        f.i12 += w * a.lambda * d * d;
        f.i22 += w * a.lambda * a.lambda * d * d;
        f.s11 += w * a.r * d;
        f.s12 += w * a.r * d * d;
        f.s22 += w * a.r * a.lambda * d * d;
    }
    f
}

struct Problem<'a> {
    mu: &'a Ljsd,
    phi: f64,
    psi: f64,
    gamma: f64,
    rho: f64,
    omega: f64,
    regime: Regime,
}

impl Problem<'_> {
    /// Stable (γτ, γτ̄) in the general regime, both from the "+√" root.
    fn gamma_taus(&self, x: f64) -> (f64, f64) {
        let (phi, psi, g, rho) = (self.phi, self.psi, self.gamma, self.rho);
        let d = psi - phi;
        let root = (d * d + 4.0 * x * psi * phi * g / rho).sqrt();
        let gt = if d >= 0.0 { (root + d) / (2.0 * psi) } else { 2.0 * x * phi * g / (rho * (root - d)) };
        let gtb = if d <= 0.0 { (root - d) / (2.0 * phi) } else { 2.0 * x * psi * g / (rho * (root + d)) };
        (gt, gtb)
    }

    fn offset(&self) -> f64 {
        match self.regime {
            Regime::InfiniteWidth => self.gamma / self.rho + self.omega,
            _ => self.omega,
        }
    }

    fn numerator(&self, x: f64) -> f64 {
        match self.regime {
            Regime::General => 1.0 - self.gamma_taus(x).0,
            Regime::Ridgeless => (self.phi / self.psi).min(1.0),
            Regime::InfiniteWidth => 1.0,
        }
    }

    /// (fixed-point map g(x), residual x·(offset + I₁,₁) − numerator).
    fn step(&self, x: f64) -> (f64, f64) {
        let den = self.offset() + i11(self.mu, x, self.phi);
        let num = self.numerator(x);
        (num / den, x * den - num)
    }

    /// Concave function of t = 1/x whose unique positive root is the solution.
    fn h(&self, t: f64) -> f64 {
        let x = 1.0 / t;
        self.offset() + i11(self.mu, x, self.phi) - t * self.numerator(x)
    }

    fn bisect(&self) -> Result<(f64, usize)> {
        let mut evals = 0;
        let mut h = |t: f64| {
            evals += 1;
            self.h(t)
        };
        let mut hi = 1.0;
        while h(hi) >= 0.0 {
            hi *= 4.0;
            if hi > 1e200 {
                return Err(Error::NoRoot("h(t) stays nonnegative on (0, 1e200]".into()));
            }
        }
        let mut lo = hi / 4.0;
        while h(lo) <= 0.0 {
            lo /= 4.0;
            if lo < 1e-300 {
                return Err(Error::NoRoot("h(t) is nonpositive near t = 0; x diverges".into()));
            }
        }
        for _ in 0..2000 {
            let mid = if hi > 2.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
            if mid <= lo || mid >= hi {
                break;
            }
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((2.0 / (lo + hi), evals))
    }

    fn solve(&self, x0: f64) -> Result<(f64, f64, usize, bool)> {
        let mut x = x0;
        let mut best = f64::INFINITY;
        let mut best_iter = 0;
        for it in 0..MAX_ITERATIONS {
            let (g, res) = self.step(x);
            if res.abs() <= TARGET_RESIDUAL {
                return Ok((x, res, it, false));
            }
            if res.abs() < 0.5 * best {
                best = res.abs();
                best_iter = it;
            }
            if !(g.is_finite() && g > 0.0) || it - best_iter > STALL_WINDOW {
                break;
            }
            x = (1.0 - DAMPING) * x + DAMPING * g;
        }
        let (xb, evals) = self.bisect()?;
        let res = self.step(xb).1;
        if res.abs() < RESIDUAL_TOL {
            Ok((xb, res, evals, true))
        } else {
            Err(Error::NonConvergence { residual: res, iterations: evals })
        }
    }
}

fn solve_with(mu: &Ljsd, config: &ModelConfig, train: &GaussianStats) -> Result<SelfConsistentState> {
    let regime = config.validate(train)?;
    let gamma = if config.gamma.abs() < REGIME_EPS { 0.0 } else { config.gamma };
    let p = Problem {
        mu,
        phi: config.phi,
        psi: config.psi,
        gamma,
        rho: train.rho,
        omega: train.omega,
        regime,
    };
    let s = mu.scales().0;
    let x0 = 1.0 / (train.omega + 0.5 * s);
    let (x, residual, iterations, used_bisection) = p.solve(x0)?;
    let (phi, psi, rho, omega) = (p.phi, p.psi, p.rho, p.omega);
    let i12 = functional_i(mu, 1, 2, x, phi);
    let (tau, tau_bar, gamma_tau, gamma_tau_bar, dx_dgamma) = match regime {
        Regime::General => {
            let (gt, gtb) = p.gamma_taus(x);
            let dx = -x / (gamma + rho * (psi / phi * gt + gtb) * (omega + phi * i12));
            (gt / gamma, gtb / gamma, gt, gtb, dx)
        }
        Regime::Ridgeless => {
            let gap = (phi - psi).abs();
            let dx = -x * phi / (rho * gap * (omega + phi * i12));
            if phi > psi {
                (x * phi / (rho * gap), f64::INFINITY, 0.0, gap / phi, dx)
            } else {
                (f64::INFINITY, x * psi / (rho * gap), gap / psi, 0.0, dx)
            }
        }
        Regime::InfiniteWidth => {
            let dx = -(x / rho) / (p.offset() + phi * i12);
            let tau_bar = if gamma == 0.0 { f64::INFINITY } else { 1.0 / gamma };
            (x / rho, tau_bar, gamma * x / rho, 1.0, dx)
        }
    };
    Ok(SelfConsistentState {
        x,
        tau,
        tau_bar,
        dx_dgamma,
        residual,
        iterations,
        regime,
        used_bisection,
        gamma_tau,
        gamma_tau_bar,
    })
}

/// Solves the self-consistent equation for x and reports τ, τ̄ and ∂x/∂γ.
pub fn solve_self_consistent(mu: &Ljsd, config: &ModelConfig) -> Result<SelfConsistentState> {
    let train = gaussian_constants(&config.sigma, mu.scales().0)?;
    solve_with(mu, config, &train)
}

fn constants(mu: &Ljsd, sigma: &ActivationSpec) -> Result<(GaussianStats, GaussianStats, f64)> {
    let (s, s_star) = mu.scales();
    let train = gaussian_constants(sigma, s)?;
    let test = if s_star == s { train } else { gaussian_constants(sigma, s_star)? };
    Ok((train, test, (test.rho / train.rho).sqrt()))
}

fn bias_from(xi: f64, s_star: f64, phi: f64, f: &Functionals) -> f64 {
    (1.0 - xi).powi(2) * s_star + 2.0 * (1.0 - xi) * xi * f.s11 + xi * xi * phi * f.s12
}

/// Asymptotic bias, variance and test error.
pub fn predict(mu: &Ljsd, config: &ModelConfig) -> Result<TheoryPrediction> {
    let (train, test, xi) = constants(mu, &config.sigma)?;
    let state = solve_with(mu, config, &train)?;
    let (phi, psi, sig2) = (config.phi, config.psi, config.sigma_eps2);
    let x = state.x;
    let f = functionals(mu, x, phi);
    let s_star = mu.scales().1;
    let bias = bias_from(xi, s_star, phi, &f);
    let (rho, omega, omega_s) = (train.rho, train.omega, test.omega);
    let xi2 = xi * xi;
    let a = omega + phi * f.i12;
    let b = omega_s + f.s11;
    let c = omega_s + phi * f.s12;
    let raw = match state.regime {
        Regime::General => {
            let (gt, gtb) = (state.gamma_tau, state.gamma_tau_bar);
            let r = psi / phi;
            let bracket = r * f.i11 * a * b
                + phi * gtb * f.i12 * f.s22
                + r * gt * f.i22 * c
                + sig2 * (r * a * b + gtb * f.s22);
            -rho * xi2 * state.dx_dgamma * bracket
        }
        Regime::Ridgeless => {
            let gap = (phi - psi).abs();
            let first = xi2 * psi / gap * x * (sig2 + f.i11) * b;
            let second = if phi > psi {
                xi2 * x * (1.0 - x * (omega - sig2) / (1.0 - x * x * f.i22)) * f.s22
            } else {
                xi2 * x * x * psi * f.i22 / (phi - x * x * psi * f.i22) * c
            };
            first + second
        }
        Regime::InfiniteWidth => {
            let geff = config.gamma / rho + omega;
            xi2 * (sig2 + phi * f.i12) / (geff + phi * f.i12) * x * f.s22
        }
    };
    if !raw.is_finite() {
        return Err(Error::Consistency(format!("variance evaluated to {raw}")));
    }
    if raw < -VARIANCE_NOISE * (1.0 + bias) {
        return Err(Error::Consistency(format!("variance is negative ({raw:e})")));
    }
    let variance_clamped = raw < 0.0;
    let variance = raw.max(0.0);
    Ok(TheoryPrediction { bias, variance, error: bias + variance, state, train, test, xi, variance_clamped })
}

/// Per-eigenvalue bias contributions wᵢ E[r|λᵢ] (1 − ξ + ξφ/(φ + xλᵢ))² at a given x.
pub fn bias_components_at(mu: &Ljsd, x: f64, xi: f64, phi: f64) -> Vec<(f64, f64)> {
    mu.atoms()
        .iter()
        .map(|a| {
            let w = 1.0 - xi + xi * phi / (phi + x * a.lambda);
            (a.lambda, a.weight * a.r * w * w)
        })
        .collect()
}

/// Bias split by training eigendirection at the solved x; sums to the predicted bias.
pub fn bias_eigendecomposition(mu: &Ljsd, config: &ModelConfig) -> Result<Vec<(f64, f64)>> {
    let (train, _, xi) = constants(mu, &config.sigma)?;
    let st = solve_with(mu, config, &train)?;
    Ok(bias_components_at(mu, st.x, xi, config.phi))
}

/// Finite-size test error of ridgeless linear regression with m samples.
pub fn lr_error_finite(lambdas: &[f64], overlaps: &[f64], m: usize, sigma_eps2: f64) -> Result<f64> {
    let n0 = lambdas.len();
    if n0 == 0 || overlaps.len() != n0 {
        return Err(Error::InvalidParameter("lambdas and overlaps must be nonempty and aligned".into()));
    }
    if m <= n0 + 1 {
        return Err(Error::InvalidParameter(format!("need m > n0 + 1, got m = {m}, n0 = {n0}")));
    }
    if lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidParameter("eigenvalues must be positive".into()));
    }
    let tr: f64 = lambdas.iter().zip(overlaps).map(|(l, r)| r / l).sum::<f64>() / n0 as f64;
    Ok(sigma_eps2 * n0 as f64 / (m - n0 - 1) as f64 * tr)
}

/// Asymptotic linear-regression error σ²φ/(1−φ)·E[r/λ].
pub fn lr_error_asymptotic(mu: &Ljsd, phi: f64, sigma_eps2: f64) -> Result<f64> {
    if !(phi > 0.0 && phi < 1.0) {
        return Err(Error::InvalidParameter(format!("phi must lie in (0, 1), got {phi}")));
    }
    Ok(sigma_eps2 * phi / (1.0 - phi) * mu.expect(|l, r| r / l))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeLine {
    pub e0: f64,
    pub slope: f64,
}

/// In the ridgeless overparameterized regime, E_{μ₂} = E0 + slope·E_{μ₁} along φ/ψ.
pub fn slope_line(mu1: &Ljsd, mu2: &Ljsd, config: &ModelConfig) -> Result<SlopeLine> {
    if config.gamma.abs() >= REGIME_EPS {
        return Err(Error::InvalidParameter("slope line needs gamma = 0".into()));
    }
    if !(config.psi < config.phi) {
        return Err(Error::InvalidParameter("slope line needs psi < phi".into()));
    }
    if !mu1.same_marginal(mu2) {
        return Err(Error::MarginalMismatch);
    }
    let (train, t1, xi1) = constants(mu1, &config.sigma)?;
    let (_, t2, xi2) = constants(mu2, &config.sigma)?;
    let state = solve_with(mu1, config, &train)?;
    let (x, phi, sig2, omega) = (state.x, config.phi, config.sigma_eps2, train.omega);
    let f1 = functionals(mu1, x, phi);
    let f2 = functionals(mu2, x, phi);
    let b1 = bias_from(xi1, mu1.scales().1, phi, &f1);
    let b2 = bias_from(xi2, mu2.scales().1, phi, &f2);
    let ratio = (t2.omega + f2.s11) / (t1.omega + f1.s11);
    let slope = xi2 * xi2 / (xi1 * xi1) * ratio;
    let k = x * (1.0 - x * (omega - sig2) / (1.0 - x * x * f1.i22));
    let e0 = b2 - slope * b1 + xi2 * xi2 * k * (f2.s22 - ratio * f1.s22);

    // two-point check against the full predictions
    let psi_a = config.psi;
    let psi_b = if psi_a > 0.0 { 0.5 * psi_a } else { 0.5 * phi };
    for psi in [psi_a, psi_b] {
        let c = config.with_psi(psi);
        let (e1, e2) = (predict(mu1, &c)?.error, predict(mu2, &c)?.error);
        let gap = (e2 - (e0 + slope * e1)).abs();
        if gap > 1e-8 * e2.abs().max(1.0) {
            return Err(Error::Consistency(format!("slope line misses prediction by {gap:e} at psi = {psi}")));
        }
    }
    Ok(SlopeLine { e0, slope })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuneTarget {
    Shifted,
    Unshifted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalGamma {
    pub gamma_opt: f64,
    pub error_at_opt: f64,
    /// The minimizer sits on an end of the search domain.
    pub at_boundary: bool,
}

pub const GAMMA_MAX: f64 = 1e3;

/// Default search interval [0, 10³].
pub fn default_gamma_domain() -> (f64, f64) {
    (0.0, GAMMA_MAX)
}

/// Extended interval [−ρω, 10³], admissible only when ψ = 0.
pub fn extended_gamma_domain(mu: &Ljsd, sigma: &ActivationSpec) -> Result<(f64, f64)> {
    let g = gaussian_constants(sigma, mu.scales().0)?;
    Ok((-g.rho * g.omega, GAMMA_MAX))
}

/// Ridge constant minimizing the predicted error on μ (shifted) or on its unshifted reference.
pub fn optimal_gamma(mu: &Ljsd, config: &ModelConfig, target: TuneTarget, domain: (f64, f64)) -> Result<OptimalGamma> {
    let (lo, hi) = domain;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidParameter(format!("bad gamma domain [{lo}, {hi}]")));
    }
    let eval_mu = match target {
        TuneTarget::Shifted => mu.clone(),
        TuneTarget::Unshifted => mu.unshifted(),
    };
    let objective = |g: f64| -> f64 {
        match predict(&eval_mu, &config.with_gamma(g)) {
            Ok(p) => p.error,
            Err(_) => f64::INFINITY,
        }
    };
    // search over the offset t = γ − lo on a logarithmic grid
    let width = hi - lo;
    let n = 121;
    let mut grid = vec![0.0];
    grid.extend((0..n).map(|k| width * 10f64.powf(-12.0 + 12.0 * k as f64 / (n - 1) as f64)));
    let vals: Vec<f64> = grid.iter().map(|&t| objective(lo + t)).collect();
    let (kmin, &vmin) = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is nonempty");
    if !vmin.is_finite() {
        return Err(Error::NoRoot("no admissible gamma in the domain".into()));
    }
    let last = grid.len() - 1;
    if kmin == 0 || kmin == last {
        return Ok(OptimalGamma { gamma_opt: lo + grid[kmin], error_at_opt: vmin, at_boundary: true });
    }
    let (t, v) = if kmin == 1 {
        golden(|t| objective(lo + t), 0.0, grid[2], 1e-14 * grid[2])
    } else {
        let (a, b) = (grid[kmin - 1].ln(), grid[kmin + 1].ln());
        let (u, v) = golden(|u| objective(lo + u.exp()), a, b, 1e-11);
        (u.exp(), v)
    };
    let (t, v) = if v <= vmin { (t, v) } else { (grid[kmin], vmin) };
    Ok(OptimalGamma { gamma_opt: lo + t, error_at_opt: v, at_boundary: false })
}

/// Golden-section search for a minimum of a unimodal function on [a, b].
fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..500 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
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
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncomparableBounds {
    pub bias_lo: f64,
    pub bias_hi: f64,
    /// Absent when σ_ε² > ω, where the error bound does not apply.
    pub err_lo: Option<f64>,
    pub err_hi: Option<f64>,
}

/// Envelope bounds on bias and error of an equal-scale shift in terms of its unshifted reference.
pub fn incomparable_bounds(mu: &Ljsd, config: &ModelConfig) -> Result<IncomparableBounds> {
    let (s, s_star) = mu.scales();
    if (s - s_star).abs() > 1e-9 * s.max(s_star) {
        return Err(Error::UnequalScales { s, s_star });
    }
    let env = envelopes(mu);
    let base = predict(&mu.unshifted(), config)?;
    let error_ok = config.sigma_eps2 <= base.train.omega;
    Ok(IncomparableBounds {
        bias_lo: env.coeff_lower * base.bias,
        bias_hi: env.coeff_upper * base.bias,
        err_lo: error_ok.then(|| env.coeff_lower * base.error),
        err_hi: error_ok.then(|| env.coeff_upper * base.error),
    })
}
