//! Finite-size Monte Carlo for random feature ridge regression.
//!
//! Training inputs are drawn from N(0, Σ), test inputs from N(0, Σ*), with
//! Σ and Σ* diagonal in a common basis. The estimator is the closed-form
//! kernel ridge solution ŷ(x) = Y K⁻¹ K_x with K = FᵀF/n₁ + γI.
//!
//! Every random draw comes from its own ChaCha20 stream keyed by the master
//! seed and indexed by (trial, replicate, role), so results do not depend on
//! how trials are scheduled across threads.

use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::activation::{gaussian_constants, ActivationSpec};
use crate::error::{Error, Result};
use crate::ljsd::Ljsd;

/// Singular values below this fraction of the largest are dropped at γ = 0.
pub const PINV_CUTOFF: f64 = 1e-10;
const GRAM_STRIP: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// The actual features σ(WX/√n₀).
    Nonlinear,
    /// Gaussian-equivalent features √(ρ/n₀)WX + √(η−ζ)Θ.
    Linearized,
    /// Gaussian-equivalent features with the √(η−ζ) noise term removed.
    LinearizedSignalOnly,
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "nonlinear" => Ok(Backend::Nonlinear),
            "linearized" => Ok(Backend::Linearized),
            "linearized_signal_only" => Ok(Backend::LinearizedSignalOnly),
            other => Err(Error::Config(format!(
                "unknown backend `{other}` (expected nonlinear, linearized or linearized_signal_only)"
            ))),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Nonlinear => "nonlinear",
            Backend::Linearized => "linearized",
            Backend::LinearizedSignalOnly => "linearized_signal_only",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n0: usize,
    pub m: usize,
    pub n1: usize,
    pub n_test: usize,
    pub trials: usize,
    pub replicates: usize,
    pub seed: u64,
    pub backend: Backend,
    pub gamma: f64,
    pub sigma_eps2: f64,
    pub sigma: ActivationSpec,
}

pub const DEFAULT_N_TEST: usize = 200;
pub const DEFAULT_TRIALS: usize = 50;
pub const DEFAULT_REPLICATES: usize = 4;

impl SimConfig {
    /// Sizes from n₀ and the ratios φ = n₀/m and φ/ψ = n₁/m.
    pub fn from_ratios(n0: usize, phi: f64, ratio: f64, gamma: f64, sigma_eps2: f64, sigma: ActivationSpec) -> Result<Self> {
        if !(phi > 0.0 && ratio > 0.0 && ratio.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "simulation needs phi > 0 and a finite ratio > 0 (got phi = {phi}, ratio = {ratio})"
            )));
        }
        let m = ((n0 as f64) / phi).round().max(1.0) as usize;
        let n1 = (ratio * m as f64).round().max(1.0) as usize;
        Ok(SimConfig {
            n0,
            m,
            n1,
            n_test: DEFAULT_N_TEST,
            trials: DEFAULT_TRIALS,
            replicates: DEFAULT_REPLICATES,
            seed: 0,
            backend: Backend::Nonlinear,
            gamma,
            sigma_eps2,
            sigma,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.n0 == 0 || self.m == 0 || self.n1 == 0 || self.n_test == 0 || self.trials == 0 {
            return Err(Error::InvalidParameter("n0, m, n1, n_test and trials must all be >= 1".into()));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!("simulation needs gamma >= 0, got {}", self.gamma)));
        }
        if !(self.sigma_eps2.is_finite() && self.sigma_eps2 >= 0.0) {
            return Err(Error::InvalidParameter("label noise must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Simultaneously diagonal (Σ, Σ*): eigenvalue blocks with multiplicities and aligned overlaps.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteCovPair {
    pub train_eigs: Vec<(f64, usize)>,
    pub test_overlaps: Vec<f64>,
    /// Some atom received multiplicity zero.
    pub under_resolved: bool,
}

impl FiniteCovPair {
    pub fn n0(&self) -> usize {
        self.train_eigs.iter().map(|e| e.1).sum()
    }

    /// Diagonal of Σ, one entry per input coordinate.
    pub fn train_diagonal(&self) -> Vec<f64> {
        self.train_eigs.iter().flat_map(|&(l, k)| std::iter::repeat_n(l, k)).collect()
    }

    /// Diagonal of Σ*.
    pub fn test_diagonal(&self) -> Vec<f64> {
        self.train_eigs
            .iter()
            .zip(&self.test_overlaps)
            .flat_map(|(&(_, k), &r)| std::iter::repeat_n(r, k))
            .collect()
    }

    /// (tr̄ Σ, tr̄ Σ*).
    pub fn scales(&self) -> (f64, f64) {
        let n0 = self.n0() as f64;
        let s = self.train_eigs.iter().map(|&(l, k)| l * k as f64).sum::<f64>() / n0;
        let ss = self.train_eigs.iter().zip(&self.test_overlaps).map(|(&(_, k), &r)| r * k as f64).sum::<f64>() / n0;
        (s, ss)
    }
}

/// Realizes μ at dimension n₀; multiplicities are wᵢn₀ rounded by largest remainder
/// (ties go to the lower index).
pub fn realize_cov(mu: &Ljsd, n0: usize) -> Result<FiniteCovPair> {
    if n0 < mu.len() {
        return Err(Error::InvalidParameter(format!("n0 = {n0} is smaller than the number of atoms ({})", mu.len())));
    }
    let atoms = mu.atoms();
    let exact: Vec<f64> = atoms.iter().map(|a| a.weight * n0 as f64).collect();
    let mut mult: Vec<usize> = exact.iter().map(|v| v.floor() as usize).collect();
    let assigned: usize = mult.iter().sum();
    let mut order: Vec<usize> = (0..atoms.len()).collect();
    order.sort_by(|&i, &j| (exact[j] - exact[j].floor()).total_cmp(&(exact[i] - exact[i].floor())).then(i.cmp(&j)));
    for &i in order.iter().take(n0.saturating_sub(assigned)) {
        mult[i] += 1;
    }
    let under_resolved = mult.contains(&0);
    Ok(FiniteCovPair {
        train_eigs: atoms.iter().zip(&mult).map(|(a, &k)| (a.lambda, k)).collect(),
        test_overlaps: atoms.iter().map(|a| a.r).collect(),
        under_resolved,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEstimate {
    pub error_mean: f64,
    pub error_se: f64,
    /// NaN when only the error was estimated.
    pub bias_mean: f64,
    pub bias_se: f64,
    pub variance_mean: f64,
    pub variance_se: f64,
    pub trials: usize,
}

#[derive(Clone, Copy)]
enum Role {
    Beta = 1,
    TestInputs = 2,
    Weights = 3,
    Inputs = 4,
    Noise = 5,
    FeatureNoise = 6,
    TestFeatureNoise = 7,
}

fn stream(seed: u64, trial: usize, replicate: usize, role: Role) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((trial as u64) << 24) | ((replicate as u64) << 8) | role as u64);
    rng
}

fn normal_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_iterator(rows, cols, (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Columns drawn from N(0, diag(d)).
fn gaussian_columns(rng: &mut ChaCha20Rng, d: &[f64], cols: usize) -> DMatrix<f64> {
    let mut g = normal_matrix(rng, d.len(), cols);
    let sd: Vec<f64> = d.iter().map(|v| v.sqrt()).collect();
    for mut col in g.column_iter_mut() {
        for (v, s) in col.iter_mut().zip(&sd) {
            *v *= s;
        }
    }
    g
}

#[derive(Clone, Copy)]
enum Side {
    /// FᵀF
    Columns,
    /// FFᵀ
    Rows,
}

/// FᵀF or FFᵀ, computed one row strip of the upper triangle at a time.
fn gram(f: &DMatrix<f64>, side: Side) -> DMatrix<f64> {
    let (r, c) = f.shape();
    // element (i, k) of the left factor; the right factor is its transpose
    let (p, inner, rs, cs) = match side {
        Side::Columns => (c, r, r as isize, 1isize),
        Side::Rows => (r, c, 1isize, r as isize),
    };
    let mut out = DMatrix::<f64>::zeros(p, p);
    let base = f.as_slice().as_ptr();
    let dst = out.as_mut_slice().as_mut_ptr();
    let mut i0 = 0;
    while i0 < p {
        let bi = GRAM_STRIP.min(p - i0);
        // SAFETY: all offsets stay inside `f` (p × inner through strides rs, cs)
        // and inside the p × p column-major `out`.
        unsafe {
            matrixmultiply::dgemm(
                bi,
                inner,
                p - i0,
                1.0,
                base.offset(i0 as isize * rs),
                rs,
                cs,
                base.offset(i0 as isize * rs),
                cs,
                rs,
                0.0,
                dst.add(i0 + i0 * p),
                1,
                p as isize,
            );
        }
        i0 += bi;
    }
    for j in 0..p {
        for i in (j + 1)..p {
            out[(i, j)] = out[(j, i)];
        }
    }
    out
}

/// Solves K z = rhs for symmetric PSD K, or applies the pseudoinverse when `exact_pinv`.
fn solve_psd(k: DMatrix<f64>, rhs: &DVector<f64>, exact_pinv: bool) -> Result<DVector<f64>> {
    if !exact_pinv {
        if let Some(ch) = Cholesky::new(k.clone()) {
            return Ok(ch.solve(rhs));
        }
    }
    let eig = SymmetricEigen::new(k);
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(top > 0.0) {
        return Err(Error::Linalg("kernel matrix is zero".into()));
    }
    let proj = eig.eigenvectors.tr_mul(rhs);
    let scaled = DVector::from_iterator(
        proj.len(),
        proj.iter().zip(eig.eigenvalues.iter()).map(|(p, &l)| if l > PINV_CUTOFF * top { p / l } else { 0.0 }),
    );
    Ok(&eig.eigenvectors * scaled)
}

/// Readout weights v with ŷ(x) = vᵀ f(x), f(x) the feature vector of x.
fn readout(f: &DMatrix<f64>, y: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
    let (n1, m) = f.shape();
    let scale = 1.0 / n1 as f64;
    if n1 >= m {
        let mut k = gram(f, Side::Columns) * scale;
        for i in 0..m {
            k[(i, i)] += gamma;
        }
        let alpha = solve_psd(k, y, gamma == 0.0)?;
        Ok(f * alpha * scale)
    } else {
        let mut g = gram(f, Side::Rows) * scale;
        for i in 0..n1 {
            g[(i, i)] += gamma;
        }
        let rhs = f * y * scale;
        solve_psd(g, &rhs, gamma == 0.0)
    }
}

struct FeatureConstants {
    rho: f64,
    noise: f64,
    rho_star: f64,
    noise_star: f64,
}

fn feature_constants(cov: &FiniteCovPair, config: &SimConfig) -> Result<Option<FeatureConstants>> {
    if config.backend == Backend::Nonlinear {
        return Ok(None);
    }
    let (s, s_star) = cov.scales();
    let g = gaussian_constants(&config.sigma, s)?;
    let gs = gaussian_constants(&config.sigma, s_star)?;
    let keep = if config.backend == Backend::Linearized { 1.0 } else { 0.0 };
    Ok(Some(FeatureConstants {
        rho: g.rho,
        noise: keep * (g.eta - g.zeta).max(0.0),
        rho_star: gs.rho,
        noise_star: keep * (gs.eta - gs.zeta).max(0.0),
    }))
}

/// Noiseless test labels and `reps` independent prediction vectors for one trial.
fn trial_predictions(
    cov: &FiniteCovPair,
    config: &SimConfig,
    lin: Option<&FeatureConstants>,
    trial: usize,
    reps: usize,
) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
    let (n0, m, n1, nt) = (config.n0, config.m, config.n1, config.n_test);
    let lam = cov.train_diagonal();
    let rr = cov.test_diagonal();
    let root_n0 = (n0 as f64).sqrt();
    let seed = config.seed;

    let beta = normal_matrix(&mut stream(seed, trial, 0, Role::Beta), n0, 1).column(0).into_owned();
    let x_test = gaussian_columns(&mut stream(seed, trial, 0, Role::TestInputs), &rr, nt);
    let y_test = x_test.tr_mul(&beta) / root_n0;

    let mut preds = Vec::with_capacity(reps);
    for k in 0..reps {
        let w = normal_matrix(&mut stream(seed, trial, k, Role::Weights), n1, n0);
        let x = gaussian_columns(&mut stream(seed, trial, k, Role::Inputs), &lam, m);
        let mut noise_rng = stream(seed, trial, k, Role::Noise);
        let sd = config.sigma_eps2.sqrt();
        let y = x.tr_mul(&beta) / root_n0
            + DVector::from_iterator(m, (0..m).map(|_| sd * noise_rng.sample::<f64, _>(StandardNormal)));

        let wx = &w * &x;
        let wt = &w * &x_test;
        let (f, f_test) = match lin {
            None => {
                let act = &config.sigma;
                let (mut f, mut ft) = (wx, wt);
                f.apply(|v| *v = act.eval(*v / root_n0));
                ft.apply(|v| *v = act.eval(*v / root_n0));
                (f, ft)
            }
            Some(c) => {
                let mut f = wx * (c.rho / n0 as f64).sqrt();
                let mut ft = wt * (c.rho_star / n0 as f64).sqrt();
                if c.noise > 0.0 {
                    f += normal_matrix(&mut stream(seed, trial, k, Role::FeatureNoise), n1, m) * c.noise.sqrt();
                }
                if c.noise_star > 0.0 {
                    ft += normal_matrix(&mut stream(seed, trial, k, Role::TestFeatureNoise), n1, nt) * c.noise_star.sqrt();
                }
                (f, ft)
            }
        };
        let v = readout(&f, &y, config.gamma)?;
        preds.push(f_test.tr_mul(&v));
    }
    Ok((y_test, preds))
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-trial (error, bias, variance) averaged over the test batch.
fn decompose(y: &DVector<f64>, preds: &[DVector<f64>]) -> (f64, f64, f64) {
    let r = preds.len();
    let nt = y.len();
    let (mut err, mut bias) = (0.0, 0.0);
    for j in 0..nt {
        let yj = y[j];
        let e: f64 = preds.iter().map(|p| (yj - p[j]).powi(2)).sum::<f64>() / r as f64;
        err += e;
        if r >= 2 {
            let mean: f64 = preds.iter().map(|p| p[j]).sum::<f64>() / r as f64;
            let mut pair = 0.0;
            for k in 0..r {
                for l in (k + 1)..r {
                    pair += preds[k][j] * preds[l][j];
                }
            }
            pair *= 2.0 / (r * (r - 1)) as f64;
            bias += yj * yj - 2.0 * yj * mean + pair;
        }
    }
    let err = err / nt as f64;
    let bias = bias / nt as f64;
    (err, bias, err - bias)
}

fn run(cov: &FiniteCovPair, config: &SimConfig, reps: usize) -> Result<SimEstimate> {
    config.validate()?;
    if cov.n0() != config.n0 {
        return Err(Error::InvalidParameter(format!(
            "covariance has dimension {} but config says n0 = {}",
            cov.n0(),
            config.n0
        )));
    }
    let lin = feature_constants(cov, config)?;
    let per_trial: Vec<(f64, f64, f64)> = (0..config.trials)
        .into_par_iter()
        .map(|t| trial_predictions(cov, config, lin.as_ref(), t, reps).map(|(y, p)| decompose(&y, &p)))
        .collect::<Result<_>>()?;
    let errs: Vec<f64> = per_trial.iter().map(|t| t.0).collect();
    let (error_mean, error_se) = mean_se(&errs);
    let (bias_mean, bias_se, variance_mean, variance_se) = if reps >= 2 {
        let b: Vec<f64> = per_trial.iter().map(|t| t.1).collect();
        let v: Vec<f64> = per_trial.iter().map(|t| t.2).collect();
        let (bm, bs) = mean_se(&b);
        let (vm, vs) = mean_se(&v);
        (bm, bs, vm, vs)
    } else {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    };
    Ok(SimEstimate { error_mean, error_se, bias_mean, bias_se, variance_mean, variance_se, trials: config.trials })
}

/// Test error only: one fit per trial.
pub fn run_error(cov: &FiniteCovPair, config: &SimConfig) -> Result<SimEstimate> {
    run(cov, config, 1)
}

/// Error, bias and variance from `replicates` independent fits per trial sharing β and the test batch.
pub fn run_bias_variance(cov: &FiniteCovPair, config: &SimConfig) -> Result<SimEstimate> {
    if config.replicates < 2 {
        return Err(Error::InvalidParameter("bias estimation needs replicates >= 2".into()));
    }
    run(cov, config, config.replicates)
}

/// The bias/variance pipeline on Gaussian-equivalent features.
pub fn run_linearized(cov: &FiniteCovPair, config: &SimConfig) -> Result<SimEstimate> {
    let mut c = config.clone();
    if c.backend == Backend::Nonlinear {
        c.backend = Backend::Linearized;
    }
    run_bias_variance(cov, &c)
}

/// Ridgeless least squares directly on the inputs; the per-trial error is
/// integrated exactly over the test distribution.
pub fn run_linear_regression(cov: &FiniteCovPair, m: usize, sigma_eps2: f64, trials: usize, seed: u64) -> Result<SimEstimate> {
    let n0 = cov.n0();
    if m <= n0 || trials == 0 {
        return Err(Error::InvalidParameter("least squares needs m > n0 and trials >= 1".into()));
    }
    let lam = cov.train_diagonal();
    let rr = cov.test_diagonal();
    let errs: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let x = gaussian_columns(&mut stream(seed, t, 0, Role::Inputs), &lam, m);
            let mut rng = stream(seed, t, 0, Role::Noise);
            let sd = sigma_eps2.sqrt();
            let eps = DVector::from_iterator(m, (0..m).map(|_| sd * rng.sample::<f64, _>(StandardNormal)));
            let a = gram(&x, Side::Rows);
            let ch = Cholesky::new(a).ok_or_else(|| Error::Linalg("X Xᵀ is not positive definite".into()))?;
            let d = ch.solve(&(&x * eps));
            Ok(d.iter().zip(&rr).map(|(v, r)| r * v * v).sum::<f64>())
        })
        .collect::<Result<_>>()?;
    let (error_mean, error_se) = mean_se(&errs);
    Ok(SimEstimate {
        error_mean,
        error_se,
        bias_mean: f64::NAN,
        bias_se: f64::NAN,
        variance_mean: f64::NAN,
        variance_se: f64::NAN,
        trials,
    })
}
