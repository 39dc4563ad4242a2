//! Sweep runner and command-line front end.
//!
//! A sweep is described by a small TOML file:
//!
//! ```toml
//! ljsd = ["diatomic:2,-2", "diatomic:2,2"]
//! activation = "relu"
//! phi = 0.5
//! ratio = "logspace:0.1,100,31"
//! gamma = [0.001]
//! sigma_eps2 = 0.1
//!
//! [simulate]
//! n0 = 512
//! trials = 50
//! ```
//!
//! Rows go out in grid order (ljsd, ratio, gamma, sigma_eps2) as CSV, one
//! flushed line at a time, so an interrupted sweep leaves a valid prefix.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{gaussian_constants, quadrature_constants, ActivationSpec};
use crate::error::{Error, Result};
use crate::ljsd::{
    compare, make_diatomic, make_four_atom, make_pure_scale, make_sine_family, Atom, Ljsd, Verdict,
};
use crate::simulator::{self, Backend, SimConfig};
use crate::theory::{
    self, default_gamma_domain, extended_gamma_domain, optimal_gamma, predict, psi_from_ratio,
    solve_self_consistent, ModelConfig, Regime, TuneTarget,
};

pub const CSV_HEADER: &str = "# shiftlab-csv v1";

/// Parses an LJSD constructor string such as `diatomic:2,0.5` or `file:mu.txt`.
pub fn parse_ljsd(spec: &str) -> Result<Ljsd> {
    let t = spec.trim();
    let (head, args) = match t.split_once(':') {
        Some((h, a)) => (h.trim(), a.trim()),
        None => (t, ""),
    };
    let nums = |n: usize| -> Result<Vec<f64>> {
        let v: Vec<f64> = args
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("ljsd `{t}`: {e}")))?;
        if v.len() != n {
            return Err(Error::Config(format!("ljsd `{t}` needs {n} parameter(s)")));
        }
        Ok(v)
    };
    let mu = match head {
        "identity" if args.is_empty() => make_pure_scale(1.0, 1.0)?,
        "pure_scale" => {
            let v = nums(2)?;
            make_pure_scale(v[0], v[1])?
        }
        "diatomic" => {
            let v = nums(2)?;
            make_diatomic(v[0], v[1])?
        }
        "sine" => {
            let v = nums(2)?;
            if v[1] < 2.0 || v[1].fract() != 0.0 {
                return Err(Error::Config(format!("ljsd `{t}`: atom count must be an integer >= 2")));
            }
            make_sine_family(v[0], v[1] as usize)?
        }
        "four_atom" => {
            let k: usize = args.parse().map_err(|_| Error::Config(format!("ljsd `{t}` needs an index 1..4")))?;
            make_four_atom(k)?
        }
        "file" if !args.is_empty() => Ljsd::from_text(&std::fs::read_to_string(args)?)?,
        _ => {
            return Err(Error::Config(format!(
                "unknown ljsd `{t}` (expected identity, pure_scale:s,s*, diatomic:alpha,theta, sine:c,n, four_atom:k or file:path)"
            )))
        }
    };
    Ok(mu)
}

/// A grid axis: a single number, a list, or `linspace:a,b,n` / `logspace:a,b,n`
/// (logspace endpoints are values, not exponents).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Single(f64),
    List(Vec<f64>),
    Text(String),
}

impl Grid {
    pub fn values(&self, field: &str) -> Result<Vec<f64>> {
        let v = match self {
            Grid::Single(x) => vec![*x],
            Grid::List(v) => v.clone(),
            Grid::Text(t) => parse_grid_text(t).map_err(|m| Error::Config(format!("{field}: {m}")))?,
        };
        if v.is_empty() {
            return Err(Error::Config(format!("{field}: grid is empty")));
        }
        if v.iter().any(|x| x.is_nan()) {
            return Err(Error::Config(format!("{field}: grid contains NaN")));
        }
        Ok(v)
    }
}

fn parse_grid_text(t: &str) -> std::result::Result<Vec<f64>, String> {
    let t = t.trim();
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("`{s}`: {e}"));
    if let Some((kind, rest)) = t.split_once(':') {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 3 {
            return Err(format!("`{t}` needs three parameters a,b,n"));
        }
        let (a, b) = (num(parts[0])?, num(parts[1])?);
        let n: usize = parts[2].trim().parse().map_err(|_| format!("`{t}`: point count must be an integer"))?;
        if n == 0 {
            return Err(format!("`{t}`: point count must be >= 1"));
        }
        let frac = |k: usize| if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
        match kind.trim() {
            "linspace" => Ok((0..n).map(|k| a + (b - a) * frac(k)).collect()),
            "logspace" => {
                if !(a > 0.0 && b > 0.0) {
                    return Err(format!("`{t}`: logspace endpoints must be positive"));
                }
                Ok((0..n).map(|k| (a.ln() + (b.ln() - a.ln()) * frac(k)).exp()).collect())
            }
            other => Err(format!("unknown grid kind `{other}` (expected linspace or logspace)")),
        }
    } else {
        t.split(',').map(num).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LjsdList {
    One(String),
    Many(Vec<String>),
}

impl LjsdList {
    pub fn specs(&self) -> Vec<String> {
        match self {
            LjsdList::One(s) => vec![s.clone()],
            LjsdList::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub n0: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_backend")]
    pub backend: String,
}

fn default_trials() -> usize {
    simulator::DEFAULT_TRIALS
}
fn default_replicates() -> usize {
    simulator::DEFAULT_REPLICATES
}
fn default_n_test() -> usize {
    simulator::DEFAULT_N_TEST
}
fn default_backend() -> String {
    Backend::Nonlinear.to_string()
}

/// `"default"`, `"extended"`, or an explicit `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DomainSpec {
    Named(String),
    Range([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSpec {
    #[serde(default = "default_target")]
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
}

fn default_target() -> String {
    "shifted".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub ljsd: LjsdList,
    pub activation: String,
    pub phi: f64,
    /// φ/ψ; 0 means infinitely many features.
    pub ratio: Grid,
    pub gamma: Grid,
    pub sigma_eps2: Grid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize_gamma: Option<OptimizeSpec>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
            msg: e.message().to_string(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// A fully resolved sweep: parsed distributions and expanded grids.
pub struct Plan {
    pub ljsds: Vec<(String, Ljsd)>,
    pub activation: ActivationSpec,
    pub phi: f64,
    pub ratios: Vec<f64>,
    pub gammas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub simulate: Option<(SimulateSpec, Backend)>,
    pub optimize: Option<(TuneTarget, DomainSpec)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub ljsd: usize,
    pub ratio: f64,
    pub gamma: f64,
    pub sigma_eps2: f64,
}

impl Plan {
    pub fn new(spec: &SweepSpec) -> Result<Self> {
        let specs = spec.ljsd.specs();
        if specs.is_empty() {
            return Err(Error::Config("ljsd: list is empty".into()));
        }
        let ljsds = specs.iter().map(|s| parse_ljsd(s).map(|m| (s.clone(), m))).collect::<Result<_>>()?;
        let activation: ActivationSpec = spec.activation.parse()?;
        if !(spec.phi.is_finite() && spec.phi > 0.0) {
            return Err(Error::Config(format!("phi: must be positive, got {}", spec.phi)));
        }
        let ratios = spec.ratio.values("ratio")?;
        let gammas = spec.gamma.values("gamma")?;
        let sigmas = spec.sigma_eps2.values("sigma_eps2")?;
        if let Some(r) = ratios.iter().find(|r| !(**r >= 0.0)) {
            return Err(Error::Config(format!("ratio: values must be >= 0, got {r}")));
        }
        if let Some(g) = gammas.iter().find(|g| !g.is_finite()) {
            return Err(Error::Config(format!("gamma: values must be finite, got {g}")));
        }
        if gammas.iter().any(|&g| g < 0.0) && ratios.iter().any(|&r| r > 0.0 && r.is_finite()) {
            return Err(Error::Config("gamma: negative values need every ratio to be 0 (infinite width)".into()));
        }
        if let Some(s) = sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::Config(format!("sigma_eps2: values must be >= 0, got {s}")));
        }
        let simulate = match &spec.simulate {
            None => None,
            Some(s) => {
                if s.n0 == 0 || s.trials == 0 || s.n_test == 0 {
                    return Err(Error::Config("simulate: n0, trials and n_test must be >= 1".into()));
                }
                if ratios.iter().any(|&r| r == 0.0 || r.is_infinite()) {
                    return Err(Error::Config("simulate: infinite-width points (ratio 0) cannot be simulated".into()));
                }
                if gammas.iter().any(|&g| g < 0.0) {
                    return Err(Error::Config("simulate: gamma must be >= 0".into()));
                }
                Some((s.clone(), s.backend.parse()?))
            }
        };
        let optimize = match &spec.optimize_gamma {
            None => None,
            Some(o) => {
                let target = match o.target.as_str() {
                    "shifted" => TuneTarget::Shifted,
                    "unshifted" => TuneTarget::Unshifted,
                    t => return Err(Error::Config(format!("optimize_gamma.target: expected shifted or unshifted, got `{t}`"))),
                };
                let domain = o.domain.clone().unwrap_or(DomainSpec::Named("default".into()));
                match &domain {
                    DomainSpec::Named(n) if n == "default" || n == "extended" => {}
                    DomainSpec::Named(n) => {
                        return Err(Error::Config(format!("optimize_gamma.domain: unknown domain `{n}`")))
                    }
                    DomainSpec::Range([lo, hi]) if !(lo < hi) => {
                        return Err(Error::Config("optimize_gamma.domain: need lo < hi".into()))
                    }
                    _ => {}
                }
                Some((target, domain))
            }
        };
        Ok(Plan { ljsds, activation, phi: spec.phi, ratios, gammas, sigmas, simulate, optimize })
    }

    /// Grid points in output order.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for l in 0..self.ljsds.len() {
            for &ratio in &self.ratios {
                for &gamma in &self.gammas {
                    for &sigma_eps2 in &self.sigmas {
                        out.push(GridPoint { index: out.len(), ljsd: l, ratio, gamma, sigma_eps2 });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// `ok`, or `diverged` at the interpolation threshold.
    pub status: String,
    pub ljsd: String,
    pub activation: String,
    pub phi: f64,
    pub ratio: f64,
    pub psi: f64,
    pub gamma: f64,
    pub sigma_eps2: f64,
    pub bias_theory: Option<f64>,
    pub var_theory: Option<f64>,
    pub err_theory: Option<f64>,
    pub x: Option<f64>,
    pub tau: Option<f64>,
    pub tau_bar: Option<f64>,
    pub xi: Option<f64>,
    pub err_sim: Option<f64>,
    pub err_sim_se: Option<f64>,
    pub bias_sim: Option<f64>,
    pub bias_sim_se: Option<f64>,
    pub var_sim: Option<f64>,
    pub var_sim_se: Option<f64>,
    pub gamma_opt: Option<f64>,
    pub err_opt: Option<f64>,
}

/// Seed for one grid row, derived from the master seed and the row index.
pub fn row_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(index as u64);
    rng.random()
}

fn evaluate(plan: &Plan, p: &GridPoint) -> Result<ResultRow> {
    let (label, mu) = &plan.ljsds[p.ljsd];
    let phi = plan.phi;
    let psi = psi_from_ratio(phi, p.ratio);
    let config = ModelConfig::new(phi, psi, p.gamma, p.sigma_eps2, plan.activation.clone());
    let mut row = ResultRow {
        status: "ok".into(),
        ljsd: label.clone(),
        activation: plan.activation.to_string(),
        phi,
        ratio: p.ratio,
        psi,
        gamma: p.gamma,
        sigma_eps2: p.sigma_eps2,
        bias_theory: None,
        var_theory: None,
        err_theory: None,
        x: None,
        tau: None,
        tau_bar: None,
        xi: None,
        err_sim: None,
        err_sim_se: None,
        bias_sim: None,
        bias_sim_se: None,
        var_sim: None,
        var_sim_se: None,
        gamma_opt: None,
        err_opt: None,
    };
    match predict(mu, &config) {
        Ok(t) => {
            row.bias_theory = Some(t.bias);
            row.var_theory = Some(t.variance);
            row.err_theory = Some(t.error);
            row.x = Some(t.state.x);
            row.tau = Some(t.state.tau);
            row.tau_bar = Some(t.state.tau_bar);
            row.xi = Some(t.xi);
        }
        Err(Error::InterpolationThreshold { .. }) => row.status = "diverged".into(),
        Err(e) => return Err(e),
    }
    if let Some((sim, backend)) = &plan.simulate {
        let mut cfg = SimConfig::from_ratios(sim.n0, phi, p.ratio, p.gamma, p.sigma_eps2, plan.activation.clone())?;
        cfg.trials = sim.trials;
        cfg.replicates = sim.replicates;
        cfg.n_test = sim.n_test;
        cfg.backend = *backend;
        cfg.seed = row_seed(sim.seed, p.index);
        let cov = simulator::realize_cov(mu, sim.n0)?;
        if cfg.replicates >= 2 {
            let est = simulator::run_bias_variance(&cov, &cfg)?;
            row.bias_sim = Some(est.bias_mean);
            row.bias_sim_se = Some(est.bias_se);
            row.var_sim = Some(est.variance_mean);
            row.var_sim_se = Some(est.variance_se);
            row.err_sim = Some(est.error_mean);
            row.err_sim_se = Some(est.error_se);
        } else {
            let est = simulator::run_error(&cov, &cfg)?;
            row.err_sim = Some(est.error_mean);
            row.err_sim_se = Some(est.error_se);
        }
    }
    if let Some((target, domain)) = &plan.optimize {
        let dom = match domain {
            DomainSpec::Range(r) => (r[0], r[1]),
            DomainSpec::Named(n) if n == "extended" => extended_gamma_domain(mu, &plan.activation)?,
            DomainSpec::Named(_) => default_gamma_domain(),
        };
        let opt = optimal_gamma(mu, &config, *target, dom)?;
        row.gamma_opt = Some(opt.gamma_opt);
        row.err_opt = Some(predict(mu, &config.with_gamma(opt.gamma_opt))?.error);
    }
    Ok(row)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepSummary {
    pub rows: usize,
    pub diverged: usize,
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(true).from_writer(out)
}

/// Evaluates every grid point on a pool of `workers` threads and streams rows in grid order.
pub fn run_sweep<W: Write>(spec: &SweepSpec, out: W, workers: usize) -> Result<SweepSummary> {
    let plan = Plan::new(spec)?;
    let points = plan.points();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let mut out = out;
    writeln!(out, "{CSV_HEADER}")?;
    out.flush()?;
    let mut w = csv_writer(out);
    let mut summary = SweepSummary { rows: 0, diverged: 0 };
    let chunk = 2 * workers.max(1);
    for batch in points.chunks(chunk) {
        let rows: Vec<Result<ResultRow>> = pool.install(|| batch.par_iter().map(|p| evaluate(&plan, p)).collect());
        for row in rows {
            let row = row?;
            if row.status == "diverged" {
                summary.diverged += 1;
            }
            w.serialize(&row)?;
            w.flush()?;
            summary.rows += 1;
        }
    }
    Ok(summary)
}

/// Reads rows written by [`run_sweep`].
pub fn read_rows<R: io::Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub compared: usize,
    pub diverged: usize,
    /// (z-score, relative deviation) per compared row.
    pub per_row: Vec<(f64, f64)>,
    pub max_abs_z: f64,
    pub max_rel: f64,
    /// Rows with |z| above `max_z` and relative deviation above `max_rel`.
    pub exceeding: usize,
}

/// z-scores and relative deviations of simulated against predicted error.
pub fn compare_report(rows: &[ResultRow], max_z: f64, max_rel: f64) -> Result<CompareReport> {
    let mut rep = CompareReport { compared: 0, diverged: 0, per_row: Vec::new(), max_abs_z: 0.0, max_rel: 0.0, exceeding: 0 };
    for (i, row) in rows.iter().enumerate() {
        if row.status == "diverged" {
            rep.diverged += 1;
            continue;
        }
        let (Some(sim), Some(se), Some(th)) = (row.err_sim, row.err_sim_se, row.err_theory) else {
            return Err(Error::Config(format!("row {}: missing theory or simulation columns", i + 1)));
        };
        let z = if se > 0.0 { (sim - th) / se } else if sim == th { 0.0 } else { f64::INFINITY };
        let rel = if th != 0.0 { ((sim - th) / th).abs() } else { (sim - th).abs() };
        rep.max_abs_z = rep.max_abs_z.max(z.abs());
        rep.max_rel = rep.max_rel.max(rel);
        if z.abs() > max_z && rel > max_rel {
            rep.exceeding += 1;
        }
        rep.per_row.push((z, rel));
        rep.compared += 1;
    }
    Ok(rep)
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, failures: Vec<String>) -> CheckOutcome {
    CheckOutcome { name, passed: failures.is_empty(), detail: failures.into_iter().take(3).collect::<Vec<_>>().join("; ") }
}

fn random_ljsd(rng: &mut ChaCha20Rng) -> Ljsd {
    let k = rng.random_range(1..=5);
    let atoms = (0..k)
        .map(|_| Atom::new(rng.random_range(0.05..3.0), rng.random_range(0.0..3.0), rng.random_range(0.1..1.0)))
        .collect::<Vec<_>>();
    let total: f64 = atoms.iter().map(|a| a.weight).sum();
    let atoms = atoms.into_iter().map(|a| Atom::new(a.lambda, a.r, a.weight / total)).collect();
    Ljsd::new(atoms, "random").expect("random atoms are valid")
}

/// A quick self-test of the library's core identities on seeded random inputs.
pub fn check_suite(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut fails = Vec::new();
    for sigma in [ActivationSpec::Relu, ActivationSpec::GaussianDamped, ActivationSpec::Elu { alpha: 0.7 }] {
        for s in [0.1, 1.0, 10.0] {
            match (gaussian_constants(&sigma, s), quadrature_constants(&sigma, s, 400)) {
                (Ok(a), Ok(b)) => {
                    for (name, u, v) in [("eta", a.eta, b.eta), ("rho", a.rho, b.rho), ("omega", a.omega, b.omega)] {
                        if (u - v).abs() > 1e-9 * u.abs().max(1.0) {
                            fails.push(format!("{sigma} s={s}: {name} {u} vs {v}"));
                        }
                    }
                }
                (a, b) => fails.push(format!("{sigma} s={s}: {:?} / {:?}", a.err(), b.err())),
            }
        }
    }
    out.push(outcome("gaussian constants match quadrature", fails));

    let mut fails = Vec::new();
    let mut mono = Vec::new();
    for _ in 0..50 {
        let mu = random_ljsd(&mut rng);
        let phi = rng.random_range(0.1..2.0);
        let gamma = 10f64.powf(rng.random_range(-3.0..1.0));
        let sig2 = rng.random_range(0.0..1.0);
        let ratios = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
        let mut prev: Option<f64> = None;
        for r in ratios {
            let c = ModelConfig::with_ratio(phi, r, gamma, sig2, ActivationSpec::Relu);
            match (solve_self_consistent(&mu, &c), predict(&mu, &c)) {
                (Ok(st), Ok(p)) => {
                    if st.regime == Regime::General {
                        let rho = p.train.rho;
                        let lhs = gamma * rho * st.tau * st.tau_bar;
                        if (st.x - lhs).abs() > 1e-9 * st.x {
                            fails.push(format!("x = {} but gamma rho tau tau_bar = {lhs}", st.x));
                        }
                    }
                    if (p.error - p.bias - p.variance).abs() > 1e-10 * p.error.max(1.0) {
                        fails.push("error != bias + variance".into());
                    }
                    if p.xi <= 1.0 {
                        if let Some(b) = prev {
                            if p.bias > b + 1e-10 * b.max(1.0) {
                                mono.push(format!("bias rose from {b} to {} at ratio {r}", p.bias));
                            }
                        }
                        prev = Some(p.bias);
                    }
                }
                (a, b) => fails.push(format!("{:?} / {:?}", a.err(), b.err())),
            }
        }
    }
    out.push(outcome("self-consistent solution and decomposition", fails));
    out.push(outcome("bias nonincreasing in width", mono));

    let mut fails = Vec::new();
    let mu = make_diatomic(2.0, 0.5).unwrap_or_else(|_| make_pure_scale(1.0, 1.0).expect("identity"));
    for phi in [0.25, 0.5, 0.75] {
        let c = ModelConfig::new(phi, 0.0, 1e-8, 0.3, ActivationSpec::Affine { a: 1.0, b: 0.0 });
        match (predict(&mu, &c), theory::lr_error_asymptotic(&mu, phi, 0.3)) {
            (Ok(p), Ok(lr)) => {
                if (p.error - lr).abs() > 1e-3 * lr {
                    fails.push(format!("phi={phi}: {} vs {lr}", p.error));
                }
            }
            (a, b) => fails.push(format!("{:?} / {:?}", a.err(), b.err())),
        }
    }
    out.push(outcome("linear regression limit", fails));

    let mut fails = Vec::new();
    let (d1, d2) = (make_diatomic(2.0, 1.0), make_diatomic(2.0, -1.0));
    match (d1, d2) {
        (Ok(a), Ok(b)) => {
            if compare(&a, &b).verdict != Verdict::SecondEasier && compare(&a, &b).verdict != Verdict::FirstEasier {
                fails.push(format!("diatomic pair judged {:?}", compare(&a, &b).verdict));
            }
            if compare(&a, &a).verdict != Verdict::Equal {
                fails.push("an LJSD is not equal to itself".into());
            }
        }
        (a, b) => fails.push(format!("{:?} / {:?}", a.err(), b.err())),
    }
    out.push(outcome("partial order", fails));
    out
}

#[derive(Parser)]
#[command(name = "shiftlab", version, about = "Random feature ridge regression under covariate shift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct PointArgs {
    /// LJSD constructor, repeatable (identity, diatomic:a,t, pure_scale:s,s*, sine:c,n, four_atom:k, file:path)
    #[arg(long, required = true)]
    ljsd: Vec<String>,
    #[arg(long, default_value = "relu")]
    activation: String,
    #[arg(long)]
    phi: f64,
    /// φ/ψ grid: list `a,b,c` or `logspace:a,b,n` / `linspace:a,b,n`; 0 = infinite width
    #[arg(long, allow_hyphen_values = true)]
    ratio: String,
    #[arg(long, allow_hyphen_values = true)]
    gamma: String,
    #[arg(long = "sigma-eps2", allow_hyphen_values = true, default_value = "0")]
    sigma_eps2: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Clone)]
struct SimArgs {
    #[arg(long)]
    n0: usize,
    #[arg(long, default_value_t = simulator::DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = simulator::DEFAULT_REPLICATES)]
    replicates: usize,
    #[arg(long = "n-test", default_value_t = simulator::DEFAULT_N_TEST)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "nonlinear")]
    backend: String,
}

#[derive(Subcommand)]
enum Command {
    /// Asymptotic bias, variance and error over a grid.
    Theory(PointArgs),
    /// Theory plus a Monte Carlo cross-check at every grid point.
    Simulate {
        #[command(flatten)]
        point: PointArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Run a sweep described by a TOML file.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `simulate.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Theory plus the error-minimizing ridge constant at every grid point.
    OptimizeGamma {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long, default_value = "shifted")]
        target: String,
        /// `default`, `extended`, or `lo,hi`
        #[arg(long, allow_hyphen_values = true, default_value = "default")]
        domain: String,
    },
    /// Summarize theory-vs-simulation agreement in a sweep CSV.
    Compare {
        csv: PathBuf,
        #[arg(long = "max-z", default_value_t = 3.0)]
        max_z: f64,
        #[arg(long = "max-rel", default_value_t = 0.05)]
        max_rel: f64,
    },
    /// Run the built-in invariant checks.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn grid_arg(text: &str) -> Grid {
    Grid::Text(text.to_string())
}

fn spec_from_point(p: &PointArgs) -> SweepSpec {
    SweepSpec {
        ljsd: LjsdList::Many(p.ljsd.clone()),
        activation: p.activation.clone(),
        phi: p.phi,
        ratio: grid_arg(&p.ratio),
        gamma: grid_arg(&p.gamma),
        sigma_eps2: grid_arg(&p.sigma_eps2),
        simulate: None,
        optimize_gamma: None,
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn sweep_to(spec: &SweepSpec, out: Option<&Path>, workers: Option<usize>) -> Result<SweepSummary> {
    let workers = workers.unwrap_or_else(default_workers);
    match out {
        Some(path) => run_sweep(spec, BufWriter::new(File::create(path)?), workers),
        None => run_sweep(spec, io::stdout().lock(), workers),
    }
}

fn parse_domain(text: &str) -> Result<DomainSpec> {
    match text.trim() {
        "default" | "extended" => Ok(DomainSpec::Named(text.trim().into())),
        t => {
            let v = parse_grid_text(t).map_err(Error::Config)?;
            if v.len() != 2 {
                return Err(Error::Config(format!("domain `{t}`: expected lo,hi")));
            }
            Ok(DomainSpec::Range([v[0], v[1]]))
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Theory(p) => {
            sweep_to(&spec_from_point(&p), p.out.as_deref(), p.workers)?;
        }
        Command::Simulate { point, sim } => {
            let mut spec = spec_from_point(&point);
            spec.simulate = Some(SimulateSpec {
                n0: sim.n0,
                trials: sim.trials,
                replicates: sim.replicates,
                seed: sim.seed,
                n_test: sim.n_test,
                backend: sim.backend,
            });
            sweep_to(&spec, point.out.as_deref(), point.workers)?;
        }
        Command::Sweep { config, out, seed, workers } => {
            let mut spec = SweepSpec::load(&config)?;
            if let (Some(seed), Some(sim)) = (seed, spec.simulate.as_mut()) {
                sim.seed = seed;
            }
            sweep_to(&spec, out.as_deref(), workers)?;
        }
        Command::OptimizeGamma { point, target, domain } => {
            let mut spec = spec_from_point(&point);
            spec.optimize_gamma = Some(OptimizeSpec { target, domain: Some(parse_domain(&domain)?) });
            sweep_to(&spec, point.out.as_deref(), point.workers)?;
        }
        Command::Compare { csv, max_z, max_rel } => {
            let rows = read_rows(File::open(&csv)?)?;
            let rep = compare_report(&rows, max_z, max_rel)?;
            println!(
                "compared {} rows ({} diverged skipped): max |z| = {:.3}, max rel = {:.4}, exceeding = {}",
                rep.compared, rep.diverged, rep.max_abs_z, rep.max_rel, rep.exceeding
            );
            if rep.exceeding > 0 {
                return Ok(4);
            }
        }
        Command::Check { seed } => {
            let results = check_suite(seed);
            let mut ok = true;
            for r in &results {
                if r.passed {
                    println!("ok    {}", r.name);
                } else {
                    ok = false;
                    println!("FAIL  {}: {}", r.name, r.detail);
                }
            }
            if !ok {
                return Ok(1);
            }
        }
    }
    Ok(0)
}

/// Entry point for the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_text_forms() {
        assert_eq!(parse_grid_text("1,2.5,4").unwrap(), vec![1.0, 2.5, 4.0]);
        assert_eq!(parse_grid_text("linspace:-3,3,3").unwrap(), vec![-3.0, 0.0, 3.0]);
        let g = parse_grid_text("logspace:0.1,100,4").unwrap();
        assert!((g[1] - 1.0).abs() < 1e-12 && (g[3] - 100.0).abs() < 1e-12);
        assert!(parse_grid_text("logspace:0,1,3").is_err());
        assert!(parse_grid_text("cubic:0,1,3").is_err());
    }

    #[test]
    fn ljsd_specs() {
        assert_eq!(parse_ljsd("identity").unwrap().len(), 1);
        assert_eq!(parse_ljsd("diatomic:2,0.5").unwrap().len(), 2);
        assert_eq!(parse_ljsd("four_atom:3").unwrap().len(), 4);
        assert_eq!(parse_ljsd("sine:0.3,50").unwrap().len(), 50);
        assert!(parse_ljsd("diatomic:2").is_err());
        assert!(parse_ljsd("triatomic:1,2,3").is_err());
    }

    #[test]
    fn parse_errors_carry_line() {
        let text = "ljsd = \"identity\"\nactivation = \"relu\"\nphi = \"half\"\nratio = 1\ngamma = 1\nsigma_eps2 = 0\n";
        match SweepSpec::from_toml(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_point_gives_one_row() {
        let spec = SweepSpec::from_toml(
            "ljsd = \"identity\"\nactivation = \"relu\"\nphi = 0.5\nratio = 2\ngamma = 0.1\nsigma_eps2 = 0.1\n",
        )
        .unwrap();
        let mut buf = Vec::new();
        let s = run_sweep(&spec, &mut buf, 1).unwrap();
        assert_eq!(s.rows, 1);
        let rows = read_rows(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].err_sim.is_none() && rows[0].err_theory.is_some());
    }

    #[test]
    fn threshold_rows_are_flagged() {
        let spec = SweepSpec::from_toml(
            "ljsd = \"identity\"\nactivation = \"relu\"\nphi = 0.5\nratio = [0.5, 1]\ngamma = 0\nsigma_eps2 = 0.1\n",
        )
        .unwrap();
        let mut buf = Vec::new();
        let s = run_sweep(&spec, &mut buf, 2).unwrap();
        assert_eq!((s.rows, s.diverged), (2, 1));
        let rows = read_rows(buf.as_slice()).unwrap();
        assert_eq!(rows[1].status, "diverged");
        assert!(rows[1].err_theory.is_none());
    }

    #[test]
    fn compare_perfect_rows() {
        let spec = SweepSpec::from_toml(
            "ljsd = \"identity\"\nactivation = \"relu\"\nphi = 0.5\nratio = [0.5, 1]\ngamma = 0\nsigma_eps2 = 0.1\n",
        )
        .unwrap();
        let mut buf = Vec::new();
        run_sweep(&spec, &mut buf, 1).unwrap();
        let mut rows = read_rows(buf.as_slice()).unwrap();
        rows[0].err_sim = rows[0].err_theory;
        rows[0].err_sim_se = Some(0.01);
        let rep = compare_report(&rows, 3.0, 0.05).unwrap();
        assert_eq!((rep.compared, rep.diverged, rep.exceeding), (1, 1, 0));
        assert_eq!(rep.max_abs_z, 0.0);
        rows[0].err_sim_se = None;
        assert!(compare_report(&rows, 3.0, 0.05).is_err());
    }
}
