//! Gaussian moment constants of an activation function.
//!
//! For z ~ N(0, s): η = Var σ(z), ρ = (E[zσ(z)]/s)², ζ = sρ and
//! ω = s(η/ζ − 1). ReLU, affine and x·exp(−x²) have closed forms; anything
//! else goes through Gauss–Legendre quadrature on each half-line, with the
//! order doubled until two successive estimates agree.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock, RwLock};

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

pub const DEFAULT_QUADRATURE_ORDER: usize = 200;
pub const MIN_QUADRATURE_ORDER: usize = 32;
const QUAD_REL_TOL: f64 = 1e-11;
const MAX_DOUBLINGS: usize = 5;
/// Half-width of the integration window in standard deviations.
const WINDOW: f64 = 16.0;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct CustomActivation {
    pub name: String,
    pub f: ScalarFn,
    pub quadrature_order: usize,
}

#[derive(Clone)]
pub enum ActivationSpec {
    Relu,
    Affine { a: f64, b: f64 },
    Elu { alpha: f64 },
    GaussianDamped,
    Custom(CustomActivation),
}

impl ActivationSpec {
    pub fn custom(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ActivationSpec::Custom(CustomActivation {
            name: name.into(),
            f: Arc::new(f),
            quadrature_order: DEFAULT_QUADRATURE_ORDER,
        })
    }

    pub fn custom_with_order(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        quadrature_order: usize,
    ) -> Result<Self> {
        if quadrature_order < MIN_QUADRATURE_ORDER {
            return Err(Error::InvalidParameter(format!(
                "quadrature order must be >= {MIN_QUADRATURE_ORDER}, got {quadrature_order}"
            )));
        }
        Ok(ActivationSpec::Custom(CustomActivation { name: name.into(), f: Arc::new(f), quadrature_order }))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ActivationSpec::Relu => x.max(0.0),
            ActivationSpec::Affine { a, b } => a * x + b,
            ActivationSpec::Elu { alpha } => {
                if x <= 0.0 {
                    alpha * x.exp_m1()
                } else {
                    x
                }
            }
            ActivationSpec::GaussianDamped => x * (-x * x).exp(),
            ActivationSpec::Custom(c) => (c.f)(x),
        }
    }

    fn quadrature_order(&self) -> usize {
        match self {
            ActivationSpec::Custom(c) => c.quadrature_order,
            _ => DEFAULT_QUADRATURE_ORDER,
        }
    }
}

impl fmt::Debug for ActivationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for ActivationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationSpec::Relu => write!(f, "relu"),
            ActivationSpec::Affine { a, b } => write!(f, "affine:{a},{b}"),
            ActivationSpec::Elu { alpha } => write!(f, "elu:{alpha}"),
            ActivationSpec::GaussianDamped => write!(f, "gauss_damped"),
            ActivationSpec::Custom(c) => write!(f, "custom:{}", c.name),
        }
    }
}

impl FromStr for ActivationSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let t = text.trim();
        let (head, args) = match t.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a)),
            None => (t, None),
        };
        let nums = |a: Option<&str>, n: usize| -> Result<Vec<f64>> {
            let a = a.ok_or_else(|| Error::Config(format!("activation `{t}` needs {n} parameter(s)")))?;
            let v: Vec<f64> = a
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("activation `{t}`: {e}")))?;
            if v.len() != n {
                return Err(Error::Config(format!("activation `{t}` needs {n} parameter(s)")));
            }
            Ok(v)
        };
        match head.to_ascii_lowercase().as_str() {
            "relu" if args.is_none() => Ok(ActivationSpec::Relu),
            "gauss_damped" if args.is_none() => Ok(ActivationSpec::GaussianDamped),
            "affine" | "linear" => {
                let v = nums(args, 2)?;
                Ok(ActivationSpec::Affine { a: v[0], b: v[1] })
            }
            "elu" => {
                let v = nums(args, 1)?;
                Ok(ActivationSpec::Elu { alpha: v[0] })
            }
            _ => Err(Error::Config(format!(
                "unknown activation `{t}` (expected relu, affine:a,b, elu:alpha or gauss_damped)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianStats {
    pub eta: f64,
    pub rho: f64,
    pub zeta: f64,
    pub omega: f64,
    pub s: f64,
}

impl GaussianStats {
    fn from_moments(s: f64, variance: f64, e_zsigma: f64) -> Result<Self> {
        let rho = (e_zsigma / s).powi(2);
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::DegenerateActivation);
        }
        let zeta = s * rho;
        // Cauchy–Schwarz gives variance >= zeta; clip rounding noise.
        let eta = variance.max(zeta);
        let omega = (s * (eta / zeta - 1.0)).max(0.0);
        Ok(GaussianStats { eta, rho, zeta, omega, s })
    }
}

/// (η, ρ, ζ, ω) at scale s.
pub fn gaussian_constants(sigma: &ActivationSpec, s: f64) -> Result<GaussianStats> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::InvalidParameter(format!("scale must be positive, got {s}")));
    }
    match sigma {
        ActivationSpec::Relu => {
            let eta = s * (0.5 - 0.5 / PI);
            let rho = 0.25;
            Ok(GaussianStats { eta, rho, zeta: s * rho, omega: s * (1.0 - 2.0 / PI), s })
        }
        ActivationSpec::Affine { a, .. } => {
            if *a == 0.0 || !a.is_finite() {
                return Err(Error::DegenerateActivation);
            }
            let rho = a * a;
            Ok(GaussianStats { eta: s * rho, rho, zeta: s * rho, omega: 0.0, s })
        }
        ActivationSpec::GaussianDamped => {
            let eta = s / (1.0 + 4.0 * s).powf(1.5);
            let rho = (1.0 + 2.0 * s).powi(-3);
            let zeta = s * rho;
            Ok(GaussianStats { eta, rho, zeta, omega: s * (eta / zeta - 1.0), s })
        }
        _ => quadrature_constants(sigma, s, sigma.quadrature_order()),
    }
}

/// Constants by quadrature, starting at `order` nodes per half-line and doubling
/// until η and E[zσ] both agree with the previous pass to 1e-11 relative.
pub fn quadrature_constants(sigma: &ActivationSpec, s: f64, order: usize) -> Result<GaussianStats> {
    if order < MIN_QUADRATURE_ORDER {
        return Err(Error::InvalidParameter(format!("quadrature order must be >= {MIN_QUADRATURE_ORDER}")));
    }
    let f = |x: f64| sigma.eval(x);
    let mut prev = gaussian_moments(&f, s, order);
    let mut n = order;
    for _ in 0..MAX_DOUBLINGS {
        n *= 2;
        let next = gaussian_moments(&f, s, n);
        let close = |a: f64, b: f64| (a - b).abs() <= QUAD_REL_TOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        let done = close(prev.1, next.1) && close(prev.2, next.2);
        prev = next;
        if done {
            break;
        }
    }
    GaussianStats::from_moments(s, prev.1, prev.2)
}

/// Fixed-order quadrature of (E σ, Var σ, E[zσ]) for z ~ N(0, s).
pub fn gaussian_moments(f: &dyn Fn(f64) -> f64, s: f64, order: usize) -> (f64, f64, f64) {
    let rule = legendre_rule(order);
    let sd = s.sqrt();
    let norm = 1.0 / (2.0 * PI).sqrt();
    // nodes on [0, WINDOW] in standard units, mirrored for the negative half
    let half = WINDOW / 2.0;
    let pts: Vec<(f64, f64)> = rule
        .iter()
        .flat_map(|&(t, w)| {
            let u = half * (t + 1.0);
            let wu = half * w * norm * (-0.5 * u * u).exp();
            [(u, wu), (-u, wu)]
        })
        .collect();
    let mean: f64 = pts.iter().map(|&(u, w)| w * f(sd * u)).sum();
    let (mut var, mut ezf) = (0.0, 0.0);
    for &(u, w) in &pts {
        let c = f(sd * u) - mean;
        var += w * c * c;
        ezf += w * sd * u * c;
    }
    (mean, var, ezf)
}

fn legendre_rule(order: usize) -> Arc<Vec<(f64, f64)>> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(rule) = cache.read().expect("quadrature cache poisoned").get(&order) {
        return rule.clone();
    }
    let rule = Arc::new(
        GaussLegendre::new(order)
            .expect("order >= 2")
            .as_node_weight_pairs()
            .to_vec(),
    );
    cache.write().expect("quadrature cache poisoned").entry(order).or_insert(rule).clone()
}

/// ξ = √(ρ(s*)/ρ(s)).
pub fn xi(sigma: &ActivationSpec, s: f64, s_star: f64) -> Result<f64> {
    let train = gaussian_constants(sigma, s)?;
    let test = gaussian_constants(sigma, s_star)?;
    Ok((test.rho / train.rho).sqrt())
}
