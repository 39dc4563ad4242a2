//! Limiting joint spectral distributions (LJSDs).
//!
//! An LJSD is a probability measure over pairs (λ, r): λ is a training
//! covariance eigenvalue and r the test covariance energy along the
//! matching eigenvector. Only finite atom lists are represented; continuous
//! families are discretized by the midpoint rule.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

/// Relative tolerance under which two eigenvalues are treated as equal.
pub const LAMBDA_TOL: f64 = 1e-12;
/// Slack allowed when testing monotonicity of overlap ratios.
pub const RATIO_SLACK: f64 = 1e-10;

const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub lambda: f64,
    pub r: f64,
    pub weight: f64,
}

impl Atom {
    pub fn new(lambda: f64, r: f64, weight: f64) -> Self {
        Atom { lambda, r, weight }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ljsd {
    atoms: Vec<Atom>,
    label: String,
}

fn same_lambda(a: f64, b: f64) -> bool {
    (a - b).abs() <= LAMBDA_TOL * a.abs().max(b.abs())
}

/// Sorts atoms by λ and fuses atoms whose λ agree to [`LAMBDA_TOL`]:
/// weights add and r becomes the weight-averaged overlap.
pub fn merge_repeated(atoms: &[Atom]) -> Vec<Atom> {
    let mut sorted = atoms.to_vec();
    sorted.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let mut out: Vec<Atom> = Vec::with_capacity(sorted.len());
    let mut i = 0;
    while i < sorted.len() {
        let head = sorted[i];
        let mut j = i + 1;
        while j < sorted.len() && same_lambda(head.lambda, sorted[j].lambda) {
            j += 1;
        }
        if j == i + 1 {
            out.push(head);
        } else {
            let group = &sorted[i..j];
            let w: f64 = group.iter().map(|a| a.weight).sum();
            let wr: f64 = group.iter().map(|a| a.weight * a.r).sum();
            out.push(Atom::new(head.lambda, wr / w, w));
        }
        i = j;
    }
    out
}

impl Ljsd {
    /// Validates and normalizes atoms: λ > 0, r ≥ 0, weights > 0 summing to 1.
    /// Repeated eigenvalues are merged.
    pub fn new(atoms: Vec<Atom>, label: impl Into<String>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidLjsd("no atoms".into()));
        }
        for (i, a) in atoms.iter().enumerate() {
            if !(a.lambda.is_finite() && a.lambda > 0.0) {
                return Err(Error::InvalidLjsd(format!("atom {i}: lambda must be positive, got {}", a.lambda)));
            }
            if !(a.r.is_finite() && a.r >= 0.0) {
                return Err(Error::InvalidLjsd(format!("atom {i}: r must be nonnegative, got {}", a.r)));
            }
            if !(a.weight.is_finite() && a.weight > 0.0) {
                return Err(Error::InvalidLjsd(format!("atom {i}: weight must be positive, got {}", a.weight)));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidLjsd(format!("weights sum to {total}, expected 1")));
        }
        let label = label.into().replace(['\n', '\r'], " ");
        Ok(Ljsd { atoms: merge_repeated(&atoms), label })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into().replace(['\n', '\r'], " ");
        self
    }

    /// E_μ[f(λ, r)].
    pub fn expect(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.atoms.iter().map(|a| a.weight * f(a.lambda, a.r)).sum()
    }

    /// (s, s*) = (E[λ], E[r]).
    pub fn scales(&self) -> (f64, f64) {
        (self.expect(|l, _| l), self.expect(|_, r| r))
    }

    /// The no-shift reference with the same λ-marginal: atoms (λ, λ, w).
    pub fn unshifted(&self) -> Ljsd {
        Ljsd {
            atoms: self.atoms.iter().map(|a| Atom::new(a.lambda, a.lambda, a.weight)).collect(),
            label: format!("unshifted({})", self.label),
        }
    }

    /// True when both distributions put the same weights on the same eigenvalues.
    pub fn same_marginal(&self, other: &Ljsd) -> bool {
        self.atoms.len() == other.atoms.len()
            && self.atoms.iter().zip(&other.atoms).all(|(a, b)| {
                same_lambda(a.lambda, b.lambda) && (a.weight - b.weight).abs() <= WEIGHT_TOL * a.weight.max(b.weight)
            })
    }

    /// Plain-text atoms format: header `# ljsd v1 label=<text>` then `lambda,r,weight` lines.
    pub fn to_text(&self) -> String {
        let mut s = format!("# ljsd v1 label={}\n", self.label);
        for a in &self.atoms {
            s.push_str(&format!("{:e},{:e},{:e}\n", a.lambda, a.r, a.weight));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Ljsd> {
        let mut lines = text.lines().enumerate();
        let label = match lines.next() {
            Some((_, h)) if h.trim_start().starts_with("# ljsd v1") => {
                let rest = h.trim_start().trim_start_matches("# ljsd v1").trim_start();
                rest.strip_prefix("label=").unwrap_or("").to_string()
            }
            _ => return Err(Error::Parse { line: 1, msg: "expected header `# ljsd v1 label=<text>`".into() }),
        };
        let mut atoms = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Parse { line: i + 1, msg: format!("expected `lambda,r,weight`, got `{line}`") });
            }
            let mut v = [0.0; 3];
            for (slot, f) in v.iter_mut().zip(&fields) {
                *slot = f
                    .parse::<f64>()
                    .map_err(|e| Error::Parse { line: i + 1, msg: format!("bad number `{f}`: {e}") })?;
            }
            atoms.push(Atom::new(v[0], v[1], v[2]));
        }
        Ljsd::new(atoms, label)
    }
}

impl fmt::Display for Ljsd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label)
    }
}

/// (α, θ)-diatomic family: a fraction 1/(α+1) of directions with eigenvalue α and
/// the rest with 1/α, overlaps following λ^θ up to the constant that makes E[r] = 1.
pub fn make_diatomic(alpha: f64, theta: f64) -> Result<Ljsd> {
    if !(alpha.is_finite() && alpha >= 1.0) {
        return Err(Error::InvalidParameter(format!("diatomic alpha must be >= 1, got {alpha}")));
    }
    if !theta.is_finite() {
        return Err(Error::InvalidParameter(format!("diatomic theta must be finite, got {theta}")));
    }
    let c = (alpha + 1.0) / (alpha.powf(theta) + alpha.powf(1.0 - theta));
    let atoms = vec![
        Atom::new(alpha, c * alpha.powf(theta), 1.0 / (alpha + 1.0)),
        Atom::new(1.0 / alpha, c * alpha.powf(-theta), alpha / (alpha + 1.0)),
    ];
    Ljsd::new(atoms, format!("diatomic:{alpha},{theta}"))
}

/// δ_{(s, s*)}: identity covariance at scale s, tested at scale s*.
pub fn make_pure_scale(s: f64, s_star: f64) -> Result<Ljsd> {
    if !(s.is_finite() && s > 0.0 && s_star.is_finite() && s_star > 0.0) {
        return Err(Error::InvalidParameter(format!("pure-scale shift needs positive scales, got ({s}, {s_star})")));
    }
    Ljsd::new(vec![Atom::new(s, s_star, 1.0)], format!("pure_scale:{s},{s_star}"))
}

/// The sine family: λ ~ Unif[0, 2π] on a midpoint grid, r = λ − c·sin(λ)³.
pub fn make_sine_family(c: f64, n_atoms: usize) -> Result<Ljsd> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::InvalidParameter(format!("sine family c must be in [0, 1], got {c}")));
    }
    if n_atoms < 2 {
        return Err(Error::InvalidParameter("sine family needs at least 2 atoms".into()));
    }
    let h = 2.0 * PI / n_atoms as f64;
    let w = 1.0 / n_atoms as f64;
    let atoms = (0..n_atoms)
        .map(|i| {
            let l = (i as f64 + 0.5) * h;
            Atom::new(l, l - c * l.sin().powi(3), w)
        })
        .collect();
    Ljsd::new(atoms, format!("sine:{c},{n_atoms}"))
}

/// The four-atom quartet built from eigenvalues (0.6, 0.24, 0.12, 0.04) by
/// permuting overlaps; `index` selects 1..=4, where 4 is the unshifted one.
pub fn make_four_atom(index: usize) -> Result<Ljsd> {
    let l = [0.6, 0.24, 0.12, 0.04];
    // overlap index (0-based) paired with each eigenvalue
    let perm: [usize; 4] = match index {
        1 => [3, 2, 1, 0],
        2 => [3, 2, 0, 1],
        3 => [1, 3, 2, 0],
        4 => [0, 1, 2, 3],
        _ => return Err(Error::InvalidParameter(format!("four-atom index must be 1..=4, got {index}"))),
    };
    let atoms = (0..4).map(|i| Atom::new(l[i], l[perm[i]], 0.25)).collect();
    Ljsd::new(atoms, format!("four_atom:{index}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    FirstEasier,
    SecondEasier,
    Equal,
    Incomparable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialOrderVerdict {
    pub verdict: Verdict,
    /// (λ, r₁/r₂) over the atoms common to both distributions, by increasing λ.
    pub ratio_trace: Vec<(f64, f64)>,
    /// Some r₂ vanished, so the ratio is undefined.
    pub zero_overlap: bool,
    pub marginal_mismatch: bool,
}

fn monotone(q: &[f64], increasing: bool) -> bool {
    q.windows(2).all(|w| {
        let slack = RATIO_SLACK * w[0].abs().max(1.0);
        if increasing {
            w[1] >= w[0] - slack
        } else {
            w[1] <= w[0] + slack
        }
    })
}

/// Shift-strength partial order: μ₁ is easier than μ₂ when they share a
/// λ-marginal, E₁[r] ≤ E₂[r], and r₁/r₂ is nondecreasing in λ.
pub fn compare(mu1: &Ljsd, mu2: &Ljsd) -> PartialOrderVerdict {
    let marginal_mismatch = !mu1.same_marginal(mu2);
    let mut ratio_trace = Vec::new();
    let mut zero_overlap = false;
    let (mut i, mut j) = (0, 0);
    let (a1, a2) = (mu1.atoms(), mu2.atoms());
    while i < a1.len() && j < a2.len() {
        let (p, q) = (a1[i], a2[j]);
        if same_lambda(p.lambda, q.lambda) {
            if q.r == 0.0 {
                zero_overlap = true;
            }
            ratio_trace.push((p.lambda, p.r / q.r));
            i += 1;
            j += 1;
        } else if p.lambda < q.lambda {
            i += 1;
        } else {
            j += 1;
        }
    }
    let verdict = if marginal_mismatch || zero_overlap {
        Verdict::Incomparable
    } else {
        let q: Vec<f64> = ratio_trace.iter().map(|t| t.1).collect();
        let (e1, e2) = (mu1.scales().1, mu2.scales().1);
        let tol = 1e-12 * e1.abs().max(e2.abs());
        let first = e1 <= e2 + tol && monotone(&q, true);
        let second = e2 <= e1 + tol && monotone(&q, false);
        match (first, second) {
            (true, true) => Verdict::Equal,
            (true, false) => Verdict::FirstEasier,
            (false, true) => Verdict::SecondEasier,
            (false, false) => Verdict::Incomparable,
        }
    };
    PartialOrderVerdict { verdict, ratio_trace, zero_overlap, marginal_mismatch }
}

/// Running infimum L and supremum U of r/λ over the sorted eigenvalue grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopePair {
    pub lambdas: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// E[λ L(λ)] / E[λ]
    pub coeff_lower: f64,
    /// E[λ U(λ)] / E[λ]
    pub coeff_upper: f64,
}

impl EnvelopePair {
    fn step(&self, values: &[f64], lambda: f64) -> f64 {
        let k = self.lambdas.partition_point(|&l| l <= lambda);
        values[k.saturating_sub(1)]
    }

    /// L evaluated as a right-continuous step function (the first value below the grid).
    pub fn lower_at(&self, lambda: f64) -> f64 {
        self.step(&self.lower, lambda)
    }

    pub fn upper_at(&self, lambda: f64) -> f64 {
        self.step(&self.upper, lambda)
    }
}

pub fn envelopes(mu: &Ljsd) -> EnvelopePair {
    let n = mu.len();
    let mut lambdas = Vec::with_capacity(n);
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for a in mu.atoms() {
        let q = a.r / a.lambda;
        lo = lo.min(q);
        hi = hi.max(q);
        lambdas.push(a.lambda);
        lower.push(lo);
        upper.push(hi);
    }
    let s = mu.scales().0;
    let (mut cl, mut cu) = (0.0, 0.0);
    for (k, a) in mu.atoms().iter().enumerate() {
        cl += a.weight * a.lambda * lower[k];
        cu += a.weight * a.lambda * upper[k];
    }
    EnvelopePair { lambdas, lower, upper, coeff_lower: cl / s, coeff_upper: cu / s }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diatomic_theta_zero_has_unit_constant() {
        let mu = make_diatomic(2.0, 0.0).unwrap();
        let a = mu.atoms();
        assert_eq!(a.len(), 2);
        assert!((a[0].lambda - 0.5).abs() < 1e-15 && (a[0].r - 1.0).abs() < 1e-15);
        assert!((a[1].lambda - 2.0).abs() < 1e-15 && (a[1].r - 1.0).abs() < 1e-15);
        assert!((a[0].weight - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn diatomic_theta_one_is_unshifted() {
        let mu = make_diatomic(2.0, 1.0).unwrap();
        for a in mu.atoms() {
            assert!((a.r - a.lambda).abs() < 1e-15);
        }
    }

    #[test]
    fn diatomic_alpha_one_collapses() {
        let mu = make_diatomic(1.0, 2.7).unwrap();
        assert_eq!(mu.atoms(), &[Atom::new(1.0, 1.0, 1.0)]);
        assert!(make_diatomic(0.5, 1.0).is_err());
    }

    #[test]
    fn diatomic_scales_are_one() {
        for &(al, th) in &[(2.0, -3.0), (3.0, 0.5), (7.5, 2.2)] {
            let (s, ss) = make_diatomic(al, th).unwrap().scales();
            assert!((s - 1.0).abs() < 1e-14 && (ss - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn sine_family_small_grid() {
        let mu = make_sine_family(0.5, 4).unwrap();
        for (k, a) in mu.atoms().iter().enumerate() {
            let l = PI / 4.0 * (2 * k + 1) as f64;
            assert!((a.lambda - l).abs() < 1e-15);
            assert!((a.r - (l - 0.5 * l.sin().powi(3))).abs() < 1e-15);
        }
        let mu = make_sine_family(0.0, 100).unwrap();
        assert!(mu.atoms().iter().all(|a| a.r == a.lambda));
        assert!((make_sine_family(1.0, 10_000).unwrap().scales().1 - PI).abs() < 1e-6);
        assert!(make_sine_family(1.5, 10).is_err());
    }

    #[test]
    fn merge_examples() {
        let m = merge_repeated(&[Atom::new(1.0, 0.5, 0.5), Atom::new(1.0, 1.5, 0.5)]);
        assert_eq!(m, vec![Atom::new(1.0, 1.0, 1.0)]);
        let raw = [Atom::new(0.5, 0.5, 2.0 / 3.0), Atom::new(2.0, 2.0, 1.0 / 3.0)];
        assert_eq!(merge_repeated(&raw), raw.to_vec());
    }

    #[test]
    fn compare_examples() {
        let v = compare(&make_diatomic(2.0, 2.0).unwrap(), &make_diatomic(2.0, 1.0).unwrap());
        assert_eq!(v.verdict, Verdict::FirstEasier);
        let mu = make_diatomic(3.0, -0.4).unwrap();
        assert_eq!(compare(&mu, &mu).verdict, Verdict::Equal);
        let v = compare(&make_four_atom(2).unwrap(), &make_four_atom(3).unwrap());
        assert_eq!(v.verdict, Verdict::Incomparable);
        let expect = [(0.04, 0.4), (0.12, 5.0), (0.24, 3.0), (0.6, 1.0 / 6.0)];
        assert_eq!(v.ratio_trace.len(), 4);
        for ((l, q), (el, eq)) in v.ratio_trace.iter().zip(expect) {
            assert!((l - el).abs() < 1e-15 && (q - eq).abs() < 1e-12, "{l} {q}");
        }
    }

    #[test]
    fn compare_flags_mismatch_and_zero_overlap() {
        let v = compare(&make_diatomic(2.0, 1.0).unwrap(), &make_diatomic(3.0, 1.0).unwrap());
        assert!(v.marginal_mismatch);
        assert_eq!(v.verdict, Verdict::Incomparable);
        let a = Ljsd::new(vec![Atom::new(1.0, 1.0, 0.5), Atom::new(2.0, 1.0, 0.5)], "a").unwrap();
        let b = Ljsd::new(vec![Atom::new(1.0, 0.0, 0.5), Atom::new(2.0, 2.0, 0.5)], "b").unwrap();
        let v = compare(&a, &b);
        assert!(v.zero_overlap);
        assert_eq!(v.verdict, Verdict::Incomparable);
    }

    #[test]
    fn envelopes_of_unshifted_and_single_atom() {
        let env = envelopes(&make_sine_family(0.0, 50).unwrap());
        assert!(env.lower.iter().chain(&env.upper).all(|&v| (v - 1.0).abs() < 1e-15));
        assert!((env.coeff_lower - 1.0).abs() < 1e-14 && (env.coeff_upper - 1.0).abs() < 1e-14);
        let env = envelopes(&make_pure_scale(2.0, 0.5).unwrap());
        assert_eq!((env.lower[0], env.upper[0]), (0.25, 0.25));
    }

    #[test]
    fn text_round_trip() {
        let mu = make_diatomic(2.5, -1.3).unwrap();
        let back = Ljsd::from_text(&mu.to_text()).unwrap();
        assert_eq!(back, mu);
        assert!(matches!(Ljsd::from_text("nope"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            Ljsd::from_text("# ljsd v1 label=x\n1,1,0.5\n2,x,0.5\n"),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(Ljsd::new(vec![Atom::new(1.0, 1.0, 0.7)], "x").is_err());
        assert!(Ljsd::new(vec![Atom::new(-1.0, 1.0, 1.0)], "x").is_err());
        assert!(Ljsd::new(vec![Atom::new(1.0, -1.0, 1.0)], "x").is_err());
    }
}
