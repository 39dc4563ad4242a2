//! Python bindings. Everything takes and returns plain floats, strings and
//! dicts; distributions are wrapped in the `Ljsd` class.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use shiftlab::activation::ActivationSpec;
use shiftlab::cli::{compare_report, parse_ljsd, read_rows};
use shiftlab::ljsd::{self as lj, Atom, Verdict};
use shiftlab::simulator::{self, Backend, SimConfig};
use shiftlab::theory::{self, ModelConfig, TuneTarget};
use shiftlab::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NonConvergence { .. } | Error::NoRoot(_) | Error::Linalg(_) | Error::Consistency(_) | Error::Io(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn activation(text: &str) -> PyResult<ActivationSpec> {
    text.parse().map_err(py_err)
}

#[pyclass(name = "Ljsd", module = "shiftlab", frozen)]
struct PyLjsd {
    inner: lj::Ljsd,
}

#[pymethods]
impl PyLjsd {
    /// Atoms as (λ, r, weight) triples.
    #[new]
    #[pyo3(signature = (atoms, label = "custom"))]
    fn new(atoms: Vec<(f64, f64, f64)>, label: &str) -> PyResult<Self> {
        let atoms = atoms.into_iter().map(|(l, r, w)| Atom::new(l, r, w)).collect();
        Ok(PyLjsd { inner: lj::Ljsd::new(atoms, label).map_err(py_err)? })
    }

    /// Same syntax as the command line `--ljsd` flag.
    #[staticmethod]
    fn parse(spec: &str) -> PyResult<Self> {
        Ok(PyLjsd { inner: parse_ljsd(spec).map_err(py_err)? })
    }

    #[staticmethod]
    fn pure_scale(s: f64, s_star: f64) -> PyResult<Self> {
        Ok(PyLjsd { inner: lj::make_pure_scale(s, s_star).map_err(py_err)? })
    }

    #[staticmethod]
    fn diatomic(alpha: f64, theta: f64) -> PyResult<Self> {
        Ok(PyLjsd { inner: lj::make_diatomic(alpha, theta).map_err(py_err)? })
    }

    #[staticmethod]
    fn sine(c: f64, n_atoms: usize) -> PyResult<Self> {
        Ok(PyLjsd { inner: lj::make_sine_family(c, n_atoms).map_err(py_err)? })
    }

    #[staticmethod]
    fn four_atom(index: usize) -> PyResult<Self> {
        Ok(PyLjsd { inner: lj::make_four_atom(index).map_err(py_err)? })
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label().to_string()
    }

    fn atoms(&self) -> Vec<(f64, f64, f64)> {
        self.inner.atoms().iter().map(|a| (a.lambda, a.r, a.weight)).collect()
    }

    /// (E[λ], E[r]).
    fn scales(&self) -> (f64, f64) {
        self.inner.scales()
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Ljsd({:?}, {} atoms)", self.inner.label(), self.inner.len())
    }
}

/// "first_easier", "second_easier", "equal" or "incomparable".
#[pyfunction]
fn compare(mu1: &PyLjsd, mu2: &PyLjsd) -> &'static str {
    match lj::compare(&mu1.inner, &mu2.inner).verdict {
        Verdict::FirstEasier => "first_easier",
        Verdict::SecondEasier => "second_easier",
        Verdict::Equal => "equal",
        Verdict::Incomparable => "incomparable",
    }
}

fn model(act: &str, phi: f64, psi: f64, gamma: f64, sigma_eps2: f64) -> PyResult<ModelConfig> {
    Ok(ModelConfig::new(phi, psi, gamma, sigma_eps2, activation(act)?))
}

#[pyfunction]
#[pyo3(signature = (mu, activation, phi, psi, gamma, sigma_eps2 = 0.0))]
fn solve<'py>(
    py: Python<'py>,
    mu: &PyLjsd,
    activation: &str,
    phi: f64,
    psi: f64,
    gamma: f64,
    sigma_eps2: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let c = model(activation, phi, psi, gamma, sigma_eps2)?;
    let st = theory::solve_self_consistent(&mu.inner, &c).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("x", st.x)?;
    d.set_item("tau", st.tau)?;
    d.set_item("tau_bar", st.tau_bar)?;
    d.set_item("dx_dgamma", st.dx_dgamma)?;
    d.set_item("residual", st.residual)?;
    d.set_item("iterations", st.iterations)?;
    d.set_item("regime", format!("{:?}", st.regime).to_lowercase())?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (mu, activation, phi, psi, gamma, sigma_eps2 = 0.0))]
fn predict<'py>(
    py: Python<'py>,
    mu: &PyLjsd,
    activation: &str,
    phi: f64,
    psi: f64,
    gamma: f64,
    sigma_eps2: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let c = model(activation, phi, psi, gamma, sigma_eps2)?;
    let p = theory::predict(&mu.inner, &c).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("bias", p.bias)?;
    d.set_item("variance", p.variance)?;
    d.set_item("error", p.error)?;
    d.set_item("xi", p.xi)?;
    d.set_item("x", p.state.x)?;
    Ok(d)
}

/// Returns (gamma_opt, error_at_opt, at_boundary).
#[pyfunction]
#[pyo3(signature = (mu, activation, phi, psi, sigma_eps2 = 0.0, target = "shifted", domain = None))]
fn optimal_gamma(
    mu: &PyLjsd,
    activation: &str,
    phi: f64,
    psi: f64,
    sigma_eps2: f64,
    target: &str,
    domain: Option<(f64, f64)>,
) -> PyResult<(f64, f64, bool)> {
    let target = match target {
        "shifted" => TuneTarget::Shifted,
        "unshifted" => TuneTarget::Unshifted,
        other => return Err(PyValueError::new_err(format!("unknown target `{other}`"))),
    };
    let c = model(activation, phi, psi, 1.0, sigma_eps2)?;
    let dom = domain.unwrap_or_else(theory::default_gamma_domain);
    let o = theory::optimal_gamma(&mu.inner, &c, target, dom).map_err(py_err)?;
    Ok((o.gamma_opt, o.error_at_opt, o.at_boundary))
}

#[pyfunction]
#[pyo3(signature = (
    mu, activation, n0, phi, ratio, gamma, sigma_eps2 = 0.0,
    trials = 50, replicates = 4, n_test = 200, seed = 0, backend = "nonlinear"
))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    mu: &PyLjsd,
    activation: &str,
    n0: usize,
    phi: f64,
    ratio: f64,
    gamma: f64,
    sigma_eps2: f64,
    trials: usize,
    replicates: usize,
    n_test: usize,
    seed: u64,
    backend: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let mut c = SimConfig::from_ratios(n0, phi, ratio, gamma, sigma_eps2, self::activation(activation)?).map_err(py_err)?;
    c.trials = trials;
    c.replicates = replicates;
    c.n_test = n_test;
    c.seed = seed;
    c.backend = backend.parse::<Backend>().map_err(py_err)?;
    let cov = simulator::realize_cov(&mu.inner, n0).map_err(py_err)?;
    let est = py
        .detach(|| if replicates >= 2 { simulator::run_bias_variance(&cov, &c) } else { simulator::run_error(&cov, &c) })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("error", est.error_mean)?;
    d.set_item("error_se", est.error_se)?;
    d.set_item("bias", est.bias_mean)?;
    d.set_item("bias_se", est.bias_se)?;
    d.set_item("variance", est.variance_mean)?;
    d.set_item("variance_se", est.variance_se)?;
    d.set_item("trials", est.trials)?;
    Ok(d)
}

/// Theory-vs-simulation summary of a sweep CSV: (compared, max |z|, max rel, exceeding).
#[pyfunction]
#[pyo3(signature = (path, max_z = 3.0, max_rel = 0.05))]
fn compare_csv(path: &str, max_z: f64, max_rel: f64) -> PyResult<(usize, f64, f64, usize)> {
    let file = std::fs::File::open(path).map_err(|e| py_err(e.into()))?;
    let rows = read_rows(file).map_err(py_err)?;
    let r = compare_report(&rows, max_z, max_rel).map_err(py_err)?;
    Ok((r.compared, r.max_abs_z, r.max_rel, r.exceeding))
}

#[pymodule]
#[pyo3(name = "shiftlab")]
fn shiftlab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLjsd>()?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(compare_csv, m)?)?;
    Ok(())
}
