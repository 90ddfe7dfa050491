//! Python bindings for `degschro`.

use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use degschro::bessel::{self, OracleForcing};
use degschro::diffusive::{build_xi_quadrature, kernel_check as kcheck, DEFAULT_N_XI, DEFAULT_XI_MAX, DEFAULT_XI_MIN};
use degschro::evolution::{self, InitialPreset};
use degschro::resolvent::{self, Regime};
use degschro::spatial::default_grade;
use degschro::{assemble_operator, build_x_grid, Error, ProblemSpec, SystemOperator, Variant};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::SpectralCollision { .. } | Error::NearSingular(_) => PyArithmeticError::new_err(e.to_string()),
        e if e.is_numerical() => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn parse_variant(s: &str) -> Result<Variant, Error> {
    match s {
        "P" | "p" => Ok(Variant::P),
        "Pprime" | "pprime" | "P'" => Ok(Variant::Pprime),
        other => Err(Error::Configuration(format!("unknown problem `{other}`, expected P or Pprime"))),
    }
}

fn parse_regime(s: &str) -> Result<Regime, Error> {
    match s {
        "low" => Ok(Regime::NearZero),
        "high" => Ok(Regime::HighFrequency),
        other => Err(Error::Configuration(format!("unknown regime `{other}`, expected low or high"))),
    }
}

fn parse_preset(s: &str) -> Result<InitialPreset, Error> {
    match s {
        "smooth-bump" => Ok(InitialPreset::SmoothBump),
        "lowest-mode" => Ok(InitialPreset::LowestMode),
        "zero" => Ok(InitialPreset::Zero),
        other => Err(Error::Configuration(format!("unknown initial state `{other}`"))),
    }
}

fn build(problem: &str, alpha: f64, beta: f64, rho: f64, nx: usize, nxi: usize, grade: Option<f64>) -> Result<SystemOperator, Error> {
    let spec = ProblemSpec::power_law(parse_variant(problem)?, alpha, beta, rho)?;
    let g = grade.unwrap_or_else(|| default_grade(&spec));
    let xi = build_xi_quadrature(beta, nxi, DEFAULT_XI_MIN, DEFAULT_XI_MAX)?;
    assemble_operator(&spec, &build_x_grid(nx, g)?, &xi)
}

/// J_nu(z) by power series, |z| <= 20.
#[pyfunction]
fn bessel_j(nu: f64, z: Complex64) -> PyResult<Complex64> {
    bessel::bessel_j(nu, z).map_err(py_err)
}

/// Closed-form int_0^1 theta_+^2 dx.
#[pyfunction]
fn theta_norm_sq(r: Complex64, alpha: f64) -> PyResult<Complex64> {
    bessel::theta_norm_sq(r, alpha).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (beta, rho=1.0, tau_min=1e-2, tau_max=1e2, n_tau=41, n_xi=DEFAULT_N_XI))]
fn kernel_check<'py>(
    py: Python<'py>,
    beta: f64,
    rho: f64,
    tau_min: f64,
    tau_max: f64,
    n_tau: usize,
    n_xi: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let g = build_xi_quadrature(beta, n_xi, DEFAULT_XI_MIN, DEFAULT_XI_MAX).map_err(py_err)?;
    let c = kcheck(&g, rho, tau_min, tau_max, n_tau).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("tau", c.tau)?;
    d.set_item("quadrature", c.quadrature_value)?;
    d.set_item("exact", c.exact_value)?;
    d.set_item("resolved", c.resolved)?;
    d.set_item("max_rel_error", c.max_rel_error)?;
    Ok(d)
}

/// ||(i lambda - A_h)^-1|| in the energy norm.
#[pyfunction]
#[pyo3(signature = (problem, alpha, beta, lam, rho=1.0, nx=400, nxi=DEFAULT_N_XI, grade=None))]
#[allow(clippy::too_many_arguments)]
fn resolvent_norm(
    problem: &str,
    alpha: f64,
    beta: f64,
    lam: f64,
    rho: f64,
    nx: usize,
    nxi: usize,
    grade: Option<f64>,
) -> PyResult<f64> {
    let op = build(problem, alpha, beta, rho, nx, nxi, grade).map_err(py_err)?;
    resolvent::resolvent_norm(&op, lam).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (problem, alpha, beta, regime="low", lambdas=None, rho=1.0, nx=400, nxi=DEFAULT_N_XI, grade=None))]
#[allow(clippy::too_many_arguments)]
fn scan<'py>(
    py: Python<'py>,
    problem: &str,
    alpha: f64,
    beta: f64,
    regime: &str,
    lambdas: Option<Vec<f64>>,
    rho: f64,
    nx: usize,
    nxi: usize,
    grade: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let regime = parse_regime(regime).map_err(py_err)?;
    let op = build(problem, alpha, beta, rho, nx, nxi, grade).map_err(py_err)?;
    let lambdas = lambdas.unwrap_or_else(|| resolvent::default_lambdas(regime));
    let s = py
        .detach(|| resolvent::scan_resolvent(&op, &lambdas, regime))
        .map_err(py_err)?;
    let p = resolvent::theoretical_exponents(op.spec());
    let d = PyDict::new(py);
    d.set_item("lambda", s.lambda)?;
    d.set_item("norm", s.norm)?;
    d.set_item("exponent", s.fit.exponent)?;
    d.set_item("r_squared", s.fit.r_squared)?;
    d.set_item("window", s.fit.window)?;
    d.set_item("theta_theoretical", p.theta)?;
    d.set_item("upsilon_theoretical", p.upsilon)?;
    d.set_item("decay_exponent_predicted", p.decay_exponent)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (problem, alpha, beta, t_final=200.0, dt=0.005, y0="smooth-bump", rho=1.0, nx=400, nxi=DEFAULT_N_XI, grade=None, fit_window=None))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    problem: &str,
    alpha: f64,
    beta: f64,
    t_final: f64,
    dt: f64,
    y0: &str,
    rho: f64,
    nx: usize,
    nxi: usize,
    grade: Option<f64>,
    fit_window: Option<(f64, f64)>,
) -> PyResult<Bound<'py, PyDict>> {
    let preset = parse_preset(y0).map_err(py_err)?;
    let op = build(problem, alpha, beta, rho, nx, nxi, grade).map_err(py_err)?;
    let trace = py
        .detach(|| {
            let s = evolution::prepare_initial_state(&op, preset)?;
            evolution::simulate(&op, &s, t_final, dt)
        })
        .map_err(py_err)?;
    let window = fit_window.map_or_else(|| evolution::default_fit_window(t_final), |(a, b)| [a, b]);
    let d = PyDict::new(py);
    if trace.e.iter().any(|e| *e > 0.0) {
        let f = evolution::fit_decay_exponent(&trace, window).map_err(py_err)?;
        d.set_item("exponent", f.exponent)?;
        d.set_item("r_squared", f.r_squared)?;
    }
    d.set_item("t", trace.t)?;
    d.set_item("E", trace.e)?;
    d.set_item("D", trace.d)?;
    d.set_item("flux", trace.flux)?;
    Ok(d)
}

/// Predicted resolvent and decay exponents.
#[pyfunction]
#[pyo3(signature = (problem, alpha, beta, rho=1.0))]
fn theoretical_exponents<'py>(py: Python<'py>, problem: &str, alpha: f64, beta: f64, rho: f64) -> PyResult<Bound<'py, PyDict>> {
    let spec = parse_variant(problem)
        .and_then(|v| ProblemSpec::power_law(v, alpha, beta, rho))
        .map_err(py_err)?;
    let p = resolvent::theoretical_exponents(&spec);
    let d = PyDict::new(py);
    d.set_item("theta", p.theta)?;
    d.set_item("upsilon", p.upsilon)?;
    d.set_item("varsigma", p.varsigma)?;
    d.set_item("decay_exponent", p.decay_exponent)?;
    d.set_item("upsilon_provenance", p.upsilon_provenance)?;
    Ok(d)
}

/// Discrete vs analytic resolvent errors, one `(nx, l2, linf)` per level.
#[pyfunction]
#[pyo3(signature = (alpha, beta, lam, nx_list, problem="P", rho=1.0, grade=3.0))]
fn oracle_compare(
    py: Python<'_>,
    alpha: f64,
    beta: f64,
    lam: f64,
    nx_list: Vec<usize>,
    problem: &str,
    rho: f64,
    grade: f64,
) -> PyResult<Vec<(usize, f64, f64)>> {
    let spec = parse_variant(problem)
        .and_then(|v| ProblemSpec::power_law(v, alpha, beta, rho))
        .map_err(py_err)?;
    let xi = build_xi_quadrature(beta, DEFAULT_N_XI, DEFAULT_XI_MIN, DEFAULT_XI_MAX).map_err(py_err)?;
    let rep = py
        .detach(|| bessel::oracle_compare(&spec, &xi, lam, &nx_list, grade, OracleForcing::UnitBoundary))
        .map_err(py_err)?;
    Ok(rep.rows.iter().map(|r| (r.nx, r.l2_error, r.linf_error)).collect())
}

#[pymodule]
fn pydegschro(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(bessel_j, m)?)?;
    m.add_function(wrap_pyfunction!(theta_norm_sq, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_check, m)?)?;
    m.add_function(wrap_pyfunction!(resolvent_norm, m)?)?;
    m.add_function(wrap_pyfunction!(scan, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(theoretical_exponents, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_compare, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parsing() {
        assert_eq!(parse_variant("P").unwrap(), Variant::P);
        assert_eq!(parse_variant("Pprime").unwrap(), Variant::Pprime);
        assert!(parse_variant("Q").is_err());
        assert_eq!(parse_regime("high").unwrap(), Regime::HighFrequency);
        assert!(parse_preset("nope").is_err());
    }

    #[test]
    fn operator_defaults() {
        let op = build("Pprime", 1.5, 0.5, 1.0, 32, 20, None).unwrap();
        assert_eq!(op.xgrid().grade(), 2.0);
        assert_eq!(op.dim(), 52);
        assert!(build("P", 1.5, 0.5, 1.0, 32, 20, None).is_err());
    }
}
