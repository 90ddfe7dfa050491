//! Closed-form resolvent solutions for `kappa = x^alpha` in terms of
//! Bessel functions of the first kind, evaluated by their power series.
//!
//! With `mu = i sqrt(lambda)` and `nu = (1 - alpha)/(2 - alpha)` the
//! homogeneous resolvent equation `(x^alpha y')' + mu^2 y = 0` has the
//! solutions `theta_(+/-)(x) = x^((1-alpha)/2) J_(+/-nu)(r x^((2-alpha)/2))`,
//! `r = 2 mu / (2 - alpha)`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::diffusive::{fmt_f64, XiGrid};
use crate::error::{Error, Result};
use crate::fit::fit_power_law;
use crate::model::{nu_alpha, zeta, ProblemSpec, StateVector, Variant};
use crate::spatial::{assemble_operator, build_x_grid, SystemOperator};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Largest argument modulus accepted by the series evaluator.
pub const MAX_ARG: f64 = 20.0;
const SERIES_CAP: usize = 200;

/// `J_nu(z)` for `nu > -1`, `|z| <= 20`.
pub fn bessel_j(nu: f64, z: Complex64) -> Result<Complex64> {
    if !(nu > -1.0) {
        return Err(Error::domain("nu", nu, "> -1"));
    }
    series(nu, z)
}

/// Power series with the principal branch of `(z/2)^nu`; any order whose
/// `Gamma(nu + m + 1)` has no pole is accepted.
fn series(nu: f64, z: Complex64) -> Result<Complex64> {
    if !(z.norm() <= MAX_ARG) {
        return Err(Error::domain("|z|", z.norm(), "<= 20 (series range)"));
    }
    if z == ZERO {
        return match nu {
            n if n > 0.0 => Ok(ZERO),
            n if n == 0.0 => Ok(Complex64::new(1.0, 0.0)),
            _ => Err(Error::domain("z", 0.0, "nonzero for negative order")),
        };
    }
    let half = z * 0.5;
    let q = -(half * half);
    let mut term = half.powf(nu) / gamma(nu + 1.0);
    let mut sum = term;
    for m in 1..SERIES_CAP {
        term *= q / (m as f64 * (nu + m as f64));
        sum += term;
        if term.norm() < 1e-17 * sum.norm() {
            break;
        }
    }
    Ok(sum)
}

/// `J_nu'(z) = (nu / z) J_nu(z) - J_(nu+1)(z)`.
pub fn bessel_j_prime(nu: f64, z: Complex64) -> Result<Complex64> {
    if z == ZERO {
        return Err(Error::domain("z", 0.0, "nonzero"));
    }
    Ok(nu / z * series(nu, z)? - series(nu + 1.0, z)?)
}

/// Leading small-argument coefficient of `J_nu`: `2^-nu / Gamma(1 + nu)`.
pub fn c_plus(nu: f64) -> f64 {
    2f64.powf(-nu) / gamma(1.0 + nu)
}

/// Leading small-argument coefficient of `J_-nu`: `2^nu / Gamma(1 - nu)`.
pub fn c_minus(nu: f64) -> f64 {
    2f64.powf(nu) / gamma(1.0 - nu)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::domain("alpha", alpha, "in [0, 1)"))
    }
}

/// `r = 2 mu / (2 - alpha)`.
pub fn r_of(mu: Complex64, alpha: f64) -> Complex64 {
    2.0 * mu / (2.0 - alpha)
}

/// `(theta_+(x), theta_-(x))`.
pub fn theta_pm(x: f64, mu: Complex64, alpha: f64) -> Result<(Complex64, Complex64)> {
    check_alpha(alpha)?;
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::domain("x", x, "in (0, 1]"));
    }
    let nu = nu_alpha(alpha);
    let s = r_of(mu, alpha) * x.powf(0.5 * (2.0 - alpha));
    let pre = x.powf(0.5 * (1.0 - alpha));
    Ok((pre * series(nu, s)?, pre * series(-nu, s)?))
}

/// `(theta_+'(x), theta_-'(x))`.
pub fn theta_pm_prime(x: f64, mu: Complex64, alpha: f64) -> Result<(Complex64, Complex64)> {
    check_alpha(alpha)?;
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::domain("x", x, "in (0, 1]"));
    }
    let nu = nu_alpha(alpha);
    let (a, b) = (0.5 * (1.0 - alpha), 0.5 * (2.0 - alpha));
    let r = r_of(mu, alpha);
    let s = r * x.powf(b);
    let ds = r * b * x.powf(b - 1.0);
    let pre = x.powf(a);
    let dpre = a * x.powf(a - 1.0);
    let d = |o: f64| -> Result<Complex64> {
        let j = series(o, s)?;
        let jp = o / s * j - series(o + 1.0, s)?;
        Ok(dpre * j + pre * jp * ds)
    };
    Ok((d(nu)?, d(-nu)?))
}

/// `theta_+'(1) = (1 - alpha) J_nu(r) - mu J_(nu+1)(r)` and
/// `theta_-'(1) = -mu J_(1-nu)(r)`.
pub fn theta_prime_at_one(mu: Complex64, alpha: f64) -> Result<(Complex64, Complex64)> {
    check_alpha(alpha)?;
    let nu = nu_alpha(alpha);
    let r = r_of(mu, alpha);
    Ok((
        (1.0 - alpha) * series(nu, r)? - mu * series(nu + 1.0, r)?,
        -mu * series(1.0 - nu, r)?,
    ))
}

/// `d+ = c+ r^nu`, `d- = c- r^-nu`: the limits of `x^alpha theta_+'` and
/// `theta_-` at x = 0 up to the factor `1 - alpha` in the first.
pub fn d_pm(mu: Complex64, alpha: f64) -> (Complex64, Complex64) {
    let nu = nu_alpha(alpha);
    let r = r_of(mu, alpha);
    (c_plus(nu) * r.powf(nu), c_minus(nu) * r.powf(-nu))
}

/// `lambda` from `mu = i sqrt(lambda)`.
fn lambda_of(mu: Complex64) -> Complex64 {
    -(mu * mu)
}

/// Boundary impedance `i rho (i lambda)^(beta - 1)`, principal branch.
fn impedance(lambda: Complex64, beta: f64, rho: f64) -> Complex64 {
    I * rho * (I * lambda).powf(beta - 1.0)
}

/// `D = (1-alpha) d+ theta_-'(1) - i rho theta_+'(1) (i lambda)^(beta-1) d-`.
pub fn determinant_p(mu: Complex64, alpha: f64, beta: f64, rho: f64) -> Result<Complex64> {
    let (tp, tm) = theta_prime_at_one(mu, alpha)?;
    let (dp, dm) = d_pm(mu, alpha);
    Ok((1.0 - alpha) * dp * tm - impedance(lambda_of(mu), beta, rho) * tp * dm)
}

/// `theta_+'(1) - i rho (i lambda)^(beta-1) theta_+(1)`.
pub fn bracket_pprime(mu: Complex64, alpha: f64, beta: f64, rho: f64) -> Result<Complex64> {
    let (tp, _) = theta_prime_at_one(mu, alpha)?;
    let (t1, _) = theta_pm(1.0, mu, alpha)?;
    Ok(tp - impedance(lambda_of(mu), beta, rho) * t1)
}

/// `(1/(2-alpha)) r^-2 [(r J_nu(r))^2 + (r J_(nu+1)(r))^2 - 2 nu r J_nu(r) J_(nu+1)(r)]`.
///
/// This equals `int_0^1 theta_+(x)^2 dx` (no conjugation), hence the squared
/// L2 norm of theta_+ when r is real.
pub fn theta_norm_sq(r: Complex64, alpha: f64) -> Result<Complex64> {
    check_alpha(alpha)?;
    if !(r.norm() <= MAX_ARG) {
        return Err(Error::domain("|r|", r.norm(), "<= 20"));
    }
    if r == ZERO {
        return Ok(ZERO);
    }
    let nu = nu_alpha(alpha);
    let (j0, j1) = (series(nu, r)?, series(nu + 1.0, r)?);
    let (a, b) = (r * j0, r * j1);
    Ok((a * a + b * b - 2.0 * nu * r * j0 * j1) / (r * r) / (2.0 - alpha))
}

/// Small-r form printed alongside the norm formula:
/// `(1/(2-alpha)) (c+)^2 r^(2 nu)`.
pub fn theta_norm_sq_asymptote_printed(r: Complex64, alpha: f64) -> Complex64 {
    let nu = nu_alpha(alpha);
    c_plus(nu).powi(2) * r.powf(2.0 * nu) / (2.0 - alpha)
}

/// Small-r limit of [`theta_norm_sq`]: `(c+)^2 r^(2 nu) / (3 - 2 alpha)`.
pub fn theta_norm_sq_asymptote(r: Complex64, alpha: f64) -> Complex64 {
    let nu = nu_alpha(alpha);
    c_plus(nu).powi(2) * r.powf(2.0 * nu) / (3.0 - 2.0 * alpha)
}

/// Analytic resolvent solution sampled on a grid.
#[derive(Clone, Debug, Serialize)]
pub struct AnalyticResolvent {
    pub lambda: f64,
    pub mu: Complex64,
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub c_tilde: Complex64,
    /// Determinant of the constants system (P), or the bracket (P').
    pub d: Complex64,
    pub x: Vec<f64>,
    pub y: Vec<Complex64>,
}

/// Homogeneous solutions and the cumulative variation-of-parameters
/// integrals on a grid.
struct Pieces {
    tp: Vec<Complex64>,
    tm: Vec<Complex64>,
    /// `int_0^x i f1 theta_+` and `int_0^x i f1 theta_-`, trapezoid.
    ip: Vec<Complex64>,
    im: Vec<Complex64>,
    k: f64,
}

fn pieces(mu: Complex64, alpha: f64, x: &[f64], f1: &[Complex64]) -> Result<Pieces> {
    if x.len() != f1.len() {
        return Err(Error::Shape {
            what: "forcing samples vs grid",
            expected: x.len(),
            got: f1.len(),
        });
    }
    if x.is_empty() || x.windows(2).any(|p| p[1] <= p[0]) || x[0] <= 0.0 || *x.last().unwrap() != 1.0 {
        return Err(Error::UnsupportedGrid(
            "oracle grid must increase strictly in (0, 1] and end at 1".into(),
        ));
    }
    let nu = nu_alpha(alpha);
    let n = x.len();
    let (mut tp, mut tm) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for &xi in x {
        let (p, m) = theta_pm(xi, mu, alpha)?;
        tp.push(p);
        tm.push(m);
    }
    let (_, dm) = d_pm(mu, alpha);
    // X = 0 end: theta_+ = 0, theta_- = d-, f1 extended by its first value
    let (mut ap, mut am) = (ZERO, ZERO);
    let (mut prev_x, mut prev_p, mut prev_m) = (0.0, ZERO, I * f1[0] * dm);
    let (mut ip, mut im) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let (gp, gm) = (I * f1[i] * tp[i], I * f1[i] * tm[i]);
        let h = x[i] - prev_x;
        ap += 0.5 * h * (prev_p + gp);
        am += 0.5 * h * (prev_m + gm);
        ip.push(ap);
        im.push(am);
        prev_x = x[i];
        prev_p = gp;
        prev_m = gm;
    }
    Ok(Pieces {
        tp,
        tm,
        ip,
        im,
        k: PI / ((2.0 - alpha) * (nu * PI).sin()),
    })
}

fn check_lambda(lambda: f64) -> Result<Complex64> {
    if lambda == 0.0 {
        return Err(Error::SpectralCollision {
            shift: "0".into(),
            detail: "lambda = 0 lies in the spectrum".into(),
        });
    }
    if !lambda.is_finite() {
        return Err(Error::domain("lambda", lambda, "finite"));
    }
    // principal root; lambda < 0 gives a real mu
    Ok(I * Complex64::new(lambda, 0.0).sqrt())
}

/// Variant P (`x^alpha`, damping at x = 0, `y_x(1) = 0`).
///
/// `c` is the forcing constant `-i zeta int eta f2 / (i lambda + xi^2)`.
pub fn analytic_resolvent_p(
    lambda: f64,
    x: &[f64],
    f1: &[Complex64],
    c: Complex64,
    alpha: f64,
    beta: f64,
    rho: f64,
) -> Result<AnalyticResolvent> {
    check_alpha(alpha)?;
    let mu = check_lambda(lambda)?;
    let pc = pieces(mu, alpha, x, f1)?;
    let n = x.len();
    let (tp1, tm1) = theta_prime_at_one(mu, alpha)?;
    let (dp, dm) = d_pm(mu, alpha);
    let z = impedance(Complex64::new(lambda, 0.0), beta, rho);
    let c_tilde = pc.k * (pc.ip[n - 1] * tm1 - tp1 * pc.im[n - 1]);
    let d = (1.0 - alpha) * dp * tm1 - z * tp1 * dm;
    if d.norm() < 1e-14 {
        return Err(Error::NearSingular(d.norm()));
    }
    let a = (tm1 * c - z * dm * c_tilde) / d;
    let b = (-tp1 * c + (1.0 - alpha) * dp * c_tilde) / d;
    let y = (0..n)
        .map(|i| a * pc.tp[i] + b * pc.tm[i] - pc.k * (pc.ip[i] * pc.tm[i] - pc.tp[i] * pc.im[i]))
        .collect();
    Ok(AnalyticResolvent {
        lambda,
        mu,
        a,
        b,
        c,
        c_tilde,
        d,
        x: x.to_vec(),
        y,
    })
}

/// Variant P' with `kappa = x^alpha`, `0 <= alpha < 1`: `y(0) = 0` forces
/// `B = 0` and the damping at x = 1 fixes `A`.
pub fn analytic_case_pprime_poweralpha(
    lambda: f64,
    x: &[f64],
    f1: &[Complex64],
    c: Complex64,
    alpha: f64,
    beta: f64,
    rho: f64,
) -> Result<AnalyticResolvent> {
    check_alpha(alpha)?;
    let mu = check_lambda(lambda)?;
    let pc = pieces(mu, alpha, x, f1)?;
    let n = x.len();
    let (tp1, tm1) = theta_prime_at_one(mu, alpha)?;
    let (t1p, t1m) = (pc.tp[n - 1], pc.tm[n - 1]);
    let z = impedance(Complex64::new(lambda, 0.0), beta, rho);
    // particular solution and its slope at x = 1
    let yp1 = -pc.k * (pc.ip[n - 1] * t1m - t1p * pc.im[n - 1]);
    let dyp1 = -pc.k * (pc.ip[n - 1] * tm1 - tp1 * pc.im[n - 1]);
    let bracket = tp1 - z * t1p;
    if bracket.norm() < 1e-14 {
        return Err(Error::NearSingular(bracket.norm()));
    }
    let a = (-c - dyp1 + z * yp1) / bracket;
    let y = (0..n)
        .map(|i| a * pc.tp[i] - pc.k * (pc.ip[i] * pc.tm[i] - pc.tp[i] * pc.im[i]))
        .collect();
    Ok(AnalyticResolvent {
        lambda,
        mu,
        a,
        b: ZERO,
        c,
        c_tilde: -dyp1,
        d: bracket,
        x: x.to_vec(),
        y,
    })
}

/// Forcing used in discrete-vs-analytic comparisons.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleForcing {
    /// `f1 = 0` and `f2 = s eta` scaled so that `C = 1`.
    UnitBoundary,
    /// `f1 = 0`, `f2 = 0`.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OracleRow {
    pub lambda: f64,
    pub l2_error: f64,
    pub linf_error: f64,
    pub nx: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub rows: Vec<OracleRow>,
    /// Least-squares slope of `-log(l2_error)` against `log(nx)`; absent
    /// when an error vanishes.
    pub observed_order: Option<f64>,
    pub strictly_decreasing: bool,
}

impl OracleReport {
    /// CSV with header `lambda,l2_error,linf_error,nx`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["lambda", "l2_error", "linf_error", "nx"])?;
        for r in &self.rows {
            wtr.write_record([
                fmt_f64(r.lambda),
                fmt_f64(r.l2_error),
                fmt_f64(r.linf_error),
                r.nx.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Solves `(i lambda - A_h) Y = F` and compares `y` with the analytic
/// solution at the nodes, in the h-weighted L2 and max norms.
pub fn compare_with_discrete(op: &SystemOperator, lambda: f64, forcing: OracleForcing) -> Result<OracleRow> {
    let spec = op.spec();
    let alpha = spec
        .kappa()
        .power_law_exponent()
        .filter(|a| *a < 1.0)
        .ok_or_else(|| Error::Configuration("the oracle needs kappa = x^alpha with alpha < 1".into()))?;
    let xi = op.xigrid();
    let mut f = StateVector::zeros(op.nx(), op.nxi());
    let c = match forcing {
        OracleForcing::Zero => ZERO,
        OracleForcing::UnitBoundary => {
            let g: Complex64 = xi
                .weights()
                .iter()
                .zip(xi.eta())
                .zip(xi.nodes())
                .map(|((w, e), x)| w * e * e / (I * lambda + x * x))
                .sum();
            let s = 1.0 / (-I * spec.zeta() * g);
            f.psi = xi.eta().iter().map(|e| s * e).collect();
            Complex64::new(1.0, 0.0)
        }
    };
    let analytic = match spec.variant() {
        Variant::P => analytic_resolvent_p(lambda, op.xgrid().nodes(), &f.y, c, alpha, spec.beta(), spec.rho())?,
        Variant::Pprime => {
            analytic_case_pprime_poweralpha(lambda, op.xgrid().nodes(), &f.y, c, alpha, spec.beta(), spec.rho())?
        }
    };
    let solve = op.factor_shifted(I * lambda, false)?;
    let yd = solve.solve(&f)?.y;
    let (mut l2, mut linf) = (0.0f64, 0.0f64);
    for ((a, b), h) in yd.iter().zip(&analytic.y).zip(op.xgrid().widths()) {
        let e = (a - b).norm();
        l2 += h * e * e;
        linf = linf.max(e);
    }
    Ok(OracleRow {
        lambda,
        l2_error: l2.sqrt(),
        linf_error: linf,
        nx: op.nx(),
    })
}

/// Refinement study over `nx_list` with a shared xi grid.
pub fn oracle_compare(
    spec: &ProblemSpec,
    xigrid: &XiGrid,
    lambda: f64,
    nx_list: &[usize],
    grade: f64,
    forcing: OracleForcing,
) -> Result<OracleReport> {
    if nx_list.is_empty() {
        return Err(Error::Configuration("empty refinement list".into()));
    }
    // fail on the spectral point before assembling anything
    check_lambda(lambda)?;
    let mut rows = Vec::with_capacity(nx_list.len());
    for &nx in nx_list {
        let op = assemble_operator(spec, &build_x_grid(nx, grade)?, xigrid)?;
        rows.push(compare_with_discrete(&op, lambda, forcing)?);
    }
    let strictly_decreasing = rows.windows(2).all(|p| p[1].l2_error < p[0].l2_error);
    let observed_order = if rows.len() >= 2 && rows.iter().all(|r| r.l2_error > 0.0) {
        let n: Vec<f64> = rows.iter().map(|r| r.nx as f64).collect();
        let e: Vec<f64> = rows.iter().map(|r| r.l2_error).collect();
        Some(-fit_power_law(&n, &e)?.slope)
    } else {
        None
    };
    Ok(OracleReport {
        rows,
        observed_order,
        strictly_decreasing,
    })
}

/// `-i zeta sum_k w_k eta_k f2_k / (i lambda + xi_k^2)` on a quadrature grid.
pub fn forcing_constant(xigrid: &XiGrid, f2: &[Complex64], lambda: f64, rho: f64) -> Complex64 {
    let z = zeta(xigrid.beta(), rho);
    -I * z
        * xigrid
            .weights()
            .iter()
            .zip(xigrid.eta())
            .zip(xigrid.nodes())
            .zip(f2)
            .map(|(((w, e), x), f)| w * e * f / (I * lambda + x * x))
            .sum::<Complex64>()
}
