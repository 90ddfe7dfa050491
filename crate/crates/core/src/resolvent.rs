//! Resolvent norms `||(i lambda - A)^{-1}||_H`, power-law scans and the
//! predicted decay rates.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bessel;
use crate::error::{Error, Result};
use crate::fit::{fit_power_law, log_space, stable_slope_window};
use crate::model::{Kappa, ProblemSpec, Variant};
use crate::spatial::{ShiftedSolve, SystemOperator};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Norms above this are reported as a spectral collision.
pub const COLLISION_NORM: f64 = 1e10;
const LANCZOS_TOL: f64 = 1e-10;
const LANCZOS_CAP: usize = 200;
const LANCZOS_RESTARTS: usize = 4;

/// Solver for `(sigma - A) x = r` or `(sigma - A^*) x = r`.
pub trait ShiftSolver {
    fn solve(&self, r: &[Complex64]) -> Vec<Complex64>;
}

/// What the resolvent machinery needs from a generator: shifted solves,
/// products and the diagonal inner-product weights.
pub trait ResolventOperator: Sync {
    type Solver<'a>: ShiftSolver
    where
        Self: 'a;

    fn dim(&self) -> usize;
    fn weights(&self) -> &[f64];
    fn factor(&self, sigma: Complex64, adjoint: bool) -> Result<Self::Solver<'_>>;
    fn apply(&self, v: &[Complex64]) -> Vec<Complex64>;
}

impl ShiftSolver for ShiftedSolve<'_> {
    fn solve(&self, r: &[Complex64]) -> Vec<Complex64> {
        self.solve_flat(r)
    }
}

impl ResolventOperator for SystemOperator {
    type Solver<'a> = ShiftedSolve<'a>;

    fn dim(&self) -> usize {
        SystemOperator::dim(self)
    }
    fn weights(&self) -> &[f64] {
        SystemOperator::weights(self)
    }
    fn factor(&self, sigma: Complex64, adjoint: bool) -> Result<ShiftedSolve<'_>> {
        self.factor_shifted(sigma, adjoint)
    }
    fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.apply_flat(v, false)
    }
}

/// Diagonal generator with unit weights, for checking the machinery
/// against closed forms.
#[derive(Clone, Debug)]
pub struct DiagonalStub {
    diag: Vec<Complex64>,
    weights: Vec<f64>,
}

impl DiagonalStub {
    pub fn new(diag: Vec<Complex64>) -> Self {
        let weights = vec![1.0; diag.len()];
        Self { diag, weights }
    }

    /// `A = -I` on a space of dimension `n`.
    pub fn minus_identity(n: usize) -> Self {
        Self::new(vec![Complex64::new(-1.0, 0.0); n])
    }

    pub fn diag(&self) -> &[Complex64] {
        &self.diag
    }
}

pub struct DiagonalSolver(Vec<Complex64>);

impl ShiftSolver for DiagonalSolver {
    fn solve(&self, r: &[Complex64]) -> Vec<Complex64> {
        r.iter().zip(&self.0).map(|(a, b)| a * b).collect()
    }
}

impl ResolventOperator for DiagonalStub {
    type Solver<'a> = DiagonalSolver;

    fn dim(&self) -> usize {
        self.diag.len()
    }
    fn weights(&self) -> &[f64] {
        &self.weights
    }
    fn factor(&self, sigma: Complex64, adjoint: bool) -> Result<DiagonalSolver> {
        let inv = self
            .diag
            .iter()
            .map(|d| {
                let d = if adjoint { d.conj() } else { *d };
                let m = sigma - d;
                if m.norm() == 0.0 {
                    Err(Error::SpectralCollision {
                        shift: format!("{sigma}"),
                        detail: format!("exact eigenvalue {d}"),
                    })
                } else {
                    Ok(1.0 / m)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DiagonalSolver(inv))
    }
    fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        v.iter().zip(&self.diag).map(|(a, b)| a * b).collect()
    }
}

fn ip(w: &[f64], a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).zip(w).map(|((x, y), wt)| x * y.conj() * wt).sum()
}

fn wnorm(w: &[f64], a: &[Complex64]) -> f64 {
    a.iter().zip(w).map(|(x, wt)| wt * x.norm_sqr()).sum::<f64>().sqrt()
}

/// `||(i lambda - A)^{-1}||` in the weighted norm.
///
/// The largest eigenvalue of `M^{-*} M^{-1}`, `M = i lambda - A`, is found by
/// Lanczos with full reorthogonalization in the weighted inner product,
/// started from a seeded random vector. Each step costs one factored solve
/// with `M` and one with `M^*`.
pub fn resolvent_norm<O: ResolventOperator>(op: &O, lambda: f64) -> Result<f64> {
    let sigma = I * lambda;
    let fwd = op.factor(sigma, false)?;
    let bwd = op.factor(sigma.conj(), true)?;
    let w = op.weights();
    let n = op.dim();
    let g = |v: &[Complex64]| bwd.solve(&fwd.solve(v));

    let mut rng = ChaCha8Rng::seed_from_u64(0x7265_736f);
    let mut start: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let mut last = (0.0, Vec::new());
    for _ in 0..=LANCZOS_RESTARTS {
        let (theta, ritz, converged) = lanczos_top(&g, w, &start, n.min(LANCZOS_CAP))?;
        last = (theta, ritz.clone());
        if converged {
            break;
        }
        start = ritz;
    }
    let (theta, ritz) = last;
    if !theta.is_finite() || theta <= 0.0 {
        return Err(Error::Numerical(format!("resolvent Lanczos returned {theta}")));
    }
    let norm = theta.sqrt();
    if norm > COLLISION_NORM {
        // Ritz vector of the smallest singular direction gives an eigenvector
        // estimate x = M^{-1} u
        let x = fwd.solve(&ritz);
        let ax = op.apply(&x);
        let mu = ip(w, &ax, &x) / ip(w, &x, &x);
        return Err(Error::SpectralCollision {
            shift: format!("i*{lambda}"),
            detail: format!("resolvent norm {norm:e}; nearest eigenvalue estimate {mu}"),
        });
    }
    Ok(norm)
}

/// Returns `(top Ritz value, Ritz vector, converged)`.
fn lanczos_top(
    g: &dyn Fn(&[Complex64]) -> Vec<Complex64>,
    w: &[f64],
    start: &[Complex64],
    cap: usize,
) -> Result<(f64, Vec<Complex64>, bool)> {
    let nrm = wnorm(w, start);
    if !(nrm > 0.0) {
        return Err(Error::Numerical("zero Lanczos start vector".into()));
    }
    let mut q: Vec<Vec<Complex64>> = vec![start.iter().map(|v| v / nrm).collect()];
    let (mut alpha, mut beta): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    let mut result = (0.0, q[0].clone(), false);
    for j in 0..cap {
        let mut r = g(&q[j]);
        if r.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numerical("non-finite value in resolvent solve".into()));
        }
        alpha.push(ip(w, &r, &q[j]).re);
        for _ in 0..2 {
            for qi in &q {
                let c = ip(w, &r, qi);
                r.iter_mut().zip(qi).for_each(|(a, b)| *a -= c * b);
            }
        }
        let b = wnorm(w, &r);
        let m = alpha.len();
        let check = m < 30 || m % 5 == 0 || j + 1 == cap || b == 0.0;
        if check {
            let mut t = DMatrix::<f64>::zeros(m, m);
            for i in 0..m {
                t[(i, i)] = alpha[i];
                if i + 1 < m {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let (k, theta) = eig
                .eigenvalues
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
            let s = eig.eigenvectors.column(k);
            let mut ritz = vec![Complex64::new(0.0, 0.0); w.len()];
            for (i, qi) in q.iter().enumerate() {
                ritz.iter_mut().zip(qi).for_each(|(a, b)| *a += b * s[i]);
            }
            let bound = b * s[m - 1].abs();
            let converged = bound <= LANCZOS_TOL * theta.abs() || b <= 1e-14 * theta.abs();
            result = (theta, ritz, converged);
            if converged {
                return Ok(result);
            }
        }
        if b == 0.0 || q.len() == w.len() {
            result.2 = true;
            return Ok(result);
        }
        beta.push(b);
        q.push(r.into_iter().map(|v| v / b).collect());
    }
    Ok(result)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    NearZero,
    HighFrequency,
}

impl Regime {
    /// Default scan window `(lambda_min, lambda_max, points)`.
    pub fn default_window(self) -> (f64, f64, usize) {
        match self {
            Regime::NearZero => (1e-4, 1e-1, 25),
            Regime::HighFrequency => (10.0, 1e3, 25),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanFit {
    /// Log-log slope of the norm against lambda.
    pub exponent: f64,
    pub r_squared: f64,
    /// Inclusive index range of the points used.
    pub window: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventScan {
    pub lambda: Vec<f64>,
    pub norm: Vec<f64>,
    pub regime: Regime,
    pub fit: ScanFit,
}

impl ResolventScan {
    /// CSV with header `lambda,norm`.
    pub fn write_csv<W: std::io::Write>(lambda: &[f64], norm: &[f64], w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["lambda", "norm"])?;
        for (l, n) in lambda.iter().zip(norm) {
            wtr.write_record([crate::diffusive::fmt_f64(*l), crate::diffusive::fmt_f64(*n)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Norms at every lambda, in parallel with input order preserved.
pub fn resolvent_norms<O: ResolventOperator>(op: &O, lambdas: &[f64]) -> Result<Vec<f64>> {
    lambdas.par_iter().map(|&l| resolvent_norm(op, l)).collect()
}

/// Fits the norm curve on its automatically chosen stable-slope window.
pub fn fit_scan(lambdas: &[f64], norms: &[f64], regime: Regime) -> Result<ScanFit> {
    let (a, b) = stable_slope_window(lambdas, norms, 8, regime == Regime::NearZero)?;
    let f = fit_power_law(&lambdas[a..=b], &norms[a..=b])?;
    Ok(ScanFit {
        exponent: f.slope,
        r_squared: f.r_squared,
        window: [a, b],
    })
}

pub fn scan_resolvent<O: ResolventOperator>(op: &O, lambdas: &[f64], regime: Regime) -> Result<ResolventScan> {
    if lambdas.iter().any(|l| !(*l > 0.0)) || lambdas.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Configuration(
            "scan frequencies must be positive and strictly increasing".into(),
        ));
    }
    let norm = resolvent_norms(op, lambdas)?;
    let fit = fit_scan(lambdas, &norm, regime)?;
    Ok(ResolventScan {
        lambda: lambdas.to_vec(),
        norm,
        regime,
        fit,
    })
}

/// Log-spaced scan over the regime's default window.
pub fn default_lambdas(regime: Regime) -> Vec<f64> {
    let (a, b, n) = regime.default_window();
    log_space(a, b, n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentPrediction {
    /// Growth exponent of the resolvent norm as lambda -> 0.
    pub theta: f64,
    /// Growth exponent as |lambda| -> infinity.
    pub upsilon: f64,
    pub varsigma: f64,
    /// Predicted energy decay `t^-decay_exponent`.
    pub decay_exponent: f64,
    /// Set when upsilon is not established for this configuration.
    pub upsilon_provenance: Option<String>,
}

pub fn theoretical_exponents(spec: &ProblemSpec) -> ExponentPrediction {
    let beta = spec.beta();
    let (theta, upsilon, prov) = match (spec.variant(), spec.kappa()) {
        (Variant::P, Kappa::PowerLaw { alpha }) => (
            1.0,
            1f64.max((4.0 - 3.0 * alpha) / (4.0 - 2.0 * alpha) - beta),
            Some("quoted from prior work at gamma > 0".to_string()),
        ),
        (Variant::P, Kappa::Tabulated(_)) => (1.0, 1.0, Some("no estimate for tabulated kappa".to_string())),
        (Variant::Pprime, Kappa::PowerLaw { alpha }) if *alpha < 1.0 => (1.0, 1.0 - beta, None),
        (Variant::Pprime, _) => (2.0 - beta, 1.0 - beta, None),
    };
    let varsigma = theta.max(upsilon);
    ExponentPrediction {
        theta,
        upsilon,
        varsigma,
        decay_exponent: 2.0 / varsigma,
        upsilon_provenance: prov,
    }
}

/// Slope of `log|D|` against `log|mu|` for the variant-P connection
/// determinant, `mu = i sqrt(lambda)`.
pub fn verify_determinant_scaling(alpha: f64, beta: f64, rho: f64, mu_grid: &[Complex64]) -> Result<f64> {
    let d = mu_grid
        .iter()
        .map(|&mu| Ok(bessel::determinant_p(mu, alpha, beta, rho)?.norm()))
        .collect::<Result<Vec<f64>>>()?;
    let m: Vec<f64> = mu_grid.iter().map(|m| m.norm()).collect();
    Ok(fit_power_law(&m, &d)?.slope)
}

/// Same for the bracket `theta_+'(1) - i rho (i lambda)^(beta-1) theta_+(1)`
/// of variant P' with `kappa = x^alpha`.
pub fn verify_bracket_scaling(alpha: f64, beta: f64, rho: f64, mu_grid: &[Complex64]) -> Result<f64> {
    let d = mu_grid
        .iter()
        .map(|&mu| Ok(bessel::bracket_pprime(mu, alpha, beta, rho)?.norm()))
        .collect::<Result<Vec<f64>>>()?;
    let m: Vec<f64> = mu_grid.iter().map(|m| m.norm()).collect();
    Ok(fit_power_law(&m, &d)?.slope)
}

/// `mu = i sqrt(lambda)` over log-spaced `lambda`.
pub fn mu_grid(lambda_min: f64, lambda_max: f64, n: usize) -> Vec<Complex64> {
    log_space(lambda_min, lambda_max, n)
        .into_iter()
        .map(|l| I * l.sqrt())
        .collect()
}
