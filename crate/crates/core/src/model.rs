//! Problem configuration, degeneracy classification and the discrete energy.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::SystemOperator;

/// Which of the two damped systems is simulated.
///
/// `P` damps the degenerate end x = 0 with coefficient x^alpha, `Pprime`
/// damps the regular end x = 1 with a general coefficient kappa.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    P,
    Pprime,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::P => f.write_str("P"),
            Variant::Pprime => f.write_str("Pprime"),
        }
    }
}

/// Samples of a tabulated diffusion coefficient on (0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct KappaTable {
    x: Vec<f64>,
    k: Vec<f64>,
}

impl KappaTable {
    /// Builds a table from `(x, kappa(x))` pairs. A sample at x = 0 is
    /// accepted only with kappa = 0 and is dropped.
    pub fn new(samples: &[(f64, f64)]) -> Result<Self> {
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(samples.len());
        for &(x, k) in samples {
            if !(x.is_finite() && k.is_finite()) {
                return Err(Error::InvalidCoefficient(format!(
                    "non-finite sample ({x}, {k})"
                )));
            }
            if x == 0.0 {
                if k != 0.0 {
                    return Err(Error::InvalidCoefficient(format!(
                        "kappa(0) must vanish, got {k}"
                    )));
                }
                continue;
            }
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidCoefficient(format!(
                    "sample abscissa {x} outside (0, 1]"
                )));
            }
            if k <= 0.0 {
                return Err(Error::InvalidCoefficient(format!(
                    "kappa({x}) = {k} is not positive"
                )));
            }
            pts.push((x, k));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| a.0 == b.0);
        if pts.len() < 3 {
            return Err(Error::InvalidCoefficient(format!(
                "need at least 3 samples in (0, 1], got {}",
                pts.len()
            )));
        }
        let (x, k) = pts.into_iter().unzip();
        Ok(Self { x, k })
    }

    /// Log-spaced samples of `x^alpha` on `[x_min, 1]`.
    pub fn power_law(alpha: f64, n: usize, x_min: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::domain("n", n as f64, ">= 3"));
        }
        if !(x_min > 0.0 && x_min < 1.0) {
            return Err(Error::domain("x_min", x_min, "in (0, 1)"));
        }
        let lmin = x_min.ln();
        let samples: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let x = if i + 1 == n {
                    1.0
                } else {
                    (lmin * (1.0 - i as f64 / (n - 1) as f64)).exp()
                };
                (x, x.powf(alpha))
            })
            .collect();
        Self::new(&samples)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.k
    }

    pub fn samples(&self) -> Vec<(f64, f64)> {
        self.x.iter().copied().zip(self.k.iter().copied()).collect()
    }

    /// Piecewise-linear interpolation in (log x, log kappa); the end
    /// segments are continued as power laws.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let n = self.x.len();
        let seg = match self.x.partition_point(|&xi| xi <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.x[seg].ln(), self.x[seg + 1].ln());
        let (k0, k1) = (self.k[seg].ln(), self.k[seg + 1].ln());
        let t = (x.ln() - x0) / (x1 - x0);
        (k0 + t * (k1 - k0)).exp()
    }
}

/// The diffusion coefficient kappa(x).
#[derive(Clone, Debug, PartialEq)]
pub enum Kappa {
    PowerLaw { alpha: f64 },
    Tabulated(KappaTable),
}

impl Kappa {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Kappa::PowerLaw { alpha } => {
                if x <= 0.0 {
                    0.0
                } else {
                    x.powf(*alpha)
                }
            }
            Kappa::Tabulated(t) => t.eval(x),
        }
    }

    pub fn power_law_exponent(&self) -> Option<f64> {
        match self {
            Kappa::PowerLaw { alpha } => Some(*alpha),
            Kappa::Tabulated(_) => None,
        }
    }
}

/// Boundary condition at the degenerate end selected by m_kappa.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryClass {
    /// `0 <= m_kappa < 1`: y(0) = 0.
    DirichletAtZero,
    /// `1 <= m_kappa < 2`: (kappa y_x)(0) = 0.
    WeightedNeumannAtZero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub m_kappa: f64,
    pub boundary_class: BoundaryClass,
    /// Abscissa where the supremum of x|kappa'|/kappa was attained.
    pub sup_location: f64,
}

/// `zeta = rho sin(beta pi) / pi` and, when `alpha` is given,
/// `nu_alpha = (1 - alpha) / (2 - alpha)`.
pub fn derive_constants(beta: f64, rho: f64, alpha: Option<f64>) -> Result<(f64, Option<f64>)> {
    check_beta(beta)?;
    check_rho(rho)?;
    let nu = match alpha {
        Some(a) => {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::domain("alpha", a, "in (0, 1)"));
            }
            Some(nu_alpha(a))
        }
        None => None,
    };
    Ok((zeta(beta, rho), nu))
}

pub(crate) fn zeta(beta: f64, rho: f64) -> f64 {
    rho * (beta * PI).sin() / PI
}

pub(crate) fn nu_alpha(alpha: f64) -> f64 {
    (1.0 - alpha) / (2.0 - alpha)
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::domain("beta", beta, "in (0, 1)"))
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("rho", rho, "> 0"))
    }
}

/// Computes m_kappa = sup x|kappa'(x)|/kappa(x) and the boundary class.
///
/// Power laws are classified exactly. Tables use centered differences at
/// the interior samples, with no refinement between samples.
pub fn classify_kappa(kappa: &Kappa) -> Result<DegeneracyReport> {
    let (m, loc) = match kappa {
        Kappa::PowerLaw { alpha } => {
            if !(*alpha > 0.0) || !alpha.is_finite() {
                return Err(Error::domain("alpha", *alpha, "> 0"));
            }
            (*alpha, 1.0)
        }
        Kappa::Tabulated(t) => {
            let (x, k) = (t.x(), t.values());
            let mut best = (f64::NEG_INFINITY, x[1]);
            for i in 1..x.len() - 1 {
                let dk = (k[i + 1] - k[i - 1]) / (x[i + 1] - x[i - 1]);
                let r = x[i] * dk.abs() / k[i];
                if r > best.0 {
                    best = (r, x[i]);
                }
            }
            best
        }
    };
    if m >= 2.0 {
        return Err(Error::HypothesisViolation(m));
    }
    let boundary_class = if m < 1.0 {
        BoundaryClass::DirichletAtZero
    } else {
        BoundaryClass::WeightedNeumannAtZero
    };
    Ok(DegeneracyReport {
        m_kappa: m,
        boundary_class,
        sup_location: loc,
    })
}

/// Validated problem description. Derived constants are recomputed on
/// construction and never serialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemSpecJson", into = "ProblemSpecJson")]
pub struct ProblemSpec {
    variant: Variant,
    kappa: Kappa,
    beta: f64,
    rho: f64,
    gamma: f64,
    zeta: f64,
    nu_alpha: Option<f64>,
    degeneracy: DegeneracyReport,
}

impl ProblemSpec {
    pub fn new(variant: Variant, kappa: Kappa, beta: f64, rho: f64, gamma: f64) -> Result<Self> {
        check_beta(beta)?;
        check_rho(rho)?;
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::domain("gamma", gamma, ">= 0"));
        }
        if let Kappa::PowerLaw { alpha } = kappa {
            if !(alpha > 0.0 && alpha < 2.0) {
                return Err(Error::domain("alpha", alpha, "in (0, 2)"));
            }
        }
        let degeneracy = classify_kappa(&kappa)?;
        if variant == Variant::P {
            match kappa {
                Kappa::PowerLaw { alpha } if alpha < 1.0 => {}
                Kappa::PowerLaw { alpha } => {
                    return Err(Error::Configuration(format!(
                        "variant P requires alpha in (0, 1), got {alpha}"
                    )))
                }
                Kappa::Tabulated(_) => {
                    return Err(Error::Configuration(
                        "variant P requires a power-law coefficient x^alpha".into(),
                    ))
                }
            }
        }
        let nu_alpha = match kappa {
            Kappa::PowerLaw { alpha } if alpha < 1.0 => Some(nu_alpha(alpha)),
            _ => None,
        };
        Ok(Self {
            variant,
            kappa,
            beta,
            rho,
            gamma,
            zeta: zeta(beta, rho),
            nu_alpha,
            degeneracy,
        })
    }

    pub fn power_law(variant: Variant, alpha: f64, beta: f64, rho: f64) -> Result<Self> {
        Self::new(variant, Kappa::PowerLaw { alpha }, beta, rho, 0.0)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }
    pub fn kappa(&self) -> &Kappa {
        &self.kappa
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn zeta(&self) -> f64 {
        self.zeta
    }
    pub fn nu_alpha(&self) -> Option<f64> {
        self.nu_alpha
    }
    pub fn m_kappa(&self) -> f64 {
        self.degeneracy.m_kappa
    }
    pub fn degeneracy(&self) -> DegeneracyReport {
        self.degeneracy
    }

    /// Stability-facing computations are only defined for gamma = 0.
    pub fn require_undamped_kernel(&self) -> Result<()> {
        if self.gamma == 0.0 {
            Ok(())
        } else {
            Err(Error::Configuration(format!(
                "stability computations require gamma = 0, got {}",
                self.gamma
            )))
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ProblemSpecJson {
    variant: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kappa_samples: Option<Vec<(f64, f64)>>,
    beta: f64,
    rho: f64,
    #[serde(default)]
    gamma: f64,
}

impl TryFrom<ProblemSpecJson> for ProblemSpec {
    type Error = Error;

    fn try_from(j: ProblemSpecJson) -> Result<Self> {
        let kappa = match (j.alpha, j.kappa_samples) {
            (Some(alpha), None) => Kappa::PowerLaw { alpha },
            (None, Some(s)) => Kappa::Tabulated(KappaTable::new(&s)?),
            _ => {
                return Err(Error::Configuration(
                    "exactly one of `alpha` and `kappa_samples` must be given".into(),
                ))
            }
        };
        ProblemSpec::new(j.variant, kappa, j.beta, j.rho, j.gamma)
    }
}

impl From<ProblemSpec> for ProblemSpecJson {
    fn from(s: ProblemSpec) -> Self {
        let (alpha, kappa_samples) = match s.kappa {
            Kappa::PowerLaw { alpha } => (Some(alpha), None),
            Kappa::Tabulated(t) => (None, Some(t.samples())),
        };
        ProblemSpecJson {
            variant: s.variant,
            alpha,
            kappa_samples,
            beta: s.beta,
            rho: s.rho,
            gamma: s.gamma,
        }
    }
}

/// A point (y, psi) of the discrete Hilbert space.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub y: Vec<Complex64>,
    pub psi: Vec<Complex64>,
}

impl StateVector {
    pub fn zeros(nx: usize, nxi: usize) -> Self {
        Self {
            y: vec![Complex64::new(0.0, 0.0); nx],
            psi: vec![Complex64::new(0.0, 0.0); nxi],
        }
    }

    pub fn from_flat(flat: &[Complex64], nx: usize) -> Self {
        Self {
            y: flat[..nx].to_vec(),
            psi: flat[nx..].to_vec(),
        }
    }

    pub fn to_flat(&self) -> Vec<Complex64> {
        let mut v = Vec::with_capacity(self.y.len() + self.psi.len());
        v.extend_from_slice(&self.y);
        v.extend_from_slice(&self.psi);
        v
    }

    pub fn len(&self) -> usize {
        self.y.len() + self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scale(&mut self, s: f64) {
        self.y.iter_mut().chain(self.psi.iter_mut()).for_each(|v| *v *= s);
    }
}

/// Weighted inner product `sum h_i y_i conj(z_i) + zeta sum w_k psi_k conj(phi_k)`.
pub fn inner_product(a: &StateVector, b: &StateVector, op: &SystemOperator) -> Result<Complex64> {
    op.check_state(a)?;
    op.check_state(b)?;
    let w = op.weights();
    Ok(a
        .y
        .iter()
        .chain(a.psi.iter())
        .zip(b.y.iter().chain(b.psi.iter()))
        .zip(w.iter())
        .map(|((u, v), &wt)| u * v.conj() * wt)
        .sum())
}

/// `E = 1/2 sum h_i |y_i|^2 + zeta/2 sum w_k |psi_k|^2`.
pub fn energy(state: &StateVector, op: &SystemOperator) -> Result<f64> {
    op.check_state(state)?;
    Ok(energy_flat(&op.weights(), &state.to_flat()))
}

pub(crate) fn energy_flat(weights: &[f64], v: &[Complex64]) -> f64 {
    0.5 * weights
        .iter()
        .zip(v)
        .map(|(w, x)| w * x.norm_sqr())
        .sum::<f64>()
}
