//! Quadrature on the auxiliary xi-axis that realizes the fractional
//! integral boundary term as a family of relaxation modes, plus a direct
//! convolution evaluator used to validate it.
//!
//! The modes obey `psi_t + xi^2 psi = eta(xi) s(t)` with
//! `eta(xi) = |xi|^((2 beta - 1)/2)`, and the identity
//! `zeta * integral eta^2 exp(-xi^2 tau) dxi = rho tau^-beta / Gamma(1 - beta)`
//! makes `zeta * integral eta psi dxi` equal to `rho` times the fractional
//! integral of the boundary signal `s`.

use std::io::Write;

use serde::Serialize;
use statrs::function::gamma::{gamma, gamma_li};

use crate::error::{Error, Result};
use crate::model::zeta;
use crate::fit::log_space;

pub const DEFAULT_N_XI: usize = 200;
pub const DEFAULT_XI_MIN: f64 = 1e-4;
pub const DEFAULT_XI_MAX: f64 = 1e4;

/// Nodes and weights for integrals over the whole xi-axis of even
/// integrands. Only the half axis is stored; weights are doubled.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct XiGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    eta: Vec<f64>,
    beta: f64,
    xi_min: f64,
    xi_max: f64,
}

impl XiGrid {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn eta(&self) -> &[f64] {
        &self.eta
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn xi_min(&self) -> f64 {
        self.xi_min
    }
    pub fn xi_max(&self) -> f64 {
        self.xi_max
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Delay range over which the kernel quadrature meets 1e-4 relative
    /// accuracy for beta in [0.1, 0.9].
    pub fn resolved_tau_window(&self) -> (f64, f64) {
        (
            100.0 / (self.xi_max * self.xi_max),
            1e-4 / (self.xi_min * self.xi_min),
        )
    }

    /// Single-mode grid, used to test the mode integrator in isolation.
    pub fn single_mode(beta: f64, xi: f64, weight: f64) -> Self {
        Self {
            nodes: vec![xi],
            weights: vec![weight],
            eta: vec![xi.powf(beta - 0.5)],
            beta,
            xi_min: xi,
            xi_max: xi,
        }
    }
}

/// Log-spaced nodes in `[xi_min, xi_max]` with trapezoidal weights in
/// `u = ln xi` (Jacobian included), doubled for the symmetric axis.
///
/// The two end weights carry the trapezoid sum continued geometrically
/// beyond the grid: below `xi_min` the integrand behaves like `xi^(2 beta)`
/// in `u`, above `xi_max` (in the impedance and flux integrals) like
/// `xi^(2 beta - 2)`. Summing those geometric tails in closed form removes
/// the O(h^2) endpoint error of the plain trapezoid.
pub fn build_xi_quadrature(beta: f64, n_xi: usize, xi_min: f64, xi_max: f64) -> Result<XiGrid> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::domain("beta", beta, "in (0, 1)"));
    }
    if n_xi < 16 {
        return Err(Error::domain("n_xi", n_xi as f64, ">= 16"));
    }
    if !(xi_min > 0.0) {
        return Err(Error::domain("xi_min", xi_min, "> 0"));
    }
    if !(xi_min < xi_max) || !xi_max.is_finite() {
        return Err(Error::domain("xi_max", xi_max, "> xi_min"));
    }
    let (u0, u1) = (xi_min.ln(), xi_max.ln());
    let h = (u1 - u0) / (n_xi - 1) as f64;
    let nodes: Vec<f64> = (0..n_xi)
        .map(|k| match k {
            0 => xi_min,
            k if k == n_xi - 1 => xi_max,
            k => (u0 + h * k as f64).exp(),
        })
        .collect();
    let weights: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(k, &xi)| {
            let uw = if k == 0 {
                h / -(-2.0 * beta * h).exp_m1()
            } else if k == n_xi - 1 {
                h / -(-(2.0 - 2.0 * beta) * h).exp_m1()
            } else {
                h
            };
            2.0 * uw * xi
        })
        .collect();
    let eta = nodes.iter().map(|&xi| xi.powf(beta - 0.5)).collect();
    Ok(XiGrid {
        nodes,
        weights,
        eta,
        beta,
        xi_min,
        xi_max,
    })
}

pub fn default_xi_grid(beta: f64) -> Result<XiGrid> {
    build_xi_quadrature(beta, DEFAULT_N_XI, DEFAULT_XI_MIN, DEFAULT_XI_MAX)
}

/// `zeta * sum_k w_k eta_k^2 exp(-xi_k^2 tau)`.
pub fn kernel_value(grid: &XiGrid, tau: f64, rho: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::domain("tau", tau, "> 0"));
    }
    let z = zeta(grid.beta, rho);
    Ok(z * grid
        .nodes
        .iter()
        .zip(&grid.weights)
        .zip(&grid.eta)
        .map(|((xi, w), e)| w * e * e * (-xi * xi * tau).exp())
        .sum::<f64>())
}

/// `rho tau^-beta exp(-gamma tau) / Gamma(1 - beta)`.
pub fn exact_kernel(tau: f64, beta: f64, gamma_: f64, rho: f64) -> f64 {
    rho * tau.powf(-beta) * (-gamma_ * tau).exp() / gamma(1.0 - beta)
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelCheck {
    pub tau: Vec<f64>,
    pub quadrature_value: Vec<f64>,
    pub exact_value: Vec<f64>,
    /// Rows inside the grid's resolved delay window.
    pub resolved: Vec<bool>,
    /// Maximum relative error over resolved rows only.
    pub max_rel_error: f64,
}

impl KernelCheck {
    pub fn rel_error(&self) -> Vec<f64> {
        self.quadrature_value
            .iter()
            .zip(&self.exact_value)
            .map(|(q, e)| ((q - e) / e).abs())
            .collect()
    }

    /// CSV with header `tau,quadrature,exact,rel_error`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["tau", "quadrature", "exact", "rel_error"])?;
        for (i, re) in self.rel_error().into_iter().enumerate() {
            wtr.write_record([
                fmt_f64(self.tau[i]),
                fmt_f64(self.quadrature_value[i]),
                fmt_f64(self.exact_value[i]),
                fmt_f64(re),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.17e}")
}

/// Compares the quadrature kernel with its closed form on log-spaced delays
/// (gamma = 0).
pub fn kernel_check(grid: &XiGrid, rho: f64, tau_min: f64, tau_max: f64, n_tau: usize) -> Result<KernelCheck> {
    if !(tau_min > 0.0 && tau_min < tau_max) {
        return Err(Error::domain("tau_min", tau_min, "in (0, tau_max)"));
    }
    if n_tau < 2 {
        return Err(Error::domain("n_tau", n_tau as f64, ">= 2"));
    }
    let (lo, hi) = grid.resolved_tau_window();
    let tau = log_space(tau_min, tau_max, n_tau);
    let quadrature_value = tau
        .iter()
        .map(|&t| kernel_value(grid, t, rho))
        .collect::<Result<Vec<_>>>()?;
    let exact_value: Vec<f64> = tau.iter().map(|&t| exact_kernel(t, grid.beta, 0.0, rho)).collect();
    let resolved: Vec<bool> = tau.iter().map(|&t| t >= lo && t <= hi).collect();
    let max_rel_error = quadrature_value
        .iter()
        .zip(&exact_value)
        .zip(&resolved)
        .filter(|(_, &r)| r)
        .map(|((q, e), _)| ((q - e) / e).abs())
        .fold(0.0, f64::max);
    Ok(KernelCheck {
        tau,
        quadrature_value,
        exact_value,
        resolved,
        max_rel_error,
    })
}

/// Direct evaluation of the fractional integral
/// `1/Gamma(1-beta) int_0^t (t-s)^-beta exp(-gamma (t-s)) w(s) ds`
/// on a uniform grid.
///
/// `w` is taken piecewise constant (the average of the two end samples on
/// each step) and the singular kernel is integrated exactly on every
/// subinterval.
pub fn direct_fractional_integral(w: &[f64], t_grid: &[f64], beta: f64, gamma_: f64) -> Result<Vec<f64>> {
    if w.len() != t_grid.len() {
        return Err(Error::Shape {
            what: "signal vs time grid",
            expected: t_grid.len(),
            got: w.len(),
        });
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::domain("beta", beta, "in (0, 1)"));
    }
    if !(gamma_ >= 0.0) {
        return Err(Error::domain("gamma", gamma_, ">= 0"));
    }
    let n = t_grid.len();
    if n < 2 {
        return Ok(vec![0.0; n]);
    }
    let dt = t_grid[1] - t_grid[0];
    if !(dt > 0.0) {
        return Err(Error::UnsupportedGrid("time grid must be increasing".into()));
    }
    for win in t_grid.windows(2) {
        if ((win[1] - win[0]) - dt).abs() > 1e-9 * dt.max(win[1].abs()) {
            return Err(Error::UnsupportedGrid("time grid must be uniform".into()));
        }
    }
    // m[j] = int_{j dt}^{(j+1) dt} u^-beta exp(-gamma u) du / Gamma(1-beta)
    let g1 = gamma(1.0 - beta);
    let prim = |u: f64| -> f64 {
        if u == 0.0 {
            0.0
        } else if gamma_ == 0.0 {
            u.powf(1.0 - beta) / (1.0 - beta)
        } else {
            gamma_.powf(beta - 1.0) * gamma_li(1.0 - beta, gamma_ * u)
        }
    };
    let m: Vec<f64> = (0..n - 1)
        .map(|j| (prim((j + 1) as f64 * dt) - prim(j as f64 * dt)) / g1)
        .collect();
    let avg: Vec<f64> = w.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    Ok((0..n)
        .map(|i| (0..i).map(|j| avg[j] * m[i - 1 - j]).sum())
        .collect())
}

/// History of the forced relaxation modes.
#[derive(Clone, Debug)]
pub struct PsiHistory {
    pub t: Vec<f64>,
    /// `psi[n][k]`: mode k at time `t[n]`.
    pub psi: Vec<Vec<f64>>,
    /// `zeta sum_k w_k eta_k psi_k(t)`.
    pub flux: Vec<f64>,
}

/// Integrates `psi_k' = -xi_k^2 psi_k + eta_k s(t)`, `psi(0) = 0`, exactly
/// per step with the signal frozen at its step average.
pub fn evolve_psi_forced(grid: &XiGrid, signal: &[f64], dt: f64, rho: f64) -> Result<PsiHistory> {
    if !(dt > 0.0) {
        return Err(Error::domain("dt", dt, "> 0"));
    }
    let z = zeta(grid.beta, rho);
    let decay: Vec<f64> = grid.nodes.iter().map(|xi| (-xi * xi * dt).exp()).collect();
    let gain: Vec<f64> = grid
        .nodes
        .iter()
        .zip(&grid.eta)
        .map(|(xi, e)| e * -(-xi * xi * dt).exp_m1() / (xi * xi))
        .collect();
    let flux_of = |p: &[f64]| -> f64 {
        z * p
            .iter()
            .zip(&grid.weights)
            .zip(&grid.eta)
            .map(|((p, w), e)| p * w * e)
            .sum::<f64>()
    };
    let mut psi = vec![0.0; grid.len()];
    let mut hist = PsiHistory {
        t: Vec::with_capacity(signal.len()),
        psi: Vec::with_capacity(signal.len()),
        flux: Vec::with_capacity(signal.len()),
    };
    for n in 0..signal.len() {
        if n > 0 {
            let s = 0.5 * (signal[n - 1] + signal[n]);
            for k in 0..psi.len() {
                psi[k] = decay[k] * psi[k] + gain[k] * s;
            }
        }
        hist.t.push(n as f64 * dt);
        hist.flux.push(flux_of(&psi));
        hist.psi.push(psi.clone());
    }
    Ok(hist)
}
