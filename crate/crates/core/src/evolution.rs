//! Implicit-midpoint time stepping, energy traces, initial data and decay
//! fits.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusive::fmt_f64;
use crate::error::{Error, Result};
use crate::fit::fit_power_law;
use crate::model::{energy_flat, StateVector};
use crate::spatial::{ShiftedSolve, SystemOperator};

/// Eigenvalues of modulus below this are treated as kernel.
pub const NEAR_KERNEL_THRESHOLD: f64 = 1e-8;

const DEFAULT_SAMPLES: usize = 2000;

#[derive(Clone, Debug, Default, Serialize)]
pub struct EnergyTrace {
    pub t: Vec<f64>,
    /// Energy.
    pub e: Vec<f64>,
    /// Dissipation rate `-zeta sum w xi^2 |psi|^2` at the sampled state.
    pub d: Vec<f64>,
    /// Damping flux at the damped end.
    pub flux: Vec<Complex64>,
    pub dt: f64,
    pub steps: usize,
}

impl EnergyTrace {
    /// CSV with header `t,E,D,flux_re,flux_im`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "E", "D", "flux_re", "flux_im"])?;
        for i in 0..self.t.len() {
            wtr.write_record([
                fmt_f64(self.t[i]),
                fmt_f64(self.e[i]),
                fmt_f64(self.d[i]),
                fmt_f64(self.flux[i].re),
                fmt_f64(self.flux[i].im),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    fn record(&mut self, op: &SystemOperator, t: f64, v: &[Complex64]) {
        let psi = &v[op.nx()..];
        self.t.push(t);
        self.e.push(energy_flat(op.weights(), v));
        self.d.push(op.dissipation_flat(psi));
        self.flux.push(op.boundary_flux(psi));
    }
}

/// One factored implicit-midpoint step, reusable for a fixed `dt`.
pub struct MidpointStepper<'a> {
    solve: ShiftedSolve<'a>,
    sigma: f64,
    dt: f64,
}

impl<'a> MidpointStepper<'a> {
    pub fn new(op: &'a SystemOperator, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::domain("dt", dt, "> 0"));
        }
        let sigma = 2.0 / dt;
        let solve = op
            .factor_shifted(Complex64::new(sigma, 0.0), false)
            .map_err(|e| Error::Numerical(format!("midpoint factorization failed at dt = {dt}: {e}")))?;
        Ok(Self { solve, sigma, dt })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `(2/dt - A) Y' = (2/dt + A) Y`, evaluated as
    /// `Y' = 2 sigma (sigma - A)^-1 Y - Y` with `sigma = 2/dt`.
    pub fn step_flat(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut w = self.solve.solve_flat(v);
        for (w, x) in w.iter_mut().zip(v) {
            *w = 2.0 * self.sigma * *w - x;
        }
        w
    }
}

pub fn step_implicit_midpoint(op: &SystemOperator, y: &StateVector, dt: f64) -> Result<StateVector> {
    op.check_state(y)?;
    let s = MidpointStepper::new(op, dt)?;
    Ok(StateVector::from_flat(&s.step_flat(&y.to_flat()), op.nx()))
}

/// Runs `round(t_final / dt)` midpoint steps (dt adjusted to land on
/// `t_final`) and samples about 2000 evenly spaced states.
pub fn simulate(op: &SystemOperator, y0: &StateVector, t_final: f64, dt: f64) -> Result<EnergyTrace> {
    simulate_sampled(op, y0, t_final, dt, DEFAULT_SAMPLES).map(|(t, _)| t)
}

/// As [`simulate`] with an explicit sample count; also returns the final
/// state.
pub fn simulate_sampled(
    op: &SystemOperator,
    y0: &StateVector,
    t_final: f64,
    dt: f64,
    samples: usize,
) -> Result<(EnergyTrace, StateVector)> {
    op.check_state(y0)?;
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::domain("t_final", t_final, "> 0"));
    }
    if !(dt > 0.0) || dt > t_final {
        return Err(Error::domain("dt", dt, "in (0, t_final]"));
    }
    let steps = (t_final / dt).round().max(1.0) as usize;
    let dt = t_final / steps as f64;
    let stride = (steps / samples.max(1)).max(1);
    let stepper = MidpointStepper::new(op, dt)?;
    let mut trace = EnergyTrace {
        dt,
        steps,
        ..Default::default()
    };
    let mut v = y0.to_flat();
    trace.record(op, 0.0, &v);
    for n in 1..=steps {
        v = stepper.step_flat(&v);
        if n % stride == 0 || n == steps {
            if v.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
                return Err(Error::Numerical(format!("non-finite state at step {n}")));
            }
            trace.record(op, n as f64 * dt, &v);
        }
    }
    Ok((trace, StateVector::from_flat(&v, op.nx())))
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialPreset {
    /// `y = x^2 (1 - x)^2`, psi = 0, scaled to unit energy.
    SmoothBump,
    /// Eigenmode of the generator attached to the lowest nonzero frequency
    /// of the undamped spatial operator, scaled to unit energy.
    LowestMode,
    Custom(StateVector),
    Zero,
}

/// Builds initial data and removes its components along near-kernel
/// eigenvectors of the generator.
pub fn prepare_initial_state(op: &SystemOperator, preset: InitialPreset) -> Result<StateVector> {
    // custom data keeps its amplitude, presets are normalized
    let (raw, normalize) = match preset {
        InitialPreset::Zero => return Ok(StateVector::zeros(op.nx(), op.nxi())),
        InitialPreset::SmoothBump => {
            let mut s = StateVector::zeros(op.nx(), op.nxi());
            for (y, x) in s.y.iter_mut().zip(op.xgrid().nodes()) {
                *y = Complex64::new(x * x * (1.0 - x) * (1.0 - x), 0.0);
            }
            (s, true)
        }
        InitialPreset::LowestMode => (lowest_mode(op)?.1, true),
        InitialPreset::Custom(s) => {
            op.check_state(&s)?;
            (s, false)
        }
    };
    let mut out = NearKernel::compute(op)?.project(&raw)?;
    let e = energy_flat(op.weights(), &out.to_flat());
    if normalize && e > 0.0 {
        out.scale((1.0 / e).sqrt());
    }
    Ok(out)
}

/// Right/left eigenpairs of the generator with `|mu| < NEAR_KERNEL_THRESHOLD`.
#[derive(Clone, Debug, Default)]
pub struct NearKernel {
    pub eigenvalues: Vec<Complex64>,
    right: Vec<Vec<Complex64>>,
    left: Vec<Vec<Complex64>>,
    weights: Vec<f64>,
}

impl NearKernel {
    /// Inverse iteration with deflation, seeded deterministically. Operators
    /// without damping carry no energy on psi and are returned empty.
    pub fn compute(op: &SystemOperator) -> Result<Self> {
        let mut nk = NearKernel {
            weights: op.weights().to_vec(),
            ..Default::default()
        };
        if op.zeta() == 0.0 {
            return Ok(nk);
        }
        let fwd = op.factor_shifted(Complex64::new(0.0, 0.0), false)?;
        let bwd = op.factor_shifted(Complex64::new(0.0, 0.0), true)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0x6e6b);
        for _ in 0..8 {
            let start: Vec<Complex64> = (0..op.dim())
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let (mu, r) = nk.smallest(op, &fwd, start.clone(), false)?;
            if mu.norm() >= NEAR_KERNEL_THRESHOLD {
                break;
            }
            let (nu, l) = nk.smallest(op, &bwd, start, true)?;
            if (nu.conj() - mu).norm() > 1e-6 * mu.norm().max(1e-300) {
                return Err(Error::Numerical(format!(
                    "left/right near-kernel eigenvalues disagree: {mu} vs {}",
                    nu.conj()
                )));
            }
            if ip(&nk.weights, &r, &l).norm() == 0.0 {
                return Err(Error::Numerical("near-kernel eigenvalue is defective".into()));
            }
            nk.eigenvalues.push(mu);
            nk.right.push(r);
            nk.left.push(l);
        }
        Ok(nk)
    }

    fn deflate(&self, v: &mut [Complex64], adjoint: bool) {
        for (r, l) in self.right.iter().zip(&self.left) {
            let (a, b) = if adjoint { (l, r) } else { (r, l) };
            let c = ip(&self.weights, v, b) / ip(&self.weights, a, b);
            v.iter_mut().zip(a).for_each(|(x, y)| *x -= c * y);
        }
    }

    fn smallest(
        &self,
        op: &SystemOperator,
        solve: &ShiftedSolve<'_>,
        mut v: Vec<Complex64>,
        adjoint: bool,
    ) -> Result<(Complex64, Vec<Complex64>)> {
        let w = &self.weights;
        let mut mu_old = Complex64::new(f64::INFINITY, 0.0);
        for _ in 0..3000 {
            self.deflate(&mut v, adjoint);
            let mut x = solve.solve_flat(&v);
            self.deflate(&mut x, adjoint);
            let nrm = ip(w, &x, &x).re.sqrt();
            if !(nrm > 0.0) || !nrm.is_finite() {
                return Err(Error::Numerical("inverse iteration broke down".into()));
            }
            x.iter_mut().for_each(|c| *c /= nrm);
            let ax = op.apply_flat(&x, adjoint);
            let mu = ip(w, &ax, &x);
            let res: f64 = ax
                .iter()
                .zip(&x)
                .zip(w)
                .map(|((a, b), wt)| wt * (a - mu * b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let settled = (mu - mu_old).norm() <= 1e-12 * mu.norm();
            if settled && res <= 1e-6 * mu.norm().max(1e-300) {
                return Ok((mu, x));
            }
            // clearly outside the kernel neighbourhood
            if mu.norm() > 10.0 * NEAR_KERNEL_THRESHOLD && res < 0.1 * mu.norm() {
                return Ok((mu, x));
            }
            mu_old = mu;
            v = x;
        }
        Err(Error::Numerical(
            "near-kernel inverse iteration did not converge in 3000 steps".into(),
        ))
    }

    /// Oblique projection onto the complement of the near-kernel modes.
    pub fn project(&self, s: &StateVector) -> Result<StateVector> {
        let nx = s.y.len();
        let mut v = s.to_flat();
        if v.len() != self.weights.len() {
            return Err(Error::Shape {
                what: "state vs near-kernel basis",
                expected: self.weights.len(),
                got: v.len(),
            });
        }
        self.deflate(&mut v, false);
        Ok(StateVector::from_flat(&v, nx))
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

fn ip(w: &[f64], a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).zip(w).map(|((x, y), wt)| x * y.conj() * wt).sum()
}

/// Smallest eigenvalue above `floor` of the symmetric pencil `(K, H)`,
/// found by Sturm-count bisection on `H^{-1/2} K H^{-1/2}`.
pub fn lowest_nonzero_frequency(op: &SystemOperator) -> f64 {
    let k = op.pde();
    let h = op.xgrid().widths();
    let n = h.len();
    let s: Vec<f64> = h.iter().map(|v| 1.0 / v.sqrt()).collect();
    let d: Vec<f64> = (0..n).map(|i| k.diag()[i] * s[i] * s[i]).collect();
    let e: Vec<f64> = (0..n - 1).map(|i| k.off()[i] * s[i] * s[i + 1]).collect();
    let hi = (0..n)
        .map(|i| {
            d[i] + if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 }
        })
        .fold(0.0, f64::max);
    // number of eigenvalues below x
    let count = |x: f64| -> usize {
        let mut c = 0;
        let mut q = d[0] - x;
        if q < 0.0 {
            c += 1;
        }
        for i in 1..n {
            let qq = if q == 0.0 { f64::EPSILON * hi } else { q };
            q = d[i] - x - e[i - 1] * e[i - 1] / qq;
            if q < 0.0 {
                c += 1;
            }
        }
        c
    };
    let kth = |k: usize| -> f64 {
        let (mut lo, mut up) = (-hi.max(1.0) * 1e-12, hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + up);
            if count(mid) > k {
                up = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + up)
    };
    let first = kth(0);
    if first.abs() <= 1e-9 * hi {
        kth(1)
    } else {
        first
    }
}

/// Eigenpair of the generator continuing the lowest nonzero undamped
/// mode, with `||A Y - mu Y||_H < 1e-8 ||Y||_H`.
pub fn lowest_mode(op: &SystemOperator) -> Result<(Complex64, StateVector)> {
    let freq = lowest_nonzero_frequency(op);
    let w = op.weights().to_vec();
    let nx = op.nx();
    let mut sigma = Complex64::new(0.0, -freq);
    let mut rng = ChaCha8Rng::seed_from_u64(0x6c6d);
    let mut v: Vec<Complex64> = (0..op.dim())
        .map(|i| {
            if i < nx {
                Complex64::new(rng.random_range(-1.0..1.0), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let mut best = f64::INFINITY;
    for round in 0..8 {
        let solve = op.factor_shifted(sigma, false).map_err(|e| match e {
            Error::SpectralCollision { .. } => Error::Numerical(format!("shift hit the spectrum: {e}")),
            other => other,
        })?;
        for _ in 0..if round == 0 { 60 } else { 3 } {
            let mut x = solve.solve_flat(&v);
            let nrm = ip(&w, &x, &x).re.sqrt();
            if !(nrm > 0.0) || !nrm.is_finite() {
                return Err(Error::Numerical("lowest-mode iteration broke down".into()));
            }
            x.iter_mut().for_each(|c| *c /= nrm);
            v = x;
        }
        let av = op.apply_flat(&v, false);
        let mu = ip(&w, &av, &v);
        let res = av
            .iter()
            .zip(&v)
            .zip(&w)
            .map(|((a, b), wt)| wt * (a - mu * b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        best = best.min(res);
        if res < 1e-10 * mu.norm().max(1.0) {
            return Ok((mu, StateVector::from_flat(&v, nx)));
        }
        sigma = mu;
    }
    if best < 1e-8 {
        let av = op.apply_flat(&v, false);
        let mu = ip(&w, &av, &v);
        return Ok((mu, StateVector::from_flat(&v, nx)));
    }
    Err(Error::Numerical(format!(
        "lowest-mode refinement stalled with residual {best:e}"
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub window: [f64; 2],
    /// Negated log-log slope: `E ~ t^-exponent`.
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub fn fit_decay_exponent(trace: &EnergyTrace, window: [f64; 2]) -> Result<DecayFit> {
    let [lo, hi] = window;
    let (t0, t1) = match (trace.t.first(), trace.t.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(Error::InsufficientData("empty trace".into())),
    };
    if !(lo > 0.0 && lo < hi && lo >= t0 && hi <= t1 * (1.0 + 1e-12)) {
        return Err(Error::Configuration(format!(
            "fit window [{lo}, {hi}] not inside the trace span (0, {t1}]"
        )));
    }
    let (mut ts, mut es) = (Vec::new(), Vec::new());
    for (t, e) in trace.t.iter().zip(&trace.e) {
        if *t >= lo && *t <= hi {
            if !(*e > 0.0) {
                return Err(Error::DegenerateData(format!("energy {e} at t = {t}")));
            }
            ts.push(*t);
            es.push(*e);
        }
    }
    if ts.len() < 20 {
        return Err(Error::InsufficientData(format!(
            "{} samples in the fit window, need 20",
            ts.len()
        )));
    }
    let f = fit_power_law(&ts, &es)?;
    Ok(DecayFit {
        window,
        exponent: -f.slope,
        intercept: f.intercept,
        r_squared: f.r_squared,
        points: ts.len(),
    })
}

/// Default fit window: the last decade of simulated time.
pub fn default_fit_window(t_final: f64) -> [f64; 2] {
    [t_final / 10.0, t_final]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusive::build_xi_quadrature;
    use crate::model::{energy, ProblemSpec, Variant};
    use crate::spatial::{assemble_operator, build_x_grid, default_grade};

    fn op(variant: Variant, alpha: f64, beta: f64, nx: usize) -> SystemOperator {
        let s = ProblemSpec::power_law(variant, alpha, beta, 1.0).unwrap();
        let xg = build_x_grid(nx, default_grade(&s)).unwrap();
        let xi = build_xi_quadrature(beta, 60, 1e-3, 1e3).unwrap();
        assemble_operator(&s, &xg, &xi).unwrap()
    }

    fn random_state(rng: &mut ChaCha8Rng, op: &SystemOperator) -> StateVector {
        let mut r = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        StateVector {
            y: (0..op.nx()).map(|_| r()).collect(),
            psi: (0..op.nxi()).map(|_| r()).collect(),
        }
    }

    #[test]
    fn step_examples() {
        let o = op(Variant::P, 0.5, 0.5, 64);
        let z = StateVector::zeros(o.nx(), o.nxi());
        assert!(step_implicit_midpoint(&o, &z, 0.1).unwrap().to_flat().iter().all(|v| v.norm() == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = o.undamped();
        for _ in 0..10 {
            let y = random_state(&mut rng, &u);
            let e0 = energy(&y, &u).unwrap();
            let e1 = energy(&step_implicit_midpoint(&u, &y, 0.05).unwrap(), &u).unwrap();
            assert!((e1 - e0).abs() < 1e-12 * e0);
        }
        let s = MidpointStepper::new(&o, 0.05).unwrap();
        for _ in 0..100 {
            let y = random_state(&mut rng, &o).to_flat();
            let e0 = energy_flat(o.weights(), &y);
            let e1 = energy_flat(o.weights(), &s.step_flat(&y));
            assert!(e1 <= e0);
        }
        assert!(step_implicit_midpoint(&o, &z, 0.0).is_err());
    }

    #[test]
    fn energy_balance() {
        let o = op(Variant::P, 0.5, 0.5, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y0 = random_state(&mut rng, &o).to_flat();
        // midpoint-state dissipation balances exactly
        let s = MidpointStepper::new(&o, 0.01).unwrap();
        let mut v = y0.clone();
        for _ in 0..200 {
            let nv = s.step_flat(&v);
            let mid: Vec<_> = v.iter().zip(&nv).map(|(a, b)| 0.5 * (a + b)).collect();
            let de = energy_flat(o.weights(), &nv) - energy_flat(o.weights(), &v);
            let d = o.dissipation_flat(&mid[o.nx()..]);
            assert!((de - 0.01 * d).abs() < 1e-12 * energy_flat(o.weights(), &v));
            v = nv;
        }
    }

    #[test]
    fn trapezoidal_balance_defect_is_second_order() {
        // resolved stiffness so the asymptotic regime is visible
        let s = ProblemSpec::power_law(Variant::P, 0.5, 0.5, 1.0).unwrap();
        let xg = build_x_grid(20, 1.0).unwrap();
        let xi = build_xi_quadrature(0.5, 16, 0.1, 3.0).unwrap();
        let o = assemble_operator(&s, &xg, &xi).unwrap();
        let mut y0 = StateVector::zeros(o.nx(), o.nxi());
        for (y, x) in y0.y.iter_mut().zip(o.xgrid().nodes()) {
            *y = Complex64::new((std::f64::consts::PI * x).cos(), 0.0);
        }
        let defect = |dt: f64| {
            let st = MidpointStepper::new(&o, dt).unwrap();
            let mut v = y0.to_flat();
            let mut acc = 0.0;
            let steps = (0.5 / dt).round() as usize;
            for _ in 0..steps {
                let nv = st.step_flat(&v);
                let de = energy_flat(o.weights(), &nv) - energy_flat(o.weights(), &v);
                let d = 0.5 * (o.dissipation_flat(&v[o.nx()..]) + o.dissipation_flat(&nv[o.nx()..]));
                acc += de - dt * d;
                v = nv;
            }
            acc.abs()
        };
        let (a, b) = (defect(2e-3), defect(1e-3));
        let ratio = a / b;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn simulate_examples() {
        let o = op(Variant::P, 0.5, 0.5, 64);
        let z = StateVector::zeros(o.nx(), o.nxi());
        let tr = simulate(&o, &z, 1.0, 0.01).unwrap();
        assert!(tr.e.iter().all(|&e| e == 0.0));

        let u = o.undamped();
        let y0 = prepare_initial_state(&u, InitialPreset::SmoothBump).unwrap();
        let tr = simulate(&u, &y0, 10.0, 0.01).unwrap();
        assert!(tr.e.iter().all(|e| (e - tr.e[0]).abs() < 1e-12));

        let y0 = prepare_initial_state(&o, InitialPreset::SmoothBump).unwrap();
        let tr = simulate(&o, &y0, 20.0, 0.005).unwrap();
        assert!(tr.e.last().unwrap() / tr.e[0] < 1.0);
        assert!(tr.e.windows(2).all(|p| p[1] < p[0]));
        assert!(tr.d.iter().all(|&d| d <= 0.0));
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,E,D,flux_re,flux_im\n"));
    }

    #[test]
    fn smooth_bump_has_unit_energy_and_zero_flux() {
        let o = op(Variant::P, 0.5, 0.5, 64);
        let y0 = prepare_initial_state(&o, InitialPreset::SmoothBump).unwrap();
        assert!((energy(&y0, &o).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(o.boundary_flux(&y0.psi).norm(), 0.0);
    }

    #[test]
    fn projection_is_idempotent() {
        let o = op(Variant::P, 0.5, 0.5, 64);
        let nk = NearKernel::compute(&o).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_state(&mut rng, &o);
        let p1 = nk.project(&s).unwrap();
        let p2 = nk.project(&p1).unwrap();
        let d: f64 = p1.to_flat().iter().zip(p2.to_flat()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(d < 1e-12);
    }

    #[test]
    fn lowest_mode_is_an_eigenpair() {
        use nalgebra::DMatrix;
        let o = op(Variant::P, 0.5, 0.5, 40);
        let (mu, y) = lowest_mode(&o).unwrap();
        let ay = o.apply(&y).unwrap();
        let w = o.weights();
        let res: f64 = ay
            .to_flat()
            .iter()
            .zip(y.to_flat())
            .zip(w)
            .map(|((a, b), wt)| wt * (a - mu * b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(res < 1e-8, "{res}");
        // dense oracle: mu is an eigenvalue of the assembled matrix
        let m: DMatrix<Complex64> = o.to_dense();
        let ev = m.eigenvalues();
        let dist = match ev {
            Some(ev) => ev.iter().map(|e| (e - mu).norm()).fold(f64::INFINITY, f64::min),
            None => {
                // fall back to the smallest singular value of A - mu
                let n = o.dim();
                let shifted = m - DMatrix::<Complex64>::identity(n, n) * mu;
                shifted.singular_values().min()
            }
        };
        assert!(dist < 1e-6 * mu.norm(), "dist {dist}");
        let p = prepare_initial_state(&o, InitialPreset::LowestMode).unwrap();
        assert!((energy(&p, &o).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decay_fit_examples() {
        let t: Vec<f64> = (1..=2000).map(|i| i as f64 * 0.1).collect();
        let mk = |p: f64, c: f64| EnergyTrace {
            e: t.iter().map(|x| c * x.powf(-p)).collect(),
            d: vec![0.0; t.len()],
            flux: vec![Complex64::new(0.0, 0.0); t.len()],
            t: t.clone(),
            dt: 0.1,
            steps: 2000,
        };
        let f = fit_decay_exponent(&mk(2.0, 5.0), [20.0, 200.0]).unwrap();
        assert!((f.exponent - 2.0).abs() < 1e-10 && (f.r_squared - 1.0).abs() < 1e-12);
        let f = fit_decay_exponent(&mk(2.0 / 1.5, 3.0), [20.0, 200.0]).unwrap();
        assert!((f.exponent - 4.0 / 3.0).abs() < 1e-10);
        let mut z = mk(2.0, 1.0);
        z.e[1500] = 0.0;
        assert!(matches!(fit_decay_exponent(&z, [20.0, 200.0]), Err(Error::DegenerateData(_))));
        assert!(matches!(
            fit_decay_exponent(&mk(2.0, 1.0), [199.0, 200.0]),
            Err(Error::InsufficientData(_))
        ));
    }
}
