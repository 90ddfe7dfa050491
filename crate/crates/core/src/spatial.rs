//! Finite-volume discretization of the degenerate operator and assembly of
//! the coupled generator acting on (y, psi).
//!
//! The y-block is `-i H^{-1} K` with `K` the real symmetric stiffness of the
//! flux form and `H = diag(h)`. The damped end couples to the psi modes
//! through a single row and column chosen so that
//! `Re <A Y, Y>_H = -zeta sum_k w_k xi_k^2 |psi_k|^2` holds exactly.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::diffusive::{fmt_f64, XiGrid};
use crate::error::{Error, Result};
use crate::model::{BoundaryClass, ProblemSpec, StateVector, Variant};
use crate::tridiag::TridiagLu;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Graded vertex mesh `x_i = (i/N)^g`, i = 1..N, with control-volume
/// widths `h_i` bounded by the midpoints between nodes and by 0 and 1.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct XGrid {
    nodes: Vec<f64>,
    h: Vec<f64>,
    grade: f64,
}

impl XGrid {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn widths(&self) -> &[f64] {
        &self.h
    }
    pub fn grade(&self) -> f64 {
        self.grade
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

pub fn build_x_grid(n: usize, g: f64) -> Result<XGrid> {
    if n < 16 {
        return Err(Error::domain("nx", n as f64, ">= 16"));
    }
    build_x_grid_unchecked(n, g)
}

// Also used by the tiny examples in the tests.
fn build_x_grid_unchecked(n: usize, g: f64) -> Result<XGrid> {
    if !(1.0..=4.0).contains(&g) {
        return Err(Error::domain("grade", g, "in [1, 4]"));
    }
    let nodes: Vec<f64> = (1..=n)
        .map(|i| if i == n { 1.0 } else { (i as f64 / n as f64).powf(g) })
        .collect();
    let mut edges = Vec::with_capacity(n + 1);
    edges.push(0.0);
    edges.extend(nodes.windows(2).map(|p| 0.5 * (p[0] + p[1])));
    edges.push(1.0);
    let h = edges.windows(2).map(|e| e[1] - e[0]).collect();
    Ok(XGrid { nodes, h, grade: g })
}

/// Grading used when none is requested: 2 for strong degeneracy, else 1.
pub fn default_grade(spec: &ProblemSpec) -> f64 {
    let strong = spec.m_kappa() >= 1.0 || spec.kappa().power_law_exponent().is_some_and(|a| a >= 1.0);
    if strong {
        2.0
    } else {
        1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LeftBoundary {
    /// y(0) = 0 through a ghost value at x = 0.
    Dirichlet,
    /// Zero flux through x = 0.
    ZeroFlux,
}

/// Stiffness `K` of the flux form: `(kappa y_x)_x ~ -H^{-1} K y`, with zero
/// flux at x = 1 and the given condition at x = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct PdeBlock {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl PdeBlock {
    pub fn assemble(grid: &XGrid, kappa: impl Fn(f64) -> f64, left: LeftBoundary) -> Self {
        let x = grid.nodes();
        let n = x.len();
        let c: Vec<f64> = x
            .windows(2)
            .map(|p| kappa(0.5 * (p[0] + p[1])) / (p[1] - p[0]))
            .collect();
        let mut diag = vec![0.0; n];
        for (i, ci) in c.iter().enumerate() {
            diag[i] += ci;
            diag[i + 1] += ci;
        }
        if left == LeftBoundary::Dirichlet {
            diag[0] += kappa(0.5 * x[0]) / x[0];
        }
        let off = c.iter().map(|v| -v).collect();
        Self { diag, off }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Sub- and super-diagonal (symmetric).
    pub fn off(&self) -> &[f64] {
        &self.off
    }

    pub fn apply(&self, y: &[Complex64]) -> Vec<Complex64> {
        let n = self.diag.len();
        (0..n)
            .map(|i| {
                let mut s = y[i] * self.diag[i];
                if i > 0 {
                    s += y[i - 1] * self.off[i - 1];
                }
                if i + 1 < n {
                    s += y[i + 1] * self.off[i];
                }
                s
            })
            .collect()
    }
}

/// The assembled discrete generator.
#[derive(Clone, Debug)]
pub struct SystemOperator {
    spec: ProblemSpec,
    xgrid: XGrid,
    xigrid: XiGrid,
    pde: PdeBlock,
    left: LeftBoundary,
    boundary: usize,
    zeta: f64,
    weights: Vec<f64>,
}

pub fn assemble_operator(spec: &ProblemSpec, xgrid: &XGrid, xigrid: &XiGrid) -> Result<SystemOperator> {
    spec.require_undamped_kernel()?;
    if (xigrid.beta() - spec.beta()).abs() > 0.0 {
        return Err(Error::Configuration(format!(
            "xi grid built for beta = {} but the problem has beta = {}",
            xigrid.beta(),
            spec.beta()
        )));
    }
    let class = spec.degeneracy().boundary_class;
    let (left, boundary) = match spec.variant() {
        Variant::P => {
            if class != BoundaryClass::DirichletAtZero {
                return Err(Error::Configuration(
                    "variant P requires m_kappa < 1".into(),
                ));
            }
            (LeftBoundary::ZeroFlux, 0)
        }
        Variant::Pprime => {
            let left = match class {
                BoundaryClass::DirichletAtZero => LeftBoundary::Dirichlet,
                BoundaryClass::WeightedNeumannAtZero => LeftBoundary::ZeroFlux,
            };
            (left, xgrid.len() - 1)
        }
    };
    let kappa = spec.kappa().clone();
    let pde = PdeBlock::assemble(xgrid, |x| kappa.eval(x), left);
    let zeta = spec.zeta();
    let weights = xgrid
        .widths()
        .iter()
        .copied()
        .chain(xigrid.weights().iter().map(|w| zeta * w))
        .collect();
    Ok(SystemOperator {
        spec: spec.clone(),
        xgrid: xgrid.clone(),
        xigrid: xigrid.clone(),
        pde,
        left,
        boundary,
        zeta,
        weights,
    })
}

impl SystemOperator {
    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }
    pub fn xgrid(&self) -> &XGrid {
        &self.xgrid
    }
    pub fn xigrid(&self) -> &XiGrid {
        &self.xigrid
    }
    pub fn pde(&self) -> &PdeBlock {
        &self.pde
    }
    pub fn left_boundary(&self) -> LeftBoundary {
        self.left
    }
    /// Index of the cell whose value stands for the damped boundary trace.
    pub fn boundary_index(&self) -> usize {
        self.boundary
    }
    pub fn zeta(&self) -> f64 {
        self.zeta
    }
    pub fn nx(&self) -> usize {
        self.xgrid.len()
    }
    pub fn nxi(&self) -> usize {
        self.xigrid.len()
    }
    pub fn dim(&self) -> usize {
        self.nx() + self.nxi()
    }

    /// Inner-product weights `(h_1..h_N, zeta w_1..zeta w_M)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Same grids with the damping switched off (zeta = 0). The psi modes
    /// are still driven by the boundary trace but no longer act on y and
    /// carry no energy.
    pub fn undamped(&self) -> Self {
        let mut op = self.clone();
        op.zeta = 0.0;
        let nx = op.nx();
        op.weights[nx..].iter_mut().for_each(|w| *w = 0.0);
        op
    }

    pub fn check_state(&self, s: &StateVector) -> Result<()> {
        if s.y.len() != self.nx() {
            return Err(Error::Shape {
                what: "state y vs spatial grid",
                expected: self.nx(),
                got: s.y.len(),
            });
        }
        if s.psi.len() != self.nxi() {
            return Err(Error::Shape {
                what: "state psi vs xi grid",
                expected: self.nxi(),
                got: s.psi.len(),
            });
        }
        Ok(())
    }


    pub fn apply(&self, s: &StateVector) -> Result<StateVector> {
        self.check_state(s)?;
        Ok(StateVector::from_flat(&self.apply_flat(&s.to_flat(), false), self.nx()))
    }

    /// Adjoint with respect to the weighted inner product.
    pub fn apply_adjoint(&self, s: &StateVector) -> Result<StateVector> {
        self.check_state(s)?;
        Ok(StateVector::from_flat(&self.apply_flat(&s.to_flat(), true), self.nx()))
    }

    pub(crate) fn apply_flat(&self, v: &[Complex64], adjoint: bool) -> Vec<Complex64> {
        let nx = self.nx();
        let (y, psi) = v.split_at(nx);
        // A: (p, c) = (-1, 1); adjoint: (1, -1)
        let (p, c) = if adjoint { (1.0, -1.0) } else { (-1.0, 1.0) };
        let h = self.xgrid.widths();
        let mut out: Vec<Complex64> = self
            .pde
            .apply(y)
            .into_iter()
            .zip(h)
            .map(|(k, hi)| I * p * k / *hi)
            .collect();
        let s = self.coupling_sum(psi);
        let b = self.boundary;
        out[b] -= c * self.zeta / h[b] * s;
        let yb = y[b];
        out.extend(
            psi.iter()
                .zip(self.xigrid.nodes())
                .zip(self.xigrid.eta())
                .map(|((ps, xi), e)| -xi * xi * ps + c * e * yb),
        );
        out
    }

    /// `sum_k w_k eta_k psi_k`.
    fn coupling_sum(&self, psi: &[Complex64]) -> Complex64 {
        psi.iter()
            .zip(self.xigrid.weights())
            .zip(self.xigrid.eta())
            .map(|((p, w), e)| p * (w * e))
            .sum()
    }

    /// `-zeta sum_k w_k xi_k^2 |psi_k|^2`, the exact value of `Re <A Y, Y>_H`.
    pub fn dissipation(&self, s: &StateVector) -> Result<f64> {
        self.check_state(s)?;
        Ok(self.dissipation_flat(&s.psi))
    }

    pub(crate) fn dissipation_flat(&self, psi: &[Complex64]) -> f64 {
        -self.zeta
            * psi
                .iter()
                .zip(self.xigrid.nodes())
                .zip(self.xigrid.weights())
                .map(|((p, xi), w)| w * xi * xi * p.norm_sqr())
                .sum::<f64>()
    }

    /// The damping flux `kappa y_x` at the damped end: `-i zeta S` at x = 0
    /// for P, `+i zeta S` at x = 1 for P'.
    pub fn boundary_flux(&self, psi: &[Complex64]) -> Complex64 {
        let s = self.zeta * self.coupling_sum(psi);
        match self.spec.variant() {
            Variant::P => -I * s,
            Variant::Pprime => I * s,
        }
    }

    /// Factors `sigma - A` (or `sigma - A^*`) for repeated solves.
    pub fn factor_shifted(&self, sigma: Complex64, adjoint: bool) -> Result<ShiftedSolve<'_>> {
        let c = if adjoint { -1.0 } else { 1.0 };
        let p = -c;
        let denom: Vec<Complex64> = self.xigrid.nodes().iter().map(|xi| sigma + xi * xi).collect();
        if let Some(k) = denom.iter().position(|d| d.norm() == 0.0) {
            return Err(Error::SpectralCollision {
                shift: format!("{sigma}"),
                detail: format!("shift equals the relaxation rate of mode {k}"),
            });
        }
        let h = self.xgrid.widths();
        let mut d: Vec<Complex64> = h
            .iter()
            .zip(self.pde.diag())
            .map(|(hi, k)| sigma * hi - I * p * k)
            .collect();
        let off: Vec<Complex64> = self.pde.off().iter().map(|k| -I * p * k).collect();
        let gain: Complex64 = self
            .xigrid
            .weights()
            .iter()
            .zip(self.xigrid.eta())
            .zip(&denom)
            .map(|((w, e), dn)| w * e * e / dn)
            .sum();
        d[self.boundary] += self.zeta * gain;
        let lu = TridiagLu::factor(off.clone(), d, off).map_err(|e| Error::SpectralCollision {
            shift: format!("{sigma}"),
            detail: e.to_string(),
        })?;
        Ok(ShiftedSolve {
            op: self,
            sigma,
            c,
            denom,
            lu,
        })
    }

    /// Dense matrix of `A`, for small-size oracles.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![ZERO; n];
        for j in 0..n {
            e[j] = Complex64::new(1.0, 0.0);
            let col = self.apply_flat(&e, false);
            for (i, v) in col.into_iter().enumerate() {
                m[(i, j)] = v;
            }
            e[j] = ZERO;
        }
        m
    }

    /// Nonzero entries of `A` as `(row, col, value)`, row-major.
    pub fn coo_entries(&self) -> Vec<(usize, usize, Complex64)> {
        let nx = self.nx();
        let h = self.xgrid.widths();
        let (kd, ko) = (self.pde.diag(), self.pde.off());
        let mut out = Vec::new();
        for i in 0..nx {
            if i > 0 {
                out.push((i, i - 1, -I * ko[i - 1] / h[i]));
            }
            out.push((i, i, -I * kd[i] / h[i]));
            if i + 1 < nx {
                out.push((i, i + 1, -I * ko[i] / h[i]));
            }
            if i == self.boundary && self.zeta != 0.0 {
                for (k, (w, e)) in self.xigrid.weights().iter().zip(self.xigrid.eta()).enumerate() {
                    out.push((i, nx + k, Complex64::new(-self.zeta / h[i] * w * e, 0.0)));
                }
            }
        }
        for (k, (xi, e)) in self.xigrid.nodes().iter().zip(self.xigrid.eta()).enumerate() {
            let r = nx + k;
            out.push((r, self.boundary, Complex64::new(*e, 0.0)));
            out.push((r, r, Complex64::new(-xi * xi, 0.0)));
        }
        out
    }

    /// Writes `row col re im` lines.
    pub fn write_coo<W: Write>(&self, mut w: W) -> Result<()> {
        for (r, c, v) in self.coo_entries() {
            writeln!(w, "{r} {c} {} {}", fmt_f64(v.re), fmt_f64(v.im))?;
        }
        Ok(())
    }

    pub fn metadata(&self) -> OperatorMetadata {
        OperatorMetadata {
            spec: self.spec.clone(),
            dim: self.dim(),
            nx: self.nx(),
            nxi: self.nxi(),
            grade: self.xgrid.grade(),
            xi_min: self.xigrid.xi_min(),
            xi_max: self.xigrid.xi_max(),
            zeta: self.zeta,
            boundary_index: self.boundary,
            left_boundary: self.left,
            nnz: self.coo_entries().len(),
            x_nodes: self.xgrid.nodes().to_vec(),
            h: self.xgrid.widths().to_vec(),
            xi_nodes: self.xigrid.nodes().to_vec(),
            xi_weights: self.xigrid.weights().to_vec(),
        }
    }
}

/// Sidecar describing an exported operator.
#[derive(Clone, Debug, Serialize)]
pub struct OperatorMetadata {
    pub spec: ProblemSpec,
    pub dim: usize,
    pub nx: usize,
    pub nxi: usize,
    pub grade: f64,
    pub xi_min: f64,
    pub xi_max: f64,
    pub zeta: f64,
    pub boundary_index: usize,
    pub left_boundary: LeftBoundary,
    pub nnz: usize,
    pub x_nodes: Vec<f64>,
    pub h: Vec<f64>,
    pub xi_nodes: Vec<f64>,
    pub xi_weights: Vec<f64>,
}

/// A factored `sigma - A` (or its adjoint) with the psi block eliminated.
pub struct ShiftedSolve<'a> {
    op: &'a SystemOperator,
    sigma: Complex64,
    c: f64,
    denom: Vec<Complex64>,
    lu: TridiagLu,
}

impl ShiftedSolve<'_> {
    pub fn sigma(&self) -> Complex64 {
        self.sigma
    }

    pub fn pivot_ratio(&self) -> f64 {
        self.lu.pivot_ratio
    }

    /// Solves `(sigma - A) Y = r` for a flat right-hand side.
    pub fn solve_flat(&self, r: &[Complex64]) -> Vec<Complex64> {
        let op = self.op;
        let nx = op.nx();
        let (ry, rpsi) = r.split_at(nx);
        let xi = &op.xigrid;
        let mut y: Vec<Complex64> = ry.iter().zip(op.xgrid.widths()).map(|(v, h)| v * h).collect();
        let drive: Complex64 = rpsi
            .iter()
            .zip(xi.weights())
            .zip(xi.eta())
            .zip(&self.denom)
            .map(|(((rk, w), e), dn)| rk * (w * e) / dn)
            .sum();
        y[op.boundary] -= self.c * op.zeta * drive;
        self.lu.solve(&mut y);
        let yb = y[op.boundary];
        let psi: Vec<Complex64> = rpsi
            .iter()
            .zip(xi.eta())
            .zip(&self.denom)
            .map(|((rk, e), dn)| (rk + self.c * e * yb) / dn)
            .collect();
        y.extend(psi);
        y
    }

    pub fn solve(&self, r: &StateVector) -> Result<StateVector> {
        self.op.check_state(r)?;
        Ok(StateVector::from_flat(&self.solve_flat(&r.to_flat()), self.op.nx()))
    }
}
