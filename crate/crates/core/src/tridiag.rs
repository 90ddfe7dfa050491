//! Complex tridiagonal LU with row partial pivoting, in the layout of
//! LAPACK's gttrf/gttrs (one extra superdiagonal of fill-in).

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct TridiagLu {
    dl: Vec<Complex64>,
    d: Vec<Complex64>,
    du: Vec<Complex64>,
    du2: Vec<Complex64>,
    swapped: Vec<bool>,
    /// Smallest |pivot| relative to the largest, a cheap conditioning hint.
    pub pivot_ratio: f64,
}

impl TridiagLu {
    /// Factors the matrix with sub-diagonal `dl`, diagonal `d` and
    /// super-diagonal `du`.
    pub fn factor(mut dl: Vec<Complex64>, mut d: Vec<Complex64>, mut du: Vec<Complex64>) -> Result<Self> {
        let n = d.len();
        if n == 0 || dl.len() + 1 != n || du.len() + 1 != n {
            return Err(Error::Shape {
                what: "tridiagonal bands",
                expected: n.saturating_sub(1),
                got: dl.len(),
            });
        }
        let zero = Complex64::new(0.0, 0.0);
        let mut du2 = vec![zero; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n - 1 {
            if d[i].l1_norm() >= dl[i].l1_norm() {
                if d[i] == zero {
                    return Err(Error::Numerical(format!("zero pivot at row {i}")));
                }
                let f = dl[i] / d[i];
                dl[i] = f;
                d[i + 1] -= f * du[i];
            } else {
                let f = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = f;
                let tmp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = tmp - f * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -f * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if d[n - 1] == zero {
            return Err(Error::Numerical(format!("zero pivot at row {}", n - 1)));
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for p in &d {
            lo = lo.min(p.norm());
            hi = hi.max(p.norm());
        }
        Ok(Self {
            dl,
            d,
            du,
            du2,
            swapped,
            pivot_ratio: lo / hi,
        })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Solves in place.
    pub fn solve(&self, b: &mut [Complex64]) {
        let n = self.d.len();
        debug_assert_eq!(b.len(), n);
        for i in 0..n - 1 {
            if self.swapped[i] {
                let t = b[i];
                b[i] = b[i + 1];
                b[i + 1] = t - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn matvec(dl: &[Complex64], d: &[Complex64], du: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
        let n = d.len();
        (0..n)
            .map(|i| {
                let mut s = d[i] * x[i];
                if i > 0 {
                    s += dl[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += du[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    #[test]
    fn solves_random_systems_including_pivoting() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 2, 3, 10, 57] {
            let mut r = || c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let dl: Vec<_> = (0..n.saturating_sub(1)).map(|_| r()).collect();
            // small diagonal forces row swaps
            let d: Vec<_> = (0..n).map(|_| r() * 0.01 + c(0.0, 0.0)).collect();
            let du: Vec<_> = (0..n.saturating_sub(1)).map(|_| r()).collect();
            let x: Vec<_> = (0..n).map(|_| r()).collect();
            let mut b = matvec(&dl, &d, &du, &x);
            let lu = TridiagLu::factor(dl.clone(), d.clone(), du.clone()).unwrap();
            lu.solve(&mut b);
            let err = b.iter().zip(&x).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-8, "n={n} err={err}");
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let z = c(0.0, 0.0);
        let e = TridiagLu::factor(vec![z], vec![z, z], vec![z]);
        assert!(e.is_err());
    }
}
