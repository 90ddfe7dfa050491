//! Least-squares power-law fits in log-log coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Straight line `log y = intercept + slope log x` with its r^2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares on already-transformed coordinates.
pub fn fit_line(u: &[f64], v: &[f64]) -> Result<LineFit> {
    let n = u.len();
    if n != v.len() {
        return Err(Error::Shape {
            what: "fit abscissae vs ordinates",
            expected: n,
            got: v.len(),
        });
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} points, need at least 2")));
    }
    let nf = n as f64;
    let (mu, mv) = (u.iter().sum::<f64>() / nf, v.iter().sum::<f64>() / nf);
    let (mut suu, mut suv, mut svv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        let (da, db) = (a - mu, b - mv);
        suu += da * da;
        suv += da * db;
        svv += db * db;
    }
    if suu == 0.0 {
        return Err(Error::DegenerateData("abscissae are all equal".into()));
    }
    let slope = suv / suu;
    let r_squared = if svv == 0.0 {
        1.0
    } else {
        (suv * suv / (suu * svv)).clamp(0.0, 1.0)
    };
    Ok(LineFit {
        slope,
        intercept: mv - slope * mu,
        r_squared,
    })
}

/// Fits `y ~ x^slope`; every coordinate must be positive.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if let Some(bad) = x.iter().chain(y).find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::DegenerateData(format!(
            "non-positive or non-finite value {bad} in log-log fit"
        )));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly)
}

/// Chooses the longest run of consecutive points whose local log-log
/// slopes stay within 10% of their median; returns the inclusive index
/// range. Ties go to the low end when `prefer_low`, else the high end.
pub fn stable_slope_window(x: &[f64], y: &[f64], min_points: usize, prefer_low: bool) -> Result<(usize, usize)> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Shape {
            what: "scan abscissae vs ordinates",
            expected: n,
            got: y.len(),
        });
    }
    let slopes: Vec<f64> = (0..n.saturating_sub(1))
        .map(|i| (y[i + 1].ln() - y[i].ln()) / (x[i + 1].ln() - x[i].ln()))
        .collect();
    let mut best: Option<(usize, usize)> = None;
    // slope run [a, b) covers points a..=b
    for a in 0..slopes.len() {
        for b in (a + 1)..=slopes.len() {
            let run = &slopes[a..b];
            if run.iter().any(|s| !s.is_finite()) {
                break;
            }
            let (lo, hi) = run
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &s| (l.min(s), h.max(s)));
            if hi - lo > 0.1 * median(run).abs() {
                break;
            }
            let len = b - a + 1;
            let better = match best {
                None => true,
                Some((s, e)) => {
                    let cur = e - s + 1;
                    len > cur || (len == cur && !prefer_low)
                }
            };
            if better {
                best = Some((a, b));
            }
        }
    }
    match best {
        Some((s, e)) if e - s + 1 >= min_points => Ok((s, e)),
        _ => Err(Error::InsufficientData(format!(
            "no run of at least {min_points} points with a stable local slope"
        ))),
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            i if i == n - 1 => hi,
            i => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}
