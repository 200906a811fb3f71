//! Fejér means, de la Vallée Poussin operators and the tensorised Jackson
//! approximation built from them.
//!
//! All operators act in coefficient space. `F_m` tapers mode `k_j` by
//! `(1 - |k_j|/m)_+`; `P_m = 2 F_{2m} - F_m` therefore keeps every mode with
//! `|k_j| <= m`, tapers `m < |k_j| < 2m` by `2 - |k_j|/m`, and kills the rest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trigpoly::{GridFn, TrigPoly};

/// Input accepted by the approximation operators.
#[derive(Clone, Copy, Debug)]
pub enum Source<'a> {
    Poly(&'a TrigPoly),
    Grid(&'a GridFn),
}

impl<'a> From<&'a TrigPoly> for Source<'a> {
    fn from(p: &'a TrigPoly) -> Self {
        Source::Poly(p)
    }
}

impl<'a> From<&'a GridFn> for Source<'a> {
    fn from(g: &'a GridFn) -> Self {
        Source::Grid(g)
    }
}

impl Source<'_> {
    fn dim(&self) -> usize {
        match self {
            Source::Poly(p) => p.dim(),
            Source::Grid(g) => g.dim,
        }
    }

    /// Coefficients of the input; grids must have at least `min_resolution` points per axis.
    /// Grid modes above `cap` (per axis) are not extracted.
    fn coefficients(&self, min_resolution: usize, cap: Option<usize>) -> Result<TrigPoly> {
        match self {
            Source::Poly(p) => Ok((*p).clone()),
            Source::Grid(g) => {
                if g.resolution < min_resolution {
                    return Err(Error::ResolutionTooLow {
                        got: g.resolution,
                        required: min_resolution,
                    });
                }
                let full = g.alias_free_degree();
                g.analyze(cap.map_or(full, |c| c.min(full)))
            }
        }
    }
}

pub fn fejer_multiplier(k: i32, m: usize) -> f64 {
    (1.0 - k.unsigned_abs() as f64 / m as f64).max(0.0)
}

pub fn vallee_poussin_multiplier(k: i32, m: usize) -> f64 {
    2.0 * fejer_multiplier(k, 2 * m) - fejer_multiplier(k, m)
}

fn check_axis(dim: usize, axis: usize) -> Result<()> {
    if axis >= dim {
        return Err(Error::InvalidArgument(format!(
            "axis {axis} out of range for dimension {dim}"
        )));
    }
    Ok(())
}

fn check_order(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidArgument("operator order m must be >= 1".into()));
    }
    Ok(())
}

/// `F_m^{[axis]}(f)`; the result has degree at most `m - 1` along `axis`.
pub fn fejer_mean<'a>(f: impl Into<Source<'a>>, m: usize, axis: usize) -> Result<TrigPoly> {
    let src = f.into();
    check_order(m)?;
    check_axis(src.dim(), axis)?;
    let p = src.coefficients(4 * m + 1, None)?;
    Ok(p.map_coeffs(|k, c| c * fejer_multiplier(k[axis], m)))
}

/// `P_m` applied along each listed axis.
pub fn vallee_poussin<'a>(f: impl Into<Source<'a>>, m: usize, axes: &[usize]) -> Result<TrigPoly> {
    let orders: Vec<(usize, usize)> = axes.iter().map(|&a| (a, m)).collect();
    vallee_poussin_tensor(f, &orders)
}

/// `P_{m_1}^{[j_1]} ... P_{m_k}^{[j_k]}(f)` for `(j, m)` pairs with distinct axes.
pub fn vallee_poussin_tensor<'a>(f: impl Into<Source<'a>>, orders: &[(usize, usize)]) -> Result<TrigPoly> {
    let src = f.into();
    let dim = src.dim();
    let mut seen = vec![false; dim];
    for &(axis, m) in orders {
        check_order(m)?;
        check_axis(dim, axis)?;
        if std::mem::replace(&mut seen[axis], true) {
            return Err(Error::InvalidArgument(format!("axis {axis} listed twice")));
        }
    }
    let min_res = orders.iter().map(|&(_, m)| 4 * m - 1).max().unwrap_or(1);
    // every axis filtered: nothing above 2m - 1 survives
    let cap = seen
        .iter()
        .all(|&s| s)
        .then(|| orders.iter().map(|&(_, m)| 2 * m - 1).max().unwrap_or(0));
    let p = src.coefficients(min_res, cap)?;
    Ok(p.map_coeffs(|k, c| {
        orders
            .iter()
            .fold(c, |acc, &(axis, m)| acc * vallee_poussin_multiplier(k[axis], m))
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    /// Requested degree.
    #[serde(rename = "N")]
    pub degree: usize,
    pub m_per_axis: Vec<usize>,
    /// Sup-norm distance to the input samples.
    pub achieved_error: f64,
    /// Smoothness order used for the bound.
    pub k: u32,
    /// `2^k N^{-k} ||f||_{C^k}` (no absolute constant), when norms were supplied.
    pub bound: Option<f64>,
}

/// Operator order giving degree `2 m - 1 <= n`.
pub fn jackson_order(n: usize) -> usize {
    n.div_ceil(2).max(1)
}

/// Degree-`n` approximation `P_{m,...,m}^{[1..d]}(f)` with `m = floor((n+1)/2)`.
///
/// `ck_norms[j]` is `||f||_{C^j}`; when it reaches index `k` the report
/// carries the scaling bound.
pub fn jackson_approximate(
    f: &GridFn,
    n: usize,
    k: u32,
    ck_norms: Option<&[f64]>,
) -> Result<(TrigPoly, ApproxReport)> {
    if n == 0 {
        return Err(Error::InvalidArgument("degree N must be >= 1".into()));
    }
    let m = n.div_ceil(2);
    let required = 2 * (2 * m - 1) + 1;
    if f.resolution < required {
        return Err(Error::ResolutionTooLow {
            got: f.resolution,
            required,
        });
    }
    let axes: Vec<usize> = (0..f.dim).collect();
    let p = vallee_poussin(f, m, &axes)?;
    let approx = p.to_grid(f.resolution);
    let achieved_error = approx
        .values
        .iter()
        .zip(&f.values)
        .fold(0.0, |acc: f64, (a, b)| acc.max((a - b).abs()));
    let bound = ck_norms
        .and_then(|norms| norms.get(k as usize))
        .map(|&nk| 2f64.powi(k as i32) * (n as f64).powi(-(k as i32)) * nk);
    let report = ApproxReport {
        degree: n,
        m_per_axis: vec![m; f.dim],
        achieved_error,
        k,
        bound,
    };
    Ok((p, report))
}
