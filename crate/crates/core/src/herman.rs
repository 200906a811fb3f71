//! Herman's a-posteriori formulas and the destruction criterion built on them.
//!
//! An invariant graph `y = psi(x)` of the one-degree-of-freedom map induces
//! the circle map `g(x) = x + a1 + l psi(x) + phi(x)`, and invariance is
//! equivalent to
//!
//! `g(x)/(1+l) + l g^{-1}(x)/(1+l) = x + ((1-l) a1 + l a2 + phi(x))/(1+l)`.
//!
//! Differentiating gives bounds on `Dg` in terms of `M = max Dphi` and
//! `m = min Dphi`; when those bounds contradict each other no invariant
//! graph can exist.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{CandidateGraph, MapParams1D, MapParamsDD};
use crate::trigpoly::{default_resolution, extrema, CompiledPoly, TrigPoly};

/// Default strictness margin for the criterion inequalities.
pub const DEFAULT_MARGIN: f64 = 1e-12;
/// Target accuracy of the `g` inverters.
pub const INVERSE_TOL: f64 = 1e-12;

/// `g(x) = x + a1 + l psi(x) + phi(x)` with its derivative.
#[derive(Clone, Debug)]
pub(crate) struct CircleMap {
    lambda: f64,
    alpha1: f64,
    psi: CompiledPoly,
    phi: Option<CompiledPoly>,
    /// Bounds of the periodic part `g(x) - x`.
    shift: (f64, f64),
}

impl CircleMap {
    pub(crate) fn new(lambda: f64, alpha1: f64, psi: &TrigPoly, phi: Option<&TrigPoly>, resolution: usize) -> Self {
        let mut s = psi.to_grid(resolution);
        s.values.iter_mut().for_each(|v| *v *= lambda);
        if let Some(f) = phi {
            let fg = f.to_grid(resolution);
            s.values.iter_mut().zip(&fg.values).for_each(|(a, b)| *a += b);
        }
        let lo = s.min().0 + alpha1;
        let hi = s.max().0 + alpha1;
        // the grid misses the true extrema by at most a few percent of the range
        let pad = 0.1 * (hi - lo) + 1e-9;
        CircleMap {
            lambda,
            alpha1,
            psi: psi.compile(),
            phi: phi.map(TrigPoly::compile),
            shift: (lo - pad, hi + pad),
        }
    }

    pub(crate) fn value_slope(&self, x: f64) -> (f64, f64) {
        let mut g = [0.0];
        let p = self.psi.value_grad(&[x], &mut g);
        let (mut v, mut s) = (x + self.alpha1 + self.lambda * p, 1.0 + self.lambda * g[0]);
        if let Some(f) = &self.phi {
            let fv = f.value_grad(&[x], &mut g);
            v += fv;
            s += g[0];
        }
        (v, s)
    }

    pub(crate) fn value(&self, x: f64) -> f64 {
        self.value_slope(x).0
    }

    /// Solves `g(x) = target` on the lift by Newton steps kept inside a shrinking bracket.
    pub(crate) fn inverse(&self, target: f64) -> Result<f64> {
        let (mut lo, mut hi) = (target - self.shift.1, target - self.shift.0);
        let (glo, ghi) = (self.value(lo), self.value(hi));
        if !(glo <= target && ghi >= target) {
            return Err(Error::NonInvertibleG(format!("no bracket for {target}")));
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (v, s) = self.value_slope(x);
            let r = v - target;
            if r == 0.0 {
                return Ok(x);
            }
            if r < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            if hi - lo <= INVERSE_TOL * 1e-2 {
                return Ok(0.5 * (lo + hi));
            }
            let newton = x - r / s;
            let next = if s > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) {
                return Ok(next);
            }
            x = next;
        }
        Ok(x)
    }

    /// Minimum of `Dg` sampled on a grid.
    pub(crate) fn min_slope(psi: &TrigPoly, phi: Option<&TrigPoly>, lambda: f64, resolution: usize) -> f64 {
        let mut s = psi.sample(&[1], resolution);
        s.values.iter_mut().for_each(|v| *v = 1.0 + lambda * *v);
        if let Some(f) = phi {
            let fs = f.sample(&[1], resolution);
            s.values.iter_mut().zip(&fs.values).for_each(|(a, b)| *a += b);
        }
        s.min().0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HermanReport {
    /// Sup-norm residual of the a-posteriori formula.
    pub residual_formula: f64,
    /// Sup-norm residual of the invariance equation.
    pub residual_invariance: f64,
    /// `min Dg` (one dimension) or `min det Dg` (higher dimension) on the check grid.
    pub min_slope: f64,
    pub resolution: usize,
}

fn check_graph_dim(graph: &CandidateGraph, d: usize) -> Result<()> {
    if graph.dim != d {
        return Err(Error::WrongDimension {
            expected: d,
            got: graph.dim,
        });
    }
    Ok(())
}

fn check_poly_dim(p: &TrigPoly, d: usize) -> Result<()> {
    if p.dim() != d {
        return Err(Error::WrongDimension {
            expected: d,
            got: p.dim(),
        });
    }
    Ok(())
}

pub fn herman_residual_1d(p: &MapParams1D, phi: &TrigPoly, graph: &CandidateGraph) -> Result<HermanReport> {
    check_graph_dim(graph, 1)?;
    check_poly_dim(phi, 1)?;
    let l = p.lambda;
    let res = graph.resolution;
    let psi = graph.interpolant(0)?;
    let fine = 4 * res.max(phi.degree() + 1);
    let min_slope = CircleMap::min_slope(&psi, Some(phi), l, fine);
    if min_slope <= 0.0 {
        return Err(Error::NonMonotoneG { min_slope });
    }
    let g = CircleMap::new(l, p.alpha1, &psi, Some(phi), fine);
    let phi_c = phi.compile();
    let psi_samples = &graph.components[0].values;
    let rows: Vec<(f64, f64)> = (0..res)
        .into_par_iter()
        .map(|i| {
            let x = i as f64 / res as f64;
            let ginv = g.inverse(x)?;
            let gx = g.value(x);
            let f = phi_c.value(&[x]);
            let formula = gx / (1.0 + l) + l * ginv / (1.0 + l)
                - x
                - ((1.0 - l) * p.alpha1 + l * p.alpha2 + f) / (1.0 + l);
            let inv = g.psi.value(&[gx]) - p.alpha2 - l * psi_samples[i] - f;
            Ok((formula.abs(), inv.abs()))
        })
        .collect::<Result<_>>()?;
    Ok(HermanReport {
        residual_formula: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        residual_invariance: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        min_slope,
        resolution: res,
    })
}

/// Sup over the grid of the differentiated formula
/// `Dg(x)/(1+l) + (l/(1+l)) / Dg(g^{-1}(x)) - 1 - Dphi(x)/(1+l)`,
/// with `Dg` taken by central differences of step `h`.
pub fn derivative_identity_residual_1d(
    p: &MapParams1D,
    phi: &TrigPoly,
    graph: &CandidateGraph,
    h: f64,
) -> Result<f64> {
    check_graph_dim(graph, 1)?;
    let l = p.lambda;
    let res = graph.resolution;
    let psi = graph.interpolant(0)?;
    let fine = 4 * res.max(phi.degree() + 1);
    let min_slope = CircleMap::min_slope(&psi, Some(phi), l, fine);
    if min_slope <= 0.0 {
        return Err(Error::NonMonotoneG { min_slope });
    }
    let g = CircleMap::new(l, p.alpha1, &psi, Some(phi), fine);
    let dphi = phi.derivative(&[1]).compile();
    let fd = |x: f64| (g.value(x + h) - g.value(x - h)) / (2.0 * h);
    let worst = (0..res)
        .into_par_iter()
        .map(|i| {
            let x = i as f64 / res as f64;
            let ginv = g.inverse(x)?;
            let r = fd(x) / (1.0 + l) + (l / (1.0 + l)) / fd(ginv) - 1.0 - dphi.value(&[x]) / (1.0 + l);
            Ok(r.abs())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(worst)
}

/// `g(x) = x + l (b + DPhi(x) + A^{-1} Psi(x))` with its Jacobian.
#[derive(Clone, Debug)]
pub(crate) struct TorusMap {
    lambda: f64,
    beta: Vec<f64>,
    psi: Vec<CompiledPoly>,
    phi: Option<CompiledPoly>,
    a_inv: Option<DMatrix<f64>>,
}

impl TorusMap {
    pub(crate) fn new(p: &MapParamsDD, psi: &[TrigPoly], phi: Option<&TrigPoly>) -> Self {
        let a_inv = p
            .a
            .as_ref()
            .map(|_| p.matrix().try_inverse().expect("SPD matrix is invertible"));
        TorusMap {
            lambda: p.lambda,
            beta: p.beta.clone(),
            psi: psi.iter().map(TrigPoly::compile).collect(),
            phi: phi.map(TrigPoly::compile),
            a_inv,
        }
    }

    fn dim(&self) -> usize {
        self.beta.len()
    }

    pub(crate) fn psi_at(&self, x: &[f64]) -> Vec<f64> {
        self.psi.iter().map(|c| c.value(x)).collect()
    }

    /// `(g(x), Dg(x))`.
    pub(crate) fn eval(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.dim();
        let mut psi = DVector::zeros(d);
        let mut dpsi = DMatrix::zeros(d, d);
        let mut grad = vec![0.0; d];
        for (i, c) in self.psi.iter().enumerate() {
            psi[i] = c.value_grad(x, &mut grad);
            for j in 0..d {
                dpsi[(i, j)] = grad[j];
            }
        }
        if let Some(a) = &self.a_inv {
            psi = a * psi;
            dpsi = a * dpsi;
        }
        let (dphi, hess) = match &self.phi {
            Some(f) => {
                let jet = f.jet(x);
                (DVector::from_vec(jet.grad), DMatrix::from_row_slice(d, d, &jet.hess))
            }
            None => (DVector::zeros(d), DMatrix::zeros(d, d)),
        };
        let beta = DVector::from_column_slice(&self.beta);
        let g = DVector::from_column_slice(x) + self.lambda * (beta + dphi + psi);
        let jac = DMatrix::identity(d, d) + self.lambda * (hess + dpsi);
        (g, jac)
    }

    fn newton(&self, target: &DVector<f64>, start: DVector<f64>, homotopy: f64) -> Option<DVector<f64>> {
        let d = self.dim();
        let beta = DVector::from_column_slice(&self.beta);
        // g_t(x) = x + l b + t (g(x) - x - l b)
        let eval_t = |x: &DVector<f64>| {
            let (g, j) = self.eval(x.as_slice());
            let base = x + self.lambda * &beta;
            let gt = &base + homotopy * (g - &base);
            let jt = DMatrix::identity(d, d) + homotopy * (j - DMatrix::identity(d, d));
            (gt, jt)
        };
        let mut x = start;
        let (mut gx, mut jx) = eval_t(&x);
        let mut r = &gx - target;
        for _ in 0..100 {
            if r.amax() <= INVERSE_TOL * 1e-2 {
                return Some(x);
            }
            let step = jx.clone().lu().solve(&r)?;
            let mut t = 1.0;
            let mut improved = false;
            for _ in 0..40 {
                let trial = &x - t * &step;
                let (gt, jt) = eval_t(&trial);
                let rt = &gt - target;
                if rt.amax() < r.amax() {
                    x = trial;
                    gx = gt;
                    jx = jt;
                    r = rt;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                return (r.amax() <= INVERSE_TOL).then_some(x);
            }
        }
        let _ = gx;
        (r.amax() <= INVERSE_TOL).then_some(x)
    }

    /// Damped Newton from the unperturbed inverse, with continuation as fallback.
    pub(crate) fn inverse(&self, target: &[f64]) -> Result<Vec<f64>> {
        let t = DVector::from_column_slice(target);
        let beta = DVector::from_column_slice(&self.beta);
        let start = &t - self.lambda * &beta;
        if let Some(x) = self.newton(&t, start.clone(), 1.0) {
            return Ok(x.as_slice().to_vec());
        }
        let mut x = start;
        for s in 1..=8 {
            x = self
                .newton(&t, x, s as f64 / 8.0)
                .ok_or_else(|| Error::NonInvertibleG(format!("Newton failed at {target:?}")))?;
        }
        Ok(x.as_slice().to_vec())
    }
}

fn grid_point(flat: usize, d: usize, res: usize) -> Vec<f64> {
    let mut p = vec![0.0; d];
    let mut rem = flat;
    for j in (0..d).rev() {
        p[j] = (rem % res) as f64 / res as f64;
        rem /= res;
    }
    p
}

pub fn herman_residual_dd(p: &MapParamsDD, phi: &TrigPoly, graph: &CandidateGraph) -> Result<HermanReport> {
    let d = p.dim();
    check_graph_dim(graph, d)?;
    check_poly_dim(phi, d)?;
    let l = p.lambda;
    let res = graph.resolution;
    let psi: Vec<TrigPoly> = (0..d).map(|j| graph.interpolant(j)).collect::<Result<_>>()?;
    let g = TorusMap::new(p, &psi, Some(phi));
    let a = p.matrix();
    let phi_c = phi.compile();
    let total = res.pow(d as u32);
    let beta = DVector::from_column_slice(&p.beta);
    let rows: Vec<(f64, f64, f64)> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let x = grid_point(flat, d, res);
            let (gx, jac) = g.eval(&x);
            let det = jac.determinant();
            if det <= 0.0 {
                return Err(Error::NonInvertibleG(format!("det Dg = {det:e} at {x:?}")));
            }
            let ginv = DVector::from_vec(g.inverse(&x)?);
            let mut dphi = vec![0.0; d];
            phi_c.value_grad(&x, &mut dphi);
            let dphi = DVector::from_vec(dphi);
            let xv = DVector::from_column_slice(&x);
            let formula = &gx / (1.0 + l) + l * &ginv / (1.0 + l)
                - &xv
                - l * ((1.0 - l) * &beta + &dphi) / (1.0 + l);
            let psi_here = DVector::from_iterator(d, graph.components.iter().map(|c| c.values[flat]));
            let image = DVector::from_vec(g.psi_at(gx.as_slice()));
            let inv = image - l * (psi_here + &a * &dphi);
            Ok((formula.amax(), inv.amax(), det))
        })
        .collect::<Result<_>>()?;
    Ok(HermanReport {
        residual_formula: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        residual_invariance: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        min_slope: rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min),
        resolution: res,
    })
}

/// `(m, M)` of `Dphi` (one dimension) or of `T = (1/d) Laplacian(Phi)`.
///
/// The input is the potential; the derivative is taken internally.
pub fn derivative_extrema(potential: &TrigPoly) -> Result<(f64, f64)> {
    let d = potential.dim();
    let t = if d == 1 {
        potential.derivative(&[1])
    } else {
        (1.0 / d as f64) * &potential.laplacian()
    };
    if t.num_modes() == 0 {
        return Ok((0.0, 0.0));
    }
    let e = extrema(&t, default_resolution(&t))?;
    Ok((e.min.min(0.0), e.max.max(0.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    DestructionCertified,
    NoConclusion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriterionMode {
    Exact1D,
    ExactDD,
    PaperAsymptoticDD,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub lambda: f64,
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub c_lambda: f64,
    /// `1/(1 + c m)`; absent when the guard fires.
    pub lhs: Option<f64>,
    pub case1_rhs: f64,
    pub case2_rhs: f64,
    pub guard: bool,
    pub verdict: Verdict,
    pub mode: CriterionMode,
    pub margin: f64,
    /// Smallest `-m` that the exact Case-2 inequality certifies at this `M`.
    pub exact_threshold: f64,
    pub exact_verdict: Verdict,
    /// Present in higher dimension: `1 - l^2 + l(1+l)/(1-l) M`.
    pub paper_threshold: Option<f64>,
    pub paper_verdict: Option<Verdict>,
    pub modes_disagree: bool,
    /// Present in higher dimension: the sign convention used for `m`.
    pub sign_convention: Option<String>,
}

fn check_inputs(lambda: f64, m: f64, big_m: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::OutOfRange {
            name: "lambda",
            value: lambda,
            range: "(0, 1]",
        });
    }
    if !(m <= 0.0 && big_m >= 0.0) || !m.is_finite() || !big_m.is_finite() {
        return Err(Error::InvalidArgument(format!("need M >= 0 >= m, got m = {m}, M = {big_m}")));
    }
    Ok(())
}

/// `[(s) + sqrt(s^2 - 4 l)] / 2` with `s = 1 + l + M_eff`.
fn case1(lambda: f64, m_eff: f64) -> f64 {
    let s = 1.0 + lambda + m_eff;
    0.5 * (s + (s * s - 4.0 * lambda).max(0.0).sqrt())
}

struct Exact {
    c: f64,
    lhs: Option<f64>,
    r1: f64,
    r2: f64,
    guard: bool,
    threshold: f64,
    verdict: Verdict,
}

fn exact(lambda: f64, m: f64, big_m_eff: f64, c: f64, margin: f64) -> Exact {
    let r1 = case1(lambda, big_m_eff);
    let r2 = r1 / lambda;
    let denom = 1.0 + c * m;
    let guard = denom <= 0.0;
    let lhs = (!guard).then(|| 1.0 / denom);
    let certified = guard || lhs.is_some_and(|v| v > r1 + margin && v > r2 + margin);
    Exact {
        c,
        lhs,
        r1,
        r2,
        guard,
        threshold: (1.0 - 1.0 / r2) / c,
        verdict: if certified {
            Verdict::DestructionCertified
        } else {
            Verdict::NoConclusion
        },
    }
}

pub fn destruction_verdict_1d(lambda: f64, m: f64, big_m: f64) -> Result<CriterionReport> {
    destruction_verdict_1d_with_margin(lambda, m, big_m, DEFAULT_MARGIN)
}

pub fn destruction_verdict_1d_with_margin(lambda: f64, m: f64, big_m: f64, margin: f64) -> Result<CriterionReport> {
    check_inputs(lambda, m, big_m)?;
    let e = exact(lambda, m, big_m, 1.0 / (1.0 + lambda), margin);
    Ok(CriterionReport {
        lambda,
        m,
        big_m,
        c_lambda: e.c,
        lhs: e.lhs,
        case1_rhs: e.r1,
        case2_rhs: e.r2,
        guard: e.guard,
        verdict: e.verdict,
        mode: CriterionMode::Exact1D,
        margin,
        exact_threshold: e.threshold,
        exact_verdict: e.verdict,
        paper_threshold: None,
        paper_verdict: None,
        modes_disagree: false,
        sign_convention: None,
    })
}

/// `1 - l^2 + l(1+l)/(1-l) M`, the published higher-dimensional bound on `-m`.
pub fn paper_threshold_dd(lambda: f64, big_m: f64) -> f64 {
    1.0 - lambda * lambda + lambda * (1.0 + lambda) / (1.0 - lambda) * big_m
}

pub fn destruction_verdict_dd(lambda: f64, m: f64, big_m: f64, mode: CriterionMode) -> Result<CriterionReport> {
    destruction_verdict_dd_with_margin(lambda, m, big_m, mode, DEFAULT_MARGIN)
}

pub fn destruction_verdict_dd_with_margin(
    lambda: f64,
    m: f64,
    big_m: f64,
    mode: CriterionMode,
    margin: f64,
) -> Result<CriterionReport> {
    check_inputs(lambda, m, big_m)?;
    if mode == CriterionMode::Exact1D {
        return Err(Error::InvalidArgument("Exact1D is not a higher-dimensional mode".into()));
    }
    let e = exact(lambda, m, lambda * big_m, lambda / (1.0 + lambda), margin);
    let paper_threshold = if lambda < 1.0 {
        paper_threshold_dd(lambda, big_m)
    } else {
        f64::INFINITY
    };
    let paper_verdict = if -m > paper_threshold + margin {
        Verdict::DestructionCertified
    } else {
        Verdict::NoConclusion
    };
    Ok(CriterionReport {
        lambda,
        m,
        big_m,
        c_lambda: e.c,
        lhs: e.lhs,
        case1_rhs: e.r1,
        case2_rhs: e.r2,
        guard: e.guard,
        verdict: if mode == CriterionMode::ExactDD {
            e.verdict
        } else {
            paper_verdict
        },
        mode,
        margin,
        exact_threshold: e.threshold,
        exact_verdict: e.verdict,
        paper_threshold: Some(paper_threshold),
        paper_verdict: Some(paper_verdict),
        modes_disagree: e.verdict != paper_verdict,
        sign_convention: Some("m = min T, M = max T (same signs as in one dimension)".into()),
    })
}

/// Exact Case-2 failure boundary for `-m` in one dimension: `(1+l)(1 - 1/R_2(M))`.
pub fn exact_case2_boundary_1d(lambda: f64, big_m: f64) -> f64 {
    (1.0 + lambda) * (1.0 - lambda / case1(lambda, big_m))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub lambda: f64,
    /// Root of `lhs(m = -k) = case2_rhs(M = k)` by bisection.
    pub k0: f64,
    /// `2(1+l)/(2+l)`.
    pub closed_form: f64,
    pub abs_diff: f64,
    pub iterations: usize,
}

pub fn standard_map_threshold(lambda: f64) -> Result<ThresholdReport> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::OutOfRange {
            name: "lambda",
            value: lambda,
            range: "(0, 1]",
        });
    }
    let h = |k: f64| (1.0 + lambda) / (1.0 + lambda - k) - case1(lambda, k) / lambda;
    let (mut lo, mut hi) = (0.0, 1.0 + lambda);
    let mut iterations = 0;
    // bisect until the midpoint no longer separates the bracket
    while iterations < 200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let k0 = 0.5 * (lo + hi);
    let closed_form = 2.0 * (1.0 + lambda) / (2.0 + lambda);
    Ok(ThresholdReport {
        lambda,
        k0,
        closed_form,
        abs_diff: (k0 - closed_form).abs(),
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trigpoly::GridFn;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn criterion_examples_one_dimension() {
        let r = destruction_verdict_1d(0.5, 0.0, 0.0).unwrap();
        assert_eq!(r.lhs, Some(1.0));
        assert!((r.case1_rhs - 1.0).abs() < 1e-15 && (r.case2_rhs - 2.0).abs() < 1e-15);
        assert_eq!(r.verdict, Verdict::NoConclusion);

        let r = destruction_verdict_1d(0.5, -0.8, 0.01).unwrap();
        assert!((r.lhs.unwrap() - 1.0 / (1.0 - 0.8 / 1.5)).abs() < 1e-15);
        assert!((r.lhs.unwrap() - 2.142857).abs() < 1e-6);
        assert!((r.case1_rhs - 1.0196).abs() < 1e-4);
        assert!((r.case2_rhs - 2.0393).abs() < 1e-4);
        assert_eq!(r.verdict, Verdict::DestructionCertified);

        let r = destruction_verdict_1d(0.5, -1.0, 1.0).unwrap();
        assert!((r.lhs.unwrap() - 3.0).abs() < 1e-15);
        assert!((r.case2_rhs - (2.5 + 4.25f64.sqrt())).abs() < 1e-14);
        assert_eq!(r.verdict, Verdict::NoConclusion);

        let r = destruction_verdict_1d(0.5, -1.6, 0.0).unwrap();
        assert!(r.guard && r.lhs.is_none());
        assert_eq!(r.verdict, Verdict::DestructionCertified);
        assert!(destruction_verdict_1d(0.5, 0.1, 0.0).is_err());
    }

    #[test]
    fn criterion_examples_higher_dimension() {
        let r = destruction_verdict_dd(0.9, -0.25, 0.001, CriterionMode::ExactDD).unwrap();
        assert!((r.lhs.unwrap() - 1.1343).abs() < 1e-4);
        assert!((r.case2_rhs - 1.1204).abs() < 1e-4);
        assert_eq!(r.verdict, Verdict::DestructionCertified);
        assert_eq!(r.paper_verdict, Some(Verdict::DestructionCertified));
        assert!(!r.modes_disagree);

        let r = destruction_verdict_dd(0.6, -0.8, 0.0, CriterionMode::PaperAsymptoticDD).unwrap();
        assert_eq!(r.verdict, Verdict::DestructionCertified);
        assert_eq!(r.exact_verdict, Verdict::NoConclusion);
        assert!(r.modes_disagree);
        assert!((r.exact_threshold - (1.0 - 0.36) / 0.6).abs() < 1e-12);
        assert!((r.paper_threshold.unwrap() - 0.64).abs() < 1e-12);

        let l: f64 = 0.99;
        let delta = 4.0 / 3.0 * (1.0 - l * l);
        let e = destruction_verdict_dd(l, -delta, 0.0, CriterionMode::ExactDD).unwrap();
        let p = destruction_verdict_dd(l, -delta, 0.0, CriterionMode::PaperAsymptoticDD).unwrap();
        assert!((e.exact_threshold - (1.0 - l * l) / l).abs() < 1e-12);
        assert!((e.exact_threshold / p.paper_threshold.unwrap() - 1.0 - (1.0 - l) / l).abs() < 1e-9);
        assert_eq!(e.verdict, Verdict::DestructionCertified);
        assert_eq!(p.verdict, Verdict::DestructionCertified);
    }

    #[test]
    fn threshold_examples() {
        let r = standard_map_threshold(0.5).unwrap();
        assert!((r.k0 - 1.2).abs() < 1e-10);
        assert!((1.5f64 / (1.5 - 1.2) - 5.0).abs() < 1e-12);
        assert!((case1(0.5, 1.2) / 0.5 - 5.0).abs() < 1e-12);
        assert!((standard_map_threshold(1.0).unwrap().k0 - 4.0 / 3.0).abs() < 1e-10);
        assert!((standard_map_threshold(0.25).unwrap().k0 - 2.5 / 2.25).abs() < 1e-10);
        for i in 1..=20 {
            let l = i as f64 / 20.0;
            assert!(standard_map_threshold(l).unwrap().abs_diff < 1e-8);
        }
        assert!(standard_map_threshold(0.0).is_err());
    }

    #[test]
    fn boundary_slope_matches_asymptotics() {
        for l in [0.3, 0.6] {
            assert!((exact_case2_boundary_1d(l, 0.0) - (1.0 - l * l)).abs() < 1e-14);
            let pts: Vec<(f64, f64)> = (1..=8)
                .map(|j| {
                    let n = 100.0 * 2f64.powi(j);
                    (1.0 / n, exact_case2_boundary_1d(l, 1.0 / n))
                })
                .collect();
            let slope = crate::stats::ols_slope(&pts);
            let theory = l * (1.0 + l) / (1.0 - l);
            assert!((slope / theory - 1.0).abs() < 0.05, "{slope} vs {theory}");
        }
    }

    #[test]
    fn derivative_extrema_examples() {
        let k = 0.7;
        let phi = TrigPoly::sin_mode(&[1], k / (2.0 * PI));
        let (m, mm) = derivative_extrema(&phi).unwrap();
        assert!((m + k).abs() < 1e-12 && (mm - k).abs() < 1e-12);
        let big = TrigPoly::cos_mode(&[1, 0], -1.0 / (2.0 * PI * PI));
        let (m, mm) = derivative_extrema(&big).unwrap();
        assert!((m + 1.0).abs() < 1e-12 && (mm - 1.0).abs() < 1e-12);
        assert_eq!(derivative_extrema(&TrigPoly::zero(1)).unwrap(), (0.0, 0.0));
    }

    fn constant_graph(c: f64) -> CandidateGraph {
        CandidateGraph::constant(64, &[c]).unwrap()
    }

    #[test]
    fn unperturbed_residuals_one_dimension() {
        let p = MapParams1D::new(0.5, 0.3, 1.0).unwrap();
        let zero = TrigPoly::zero(1);
        let r = herman_residual_1d(&p, &zero, &constant_graph(2.0)).unwrap();
        assert!(r.residual_formula < 1e-10 && r.residual_invariance < 1e-10);
        let r = herman_residual_1d(&p, &zero, &constant_graph(2.1)).unwrap();
        assert!((r.residual_invariance - 0.05).abs() < 1e-12);
        assert!(r.residual_formula > 1e-3);
    }

    #[test]
    fn folded_graph_is_rejected() {
        let p = MapParams1D::new(0.5, 0.3, 1.0).unwrap();
        let phi = TrigPoly::sin_mode(&[1], 2.0 / (2.0 * PI));
        assert!(matches!(
            herman_residual_1d(&p, &phi, &constant_graph(2.0)),
            Err(Error::NonMonotoneG { .. })
        ));
    }

    #[test]
    fn circle_map_inverse_is_accurate() {
        let psi = TrigPoly::cos_mode(&[2], 0.3);
        let phi = TrigPoly::sin_mode(&[1], 0.1);
        let g = CircleMap::new(0.5, 0.37, &psi, Some(&phi), 256);
        for i in 0..50 {
            let t = -2.0 + i as f64 * 0.1;
            let x = g.inverse(t).unwrap();
            assert!((g.value(x) - t).abs() < 1e-12);
        }
    }

    #[test]
    fn unperturbed_residuals_higher_dimension() {
        let p = MapParamsDD::new(0.6, vec![0.1, 0.3], None).unwrap();
        let zero = TrigPoly::zero(2);
        let g = CandidateGraph::constant(16, &[0.0, 0.0]).unwrap();
        let r = herman_residual_dd(&p, &zero, &g).unwrap();
        assert!(r.residual_formula < 1e-10 && r.residual_invariance < 1e-10);
        let c = CandidateGraph::constant(16, &[0.2, -0.5]).unwrap();
        let r = herman_residual_dd(&p, &zero, &c).unwrap();
        assert!((r.residual_invariance - 0.4 * 0.5).abs() < 1e-12);
        // matrix variant, zero section
        let pa = MapParamsDD::new(0.6, vec![0.1, 0.3], Some(vec![2.0, 0.0, 0.0, 3.0])).unwrap();
        let phi = TrigPoly::cos_mode(&[1, 0], 0.001);
        let r = herman_residual_dd(&pa, &phi, &g).unwrap();
        assert!(r.residual_invariance > 1e-4);
        let r = herman_residual_dd(&pa, &zero, &g).unwrap();
        assert!(r.residual_formula < 1e-10 && r.residual_invariance < 1e-10);
    }

    #[test]
    fn torus_inverse_is_accurate() {
        let p = MapParamsDD::new(0.8, vec![0.2, 0.1], None).unwrap();
        let psi = vec![TrigPoly::cos_mode(&[0, 1], 0.05), TrigPoly::sin_mode(&[1, 0], 0.02)];
        let phi = TrigPoly::cos_mode(&[1, 1], 0.01);
        let g = TorusMap::new(&p, &psi, Some(&phi));
        let x = g.inverse(&[0.3, 0.9]).unwrap();
        let (gx, _) = g.eval(&x);
        assert!((gx[0] - 0.3).abs() < 1e-12 && (gx[1] - 0.9).abs() < 1e-12);
        let _ = GridFn::from_fn(1, 4, |_| 0.0);
    }

    proptest! {
        #[test]
        fn verdict_monotone_in_depth(l in 0.05f64..0.99, big_m in 0.0f64..2.0, a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let v_lo = destruction_verdict_1d(l, -lo, big_m).unwrap().verdict;
            let v_hi = destruction_verdict_1d(l, -hi, big_m).unwrap().verdict;
            if v_lo == Verdict::DestructionCertified {
                prop_assert_eq!(v_hi, Verdict::DestructionCertified);
            }
            let d_lo = destruction_verdict_dd(l, -lo, big_m, CriterionMode::ExactDD).unwrap().verdict;
            let d_hi = destruction_verdict_dd(l, -hi, big_m, CriterionMode::ExactDD).unwrap().verdict;
            if d_lo == Verdict::DestructionCertified {
                prop_assert_eq!(d_hi, Verdict::DestructionCertified);
            }
        }

        #[test]
        fn rhs_ordering(l in 0.01f64..0.999, big_m in 0.0f64..5.0, m in -3.0f64..0.0) {
            let r = destruction_verdict_1d(l, m, big_m).unwrap();
            prop_assert!(r.case2_rhs >= r.case1_rhs && r.case1_rhs >= 1.0 - 1e-15);
            let certified = r.guard || r.lhs.unwrap() > r.case2_rhs + r.margin;
            prop_assert_eq!(certified, r.verdict == Verdict::DestructionCertified);
        }

        #[test]
        fn exact_boundary_separates_verdicts(l in 0.05f64..0.95, big_m in 0.0f64..1.0) {
            let b = exact_case2_boundary_1d(l, big_m);
            prop_assert_eq!(destruction_verdict_1d(l, -(b * 1.001), big_m).unwrap().verdict, Verdict::DestructionCertified);
            prop_assert_eq!(destruction_verdict_1d(l, -(b * 0.999), big_m).unwrap().verdict, Verdict::NoConclusion);
        }
    }
}
