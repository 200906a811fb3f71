//! Simulation side: orbit clouds approximating the attractor, a binned
//! graph/non-graph test, and the graph transform with fold detection.
//!
//! Verdicts here are empirical evidence only.

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::herman::{CircleMap, TorusMap};
use crate::maps::{csv_err, CandidateGraph, MapParams1D, MapParamsDD, PerturbedMap1D, PerturbedMapDD};
use crate::trigpoly::{GridFn, TrigPoly};

pub const OVERFLOW_LIMIT: f64 = 1e8;
pub const DEFAULT_TOL_GRAPH: f64 = 1e-4;
pub const EMPTY_BIN_LIMIT: f64 = 0.05;
pub const MIN_BINS: usize = 16;

/// A map that can be iterated on the cylinder `T^d x R^d`.
pub trait CloudMap: Sync {
    fn dim(&self) -> usize;
    /// One forward step; `x` is left reduced modulo 1.
    fn advance(&self, x: &mut [f64], y: &mut [f64]);
}

impl CloudMap for PerturbedMap1D {
    fn dim(&self) -> usize {
        1
    }

    fn advance(&self, x: &mut [f64], y: &mut [f64]) {
        let (a, b) = self.forward((x[0], y[0]));
        x[0] = a.rem_euclid(1.0);
        y[0] = b;
    }
}

impl CloudMap for PerturbedMapDD {
    fn dim(&self) -> usize {
        PerturbedMapDD::dim(self)
    }

    fn advance(&self, x: &mut [f64], y: &mut [f64]) {
        let (a, b) = self.forward(x, y);
        for (xi, ai) in x.iter_mut().zip(a) {
            *xi = ai.rem_euclid(1.0);
        }
        y.copy_from_slice(&b);
    }
}

/// Recorded states, flattened: point `i` is `xs[i*d..(i+1)*d]`, `ys[i*d..(i+1)*d]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub dim: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.xs.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.dim;
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<String> = (1..=d)
            .map(|i| format!("x{i}"))
            .chain((1..=d).map(|i| format!("y{i}")))
            .collect();
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.len() {
            let row: Vec<String> = self.xs[i * d..(i + 1) * d]
                .iter()
                .chain(&self.ys[i * d..(i + 1) * d])
                .map(|v| v.to_string())
                .collect();
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(())
    }
}

/// Golden-mean rotation, the default `alpha_1`. Rational rotations tend to
/// lock the cloud onto a few periodic sinks.
pub const GOLDEN_ROTATION: f64 = 0.618_033_988_749_894_9;

/// Fractional parts of `sqrt(p)` over the first primes: a rationally
/// independent default drift `beta`.
pub fn default_beta(d: usize) -> Vec<f64> {
    const PRIMES: [f64; 8] = [2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0];
    (0..d).map(|j| PRIMES[j % 8].sqrt().fract()).collect()
}

/// `per_axis x per_axis` starts over `[0,1) x [y* - 2, y* + 2]`.
pub fn default_starts_1d(y_star: f64, per_axis: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut starts = Vec::with_capacity(per_axis * per_axis);
    for i in 0..per_axis {
        for j in 0..per_axis {
            let x = i as f64 / per_axis as f64;
            let y = y_star - 2.0 + 4.0 * j as f64 / (per_axis - 1).max(1) as f64;
            starts.push((vec![x], vec![y]));
        }
    }
    starts
}

/// Starts on a `per_axis^d` grid of angles, momenta on a diagonal in `[-2, 2]^d`.
pub fn default_starts_dd(d: usize, per_axis: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let total = per_axis.pow(d as u32);
    (0..total)
        .map(|flat| {
            let mut x = vec![0.0; d];
            let mut rem = flat;
            for j in (0..d).rev() {
                x[j] = (rem % per_axis) as f64 / per_axis as f64;
                rem /= per_axis;
            }
            let y = vec![-2.0 + 4.0 * (flat % 7) as f64 / 6.0; d];
            (x, y)
        })
        .collect()
}

/// Iterates every start `transient` steps, then records `keep` more states.
/// Starts are processed in parallel; the output order is the start order.
pub fn iterate_cloud<M: CloudMap>(
    map: &M,
    starts: &[(Vec<f64>, Vec<f64>)],
    transient: usize,
    keep: usize,
) -> Result<PointCloud> {
    if transient == 0 || keep == 0 {
        return Err(Error::InvalidArgument("transient and keep must be >= 1".into()));
    }
    let d = map.dim();
    for (x, y) in starts {
        if x.len() != d || y.len() != d {
            return Err(Error::WrongDimension {
                expected: d,
                got: x.len().min(y.len()),
            });
        }
    }
    let chunks: Vec<(Vec<f64>, Vec<f64>)> = starts
        .par_iter()
        .map(|(x0, y0)| {
            let mut x: Vec<f64> = x0.iter().map(|v| v.rem_euclid(1.0)).collect();
            let mut y = y0.clone();
            let mut xs = Vec::with_capacity(keep * d);
            let mut ys = Vec::with_capacity(keep * d);
            for step in 0..transient + keep {
                map.advance(&mut x, &mut y);
                if let Some(v) = y.iter().find(|v| !v.is_finite() || v.abs() > OVERFLOW_LIMIT) {
                    return Err(Error::Overflow { value: v.abs() });
                }
                if step >= transient {
                    xs.extend_from_slice(&x);
                    ys.extend_from_slice(&y);
                }
            }
            Ok((xs, ys))
        })
        .collect::<Result<_>>()?;
    let mut cloud = PointCloud {
        dim: d,
        xs: Vec::with_capacity(starts.len() * keep * d),
        ys: Vec::with_capacity(starts.len() * keep * d),
    };
    for (xs, ys) in chunks {
        cloud.xs.extend(xs);
        cloud.ys.extend(ys);
    }
    Ok(cloud)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphVerdict {
    GraphLike,
    NonGraph,
    Inconclusive,
}

pub fn classify(max_extent: f64, empty_fraction: f64, tol: f64, fold_detected: bool) -> GraphVerdict {
    if fold_detected || max_extent > 10.0 * tol {
        GraphVerdict::NonGraph
    } else if empty_fraction > EMPTY_BIN_LIMIT {
        GraphVerdict::Inconclusive
    } else if max_extent < tol {
        GraphVerdict::GraphLike
    } else {
        GraphVerdict::Inconclusive
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationParameters {
    pub lambda: f64,
    pub alpha: Option<[f64; 2]>,
    pub beta: Option<Vec<f64>>,
    /// Free-form identifier of the perturbation (e.g. `std:k=2`).
    pub perturbation: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttractorReport {
    pub parameters: SimulationParameters,
    pub transient: usize,
    pub keep: usize,
    pub points: usize,
    pub bins_per_axis: usize,
    /// `max - min` of `y` per fiber bin (max over components), `None` for empty bins.
    pub extents: Vec<Option<f64>>,
    pub max_extent: f64,
    pub empty_fraction: f64,
    pub tol_graph: f64,
    pub verdict: GraphVerdict,
    pub fold_detected: bool,
    pub label: String,
}

impl AttractorReport {
    /// Folds in the graph-transform outcome and reclassifies.
    pub fn set_fold_detected(&mut self, fold: bool) {
        self.fold_detected = fold;
        self.verdict = classify(self.max_extent, self.empty_fraction, self.tol_graph, fold);
    }
}

/// Bins the cloud by angle and measures the vertical spread in each fiber.
pub fn graph_test(cloud: &PointCloud, bins: usize, tol_graph: f64) -> Result<AttractorReport> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if bins < MIN_BINS {
        return Err(Error::InvalidArgument(format!("need at least {MIN_BINS} bins, got {bins}")));
    }
    if !(tol_graph > 0.0) {
        return Err(Error::OutOfRange {
            name: "tol_graph",
            value: tol_graph,
            range: "(0, inf)",
        });
    }
    let d = cloud.dim;
    let total = bins.pow(d as u32);
    let mut lo = vec![f64::INFINITY; total * d];
    let mut hi = vec![f64::NEG_INFINITY; total * d];
    let mut count = vec![0usize; total];
    for i in 0..cloud.len() {
        let x = &cloud.xs[i * d..(i + 1) * d];
        let flat = x
            .iter()
            .fold(0, |acc, &v| acc * bins + ((v.rem_euclid(1.0) * bins as f64) as usize).min(bins - 1));
        count[flat] += 1;
        for j in 0..d {
            let y = cloud.ys[i * d + j];
            lo[flat * d + j] = lo[flat * d + j].min(y);
            hi[flat * d + j] = hi[flat * d + j].max(y);
        }
    }
    let extents: Vec<Option<f64>> = (0..total)
        .map(|b| {
            (count[b] > 0).then(|| (0..d).map(|j| hi[b * d + j] - lo[b * d + j]).fold(0.0, f64::max))
        })
        .collect();
    let max_extent = extents.iter().flatten().copied().fold(0.0, f64::max);
    let empty_fraction = count.iter().filter(|&&c| c == 0).count() as f64 / total as f64;
    Ok(AttractorReport {
        parameters: SimulationParameters::default(),
        transient: 0,
        keep: 0,
        points: cloud.len(),
        bins_per_axis: bins,
        extents,
        max_extent,
        empty_fraction,
        tol_graph,
        verdict: classify(max_extent, empty_fraction, tol_graph, false),
        fold_detected: false,
        label: "empirical".into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformStatus {
    Converged,
    FoldDetected,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransformOutcome {
    pub status: TransformStatus,
    /// The fixed point, or the last graph before the fold.
    pub graph: CandidateGraph,
    pub iterations: usize,
    pub last_change: f64,
    /// Ratio of the last two sup-norm changes.
    pub contraction: Option<f64>,
    /// Sup-norm change per iteration.
    pub changes: Vec<f64>,
    /// `min Dg` (one dimension) or `min det Dg` of the last transform.
    pub min_slope: f64,
}

fn check_graph(graph: &CandidateGraph, d: usize) -> Result<()> {
    if graph.dim != d {
        return Err(Error::WrongDimension {
            expected: d,
            got: graph.dim,
        });
    }
    Ok(())
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (u, v)| m.max((u - v).abs()))
}

fn ratio(changes: &[f64]) -> Option<f64> {
    match changes {
        [.., a, b] if *a > 0.0 => Some(b / a),
        _ => None,
    }
}

/// Iterates `psi -> (a2 + l psi + phi) o g^{-1}` with `g = x + a1 + l psi + phi`.
pub fn graph_transform_1d(
    params: &MapParams1D,
    phi: Option<&TrigPoly>,
    psi0: &CandidateGraph,
    max_iter: usize,
    tol: f64,
) -> Result<TransformOutcome> {
    check_graph(psi0, 1)?;
    let res = psi0.resolution;
    let l = params.lambda;
    let fine = 4 * res.max(phi.map_or(0, |p| p.degree()) + 1);
    let phi_c = phi.map(TrigPoly::compile);
    let mut current = psi0.components[0].values.clone();
    let mut changes = Vec::new();
    for it in 0..max_iter {
        let graph = CandidateGraph::from_components(vec![GridFn {
            dim: 1,
            resolution: res,
            values: current.clone(),
        }])?;
        let psi = graph.interpolant(0)?;
        let min_slope = CircleMap::min_slope(&psi, phi, l, fine);
        if min_slope <= 0.0 {
            return Ok(TransformOutcome {
                status: TransformStatus::FoldDetected,
                graph,
                iterations: it,
                last_change: changes.last().copied().unwrap_or(f64::NAN),
                contraction: ratio(&changes),
                changes,
                min_slope,
            });
        }
        let g = CircleMap::new(l, params.alpha1, &psi, phi, fine);
        let psi_c = psi.compile();
        let next: Vec<f64> = (0..res)
            .into_par_iter()
            .map(|i| {
                let x = g.inverse(i as f64 / res as f64)?;
                let f = phi_c.as_ref().map_or(0.0, |p| p.value(&[x]));
                Ok(params.alpha2 + l * psi_c.value(&[x]) + f)
            })
            .collect::<Result<_>>()?;
        let change = sup_diff(&next, &current);
        changes.push(change);
        current = next;
        if change < tol {
            return Ok(TransformOutcome {
                status: TransformStatus::Converged,
                graph: CandidateGraph::from_components(vec![GridFn {
                    dim: 1,
                    resolution: res,
                    values: current,
                }])?,
                iterations: it + 1,
                last_change: change,
                contraction: ratio(&changes),
                changes,
                min_slope,
            });
        }
    }
    Err(Error::MaxIterExceeded {
        iterations: max_iter,
        last_change: changes.last().copied().unwrap_or(f64::NAN),
    })
}

/// Higher-dimensional analogue: `Psi -> l (Psi + A DPhi) o g^{-1}`,
/// `g = x + l (b + DPhi + A^{-1} Psi)`.
pub fn graph_transform_dd(
    params: &MapParamsDD,
    phi: Option<&TrigPoly>,
    psi0: &CandidateGraph,
    max_iter: usize,
    tol: f64,
) -> Result<TransformOutcome> {
    let d = params.dim();
    check_graph(psi0, d)?;
    // validates mode compatibility of the matrix variant
    PerturbedMapDD::new(params.clone(), phi)?;
    let res = psi0.resolution;
    let l = params.lambda;
    let a = params.matrix();
    let total = res.pow(d as u32);
    let phi_c = phi.map(TrigPoly::compile);
    let mut current: Vec<Vec<f64>> = psi0.components.iter().map(|c| c.values.clone()).collect();
    let mut changes = Vec::new();
    let to_graph = |vals: &[Vec<f64>]| {
        CandidateGraph::from_components(
            vals.iter()
                .map(|v| GridFn {
                    dim: d,
                    resolution: res,
                    values: v.clone(),
                })
                .collect(),
        )
    };
    for it in 0..max_iter {
        let graph = to_graph(&current)?;
        let psi: Vec<TrigPoly> = (0..d).map(|j| graph.interpolant(j)).collect::<Result<_>>()?;
        let g = TorusMap::new(params, &psi, phi);
        let points: Vec<Vec<f64>> = (0..total).map(|f| graph.components[0].point(f)).collect();
        let min_det = points
            .par_iter()
            .map(|x| g.eval(x).1.determinant())
            .reduce(|| f64::INFINITY, f64::min);
        if min_det <= 0.0 {
            return Ok(TransformOutcome {
                status: TransformStatus::FoldDetected,
                graph,
                iterations: it,
                last_change: changes.last().copied().unwrap_or(f64::NAN),
                contraction: ratio(&changes),
                changes,
                min_slope: min_det,
            });
        }
        let rows: Vec<Vec<f64>> = points
            .par_iter()
            .map(|target| {
                let x = g.inverse(target)?;
                let mut dphi = vec![0.0; d];
                if let Some(p) = &phi_c {
                    p.value_grad(&x, &mut dphi);
                }
                let adphi = &a * DVector::from_vec(dphi);
                let psi_x = DVector::from_vec(g.psi_at(&x));
                Ok((l * (psi_x + adphi)).as_slice().to_vec())
            })
            .collect::<Result<_>>()?;
        let next: Vec<Vec<f64>> = (0..d).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        let change = (0..d).map(|j| sup_diff(&next[j], &current[j])).fold(0.0, f64::max);
        changes.push(change);
        current = next;
        if change < tol {
            return Ok(TransformOutcome {
                status: TransformStatus::Converged,
                graph: to_graph(&current)?,
                iterations: it + 1,
                last_change: change,
                contraction: ratio(&changes),
                changes,
                min_slope: min_det,
            });
        }
    }
    Err(Error::MaxIterExceeded {
        iterations: max_iter,
        last_change: changes.last().copied().unwrap_or(f64::NAN),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::herman::{derivative_identity_residual_1d, herman_residual_1d, herman_residual_dd};
    use std::f64::consts::PI;

    fn std_map(k: f64) -> TrigPoly {
        TrigPoly::sin_mode(&[1], k / (2.0 * PI))
    }

    #[test]
    fn unperturbed_cloud_collapses_on_the_circle() {
        let p = MapParams1D::new(0.5, 0.3, 1.0).unwrap();
        let map = PerturbedMap1D::new(p, None).unwrap();
        let starts = default_starts_1d(2.0, 16);
        let cloud = iterate_cloud(&map, &starts, 60, 5).unwrap();
        assert_eq!(cloud.len(), 256 * 5);
        assert!(cloud.ys.iter().all(|y| (y - 2.0).abs() < 1e-8));
        assert!(cloud.xs.iter().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn dd_cloud_contracts() {
        let p = MapParamsDD::new(0.5, vec![0.31, 0.17], None).unwrap();
        let map = PerturbedMapDD::new(p, None).unwrap();
        let starts = default_starts_dd(2, 4);
        let cloud = iterate_cloud(&map, &starts, 10, 1).unwrap();
        for (i, (_, y0)) in starts.iter().enumerate() {
            for j in 0..2 {
                assert!(cloud.ys[2 * i + j].abs() <= 0.5f64.powi(11) * y0[j].abs() + 1e-15);
            }
        }
    }

    #[test]
    fn overflow_is_reported() {
        let p = MapParams1D::new(0.5, 0.0, 1e9).unwrap();
        let map = PerturbedMap1D::new(p, None).unwrap();
        assert!(matches!(
            iterate_cloud(&map, &[(vec![0.0], vec![0.0])], 5, 1),
            Err(Error::Overflow { .. })
        ));
    }

    #[test]
    fn clouds_are_deterministic() {
        let p = MapParams1D::new(0.5, 0.1, 0.2).unwrap();
        let phi = std_map(2.0);
        let map = PerturbedMap1D::new(p, Some(&phi)).unwrap();
        let starts = default_starts_1d(p.invariant_height(), 8);
        let a = iterate_cloud(&map, &starts, 50, 20).unwrap();
        let b = iterate_cloud(&map, &starts, 50, 20).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn classification_rules() {
        assert_eq!(classify(1e-9, 0.0, 1e-4, false), GraphVerdict::GraphLike);
        assert_eq!(classify(1e-9, 0.0, 1e-4, true), GraphVerdict::NonGraph);
        assert_eq!(classify(2e-3, 0.5, 1e-4, false), GraphVerdict::NonGraph);
        assert_eq!(classify(5e-4, 0.0, 1e-4, false), GraphVerdict::Inconclusive);
        assert_eq!(classify(1e-9, 0.2, 1e-4, false), GraphVerdict::Inconclusive);
        let empty = PointCloud {
            dim: 1,
            xs: vec![],
            ys: vec![],
        };
        assert!(matches!(graph_test(&empty, 16, 1e-4), Err(Error::EmptyCloud)));
    }

    #[test]
    fn constant_graphs_converge_geometrically() {
        let p = MapParams1D::new(0.5, 0.0, 1.0).unwrap();
        let g0 = CandidateGraph::constant(32, &[0.0]).unwrap();
        let out = graph_transform_1d(&p, None, &g0, 200, 1e-13).unwrap();
        assert_eq!(out.status, TransformStatus::Converged);
        assert!((out.changes[0] - 1.0).abs() < 1e-14 && (out.changes[1] - 0.5).abs() < 1e-14);
        for w in out.changes.windows(2) {
            assert!((w[1] / w[0] - 0.5).abs() < 1e-6);
        }
        assert!((out.contraction.unwrap() - 0.5).abs() < 1e-3);
        assert!(out.graph.components[0].values.iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn small_standard_map_has_an_invariant_graph() {
        let p = MapParams1D::new(0.5, 0.1, 0.4).unwrap();
        for k in [0.05, 0.1] {
            let phi = std_map(k);
            let g0 = CandidateGraph::constant(128, &[p.invariant_height()]).unwrap();
            let out = graph_transform_1d(&p, Some(&phi), &g0, 200, 1e-13).unwrap();
            assert_eq!(out.status, TransformStatus::Converged);
            let r = herman_residual_1d(&p, &phi, &out.graph).unwrap();
            assert!(r.residual_formula < 1e-8 && r.residual_invariance < 1e-8, "{r:?}");
            assert!(derivative_identity_residual_1d(&p, &phi, &out.graph, 1e-5).unwrap() < 1e-5);
        }
    }

    #[test]
    fn large_standard_map_folds() {
        let p = MapParams1D::new(0.5, 0.1, 0.4).unwrap();
        let phi = std_map(2.0);
        let g0 = CandidateGraph::constant(128, &[p.invariant_height()]).unwrap();
        let out = graph_transform_1d(&p, Some(&phi), &g0, 100, 1e-12).unwrap();
        assert_eq!(out.status, TransformStatus::FoldDetected);
    }

    #[test]
    fn dd_transform_fixed_point() {
        let p = MapParamsDD::new(0.8, vec![0.13, 0.29], None).unwrap();
        let phi = TrigPoly::cos_mode(&[1, 0], 0.001);
        let g0 = CandidateGraph::constant(16, &[0.0, 0.0]).unwrap();
        let out = graph_transform_dd(&p, Some(&phi), &g0, 300, 1e-13).unwrap();
        assert_eq!(out.status, TransformStatus::Converged);
        let r = herman_residual_dd(&p, &phi, &out.graph).unwrap();
        assert!(r.residual_formula < 1e-7 && r.residual_invariance < 1e-7, "{r:?}");
    }

    #[test]
    fn cloud_csv_header() {
        let c = PointCloud {
            dim: 1,
            xs: vec![0.25],
            ys: vec![2.0],
        };
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x1,y1\n0.25,2\n");
    }
}
