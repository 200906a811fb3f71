//! The dissipative twist maps, their generating functions and the
//! structural checks (twist hypothesis, Lipschitz bound, symplectic scaling).
//!
//! One degree of freedom:
//! `F(x, y) = (x + a1 + l y + phi(x), a2 + l y + phi(x))`.
//!
//! `d` degrees of freedom, potential `Phi`, optional SPD matrix `A`:
//! `F(x, y) = (x + l (b + DPhi(x) + A^{-1} y), l (y + A DPhi(x)))`.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trigpoly::{CompiledPoly, GridFn, TrigPoly, MEAN_TOL};

/// Closedness tolerance for the sampled curl of a Lagrangian graph.
pub const CURL_TOL: f64 = 1e-6;

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::OutOfRange {
            name: "lambda",
            value: lambda,
            range: "(0, 1)",
        });
    }
    Ok(())
}

fn check_zero_mean(p: &TrigPoly) -> Result<()> {
    let mean = p.mean();
    if mean.abs() > MEAN_TOL {
        return Err(Error::NonZeroMean { mean, tol: MEAN_TOL });
    }
    Ok(())
}

/// `phi(x) = k/(2 pi) sin(2 pi x)`, so that `Dphi = k cos(2 pi x)`.
pub fn standard_map_potential(k: f64) -> TrigPoly {
    TrigPoly::sin_mode(&[1], k / (2.0 * std::f64::consts::PI))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapParams1D {
    pub lambda: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl MapParams1D {
    pub fn new(lambda: f64, alpha1: f64, alpha2: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(MapParams1D { lambda, alpha1, alpha2 })
    }

    /// Height `a2 / (1 - l)` of the unperturbed invariant circle.
    pub fn invariant_height(&self) -> f64 {
        self.alpha2 / (1.0 - self.lambda)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapParamsDD {
    pub lambda: f64,
    pub beta: Vec<f64>,
    /// Row-major `d x d`; `None` means the identity.
    pub a: Option<Vec<f64>>,
}

impl MapParamsDD {
    pub fn new(lambda: f64, beta: Vec<f64>, a: Option<Vec<f64>>) -> Result<Self> {
        check_lambda(lambda)?;
        let d = beta.len();
        if d == 0 {
            return Err(Error::InvalidArgument("beta must have at least one entry".into()));
        }
        if let Some(a) = &a {
            if a.len() != d * d {
                return Err(Error::WrongDimension {
                    expected: d * d,
                    got: a.len(),
                });
            }
            let m = DMatrix::from_row_slice(d, d, a);
            let scale = m.amax().max(1.0);
            if (&m - m.transpose()).amax() > 1e-12 * scale {
                return Err(Error::NotPositiveDefinite);
            }
            if SymmetricEigen::new(m).eigenvalues.min() <= 0.0 {
                return Err(Error::NotPositiveDefinite);
            }
        }
        Ok(MapParamsDD { lambda, beta, a })
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        match &self.a {
            Some(a) => DMatrix::from_row_slice(d, d, a),
            None => DMatrix::identity(d, d),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Inverse,
}

/// The one-degree-of-freedom map with a compiled perturbation.
#[derive(Clone, Debug)]
pub struct PerturbedMap1D {
    pub params: MapParams1D,
    phi: Option<CompiledPoly>,
}

impl PerturbedMap1D {
    pub fn new(params: MapParams1D, phi: Option<&TrigPoly>) -> Result<Self> {
        if let Some(p) = phi {
            if p.dim() != 1 {
                return Err(Error::WrongDimension {
                    expected: 1,
                    got: p.dim(),
                });
            }
            check_zero_mean(p)?;
        }
        Ok(PerturbedMap1D {
            params,
            phi: phi.map(TrigPoly::compile),
        })
    }

    pub fn phi(&self, x: f64) -> f64 {
        self.phi.as_ref().map_or(0.0, |p| p.value(&[x]))
    }

    /// `(phi(x), phi'(x))`.
    pub fn phi_with_slope(&self, x: f64) -> (f64, f64) {
        match &self.phi {
            Some(p) => {
                let mut g = [0.0];
                let v = p.value_grad(&[x], &mut g);
                (v, g[0])
            }
            None => (0.0, 0.0),
        }
    }

    pub fn forward(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let p = &self.params;
        let f = self.phi(x);
        let y1 = p.alpha2 + p.lambda * y + f;
        (x + p.alpha1 - p.alpha2 + y1, y1)
    }

    pub fn inverse(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let p = &self.params;
        let xp = x - y + p.alpha2 - p.alpha1;
        (xp, (y - p.alpha2 - self.phi(xp)) / p.lambda)
    }

    pub fn step(&self, state: (f64, f64), direction: Direction) -> (f64, f64) {
        match direction {
            Direction::Forward => self.forward(state),
            Direction::Inverse => self.inverse(state),
        }
    }
}

/// Single step of the one-degree-of-freedom map.
pub fn step_1d(p: &MapParams1D, phi: Option<&TrigPoly>, state: (f64, f64), direction: Direction) -> Result<(f64, f64)> {
    Ok(PerturbedMap1D::new(*p, phi)?.step(state, direction))
}

/// Checks that `A k` is parallel to `k` on every active mode and returns `A k = mu_k k`'s `mu_k`.
fn mode_eigenvalue(a: &DMatrix<f64>, k: &[i32]) -> Result<f64> {
    let kv = DVector::from_iterator(k.len(), k.iter().map(|&v| v as f64));
    let ak = a * &kv;
    let mu = kv.dot(&ak) / kv.dot(&kv);
    if (&ak - mu * &kv).amax() > 1e-12 * ak.amax().max(1.0) {
        return Err(Error::ModeIncompatible { freq: k.to_vec() });
    }
    Ok(mu)
}

/// `W` with `DW = A DPhi`; requires every mode of `Phi` to be an eigenvector of `A`.
pub fn matrix_potential(a: &DMatrix<f64>, phi: &TrigPoly) -> Result<TrigPoly> {
    let mut coeffs = Vec::new();
    for (k, c) in phi.coeffs() {
        if k.iter().all(|&v| v == 0) {
            continue;
        }
        coeffs.push((k.clone(), c * mode_eigenvalue(a, k)?));
    }
    TrigPoly::from_coeffs(phi.dim(), coeffs)
}

/// The `d`-degree-of-freedom map with a compiled potential.
#[derive(Clone, Debug)]
pub struct PerturbedMapDD {
    pub params: MapParamsDD,
    phi: Option<CompiledPoly>,
    a: Option<DMatrix<f64>>,
    a_inv: Option<DMatrix<f64>>,
}

impl PerturbedMapDD {
    pub fn new(params: MapParamsDD, phi: Option<&TrigPoly>) -> Result<Self> {
        let d = params.dim();
        let a = params.a.as_ref().map(|_| params.matrix());
        if let Some(p) = phi {
            if p.dim() != d {
                return Err(Error::WrongDimension {
                    expected: d,
                    got: p.dim(),
                });
            }
            check_zero_mean(p)?;
            if let Some(a) = &a {
                for (k, _) in p.coeffs() {
                    if k.iter().any(|&v| v != 0) {
                        mode_eigenvalue(a, k)?;
                    }
                }
            }
        }
        let a_inv = a.as_ref().map(|m| m.clone().try_inverse().expect("SPD matrix is invertible"));
        Ok(PerturbedMapDD {
            params,
            phi: phi.map(TrigPoly::compile),
            a,
            a_inv,
        })
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub fn grad_phi(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        if let Some(p) = &self.phi {
            p.value_grad(x, &mut g);
        }
        g
    }

    fn apply(m: &Option<DMatrix<f64>>, v: &[f64]) -> Vec<f64> {
        match m {
            Some(m) => (m * DVector::from_column_slice(v)).as_slice().to_vec(),
            None => v.to_vec(),
        }
    }

    pub fn forward(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let l = self.params.lambda;
        let g = self.grad_phi(x);
        let ainv_y = Self::apply(&self.a_inv, y);
        let a_g = Self::apply(&self.a, &g);
        let xn = (0..x.len())
            .map(|i| x[i] + l * (self.params.beta[i] + g[i] + ainv_y[i]))
            .collect();
        let yn = (0..x.len()).map(|i| l * (y[i] + a_g[i])).collect();
        (xn, yn)
    }

    pub fn inverse(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let l = self.params.lambda;
        let ainv_y = Self::apply(&self.a_inv, y);
        let xp: Vec<f64> = (0..x.len())
            .map(|i| x[i] - l * self.params.beta[i] - ainv_y[i])
            .collect();
        let a_g = Self::apply(&self.a, &self.grad_phi(&xp));
        let yp = (0..x.len()).map(|i| y[i] / l - a_g[i]).collect();
        (xp, yp)
    }

    pub fn step(&self, x: &[f64], y: &[f64], direction: Direction) -> (Vec<f64>, Vec<f64>) {
        match direction {
            Direction::Forward => self.forward(x, y),
            Direction::Inverse => self.inverse(x, y),
        }
    }
}

/// Single step of the `d`-degree-of-freedom map.
pub fn step_dd(
    p: &MapParamsDD,
    phi: Option<&TrigPoly>,
    x: &[f64],
    y: &[f64],
    direction: Direction,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let map = PerturbedMapDD::new(p.clone(), phi)?;
    if x.len() != map.dim() || y.len() != map.dim() {
        return Err(Error::WrongDimension {
            expected: map.dim(),
            got: x.len().min(y.len()),
        });
    }
    Ok(map.step(x, y, direction))
}

/// Central-difference Jacobian with one Richardson extrapolation (`h`, `h/2`).
pub fn numerical_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, z: &[f64], h: f64) -> DMatrix<f64> {
    let n = z.len();
    let central = |step: f64| {
        let mut jac = DMatrix::zeros(n, n);
        let mut zp = z.to_vec();
        for j in 0..n {
            zp[j] = z[j] + step;
            let fp = f(&zp);
            zp[j] = z[j] - step;
            let fm = f(&zp);
            zp[j] = z[j];
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
            }
        }
        jac
    };
    let coarse = central(h);
    let fine = central(h / 2.0);
    (4.0 * fine - coarse) / 3.0
}

/// `max |J^T Omega J - l Omega|` for the canonical `Omega = [[0, I], [-I, 0]]`.
pub fn symplectic_defect(jac: &DMatrix<f64>, lambda: f64) -> f64 {
    let n = jac.nrows() / 2;
    let mut omega = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        omega[(i, n + i)] = 1.0;
        omega[(n + i, i)] = -1.0;
    }
    (jac.transpose() * &omega * jac - lambda * omega).amax()
}

impl PerturbedMap1D {
    pub fn jacobian(&self, state: (f64, f64), h: f64) -> DMatrix<f64> {
        numerical_jacobian(
            |z| {
                let (a, b) = self.forward((z[0], z[1]));
                vec![a, b]
            },
            &[state.0, state.1],
            h,
        )
    }
}

impl PerturbedMapDD {
    pub fn jacobian(&self, x: &[f64], y: &[f64], h: f64) -> DMatrix<f64> {
        let d = self.dim();
        let z: Vec<f64> = x.iter().chain(y).copied().collect();
        numerical_jacobian(
            |z| {
                let (a, b) = self.forward(&z[..d], &z[d..]);
                a.into_iter().chain(b).collect()
            },
            &z,
            h,
        )
    }
}

/// Residuals of the generating equations `l y = -dS/dx`, `Y = dS/dX` at random states.
///
/// The partial derivatives of `S` are taken from its closed form
/// (`W` is built from `Phi` in coefficient space), independently of the
/// map's own update rule.
pub fn generating_function_check(p: &MapParamsDD, phi: Option<&TrigPoly>, samples: usize, seed: u64) -> Result<f64> {
    let map = PerturbedMapDD::new(p.clone(), phi)?;
    let d = p.dim();
    let a = p.matrix();
    let w = match phi {
        Some(f) => Some(matrix_potential(&a, f)?.compile()),
        None => None,
    };
    let l = p.lambda;
    let beta = DVector::from_column_slice(&p.beta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..2.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (xn, yn) = map.forward(&x, &y);
        let dx = DVector::from_column_slice(&xn) - DVector::from_column_slice(&x);
        let mut dw = vec![0.0; d];
        if let Some(w) = &w {
            w.value_grad(&x, &mut dw);
        }
        let dw = DVector::from_column_slice(&dw);
        // S = <X-x, A(X-x)>/2 - l <b, A(X-x)> + l W(x)
        let ds_dx = -(&a * &dx) + l * (&a * &beta) + l * dw;
        let ds_d_big_x = &a * &dx - l * (&a * &beta);
        for i in 0..d {
            worst = worst.max((l * y[i] + ds_dx[i]).abs());
            worst = worst.max((yn[i] - ds_d_big_x[i]).abs());
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// Minimum over the grid of the smallest eigenvalue of `d2S/dx2`.
    pub min_eigenvalue_xx: f64,
    /// Smallest eigenvalue of `d2S/dX2` (constant).
    pub min_eigenvalue_big_xx: f64,
    /// Largest eigenvalue of `d2S/dxdX` (constant, must be negative).
    pub max_eigenvalue_mixed: f64,
    pub worst_point: Vec<f64>,
    pub h1_holds: bool,
    /// Superlinear growth is automatic for the quadratic generating function.
    pub h2_holds: bool,
    pub resolution: usize,
}

/// `d2S/dx2 = A + l D2W` sampled on the grid, row-major per point.
fn hessians_xx(p: &MapParamsDD, phi: &TrigPoly, resolution: usize) -> Result<Vec<DMatrix<f64>>> {
    let d = p.dim();
    if phi.dim() != d {
        return Err(Error::WrongDimension {
            expected: d,
            got: phi.dim(),
        });
    }
    let a = p.matrix();
    let w = matrix_potential(&a, phi)?;
    let mut second: Vec<Vec<GridFn>> = vec![Vec::new(); d];
    for (i, row) in second.iter_mut().enumerate() {
        for j in 0..d {
            let mut mi = vec![0u32; d];
            mi[i] += 1;
            mi[j] += 1;
            row.push(w.sample(&mi, resolution));
        }
    }
    let total = resolution.pow(d as u32);
    Ok((0..total)
        .map(|idx| DMatrix::from_fn(d, d, |i, j| a[(i, j)] + p.lambda * second[i][j].values[idx]))
        .collect())
}

pub fn hypothesis_check(p: &MapParamsDD, phi: &TrigPoly, resolution: usize) -> Result<HypothesisReport> {
    let hs = hessians_xx(p, phi, resolution)?;
    let (mut worst, mut worst_idx) = (f64::INFINITY, 0);
    for (i, h) in hs.iter().enumerate() {
        let e = SymmetricEigen::new(h.clone()).eigenvalues.min();
        if e < worst {
            worst = e;
            worst_idx = i;
        }
    }
    let a_min = SymmetricEigen::new(p.matrix()).eigenvalues.min();
    let grid = GridFn {
        dim: p.dim(),
        resolution,
        values: Vec::new(),
    };
    Ok(HypothesisReport {
        min_eigenvalue_xx: worst,
        min_eigenvalue_big_xx: a_min,
        max_eigenvalue_mixed: -a_min,
        worst_point: grid.point(worst_idx),
        h1_holds: worst > 0.0 && a_min > 0.0,
        h2_holds: true,
        resolution,
    })
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// A-priori bound on `|DPsi|` for invariant Lagrangian graphs (max-row-sum norm).
pub fn lipschitz_bound(p: &MapParamsDD, phi: &TrigPoly, resolution: usize) -> Result<f64> {
    let hs = hessians_xx(p, phi, resolution)?;
    let mut bound = inf_norm(&p.matrix());
    for h in &hs {
        let e = SymmetricEigen::new(h.clone()).eigenvalues.min();
        if e <= 0.0 {
            return Err(Error::HypothesisFailed { min_eigenvalue: e });
        }
        bound = bound.max(inf_norm(h) / p.lambda);
    }
    Ok(bound)
}

/// `Psi = c + D eta`, the exactness certificate of a Lagrangian graph.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LagrangianWitness {
    pub c: Vec<f64>,
    pub eta: TrigPoly,
}

/// A sampled section `x -> (x, Psi(x))` of the cylinder.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CandidateGraph {
    pub dim: usize,
    pub resolution: usize,
    /// One grid per component of `Psi` (a single grid in one dimension).
    pub components: Vec<GridFn>,
    pub witness: Option<LagrangianWitness>,
}

impl CandidateGraph {
    pub fn from_components(components: Vec<GridFn>) -> Result<Self> {
        let dim = components
            .first()
            .ok_or_else(|| Error::InvalidGraph("no components".into()))?
            .dim;
        let resolution = components[0].resolution;
        if components.len() != dim {
            return Err(Error::InvalidGraph(format!(
                "{} components for dimension {dim}",
                components.len()
            )));
        }
        for c in &components {
            if c.dim != dim || c.resolution != resolution || c.values.len() != resolution.pow(dim as u32) {
                return Err(Error::InvalidGraph("components disagree in shape".into()));
            }
            if c.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidGraph("non-finite sample".into()));
            }
        }
        Ok(CandidateGraph {
            dim,
            resolution,
            components,
            witness: None,
        })
    }

    pub fn constant(resolution: usize, c: &[f64]) -> Result<Self> {
        let d = c.len();
        Self::from_components(c.iter().map(|&v| GridFn::from_fn(d, resolution, |_| v)).collect())
    }

    /// Samples `c + D eta`.
    pub fn from_witness(resolution: usize, c: Vec<f64>, eta: TrigPoly) -> Result<Self> {
        let d = c.len();
        if eta.dim() != d {
            return Err(Error::WrongDimension {
                expected: d,
                got: eta.dim(),
            });
        }
        let components = (0..d)
            .map(|j| {
                let mut mi = vec![0u32; d];
                mi[j] = 1;
                let mut g = eta.sample(&mi, resolution);
                g.values.iter_mut().for_each(|v| *v += c[j]);
                g
            })
            .collect();
        let mut graph = Self::from_components(components)?;
        graph.witness = Some(LagrangianWitness { c, eta });
        Ok(graph)
    }

    /// Trigonometric interpolant of component `j`.
    pub fn interpolant(&self, j: usize) -> Result<TrigPoly> {
        let g = &self.components[j];
        g.analyze(g.alias_free_degree())
    }

    /// Sup of `|d_i Psi_j - d_j Psi_i|` by spectral differentiation.
    pub fn curl(&self) -> Result<f64> {
        let d = self.dim;
        let polys: Vec<TrigPoly> = (0..d).map(|j| self.interpolant(j)).collect::<Result<_>>()?;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i + 1..d {
                let mut ei = vec![0u32; d];
                ei[i] = 1;
                let mut ej = vec![0u32; d];
                ej[j] = 1;
                let a = polys[j].sample(&ei, self.resolution);
                let b = polys[i].sample(&ej, self.resolution);
                for (u, v) in a.values.iter().zip(&b.values) {
                    worst = worst.max((u - v).abs());
                }
            }
        }
        Ok(worst)
    }

    /// Rejects graphs whose witness is inconsistent with the samples or not closed.
    pub fn validate(&self) -> Result<()> {
        if let Some(w) = &self.witness {
            let curl = self.curl()?;
            if curl > CURL_TOL {
                return Err(Error::InvalidGraph(format!("curl {curl:e} exceeds {CURL_TOL:e}")));
            }
            let resampled = Self::from_witness(self.resolution, w.c.clone(), w.eta.clone())?;
            for (a, b) in resampled.components.iter().zip(&self.components) {
                let diff = a.values.iter().zip(&b.values).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
                if diff > CURL_TOL {
                    return Err(Error::InvalidGraph(format!("witness mismatch {diff:e}")));
                }
            }
        }
        Ok(())
    }
}

/// Writes rows `k, x_1..x_d, y_1..y_d`.
pub fn write_orbit_csv<W: Write>(out: W, orbit: &[(Vec<f64>, Vec<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = orbit.first().map_or(0, |s| s.0.len());
    let mut header = vec!["k".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.extend((1..=d).map(|i| format!("y{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (k, (x, y)) in orbit.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(x.iter().chain(y).map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}
