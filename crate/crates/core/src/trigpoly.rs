//! Real trigonometric polynomials on the d-torus `[0,1)^d`.
//!
//! A [`TrigPoly`] stores complex Fourier amplitudes `c_k` of
//! `p(x) = sum_k c_k exp(2 pi i k.x)` with `c_{-k} = conj(c_k)`, so every
//! operator here (derivatives, antiderivative, inverse Laplacian, the
//! approximation multipliers) is a coefficient-wise map. Sampling goes
//! through the FFT; pointwise evaluation uses per-axis phase tables.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fft::{fft_nd, signed_freq, unflatten, wrap_freq};

/// Amplitudes below this fraction of the largest one are dropped.
pub const PRUNE_RELATIVE: f64 = 1e-15;
/// Zero-mean preconditions are checked against this.
pub const MEAN_TOL: f64 = 1e-12;
/// Gradient magnitude at which extremum polishing stops.
pub const STATIONARITY_TOL: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-12;
const TWO_PI: f64 = 2.0 * PI;

/// Integer frequency vector.
pub type Freq = Vec<i32>;

#[derive(Clone, Debug, PartialEq)]
pub struct TrigPoly {
    dim: usize,
    degree: usize,
    coeffs: BTreeMap<Freq, Complex64>,
}

/// Value, gradient and (row-major) Hessian at one point.
#[derive(Clone, Debug)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl TrigPoly {
    pub fn zero(dim: usize) -> Self {
        Self::constant(dim, 0.0)
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        let mut coeffs = BTreeMap::new();
        coeffs.insert(vec![0; dim], Complex64::new(c, 0.0));
        TrigPoly {
            dim,
            degree: 0,
            coeffs,
        }
    }

    /// `amp * cos(2 pi k.x)`.
    pub fn cos_mode(freq: &[i32], amp: f64) -> Self {
        let dim = freq.len();
        if freq.iter().all(|&k| k == 0) {
            return Self::constant(dim, amp);
        }
        let neg: Freq = freq.iter().map(|k| -k).collect();
        let half = Complex64::new(amp / 2.0, 0.0);
        Self::from_map(dim, [(freq.to_vec(), half), (neg, half)].into_iter().collect())
    }

    /// `amp * sin(2 pi k.x)`.
    pub fn sin_mode(freq: &[i32], amp: f64) -> Self {
        let dim = freq.len();
        if freq.iter().all(|&k| k == 0) {
            return Self::zero(dim);
        }
        let neg: Freq = freq.iter().map(|k| -k).collect();
        Self::from_map(
            dim,
            [
                (freq.to_vec(), Complex64::new(0.0, -amp / 2.0)),
                (neg, Complex64::new(0.0, amp / 2.0)),
            ]
            .into_iter()
            .collect(),
        )
    }

    /// Builds a polynomial from explicit amplitudes.
    ///
    /// Duplicate frequencies are summed. The input must be conjugate
    /// symmetric to within `1e-12` of the largest amplitude; the stored
    /// coefficients are then symmetrised exactly.
    pub fn from_coeffs<I>(dim: usize, coeffs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Freq, Complex64)>,
    {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        let mut map: BTreeMap<Freq, Complex64> = BTreeMap::new();
        for (k, c) in coeffs {
            if k.len() != dim {
                return Err(Error::WrongDimension {
                    expected: dim,
                    got: k.len(),
                });
            }
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite amplitude at {k:?}"
                )));
            }
            *map.entry(k).or_default() += c;
        }
        let scale = map.values().map(|c| c.norm()).fold(0.0, f64::max);
        let tol = SYMMETRY_TOL * scale.max(1e-300);
        let mut sym = BTreeMap::new();
        for (k, &c) in &map {
            let neg: Freq = k.iter().map(|v| -v).collect();
            let partner = map.get(&neg).copied().unwrap_or_default();
            if (c - partner.conj()).norm() > tol {
                return Err(Error::NotReal { freq: k.clone() });
            }
            sym.insert(k.clone(), (c + partner.conj()) / 2.0);
            sym.insert(neg, (partner + c.conj()) / 2.0);
        }
        Ok(Self::from_map(dim, sym))
    }

    /// Prunes and fixes up bookkeeping; the map is assumed conjugate symmetric.
    fn from_map(dim: usize, mut coeffs: BTreeMap<Freq, Complex64>) -> Self {
        let zero: Freq = vec![0; dim];
        if let Some(c0) = coeffs.get_mut(&zero) {
            c0.im = 0.0;
        }
        let largest = coeffs.values().map(|c| c.norm()).fold(0.0, f64::max);
        let cutoff = PRUNE_RELATIVE * largest;
        coeffs.retain(|k, c| c.norm() >= cutoff && c.norm() > 0.0 || k.iter().all(|&v| v == 0));
        coeffs.entry(zero).or_default();
        let degree = coeffs
            .keys()
            .flat_map(|k| k.iter().map(|v| v.unsigned_abs() as usize))
            .max()
            .unwrap_or(0);
        TrigPoly {
            dim,
            degree,
            coeffs,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest `|k_j|` over stored modes.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeff(&self, freq: &[i32]) -> Complex64 {
        self.coeffs.get(freq).copied().unwrap_or_default()
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (&Freq, &Complex64)> {
        self.coeffs.iter()
    }

    /// The mean over the torus, i.e. `c_0`.
    pub fn mean(&self) -> f64 {
        self.coeff(&vec![0; self.dim]).re
    }

    /// Largest coefficient-wise difference to `other`.
    pub fn max_coeff_diff(&self, other: &TrigPoly) -> f64 {
        assert_eq!(self.dim, other.dim);
        let mut worst: f64 = 0.0;
        for (k, c) in &self.coeffs {
            worst = worst.max((c - other.coeff(k)).norm());
        }
        for (k, c) in &other.coeffs {
            if !self.coeffs.contains_key(k) {
                worst = worst.max(c.norm());
            }
        }
        worst
    }

    /// Applies `f(k, c_k)` to every stored amplitude.
    ///
    /// `f` must map conjugate pairs to conjugate pairs (real even or
    /// imaginary odd multipliers do).
    pub fn map_coeffs(&self, f: impl Fn(&[i32], Complex64) -> Complex64) -> TrigPoly {
        let map = self.coeffs.iter().map(|(k, &c)| (k.clone(), f(k, c))).collect();
        Self::from_map(self.dim, map)
    }

    pub fn derivative(&self, multi_index: &[u32]) -> TrigPoly {
        assert_eq!(multi_index.len(), self.dim, "multi-index length");
        self.map_coeffs(|k, c| c * derivative_multiplier(k, multi_index))
    }

    pub fn laplacian(&self) -> TrigPoly {
        self.map_coeffs(|k, c| c * (-4.0 * PI * PI * freq_norm_sq(k)))
    }

    /// Zero-mean antiderivative in one dimension: `c_k / (2 pi i k)`.
    pub fn antiderivative_1d(&self) -> Result<TrigPoly> {
        if self.dim != 1 {
            return Err(Error::WrongDimension {
                expected: 1,
                got: self.dim,
            });
        }
        self.require_zero_mean()?;
        Ok(self.map_coeffs(|k, c| {
            if k[0] == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                c / Complex64::new(0.0, TWO_PI * k[0] as f64)
            }
        }))
    }

    /// Zero-mean solution of `Laplacian(q) = self`.
    pub fn inverse_laplacian(&self) -> Result<TrigPoly> {
        self.require_zero_mean()?;
        Ok(self.map_coeffs(|k, c| {
            let n2 = freq_norm_sq(k);
            if n2 == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                -c / (4.0 * PI * PI * n2)
            }
        }))
    }

    fn require_zero_mean(&self) -> Result<()> {
        let mean = self.mean();
        if mean.abs() > MEAN_TOL {
            return Err(Error::NonZeroMean {
                mean,
                tol: MEAN_TOL,
            });
        }
        Ok(())
    }

    /// Evaluates the function at a point.
    pub fn eval(&self, point: &[f64]) -> f64 {
        self.eval_derivative(point, &vec![0; self.dim])
    }

    /// Exact partial derivative `D^a p(point)`.
    pub fn eval_derivative(&self, point: &[f64], multi_index: &[u32]) -> f64 {
        assert_eq!(point.len(), self.dim, "point dimension");
        assert_eq!(multi_index.len(), self.dim, "multi-index length");
        let tables = self.phase_tables(point);
        let n = self.degree as i32;
        let plain = multi_index.iter().all(|&o| o == 0);
        let mut acc = 0.0;
        for (k, c) in &self.coeffs {
            let mut z = *c;
            for (j, &kj) in k.iter().enumerate() {
                z *= tables[j][(kj + n) as usize];
            }
            if !plain {
                z *= derivative_multiplier(k, multi_index);
            }
            acc += z.re;
        }
        acc
    }

    /// Value, gradient and Hessian in one pass over the modes.
    pub fn jet(&self, point: &[f64]) -> Jet {
        assert_eq!(point.len(), self.dim, "point dimension");
        let d = self.dim;
        let tables = self.phase_tables(point);
        let n = self.degree as i32;
        let mut value = 0.0;
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        // conjugate symmetry: sum the half-space k >= 0 and double
        let zero = vec![0i32; d];
        for (k, c) in self.coeffs.range(zero.clone()..) {
            let w = if *k == zero { 1.0 } else { 2.0 };
            let mut z = *c * w;
            for (j, &kj) in k.iter().enumerate() {
                z *= tables[j][(kj + n) as usize];
            }
            value += z.re;
            for a in 0..d {
                let ka = k[a] as f64;
                grad[a] -= TWO_PI * ka * z.im;
                for b in a..d {
                    hess[a * d + b] -= TWO_PI * TWO_PI * ka * k[b] as f64 * z.re;
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                hess[a * d + b] = hess[b * d + a];
            }
        }
        Jet { value, grad, hess }
    }

    /// `tables[j][k + N] = exp(2 pi i k x_j)` for `|k| <= N`.
    fn phase_tables(&self, point: &[f64]) -> Vec<Vec<Complex64>> {
        let n = self.degree;
        point
            .iter()
            .map(|&x| {
                let x = x - x.floor();
                let mut row = vec![Complex64::new(0.0, 0.0); 2 * n + 1];
                row[n] = Complex64::new(1.0, 0.0);
                let base = Complex64::cis(TWO_PI * x);
                let mut cur = Complex64::new(1.0, 0.0);
                for k in 1..=n {
                    // reseed periodically so the recurrence does not drift
                    cur = if k % 64 == 0 {
                        Complex64::cis(TWO_PI * ((k as f64 * x) % 1.0))
                    } else {
                        cur * base
                    };
                    row[n + k] = cur;
                    row[n - k] = cur.conj();
                }
                row
            })
            .collect()
    }

    /// Samples `D^a p` on the uniform grid with `resolution` points per axis.
    ///
    /// Coarse grids are obtained by subsampling an alias-free FFT grid, so
    /// any resolution is accepted.
    pub fn sample(&self, multi_index: &[u32], resolution: usize) -> GridFn {
        assert!(resolution >= 1);
        assert_eq!(multi_index.len(), self.dim, "multi-index length");
        let d = self.dim;
        let needed = 2 * self.degree + 1;
        let factor = needed.div_ceil(resolution);
        let fine = resolution * factor;
        let mut data = vec![Complex64::new(0.0, 0.0); fine.pow(d as u32)];
        for (k, c) in &self.coeffs {
            data[wrap_freq(k, fine)] += c * derivative_multiplier(k, multi_index);
        }
        fft_nd(&mut data, d, fine, true);
        let values = if factor == 1 {
            data.iter().map(|z| z.re).collect()
        } else {
            let total = resolution.pow(d as u32);
            let mut idx = vec![0usize; d];
            (0..total)
                .map(|i| {
                    unflatten(i, d, resolution, &mut idx);
                    let flat = idx.iter().fold(0, |acc, &v| acc * fine + v * factor);
                    data[flat].re
                })
                .collect()
        };
        GridFn {
            dim: d,
            resolution,
            values,
        }
    }

    pub fn to_grid(&self, resolution: usize) -> GridFn {
        self.sample(&vec![0; self.dim], resolution)
    }

    fn check_same_dim(&self, other: &TrigPoly) {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
    }
}

/// `prod_j (2 pi i k_j)^{a_j}`.
pub fn derivative_multiplier(k: &[i32], multi_index: &[u32]) -> Complex64 {
    let mut m = Complex64::new(1.0, 0.0);
    for (&kj, &o) in k.iter().zip(multi_index) {
        if o > 0 {
            m *= Complex64::new(0.0, TWO_PI * kj as f64).powu(o);
        }
    }
    m
}

fn freq_norm_sq(k: &[i32]) -> f64 {
    k.iter().map(|&v| (v as f64) * (v as f64)).sum()
}

impl Add for &TrigPoly {
    type Output = TrigPoly;
    fn add(self, rhs: &TrigPoly) -> TrigPoly {
        self.check_same_dim(rhs);
        let mut map = self.coeffs.clone();
        for (k, c) in &rhs.coeffs {
            *map.entry(k.clone()).or_default() += c;
        }
        TrigPoly::from_map(self.dim, map)
    }
}

impl Sub for &TrigPoly {
    type Output = TrigPoly;
    fn sub(self, rhs: &TrigPoly) -> TrigPoly {
        self + &(-rhs)
    }
}

impl Neg for &TrigPoly {
    type Output = TrigPoly;
    fn neg(self) -> TrigPoly {
        self.map_coeffs(|_, c| -c)
    }
}

impl Mul<&TrigPoly> for f64 {
    type Output = TrigPoly;
    fn mul(self, rhs: &TrigPoly) -> TrigPoly {
        rhs.map_coeffs(|_, c| c * self)
    }
}

#[derive(Serialize, Deserialize)]
struct TrigPolyDoc {
    dim: usize,
    degree: usize,
    coeffs: Vec<(Freq, [f64; 2])>,
}

impl Serialize for TrigPoly {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TrigPolyDoc {
            dim: self.dim,
            degree: self.degree,
            coeffs: self
                .coeffs
                .iter()
                // `+ 0.0` drops negative zeros, which do not survive re-symmetrisation
                .map(|(k, c)| (k.clone(), [c.re + 0.0, c.im + 0.0]))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TrigPoly {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = TrigPolyDoc::deserialize(d)?;
        let p = TrigPoly::from_coeffs(
            doc.dim,
            doc.coeffs
                .into_iter()
                .map(|(k, [re, im])| (k, Complex64::new(re, im))),
        )
        .map_err(serde::de::Error::custom)?;
        if p.degree > doc.degree {
            return Err(serde::de::Error::custom(format!(
                "declared degree {} below stored degree {}",
                doc.degree, p.degree
            )));
        }
        Ok(p)
    }
}

/// Which operation [`calculus`] performs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CalculusKind {
    Mean,
    Antiderivative1d,
    InverseLaplacian,
}

#[derive(Clone, Debug)]
pub enum CalculusOutput {
    Scalar(f64),
    Poly(TrigPoly),
}

pub fn calculus(p: &TrigPoly, kind: CalculusKind) -> Result<CalculusOutput> {
    Ok(match kind {
        CalculusKind::Mean => CalculusOutput::Scalar(p.mean()),
        CalculusKind::Antiderivative1d => CalculusOutput::Poly(p.antiderivative_1d()?),
        CalculusKind::InverseLaplacian => CalculusOutput::Poly(p.inverse_laplacian()?),
    })
}

/// Flat half-spectrum copy of a polynomial for fast repeated point evaluation.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    dim: usize,
    degree: usize,
    freqs: Vec<i32>,
    /// Coefficients of the half-space `k >= 0`, doubled off the origin.
    coeffs: Vec<Complex64>,
    /// One dimension only: the same coefficients densely indexed by `k = 0..=N`.
    dense: Option<Vec<Complex64>>,
}

impl TrigPoly {
    pub fn compile(&self) -> CompiledPoly {
        let zero = vec![0i32; self.dim];
        let mut freqs = Vec::new();
        let mut coeffs = Vec::new();
        for (k, c) in self.coeffs.range(zero.clone()..) {
            freqs.extend_from_slice(k);
            coeffs.push(if *k == zero { *c } else { 2.0 * c });
        }
        let dense = (self.dim == 1).then(|| {
            let mut v = vec![Complex64::new(0.0, 0.0); self.degree + 1];
            for (k, c) in freqs.iter().zip(&coeffs) {
                v[*k as usize] = *c;
            }
            v
        });
        CompiledPoly {
            dim: self.dim,
            degree: self.degree,
            freqs,
            coeffs,
            dense,
        }
    }
}

impl CompiledPoly {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    fn phases(&self, x: &[f64]) -> Vec<Complex64> {
        let n = self.degree;
        let w = 2 * n + 1;
        let mut t = vec![Complex64::new(0.0, 0.0); self.dim * w];
        for (j, &xj) in x.iter().enumerate() {
            let row = &mut t[j * w..(j + 1) * w];
            let xr = xj - xj.floor();
            row[n] = Complex64::new(1.0, 0.0);
            let base = Complex64::cis(TWO_PI * xr);
            let mut cur = Complex64::new(1.0, 0.0);
            for k in 1..=n {
                cur = if k % 64 == 0 {
                    Complex64::cis(TWO_PI * ((k as f64 * xr) % 1.0))
                } else {
                    cur * base
                };
                row[n + k] = cur;
                row[n - k] = cur.conj();
            }
        }
        t
    }

    fn terms<'a>(&'a self, x: &[f64]) -> impl Iterator<Item = (&'a [i32], Complex64)> + 'a {
        assert_eq!(x.len(), self.dim, "point dimension");
        let t = self.phases(x);
        let n = self.degree as i32;
        let w = 2 * self.degree + 1;
        self.freqs
            .chunks(self.dim.max(1))
            .zip(&self.coeffs)
            .map(move |(k, c)| {
                let mut z = *c;
                for (j, &kj) in k.iter().enumerate() {
                    z *= t[j * w + (kj + n) as usize];
                }
                (k, z)
            })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        if let Some(c) = &self.dense {
            let z = Complex64::cis(TWO_PI * (x[0] - x[0].floor()));
            return c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, ck| acc * z + ck).re;
        }
        self.terms(x).map(|(_, z)| z.re).sum()
    }

    /// Value, writing the gradient into `grad`.
    pub fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        if let Some(c) = &self.dense {
            // Horner for P(z) and P'(z); D = Re(2 pi i z P'(z))
            let z = Complex64::cis(TWO_PI * (x[0] - x[0].floor()));
            let zero = Complex64::new(0.0, 0.0);
            let (p, dp) = c.iter().rev().fold((zero, zero), |(p, dp), ck| (p * z + ck, dp * z + p));
            grad[0] = -TWO_PI * (z * dp).im;
            return p.re;
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut v = 0.0;
        for (k, z) in self.terms(x) {
            v += z.re;
            for (g, &kj) in grad.iter_mut().zip(k) {
                *g -= TWO_PI * kj as f64 * z.im;
            }
        }
        v
    }

    pub fn jet(&self, x: &[f64]) -> Jet {
        let d = self.dim;
        let mut value = 0.0;
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        for (k, z) in self.terms(x) {
            value += z.re;
            for a in 0..d {
                let ka = k[a] as f64;
                grad[a] -= TWO_PI * ka * z.im;
                for b in a..d {
                    hess[a * d + b] -= TWO_PI * TWO_PI * ka * k[b] as f64 * z.re;
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                hess[a * d + b] = hess[b * d + a];
            }
        }
        Jet { value, grad, hess }
    }
}

/// Real samples on the uniform grid `{i / resolution}^dim`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFn {
    pub dim: usize,
    pub resolution: usize,
    pub values: Vec<f64>,
}

impl GridFn {
    pub fn from_fn(dim: usize, resolution: usize, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        let total = resolution.pow(dim as u32);
        let values = (0..total)
            .into_par_iter()
            .map(|i| {
                let mut idx = vec![0usize; dim];
                unflatten(i, dim, resolution, &mut idx);
                let x: Vec<f64> = idx.iter().map(|&v| v as f64 / resolution as f64).collect();
                f(&x)
            })
            .collect();
        GridFn {
            dim,
            resolution,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Coordinates of grid node `flat`.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0usize; self.dim];
        unflatten(flat, self.dim, self.resolution, &mut idx);
        idx.iter()
            .map(|&v| v as f64 / self.resolution as f64)
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> (f64, usize) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((f64::INFINITY, 0), |acc, (i, v)| if v < acc.0 { (v, i) } else { acc })
    }

    pub fn max(&self) -> (f64, usize) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((f64::NEG_INFINITY, 0), |acc, (i, v)| if v > acc.0 { (v, i) } else { acc })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Highest per-axis degree the grid resolves without aliasing.
    pub fn alias_free_degree(&self) -> usize {
        (self.resolution - 1) / 2
    }

    /// Discrete Fourier analysis keeping modes with `|k_j| <= max_degree`.
    pub fn analyze(&self, max_degree: usize) -> Result<TrigPoly> {
        let required = 2 * max_degree + 1;
        if self.resolution < required {
            return Err(Error::ResolutionTooLow {
                got: self.resolution,
                required,
            });
        }
        let d = self.dim;
        let res = self.resolution;
        let mut data: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut data, d, res, false);
        let norm = 1.0 / data.len() as f64;
        let mut idx = vec![0usize; d];
        let mut coeffs = Vec::new();
        for (flat, z) in data.iter().enumerate() {
            unflatten(flat, d, res, &mut idx);
            let k: Option<Freq> = idx
                .iter()
                .map(|&i| {
                    let s = signed_freq(i, res);
                    (s.unsigned_abs() as usize <= max_degree && !(res.is_multiple_of(2) && 2 * i == res))
                        .then_some(s as i32)
                })
                .collect();
            if let Some(k) = k {
                coeffs.push((k, z * norm));
            }
        }
        TrigPoly::from_coeffs(d, coeffs)
    }
}

/// How derivative sup-norms of different orders are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormConvention {
    /// `sum_{j<=r} max_{|a|=j} sup|D^a f| + [D^r f]_sigma`
    #[default]
    Sum,
    /// `max(max_{|a|<=r} sup|D^a f|, [D^r f]_sigma)`
    Max,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderNorm {
    pub order: f64,
    pub integer_part: u32,
    pub fractional_part: f64,
    pub value: f64,
    pub convention: NormConvention,
    /// `sup_terms[j] = max_{|a|=j} sup |D^a f|`.
    pub sup_terms: Vec<f64>,
    /// Largest sampled Hölder quotient of the order-`r` derivatives (0 when `sigma = 0`).
    pub seminorm: f64,
    pub resolution: usize,
    pub window: f64,
    pub grid_pairs: u64,
    pub random_pairs: usize,
}

#[derive(Clone, Debug)]
pub struct HolderOptions {
    pub resolution: usize,
    /// Grid pairs closer than this (torus distance) are all compared.
    pub window: f64,
    pub random_pairs: usize,
    pub seed: u64,
    pub convention: NormConvention,
    /// Cap on the number of dense grid pairs; the window shrinks to fit.
    pub pair_budget: u64,
}

impl HolderOptions {
    pub fn new(resolution: usize) -> Self {
        HolderOptions {
            resolution,
            window: 0.1,
            random_pairs: 10_000,
            seed: 0,
            convention: NormConvention::Sum,
            pair_budget: 60_000_000,
        }
    }

    pub fn with_convention(mut self, convention: NormConvention) -> Self {
        self.convention = convention;
        self
    }
}

/// All multi-indices of total order `order` in `dim` variables.
pub fn multi_indices(dim: usize, order: u32) -> Vec<Vec<u32>> {
    fn rec(dim: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == dim - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for v in (0..=left).rev() {
            cur.push(v);
            rec(dim, left - v, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, order, &mut Vec::with_capacity(dim), &mut out);
    out
}

/// Estimates `||p||_{C^s}` on a grid; see [`HolderOptions`].
pub fn holder_norm(p: &TrigPoly, order: f64, opts: &HolderOptions) -> Result<HolderNorm> {
    holder_norm_inner(p, order, opts, None)
}

fn holder_norm_inner(
    p: &TrigPoly,
    order: f64,
    opts: &HolderOptions,
    refined_sup: Option<f64>,
) -> Result<HolderNorm> {
    if !(order >= 0.0) || !order.is_finite() {
        return Err(Error::OutOfRange {
            name: "order",
            value: order,
            range: "[0, inf)",
        });
    }
    if opts.resolution < 2 {
        return Err(Error::ResolutionTooLow {
            got: opts.resolution,
            required: 2,
        });
    }
    let r = order.floor() as u32;
    let sigma = order - r as f64;
    let d = p.dim();
    let mut sup_terms = Vec::with_capacity(r as usize + 1);
    for j in 0..=r {
        let s = multi_indices(d, j)
            .iter()
            .map(|a| p.sample(a, opts.resolution).sup_norm())
            .fold(0.0, f64::max);
        sup_terms.push(s);
    }
    if let Some(s0) = refined_sup {
        sup_terms[0] = sup_terms[0].max(s0);
    }

    let mut seminorm: f64 = 0.0;
    let mut grid_pairs = 0u64;
    let mut window = 0.0;
    let mut random_pairs = 0;
    if sigma > 0.0 {
        let res = opts.resolution;
        let offsets = pair_offsets(d, res, opts.window, opts.pair_budget);
        window = offsets.1;
        let offsets = offsets.0;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let total = res.pow(d as u32);
        let random: Vec<(usize, usize)> = (0..opts.random_pairs)
            .map(|_| (rng.random_range(0..total), rng.random_range(0..total)))
            .collect();
        for a in multi_indices(d, r) {
            let u = p.sample(&a, res);
            seminorm = seminorm.max(grid_seminorm(&u, sigma, &offsets));
            grid_pairs += offsets.len() as u64 * total as u64;
            for &(i, j) in &random {
                let dist = torus_distance(&u.point(i), &u.point(j));
                if dist > 0.0 {
                    seminorm = seminorm.max((u.values[i] - u.values[j]).abs() / dist.powf(sigma));
                }
            }
            random_pairs += random.len();
        }
    }

    let value = match opts.convention {
        NormConvention::Sum => sup_terms.iter().sum::<f64>() + seminorm,
        NormConvention::Max => sup_terms.iter().copied().fold(seminorm, f64::max),
    };
    Ok(HolderNorm {
        order,
        integer_part: r,
        fractional_part: sigma,
        value,
        convention: opts.convention,
        sup_terms,
        seminorm,
        resolution: opts.resolution,
        window,
        grid_pairs,
        random_pairs,
    })
}

/// Half-space of integer offsets with torus length in `(0, window]` (grid units / res).
fn pair_offsets(dim: usize, res: usize, window: f64, budget: u64) -> (Vec<(Vec<i64>, f64)>, f64) {
    let total = res.pow(dim as u32) as f64;
    // number of offsets in a half ball of radius w*res, volume estimate
    let ball = |w: f64| -> f64 {
        let rr = w * res as f64;
        match dim {
            1 => rr,
            2 => PI * rr * rr / 2.0,
            _ => (2.0 * rr).powi(dim as i32) / 2.0,
        }
    };
    let mut w = window.min(0.5);
    while w * res as f64 > 1.0 && ball(w) * total > budget as f64 {
        w *= 0.9;
    }
    let reach = ((w * res as f64).floor() as i64).max(1);
    let w = w.max(1.0 / res as f64);
    let mut out = Vec::new();
    let span = 2 * reach + 1;
    let count = (span as usize).pow(dim as u32);
    for flat in 0..count {
        let mut rem = flat;
        let mut o = vec![0i64; dim];
        for j in (0..dim).rev() {
            o[j] = (rem % span as usize) as i64 - reach;
            rem /= span as usize;
        }
        // keep one of each +/- pair
        match o.iter().find(|&&v| v != 0) {
            Some(&v) if v > 0 => {}
            _ => continue,
        }
        let len = o.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt() / res as f64;
        if len <= w + 1e-12 {
            out.push((o, len));
        }
    }
    (out, w)
}

fn grid_seminorm(u: &GridFn, sigma: f64, offsets: &[(Vec<i64>, f64)]) -> f64 {
    let d = u.dim;
    let res = u.resolution;
    let denoms: Vec<f64> = offsets.iter().map(|(_, l)| l.powf(sigma)).collect();
    (0..u.values.len())
        .into_par_iter()
        .map(|i| {
            let mut idx = vec![0usize; d];
            unflatten(i, d, res, &mut idx);
            let vi = u.values[i];
            let mut best: f64 = 0.0;
            for ((o, _), den) in offsets.iter().zip(&denoms) {
                let flat = idx.iter().zip(o).fold(0usize, |acc, (&a, &b)| {
                    acc * res + (a as i64 + b).rem_euclid(res as i64) as usize
                });
                best = best.max((vi - u.values[flat]).abs() / den);
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

/// Euclidean distance on the unit torus.
pub fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let t = (x - y).rem_euclid(1.0);
            let t = t.min(1.0 - t);
            t * t
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extrema {
    pub min: f64,
    pub argmin: Vec<f64>,
    pub max: f64,
    pub argmax: Vec<f64>,
}

/// Per-axis grid size used when the caller has no preference:
/// at least `4N+1` and at least 1024 (fewer in high dimension).
pub fn default_resolution(p: &TrigPoly) -> usize {
    let floor = match p.dim() {
        1 | 2 => 1024,
        d => 1usize << (22 / d),
    };
    (4 * p.degree() + 1).max(floor).next_power_of_two()
}

/// Global extrema: grid scan followed by Newton polishing of the best candidates.
pub fn extrema(p: &TrigPoly, resolution: usize) -> Result<Extrema> {
    let required = 4 * p.degree() + 1;
    if resolution < required {
        return Err(Error::ResolutionTooLow {
            got: resolution,
            required,
        });
    }
    let grid = p.to_grid(resolution);
    let (min, argmin) = polish(p, &grid, -1.0);
    let (max, argmax) = polish(p, &grid, 1.0);
    Ok(Extrema {
        min,
        argmin,
        max,
        argmax,
    })
}

/// Extrema plus the `C^s` norm, sharing one grid resolution.
pub fn extrema_and_norms(p: &TrigPoly, order: f64, resolution: usize) -> Result<(Extrema, HolderNorm)> {
    extrema_and_norms_with(p, order, &HolderOptions::new(resolution))
}

pub fn extrema_and_norms_with(
    p: &TrigPoly,
    order: f64,
    opts: &HolderOptions,
) -> Result<(Extrema, HolderNorm)> {
    let ext = extrema(p, opts.resolution)?;
    let sup = ext.max.abs().max(ext.min.abs());
    let norm = holder_norm_inner(p, order, opts, Some(sup))?;
    Ok((ext, norm))
}

const CANDIDATES: usize = 8;
const POLISH_ITERS: usize = 60;

/// Maximises `sign * p` starting from the best grid-local maxima.
fn polish(p: &TrigPoly, grid: &GridFn, sign: f64) -> (f64, Vec<f64>) {
    let d = grid.dim;
    let res = grid.resolution;
    let mut cands: Vec<(f64, usize)> = (0..grid.values.len())
        .into_par_iter()
        .filter_map(|i| {
            let v = sign * grid.values[i];
            let mut stride = 1;
            for _ in 0..d {
                let pos = (i / stride) % res;
                let base = i - pos * stride;
                for step in [1, res - 1] {
                    let flat = base + ((pos + step) % res) * stride;
                    if sign * grid.values[flat] > v {
                        return None;
                    }
                }
                stride *= res;
            }
            Some((v, i))
        })
        .collect();
    cands.sort_by(|a, b| b.0.total_cmp(&a.0));
    cands.dedup_by(|a, b| a.0 == b.0);
    cands.truncate(CANDIDATES);
    if cands.is_empty() {
        let (v, i) = if sign > 0.0 { grid.max() } else { grid.min() };
        cands.push((sign * v, i));
    }
    let h = 1.0 / res as f64;
    cands
        .par_iter()
        .map(|&(v, i)| {
            let start = grid.point(i);
            let (x, val) = newton_ascent(p, &start, sign, h);
            if sign * val >= v {
                (val, x)
            } else {
                (sign * v, start)
            }
        })
        .reduce_with(|a, b| if sign * a.0 >= sign * b.0 { a } else { b })
        .expect("at least one candidate")
}

fn newton_ascent(p: &TrigPoly, start: &[f64], sign: f64, h: f64) -> (Vec<f64>, f64) {
    let d = p.dim();
    let mut x = start.to_vec();
    let mut jet = p.jet(&x);
    let max_step = 2.0 * h;
    for _ in 0..POLISH_ITERS {
        let g = DVector::from_iterator(d, jet.grad.iter().map(|v| sign * v));
        if g.amax() <= STATIONARITY_TOL {
            break;
        }
        // minimise -sign*p: Hessian of the objective is -sign*hess
        let hmat = DMatrix::from_row_slice(d, d, &jet.hess).map(|v| -sign * v);
        let newton = hmat.clone().cholesky().map(|c| c.solve(&g));
        let mut step = match newton {
            Some(s) => s,
            None => {
                let scale = hmat.amax().max(1e-300);
                g / scale
            }
        };
        let len = step.amax();
        if len > max_step {
            step *= max_step / len;
        }
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let tj = p.jet(&trial);
            if sign * tj.value >= sign * jet.value {
                x = trial;
                jet = tj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted || step.amax() < 1e-16 {
            break;
        }
    }
    let x = x.iter().map(|v| v.rem_euclid(1.0)).collect();
    (x, jet.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn cos1() -> TrigPoly {
        TrigPoly::cos_mode(&[1], 1.0)
    }

    fn random_poly(dim: usize, degree: i32, seed: u64, zero_mean: bool) -> TrigPoly {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coeffs = Vec::new();
        let side = 2 * degree + 1;
        for flat in 0..side.pow(dim as u32) {
            let mut rem = flat;
            let mut k = vec![0i32; dim];
            for j in (0..dim).rev() {
                k[j] = rem % side - degree;
                rem /= side;
            }
            let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let neg: Freq = k.iter().map(|v| -v).collect();
            if k < neg {
                coeffs.push((neg, c.conj()));
                coeffs.push((k, c));
            } else if k == neg && !zero_mean {
                coeffs.push((k, Complex64::new(c.re, 0.0)));
            }
        }
        TrigPoly::from_coeffs(dim, coeffs).unwrap()
    }

    #[test]
    fn cosine_evaluation_and_derivative() {
        let p = cos1();
        assert!((p.eval(&[0.0]) - 1.0).abs() < 1e-15);
        assert!((p.eval_derivative(&[0.25], &[1]) + 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn second_derivative_matches_finite_differences() {
        let p = TrigPoly::cos_mode(&[1, 0], 1.0);
        let x = [0.0, 0.37];
        let exact = p.eval_derivative(&x, &[2, 0]);
        let h = 1e-5;
        let fd = (p.eval(&[x[0] + h, x[1]]) - 2.0 * p.eval(&x) + p.eval(&[x[0] - h, x[1]])) / (h * h);
        assert!((exact + 4.0 * PI * PI).abs() < 1e-10);
        assert!((fd - exact).abs() / exact.abs() < 1e-5);
    }

    #[test]
    fn calculus_examples() {
        let anti = cos1().antiderivative_1d().unwrap();
        let expected = TrigPoly::sin_mode(&[1], 1.0 / (2.0 * PI));
        assert!(anti.max_coeff_diff(&expected) < 1e-16);

        let p2 = TrigPoly::cos_mode(&[1, 0], 1.0);
        let inv = p2.inverse_laplacian().unwrap();
        assert!(inv.laplacian().max_coeff_diff(&p2) < 1e-14);
        let expected = TrigPoly::cos_mode(&[1, 0], -1.0 / (4.0 * PI * PI));
        assert!(inv.max_coeff_diff(&expected) < 1e-16);

        let c = &TrigPoly::constant(1, 0.7) + &cos1();
        match calculus(&c, CalculusKind::Mean).unwrap() {
            CalculusOutput::Scalar(m) => assert_eq!(m, 0.7),
            _ => panic!("mean is a scalar"),
        }
    }

    #[test]
    fn calculus_errors() {
        let p = &TrigPoly::constant(1, 0.5) + &cos1();
        assert!(matches!(p.antiderivative_1d(), Err(Error::NonZeroMean { .. })));
        assert!(matches!(p.inverse_laplacian(), Err(Error::NonZeroMean { .. })));
        let q = TrigPoly::cos_mode(&[1, 1], 1.0);
        assert!(matches!(
            q.antiderivative_1d(),
            Err(Error::WrongDimension { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn rejects_non_real_coefficients() {
        let bad = TrigPoly::from_coeffs(1, vec![(vec![1], Complex64::new(1.0, 0.0))]);
        assert!(matches!(bad, Err(Error::NotReal { .. })));
    }

    #[test]
    fn prune_drops_tiny_modes_but_keeps_mean() {
        let p = TrigPoly::from_coeffs(
            1,
            vec![
                (vec![1], Complex64::new(1.0, 0.0)),
                (vec![-1], Complex64::new(1.0, 0.0)),
                (vec![5], Complex64::new(1e-17, 0.0)),
                (vec![-5], Complex64::new(1e-17, 0.0)),
            ],
        )
        .unwrap();
        assert_eq!(p.degree(), 1);
        assert_eq!(p.num_modes(), 3);
        assert_eq!(p.mean(), 0.0);
    }

    #[test]
    fn cosine_extrema_and_norms() {
        let (e, n0) = extrema_and_norms(&cos1(), 0.0, 1024).unwrap();
        assert!((e.min + 1.0).abs() < 1e-14 && (e.argmin[0] - 0.5).abs() < 1e-9);
        assert!((e.max - 1.0).abs() < 1e-14 && e.argmax[0].min(1.0 - e.argmax[0]) < 1e-9);
        assert!((n0.value - 1.0).abs() < 1e-6);
        let (_, n1) = extrema_and_norms(&cos1(), 1.0, 1024).unwrap();
        assert!((n1.value - (1.0 + 2.0 * PI)).abs() < 1e-6);
        let max_conv = holder_norm(&cos1(), 1.0, &HolderOptions::new(1024).with_convention(NormConvention::Max)).unwrap();
        assert!((max_conv.value - 2.0 * PI).abs() < 1e-6);
    }

    #[test]
    fn zero_polynomial_extrema() {
        let z = TrigPoly::zero(2);
        let (e, n) = extrema_and_norms(&z, 1.5, 64).unwrap();
        assert_eq!((e.min, e.max), (0.0, 0.0));
        assert_eq!(n.value, 0.0);
    }

    #[test]
    fn extrema_resolution_guard() {
        let p = TrigPoly::cos_mode(&[10], 1.0);
        assert!(matches!(extrema(&p, 40), Err(Error::ResolutionTooLow { required: 41, .. })));
    }

    #[test]
    fn grid_extrema_close_to_refined() {
        let p = random_poly(1, 12, 3, false);
        let e = extrema(&p, 8 * 12).unwrap();
        let g = p.to_grid(8 * 12);
        assert!(e.max >= g.max().0 && e.max - g.max().0 < 1e-1);
        let fine = extrema(&p, 4096).unwrap();
        assert!((fine.max - e.max).abs() < 1e-8);
        assert!((fine.min - e.min).abs() < 1e-8);
    }

    #[test]
    fn holder_norm_is_monotone_in_order() {
        let p = random_poly(1, 6, 11, false);
        let opts = HolderOptions::new(512);
        let mut last = 0.0;
        for s in [0.0, 0.3, 0.7, 1.0, 1.5, 2.0] {
            let v = holder_norm(&p, s, &opts).unwrap().value;
            assert!(v + 1e-9 >= last, "order {s}: {v} < {last}");
            last = v;
        }
    }

    #[test]
    fn sample_subsamples_when_grid_is_coarse() {
        let p = TrigPoly::cos_mode(&[20], 1.0);
        let g = p.to_grid(8);
        for (i, v) in g.values.iter().enumerate() {
            let x = i as f64 / 8.0;
            assert!((v - (2.0 * PI * 20.0 * x).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn analyze_inverts_sampling() {
        let p = random_poly(2, 4, 5, false);
        let back = p.to_grid(16).analyze(4).unwrap();
        assert!(back.max_coeff_diff(&p) < 1e-14);
        assert!(matches!(p.to_grid(8).analyze(4), Err(Error::ResolutionTooLow { .. })));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let p = random_poly(2, 3, 9, false);
        let s = serde_json::to_string(&p).unwrap();
        let q: TrigPoly = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn compiled_matches_direct_evaluation() {
        let p = random_poly(2, 5, 3, false);
        let c = p.compile();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x = [rng.random::<f64>() * 3.0 - 1.0, rng.random::<f64>()];
            let j = p.jet(&x);
            let cj = c.jet(&x);
            assert!((c.value(&x) - j.value).abs() < 1e-12);
            let mut g = [0.0; 2];
            c.value_grad(&x, &mut g);
            for a in 0..2 {
                assert!((g[a] - j.grad[a]).abs() < 1e-10);
                assert!((cj.grad[a] - j.grad[a]).abs() < 1e-10);
            }
            for (a, b) in cj.hess.iter().zip(&j.hess) {
                assert!((a - b).abs() < 1e-8);
            }
        }
        let z = TrigPoly::zero(1).compile();
        assert_eq!(z.value(&[0.3]), 0.0);
        let q = random_poly(1, 300, 8, false);
        let cq = q.compile();
        for i in 0..40 {
            let x = [i as f64 * 0.173 - 2.0];
            let mut g = [0.0];
            let v = cq.value_grad(&x, &mut g);
            assert!((v - q.eval(&x)).abs() < 1e-11);
            assert!((cq.value(&x) - v).abs() < 1e-11);
            assert!((g[0] - q.eval_derivative(&x, &[1])).abs() < 1e-8);
        }
    }

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(multi_indices(2, 2).len(), 3);
        assert_eq!(multi_indices(3, 2).len(), 6);
        assert!(multi_indices(3, 2).iter().all(|a| a.iter().sum::<u32>() == 2));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn derivative_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let p = random_poly(2, 3, seed, false);
            let q = random_poly(2, 3, seed + 7, false);
            let combo = &(a * &p) + &(b * &q);
            let mi = [1u32, 1];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..1000 {
                let x = [rng.random::<f64>(), rng.random::<f64>()];
                let lhs = combo.eval_derivative(&x, &mi);
                let rhs = a * p.eval_derivative(&x, &mi) + b * q.eval_derivative(&x, &mi);
                prop_assert!((lhs - rhs).abs() <= 1e-9 + 1e-12 * rhs.abs());
            }
        }

        #[test]
        fn antiderivative_round_trip(seed in 0u64..1000) {
            let p = random_poly(1, 8, seed, true);
            let back = p.antiderivative_1d().unwrap().derivative(&[1]);
            prop_assert!(back.max_coeff_diff(&p) < 1e-14);
        }

        #[test]
        fn laplacian_round_trip(seed in 0u64..1000) {
            let p = random_poly(2, 4, seed, true);
            let back = p.inverse_laplacian().unwrap().laplacian();
            prop_assert!(back.max_coeff_diff(&p) < 1e-14);
        }
    }
}
