//! Construction of the destroying perturbations.
//!
//! Pipeline: a smooth two-bump model function `f_n` (shallow positive
//! plateau over `(0,1/2)^d`, deep narrow well at `(3/4,...,3/4)`) is sampled,
//! approximated by a de la Vallée Poussin polynomial of growing degree until
//! it is `1/(4n)`-close in sup norm, rescaled so its minimum is exactly
//! `-Delta`, and finally integrated: an antiderivative in one dimension, an
//! inverse of `(1/d) Laplacian` in higher dimension.

use serde::{Deserialize, Serialize};

use crate::approx::{jackson_approximate, ApproxReport};
use crate::error::{Error, Result};
use crate::trigpoly::{
    default_resolution, extrema, holder_norm, multi_indices, Extrema, GridFn, HolderNorm, HolderOptions,
    NormConvention, TrigPoly,
};

/// Maximum number of degree doublings in [`build_derivative_polynomial`].
pub const MAX_DOUBLINGS: usize = 10;
/// Fraction of each bump's half-width on which the profile is flat.
pub const PLATEAU_FRACTION: f64 = 0.5;

/// Depth schedule: 1 up to `lambda = 1/2`, then `(4/3)(1 - lambda^2)`.
pub fn delta_of_lambda(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::OutOfRange {
            name: "lambda",
            value: lambda,
            range: "(0, 1)",
        });
    }
    Ok(if lambda <= 0.5 {
        1.0
    } else {
        4.0 / 3.0 * (1.0 - lambda * lambda)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub n: usize,
    pub dim: usize,
    pub delta: f64,
    pub epsilon: f64,
    /// `b_n`, the half-width of the negative bump.
    pub half_width: f64,
}

impl BumpSpec {
    pub fn new(n: usize, dim: usize, delta: f64, epsilon: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be >= 1".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::OutOfRange {
                name: "delta",
                value: delta,
                range: "(0, inf)",
            });
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::OutOfRange {
                name: "epsilon",
                value: epsilon,
                range: "(0, 1)",
            });
        }
        let nf = n as f64;
        let inv_d = 1.0 / dim as f64;
        let half_width = 0.25 * (delta + 0.25 / nf).powf(-inv_d) * (0.75 / nf).powf(inv_d);
        if 2.0 * half_width >= 0.5 {
            return Err(Error::InfeasibleGeometry {
                two_b: 2.0 * half_width,
            });
        }
        Ok(BumpSpec {
            n,
            dim,
            delta,
            epsilon,
            half_width,
        })
    }

    /// Height of the positive plateau, `3/(4n)`.
    pub fn positive_height(&self) -> f64 {
        0.75 / self.n as f64
    }

    /// Depth of the negative well, `Delta + 1/(4n)`.
    pub fn negative_depth(&self) -> f64 {
        self.delta + 0.25 / self.n as f64
    }

    /// `floor(n^{1/d + eps})`.
    pub fn theoretical_degree(&self) -> usize {
        ((self.n as f64).powf(1.0 / self.dim as f64 + self.epsilon).floor() as usize).max(1)
    }

    /// `ceil(2(1+d)/(d eps))`: enough smoothness for the degree exponent to drop below `1/d + eps`.
    pub fn smoothness_order(&self) -> u32 {
        let d = self.dim as f64;
        (2.0 * (1.0 + d) / (d * self.epsilon)).ceil() as u32
    }

    /// Grid size that resolves both the well and a degree-`degree` approximant.
    pub fn model_resolution(&self, degree: usize) -> usize {
        let well = (64.0 / (2.0 * self.half_width)).ceil() as usize;
        (4 * degree + 2).max(well).max(64).next_power_of_two()
    }
}

/// Smooth plateau on `[-1, 1]`: 1 on `|t| <= 1/2`, 0 for `|t| >= 1`, `C^infinity`.
pub fn plateau_profile(t: f64) -> f64 {
    let a = t.abs();
    if a >= 1.0 {
        return 0.0;
    }
    if a <= PLATEAU_FRACTION {
        return 1.0;
    }
    smooth_step((1.0 - a) / (1.0 - PLATEAU_FRACTION))
}

/// 0 at `s <= 0`, 1 at `s >= 1`, built from `exp(-1/s)`.
fn smooth_step(s: f64) -> f64 {
    let e = |v: f64| if v <= 0.0 { 0.0 } else { (-1.0 / v).exp() };
    let (a, b) = (e(s), e(1.0 - s));
    a / (a + b)
}

fn positive_shape(x: &[f64]) -> f64 {
    x.iter().map(|&v| plateau_profile((v - 0.25) / 0.25)).product()
}

fn negative_shape(x: &[f64], half_width: f64) -> f64 {
    x.iter()
        .map(|&v| plateau_profile((v - 0.75) / half_width))
        .product()
}

/// Samples the model function `f_n` on a `resolution^d` grid.
///
/// The positive amplitude is calibrated on the grid so the samples have
/// mean zero; analytically it equals `3/(4n)` because both bumps use the
/// same profile and their volumes balance.
pub fn build_model_bump(spec: &BumpSpec, resolution: usize) -> Result<GridFn> {
    let required = (16.0 / (2.0 * spec.half_width)).ceil() as usize;
    if resolution < required {
        return Err(Error::ResolutionTooLow {
            got: resolution,
            required,
        });
    }
    let b = spec.half_width;
    let pos = GridFn::from_fn(spec.dim, resolution, positive_shape);
    let neg = GridFn::from_fn(spec.dim, resolution, |x| negative_shape(x, b));
    let depth = spec.negative_depth();
    let amp = depth * neg.values.iter().sum::<f64>() / pos.values.iter().sum::<f64>();
    let values = pos
        .values
        .iter()
        .zip(&neg.values)
        .map(|(p, q)| amp * p - depth * q)
        .collect();
    Ok(GridFn {
        dim: spec.dim,
        resolution,
        values,
    })
}

/// Pointwise value of the model function with the analytic amplitude `3/(4n)`.
pub fn model_bump_value(spec: &BumpSpec, x: &[f64]) -> f64 {
    spec.positive_height() * positive_shape(x) - spec.negative_depth() * negative_shape(x, spec.half_width)
}

/// Upper estimate of `||f||_{C^k}` (sum convention) by spectral differentiation.
pub fn ck_norm_estimate(f: &GridFn, k: u32) -> Result<f64> {
    let required = 2 * k as usize + 3;
    if f.resolution < required {
        return Err(Error::ResolutionTooLow {
            got: f.resolution,
            required,
        });
    }
    let p = f.analyze(f.alias_free_degree())?;
    Ok((0..=k)
        .map(|j| {
            multi_indices(f.dim, j)
                .iter()
                .map(|a| p.sample(a, f.resolution).sup_norm())
                .fold(0.0, f64::max)
        })
        .sum())
}

/// Output of [`build_derivative_polynomial`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerivativeConstruction {
    pub poly: TrigPoly,
    pub approx: ApproxReport,
    pub n_theoretical: usize,
    pub n_achieved: usize,
    pub doublings: usize,
    pub pre_rescale_min: f64,
    pub pre_rescale_max: f64,
    pub scale: f64,
}

/// Jackson-approximates the model bump to `1/(4n)` and rescales to `-min = Delta`.
pub fn build_derivative_polynomial(spec: &BumpSpec) -> Result<DerivativeConstruction> {
    let target = 0.25 / spec.n as f64;
    let n_theoretical = spec.theoretical_degree();
    let k = spec.smoothness_order();
    let mut degree = n_theoretical;
    let mut last = (f64::INFINITY, degree);
    for doublings in 0..=MAX_DOUBLINGS {
        let res = spec.model_resolution(degree);
        let model = build_model_bump(spec, res)?;
        let (p, report) = jackson_approximate(&model, degree, k, None)?;
        if report.achieved_error <= target {
            let ext = extrema(&p, default_resolution(&p))?;
            if !(ext.min < 0.0) {
                return Err(Error::InvalidArgument("approximant has no negative part".into()));
            }
            let scale = -spec.delta / ext.min;
            let poly = scale * &p;
            return Ok(DerivativeConstruction {
                poly,
                approx: report,
                n_theoretical,
                n_achieved: degree,
                doublings,
                pre_rescale_min: ext.min,
                pre_rescale_max: ext.max,
                scale,
            });
        }
        last = (report.achieved_error, degree);
        degree *= 2;
    }
    Err(Error::ApproximationFailed {
        target,
        achieved: last.0,
        degree: last.1,
        doublings: MAX_DOUBLINGS,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeExtrema {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub argmin: Vec<f64>,
    pub argmax: Vec<f64>,
}

/// Norms of the potential, max convention (`||f||_{C^r} = max_{|a|<=r} sup|D^a f|`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialNorms {
    pub c0: f64,
    pub c1: f64,
    /// Present for `d >= 2`.
    pub c2: Option<f64>,
    /// `C^{1-eps}` in one dimension, `C^{2-eps}` otherwise.
    pub holder: HolderNorm,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationBundle {
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(rename = "N_theoretical")]
    pub n_theoretical: usize,
    #[serde(rename = "N_achieved")]
    pub n_achieved: usize,
    pub extrema: DerivativeExtrema,
    pub norms: PotentialNorms,
    pub approx: Option<ApproxReport>,
    pub pre_rescale_min: Option<f64>,
    /// `phi` in one dimension, `Phi` otherwise.
    pub potential: TrigPoly,
    /// `D phi` in one dimension, `T = (1/d) Laplacian(Phi)` otherwise.
    pub derivative: TrigPoly,
}

/// Integrates a zero-mean derivative polynomial into the perturbation potential.
///
/// Metadata that only the full pipeline knows (`n`, `Delta`, degrees) is
/// filled from the polynomial itself; [`construct_bundle`] overwrites it.
pub fn assemble_perturbation(
    lambda: f64,
    epsilon: f64,
    derivative: TrigPoly,
    dim: usize,
) -> Result<PerturbationBundle> {
    if derivative.dim() != dim {
        return Err(Error::WrongDimension {
            expected: dim,
            got: derivative.dim(),
        });
    }
    let potential = if dim == 1 {
        derivative.antiderivative_1d()?
    } else {
        (dim as f64 * &derivative).inverse_laplacian()?
    };
    let ext = extrema(&derivative, default_resolution(&derivative))?;
    let norms = potential_norms(&potential, epsilon)?;
    let degree = derivative.degree();
    Ok(PerturbationBundle {
        n: 0,
        d: dim,
        lambda,
        epsilon,
        delta: -ext.min,
        n_theoretical: degree,
        n_achieved: degree,
        extrema: DerivativeExtrema {
            min: ext.min,
            max: ext.max,
            mean: derivative.mean(),
            argmin: ext.argmin,
            argmax: ext.argmax,
        },
        norms,
        approx: None,
        pre_rescale_min: None,
        potential,
        derivative,
    })
}

fn potential_norms(potential: &TrigPoly, epsilon: f64) -> Result<PotentialNorms> {
    let d = potential.dim();
    let res = default_resolution(potential);
    let Extrema { min, max, .. } = extrema(potential, res)?;
    let c0 = min.abs().max(max.abs());
    let sup_of_order = |order: u32| -> f64 {
        multi_indices(d, order)
            .iter()
            .map(|a| {
                if d == 1 && order == 1 {
                    // refined: the 1D first derivative is the derivative polynomial
                    let dp = potential.derivative(a);
                    extrema(&dp, default_resolution(&dp))
                        .map(|e| e.min.abs().max(e.max.abs()))
                        .unwrap_or_else(|_| potential.sample(a, res).sup_norm())
                } else {
                    potential.sample(a, res).sup_norm()
                }
            })
            .fold(0.0, f64::max)
    };
    let c1 = c0.max(sup_of_order(1));
    let c2 = (d >= 2).then(|| c1.max(sup_of_order(2)));
    let holder_order = if d == 1 { 1.0 - epsilon } else { 2.0 - epsilon };
    let holder_res = if d == 1 { res } else { 256 };
    let opts = HolderOptions::new(holder_res).with_convention(NormConvention::Max);
    let holder = holder_norm(potential, holder_order, &opts)?;
    Ok(PotentialNorms { c0, c1, c2, holder })
}

/// The whole pipeline for one `(lambda, n, eps, d)`.
pub fn construct_bundle(lambda: f64, n: usize, epsilon: f64, dim: usize) -> Result<PerturbationBundle> {
    let delta = delta_of_lambda(lambda)?;
    let spec = BumpSpec::new(n, dim, delta, epsilon)?;
    let dc = build_derivative_polynomial(&spec)?;
    let mut bundle = assemble_perturbation(lambda, epsilon, dc.poly, dim)?;
    bundle.n = n;
    bundle.delta = delta;
    bundle.n_theoretical = dc.n_theoretical;
    bundle.n_achieved = dc.n_achieved;
    bundle.approx = Some(dc.approx);
    bundle.pre_rescale_min = Some(dc.pre_rescale_min);
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn delta_schedule() {
        assert_eq!(delta_of_lambda(0.25).unwrap(), 1.0);
        assert_eq!(delta_of_lambda(0.5).unwrap(), 1.0);
        assert!((delta_of_lambda(0.5 + 1e-12).unwrap() - 1.0).abs() < 1e-11);
        assert!((delta_of_lambda(0.75).unwrap() - 0.583_333_333_333_333_3).abs() < 1e-15);
        assert!(matches!(delta_of_lambda(1.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(delta_of_lambda(0.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn delta_below_destruction_ceiling() {
        for i in 1..1000 {
            let l = i as f64 / 1000.0;
            assert!(delta_of_lambda(l).unwrap() < 1.0 + l);
        }
    }

    #[test]
    fn bump_half_width_formula() {
        let s = BumpSpec::new(1, 1, 1.0, 0.1).unwrap();
        assert!((s.half_width - 0.15).abs() < 1e-15);
        let s2 = BumpSpec::new(1, 2, 1.0, 0.1).unwrap();
        let expected = 0.25 * (1.25f64).powf(-0.5) * 0.75f64.sqrt();
        assert!((s2.half_width - expected).abs() < 1e-15);
        assert!((s2.half_width - 0.19365).abs() < 1e-5);
        assert!(matches!(
            BumpSpec::new(1, 1, 0.05, 0.1),
            Err(Error::InfeasibleGeometry { .. })
        ));
        assert_eq!(BumpSpec::new(10, 1, 1.0, 0.1).unwrap().theoretical_degree(), 12);
    }

    #[test]
    fn profile_shape() {
        assert_eq!(plateau_profile(0.0), 1.0);
        assert_eq!(plateau_profile(0.5), 1.0);
        assert_eq!(plateau_profile(1.0), 0.0);
        assert!((plateau_profile(0.75) - 0.5).abs() < 1e-15);
        let mut last = 1.0;
        for i in 0..=100 {
            let v = plateau_profile(0.5 + i as f64 / 200.0);
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn model_bump_one_dimension() {
        let s = BumpSpec::new(1, 1, 1.0, 0.1).unwrap();
        let g = build_model_bump(&s, 4096).unwrap();
        assert!(g.mean().abs() < 1e-10);
        let (mx, imax) = g.max();
        let (mn, imin) = g.min();
        assert!((mx - 0.75).abs() < 1e-9);
        assert!((mn + 1.25).abs() < 1e-12);
        assert!((g.values[1024] - mx).abs() < 1e-12);
        assert!((g.point(imax)[0] - 0.25).abs() <= 0.13);
        assert_eq!(g.values[3072], mn);
        assert!((g.point(imin)[0] - 0.75).abs() <= s.half_width);
        // zero at 0 and 1/2, positive part inside (0, 1/2)
        assert_eq!(g.values[0], 0.0);
        assert_eq!(g.values[2048], 0.0);
        for (i, v) in g.values.iter().enumerate() {
            let x = i as f64 / 4096.0;
            if *v > 0.0 {
                assert!(x > 0.0 && x < 0.5);
            }
            if *v < 0.0 {
                assert!((x - 0.75).abs() <= s.half_width);
            }
        }

        let s4 = BumpSpec::new(4, 1, 1.0, 0.1).unwrap();
        let g4 = build_model_bump(&s4, 4096).unwrap();
        assert!((g4.max().0 - 3.0 / 16.0).abs() < 1e-9);
        assert!((g4.min().0 + 1.0 + 1.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn model_bump_two_dimensions_has_zero_mean() {
        let s = BumpSpec::new(1, 2, 1.0, 0.1).unwrap();
        let g = build_model_bump(&s, 512).unwrap();
        assert!(g.mean().abs() < 1e-10);
        // independent check: analytic amplitude, midpoint quadrature at 4096^2
        let q = 4096;
        let mut sum = 0.0;
        for i in 0..q {
            for j in 0..q {
                let x = [(i as f64 + 0.5) / q as f64, (j as f64 + 0.5) / q as f64];
                sum += model_bump_value(&s, &x);
            }
        }
        assert!((sum / (q * q) as f64).abs() < 1e-10);
    }

    #[test]
    fn model_bump_resolution_guard() {
        let s = BumpSpec::new(64, 1, 1.0, 0.1).unwrap();
        assert!(matches!(build_model_bump(&s, 64), Err(Error::ResolutionTooLow { .. })));
    }

    #[test]
    fn ck_norm_examples() {
        let zero = GridFn::from_fn(1, 64, |_| 0.0);
        assert_eq!(ck_norm_estimate(&zero, 3).unwrap(), 0.0);
        let cos = GridFn::from_fn(1, 256, |x| (2.0 * PI * x[0]).cos());
        assert!((ck_norm_estimate(&cos, 1).unwrap() - (1.0 + 2.0 * PI)).abs() < 1e-9);
        assert!(matches!(ck_norm_estimate(&cos, 200), Err(Error::ResolutionTooLow { .. })));
    }

    #[test]
    fn ck_norm_growth_of_model_bumps() {
        // C^1 norm grows like 1/b_n ~ n; the cited (k+1)/d exponent is an upper bound
        let ns = [4usize, 8, 16, 32];
        let pts: Vec<(f64, f64)> = ns
            .iter()
            .map(|&n| {
                let s = BumpSpec::new(n, 1, 1.0, 0.1).unwrap();
                let g = build_model_bump(&s, 16384).unwrap();
                ((n as f64).ln(), ck_norm_estimate(&g, 1).unwrap().ln())
            })
            .collect();
        let slope = crate::stats::ols_slope(&pts);
        assert!(slope > 0.6 && slope < 1.4, "slope {slope}");
        assert!(slope <= 2.0);
    }

    #[test]
    fn derivative_polynomial_constraints() {
        let s = BumpSpec::new(10, 1, 1.0, 0.1).unwrap();
        let dc = build_derivative_polynomial(&s).unwrap();
        assert_eq!(dc.n_theoretical, 12);
        assert!(dc.n_achieved >= 12);
        assert!(dc.pre_rescale_min <= -1.0 && dc.pre_rescale_min >= -1.0 - 0.05);
        let e = extrema(&dc.poly, default_resolution(&dc.poly)).unwrap();
        assert!((e.min + 1.0).abs() < 1e-9);
        assert!(e.max <= 0.1);
        assert!(dc.poly.mean().abs() < 1e-12);
    }

    #[test]
    fn assemble_examples() {
        let b = assemble_perturbation(0.5, 0.1, TrigPoly::cos_mode(&[1], 1.0), 1).unwrap();
        assert!(b.potential.max_coeff_diff(&TrigPoly::sin_mode(&[1], 1.0 / (2.0 * PI))) < 1e-16);
        assert!(b.potential.derivative(&[1]).max_coeff_diff(&b.derivative) < 1e-14);

        let b2 = assemble_perturbation(0.5, 0.1, TrigPoly::cos_mode(&[1, 0], 1.0), 2).unwrap();
        let expected = TrigPoly::cos_mode(&[1, 0], -1.0 / (2.0 * PI * PI));
        assert!(b2.potential.max_coeff_diff(&expected) < 1e-16);
        let back = (0.5 * &b2.potential.laplacian()).max_coeff_diff(&b2.derivative);
        assert!(back < 1e-13);

        let bad = &TrigPoly::constant(1, 0.1) + &TrigPoly::cos_mode(&[1], 1.0);
        assert!(matches!(assemble_perturbation(0.5, 0.1, bad, 1), Err(Error::NonZeroMean { .. })));
        assert!(matches!(
            assemble_perturbation(0.5, 0.1, TrigPoly::cos_mode(&[1], 1.0), 2),
            Err(Error::WrongDimension { .. })
        ));
    }

    #[test]
    fn bundle_json_is_stable_under_reload() {
        let b = construct_bundle(0.75, 32, 0.1, 1).unwrap();
        let first = serde_json::to_string(&b).unwrap();
        let back: PerturbationBundle = serde_json::from_str(&first).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), first);
    }
}
