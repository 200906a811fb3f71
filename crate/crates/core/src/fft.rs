//! Multi-dimensional FFT on row-major `res^dim` grids.

use num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place unnormalised transform along every axis.
///
/// `inverse = false` uses the kernel `exp(-2 pi i k j / res)` (analysis),
/// `inverse = true` uses `exp(+2 pi i k j / res)` (synthesis).
pub(crate) fn fft_nd(data: &mut [Complex64], dim: usize, res: usize, inverse: bool) {
    debug_assert_eq!(data.len(), res.pow(dim as u32));
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(res)
    } else {
        planner.plan_fft_forward(res)
    };
    let total = data.len();
    let mut line = vec![Complex64::new(0.0, 0.0); res];
    for axis in 0..dim {
        let stride = res.pow((dim - 1 - axis) as u32);
        if stride == 1 {
            fft.process(data);
            continue;
        }
        let block = stride * res;
        for start in (0..total).step_by(block) {
            for offset in 0..stride {
                let base = start + offset;
                for (i, v) in line.iter_mut().enumerate() {
                    *v = data[base + i * stride];
                }
                fft.process(&mut line);
                for (i, v) in line.iter().enumerate() {
                    data[base + i * stride] = *v;
                }
            }
        }
    }
}

/// Multi-index of a flat row-major offset.
pub(crate) fn unflatten(mut idx: usize, dim: usize, res: usize, out: &mut [usize]) {
    for j in (0..dim).rev() {
        out[j] = idx % res;
        idx /= res;
    }
}

/// Flat offset of a (possibly negative) frequency vector wrapped modulo `res`.
pub(crate) fn wrap_freq(freq: &[i32], res: usize) -> usize {
    let r = res as i64;
    freq.iter()
        .fold(0usize, |acc, &k| acc * res + (k as i64).rem_euclid(r) as usize)
}

/// Signed frequency represented by grid index `i` (`i > res/2` wraps negative).
pub(crate) fn signed_freq(i: usize, res: usize) -> i64 {
    if 2 * i > res {
        i as i64 - res as i64
    } else {
        i as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn two_dimensional_round_trip() {
        let res = 8;
        let mut data: Vec<Complex64> = (0..res * res)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), 0.0))
            .collect();
        let orig = data.clone();
        fft_nd(&mut data, 2, res, false);
        fft_nd(&mut data, 2, res, true);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a / (res * res) as f64 - b).norm() < 1e-14);
        }
    }

    #[test]
    fn single_mode_lands_on_its_bin() {
        let res = 16;
        let mut data: Vec<Complex64> = (0..res)
            .map(|i| Complex64::new((2.0 * PI * 3.0 * i as f64 / res as f64).cos(), 0.0))
            .collect();
        fft_nd(&mut data, 1, res, false);
        assert!((data[3].re - res as f64 / 2.0).abs() < 1e-12);
        assert!((data[wrap_freq(&[-3], res)].re - res as f64 / 2.0).abs() < 1e-12);
        assert_eq!(signed_freq(13, res), -3);
    }
}
