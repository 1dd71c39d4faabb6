//! In-place n-dimensional FFT built from 1-D `rustfft` plans.
//!
//! Data is row-major with the last axis contiguous. Only forward transforms
//! are needed here: the spectral sampler draws circularly-symmetric complex
//! noise, so forward vs inverse only relabels frequencies without changing
//! the law of the output.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Forward DFT (unnormalized) along every axis of `data` with shape `dims`.
pub fn fft_nd(data: &mut [Complex<f64>], dims: &[usize], planner: &mut FftPlanner<f64>) {
    let total: usize = dims.iter().product();
    assert_eq!(data.len(), total);
    let d = dims.len();

    // Last axis: contiguous rows.
    let n_last = dims[d - 1];
    let fft = planner.plan_fft_forward(n_last);
    let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(n_last) {
        fft.process_with_scratch(row, &mut scratch);
    }

    // Remaining axes: gather strided lines into a buffer.
    for axis in (0..d - 1).rev() {
        let n = dims[axis];
        let stride: usize = dims[axis + 1..].iter().product();
        let block = n * stride; // one hyperplane-bundle along this axis
        let fft = planner.plan_fft_forward(n);
        let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        let mut line = vec![Complex::default(); n];
        for base in (0..total).step_by(block) {
            for offset in 0..stride {
                let start = base + offset;
                for (i, slot) in line.iter_mut().enumerate() {
                    *slot = data[start + i * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (i, v) in line.iter().enumerate() {
                    data[start + i * stride] = *v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Brute-force DFT in 2-D for cross-checking.
    fn dft2(input: &[Complex<f64>], n0: usize, n1: usize) -> Vec<Complex<f64>> {
        let mut out = vec![Complex::default(); n0 * n1];
        for k0 in 0..n0 {
            for k1 in 0..n1 {
                let mut acc = Complex::default();
                for x0 in 0..n0 {
                    for x1 in 0..n1 {
                        let phase = -2.0 * std::f64::consts::PI
                            * (k0 as f64 * x0 as f64 / n0 as f64
                                + k1 as f64 * x1 as f64 / n1 as f64);
                        acc += input[x0 * n1 + x1] * Complex::new(phase.cos(), phase.sin());
                    }
                }
                out[k0 * n1 + k1] = acc;
            }
        }
        out
    }

    #[test]
    fn matches_brute_force_2d() {
        let n0 = 4;
        let n1 = 6;
        let input: Vec<Complex<f64>> = (0..n0 * n1)
            .map(|i| Complex::new((i as f64).sin(), (i as f64 * 0.7).cos()))
            .collect();
        let expected = dft2(&input, n0, n1);
        let mut data = input;
        let mut planner = FftPlanner::new();
        fft_nd(&mut data, &[n0, n1], &mut planner);
        for (a, b) in data.iter().zip(&expected) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-9);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-9);
        }
    }

    #[test]
    fn delta_transforms_to_constant_3d() {
        let dims = [3, 4, 5];
        let total: usize = dims.iter().product();
        let mut data = vec![Complex::default(); total];
        data[0] = Complex::new(1.0, 0.0);
        let mut planner = FftPlanner::new();
        fft_nd(&mut data, &dims, &mut planner);
        for v in &data {
            assert_abs_diff_eq!(v.re, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-12);
        }
    }
}
