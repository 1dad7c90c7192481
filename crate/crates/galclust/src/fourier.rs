//! N-dimensional complex FFT on flat row-major buffers, built from
//! rustfft's 1D transforms. Each pass transforms the contiguous last axis
//! and cyclically permutes the axes; after `ndim` passes every axis is
//! transformed and the layout is back to the original order.
//!
//! Transforms are unnormalized in both directions (callers scale).
//! Per-line FFTs write disjoint slices, so results are independent of the
//! rayon worker count.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// In-place FFT over every axis of a row-major `dims` array.
pub fn fft_nd(data: &mut Vec<Complex<f64>>, dims: &[usize], inverse: bool) {
    let total: usize = dims.iter().product();
    assert_eq!(data.len(), total, "buffer size must match dims");
    if total == 0 {
        return;
    }
    let ndim = dims.len();
    let mut dims_now: Vec<usize> = dims.to_vec();
    let mut planner = FftPlanner::new();
    let mut scratch_buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); total];
    for _ in 0..ndim {
        let line = *dims_now.last().unwrap();
        let fft = if inverse {
            planner.plan_fft_inverse(line)
        } else {
            planner.plan_fft_forward(line)
        };
        let scratch_len = fft.get_inplace_scratch_len();
        data.par_chunks_exact_mut(line).for_each_init(
            || vec![Complex::new(0.0, 0.0); scratch_len],
            |scratch, chunk| {
                fft.process_with_scratch(chunk, scratch);
            },
        );
        if ndim == 1 {
            break;
        }
        // Cyclic axis permutation: move the last axis to the front.
        // out[(j_last, j_0..j_{n-2})] = in[(j_0..j_{n-2}, j_last)].
        let rest = total / line;
        {
            let src = &*data;
            scratch_buf
                .par_chunks_exact_mut(rest)
                .enumerate()
                .for_each(|(j, out)| {
                    for (m, o) in out.iter_mut().enumerate() {
                        *o = src[m * line + j];
                    }
                });
        }
        std::mem::swap(data, &mut scratch_buf);
        dims_now.rotate_right(1);
    }
}

/// Wavenumber component for index `i` of an axis of length `n` and spacing
/// `a`: 2 pi i' / (n a) with i' folded to the signed range.
pub fn wavenumber(i: usize, n: usize, spacing: f64) -> f64 {
    let signed = if i <= n / 2 { i as isize } else { i as isize - n as isize };
    2.0 * std::f64::consts::PI * signed as f64 / (n as f64 * spacing)
}
