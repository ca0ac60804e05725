//! Small 2-D FFT helpers over row-major buffers.

use std::f64::consts::TAU;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place 2-D transform of an `ny × nx` row-major buffer. The inverse is
/// normalised by `1 / (nx·ny)`.
pub(crate) fn fft2(data: &mut [Complex64], ny: usize, nx: usize, inverse: bool) {
    assert_eq!(data.len(), ny * nx);
    let mut planner = FftPlanner::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(nx)
    } else {
        planner.plan_fft_forward(nx)
    };
    let col_fft = if inverse {
        planner.plan_fft_inverse(ny)
    } else {
        planner.plan_fft_forward(ny)
    };

    row_fft.process(data);

    let mut column = vec![Complex64::new(0.0, 0.0); ny];
    let mut scratch = vec![Complex64::new(0.0, 0.0); col_fft.get_inplace_scratch_len()];
    for j in 0..nx {
        for i in 0..ny {
            column[i] = data[i * nx + j];
        }
        col_fft.process_with_scratch(&mut column, &mut scratch);
        for i in 0..ny {
            data[i * nx + j] = column[i];
        }
    }

    if inverse {
        let scale = 1.0 / (nx * ny) as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Signed integer frequency index of FFT bin `j` of an `n`-point transform.
pub(crate) fn signed_index(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Angular wavenumber (rad/m) of bin `j` for sample spacing `d`.
pub(crate) fn wavenumber(j: usize, n: usize, d: f64) -> f64 {
    TAU * signed_index(j, n) as f64 / (n as f64 * d)
}

/// Smallest size `>= n` whose only prime factors are 2, 3 and 5.
pub(crate) fn fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut k = m;
        for p in [2, 3, 5] {
            while k % p == 0 {
                k /= p;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_inverse_round_trip() {
        let (ny, nx) = (6, 10);
        let orig: Vec<Complex64> = (0..ny * nx)
            .map(|k| Complex64::new((k as f64 * 0.37).sin(), 0.0))
            .collect();
        let mut buf = orig.clone();
        fft2(&mut buf, ny, nx, false);
        fft2(&mut buf, ny, nx, true);
        for (a, b) in orig.iter().zip(&buf) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn fast_len_values() {
        assert_eq!(fast_len(7), 8);
        assert_eq!(fast_len(11), 12);
        assert_eq!(fast_len(625), 625);
        assert_eq!(fast_len(617), 625);
    }
}
