//! Discrete Fourier transform: `X[k] = Σₙ e^(−i2πnk/N) x[n]`.
//!
//! Power-of-two lengths go through an iterative radix-2 FFT; every other
//! length falls back to the direct O(N²) sum with a precomputed twiddle table.

use std::f64::consts::PI;

use num_complex::Complex64;

/// Forward DFT, dispatching to the FFT when `x.len()` is a power of two.
pub fn dft(x: &[Complex64]) -> Vec<Complex64> {
    if x.len().is_power_of_two() {
        fft_radix2(x)
    } else {
        dft_naive(x)
    }
}

/// Inverse DFT with the `1/N` normalization.
pub fn idft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len() as f64;
    let conj: Vec<Complex64> = x.iter().map(|v| v.conj()).collect();
    dft(&conj).into_iter().map(|v| v.conj() / n).collect()
}

/// Real-input convenience wrapper around [`dft`].
pub fn dft_real(x: &[f64]) -> Vec<Complex64> {
    let c: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft(&c)
}

fn twiddles(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / n as f64))
        .collect()
}

/// Direct evaluation of the DFT sum.
pub fn dft_naive(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let w = twiddles(n);
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, &v)| w[(j * k) % n] * v)
                .sum()
        })
        .collect()
}

/// Iterative Cooley-Tukey FFT. Panics unless the length is a power of two.
pub fn fft_radix2(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    assert!(n.is_power_of_two(), "radix-2 FFT needs a power-of-two length, got {n}");
    let mut a = x.to_vec();
    if n == 1 {
        return a;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            a.swap(i, j);
        }
    }
    let w = twiddles(n);
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let t = w[k * step] * a[start + k + half];
                let u = a[start + k];
                a[start + k] = u + t;
                a[start + k + half] = u - t;
            }
        }
        len <<= 1;
    }
    a
}

/// Real part of the 2-D DFT of a `rows × cols` real matrix (row-major),
/// transforming along columns (feature axis) and then along rows (token axis).
pub(crate) fn dft2_real_part(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut buf: Vec<Complex64> = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        buf.extend(dft_real(&x[r * cols..(r + 1) * cols]));
    }
    let mut out = vec![0.0; rows * cols];
    let mut column = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = buf[r * cols + c];
        }
        for (r, v) in dft(&column).into_iter().enumerate() {
            out[r * cols + c] = v.re;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn close(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol)
    }

    #[test]
    fn constant_signal_is_dc_only() {
        let out = dft(&[c(1.0); 4]);
        assert!(close(&out, &[c(4.0), c(0.0), c(0.0), c(0.0)], 1e-12));
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let out = dft(&[c(1.0), c(0.0), c(0.0), c(0.0)]);
        assert!(close(&out, &[c(1.0); 4], 1e-12));
    }

    #[test]
    fn naive_path_handles_odd_lengths() {
        let out = dft(&[c(1.0), c(1.0), c(1.0)]);
        assert!(close(&out, &[c(3.0), c(0.0), c(0.0)], 1e-12));
        assert_eq!(dft(&[c(2.5)]), vec![c(2.5)]);
    }

    #[test]
    fn inverse_recovers_input() {
        let x: Vec<Complex64> = (0..10).map(|i| Complex64::new(i as f64, -(i as f64) / 3.0)).collect();
        assert!(close(&idft(&dft(&x)), &x, 1e-12));
    }
}
