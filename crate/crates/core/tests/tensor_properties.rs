//! DFT oracle and tensor invariants.

mod common;

use acmca::tensor::dft::{dft, dft_naive, fft_radix2, idft};
use acmca::{Graph, Tensor};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

/// Independent O(N²) double loop evaluating the DFT sum with fresh trig calls.
fn oracle_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, v) in x.iter().enumerate() {
            let angle = -2.0 * PI * (j * k) as f64 / n as f64;
            acc += Complex64::new(angle.cos(), angle.sin()) * v;
        }
        out.push(acc);
    }
    out
}

fn complex_vec(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), len)
        .prop_map(|v| v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
}

#[test]
fn random_length_8_fft_matches_naive_loop() {
    let mut r = common::rng(8);
    let t = common::random_tensor(&mut r, &[8]);
    let x: Vec<Complex64> = t.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let fast = fft_radix2(&x);
    for (a, b) in fast.iter().zip(oracle_dft(&x)) {
        assert!((a - b).norm() <= 1e-9);
    }
}

proptest! {
    #[test]
    fn fft_equals_naive_on_powers_of_two(exp in 0u32..=6, seed in any::<u64>()) {
        let n = 1usize << exp;
        let mut r = common::rng(seed);
        let t = common::random_tensor(&mut r, &[2 * n]);
        let x: Vec<Complex64> = t.data().chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
        let fast = fft_radix2(&x);
        let slow = dft_naive(&x);
        let oracle = oracle_dft(&x);
        for k in 0..n {
            prop_assert!((fast[k] - slow[k]).norm() <= 1e-9);
            prop_assert!((fast[k] - oracle[k]).norm() <= 1e-9);
        }
    }

    #[test]
    fn parseval_and_inverse(x in complex_vec(1..=40)) {
        let n = x.len() as f64;
        let big = dft(&x);
        let time: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        let freq: f64 = big.iter().map(|v| v.norm_sqr()).sum::<f64>() / n;
        prop_assert!((time - freq).abs() <= 1e-9 * time.max(1e-300));
        let back = idft(&big);
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).norm() <= 1e-9);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant(
        rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 4), 1..6),
        shift in -100.0f64..100.0,
    ) {
        let t = Tensor::from_rows(&rows).unwrap();
        let shifted = Tensor::new(t.shape(), t.data().iter().map(|v| v + shift).collect()).unwrap();
        let mut g = Graph::new();
        let a = g.leaf(t);
        let b = g.leaf(shifted);
        let sa = g.softmax(a, 1).unwrap();
        let sb = g.softmax(b, 1).unwrap();
        for (ra, rb) in g.value(sa).data().chunks(4).zip(g.value(sb).data().chunks(4)) {
            prop_assert!((ra.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(ra.iter().all(|&v| v > 0.0));
            for (x, y) in ra.iter().zip(rb) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn reshape_and_transpose_conserve_elements(a in 1usize..5, b in 1usize..5, c in 1usize..5) {
        let n = a * b * c;
        let t = Tensor::new(&[a, b, c], (0..n).map(|i| i as f64).collect()).unwrap();
        let mut g = Graph::new();
        let v = g.leaf(t.clone());
        let r = g.reshape(v, &[c, a * b]).unwrap();
        prop_assert_eq!(g.value(r).len(), n);
        let tr = g.transpose(v, 0, 2).unwrap();
        prop_assert_eq!(g.value(tr).len(), n);
        let back = g.transpose(tr, 0, 2).unwrap();
        prop_assert_eq!(g.value(back).data(), t.data());
    }

    #[test]
    fn layer_norm_slices_standardized(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 1..5)) {
        let t = Tensor::from_rows(&rows).unwrap();
        let mut g = Graph::new();
        let x = g.leaf(t);
        let gain = g.constant(Tensor::full(&[6], 1.0));
        let bias = g.constant(Tensor::zeros(&[6]));
        let y = g.layer_norm(x, 1, gain, bias, 1e-12).unwrap();
        for (slice, raw) in g.value(y).data().chunks(6).zip(&rows) {
            let mean = slice.iter().sum::<f64>() / 6.0;
            prop_assert!(mean.abs() <= 1e-9);
            let raw_mean = raw.iter().sum::<f64>() / 6.0;
            let raw_var = raw.iter().map(|v| (v - raw_mean).powi(2)).sum::<f64>() / 6.0;
            if raw_var > 1e-3 {
                let var = slice.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
                prop_assert!((var - 1.0).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn softmax_matches_direct_formula() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap());
    let y = g.softmax(x, 0).unwrap();
    let denom: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
    for (i, v) in g.value(y).data().iter().enumerate() {
        assert!((v - ((i + 1) as f64).exp() / denom).abs() < 1e-15);
    }
}
