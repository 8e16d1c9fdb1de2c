//! Brute-force reference implementations shared by integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rows = Vec<Vec<f64>>;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Quadruple sum over `i1 != i2 <= k < j1 != j2`, scaled by `1/(k(n-k))`.
/// Indices are 1-based splits; O(n^4 p), so only small panels.
pub fn naive_ustat(x: &Rows, k: usize) -> f64 {
    let n = x.len();
    assert!(n <= 20, "naive oracle is O(n^4)");
    let mut acc = 0.0;
    for i1 in 0..k {
        for i2 in 0..k {
            if i1 == i2 {
                continue;
            }
            for j1 in k..n {
                for j2 in k..n {
                    if j1 == j2 {
                        continue;
                    }
                    acc += dot(&diff(&x[i1], &x[j1]), &diff(&x[i2], &x[j2]));
                }
            }
        }
    }
    acc / (k * (n - k)) as f64
}

/// Within-segment sum of squared deviations for split `k`.
pub fn ssr_loop(x: &Rows, k: usize) -> f64 {
    let seg = |rows: &[Vec<f64>]| -> f64 {
        let p = rows[0].len();
        let mut mean = vec![0.0; p];
        for r in rows {
            for j in 0..p {
                mean[j] += r[j] / rows.len() as f64;
            }
        }
        rows.iter()
            .map(|r| {
                r.iter()
                    .zip(&mean)
                    .map(|(a, m)| (a - m) * (a - m))
                    .sum::<f64>()
            })
            .sum()
    };
    seg(&x[..k]) + seg(&x[k..])
}

/// Noiseless objective value at split `k` for a change after `k0`.
pub fn expected_g(n: usize, k0: usize, delta_sq: f64, k: usize) -> f64 {
    let (n, k0, k) = (n as f64, k0 as f64, k as f64);
    if k <= k0 {
        (k - 1.0) * (n - k0) * (n - k0 - 1.0) * delta_sq / (n - k)
    } else {
        (n - k - 1.0) * k0 * (k0 - 1.0) * delta_sq / k
    }
}

/// Right-hand side of the decomposition of `G_n(k)` for `X_t = Z_t + delta 1{t > k0}`:
/// the noise-only objective, its noiseless mean and three `delta'Z` terms.
/// The branch `k > k0` is obtained by time reversal.
pub fn decomposition_rhs(z: &Rows, delta: &[f64], k0: usize, k: usize) -> f64 {
    let n = z.len();
    if k > k0 {
        let zr: Rows = z.iter().rev().cloned().collect();
        let neg: Vec<f64> = delta.iter().map(|d| -d).collect();
        return decomposition_rhs(&zr, &neg, n - k0, n - k);
    }
    let dz: Vec<f64> = z.iter().map(|r| dot(delta, r)).collect();
    let (nf, kf, k0f) = (n as f64, k as f64, k0 as f64);
    let head: f64 = dz[..k].iter().sum();
    let tail: f64 = dz[k0..].iter().sum();
    let middle: f64 = dz[k..k0].iter().sum();
    let dsq = dot(delta, delta);
    naive_ustat(z, k) + expected_g(n, k0, dsq, k)
        - 2.0 * (kf - 1.0) * (nf - kf - 1.0) * (nf - k0f) / (kf * (nf - kf)) * head
        + 2.0 * (kf - 1.0) * (nf - k0f - 1.0) / (nf - kf) * tail
        + 2.0 * (kf - 1.0) * (nf - k0f) / (nf - kf) * middle
}

pub fn random_rows(n: usize, p: usize, seed: u64) -> Rows {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..p).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}
