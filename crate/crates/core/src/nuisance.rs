//! Plug-in estimates of the signal `|delta|^2`, the noise `|Sigma|_F^2` and
//! the rate `a_n = n^2 |delta|^4 / |Sigma|_F^2`.

use serde::{Deserialize, Serialize};

use crate::data::ObservationMatrix;
use crate::error::{Error, Result};
use crate::estimators::{scan_ustat, ObjectiveKind, ObjectiveProfile};

/// Asymptotic regime of `a_n / n`. A diagnostic label only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    SubLinear,
    Linear,
    SuperLinear,
}

impl Regime {
    pub const LOWER: f64 = 0.1;
    pub const UPPER: f64 = 10.0;

    pub fn classify(a_n_over_n: f64) -> Self {
        if a_n_over_n < Self::LOWER {
            Regime::SubLinear
        } else if a_n_over_n <= Self::UPPER {
            Regime::Linear
        } else {
            Regime::SuperLinear
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaSqEstimate {
    pub raw: f64,
    pub clamped: f64,
}

impl DeltaSqEstimate {
    pub fn was_clamped(&self) -> bool {
        self.raw < 0.0
    }
}

/// `G_n(k_hat) / ((k_hat - 1)(n - k_hat - 1))`, clamped at zero.
pub fn estimate_delta_sq(profile: &ObjectiveProfile) -> Result<DeltaSqEstimate> {
    if profile.kind != ObjectiveKind::UStat {
        return Err(Error::WrongProfileKind {
            expected: "U-statistic",
        });
    }
    let (k, n) = (profile.arg_k, profile.n);
    let raw = profile.optimum() / ((k - 1) * (n - k - 1)) as f64;
    Ok(DeltaSqEstimate {
        raw,
        clamped: raw.max(0.0),
    })
}

/// Leave-one-out deviations `X_i - mean(segment without i)` for rows `a..b`.
fn loo_deviations(data: &ObservationMatrix, a: usize, b: usize) -> Vec<f64> {
    let p = data.p();
    let len = (b - a) as f64;
    let mut sum = vec![0.0; p];
    for t in a..b {
        for (s, x) in sum.iter_mut().zip(data.row(t)) {
            *s += x;
        }
    }
    let mut out = Vec::with_capacity((b - a) * p);
    for t in a..b {
        // X_i - (S - X_i)/(m - 1) = (m X_i - S)/(m - 1)
        out.extend(
            data.row(t)
                .iter()
                .zip(&sum)
                .map(|(x, s)| (len * x - s) / (len - 1.0)),
        );
    }
    out
}

/// Cross-segment jackknife estimate of `|Sigma|_F^2` at split `k`:
///
/// `c(k) / (k (n-k)) * sum_{i<=k<j} <g_i, h_j>^2`
///
/// where `g_i`, `h_j` are leave-one-out deviations within the pre- and
/// post-change segments. The trace form alone is biased upward by
/// `k/(k-1) * (n-k)/(n-k-1)` because `Var(g_i) = Sigma k/(k-1)`; the factor
/// `c(k) = (k-1)(n-k-1) / (k (n-k))` removes it.
pub fn estimate_frob_sq(data: &ObservationMatrix, k: usize) -> Result<f64> {
    let (n, p) = (data.n(), data.p());
    if k < 2 || k + 2 > n {
        return Err(Error::IndexOutOfRange(format!(
            "split {k} must lie in [2, {}]",
            n.saturating_sub(2)
        )));
    }
    let g = loo_deviations(data, 0, k);
    let h = loo_deviations(data, k, n);
    let mut acc = 0.0;
    for gi in g.chunks_exact(p) {
        for hj in h.chunks_exact(p) {
            let d: f64 = gi.iter().zip(hj).map(|(a, b)| a * b).sum();
            acc += d * d;
        }
    }
    let (kf, m) = (k as f64, (n - k) as f64);
    let correction = (kf - 1.0) * (m - 1.0) / (kf * m);
    Ok(correction * acc / (kf * m))
}

/// Point estimate and nuisance quantities for one panel.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChangePointFit {
    pub n: usize,
    pub p: usize,
    pub k_hat: usize,
    pub tau_hat: f64,
    pub delta_sq_hat: f64,
    pub delta_sq_raw: f64,
    pub frob_sq_hat: f64,
    pub a_n_hat: f64,
    pub regime: Regime,
    pub a_n_over_n: f64,
    pub log_n_over_a_n: f64,
    #[serde(skip)]
    pub profile: Option<ObjectiveProfile>,
}

pub fn fit(data: &ObservationMatrix) -> Result<ChangePointFit> {
    let f = fit_lenient(data)?;
    if f.frob_sq_hat <= 0.0 || !f.frob_sq_hat.is_finite() {
        return Err(Error::FlatPanel(f.frob_sq_hat));
    }
    Ok(f)
}

/// As [`fit`] but keeps a nonpositive Frobenius estimate, with an infinite
/// rate. The bootstrap intervals only need `k_hat` and `delta_sq_hat`.
pub fn fit_lenient(data: &ObservationMatrix) -> Result<ChangePointFit> {
    let n = data.n();
    if n < 6 {
        return Err(Error::TooFewRows { n, min: 6 });
    }
    let profile = scan_ustat(data)?;
    let k = profile.arg_k;
    let delta = estimate_delta_sq(&profile)?;
    let frob = estimate_frob_sq(data, k)?;
    let nf = n as f64;
    let a_n = if frob > 0.0 {
        nf * nf * delta.clamped * delta.clamped / frob
    } else {
        f64::INFINITY
    };
    Ok(ChangePointFit {
        n,
        p: data.p(),
        k_hat: k,
        tau_hat: profile.arg_tau,
        delta_sq_hat: delta.clamped,
        delta_sq_raw: delta.raw,
        frob_sq_hat: frob,
        a_n_hat: a_n,
        regime: Regime::classify(a_n / nf),
        a_n_over_n: a_n / nf,
        log_n_over_a_n: nf.ln() / a_n,
        profile: Some(profile),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::scan_ssr;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn step_panel(n: usize, k0: usize, delta: &[f64]) -> ObservationMatrix {
        let rows: Vec<Vec<f64>> = (1..=n)
            .map(|t| {
                if t > k0 {
                    delta.to_vec()
                } else {
                    vec![0.0; delta.len()]
                }
            })
            .collect();
        ObservationMatrix::from_rows(&rows).unwrap()
    }

    fn gaussian(n: usize, sd: &[f64], rng: &mut ChaCha8Rng) -> ObservationMatrix {
        let v = (0..n)
            .flat_map(|_| {
                sd.iter()
                    .map(|s| s * Distribution::<f64>::sample(&StandardNormal, rng))
                    .collect::<Vec<f64>>()
            })
            .collect();
        ObservationMatrix::new(n, sd.len(), v).unwrap()
    }

    fn mean_se(x: &[f64]) -> (f64, f64) {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
        (m, (v / x.len() as f64).sqrt())
    }

    #[test]
    fn delta_sq_noiseless() {
        let x = step_panel(6, 3, &[1.0]);
        let prof = scan_ustat(&x).unwrap();
        let d = estimate_delta_sq(&prof).unwrap();
        assert!((d.raw - 1.0).abs() < 1e-12);
        assert!(!d.was_clamped());

        let flat = ObservationMatrix::from_rows(&vec![vec![2.0, 1.0]; 8]).unwrap();
        let d = estimate_delta_sq(&scan_ustat(&flat).unwrap()).unwrap();
        assert!(d.clamped.abs() < 1e-12);

        let wrong = scan_ssr(&x).unwrap();
        assert!(matches!(
            estimate_delta_sq(&wrong),
            Err(Error::WrongProfileKind { .. })
        ));
    }

    #[test]
    fn frob_constant_segments_and_range() {
        let x = step_panel(10, 4, &[1.0, 2.0]);
        assert_eq!(estimate_frob_sq(&x, 4).unwrap(), 0.0);
        assert!(estimate_frob_sq(&x, 1).is_err());
        assert!(estimate_frob_sq(&x, 9).is_err());
    }

    #[test]
    fn frob_matches_explicit_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = gaussian(9, &[1.0, 0.5, 2.0], &mut rng);
        let (n, p, k) = (9usize, 3usize, 4usize);
        // tr(A B) with A, B the p x p outer-product sums
        let dev = |i: usize, a: usize, b: usize| -> Vec<f64> {
            (0..p)
                .map(|j| {
                    let others: f64 = (a..b).filter(|&t| t != i).map(|t| x.row(t)[j]).sum();
                    x.row(i)[j] - others / (b - a - 1) as f64
                })
                .collect()
        };
        let mut am = vec![0.0; p * p];
        let mut bm = vec![0.0; p * p];
        for i in 0..k {
            let g = dev(i, 0, k);
            for r in 0..p {
                for c in 0..p {
                    am[r * p + c] += g[r] * g[c];
                }
            }
        }
        for i in k..n {
            let h = dev(i, k, n);
            for r in 0..p {
                for c in 0..p {
                    bm[r * p + c] += h[r] * h[c];
                }
            }
        }
        let tr: f64 = (0..p)
            .flat_map(|r| (0..p).map(move |c| (r, c)))
            .map(|(r, c)| am[r * p + c] * bm[c * p + r])
            .sum();
        let (kf, m) = (k as f64, (n - k) as f64);
        let expected = tr / (kf * m) * (kf - 1.0) * (m - 1.0) / (kf * m);
        let got = estimate_frob_sq(&x, k).unwrap();
        assert!((got - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn frob_unbiased_scalar() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sigma = 1.5;
        let est: Vec<f64> = (0..5000)
            .map(|_| estimate_frob_sq(&gaussian(100, &[sigma], &mut rng), 50).unwrap())
            .collect();
        let (m, se) = mean_se(&est);
        assert!((m - sigma.powi(4)).abs() < 3.0 * se, "{m} +- {se}");
    }

    #[test]
    fn frob_unbiased_diag_1_4() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let est: Vec<f64> = (0..5000)
            .map(|_| estimate_frob_sq(&gaussian(100, &[1.0, 2.0], &mut rng), 30).unwrap())
            .collect();
        let (m, se) = mean_se(&est);
        assert!((m - 17.0).abs() < 3.0 * se, "{m} +- {se}");
    }

    #[test]
    fn delta_sq_unbiased_at_true_split() {
        // E[G_n(k0)] = (k0-1)(n-k0-1)|delta|^2, so the statistic at k0 is unbiased.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (n, p, k0) = (200, 50, 40);
        let delta: Vec<f64> = (0..p)
            .map(|j| if j % 2 == 0 { 0.3 } else { -0.25 })
            .collect();
        let dsq: f64 = delta.iter().map(|d| d * d).sum();
        let est: Vec<f64> = (0..5000)
            .map(|_| {
                let z = gaussian(n, &vec![1.0; p], &mut rng);
                let v: Vec<f64> = z
                    .rows()
                    .enumerate()
                    .flat_map(|(t, r)| {
                        r.iter()
                            .zip(&delta)
                            .map(move |(x, d)| if t >= k0 { x + d } else { *x })
                    })
                    .collect();
                let x = ObservationMatrix::new(n, p, v).unwrap();
                let prof = scan_ustat(&x).unwrap();
                prof.value(k0).unwrap() / ((k0 - 1) * (n - k0 - 1)) as f64
            })
            .collect();
        let (m, se) = mean_se(&est);
        assert!((m - dsq).abs() < 3.0 * se, "{m} +- {se} vs {dsq}");
    }

    #[test]
    fn fit_noiseless_is_flat_panel() {
        let x = step_panel(12, 6, &[1.0, 1.0]);
        let prof = scan_ustat(&x).unwrap();
        assert!((estimate_delta_sq(&prof).unwrap().raw - 2.0).abs() < 1e-12);
        assert!(matches!(fit(&x), Err(Error::FlatPanel(_))));
        let short = step_panel(5, 2, &[1.0]);
        assert!(matches!(fit(&short), Err(Error::TooFewRows { .. })));
    }

    #[test]
    fn regime_thresholds() {
        assert_eq!(Regime::classify(0.05), Regime::SubLinear);
        assert_eq!(Regime::classify(0.1), Regime::Linear);
        assert_eq!(Regime::classify(10.0), Regime::Linear);
        assert_eq!(Regime::classify(10.5), Regime::SuperLinear);
    }

    #[test]
    fn rate_invariant_to_scale_and_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = gaussian(40, &[1.0; 6], &mut rng);
        let v: Vec<f64> = z
            .rows()
            .enumerate()
            .flat_map(|(t, r)| r.iter().map(move |x| if t >= 15 { x + 1.0 } else { *x }))
            .collect();
        let x = ObservationMatrix::new(40, 6, v).unwrap();
        let base = fit(&x).unwrap();
        let scaled = fit(&x.scaled(3.0).unwrap()).unwrap();
        assert_eq!(base.k_hat, scaled.k_hat);
        assert!((scaled.delta_sq_hat / base.delta_sq_hat - 9.0).abs() < 1e-10);
        assert!((scaled.frob_sq_hat / base.frob_sq_hat - 81.0).abs() < 1e-10);
        assert!((scaled.a_n_hat / base.a_n_hat - 1.0).abs() < 1e-10);

        let shifted = fit(&x.shifted(&[5.0, -2.0, 0.0, 1.0, 3.0, 7.0]).unwrap()).unwrap();
        assert_eq!(shifted.k_hat, base.k_hat);
        assert!((shifted.frob_sq_hat / base.frob_sq_hat - 1.0).abs() < 1e-10);
        assert!((shifted.delta_sq_raw / base.delta_sq_raw - 1.0).abs() < 1e-10);

        let j = serde_json::to_value(&base).unwrap();
        for key in [
            "k_hat",
            "tau_hat",
            "delta_sq_hat",
            "delta_sq_raw",
            "frob_sq_hat",
            "a_n_hat",
            "regime",
            "log_n_over_a_n",
        ] {
            assert!(j.get(key).is_some(), "{key}");
        }
    }
}
