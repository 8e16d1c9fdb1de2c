use std::sync::OnceLock;

use cploc_core::limit_dist::{ks_distance, quantile_type7, xi_sample_mc, McGrid, XiDistribution};

const REPS: usize = 100_000;

fn samples_half() -> &'static [f64] {
    static S: OnceLock<Vec<f64>> = OnceLock::new();
    S.get_or_init(|| {
        let mut v = xi_sample_mc(0.5, REPS, 2024, McGrid::default()).unwrap();
        v.sort_by(f64::total_cmp);
        v
    })
}

#[test]
fn mc_median_near_zero() {
    let med = quantile_type7(samples_half(), 0.5);
    assert!(med.abs() <= 0.05, "median {med}");
}

#[test]
fn mc_upper_quantile_matches_density_inversion() {
    let s = samples_half();
    let xi = XiDistribution::new(0.5).unwrap();
    let q = xi.quantile(0.975).unwrap();
    let emp = quantile_type7(s, 0.975);
    let se = (0.975f64 * 0.025 / REPS as f64).sqrt() / xi.density(q);
    assert!((emp - q).abs() <= 3.0 * se, "mc {emp} vs {q} (se {se})");
}

#[test]
fn mc_cdf_close_to_density_cdf() {
    let xi = XiDistribution::new(0.5).unwrap();
    let d = ks_distance(samples_half(), |t| xi.cdf(t));
    assert!(d <= 0.01, "KS {d}");
}

#[test]
fn scaled_variance_constant_across_tau() {
    let vals: Vec<f64> = [0.2, 0.3, 0.5]
        .iter()
        .map(|&tau| {
            let v = xi_sample_mc(tau, 20_000, 77, McGrid::default()).unwrap();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
            var * (tau * (1.0 - tau)).powi(2)
        })
        .collect();
    for v in &vals[1..] {
        assert!((v / vals[0] - 1.0).abs() <= 0.15, "{vals:?}");
    }
}
