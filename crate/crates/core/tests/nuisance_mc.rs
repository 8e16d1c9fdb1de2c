use cploc_core::data::Cp1Spec;
use cploc_core::nuisance::fit;
use cploc_core::sim::{build_delta, generate_panel, oracle_rate, DeltaKind, SigmaModel};

fn ratios(n: usize, reps: usize) -> Vec<f64> {
    let p = 50;
    let delta = build_delta(DeltaKind::Dense, p, n, 20).unwrap();
    let spec = Cp1Spec::new(n, 0.5, delta, SigmaModel::Identity).unwrap();
    let a_n = oracle_rate(&spec).unwrap();
    (0..reps)
        .map(|r| {
            fit(&generate_panel(&spec, 7_000 + r as u64).unwrap())
                .unwrap()
                .a_n_hat
                / a_n
        })
        .collect()
}

fn frac_inside(r: &[f64]) -> f64 {
    r.iter().filter(|v| (0.7..=1.3).contains(*v)).count() as f64 / r.len() as f64
}

#[test]
fn estimated_rate_ratio_at_moderate_n() {
    // The delta'Z term gives delta_sq_hat a relative sd near 0.14 here, so
    // about 72% of ratios are expected inside [0.7, 1.3].
    let mut r = ratios(200, 1000);
    let f = frac_inside(&r);
    assert!((0.66..=0.78).contains(&f), "fraction inside {f}");
    r.sort_by(f64::total_cmp);
    let med = r[r.len() / 2];
    assert!((med - 1.0).abs() < 0.05, "median ratio {med}");
}

#[test]
fn estimated_rate_ratio_concentrates_as_n_grows() {
    let f = frac_inside(&ratios(800, 300));
    assert!(f >= 0.9, "fraction inside {f}");
}
