//! Confidence intervals for the change fraction `tau0`.
//!
//! | method | construction |
//! |--------|--------------|
//! | U1 | plug-in with the true rate `a_n` (simulation only) |
//! | U2 | plug-in with the estimated rate |
//! | U3 | two-mean Gaussian residual bootstrap, U-statistic re-estimation |
//! | U4 | Gaussian bootstrap from `(k_hat, delta_hat, Sigma_hat)` |
//! | U5 | within-segment nonparametric resampling |
//! | LS1 | least-squares interval with the `A_p` rate |
//! | LS2 | trimmed least-squares bootstrap of the shift `h` |
//!
//! Bootstrap intervals are `[center - q_hi, center - q_lo]` with type-7
//! quantiles of the replicate deviations. Replicate `b` of a method draws
//! from the stream `(seed, method tag, b)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cov_est::{
    estimate_sigma_diag, estimate_sigma_pd, estimate_sigma_shrink, CovEstimate, GaussianSampler,
    PdConfig,
};
use crate::data::ObservationMatrix;
use crate::error::{Error, Result};
use crate::estimators::{scan_ssr, scan_ssr_range, scan_ustat};
use crate::limit_dist::{quantile_type7, XiDistribution};
use crate::nuisance::{fit_lenient, ChangePointFit};
use crate::rng::{stream, tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    U1,
    U2,
    U3,
    U4,
    U5,
    LS1,
    LS2,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::U1,
        Method::U2,
        Method::U3,
        Method::U4,
        Method::U5,
        Method::LS1,
        Method::LS2,
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "u1" => Ok(Method::U1),
            "u2" => Ok(Method::U2),
            "u3" => Ok(Method::U3),
            "u4" => Ok(Method::U4),
            "u5" => Ok(Method::U5),
            "ls1" => Ok(Method::LS1),
            "ls2" => Ok(Method::LS2),
            other => Err(Error::invalid(format!("unknown interval method '{other}'"))),
        }
    }
}

/// Method-specific diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalAux {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
    /// Bootstrap ran with a zero signal estimate.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalResult {
    pub method: Method,
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
    pub level: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub aux: IntervalAux,
}

impl IntervalResult {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn covers(&self, tau: f64) -> bool {
        self.lo <= tau && tau <= self.hi
    }
}

/// Mean-shift direction used by the U4 bootstrap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeltaShape {
    /// `1_p sqrt(Delta_hat / p)`.
    UniformVector,
    /// `|delta_hat| (1/sqrt 5, ..., 1/sqrt 5, 0, ...)`.
    SparseFive,
}

#[derive(Clone, Debug)]
pub enum CovStrategy {
    Rothman(PdConfig),
    Diagonal,
    Shrink(f64),
    Zero,
}

impl CovStrategy {
    pub fn estimate(&self, data: &ObservationMatrix, k: usize) -> Result<CovEstimate> {
        match self {
            CovStrategy::Rothman(cfg) => estimate_sigma_pd(data, k, cfg),
            CovStrategy::Diagonal => estimate_sigma_diag(data, k),
            CovStrategy::Shrink(w) => estimate_sigma_shrink(data, k, *w),
            CovStrategy::Zero => Ok(CovEstimate::zero(data.p())),
        }
    }
}

impl FromStr for CovStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rothman" => Ok(CovStrategy::Rothman(PdConfig::default())),
            "diag" => Ok(CovStrategy::Diagonal),
            "shrink" => Ok(CovStrategy::Shrink(0.5)),
            other => Err(Error::invalid(format!(
                "unknown covariance method '{other}'"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BootstrapConfig {
    pub b: usize,
    pub seed: u64,
    pub level: f64,
    pub cov: CovStrategy,
    /// Trimming fraction for LS2.
    pub c_star: f64,
    pub delta_shape: DeltaShape,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            b: 200,
            seed: 0,
            level: 0.95,
            cov: CovStrategy::Rothman(PdConfig::default()),
            c_star: 0.05,
            delta_shape: DeltaShape::UniformVector,
        }
    }
}

impl BootstrapConfig {
    fn validate(&self) -> Result<()> {
        if self.b < 1 {
            return Err(Error::invalid("bootstrap needs B >= 1"));
        }
        check_level(self.level)?;
        if !(self.c_star > 0.0 && self.c_star < 0.5) {
            return Err(Error::invalid("c_star must lie in (0, 0.5)"));
        }
        Ok(())
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("level = {level} not in (0, 1)")))
    }
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Plug-in interval `[tau - q_{1-a/2}/a_n, tau - q_{a/2}/a_n]`.
///
/// Uses the supplied `oracle_a_n` (method U1) when given, else the
/// estimated rate (U2). A zero rate yields `[0, 1]`.
pub fn ci_plugin(
    fit: &ChangePointFit,
    level: f64,
    oracle_a_n: Option<f64>,
) -> Result<IntervalResult> {
    check_level(level)?;
    if fit.frob_sq_hat.is_nan() || fit.frob_sq_hat <= 0.0 {
        return Err(Error::FlatPanel(fit.frob_sq_hat));
    }
    let (method, a) = match oracle_a_n {
        Some(a) => (Method::U1, a),
        None => (Method::U2, fit.a_n_hat),
    };
    let xi = XiDistribution::new(fit.tau_hat)?;
    let alpha = 1.0 - level;
    let q_hi = xi.quantile(1.0 - alpha / 2.0)?;
    let q_lo = xi.quantile(alpha / 2.0)?;
    let (lo, hi) = if a > 0.0 && a.is_finite() {
        (
            clamp01(fit.tau_hat - q_hi / a),
            clamp01(fit.tau_hat - q_lo / a),
        )
    } else if a.is_infinite() {
        (fit.tau_hat, fit.tau_hat)
    } else {
        (0.0, 1.0)
    };
    Ok(IntervalResult {
        method,
        lo,
        hi,
        center: fit.tau_hat,
        level,
        b: 0,
        aux: IntervalAux {
            a_n: Some(a),
            q_lo: Some(q_lo),
            q_hi: Some(q_hi),
            ..IntervalAux::default()
        },
    })
}

/// `[center - scale q_{1-a/2}, center - scale q_{a/2}]` from replicate deviations.
fn percentile_interval(
    method: Method,
    center: f64,
    mut deviations: Vec<f64>,
    scale: f64,
    level: f64,
    aux: IntervalAux,
) -> IntervalResult {
    deviations.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    let q_lo = quantile_type7(&deviations, alpha / 2.0);
    let q_hi = quantile_type7(&deviations, 1.0 - alpha / 2.0);
    IntervalResult {
        method,
        lo: clamp01(center - scale * q_hi),
        hi: clamp01(center - scale * q_lo),
        center,
        level,
        b: deviations.len(),
        aux: IntervalAux {
            q_lo: Some(q_lo),
            q_hi: Some(q_hi),
            ..aux
        },
    }
}

fn segment_means(data: &ObservationMatrix, k: usize) -> (Vec<f64>, Vec<f64>) {
    let p = data.p();
    let mean = |a: usize, b: usize| {
        let mut m = vec![0.0; p];
        for t in a..b {
            for (s, x) in m.iter_mut().zip(data.row(t)) {
                *s += x;
            }
        }
        m.iter_mut().for_each(|s| *s /= (b - a) as f64);
        m
    };
    (mean(0, k), mean(k, data.n()))
}

/// Panel `mean_pre + eps` for rows `1..=k`, `mean_post + eps` after.
fn two_mean_panel<R: Rng>(
    sampler: &GaussianSampler,
    rng: &mut R,
    n: usize,
    k: usize,
    pre: &[f64],
    post: &[f64],
) -> ObservationMatrix {
    let p = pre.len();
    let mut v = Vec::with_capacity(n * p);
    sampler.fill(rng, n, &mut v);
    for (t, row) in v.chunks_exact_mut(p).enumerate() {
        let shift = if t < k { pre } else { post };
        for (x, m) in row.iter_mut().zip(shift) {
            *x += m;
        }
    }
    ObservationMatrix::from_raw(n, p, v)
}

fn ustat_tau(panel: &ObservationMatrix) -> f64 {
    scan_ustat(panel).expect("n >= 4").arg_tau
}

fn bootstrap_delta(fit: &ChangePointFit, shape: DeltaShape) -> Vec<f64> {
    let p = fit.p;
    let norm = fit.delta_sq_hat.sqrt();
    match shape {
        DeltaShape::UniformVector => vec![norm / (p as f64).sqrt(); p],
        DeltaShape::SparseFive => {
            let m = p.min(5);
            (0..p)
                .map(|j| if j < m { norm / (m as f64).sqrt() } else { 0.0 })
                .collect()
        }
    }
}

/// Parametric bootstrap from `(k_hat_U, delta_hat, Sigma_hat)`.
pub fn ci_boot_parametric_u4(
    data: &ObservationMatrix,
    fit: &ChangePointFit,
    cfg: &BootstrapConfig,
) -> Result<IntervalResult> {
    cfg.validate()?;
    let cov = cfg.cov.estimate(data, fit.k_hat)?;
    u4_with_cov(data, fit, &cov, cfg)
}

fn u4_with_cov(
    data: &ObservationMatrix,
    fit: &ChangePointFit,
    cov: &CovEstimate,
    cfg: &BootstrapConfig,
) -> Result<IntervalResult> {
    let n = data.n();
    let sampler = GaussianSampler::new(&cov.sigma_hat)?;
    let delta = bootstrap_delta(fit, cfg.delta_shape);
    let zero = vec![0.0; data.p()];
    let deviations: Vec<f64> = (0..cfg.b)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(cfg.seed, &[tag::BOOT_U4, b as u64]);
            let panel = two_mean_panel(&sampler, &mut rng, n, fit.k_hat, &zero, &delta);
            ustat_tau(&panel) - fit.tau_hat
        })
        .collect();
    let aux = IntervalAux {
        degenerate: fit.delta_sq_hat == 0.0,
        lambda2: cov.lambda2,
        ..IntervalAux::default()
    };
    Ok(percentile_interval(
        Method::U4,
        fit.tau_hat,
        deviations,
        1.0,
        cfg.level,
        aux,
    ))
}

/// Two-mean Gaussian residual bootstrap around `k_hat_U`, re-estimated with
/// the U-statistic.
pub fn ci_boot_parametric_u3(
    data: &ObservationMatrix,
    fit_u: &ChangePointFit,
    cfg: &BootstrapConfig,
) -> Result<IntervalResult> {
    cfg.validate()?;
    let cov = cfg.cov.estimate(data, fit_u.k_hat)?;
    u3_with_cov(data, fit_u, &cov, cfg)
}

fn u3_with_cov(
    data: &ObservationMatrix,
    fit_u: &ChangePointFit,
    cov: &CovEstimate,
    cfg: &BootstrapConfig,
) -> Result<IntervalResult> {
    let n = data.n();
    let sampler = GaussianSampler::new(&cov.sigma_hat)?;
    let (pre, post) = segment_means(data, fit_u.k_hat);
    let deviations: Vec<f64> = (0..cfg.b)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(cfg.seed, &[tag::BOOT_U3, b as u64]);
            let panel = two_mean_panel(&sampler, &mut rng, n, fit_u.k_hat, &pre, &post);
            ustat_tau(&panel) - fit_u.tau_hat
        })
        .collect();
    let aux = IntervalAux {
        lambda2: cov.lambda2,
        ..IntervalAux::default()
    };
    Ok(percentile_interval(
        Method::U3,
        fit_u.tau_hat,
        deviations,
        1.0,
        cfg.level,
        aux,
    ))
}

/// Resamples rows with replacement within each estimated segment.
pub fn ci_boot_nonparametric_u5(
    data: &ObservationMatrix,
    fit_u: &ChangePointFit,
    cfg: &BootstrapConfig,
) -> Result<IntervalResult> {
    cfg.validate()?;
    let (n, p, k) = (data.n(), data.p(), fit_u.k_hat);
    if k == 0 || k >= n {
        return Err(Error::IndexOutOfRange(format!(
            "split {k} leaves an empty segment"
        )));
    }
    let deviations: Vec<f64> = (0..cfg.b)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(cfg.seed, &[tag::BOOT_U5, b as u64]);
            let mut v = Vec::with_capacity(n * p);
            for _ in 0..k {
                v.extend_from_slice(data.row(rng.random_range(0..k)));
            }
            for _ in k..n {
                v.extend_from_slice(data.row(rng.random_range(k..n)));
            }
            ustat_tau(&ObservationMatrix::from_raw(n, p, v)) - fit_u.tau_hat
        })
        .collect();
    Ok(percentile_interval(
        Method::U5,
        fit_u.tau_hat,
        deviations,
        1.0,
        cfg.level,
        IntervalAux::default(),
    ))
}

/// Standardized critical value for LS1. The conventional 11 at 95%.
fn ls1_critical_value(level: f64) -> Result<f64> {
    if (level - 0.95).abs() < 1e-12 {
        return Ok(11.0);
    }
    // argmax W(v) - |v|/2 has the law of s * xi(tau) for any tau
    Ok(XiDistribution::new(0.5)?.quantile(0.5 + level / 2.0)? * 0.25)
}

/// `A_p = |d|^4 / sum_j d_j^2 sigma_j^2` with `d` the mean difference and
/// `sigma_j^2` the pooled per-coordinate variances at split `k`.
pub fn ls1_rate(data: &ObservationMatrix, k: usize) -> Result<f64> {
    let n = data.n();
    let (pre, post) = segment_means(data, k);
    let d: Vec<f64> = post.iter().zip(&pre).map(|(a, b)| a - b).collect();
    let mut var = vec![0.0; data.p()];
    for (t, row) in data.rows().enumerate() {
        let m = if t < k { &pre } else { &post };
        for ((v, x), mu) in var.iter_mut().zip(row).zip(m) {
            *v += (x - mu).powi(2);
        }
    }
    var.iter_mut().for_each(|v| *v /= (n - 2) as f64);
    let d2: f64 = d.iter().map(|x| x * x).sum();
    if d2 == 0.0 {
        return Err(Error::DegenerateSignal("segment means coincide".into()));
    }
    let denom: f64 = d.iter().zip(&var).map(|(x, v)| x * x * v).sum();
    Ok(if denom > 0.0 {
        d2 * d2 / denom
    } else {
        f64::INFINITY
    })
}

/// Least-squares interval `[(k - floor(c/A_p))/n, (k + ceil(c/A_p))/n]`.
pub fn ci_ls1(data: &ObservationMatrix, level: f64) -> Result<IntervalResult> {
    check_level(level)?;
    let n = data.n();
    let prof = scan_ssr(data)?;
    let k = prof.arg_k;
    let a_p = ls1_rate(data, k)?;
    let c = ls1_critical_value(level)?;
    let offset = c / a_p;
    let nf = n as f64;
    let lo = (k as f64 - offset.floor()) / nf;
    let hi = (k as f64 + offset.ceil()) / nf;
    Ok(IntervalResult {
        method: Method::LS1,
        lo: clamp01(lo),
        hi: clamp01(hi),
        center: prof.arg_tau,
        level,
        b: 0,
        aux: IntervalAux {
            a_p: Some(a_p),
            ..IntervalAux::default()
        },
    })
}

/// Admissible splits `[floor(c n), floor((1 - c) n)]` within `[1, n-1]`.
fn trimmed_range(n: usize, c_star: f64) -> Result<(usize, usize)> {
    let nf = n as f64;
    let lo = ((c_star * nf + 1e-9).floor() as usize).max(1);
    let hi = (((1.0 - c_star) * nf + 1e-9).floor() as usize).min(n - 1);
    if hi < lo || hi - lo + 1 < 3 {
        return Err(Error::invalid(format!(
            "trimming c* = {c_star} leaves fewer than 3 admissible splits for n = {n}"
        )));
    }
    Ok((lo, hi))
}

/// `L(m) = (1/n) [sum_{t<=m} |X_t - mu_pre|^2 + sum_{t>m} |X_t - mu_post|^2]`
/// evaluated for every `m` in `lo..=hi`.
pub fn ls2_objective(
    panel: &ObservationMatrix,
    pre: &[f64],
    post: &[f64],
    lo: usize,
    hi: usize,
) -> Vec<f64> {
    let n = panel.n();
    let dist =
        |row: &[f64], mu: &[f64]| -> f64 { row.iter().zip(mu).map(|(x, m)| (x - m).powi(2)).sum() };
    let to_post: Vec<f64> = panel.rows().map(|r| dist(r, post)).collect();
    let to_pre: Vec<f64> = panel.rows().map(|r| dist(r, pre)).collect();
    let mut head: f64 = to_pre[..lo].iter().sum();
    let mut tail: f64 = to_post[lo..].iter().sum();
    let mut out = Vec::with_capacity(hi - lo + 1);
    for m in lo..=hi {
        if m > lo {
            head += to_pre[m - 1];
            tail -= to_post[m - 1];
        }
        out.push((head + tail) / n as f64);
    }
    out
}

fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Trimmed least-squares bootstrap of the shift `h = m - k_hat`.
pub fn ci_ls2(data: &ObservationMatrix, cfg: &BootstrapConfig) -> Result<IntervalResult> {
    cfg.validate()?;
    let n = data.n();
    if (cfg.c_star * n as f64) < 1.0 {
        return Err(Error::invalid("need n * c_star >= 1"));
    }
    let (lo, hi) = trimmed_range(n, cfg.c_star)?;
    let prof = scan_ssr_range(data, lo, hi)?;
    let k = prof.arg_k;
    let cov = cfg.cov.estimate(data, k)?;
    ls2_with_cov(data, k, lo, hi, &cov, cfg)
}

fn ls2_with_cov(
    data: &ObservationMatrix,
    k: usize,
    lo: usize,
    hi: usize,
    cov: &CovEstimate,
    cfg: &BootstrapConfig,
) -> Result<IntervalResult> {
    let n = data.n();
    let sampler = GaussianSampler::new(&cov.sigma_hat)?;
    let (pre, post) = segment_means(data, k);
    let shifts: Vec<f64> = (0..cfg.b)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(cfg.seed, &[tag::BOOT_LS2, b as u64]);
            let panel = two_mean_panel(&sampler, &mut rng, n, k, &pre, &post);
            let l = ls2_objective(&panel, &pre, &post, lo, hi);
            (lo + argmin_first(&l)) as f64 - k as f64
        })
        .collect();
    let aux = IntervalAux {
        lambda2: cov.lambda2,
        ..IntervalAux::default()
    };
    Ok(percentile_interval(
        Method::LS2,
        k as f64 / n as f64,
        shifts,
        1.0 / n as f64,
        cfg.level,
        aux,
    ))
}

/// Builds every requested interval, sharing the fit and covariance estimates.
///
/// Returns one entry per method in request order; failures are per method.
pub fn compute_intervals(
    data: &ObservationMatrix,
    methods: &[Method],
    cfg: &BootstrapConfig,
    oracle_a_n: Option<f64>,
) -> Result<Vec<(Method, Result<IntervalResult>)>> {
    cfg.validate()?;
    let needs_fit = methods.iter().any(|m| {
        matches!(
            m,
            Method::U1 | Method::U2 | Method::U3 | Method::U4 | Method::U5
        )
    });
    let fit_u = if needs_fit {
        Some(fit_lenient(data))
    } else {
        None
    };
    let needs_cov = methods.iter().any(|m| matches!(m, Method::U3 | Method::U4));
    let cov_u = match (&fit_u, needs_cov) {
        (Some(Ok(f)), true) => Some(cfg.cov.estimate(data, f.k_hat)),
        _ => None,
    };

    let mut out = Vec::with_capacity(methods.len());
    for &m in methods {
        let res = match m {
            Method::LS1 => ci_ls1(data, cfg.level),
            Method::LS2 => ci_ls2(data, cfg),
            _ => match fit_u.as_ref().expect("fit computed") {
                Err(e) => Err(clone_error(e)),
                Ok(f) => match m {
                    Method::U1 => match oracle_a_n {
                        Some(a) => ci_plugin(f, cfg.level, Some(a)),
                        None => Err(Error::invalid("U1 needs the true rate a_n")),
                    },
                    Method::U2 => ci_plugin(f, cfg.level, None),
                    Method::U5 => ci_boot_nonparametric_u5(data, f, cfg),
                    Method::U3 | Method::U4 => match cov_u.as_ref().expect("cov computed") {
                        Err(e) => Err(clone_error(e)),
                        Ok(cov) if m == Method::U3 => u3_with_cov(data, f, cov, cfg),
                        Ok(cov) => u4_with_cov(data, f, cov, cfg),
                    },
                    Method::LS1 | Method::LS2 => unreachable!(),
                },
            },
        };
        out.push((m, res));
    }
    Ok(out)
}

fn clone_error(e: &Error) -> Error {
    match e {
        Error::DiagonalDegenerate(j) => Error::DiagonalDegenerate(*j),
        Error::NotPsd => Error::NotPsd,
        Error::NotSymmetric(v) => Error::NotSymmetric(*v),
        Error::FlatPanel(v) => Error::FlatPanel(*v),
        Error::TooFewRows { n, min } => Error::TooFewRows { n: *n, min: *min },
        Error::InvalidInput(m) => Error::InvalidInput(m.clone()),
        other => Error::DegenerateSignal(other.to_string()),
    }
}
