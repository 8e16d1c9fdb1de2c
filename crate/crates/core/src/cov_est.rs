//! Covariance estimates for the parametric bootstraps and Gaussian sampling.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ObservationMatrix;
use crate::error::{Error, Result};
use crate::rng::stream;

/// Eigenvalue floor applied before factoring a PSD matrix for sampling.
pub const EPS_PD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovMethod {
    SamplePooled,
    RothmanPD,
    DiagonalOnly,
    ShrinkageToDiagonal,
    /// Zero matrix; bootstraps driven by it are noise-free.
    Zero,
}

#[derive(Clone, Debug)]
pub struct CovEstimate {
    pub sigma_hat: DMatrix<f64>,
    pub method: CovMethod,
    pub min_eigenvalue: f64,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
}

impl CovEstimate {
    fn new(sigma_hat: DMatrix<f64>, method: CovMethod) -> Self {
        let min_eigenvalue = min_eigenvalue(&sigma_hat);
        Self {
            sigma_hat,
            method,
            min_eigenvalue,
            lambda1: None,
            lambda2: None,
        }
    }

    pub fn zero(p: usize) -> Self {
        Self::new(DMatrix::zeros(p, p), CovMethod::Zero)
    }

    pub fn from_matrix(sigma: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&sigma, 1e-10)?;
        Ok(Self::new(sigma, CovMethod::SamplePooled))
    }

    pub fn p(&self) -> usize {
        self.sigma_hat.nrows()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_matrix_csv(&self.sigma_hat, writer)
    }
}

pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|c| format!("{:e}", m[(r, c)])))?;
    }
    w.flush()?;
    Ok(())
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NAN;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn check_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid("matrix must be square"));
    }
    let asym = (0..m.nrows())
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| (m[(i, j)] - m[(j, i)]).abs())
        .fold(0.0, f64::max);
    if asym > tol {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

fn check_split(n: usize, k: usize) -> Result<()> {
    if k < 2 || k + 2 > n {
        return Err(Error::IndexOutOfRange(format!(
            "split {k} must lie in [2, {}]",
            n.saturating_sub(2)
        )));
    }
    Ok(())
}

/// Pooled covariance of rows grouped by `groups`; each group is demeaned by
/// its own mean and the divisor is `rows - groups`.
fn grouped_cov(data: &ObservationMatrix, groups: &[&[usize]]) -> Option<DMatrix<f64>> {
    let p = data.p();
    let mut s = DMatrix::<f64>::zeros(p, p);
    let mut rows = 0usize;
    let mut nonempty = 0usize;
    let mut dev = vec![0.0; p];
    for g in groups.iter().filter(|g| !g.is_empty()) {
        nonempty += 1;
        rows += g.len();
        let mut mean = vec![0.0; p];
        for &t in g.iter() {
            for (m, x) in mean.iter_mut().zip(data.row(t)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= g.len() as f64);
        for &t in g.iter() {
            for ((d, x), m) in dev.iter_mut().zip(data.row(t)).zip(&mean) {
                *d = x - m;
            }
            for c in 0..p {
                let dc = dev[c];
                for r in c..p {
                    s[(r, c)] += dev[r] * dc;
                }
            }
        }
    }
    if rows <= nonempty {
        return None;
    }
    let div = (rows - nonempty) as f64;
    for c in 0..p {
        for r in c..p {
            let v = s[(r, c)] / div;
            s[(r, c)] = v;
            s[(c, r)] = v;
        }
    }
    Some(s)
}

/// Sum of outer products of segment-demeaned rows divided by `n - 2`.
pub fn pooled_sample_cov(data: &ObservationMatrix, k: usize) -> Result<DMatrix<f64>> {
    check_split(data.n(), k)?;
    let pre: Vec<usize> = (0..k).collect();
    let post: Vec<usize> = (k..data.n()).collect();
    Ok(grouped_cov(data, &[&pre, &post]).expect("both segments have two rows"))
}

/// Scale floor below which a diagonal entry counts as zero.
fn diag_floor(data: &ObservationMatrix, j: usize) -> f64 {
    let ms = data.rows().map(|r| r[j] * r[j]).sum::<f64>() / data.n() as f64;
    1e-24 * (1.0 + ms)
}

fn correlation(s: &DMatrix<f64>, floor: impl Fn(usize) -> f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let p = s.nrows();
    let mut sd = Vec::with_capacity(p);
    for j in 0..p {
        let v = s[(j, j)];
        if v <= floor(j) {
            return Err(Error::DiagonalDegenerate(j));
        }
        sd.push(v.sqrt());
    }
    let mut r = DMatrix::from_fn(p, p, |i, j| s[(i, j)] / (sd[i] * sd[j]));
    for j in 0..p {
        r[(j, j)] = 1.0;
    }
    Ok((r, sd))
}

/// Diagonal of the pooled covariance.
pub fn estimate_sigma_diag(data: &ObservationMatrix, k: usize) -> Result<CovEstimate> {
    let s = pooled_sample_cov(data, k)?;
    let (_, sd) = correlation(&s, |j| diag_floor(data, j))?;
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        sd.len(),
        sd.iter().map(|x| x * x),
    ));
    Ok(CovEstimate::new(d, CovMethod::DiagonalOnly))
}

/// `(1 - weight) S + weight diag(S)`.
pub fn estimate_sigma_shrink(
    data: &ObservationMatrix,
    k: usize,
    weight: f64,
) -> Result<CovEstimate> {
    if !(weight > 0.0 && weight <= 1.0) {
        return Err(Error::invalid("shrinkage weight must lie in (0, 1]"));
    }
    let s = pooled_sample_cov(data, k)?;
    correlation(&s, |j| diag_floor(data, j))?;
    let p = s.nrows();
    let m = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            s[(i, j)]
        } else {
            (1.0 - weight) * s[(i, j)]
        }
    });
    Ok(CovEstimate::new(m, CovMethod::ShrinkageToDiagonal))
}

/// Result of the penalized correlation solver.
#[derive(Clone, Debug)]
pub struct RothmanFit {
    pub theta: DMatrix<f64>,
    /// Objective after every accepted iterate, starting point first.
    pub objective_trace: Vec<f64>,
    /// Step length of every accepted iterate.
    pub steps: Vec<f64>,
    /// Unit-step gradient-map norm at `theta`.
    pub kkt_residual: f64,
    pub converged: bool,
}

#[derive(Serialize)]
struct TraceRow {
    iter: usize,
    objective: f64,
    step: Option<f64>,
}

impl RothmanFit {
    pub fn trace_json(&self) -> serde_json::Value {
        let rows: Vec<TraceRow> = self
            .objective_trace
            .iter()
            .enumerate()
            .map(|(i, &objective)| TraceRow {
                iter: i,
                objective,
                step: i.checked_sub(1).map(|j| self.steps[j]),
            })
            .collect();
        serde_json::to_value(rows).expect("plain data")
    }
}

fn soft_offdiag(m: &mut DMatrix<f64>, thresh: f64) {
    if thresh <= 0.0 {
        return;
    }
    let p = m.nrows();
    for j in 0..p {
        for i in 0..p {
            if i != j {
                let v = m[(i, j)];
                m[(i, j)] = v.signum() * (v.abs() - thresh).max(0.0);
            }
        }
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for j in 0..p {
        for i in j + 1..p {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn l1_offdiag(m: &DMatrix<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j {
                s += m[(i, j)].abs();
            }
        }
    }
    s
}

/// `theta^-1` from its Cholesky factor: `L^-T L^-1` with `L^-1` by
/// column-wise forward substitution.
fn spd_inverse(chol: &Cholesky<f64, Dyn>) -> DMatrix<f64> {
    let l = chol.l_dirty();
    let p = l.nrows();
    let ls = l.as_slice();
    let mut x = DMatrix::<f64>::zeros(p, p);
    let xs = x.as_mut_slice();
    for j in 0..p {
        let col = &mut xs[j * p..(j + 1) * p];
        col[j] = 1.0;
        for k in j..p {
            let lk = &ls[k * p..(k + 1) * p];
            let v = col[k] / lk[k];
            col[k] = v;
            for i in k + 1..p {
                col[i] -= lk[i] * v;
            }
        }
    }
    x.transpose() * &x
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
}

/// `|theta - r|_F^2 / 2 - lambda1 log det theta`.
fn smooth_part(
    theta: &DMatrix<f64>,
    chol: &Cholesky<f64, Dyn>,
    r: &DMatrix<f64>,
    lambda1: f64,
) -> f64 {
    0.5 * (theta - r).norm_squared() - lambda1 * log_det(chol)
}

/// Full penalized objective; `None` if `theta` is not positive definite.
pub fn rothman_objective(
    theta: &DMatrix<f64>,
    r: &DMatrix<f64>,
    lambda1: f64,
    lambda2: f64,
) -> Option<f64> {
    let chol = Cholesky::new(theta.clone())?;
    Some(smooth_part(theta, &chol, r, lambda1) + lambda2 * l1_offdiag(theta))
}

/// Unit-step gradient map `|theta - prox(theta - grad)|_F`.
pub fn rothman_kkt_residual(
    theta: &DMatrix<f64>,
    r: &DMatrix<f64>,
    lambda1: f64,
    lambda2: f64,
) -> Option<f64> {
    let chol = Cholesky::new(theta.clone())?;
    let grad = theta - r - spd_inverse(&chol) * lambda1;
    let mut cand = theta - &grad;
    soft_offdiag(&mut cand, lambda2);
    Some((theta - cand).norm())
}

/// Minimizer of the smooth part alone: shares eigenvectors with `r`, each
/// eigenvalue `e` mapped to the positive root of `t^2 - e t - lambda1 = 0`.
pub fn rothman_smooth_minimizer(r: &DMatrix<f64>, lambda1: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(r.clone());
    let vals = eig
        .eigenvalues
        .map(|e| 0.5 * (e + (e * e + 4.0 * lambda1).sqrt()));
    let mut m = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    symmetrize(&mut m);
    m
}

/// Penalized positive-definite correlation estimate
///
/// `argmin_{theta > 0} |theta - r|_F^2 / 2 - lambda1 log det theta + lambda2 |theta^-|_1`
///
/// by accelerated proximal gradient with backtracking and monotone restarts,
/// started from the smooth minimizer.
pub fn rothman_pd(
    r: &DMatrix<f64>,
    lambda1: f64,
    lambda2: f64,
    tol: f64,
    max_iter: usize,
) -> Result<RothmanFit> {
    let start = rothman_smooth_minimizer(r, lambda1);
    rothman_pd_from(r, lambda1, lambda2, tol, max_iter, start)
}

pub fn rothman_pd_from(
    r: &DMatrix<f64>,
    lambda1: f64,
    lambda2: f64,
    tol: f64,
    max_iter: usize,
    start: DMatrix<f64>,
) -> Result<RothmanFit> {
    check_symmetric(r, 1e-10)?;
    if lambda1.is_nan() || lambda1 <= 0.0 || lambda2.is_nan() || lambda2 < 0.0 {
        return Err(Error::invalid("need lambda1 > 0 and lambda2 >= 0"));
    }
    let mut theta = start;
    symmetrize(&mut theta);
    let mut chol = match Cholesky::new(theta.clone()) {
        Some(c) => c,
        None => {
            theta = floor_eigenvalues(&theta, EPS_PD);
            Cholesky::new(theta.clone()).ok_or(Error::NotPsd)?
        }
    };
    let mut smooth = smooth_part(&theta, &chol, r, lambda1);
    let mut objective = smooth + lambda2 * l1_offdiag(&theta);
    let mut trace = vec![objective];
    let mut steps = Vec::new();
    let mut step: f64 = 1.0;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    // momentum state; reset whenever the extrapolated point leaves the cone
    // or the accelerated step fails to decrease the objective
    let mut prev = theta.clone();
    let mut t_prev = 1.0_f64;

    for _ in 0..max_iter {
        let grad_theta = &theta - r - spd_inverse(&chol) * lambda1;
        let mut unit = &theta - &grad_theta;
        soft_offdiag(&mut unit, lambda2);
        residual = (&theta - &unit).norm();
        if residual <= tol {
            converged = true;
            break;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_prev * t_prev).sqrt());
        let beta = (t_prev - 1.0) / t_next;
        let mut base = None;
        if beta > 0.0 {
            let mut y = &theta + (&theta - &prev) * beta;
            symmetrize(&mut y);
            if let Some(cy) = Cholesky::new(y.clone()) {
                let sy = smooth_part(&y, &cy, r, lambda1);
                let gy = &y - r - spd_inverse(&cy) * lambda1;
                base = Some((y, sy, gy));
            }
        }
        let momentum = base.is_some();
        let (y, sy, gy) = base.unwrap_or_else(|| (theta.clone(), smooth, grad_theta));

        step = (step * 2.0).min(1.0);
        let accepted = loop {
            let mut cand = &y - &gy * step;
            soft_offdiag(&mut cand, step * lambda2);
            symmetrize(&mut cand);
            if let Some(c) = Cholesky::new(cand.clone()) {
                let s = smooth_part(&cand, &c, r, lambda1);
                let diff = &cand - &y;
                let model = sy + gy.dot(&diff) + diff.norm_squared() / (2.0 * step);
                if s <= model {
                    break Some((cand, c, s));
                }
            }
            step *= 0.5;
            if step < 1e-16 {
                break None;
            }
        };
        let Some((cand, c, s)) = accepted else { break };
        let obj = s + lambda2 * l1_offdiag(&cand);
        if obj > objective {
            if momentum {
                prev = theta.clone();
                t_prev = 1.0;
                continue;
            }
            // rounding floor reached
            break;
        }
        prev = std::mem::replace(&mut theta, cand);
        t_prev = t_next;
        chol = c;
        smooth = s;
        objective = obj;
        trace.push(objective);
        steps.push(step);
    }
    if !converged {
        residual = rothman_kkt_residual(&theta, r, lambda1, lambda2).unwrap_or(f64::INFINITY);
        converged = residual <= tol;
    }
    Ok(RothmanFit {
        theta,
        objective_trace: trace,
        steps,
        kkt_residual: residual,
        converged,
    })
}

fn floor_eigenvalues(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let vals = eig.eigenvalues.map(|e| e.max(floor));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    out
}

#[derive(Clone, Debug)]
pub struct PdConfig {
    pub lambda1: f64,
    pub lambda2_grid: Vec<f64>,
    pub folds: usize,
    pub tol: f64,
    /// Looser tolerance for the fold fits, which only rank `lambda2`.
    pub cv_tol: f64,
    pub max_iter: usize,
}

impl Default for PdConfig {
    fn default() -> Self {
        Self {
            lambda1: 1e-4,
            lambda2_grid: vec![0.0, 0.01, 0.05, 0.1, 0.2, 0.4],
            folds: 3,
            tol: 1e-6,
            cv_tol: 1e-4,
            max_iter: 500,
        }
    }
}

/// Contiguous block `f` of `len` items split into `folds` blocks.
fn block(len: usize, folds: usize, f: usize) -> std::ops::Range<usize> {
    (f * len / folds)..((f + 1) * len / folds)
}

/// Cross-validated penalized estimate `(S+)^{1/2} theta (S+)^{1/2}`.
///
/// `lambda2` minimizes the mean held-out loss `|theta_train - R_test|_F^2`
/// over folds formed from contiguous time blocks within each segment.
pub fn estimate_sigma_pd(
    data: &ObservationMatrix,
    k: usize,
    cfg: &PdConfig,
) -> Result<CovEstimate> {
    let s = pooled_sample_cov(data, k)?;
    let (r, sd) = correlation(&s, |j| diag_floor(data, j))?;
    let n = data.n();
    let mut grid = cfg.lambda2_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.is_empty() {
        return Err(Error::invalid("empty lambda2 grid"));
    }

    let lambda2 = if grid.len() == 1 || cfg.folds < 2 {
        grid[0]
    } else {
        let mut folds = Vec::new();
        for f in 0..cfg.folds {
            let (pre_b, post_b) = (block(k, cfg.folds, f), block(n - k, cfg.folds, f));
            let test_pre: Vec<usize> = pre_b.clone().collect();
            let test_post: Vec<usize> = post_b.clone().map(|i| k + i).collect();
            let train_pre: Vec<usize> = (0..k).filter(|i| !pre_b.contains(i)).collect();
            let train_post: Vec<usize> = (k..n).filter(|i| !post_b.contains(&(i - k))).collect();
            let train = grouped_cov(data, &[&train_pre, &train_post]);
            let test = grouped_cov(data, &[&test_pre, &test_post]);
            if let (Some(a), Some(b)) = (train, test) {
                if let (Ok((ra, _)), Ok((rb, _))) = (
                    correlation(&a, |j| diag_floor(data, j)),
                    correlation(&b, |j| diag_floor(data, j)),
                ) {
                    folds.push((ra, rb));
                }
            }
        }
        if folds.is_empty() {
            grid[0]
        } else {
            let losses: Vec<f64> = grid
                .par_iter()
                .map(|&l2| {
                    folds
                        .iter()
                        .map(|(ra, rb)| {
                            rothman_pd(ra, cfg.lambda1, l2, cfg.cv_tol, cfg.max_iter)
                                .map(|fit| (fit.theta - rb).norm_squared())
                                .unwrap_or(f64::INFINITY)
                        })
                        .sum::<f64>()
                        / folds.len() as f64
                })
                .collect();
            let mut best = 0;
            for (i, &l) in losses.iter().enumerate() {
                if l < losses[best] {
                    best = i;
                }
            }
            grid[best]
        }
    };

    let fit = rothman_pd(&r, cfg.lambda1, lambda2, cfg.tol, cfg.max_iter)?;
    let p = r.nrows();
    let mut sigma = DMatrix::from_fn(p, p, |i, j| sd[i] * fit.theta[(i, j)] * sd[j]);
    symmetrize(&mut sigma);
    let mut est = CovEstimate::new(sigma, CovMethod::RothmanPD);
    est.lambda1 = Some(cfg.lambda1);
    est.lambda2 = Some(lambda2);
    Ok(est)
}

/// Draws rows `N(0, sigma)` as `L z`, skipping the leading zeros of each row of `L`.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    p: usize,
    chol: Vec<f64>,
    row_start: Vec<usize>,
    zero: bool,
}

impl GaussianSampler {
    /// Factors `sigma`; a failed factorization retries after flooring the
    /// eigenvalues at [`EPS_PD`].
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        check_symmetric(sigma, 1e-10 * (1.0 + sigma.amax()))?;
        let p = sigma.nrows();
        let l = match Cholesky::new(sigma.clone()) {
            Some(c) => c.unpack(),
            None => Cholesky::new(floor_eigenvalues(sigma, EPS_PD))
                .ok_or(Error::NotPsd)?
                .unpack(),
        };
        if l.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPsd);
        }
        let mut chol = vec![0.0; p * p];
        let mut row_start = vec![0; p];
        for i in 0..p {
            row_start[i] = (0..=i).find(|&j| l[(i, j)] != 0.0).unwrap_or(i);
            for j in 0..=i {
                chol[i * p + j] = l[(i, j)];
            }
        }
        Ok(Self {
            p,
            chol,
            row_start,
            zero: false,
        })
    }

    /// Exact zero noise, no draws.
    pub fn zero(p: usize) -> Self {
        Self {
            p,
            chol: Vec::new(),
            row_start: Vec::new(),
            zero: true,
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Appends `n` rows to `out`.
    pub fn fill<R: Rng>(&self, rng: &mut R, n: usize, out: &mut Vec<f64>) {
        let p = self.p;
        if self.zero {
            out.resize(out.len() + n * p, 0.0);
            return;
        }
        let mut z = vec![0.0; p];
        for _ in 0..n {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            for i in 0..p {
                let row = &self.chol[i * p..i * p + i + 1];
                let s = self.row_start[i];
                out.push(row[s..].iter().zip(&z[s..=i]).map(|(a, b)| a * b).sum());
            }
        }
    }
}

/// `n` i.i.d. rows from `N(0, sigma_hat)` using the stream seeded by `seed`.
pub fn sample_gaussian(sigma: &CovEstimate, n: usize, seed: u64) -> Result<ObservationMatrix> {
    let sampler = GaussianSampler::new(&sigma.sigma_hat)?;
    let mut rng = stream(seed, &[]);
    let mut v = Vec::with_capacity(n * sigma.p());
    sampler.fill(&mut rng, n, &mut v);
    ObservationMatrix::new(n, sigma.p(), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn panel(n: usize, p: usize, seed: u64) -> ObservationMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n * p)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        ObservationMatrix::new(n, p, v).unwrap()
    }

    #[test]
    fn spd_inverse_matches_lu() {
        let r = random_correlation(30, 4) + DMatrix::identity(30, 30) * 0.1;
        let chol = Cholesky::new(r.clone()).unwrap();
        let lu = r.clone().try_inverse().unwrap();
        assert!((spd_inverse(&chol) - lu).amax() < 1e-10);
    }

    fn random_correlation(p: usize, seed: u64) -> DMatrix<f64> {
        let x = panel(p + 5, p, seed);
        let s = pooled_sample_cov(&x, 3).unwrap();
        correlation(&s, |_| 0.0).unwrap().0
    }

    #[test]
    fn pooled_cov_constant_segments_is_zero() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|t| {
                if t < 4 {
                    vec![1.0, 2.0]
                } else {
                    vec![-3.0, 0.5]
                }
            })
            .collect();
        let x = ObservationMatrix::from_rows(&rows).unwrap();
        let s = pooled_sample_cov(&x, 4).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-28));
        assert!(matches!(
            estimate_sigma_pd(&x, 4, &PdConfig::default()),
            Err(Error::DiagonalDegenerate(0))
        ));
        assert!(pooled_sample_cov(&x, 1).is_err());
    }

    #[test]
    fn pooled_cov_scalar_loop() {
        let x = panel(11, 1, 2);
        let k = 5;
        let v: Vec<f64> = x.values().to_vec();
        let m1 = v[..k].iter().sum::<f64>() / k as f64;
        let m2 = v[k..].iter().sum::<f64>() / (11 - k) as f64;
        let ss: f64 = v[..k].iter().map(|a| (a - m1).powi(2)).sum::<f64>()
            + v[k..].iter().map(|a| (a - m2).powi(2)).sum::<f64>();
        let s = pooled_sample_cov(&x, k).unwrap();
        assert!((s[(0, 0)] - ss / 9.0).abs() < 1e-13);
    }

    #[test]
    fn pooled_cov_shift_invariant() {
        let x = panel(20, 4, 3);
        let a = pooled_sample_cov(&x, 7).unwrap();
        let b = pooled_sample_cov(&x.shifted(&[10.0, -4.0, 2.0, 0.5]).unwrap(), 7).unwrap();
        assert!((a - b).amax() < 1e-12);
    }

    #[test]
    fn identity_input_matches_scalar_root() {
        for l1 in [1e-4, 0.1, 1.0, 3.0] {
            let r = DMatrix::<f64>::identity(6, 6);
            let start = DMatrix::<f64>::identity(6, 6);
            let fit = rothman_pd_from(&r, l1, 0.0, 1e-12, 1000, start).unwrap();
            let theta_star = (1.0 + (1.0 + 4.0 * l1).sqrt()) / 2.0;
            let target = DMatrix::<f64>::identity(6, 6) * theta_star;
            assert!((fit.theta - target).amax() < 1e-8, "lambda1 = {l1}");
        }
    }

    #[test]
    fn vanishing_penalty_recovers_r() {
        let r = random_correlation(8, 4);
        assert!(Cholesky::new(r.clone()).is_some());
        let fit = rothman_pd(&r, 1e-8, 0.0, 1e-10, 500).unwrap();
        assert!((fit.theta - &r).norm() < 1e-4);
    }

    #[test]
    fn objective_monotone_and_kkt() {
        for seed in 0..10 {
            let r = random_correlation(10, 100 + seed);
            let fit =
                rothman_pd_from(&r, 0.05, 0.1, 1e-6, 5000, DMatrix::identity(10, 10)).unwrap();
            assert!(fit.converged);
            assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0]));
            assert!(fit.kkt_residual <= 1e-6);
            let at = |m: &DMatrix<f64>| rothman_objective(m, &r, 0.05, 0.1).unwrap();
            let best = at(&fit.theta);
            assert!(best <= at(&DMatrix::identity(10, 10)));
            assert!(best <= at(&floor_eigenvalues(&r, EPS_PD)) + 1e-12);
            let j = fit.trace_json();
            assert_eq!(j.as_array().unwrap().len(), fit.objective_trace.len());
        }
    }

    #[test]
    fn rejects_asymmetric_input() {
        let mut r = DMatrix::<f64>::identity(3, 3);
        r[(0, 1)] = 0.5;
        assert!(matches!(
            rothman_pd(&r, 0.1, 0.0, 1e-6, 10),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn sigma_pd_near_identity_and_factorable() {
        let x = panel(400, 20, 5);
        let est = estimate_sigma_pd(&x, 200, &PdConfig::default()).unwrap();
        let mut off = 0.0f64;
        for i in 0..20 {
            for j in 0..20 {
                if i != j {
                    off = off.max(est.sigma_hat[(i, j)].abs());
                }
            }
        }
        assert!(off <= 0.15, "{off}");
        assert!(Cholesky::new(est.sigma_hat.clone()).is_some());
        assert!(est.min_eigenvalue > 0.0);
        assert_eq!(est.method, CovMethod::RothmanPD);
    }

    #[test]
    fn sigma_pd_rank_deficient_is_pd() {
        // p > n: sample covariance singular, penalized estimate is not
        let x = panel(12, 30, 6);
        let est = estimate_sigma_pd(&x, 6, &PdConfig::default()).unwrap();
        assert!(Cholesky::new(est.sigma_hat.clone()).is_some());
        let sh = estimate_sigma_shrink(&x, 6, 0.5).unwrap();
        assert!(Cholesky::new(sh.sigma_hat.clone()).is_some());
        let d = estimate_sigma_diag(&x, 6).unwrap();
        assert!(d.min_eigenvalue > 0.0);
    }

    #[test]
    fn sigma_pd_shift_invariant() {
        let x = panel(60, 5, 8);
        let cfg = PdConfig {
            tol: 1e-12,
            ..PdConfig::default()
        };
        let a = estimate_sigma_pd(&x, 25, &cfg).unwrap();
        let b =
            estimate_sigma_pd(&x.shifted(&[3.0, 1.0, -2.0, 0.0, 8.0]).unwrap(), 25, &cfg).unwrap();
        assert_eq!(a.lambda2, b.lambda2);
        let d = (a.sigma_hat - b.sigma_hat).amax();
        assert!(d < 1e-9, "{d:e}");
    }

    #[test]
    fn zero_sigma_uses_eigen_floor() {
        let z = CovEstimate::zero(3);
        let x = sample_gaussian(&z, 50, 1).unwrap();
        let bound = EPS_PD.sqrt() * 6.0;
        assert!(x.values().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn sample_moments_diag_1_4() {
        let mut m = DMatrix::<f64>::zeros(2, 2);
        m[(0, 0)] = 1.0;
        m[(1, 1)] = 4.0;
        let est = CovEstimate::from_matrix(m).unwrap();
        let n = 100_000;
        let x = sample_gaussian(&est, n, 77).unwrap();
        let mut s = [0.0; 3];
        for r in x.rows() {
            s[0] += r[0] * r[0];
            s[1] += r[1] * r[1];
            s[2] += r[0] * r[1];
        }
        let nf = n as f64;
        // SE of a sample second moment of N(0, v) is v sqrt(2/n)
        assert!((s[0] / nf - 1.0).abs() < 3.0 * (2.0 / nf).sqrt());
        assert!((s[1] / nf - 4.0).abs() < 3.0 * 4.0 * (2.0 / nf).sqrt());
        assert!((s[2] / nf).abs() < 3.0 * 2.0 / nf.sqrt());
    }

    #[test]
    fn sampling_is_deterministic() {
        let est =
            CovEstimate::from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let a = sample_gaussian(&est, 30, 5).unwrap();
        let b = sample_gaussian(&est, 30, 5).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn banded_factor_skips_zeros() {
        let p = 8;
        let m = DMatrix::from_fn(p, p, |i, j| {
            let d = i.abs_diff(j);
            if d <= 2 {
                0.5f64.powi(d as i32)
            } else {
                0.0
            }
        });
        let s = GaussianSampler::new(&m).unwrap();
        assert_eq!(s.row_start[5], 3);
    }
}
