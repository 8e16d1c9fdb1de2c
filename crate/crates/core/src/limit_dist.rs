//! Law of `xi(tau0) = argmin_gamma sqrt(2)|gamma| + 2 sqrt(2) / sqrt(tau0 (1 - tau0)) W(gamma)`
//! for a two-sided standard Brownian motion `W`.
//!
//! With `s = tau0 (1 - tau0)` the density is
//!
//! ```text
//! f(t) = 3/2 s e^{s|t|} Phi(-3/2 sqrt(s|t|)) - 1/2 s Phi(-1/2 sqrt(s|t|))
//! ```
//!
//! so `s * xi(tau0)` has a `tau0`-free law with density
//! `g(u) = e^{-|u|/8} / 2 * [3/2 erfcx(3/2 sqrt(|u|/2)) - 1/2 erfcx(1/2 sqrt(|u|/2))]`.
//! One CDF table of `g` serves every `tau0`.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, tag};

/// Upper end of the tabulated standardized CDF. `1 - G(400)` is below 1e-20.
const U_TABLE_MAX: f64 = 400.0;
const U_TABLE_KNOTS: usize = 1200;

/// Default Monte-Carlo half-width in standardized units; two-sided tail mass
/// beyond it is below 1e-6.
pub const MC_U_MAX: f64 = 90.0;
/// Default Monte-Carlo grid step in standardized units.
pub const MC_U_STEP: f64 = 0.01;

fn check_tau(tau0: f64) -> Result<f64> {
    if tau0 > 0.0 && tau0 < 1.0 {
        Ok(tau0 * (1.0 - tau0))
    } else {
        Err(Error::invalid(format!("tau0 = {tau0} not in (0, 1)")))
    }
}

/// Scaled complementary error function `e^{x^2} erfc(x)` for `x >= 0`.
pub fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 5.0 {
        (x * x).exp() * libm::erfc(x)
    } else {
        // Lentz evaluation of the continued fraction
        // erfcx(x) = 1/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
        let tiny = 1e-300;
        let mut f = x;
        let mut c = x;
        let mut d = 0.0;
        for k in 1..200 {
            let a = k as f64 / 2.0;
            d = x + a * d;
            if d.abs() < tiny {
                d = tiny;
            }
            c = x + a / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        1.0 / (f * std::f64::consts::PI.sqrt())
    }
}

/// Density of `s * xi(tau0)`.
pub fn standard_density(u: f64) -> f64 {
    let u = u.abs();
    let r = (u / 2.0).sqrt();
    0.5 * (-u / 8.0).exp() * (1.5 * erfcx(1.5 * r) - 0.5 * erfcx(0.5 * r))
}

/// Adaptive Simpson quadrature.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let err = left + right - whole;
        if depth == 0 || err.abs() <= 15.0 * tol {
            left + right + err / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    rec(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 48)
}

/// Tabulated `G(u) - 1/2 = int_0^u g` on a knot grid dense near the origin.
struct StandardCdf {
    knots: Vec<f64>,
    mass: Vec<f64>,
}

impl StandardCdf {
    fn build() -> Self {
        let knots: Vec<f64> = (0..=U_TABLE_KNOTS)
            .map(|i| {
                let r = i as f64 / U_TABLE_KNOTS as f64;
                U_TABLE_MAX * r * r
            })
            .collect();
        let mut mass = Vec::with_capacity(knots.len());
        mass.push(0.0);
        let mut acc = 0.0;
        for w in knots.windows(2) {
            acc += adaptive_simpson(&standard_density, w[0], w[1], 1e-15);
            mass.push(acc);
        }
        Self { knots, mass }
    }

    fn get() -> &'static Self {
        static TABLE: OnceLock<StandardCdf> = OnceLock::new();
        TABLE.get_or_init(Self::build)
    }

    /// `int_0^u g` for `u >= 0`.
    fn half_mass(&self, u: f64) -> f64 {
        if u >= U_TABLE_MAX {
            return 0.5;
        }
        let i = self.knots.partition_point(|&k| k <= u) - 1;
        self.mass[i] + adaptive_simpson(&standard_density, self.knots[i], u, 1e-15)
    }

    fn cdf(&self, u: f64) -> f64 {
        if u >= 0.0 {
            0.5 + self.half_mass(u)
        } else {
            0.5 - self.half_mass(-u)
        }
    }

    /// Upper-half quantile: solves `int_0^u g = target` for `target in [0, 1/2)`.
    fn upper_quantile(&self, target: f64) -> f64 {
        if target <= 0.0 {
            return 0.0;
        }
        let j = self
            .mass
            .partition_point(|&m| m < target)
            .min(self.mass.len() - 1);
        let (mut lo, mut hi) = (self.knots[j - 1], self.knots[j]);
        let (m_lo, m_hi) = (self.mass[j - 1], self.mass[j]);
        let base = m_lo;
        // monotone linear interpolation as the starting point
        let mut u = if m_hi > m_lo {
            lo + (hi - lo) * (target - m_lo) / (m_hi - m_lo)
        } else {
            0.5 * (lo + hi)
        };
        for _ in 0..100 {
            let f =
                base + adaptive_simpson(&standard_density, self.knots[j - 1], u, 1e-15) - target;
            if f.abs() <= 1e-14 {
                break;
            }
            if f > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let newton = u - f / standard_density(u);
            u = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 1e-15 * hi.max(1.0) {
                break;
            }
        }
        u
    }
}

/// Density, CDF and quantiles of `xi(tau0)`.
#[derive(Clone, Copy, Debug)]
pub struct XiDistribution {
    tau0: f64,
    scale: f64,
}

impl XiDistribution {
    pub fn new(tau0: f64) -> Result<Self> {
        let scale = check_tau(tau0)?;
        Ok(Self { tau0, scale })
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn density(&self, t: f64) -> f64 {
        self.scale * standard_density(self.scale * t)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        StandardCdf::get().cdf(self.scale * t)
    }

    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("alpha = {alpha} not in (0, 1)")));
        }
        let table = StandardCdf::get();
        let u = if alpha >= 0.5 {
            table.upper_quantile(alpha - 0.5)
        } else {
            -table.upper_quantile(0.5 - alpha)
        };
        Ok(u / self.scale)
    }
}

pub fn xi_density(t: f64, tau0: f64) -> Result<f64> {
    Ok(XiDistribution::new(tau0)?.density(t))
}

pub fn xi_cdf(t: f64, tau0: f64) -> Result<f64> {
    Ok(XiDistribution::new(tau0)?.cdf(t))
}

pub fn xi_quantile(alpha: f64, tau0: f64) -> Result<f64> {
    XiDistribution::new(tau0)?.quantile(alpha)
}

/// Grid for the path-argmin sampler. `None` picks the defaults
/// `MC_U_MAX / s` and `MC_U_STEP / s`.
#[derive(Clone, Copy, Debug)]
pub struct McGrid {
    pub gamma_max: Option<f64>,
    pub step: Option<f64>,
    /// Multiplies the Brownian term; zero leaves the drift alone.
    pub noise_scale: f64,
}

impl Default for McGrid {
    fn default() -> Self {
        Self {
            gamma_max: None,
            step: None,
            noise_scale: 1.0,
        }
    }
}

/// Draws `reps` values of `xi(tau0)` as grid argmins of `L(gamma; tau0)`.
///
/// Replicate `r` uses the stream `(seed, XI_MC, r)`.
pub fn xi_sample_mc(tau0: f64, reps: usize, seed: u64, grid: McGrid) -> Result<Vec<f64>> {
    let s = check_tau(tau0)?;
    let gamma_max = grid.gamma_max.unwrap_or(MC_U_MAX / s);
    let step = grid.step.unwrap_or(MC_U_STEP / s);
    if !(gamma_max > 0.0 && step > 0.0 && step <= gamma_max) {
        return Err(Error::invalid(
            "grid_gamma_max and grid_step must be positive",
        ));
    }
    if !(grid.noise_scale >= 0.0 && grid.noise_scale.is_finite()) {
        return Err(Error::invalid("noise_scale must be non-negative"));
    }
    if grid.noise_scale == 0.0 {
        return Ok(vec![0.0; reps]);
    }
    let m = (gamma_max / step).floor() as usize;
    // L(j h) = sqrt(2) |j| h + c sqrt(h) S_j with S_j a standard random walk;
    // dividing by c sqrt(h) leaves argmin_j of drift * |j| + S_j.
    let c = 2.0 * std::f64::consts::SQRT_2 / s.sqrt() * grid.noise_scale;
    let drift = std::f64::consts::SQRT_2 * step / (c * step.sqrt());
    let out = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, &[tag::XI_MC, r as u64]);
            let mut best = 0.0;
            let mut best_j: i64 = 0;
            for sign in [1i64, -1] {
                let mut w = 0.0;
                for j in 1..=m {
                    let z: f64 = rng.sample(StandardNormal);
                    w += z;
                    let l = drift * j as f64 + w;
                    if l < best {
                        best = l;
                        best_j = sign * j as i64;
                    }
                }
            }
            best_j as f64 * step
        })
        .collect();
    Ok(out)
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < x.len() {
        let mut j = i;
        while j < x.len() && x[j] == x[i] {
            j += 1;
        }
        let f = cdf(x[i]);
        d = d.max(f - i as f64 / n).max(j as f64 / n - f);
        i = j;
    }
    d
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantileMethod {
    DensityInversion,
    MonteCarlo { reps: usize, seed: u64 },
}

impl QuantileMethod {
    fn label(&self) -> &'static str {
        match self {
            QuantileMethod::DensityInversion => "density-inversion",
            QuantileMethod::MonteCarlo { .. } => "monte-carlo",
        }
    }

    fn reps(&self) -> usize {
        match self {
            QuantileMethod::DensityInversion => 0,
            QuantileMethod::MonteCarlo { reps, .. } => *reps,
        }
    }
}

/// Quantiles of `xi(tau)` over a grid of `tau` and `alpha` levels.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileTable {
    pub taus: Vec<f64>,
    pub alphas: Vec<f64>,
    /// `quantiles[i][j]` is `q_{alphas[j]}(xi(taus[i]))`.
    pub quantiles: Vec<Vec<f64>>,
    pub method: String,
    pub reps: usize,
}

/// `0.01, 0.02, ..., 0.99`.
pub fn default_tau_grid() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

pub fn build_quantile_table(
    alphas: &[f64],
    taus: &[f64],
    method: QuantileMethod,
) -> Result<QuantileTable> {
    let mut sorted_alphas = alphas.to_vec();
    sorted_alphas.sort_by(f64::total_cmp);
    let mut quantiles = Vec::with_capacity(taus.len());
    for (i, &tau) in taus.iter().enumerate() {
        let row = match method {
            QuantileMethod::DensityInversion => {
                let xi = XiDistribution::new(tau)?;
                sorted_alphas
                    .iter()
                    .map(|&a| xi.quantile(a))
                    .collect::<Result<Vec<_>>>()?
            }
            QuantileMethod::MonteCarlo { reps, seed } => {
                if reps == 0 {
                    return Err(Error::invalid("Monte-Carlo table needs reps >= 1"));
                }
                let mut x = xi_sample_mc(
                    tau,
                    reps,
                    crate::rng::derive_seed(seed, &[i as u64]),
                    McGrid::default(),
                )?;
                x.sort_by(f64::total_cmp);
                sorted_alphas
                    .iter()
                    .map(|&a| quantile_type7(&x, a))
                    .collect()
            }
        };
        quantiles.push(row);
    }
    Ok(QuantileTable {
        taus: taus.to_vec(),
        alphas: sorted_alphas,
        quantiles,
        method: method.label().to_string(),
        reps: method.reps(),
    })
}

#[derive(Serialize, Deserialize)]
struct TableRecord {
    tau: f64,
    alpha: f64,
    quantile: f64,
    method: String,
    reps: usize,
}

impl QuantileTable {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (tau, row) in self.taus.iter().zip(&self.quantiles) {
            for (alpha, q) in self.alphas.iter().zip(row) {
                w.serialize(TableRecord {
                    tau: *tau,
                    alpha: *alpha,
                    quantile: *q,
                    method: self.method.clone(),
                    reps: self.reps,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut taus: Vec<f64> = Vec::new();
        let mut alphas: Vec<f64> = Vec::new();
        let mut quantiles: Vec<Vec<f64>> = Vec::new();
        let mut method = String::new();
        let mut reps = 0;
        for rec in rdr.deserialize() {
            let rec: TableRecord = rec?;
            if taus.last() != Some(&rec.tau) {
                taus.push(rec.tau);
                quantiles.push(Vec::new());
            }
            if taus.len() == 1 {
                alphas.push(rec.alpha);
            }
            quantiles.last_mut().unwrap().push(rec.quantile);
            method = rec.method;
            reps = rec.reps;
        }
        if quantiles.iter().any(|r| r.len() != alphas.len()) {
            return Err(Error::invalid("ragged quantile table"));
        }
        Ok(Self {
            taus,
            alphas,
            quantiles,
            method,
            reps,
        })
    }

    /// Reads the table at `path` if it matches the request, otherwise builds
    /// and writes it.
    pub fn load_or_build(
        path: impl AsRef<Path>,
        alphas: &[f64],
        taus: &[f64],
        method: QuantileMethod,
    ) -> Result<Self> {
        let path = path.as_ref();
        if let Ok(f) = std::fs::File::open(path) {
            if let Ok(t) = Self::read_csv(f) {
                let mut a = alphas.to_vec();
                a.sort_by(f64::total_cmp);
                if t.taus == taus
                    && t.alphas == a
                    && t.method == method.label()
                    && t.reps == method.reps()
                {
                    return Ok(t);
                }
            }
        }
        let t = build_quantile_table(alphas, taus, method)?;
        t.write_csv(std::fs::File::create(path)?)?;
        Ok(t)
    }

    pub fn get(&self, tau: f64, alpha: f64) -> Option<f64> {
        let i = self.taus.iter().position(|&t| (t - tau).abs() < 1e-12)?;
        let j = self
            .alphas
            .iter()
            .position(|&a| (a - alpha).abs() < 1e-12)?;
        Some(self.quantiles[i][j])
    }
}
