//! Simulation designs and Monte-Carlo drivers for the point and interval tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cov_est::GaussianSampler;
use crate::data::{Cp1Spec, ObservationMatrix};
use crate::error::{Error, Result};
use crate::estimators::{scan_ssr, scan_ustat};
use crate::intervals::{compute_intervals, BootstrapConfig, Method};
use crate::rng::{derive_seed, stream, tag};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SigmaModel {
    Identity,
    /// `rho^|i-j|`.
    Ar(f64),
    /// `0.5^|i-j|` for `|i-j| <= 2`.
    Banded,
    /// `0.5 I + 0.5 11'`.
    CompoundSymmetric,
    /// `diag(0.1, ..., 0.1, 1, ..., 1)`, the first `floor(p/2)` entries small.
    InteractionDiag,
    /// Noiseless panels.
    Zero,
}

impl SigmaModel {
    pub fn label(&self) -> &'static str {
        match self {
            SigmaModel::Identity => "ID",
            SigmaModel::Ar(_) => "AR",
            SigmaModel::Banded => "BD",
            SigmaModel::CompoundSymmetric => "CS",
            SigmaModel::InteractionDiag => "INT",
            SigmaModel::Zero => "ZERO",
        }
    }

    fn code(&self) -> (u64, u64) {
        match self {
            SigmaModel::Identity => (1, 0),
            SigmaModel::Ar(r) => (2, r.to_bits()),
            SigmaModel::Banded => (3, 0),
            SigmaModel::CompoundSymmetric => (4, 0),
            SigmaModel::InteractionDiag => (5, 0),
            SigmaModel::Zero => (6, 0),
        }
    }
}

impl FromStr for SigmaModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "id" | "identity" => Ok(SigmaModel::Identity),
            "ar" => Ok(SigmaModel::Ar(0.8)),
            "bd" | "banded" => Ok(SigmaModel::Banded),
            "cs" => Ok(SigmaModel::CompoundSymmetric),
            "int" | "interaction" => Ok(SigmaModel::InteractionDiag),
            "zero" => Ok(SigmaModel::Zero),
            other => Err(Error::invalid(format!(
                "unknown covariance model '{other}'"
            ))),
        }
    }
}

pub fn build_sigma(model: SigmaModel, p: usize) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(Error::invalid("p must be >= 1"));
    }
    let half = p / 2;
    Ok(DMatrix::from_fn(p, p, |i, j| {
        let d = i.abs_diff(j);
        match model {
            SigmaModel::Identity => f64::from(u8::from(d == 0)),
            SigmaModel::Ar(rho) => rho.powi(d as i32),
            SigmaModel::Banded => {
                if d <= 2 {
                    0.5f64.powi(d as i32)
                } else {
                    0.0
                }
            }
            SigmaModel::CompoundSymmetric => {
                if d == 0 {
                    1.0
                } else {
                    0.5
                }
            }
            SigmaModel::InteractionDiag => match (d, i < half) {
                (0, true) => 0.1,
                (0, false) => 1.0,
                _ => 0.0,
            },
            SigmaModel::Zero => 0.0,
        }
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeltaKind {
    Dense,
    Sparse,
    WeakInt,
    ModerateInt,
    StrongInt,
}

impl DeltaKind {
    pub fn label(&self) -> &'static str {
        match self {
            DeltaKind::Dense => "dense",
            DeltaKind::Sparse => "sparse",
            DeltaKind::WeakInt => "weak",
            DeltaKind::ModerateInt => "moderate",
            DeltaKind::StrongInt => "strong",
        }
    }

    fn code(&self) -> u64 {
        *self as u64 + 1
    }
}

impl FromStr for DeltaKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dense" => Ok(DeltaKind::Dense),
            "sparse" => Ok(DeltaKind::Sparse),
            "weak" => Ok(DeltaKind::WeakInt),
            "moderate" => Ok(DeltaKind::ModerateInt),
            "strong" => Ok(DeltaKind::StrongInt),
            other => Err(Error::invalid(format!("unknown delta kind '{other}'"))),
        }
    }
}

/// Uniform(-0.5, 0.5) draws, fixed per `(master, n, p)`.
pub fn dense_delta(master: u64, n: usize, p: usize) -> Vec<f64> {
    let mut rng = stream(master, &[tag::DELTA, n as u64, p as u64]);
    (0..p).map(|_| rng.random_range(-0.5..0.5)).collect()
}

/// `norm (1/sqrt 5, ..., 1/sqrt 5, 0, ..., 0)`; all of `p` when `p < 5`.
pub fn sparse_delta(norm: f64, p: usize) -> Vec<f64> {
    let m = p.min(5);
    (0..p)
        .map(|j| if j < m { norm / (m as f64).sqrt() } else { 0.0 })
        .collect()
}

/// Shift vector for `kind`. Sparse matches the norm of the dense draw for
/// the same `(n, p)`; the interaction kinds have squared norm 4.
pub fn build_delta(kind: DeltaKind, p: usize, n: usize, master: u64) -> Result<Vec<f64>> {
    if p == 0 {
        return Err(Error::invalid("p must be >= 1"));
    }
    let half = p / 2;
    let block = |lo: usize, hi: usize| -> Result<Vec<f64>> {
        if hi <= lo {
            return Err(Error::invalid(format!(
                "p = {p} too small for an interaction design"
            )));
        }
        let v = 2.0 / ((hi - lo) as f64).sqrt();
        Ok((0..p)
            .map(|j| if j >= lo && j < hi { v } else { 0.0 })
            .collect())
    };
    match kind {
        DeltaKind::Dense => Ok(dense_delta(master, n, p)),
        DeltaKind::Sparse => {
            let norm = dense_delta(master, n, p)
                .iter()
                .map(|d| d * d)
                .sum::<f64>()
                .sqrt();
            Ok(sparse_delta(norm, p))
        }
        DeltaKind::WeakInt => block(0, half),
        DeltaKind::ModerateInt => block(0, p),
        DeltaKind::StrongInt => block(half, p),
    }
}

/// `X_t = mu1 + delta 1{t > k0} + eps_t` with `eps ~ N(0, Sigma)`.
pub fn generate_panel(spec: &Cp1Spec, seed: u64) -> Result<ObservationMatrix> {
    spec.validate()?;
    let sampler = match spec.sigma_model {
        SigmaModel::Zero => GaussianSampler::zero(spec.p),
        m => GaussianSampler::new(&build_sigma(m, spec.p)?)?,
    };
    Ok(panel_with(&sampler, spec, &mut stream(seed, &[tag::PANEL])))
}

fn panel_with<R: Rng>(sampler: &GaussianSampler, spec: &Cp1Spec, rng: &mut R) -> ObservationMatrix {
    let (n, p, k0) = (spec.n, spec.p, spec.k0());
    let mut v = Vec::with_capacity(n * p);
    sampler.fill(rng, n, &mut v);
    for (t, row) in v.chunks_exact_mut(p).enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x += spec.mu1[j];
            if t >= k0 {
                *x += spec.delta[j];
            }
        }
    }
    ObservationMatrix::from_raw(n, p, v)
}

const GRID_N: [usize; 3] = [50, 100, 200];
const GRID_P: [usize; 2] = [50, 150];
const GRID_TAU: [f64; 2] = [0.2, 0.5];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub n: usize,
    pub p: usize,
    pub tau0: f64,
    pub sigma: SigmaModel,
    pub delta: DeltaKind,
    /// Set when the design lies outside the standard grid.
    pub custom: bool,
}

impl DesignSpec {
    /// A design from the standard grid; anything else must use [`DesignSpec::custom`].
    pub fn new(n: usize, p: usize, tau0: f64, sigma: SigmaModel, delta: DeltaKind) -> Result<Self> {
        let in_grid = GRID_N.contains(&n)
            && GRID_P.contains(&p)
            && GRID_TAU.contains(&tau0)
            && !matches!(sigma, SigmaModel::Zero)
            && (!matches!(sigma, SigmaModel::Ar(r) if r != 0.8));
        if !in_grid {
            return Err(Error::invalid(format!(
                "design (n={n}, p={p}, tau0={tau0}, {}) is off the grid; use a custom design",
                sigma.label()
            )));
        }
        Ok(Self {
            n,
            p,
            tau0,
            sigma,
            delta,
            custom: false,
        })
    }

    pub fn custom(n: usize, p: usize, tau0: f64, sigma: SigmaModel, delta: DeltaKind) -> Self {
        Self {
            n,
            p,
            tau0,
            sigma,
            delta,
            custom: true,
        }
    }

    pub fn hash(&self) -> u64 {
        let (sc, sp) = self.sigma.code();
        derive_seed(
            0x5eed,
            &[
                self.n as u64,
                self.p as u64,
                self.tau0.to_bits(),
                sc,
                sp,
                self.delta.code(),
            ],
        )
    }

    pub fn cp1(&self, master: u64) -> Result<Cp1Spec> {
        let delta = build_delta(self.delta, self.p, self.n, master)?;
        Cp1Spec::new(self.n, self.tau0, delta, self.sigma)
    }

    fn rep_seed(&self, master: u64, rep: usize) -> u64 {
        derive_seed(master, &[self.hash(), rep as u64])
    }
}

/// Raw (unscaled) error summary for one estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointStats {
    pub estimator: String,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub reps: usize,
}

impl PointStats {
    /// Population moments of `est - truth`; MSE is accumulated separately.
    pub fn from_estimates(estimator: &str, est: &[f64], truth: f64) -> Self {
        let r = est.len() as f64;
        let mean = est.iter().sum::<f64>() / r;
        let variance = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / r;
        let mse = est.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / r;
        Self {
            estimator: estimator.to_string(),
            bias: mean - truth,
            variance,
            mse,
            reps: est.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub method: Method,
    /// Over successful replicates.
    pub coverage: f64,
    pub mean_length: f64,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McSummary {
    pub design: DesignSpec,
    pub delta: Vec<f64>,
    pub reps: usize,
    pub point: Vec<PointStats>,
    pub coverage: Vec<CoverageStats>,
    pub runtime_secs: f64,
}

impl McSummary {
    pub fn point_for(&self, estimator: &str) -> Option<&PointStats> {
        self.point.iter().find(|s| s.estimator == estimator)
    }

    pub fn coverage_for(&self, method: Method) -> Option<&CoverageStats> {
        self.coverage.iter().find(|s| s.method == method)
    }
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn sampler_for(spec: &Cp1Spec) -> Result<GaussianSampler> {
    match spec.sigma_model {
        SigmaModel::Zero => Ok(GaussianSampler::zero(spec.p)),
        m => GaussianSampler::new(&build_sigma(m, spec.p)?),
    }
}

/// Bias, variance and MSE of `tau_hat_U` and `tau_hat_LS`.
pub fn run_point_table(
    design: &DesignSpec,
    reps: usize,
    seed: u64,
    threads: usize,
) -> Result<McSummary> {
    if reps == 0 {
        return Err(Error::invalid("reps must be >= 1"));
    }
    let start = Instant::now();
    let spec = design.cp1(seed)?;
    let sampler = sampler_for(&spec)?;
    let est: Vec<(f64, f64)> = with_pool(threads, || {
        (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(design.rep_seed(seed, r), &[tag::PANEL]);
                let x = panel_with(&sampler, &spec, &mut rng);
                let u = scan_ustat(&x).expect("n >= 4").arg_tau;
                let ls = scan_ssr(&x).expect("n >= 4").arg_tau;
                (u, ls)
            })
            .collect()
    })?;
    let truth = spec.tau0;
    let u: Vec<f64> = est.iter().map(|e| e.0).collect();
    let ls: Vec<f64> = est.iter().map(|e| e.1).collect();
    Ok(McSummary {
        design: *design,
        delta: spec.delta,
        reps,
        point: vec![
            PointStats::from_estimates("U", &u, truth),
            PointStats::from_estimates("LS", &ls, truth),
        ],
        coverage: Vec::new(),
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// `a_n = n^2 |delta|^4 / |Sigma|_F^2`.
pub fn oracle_rate(spec: &Cp1Spec) -> Result<f64> {
    let frob = build_sigma(spec.sigma_model, spec.p)?.norm_squared();
    let d2 = spec.delta_sq();
    let n = spec.n as f64;
    Ok(if frob > 0.0 {
        n * n * d2 * d2 / frob
    } else {
        f64::INFINITY
    })
}

/// Coverage of `spec.tau0` and mean length per method. Replicates whose
/// interval construction fails are counted, not fatal.
pub fn run_ci_table(
    design: &DesignSpec,
    methods: &[Method],
    reps: usize,
    boot: &BootstrapConfig,
    seed: u64,
    threads: usize,
) -> Result<McSummary> {
    if reps == 0 || methods.is_empty() {
        return Err(Error::invalid("need reps >= 1 and at least one method"));
    }
    let start = Instant::now();
    let spec = design.cp1(seed)?;
    let sampler = sampler_for(&spec)?;
    let a_n = oracle_rate(&spec)?;
    type Rec = Vec<Option<(bool, f64)>>;
    let recs: Vec<Rec> = with_pool(threads, || {
        (0..reps)
            .into_par_iter()
            .map(|r| {
                let rs = design.rep_seed(seed, r);
                let x = panel_with(&sampler, &spec, &mut stream(rs, &[tag::PANEL]));
                let cfg = BootstrapConfig {
                    seed: derive_seed(rs, &[tag::CI]),
                    ..boot.clone()
                };
                match compute_intervals(&x, methods, &cfg, Some(a_n)) {
                    Ok(res) => res
                        .into_iter()
                        .map(|(_, r)| r.ok().map(|ci| (ci.covers(spec.tau0), ci.length())))
                        .collect(),
                    Err(_) => vec![None; methods.len()],
                }
            })
            .collect()
    })?;
    let coverage = methods
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let ok: Vec<(bool, f64)> = recs.iter().filter_map(|r| r[i]).collect();
            let s = ok.len();
            let denom = s.max(1) as f64;
            CoverageStats {
                method: m,
                coverage: ok.iter().filter(|c| c.0).count() as f64 / denom,
                mean_length: ok.iter().map(|c| c.1).sum::<f64>() / denom,
                successes: s,
                failures: reps - s,
            }
        })
        .collect();
    Ok(McSummary {
        design: *design,
        delta: spec.delta,
        reps,
        point: Vec::new(),
        coverage,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableId {
    Point02,
    Point05,
    CiId,
    CiAr,
    CiBd,
    CiCs,
    Interaction,
}

impl TableId {
    pub fn name(&self) -> &'static str {
        match self {
            TableId::Point02 => "table1",
            TableId::Point05 => "table2",
            TableId::CiId => "table3",
            TableId::CiAr => "table4",
            TableId::CiBd => "table5",
            TableId::CiCs => "table6",
            TableId::Interaction => "table_int",
        }
    }

    pub fn is_point(&self) -> bool {
        matches!(self, TableId::Point02 | TableId::Point05)
    }
}

impl FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" => Ok(TableId::Point02),
            "2" => Ok(TableId::Point05),
            "3" => Ok(TableId::CiId),
            "4" => Ok(TableId::CiAr),
            "5" => Ok(TableId::CiBd),
            "6" => Ok(TableId::CiCs),
            "int" => Ok(TableId::Interaction),
            other => Err(Error::invalid(format!("unknown table '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    Desk,
    Full,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            other => Err(Error::invalid(format!("unknown scale '{other}'"))),
        }
    }
}

impl Scale {
    pub fn point_reps(&self) -> usize {
        match self {
            Scale::Desk => 2000,
            Scale::Full => 20000,
        }
    }

    pub fn ci_reps(&self) -> usize {
        match self {
            Scale::Desk => 300,
            Scale::Full => 3000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TableRun {
    pub table: TableId,
    pub scale: Scale,
    pub reps: Option<usize>,
    pub b: usize,
    pub seed: u64,
    pub threads: usize,
}

#[derive(Clone, Debug)]
pub struct TableOutput {
    pub table: TableId,
    pub csv: String,
    pub delta_csv: String,
    pub summaries: Vec<McSummary>,
    pub reps: usize,
    pub wall_secs: f64,
}

fn ci_sigma(table: TableId) -> SigmaModel {
    match table {
        TableId::CiAr => SigmaModel::Ar(0.8),
        TableId::CiBd => SigmaModel::Banded,
        TableId::CiCs => SigmaModel::CompoundSymmetric,
        TableId::Interaction => SigmaModel::InteractionDiag,
        _ => SigmaModel::Identity,
    }
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

/// Runs every cell of a table and renders it in the tabular layout.
pub fn reproduce_table(run: &TableRun) -> Result<TableOutput> {
    let start = Instant::now();
    let reps = run.reps.unwrap_or(if run.table.is_point() {
        run.scale.point_reps()
    } else {
        run.scale.ci_reps()
    });
    let boot = BootstrapConfig {
        b: run.b,
        ..BootstrapConfig::default()
    };
    let mut summaries = Vec::new();
    let mut csv = String::new();
    match run.table {
        TableId::Point02 | TableId::Point05 => {
            let tau = if run.table == TableId::Point02 {
                0.2
            } else {
                0.5
            };
            csv.push_str(
                "sigma,p,n,estimator,sparse_bias,sparse_variance,sparse_mse,dense_bias,dense_variance,dense_mse\n",
            );
            for sigma in [
                SigmaModel::Identity,
                SigmaModel::Ar(0.8),
                SigmaModel::Banded,
                SigmaModel::CompoundSymmetric,
            ] {
                for p in GRID_P {
                    for n in GRID_N {
                        let mut cells = Vec::new();
                        for kind in [DeltaKind::Sparse, DeltaKind::Dense] {
                            let d = DesignSpec::new(n, p, tau, sigma, kind)?;
                            let s = run_point_table(&d, reps, run.seed, run.threads)?;
                            cells.push(s.point.clone());
                            summaries.push(s);
                        }
                        for (i, est) in ["U", "LS"].iter().enumerate() {
                            let _ = write!(csv, "{},{p},{n},{est}", sigma.label());
                            for cell in &cells {
                                let st = &cell[i];
                                // bias in 1e-4 units, variance and MSE in 1e-4 units
                                let _ = write!(
                                    csv,
                                    ",{},{},{}",
                                    num(st.bias * 1e4),
                                    num(st.variance * 1e4),
                                    num(st.mse * 1e4)
                                );
                            }
                            csv.push('\n');
                        }
                    }
                }
            }
        }
        TableId::Interaction => {
            csv.push_str("p,method,metric");
            for kind in ["weak", "moderate", "strong"] {
                for n in GRID_N {
                    let _ = write!(csv, ",{kind}_n{n}");
                }
            }
            csv.push('\n');
            for p in GRID_P {
                let mut cols = Vec::new();
                for kind in [
                    DeltaKind::WeakInt,
                    DeltaKind::ModerateInt,
                    DeltaKind::StrongInt,
                ] {
                    for n in GRID_N {
                        let d = DesignSpec::new(n, p, 0.2, SigmaModel::InteractionDiag, kind)?;
                        let s = run_ci_table(&d, &Method::ALL, reps, &boot, run.seed, run.threads)?;
                        cols.push(s.coverage.clone());
                        summaries.push(s);
                    }
                }
                write_ci_rows(&mut csv, &p.to_string(), &cols);
            }
        }
        _ => {
            let sigma = ci_sigma(run.table);
            csv.push_str("tau0,method,metric");
            for p in GRID_P {
                for kind in ["dense", "sparse"] {
                    for n in GRID_N {
                        let _ = write!(csv, ",p{p}_{kind}_n{n}");
                    }
                }
            }
            csv.push('\n');
            for tau in GRID_TAU {
                let mut cols = Vec::new();
                for p in GRID_P {
                    for kind in [DeltaKind::Dense, DeltaKind::Sparse] {
                        for n in GRID_N {
                            let d = DesignSpec::new(n, p, tau, sigma, kind)?;
                            let s =
                                run_ci_table(&d, &Method::ALL, reps, &boot, run.seed, run.threads)?;
                            cols.push(s.coverage.clone());
                            summaries.push(s);
                        }
                    }
                }
                write_ci_rows(&mut csv, &tau.to_string(), &cols);
            }
        }
    }
    let mut delta_csv = String::from("sigma,n,p,tau0,kind,delta\n");
    for s in &summaries {
        let d = &s.design;
        let v: Vec<String> = s.delta.iter().map(|x| format!("{x:e}")).collect();
        let _ = writeln!(
            delta_csv,
            "{},{},{},{},{},{}",
            d.sigma.label(),
            d.n,
            d.p,
            d.tau0,
            d.delta.label(),
            v.join(";")
        );
    }
    Ok(TableOutput {
        table: run.table,
        csv,
        delta_csv,
        summaries,
        reps,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

fn write_ci_rows(csv: &mut String, key: &str, cols: &[Vec<CoverageStats>]) {
    for (i, m) in Method::ALL.iter().enumerate() {
        let _ = write!(csv, "{key},{m},coverage");
        for c in cols {
            let _ = write!(csv, ",{}", num(c[i].coverage));
        }
        let _ = write!(csv, "\n{key},{m},length");
        for c in cols {
            let _ = write!(csv, ",{}", num(c[i].mean_length));
        }
        let _ = write!(csv, "\n{key},{m},failures");
        for c in cols {
            let _ = write!(csv, ",{}", c[i].failures);
        }
        csv.push('\n');
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    table: &'a str,
    scale: Scale,
    reps: usize,
    bootstrap_b: usize,
    seed: u64,
    threads: usize,
    version: &'a str,
    wall_time_secs: f64,
    designs: Vec<DesignManifest>,
}

#[derive(Serialize)]
struct DesignManifest {
    design: DesignSpec,
    design_hash: u64,
    runtime_secs: f64,
}

/// Writes `<table>.csv`, `<table>_delta.csv` and `<table>_manifest.json`.
pub fn write_table_outputs(run: &TableRun, out: &TableOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let name = out.table.name();
    let csv_path = dir.join(format!("{name}.csv"));
    let delta_path = dir.join(format!("{name}_delta.csv"));
    let manifest_path = dir.join(format!("{name}_manifest.json"));
    fs::write(&csv_path, &out.csv)?;
    fs::write(&delta_path, &out.delta_csv)?;
    let manifest = Manifest {
        table: name,
        scale: run.scale,
        reps: out.reps,
        bootstrap_b: run.b,
        seed: run.seed,
        threads: run.threads,
        version: env!("CARGO_PKG_VERSION"),
        wall_time_secs: out.wall_secs,
        designs: out
            .summaries
            .iter()
            .map(|s| DesignManifest {
                design: s.design,
                design_hash: s.design.hash(),
                runtime_secs: s.runtime_secs,
            })
            .collect(),
    };
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(vec![csv_path, delta_path, manifest_path])
}
