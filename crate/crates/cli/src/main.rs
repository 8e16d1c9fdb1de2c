use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cploc_core::data::Cp1Spec;
use cploc_core::estimators::scan_ssr;
use cploc_core::intervals::{compute_intervals, BootstrapConfig, CovStrategy, DeltaShape, Method};
use cploc_core::limit_dist::{
    default_tau_grid, quantile_type7, xi_sample_mc, McGrid, QuantileMethod, QuantileTable,
    XiDistribution,
};
use cploc_core::nuisance::fit;
use cploc_core::sim::{
    build_delta, generate_panel, reproduce_table, write_table_outputs, DeltaKind, Scale,
    SigmaModel, TableId, TableRun,
};
use cploc_core::{Error, ObservationMatrix};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "cploc",
    version,
    about = "Change-point location estimation and confidence intervals"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit the U-statistic and least-squares estimators to a panel.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        /// Write the U-statistic profile (k,value) here.
        #[arg(long)]
        profile_out: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Confidence intervals for the change fraction.
    Ci {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "u2,u4,u5")]
        methods: Vec<String>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long = "B", default_value_t = 200)]
        b: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "rothman")]
        cov: String,
        /// True rate a_n, required by U1.
        #[arg(long)]
        a_n: Option<f64>,
        #[arg(long, default_value_t = 0.05)]
        c_star: f64,
        /// Use the five-spike shift direction in U4.
        #[arg(long)]
        sparse_delta: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw one panel from a simulation design and write it as CSV.
    Simulate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        tau0: f64,
        #[arg(long, default_value = "id")]
        sigma: String,
        #[arg(long, default_value = "dense")]
        delta: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quantiles of the limiting distribution.
    LimitDist {
        #[arg(long)]
        tau0: Option<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.025,0.975")]
        alpha: Vec<f64>,
        #[arg(long, default_value = "density")]
        method: String,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Build (or reuse) a quantile table over tau = 0.01..0.99 at this path.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Re-run a simulation table and write CSV outputs plus a manifest.
    ReproduceTable {
        #[arg(long)]
        table: String,
        #[arg(long, default_value = "desk")]
        scale: String,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long = "B", default_value_t = 200)]
        b: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_numeric() { 3 } else { 2 },
            msg: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self {
            code: 2,
            msg: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self {
            code: 2,
            msg: e.to_string(),
        }
    }
}

fn input_error(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        msg: msg.into(),
    }
}

fn emit(out: Option<&PathBuf>, body: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, body)?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(body.as_bytes())?;
            stdout.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn estimate(
    input: &PathBuf,
    profile_out: Option<&PathBuf>,
    out: Option<&PathBuf>,
) -> Result<(), Failure> {
    let x = ObservationMatrix::from_csv_path(input)?;
    let f = fit(&x)?;
    let ls = scan_ssr(&x)?;
    if let (Some(path), Some(prof)) = (profile_out, f.profile.as_ref()) {
        prof.write_csv(File::create(path)?)?;
    }
    let mut v = serde_json::to_value(&f)?;
    v["k_hat_ls"] = json!(ls.arg_k);
    v["tau_hat_ls"] = json!(ls.arg_tau);
    emit(out, &serde_json::to_string_pretty(&v)?)
}

#[allow(clippy::too_many_arguments)]
fn ci(
    input: &PathBuf,
    methods: &[String],
    level: f64,
    b: usize,
    seed: u64,
    cov: &str,
    a_n: Option<f64>,
    c_star: f64,
    sparse_delta: bool,
    out: Option<&PathBuf>,
) -> Result<(), Failure> {
    let methods = methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = BootstrapConfig {
        b,
        seed,
        level,
        cov: cov.parse::<CovStrategy>()?,
        c_star,
        delta_shape: if sparse_delta {
            DeltaShape::SparseFive
        } else {
            DeltaShape::UniformVector
        },
    };
    let x = ObservationMatrix::from_csv_path(input)?;
    let mut results = Vec::new();
    let mut worst: Option<Failure> = None;
    for (m, r) in compute_intervals(&x, &methods, &cfg, a_n)? {
        match r {
            Ok(ci) => results.push(ci),
            Err(e) => {
                eprintln!("{m}: {e}");
                let f = Failure::from(e);
                if worst.as_ref().is_none_or(|w| f.code > w.code) {
                    worst = Some(f);
                }
            }
        }
    }
    emit(out, &serde_json::to_string_pretty(&results)?)?;
    match worst {
        Some(f) => Err(Failure {
            msg: "some intervals could not be built".into(),
            ..f
        }),
        None => Ok(()),
    }
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    n: usize,
    p: usize,
    tau0: f64,
    sigma: &str,
    delta: &str,
    seed: u64,
    out: Option<&PathBuf>,
) -> Result<(), Failure> {
    let sigma: SigmaModel = sigma.parse()?;
    let kind: DeltaKind = delta.parse()?;
    let spec = Cp1Spec::new(n, tau0, build_delta(kind, p, n, seed)?, sigma)?;
    let x = generate_panel(&spec, seed)?;
    match out {
        Some(path) => x.write_csv(File::create(path)?)?,
        None => x.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn limit_dist(
    tau0: Option<f64>,
    alphas: &[f64],
    method: &str,
    reps: usize,
    seed: u64,
    table: Option<&PathBuf>,
) -> Result<(), Failure> {
    let qm = match method {
        "density" => QuantileMethod::DensityInversion,
        "mc" => QuantileMethod::MonteCarlo { reps, seed },
        other => {
            return Err(input_error(format!(
                "unknown method '{other}' (density|mc)"
            )))
        }
    };
    if let Some(path) = table {
        let t = QuantileTable::load_or_build(path, alphas, &default_tau_grid(), qm)?;
        eprintln!(
            "wrote {} rows to {}",
            t.taus.len() * t.alphas.len(),
            path.display()
        );
        if tau0.is_none() {
            return Ok(());
        }
    }
    let tau0 = tau0.ok_or_else(|| input_error("--tau0 is required without --table"))?;
    let quantiles: Vec<f64> = match qm {
        QuantileMethod::DensityInversion => {
            let xi = XiDistribution::new(tau0)?;
            alphas
                .iter()
                .map(|&a| xi.quantile(a))
                .collect::<Result<_, _>>()?
        }
        QuantileMethod::MonteCarlo { reps, seed } => {
            if alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
                return Err(input_error("alpha must lie in (0, 1)"));
            }
            let mut s = xi_sample_mc(tau0, reps, seed, McGrid::default())?;
            s.sort_by(f64::total_cmp);
            alphas.iter().map(|&a| quantile_type7(&s, a)).collect()
        }
    };
    let rows: Vec<_> = alphas
        .iter()
        .zip(&quantiles)
        .map(|(a, q)| json!({"tau0": tau0, "alpha": a, "quantile": q, "method": method}))
        .collect();
    emit(None, &serde_json::to_string_pretty(&rows)?)
}

#[allow(clippy::too_many_arguments)]
fn reproduce(
    table: &str,
    scale: &str,
    reps: Option<usize>,
    b: usize,
    seed: u64,
    threads: usize,
    out: &Path,
) -> Result<(), Failure> {
    if threads == 0 {
        return Err(input_error("--threads must be >= 1"));
    }
    let run = TableRun {
        table: table.parse::<TableId>()?,
        scale: scale.parse::<Scale>()?,
        reps,
        b,
        seed,
        threads,
    };
    let result = reproduce_table(&run)?;
    for path in write_table_outputs(&run, &result, out)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Estimate {
            input,
            profile_out,
            out,
        } => estimate(&input, profile_out.as_ref(), out.as_ref()),
        Cmd::Ci {
            input,
            methods,
            level,
            b,
            seed,
            cov,
            a_n,
            c_star,
            sparse_delta,
            out,
        } => ci(
            &input,
            &methods,
            level,
            b,
            seed,
            &cov,
            a_n,
            c_star,
            sparse_delta,
            out.as_ref(),
        ),
        Cmd::Simulate {
            n,
            p,
            tau0,
            sigma,
            delta,
            seed,
            out,
        } => simulate(n, p, tau0, &sigma, &delta, seed, out.as_ref()),
        Cmd::LimitDist {
            tau0,
            alpha,
            method,
            reps,
            seed,
            table,
        } => limit_dist(tau0, &alpha, &method, reps, seed, table.as_ref()),
        Cmd::ReproduceTable {
            table,
            scale,
            reps,
            b,
            seed,
            threads,
            out,
        } => reproduce(&table, &scale, reps, b, seed, threads, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
