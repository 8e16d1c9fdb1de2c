//! Estimation and inference for a single change point in the mean of
//! high-dimensional independent data.

pub mod cov_est;
pub mod data;
pub mod error;
pub mod estimators;
pub mod intervals;
pub mod limit_dist;
pub mod nuisance;
pub mod rng;
pub mod sim;

pub use cov_est::{CovEstimate, CovMethod, GaussianSampler, PdConfig, RothmanFit};
pub use data::{Cp1Spec, ObservationMatrix, PrefixSums};
pub use error::{Error, Result};
pub use estimators::{
    estimate_ls, estimate_ustat, scan_ssr, scan_ustat, ObjectiveKind, ObjectiveProfile,
};
pub use intervals::{
    compute_intervals, BootstrapConfig, CovStrategy, DeltaShape, IntervalResult, Method,
};
pub use limit_dist::{xi_cdf, xi_density, xi_quantile, xi_sample_mc, XiDistribution};
pub use nuisance::{fit, ChangePointFit, Regime};
pub use sim::{DeltaKind, DesignSpec, McSummary, SigmaModel};

pub use nalgebra;
