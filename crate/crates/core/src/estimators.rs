//! Objective scans over all admissible split points.
//!
//! A split `k` puts rows `1..=k` in the pre-change segment and rows
//! `k+1..=n` in the post-change segment.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{ObservationMatrix, PrefixSums};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveKind {
    UStat,
    LeastSquares,
}

/// Objective values at every admissible split plus the optimizing split.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveProfile {
    pub kind: ObjectiveKind,
    pub n: usize,
    pub k_min: usize,
    pub k_max: usize,
    values: Vec<f64>,
    pub arg_k: usize,
    pub arg_tau: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub kind: ObjectiveKind,
    pub k_hat: usize,
    pub tau_hat: f64,
    pub value_at_k_hat: f64,
}

impl ObjectiveProfile {
    fn from_values(kind: ObjectiveKind, n: usize, k_min: usize, values: Vec<f64>) -> Self {
        let better = |a: f64, b: f64| match kind {
            ObjectiveKind::UStat => a > b,
            ObjectiveKind::LeastSquares => a < b,
        };
        // strict comparison keeps the smallest k among ties
        let mut best = 0;
        for (i, &v) in values.iter().enumerate().skip(1) {
            if better(v, values[best]) {
                best = i;
            }
        }
        let arg_k = k_min + best;
        Self {
            kind,
            n,
            k_min,
            k_max: k_min + values.len() - 1,
            values,
            arg_k,
            arg_tau: arg_k as f64 / n as f64,
        }
    }

    /// Objective at split `k`; `None` outside `[k_min, k_max]`.
    pub fn value(&self, k: usize) -> Option<f64> {
        (k >= self.k_min && k <= self.k_max).then(|| self.values[k - self.k_min])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.k_min + i, v))
    }

    pub fn optimum(&self) -> f64 {
        self.values[self.arg_k - self.k_min]
    }

    pub fn summary(&self) -> ProfileSummary {
        ProfileSummary {
            kind: self.kind,
            k_hat: self.arg_k,
            tau_hat: self.arg_tau,
            value_at_k_hat: self.optimum(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "value"])?;
        for (k, v) in self.iter() {
            w.write_record([k.to_string(), format!("{v:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Column-centered prefix sums. Both objectives are invariant to a common
/// shift, and centering keeps the prefix differences well conditioned.
fn centered_prefix(data: &ObservationMatrix) -> PrefixSums {
    let (n, p) = (data.n(), data.p());
    let mut mean = vec![0.0; p];
    for r in data.rows() {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let values = data
        .rows()
        .flat_map(|r| r.iter().zip(&mean).map(|(x, m)| x - m))
        .collect();
    PrefixSums::new(&ObservationMatrix::from_raw(n, p, values))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `G_n(k)` for `k = 2..=n-2` in O(np) via
///
/// `G_n(k) = [(n-k)(n-k-1) A + k(k-1) B - 2(k-1)(n-k-1) C] / (k(n-k))`
///
/// with `A = |S_k|^2 - sum_{i<=k} |X_i|^2`, `B` the same for the tail and
/// `C = S_k . (S_n - S_k)`.
pub fn scan_ustat(data: &ObservationMatrix) -> Result<ObjectiveProfile> {
    let n = data.n();
    if n < 4 {
        return Err(Error::TooFewRows { n, min: 4 });
    }
    let ps = centered_prefix(data);
    let total = ps.total();
    let sq_total = ps.sqnorm_cum(n);
    let mut tail = vec![0.0; data.p()];
    let values = (2..=n - 2)
        .map(|k| {
            let head = ps.cum(k);
            for ((t, s), h) in tail.iter_mut().zip(total).zip(head) {
                *t = s - h;
            }
            let sq_head = ps.sqnorm_cum(k);
            let a = dot(head, head) - sq_head;
            let b = dot(&tail, &tail) - (sq_total - sq_head);
            let c = dot(head, &tail);
            let (kf, m) = (k as f64, (n - k) as f64);
            (m * (m - 1.0) * a + kf * (kf - 1.0) * b - 2.0 * (kf - 1.0) * (m - 1.0) * c) / (kf * m)
        })
        .collect();
    Ok(ObjectiveProfile::from_values(
        ObjectiveKind::UStat,
        n,
        2,
        values,
    ))
}

/// `SSR(k)` for `k = 1..=n-1`.
pub fn scan_ssr(data: &ObservationMatrix) -> Result<ObjectiveProfile> {
    let n = data.n();
    if n < 2 {
        return Err(Error::TooFewRows { n, min: 2 });
    }
    scan_ssr_range(data, 1, n - 1)
}

/// `SSR(k)` restricted to `k_min..=k_max`, used by trimmed estimators.
pub fn scan_ssr_range(
    data: &ObservationMatrix,
    k_min: usize,
    k_max: usize,
) -> Result<ObjectiveProfile> {
    let n = data.n();
    if k_min < 1 || k_max > n - 1 || k_min > k_max {
        return Err(Error::IndexOutOfRange(format!(
            "split range [{k_min}, {k_max}] not inside [1, {}]",
            n - 1
        )));
    }
    let ps = centered_prefix(data);
    let total = ps.total();
    let sq_total = ps.sqnorm_cum(n);
    let mut tail = vec![0.0; data.p()];
    let values = (k_min..=k_max)
        .map(|k| {
            let head = ps.cum(k);
            for ((t, s), h) in tail.iter_mut().zip(total).zip(head) {
                *t = s - h;
            }
            let ssr = sq_total - dot(head, head) / k as f64 - dot(&tail, &tail) / (n - k) as f64;
            ssr.max(0.0)
        })
        .collect();
    Ok(ObjectiveProfile::from_values(
        ObjectiveKind::LeastSquares,
        n,
        k_min,
        values,
    ))
}

/// `(k_hat_U, tau_hat_U)`.
pub fn estimate_ustat(data: &ObservationMatrix) -> Result<(usize, f64)> {
    let prof = scan_ustat(data)?;
    Ok((prof.arg_k, prof.arg_tau))
}

/// `(k_hat_LS, tau_hat_LS)`.
pub fn estimate_ls(data: &ObservationMatrix) -> Result<(usize, f64)> {
    let prof = scan_ssr(data)?;
    Ok((prof.arg_k, prof.arg_tau))
}
