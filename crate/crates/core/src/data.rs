//! Panels of observations and the prefix-sum machinery shared by every scan.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::SigmaModel;

/// Minimum panel length for the U-statistic objective (splits 2..=n-2).
pub const MIN_ROWS: usize = 4;

/// Panels at or above this many entries use compensated accumulation.
const COMPENSATED_THRESHOLD: usize = 1_000_000;

/// An `n x p` panel, row `t` holding observation `X_{t+1}`.
///
/// Storage is row-major; every entry is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationMatrix {
    n: usize,
    p: usize,
    values: Vec<f64>,
}

impl ObservationMatrix {
    pub fn new(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("panel dimension p must be at least 1"));
        }
        if values.len() != n * p {
            return Err(Error::invalid(format!(
                "expected {} values for a {n}x{p} panel, got {}",
                n * p,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / p,
                col: pos % p,
            });
        }
        if n < MIN_ROWS {
            return Err(Error::TooFewRows { n, min: MIN_ROWS });
        }
        Ok(Self { n, p, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some((t, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(Error::invalid(format!(
                "row {t} has {} columns, expected {p}",
                r.len()
            )));
        }
        Self::new(rows.len(), p, rows.concat())
    }

    /// Builds without validation; callers guarantee finite entries and `n >= 4`.
    pub(crate) fn from_raw(n: usize, p: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n * p);
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { n, p, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row `t`, zero-based.
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.p..(t + 1) * self.p]
    }

    pub fn rows(&self) -> impl DoubleEndedIterator<Item = &[f64]> + ExactSizeIterator {
        self.values.chunks_exact(self.p)
    }

    /// Adds `shift` to every row.
    pub fn shifted(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.p {
            return Err(Error::invalid("shift length must equal p"));
        }
        let values = self
            .rows()
            .flat_map(|r| r.iter().zip(shift).map(|(x, c)| x + c))
            .collect();
        Self::new(self.n, self.p, values)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.n, self.p, self.values.iter().map(|x| c * x).collect())
    }

    /// Rows in reverse time order.
    pub fn reversed(&self) -> Self {
        let values = self.rows().rev().flatten().copied().collect();
        Self::from_raw(self.n, self.p, values)
    }

    /// Reads a comma-separated panel, one row per time point.
    ///
    /// A first row that does not parse as numbers is treated as a header.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f64>, _> =
                rec.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(r) => rows.push(r),
                Err(_) if i == 0 => continue,
                Err(e) => {
                    return Err(Error::invalid(format!("line {}: {e}", i + 1)));
                }
            }
        }
        Self::from_rows(&rows)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record((1..=self.p).map(|j| format!("x{j}")))?;
        for r in self.rows() {
            w.write_record(r.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Cumulative sums `cum[k] = X_1 + ... + X_k` and `sqnorm_cum[k] = sum of |X_i|^2`.
#[derive(Clone, Debug)]
pub struct PrefixSums {
    n: usize,
    p: usize,
    cum: Vec<f64>,
    sqnorm_cum: Vec<f64>,
}

/// Neumaier running sum.
#[derive(Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl PrefixSums {
    pub fn new(data: &ObservationMatrix) -> Self {
        let (n, p) = (data.n(), data.p());
        let mut cum = vec![0.0; (n + 1) * p];
        let mut sqnorm_cum = vec![0.0; n + 1];
        if n * p >= COMPENSATED_THRESHOLD {
            let mut acc = vec![Compensated::default(); p];
            let mut sq = Compensated::default();
            for (t, row) in data.rows().enumerate() {
                let dst = &mut cum[(t + 1) * p..(t + 2) * p];
                for ((a, d), x) in acc.iter_mut().zip(dst).zip(row) {
                    a.add(*x);
                    *d = a.value();
                }
                sq.add(row.iter().map(|x| x * x).sum());
                sqnorm_cum[t + 1] = sq.value();
            }
        } else {
            for (t, row) in data.rows().enumerate() {
                let (prev, next) = cum.split_at_mut((t + 1) * p);
                let prev = &prev[t * p..];
                for ((d, a), x) in next[..p].iter_mut().zip(prev).zip(row) {
                    *d = a + x;
                }
                sqnorm_cum[t + 1] = sqnorm_cum[t] + row.iter().map(|x| x * x).sum::<f64>();
            }
        }
        Self {
            n,
            p,
            cum,
            sqnorm_cum,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `S_k`, the sum of the first `k` rows.
    pub fn cum(&self, k: usize) -> &[f64] {
        &self.cum[k * self.p..(k + 1) * self.p]
    }

    pub fn sqnorm_cum(&self, k: usize) -> f64 {
        self.sqnorm_cum[k]
    }

    pub fn total(&self) -> &[f64] {
        self.cum(self.n)
    }

    /// Sum of rows `a+1..=b` (one-based), i.e. `cum[b] - cum[a]`.
    pub fn segment_sum(&self, a: usize, b: usize) -> Result<Vec<f64>> {
        if a > b || b > self.n {
            return Err(Error::IndexOutOfRange(format!(
                "segment ({a}, {b}] outside 0..={}",
                self.n
            )));
        }
        Ok(self
            .cum(b)
            .iter()
            .zip(self.cum(a))
            .map(|(hi, lo)| hi - lo)
            .collect())
    }
}

pub fn build_prefix_sums(data: &ObservationMatrix) -> PrefixSums {
    PrefixSums::new(data)
}

/// Description of a single mean change at `k0 = floor(n * tau0)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cp1Spec {
    pub n: usize,
    pub p: usize,
    pub tau0: f64,
    pub delta: Vec<f64>,
    pub sigma_model: SigmaModel,
    pub mu1: Vec<f64>,
}

impl Cp1Spec {
    pub fn new(n: usize, tau0: f64, delta: Vec<f64>, sigma_model: SigmaModel) -> Result<Self> {
        let p = delta.len();
        let spec = Self {
            n,
            p,
            tau0,
            mu1: vec![0.0; p],
            delta,
            sigma_model,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau0 > 0.0 && self.tau0 < 1.0) {
            return Err(Error::invalid(format!(
                "tau0 = {} not in (0, 1)",
                self.tau0
            )));
        }
        if self.p == 0 || self.delta.len() != self.p || self.mu1.len() != self.p {
            return Err(Error::invalid("delta and mu1 must have length p >= 1"));
        }
        let k0 = self.k0();
        if k0 < 2 || k0 + 2 > self.n {
            return Err(Error::invalid(format!(
                "change point k0 = {k0} must lie in [2, n-2] for n = {}",
                self.n
            )));
        }
        Ok(())
    }

    pub fn k0(&self) -> usize {
        k0_for(self.n, self.tau0)
    }

    pub fn delta_sq(&self) -> f64 {
        self.delta.iter().map(|d| d * d).sum()
    }
}

/// `floor(n * tau0)`, robust to representation error in `tau0`.
pub fn k0_for(n: usize, tau0: f64) -> usize {
    (n as f64 * tau0 + 1e-9).floor() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_panel(n: usize, p: usize, seed: u64) -> ObservationMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n * p).map(|_| rng.random_range(-2.0..2.0)).collect();
        ObservationMatrix::new(n, p, v).unwrap()
    }

    #[test]
    fn zero_panel_has_zero_sums() {
        let x = ObservationMatrix::new(4, 2, vec![0.0; 8]).unwrap();
        let ps = build_prefix_sums(&x);
        for k in 0..=4 {
            assert!(ps.cum(k).iter().all(|&v| v == 0.0));
            assert_eq!(ps.sqnorm_cum(k), 0.0);
        }
    }

    #[test]
    fn repeated_row_is_linear() {
        let v = [1.5, -2.0, 0.25];
        let x = ObservationMatrix::from_rows(&vec![v.to_vec(); 7]).unwrap();
        let ps = build_prefix_sums(&x);
        for k in 0..=7 {
            for (c, vj) in ps.cum(k).iter().zip(v) {
                assert_eq!(*c, k as f64 * vj);
            }
        }
    }

    #[test]
    fn total_matches_column_sums() {
        let x = random_panel(8, 3, 11);
        let ps = build_prefix_sums(&x);
        for j in 0..3 {
            let direct: f64 = (0..8).map(|t| x.row(t)[j]).sum();
            assert!((ps.total()[j] - direct).abs() < 1e-12);
        }
        assert_eq!(ps.cum(0), &[0.0; 3]);
        for k in 1..=8 {
            for j in 0..3 {
                let d = ps.cum(k)[j] - ps.cum(k - 1)[j];
                assert!((d - x.row(k - 1)[j]).abs() < 1e-12);
            }
            assert!(ps.sqnorm_cum(k) >= ps.sqnorm_cum(k - 1));
        }
    }

    #[test]
    fn segment_sum_cases() {
        let x = random_panel(6, 2, 5);
        let ps = build_prefix_sums(&x);
        assert_eq!(ps.segment_sum(3, 3).unwrap(), vec![0.0, 0.0]);
        assert_eq!(ps.segment_sum(0, 6).unwrap(), ps.total().to_vec());
        let s = ps.segment_sum(2, 5).unwrap();
        for (j, sj) in s.iter().enumerate() {
            let direct: f64 = (2..5).map(|t| x.row(t)[j]).sum();
            assert!((sj - direct).abs() < 1e-12);
        }
        assert!(matches!(
            ps.segment_sum(4, 3),
            Err(Error::IndexOutOfRange(_))
        ));
        assert!(matches!(
            ps.segment_sum(0, 7),
            Err(Error::IndexOutOfRange(_))
        ));
    }

    #[test]
    fn compensated_path_agrees() {
        // 1000 x 1000 crosses the compensation threshold.
        let x = random_panel(1000, 1000, 3);
        let ps = build_prefix_sums(&x);
        let direct: f64 = (0..1000).map(|t| x.row(t)[17]).sum();
        assert!((ps.total()[17] - direct).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_panels() {
        assert!(matches!(
            ObservationMatrix::new(4, 1, vec![0.0, f64::NAN, 0.0, 0.0]),
            Err(Error::NonFinite { row: 1, col: 0 })
        ));
        assert!(matches!(
            ObservationMatrix::new(3, 1, vec![0.0; 3]),
            Err(Error::TooFewRows { n: 3, .. })
        ));
        assert!(ObservationMatrix::new(4, 2, vec![0.0; 7]).is_err());
    }

    #[test]
    fn csv_header_detection() {
        let with = "a,b\n1,2\n3,4\n5,6\n7,8\n";
        let without = "1,2\n3,4\n5,6\n7,8\n";
        let a = ObservationMatrix::read_csv(with.as_bytes()).unwrap();
        let b = ObservationMatrix::read_csv(without.as_bytes()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.row(3), &[7.0, 8.0]);
        assert!(ObservationMatrix::read_csv("1,2\n3,x\n5,6\n7,8\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let x = random_panel(5, 3, 9);
        let mut buf = Vec::new();
        x.write_csv(&mut buf).unwrap();
        assert_eq!(ObservationMatrix::read_csv(buf.as_slice()).unwrap(), x);
    }

    proptest::proptest! {
        #[test]
        fn segment_additivity(seed in 0u64..1000, a in 0usize..=10, b in 0usize..=10, c in 0usize..=10) {
            let mut idx = [a, b, c];
            idx.sort_unstable();
            let x = random_panel(10, 3, seed);
            let ps = build_prefix_sums(&x);
            let ac = ps.segment_sum(idx[0], idx[2]).unwrap();
            let ab = ps.segment_sum(idx[0], idx[1]).unwrap();
            let bc = ps.segment_sum(idx[1], idx[2]).unwrap();
            for j in 0..3 {
                proptest::prop_assert!((ac[j] - ab[j] - bc[j]).abs() <= 1e-12 * 20.0);
            }
        }
    }
}
