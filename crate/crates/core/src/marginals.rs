//! From raw PD levels to the copula scale.
//!
//! Sector series are first-differenced, then each differenced column is
//! mapped through its empirical CDF using average ranks over `n + 1`, so every
//! pseudo-observation lies strictly inside (0, 1). The ECDFs are kept so
//! copula-scale predictions can be mapped back to differenced-PD units.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Calendar month, formatted `YYYY-MM`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Input(format!("month {month} outside 1..=12")));
        }
        Ok(Self { year, month })
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            Self {
                year: self.year + 1,
                month: 1,
            }
        } else {
            Self {
                year: self.year,
                month: self.month + 1,
            }
        }
    }

    /// `count` consecutive months starting at `self`.
    pub fn sequence(self, count: usize) -> Vec<Self> {
        std::iter::successors(Some(self), |m| Some(m.succ()))
            .take(count)
            .collect()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Input(format!("`{s}` is not a YYYY-MM date"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        Self::new(year, month).map_err(|_| bad())
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Monthly PD levels per sector.
#[derive(Clone, Debug, PartialEq)]
pub struct RawPanel<T> {
    pub dates: Vec<YearMonth>,
    pub labels: Vec<String>,
    pub columns: Vec<Vec<T>>,
}

impl<T: Real> RawPanel<T> {
    /// Validates equal column lengths, at least three rows, strictly increasing
    /// dates and unique labels.
    pub fn new(dates: Vec<YearMonth>, labels: Vec<String>, columns: Vec<Vec<T>>) -> Result<Self> {
        if labels.len() != columns.len() {
            return Err(Error::Input(format!(
                "{} labels for {} columns",
                labels.len(),
                columns.len()
            )));
        }
        check_unique(&labels)?;
        let n = dates.len();
        if n < 3 {
            return Err(Error::Input(format!(
                "panel has {n} rows; at least 3 are required"
            )));
        }
        for (label, col) in labels.iter().zip(&columns) {
            if col.len() != n {
                return Err(Error::Input(format!(
                    "column `{label}` has {} rows, expected {n}",
                    col.len()
                )));
            }
            if col.iter().any(|x| !x.is_finite()) {
                return Err(Error::Input(format!("column `{label}` has non-finite values")));
            }
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Input(format!(
                "dates not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Self {
            dates,
            labels,
            columns,
        })
    }

    pub fn rows(&self) -> usize {
        self.dates.len()
    }
}

/// First differences of a [`RawPanel`]; row `t` is dated by the later month.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffPanel<T> {
    pub dates: Vec<YearMonth>,
    pub labels: Vec<String>,
    pub columns: Vec<Vec<T>>,
    pub source_len: usize,
}

/// Empirical marginal distribution of one differenced series.
///
/// Order statistics sit at plotting positions `k / (n + 1)` (tied values
/// share their average position); evaluation and inversion interpolate
/// linearly between them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MarginalEcdf<T> {
    sorted: Vec<T>,
}

impl<T: Real> MarginalEcdf<T> {
    pub fn from_sample(values: &[T]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("empty sample".into()));
        }
        if values.iter().any(|x| x.is_nan()) {
            return Err(Error::Input("sample contains NaN".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        Ok(Self { sorted })
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted_values(&self) -> &[T] {
        &self.sorted
    }

    /// Average 1-based rank of the tie group holding sorted index `i`.
    fn group_rank(&self, i: usize) -> T {
        let v = self.sorted[i];
        let first = self.sorted.partition_point(|x| *x < v);
        let last = self.sorted.partition_point(|x| *x <= v);
        lit::<T>((first + 1 + last) as f64 / 2.0)
    }

    /// ECDF evaluation on the plotting-position scale, always inside (0, 1).
    pub fn cdf(&self, x: T) -> T {
        let n = self.sorted.len();
        let denom = lit::<T>((n + 1) as f64);
        let below = self.sorted.partition_point(|v| *v < x);
        let upto = self.sorted.partition_point(|v| *v <= x);
        if upto > below {
            return lit::<T>((below + 1 + upto) as f64 / 2.0) / denom;
        }
        if below == 0 {
            return self.group_rank(0) / denom;
        }
        if below == n {
            return self.group_rank(n - 1) / denom;
        }
        let (a, b) = (self.sorted[below - 1], self.sorted[below]);
        let (ra, rb) = (self.group_rank(below - 1), self.group_rank(below));
        (ra + (rb - ra) * (x - a) / (b - a)) / denom
    }

    /// Empirical quantile at copula-scale level `u`.
    pub fn quantile(&self, u: T) -> Result<T> {
        if !(u > T::zero() && u < T::one()) {
            return Err(Error::Input(format!("quantile level {u} outside (0, 1)")));
        }
        let n = self.sorted.len();
        let pos = u * lit((n + 1) as f64);
        if pos <= T::one() {
            return Ok(self.sorted[0]);
        }
        if pos >= lit(n as f64) {
            return Ok(self.sorted[n - 1]);
        }
        let k = pos.floor();
        let frac = pos - k;
        let i = k.to_usize().unwrap_or(1) - 1;
        let (a, b) = (self.sorted[i], self.sorted[i + 1]);
        Ok(if frac == T::zero() { a } else { a + (b - a) * frac })
    }
}

/// Copula-scale panel: pseudo-observations plus the marginals that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoPanel<T> {
    pub dates: Vec<YearMonth>,
    pub labels: Vec<String>,
    pub columns: Vec<Vec<T>>,
    pub ecdfs: Vec<MarginalEcdf<T>>,
}

impl<T: Real> PseudoPanel<T> {
    pub fn rows(&self) -> usize {
        self.dates.len()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Input(format!("unknown sector label `{label}`")))
    }

    pub fn column(&self, label: &str) -> Result<&[T]> {
        Ok(&self.columns[self.index_of(label)?])
    }

    pub fn ecdf(&self, label: &str) -> Result<&MarginalEcdf<T>> {
        Ok(&self.ecdfs[self.index_of(label)?])
    }
}

fn check_unique(labels: &[String]) -> Result<()> {
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(Error::Input(format!("duplicate label `{l}`")));
        }
    }
    Ok(())
}

/// Month-over-month differences of every column.
pub fn difference<T: Real>(panel: &RawPanel<T>) -> Result<DiffPanel<T>> {
    let n = panel.rows();
    if n < 2 {
        return Err(Error::Input(format!("cannot difference a series of length {n}")));
    }
    let columns = panel
        .columns
        .iter()
        .map(|c| c.windows(2).map(|w| w[1] - w[0]).collect())
        .collect();
    Ok(DiffPanel {
        dates: panel.dates[1..].to_vec(),
        labels: panel.labels.clone(),
        columns,
        source_len: n,
    })
}

/// Average ranks (1-based) divided by `n + 1`.
pub fn rank_transform<T: Real>(values: &[T]) -> Result<Vec<T>> {
    let n = values.len();
    if values.iter().any(|x| x.is_nan()) {
        return Err(Error::Input("cannot rank NaN".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let denom = lit::<T>((n + 1) as f64);
    let mut out = vec![T::zero(); n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let rank = lit::<T>((start + 1 + end) as f64 / 2.0);
        for &i in &idx[start..end] {
            out[i] = rank / denom;
        }
        start = end;
    }
    Ok(out)
}

/// Probability integral transform of every column through its ECDF.
pub fn pit_transform<T: Real>(panel: &DiffPanel<T>) -> Result<PseudoPanel<T>> {
    let mut columns = Vec::with_capacity(panel.columns.len());
    let mut ecdfs = Vec::with_capacity(panel.columns.len());
    for (label, col) in panel.labels.iter().zip(&panel.columns) {
        if col.len() < 2 {
            return Err(Error::Input(format!(
                "column `{label}` has {} observations; at least 2 are required",
                col.len()
            )));
        }
        columns.push(rank_transform(col)?);
        ecdfs.push(MarginalEcdf::from_sample(col)?);
    }
    Ok(PseudoPanel {
        dates: panel.dates.clone(),
        labels: panel.labels.clone(),
        columns,
        ecdfs,
    })
}

/// Maps a copula-scale value back to the differenced scale.
pub fn pit_inverse<T: Real>(ecdf: &MarginalEcdf<T>, u: T) -> Result<T> {
    ecdf.quantile(u)
}

/// Kendall's tau-b in O(n log n) (Knight's merge-sort algorithm).
pub fn kendall_tau<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Input(format!("series lengths differ: {n} vs {}", y.len())));
    }
    if n < 2 {
        return Err(Error::Input("kendall_tau needs at least 2 observations".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Input("kendall_tau input contains NaN".into()));
    }
    let cmp = |a: &T, b: &T| a.partial_cmp(b).unwrap_or(Ordering::Equal);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| cmp(&x[a], &x[b]).then(cmp(&y[a], &y[b])));

    let pairs = |t: u64| t * t.saturating_sub(1) / 2;
    let total = pairs(n as u64);
    let (mut x_ties, mut joint_ties) = (0u64, 0u64);
    let (mut run_x, mut run_xy) = (1u64, 1u64);
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        if x[a] == x[b] {
            run_x += 1;
            if y[a] == y[b] {
                run_xy += 1;
            } else {
                joint_ties += pairs(run_xy);
                run_xy = 1;
            }
        } else {
            x_ties += pairs(run_x);
            joint_ties += pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    x_ties += pairs(run_x);
    joint_ties += pairs(run_xy);

    let mut ys: Vec<T> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = ys.clone();
    let swaps = merge_count(&mut ys, &mut buf);

    let mut y_ties = 0u64;
    let mut run_y = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run_y += 1;
        } else {
            y_ties += pairs(run_y);
            run_y = 1;
        }
    }
    y_ties += pairs(run_y);

    let num = total as i128 - x_ties as i128 - y_ties as i128 + joint_ties as i128
        - 2 * swaps as i128;
    let den_x = (total - x_ties) as f64;
    let den_y = (total - y_ties) as f64;
    if den_x == 0.0 || den_y == 0.0 {
        return Err(Error::Degenerate(
            "Kendall's tau undefined for a constant series".into(),
        ));
    }
    let tau = (num as f64 / (den_x * den_y).sqrt()).clamp(-1.0, 1.0);
    Ok(lit(tau))
}

/// Sorts `v` ascending, returning the number of inversions.
fn merge_count<T: Real>(v: &mut [T], buf: &mut [T]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (left, right) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(left, bl) + merge_count(right, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Pairwise Kendall's tau matrix of the panel columns.
pub fn tau_matrix<T: Real>(columns: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    let d = columns.len();
    let mut m = vec![vec![T::one(); d]; d];
    for i in 0..d {
        for j in (i + 1)..d {
            let t = kendall_tau(&columns[i], &columns[j])?;
            m[i][j] = t;
            m[j][i] = t;
        }
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct ColumnAutocorr<T> {
    pub label: String,
    /// Sample autocorrelations at lags 1..=max_lag.
    pub acf: Vec<T>,
    /// 1.96 / sqrt(n).
    pub threshold: T,
    pub flagged: bool,
}

/// Descriptive white-noise check of each differenced column.
pub fn autocorr_check<T: Real>(panel: &DiffPanel<T>, max_lag: usize) -> Result<Vec<ColumnAutocorr<T>>> {
    panel
        .labels
        .iter()
        .zip(&panel.columns)
        .map(|(label, col)| {
            let acf = sample_acf(col, max_lag)
                .map_err(|e| match e {
                    Error::Degenerate(m) => Error::Degenerate(format!("column `{label}`: {m}")),
                    other => other,
                })?;
            let threshold = lit::<T>(1.96) / lit::<T>(col.len() as f64).sqrt();
            let flagged = acf.iter().any(|r| r.abs() > threshold);
            Ok(ColumnAutocorr {
                label: label.clone(),
                acf,
                threshold,
                flagged,
            })
        })
        .collect()
}

/// Sample autocorrelations at lags 1..=max_lag.
pub fn sample_acf<T: Real>(x: &[T], max_lag: usize) -> Result<Vec<T>> {
    let n = x.len();
    if max_lag == 0 || max_lag >= n {
        return Err(Error::Input(format!(
            "max_lag must be in 1..{n}, got {max_lag}"
        )));
    }
    let mean = x.iter().copied().sum::<T>() / lit(n as f64);
    let denom: T = x.iter().map(|&v| (v - mean) * (v - mean)).sum();
    if denom == T::zero() {
        return Err(Error::Degenerate("autocorrelation of a constant series".into()));
    }
    Ok((1..=max_lag)
        .map(|k| {
            let num: T = (0..n - k).map(|t| (x[t] - mean) * (x[t + k] - mean)).sum();
            num / denom
        })
        .collect())
}
