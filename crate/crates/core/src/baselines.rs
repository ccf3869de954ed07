//! Linear quantile regression, expectile regression and a quantile-crossing
//! detector.
//!
//! Designs are given as rows of covariates; an intercept column is always
//! prepended. Coefficient vectors are `[intercept, slope_1, ..., slope_p]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitKind {
    Quantile,
    Expectile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LinearFit<T> {
    pub kind: FitKind,
    /// Quantile or expectile level in (0, 1).
    pub level: T,
    pub intercept: T,
    pub slopes: Vec<T>,
    /// Pinball loss for quantile fits, asymmetric squared loss for expectiles.
    pub objective: T,
}

impl<T: Real> LinearFit<T> {
    pub fn predict(&self, x: &[T]) -> T {
        self.intercept + self.slopes.iter().zip(x).map(|(&b, &v)| b * v).sum::<T>()
    }

    pub fn coefficients(&self) -> Vec<T> {
        std::iter::once(self.intercept).chain(self.slopes.iter().copied()).collect()
    }
}

pub fn pinball_loss<T: Real>(residual: T, alpha: T) -> T {
    if residual >= T::zero() {
        alpha * residual
    } else {
        (alpha - T::one()) * residual
    }
}

fn design_row<T: Real>(x: &[T]) -> Vec<T> {
    std::iter::once(T::one()).chain(x.iter().copied()).collect()
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn residuals<T: Real>(x: &[Vec<T>], y: &[T], coef: &[T]) -> Vec<T> {
    x.iter()
        .zip(y)
        .map(|(row, &yi)| yi - coef[0] - dot(&coef[1..], row))
        .collect()
}

/// Pinball objective of the coefficient vector `[intercept, slopes...]`.
pub fn pinball_objective<T: Real>(x: &[Vec<T>], y: &[T], alpha: T, coef: &[T]) -> T {
    residuals(x, y, coef)
        .into_iter()
        .map(|r| pinball_loss(r, alpha))
        .sum()
}

/// Asymmetric least-squares objective of `[intercept, slopes...]`.
pub fn expectile_objective<T: Real>(x: &[Vec<T>], y: &[T], alpha: T, coef: &[T]) -> T {
    residuals(x, y, coef)
        .into_iter()
        .map(|r| {
            let w = if r >= T::zero() { alpha } else { T::one() - alpha };
            w * r * r
        })
        .sum()
}

fn check_design<T: Real>(x: &[Vec<T>], y: &[T], level: T) -> Result<usize> {
    if !(level > T::zero() && level < T::one()) {
        return Err(Error::Input(format!("level {level} outside (0, 1)")));
    }
    if x.len() != y.len() {
        return Err(Error::Input(format!(
            "design has {} rows but response has {}",
            x.len(),
            y.len()
        )));
    }
    let p = x.first().map_or(0, Vec::len);
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::Input("design rows differ in length".into()));
    }
    if y.len() < p + 2 {
        return Err(Error::Input(format!(
            "{} rows is too few for {} coefficients",
            y.len(),
            p + 1
        )));
    }
    if y.iter().chain(x.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::Input("design or response has non-finite values".into()));
    }
    check_rank(x)?;
    Ok(p)
}

/// Modified Gram-Schmidt on the design columns; names every column that is
/// numerically a combination of the preceding ones.
fn check_rank<T: Real>(x: &[Vec<T>]) -> Result<()> {
    let p = x.first().map_or(0, Vec::len);
    let names: Vec<String> = std::iter::once("intercept".to_string())
        .chain((1..=p).map(|j| format!("x{j}")))
        .collect();
    let cols: Vec<Vec<T>> = (0..=p)
        .map(|j| {
            x.iter()
                .map(|r| if j == 0 { T::one() } else { r[j - 1] })
                .collect()
        })
        .collect();
    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut dependent = Vec::new();
    let tol: T = lit(1e-10);
    for (j, col) in cols.iter().enumerate() {
        let norm0 = dot(col, col).sqrt();
        let mut v = col.clone();
        for q in &basis {
            let c = dot(q, &v);
            for (vi, &qi) in v.iter_mut().zip(q) {
                *vi = *vi - c * qi;
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm0 == T::zero() || norm <= tol * norm0 {
            dependent.push(names[j].clone());
        } else {
            basis.push(v.into_iter().map(|vi| vi / norm).collect());
        }
    }
    if dependent.is_empty() {
        Ok(())
    } else {
        Err(Error::RankDeficient(dependent))
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting; `None`
/// when a pivot vanishes.
fn solve<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| {
            a[i][c]
                .abs()
                .partial_cmp(&a[j][c].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[p][c].abs() <= T::min_positive_value() || !a[p][c].is_finite() {
            return None;
        }
        a.swap(p, c);
        b.swap(p, c);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f != T::zero() {
                for k in c..n {
                    a[r][k] = a[r][k] - f * a[c][k];
                }
                b[r] = b[r] - f * b[c];
            }
        }
    }
    let mut x = vec![T::zero(); n];
    for c in (0..n).rev() {
        let s = (c + 1..n).map(|k| a[c][k] * x[k]).sum::<T>();
        x[c] = (b[c] - s) / a[c][c];
    }
    Some(x)
}

fn invert<T: Real>(a: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let e = (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect();
        cols.push(solve(a.to_vec(), e)?);
    }
    // cols[j] is column j of the inverse
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}

/// Weighted least squares with weights `w` (all ones for OLS).
fn weighted_ls<T: Real>(rows: &[Vec<T>], y: &[T], w: &[T]) -> Result<Vec<T>> {
    let k = rows[0].len();
    let mut a = vec![vec![T::zero(); k]; k];
    let mut b = vec![T::zero(); k];
    for ((r, &yi), &wi) in rows.iter().zip(y).zip(w) {
        for i in 0..k {
            b[i] = b[i] + wi * r[i] * yi;
            for j in 0..k {
                a[i][j] = a[i][j] + wi * r[i] * r[j];
            }
        }
    }
    solve(a, b).ok_or_else(|| Error::Numerical {
        context: "singular normal equations".into(),
        iterations: 0,
        residual: f64::NAN,
    })
}

/// Ordinary least squares coefficients `[intercept, slopes...]`.
pub fn fit_ols<T: Real>(x: &[Vec<T>], y: &[T]) -> Result<Vec<T>> {
    check_design(x, y, lit(0.5))?;
    let rows: Vec<Vec<T>> = x.iter().map(|r| design_row(r)).collect();
    weighted_ls(&rows, y, &vec![T::one(); y.len()])
}

/// Exact pinball-loss minimizer by descent along the edges of the
/// linear-programming polytope: each vertex interpolates `p + 1` rows, and a
/// move swaps one interpolated row for the first row whose residual changes
/// sign once the directional derivative turns nonnegative.
pub fn fit_linear_quantile<T: Real>(x: &[Vec<T>], y: &[T], alpha: T) -> Result<LinearFit<T>> {
    let p = check_design(x, y, alpha)?;
    let k = p + 1;
    let n = y.len();
    let rows: Vec<Vec<T>> = x.iter().map(|r| design_row(r)).collect();
    let scale = y.iter().fold(T::zero(), |m, v| m.max(v.abs())).max(T::min_positive_value());
    let zero_tol = scale * T::epsilon() * lit(64.0);

    // initial basis: greedy independent rows in sorted-response order so the
    // start is near the quantile
    let mut by_y: Vec<usize> = (0..n).collect();
    by_y.sort_by(|&a, &b| y[a].partial_cmp(&y[b]).unwrap_or(std::cmp::Ordering::Equal));
    let start = (to_f64(alpha) * n as f64) as usize;
    by_y.rotate_left(start.min(n - 1));
    let mut basis: Vec<usize> = Vec::with_capacity(k);
    for &i in &by_y {
        let mut trial = basis.clone();
        trial.push(i);
        let sub: Vec<Vec<T>> = trial.iter().map(|&j| rows[j].clone()).collect();
        if independent_rows(&sub) {
            basis = trial;
            if basis.len() == k {
                break;
            }
        }
    }
    if basis.len() < k {
        return Err(Error::Numerical {
            context: "no nonsingular starting basis for quantile regression".into(),
            iterations: 0,
            residual: f64::NAN,
        });
    }

    let max_iter = 20 * n + 200;
    let one = T::one();
    for _ in 0..max_iter {
        let xh: Vec<Vec<T>> = basis.iter().map(|&j| rows[j].clone()).collect();
        let inv = invert(&xh).ok_or_else(|| Error::Numerical {
            context: "singular basis in quantile regression".into(),
            iterations: 0,
            residual: f64::NAN,
        })?;
        let yh: Vec<T> = basis.iter().map(|&j| y[j]).collect();
        let beta: Vec<T> = inv.iter().map(|r| dot(r, &yh)).collect();
        let res: Vec<T> = rows.iter().zip(y).map(|(r, &yi)| yi - dot(r, &beta)).collect();

        // steepest descending edge
        let mut best: Option<(T, usize, Vec<T>, T)> = None;
        for slot in 0..k {
            let col: Vec<T> = inv.iter().map(|r| r[slot]).collect();
            for sign in [one, -one] {
                let dir: Vec<T> = col.iter().map(|&c| c * sign).collect();
                let s: Vec<T> = rows.iter().map(|r| dot(r, &dir)).collect();
                let mut g = if sign > T::zero() { one - alpha } else { alpha };
                for i in 0..n {
                    if basis.contains(&i) {
                        continue;
                    }
                    let (r, si) = (res[i], s[i]);
                    if r.abs() <= zero_tol {
                        g = g + if si > T::zero() { (one - alpha) * si } else { -alpha * si };
                    } else if r > T::zero() {
                        g = g - alpha * si;
                    } else {
                        g = g + (one - alpha) * si;
                    }
                }
                let norm = dir.iter().map(|&v| v * v).sum::<T>().sqrt();
                let rate = g / norm;
                if g < -T::epsilon() * lit(1e3) * lit(n as f64)
                    && best.as_ref().is_none_or(|b| rate < b.0)
                {
                    best = Some((rate, slot, s, g));
                }
            }
        }
        let Some((_, slot, s, mut slope)) = best else {
            let objective = pinball_objective(x, y, alpha, &beta);
            return Ok(LinearFit {
                kind: FitKind::Quantile,
                level: alpha,
                intercept: beta[0],
                slopes: beta[1..].to_vec(),
                objective,
            });
        };

        // walk the kinks until the slope turns nonnegative
        let mut kinks: Vec<(T, usize)> = (0..n)
            .filter(|i| !basis.contains(i))
            .filter_map(|i| {
                let (r, si) = (res[i], s[i]);
                if r.abs() <= zero_tol || si == T::zero() {
                    return None;
                }
                let t = r / si;
                (t > T::zero()).then_some((t, i))
            })
            .collect();
        kinks.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut entering = None;
        for &(_, i) in &kinks {
            slope = slope + s[i].abs();
            if slope >= T::zero() {
                entering = Some(i);
                break;
            }
        }
        let Some(i) = entering else {
            return Err(Error::Numerical {
                context: "pinball objective unbounded along an edge".into(),
                iterations: 0,
                residual: to_f64(slope),
            });
        };
        basis[slot] = i;
    }
    Err(Error::Numerical {
        context: "quantile regression simplex did not terminate".into(),
        iterations: max_iter,
        residual: f64::NAN,
    })
}

fn independent_rows<T: Real>(rows: &[Vec<T>]) -> bool {
    // Gram-Schmidt on rows
    let mut basis: Vec<Vec<T>> = Vec::new();
    for r in rows {
        let n0 = dot(r, r).sqrt();
        let mut v = r.clone();
        for q in &basis {
            let c = dot(q, &v);
            for (vi, &qi) in v.iter_mut().zip(q) {
                *vi = *vi - c * qi;
            }
        }
        let nv = dot(&v, &v).sqrt();
        if n0 == T::zero() || nv <= n0 * lit(1e-9) {
            return false;
        }
        basis.push(v.into_iter().map(|x| x / nv).collect());
    }
    true
}

/// Expectile regression by iteratively reweighted least squares, started
/// at OLS. Weights are `alpha` for nonnegative residuals, `1 - alpha`
/// otherwise.
pub fn fit_expectile<T: Real>(x: &[Vec<T>], y: &[T], alpha: T) -> Result<LinearFit<T>> {
    check_design(x, y, alpha)?;
    let rows: Vec<Vec<T>> = x.iter().map(|r| design_row(r)).collect();
    let n = y.len();
    let mut beta = weighted_ls(&rows, y, &vec![T::one(); n])?;
    const MAX_ITER: usize = 500;
    let tol: T = lit(1e-10);
    for _ in 0..MAX_ITER {
        let w: Vec<T> = rows
            .iter()
            .zip(y)
            .map(|(r, &yi)| if yi - dot(r, &beta) >= T::zero() { alpha } else { T::one() - alpha })
            .collect();
        let next = weighted_ls(&rows, y, &w)?;
        let size = next.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let change = next
            .iter()
            .zip(&beta)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        beta = next;
        if change <= tol * (T::one() + size) {
            let objective = expectile_objective(x, y, alpha, &beta);
            return Ok(LinearFit {
                kind: FitKind::Expectile,
                level: alpha,
                intercept: beta[0],
                slopes: beta[1..].to_vec(),
                objective,
            });
        }
    }
    Err(Error::ExpectileNotConverged {
        iterations: MAX_ITER,
        last: beta.iter().map(|&b| to_f64(b)).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossingReport {
    /// Crossings between level `k` and `k + 1`, summed over points.
    pub per_pair: Vec<usize>,
    /// Crossings at each evaluation point, summed over adjacent level pairs.
    pub per_point: Vec<usize>,
    pub total: usize,
}

/// Counts adjacent level pairs whose lower-level prediction exceeds the
/// higher-level one by more than 1e-12.
pub fn detect_crossings<T: Real>(fits: &[LinearFit<T>], x_eval: &[Vec<T>]) -> Result<CrossingReport> {
    if fits.len() < 2 {
        return Err(Error::Input("crossing detection needs at least two fits".into()));
    }
    if fits.windows(2).any(|w| w[0].level.partial_cmp(&w[1].level) != Some(std::cmp::Ordering::Less)) {
        return Err(Error::Input("fit levels must be strictly increasing".into()));
    }
    let p = fits[0].slopes.len();
    if fits.iter().any(|f| f.slopes.len() != p) || x_eval.iter().any(|x| x.len() != p) {
        return Err(Error::Input("fits and evaluation points differ in dimension".into()));
    }
    let preds: Vec<Vec<T>> = x_eval
        .iter()
        .map(|x| fits.iter().map(|f| f.predict(x)).collect())
        .collect();
    Ok(count_crossings(&preds))
}

/// Crossing counts for predictions `preds[point][level]` from any method.
pub fn count_crossings<T: Real>(preds: &[Vec<T>]) -> CrossingReport {
    let levels = preds.first().map_or(0, Vec::len);
    let mut per_pair = vec![0; levels.saturating_sub(1)];
    let mut per_point = Vec::with_capacity(preds.len());
    let tol: T = lit(1e-12);
    for row in preds {
        let mut c = 0;
        for (k, w) in row.windows(2).enumerate() {
            if w[0] - w[1] > tol {
                per_pair[k] += 1;
                c += 1;
            }
        }
        per_point.push(c);
    }
    let total = per_point.iter().sum();
    CrossingReport {
        per_pair,
        per_point,
        total,
    }
}
