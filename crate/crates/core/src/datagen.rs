//! Synthetic sector-PD panels with a known copula.
//!
//! Differences are drawn on the copula scale from a Gaussian correlation or
//! a D-vine, mapped through a scaled Student-t marginal, optionally given a
//! crisis spike, and cumulated into PD levels clipped to [0, 1].

use log::warn;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bicop::{BivariateCopula, CopulaFamily, FittedCopula, Rotation};
use crate::dvine::DVineModel;
use crate::error::{Error, Result};
use crate::marginals::{RawPanel, YearMonth};
use crate::rng::{random_seed, UniformStream};
use crate::special::{norm_cdf, norm_quantile};

pub const MIN_ROWS: usize = 24;
const CLIP_WARN_FRACTION: f64 = 0.01;

const DEFAULT_SPEC: &str = include_str!("../assets/default_spec.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthSpec {
    pub labels: Vec<String>,
    pub dependence: DependenceSpec,
    #[serde(default)]
    pub marginal: MarginalShape,
    pub rows: usize,
    /// Omitted: a fresh seed is drawn and flagged in the metadata.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_start")]
    pub start_date: YearMonth,
}

fn default_start() -> YearMonth {
    YearMonth::new(2007, 5).expect("valid month")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DependenceSpec {
    Gaussian { correlation: Vec<Vec<f64>> },
    /// Pair-copulas of a D-vine over `labels` in order, `pairs[t - 1][e]`
    /// coupling variables `e` and `e + t`. Trailing trees may be omitted and
    /// are then independent.
    Dvine { pairs: Vec<Vec<PairSpec>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub family: CopulaFamily,
    #[serde(default)]
    pub rotation: Rotation,
    #[serde(default)]
    pub parameter: Option<f64>,
}

/// A scalar shared by every sector or one value per sector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerSector {
    All(f64),
    Each(Vec<f64>),
}

impl PerSector {
    fn get(&self, j: usize) -> f64 {
        match self {
            PerSector::All(x) => *x,
            PerSector::Each(v) => v[j],
        }
    }

    fn check(&self, name: &str, d: usize, ok: impl Fn(f64) -> bool) -> Result<()> {
        let vals: &[f64] = match self {
            PerSector::All(x) => std::slice::from_ref(x),
            PerSector::Each(v) => {
                if v.len() != d {
                    return Err(Error::Input(format!("{name} has {} values for {d} sectors", v.len())));
                }
                v
            }
        };
        match vals.iter().find(|&&x| !ok(x)) {
            Some(x) => Err(Error::Input(format!("{name} value {x} is out of range"))),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalShape {
    /// Starting PD level.
    pub base_level: PerSector,
    /// Standard deviation of the monthly differences.
    pub volatility: PerSector,
    /// Degrees of freedom of the Student-t shape of the differences (> 2).
    #[serde(default = "default_df")]
    pub df: f64,
    #[serde(default)]
    pub crisis: Option<CrisisWindow>,
}

fn default_df() -> f64 {
    5.0
}

impl Default for MarginalShape {
    fn default() -> Self {
        Self {
            base_level: PerSector::All(0.03),
            volatility: PerSector::All(0.0003),
            df: default_df(),
            crisis: None,
        }
    }
}

/// A PD spike: levels climb by `peak` over the first half of the window and
/// fall back over the second half.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrisisWindow {
    /// First row index of the window.
    pub start: usize,
    pub length: usize,
    pub peak: f64,
    /// Affected sectors; all when omitted.
    #[serde(default)]
    pub sectors: Option<Vec<String>>,
}

impl CrisisWindow {
    fn increment(&self, row: usize) -> f64 {
        let up = (self.length - 1).div_ceil(2);
        let down = self.length - 1 - up;
        if row < self.start + 1 || row >= self.start + self.length {
            return 0.0;
        }
        // the level at `start` is untouched; rows start+1..=start+up climb
        let k = row - self.start;
        if k <= up {
            self.peak / up as f64
        } else {
            -self.peak / down as f64
        }
    }
}

impl GroundTruthSpec {
    /// The bundled nine-sector, 1000-row spec.
    pub fn bundled_default() -> Self {
        serde_json::from_str(DEFAULT_SPEC).expect("bundled spec parses")
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.labels.len();
        if d < 2 {
            return Err(Error::Input("spec needs at least two sectors".into()));
        }
        for (i, l) in self.labels.iter().enumerate() {
            if self.labels[..i].contains(l) {
                return Err(Error::Input(format!("duplicate label `{l}`")));
            }
        }
        if self.rows < MIN_ROWS {
            return Err(Error::Input(format!("spec asks for {} rows; at least {MIN_ROWS} are required", self.rows)));
        }
        let m = &self.marginal;
        m.base_level.check("base_level", d, |x| (0.0..=1.0).contains(&x))?;
        m.volatility.check("volatility", d, |x| x > 0.0 && x.is_finite())?;
        if !(m.df > 2.0 && m.df.is_finite()) {
            return Err(Error::Input(format!("df = {} must exceed 2 for a finite variance", m.df)));
        }
        if let Some(c) = &m.crisis {
            if c.length < 3 || c.start + c.length > self.rows {
                return Err(Error::Input(format!(
                    "crisis window {}..{} does not fit in {} rows",
                    c.start,
                    c.start + c.length,
                    self.rows
                )));
            }
            if !c.peak.is_finite() {
                return Err(Error::Input("crisis peak must be finite".into()));
            }
            for s in c.sectors.iter().flatten() {
                if !self.labels.contains(s) {
                    return Err(Error::Input(format!("crisis sector `{s}` is not a label")));
                }
            }
        }
        match &self.dependence {
            DependenceSpec::Gaussian { correlation } => {
                cholesky(correlation, d)?;
            }
            DependenceSpec::Dvine { .. } => {
                self.dvine()?;
            }
        }
        Ok(())
    }

    fn dvine(&self) -> Result<DVineModel<f64>> {
        let DependenceSpec::Dvine { pairs } = &self.dependence else {
            return Err(Error::Input("spec dependence is not a D-vine".into()));
        };
        let d = self.labels.len();
        if pairs.len() > d - 1 {
            return Err(Error::Input(format!("{} trees given for {d} variables", pairs.len())));
        }
        let mut trees = Vec::with_capacity(d - 1);
        for t in 1..d {
            let tree = match pairs.get(t - 1) {
                Some(tree) => {
                    if tree.len() != d - t {
                        return Err(Error::Input(format!("tree {t} needs {} pair-copulas, got {}", d - t, tree.len())));
                    }
                    tree.iter()
                        .map(|p| {
                            let copula = match (p.family, p.parameter) {
                                (CopulaFamily::Independence, _) => BivariateCopula::independence(),
                                (f, Some(theta)) => BivariateCopula::new(f, p.rotation, theta)?,
                                (f, None) => return Err(Error::Input(format!("{f} pair-copula needs a parameter"))),
                            };
                            Ok(FittedCopula { copula, loglik: 0.0, n: 0 })
                        })
                        .collect::<Result<Vec<_>>>()?
                }
                None => vec![FittedCopula::independence(0); d - t],
            };
            trees.push(tree);
        }
        DVineModel::new(self.labels.clone(), trees)
    }
}

/// Generation details kept alongside a synthetic panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationMetadata {
    pub seed: u64,
    /// No seed was given and one was drawn from the clock.
    pub seed_randomized: bool,
    pub rows: usize,
    pub clipped_cells: usize,
    pub clipped_fraction: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedPanel {
    pub panel: RawPanel<f64>,
    pub metadata: GenerationMetadata,
}

/// Lower-triangular Cholesky factor of a correlation matrix, rejecting
/// anything that is not a symmetric positive definite matrix with unit diagonal.
pub fn cholesky(r: &[Vec<f64>], d: usize) -> Result<Vec<Vec<f64>>> {
    if r.len() != d || r.iter().any(|row| row.len() != d) {
        return Err(Error::Input(format!("correlation matrix must be {d}x{d}")));
    }
    for i in 0..d {
        if (r[i][i] - 1.0).abs() > 1e-12 {
            return Err(Error::Input(format!("correlation diagonal entry {i} is {} rather than 1", r[i][i])));
        }
        for j in 0..i {
            if (r[i][j] - r[j][i]).abs() > 1e-12 || !(-1.0..=1.0).contains(&r[i][j]) {
                return Err(Error::Input(format!("correlation entry ({i}, {j}) is not a symmetric value in [-1, 1]")));
            }
        }
    }
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = r[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if s <= 1e-12 {
                    return Err(Error::Input("correlation matrix is not positive definite".into()));
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Copula-scale draws, one row per difference, columns in label order.
pub fn simulate_copula(spec: &GroundTruthSpec, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    match &spec.dependence {
        DependenceSpec::Gaussian { correlation } => {
            let d = spec.labels.len();
            let l = cholesky(correlation, d)?;
            let mut rng = UniformStream::new(seed);
            Ok((0..n)
                .map(|_| {
                    let z: Vec<f64> = (0..d).map(|_| norm_quantile(rng.next_open01())).collect();
                    (0..d)
                        .map(|i| {
                            let x: f64 = (0..=i).map(|k| l[i][k] * z[k]).sum();
                            norm_cdf(x).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
                        })
                        .collect()
                })
                .collect())
        }
        DependenceSpec::Dvine { .. } => spec.dvine()?.simulate(n, seed),
    }
}

/// Builds the PD-level panel described by `spec`.
pub fn generate_panel(spec: &GroundTruthSpec) -> Result<GeneratedPanel> {
    spec.validate()?;
    let (seed, seed_randomized) = match spec.seed {
        Some(s) => (s, false),
        None => (random_seed(), true),
    };
    let d = spec.labels.len();
    let n = spec.rows;
    let u = simulate_copula(spec, n - 1, seed)?;

    let m = &spec.marginal;
    let t = StudentsT::new(0.0, 1.0, m.df).map_err(|e| Error::Input(format!("Student-t marginal: {e}")))?;
    let unit_sd = ((m.df - 2.0) / m.df).sqrt();
    let in_crisis: Vec<bool> = spec
        .labels
        .iter()
        .map(|l| match &m.crisis {
            Some(c) => c.sectors.as_ref().is_none_or(|s| s.contains(l)),
            None => false,
        })
        .collect();

    let mut clipped = 0usize;
    let mut columns = Vec::with_capacity(d);
    for j in 0..d {
        let vol = m.volatility.get(j);
        let mut level = m.base_level.get(j);
        let mut col = Vec::with_capacity(n);
        col.push(level);
        for (row, draw) in u.iter().enumerate().map(|(i, r)| (i + 1, r[j])) {
            let mut step = vol * unit_sd * t.inverse_cdf(draw);
            if in_crisis[j] {
                step += m.crisis.as_ref().map_or(0.0, |c| c.increment(row));
            }
            let next = level + step;
            level = next.clamp(0.0, 1.0);
            if level != next {
                clipped += 1;
            }
            col.push(level);
        }
        columns.push(col);
    }

    let fraction = clipped as f64 / (n * d) as f64;
    let mut warnings = Vec::new();
    if fraction > CLIP_WARN_FRACTION {
        let msg = format!("{clipped} of {} PD levels ({:.2}%) were clipped to [0, 1]", n * d, 100.0 * fraction);
        warn!("{msg}");
        warnings.push(msg);
    }
    if seed_randomized {
        warnings.push(format!("no seed given; drew seed {seed}"));
    }
    let panel = RawPanel::new(spec.start_date.sequence(n), spec.labels.clone(), columns)?;
    Ok(GeneratedPanel {
        panel,
        metadata: GenerationMetadata {
            seed,
            seed_randomized,
            rows: n,
            clipped_cells: clipped,
            clipped_fraction: fraction,
            warnings,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_spec_is_valid() {
        let s = GroundTruthSpec::bundled_default();
        s.validate().unwrap();
        assert_eq!(s.labels.len(), 9);
        assert_eq!(s.rows, 1000);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = GroundTruthSpec::bundled_default();
        s.rows = 23;
        assert!(s.validate().is_err());
        let mut s = GroundTruthSpec::bundled_default();
        if let DependenceSpec::Gaussian { correlation } = &mut s.dependence {
            correlation[0][1] = 0.99;
            correlation[1][0] = 0.99;
            correlation[0][2] = -0.99;
            correlation[2][0] = -0.99;
        }
        let msg = s.validate().unwrap_err().to_string();
        assert!(msg.contains("positive definite"), "{msg}");
    }

    #[test]
    fn cholesky_reproduces_matrix() {
        let r = vec![vec![1.0, 0.5, 0.2], vec![0.5, 1.0, 0.3], vec![0.2, 0.3, 1.0]];
        let l = cholesky(&r, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| l[i][k] * l[j][k]).sum();
                assert!((s - r[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn crisis_increments_sum_to_zero_and_peak_inside() {
        let c = CrisisWindow {
            start: 10,
            length: 7,
            peak: 0.1,
            sectors: None,
        };
        let incs: Vec<f64> = (0..40).map(|r| c.increment(r)).collect();
        assert!(incs.iter().sum::<f64>().abs() < 1e-12);
        let mut level = 0.0;
        let mut best = (0.0, 0);
        for (r, x) in incs.iter().enumerate() {
            level += x;
            if level > best.0 + 1e-15 {
                best = (level, r);
            }
        }
        assert!((10..17).contains(&best.1));
        assert!((best.0 - 0.1).abs() < 1e-12);
    }
}
