//! Stress scenarios: pin stressed sectors at a quantile level and read off
//! conditional quantiles of every other sector.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bicop::CopulaFamily;
use crate::dvine::{forward_select, DVineModel, SelectionConfig};
use crate::error::{Error, Result};
use crate::marginals::{pit_inverse, PseudoPanel};

pub const DEFAULT_ALPHA_GRID: [f64; 3] = [0.025, 0.5, 0.975];
pub const DEFAULT_KAPPAS: [f64; 2] = [0.95, 0.99];

/// Environment variable capping the worker threads used for per-response fits.
pub const THREADS_ENV: &str = "VINESTRESS_THREADS";

const MIN_ALIGNED_ROWS: usize = 10;

fn default_alpha_grid() -> Vec<f64> {
    DEFAULT_ALPHA_GRID.to_vec()
}

/// A scenario as stored on disk: one stressed set evaluated at several levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressScenario {
    pub stressed: Vec<String>,
    pub kappa: Vec<f64>,
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    #[serde(default)]
    pub lag: usize,
}

impl StressScenario {
    pub fn new(stressed: Vec<String>, kappa: Vec<f64>) -> Self {
        Self {
            stressed,
            kappa,
            alpha_grid: default_alpha_grid(),
            lag: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stressed.is_empty() {
            return Err(Error::Input("scenario must stress at least one sector".into()));
        }
        for (i, s) in self.stressed.iter().enumerate() {
            if self.stressed[..i].contains(s) {
                return Err(Error::Input(format!("sector `{s}` is stressed twice")));
            }
        }
        if self.kappa.is_empty() {
            return Err(Error::Input("scenario needs at least one stress level kappa".into()));
        }
        for &k in &self.kappa {
            if !(k > 0.0 && k < 1.0) {
                return Err(Error::Input(format!("stress level kappa = {k} is outside the open interval (0, 1)")));
            }
        }
        validate_grid(&self.alpha_grid)
    }
}

/// Checks that a quantile grid is nonempty, inside (0, 1) and strictly increasing.
pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Input("alpha grid is empty".into()));
    }
    for &a in grid {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Input(format!("alpha = {a} is outside the open interval (0, 1)")));
        }
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Input(format!("alpha grid {grid:?} is not strictly increasing")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StressConfig {
    pub families: Vec<CopulaFamily>,
    /// Force every stressed sector into each response's vine. When off, the
    /// stressed sectors are only candidates for forward selection.
    pub forced: bool,
    /// Worker cap; `None` reads [`THREADS_ENV`], falling back to rayon's default.
    pub threads: Option<usize>,
}

impl Default for StressConfig {
    fn default() -> Self {
        Self {
            families: CopulaFamily::ALL.to_vec(),
            forced: true,
            threads: None,
        }
    }
}

/// Conditional quantiles of one response at one stress level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantilePrediction {
    pub response: String,
    pub kappa: f64,
    pub alphas: Vec<f64>,
    pub q_copula: Vec<f64>,
    /// `q_copula` mapped through the response's empirical marginal.
    pub q_pd_scale: Vec<f64>,
    pub families_on_path: Vec<String>,
}

impl QuantilePrediction {
    /// Copula-scale value at level 0.5 if the grid contains it.
    pub fn median(&self) -> Option<f64> {
        self.alphas.iter().position(|&a| a == 0.5).map(|i| self.q_copula[i])
    }
}

/// The fitted vine behind one response's predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseFit {
    pub response: String,
    pub model: DVineModel<f64>,
    /// Stressed sectors with no fitted effect on the response: either their
    /// response-path pair-copula is Independence or selection dropped them.
    pub independent_of: Vec<String>,
    /// Empirical median of the response on the differenced scale, the
    /// no-stress reference point.
    pub unconditional_median_pd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedResponse {
    pub response: String,
    pub reason: String,
}

/// Whether conditional medians grow with the stress level for one response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityCheck {
    pub response: String,
    /// Every response-path pair-copula has positive Kendall's tau, so the
    /// medians are expected to be nondecreasing in kappa.
    pub applicable: bool,
    pub holds: bool,
}

/// Results of a scenario, keyed by (response, kappa, alpha) in label order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StressTable {
    pub scenario: StressScenario,
    /// Aligned rows used for every fit (panel rows minus the lag).
    pub rows: usize,
    pub fits: Vec<ResponseFit>,
    pub predictions: Vec<QuantilePrediction>,
    pub skipped: Vec<SkippedResponse>,
    pub monotonicity: Vec<MonotonicityCheck>,
}

impl StressTable {
    pub fn predictions_for<'a>(&'a self, response: &'a str) -> impl Iterator<Item = &'a QuantilePrediction> + 'a {
        self.predictions.iter().filter(move |p| p.response == response)
    }

    pub fn prediction<'a>(&'a self, response: &'a str, kappa: f64) -> Option<&'a QuantilePrediction> {
        self.predictions_for(response).find(|p| p.kappa == kappa)
    }
}

/// Shifts the `covariates` columns `lag` rows into the past relative to the
/// rest: row `t` of the result pairs covariates at `t` with every other
/// column at `t + lag`. Values are not re-ranked and the marginals are kept.
pub fn lag_covariates(panel: &PseudoPanel<f64>, covariates: &[String], lag: usize) -> Result<PseudoPanel<f64>> {
    let n = panel.rows();
    if lag >= n {
        return Err(Error::Input(format!("lag {lag} leaves no rows of a {n}-row panel")));
    }
    let lagged: Vec<usize> = covariates
        .iter()
        .map(|c| panel.index_of(c))
        .collect::<Result<_>>()?;
    let columns = panel
        .columns
        .iter()
        .enumerate()
        .map(|(j, col)| {
            if lagged.contains(&j) {
                col[..n - lag].to_vec()
            } else {
                col[lag..].to_vec()
            }
        })
        .collect();
    Ok(PseudoPanel {
        dates: panel.dates[lag..].to_vec(),
        labels: panel.labels.clone(),
        columns,
        ecdfs: panel.ecdfs.clone(),
    })
}

/// Runs one scenario at a single stress level.
pub fn run_scenario(
    panel: &PseudoPanel<f64>,
    stressed: &[String],
    kappa: f64,
    alpha_grid: &[f64],
    lag: usize,
    config: &StressConfig,
) -> Result<StressTable> {
    let mut scenario = StressScenario::new(stressed.to_vec(), vec![kappa]);
    scenario.alpha_grid = alpha_grid.to_vec();
    scenario.lag = lag;
    run_scenario_matrix(panel, &scenario, config)
}

/// Fits one D-vine per non-stressed response and evaluates it at every
/// stress level of the scenario.
pub fn run_scenario_matrix(panel: &PseudoPanel<f64>, scenario: &StressScenario, config: &StressConfig) -> Result<StressTable> {
    scenario.validate()?;
    for s in &scenario.stressed {
        panel.index_of(s)?;
    }
    let responses: Vec<&String> = panel
        .labels
        .iter()
        .filter(|l| !scenario.stressed.contains(l))
        .collect();
    if responses.is_empty() {
        return Err(Error::Input("every sector is stressed; no responses left to evaluate".into()));
    }
    let aligned = lag_covariates(panel, &scenario.stressed, scenario.lag)?;
    if aligned.rows() < MIN_ALIGNED_ROWS {
        return Err(Error::Input(format!(
            "{} aligned rows after lag {}; at least {MIN_ALIGNED_ROWS} are needed",
            aligned.rows(),
            scenario.lag
        )));
    }

    let outcomes: Vec<Result<Outcome>> = with_thread_cap(config.threads, || {
        responses
            .par_iter()
            .map(|r| evaluate_response(&aligned, r, scenario, config))
            .collect()
    })?;

    let mut table = StressTable {
        scenario: scenario.clone(),
        rows: aligned.rows(),
        fits: Vec::new(),
        predictions: Vec::new(),
        skipped: Vec::new(),
        monotonicity: Vec::new(),
    };
    for outcome in outcomes {
        match outcome? {
            Outcome::Skipped(s) => table.skipped.push(s),
            Outcome::Fitted { fit, predictions } => {
                table.monotonicity.push(kappa_monotonicity(&fit.model, &predictions));
                table.fits.push(fit);
                table.predictions.extend(predictions);
            }
        }
    }
    Ok(table)
}

enum Outcome {
    Skipped(SkippedResponse),
    Fitted {
        fit: ResponseFit,
        predictions: Vec<QuantilePrediction>,
    },
}

fn evaluate_response(panel: &PseudoPanel<f64>, response: &str, scenario: &StressScenario, config: &StressConfig) -> Result<Outcome> {
    let y = panel.column(response)?;
    if y.iter().all(|&v| v == y[0]) {
        let reason = "response column is constant on the copula scale".to_string();
        warn!("skipping response: {reason} response={response}");
        return Ok(Outcome::Skipped(SkippedResponse {
            response: response.to_string(),
            reason,
        }));
    }
    let candidates: Vec<(&str, &[f64])> = scenario
        .stressed
        .iter()
        .map(|s| Ok((s.as_str(), panel.column(s)?)))
        .collect::<Result<_>>()?;
    let selection = SelectionConfig {
        families: config.families.clone(),
        forced: if config.forced { scenario.stressed.clone() } else { Vec::new() },
        ..SelectionConfig::default()
    };
    let model = forward_select((response, y), &candidates, &selection)?;

    let independent_of = scenario
        .stressed
        .iter()
        .filter(|s| match model.covariates().iter().position(|c| c == *s) {
            Some(t) => model.pair(t + 1, 0).copula.family() == CopulaFamily::Independence,
            None => true,
        })
        .cloned()
        .collect();

    let ecdf = panel.ecdf(response)?;
    let families = model.families_on_path();
    let mut predictions = Vec::with_capacity(scenario.kappa.len());
    for &kappa in &scenario.kappa {
        let u = vec![kappa; model.n_covariates()];
        let q_copula = model.conditional_quantiles(&scenario.alpha_grid, &u)?;
        let q_pd_scale = q_copula.iter().map(|&q| pit_inverse(ecdf, q)).collect::<Result<_>>()?;
        predictions.push(QuantilePrediction {
            response: response.to_string(),
            kappa,
            alphas: scenario.alpha_grid.clone(),
            q_copula,
            q_pd_scale,
            families_on_path: families.clone(),
        });
    }
    Ok(Outcome::Fitted {
        fit: ResponseFit {
            response: response.to_string(),
            model,
            independent_of,
            unconditional_median_pd: pit_inverse(ecdf, 0.5)?,
        },
        predictions,
    })
}

fn kappa_monotonicity(model: &DVineModel<f64>, predictions: &[QuantilePrediction]) -> MonotonicityCheck {
    let applicable = model.n_covariates() > 0 && model.pairs().iter().all(|tree| tree[0].copula.tau() > 0.0);
    let mut by_kappa: Vec<(f64, f64)> = predictions
        .iter()
        .filter_map(|p| p.median().map(|m| (p.kappa, m)))
        .collect();
    by_kappa.sort_by(|a, b| a.0.total_cmp(&b.0));
    let holds = by_kappa.windows(2).all(|w| w[1].1 >= w[0].1);
    let response = predictions.first().map(|p| p.response.clone()).unwrap_or_default();
    if applicable && !holds {
        warn!("conditional median decreases with kappa despite positive dependence response={response}");
    }
    MonotonicityCheck {
        response,
        applicable,
        holds,
    }
}

/// Thread cap from [`THREADS_ENV`], if set to a positive integer.
pub fn env_thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

/// Runs `f` inside a rayon pool limited to the configured or environment cap.
pub fn with_thread_cap<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads.or_else(env_thread_cap) {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Input(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginals::MarginalEcdf;
    use crate::marginals::YearMonth;

    fn panel(cols: Vec<(&str, Vec<f64>)>) -> PseudoPanel<f64> {
        let n = cols[0].1.len();
        PseudoPanel {
            dates: YearMonth::new(2000, 1).unwrap().sequence(n),
            labels: cols.iter().map(|c| c.0.to_string()).collect(),
            ecdfs: cols.iter().map(|c| MarginalEcdf::from_sample(&c.1).unwrap()).collect(),
            columns: cols.into_iter().map(|c| c.1).collect(),
        }
    }

    fn ramp(n: usize, shift: usize) -> Vec<f64> {
        (0..n).map(|i| ((i + shift) % n + 1) as f64 / (n + 1) as f64).collect()
    }

    #[test]
    fn scenario_validation() {
        let ok = StressScenario::new(vec!["a".into()], vec![0.95, 0.99]);
        assert!(ok.validate().is_ok());
        let mut s = ok.clone();
        s.kappa = vec![1.2];
        let msg = s.validate().unwrap_err().to_string();
        assert!(msg.contains("(0, 1)"), "{msg}");
        s.kappa = vec![];
        assert!(s.validate().is_err());
        let mut s = ok.clone();
        s.alpha_grid = vec![0.5, 0.5];
        assert!(s.validate().is_err());
        let mut s = ok.clone();
        s.stressed.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn scenario_json_defaults() {
        let s: StressScenario = serde_json::from_str(r#"{"stressed": ["x"], "kappa": [0.95]}"#).unwrap();
        assert_eq!(s.alpha_grid, DEFAULT_ALPHA_GRID.to_vec());
        assert_eq!(s.lag, 0);
    }

    #[test]
    fn lag_zero_is_identity_and_lag_one_drops_a_row() {
        let p = panel(vec![("a", ramp(113, 0)), ("b", ramp(113, 5))]);
        assert_eq!(lag_covariates(&p, &["a".into()], 0).unwrap(), p);
        let l = lag_covariates(&p, &["a".into()], 1).unwrap();
        assert_eq!(l.rows(), 112);
        assert_eq!(l.columns[0], p.columns[0][..112]);
        assert_eq!(l.columns[1], p.columns[1][1..]);
        assert!(lag_covariates(&p, &["a".into()], 113).is_err());
    }

    #[test]
    fn constant_response_is_skipped() {
        let n = 40;
        let p = panel(vec![("a", ramp(n, 0)), ("flat", vec![0.5; n]), ("b", ramp(n, 3))]);
        let t = run_scenario(&p, &["a".into()], 0.95, &DEFAULT_ALPHA_GRID, 0, &StressConfig::default()).unwrap();
        assert_eq!(t.skipped.len(), 1);
        assert_eq!(t.skipped[0].response, "flat");
        assert_eq!(t.fits.len(), 1);
    }

    #[test]
    fn all_stressed_or_unknown_is_an_error() {
        let p = panel(vec![("a", ramp(30, 0)), ("b", ramp(30, 3))]);
        let cfg = StressConfig::default();
        assert!(run_scenario(&p, &["a".into(), "b".into()], 0.95, &DEFAULT_ALPHA_GRID, 0, &cfg).is_err());
        let e = run_scenario(&p, &["zz".into()], 0.95, &DEFAULT_ALPHA_GRID, 0, &cfg).unwrap_err();
        assert!(e.to_string().contains("zz"));
        assert!(run_scenario(&p, &["a".into()], 0.95, &DEFAULT_ALPHA_GRID, 25, &cfg).is_err());
    }
}
