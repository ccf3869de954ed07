//! The batch stages behind each CLI subcommand.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::baselines::{count_crossings, detect_crossings, fit_expectile, fit_linear_quantile, LinearFit};
use crate::bicop::CopulaFamily;
use crate::datagen::{generate_panel, GenerationMetadata, GroundTruthSpec};
use crate::dvine::{fit_order, forward_select, DVineModel, SelectionConfig};
use crate::error::{Error, Result};
use crate::io::{
    read_json, read_panel, read_pseudo, read_scenario, write_curves, write_json, write_model, write_panel,
    write_plot_data, write_provenance, write_pseudo, write_report, CrossingSummary, CurveSet, Diagnostics,
    MethodCrossings,
};
use crate::marginals::{difference, kendall_tau, pit_inverse, pit_transform, sample_acf, ColumnAutocorr, PseudoPanel};
use crate::stress::{run_scenario_matrix, validate_grid, StressConfig, StressScenario, StressTable};

pub const DEFAULT_BENCHMARK_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];
pub const BENCHMARK_GRID_POINTS: usize = 101;
/// Fraction of the covariate range added on each side of the benchmark grid.
pub const BENCHMARK_GRID_MARGIN: f64 = 0.25;
const MAX_ACF_LAG: usize = 12;

pub const REPORT_FILE: &str = "report.csv";
pub const PLOT_DATA_FILE: &str = "plot_data.csv";
pub const PROVENANCE_FILE: &str = "provenance.json";
pub const CROSSINGS_FILE: &str = "crossings.json";

pub fn diagnostics_path(pseudo: &Path) -> PathBuf {
    pseudo.with_extension("diagnostics.json")
}

pub fn metadata_path(panel: &Path) -> PathBuf {
    panel.with_extension("meta.json")
}

pub fn curves_file(method: &str) -> String {
    format!("curves_{method}.csv")
}

fn csv_out(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Differences the raw panel, moves it to the copula scale and writes the
/// pseudo-observations, their marginals and the dependence diagnostics.
pub fn cmd_transform(input: &Path, output: &Path) -> Result<Diagnostics> {
    let raw = read_panel(input)?;
    let diff = difference(&raw)?;
    let pseudo = pit_transform(&diff)?;
    let d = diff.labels.len();
    let n = diff.columns[0].len();

    let max_lag = MAX_ACF_LAG.min(n.saturating_sub(1));
    let mut autocorrelation = Vec::with_capacity(d);
    for (label, col) in diff.labels.iter().zip(&diff.columns) {
        if max_lag == 0 {
            break;
        }
        match sample_acf(col, max_lag) {
            Ok(acf) => {
                let threshold = 1.96 / (n as f64).sqrt();
                let flagged = acf.iter().any(|r| r.abs() > threshold);
                if flagged {
                    info!("differenced series shows autocorrelation sector={label}");
                }
                autocorrelation.push(ColumnAutocorr {
                    label: label.clone(),
                    acf,
                    threshold,
                    flagged,
                });
            }
            Err(Error::Degenerate(_)) => warn!("constant differenced series sector={label}"),
            Err(e) => return Err(e),
        }
    }

    let mut tau = vec![vec![Some(1.0); d]; d];
    for i in 0..d {
        for j in i + 1..d {
            let t = match kendall_tau(&pseudo.columns[i], &pseudo.columns[j]) {
                Ok(t) => Some(t),
                Err(Error::Degenerate(_)) => None,
                Err(e) => return Err(e),
            };
            tau[i][j] = t;
            tau[j][i] = t;
        }
    }
    let diagnostics = Diagnostics {
        labels: pseudo.labels.clone(),
        rows: n,
        kendall_tau: tau,
        autocorrelation,
    };
    write_pseudo(output, &pseudo)?;
    write_json(&diagnostics_path(output), &diagnostics)?;
    info!("transformed panel rows={n} sectors={d} output={}", output.display());
    Ok(diagnostics)
}

/// Forward-selects a D-vine for `response` over `covariates` (all other
/// sectors when empty) and writes it as JSON.
pub fn cmd_fit(input: &Path, response: &str, covariates: &[String], families: &[CopulaFamily], output: &Path) -> Result<DVineModel<f64>> {
    let pseudo = read_pseudo(input)?;
    let y = pseudo.column(response)?;
    let pool: Vec<String> = if covariates.is_empty() {
        pseudo.labels.iter().filter(|l| *l != response).cloned().collect()
    } else {
        covariates.to_vec()
    };
    if pool.iter().any(|c| c == response) {
        return Err(Error::Input(format!("`{response}` cannot be both response and covariate")));
    }
    let candidates: Vec<(&str, &[f64])> = pool
        .iter()
        .map(|c| Ok((c.as_str(), pseudo.column(c)?)))
        .collect::<Result<_>>()?;
    let config = SelectionConfig {
        families: families.to_vec(),
        ..SelectionConfig::default()
    };
    let model = forward_select((response, y), &candidates, &config)?;
    write_model(output, &model)?;
    info!(
        "fitted D-vine response={response} order={} cll={} output={}",
        model.covariates().join("|"),
        model.conditional_loglik(),
        output.display()
    );
    Ok(model)
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScenarioOverrides {
    pub kappa: Option<Vec<f64>>,
    pub alpha_grid: Option<Vec<f64>>,
    pub lag: Option<usize>,
}

impl ScenarioOverrides {
    pub fn apply(&self, mut s: StressScenario) -> Result<StressScenario> {
        if let Some(k) = &self.kappa {
            s.kappa = k.clone();
        }
        if let Some(a) = &self.alpha_grid {
            s.alpha_grid = a.clone();
        }
        if let Some(l) = self.lag {
            s.lag = l;
        }
        s.validate()?;
        Ok(s)
    }
}

/// Runs a scenario file against a pseudo panel and writes the report,
/// plot data and provenance into `out_dir`.
pub fn cmd_stress(
    input: &Path,
    scenario: &Path,
    out_dir: &Path,
    overrides: &ScenarioOverrides,
    config: &StressConfig,
) -> Result<StressTable> {
    let scenario = overrides.apply(read_scenario(scenario)?)?;
    let pseudo = read_pseudo(input)?;
    let table = run_scenario_matrix(&pseudo, &scenario, config)?;
    write_stress_outputs(out_dir, &table)?;
    info!(
        "stress scenario done stressed={} kappas={} responses={} skipped={} rows={} output={}",
        scenario.stressed.join("|"),
        scenario.kappa.len(),
        table.fits.len(),
        table.skipped.len(),
        table.rows,
        out_dir.display()
    );
    Ok(table)
}

pub fn write_stress_outputs(out_dir: &Path, table: &StressTable) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    write_report(csv_out(&out_dir.join(REPORT_FILE))?, table)?;
    write_plot_data(csv_out(&out_dir.join(PLOT_DATA_FILE))?, table)?;
    write_provenance(&out_dir.join(PROVENANCE_FILE), table)
}

/// Curves of the three benchmarked methods on a shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    pub linear_qr: CurveSet,
    pub expectile: CurveSet,
    pub dvine: CurveSet,
    pub crossings: CrossingSummary,
    pub linear_fits: Vec<LinearFit<f64>>,
    pub expectile_fits: Vec<LinearFit<f64>>,
    pub model: DVineModel<f64>,
}

/// Evenly spaced points covering the data range widened by
/// [`BENCHMARK_GRID_MARGIN`] on both sides.
pub fn evaluation_grid(x: &[f64], points: usize) -> Result<Vec<f64>> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) || points < 2 {
        return Err(Error::Degenerate("covariate has no spread to build an evaluation grid".into()));
    }
    let pad = BENCHMARK_GRID_MARGIN * (hi - lo);
    let (a, b) = (lo - pad, hi + pad);
    Ok((0..points)
        .map(|i| a + (b - a) * i as f64 / (points - 1) as f64)
        .collect())
}

/// Linear quantile regression, expectile regression and a one-covariate
/// D-vine quantile regression of `response` on `covariate`, all on the
/// differenced scale.
pub fn benchmark(pseudo: &PseudoPanel<f64>, response: &str, covariate: &str, levels: &[f64], families: &[CopulaFamily]) -> Result<Benchmark> {
    validate_grid(levels)?;
    if response == covariate {
        return Err(Error::Input("response and covariate must differ".into()));
    }
    let (uy, ux) = (pseudo.column(response)?, pseudo.column(covariate)?);
    let (ey, ex) = (pseudo.ecdf(response)?, pseudo.ecdf(covariate)?);
    let y: Vec<f64> = uy.iter().map(|&u| pit_inverse(ey, u)).collect::<Result<_>>()?;
    let x: Vec<f64> = ux.iter().map(|&u| pit_inverse(ex, u)).collect::<Result<_>>()?;
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    let grid = evaluation_grid(&x, BENCHMARK_GRID_POINTS)?;
    let grid_rows: Vec<Vec<f64>> = grid.iter().map(|&v| vec![v]).collect();

    let linear_fits = levels
        .iter()
        .map(|&a| fit_linear_quantile(&rows, &y, a))
        .collect::<Result<Vec<_>>>()?;
    let expectile_fits = levels
        .iter()
        .map(|&a| fit_expectile(&rows, &y, a))
        .collect::<Result<Vec<_>>>()?;
    let config = SelectionConfig {
        families: families.to_vec(),
        ..SelectionConfig::default()
    };
    let model = fit_order((response, uy), &[(covariate, ux)], &config)?;

    let linear_pred = |fits: &[LinearFit<f64>]| -> Vec<Vec<f64>> {
        grid_rows
            .iter()
            .map(|r| fits.iter().map(|f| f.predict(r)).collect())
            .collect()
    };
    let dvine_pred = grid
        .iter()
        .map(|&g| {
            let q = model.conditional_quantiles(levels, &[ex.cdf(g)])?;
            q.iter().map(|&u| pit_inverse(ey, u)).collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let curve = |method: &str, predicted: Vec<Vec<f64>>| CurveSet {
        method: method.into(),
        levels: levels.to_vec(),
        x: grid.clone(),
        predicted,
    };
    let linear_qr = curve("linear_qr", linear_pred(&linear_fits));
    let expectile = curve("expectile", linear_pred(&expectile_fits));
    let dvine = curve("dvine", dvine_pred);

    let crossings = CrossingSummary {
        response: response.into(),
        covariate: covariate.into(),
        levels: levels.to_vec(),
        methods: vec![
            MethodCrossings {
                method: linear_qr.method.clone(),
                report: detect_crossings(&linear_fits, &grid_rows)?,
            },
            MethodCrossings {
                method: expectile.method.clone(),
                report: detect_crossings(&expectile_fits, &grid_rows)?,
            },
            MethodCrossings {
                method: dvine.method.clone(),
                report: count_crossings(&dvine.predicted),
            },
        ],
    };
    Ok(Benchmark {
        linear_qr,
        expectile,
        dvine,
        crossings,
        linear_fits,
        expectile_fits,
        model,
    })
}

/// Runs [`benchmark`] on a pseudo panel file and writes the three curve
/// CSVs plus the crossing report into `out_dir`.
pub fn cmd_benchmark(
    input: &Path,
    response: &str,
    covariate: &str,
    levels: &[f64],
    families: &[CopulaFamily],
    out_dir: &Path,
) -> Result<Benchmark> {
    let pseudo = read_pseudo(input)?;
    let b = benchmark(&pseudo, response, covariate, levels, families)?;
    std::fs::create_dir_all(out_dir)?;
    for c in [&b.linear_qr, &b.expectile, &b.dvine] {
        write_curves(csv_out(&out_dir.join(curves_file(&c.method)))?, c)?;
    }
    write_json(&out_dir.join(CROSSINGS_FILE), &b.crossings)?;
    let counts: Vec<String> = b
        .crossings
        .methods
        .iter()
        .map(|m| format!("{}={}", m.method, m.report.total))
        .collect();
    info!(
        "benchmark done response={response} covariate={covariate} {} output={}",
        counts.join(" "),
        out_dir.display()
    );
    Ok(b)
}

/// Generates a synthetic panel from `spec` (the bundled spec when `None`)
/// and writes it with a metadata sidecar. `seed` overrides the spec's seed.
pub fn cmd_simulate(spec: Option<&Path>, seed: Option<u64>, output: &Path) -> Result<GenerationMetadata> {
    let mut spec: GroundTruthSpec = match spec {
        Some(p) => read_json(p)?,
        None => GroundTruthSpec::bundled_default(),
    };
    if seed.is_some() {
        spec.seed = seed;
    }
    let generated = generate_panel(&spec)?;
    write_panel(output, &generated.panel)?;
    write_json(&metadata_path(output), &generated.metadata)?;
    let m = &generated.metadata;
    info!(
        "simulated panel rows={} sectors={} seed={} randomized={} clipped={} output={}",
        m.rows,
        spec.labels.len(),
        m.seed,
        m.seed_randomized,
        m.clipped_cells,
        output.display()
    );
    Ok(generated.metadata)
}
