//! File formats.
//!
//! CSV numbers are written with 17 significant digits; JSON numbers use the
//! shortest representation that parses back to the same `f64`. Both reload
//! bit-exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::baselines::CrossingReport;
use crate::dvine::DVineModel;
use crate::error::{Error, Result};
use crate::marginals::{ColumnAutocorr, MarginalEcdf, PseudoPanel, RawPanel, YearMonth};
use crate::stress::{StressScenario, StressTable};

const DATE_HEADER: &str = "date";

/// `x` with 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let mut s = String::new();
    File::open(path)?.read_to_string(&mut s)?;
    Ok(serde_json::from_str(&s)?)
}

/// A dated table: `date` column followed by one numeric column per label.
struct Table {
    dates: Vec<YearMonth>,
    labels: Vec<String>,
    columns: Vec<Vec<f64>>,
}

fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0).map(str::trim) != Some(DATE_HEADER) {
        return Err(Error::Parse {
            line: 1,
            column: header.get(0).unwrap_or("").to_string(),
            message: format!("first column must be `{DATE_HEADER}`"),
        });
    }
    let labels: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    if labels.is_empty() {
        return Err(Error::Parse {
            line: 1,
            column: DATE_HEADER.into(),
            message: "no data columns".into(),
        });
    }
    let mut dates = Vec::new();
    let mut columns = vec![Vec::new(); labels.len()];
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let cell = |i: usize, name: &str| -> Result<&str> {
            match rec.get(i).map(str::trim) {
                Some(s) if !s.is_empty() => Ok(s),
                _ => Err(Error::Parse {
                    line,
                    column: name.to_string(),
                    message: "missing value".into(),
                }),
            }
        };
        if rec.len() > labels.len() + 1 {
            return Err(Error::Parse {
                line,
                column: format!("#{}", labels.len() + 2),
                message: format!("{} fields, header has {}", rec.len(), labels.len() + 1),
            });
        }
        let date = cell(0, DATE_HEADER)?.parse::<YearMonth>().map_err(|e| Error::Parse {
            line,
            column: DATE_HEADER.into(),
            message: e.to_string(),
        })?;
        dates.push(date);
        for (j, label) in labels.iter().enumerate() {
            let s = cell(j + 1, label)?;
            let x: f64 = s.parse().map_err(|_| Error::Parse {
                line,
                column: label.clone(),
                message: format!("`{s}` is not a number"),
            })?;
            columns[j].push(x);
        }
    }
    Ok(Table { dates, labels, columns })
}

fn write_table<W: Write>(writer: W, dates: &[YearMonth], labels: &[String], columns: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(std::iter::once(DATE_HEADER).chain(labels.iter().map(String::as_str)))?;
    for (i, d) in dates.iter().enumerate() {
        let mut rec = vec![d.to_string()];
        rec.extend(columns.iter().map(|c| fmt_num(c[i])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_panel_from<R: Read>(reader: R) -> Result<RawPanel<f64>> {
    let t = read_table(reader)?;
    RawPanel::new(t.dates, t.labels, t.columns)
}

pub fn read_panel(path: &Path) -> Result<RawPanel<f64>> {
    read_panel_from(File::open(path)?)
}

pub fn write_panel(path: &Path, panel: &RawPanel<f64>) -> Result<()> {
    write_table(create(path)?, &panel.dates, &panel.labels, &panel.columns)
}

/// Sidecar holding the marginals of a pseudo-observation CSV.
pub fn marginals_path(pseudo: &Path) -> PathBuf {
    pseudo.with_extension("marginals.json")
}

#[derive(Serialize, Deserialize)]
struct MarginalsFile {
    labels: Vec<String>,
    ecdfs: Vec<MarginalEcdf<f64>>,
}

/// Writes the pseudo-observations to `path` and their marginals to
/// [`marginals_path`].
pub fn write_pseudo(path: &Path, panel: &PseudoPanel<f64>) -> Result<()> {
    write_table(create(path)?, &panel.dates, &panel.labels, &panel.columns)?;
    write_json(
        &marginals_path(path),
        &MarginalsFile {
            labels: panel.labels.clone(),
            ecdfs: panel.ecdfs.clone(),
        },
    )
}

pub fn read_pseudo(path: &Path) -> Result<PseudoPanel<f64>> {
    let t = read_table(File::open(path)?)?;
    let side = marginals_path(path);
    let m: MarginalsFile = read_json(&side).map_err(|e| match e {
        Error::Io(io) => Error::Input(format!("cannot read marginals sidecar {}: {io}", side.display())),
        other => other,
    })?;
    if m.labels != t.labels {
        return Err(Error::Input(format!(
            "marginals sidecar labels {:?} do not match CSV header {:?}",
            m.labels, t.labels
        )));
    }
    if m.ecdfs.iter().any(|e| e.n() == 0) {
        return Err(Error::Input("marginals sidecar has an empty sample".into()));
    }
    for (label, col) in t.labels.iter().zip(&t.columns) {
        if let Some(i) = col.iter().position(|&u| !(u > 0.0 && u < 1.0)) {
            return Err(Error::Parse {
                line: i as u64 + 2,
                column: label.clone(),
                message: format!("pseudo-observation {} outside (0, 1)", col[i]),
            });
        }
    }
    if t.dates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Input("pseudo panel dates are not strictly increasing".into()));
    }
    Ok(PseudoPanel {
        dates: t.dates,
        labels: t.labels,
        columns: t.columns,
        ecdfs: m.ecdfs,
    })
}

/// Dependence diagnostics of a pseudo panel.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    pub labels: Vec<String>,
    pub rows: usize,
    /// Pairwise Kendall's tau in label order; `None` where a column is constant.
    pub kendall_tau: Vec<Vec<Option<f64>>>,
    pub autocorrelation: Vec<ColumnAutocorr<f64>>,
}

pub fn write_model(path: &Path, model: &DVineModel<f64>) -> Result<()> {
    write_json(path, model)
}

pub fn read_model(path: &Path) -> Result<DVineModel<f64>> {
    read_json(path)
}

/// Reads and validates a scenario file.
pub fn read_scenario(path: &Path) -> Result<StressScenario> {
    let s: StressScenario = read_json(path)?;
    s.validate()?;
    Ok(s)
}

pub fn parse_scenario(json: &str) -> Result<StressScenario> {
    let s: StressScenario = serde_json::from_str(json)?;
    s.validate()?;
    Ok(s)
}

/// Long-format report: one row per (response, kappa, alpha).
pub fn write_report<W: Write>(writer: W, table: &StressTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["response", "kappa", "alpha", "q_copula", "q_pd_scale", "families_on_path"])?;
    for p in &table.predictions {
        let fams = p.families_on_path.join("|");
        for ((a, qc), qp) in p.alphas.iter().zip(&p.q_copula).zip(&p.q_pd_scale) {
            w.write_record([
                p.response.as_str(),
                &fmt_num(p.kappa),
                &fmt_num(*a),
                &fmt_num(*qc),
                &fmt_num(*qp),
                &fams,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per (response, kappa) with the median and the interval spanned by
/// the outermost grid levels, on both scales.
pub fn write_plot_data<W: Write>(writer: W, table: &StressTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "response",
        "kappa",
        "alpha_lower",
        "alpha_upper",
        "q_lower",
        "q_median",
        "q_upper",
        "pd_lower",
        "pd_median",
        "pd_upper",
        "pd_unconditional_median",
        "independent_of_stressed",
    ])?;
    let opt = |x: Option<f64>| x.map(fmt_num).unwrap_or_default();
    for p in &table.predictions {
        let last = p.alphas.len() - 1;
        let mid = p.alphas.iter().position(|&a| a == 0.5);
        let fit = table.fits.iter().find(|f| f.response == p.response);
        let independent = fit.is_some_and(|f| f.independent_of.len() == table.scenario.stressed.len());
        let uncond = fit.map(|f| f.unconditional_median_pd);
        w.write_record([
            p.response.clone(),
            fmt_num(p.kappa),
            fmt_num(p.alphas[0]),
            fmt_num(p.alphas[last]),
            fmt_num(p.q_copula[0]),
            opt(mid.map(|i| p.q_copula[i])),
            fmt_num(p.q_copula[last]),
            fmt_num(p.q_pd_scale[0]),
            opt(mid.map(|i| p.q_pd_scale[i])),
            fmt_num(p.q_pd_scale[last]),
            opt(uncond),
            independent.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Everything behind a report: scenario, fitted models with their
/// selection traces, skipped responses and the kappa monotonicity checks.
pub fn write_provenance(path: &Path, table: &StressTable) -> Result<()> {
    #[derive(Serialize)]
    struct Provenance<'a> {
        tool: &'static str,
        version: &'static str,
        #[serde(flatten)]
        table: &'a StressTable,
    }
    write_json(
        path,
        &Provenance {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            table,
        },
    )
}

/// Fitted curves of one method evaluated on a shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveSet {
    pub method: String,
    pub levels: Vec<f64>,
    pub x: Vec<f64>,
    /// `predicted[point][level]`.
    pub predicted: Vec<Vec<f64>>,
}

pub fn write_curves<W: Write>(writer: W, curves: &CurveSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "level", "x", "predicted_y"])?;
    for (k, level) in curves.levels.iter().enumerate() {
        for (x, row) in curves.x.iter().zip(&curves.predicted) {
            w.write_record([curves.method.as_str(), &fmt_num(*level), &fmt_num(*x), &fmt_num(row[k])])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a curve CSV back into a [`CurveSet`].
pub fn read_curves<R: Read>(reader: R) -> Result<CurveSet> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut method = None;
    let mut levels: Vec<f64> = Vec::new();
    let mut x: Vec<f64> = Vec::new();
    let mut by_level: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize, name: &str| -> Result<f64> {
            rec.get(i).and_then(|s| s.trim().parse().ok()).ok_or_else(|| Error::Parse {
                line,
                column: name.into(),
                message: "missing or non-numeric value".into(),
            })
        };
        method.get_or_insert_with(|| rec.get(0).unwrap_or("").to_string());
        let (level, xv, y) = (num(1, "level")?, num(2, "x")?, num(3, "predicted_y")?);
        if levels.last() != Some(&level) {
            levels.push(level);
            by_level.push(Vec::new());
        }
        if levels.len() == 1 {
            x.push(xv);
        }
        by_level.last_mut().expect("level pushed").push(y);
    }
    let predicted = (0..x.len())
        .map(|i| by_level.iter().map(|c| c.get(i).copied().unwrap_or(f64::NAN)).collect())
        .collect();
    Ok(CurveSet {
        method: method.unwrap_or_default(),
        levels,
        x,
        predicted,
    })
}

/// Crossing counts of every benchmarked method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingSummary {
    pub response: String,
    pub covariate: String,
    pub levels: Vec<f64>,
    pub methods: Vec<MethodCrossings>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodCrossings {
    pub method: String,
    pub report: CrossingReport,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 123456.789, f64::MIN_POSITIVE, 0.0] {
            let s = fmt_num(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn missing_cell_names_row_and_column() {
        let csv = "date,a,b\n2000-01,0.1,0.2\n2000-02,0.3,\n2000-03,0.4,0.5\n";
        match read_panel_from(csv.as_bytes()) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "b");
            }
            other => panic!("{other:?}"),
        }
        let short = "date,a,b\n2000-01,0.1\n";
        assert!(matches!(read_panel_from(short.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn bad_date_and_number() {
        let csv = "date,a\n2000-13,0.1\n";
        assert!(matches!(read_panel_from(csv.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let csv = "date,a\n2000-01,abc\n";
        let e = read_panel_from(csv.as_bytes()).unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("`a`"), "{e}");
    }

    #[test]
    fn scenario_kappa_out_of_domain() {
        let e = parse_scenario(r#"{"stressed": ["x"], "kappa": [1.2]}"#).unwrap_err();
        assert!(e.to_string().contains("(0, 1)"), "{e}");
        assert!(parse_scenario(r#"{"stressed": ["x"], "kappa": [0.95], "alpha_grid": [0.1, 0.9], "lag": 1}"#).is_ok());
    }

    #[test]
    fn curves_round_trip() {
        let c = CurveSet {
            method: "linear_qr".into(),
            levels: vec![0.1, 0.9],
            x: vec![0.0, 0.5, 1.0],
            predicted: vec![vec![1.0, 2.0], vec![1.5, 2.5], vec![1.0 / 3.0, 3.0]],
        };
        let mut buf = Vec::new();
        write_curves(&mut buf, &c).unwrap();
        assert_eq!(read_curves(buf.as_slice()).unwrap(), c);
    }
}
