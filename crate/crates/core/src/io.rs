//! File formats: dataset CSV with a JSON truth sidecar, fit-trace CSV and
//! parameter JSON. Numbers are written with the shortest representation
//! that round-trips an `f64`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, MfaParams, Truth};
use crate::trace::FitTrace;

/// Header row of every trace CSV.
pub const TRACE_HEADER: [&str; 6] = ["iteration", "objective", "beta", "gamma", "beads", "wall_ms"];

/// JSON shape of [`MfaParams`]: loadings are `m` row-major `d × k` arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsJson {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub loadings: Vec<Vec<Vec<f64>>>,
    pub noise_cov: Vec<Vec<f64>>,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidParams(format!("ragged {what}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl ParamsJson {
    pub fn from_params(p: &MfaParams<f64>) -> Self {
        Self {
            weights: p.weights.iter().copied().collect(),
            means: p.means.iter().map(|v| v.iter().copied().collect()).collect(),
            loadings: p.loadings.iter().map(matrix_rows).collect(),
            noise_cov: matrix_rows(&p.noise_cov),
        }
    }

    pub fn to_params(&self) -> Result<MfaParams<f64>> {
        let loadings = self
            .loadings
            .iter()
            .map(|l| matrix_from_rows(l, "loading matrix"))
            .collect::<Result<Vec<_>>>()?;
        MfaParams::new(
            DVector::from_vec(self.weights.clone()),
            self.means.iter().map(|v| DVector::from_vec(v.clone())).collect(),
            loadings,
            matrix_from_rows(&self.noise_cov, "noise covariance")?,
        )
    }
}

/// Truth sidecar written next to a generated dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthJson {
    pub seed: u64,
    pub n: usize,
    pub params: ParamsJson,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

/// Dataset CSV text: `y_1..y_d` and, when truth is present, a one-based
/// `label` column.
pub fn dataset_csv(data: &Dataset<f64>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let d = data.dim();
    let mut header: Vec<String> = (1..=d).map(|j| format!("y_{j}")).collect();
    if data.truth.is_some() {
        header.push("label".into());
    }
    let csv_err = |e: csv::Error| Error::Format {
        path: "<dataset csv>".into(),
        message: e.to_string(),
    };
    w.write_record(&header).map_err(csv_err)?;
    for (i, p) in data.points.iter().enumerate() {
        let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        if let Some(t) = &data.truth {
            row.push((t.labels[i] + 1).to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format {
        path: "<dataset csv>".into(),
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_dataset(data: &Dataset<f64>, csv_path: &Path, truth_path: Option<&Path>) -> Result<()> {
    write_text(csv_path, &dataset_csv(data)?)?;
    if let (Some(path), Some(truth)) = (truth_path, &data.truth) {
        let sidecar = TruthJson {
            seed: data.seed.unwrap_or(0),
            n: data.len(),
            params: ParamsJson::from_params(&truth.params),
        };
        write_json(path, &sidecar)?;
    }
    Ok(())
}

/// Read a dataset CSV; a `label` column is returned separately (zero-based).
pub fn read_dataset_csv(path: &Path) -> Result<(Dataset<f64>, Option<Vec<usize>>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::io(path, e))?;
    let headers = rdr.headers().map_err(|e| Error::format(path, e))?.clone();
    let label_col = headers.iter().position(|h| h == "label");
    let value_cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("y_"))
        .map(|(j, _)| j)
        .collect();
    if value_cols.is_empty() {
        return Err(Error::format(path, "no y_* columns"));
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e))?;
        let vals = value_cols
            .iter()
            .map(|&j| {
                rec.get(j)
                    .unwrap_or("")
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::format(path, format!("row {}: {e}", row + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        points.push(DVector::from_vec(vals));
        if let Some(j) = label_col {
            let l: usize = rec
                .get(j)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|e| Error::format(path, format!("row {} label: {e}", row + 1)))?;
            if l == 0 {
                return Err(Error::format(path, format!("row {}: labels are one-based", row + 1)));
            }
            labels.push(l - 1);
        }
    }
    let data = Dataset::new(points)?;
    Ok((data, label_col.map(|_| labels)))
}

/// Read a dataset and, when given, its truth sidecar.
pub fn read_dataset(csv_path: &Path, truth_path: Option<&Path>) -> Result<Dataset<f64>> {
    let (mut data, labels) = read_dataset_csv(csv_path)?;
    if let Some(tp) = truth_path {
        let sidecar: TruthJson = read_json(tp)?;
        let params = sidecar.params.to_params()?;
        let labels = labels.ok_or_else(|| Error::format(csv_path, "truth given but no label column"))?;
        data.truth = Some(Truth { params, labels });
        data.seed = Some(sidecar.seed);
        data.validate()?;
    }
    Ok(data)
}

/// Trace CSV text with the fixed header.
pub fn trace_csv(trace: &FitTrace<f64>) -> String {
    let mut out = TRACE_HEADER.join(",");
    out.push('\n');
    for r in &trace.records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.iteration, r.objective, r.beta, r.gamma, r.beads, r.wall_ms
        ));
    }
    out
}

pub fn write_trace(trace: &FitTrace<f64>, path: &Path) -> Result<()> {
    write_text(path, &trace_csv(trace))
}

pub fn write_params(params: &MfaParams<f64>, path: &Path) -> Result<()> {
    write_json(path, &ParamsJson::from_params(params))
}

pub fn read_params(path: &Path) -> Result<MfaParams<f64>> {
    read_json::<ParamsJson>(path)?.to_params()
}
