//! File formats: data CSV, parameter / model JSON, trace and run tables.
//!
//! Data CSV: a header row, then one row per unit. The first `J` columns hold
//! 1-based integer response codes, the remaining columns are numeric
//! covariates. An intercept column can be prepended at read time.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LcError, Result};
use crate::estimators::EstimatorConfig;
use crate::harness::{BenchmarkReport, CovariateSpec, RunRecord, TrueModel};
use crate::model::{Dataset, ModelParams};

/// How to interpret the columns of a data CSV.
#[derive(Debug, Clone, Default)]
pub struct CsvLayout {
    /// Number of leading response columns.
    pub n_items: usize,
    /// Declared category counts: one value for every item, or one per item.
    /// Inferred from the largest observed code (at least 2) when absent.
    pub categories: Option<Vec<usize>>,
    /// Prepend a constant column to the design.
    pub intercept: bool,
}

fn csv_err(e: csv::Error) -> LcError {
    let row = e.position().map_or(0, |p| p.line() as usize);
    LcError::Parse {
        row,
        column: 0,
        message: e.to_string(),
    }
}

/// Reads a data CSV. Parse errors carry the 1-based data row (header excluded)
/// and 1-based column.
pub fn read_dataset_csv<R: Read>(reader: R, layout: &CsvLayout) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let n_cols = headers.len();
    let j = layout.n_items;
    if j == 0 || j > n_cols {
        return Err(LcError::Parse {
            row: 0,
            column: 0,
            message: format!("expected {j} response columns, header has {n_cols} columns"),
        });
    }
    let declared: Option<Vec<usize>> = match &layout.categories {
        None => None,
        Some(c) if c.len() == 1 => Some(vec![c[0]; j]),
        Some(c) if c.len() == j => Some(c.clone()),
        Some(c) => {
            return Err(LcError::Invalid(format!(
                "{} category counts given for {j} response columns",
                c.len()
            )))
        }
    };
    let n_cov = n_cols - j;
    let p = n_cov + usize::from(layout.intercept);
    if p == 0 {
        return Err(LcError::Invalid(
            "no covariate columns; add covariates or use the intercept option".into(),
        ));
    }

    let mut codes = Vec::new();
    let mut design = Vec::new();
    let mut n = 0;
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(csv_err)?;
        if record.len() != n_cols {
            return Err(LcError::Parse {
                row,
                column: record.len().min(n_cols) + 1,
                message: format!("expected {n_cols} fields, found {}", record.len()),
            });
        }
        for (c, field) in record.iter().take(j).enumerate() {
            let code: usize = field.parse().map_err(|_| LcError::Parse {
                row,
                column: c + 1,
                message: format!(
                    "response '{field}' in column '{}' is not a positive integer",
                    &headers[c]
                ),
            })?;
            let upper = declared.as_ref().map(|d| d[c]);
            if code == 0 || upper.is_some_and(|k| code > k) {
                return Err(LcError::Parse {
                    row,
                    column: c + 1,
                    message: format!(
                        "response code {code} in column '{}' outside 1..={}",
                        &headers[c],
                        upper.map_or("K".to_string(), |k| k.to_string())
                    ),
                });
            }
            codes.push(code);
        }
        if layout.intercept {
            design.push(1.0);
        }
        for (c, field) in record.iter().enumerate().skip(j) {
            let v: f64 = field
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| LcError::Parse {
                    row,
                    column: c + 1,
                    message: format!(
                        "covariate '{field}' in column '{}' is not a finite number",
                        &headers[c]
                    ),
                })?;
            design.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(LcError::Parse {
            row: 1,
            column: 1,
            message: "no data rows".into(),
        });
    }
    let counts = declared.unwrap_or_else(|| {
        (0..j)
            .map(|c| (0..n).map(|i| codes[i * j + c]).max().unwrap_or(0).max(2))
            .collect()
    });
    let zero_based = codes.into_iter().map(|c| c - 1).collect();
    Dataset::from_codes(
        n,
        zero_based,
        counts,
        DMatrix::from_row_slice(n, p, &design),
    )
}

pub fn read_dataset_file(path: &Path, layout: &CsvLayout) -> Result<Dataset> {
    let file =
        std::fs::File::open(path).map_err(|e| LcError::Io(format!("{}: {e}", path.display())))?;
    read_dataset_csv(file, layout)
}

/// Writes responses as `y1..yJ` and every design column as `x1..xP`.
pub fn write_dataset_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = (1..=data.n_items())
        .map(|j| format!("y{j}"))
        .chain((1..=data.n_covariates()).map(|p| format!("x{p}")))
        .collect();
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.n_units() {
        let row: Vec<String> = data
            .unit_codes(i)
            .iter()
            .map(|c| (c + 1).to_string())
            .chain(data.design().row(i).iter().map(|v| v.to_string()))
            .collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Serialized form of [`ModelParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub n_classes: usize,
    pub category_counts: Vec<usize>,
    /// `R-1` rows of `P` coefficients; the reference class is omitted.
    pub beta: Vec<Vec<f64>>,
    /// `pi[r][j][k]` with `k` the 0-based position of category `k+1`.
    pub pi: Vec<Vec<Vec<f64>>>,
}

impl From<&ModelParams> for ParamsFile {
    fn from(p: &ModelParams) -> Self {
        ParamsFile {
            n_classes: p.n_classes,
            category_counts: p.pi[0].iter().map(Vec::len).collect(),
            beta: p
                .beta
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            pi: p.pi.clone(),
        }
    }
}

impl ParamsFile {
    /// `n_covariates` sizes the empty `beta` of a one-class model.
    pub fn into_params(self, n_covariates: Option<usize>) -> Result<ModelParams> {
        let p = self
            .beta
            .first()
            .map(Vec::len)
            .or(n_covariates)
            .unwrap_or(0);
        if self.beta.iter().any(|row| row.len() != p) {
            return Err(LcError::Shape("beta rows differ in length".into()));
        }
        let flat: Vec<f64> = self.beta.iter().flatten().copied().collect();
        let beta = DMatrix::from_row_slice(self.beta.len(), p, &flat);
        let params = ModelParams::new(self.n_classes, beta, self.pi)?;
        let counts: Vec<usize> = params.pi[0].iter().map(Vec::len).collect();
        if counts != self.category_counts {
            return Err(LcError::Shape(format!(
                "category_counts {:?} disagree with pi {:?}",
                self.category_counts, counts
            )));
        }
        Ok(params)
    }
}

pub fn write_params_json<W: Write>(params: &ModelParams, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, &ParamsFile::from(params))
        .map_err(|e| LcError::Io(e.to_string()))
}

pub fn read_params_json<R: Read>(reader: R, n_covariates: Option<usize>) -> Result<ModelParams> {
    let file: ParamsFile =
        serde_json::from_reader(reader).map_err(|e| LcError::Invalid(e.to_string()))?;
    file.into_params(n_covariates)
}

/// Serialized form of [`TrueModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModelFile {
    pub params: ParamsFile,
    pub covariates: Vec<CovariateSpec>,
}

impl From<&TrueModel> for TrueModelFile {
    fn from(m: &TrueModel) -> Self {
        TrueModelFile {
            params: ParamsFile::from(&m.params),
            covariates: m.covariates.clone(),
        }
    }
}

pub fn read_true_model_json<R: Read>(reader: R) -> Result<TrueModel> {
    let file: TrueModelFile =
        serde_json::from_reader(reader).map_err(|e| LcError::Invalid(e.to_string()))?;
    let p = file.covariates.len();
    TrueModel::new(file.params.into_params(Some(p))?, file.covariates)
}

pub fn write_true_model_json<W: Write>(model: &TrueModel, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, &TrueModelFile::from(model))
        .map_err(|e| LcError::Io(e.to_string()))
}

/// Two-column `iteration,loglik` table; iteration 0 is the starting value.
pub fn write_trace_csv<W: Write>(trace: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "loglik"]).map_err(csv_err)?;
    for (t, ll) in trace.iter().enumerate() {
        w.write_record([t.to_string(), ll.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(reader: R) -> Result<Vec<f64>> {
    #[derive(Deserialize)]
    struct Row {
        #[allow(dead_code)]
        iteration: usize,
        loglik: f64,
    }
    csv::Reader::from_reader(reader)
        .deserialize::<Row>()
        .map(|r| r.map(|r| r.loglik).map_err(csv_err))
        .collect()
}

/// `unit,class` table with 1-based indices.
pub fn write_labels_csv<W: Write>(labels: &[usize], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["unit", "class"]).map_err(csv_err)?;
    for (i, s) in labels.iter().enumerate() {
        w.write_record([(i + 1).to_string(), (s + 1).to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Returns 0-based labels.
pub fn read_labels_csv<R: Read>(reader: R) -> Result<Vec<usize>> {
    #[derive(Deserialize)]
    struct Row {
        #[allow(dead_code)]
        unit: usize,
        class: usize,
    }
    csv::Reader::from_reader(reader)
        .deserialize::<Row>()
        .map(|r| {
            let r = r.map_err(csv_err)?;
            r.class
                .checked_sub(1)
                .ok_or_else(|| LcError::Invalid("class labels are 1-based".into()))
        })
        .collect()
}

pub fn write_report_json<W: Write>(report: &BenchmarkReport, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, report).map_err(|e| LcError::Io(e.to_string()))
}

pub fn read_report_json<R: Read>(reader: R) -> Result<BenchmarkReport> {
    serde_json::from_reader(reader).map_err(|e| LcError::Invalid(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunRow {
    run: usize,
    seed: u64,
    algorithm: String,
    loglik: Option<f64>,
    iterations: Option<usize>,
    decay_count: Option<usize>,
    converged: bool,
    local_mode: bool,
    wall_time: f64,
    error: Option<String>,
}

/// Flat per-run table, one row per (run, algorithm), including wall times.
pub fn write_runs_csv<W: Write>(runs: &[RunRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in runs {
        w.serialize(RunRow {
            run: r.run,
            seed: r.seed,
            algorithm: r.algorithm.to_string(),
            loglik: r.loglik,
            iterations: r.iterations,
            decay_count: r.decay_count,
            converged: r.converged,
            local_mode: r.local_mode,
            wall_time: r.wall_time,
            error: r.error.clone(),
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs_csv<R: Read>(reader: R) -> Result<Vec<RunRecord>> {
    csv::Reader::from_reader(reader)
        .deserialize::<RunRow>()
        .map(|row| {
            let row = row.map_err(csv_err)?;
            Ok(RunRecord {
                run: row.run,
                seed: row.seed,
                algorithm: row.algorithm.parse()?,
                loglik: row.loglik,
                iterations: row.iterations,
                decay_count: row.decay_count,
                converged: row.converged,
                local_mode: row.local_mode,
                error: row.error,
                wall_time: row.wall_time,
            })
        })
        .collect()
}

/// Everything needed to reproduce a command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub inputs: Vec<String>,
    pub config: Option<EstimatorConfig>,
    pub seeds: Vec<u64>,
    pub version: String,
    pub outputs: Vec<String>,
}

pub fn write_manifest_json<W: Write>(manifest: &RunManifest, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, manifest).map_err(|e| LcError::Io(e.to_string()))
}

pub fn read_manifest_json<R: Read>(reader: R) -> Result<RunManifest> {
    serde_json::from_reader(reader).map_err(|e| LcError::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "a,b,party\n1,2,3\n2,4,1\n1,1,7\n";

    #[test]
    fn reads_layout_with_intercept() {
        let layout = CsvLayout {
            n_items: 2,
            categories: Some(vec![4]),
            intercept: true,
        };
        let d = read_dataset_csv(CSV.as_bytes(), &layout).unwrap();
        assert_eq!(d.n_units(), 3);
        assert_eq!(d.category_counts(), &[4, 4]);
        assert_eq!(
            d.design().row(1).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 1.0]
        );
        assert_eq!(d.code(1, 1), 3);
    }

    #[test]
    fn infers_category_counts() {
        let layout = CsvLayout {
            n_items: 2,
            categories: None,
            intercept: false,
        };
        let d = read_dataset_csv(CSV.as_bytes(), &layout).unwrap();
        assert_eq!(d.category_counts(), &[2, 4]);
        assert_eq!(d.n_covariates(), 1);
    }

    #[test]
    fn out_of_range_code_names_row_and_column() {
        let layout = CsvLayout {
            n_items: 2,
            categories: Some(vec![4]),
            intercept: true,
        };
        let err = read_dataset_csv("a,b,x\n1,2,0\n1,5,1\n".as_bytes(), &layout).unwrap_err();
        match err {
            LcError::Parse { row, column, .. } => assert_eq!((row, column), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
        let err = read_dataset_csv("a,b,x\n1,2,zz\n".as_bytes(), &layout).unwrap_err();
        assert!(matches!(
            err,
            LcError::Parse {
                row: 1,
                column: 3,
                ..
            }
        ));
    }

    #[test]
    fn dataset_round_trip() {
        let layout = CsvLayout {
            n_items: 2,
            categories: Some(vec![4]),
            intercept: true,
        };
        let d = read_dataset_csv(CSV.as_bytes(), &layout).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&d, &mut buf).unwrap();
        let back = read_dataset_csv(
            buf.as_slice(),
            &CsvLayout {
                n_items: 2,
                categories: Some(vec![4]),
                intercept: false,
            },
        )
        .unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn params_reject_bad_simplex() {
        let json = r#"{"n_classes":1,"category_counts":[2],"beta":[],"pi":[[[0.7,0.7]]]}"#;
        assert!(read_params_json(json.as_bytes(), Some(1)).is_err());
    }

    #[test]
    fn params_round_trip_exactly() {
        let beta = DMatrix::from_row_slice(1, 2, &[0.1 + 0.2, -1.0 / 3.0]);
        let pi = vec![vec![vec![0.3, 0.7]], vec![vec![1.0 / 3.0, 2.0 / 3.0]]];
        let params = ModelParams::new(2, beta, pi).unwrap();
        let mut buf = Vec::new();
        write_params_json(&params, &mut buf).unwrap();
        assert_eq!(read_params_json(buf.as_slice(), None).unwrap(), params);
    }
}
