//! File formats: raw irregular series CSV, regular-grid resampling, model
//! JSON files and benchmark reports.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SldsError};
use crate::evaluation::BenchmarkResult;
use crate::model::{ModelParams, ObservationSequence};

pub const CSV_HEADER: [&str; 4] = ["series_id", "variable", "timestamp", "value"];
/// Eight hours.
pub const DEFAULT_STEP_SECONDS: i64 = 28_800;
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// One multivariate series observed at irregular, per-variable timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct IrregularSeries {
    pub series_id: String,
    pub variables: Vec<String>,
    /// `points[k]` holds `(timestamp, value)` of `variables[k]`, strictly increasing in time.
    pub points: Vec<Vec<(i64, f64)>>,
}

pub fn load_raw_series(path: impl AsRef<Path>) -> Result<Vec<IrregularSeries>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| SldsError::Io(e).context(path.display()))?;
    parse_raw_series(file).map_err(|e| e.context(path.display()))
}

/// `(series, variable)` to `(timestamp, value, line)` in input order.
type RawPoints = HashMap<(String, String), Vec<(i64, f64, u64)>>;

/// Parse the `series_id,variable,timestamp,value` schema.
///
/// Series keep their order of first appearance; variables are ordered by
/// first appearance over the whole file and every series must carry all of
/// them with at least two points each.
pub fn parse_raw_series(reader: impl Read) -> Result<Vec<IrregularSeries>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| SldsError::data(format!("reading header: {e}")))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(SldsError::data("no records"));
    }
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols != CSV_HEADER {
        return Err(SldsError::data(format!(
            "expected header `{}`, found `{}`",
            CSV_HEADER.join(","),
            cols.join(",")
        )));
    }

    let mut series_order: Vec<String> = Vec::new();
    let mut var_order: Vec<String> = Vec::new();
    let mut raw: RawPoints = HashMap::new();
    let mut seen: HashMap<(String, String, i64), u64> = HashMap::new();
    let mut records = 0usize;

    for rec in rdr.records() {
        let rec = rec.map_err(|e| SldsError::data(format!("malformed CSV: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(SldsError::data(format!("line {line}: expected 4 fields, found {}", rec.len())));
        }
        let sid = rec[0].trim().to_string();
        let var = rec[1].trim().to_string();
        if sid.is_empty() || var.is_empty() {
            return Err(SldsError::data(format!("line {line}: empty series_id or variable")));
        }
        let ts: i64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| SldsError::data(format!("line {line}: unparseable timestamp `{}`", &rec[2])))?;
        let value: f64 = rec[3]
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| SldsError::data(format!("line {line}: unparseable value `{}`", &rec[3])))?;
        if let Some(prev) = seen.insert((sid.clone(), var.clone(), ts), line) {
            return Err(SldsError::data(format!(
                "duplicate (series {sid}, variable {var}, timestamp {ts}) at lines {prev} and {line}"
            )));
        }
        if !series_order.contains(&sid) {
            series_order.push(sid.clone());
        }
        if !var_order.contains(&var) {
            var_order.push(var.clone());
        }
        raw.entry((sid, var)).or_default().push((ts, value, line));
        records += 1;
    }
    if records == 0 {
        return Err(SldsError::data("no records"));
    }

    series_order
        .into_iter()
        .map(|sid| {
            let points = var_order
                .iter()
                .map(|var| {
                    let mut pts = raw.remove(&(sid.clone(), var.clone())).unwrap_or_default();
                    if pts.len() < 2 {
                        return Err(SldsError::data(format!(
                            "series {sid}, variable {var}: {} points, at least 2 required",
                            pts.len()
                        )));
                    }
                    pts.sort_by_key(|p| p.0);
                    Ok(pts.into_iter().map(|(t, v, _)| (t, v)).collect())
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(IrregularSeries { series_id: sid, variables: var_order.clone(), points })
        })
        .collect()
}

/// Grid times over the intersection of the per-variable spans.
pub fn resample_grid(series: &IrregularSeries, step_seconds: i64) -> Result<Vec<i64>> {
    if step_seconds <= 0 {
        return Err(SldsError::invalid("step must be a positive number of seconds"));
    }
    if series.points.is_empty() || series.points.iter().any(|p| p.is_empty()) {
        return Err(SldsError::data(format!("series {}: no points", series.series_id)));
    }
    let start = series.points.iter().map(|p| p[0].0).max().unwrap();
    let end = series.points.iter().map(|p| p[p.len() - 1].0).min().unwrap();
    if start > end {
        return Err(SldsError::data(format!(
            "series {}: variables share no common observed time window",
            series.series_id
        )));
    }
    let grid: Vec<i64> = (0..).map(|k| start + k * step_seconds).take_while(|t| *t <= end).collect();
    if grid.len() < 2 {
        return Err(SldsError::data(format!(
            "series {}: common window yields {} grid point(s), at least 2 required",
            series.series_id,
            grid.len()
        )));
    }
    Ok(grid)
}

fn interpolate(points: &[(i64, f64)], t: i64) -> f64 {
    let k = points.partition_point(|p| p.0 < t);
    if k < points.len() && points[k].0 == t {
        return points[k].1;
    }
    // t lies strictly inside (points[k-1].0, points[k].0) on the intersection window
    let (t0, v0) = points[k - 1];
    let (t1, v1) = points[k];
    let w = (t - t0) as f64 / (t1 - t0) as f64;
    v0 + w * (v1 - v0)
}

/// Linear interpolation of every variable onto a regular grid (no extrapolation).
pub fn resample_interpolate(series: &IrregularSeries, step_seconds: i64) -> Result<ObservationSequence> {
    let grid = resample_grid(series, step_seconds)?;
    let values = DMatrix::from_fn(grid.len(), series.points.len(), |r, c| interpolate(&series.points[c], grid[r]));
    Ok(ObservationSequence::with_id(values, series.series_id.clone()))
}

/// Load a CSV and resample every series.
pub fn load_sequences(path: impl AsRef<Path>, step_seconds: i64) -> Result<Vec<ObservationSequence>> {
    load_raw_series(path)?
        .iter()
        .map(|s| resample_interpolate(s, step_seconds))
        .collect()
}

/// Write regular series in the raw CSV schema, observation `t` at `t * step_seconds`.
pub fn write_sequences_csv(
    path: impl AsRef<Path>,
    sequences: &[ObservationSequence],
    variables: &[String],
    step_seconds: i64,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())
        .map_err(|e| SldsError::data(format!("{}: {e}", path.as_ref().display())))?;
    let io = |e: csv::Error| SldsError::data(format!("writing CSV: {e}"));
    w.write_record(CSV_HEADER).map_err(io)?;
    for (i, s) in sequences.iter().enumerate() {
        if s.dim() != variables.len() {
            return Err(SldsError::invalid("variable names do not match the observation dimension"));
        }
        let id = s.series_id.clone().unwrap_or_else(|| format!("s{i}"));
        for t in 0..s.len() {
            for (k, var) in variables.iter().enumerate() {
                w.write_record([
                    id.as_str(),
                    var.as_str(),
                    &(t as i64 * step_seconds).to_string(),
                    &s.values[(t, k)].to_string(),
                ])
                .map_err(io)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// SHA-256 over the shapes and values of a dataset.
pub fn data_fingerprint(sequences: &[ObservationSequence]) -> String {
    let mut h = Sha256::new();
    h.update((sequences.len() as u64).to_le_bytes());
    for s in sequences {
        h.update((s.len() as u64).to_le_bytes());
        h.update((s.dim() as u64).to_le_bytes());
        for t in 0..s.len() {
            for v in s.values.row(t).iter() {
                h.update(v.to_le_bytes());
            }
        }
    }
    format!("{:x}", h.finalize())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub beta: f64,
    pub iterations: usize,
    pub final_objective: Option<f64>,
    pub data_fingerprint: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ModelFile {
    pub format_version: u32,
    pub l: usize,
    pub d: usize,
    pub A: Vec<Vec<f64>>,
    pub C: Vec<Vec<f64>>,
    pub Q: Vec<Vec<f64>>,
    pub R: Vec<Vec<f64>>,
    pub pi1: Vec<f64>,
    pub V1: Vec<Vec<f64>>,
    pub beta: f64,
    pub fit: FitMetadata,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitMetadata {
    pub iterations: usize,
    pub final_objective: Option<f64>,
    pub data_fingerprint: String,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

fn matrix(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(SldsError::data(format!("{name} is not {nrows}x{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl ModelFile {
    pub fn new(params: &ModelParams, meta: &ModelMeta) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            l: params.state_dim(),
            d: params.obs_dim(),
            A: rows(&params.a),
            C: rows(&params.c),
            Q: rows(&params.q),
            R: rows(&params.r),
            pi1: params.pi1.iter().cloned().collect(),
            V1: rows(&params.v1),
            beta: meta.beta,
            fit: FitMetadata {
                iterations: meta.iterations,
                final_objective: meta.final_objective.filter(|v| v.is_finite()),
                data_fingerprint: meta.data_fingerprint.clone(),
            },
        }
    }

    /// Check the version, shapes and parameter invariants.
    pub fn into_params(self) -> Result<(ModelParams, ModelMeta)> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(SldsError::data(format!(
                "unsupported model format_version {} (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let (l, d) = (self.l, self.d);
        if self.pi1.len() != l {
            return Err(SldsError::data(format!("pi1 has length {} not {l}", self.pi1.len())));
        }
        let params = ModelParams {
            a: matrix("A", &self.A, l, l)?,
            c: matrix("C", &self.C, d, l)?,
            q: matrix("Q", &self.Q, l, l)?,
            r: matrix("R", &self.R, d, d)?,
            pi1: DVector::from_vec(self.pi1),
            v1: matrix("V1", &self.V1, l, l)?,
        };
        let report = crate::model::validate_params(&params);
        if !report.is_ok() {
            return Err(SldsError::data(format!("invalid model: {report}")));
        }
        let meta = ModelMeta {
            beta: self.beta,
            iterations: self.fit.iterations,
            final_objective: self.fit.final_objective,
            data_fingerprint: self.fit.data_fingerprint,
        };
        Ok((params, meta))
    }
}

/// JSON encoding; floats use the shortest representation that round-trips exactly.
pub fn model_to_json(params: &ModelParams, meta: &ModelMeta) -> Result<String> {
    serde_json::to_string_pretty(&ModelFile::new(params, meta))
        .map_err(|e| SldsError::data(format!("encoding model: {e}")))
}

pub fn model_from_json(text: &str) -> Result<(ModelParams, ModelMeta)> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| SldsError::data(format!("parsing model file: {e}")))?;
    file.into_params()
}

pub fn save_model(params: &ModelParams, meta: &ModelMeta, path: impl AsRef<Path>) -> Result<()> {
    let mut text = model_to_json(params, meta)?;
    text.push('\n');
    fs::write(path.as_ref(), text).map_err(|e| SldsError::Io(e).context(path.as_ref().display()))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(ModelParams, ModelMeta)> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| SldsError::Io(e).context(path.as_ref().display()))?;
    model_from_json(&text).map_err(|e| e.context(path.as_ref().display()))
}

pub const TABLE_FILE: &str = "amae_table.csv";
pub const LONG_FILE: &str = "amae_repeats.csv";
pub const PLOT_FILE: &str = "amae_plot.csv";
pub const RESULT_FILE: &str = "benchmark.json";

fn fmt_opt(v: Option<f64>) -> String {
    v.filter(|x| x.is_finite()).map(|x| x.to_string()).unwrap_or_default()
}

/// Write the Table-1 style summary (one row per method and beta, one column
/// per state size), the per-repeat long form, plot data and a JSON dump.
pub fn write_report(result: &BenchmarkResult, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| SldsError::Io(e).context(dir.display()))?;
    let states = &result.config.state_sizes;

    let table_path = dir.join(TABLE_FILE);
    let mut table = String::from("method,beta");
    for l in states {
        table.push_str(&format!(",{l}"));
    }
    table.push('\n');
    let mut betas: Vec<f64> = Vec::new();
    for c in &result.cells {
        if !betas.contains(&c.beta) {
            betas.push(c.beta);
        }
    }
    for beta in &betas {
        table.push_str(&format!("{},{beta}", crate::evaluation::Method::for_beta(*beta).label()));
        for &l in states {
            let v = result.cell(l, *beta).filter(|c| c.ok()).map(|c| c.mean);
            table.push_str(&format!(",{}", fmt_opt(v)));
        }
        table.push('\n');
    }
    if !result.selections.is_empty() {
        table.push_str("SLDS,selected");
        for &l in states {
            table.push_str(&format!(",{}", fmt_opt(result.best_slds(l).filter(|c| c.ok()).map(|c| c.mean))));
        }
        table.push('\n');
    }

    let long_path = dir.join(LONG_FILE);
    let mut long = String::from("method,beta,states,repeat,amae\n");
    for c in result.cells.iter().filter(|c| c.ok()) {
        for (r, v) in c.amae.iter().enumerate() {
            long.push_str(&format!("{},{},{},{},{}\n", c.method.label(), c.beta, c.states, r, v));
        }
    }

    let plot_path = dir.join(PLOT_FILE);
    let mut plot = String::from("method,beta,states,mean_amae,std_amae\n");
    for c in result.cells.iter().filter(|c| c.ok()) {
        plot.push_str(&format!("{},{},{},{},{}\n", c.method.label(), c.beta, c.states, c.mean, c.std));
    }

    let json_path = dir.join(RESULT_FILE);
    let json = serde_json::to_string_pretty(result)
        .map_err(|e| SldsError::data(format!("encoding benchmark result: {e}")))?;

    for (path, body) in [(&table_path, table), (&long_path, long), (&plot_path, plot), (&json_path, json)] {
        let mut f = fs::File::create(path).map_err(|e| SldsError::Io(e).context(path.display()))?;
        f.write_all(body.as_bytes())?;
    }
    Ok(vec![table_path, long_path, plot_path, json_path])
}

/// One row of the long-form report.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct RepeatRecord {
    pub method: String,
    pub beta: f64,
    pub states: usize,
    pub repeat: usize,
    pub amae: f64,
}

pub fn read_long_form(path: impl AsRef<Path>) -> Result<Vec<RepeatRecord>> {
    let mut rdr = csv::Reader::from_path(path.as_ref())
        .map_err(|e| SldsError::data(format!("{}: {e}", path.as_ref().display())))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| SldsError::data(format!("long-form report: {e}"))))
        .collect()
}
