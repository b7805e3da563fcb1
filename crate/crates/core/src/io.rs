//! File formats and result writers: the stream directory format, graph edge
//! lists, run configuration, state snapshots and the CSV/JSON/NDJSON outputs.
//!
//! A stream lives in one directory: a JSON manifest declaring the shape,
//! region ids and day order, plus one CSV block per day holding base
//! predictions and actuals. Plain text keeps fixtures diffable and writable
//! by hand. Values are serialized with 17 significant digits, so every f64
//! round-trips losslessly.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{DayRecord, DayTrace, EngineConfig, OgdOrder, Strategy};
use crate::error::{Error, Result};
use crate::smoothing::{Padding, RegionGraph};
use crate::synth::{BaseSignal, NoiseKind, WorldConfig, WorldTrace};
use crate::tensor::{DayTensor, LossReduction, MetricReport, TensorShape};
use crate::theory::{RegretAudit, TheoremTarget, UcurveResult};

/// Serializes one value with 17 significant digits; parses back bit-exact.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

// ---------------------------------------------------------------------------
// Stream directory format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DayEntry {
    pub index: u64,
    pub file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamManifest {
    pub version: u32,
    pub hours: usize,
    pub channels: usize,
    pub regions: Vec<String>,
    pub days: Vec<DayEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

impl StreamManifest {
    pub fn shape(&self) -> Result<TensorShape> {
        TensorShape::new(self.hours, self.regions.len(), self.channels)
    }
}

/// Writes one day's base predictions and actuals as a CSV block.
pub fn write_day_block<W: Write>(
    w: &mut W,
    region_ids: &[String],
    base_pred: &DayTensor,
    actual: &DayTensor,
) -> std::io::Result<()> {
    let shape = base_pred.shape();
    write!(w, "hour,region")?;
    for c in 0..shape.channels {
        write!(w, ",pred_{c}")?;
    }
    for c in 0..shape.channels {
        write!(w, ",actual_{c}")?;
    }
    writeln!(w)?;
    for h in 0..shape.hours {
        for (r, id) in region_ids.iter().enumerate() {
            write!(w, "{h},{id}")?;
            for c in 0..shape.channels {
                write!(w, ",{}", format_value(base_pred.get(h, r, c)))?;
            }
            for c in 0..shape.channels {
                write!(w, ",{}", format_value(actual.get(h, r, c)))?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Parses one day block, validating the hour/region layout against the
/// manifest.
pub fn read_day_block<R: BufRead>(
    r: R,
    shape: TensorShape,
    region_ids: &[String],
    path: &Path,
) -> Result<(DayTensor, DayTensor)> {
    let mut pred = vec![0.0; shape.len()];
    let mut actual = vec![0.0; shape.len()];
    let mut data_row = 0usize;
    let mut saw_header = false;
    for (line_no, line) in r.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let line_no = line_no + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !saw_header {
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 2 + 2 * shape.channels {
            return Err(parse_err(
                path,
                line_no,
                format!(
                    "expected {} fields, found {}",
                    2 + 2 * shape.channels,
                    fields.len()
                ),
            ));
        }
        let expected_hour = data_row / shape.regions;
        let expected_region = data_row % shape.regions;
        if expected_hour >= shape.hours {
            return Err(parse_err(path, line_no, "more rows than hours × regions"));
        }
        let hour: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad hour {:?}", fields[0])))?;
        if hour != expected_hour {
            return Err(parse_err(
                path,
                line_no,
                format!("expected hour {expected_hour}, found {hour}"),
            ));
        }
        if fields[1] != region_ids[expected_region] {
            return Err(parse_err(
                path,
                line_no,
                format!(
                    "expected region {:?}, found {:?}",
                    region_ids[expected_region], fields[1]
                ),
            ));
        }
        for c in 0..shape.channels {
            pred[shape.index(hour, expected_region, c)] = fields[2 + c]
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("bad value {:?}", fields[2 + c])))?;
        }
        for c in 0..shape.channels {
            let f = fields[2 + shape.channels + c];
            actual[shape.index(hour, expected_region, c)] = f
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("bad value {f:?}")))?;
        }
        data_row += 1;
    }
    if data_row != shape.hours * shape.regions {
        return Err(parse_err(
            path,
            0,
            format!(
                "expected {} data rows, found {data_row}",
                shape.hours * shape.regions
            ),
        ));
    }
    Ok((DayTensor::new(shape, pred)?, DayTensor::new(shape, actual)?))
}

fn day_file_name(index: u64) -> String {
    format!("day_{index:05}.csv")
}

/// Saves a stream of day records as a manifest plus per-day CSV blocks.
pub fn save_stream(
    dir: &Path,
    records: &[DayRecord],
    region_ids: &[String],
    generated_at: Option<&str>,
) -> Result<()> {
    if records.is_empty() {
        return Err(Error::EmptyInput("stream to save"));
    }
    let shape = records[0].shape();
    if region_ids.len() != shape.regions {
        return Err(Error::invalid(format!(
            "{} region ids for {} regions",
            region_ids.len(),
            shape.regions
        )));
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let manifest = StreamManifest {
        version: 1,
        hours: shape.hours,
        channels: shape.channels,
        regions: region_ids.to_vec(),
        days: records
            .iter()
            .map(|r| DayEntry {
                index: r.day_index,
                file: day_file_name(r.day_index),
            })
            .collect(),
        generated_at: generated_at.map(str::to_string),
    };
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
        path: manifest_path.clone(),
        source: e,
    })?;
    fs::write(&manifest_path, json).map_err(|e| io_err(&manifest_path, e))?;
    for record in records {
        let path = dir.join(day_file_name(record.day_index));
        let mut buf = Vec::new();
        write_day_block(&mut buf, region_ids, &record.base_pred, &record.actual)
            .map_err(|e| io_err(&path, e))?;
        fs::write(&path, buf).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

/// A loaded stream: records plus the region ids that survived filtering.
#[derive(Debug, Clone)]
pub struct LoadedStream {
    pub records: Vec<DayRecord>,
    pub region_ids: Vec<String>,
    /// Region ids dropped by the mean-demand floor.
    pub dropped_regions: Vec<String>,
}

/// Loads a stream directory. With `floor = Some(f)`, regions whose mean
/// actual demand over the whole stream is below `f` are dropped.
pub fn load_stream(dir: &Path, floor: Option<f64>) -> Result<LoadedStream> {
    let manifest_path = dir.join("manifest.json");
    let raw = fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let manifest: StreamManifest = serde_json::from_str(&raw).map_err(|e| Error::Json {
        path: manifest_path.clone(),
        source: e,
    })?;
    let shape = manifest.shape()?;
    if manifest.days.is_empty() {
        return Err(Error::EmptyInput("stream manifest days"));
    }
    let mut last: Option<u64> = None;
    let mut records = Vec::with_capacity(manifest.days.len());
    for entry in &manifest.days {
        if let Some(prev) = last {
            if entry.index <= prev {
                return Err(Error::DayOrder {
                    previous: prev,
                    found: entry.index,
                });
            }
        }
        last = Some(entry.index);
        let path = dir.join(&entry.file);
        let file = fs::File::open(&path).map_err(|e| io_err(&path, e))?;
        let (pred, actual) = read_day_block(BufReader::new(file), shape, &manifest.regions, &path)?;
        records.push(DayRecord::new(entry.index, pred, actual)?);
    }

    let (records, region_ids, dropped_regions) = match floor {
        None => (records, manifest.regions, Vec::new()),
        Some(f) => filter_regions(records, &manifest.regions, f)?,
    };
    Ok(LoadedStream {
        records,
        region_ids,
        dropped_regions,
    })
}

/// Drops regions whose mean actual demand is below the floor, rebuilding
/// every tensor over the surviving regions.
fn filter_regions(
    records: Vec<DayRecord>,
    region_ids: &[String],
    floor: f64,
) -> Result<(Vec<DayRecord>, Vec<String>, Vec<String>)> {
    let shape = records[0].shape();
    let mut sums = vec![0.0f64; shape.regions];
    for record in &records {
        for h in 0..shape.hours {
            for (r, sum) in sums.iter_mut().enumerate() {
                for c in 0..shape.channels {
                    *sum += record.actual.get(h, r, c);
                }
            }
        }
    }
    let per_region = (records.len() * shape.hours * shape.channels) as f64;
    let keep: Vec<usize> = (0..shape.regions)
        .filter(|&r| sums[r] / per_region >= floor)
        .collect();
    if keep.is_empty() {
        return Err(Error::invalid(format!(
            "mean-demand floor {floor} drops every region"
        )));
    }
    if keep.len() == shape.regions {
        return Ok((records, region_ids.to_vec(), Vec::new()));
    }
    let new_shape = TensorShape::new(shape.hours, keep.len(), shape.channels)?;
    let project = |t: &DayTensor| -> Result<DayTensor> {
        let mut values = vec![0.0; new_shape.len()];
        for h in 0..shape.hours {
            for (new_r, &old_r) in keep.iter().enumerate() {
                for c in 0..shape.channels {
                    values[new_shape.index(h, new_r, c)] = t.get(h, old_r, c);
                }
            }
        }
        DayTensor::new(new_shape, values)
    };
    let mut filtered = Vec::with_capacity(records.len());
    for record in &records {
        filtered.push(DayRecord::new(
            record.day_index,
            project(&record.base_pred)?,
            project(&record.actual)?,
        )?);
    }
    let kept_ids: Vec<String> = keep.iter().map(|&r| region_ids[r].clone()).collect();
    let dropped: Vec<String> = (0..shape.regions)
        .filter(|r| !keep.contains(r))
        .map(|r| region_ids[r].clone())
        .collect();
    Ok((filtered, kept_ids, dropped))
}

// ---------------------------------------------------------------------------
// Graph edge lists
// ---------------------------------------------------------------------------

/// A loaded graph plus what was cleaned away on the way in.
#[derive(Debug, Clone)]
pub struct GraphLoad {
    pub graph: RegionGraph,
    pub self_loops_dropped: usize,
    /// Edges touching regions filtered out of the stream.
    pub inactive_edges_dropped: usize,
}

/// Loads a two-column region-id edge list; `#` starts a comment. Every id
/// must appear in `region_ids`.
pub fn load_graph(path: &Path, region_ids: &[String]) -> Result<GraphLoad> {
    load_graph_with_inactive(path, region_ids, &[])
}

/// As [`load_graph`], but ids in `inactive_ids` (regions dropped at
/// ingestion) are tolerated: edges touching them are dropped and counted.
pub fn load_graph_with_inactive(
    path: &Path,
    region_ids: &[String],
    inactive_ids: &[String],
) -> Result<GraphLoad> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let index_of = |id: &str| region_ids.iter().position(|r| r == id);
    let mut edges = Vec::new();
    let mut inactive_edges_dropped = 0usize;
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let line_no = line_no + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut parts = content.split_whitespace();
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("expected two region ids, found {content:?}"),
                ))
            }
        };
        match (index_of(a), index_of(b)) {
            (Some(ia), Some(ib)) => edges.push((ia, ib)),
            _ => {
                let unknown = if index_of(a).is_none() { a } else { b };
                if inactive_ids.iter().any(|id| id == unknown) {
                    inactive_edges_dropped += 1;
                } else {
                    return Err(Error::UnknownRegion {
                        id: unknown.to_string(),
                        path: path.to_path_buf(),
                    });
                }
            }
        }
    }
    let (graph, self_loops_dropped) = RegionGraph::from_edges(region_ids.len(), &edges)?;
    Ok(GraphLoad {
        graph,
        self_loops_dropped,
        inactive_edges_dropped,
    })
}

/// Writes a graph as the edge-list format [`load_graph`] reads.
pub fn save_graph(path: &Path, graph: &RegionGraph, region_ids: &[String]) -> Result<()> {
    if region_ids.len() != graph.region_count() {
        return Err(Error::invalid(format!(
            "{} region ids for {} regions",
            region_ids.len(),
            graph.region_count()
        )));
    }
    let mut buf = String::new();
    buf.push_str("# region edge list: one undirected edge per line\n");
    for (a, id) in region_ids.iter().enumerate() {
        for &b in graph.neighbors(a) {
            if a < b {
                buf.push_str(&format!("{id} {}\n", region_ids[b]));
            }
        }
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

/// Default region ids `r0, r1, …` for synthetic streams.
pub fn default_region_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("r{i}")).collect()
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

fn default_alphas() -> Vec<f64> {
    vec![0.7, 0.8, 0.9, 1.0]
}
fn default_eta() -> f64 {
    10.0
}
fn default_eta_small() -> f64 {
    0.01
}
fn default_kernel_len() -> usize {
    3
}
fn default_gamma_init() -> f64 {
    0.1
}
fn default_strategy() -> String {
    "full".to_string()
}

/// One JSON document configuring a run; every field has the stock default.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    #[serde(default = "default_strategy")]
    pub strategy: String,
    /// Smoothing factor when `strategy` is `fixed-ema`.
    #[serde(default)]
    pub fixed_alpha: Option<f64>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_eta_small")]
    pub eta_gamma: f64,
    #[serde(default = "default_eta_small")]
    pub eta_kernel: f64,
    #[serde(default = "default_kernel_len")]
    pub kernel_len: usize,
    #[serde(default = "default_gamma_init")]
    pub gamma_init: f64,
    #[serde(default)]
    pub padding: Padding,
    #[serde(default)]
    pub loss_reduction: LossReduction,
    #[serde(default)]
    pub ogd_order: OgdOrder,
    #[serde(default)]
    pub seed: u64,
    /// Mean-demand floor below which regions are dropped at ingestion.
    #[serde(default)]
    pub region_floor: Option<f64>,
}

impl Default for RunSettings {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunSettings {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            alphas: self.alphas.clone(),
            eta: self.eta,
            eta_gamma: self.eta_gamma,
            eta_kernel: self.eta_kernel,
            kernel_len: self.kernel_len,
            gamma_init: self.gamma_init,
            padding: self.padding,
            loss_reduction: self.loss_reduction,
            ogd_order: self.ogd_order,
        }
    }

    pub fn strategy(&self) -> Result<Strategy> {
        parse_strategy(&self.strategy, self.fixed_alpha)
    }
}

/// Parses a strategy name as used on the command line and in config files.
pub fn parse_strategy(name: &str, fixed_alpha: Option<f64>) -> Result<Strategy> {
    match name {
        "ori" => Ok(Strategy::Ori),
        "prev-day" => Ok(Strategy::PrevDay),
        "fixed-ema" => {
            let alpha = fixed_alpha.ok_or_else(|| {
                Error::invalid("strategy fixed-ema needs fixed_alpha".to_string())
            })?;
            Ok(Strategy::FixedEma(alpha))
        }
        "full" => Ok(Strategy::Full),
        "no-smooth" => Ok(Strategy::NoSmooth),
        other => Err(Error::invalid(format!(
            "unknown strategy {other:?}; expected ori, prev-day, fixed-ema, full or no-smooth"
        ))),
    }
}

// ---------------------------------------------------------------------------
// World settings
// ---------------------------------------------------------------------------

fn default_hours() -> usize {
    24
}
fn default_regions() -> usize {
    16
}
fn default_channels() -> usize {
    2
}
fn default_horizon() -> usize {
    500
}

/// Hand-writable JSON description of a synthetic world. Unlike
/// [`WorldConfig`], the initial bias is a scalar broadcast over the whole
/// shape.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WorldSettings {
    #[serde(default = "default_hours")]
    pub hours: usize,
    #[serde(default = "default_regions")]
    pub regions: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub base: Option<BaseSignal>,
    /// Constant initial bias over every entry.
    #[serde(default)]
    pub bias_init: f64,
    #[serde(default)]
    pub drift_std: f64,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub drift_rho: f64,
    #[serde(default)]
    pub noise_kind: NoiseKind,
    #[serde(default)]
    pub noise_scale: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    /// `[rows, cols]` of the region grid used to build the smoothing graph;
    /// regions are left unconnected when absent.
    #[serde(default)]
    pub grid: Option<[usize; 2]>,
}

impl WorldSettings {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn world_config(&self) -> Result<WorldConfig> {
        let shape = TensorShape::new(self.hours, self.regions, self.channels)?;
        let config = WorldConfig {
            shape,
            horizon: self.horizon,
            base_signal: self.base.unwrap_or(BaseSignal::Zeros),
            bias_init: DayTensor::constant(shape, self.bias_init)?,
            drift_std: self.drift_std,
            noise_std: self.noise_std,
            drift_rho: self.drift_rho,
            noise_scale: self.noise_scale.clone(),
            noise_kind: self.noise_kind,
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn graph(&self) -> Result<RegionGraph> {
        match self.grid {
            None => Ok(RegionGraph::isolated(self.regions)),
            Some([rows, cols]) => {
                if rows * cols != self.regions {
                    return Err(Error::invalid(format!(
                        "grid {rows}x{cols} does not cover {} regions",
                        self.regions
                    )));
                }
                Ok(RegionGraph::grid(rows, cols))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Result writers
// ---------------------------------------------------------------------------

fn write_with_comment(path: &Path, body: &str, generated_at: Option<&str>) -> Result<()> {
    let mut buf = String::new();
    if let Some(ts) = generated_at {
        buf.push_str(&format!("# generated_at: {ts}\n"));
    }
    buf.push_str(body);
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

/// Per-day NDJSON trace: one JSON object per line.
pub fn write_trace_ndjson(path: &Path, trace: &[DayTrace]) -> Result<()> {
    let mut buf = String::new();
    for row in trace {
        let line = serde_json::to_string(row).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        buf.push_str(&line);
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
    pub strategy: String,
    pub mae: f64,
    pub rmse: f64,
    pub count: u64,
    pub ori_mae: f64,
    pub ori_rmse: f64,
    /// Percentage error reduction against the uncorrected run.
    pub improve_mae_pct: f64,
    pub improve_rmse_pct: f64,
}

impl MetricsDocument {
    pub fn new(
        strategy: &str,
        report: &MetricReport,
        ori: &MetricReport,
        generated_at: Option<&str>,
    ) -> Self {
        Self {
            generated_at: generated_at.map(str::to_string),
            strategy: strategy.to_string(),
            mae: report.mae,
            rmse: report.rmse,
            count: report.count,
            ori_mae: ori.mae,
            ori_rmse: ori.rmse,
            improve_mae_pct: improvement_pct(ori.mae, report.mae),
            improve_rmse_pct: improvement_pct(ori.rmse, report.rmse),
        }
    }
}

/// Percentage error reduction of `value` against `baseline`.
pub fn improvement_pct(baseline: f64, value: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        (baseline - value) / baseline * 100.0
    }
}

pub fn write_metrics_json(path: &Path, doc: &MetricsDocument) -> Result<()> {
    let json = serde_json::to_string_pretty(doc).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, json).map_err(|e| io_err(path, e))
}

/// Summary table: one row per strategy, with the improvement over the
/// uncorrected baseline.
pub fn write_summary_csv(
    path: &Path,
    rows: &[(String, MetricReport)],
    ori: &MetricReport,
    generated_at: Option<&str>,
) -> Result<()> {
    let mut body = String::from("strategy,mae,rmse,improve_mae_pct,improve_rmse_pct\n");
    for (name, report) in rows {
        body.push_str(&format!(
            "{name},{},{},{:.4},{:.4}\n",
            format_value(report.mae),
            format_value(report.rmse),
            improvement_pct(ori.mae, report.mae),
            improvement_pct(ori.rmse, report.rmse),
        ));
    }
    write_with_comment(path, &body, generated_at)
}

/// One row per verification target.
pub fn write_verify_csv(
    path: &Path,
    targets: &[TheoremTarget],
    generated_at: Option<&str>,
) -> Result<()> {
    let mut body =
        String::from("theorem_id,alpha,trials,empirical,closed_form,standard_error,pass\n");
    for t in targets {
        let alpha = t.alpha.map(format_value).unwrap_or_default();
        body.push_str(&format!(
            "{},{alpha},{},{},{},{},{}\n",
            t.theorem_id,
            t.trials,
            format_value(t.empirical),
            format_value(t.closed_form),
            format_value(t.standard_error),
            t.pass
        ));
    }
    write_with_comment(path, &body, generated_at)
}

/// Regret audits, one row per trial.
pub fn write_regret_csv(
    path: &Path,
    audits: &[RegretAudit],
    generated_at: Option<&str>,
) -> Result<()> {
    let mut body =
        String::from("trial,mixture_cum_loss,best_expert_cum_loss,bound,b_max,satisfied\n");
    for (i, a) in audits.iter().enumerate() {
        body.push_str(&format!(
            "{i},{},{},{},{},{}\n",
            format_value(a.mixture_cum_loss),
            format_value(a.best_expert_cum_loss),
            format_value(a.bound),
            format_value(a.b_max),
            a.satisfied
        ));
    }
    write_with_comment(path, &body, generated_at)
}

/// Alpha sweep rows plus one comparator row for the full method.
pub fn write_sweep_csv(
    path: &Path,
    sweep: &UcurveResult,
    full_method: Option<&MetricReport>,
    generated_at: Option<&str>,
) -> Result<()> {
    let mut body = String::from("label,alpha,mae,rmse,mae_se\n");
    for row in &sweep.rows {
        let label = if row.alpha == 1.0 { "ori" } else { "fixed-ema" };
        body.push_str(&format!(
            "{label},{},{},{},{}\n",
            format_value(row.alpha),
            format_value(row.report.mae),
            format_value(row.report.rmse),
            format_value(row.mae_se),
        ));
    }
    if let Some(report) = full_method {
        body.push_str(&format!(
            "full,,{},{},\n",
            format_value(report.mae),
            format_value(report.rmse),
        ));
    }
    write_with_comment(path, &body, generated_at)
}

/// Saves the ground-truth decomposition of a synthetic world next to its
/// stream, so reconstruction can be audited after a reload.
pub fn save_world_truth(dir: &Path, trace: &WorldTrace, region_ids: &[String]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let shape = trace.records[0].shape();
    let write_path = |name: &str, tensors: &[DayTensor]| -> Result<()> {
        let path = dir.join(name);
        let mut buf = String::from("day,hour,region,channel,value\n");
        for (t, tensor) in tensors.iter().enumerate() {
            for h in 0..shape.hours {
                for (r, id) in region_ids.iter().enumerate() {
                    for c in 0..shape.channels {
                        buf.push_str(&format!(
                            "{},{h},{id},{c},{}\n",
                            t + 1,
                            format_value(tensor.get(h, r, c))
                        ));
                    }
                }
            }
        }
        fs::write(&path, buf).map_err(|e| io_err(&path, e))
    };
    write_path("bias.csv", &trace.bias_path)?;
    write_path("drift.csv", &trace.drift_path)?;
    write_path("noise.csv", &trace.noise_path)?;
    Ok(())
}

/// Engine snapshot persistence.
pub fn save_engine(path: &Path, engine: &crate::engine::Engine) -> Result<()> {
    let json = serde_json::to_string(engine).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, json).map_err(|e| io_err(path, e))
}

pub fn load_engine(path: &Path) -> Result<crate::engine::Engine> {
    let raw = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}
