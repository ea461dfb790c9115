//! Files: datasets (CSV + JSON sidecar), checkpoints, run configs, reports
//! and trajectory comparisons.
//!
//! Every JSON file carries a `schema_version` of the form `MAJOR.MINOR`.
//! Loaders reject other majors and ignore unknown fields, so fields are
//! only ever appended within a major version. CSV floats are written with
//! 17 significant digits; JSON floats use the shortest exact form.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::expr::{evaluate_all, to_text, Expr};
use crate::network::{LayerWeights, NetworkShape, NetworkWeights};
use crate::pipeline::{Identification, Verdict};
use crate::select::{CandidateModel, Selection};
use crate::systems::{rk4_step, Dataset, Layout, SystemDef, SUBSTEPS};
use crate::train::KFoldResult;

pub const SCHEMA_MAJOR: u32 = 1;
pub const SCHEMA_VERSION: &str = "1.0";

fn check_version(v: &str) -> Result<()> {
    let major = v
        .split('.')
        .next()
        .and_then(|m| m.parse::<u32>().ok())
        .ok_or_else(|| Error::Schema(format!("malformed schema_version {v:?}")))?;
    if major != SCHEMA_MAJOR {
        return Err(Error::Schema(format!(
            "unsupported schema major version {major} (expected {SCHEMA_MAJOR})"
        )));
    }
    Ok(())
}

/// Writes through a temporary file in the destination directory and renames
/// it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    #[derive(Deserialize)]
    struct Probe {
        schema_version: String,
    }
    let probe: Probe = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    check_version(&probe.schema_version)?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------- datasets

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub schema_version: String,
    pub system: String,
    pub var_names: Vec<String>,
    pub sigma1: f64,
    pub sigma2: f64,
    pub seed: u64,
    pub x_rms: Vec<f64>,
    pub xdot_rms: Vec<f64>,
    pub layout: Layout,
    pub rows: usize,
}

/// `data.csv` pairs with `data.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn dataset_header(n: usize) -> Vec<String> {
    let mut h = vec!["traj".to_string(), "t".to_string()];
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.extend((1..=n).map(|i| format!("dx{i}")));
    h
}

/// Writes `data` as CSV at `path` and its metadata next to it.
pub fn save_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let n = data.n();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(dataset_header(n))?;
    for j in 0..data.len() {
        let mut rec = vec![data.traj[j].to_string(), float(data.t[j])];
        rec.extend(data.x[j].iter().map(|&v| float(v)));
        rec.extend(data.y[j].iter().map(|&v| float(v)));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)?;
    let side = DatasetSidecar {
        schema_version: SCHEMA_VERSION.into(),
        system: data.system.clone(),
        var_names: data.var_names.clone(),
        sigma1: data.sigma1,
        sigma2: data.sigma2,
        seed: data.seed,
        x_rms: data.x_rms.clone(),
        xdot_rms: data.xdot_rms.clone(),
        layout: data.layout,
        rows: data.len(),
    };
    write_json(&sidecar_path(path), &side)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let side: DatasetSidecar = read_json(&sidecar_path(path))?;
    let n = side.var_names.len();
    if n == 0 || side.x_rms.len() != n || side.xdot_rms.len() != n {
        return Err(Error::Schema("sidecar vector lengths disagree".into()));
    }
    let header = dataset_header(n);
    let mut r = csv::ReaderBuilder::new().from_path(path)?;
    let got: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if got != header {
        return Err(Error::Schema(format!("expected header {header:?}, found {got:?}")));
    }
    let mut data = Dataset {
        system: side.system,
        var_names: side.var_names,
        x: Vec::new(),
        y: Vec::new(),
        traj: Vec::new(),
        t: Vec::new(),
        x_rms: side.x_rms,
        xdot_rms: side.xdot_rms,
        sigma1: side.sigma1,
        sigma2: side.sigma2,
        seed: side.seed,
        layout: side.layout,
    };
    for (i, rec) in r.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Validation {
                row,
                column: "*".into(),
                msg: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let cell = |c: usize| -> Result<f64> {
            let v: f64 = rec[c].trim().parse().map_err(|_| Error::Validation {
                row,
                column: header[c].clone(),
                msg: format!("not a number: {:?}", &rec[c]),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Validation {
                    row,
                    column: header[c].clone(),
                    msg: format!("non-finite value {v}"),
                })
            }
        };
        let traj = rec[0].trim().parse::<usize>().map_err(|_| Error::Validation {
            row,
            column: "traj".into(),
            msg: format!("not a trajectory index: {:?}", &rec[0]),
        })?;
        data.traj.push(traj);
        data.t.push(cell(1)?);
        data.x.push((2..2 + n).map(cell).collect::<Result<_>>()?);
        data.y.push((2 + n..2 + 2 * n).map(cell).collect::<Result<_>>()?);
    }
    if data.len() != side.rows || data.is_empty() {
        return Err(Error::Schema(format!(
            "sidecar announces {} rows, CSV has {}",
            side.rows,
            data.len()
        )));
    }
    Ok(data)
}

// ------------------------------------------------------------- checkpoints

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    schema_version: String,
    shape: NetworkShape,
    seed: u64,
    weights: BTreeMap<String, Vec<f64>>,
    #[serde(rename = "W_out")]
    w_out: Vec<Vec<f64>>,
}

const SUBLAYERS: [&str; 5] = ["lin", "pow", "prod", "ops_in", "ops_out"];

fn layer_key(k: usize, l: usize, sub: &str) -> String {
    format!("{}.{}.{sub}", k + 1, l + 1)
}

/// Writes weights keyed `"k.l.sublayer"` (1-based) plus the output matrix.
pub fn save_checkpoint(weights: &NetworkWeights, seed: u64, path: &Path) -> Result<()> {
    if !weights.is_finite() {
        return Err(Error::NonFinite("refusing to save non-finite weights".into()));
    }
    let s = weights.shape;
    let mut map = BTreeMap::new();
    for k in 0..s.stacks {
        for l in 0..s.layers {
            let lw = weights.layer(k, l);
            map.insert(layer_key(k, l, "lin"), lw.lin.clone());
            map.insert(layer_key(k, l, "pow"), lw.pow.clone());
            map.insert(layer_key(k, l, "prod"), lw.prod.clone());
            map.insert(layer_key(k, l, "ops_in"), lw.ops_in.clone());
            map.insert(layer_key(k, l, "ops_out"), lw.ops_out.to_vec());
        }
    }
    let width = s.output_width();
    let file = CheckpointFile {
        schema_version: SCHEMA_VERSION.into(),
        shape: s,
        seed,
        weights: map,
        w_out: weights.w_out.chunks(width).map(<[f64]>::to_vec).collect(),
    };
    write_json(path, &file)
}

/// Loads a checkpoint, checking every array against the declared shape.
pub fn load_checkpoint(path: &Path) -> Result<(NetworkWeights, u64)> {
    let file: CheckpointFile = read_json(path)?;
    let s = file.shape;
    s.validate().map_err(|e| Error::Schema(e.to_string()))?;
    let mut map = file.weights;
    let mut layers = Vec::with_capacity(s.stacks * s.layers);
    for k in 0..s.stacks {
        let d = s.stack_input_width(k + 1);
        for l in 0..s.layers {
            let mut take = |sub: &str, len: usize| -> Result<Vec<f64>> {
                let key = layer_key(k, l, sub);
                let v = map
                    .remove(&key)
                    .ok_or_else(|| Error::Schema(format!("missing weights {key:?}")))?;
                if v.len() != len {
                    return Err(Error::Schema(format!(
                        "{key:?} has {} entries, shape needs {len}",
                        v.len()
                    )));
                }
                Ok(v)
            };
            let lin = take(SUBLAYERS[0], d)?;
            let pow = take(SUBLAYERS[1], d)?;
            let prod = take(SUBLAYERS[2], d)?;
            let ops_in = take(SUBLAYERS[3], d)?;
            let out = take(SUBLAYERS[4], 3)?;
            layers.push(LayerWeights {
                lin,
                pow,
                prod,
                ops_in,
                ops_out: [out[0], out[1], out[2]],
            });
        }
    }
    if let Some(extra) = map.keys().next() {
        return Err(Error::Schema(format!("unexpected weights {extra:?} for this shape")));
    }
    let width = s.output_width();
    if file.w_out.len() != s.n || file.w_out.iter().any(|r| r.len() != width) {
        return Err(Error::Schema(format!("W_out must be {} x {width}", s.n)));
    }
    let weights = NetworkWeights {
        shape: s,
        layers,
        w_out: file.w_out.concat(),
    };
    if !weights.is_finite() {
        return Err(Error::Schema("checkpoint holds non-finite weights".into()));
    }
    Ok((weights, file.seed))
}

// ------------------------------------------------------------- run configs

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ConfigFile {
    schema_version: String,
    config: RunConfig,
}

pub fn save_config(cfg: &RunConfig, path: &Path) -> Result<()> {
    write_json(
        path,
        &ConfigFile {
            schema_version: SCHEMA_VERSION.into(),
            config: cfg.clone(),
        },
    )
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let f: ConfigFile = read_json(path)?;
    f.config.validate()?;
    Ok(f.config)
}

// ----------------------------------------------------------------- reports

/// One row of the tolerance sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub tolerance: f64,
    pub exprs: Vec<String>,
    #[serde(rename = "P")]
    pub p: usize,
    pub mse: Option<f64>,
    pub aic: Option<f64>,
    /// Zero residual, ranked below every finite AIC.
    #[serde(default)]
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discarded_reason: Option<String>,
}

impl CandidateRow {
    pub fn from_candidate(c: &CandidateModel, names: &[String]) -> Self {
        Self {
            tolerance: c.tolerance,
            exprs: c.exprs.iter().map(|e| to_text(e, names)).collect(),
            p: c.p,
            mse: c.mse.is_finite().then_some(c.mse),
            aic: c.aic.filter(|a| a.is_finite()),
            degenerate: c.degenerate,
            discarded_reason: c.discarded_reason.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub schema_version: String,
    pub var_names: Vec<String>,
    pub network_model: Vec<String>,
    pub candidates: Vec<CandidateRow>,
    /// Index into `candidates`.
    pub winner: usize,
}

impl SelectionReport {
    pub fn new(network_model: &[Expr], selection: &Selection, names: &[String]) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            var_names: names.to_vec(),
            network_model: network_model.iter().map(|e| to_text(e, names)).collect(),
            candidates: selection
                .candidates
                .iter()
                .map(|c| CandidateRow::from_candidate(c, names))
                .collect(),
            winner: selection.winner,
        }
    }

    pub fn winner(&self) -> &CandidateRow {
        &self.candidates[self.winner]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub seed: Option<u64>,
    pub held_out_loss: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub epochs_run: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub train_seconds: f64,
    pub select_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub passed: bool,
    pub detail: String,
}

impl From<&Verdict> for VerdictRow {
    fn from(v: &Verdict) -> Self {
        Self {
            passed: v.passed,
            detail: v.detail.clone(),
        }
    }
}

pub fn fold_summaries(k: &KFoldResult) -> Vec<FoldSummary> {
    k.folds
        .iter()
        .enumerate()
        .map(|(i, f)| match f {
            Ok(f) => FoldSummary {
                fold: f.fold,
                seed: Some(f.seed),
                held_out_loss: Some(f.held_out_loss),
                final_train_loss: f.history.last().copied(),
                epochs_run: f.history.len(),
                error: None,
            },
            Err(e) => FoldSummary {
                fold: i,
                seed: None,
                held_out_loss: None,
                final_train_loss: None,
                epochs_run: 0,
                error: Some(e.clone()),
            },
        })
        .collect()
}

/// Per-fold outcome of a training run, written next to its checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub schema_version: String,
    pub config: RunConfig,
    pub folds: Vec<FoldSummary>,
    pub selected_fold: usize,
    pub train_seconds: f64,
}

impl TrainSummary {
    pub fn new(cfg: &RunConfig, k: &KFoldResult, train_seconds: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            config: cfg.clone(),
            folds: fold_summaries(k),
            selected_fold: k.best,
            train_seconds,
        }
    }
}

pub fn save_train_summary(s: &TrainSummary, path: &Path) -> Result<()> {
    write_json(path, s)
}

pub fn load_train_summary(path: &Path) -> Result<TrainSummary> {
    read_json(path)
}

/// Everything about one identification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: String,
    pub config: RunConfig,
    pub folds: Vec<FoldSummary>,
    pub selected_fold: usize,
    pub selection: SelectionReport,
    pub winner: Vec<String>,
    pub winner_rmse: f64,
    /// Ground truth scored on the same dataset, when it is known.
    pub truth_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<VerdictRow>,
    pub timings: Timings,
}

impl RunReport {
    pub fn new(cfg: &RunConfig, id: &Identification, names: &[String], truth_rmse: Option<f64>) -> Self {
        let folds = fold_summaries(&id.kfold);
        let selection = SelectionReport::new(&id.network_model, &id.selection, names);
        Self {
            schema_version: SCHEMA_VERSION.into(),
            config: cfg.clone(),
            folds,
            selected_fold: id.kfold.best,
            winner: selection.winner().exprs.clone(),
            selection,
            winner_rmse: id.winner_rmse,
            truth_rmse,
            verdict: None,
            timings: Timings {
                train_seconds: id.train_seconds,
                select_seconds: id.select_seconds,
            },
        }
    }

    /// Every numeric field is finite.
    pub fn validate(&self) -> Result<()> {
        let mut nums = vec![self.winner_rmse, self.timings.train_seconds, self.timings.select_seconds];
        nums.extend(self.truth_rmse);
        for f in &self.folds {
            nums.extend(f.held_out_loss);
            nums.extend(f.final_train_loss);
        }
        for c in &self.selection.candidates {
            nums.push(c.tolerance);
            nums.extend(c.mse);
            nums.extend(c.aic);
        }
        match nums.iter().find(|v| !v.is_finite()) {
            Some(v) => Err(Error::NonFinite(format!("report field {v}"))),
            None => Ok(()),
        }
    }
}

pub fn save_selection_report(r: &SelectionReport, path: &Path) -> Result<()> {
    write_json(path, r)
}

pub fn load_selection_report(path: &Path) -> Result<SelectionReport> {
    read_json(path)
}

pub fn save_run_report(r: &RunReport, path: &Path) -> Result<()> {
    r.validate()?;
    write_json(path, r)
}

pub fn load_run_report(path: &Path) -> Result<RunReport> {
    let r: RunReport = read_json(path)?;
    r.validate()?;
    Ok(r)
}

// ------------------------------------------------------------ user systems

/// A user-supplied system: right-hand sides as expression text.
///
/// ```json
/// {"schema_version": "1.0", "name": "decay", "vars": ["x"], "rhs": ["-x"],
///  "ic_box": [[0.5, 1.5]], "layout": {"trajectories": 4, "points": 50, "horizon": 2.0}}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    pub schema_version: String,
    pub name: String,
    pub vars: Vec<String>,
    pub rhs: Vec<String>,
    pub ic_box: Vec<(f64, f64)>,
    pub layout: Layout,
    #[serde(default)]
    pub burn_in: f64,
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
}

pub fn load_system_file(path: &Path) -> Result<SystemDef> {
    let f: SystemFile = read_json(path)?;
    let vars: Vec<&str> = f.vars.iter().map(String::as_str).collect();
    let rhs: Vec<&str> = f.rhs.iter().map(String::as_str).collect();
    let mut sys = SystemDef::from_texts(&f.name, &vars, &rhs, f.ic_box, f.layout)?;
    if !(f.burn_in.is_finite() && f.burn_in >= 0.0) {
        return Err(Error::Invalid(format!("burn_in must be >= 0, got {}", f.burn_in)));
    }
    sys.burn_in = f.burn_in;
    if let Some(s) = f.sigma1 {
        sys.sigma1 = s;
    }
    if let Some(s) = f.sigma2 {
        sys.sigma2 = s;
    }
    Ok(sys)
}

// ------------------------------------------------------------- comparison

/// Status of a comparison row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    TruthFailed,
    ModelFailed,
    BothFailed,
}

impl RowStatus {
    fn new(truth_ok: bool, model_ok: bool) -> Self {
        match (truth_ok, model_ok) {
            (true, true) => Self::Ok,
            (false, true) => Self::TruthFailed,
            (true, false) => Self::ModelFailed,
            (false, false) => Self::BothFailed,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::TruthFailed => "truth_failed",
            Self::ModelFailed => "model_failed",
            Self::BothFailed => "both_failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub t: f64,
    /// NaN once the trajectory has failed.
    pub truth: Vec<f64>,
    pub model: Vec<f64>,
    pub status: RowStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub var_names: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    /// Largest state difference over rows where both trajectories exist.
    pub fn max_deviation(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.status == RowStatus::Ok)
            .flat_map(|r| r.truth.iter().zip(&r.model).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut head = vec!["t".to_string()];
        head.extend(self.var_names.iter().map(|v| format!("true_{v}")));
        head.extend(self.var_names.iter().map(|v| format!("model_{v}")));
        head.push("status".into());
        w.write_record(&head)?;
        for r in &self.rows {
            let mut rec = vec![float(r.t)];
            rec.extend(r.truth.iter().chain(&r.model).map(|&v| float(v)));
            rec.push(r.status.as_str().into());
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

struct Track<'a> {
    f: Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a>,
    x: Option<Vec<f64>>,
}

impl Track<'_> {
    fn advance(&mut self, h: f64) {
        if let Some(x) = &self.x {
            let mut y = x.clone();
            for _ in 0..SUBSTEPS {
                match rk4_step(&self.f, &y, h) {
                    Ok(next) => y = next,
                    Err(_) => {
                        self.x = None;
                        return;
                    }
                }
            }
            self.x = Some(y);
        }
    }

    fn state(&self, n: usize) -> Vec<f64> {
        self.x.clone().unwrap_or_else(|| vec![f64::NAN; n])
    }
}

/// Integrates the ground truth and `model` from `x0` and records both every
/// `dt` up to `horizon`. A trajectory that fails is recorded as NaN from then
/// on instead of aborting.
pub fn emit_comparison(
    system: &SystemDef,
    model: &[Expr],
    x0: &[f64],
    horizon: f64,
    dt: f64,
) -> Result<Comparison> {
    let n = system.n();
    if x0.len() != n || model.len() != n {
        return Err(Error::Invalid(format!(
            "{} has {n} states; got x0 of length {} and {} model components",
            system.name,
            x0.len(),
            model.len()
        )));
    }
    if !(dt > 0.0 && dt.is_finite() && horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Invalid(format!("need dt > 0 and horizon >= 0, got {dt}, {horizon}")));
    }
    let steps = (horizon / dt).round() as usize;
    let h = dt / SUBSTEPS as f64;
    let mut truth = Track {
        f: Box::new(|x: &[f64]| system.rhs_eval(x)),
        x: Some(x0.to_vec()),
    };
    let mut fitted = Track {
        f: Box::new(|x: &[f64]| evaluate_all(model, x)),
        x: Some(x0.to_vec()),
    };
    let mut rows = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        if i > 0 {
            truth.advance(h);
            fitted.advance(h);
        }
        rows.push(ComparisonRow {
            t: i as f64 * dt,
            truth: truth.state(n),
            model: fitted.state(n),
            status: RowStatus::new(truth.x.is_some(), fitted.x.is_some()),
        });
    }
    Ok(Comparison {
        var_names: system.var_names.clone(),
        rows,
    })
}

pub fn save_comparison(c: &Comparison, path: &Path) -> Result<()> {
    write_atomic(path, &c.to_csv()?)
}
