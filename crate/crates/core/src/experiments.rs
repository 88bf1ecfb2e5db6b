//! Configuration-driven experiments: parameter sweeps, the results CSV and
//! randomized bound batches.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{self, Best};
use crate::error::{Error, Result};
use crate::instances::{self, Dynamics, TauSchedule, Theorem3Spec, TraceRecord};
use crate::metrics::{self, BoundReport};
use crate::model::{AdversarialFunction, CostBreakdown, Instance, ProblemParams, RunResult};
use crate::predictors::{self, csv_line, csv_write_err, parse_finite, PredictionStream};
use crate::solvers::{self, SolverSettings};
use crate::vector::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSource {
    Trace {
        path: PathBuf,
        #[serde(default)]
        schedule: TauSchedule,
        /// Keeps only the first `max_slots` records.
        #[serde(default)]
        max_slots: Option<usize>,
    },
    Synthetic {
        generator: Dynamics,
        horizon: usize,
    },
    Theorem3 {
        u0: Point,
        /// Sampled uniformly from `[e_min, e_max]` with the config seed when absent.
        #[serde(default)]
        errors: Option<Vec<f64>>,
        #[serde(default = "default_t3_horizon")]
        horizon: usize,
        #[serde(default = "default_e_min")]
        e_min: f64,
        #[serde(default = "default_e_max")]
        e_max: f64,
    },
}

fn default_t3_horizon() -> usize {
    100
}

fn default_e_min() -> f64 {
    1e-3
}

fn default_e_max() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredictorSpec {
    Perfect,
    Pessimistic,
    Persistence {
        #[serde(default = "default_lag")]
        lag: usize,
    },
    MovingAverage {
        window: usize,
    },
    /// Predictions CSV; rows beyond the horizon are ignored.
    File {
        path: PathBuf,
    },
    /// The adversarial stream of a `theorem3` instance source.
    Theorem3,
}

fn default_lag() -> usize {
    1
}

impl PredictorSpec {
    /// Matches the `source` of the stream it produces.
    pub fn label(&self) -> String {
        match self {
            PredictorSpec::Perfect => "perfect".into(),
            PredictorSpec::Pessimistic => "pessimistic".into(),
            PredictorSpec::Persistence { lag } => format!("persistence{lag}"),
            PredictorSpec::MovingAverage { window } => format!("moving_average{window}"),
            PredictorSpec::File { .. } => "file".into(),
            PredictorSpec::Theorem3 => "theorem3".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    Iga,
    Best,
    Naive,
    Pga {
        predictor: PredictorSpec,
    },
    Cort {
        predictor: PredictorSpec,
        theta: f64,
    },
}

impl AlgorithmSpec {
    /// Run name, as reported by the policy.
    pub fn label(&self, theta_override: Option<f64>) -> String {
        match self {
            AlgorithmSpec::Iga => metrics::IGA.into(),
            AlgorithmSpec::Best => "best".into(),
            AlgorithmSpec::Naive => "naive".into(),
            AlgorithmSpec::Pga { predictor } => format!("pga:{}", predictor.label()),
            AlgorithmSpec::Cort { predictor, theta } => {
                format!(
                    "cort:{}:{}",
                    predictor.label(),
                    theta_override.unwrap_or(*theta)
                )
            }
        }
    }

    fn predictor(&self) -> Option<&PredictorSpec> {
        match self {
            AlgorithmSpec::Pga { predictor } | AlgorithmSpec::Cort { predictor, .. } => {
                Some(predictor)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Lambda1,
    Lambda2,
    W,
    Theta,
    TauMeanShift,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Lambda1 => "lambda1",
            SweepParam::Lambda2 => "lambda2",
            SweepParam::W => "w",
            SweepParam::Theta => "theta",
            SweepParam::TauMeanShift => "tau_mean_shift",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// Lower-bound instances checked by the bounds batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Theorem3Family {
    pub count: usize,
    pub horizon: usize,
    /// Norm of `u0`, spread evenly over the coordinates.
    pub u0_norm: f64,
    pub e_min: f64,
    pub e_max: f64,
}

impl Default for Theorem3Family {
    fn default() -> Self {
        Theorem3Family {
            count: 20,
            horizon: 100,
            u0_norm: 1e-3,
            e_min: 1e-3,
            e_max: 0.5,
        }
    }
}

/// Randomized batch for `bounds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsBatch {
    pub count: usize,
    pub horizon: usize,
    /// Cycled across the batch.
    pub dynamics: Vec<Dynamics>,
    pub thetas: Vec<f64>,
    pub theorem3: Theorem3Family,
}

impl Default for BoundsBatch {
    fn default() -> Self {
        BoundsBatch {
            count: 200,
            horizon: 40,
            dynamics: vec![
                Dynamics::RandomWalk { step_sigma: 0.2 },
                Dynamics::PiecewiseConstant {
                    segment_len: 4,
                    levels: vec![0.0, 0.25, 0.5, 0.75, 1.0],
                },
            ],
            thetas: vec![0.0, 0.5, 2.0],
            theorem3: Theorem3Family::default(),
        }
    }
}

fn default_f() -> AdversarialFunction {
    AdversarialFunction::quadratic(1.0)
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance_source: InstanceSource,
    pub params: ProblemParams,
    #[serde(default = "default_f")]
    pub f: AdversarialFunction,
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub bounds: BoundsBatch,
}

fn config_err(path: impl Into<String>, reason: impl fmt::Display) -> Error {
    Error::Config {
        path: path.into(),
        reason: reason.to_string(),
    }
}

/// Rewrites a validation error so it names the offending config field.
fn under(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidParams { field, reason } => config_err(format!("{prefix}.{field}"), reason),
        Error::Config { .. } => e,
        other => config_err(prefix, other),
    }
}

impl ExperimentConfig {
    /// Parses and validates; relative paths resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(
                if path == "." {
                    "<root>".to_string()
                } else {
                    path
                },
                e.into_inner(),
            )
        })?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let InstanceSource::Trace { path, .. } = &mut self.instance_source {
            fix(path);
        }
        for a in &mut self.algorithms {
            if let AlgorithmSpec::Pga { predictor } | AlgorithmSpec::Cort { predictor, .. } = a {
                if let PredictorSpec::File { path } = predictor {
                    fix(path);
                }
            }
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate().map_err(|e| under("params", e))?;
        self.f.validate().map_err(|e| under("f", e))?;
        self.solver.validate().map_err(|e| under("solver", e))?;
        let is_theorem3 = matches!(self.instance_source, InstanceSource::Theorem3 { .. });
        match &self.instance_source {
            InstanceSource::Trace {
                schedule,
                max_slots,
                ..
            } => {
                schedule
                    .validate()
                    .map_err(|e| under("instance_source.schedule", e))?;
                if self.params.d != 1 {
                    return Err(config_err(
                        "params.d",
                        "trace instances are one-dimensional",
                    ));
                }
                if *max_slots == Some(0) {
                    return Err(config_err("instance_source.max_slots", "must be positive"));
                }
            }
            InstanceSource::Synthetic { generator, horizon } => {
                if *horizon == 0 {
                    return Err(config_err("instance_source.horizon", "must be positive"));
                }
                match generator {
                    Dynamics::RandomWalk { step_sigma }
                        if !(*step_sigma >= 0.0 && step_sigma.is_finite()) =>
                    {
                        return Err(config_err(
                            "instance_source.generator.step_sigma",
                            "must be non-negative",
                        ));
                    }
                    Dynamics::PiecewiseConstant {
                        segment_len,
                        levels,
                    } if *segment_len == 0 || levels.is_empty() => {
                        return Err(config_err(
                            "instance_source.generator",
                            "need segment_len >= 1 and at least one level",
                        ));
                    }
                    _ => {}
                }
            }
            InstanceSource::Theorem3 { .. } => {
                self.theorem3_spec()
                    .map_err(|e| under("instance_source", e))?;
            }
        }
        if self.algorithms.is_empty() {
            return Err(config_err("algorithms", "list at least one algorithm"));
        }
        let mut seen = BTreeMap::new();
        for (i, a) in self.algorithms.iter().enumerate() {
            let at = |field: &str| format!("algorithms[{i}]{field}");
            if let AlgorithmSpec::Cort { theta, .. } = a {
                if !(*theta >= 0.0 && theta.is_finite()) {
                    return Err(config_err(at(".theta"), "must be non-negative"));
                }
            }
            match a.predictor() {
                Some(PredictorSpec::Persistence { lag: 0 }) => {
                    return Err(config_err(at(".predictor.lag"), "must be at least 1"));
                }
                Some(PredictorSpec::MovingAverage { window: 0 }) => {
                    return Err(config_err(at(".predictor.window"), "must be at least 1"));
                }
                Some(PredictorSpec::Theorem3) if !is_theorem3 => {
                    return Err(config_err(
                        at(".predictor"),
                        "requires a theorem3 instance source",
                    ));
                }
                _ => {}
            }
            if let Some(prev) = seen.insert(a.label(None), i) {
                return Err(config_err(at(""), format!("duplicates algorithms[{prev}]")));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(config_err("sweep.values", "list at least one value"));
            }
            for (j, &v) in sweep.values.iter().enumerate() {
                let at = format!("sweep.values[{j}]");
                let ok = match sweep.param {
                    SweepParam::Lambda1 | SweepParam::Lambda2 => v > 0.0 && v.is_finite(),
                    SweepParam::W => v >= 0.0 && v.fract() == 0.0 && v <= 1e6,
                    SweepParam::Theta => v >= 0.0 && v.is_finite(),
                    SweepParam::TauMeanShift => v.is_finite(),
                };
                if !ok {
                    let need = match sweep.param {
                        SweepParam::W => "a non-negative integer",
                        SweepParam::Theta => "non-negative",
                        SweepParam::TauMeanShift => "finite",
                        _ => "positive",
                    };
                    return Err(config_err(
                        at,
                        format!("{} value {v} must be {need}", sweep.param),
                    ));
                }
                if let (SweepParam::TauMeanShift, InstanceSource::Trace { schedule, .. }) =
                    (sweep.param, &self.instance_source)
                {
                    schedule.shifted(v).map_err(|e| config_err(at, e))?;
                }
            }
        }
        let b = &self.bounds;
        if b.horizon == 0 || b.dynamics.is_empty() {
            return Err(config_err(
                "bounds",
                "need a positive horizon and at least one dynamics entry",
            ));
        }
        if let Some(j) = b.thetas.iter().position(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(config_err(
                format!("bounds.thetas[{j}]"),
                "must be non-negative",
            ));
        }
        let t3 = &b.theorem3;
        if !(t3.u0_norm > 0.0 && t3.e_min > 0.0 && t3.e_max >= t3.e_min) || t3.horizon == 0 {
            return Err(config_err(
                "bounds.theorem3",
                "need u0_norm > 0, 0 < e_min <= e_max and a positive horizon",
            ));
        }
        Ok(())
    }

    fn theorem3_spec(&self) -> Result<Theorem3Spec> {
        let InstanceSource::Theorem3 {
            u0,
            errors,
            horizon,
            e_min,
            e_max,
        } = &self.instance_source
        else {
            return Err(Error::invalid("instance_source", "not a theorem3 source"));
        };
        if u0.len() != self.params.d {
            return Err(Error::invalid(
                "u0",
                format!(
                    "has {} coordinates, params.d is {}",
                    u0.len(),
                    self.params.d
                ),
            ));
        }
        let spec = match errors {
            Some(e) => Theorem3Spec {
                u0: u0.clone(),
                errors: e.clone(),
                e_min: *e_min,
            },
            None => {
                if !(*e_max >= *e_min && *e_min > 0.0) || *horizon == 0 {
                    return Err(Error::invalid(
                        "e_max",
                        "need 0 < e_min <= e_max and a positive horizon",
                    ));
                }
                instances::sample_theorem3_spec(self.seed, u0, *horizon, *e_min, *e_max)
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Status column of a results row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundStatus {
    Satisfied,
    Violated,
    NotApplicable,
    /// The run itself failed.
    Failed,
}

impl BoundStatus {
    fn as_str(self) -> &'static str {
        match self {
            BoundStatus::Satisfied => "true",
            BoundStatus::Violated => "false",
            BoundStatus::NotApplicable => "",
            BoundStatus::Failed => "failed",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "true" => BoundStatus::Satisfied,
            "false" => BoundStatus::Violated,
            "" => BoundStatus::NotApplicable,
            "failed" => BoundStatus::Failed,
            _ => return None,
        })
    }
}

pub const RESULTS_HEADER: [&str; 12] = [
    "algorithm",
    "sweep_param",
    "sweep_value",
    "total",
    "tracking",
    "adversarial",
    "switching",
    "cr_vs_opt",
    "df_vs_iga",
    "bound_name",
    "bound_value",
    "bound_satisfied",
];

/// Sweep label used when the config has no sweep.
pub const NO_SWEEP: &str = "none";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub algorithm: String,
    pub sweep_param: String,
    pub sweep_value: Option<f64>,
    pub cost: Option<CostBreakdown>,
    pub cr_vs_opt: Option<f64>,
    pub df_vs_iga: Option<f64>,
    pub bound_name: String,
    pub bound_value: Option<f64>,
    pub bound_status: BoundStatus,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_results_csv<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(RESULTS_HEADER).map_err(csv_write_err)?;
    for r in rows {
        let c = r.cost.as_ref();
        wtr.write_record([
            r.algorithm.clone(),
            r.sweep_param.clone(),
            fmt_opt(r.sweep_value),
            fmt_opt(c.map(|c| c.total)),
            fmt_opt(c.map(|c| c.tracking)),
            fmt_opt(c.map(|c| c.adversarial)),
            fmt_opt(c.map(|c| c.switching)),
            fmt_opt(r.cr_vs_opt),
            fmt_opt(r.df_vs_iga),
            r.bound_name.clone(),
            fmt_opt(r.bound_value),
            r.bound_status.as_str().to_string(),
        ])
        .map_err(csv_write_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<results>", e))?;
    Ok(())
}

/// Parses a results CSV, requiring the exact header.
pub fn read_results_csv<R: Read>(reader: R, source_name: &str) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let err = |line: u64, reason: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        reason,
    };
    let headers = rdr
        .headers()
        .map_err(|e| err(csv_line(&e), e.to_string()))?
        .clone();
    if headers.iter().ne(RESULTS_HEADER) {
        return Err(err(
            1,
            format!("expected header `{}`", RESULTS_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(csv_line(&e), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |k: usize| -> Result<Option<f64>> {
            match &rec[k] {
                "" => Ok(None),
                s => parse_finite(s)
                    .map(Some)
                    .ok_or_else(|| err(line, format!("bad {} `{s}`", RESULTS_HEADER[k]))),
            }
        };
        if rec[0].is_empty() || rec[1].is_empty() {
            return Err(err(
                line,
                "algorithm and sweep_param must be non-empty".into(),
            ));
        }
        let parts = [num(3)?, num(4)?, num(5)?, num(6)?];
        let cost = match parts {
            [Some(total), Some(tracking), Some(adversarial), Some(switching)] => {
                Some(CostBreakdown {
                    tracking,
                    adversarial,
                    switching,
                    total,
                })
            }
            [None, None, None, None] => None,
            _ => {
                return Err(err(
                    line,
                    "cost columns must be all present or all empty".into(),
                ))
            }
        };
        let bound_status = BoundStatus::parse(&rec[11])
            .ok_or_else(|| err(line, format!("bad bound_satisfied `{}`", &rec[11])))?;
        rows.push(ResultRow {
            algorithm: rec[0].to_string(),
            sweep_param: rec[1].to_string(),
            sweep_value: num(2)?,
            cost,
            cr_vs_opt: num(7)?,
            df_vs_iga: num(8)?,
            bound_name: rec[9].to_string(),
            bound_value: num(10)?,
            bound_status,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub algorithm: String,
    pub sweep_value: Option<f64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub sweep_value: Option<f64>,
    pub report: BoundReport,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutcome {
    pub rows: Vec<ResultRow>,
    pub reports: Vec<CellReport>,
    pub failures: Vec<CellFailure>,
}

impl ExperimentOutcome {
    pub fn violations(&self) -> impl Iterator<Item = &CellReport> {
        self.reports.iter().filter(|r| r.report.violated())
    }

    /// Results CSV bytes.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_results_csv(&self.rows, &mut buf)?;
        Ok(buf)
    }

    /// Writes `results.csv` into `dir` and returns its path.
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("results.csv");
        let mut file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        file.write_all(&self.to_csv()?)
            .map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

enum LoadedSource {
    Trace(Vec<TraceRecord>, TauSchedule),
    Synthetic(Dynamics, usize),
    Theorem3(Theorem3Spec),
}

struct Cell {
    instance: Instance,
    theta: Option<f64>,
    thm3: Option<(Theorem3Spec, PredictionStream)>,
}

#[derive(Debug, Clone, Copy)]
enum Job {
    Opt,
    Iga,
    Alg(usize),
}

fn load_source(cfg: &ExperimentConfig) -> Result<LoadedSource> {
    Ok(match &cfg.instance_source {
        InstanceSource::Trace {
            path,
            schedule,
            max_slots,
        } => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            let mut records = instances::read_trace_csv(file, &path.display().to_string())?;
            if let Some(n) = max_slots {
                records.truncate(*n);
            }
            LoadedSource::Trace(records, schedule.clone())
        }
        InstanceSource::Synthetic { generator, horizon } => {
            LoadedSource::Synthetic(generator.clone(), *horizon)
        }
        InstanceSource::Theorem3 { .. } => LoadedSource::Theorem3(cfg.theorem3_spec()?),
    })
}

fn build_cell(cfg: &ExperimentConfig, source: &LoadedSource, value: Option<f64>) -> Result<Cell> {
    let mut params = cfg.params.clone();
    let mut theta = None;
    let mut shift = 0.0;
    if let (Some(sweep), Some(v)) = (&cfg.sweep, value) {
        match sweep.param {
            SweepParam::Lambda1 => params.lambda1 = v,
            SweepParam::Lambda2 => params.lambda2 = v,
            SweepParam::W => params.w = v as usize,
            SweepParam::Theta => theta = Some(v),
            SweepParam::TauMeanShift => shift = v,
        }
    }
    let f = cfg.f.clone();
    let (mut instance, thm3) = match source {
        LoadedSource::Trace(records, schedule) => {
            let schedule = schedule.shifted(shift)?;
            shift = 0.0;
            (
                instances::instance_from_trace(records, &schedule, &params, f)?,
                None,
            )
        }
        LoadedSource::Synthetic(dynamics, horizon) => (
            instances::gen_random_instance(cfg.seed, *horizon, &params, dynamics, f)?,
            None,
        ),
        LoadedSource::Theorem3(spec) => {
            let (inst, preds) = instances::gen_theorem3_instance(spec, &params, f)?;
            (inst, Some((spec.clone(), preds)))
        }
    };
    if shift != 0.0 {
        for v in instance.tau.iter_mut().flatten() {
            *v += shift;
        }
    }
    Ok(Cell {
        instance,
        theta,
        thm3,
    })
}

fn predictions(
    cfg: &ExperimentConfig,
    spec: &PredictorSpec,
    cell: &Cell,
) -> Result<PredictionStream> {
    let inst = &cell.instance;
    match spec {
        PredictorSpec::Perfect => Ok(predictors::perfect_predictor(inst)),
        PredictorSpec::Pessimistic => predictors::pessimistic_predictor(inst, &cfg.solver),
        PredictorSpec::Persistence { lag } => predictors::persistence_predictor(inst, *lag),
        PredictorSpec::MovingAverage { window } => {
            predictors::moving_average_predictor(inst, *window)
        }
        PredictorSpec::File { path } => {
            let mut s = predictors::file_predictor(path)?;
            s.u_hat.truncate(inst.horizon());
            Ok(s)
        }
        PredictorSpec::Theorem3 => cell.thm3.as_ref().map(|(_, p)| p.clone()).ok_or_else(|| {
            Error::invalid("predictor", "theorem3 predictions need a theorem3 instance")
        }),
    }
}

fn run_job(cfg: &ExperimentConfig, cell: &Cell, job: Job) -> Result<RunResult> {
    let inst = &cell.instance;
    let s = &cfg.solver;
    match job {
        Job::Opt => solvers::offline_optimal(inst, s),
        Job::Iga => algorithms::run_iga(inst, s),
        Job::Alg(i) => match &cfg.algorithms[i] {
            AlgorithmSpec::Iga => algorithms::run_iga(inst, s),
            AlgorithmSpec::Best => algorithms::run_best(inst, s),
            AlgorithmSpec::Naive => algorithms::run_naive_greedy(inst, s),
            AlgorithmSpec::Pga { predictor } => {
                algorithms::run_pga(inst, &predictions(cfg, predictor, cell)?, s)
            }
            AlgorithmSpec::Cort { predictor, theta } => algorithms::run_cort(
                inst,
                &predictions(cfg, predictor, cell)?,
                cell.theta.unwrap_or(*theta),
                s,
            ),
        },
    }
}

/// Runs OPT, IGA and every configured algorithm on each sweep cell.
///
/// With `sweep = false`, or no sweep in the config, only the base cell runs.
/// Failed runs become `failed` rows without affecting other cells.
pub fn run_experiment(cfg: &ExperimentConfig, sweep: bool) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let source = load_source(cfg)?;
    let (param_label, values): (String, Vec<Option<f64>>) = match (&cfg.sweep, sweep) {
        (Some(s), true) => (
            s.param.to_string(),
            s.values.iter().map(|v| Some(*v)).collect(),
        ),
        _ => (NO_SWEEP.to_string(), vec![None]),
    };
    let cells: Vec<Result<Cell>> = values
        .par_iter()
        .map(|v| build_cell(cfg, &source, *v))
        .collect();

    let mut jobs = vec![Job::Opt, Job::Iga];
    jobs.extend(
        cfg.algorithms
            .iter()
            .enumerate()
            .filter(|(_, a)| !matches!(a, AlgorithmSpec::Iga))
            .map(|(i, _)| Job::Alg(i)),
    );
    let keyed: Vec<(usize, Job)> = (0..cells.len())
        .flat_map(|c| jobs.iter().map(move |j| (c, *j)))
        .collect();
    let results: Vec<Result<RunResult>> = keyed
        .par_iter()
        .map(|&(c, job)| match &cells[c] {
            Ok(cell) => run_job(cfg, cell, job),
            Err(e) => Err(config_err("instance_source", e)),
        })
        .collect();

    let mut out = ExperimentOutcome::default();
    for (c, chunk) in results.chunks(jobs.len()).enumerate() {
        let value = values[c];
        let theta = cells[c].as_ref().ok().and_then(|cell| cell.theta);
        let label = |job: Job| match job {
            Job::Opt => metrics::OPT.to_string(),
            Job::Iga => metrics::IGA.to_string(),
            Job::Alg(i) => cfg.algorithms[i].label(theta),
        };
        let ok: BTreeMap<String, RunResult> = chunk
            .iter()
            .zip(&jobs)
            .filter_map(|(r, j)| r.as_ref().ok().map(|run| (label(*j), run.clone())))
            .collect();
        let mut reports = Vec::new();
        if let Ok(cell) = &cells[c] {
            if ok.contains_key(metrics::OPT) && ok.contains_key(metrics::IGA) && ok.len() > 2 {
                match metrics::bound_suite(&cell.instance, &ok, cell.thm3.as_ref().map(|(s, _)| s))
                {
                    Ok(r) => reports = r,
                    Err(e) => out.failures.push(CellFailure {
                        algorithm: "bound_suite".into(),
                        sweep_value: value,
                        error: e.to_string(),
                    }),
                }
            }
        }
        let opt_cost = ok.get(metrics::OPT).map(RunResult::cost);
        let iga_cost = ok.get(metrics::IGA).map(RunResult::cost);
        for (r, job) in chunk.iter().zip(&jobs) {
            let name = label(*job);
            let row = match r {
                Ok(run) => {
                    let bound = reports
                        .iter()
                        .find(|b| b.subject == name && b.name.starts_with("thm"));
                    ResultRow {
                        algorithm: name,
                        sweep_param: param_label.clone(),
                        sweep_value: value,
                        cost: Some(CostBreakdown::sum(&run.per_step)),
                        cr_vs_opt: opt_cost.and_then(|o| metrics::empirical_ratio(run.cost(), o)),
                        df_vs_iga: iga_cost.and_then(|i| metrics::empirical_ratio(run.cost(), i)),
                        bound_name: bound.map(|b| b.name.clone()).unwrap_or_default(),
                        bound_value: bound.and_then(|b| b.bound_value),
                        bound_status: match bound.and_then(|b| b.satisfied) {
                            Some(true) => BoundStatus::Satisfied,
                            Some(false) => BoundStatus::Violated,
                            None => BoundStatus::NotApplicable,
                        },
                    }
                }
                Err(e) => {
                    out.failures.push(CellFailure {
                        algorithm: name.clone(),
                        sweep_value: value,
                        error: e.to_string(),
                    });
                    ResultRow {
                        algorithm: name,
                        sweep_param: param_label.clone(),
                        sweep_value: value,
                        cost: None,
                        cr_vs_opt: None,
                        df_vs_iga: None,
                        bound_name: String::new(),
                        bound_value: None,
                        bound_status: BoundStatus::Failed,
                    }
                }
            };
            out.rows.push(row);
        }
        out.reports
            .extend(reports.into_iter().map(|report| CellReport {
                sweep_value: value,
                report,
            }));
    }
    Ok(out)
}

/// A failed check in the bounds batch, with the seed that reproduces it.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub family: &'static str,
    pub seed: u64,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} seed {}: {}", self.family, self.seed, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundsOutcome {
    pub instances: usize,
    /// Assertions evaluated, including not-applicable bounds skipped.
    pub checks: usize,
    pub violations: Vec<Violation>,
    /// Runs that errored instead of producing a result.
    pub failures: Vec<Violation>,
}

pub const RANDOM_FAMILY: &str = "random";
pub const THEOREM3_FAMILY: &str = "theorem3";

/// Runs every bound check over the seeded random batch and the lower-bound
/// family described by `cfg.bounds`.
pub fn validate_bounds(cfg: &ExperimentConfig) -> Result<BoundsOutcome> {
    validate_bounds_with(cfg, Best::new)
}

/// As [`validate_bounds`] with a substitute BEST implementation.
#[doc(hidden)]
pub fn validate_bounds_with(
    cfg: &ExperimentConfig,
    make_best: fn(&ProblemParams, &SolverSettings) -> Best,
) -> Result<BoundsOutcome> {
    cfg.validate()?;
    let b = &cfg.bounds;
    let random: Vec<(u64, Result<Checked>)> = (0..b.count as u64)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed.wrapping_add(i);
            let dynamics = &b.dynamics[i as usize % b.dynamics.len()];
            (seed, check_random_instance(cfg, seed, dynamics, make_best))
        })
        .collect();
    let t3 = &b.theorem3;
    let d = cfg.params.d;
    let u0 = vec![t3.u0_norm / (d as f64).sqrt(); d];
    let family: Vec<(u64, Result<Checked>)> = (0..t3.count as u64)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed.wrapping_add(i);
            let spec = instances::sample_theorem3_spec(seed, &u0, t3.horizon, t3.e_min, t3.e_max);
            (seed, check_theorem3_instance(cfg, &spec, make_best))
        })
        .collect();

    let mut out = BoundsOutcome::default();
    for (fam, batch) in [(RANDOM_FAMILY, random), (THEOREM3_FAMILY, family)] {
        for (seed, res) in batch {
            out.instances += 1;
            match res {
                Ok(c) => {
                    out.checks += c.checks;
                    out.violations
                        .extend(c.violations.into_iter().map(|message| Violation {
                            family: fam,
                            seed,
                            message,
                        }));
                }
                Err(e) => out.failures.push(Violation {
                    family: fam,
                    seed,
                    message: e.to_string(),
                }),
            }
        }
    }
    Ok(out)
}

#[derive(Default)]
struct Checked {
    checks: usize,
    violations: Vec<String>,
}

impl Checked {
    fn reports(&mut self, reports: &[BoundReport]) {
        for r in reports {
            self.checks += 1;
            if r.violated() {
                self.violations.push(r.to_string());
            }
        }
    }

    fn check(&mut self, ok: bool, message: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violations.push(message());
        }
    }
}

/// Tolerance for CoRT at zero trust matching BEST.
pub const ZERO_TRUST_TOL: f64 = 1e-10;
/// Slack on the trust-radius invariants.
pub const TRUST_INVARIANT_TOL: f64 = 1e-12;

fn check_random_instance(
    cfg: &ExperimentConfig,
    seed: u64,
    dynamics: &Dynamics,
    make_best: fn(&ProblemParams, &SolverSettings) -> Best,
) -> Result<Checked> {
    let s = &cfg.solver;
    let inst = instances::gen_random_instance(
        seed,
        cfg.bounds.horizon,
        &cfg.params,
        dynamics,
        cfg.f.clone(),
    )?;
    let mut results = BTreeMap::new();
    let mut add = |r: RunResult| {
        results.insert(r.algorithm.clone(), r);
    };
    add(solvers::offline_optimal(&inst, s)?);
    add(algorithms::run_iga(&inst, s)?);
    let best = algorithms::simulate(&mut make_best(&inst.params, s), &inst)?;
    add(best.clone());
    add(algorithms::run_naive_greedy(&inst, s)?);
    let perfect = predictors::perfect_predictor(&inst);
    let streams = [
        perfect.clone(),
        predictors::persistence_predictor(&inst, 1)?,
        predictors::pessimistic_predictor(&inst, s)?,
    ];
    for p in &streams[..2] {
        add(algorithms::run_pga(&inst, p, s)?);
    }
    let mut checked = Checked::default();
    for p in [&streams[2], &perfect] {
        for &theta in &cfg.bounds.thetas {
            let (run, trace) = algorithms::run_cort_traced(&inst, p, theta, s)?;
            check_trust_invariants(&mut checked, &run.algorithm, &inst, &trace, theta);
            if theta == 0.0 {
                let max_gap = run
                    .actions
                    .iter()
                    .flatten()
                    .zip(best.actions.iter().flatten())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                checked.check(max_gap <= ZERO_TRUST_TOL, || {
                    format!("{} differs from best by {max_gap:e}", run.algorithm)
                });
            }
            add(run);
        }
    }
    checked.reports(&metrics::bound_suite(&inst, &results, None)?);
    Ok(checked)
}

fn check_theorem3_instance(
    cfg: &ExperimentConfig,
    spec: &Theorem3Spec,
    make_best: fn(&ProblemParams, &SolverSettings) -> Best,
) -> Result<Checked> {
    let s = &cfg.solver;
    let (inst, preds) = instances::gen_theorem3_instance(spec, &cfg.params, cfg.f.clone())?;
    let mut results = BTreeMap::new();
    for r in [
        solvers::offline_optimal(&inst, s)?,
        algorithms::run_iga(&inst, s)?,
        algorithms::simulate(&mut make_best(&inst.params, s), &inst)?,
        algorithms::run_pga(&inst, &preds, s)?,
    ] {
        results.insert(r.algorithm.clone(), r);
    }
    let mut checked = Checked::default();
    checked.reports(&metrics::bound_suite(&inst, &results, Some(spec))?);
    Ok(checked)
}

/// `|u_tilde_t - x_t| <= theta D_t` and `D_{t+1}^2 >= |u_t - x_t|^2`.
pub fn trust_invariant_gaps(
    inst: &Instance,
    trace: &algorithms::CortTrace,
    theta: f64,
) -> (f64, f64) {
    let mut radius_gap = f64::NEG_INFINITY;
    let mut growth_gap = f64::NEG_INFINITY;
    for t in 0..inst.horizon() {
        let x = &trace.best_actions[t];
        let dist = crate::vector::dist(&trace.clipped[t], x);
        radius_gap = radius_gap.max(dist - theta * trace.d_sq[t].sqrt());
        growth_gap = growth_gap.max(crate::vector::dist_sq(&inst.u[t], x) - trace.d_sq[t + 1]);
    }
    (radius_gap, growth_gap)
}

fn check_trust_invariants(
    checked: &mut Checked,
    name: &str,
    inst: &Instance,
    trace: &algorithms::CortTrace,
    theta: f64,
) {
    let (radius_gap, growth_gap) = trust_invariant_gaps(inst, trace, theta);
    checked.check(radius_gap <= TRUST_INVARIANT_TOL, || {
        format!("{name}: clipped prediction exceeds trust radius by {radius_gap:e}")
    });
    checked.check(growth_gap <= TRUST_INVARIANT_TOL, || {
        format!("{name}: trust accumulator short of |u - x|^2 by {growth_gap:e}")
    });
}
