//! Instance construction: workload traces, synthetic generators and the
//! prediction-error lower-bound family.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AdversarialFunction, Instance, ProblemParams};
use crate::predictors::{csv_line, csv_write_err, parse_finite, PredictionStream};
use crate::vector::{self, Point};

/// Five-minute slots per day.
pub const SLOTS_PER_DAY: usize = 288;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(usize, usize, f64)", into = "(usize, usize, f64)")]
pub struct Band {
    /// First slot of the day covered, inclusive.
    pub start: usize,
    /// Exclusive end slot.
    pub end: usize,
    pub level: f64,
}

impl From<(usize, usize, f64)> for Band {
    fn from((start, end, level): (usize, usize, f64)) -> Self {
        Band { start, end, level }
    }
}

impl From<Band> for (usize, usize, f64) {
    fn from(b: Band) -> Self {
        (b.start, b.end, b.level)
    }
}

/// Piecewise-constant daily target level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauSchedule {
    pub bands: Vec<Band>,
    #[serde(default = "default_slots_per_day")]
    pub slots_per_day: usize,
}

fn default_slots_per_day() -> usize {
    SLOTS_PER_DAY
}

impl Default for TauSchedule {
    /// 0.4 from 8PM to 4AM, 0.3 from 4AM to 12PM, 0.2 from 12PM to 8PM.
    fn default() -> Self {
        TauSchedule {
            bands: vec![
                Band::from((0, 48, 0.4)),
                Band::from((48, 144, 0.3)),
                Band::from((144, 240, 0.2)),
                Band::from((240, 288, 0.4)),
            ],
            slots_per_day: SLOTS_PER_DAY,
        }
    }
}

impl TauSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.slots_per_day == 0 {
            return Err(Error::invalid("schedule.slots_per_day", "must be positive"));
        }
        let mut bands = self.bands.clone();
        bands.sort_by_key(|b| b.start);
        let mut cursor = 0;
        for b in &bands {
            if b.start != cursor || b.end <= b.start {
                return Err(Error::invalid(
                    "schedule.bands",
                    format!(
                        "bands must tile [0, {}) without gaps or overlap (at slot {cursor})",
                        self.slots_per_day
                    ),
                ));
            }
            if !(0.0..=1.0).contains(&b.level) {
                return Err(Error::invalid(
                    "schedule.bands",
                    format!("level {} outside [0, 1]", b.level),
                ));
            }
            cursor = b.end;
        }
        if cursor != self.slots_per_day {
            return Err(Error::invalid(
                "schedule.bands",
                format!("bands end at {cursor}, expected {}", self.slots_per_day),
            ));
        }
        Ok(())
    }

    pub fn level_at(&self, slot: u64) -> f64 {
        let s = (slot % self.slots_per_day as u64) as usize;
        self.bands
            .iter()
            .find(|b| b.start <= s && s < b.end)
            .map(|b| b.level)
            .unwrap_or(0.0)
    }

    /// Daily mean of the level.
    pub fn mean_level(&self) -> f64 {
        self.bands
            .iter()
            .map(|b| b.level * (b.end - b.start) as f64)
            .sum::<f64>()
            / self.slots_per_day as f64
    }

    /// Same bands with every level moved by `offset`.
    pub fn shifted(&self, offset: f64) -> Result<Self> {
        let s = TauSchedule {
            bands: self
                .bands
                .iter()
                .map(|b| Band {
                    level: b.level + offset,
                    ..*b
                })
                .collect(),
            slots_per_day: self.slots_per_day,
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub slot: u64,
    pub utilization: f64,
}

/// Parses `slot,utilization` rows; slots must increase strictly.
pub fn read_trace_csv<R: Read>(reader: R, source_name: &str) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let err = |line: u64, reason: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        reason,
    };
    let headers = rdr
        .headers()
        .map_err(|e| err(csv_line(&e), e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "slot" || &headers[1] != "utilization" {
        return Err(err(1, "expected header `slot,utilization`".into()));
    }
    let mut out: Vec<TraceRecord> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(csv_line(&e), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(err(line, format!("expected 2 fields, found {}", rec.len())));
        }
        let slot: u64 = rec[0]
            .parse()
            .map_err(|_| err(line, format!("bad slot `{}`", &rec[0])))?;
        let utilization = parse_finite(&rec[1])
            .ok_or_else(|| err(line, format!("bad utilization `{}`", &rec[1])))?;
        if !(0.0..=1.0).contains(&utilization) {
            return Err(err(
                line,
                format!("utilization {utilization} outside [0, 1]"),
            ));
        }
        if let Some(last) = out.last() {
            if slot <= last.slot {
                return Err(err(
                    line,
                    format!("slot {slot} does not increase (previous {})", last.slot),
                ));
            }
        }
        out.push(TraceRecord { slot, utilization });
    }
    Ok(out)
}

pub fn write_trace_csv<W: Write>(records: &[TraceRecord], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["slot", "utilization"])
        .map_err(csv_write_err)?;
    for r in records {
        wtr.write_record([r.slot.to_string(), r.utilization.to_string()])
            .map_err(csv_write_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}

/// `u_t = 1 - utilization_t`, `tau_t` from the schedule; `d` must be 1.
pub fn instance_from_trace(
    records: &[TraceRecord],
    schedule: &TauSchedule,
    params: &ProblemParams,
    f: AdversarialFunction,
) -> Result<Instance> {
    schedule.validate()?;
    if params.d != 1 {
        return Err(Error::invalid("d", "trace instances are one-dimensional"));
    }
    if records.is_empty() {
        return Err(Error::invalid("trace", "no records"));
    }
    let tau = records
        .iter()
        .map(|r| vec![schedule.level_at(r.slot)])
        .collect();
    let u = records.iter().map(|r| vec![1.0 - r.utilization]).collect();
    Instance::new(params.clone(), tau, u, f)
}

pub fn load_trace_csv(
    path: impl AsRef<Path>,
    schedule: &TauSchedule,
    params: &ProblemParams,
    f: AdversarialFunction,
) -> Result<Instance> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let records = read_trace_csv(file, &path.display().to_string())?;
    instance_from_trace(&records, schedule, params, f)
}

/// Synthetic cluster-like utilization: a daily sinusoid around 0.7 peaking at
/// 4PM plus Gaussian noise, clamped to `[0, 1]`. The level keeps the free
/// capacity `1 - utilization` near the default schedule in every band.
pub fn demo_trace(seed: u64, days: usize) -> Vec<TraceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.03).expect("valid sigma");
    let n = days * SLOTS_PER_DAY;
    (0..n as u64)
        .map(|slot| {
            let phase = 2.0 * PI * (slot as f64 - 120.0) / SLOTS_PER_DAY as f64;
            let base = 0.7 + 0.1 * phase.sin();
            let utilization = (base + noise.sample(&mut rng)).clamp(0.0, 1.0);
            TraceRecord { slot, utilization }
        })
        .collect()
}

pub const DEMO_TRACE_SEED: u64 = 20_250_101;
pub const DEMO_TRACE_DAYS: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    /// Gaussian increments with the given standard deviation.
    RandomWalk { step_sigma: f64 },
    /// Each coordinate jumps to a random entry of `levels` every `segment_len` slots.
    PiecewiseConstant {
        segment_len: usize,
        levels: Vec<f64>,
    },
}

/// Seeded random instance; values stay in the domain box (`[0, 1]` range for
/// the start when there is none).
pub fn gen_random_instance(
    seed: u64,
    horizon: usize,
    params: &ProblemParams,
    dynamics: &Dynamics,
    f: AdversarialFunction,
) -> Result<Instance> {
    params.validate()?;
    if horizon == 0 {
        return Err(Error::invalid("T", "horizon must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = params.d;
    let (lo, hi): (Point, Point) = match &params.domain {
        Some(b) => (b.lower.clone(), b.upper.clone()),
        None => (vec![0.0; d], vec![1.0; d]),
    };
    let sequence = |rng: &mut ChaCha8Rng| -> Result<Vec<Point>> {
        match dynamics {
            Dynamics::RandomWalk { step_sigma } => {
                if !(*step_sigma >= 0.0) {
                    return Err(Error::invalid("step_sigma", "must be non-negative"));
                }
                let step = Normal::new(0.0, *step_sigma)
                    .map_err(|e| Error::invalid("step_sigma", e.to_string()))?;
                let mut cur: Point = (0..d).map(|k| rng.gen_range(lo[k]..=hi[k])).collect();
                let mut out = Vec::with_capacity(horizon);
                for _ in 0..horizon {
                    out.push(cur.clone());
                    for v in cur.iter_mut() {
                        *v += step.sample(rng);
                    }
                    if let Some(b) = &params.domain {
                        b.project(&mut cur);
                    }
                }
                Ok(out)
            }
            Dynamics::PiecewiseConstant {
                segment_len,
                levels,
            } => {
                if *segment_len == 0 || levels.is_empty() {
                    return Err(Error::invalid(
                        "piecewise_constant",
                        "need segment_len >= 1 and at least one level",
                    ));
                }
                let mut out = Vec::with_capacity(horizon);
                let mut cur = vec![0.0; d];
                for t in 0..horizon {
                    if t % segment_len == 0 {
                        for v in cur.iter_mut() {
                            *v = levels[rng.gen_range(0..levels.len())];
                        }
                        if let Some(b) = &params.domain {
                            b.project(&mut cur);
                        }
                    }
                    out.push(cur.clone());
                }
                Ok(out)
            }
        }
    };
    let tau = sequence(&mut rng)?;
    let u = sequence(&mut rng)?;
    Instance::new(params.clone(), tau, u, f)
}

/// Geometry of the prediction-error lower-bound instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Spec {
    pub u0: Point,
    /// Prediction error `e_t` per slot.
    pub errors: Vec<f64>,
    pub e_min: f64,
}

impl Theorem3Spec {
    pub fn validate(&self) -> Result<()> {
        if vector::norm(&self.u0) == 0.0 || self.u0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("u0", "must be a nonzero finite vector"));
        }
        if !(self.e_min > 0.0) {
            return Err(Error::invalid("e_min", "must be positive"));
        }
        if self.errors.is_empty() {
            return Err(Error::invalid("errors", "need at least one slot"));
        }
        if let Some(e) = self
            .errors
            .iter()
            .find(|e| !(**e >= self.e_min) || !e.is_finite())
        {
            return Err(Error::invalid(
                "errors",
                format!("e_t = {e} below e_min = {}", self.e_min),
            ));
        }
        Ok(())
    }

    pub fn direction(&self) -> Point {
        vector::scale(&self.u0, 1.0 / vector::norm(&self.u0))
    }
}

/// `u_t = u0`, `tau_t = u0 + e_min * dir`, `u_hat_t = u0 + e_t * dir` with
/// `dir = u0 / ||u0||`.
pub fn gen_theorem3_instance(
    spec: &Theorem3Spec,
    params: &ProblemParams,
    f: AdversarialFunction,
) -> Result<(Instance, PredictionStream)> {
    spec.validate()?;
    crate::model::check_dim("u0", params.d, &spec.u0)?;
    let dir = spec.direction();
    let horizon = spec.errors.len();
    let tau_point = vector::add(&spec.u0, &vector::scale(&dir, spec.e_min));
    let instance = Instance::new(
        params.clone(),
        vec![tau_point; horizon],
        vec![spec.u0.clone(); horizon],
        f,
    )?;
    let u_hat = spec
        .errors
        .iter()
        .map(|e| vector::add(&spec.u0, &vector::scale(&dir, *e)))
        .collect();
    Ok((
        instance,
        PredictionStream {
            u_hat,
            source: "theorem3".into(),
            oracle: true,
        },
    ))
}

/// Seeded lower-bound specs with `e_t` uniform in `[e_min, e_max]`.
pub fn sample_theorem3_spec(
    seed: u64,
    u0: &[f64],
    horizon: usize,
    e_min: f64,
    e_max: f64,
) -> Theorem3Spec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Theorem3Spec {
        u0: u0.to_vec(),
        errors: (0..horizon).map(|_| rng.gen_range(e_min..=e_max)).collect(),
        e_min,
    }
}
