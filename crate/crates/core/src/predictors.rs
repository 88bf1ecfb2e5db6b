//! Sources of the predicted adversary target `u_hat_t`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algorithms::run_best;
use crate::error::{Error, Result};
use crate::model::Instance;
use crate::solvers::SolverSettings;
use crate::vector::{self, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionStream {
    pub u_hat: Vec<Point>,
    pub source: String,
    /// Built from the true targets of the whole horizon; only for offline
    /// stress tests.
    #[serde(default)]
    pub oracle: bool,
}

impl PredictionStream {
    pub fn new(u_hat: Vec<Point>, source: impl Into<String>) -> Self {
        PredictionStream {
            u_hat,
            source: source.into(),
            oracle: false,
        }
    }

    pub fn len(&self) -> usize {
        self.u_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_hat.is_empty()
    }

    pub fn validate_for(&self, instance: &Instance) -> Result<()> {
        if self.len() != instance.horizon() {
            return Err(Error::LengthMismatch {
                what: "predictions",
                expected: instance.horizon(),
                actual: self.len(),
            });
        }
        for p in &self.u_hat {
            crate::model::check_dim("prediction", instance.dim(), p)?;
        }
        Ok(())
    }

    /// Mean absolute error per coordinate against the true targets.
    pub fn mean_abs_error(&self, truth: &[Point]) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for (p, u) in self.u_hat.iter().zip(truth) {
            for (a, b) in p.iter().zip(u) {
                total += (a - b).abs();
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }
}

pub fn perfect_predictor(instance: &Instance) -> PredictionStream {
    PredictionStream {
        u_hat: instance.u.clone(),
        source: "perfect".into(),
        oracle: true,
    }
}

/// Reflects `u_t` through BEST's action: `u_hat_t = 2 x_t - u_t`.
pub fn pessimistic_predictor(
    instance: &Instance,
    settings: &SolverSettings,
) -> Result<PredictionStream> {
    let best = run_best(instance, settings)?;
    let u_hat = best
        .actions
        .iter()
        .zip(&instance.u)
        .map(|(x, u)| x.iter().zip(u).map(|(xi, ui)| 2.0 * xi - ui).collect())
        .collect();
    Ok(PredictionStream {
        u_hat,
        source: "pessimistic".into(),
        oracle: true,
    })
}

/// `u_hat_t = u_{t-lag}`, zero before enough targets are revealed.
pub fn persistence_predictor(instance: &Instance, lag: usize) -> Result<PredictionStream> {
    if lag == 0 {
        return Err(Error::invalid("lag", "must be at least 1"));
    }
    let d = instance.dim();
    let u_hat = (0..instance.horizon())
        .map(|t| {
            if t >= lag {
                instance.u[t - lag].clone()
            } else {
                vector::zeros(d)
            }
        })
        .collect();
    Ok(PredictionStream::new(u_hat, format!("persistence{lag}")))
}

/// Mean of the last `window` revealed targets, zero-padded.
pub fn moving_average_predictor(instance: &Instance, window: usize) -> Result<PredictionStream> {
    if window == 0 {
        return Err(Error::invalid("window", "must be at least 1"));
    }
    let d = instance.dim();
    let mut sum = vector::zeros(d);
    let mut u_hat = Vec::with_capacity(instance.horizon());
    for t in 0..instance.horizon() {
        u_hat.push(vector::scale(&sum, 1.0 / window as f64));
        vector::axpy(&mut sum, 1.0, &instance.u[t]);
        if t >= window {
            vector::axpy(&mut sum, -1.0, &instance.u[t - window]);
        }
    }
    Ok(PredictionStream::new(
        u_hat,
        format!("moving_average{window}"),
    ))
}

pub fn file_predictor(path: impl AsRef<Path>) -> Result<PredictionStream> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut stream = read_predictions_csv(file, &path.display().to_string())?;
    stream.source = "file".into();
    Ok(stream)
}

/// Parses `slot,uhat_0[,uhat_1,...]`, one row per slot starting at 1.
/// Lines starting with `#` are comments.
pub fn read_predictions_csv<R: Read>(reader: R, source_name: &str) -> Result<PredictionStream> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |line: u64, reason: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        reason,
    };
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(csv_line(&e), e.to_string()))?
        .clone();
    let d = headers.len().saturating_sub(1);
    if d == 0 || &headers[0] != "slot" {
        return Err(parse_err(
            1,
            "expected header `slot,uhat_0[,uhat_1,...]`".into(),
        ));
    }
    for (k, name) in headers.iter().skip(1).enumerate() {
        if name != format!("uhat_{k}") {
            return Err(parse_err(
                1,
                format!("expected column `uhat_{k}`, found `{name}`"),
            ));
        }
    }
    let mut u_hat = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(csv_line(&e), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != d + 1 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", d + 1, rec.len()),
            ));
        }
        let slot: usize = rec[0]
            .parse()
            .map_err(|_| parse_err(line, format!("bad slot `{}`", &rec[0])))?;
        if slot != u_hat.len() + 1 {
            return Err(parse_err(
                line,
                format!("expected slot {}, found {slot}", u_hat.len() + 1),
            ));
        }
        let row = (1..=d)
            .map(|k| {
                parse_finite(&rec[k])
                    .ok_or_else(|| parse_err(line, format!("bad value `{}`", &rec[k])))
            })
            .collect::<Result<Point>>()?;
        u_hat.push(row);
    }
    Ok(PredictionStream::new(u_hat, source_name))
}

pub fn write_predictions_csv<W: Write>(stream: &PredictionStream, writer: W) -> Result<()> {
    let d = stream.u_hat.first().map_or(1, |p| p.len());
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["slot".to_string()];
    header.extend((0..d).map(|k| format!("uhat_{k}")));
    wtr.write_record(&header).map_err(csv_write_err)?;
    for (t, p) in stream.u_hat.iter().enumerate() {
        let mut row = vec![(t + 1).to_string()];
        row.extend(p.iter().map(|v| v.to_string()));
        wtr.write_record(&row).map_err(csv_write_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<predictions>", e))?;
    Ok(())
}

pub(crate) fn parse_finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub(crate) fn csv_line(e: &csv::Error) -> u64 {
    e.position().map_or(0, |p| p.line())
}

pub(crate) fn csv_write_err(e: csv::Error) -> Error {
    Error::io("<csv>", std::io::Error::other(e.to_string()))
}
