//! Problem definition and cost evaluation.
//!
//! Slots are stored 0-based (`tau[0]` is slot 1). Everything before slot 1 is
//! the zero pre-history: `x_t = u_t = 0` for `t <= 0`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{self, CompensatedSum, Point};

/// Axis-aligned action box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = DomainBox { lower, upper };
        b.validate()?;
        Ok(b)
    }

    /// `[lo, hi]^d`
    pub fn uniform(d: usize, lo: f64, hi: f64) -> Self {
        DomainBox {
            lower: vec![lo; d],
            upper: vec![hi; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::DimensionMismatch {
                what: "domain bounds",
                expected: self.lower.len(),
                actual: self.upper.len(),
            });
        }
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::invalid(
                    "domain",
                    format!("bad interval [{lo}, {hi}]"),
                ));
            }
        }
        Ok(())
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((v, lo), hi)| *v >= lo - tol && *v <= hi + tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    /// History window length in slots.
    pub w: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainBox>,
}

impl ProblemParams {
    pub fn new(w: usize, lambda1: f64, lambda2: f64, d: usize) -> Result<Self> {
        let p = ProblemParams {
            w,
            lambda1,
            lambda2,
            d,
            domain: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_domain(mut self, domain: DomainBox) -> Result<Self> {
        self.domain = Some(domain);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 > 0.0 && self.lambda1.is_finite()) {
            return Err(Error::invalid(
                "lambda1",
                format!("must be positive, got {}", self.lambda1),
            ));
        }
        if !(self.lambda2 > 0.0 && self.lambda2.is_finite()) {
            return Err(Error::invalid(
                "lambda2",
                format!("must be positive, got {}", self.lambda2),
            ));
        }
        if self.d == 0 {
            return Err(Error::invalid("d", "dimension must be at least 1"));
        }
        if let Some(b) = &self.domain {
            b.validate()?;
            if b.dim() != self.d {
                return Err(Error::DimensionMismatch {
                    what: "domain",
                    expected: self.d,
                    actual: b.dim(),
                });
            }
        }
        Ok(())
    }

    /// `w + 1`, the number of actions averaged by the tracking term.
    pub fn span(&self) -> f64 {
        (self.w + 1) as f64
    }
}

/// The perturbation function `f`, minimized at the origin with `f(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialFunction {
    /// `c * ||x||^2`
    Quadratic { c: f64 },
    /// `c * ||x||^2 + sum_i delta^2 * (sqrt(1 + (x_i / delta)^2) - 1)`.
    /// Not quadratic, so it exercises the iterative solver path.
    PseudoHuber { c: f64, delta: f64 },
}

impl AdversarialFunction {
    pub fn quadratic(c: f64) -> Self {
        AdversarialFunction::Quadratic { c }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AdversarialFunction::Quadratic { c } => {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(Error::invalid("f.c", format!("must be positive, got {c}")));
                }
            }
            AdversarialFunction::PseudoHuber { c, delta } => {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(Error::invalid("f.c", format!("must be positive, got {c}")));
                }
                if !(delta > 0.0 && delta.is_finite()) {
                    return Err(Error::invalid(
                        "f.delta",
                        format!("must be positive, got {delta}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            AdversarialFunction::Quadratic { c } => c * vector::norm_sq(x),
            AdversarialFunction::PseudoHuber { c, delta } => {
                let smooth: f64 = x
                    .iter()
                    .map(|v| {
                        let r = v / delta;
                        // r^2 / (sqrt(1 + r^2) + 1) == sqrt(1 + r^2) - 1 without cancellation
                        delta * delta * r * r / ((1.0 + r * r).sqrt() + 1.0)
                    })
                    .sum();
                c * vector::norm_sq(x) + smooth
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Point {
        match *self {
            AdversarialFunction::Quadratic { c } => vector::scale(x, 2.0 * c),
            AdversarialFunction::PseudoHuber { c, delta } => x
                .iter()
                .map(|v| {
                    let r = v / delta;
                    2.0 * c * v + v / (1.0 + r * r).sqrt()
                })
                .collect(),
        }
    }

    /// Strong-convexity constant `m`.
    pub fn strong_convexity(&self) -> f64 {
        match *self {
            AdversarialFunction::Quadratic { c } => 2.0 * c,
            AdversarialFunction::PseudoHuber { c, .. } => 2.0 * c,
        }
    }

    /// Smoothness constant `ell`.
    pub fn smoothness(&self) -> f64 {
        match *self {
            AdversarialFunction::Quadratic { c } => 2.0 * c,
            AdversarialFunction::PseudoHuber { c, .. } => 2.0 * c + 1.0,
        }
    }

    pub fn quadratic_coefficient(&self) -> Option<f64> {
        match *self {
            AdversarialFunction::Quadratic { c } => Some(c),
            _ => None,
        }
    }
}

/// One complete problem instance: horizon, both target sequences and `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub params: ProblemParams,
    pub tau: Vec<Point>,
    pub u: Vec<Point>,
    pub f: AdversarialFunction,
    /// Optional per-slot override of `f`; must have length `T` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_per_step: Option<Vec<AdversarialFunction>>,
}

impl Instance {
    pub fn new(
        params: ProblemParams,
        tau: Vec<Point>,
        u: Vec<Point>,
        f: AdversarialFunction,
    ) -> Result<Self> {
        let inst = Instance {
            params,
            tau,
            u,
            f,
            f_per_step: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn horizon(&self) -> usize {
        self.tau.len()
    }

    pub fn dim(&self) -> usize {
        self.params.d
    }

    /// `f` at 0-based slot index `t`.
    pub fn f_at(&self, t: usize) -> &AdversarialFunction {
        match &self.f_per_step {
            Some(fs) => &fs[t],
            None => &self.f,
        }
    }

    /// Smallest strong-convexity constant over all slots.
    pub fn strong_convexity(&self) -> f64 {
        match &self.f_per_step {
            Some(fs) => fs
                .iter()
                .map(|f| f.strong_convexity())
                .fold(f64::INFINITY, f64::min),
            None => self.f.strong_convexity(),
        }
    }

    /// Largest smoothness constant over all slots.
    pub fn smoothness(&self) -> f64 {
        match &self.f_per_step {
            Some(fs) => fs.iter().map(|f| f.smoothness()).fold(0.0, f64::max),
            None => self.f.smoothness(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.f.validate()?;
        let t = self.tau.len();
        if t == 0 {
            return Err(Error::invalid("T", "horizon must be positive"));
        }
        if self.u.len() != t {
            return Err(Error::LengthMismatch {
                what: "u",
                expected: t,
                actual: self.u.len(),
            });
        }
        if let Some(fs) = &self.f_per_step {
            if fs.len() != t {
                return Err(Error::LengthMismatch {
                    what: "f_per_step",
                    expected: t,
                    actual: fs.len(),
                });
            }
            for f in fs {
                f.validate()?;
            }
        }
        let d = self.params.d;
        for v in self.tau.iter() {
            check_dim("tau", d, v)?;
        }
        for v in self.u.iter() {
            check_dim("u", d, v)?;
        }
        Ok(())
    }

    /// Copy of the first `len` slots.
    pub fn truncated(&self, len: usize) -> Instance {
        let len = len.min(self.horizon());
        Instance {
            params: self.params.clone(),
            tau: self.tau[..len].to_vec(),
            u: self.u[..len].to_vec(),
            f: self.f.clone(),
            f_per_step: self.f_per_step.as_ref().map(|fs| fs[..len].to_vec()),
        }
    }
}

pub(crate) fn check_dim(what: &'static str, d: usize, v: &[f64]) -> Result<()> {
    if v.len() != d {
        return Err(Error::DimensionMismatch {
            what,
            expected: d,
            actual: v.len(),
        });
    }
    Ok(())
}

/// The last `w` actions (oldest first) plus the previous action.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer {
    window: VecDeque<Point>,
    prev: Point,
    w: usize,
}

impl HistoryBuffer {
    /// Buffer holding the zero pre-history.
    pub fn new(w: usize, d: usize) -> Self {
        HistoryBuffer {
            window: (0..w).map(|_| vector::zeros(d)).collect(),
            prev: vector::zeros(d),
            w,
        }
    }

    pub fn from_window(window: Vec<Point>, prev: Point) -> Self {
        let w = window.len();
        HistoryBuffer {
            window: window.into(),
            prev,
            w,
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        if self.w > 0 {
            self.window.pop_front();
            self.window.push_back(x.to_vec());
        }
        self.prev = x.to_vec();
    }

    pub fn window(&self) -> impl Iterator<Item = &Point> {
        self.window.iter()
    }

    pub fn prev(&self) -> &[f64] {
        &self.prev
    }

    /// `h = sum of the stored w actions`, zero when `w = 0`.
    pub fn sum(&self) -> Point {
        history_sum(self)
    }
}

pub fn history_sum(buffer: &HistoryBuffer) -> Point {
    let mut h = vector::zeros(buffer.prev.len());
    for x in buffer.window() {
        vector::axpy(&mut h, 1.0, x);
    }
    h
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub tracking: f64,
    pub adversarial: f64,
    pub switching: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(tracking: f64, adversarial: f64, switching: f64) -> Self {
        CostBreakdown {
            tracking,
            adversarial,
            switching,
            total: tracking + adversarial + switching,
        }
    }

    pub fn sum<'a>(items: impl IntoIterator<Item = &'a CostBreakdown>) -> CostBreakdown {
        let (mut a, mut b, mut c) = (
            CompensatedSum::default(),
            CompensatedSum::default(),
            CompensatedSum::default(),
        );
        let mut tot = CompensatedSum::default();
        for it in items {
            a.add(it.tracking);
            b.add(it.adversarial);
            c.add(it.switching);
            tot.add(it.total);
        }
        CostBreakdown {
            tracking: a.value(),
            adversarial: b.value(),
            switching: c.value(),
            total: tot.value(),
        }
    }
}

/// Actions and costs for one algorithm on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: String,
    pub actions: Vec<Point>,
    pub per_step: Vec<CostBreakdown>,
    pub total: CostBreakdown,
}

impl RunResult {
    pub fn cost(&self) -> f64 {
        self.total.total
    }
}

/// Cost of a single slot.
pub fn step_cost(
    params: &ProblemParams,
    f: &AdversarialFunction,
    x: &[f64],
    h: &[f64],
    x_prev: &[f64],
    tau: &[f64],
    u: &[f64],
) -> Result<CostBreakdown> {
    let d = params.d;
    check_dim("x", d, x)?;
    check_dim("h", d, h)?;
    check_dim("x_prev", d, x_prev)?;
    check_dim("tau", d, tau)?;
    check_dim("u", d, u)?;
    Ok(step_cost_unchecked(params, f, x, h, x_prev, tau, u))
}

pub(crate) fn step_cost_unchecked(
    params: &ProblemParams,
    f: &AdversarialFunction,
    x: &[f64],
    h: &[f64],
    x_prev: &[f64],
    tau: &[f64],
    u: &[f64],
) -> CostBreakdown {
    let span = params.span();
    let tracking: f64 = x
        .iter()
        .zip(h)
        .zip(tau)
        .map(|((xi, hi), ti)| {
            let r = (xi + hi) / span - ti;
            r * r
        })
        .sum();
    let adversarial = params.lambda1 * f.eval(&vector::sub(x, u));
    let switching = params.lambda2 * vector::dist_sq(x, x_prev);
    CostBreakdown::new(tracking, adversarial, switching)
}

/// Evaluates a whole trajectory from the zero pre-history. The domain is not
/// enforced here.
pub fn trajectory_cost(
    instance: &Instance,
    actions: &[Point],
    algorithm: impl Into<String>,
) -> Result<RunResult> {
    let t_len = instance.horizon();
    if actions.len() != t_len {
        return Err(Error::LengthMismatch {
            what: "actions",
            expected: t_len,
            actual: actions.len(),
        });
    }
    let d = instance.dim();
    for a in actions {
        check_dim("action", d, a)?;
    }
    let params = &instance.params;
    let mut history = HistoryBuffer::new(params.w, d);
    let mut per_step = Vec::with_capacity(t_len);
    for (t, x) in actions.iter().enumerate() {
        let h = history.sum();
        per_step.push(step_cost_unchecked(
            params,
            instance.f_at(t),
            x,
            &h,
            history.prev(),
            &instance.tau[t],
            &instance.u[t],
        ));
        history.push(x);
    }
    let total = CostBreakdown::sum(&per_step);
    Ok(RunResult {
        algorithm: algorithm.into(),
        actions: actions.to_vec(),
        per_step,
        total,
    })
}
