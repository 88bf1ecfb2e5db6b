//! Online policies and the simulation loop.
//!
//! Each slot runs three phases: `observe(tau_t, f_t)`, `act()`, then
//! `reveal(u_t)`. Strict policies cannot see `u_t` until `reveal`; IGA is the
//! only relaxed (semi-online) policy and may read it during `observe`.

use crate::error::{Error, Result};
use crate::model::{self, AdversarialFunction, HistoryBuffer, Instance, ProblemParams, RunResult};
use crate::predictors::PredictionStream;
use crate::solvers::{per_step_argmin, SolverSettings, StepProblem};
use crate::vector::{self, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Revelation {
    /// `u_t` is available only after the action is committed.
    Strict,
    /// `u_t` is visible while choosing `x_t`.
    Relaxed,
}

/// What a policy sees before acting in a slot.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    /// 1-based slot number.
    pub slot: usize,
    pub tau: &'a [f64],
    pub f: &'a AdversarialFunction,
    current_u: Option<&'a [f64]>,
}

impl<'a> Observation<'a> {
    /// The current adversary target; fails under strict revelation.
    pub fn adversary_target(&self) -> Result<&'a [f64]> {
        self.current_u.ok_or(Error::Protocol { slot: self.slot })
    }
}

pub trait Policy {
    fn name(&self) -> String;

    fn revelation(&self) -> Revelation {
        Revelation::Strict
    }

    fn observe(&mut self, obs: &Observation<'_>) -> Result<()>;

    fn act(&mut self) -> Result<Point>;

    fn reveal(&mut self, u: &[f64]) -> Result<()>;
}

/// Drives a policy through every slot and prices its actions.
pub fn simulate(policy: &mut dyn Policy, instance: &Instance) -> Result<RunResult> {
    instance.validate()?;
    let relaxed = policy.revelation() == Revelation::Relaxed;
    let domain = instance.params.domain.as_ref();
    let mut actions = Vec::with_capacity(instance.horizon());
    for t in 0..instance.horizon() {
        let obs = Observation {
            slot: t + 1,
            tau: &instance.tau[t],
            f: instance.f_at(t),
            current_u: relaxed.then(|| instance.u[t].as_slice()),
        };
        policy.observe(&obs)?;
        let x = policy.act()?;
        model::check_dim("action", instance.dim(), &x)?;
        if let Some(b) = domain {
            if !b.contains(&x, 1e-12) {
                return Err(Error::OutOfDomain { slot: t + 1 });
            }
        }
        policy.reveal(&instance.u[t])?;
        actions.push(x);
    }
    model::trajectory_cost(instance, &actions, policy.name())
}

/// Pending observation kept between `observe` and `reveal`.
#[derive(Debug, Clone)]
struct Pending {
    tau: Point,
    f: AdversarialFunction,
}

fn take_pending(pending: &Option<Pending>, slot: usize) -> Result<&Pending> {
    pending.as_ref().ok_or(Error::Protocol { slot })
}

/// IGA's trajectory rebuilt from revealed targets; BEST and CoRT read its
/// history `h_hat_t` and previous action `x_hat_{t-1}`.
#[derive(Debug, Clone)]
pub struct IgaReplay {
    params: ProblemParams,
    settings: SolverSettings,
    history: HistoryBuffer,
    h: Point,
}

impl IgaReplay {
    pub fn new(params: &ProblemParams, settings: &SolverSettings) -> Self {
        IgaReplay {
            params: params.clone(),
            settings: *settings,
            history: HistoryBuffer::new(params.w, params.d),
            h: vector::zeros(params.d),
        }
    }

    pub fn history_sum(&self) -> &[f64] {
        &self.h
    }

    pub fn prev(&self) -> &[f64] {
        self.history.prev()
    }

    /// IGA's action for the current slot given the (now known) target `u`.
    pub fn action(&self, tau: &[f64], f: &AdversarialFunction, u: &[f64]) -> Result<Point> {
        per_step_argmin(
            &StepProblem {
                params: &self.params,
                f: Some(f),
                h: &self.h,
                z: self.history.prev(),
                tau,
                u: Some(u),
            },
            &self.settings,
        )
    }

    /// Computes IGA's action for this slot and appends it to the history.
    pub fn advance(&mut self, tau: &[f64], f: &AdversarialFunction, u: &[f64]) -> Result<Point> {
        let x = self.action(tau, f, u)?;
        self.history.push(&x);
        self.h = self.history.sum();
        Ok(x)
    }
}

/// Informed greedy: minimizes the full slot cost knowing `u_t`.
#[derive(Debug, Clone)]
pub struct Iga {
    replay: IgaReplay,
    pending: Option<(Pending, Point)>,
    slot: usize,
}

impl Iga {
    pub fn new(params: &ProblemParams, settings: &SolverSettings) -> Self {
        Iga {
            replay: IgaReplay::new(params, settings),
            pending: None,
            slot: 0,
        }
    }
}

impl Policy for Iga {
    fn name(&self) -> String {
        "iga".into()
    }

    fn revelation(&self) -> Revelation {
        Revelation::Relaxed
    }

    fn observe(&mut self, obs: &Observation<'_>) -> Result<()> {
        self.slot = obs.slot;
        let u = obs.adversary_target()?.to_vec();
        self.pending = Some((
            Pending {
                tau: obs.tau.to_vec(),
                f: obs.f.clone(),
            },
            u,
        ));
        Ok(())
    }

    fn act(&mut self) -> Result<Point> {
        let (p, u) = self
            .pending
            .as_ref()
            .ok_or(Error::Protocol { slot: self.slot })?;
        self.replay.advance(&p.tau, &p.f, u)
    }

    fn reveal(&mut self, _u: &[f64]) -> Result<()> {
        self.pending = None;
        Ok(())
    }
}

/// BEST: drops the adversarial term and anchors on IGA's replayed history.
#[derive(Debug, Clone)]
pub struct Best {
    replay: IgaReplay,
    pending: Option<Pending>,
    slot: usize,
    /// Fault injection: adds an adversarial term centred on the last revealed
    /// target. Only used to check that validation catches a broken BEST.
    stale_adversarial: Option<Point>,
}

impl Best {
    pub fn new(params: &ProblemParams, settings: &SolverSettings) -> Self {
        Best {
            replay: IgaReplay::new(params, settings),
            pending: None,
            slot: 0,
            stale_adversarial: None,
        }
    }

    #[doc(hidden)]
    pub fn with_stale_adversarial_fault(params: &ProblemParams, settings: &SolverSettings) -> Self {
        let mut b = Best::new(params, settings);
        b.stale_adversarial = Some(vector::zeros(params.d));
        b
    }
}

/// BEST's action: tracking and switching only, on IGA's history.
fn best_action(replay: &IgaReplay, tau: &[f64]) -> Result<Point> {
    per_step_argmin(
        &StepProblem {
            params: &replay.params,
            f: None,
            h: replay.history_sum(),
            z: replay.prev(),
            tau,
            u: None,
        },
        &replay.settings,
    )
}

impl Policy for Best {
    fn name(&self) -> String {
        "best".into()
    }

    fn observe(&mut self, obs: &Observation<'_>) -> Result<()> {
        self.slot = obs.slot;
        self.pending = Some(Pending {
            tau: obs.tau.to_vec(),
            f: obs.f.clone(),
        });
        Ok(())
    }

    fn act(&mut self) -> Result<Point> {
        let p = take_pending(&self.pending, self.slot)?;
        match &self.stale_adversarial {
            None => best_action(&self.replay, &p.tau),
            Some(stale) => per_step_argmin(
                &StepProblem {
                    params: &self.replay.params,
                    f: Some(&p.f),
                    h: self.replay.history_sum(),
                    z: self.replay.prev(),
                    tau: &p.tau,
                    u: Some(stale),
                },
                &self.replay.settings,
            ),
        }
    }

    fn reveal(&mut self, u: &[f64]) -> Result<()> {
        let p = self
            .pending
            .take()
            .ok_or(Error::Protocol { slot: self.slot })?;
        self.replay.advance(&p.tau, &p.f, u)?;
        if let Some(stale) = &mut self.stale_adversarial {
            stale.copy_from_slice(u);
        }
        Ok(())
    }
}

/// Greedy without the adversarial term, on its own history.
#[derive(Debug, Clone)]
pub struct NaiveGreedy {
    params: ProblemParams,
    settings: SolverSettings,
    history: HistoryBuffer,
    tau: Option<Point>,
    slot: usize,
}

impl NaiveGreedy {
    pub fn new(params: &ProblemParams, settings: &SolverSettings) -> Self {
        NaiveGreedy {
            params: params.clone(),
            settings: *settings,
            history: HistoryBuffer::new(params.w, params.d),
            tau: None,
            slot: 0,
        }
    }
}

impl Policy for NaiveGreedy {
    fn name(&self) -> String {
        "naive".into()
    }

    fn observe(&mut self, obs: &Observation<'_>) -> Result<()> {
        self.slot = obs.slot;
        self.tau = Some(obs.tau.to_vec());
        Ok(())
    }

    fn act(&mut self) -> Result<Point> {
        let tau = self
            .tau
            .as_ref()
            .ok_or(Error::Protocol { slot: self.slot })?;
        let h = self.history.sum();
        let x = per_step_argmin(
            &StepProblem {
                params: &self.params,
                f: None,
                h: &h,
                z: self.history.prev(),
                tau,
                u: None,
            },
            &self.settings,
        )?;
        self.history.push(&x);
        Ok(x)
    }

    fn reveal(&mut self, _u: &[f64]) -> Result<()> {
        self.tau = None;
        Ok(())
    }
}

/// Greedy that fully trusts the predicted target, on its own history.
#[derive(Debug, Clone)]
pub struct Pga<'s> {
    params: ProblemParams,
    settings: SolverSettings,
    predictions: &'s PredictionStream,
    history: HistoryBuffer,
    pending: Option<Pending>,
    slot: usize,
}

impl<'s> Pga<'s> {
    pub fn new(
        params: &ProblemParams,
        predictions: &'s PredictionStream,
        settings: &SolverSettings,
    ) -> Self {
        Pga {
            params: params.clone(),
            settings: *settings,
            predictions,
            history: HistoryBuffer::new(params.w, params.d),
            pending: None,
            slot: 0,
        }
    }
}

impl Policy for Pga<'_> {
    fn name(&self) -> String {
        format!("pga:{}", self.predictions.source)
    }

    fn observe(&mut self, obs: &Observation<'_>) -> Result<()> {
        self.slot = obs.slot;
        self.pending = Some(Pending {
            tau: obs.tau.to_vec(),
            f: obs.f.clone(),
        });
        Ok(())
    }

    fn act(&mut self) -> Result<Point> {
        let p = take_pending(&self.pending, self.slot)?;
        let u_hat = self
            .predictions
            .u_hat
            .get(self.slot - 1)
            .ok_or(Error::LengthMismatch {
                what: "predictions",
                expected: self.slot,
                actual: self.predictions.len(),
            })?;
        let h = self.history.sum();
        let x = per_step_argmin(
            &StepProblem {
                params: &self.params,
                f: Some(&p.f),
                h: &h,
                z: self.history.prev(),
                tau: &p.tau,
                u: Some(u_hat),
            },
            &self.settings,
        )?;
        self.history.push(&x);
        Ok(x)
    }

    fn reveal(&mut self, _u: &[f64]) -> Result<()> {
        self.pending = None;
        Ok(())
    }
}

/// Per-slot internals of a CoRT run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CortTrace {
    /// BEST's action `x_t` at each slot.
    pub best_actions: Vec<Point>,
    /// Clipped prediction `u_tilde_t`.
    pub clipped: Vec<Point>,
    /// `D_t^2` for `t = 1..=T+1`; the first entry is 0.
    pub d_sq: Vec<f64>,
    /// Whether the prediction was pulled onto the trust sphere.
    pub clip_active: Vec<bool>,
}

/// Trust radius accumulator and parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CortState {
    pub d_sq: f64,
    pub theta: f64,
}

impl CortState {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta >= 0.0) || !theta.is_finite() {
            return Err(Error::invalid(
                "theta",
                format!("must be non-negative, got {theta}"),
            ));
        }
        Ok(CortState { d_sq: 0.0, theta })
    }

    pub fn radius(&self) -> f64 {
        self.theta * self.d_sq.sqrt()
    }

    /// Pulls `u_hat` into the ball of radius `theta * D_t` around `x`.
    /// Returns the clipped target and whether clipping happened.
    pub fn clip(&self, u_hat: &[f64], x: &[f64]) -> (Point, bool) {
        let radius = self.radius();
        let gap = vector::dist(u_hat, x);
        if gap == 0.0 {
            return (x.to_vec(), false);
        }
        if gap >= radius {
            let dir = vector::scale(&vector::sub(u_hat, x), radius / gap);
            (vector::add(x, &dir), true)
        } else {
            (u_hat.to_vec(), false)
        }
    }

    /// `D^2 += ||u - x||^2 - ||u_tilde - x||^2 / theta^2`; the last term is 0 at `theta = 0`.
    pub fn update(&mut self, u: &[f64], x: &[f64], clipped: &[f64]) {
        let mut next = self.d_sq + vector::dist_sq(u, x);
        if self.theta > 0.0 {
            next -= vector::dist_sq(clipped, x) / (self.theta * self.theta);
        }
        self.d_sq = next.max(0.0);
    }
}

/// CoRT: clips the prediction around BEST's action, then solves IGA's
/// problem with the clipped target on IGA's history.
#[derive(Debug, Clone)]
pub struct Cort<'s> {
    replay: IgaReplay,
    predictions: &'s PredictionStream,
    state: CortState,
    pending: Option<Pending>,
    committed: Option<(Point, Point)>,
    trace: CortTrace,
    slot: usize,
}

impl<'s> Cort<'s> {
    pub fn new(
        params: &ProblemParams,
        predictions: &'s PredictionStream,
        theta: f64,
        settings: &SolverSettings,
    ) -> Result<Self> {
        Ok(Cort {
            replay: IgaReplay::new(params, settings),
            predictions,
            state: CortState::new(theta)?,
            pending: None,
            committed: None,
            trace: CortTrace {
                d_sq: vec![0.0],
                ..CortTrace::default()
            },
            slot: 0,
        })
    }

    pub fn state(&self) -> CortState {
        self.state
    }

    pub fn trace(&self) -> &CortTrace {
        &self.trace
    }

    pub fn into_trace(self) -> CortTrace {
        self.trace
    }
}

impl Policy for Cort<'_> {
    fn name(&self) -> String {
        format!("cort:{}:{}", self.predictions.source, self.state.theta)
    }

    fn observe(&mut self, obs: &Observation<'_>) -> Result<()> {
        self.slot = obs.slot;
        self.pending = Some(Pending {
            tau: obs.tau.to_vec(),
            f: obs.f.clone(),
        });
        Ok(())
    }

    fn act(&mut self) -> Result<Point> {
        let p = take_pending(&self.pending, self.slot)?;
        let u_hat = self
            .predictions
            .u_hat
            .get(self.slot - 1)
            .ok_or(Error::LengthMismatch {
                what: "predictions",
                expected: self.slot,
                actual: self.predictions.len(),
            })?;
        let x_best = best_action(&self.replay, &p.tau)?;
        let (clipped, active) = self.state.clip(u_hat, &x_best);
        let x = self.replay.action(&p.tau, &p.f, &clipped)?;
        self.trace.clip_active.push(active);
        self.committed = Some((x_best, clipped));
        Ok(x)
    }

    fn reveal(&mut self, u: &[f64]) -> Result<()> {
        let p = self
            .pending
            .take()
            .ok_or(Error::Protocol { slot: self.slot })?;
        let (x_best, clipped) = self
            .committed
            .take()
            .ok_or(Error::Protocol { slot: self.slot })?;
        self.state.update(u, &x_best, &clipped);
        self.replay.advance(&p.tau, &p.f, u)?;
        self.trace.d_sq.push(self.state.d_sq);
        self.trace.best_actions.push(x_best);
        self.trace.clipped.push(clipped);
        Ok(())
    }
}

/// IGA as a plain loop, without the policy protocol.
pub fn run_iga(instance: &Instance, settings: &SolverSettings) -> Result<RunResult> {
    instance.validate()?;
    let mut replay = IgaReplay::new(&instance.params, settings);
    let actions = (0..instance.horizon())
        .map(|t| replay.advance(&instance.tau[t], instance.f_at(t), &instance.u[t]))
        .collect::<Result<Vec<_>>>()?;
    model::trajectory_cost(instance, &actions, "iga")
}

pub fn run_best(instance: &Instance, settings: &SolverSettings) -> Result<RunResult> {
    simulate(&mut Best::new(&instance.params, settings), instance)
}

pub fn run_naive_greedy(instance: &Instance, settings: &SolverSettings) -> Result<RunResult> {
    simulate(&mut NaiveGreedy::new(&instance.params, settings), instance)
}

fn check_predictions(instance: &Instance, predictions: &PredictionStream) -> Result<()> {
    predictions.validate_for(instance)
}

pub fn run_pga(
    instance: &Instance,
    predictions: &PredictionStream,
    settings: &SolverSettings,
) -> Result<RunResult> {
    check_predictions(instance, predictions)?;
    simulate(
        &mut Pga::new(&instance.params, predictions, settings),
        instance,
    )
}

pub fn run_cort(
    instance: &Instance,
    predictions: &PredictionStream,
    theta: f64,
    settings: &SolverSettings,
) -> Result<RunResult> {
    Ok(run_cort_traced(instance, predictions, theta, settings)?.0)
}

pub fn run_cort_traced(
    instance: &Instance,
    predictions: &PredictionStream,
    theta: f64,
    settings: &SolverSettings,
) -> Result<(RunResult, CortTrace)> {
    check_predictions(instance, predictions)?;
    let mut policy = Cort::new(&instance.params, predictions, theta, settings)?;
    let result = simulate(&mut policy, instance)?;
    Ok((result, policy.into_trace()))
}
