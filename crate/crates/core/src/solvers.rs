//! Strongly convex minimization: the per-step argmin used by every policy,
//! the full-horizon offline optimum and a grid oracle for tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    self, check_dim, AdversarialFunction, DomainBox, Instance, ProblemParams, RunResult,
};
use crate::vector::{self, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    #[default]
    FixedInverseSmoothness,
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Stop once the gradient-mapping norm falls to this value.
    pub grad_tol: f64,
    pub max_iters: usize,
    pub step_rule: StepRule,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            grad_tol: 1e-10,
            max_iters: 100_000,
            step_rule: StepRule::FixedInverseSmoothness,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::invalid("grad_tol", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        Ok(())
    }
}

/// `min_x ||(x+h)/(w+1) - tau||^2 + [lambda1 f(x-u)] + lambda2 ||x-z||^2` over the domain.
#[derive(Debug, Clone, Copy)]
pub struct StepProblem<'a> {
    pub params: &'a ProblemParams,
    /// `None` drops the adversarial term.
    pub f: Option<&'a AdversarialFunction>,
    pub h: &'a [f64],
    /// Switching anchor, normally the previous action.
    pub z: &'a [f64],
    pub tau: &'a [f64],
    pub u: Option<&'a [f64]>,
}

impl<'a> StepProblem<'a> {
    pub fn validate(&self) -> Result<()> {
        match (self.f, self.u) {
            (Some(_), None) => return Err(Error::MissingAdversaryTarget),
            (None, Some(_)) => {
                return Err(Error::invalid(
                    "u",
                    "adversary target given without an adversarial function",
                ))
            }
            _ => {}
        }
        let d = self.params.d;
        check_dim("h", d, self.h)?;
        check_dim("z", d, self.z)?;
        check_dim("tau", d, self.tau)?;
        if let Some(u) = self.u {
            check_dim("u", d, u)?;
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let span = self.params.span();
        let tracking: f64 = x
            .iter()
            .zip(self.h)
            .zip(self.tau)
            .map(|((xi, hi), ti)| {
                let r = (xi + hi) / span - ti;
                r * r
            })
            .sum();
        let adversarial = match (self.f, self.u) {
            (Some(f), Some(u)) => self.params.lambda1 * f.eval(&vector::sub(x, u)),
            _ => 0.0,
        };
        tracking + adversarial + self.params.lambda2 * vector::dist_sq(x, self.z)
    }

    pub fn gradient(&self, x: &[f64]) -> Point {
        let span = self.params.span();
        let mut g: Point = x
            .iter()
            .zip(self.h)
            .zip(self.tau)
            .zip(self.z)
            .map(|(((xi, hi), ti), zi)| {
                2.0 / span * ((xi + hi) / span - ti) + 2.0 * self.params.lambda2 * (xi - zi)
            })
            .collect();
        if let (Some(f), Some(u)) = (self.f, self.u) {
            vector::axpy(&mut g, self.params.lambda1, &f.gradient(&vector::sub(x, u)));
        }
        g
    }

    /// Smoothness constant `2/(w+1)^2 + lambda1*ell + 2*lambda2`.
    pub fn smoothness(&self) -> f64 {
        let span = self.params.span();
        let adv = self.f.map_or(0.0, |f| self.params.lambda1 * f.smoothness());
        2.0 / (span * span) + adv + 2.0 * self.params.lambda2
    }

    /// Unconstrained minimizer when the objective is quadratic, otherwise `None`.
    fn quadratic_minimizer(&self) -> Option<Point> {
        let adv_weight = match self.f {
            None => 0.0,
            Some(f) => self.params.lambda1 * f.quadratic_coefficient()?,
        };
        let span = self.params.span();
        let inv_sq = 1.0 / (span * span);
        let lambda2 = self.params.lambda2;
        let denom = inv_sq + adv_weight + lambda2;
        let x = (0..self.params.d)
            .map(|i| {
                let u_i = self.u.map_or(0.0, |u| u[i]);
                ((span * self.tau[i] - self.h[i]) * inv_sq + adv_weight * u_i + lambda2 * self.z[i])
                    / denom
            })
            .collect();
        Some(x)
    }
}

/// Per-step argmin. Quadratic (or absent) `f` uses the closed form clamped
/// onto the box, which is exact because the objective separates by coordinate.
pub fn per_step_argmin(problem: &StepProblem<'_>, settings: &SolverSettings) -> Result<Point> {
    problem.validate()?;
    if let Some(mut x) = problem.quadratic_minimizer() {
        if let Some(b) = &problem.params.domain {
            b.project(&mut x);
        }
        return Ok(x);
    }
    per_step_argmin_iterative(problem, settings)
}

/// Projected-gradient path for the per-step problem, regardless of `f`.
pub fn per_step_argmin_iterative(
    problem: &StepProblem<'_>,
    settings: &SolverSettings,
) -> Result<Point> {
    problem.validate()?;
    settings.validate()?;
    let mut x0 = problem.z.to_vec();
    if let Some(b) = &problem.params.domain {
        b.project(&mut x0);
    }
    let bounds = problem.params.domain.as_ref().map(|b| Bounds {
        domain: b,
        stride: b.dim(),
    });
    let out = minimize_projected(x0, problem.smoothness(), bounds, settings, false, |x, g| {
        g.copy_from_slice(&problem.gradient(x));
        problem.objective(x)
    })?;
    Ok(out.x)
}

/// Gradient-mapping norm of the per-step problem at `x`, with step `1/L`.
pub fn step_gradient_mapping_norm(problem: &StepProblem<'_>, x: &[f64]) -> f64 {
    let l = problem.smoothness();
    let g = problem.gradient(x);
    let mut next: Point = x.iter().zip(&g).map(|(xi, gi)| xi - gi / l).collect();
    if let Some(b) = &problem.params.domain {
        b.project(&mut next);
    }
    l * vector::dist(x, &next)
}

#[derive(Clone, Copy)]
struct Bounds<'a> {
    domain: &'a DomainBox,
    /// Coordinates repeat with this period in flattened trajectories.
    stride: usize,
}

impl Bounds<'_> {
    fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            let k = i % self.stride;
            *v = v.clamp(self.domain.lower[k], self.domain.upper[k]);
        }
    }
}

struct Minimized {
    x: Point,
    grad_mapping_norm: f64,
}

/// Projected gradient with step `1/L`, optional Nesterov momentum with
/// gradient-based restart, and optional backtracking on `L`.
fn minimize_projected<F>(
    x0: Point,
    lipschitz: f64,
    bounds: Option<Bounds<'_>>,
    settings: &SolverSettings,
    accelerate: bool,
    mut oracle: F,
) -> Result<Minimized>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let project = |v: &mut [f64]| {
        if let Some(b) = &bounds {
            b.project(v);
        }
    };
    let mut lip = match settings.step_rule {
        StepRule::FixedInverseSmoothness => lipschitz,
        StepRule::Backtracking => lipschitz / 16.0,
    };
    let mut x = x0;
    project(&mut x);
    let mut y = x.clone();
    let mut momentum = 1.0f64;
    let mut grad = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut grad_norm = f64::INFINITY;

    for _ in 0..settings.max_iters {
        let fy = oracle(&y, &mut grad);
        loop {
            for i in 0..n {
                next[i] = y[i] - grad[i] / lip;
            }
            project(&mut next);
            if settings.step_rule == StepRule::FixedInverseSmoothness || lip >= lipschitz {
                break;
            }
            let mut scratch = vec![0.0; n];
            let f_next = oracle(&next, &mut scratch);
            let mut lin = 0.0;
            let mut quad = 0.0;
            for i in 0..n {
                let dlt = next[i] - y[i];
                lin += grad[i] * dlt;
                quad += dlt * dlt;
            }
            if f_next <= fy + lin + 0.5 * lip * quad + 1e-15 * fy.abs() {
                break;
            }
            lip = (lip * 2.0).min(lipschitz);
        }
        grad_norm = lip * vector::dist(&y, &next);
        if grad_norm <= settings.grad_tol {
            return Ok(Minimized {
                x: y,
                grad_mapping_norm: grad_norm,
            });
        }
        if !accelerate {
            std::mem::swap(&mut y, &mut next);
            continue;
        }
        // restart when the step opposes the momentum direction
        let restart = (0..n)
            .map(|i| (y[i] - next[i]) * (next[i] - x[i]))
            .sum::<f64>()
            > 0.0;
        let next_momentum = if restart {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt())
        };
        let beta = if restart {
            0.0
        } else {
            (momentum - 1.0) / next_momentum
        };
        for i in 0..n {
            let xi = next[i];
            y[i] = xi + beta * (xi - x[i]);
            x[i] = xi;
        }
        project(&mut y);
        momentum = next_momentum;
    }
    Err(Error::NonConvergence {
        iterations: settings.max_iters,
        grad_norm,
    })
}

/// Full-horizon objective and its gradient for a flattened trajectory.
pub(crate) struct HorizonObjective<'a> {
    instance: &'a Instance,
}

impl<'a> HorizonObjective<'a> {
    pub(crate) fn new(instance: &'a Instance) -> Self {
        HorizonObjective { instance }
    }

    /// Total cost and gradient at the flattened trajectory `x` (length `T*d`).
    pub(crate) fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let inst = self.instance;
        let p = &inst.params;
        let d = p.d;
        let t_len = inst.horizon();
        let span = p.span();
        let w = p.w;

        // running window sums: s_t = sum_{j=t-w}^{t} x_j
        let mut residual = vec![0.0; t_len * d];
        let mut window = vec![0.0; d];
        let mut total = 0.0;
        for t in 0..t_len {
            for k in 0..d {
                window[k] += x[t * d + k];
                if t > w {
                    window[k] -= x[(t - w - 1) * d + k];
                }
                let r = window[k] / span - inst.tau[t][k];
                residual[t * d + k] = r;
                total += r * r;
            }
        }
        // tracking gradient: (2/(w+1)) * sum_{s=t}^{min(t+w,T-1)} r_s
        let mut acc = vec![0.0; d];
        for t in (0..t_len).rev() {
            for k in 0..d {
                acc[k] += residual[t * d + k];
                if t + w + 1 < t_len {
                    acc[k] -= residual[(t + w + 1) * d + k];
                }
                grad[t * d + k] = 2.0 / span * acc[k];
            }
        }
        for t in 0..t_len {
            let xt = &x[t * d..(t + 1) * d];
            let diff = vector::sub(xt, &inst.u[t]);
            let f = inst.f_at(t);
            total += p.lambda1 * f.eval(&diff);
            let gf = f.gradient(&diff);
            for k in 0..d {
                let prev = if t == 0 { 0.0 } else { x[(t - 1) * d + k] };
                let delta = xt[k] - prev;
                total += p.lambda2 * delta * delta;
                let mut g = p.lambda1 * gf[k] + 2.0 * p.lambda2 * delta;
                if t + 1 < t_len {
                    g -= 2.0 * p.lambda2 * (x[(t + 1) * d + k] - xt[k]);
                }
                grad[t * d + k] += g;
            }
        }
        total
    }

    /// Bound on the Hessian norm: tracking <= 2, adversarial <= lambda1*ell,
    /// switching (a path Laplacian) <= 8*lambda2.
    pub(crate) fn smoothness(&self) -> f64 {
        let p = &self.instance.params;
        2.0 + p.lambda1 * self.instance.smoothness() + 8.0 * p.lambda2
    }
}

/// Offline optimum over the whole horizon, constrained to the same domain as
/// the online policies.
pub fn offline_optimal(instance: &Instance, settings: &SolverSettings) -> Result<RunResult> {
    Ok(offline_optimal_certified(instance, settings)?.0)
}

/// Offline optimum together with the final gradient-mapping norm.
pub fn offline_optimal_certified(
    instance: &Instance,
    settings: &SolverSettings,
) -> Result<(RunResult, f64)> {
    instance.validate()?;
    settings.validate()?;
    let d = instance.dim();
    let objective = HorizonObjective::new(instance);
    let mut x0: Point = instance.tau.iter().flatten().copied().collect();
    let bounds = instance.params.domain.as_ref().map(|b| Bounds {
        domain: b,
        stride: d,
    });
    if let Some(b) = &bounds {
        b.project(&mut x0);
    }
    let out = minimize_projected(
        x0,
        objective.smoothness(),
        bounds,
        settings,
        true,
        |x, g| objective.eval(x, g),
    )?;
    let actions: Vec<Point> = out.x.chunks(d).map(|c| c.to_vec()).collect();
    Ok((
        model::trajectory_cost(instance, &actions, "opt")?,
        out.grad_mapping_norm,
    ))
}

/// Exact minimum over a grid on the domain, for `d = 1` and `T <= 5`.
///
/// The search is a dynamic program whose state is the last `max(w, 1)` grid
/// actions, so it visits every grid trajectory implicitly.
pub fn brute_force_optimal(instance: &Instance, grid_resolution: f64) -> Result<RunResult> {
    instance.validate()?;
    let p = &instance.params;
    if p.d != 1 {
        return Err(Error::BruteForceUnsupported(format!(
            "d = {} (need 1)",
            p.d
        )));
    }
    let t_len = instance.horizon();
    if t_len > 5 {
        return Err(Error::BruteForceUnsupported(format!(
            "T = {t_len} (need <= 5)"
        )));
    }
    let domain = p
        .domain
        .as_ref()
        .ok_or_else(|| Error::BruteForceUnsupported("unbounded domain".into()))?;
    if !(grid_resolution > 0.0) {
        return Err(Error::invalid("grid_resolution", "must be positive"));
    }
    let (lo, hi) = (domain.lower[0], domain.upper[0]);
    let steps = ((hi - lo) / grid_resolution + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=steps)
        .map(|i| lo + i as f64 * grid_resolution)
        .collect();
    if *grid.last().unwrap() < hi - 1e-12 {
        grid.push(hi);
    }
    let n = grid.len();
    // state: last `k` actions, index `n` marks the zero pre-history
    let k = p.w.max(1);
    let base = n + 1;
    let states = base
        .checked_pow(k as u32)
        .filter(|s| s.saturating_mul(n).saturating_mul(t_len) <= 500_000_000)
        .ok_or_else(|| {
            Error::BruteForceUnsupported(format!(
                "grid of {n} points with w = {} is too large",
                p.w
            ))
        })?;

    let value_of = |idx: usize| if idx == n { 0.0 } else { grid[idx] };
    let decode = |mut code: usize, out: &mut Vec<usize>| {
        out.clear();
        for _ in 0..k {
            out.push(code % base);
            code /= base;
        }
        out.reverse(); // oldest first
    };
    let top = base.pow(k as u32 - 1);

    let initial: usize = (0..k).fold(0, |acc, _| acc * base + n);
    let mut best = vec![f64::INFINITY; states];
    best[initial] = 0.0;
    let mut back: Vec<Vec<u32>> = Vec::with_capacity(t_len);
    let span = p.span();
    let mut hist = Vec::with_capacity(k);
    for t in 0..t_len {
        let f = instance.f_at(t);
        let tau = instance.tau[t][0];
        let u = instance.u[t][0];
        let mut next = vec![f64::INFINITY; states];
        let mut from = vec![u32::MAX; states];
        for (code, &v) in best.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            decode(code, &mut hist);
            let h: f64 = if p.w == 0 {
                0.0
            } else {
                hist.iter().map(|&i| value_of(i)).sum()
            };
            let prev = value_of(hist[k - 1]);
            let shifted = (code % top) * base;
            for (j, &x) in grid.iter().enumerate() {
                let r = (x + h) / span - tau;
                let c = r * r + p.lambda1 * f.eval(&[x - u]) + p.lambda2 * (x - prev) * (x - prev);
                let nc = shifted + j;
                let cand = v + c;
                if cand < next[nc] {
                    next[nc] = cand;
                    from[nc] = code as u32;
                }
            }
        }
        back.push(from);
        best = next;
    }
    let (mut code, _) = best
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty state space");
    let mut actions = vec![Vec::new(); t_len];
    for t in (0..t_len).rev() {
        actions[t] = vec![grid[code % base]];
        code = back[t][code] as usize;
    }
    model::trajectory_cost(instance, &actions, "brute_force")
}
