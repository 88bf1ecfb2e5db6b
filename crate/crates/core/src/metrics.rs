//! Empirical ratios and closed-form bound calculators.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::Theorem3Spec;
use crate::model::{AdversarialFunction, Instance, ProblemParams, RunResult};
use crate::vector;

/// Relative slack applied to every bound check.
pub const BOUND_TOLERANCE: f64 = 1e-6;

/// `cost_a / cost_b`, or `None` when the denominator is not positive.
pub fn empirical_ratio(cost_a: f64, cost_b: f64) -> Option<f64> {
    (cost_b > 0.0).then(|| cost_a / cost_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Empirical value must not exceed the bound.
    Upper,
    /// Empirical value must not fall below the bound.
    Lower,
    /// Recorded for inspection, never asserted.
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    /// Run whose cost is measured.
    pub subject: String,
    pub kind: BoundKind,
    pub condition_holds: bool,
    pub bound_value: Option<f64>,
    pub empirical_value: Option<f64>,
    /// `None` when the check does not apply.
    pub satisfied: Option<bool>,
}

impl BoundReport {
    pub fn new(
        name: impl Into<String>,
        subject: impl Into<String>,
        kind: BoundKind,
        condition_holds: bool,
        bound_value: Option<f64>,
    ) -> Self {
        BoundReport {
            name: name.into(),
            subject: subject.into(),
            kind,
            condition_holds,
            bound_value,
            empirical_value: None,
            satisfied: None,
        }
    }

    /// Attaches the measured value and evaluates the one-sided check.
    pub fn with_empirical(mut self, empirical: Option<f64>) -> Self {
        self.empirical_value = empirical;
        self.satisfied = match (self.kind, self.condition_holds, self.bound_value, empirical) {
            (BoundKind::Report, ..) | (_, false, ..) | (_, _, None, _) | (_, _, _, None) => None,
            (BoundKind::Upper, true, Some(b), Some(e)) => Some(e <= b * (1.0 + BOUND_TOLERANCE)),
            (BoundKind::Lower, true, Some(b), Some(e)) => Some(e >= b * (1.0 - BOUND_TOLERANCE)),
        };
        self
    }

    pub fn violated(&self) -> bool {
        self.satisfied == Some(false)
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"));
        let status = match self.satisfied {
            Some(true) => "ok",
            Some(false) => "VIOLATED",
            None => "n/a",
        };
        write!(
            f,
            "{} [{}]: empirical {} vs bound {} ({status})",
            self.name,
            self.subject,
            opt(self.empirical_value),
            opt(self.bound_value)
        )
    }
}

/// Competitive-ratio bound for IGA against the offline optimum.
///
/// Applies only when `2 w^2 < 2 + m lambda1 (w + 1)^2`.
pub fn thm1_cr_bound(params: &ProblemParams, m: f64) -> BoundReport {
    let w = params.w as f64;
    let s2 = params.span() * params.span();
    let denom = m * params.lambda1 * s2 + 2.0 - 2.0 * w * w;
    let condition = denom > 0.0;
    let bound = condition.then(|| 1.0 + 2.0 * (params.lambda2 * s2 + w * w) / denom);
    BoundReport::new("thm1_cr_iga", IGA, BoundKind::Upper, condition, bound)
}

/// `eta = 2 / (w + 1)^2 + m lambda1 + 2 lambda2`.
pub fn eta(params: &ProblemParams, m: f64) -> f64 {
    2.0 / (params.span() * params.span()) + m * params.lambda1 + 2.0 * params.lambda2
}

/// Strong-convexity modulus of the per-step objective after minimizing out
/// the adversarial target: `m lambda1 (1 - m lambda1 / eta)`.
pub fn eta2(params: &ProblemParams, m: f64) -> f64 {
    let ml = m * params.lambda1;
    ml * (1.0 - ml / eta(params, m))
}

/// Degradation-factor bound for BEST relative to IGA.
pub fn thm2_df_bound(params: &ProblemParams, m: f64, ell: f64) -> BoundReport {
    let e = eta(params, m);
    let ml = m * params.lambda1;
    let bound = 1.0
        + (ell / m) * (e * e + 2.0 * params.lambda1 * ell * (1.0 + params.lambda2))
            / (e * (e - ml));
    BoundReport::new(
        "thm2_df_best",
        "best",
        BoundKind::Upper,
        e > ml,
        Some(bound),
    )
}

/// Lower bound on `Cost(PGA) / Cost(IGA)` for the instance built from `spec`:
/// `1 + m sum (e_t - e_min)^2 / (2 sum_t f(e_min u0 / |u0|))`.
pub fn thm3_lower_bound(m: f64, spec: &Theorem3Spec, f: &AdversarialFunction) -> Result<f64> {
    spec.validate()?;
    let offset = vector::scale(&spec.direction(), spec.e_min);
    let denom = 2.0 * spec.errors.len() as f64 * f.eval(&offset);
    if !(denom > 0.0) {
        return Err(Error::invalid(
            "e_min",
            "adversarial cost at the offset target is zero",
        ));
    }
    let num: f64 = spec.errors.iter().map(|e| (e - spec.e_min).powi(2)).sum();
    Ok(1.0 + m * num / denom)
}

/// Additive consistency term of CoRT:
/// `2 lambda1 lambda2 ell^2 / (m eta (eta - m lambda1)) * theta^2 / (1 + theta^2)`.
pub fn thm4_consistency_term(params: &ProblemParams, m: f64, ell: f64, theta: f64) -> Result<f64> {
    if !(theta >= 0.0) {
        return Err(Error::invalid("theta", "must be non-negative"));
    }
    let e = eta(params, m);
    let base =
        2.0 * params.lambda1 * params.lambda2 * ell * ell / (m * e * (e - m * params.lambda1));
    if theta.is_infinite() {
        return Ok(base);
    }
    Ok(base * theta * theta / (1.0 + theta * theta))
}

/// Baseline keys expected by [`bound_suite`].
pub const OPT: &str = "opt";
pub const IGA: &str = "iga";

/// Parses the trust parameter out of a `cort:<source>:<theta>` run name.
pub fn cort_theta(name: &str) -> Option<f64> {
    name.strip_prefix("cort:")?.rsplit_once(':')?.1.parse().ok()
}

/// Every applicable bound for one instance.
///
/// `results` must hold `opt`, `iga` and at least one other run. `thm3` marks
/// the instance as a lower-bound construction, enabling the PGA check.
pub fn bound_suite(
    instance: &Instance,
    results: &BTreeMap<String, RunResult>,
    thm3: Option<&Theorem3Spec>,
) -> Result<Vec<BoundReport>> {
    let mut missing: Vec<String> = [OPT, IGA]
        .iter()
        .filter(|k| !results.contains_key(**k))
        .map(|k| k.to_string())
        .collect();
    if !results.keys().any(|k| k != OPT && k != IGA) {
        missing.push("online algorithm".into());
    }
    if !missing.is_empty() {
        return Err(Error::MissingBaselines(missing));
    }
    let params = &instance.params;
    let m = instance.strong_convexity();
    let ell = instance.smoothness();
    let opt = results[OPT].cost();
    let iga = results[IGA].cost();
    let mut reports = vec![thm1_cr_bound(params, m).with_empirical(empirical_ratio(iga, opt))];

    for (name, run) in results {
        let df = empirical_ratio(run.cost(), iga);
        if name == "best" {
            reports.push(thm2_df_bound(params, m, ell).with_empirical(df));
        } else if name.starts_with("pga") {
            if let Some(spec) = thm3 {
                let lb = thm3_lower_bound(m, spec, instance.f_at(0))?;
                reports.push(
                    BoundReport::new(
                        "thm3_df_pga",
                        name.as_str(),
                        BoundKind::Lower,
                        true,
                        Some(lb),
                    )
                    .with_empirical(df),
                );
            }
        } else if let Some(theta) = cort_theta(name) {
            let term = thm4_consistency_term(params, m, ell, theta)?;
            reports.push(
                BoundReport::new(
                    "thm4_consistency_cort",
                    name.as_str(),
                    BoundKind::Report,
                    true,
                    Some(term),
                )
                .with_empirical(df),
            );
        }
        if name != OPT {
            // OPT never costs more than any policy.
            let mut r = BoundReport::new(
                format!("opt_le_{name}"),
                name.as_str(),
                BoundKind::Upper,
                true,
                Some(run.cost()),
            );
            r.empirical_value = Some(opt);
            r.satisfied = Some(opt <= run.cost() * (1.0 + BOUND_TOLERANCE));
            reports.push(r);
        }
    }
    Ok(reports)
}
