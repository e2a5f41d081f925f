//! Largest parameter-set radius for which a condition stays feasible.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditions::{self, ConditionError, ConditionId};
use crate::lpv::{LpvError, SystemSpec};
use crate::sdpfeas::{SolveOptions, Status};

#[derive(Debug, Error)]
pub enum BisectError {
    #[error("bracket invalid: {0}")]
    BracketInvalid(String),
    #[error("non-monotone, report grid: {0:?}")]
    NonMonotone(Vec<Evaluation>),
    #[error("system family has no radius to vary")]
    NoGamma,
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error(transparent)]
    Lpv(#[from] LpvError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub gamma: f64,
    pub status: Status,
    pub margin: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionResult {
    pub condition: ConditionId,
    /// Largest radius with a verified feasible certificate.
    pub gamma_star: f64,
    /// Final `(lo, hi)`: feasible at `lo`, not feasible at `hi`.
    pub bracket: (f64, f64),
    pub evaluations: Vec<Evaluation>,
    /// Equispaced spot checks of monotonicity over the initial bracket.
    pub spot_checks: Vec<Evaluation>,
}

impl BisectionResult {
    /// `γ⋆` to four decimals.
    pub fn formatted(&self) -> String {
        format!("{:.4}", self.gamma_star)
    }
}

/// Solves `condition` on `family` at radius `gamma` with the default margin.
pub fn evaluate(condition: ConditionId, family: &SystemSpec, gamma: f64, opts: &SolveOptions) -> Result<Evaluation, BisectError> {
    let sys = family.with_gamma(gamma).build()?;
    let eps = conditions::default_eps(&sys, condition);
    let a = conditions::analyze(condition, &sys, eps, opts)?;
    Ok(Evaluation {
        gamma,
        status: a.outcome.status,
        margin: a.outcome.margin,
        seconds: a.seconds,
    })
}

/// Bisection on `γ ∈ [lo, hi]`. Inconclusive verdicts count as infeasible.
pub fn bisect_gamma(
    condition: ConditionId,
    family: &SystemSpec,
    lo: f64,
    hi: f64,
    tol: f64,
    opts: &SolveOptions,
) -> Result<BisectionResult, BisectError> {
    if !family.has_gamma() {
        return Err(BisectError::NoGamma);
    }
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(BisectError::BracketInvalid(format!("need 0 < lo < hi, got ({lo}, {hi})")));
    }
    if !(tol > 0.0) {
        return Err(BisectError::BracketInvalid(format!("tol must be positive, got {tol}")));
    }
    let mut evaluations = Vec::new();
    let first = evaluate(condition, family, lo, opts)?;
    let ok = first.status.is_feasible();
    evaluations.push(first);
    if !ok {
        return Err(BisectError::BracketInvalid(format!("{condition} not feasible at lo = {lo}")));
    }
    let last = evaluate(condition, family, hi, opts)?;
    let ok = last.status.is_feasible();
    evaluations.push(last);
    if ok {
        return Err(BisectError::BracketInvalid(format!("{condition} still feasible at hi = {hi}")));
    }

    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        let e = evaluate(condition, family, mid, opts)?;
        if e.status.is_feasible() {
            a = mid;
        } else {
            b = mid;
        }
        evaluations.push(e);
    }

    let spot_checks = (0..5)
        .map(|k| evaluate(condition, family, lo + (hi - lo) * k as f64 / 4.0, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let mut seen_infeasible = false;
    for e in &spot_checks {
        let feasible = e.status.is_feasible();
        if feasible && (seen_infeasible || e.gamma >= b) {
            return Err(BisectError::NonMonotone(spot_checks));
        }
        seen_infeasible |= !feasible;
    }

    Ok(BisectionResult {
        condition,
        gamma_star: a,
        bracket: (a, b),
        evaluations,
        spot_checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpv::case_study_spec;

    #[test]
    fn rejects_bad_brackets() {
        let fam = case_study_spec(1.0);
        let o = SolveOptions::default();
        assert!(matches!(
            bisect_gamma(ConditionId::PolyqsL14, &fam, 1.0, 2.0, 1e-3, &o),
            Err(BisectError::BracketInvalid(_))
        ));
        assert!(matches!(
            bisect_gamma(ConditionId::PolyqsL14, &fam, 0.2, 0.1, 1e-3, &o),
            Err(BisectError::BracketInvalid(_))
        ));
    }

    #[test]
    fn l14_bracket_invariant() {
        let r = bisect_gamma(ConditionId::PolyqsL14, &case_study_spec(1.0), 0.1, 2.0, 1e-3, &SolveOptions::default()).unwrap();
        assert!(r.bracket.1 - r.bracket.0 <= 1e-3);
        assert!((r.gamma_star - 0.684).abs() < 0.01, "{}", r.gamma_star);
        assert_eq!(r.spot_checks.len(), 5);
    }
}
