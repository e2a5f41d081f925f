//! Strict feasibility of compiled LMI problems.
//!
//! The solver maximizes the common margin `t` in
//!
//! ```text
//! maximize t  subject to  F0 + Σ x_k F_k − t·I ⪰ 0,   |x_k| ≤ R
//! ```
//!
//! and classifies the problem from the outcome:
//!
//! * **feasible** when an assignment is found whose smallest block eigenvalue,
//!   recomputed here independently of the solver, exceeds `eps_feas`;
//! * **infeasible** when a dual multiplier certifies `t⋆ ≤ 0` inside the
//!   trust region;
//! * **inconclusive** otherwise.
//!
//! Any other backend can be plugged in through [`FeasibilitySolver`].

mod dense;
mod ipm;

use serde::{Deserialize, Serialize};

use crate::lmi::{CompiledFeasibility, LmiError};
use crate::matcore;

pub use ipm::InteriorPointSolver;

/// Default trust-region radius on every scalar decision component.
pub const DEFAULT_TRUST_RADIUS: f64 = 1e6;
/// Default margin a verified assignment must exceed to count as feasible.
pub const DEFAULT_EPS_FEAS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Relative duality-gap and residual tolerance.
    pub tol: f64,
    pub eps_feas: f64,
    pub trust_radius: f64,
    /// Optional per-component scaling: component `k` is bounded by
    /// `trust_radius · scaling[k]`.
    pub scaling: Option<Vec<f64>>,
    /// Return as soon as an assignment verifies with margin above
    /// `eps_feas`. When false the margin is maximized to tolerance.
    pub stop_at_feasible: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 100,
            tol: 1e-9,
            eps_feas: DEFAULT_EPS_FEAS,
            trust_radius: DEFAULT_TRUST_RADIUS,
            scaling: None,
            stop_at_feasible: true,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self, num_scalars: usize) -> Result<(), String> {
        if self.max_iterations == 0 {
            return Err("max_iterations must be positive".into());
        }
        for (name, v) in [
            ("tol", self.tol),
            ("eps_feas", self.eps_feas),
            ("trust_radius", self.trust_radius),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if let Some(s) = &self.scaling {
            if s.len() != num_scalars {
                return Err(format!(
                    "scaling has {} entries, expected {num_scalars}",
                    s.len()
                ));
            }
            if s.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err("scaling entries must be positive and finite".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Feasible,
    Infeasible,
    Inconclusive,
}

impl Status {
    /// Verdict used by searches that must stay on the safe side.
    pub fn is_feasible(self) -> bool {
        self == Status::Feasible
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityOutcome {
    pub status: Status,
    /// Best assignment found; present when `status` is feasible.
    pub assignment: Option<Vec<f64>>,
    /// Verified margin of the best assignment (smallest block eigenvalue of
    /// `F(x)`), or the solver's margin estimate when no assignment was kept.
    pub margin: f64,
    /// Certified upper bound on the optimal margin within the trust region.
    pub upper_bound: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostic: Option<String>,
}

/// Plug-in point for feasibility backends.
pub trait FeasibilitySolver {
    fn solve(&self, compiled: &CompiledFeasibility, opts: &SolveOptions) -> FeasibilityOutcome;
}

/// Solves with the bundled interior-point method.
pub fn solve_feasibility(compiled: &CompiledFeasibility, opts: &SolveOptions) -> FeasibilityOutcome {
    InteriorPointSolver.solve(compiled, opts)
}

/// Smallest eigenvalue of every block of `F(x)`, computed directly.
pub fn verify_assignment(compiled: &CompiledFeasibility, x: &[f64]) -> Result<Vec<f64>, LmiError> {
    compiled
        .evaluate(x)?
        .iter()
        .map(|m| matcore::sym_min_eigenvalue(m).map_err(|_| LmiError::NonFinite))
        .collect()
}

/// Builds the final outcome from a solver's best primal point and dual bound,
/// re-verifying the primal point independently.
pub(crate) fn classify(
    compiled: &CompiledFeasibility,
    opts: &SolveOptions,
    x: Option<Vec<f64>>,
    solver_margin: f64,
    upper_bound: f64,
    iterations: usize,
    converged: bool,
    mut diagnostic: Option<String>,
) -> FeasibilityOutcome {
    let verified = x.as_ref().and_then(|x| {
        verify_assignment(compiled, x)
            .ok()
            .map(|m| m.into_iter().fold(f64::INFINITY, f64::min))
    });
    if let (Some(x), Some(margin)) = (x, verified) {
        if margin > opts.eps_feas {
            if !converged && diagnostic.is_none() {
                diagnostic = Some("stopped before convergence; assignment verified".into());
            }
            return FeasibilityOutcome {
                status: Status::Feasible,
                assignment: Some(x),
                margin,
                upper_bound,
                iterations,
                converged,
                diagnostic,
            };
        }
    }
    let status = if upper_bound <= 0.0 {
        Status::Infeasible
    } else {
        Status::Inconclusive
    };
    FeasibilityOutcome {
        status,
        assignment: None,
        margin: verified.unwrap_or(solver_margin),
        upper_bound,
        iterations,
        converged,
        diagnostic,
    }
}
