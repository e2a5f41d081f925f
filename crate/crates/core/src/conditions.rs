//! LMI builders for the analysis and synthesis conditions, and their
//! decision-variable counts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io;
use crate::lmi::{AffineExpr, CompiledFeasibility, DecisionVar, LmiError, LmiProblem, VarKind};
use crate::lpv::{LpvError, PolytopicSystem};
use crate::matcore::{self, MatError, Matrix, SymMatrix};
use crate::sdpfeas::{self, FeasibilityOutcome, SolveOptions, Status};

#[derive(Debug, Error)]
pub enum ConditionError {
    #[error("unknown condition id {0:?}")]
    Unknown(String),
    #[error("{0} requires a single-vertex system, got {1} vertices")]
    NotLti(ConditionId, usize),
    #[error("thm2_sampled is a parameter-dependent check; use check_thm2_sampled")]
    Sampled,
    #[error("margin must be positive and finite, got {0}")]
    BadEps(f64),
    #[error("dimensions must be positive")]
    BadDims,
    #[error("grid must not be empty")]
    EmptyGrid,
    #[error("expected {expected} matrices, got {got}")]
    Count { expected: usize, got: usize },
    #[error(transparent)]
    Lmi(#[from] LmiError),
    #[error(transparent)]
    Lpv(#[from] LpvError),
    #[error(transparent)]
    Mat(#[from] MatError),
}

pub type Result<T> = std::result::Result<T, ConditionError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionId {
    PolyqsL12,
    PolyqsL13,
    PolyqsL14,
    DetThm1,
    DetRem1,
    StabNec,
    StabThm3,
    SynthT43,
    SynthT44,
    SynthDaafouz,
    LtiDet,
    LtiStab,
    Thm2Sampled,
}

impl ConditionId {
    pub const ALL: [ConditionId; 13] = [
        ConditionId::PolyqsL12,
        ConditionId::PolyqsL13,
        ConditionId::PolyqsL14,
        ConditionId::DetThm1,
        ConditionId::DetRem1,
        ConditionId::StabNec,
        ConditionId::StabThm3,
        ConditionId::SynthT43,
        ConditionId::SynthT44,
        ConditionId::SynthDaafouz,
        ConditionId::LtiDet,
        ConditionId::LtiStab,
        ConditionId::Thm2Sampled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConditionId::PolyqsL12 => "polyqs_l12",
            ConditionId::PolyqsL13 => "polyqs_l13",
            ConditionId::PolyqsL14 => "polyqs_l14",
            ConditionId::DetThm1 => "det_thm1",
            ConditionId::DetRem1 => "det_rem1",
            ConditionId::StabNec => "stab_nec",
            ConditionId::StabThm3 => "stab_thm3",
            ConditionId::SynthT43 => "synth_t43",
            ConditionId::SynthT44 => "synth_t44",
            ConditionId::SynthDaafouz => "synth_daafouz",
            ConditionId::LtiDet => "lti_det",
            ConditionId::LtiStab => "lti_stab",
            ConditionId::Thm2Sampled => "thm2_sampled",
        }
    }

    /// Whether the certificate's symmetric variables are `S̄_i` (inverse
    /// Lyapunov matrices) rather than `P̄_i`.
    pub fn uses_s(self) -> bool {
        !matches!(
            self,
            ConditionId::PolyqsL13 | ConditionId::DetThm1 | ConditionId::DetRem1 | ConditionId::LtiDet
        )
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditionId {
    type Err = ConditionError;
    fn from_str(s: &str) -> Result<Self> {
        ConditionId::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ConditionError::Unknown(s.to_string()))
    }
}

/// Handles of the declared variables, indexed by vertex.
#[derive(Debug, Clone, Default)]
pub struct ConditionVars {
    /// `P̄_i` or `S̄_i`.
    pub sym: Vec<DecisionVar>,
    pub x: Vec<DecisionVar>,
    pub y: Vec<DecisionVar>,
    pub z: Vec<DecisionVar>,
    pub x2: Vec<Vec<DecisionVar>>,
    pub y2: Vec<Vec<DecisionVar>>,
}

#[derive(Debug, Clone)]
pub struct BuiltCondition {
    pub condition: ConditionId,
    pub problem: LmiProblem,
    pub vars: ConditionVars,
}

/// Solved certificate matrices, in the layout of [`ConditionVars`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub schema_version: u32,
    pub condition: ConditionId,
    /// `"P"` or `"S"`.
    pub sym_kind: String,
    #[serde(with = "io::matrix_vec_serde")]
    pub sym: Vec<Matrix>,
    #[serde(with = "io::matrix_vec_serde", default)]
    pub x: Vec<Matrix>,
    #[serde(with = "io::matrix_vec_serde", default)]
    pub y: Vec<Matrix>,
    #[serde(with = "io::matrix_vec_serde", default)]
    pub z: Vec<Matrix>,
    #[serde(with = "io::matrix_grid_serde", default)]
    pub x2: Vec<Vec<Matrix>>,
    #[serde(with = "io::matrix_grid_serde", default)]
    pub y2: Vec<Vec<Matrix>>,
    /// Verified smallest block eigenvalue of the solved problem.
    pub margin: f64,
}

impl Certificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, io::IoError> {
        let c: Certificate = serde_json::from_str(text)?;
        io::check_version(c.schema_version)?;
        Ok(c)
    }

    /// Symmetric matrices as `SymMatrix`.
    pub fn sym_matrices(&self) -> std::result::Result<Vec<SymMatrix>, MatError> {
        self.sym.iter().map(|m| SymMatrix::new(m.clone())).collect()
    }

    /// Lyapunov matrices `P̄_i`, inverting `S̄_i` when needed.
    pub fn p_matrices(&self) -> std::result::Result<Vec<SymMatrix>, MatError> {
        let s = self.sym_matrices()?;
        if self.sym_kind == "S" {
            s.iter().map(|m| m.inverse_pd()).collect()
        } else {
            Ok(s)
        }
    }

    /// Inverse Lyapunov matrices `S̄_i`.
    pub fn s_matrices(&self) -> std::result::Result<Vec<SymMatrix>, MatError> {
        let s = self.sym_matrices()?;
        if self.sym_kind == "P" {
            s.iter().map(|m| m.inverse_pd()).collect()
        } else {
            Ok(s)
        }
    }
}

impl BuiltCondition {
    pub fn compile(&self) -> Result<CompiledFeasibility> {
        Ok(self.problem.compile()?)
    }

    pub fn certificate(&self, compiled: &CompiledFeasibility, x: &[f64], margin: f64) -> Result<Certificate> {
        let one = |vs: &[DecisionVar]| -> Result<Vec<Matrix>> {
            vs.iter().map(|v| Ok(compiled.var_value(v.id, x)?)).collect()
        };
        let grid = |vs: &[Vec<DecisionVar>]| -> Result<Vec<Vec<Matrix>>> { vs.iter().map(|r| one(r)).collect() };
        Ok(Certificate {
            schema_version: io::SCHEMA_VERSION,
            condition: self.condition,
            sym_kind: if self.condition.uses_s() { "S" } else { "P" }.into(),
            sym: one(&self.vars.sym)?,
            x: one(&self.vars.x)?,
            y: one(&self.vars.y)?,
            z: one(&self.vars.z)?,
            x2: grid(&self.vars.x2)?,
            y2: grid(&self.vars.y2)?,
            margin,
        })
    }
}

/// Default strictness margin: `1e-6 · max(1, largest constant entry)`.
pub fn default_eps(sys: &PolytopicSystem, condition: ConditionId) -> f64 {
    let scale = match condition {
        ConditionId::DetThm1 | ConditionId::LtiDet => (sys.c().transpose() * sys.c()).amax(),
        ConditionId::StabNec | ConditionId::StabThm3 | ConditionId::LtiStab => (sys.b() * sys.b().transpose()).amax(),
        _ => 0.0,
    };
    1e-6 * scale.max(1.0)
}

pub fn build(condition: ConditionId, sys: &PolytopicSystem, eps: f64) -> Result<BuiltCondition> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(ConditionError::BadEps(eps));
    }
    let n = sys.n_x();
    let nu = sys.n_u();
    let ny = sys.n_y();
    let nv = sys.num_vertices();
    let a = sys.vertices();
    let b = sys.b();
    let c = sys.c();
    let ctc = c.transpose() * c;
    let bbt = b * b.transpose();
    let mut p = LmiProblem::new();
    let mut v = ConditionVars::default();

    let lti = matches!(condition, ConditionId::LtiDet | ConditionId::LtiStab);
    if lti && nv != 1 {
        return Err(ConditionError::NotLti(condition, nv));
    }
    if condition == ConditionId::Thm2Sampled {
        return Err(ConditionError::Sampled);
    }

    let sym_name = if condition.uses_s() { "S" } else { "P" };
    for i in 0..nv {
        let label = if lti { sym_name.to_string() } else { format!("{sym_name}_{}", i + 1) };
        v.sym.push(p.declare(VarKind::Symmetric(n), label)?);
    }
    let declare_each = |p: &mut LmiProblem, kind: VarKind, name: &str| -> Result<Vec<DecisionVar>> {
        (0..nv)
            .map(|i| Ok(p.declare(kind, format!("{name}_{}", i + 1))?))
            .collect()
    };
    match condition {
        ConditionId::PolyqsL12 | ConditionId::PolyqsL13 | ConditionId::StabThm3 => {
            v.x = declare_each(&mut p, VarKind::Rectangular(n, n), "X")?;
        }
        ConditionId::DetRem1 => {
            v.x = declare_each(&mut p, VarKind::Rectangular(n, n), "X")?;
            v.y = declare_each(&mut p, VarKind::Rectangular(n, ny), "Y")?;
        }
        ConditionId::SynthT43 => {
            v.y = declare_each(&mut p, VarKind::Rectangular(nu, n), "Y")?;
        }
        ConditionId::SynthDaafouz => {
            v.x = declare_each(&mut p, VarKind::Rectangular(n, n), "X")?;
            v.y = declare_each(&mut p, VarKind::Rectangular(nu, n), "Y")?;
        }
        ConditionId::SynthT44 => {
            for i in 0..nv {
                let mut xr = Vec::new();
                let mut yr = Vec::new();
                for j in 0..nv {
                    xr.push(p.declare(VarKind::Rectangular(n, n), format!("X_{}{}", i + 1, j + 1))?);
                    yr.push(p.declare(VarKind::Rectangular(nu, n), format!("Y_{}{}", i + 1, j + 1))?);
                }
                v.x2.push(xr);
                v.y2.push(yr);
            }
            v.z = declare_each(&mut p, VarKind::Rectangular(n, n), "Z")?;
        }
        _ => {}
    }

    let pair_label = |i: usize, j: usize| format!("{condition}[{},{}]", i + 1, j + 1);
    for i in 0..nv {
        let ai = &a[i];
        let ait = ai.transpose();
        for j in 0..nv {
            let e = match condition {
                ConditionId::PolyqsL12 => AffineExpr::blocks(&[n, n])
                    .add_product(0, 0, 1.0, None, &v.x[i], false, None)?
                    .add_congruence(0, -1.0, None, &v.sym[i])?
                    .add_product(1, 0, 1.0, Some(ai), &v.x[i], false, None)?
                    .add_congruence(1, 1.0, None, &v.sym[j])?,
                ConditionId::PolyqsL13 => AffineExpr::blocks(&[n, n])
                    .add_product(0, 0, 1.0, None, &v.x[i], false, None)?
                    .add_congruence(0, -1.0, None, &v.sym[j])?
                    .add_product(1, 0, 1.0, Some(&ait), &v.x[i], true, None)?
                    .add_congruence(1, 1.0, None, &v.sym[i])?,
                ConditionId::PolyqsL14 => AffineExpr::blocks(&[n, n])
                    .add_congruence(0, 1.0, None, &v.sym[i])?
                    .add_product(1, 0, 1.0, Some(ai), &v.sym[i], false, None)?
                    .add_congruence(1, 1.0, None, &v.sym[j])?,
                ConditionId::DetThm1 | ConditionId::LtiDet => AffineExpr::new(n)
                    .add_constant(0, 0, &ctc)?
                    .add_congruence(0, 1.0, None, &v.sym[i])?
                    .add_congruence(0, -1.0, Some(&ait), &v.sym[j])?,
                ConditionId::DetRem1 => AffineExpr::blocks(&[n, n])
                    .add_product(0, 0, 1.0, None, &v.x[i], false, None)?
                    .add_congruence(0, -1.0, None, &v.sym[j])?
                    .add_product(1, 0, 1.0, Some(&ait), &v.x[i], true, None)?
                    .add_product(1, 0, 1.0, Some(&c.transpose()), &v.y[i], true, None)?
                    .add_congruence(1, 1.0, None, &v.sym[i])?,
                ConditionId::StabNec | ConditionId::LtiStab => AffineExpr::new(n)
                    .add_constant(0, 0, &bbt)?
                    .add_congruence(0, 1.0, None, &v.sym[j])?
                    .add_congruence(0, -1.0, Some(ai), &v.sym[i])?,
                ConditionId::StabThm3 => AffineExpr::blocks(&[n, n])
                    .add_constant(0, 0, &bbt)?
                    .add_product(0, 0, 1.0, None, &v.x[i], false, None)?
                    .add_congruence(0, -1.0, Some(ai), &v.sym[i])?
                    .add_product(1, 0, 1.0, None, &v.x[i], false, None)?
                    .add_congruence(1, 1.0, None, &v.sym[j])?,
                ConditionId::SynthT43 => AffineExpr::blocks(&[n, n])
                    .add_congruence(0, 1.0, None, &v.sym[i])?
                    .add_product(1, 0, 1.0, Some(ai), &v.sym[i], false, None)?
                    .add_product(1, 0, 1.0, Some(b), &v.y[i], false, None)?
                    .add_congruence(1, 1.0, None, &v.sym[j])?,
                ConditionId::SynthDaafouz => AffineExpr::blocks(&[n, n])
                    .add_product(0, 0, 1.0, None, &v.x[i], false, None)?
                    .add_congruence(0, -1.0, None, &v.sym[i])?
                    .add_product(1, 0, 1.0, Some(ai), &v.x[i], false, None)?
                    .add_product(1, 0, 1.0, Some(b), &v.y[i], false, None)?
                    .add_congruence(1, 1.0, None, &v.sym[j])?,
                ConditionId::SynthT44 => AffineExpr::blocks(&[n, n, n])
                    .add_product(0, 0, 1.0, None, &v.x2[i][j], false, None)?
                    .add_congruence(0, -1.0, None, &v.sym[i])?
                    .add_product(1, 0, 1.0, Some(ai), &v.x2[i][j], false, None)?
                    .add_product(1, 0, 1.0, Some(b), &v.y2[i][j], false, None)?
                    .add_product(1, 1, 1.0, None, &v.z[i], false, None)?
                    .add_product(2, 1, 1.0, None, &v.z[i], false, None)?
                    .add_congruence(2, 1.0, None, &v.sym[j])?,
                ConditionId::Thm2Sampled => unreachable!(),
            };
            let label = if lti { condition.to_string() } else { pair_label(i, j) };
            p.add_constraint(e, eps, label)?;
        }
    }
    if matches!(
        condition,
        ConditionId::DetThm1 | ConditionId::StabNec | ConditionId::LtiDet | ConditionId::LtiStab
    ) {
        for i in 0..nv {
            let e = AffineExpr::new(n).add_congruence(0, 1.0, None, &v.sym[i])?;
            let label = if lti { format!("{sym_name}>0") } else { format!("{sym_name}_{}>0", i + 1) };
            p.add_constraint(e, eps, label)?;
        }
    }
    Ok(BuiltCondition {
        condition,
        problem: p,
        vars: v,
    })
}

/// Closed-form number of scalar decision variables.
pub fn count_decision_vars(condition: ConditionId, nv: usize, nx: usize, nu: usize, ny: usize) -> Result<usize> {
    if nv == 0 || nx == 0 || nu == 0 || ny == 0 {
        return Err(ConditionError::BadDims);
    }
    let sym = nx * (nx + 1) / 2;
    let sq = nx * nx;
    Ok(match condition {
        ConditionId::PolyqsL12 | ConditionId::PolyqsL13 => nv * (sq + sym),
        ConditionId::PolyqsL14 | ConditionId::DetThm1 | ConditionId::StabNec => nv * sym,
        ConditionId::DetRem1 => nv * (sq + sym + nx * ny),
        ConditionId::StabThm3 => nv * (sq + sym),
        ConditionId::SynthT43 => nv * (sym + nx * nu),
        ConditionId::SynthT44 => nv * (nv * (sq + nx * nu) + sq + sym),
        ConditionId::SynthDaafouz => nv * (sq + sym + nx * nu),
        ConditionId::LtiDet | ConditionId::LtiStab => sym,
        ConditionId::Thm2Sampled => return Err(ConditionError::Sampled),
    })
}

/// Smallest eigenvalue of `S(π₊) − A(π)S(π)A(π)ᵀ + BBᵀ` at each grid pair,
/// with `S(π) = (Σ ξ_i(π) P̄_i)⁻¹`.
pub fn check_thm2_sampled(sys: &PolytopicSystem, pbars: &[SymMatrix], grid: &[(Vec<f64>, Vec<f64>)]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(ConditionError::EmptyGrid);
    }
    if pbars.len() != sys.num_vertices() {
        return Err(ConditionError::Count {
            expected: sys.num_vertices(),
            got: pbars.len(),
        });
    }
    let ps: Vec<Matrix> = pbars.iter().map(|p| p.as_matrix().clone()).collect();
    let s_of = |pi: &[f64]| -> Result<Matrix> {
        let p = PolytopicSystem::combine(&sys.xi(pi)?, &ps);
        Ok(matcore::guarded_inverse(&p)?)
    };
    let bbt = sys.b() * sys.b().transpose();
    grid.iter()
        .map(|(pi, pi_next)| {
            let a = sys.evaluate_a(pi)?;
            let m = s_of(pi_next)? - &a * s_of(pi)? * a.transpose() + &bbt;
            Ok(matcore::min_eigenvalue(&SymMatrix::new(m)?))
        })
        .collect()
}

/// Result of solving one condition on one system.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub condition: ConditionId,
    pub outcome: FeasibilityOutcome,
    pub certificate: Option<Certificate>,
    pub num_scalars: usize,
    pub seconds: f64,
}

impl Analysis {
    pub fn status(&self) -> Status {
        self.outcome.status
    }
}

/// Builds, compiles and solves `condition` on `sys`.
pub fn analyze(condition: ConditionId, sys: &PolytopicSystem, eps: f64, opts: &SolveOptions) -> Result<Analysis> {
    let start = std::time::Instant::now();
    let built = build(condition, sys, eps)?;
    let compiled = built.compile()?;
    let outcome = sdpfeas::solve_feasibility(&compiled, opts);
    let certificate = match &outcome.assignment {
        Some(x) if outcome.status == Status::Feasible => Some(built.certificate(&compiled, x, outcome.margin)?),
        _ => None,
    };
    Ok(Analysis {
        condition,
        outcome,
        certificate,
        num_scalars: compiled.num_scalars,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpv::case_study_spec;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn ids_round_trip() {
        for c in ConditionId::ALL {
            assert_eq!(c.as_str().parse::<ConditionId>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.as_str()));
        }
        assert!("nope".parse::<ConditionId>().is_err());
    }

    #[test]
    fn count_examples() {
        assert_eq!(count_decision_vars(ConditionId::PolyqsL14, 2, 4, 1, 1).unwrap(), 20);
        assert_eq!(count_decision_vars(ConditionId::DetRem1, 2, 4, 1, 1).unwrap(), 60);
        assert_eq!(count_decision_vars(ConditionId::SynthT44, 2, 4, 1, 1).unwrap(), 132);
        assert!(count_decision_vars(ConditionId::Thm2Sampled, 2, 4, 1, 1).is_err());
    }

    #[test]
    fn counts_match_compiled_problem() {
        let sys = case_study_spec(0.5).build().unwrap();
        for c in ConditionId::ALL {
            match build(c, &sys, 1e-6) {
                Ok(b) => {
                    let n = b.compile().unwrap().num_scalars;
                    assert_eq!(n, count_decision_vars(c, 2, 4, 1, 1).unwrap(), "{c}");
                }
                Err(ConditionError::NotLti(..)) | Err(ConditionError::Sampled) => {}
                Err(e) => panic!("{c}: {e}"),
            }
        }
    }

    #[test]
    fn thm1_block_is_four_by_four() {
        let sys = case_study_spec(0.5).build().unwrap();
        let b = build(ConditionId::DetThm1, &sys, 1e-6).unwrap();
        assert_eq!(b.problem.constraints()[0].expr.dim(), 4);
        assert_eq!(b.problem.constraints().len(), 4 + 2);
        let b = build(ConditionId::PolyqsL14, &sys, 1e-6).unwrap();
        assert_eq!(b.problem.constraints()[0].expr.dim(), 8);
    }

    #[test]
    fn scalar_lti_examples() {
        let opts = SolveOptions::default();
        let sys = PolytopicSystem::lti(scalar(2.0), scalar(1.0), scalar(1.0)).unwrap();
        for c in [ConditionId::DetThm1, ConditionId::StabNec, ConditionId::LtiDet, ConditionId::LtiStab] {
            let r = analyze(c, &sys, 1e-6, &opts).unwrap();
            assert_eq!(r.status(), Status::Feasible, "{c}");
        }
        let undetectable = PolytopicSystem::lti(scalar(2.0), scalar(0.0), scalar(0.0)).unwrap();
        for c in [ConditionId::LtiDet, ConditionId::LtiStab] {
            let r = analyze(c, &undetectable, 1e-6, &opts).unwrap();
            assert_eq!(r.status(), Status::Infeasible, "{c}: {:?}", r.outcome);
        }
    }

    #[test]
    fn lti_requires_one_vertex() {
        let sys = case_study_spec(0.5).build().unwrap();
        assert!(matches!(build(ConditionId::LtiDet, &sys, 1e-6), Err(ConditionError::NotLti(..))));
        assert!(matches!(build(ConditionId::PolyqsL14, &sys, 0.0), Err(ConditionError::BadEps(_))));
    }

    #[test]
    fn thm2_sampled_scalar() {
        let sys = PolytopicSystem::lti(scalar(2.0), scalar(0.0), scalar(1.0)).unwrap();
        let p = vec![SymMatrix::identity(1)];
        let m = check_thm2_sampled(&sys, &p, &[(vec![1.0], vec![1.0])]).unwrap();
        assert!((m[0] + 3.0).abs() < 1e-12);
        assert!(check_thm2_sampled(&sys, &p, &[]).is_err());
    }
}
