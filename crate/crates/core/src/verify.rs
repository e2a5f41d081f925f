//! Solver-independent checks of certificates and gains.
//!
//! Nothing here looks at solver output other than the certificate matrices:
//! vertex blocks are re-assembled and their eigenvalues computed directly,
//! and Lyapunov descent is sampled along simulated trajectories.

use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditions::Certificate;
use crate::gains::{GainError, GainSchedule};
use crate::io::{self, IoError};
use crate::lpv::{self, GainLaw, LpvError, ParameterSequence, PolytopicSystem, SimMode};
use crate::matcore::{self, MatError, Matrix};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("mode {0:?} needs a gain")]
    MissingGain(SimMode),
    #[error("certificate has {got} Lyapunov matrices, system has {expected} vertices")]
    Count { expected: usize, got: usize },
    #[error("two-parameter gain needs a non-empty (π, π₊) grid")]
    EmptyGrid,
    #[error("num_seq and horizon must be at least 1")]
    BadSampling,
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error(transparent)]
    Gain(#[from] GainError),
    #[error(transparent)]
    Lpv(#[from] LpvError),
    #[error(transparent)]
    Io(#[from] IoError),
}

pub type Result<T> = std::result::Result<T, VerifyError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub mode: SimMode,
    /// `"vertex"` for vertex pairs, `"grid"` for sampled `(π, π₊)` pairs.
    pub check: String,
    /// `[[S_i, ⋆], [M_i S_i, S_j]]` blocks. On a grid `S(π) = P(π)⁻¹` is an
    /// inverse of a sum of inverses, too inaccurate near the feasibility
    /// boundary to decide anything, so grid entries are informational.
    pub vertex_margins: Vec<Margin>,
    /// `[[P_i, ⋆], [P_j M_i, P_j]]` blocks. Their smallest eigenvalue also
    /// bounds the decrease `V(π,x) − V(π₊,x₊) ≥ δ‖x‖²`.
    pub descent_margins: Vec<Margin>,
    pub a3_used: Option<f64>,
    pub mc_worst_ratio: Option<f64>,
    pub sequences_run: usize,
    pub horizon: usize,
    pub seed: Option<u64>,
    pub pass: bool,
}

impl VerificationReport {
    pub fn min_vertex_margin(&self) -> f64 {
        self.vertex_margins.iter().map(|m| m.value).fold(f64::INFINITY, f64::min)
    }

    pub fn min_descent_margin(&self) -> f64 {
        self.descent_margins.iter().map(|m| m.value).fold(f64::INFINITY, f64::min)
    }

    fn update_pass(&mut self) {
        let s_form_ok = self.check == "grid" || self.vertex_margins.iter().all(|m| m.value > 0.0);
        let vertex_ok = s_form_ok && self.descent_margins.iter().all(|m| m.value > 0.0);
        self.pass = vertex_ok && self.mc_worst_ratio.is_none_or(|r| r <= 0.0);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: VerificationReport = serde_json::from_str(text).map_err(IoError::from)?;
        io::check_version(r.schema_version)?;
        Ok(r)
    }
}

fn lyapunov_pair(cert: &Certificate, nv: usize) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
    if cert.sym.len() != nv {
        return Err(VerifyError::Count {
            expected: nv,
            got: cert.sym.len(),
        });
    }
    // An indefinite certificate has no meaningful inverse; keep the raw
    // matrices so the eigenvalue checks report the failure.
    let raw: Vec<Matrix> = cert.sym.clone();
    let inverted: Vec<Matrix> = raw
        .iter()
        .map(|m| matcore::guarded_inverse(m).unwrap_or_else(|_| Matrix::from_element(m.nrows(), m.ncols(), f64::NAN)))
        .collect();
    Ok(if cert.sym_kind == "S" {
        (inverted, raw)
    } else {
        (raw, inverted)
    })
}

fn block_min(top_left: &Matrix, lower: &Matrix, bottom_right: &Matrix) -> f64 {
    let n = top_left.nrows();
    let mut b = DMatrix::zeros(2 * n, 2 * n);
    b.view_mut((0, 0), (n, n)).copy_from(top_left);
    b.view_mut((n, 0), (n, n)).copy_from(lower);
    b.view_mut((0, n), (n, n)).copy_from(&lower.transpose());
    b.view_mut((n, n), (n, n)).copy_from(bottom_right);
    let b = (&b + b.transpose()) * 0.5;
    matcore::sym_min_eigenvalue(&b).unwrap_or(f64::NEG_INFINITY)
}

/// Checks the vertex blocks of `cert` for the open loop, or for the closed
/// loop or error system under `gain`.
///
/// Gains of the form `Σ ξ_i G_i` are checked on vertex pairs. Two-parameter
/// gains are checked on `grid`, with `P(π) = Σ ξ_i P̄_i` and `S(π) = P(π)⁻¹`.
pub fn check_vertex_certificate(
    sys: &PolytopicSystem,
    cert: &Certificate,
    mode: SimMode,
    gain: Option<&GainSchedule>,
    grid: &[(Vec<f64>, Vec<f64>)],
) -> Result<VerificationReport> {
    let nv = sys.num_vertices();
    let (ps, ss) = lyapunov_pair(cert, nv)?;
    if mode != SimMode::Open && gain.is_none() {
        return Err(VerifyError::MissingGain(mode));
    }
    let gain = if mode == SimMode::Open { None } else { gain };
    let mut report = VerificationReport {
        schema_version: io::SCHEMA_VERSION,
        mode,
        check: "vertex".into(),
        vertex_margins: Vec::new(),
        descent_margins: Vec::new(),
        a3_used: None,
        mc_worst_ratio: None,
        sequences_run: 0,
        horizon: 0,
        seed: None,
        pass: false,
    };
    match gain.map(|g| g.vertex_gains()) {
        None | Some(Some(_)) => {
            let ms: Vec<Matrix> = match gain.and_then(|g| g.vertex_gains()) {
                Some(gs) if gs.len() == 1 && nv > 1 => {
                    sys.vertices().iter().map(|a| sys.effective(a, &gs[0], mode)).collect()
                }
                Some(gs) => sys.vertices().iter().zip(gs).map(|(a, g)| sys.effective(a, g, mode)).collect(),
                None => sys.vertices().to_vec(),
            };
            for i in 0..nv {
                for j in 0..nv {
                    let label = format!("[{},{}]", i + 1, j + 1);
                    report.vertex_margins.push(Margin {
                        label: format!("l14{label}"),
                        value: block_min(&ss[i], &(&ms[i] * &ss[i]), &ss[j]),
                    });
                    report.descent_margins.push(Margin {
                        label: format!("descent{label}"),
                        value: block_min(&ps[i], &(&ps[j] * &ms[i]), &ps[j]),
                    });
                }
            }
        }
        Some(None) => {
            if grid.is_empty() {
                return Err(VerifyError::EmptyGrid);
            }
            report.check = "grid".into();
            let g = gain.expect("gain present");
            for (k, (pi, pn)) in grid.iter().enumerate() {
                let p_now = PolytopicSystem::combine(&sys.xi(pi)?, &ps);
                let p_next = PolytopicSystem::combine(&sys.xi(pn)?, &ps);
                let m = sys.effective(&sys.evaluate_a(pi)?, &g.evaluate(pi, Some(pn))?, mode);
                let s_now = matcore::guarded_inverse(&p_now)?;
                let s_next = matcore::guarded_inverse(&p_next)?;
                report.vertex_margins.push(Margin {
                    label: format!("grid[{k}]"),
                    value: block_min(&s_now, &(&m * &s_now), &s_next),
                });
                report.descent_margins.push(Margin {
                    label: format!("grid_descent[{k}]"),
                    value: block_min(&p_now, &(&p_next * &m), &p_next),
                });
            }
        }
    }
    report.update_pass();
    Ok(report)
}

/// Worst descent ratio `(V(π₊,x₊) − V(π,x) + a₃‖x‖²)/‖x‖²` along one
/// trajectory. Steps with `x = 0` are vacuous and skipped.
pub fn descent_along(ps: &[Matrix], sys: &PolytopicSystem, states: &[DVector<f64>], points: &[Vec<f64>], a3: f64) -> Result<f64> {
    let v = |x: &DVector<f64>, pi: &[f64]| -> Result<f64> {
        let p = PolytopicSystem::combine(&sys.xi(pi)?, ps);
        Ok(x.dot(&(p * x)))
    };
    let mut worst = f64::NEG_INFINITY;
    for k in 0..states.len().saturating_sub(1) {
        let x = &states[k];
        let nx2 = x.norm_squared();
        if nx2 == 0.0 {
            continue;
        }
        let r = (v(&states[k + 1], &points[k + 1])? - v(x, &points[k])? + a3 * nx2) / nx2;
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Samples Lyapunov descent with `V(π,x) = xᵀP(π)x`, `P(π) = Σ ξ_i P̄_i`.
///
/// `a3 = None` uses half the smallest descent margin of the vertex check.
/// Each sequence draws from its own stream of a ChaCha8 generator seeded by
/// `seed`, so results do not depend on evaluation order.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_descent(
    sys: &PolytopicSystem,
    cert: &Certificate,
    mode: SimMode,
    gain: Option<&GainSchedule>,
    num_seq: usize,
    horizon: usize,
    seed: u64,
    a3: Option<f64>,
    grid: &[(Vec<f64>, Vec<f64>)],
) -> Result<VerificationReport> {
    if num_seq == 0 || horizon == 0 {
        return Err(VerifyError::BadSampling);
    }
    let mut report = check_vertex_certificate(sys, cert, mode, gain, grid)?;
    let (ps, _) = lyapunov_pair(cert, sys.num_vertices())?;
    let a3 = a3.unwrap_or_else(|| (0.5 * report.min_descent_margin()).max(0.0));
    let law: Option<&dyn GainLaw> = match mode {
        SimMode::Open => None,
        _ => gain.map(|g| g as &dyn GainLaw),
    };
    let preview = law.is_some_and(|g| g.needs_preview());
    let mut worst = f64::NEG_INFINITY;
    for s in 0..num_seq {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64);
        let x0 = lpv::unit_sphere(sys.n_x(), &mut rng);
        let seq = ParameterSequence::random(sys, horizon + 1, &mut rng);
        let driving = if preview {
            seq.clone()
        } else {
            ParameterSequence {
                points: seq.points[..horizon].to_vec(),
            }
        };
        let traj = sys.simulate(&x0, &driving, &[], law, mode)?;
        worst = worst.max(descent_along(&ps, sys, &traj.states, &seq.points, a3)?);
    }
    report.a3_used = Some(a3);
    report.mc_worst_ratio = Some(worst);
    report.sequences_run = num_seq;
    report.horizon = horizon;
    report.seed = Some(seed);
    report.update_pass();
    Ok(report)
}

/// Eigenstructure answer for an LTI triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LtiTruth {
    pub detectable: bool,
    pub stabilizable: bool,
    /// `min_λ ||λ| − 1|` over the eigenvalues of `A`.
    pub unit_circle_gap: f64,
}

fn rank_deficient(stack: DMatrix<Complex<f64>>) -> bool {
    let scale = stack.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let sv = stack.svd(false, false).singular_values;
    sv.iter().cloned().fold(f64::INFINITY, f64::min) <= 1e-9 * scale
}

/// Hautus test: detectable iff `rank [A − λI; C] = n` for every eigenvalue
/// with `|λ| ≥ 1`, stabilizable iff `rank [A − λI, B] = n` likewise.
pub fn lti_ground_truth(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<LtiTruth> {
    let n = a.nrows();
    matcore::check_square(a)?;
    for got in [b.nrows(), c.ncols()] {
        if got != n {
            return Err(MatError::DimensionMismatch { expected: n, got }.into());
        }
    }
    let cplx = |m: &Matrix| m.map(|v| Complex::new(v, 0.0));
    let (ac, bc, cc) = (cplx(a), cplx(b), cplx(c));
    let mut truth = LtiTruth {
        detectable: true,
        stabilizable: true,
        unit_circle_gap: f64::INFINITY,
    };
    for (re, im) in matcore::eigenvalues(a)? {
        let lam = Complex::new(re, im);
        truth.unit_circle_gap = truth.unit_circle_gap.min((lam.norm() - 1.0).abs());
        if lam.norm() < 1.0 {
            continue;
        }
        let shifted = &ac - DMatrix::from_diagonal_element(n, n, lam);
        let mut obs = DMatrix::zeros(n + c.nrows(), n);
        obs.view_mut((0, 0), (n, n)).copy_from(&shifted);
        obs.view_mut((n, 0), (c.nrows(), n)).copy_from(&cc);
        if rank_deficient(obs) {
            truth.detectable = false;
        }
        let mut ctr = DMatrix::zeros(n, n + b.ncols());
        ctr.view_mut((0, 0), (n, n)).copy_from(&shifted);
        ctr.view_mut((0, n), (n, b.ncols())).copy_from(&bc);
        if rank_deficient(ctr) {
            truth.stabilizable = false;
        }
    }
    Ok(truth)
}
