//! Observer and controller gains reconstructed from solved certificates.
//!
//! Every inverse goes through [`matcore::guarded_inverse`], which refuses
//! matrices with condition number above `1e12`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditions::{Certificate, ConditionId};
use crate::io::{self, IoError, MatrixData};
use crate::lpv::{GainLaw, LpvError, PolytopicSystem, SimMode};
use crate::matcore::{self, MatError, Matrix, SymMatrix};

#[derive(Debug, Error)]
pub enum GainError {
    #[error("certificate of {0} does not define a gain")]
    NoRecipe(ConditionId),
    #[error("certificate is missing {0}")]
    Missing(&'static str),
    #[error("two-parameter gain needs the next parameter")]
    NeedsPreview,
    #[error("{what}: {source}")]
    Singular { what: String, source: MatError },
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error(transparent)]
    Lpv(#[from] LpvError),
    #[error(transparent)]
    Io(#[from] IoError),
}

pub type Result<T> = std::result::Result<T, GainError>;

fn inv(m: &Matrix, what: impl FnOnce() -> String) -> Result<Matrix> {
    matcore::guarded_inverse(m).map_err(|source| GainError::Singular { what: what(), source })
}

fn combine(xi: &[f64], mats: &[Matrix]) -> Matrix {
    PolytopicSystem::combine(xi, mats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainKind {
    Observer,
    Controller,
}

impl GainKind {
    pub fn mode(self) -> SimMode {
        match self {
            GainKind::Observer => SimMode::ErrorSystem,
            GainKind::Controller => SimMode::ClosedLoop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    Thm1,
    Rem1,
    Thm3,
    T43,
    T44,
    Daafouz,
    Lti,
}

/// Vertex gains `−A_i(P̄_i + CᵀC)⁻¹Cᵀ`.
pub fn thm1_vertex_gains(sys: &PolytopicSystem, pbars: &[SymMatrix]) -> Result<Vec<Matrix>> {
    let c = sys.c();
    let ctc = c.transpose() * c;
    sys.vertices()
        .iter()
        .zip(pbars)
        .enumerate()
        .map(|(i, (a, p))| {
            let q = inv(&(p.as_matrix() + &ctc), || format!("P_{} + CᵀC", i + 1))?;
            Ok(-(a * q * c.transpose()))
        })
        .collect()
}

/// `L(π) = −Σ ξ_i(π) A_i(P̄_i + CᵀC)⁻¹Cᵀ`.
pub fn observer_gain_thm1(sys: &PolytopicSystem, pbars: &[SymMatrix], pi: &[f64]) -> Result<Matrix> {
    Ok(combine(&sys.xi(pi)?, &thm1_vertex_gains(sys, pbars)?))
}

/// A gain computed by two algebraically equivalent formulas.
#[derive(Debug, Clone, PartialEq)]
pub struct DualForm {
    pub gain: Matrix,
    pub alternate: Matrix,
}

impl DualForm {
    /// `‖gain − alternate‖ / max(1, ‖gain‖)` in the max-abs norm.
    pub fn relative_gap(&self) -> f64 {
        (&self.gain - &self.alternate).amax() / self.gain.amax().max(1.0)
    }
}

/// `L̄ = −Ā(P̄ + CᵀC)⁻¹Cᵀ` and its Woodbury form `−ĀS̄Cᵀ(I + CS̄Cᵀ)⁻¹`.
pub fn lti_observer_gain(a: &Matrix, c: &Matrix, pbar: &SymMatrix) -> Result<DualForm> {
    let p = pbar.as_matrix();
    let gain = -(a * inv(&(p + c.transpose() * c), || "P + CᵀC".into())? * c.transpose());
    let s = inv(p, || "P".into())?;
    let ny = c.nrows();
    let inner = inv(&(Matrix::identity(ny, ny) + c * &s * c.transpose()), || "I + CSCᵀ".into())?;
    let alternate = -(a * s * c.transpose() * inner);
    Ok(DualForm { gain, alternate })
}

/// Vertex gains `X_i⁻¹Y_i`.
pub fn rem1_vertex_gains(xs: &[Matrix], ys: &[Matrix]) -> Result<Vec<Matrix>> {
    xs.iter()
        .zip(ys)
        .enumerate()
        .map(|(i, (x, y))| Ok(inv(x, || format!("X_{}", i + 1))? * y))
        .collect()
}

/// `L(π) = Σ ξ_i X_i⁻¹Y_i`.
pub fn observer_gain_rem1(xs: &[Matrix], ys: &[Matrix], xi: &[f64]) -> Result<Matrix> {
    Ok(combine(xi, &rem1_vertex_gains(xs, ys)?))
}

/// `S(π) = (Σ ξ_i S̄_i⁻¹)⁻¹`.
pub fn thm3_s_of(pbars: &[Matrix], xi: &[f64]) -> Result<Matrix> {
    inv(&combine(xi, pbars), || "P(π)".into())
}

/// `K = −Bᵀ(S(π₊) + BBᵀ)⁻¹A(π)`.
pub fn controller_gain_thm3(sys: &PolytopicSystem, sbars: &[SymMatrix], pi: &[f64], pi_next: &[f64]) -> Result<Matrix> {
    let pbars = sbars
        .iter()
        .enumerate()
        .map(|(i, s)| inv(s.as_matrix(), || format!("S_{}", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    thm3_from_p(sys, &pbars, pi, pi_next)
}

fn thm3_from_p(sys: &PolytopicSystem, pbars: &[Matrix], pi: &[f64], pi_next: &[f64]) -> Result<Matrix> {
    let b = sys.b();
    let s_next = thm3_s_of(pbars, &sys.xi(pi_next)?)?;
    let m = inv(&(s_next + b * b.transpose()), || "S(π₊) + BBᵀ".into())?;
    Ok(-(b.transpose() * m * sys.evaluate_a(pi)?))
}

/// `K̄ = −Bᵀ(S̄ + BBᵀ)⁻¹Ā` and `−(I + BᵀP̄B)⁻¹BᵀP̄Ā`.
pub fn lti_controller_gain(a: &Matrix, b: &Matrix, sbar: &SymMatrix) -> Result<DualForm> {
    let s = sbar.as_matrix();
    let gain = -(b.transpose() * inv(&(s + b * b.transpose()), || "S + BBᵀ".into())? * a);
    let p = inv(s, || "S".into())?;
    let nu = b.ncols();
    let inner = inv(&(Matrix::identity(nu, nu) + b.transpose() * &p * b), || "I + BᵀPB".into())?;
    let alternate = -(inner * b.transpose() * p * a);
    Ok(DualForm { gain, alternate })
}

/// Vertex gains `Y_i S̄_i⁻¹`.
pub fn t43_vertex_gains(ys: &[Matrix], sbars: &[SymMatrix]) -> Result<Vec<Matrix>> {
    ys.iter()
        .zip(sbars)
        .enumerate()
        .map(|(i, (y, s))| Ok(y * inv(s.as_matrix(), || format!("S_{}", i + 1))?))
        .collect()
}

/// `K(π) = Σ ξ_i Y_i S̄_i⁻¹`.
pub fn controller_gain_t43(ys: &[Matrix], sbars: &[SymMatrix], xi: &[f64]) -> Result<Matrix> {
    Ok(combine(xi, &t43_vertex_gains(ys, sbars)?))
}

/// `K = Σ_i ξ_i(π) Y_i(π₊) X_i(π₊)⁻¹` with `X_i(π) = Σ_j ξ_j(π) X_ij`.
pub fn controller_gain_t44(x2: &[Vec<Matrix>], y2: &[Vec<Matrix>], xi: &[f64], xi_next: &[f64]) -> Result<Matrix> {
    let mut k: Option<Matrix> = None;
    for (i, (xr, yr)) in x2.iter().zip(y2).enumerate() {
        if xi[i] == 0.0 {
            continue;
        }
        let xin = combine(xi_next, xr);
        let yin = combine(xi_next, yr);
        let term = yin * inv(&xin, || format!("X_{}(π₊)", i + 1))? * xi[i];
        k = Some(match k {
            Some(acc) => acc + term,
            None => term,
        });
    }
    k.ok_or(GainError::Missing("nonzero scheduling weight"))
}

/// Vertex gains `Y_i X_i⁻¹` of the slack-variable synthesis baseline.
pub fn daafouz_vertex_gains(xs: &[Matrix], ys: &[Matrix]) -> Result<Vec<Matrix>> {
    xs.iter()
        .zip(ys)
        .enumerate()
        .map(|(i, (x, y))| Ok(y * inv(x, || format!("X_{}", i + 1))?))
        .collect()
}

#[derive(Debug, Clone)]
enum Law {
    /// `Σ ξ_i(π) G_i`.
    Vertex(Vec<Matrix>),
    Thm3 { pbars: Vec<Matrix> },
    T44 { x2: Vec<Vec<Matrix>>, y2: Vec<Vec<Matrix>> },
}

/// A gain schedule bound to the system it was computed for.
#[derive(Debug, Clone)]
pub struct GainSchedule {
    pub kind: GainKind,
    pub recipe: Recipe,
    sys: PolytopicSystem,
    law: Law,
    certificate: Certificate,
}

impl GainSchedule {
    pub fn from_certificate(sys: &PolytopicSystem, cert: &Certificate) -> Result<Self> {
        let need = |v: &Vec<Matrix>, what: &'static str| {
            if v.len() == sys.num_vertices() {
                Ok(())
            } else {
                Err(GainError::Missing(what))
            }
        };
        need(&cert.sym, "symmetric certificate matrices")?;
        let (kind, recipe, law) = match cert.condition {
            ConditionId::DetThm1 => (GainKind::Observer, Recipe::Thm1, Law::Vertex(thm1_vertex_gains(sys, &cert.p_matrices()?)?)),
            ConditionId::LtiDet => {
                let g = lti_observer_gain(&sys.vertices()[0], sys.c(), &cert.p_matrices()?[0])?;
                (GainKind::Observer, Recipe::Lti, Law::Vertex(vec![g.gain]))
            }
            ConditionId::DetRem1 => {
                need(&cert.x, "X")?;
                need(&cert.y, "Y")?;
                (GainKind::Observer, Recipe::Rem1, Law::Vertex(rem1_vertex_gains(&cert.x, &cert.y)?))
            }
            ConditionId::StabThm3 => {
                let pbars = cert.p_matrices()?.into_iter().map(|p| p.into_matrix()).collect();
                (GainKind::Controller, Recipe::Thm3, Law::Thm3 { pbars })
            }
            ConditionId::LtiStab => {
                let g = lti_controller_gain(&sys.vertices()[0], sys.b(), &cert.s_matrices()?[0])?;
                (GainKind::Controller, Recipe::Lti, Law::Vertex(vec![g.gain]))
            }
            ConditionId::SynthT43 => {
                need(&cert.y, "Y")?;
                (GainKind::Controller, Recipe::T43, Law::Vertex(t43_vertex_gains(&cert.y, &cert.s_matrices()?)?))
            }
            ConditionId::SynthDaafouz => {
                need(&cert.x, "X")?;
                need(&cert.y, "Y")?;
                (GainKind::Controller, Recipe::Daafouz, Law::Vertex(daafouz_vertex_gains(&cert.x, &cert.y)?))
            }
            ConditionId::SynthT44 => {
                if cert.x2.len() != sys.num_vertices() || cert.y2.len() != sys.num_vertices() {
                    return Err(GainError::Missing("X_ij / Y_ij"));
                }
                (GainKind::Controller, Recipe::T44, Law::T44 { x2: cert.x2.clone(), y2: cert.y2.clone() })
            }
            other => return Err(GainError::NoRecipe(other)),
        };
        Ok(GainSchedule {
            kind,
            recipe,
            sys: sys.clone(),
            law,
            certificate: cert.clone(),
        })
    }

    pub fn system(&self) -> &PolytopicSystem {
        &self.sys
    }

    pub fn certificate(&self) -> &Certificate {
        &self.certificate
    }

    /// Per-vertex gains for schedules of the form `Σ ξ_i(π) G_i`.
    pub fn vertex_gains(&self) -> Option<&[Matrix]> {
        match &self.law {
            Law::Vertex(g) => Some(g),
            _ => None,
        }
    }

    pub fn two_parameter(&self) -> bool {
        !matches!(self.law, Law::Vertex(_))
    }

    pub fn evaluate(&self, pi: &[f64], pi_next: Option<&[f64]>) -> Result<Matrix> {
        match &self.law {
            Law::Vertex(g) => Ok(combine(&self.sys.xi(pi)?, g)),
            Law::Thm3 { pbars } => thm3_from_p(&self.sys, pbars, pi, pi_next.ok_or(GainError::NeedsPreview)?),
            Law::T44 { x2, y2 } => {
                let next = pi_next.ok_or(GainError::NeedsPreview)?;
                controller_gain_t44(x2, y2, &self.sys.xi(pi)?, &self.sys.xi(next)?)
            }
        }
    }

    /// Export with gain samples on `grid` (pairs `(π, π₊)`).
    pub fn export(&self, grid: &[(Vec<f64>, Vec<f64>)]) -> Result<GainExport> {
        let samples = grid
            .iter()
            .map(|(p, q)| {
                let next = self.two_parameter().then_some(q.as_slice());
                Ok(GainSample {
                    pi: p.clone(),
                    pi_next: next.map(|q| q.to_vec()),
                    value: MatrixData::from(&self.evaluate(p, next)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GainExport {
            schema_version: io::SCHEMA_VERSION,
            kind: self.kind,
            recipe: self.recipe,
            certificate: self.certificate.clone(),
            samples,
        })
    }
}

impl GainLaw for GainSchedule {
    fn eval(&self, now: &[f64], next: Option<&[f64]>) -> std::result::Result<Matrix, String> {
        self.evaluate(now, next).map_err(|e| e.to_string())
    }

    fn needs_preview(&self) -> bool {
        self.two_parameter()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSample {
    pub pi: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pi_next: Option<Vec<f64>>,
    pub value: MatrixData,
}

/// Gain export file: the recipe, the certificate it was built from, and
/// sampled values for reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainExport {
    pub schema_version: u32,
    pub kind: GainKind,
    pub recipe: Recipe,
    pub certificate: Certificate,
    pub samples: Vec<GainSample>,
}

impl GainExport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("gain export serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: GainExport = serde_json::from_str(text).map_err(IoError::from)?;
        io::check_version(g.schema_version)?;
        Ok(g)
    }

    pub fn schedule(&self, sys: &PolytopicSystem) -> Result<GainSchedule> {
        GainSchedule::from_certificate(sys, &self.certificate)
    }
}

/// `(π, π₊)` pairs on a uniform grid of `points` per axis, for
/// one-dimensional parameter sets, or the witness pairs otherwise.
pub fn parameter_grid(sys: &PolytopicSystem, points: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let pts = sys
        .scheduling()
        .grid(points)
        .or_else(|| sys.scheduling().witnesses())
        .unwrap_or_default();
    pts.iter()
        .flat_map(|p| pts.iter().map(move |q| (p.clone(), q.clone())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn thm1_scalar() {
        let sys = PolytopicSystem::lti(s(0.5), s(0.0), s(1.0)).unwrap();
        let l = observer_gain_thm1(&sys, &[SymMatrix::identity(1)], &[1.0]).unwrap();
        assert!((l[(0, 0)] + 0.25).abs() < 1e-15);
        let sys0 = PolytopicSystem::lti(s(0.5), s(0.0), s(0.0)).unwrap();
        assert_eq!(observer_gain_thm1(&sys0, &[SymMatrix::identity(1)], &[1.0]).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn lti_forms_scalar() {
        let g = lti_observer_gain(&s(0.5), &s(1.0), &SymMatrix::identity(1)).unwrap();
        assert!((g.gain[(0, 0)] + 0.25).abs() < 1e-15);
        assert!((g.alternate[(0, 0)] + 0.25).abs() < 1e-15);
        let g = lti_observer_gain(&s(0.5), &s(0.0), &SymMatrix::identity(1)).unwrap();
        assert_eq!((g.gain[(0, 0)], g.alternate[(0, 0)]), (0.0, 0.0));

        let sbar = SymMatrix::new(s(0.2)).unwrap();
        let k = lti_controller_gain(&s(2.0), &s(1.0), &sbar).unwrap();
        assert!((k.gain[(0, 0)] + 5.0 / 3.0).abs() < 1e-14);
        assert!(k.relative_gap() < 1e-14);
        let k = lti_controller_gain(&s(2.0), &s(0.0), &sbar).unwrap();
        assert_eq!(k.gain[(0, 0)], 0.0);
    }

    #[test]
    fn rem1_examples() {
        let x = Matrix::identity(2, 2) * 2.0;
        let y = Matrix::from_column_slice(2, 1, &[-0.5, 0.0]);
        let l = observer_gain_rem1(&[x.clone()], &[y], &[1.0]).unwrap();
        assert_eq!(l.as_slice(), &[-0.25, 0.0]);
        let l = observer_gain_rem1(&[x], &[Matrix::zeros(2, 1)], &[1.0]).unwrap();
        assert_eq!(l.amax(), 0.0);
        assert!(observer_gain_rem1(&[Matrix::zeros(2, 2)], &[Matrix::zeros(2, 1)], &[1.0]).is_err());
    }

    #[test]
    fn thm3_and_t43_scalar() {
        let sys = PolytopicSystem::lti(s(2.0), s(1.0), s(1.0)).unwrap();
        let sbar = SymMatrix::new(s(0.2)).unwrap();
        let k = controller_gain_thm3(&sys, std::slice::from_ref(&sbar), &[1.0], &[1.0]).unwrap();
        assert!((k[(0, 0)] + 5.0 / 3.0).abs() < 1e-14);
        assert!((2.0 + k[(0, 0)] - 1.0 / 3.0).abs() < 1e-14);
        let k = controller_gain_t43(&[s(-1.0 / 3.0)], &[sbar.clone()], &[1.0]).unwrap();
        assert!((k[(0, 0)] + 5.0 / 3.0).abs() < 1e-14);
        assert_eq!(controller_gain_t43(&[s(0.0)], &[sbar.clone()], &[1.0]).unwrap()[(0, 0)], 0.0);
        let no_b = PolytopicSystem::lti(s(2.0), s(0.0), s(1.0)).unwrap();
        assert_eq!(controller_gain_thm3(&no_b, &[sbar], &[1.0], &[1.0]).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn thm3_uses_inverse_of_combined_p() {
        // S(π) must be (Σ ξ_i S_i⁻¹)⁻¹, not Σ ξ_i S_i.
        let a = s(1.0);
        let sys = PolytopicSystem::from_vertices(vec![a.clone(), a], s(1.0), s(1.0)).unwrap();
        let sb = [SymMatrix::new(s(1.0)).unwrap(), SymMatrix::new(s(3.0)).unwrap()];
        let k = controller_gain_thm3(&sys, &sb, &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        let s_mid = 1.0 / (0.5 * 1.0 + 0.5 / 3.0);
        assert!((k[(0, 0)] + 1.0 / (s_mid + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn t44_reduces_to_vertex_form() {
        let id = Matrix::identity(2, 2);
        let y = [Matrix::from_row_slice(1, 2, &[1.0, 2.0]), Matrix::from_row_slice(1, 2, &[-1.0, 0.5])];
        let x2 = vec![vec![id.clone(), id.clone()], vec![id.clone(), id]];
        let y2 = vec![vec![y[0].clone(), y[0].clone()], vec![y[1].clone(), y[1].clone()]];
        let xi = [0.3, 0.7];
        let k = controller_gain_t44(&x2, &y2, &xi, &[0.9, 0.1]).unwrap();
        let expect = &y[0] * 0.3 + &y[1] * 0.7;
        assert!((k - expect).amax() < 1e-15);
        let zero = vec![vec![Matrix::zeros(1, 2); 2]; 2];
        assert_eq!(controller_gain_t44(&x2, &zero, &xi, &xi).unwrap().amax(), 0.0);
    }
}
