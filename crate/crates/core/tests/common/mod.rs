//! Shared generators and property checks. The property suites drive them
//! through `proptest!`; the acceptance test drives the same checks through a
//! fixed-seed `TestRunner`.

#![allow(dead_code)]

use lpvcert::conditions::{Certificate, ConditionId};
use lpvcert::io::SCHEMA_VERSION;
use lpvcert::lpv::{ParameterSequence, PolytopicSystem, SimMode};
use lpvcert::matcore::{self, Matrix, SymMatrix};
use lpvcert::verify;
use nalgebra::DVector;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const CASES: u32 = 500;

pub fn config(seed: u64) -> Config {
    Config {
        cases: CASES,
        rng_seed: RngSeed::Fixed(seed),
        failure_persistence: None,
        ..Config::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut impl Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn rand_sym(rng: &mut impl Rng, n: usize) -> SymMatrix {
    let m = randn(rng, n, n);
    SymMatrix::new((&m + m.transpose()) * 0.5).unwrap()
}

/// Random orthogonal matrix from a QR factorization.
pub fn rand_orthogonal(rng: &mut impl Rng, n: usize) -> Matrix {
    randn(rng, n, n).qr().q()
}

/// `A` rescaled to spectral norm `norm`.
pub fn with_norm(a: Matrix, norm: f64) -> Matrix {
    let s = a.clone().svd(false, false).singular_values.max();
    if s == 0.0 {
        a
    } else {
        a * (norm / s)
    }
}

/// Runs `check` on `CASES` seeds drawn by a fixed-seed runner.
pub fn run_suite(seed: u64, check: impl Fn(u64) -> Result<(), TestCaseError>) -> Result<u32, String> {
    let mut runner = TestRunner::new(config(seed));
    runner
        .run(&any::<u64>(), |s| check(s))
        .map(|_| CASES)
        .map_err(|e| e.to_string())
}

/// `smat(svec(A)) = A` and `svec(A)·svec(B) = trace(AB)`.
pub fn check_svec(seed: u64) -> Result<(), TestCaseError> {
    let mut r = rng(seed);
    let n = r.random_range(1..=6);
    let scale = 10f64.powf(r.random_range(-3.0..3.0));
    let a = rand_sym(&mut r, n).scale(scale);
    let b = rand_sym(&mut r, n);
    let back = matcore::smat(&matcore::svec(&a), n).unwrap();
    prop_assert!((back.as_matrix() - a.as_matrix()).amax() <= 1e-15 * a.max_abs().max(1.0));
    let ip: f64 = matcore::svec(&a).iter().zip(matcore::svec(&b)).map(|(x, y)| x * y).sum();
    let tr = (a.as_matrix() * b.as_matrix()).trace();
    let bound = 1e-12 * a.as_matrix().norm() * b.as_matrix().norm();
    prop_assert!((ip - tr).abs() <= bound.max(1e-300), "{ip} vs {tr}");
    Ok(())
}

/// Eigenvalues of `Q diag(λ) Qᵀ` are recovered, and the PD check agrees with
/// both the planted spectrum and a Cholesky attempt away from the threshold.
pub fn check_psd(seed: u64) -> Result<(), TestCaseError> {
    let mut r = rng(seed);
    let n = r.random_range(1..=6);
    let lam: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..3.0)).collect();
    let q = rand_orthogonal(&mut r, n);
    let m = &q * Matrix::from_diagonal(&DVector::from_vec(lam.clone())) * q.transpose();
    let s = SymMatrix::new((&m + m.transpose()) * 0.5).unwrap();
    let planted = lam.iter().cloned().fold(f64::INFINITY, f64::min);
    let got = matcore::min_eigenvalue(&s);
    prop_assert!((got - planted).abs() < 1e-12 * 3.0 * n as f64, "{got} vs {planted}");
    let tol = 10f64.powf(r.random_range(-10.0..-1.0));
    let pd = matcore::is_positive_definite(&s, tol).unwrap();
    prop_assert_eq!(pd, got > tol);
    if (planted - tol).abs() > 1e-9 {
        prop_assert_eq!(pd, planted > tol);
    }
    if planted.abs() > 1e-9 {
        prop_assert_eq!(s.as_matrix().clone().cholesky().is_some(), planted > 0.0);
    }
    Ok(())
}

fn random_affine(r: &mut ChaCha8Rng, nx: usize) -> PolytopicSystem {
    let a0 = randn(r, nx, nx) * 0.5;
    let ap = randn(r, nx, nx) * 0.3;
    let gamma = r.random_range(0.1..2.0);
    let b = randn(r, nx, 1);
    let c = randn(r, 1, nx);
    PolytopicSystem::from_affine_scalar(&a0, &ap, gamma, b, c).unwrap()
}

/// Simulating a block-diagonal composition equals simulating the parts on
/// their parameter slices and stacking the states; a horizon split at `k`
/// composes with the restart from the state at `k`.
pub fn check_composition(seed: u64) -> Result<(), TestCaseError> {
    let mut r = rng(seed);
    let parts: Vec<PolytopicSystem> = (0..r.random_range(1..=3))
        .map(|_| {
            let nx = r.random_range(1..=3);
            random_affine(&mut r, nx)
        })
        .collect();
    let comp = PolytopicSystem::block_diag_compose(&parts).unwrap();
    let len = r.random_range(1..=12);
    let seq = ParameterSequence::random(&comp, len, &mut r);
    let x0 = DVector::from_fn(comp.n_x(), |_, _| r.sample(StandardNormal));
    let inputs: Vec<DVector<f64>> = (0..len)
        .map(|_| DVector::from_fn(comp.n_u(), |_, _| r.sample(StandardNormal)))
        .collect();
    let whole = comp.simulate(&x0, &seq, &inputs, None, SimMode::Open).unwrap();

    let (mut xo, mut uo) = (0, 0);
    for (pi, p) in parts.iter().enumerate() {
        let pseq = ParameterSequence::new(p, seq.points.iter().map(|q| vec![q[pi]]).collect()).unwrap();
        let px0 = x0.rows(xo, p.n_x()).into_owned();
        let pin: Vec<_> = inputs.iter().map(|u| u.rows(uo, p.n_u()).into_owned()).collect();
        let t = p.simulate(&px0, &pseq, &pin, None, SimMode::Open).unwrap();
        for (k, st) in t.states.iter().enumerate() {
            let w = whole.states[k].rows(xo, p.n_x());
            let scale = 1.0 + st.amax();
            prop_assert!((st - w).amax() <= 1e-12 * scale, "part {pi} step {k}");
        }
        xo += p.n_x();
        uo += p.n_u();
    }

    let k = r.random_range(0..=len);
    let head = ParameterSequence { points: seq.points[..k].to_vec() };
    let tail = ParameterSequence { points: seq.points[k..].to_vec() };
    let t1 = comp.simulate(&x0, &head, &inputs[..k], None, SimMode::Open).unwrap();
    let t2 = comp.simulate(t1.states.last().unwrap(), &tail, &inputs[k..], None, SimMode::Open).unwrap();
    let last = whole.states.last().unwrap();
    prop_assert!((t2.states.last().unwrap() - last).amax() <= 1e-12 * (1.0 + last.amax()));
    Ok(())
}

pub fn s_certificate(sym: Vec<Matrix>) -> Certificate {
    Certificate {
        schema_version: SCHEMA_VERSION,
        condition: ConditionId::PolyqsL14,
        sym_kind: "S".into(),
        sym,
        x: vec![],
        y: vec![],
        z: vec![],
        x2: vec![],
        y2: vec![],
        margin: 0.0,
    }
}

/// A certificate that passes the vertex check with margin above `10·ε` never
/// fails sampled descent with `a₃ = 0`, and in fact every sampled step
/// decreases `V` by at least the smallest descent margin. A negated
/// certificate always fails the vertex check.
pub fn check_certificate_soundness(seed: u64) -> Result<(), TestCaseError> {
    let mut r = rng(seed);
    let nv = r.random_range(1..=3);
    let nx = r.random_range(1..=3);
    let verts: Vec<Matrix> = (0..nv)
        .map(|_| {
            let a = randn(&mut r, nx, nx);
            let nrm = r.random_range(0.1..1.1);
            with_norm(a, nrm)
        })
        .collect();
    let sys = PolytopicSystem::from_vertices(verts, Matrix::zeros(nx, 1), Matrix::zeros(1, nx)).unwrap();
    let sym: Vec<Matrix> = (0..nv)
        .map(|_| {
            let g = randn(&mut r, nx, nx) * 0.4;
            Matrix::identity(nx, nx) + &g * g.transpose()
        })
        .collect();
    let cert = s_certificate(sym.clone());
    let vr = verify::check_vertex_certificate(&sys, &cert, SimMode::Open, None, &[]).unwrap();
    let eps = 1e-7;
    if vr.min_vertex_margin() > 10.0 * eps && vr.min_descent_margin() > 10.0 * eps {
        let mc = verify::monte_carlo_descent(&sys, &cert, SimMode::Open, None, 10, 20, seed, Some(0.0), &[]).unwrap();
        let worst = mc.mc_worst_ratio.unwrap();
        prop_assert!(mc.pass && worst <= 0.0, "worst ratio {worst}");
        let scale: f64 = sym.iter().map(|m| m.amax()).fold(1.0, f64::max) * 10.0;
        prop_assert!(worst <= -vr.min_descent_margin() + 1e-12 * scale, "{worst} vs {}", vr.min_descent_margin());
    }
    let neg = s_certificate(sym.iter().map(|m| -m).collect());
    let nr = verify::check_vertex_certificate(&sys, &neg, SimMode::Open, None, &[]).unwrap();
    prop_assert!(!nr.pass);
    Ok(())
}

/// Random LTI triple with `n_x ≤ 4`. About a third of the draws hide a block
/// of modes from `C` (rotated back by a random orthogonal change of basis)
/// and a third hide one from `B`, so both verdicts occur often.
pub fn random_lti(r: &mut ChaCha8Rng) -> (Matrix, Matrix, Matrix) {
    let n = r.random_range(1..=4);
    let nu = r.random_range(1..=2);
    let ny = r.random_range(1..=2);
    let mut a = randn(r, n, n) * r.random_range(0.3..1.2);
    let mut b = randn(r, n, nu);
    let mut c = randn(r, ny, n);
    let hidden = r.random_range(1..=n);
    match r.random_range(0..3) {
        0 => {
            // x₁ evolves without feedback from x₂ and is invisible to C
            for i in 0..hidden {
                for j in hidden..n {
                    a[(i, j)] = 0.0;
                }
                for k in 0..ny {
                    c[(k, i)] = 0.0;
                }
            }
        }
        1 => {
            // x₁ is not driven by x₂ or by the input
            for i in 0..hidden {
                for j in hidden..n {
                    a[(i, j)] = 0.0;
                }
                for k in 0..nu {
                    b[(i, k)] = 0.0;
                }
            }
        }
        _ => {}
    }
    let q = rand_orthogonal(r, n);
    (&q * a * q.transpose(), &q * b, c * q.transpose())
}
