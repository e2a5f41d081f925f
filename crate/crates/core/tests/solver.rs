mod common;

use lpvcert::conditions::{self, ConditionId};
use lpvcert::lmi::{AffineExpr, CompiledFeasibility, LmiProblem, VarKind};
use lpvcert::lpv::PolytopicSystem;
use lpvcert::matcore::Matrix;
use lpvcert::sdpfeas::{self, SolveOptions, Status};
use proptest::prelude::*;
use rand::Rng;

/// Random problem `C_b + He(L_b X) − c·S ⪰ 0`, optionally with `S ≻ 0`,
/// every block multiplied by `scale`.
fn random_problem(seed: u64, scale: f64) -> CompiledFeasibility {
    let mut r = common::rng(seed);
    let mut p = LmiProblem::new();
    let d = r.random_range(1..=4);
    let x = p.declare(VarKind::Rectangular(d, d), "X").unwrap();
    let s = p.declare(VarKind::Symmetric(d), "S").unwrap();
    for b in 0..r.random_range(1..=3) {
        let c0 = common::rand_sym(&mut r, d).into_matrix() * (2.0 * scale);
        let l = common::randn(&mut r, d, d) * scale;
        let coef = r.random_range(-1.0..1.0) * scale;
        let e = AffineExpr::new(d)
            .add_constant(0, 0, &c0)
            .unwrap()
            .add_product(0, 0, 1.0, Some(&l), &x, false, None)
            .unwrap()
            .add_congruence(0, coef, None, &s)
            .unwrap();
        p.add_constraint(e, 1e-9, format!("b{b}")).unwrap();
    }
    if r.random_bool(0.5) {
        let e = AffineExpr::new(d).add_congruence(0, scale, None, &s).unwrap();
        p.add_constraint(e, 1e-9, "pos").unwrap();
    }
    p.compile().unwrap()
}

proptest! {
    #![proptest_config(common::config(0x501_0001))]

    #[test]
    fn feasible_verdicts_verify(seed in any::<u64>()) {
        let c = random_problem(seed, 1.0);
        let out = sdpfeas::solve_feasibility(&c, &SolveOptions::default());
        if out.status == Status::Feasible {
            let x = out.assignment.clone().unwrap();
            let m = sdpfeas::verify_assignment(&c, &x).unwrap();
            prop_assert!(m.iter().all(|v| *v > 0.0), "{m:?}");
        }
        if out.status == Status::Infeasible {
            prop_assert!(out.upper_bound <= 0.0);
        }
    }
}

/// Bounded random problem: `0 ⪯ S ⪯ I` and `C_b + L_b S L_bᵀ ⪰ 0`, every
/// block multiplied by `scale`.
fn bounded_problem(seed: u64, scale: f64) -> CompiledFeasibility {
    let mut r = common::rng(seed);
    let mut p = LmiProblem::new();
    let d = r.random_range(1..=4);
    let s = p.declare(VarKind::Symmetric(d), "S").unwrap();
    let id = Matrix::identity(d, d);
    let upper = AffineExpr::new(d)
        .add_constant(0, 0, &(&id * scale))
        .unwrap()
        .add_congruence(0, -scale, None, &s)
        .unwrap();
    p.add_constraint(upper, 1e-9, "upper").unwrap();
    p.add_constraint(AffineExpr::new(d).add_congruence(0, scale, None, &s).unwrap(), 1e-9, "lower")
        .unwrap();
    for b in 0..r.random_range(1..=3) {
        let c0 = common::rand_sym(&mut r, d).into_matrix() * scale;
        let l = common::randn(&mut r, d, d);
        let e = AffineExpr::new(d)
            .add_constant(0, 0, &c0)
            .unwrap()
            .add_congruence(0, scale, Some(&l), &s)
            .unwrap();
        p.add_constraint(e, 1e-9, format!("b{b}")).unwrap();
    }
    p.compile().unwrap()
}

#[test]
fn optimal_margin_scales_with_blocks() {
    let opts = SolveOptions {
        stop_at_feasible: false,
        ..SolveOptions::default()
    };
    let mut checked = 0;
    for seed in 0..500u64 {
        let base = sdpfeas::solve_feasibility(&bounded_problem(seed, 1.0), &opts);
        if base.status != Status::Feasible || base.margin < 1e-3 {
            continue;
        }
        for c in [0.5, 3.0] {
            let scaled = sdpfeas::solve_feasibility(&bounded_problem(seed, c), &opts);
            assert_eq!(scaled.status, Status::Feasible, "seed {seed} c {c}");
            let ratio = scaled.margin / (c * base.margin);
            assert!((ratio - 1.0).abs() < 0.05, "seed {seed} c {c}: ratio {ratio}");
        }
        checked += 1;
        if checked == 30 {
            break;
        }
    }
    assert!(checked >= 20, "only {checked} usable instances");
}

#[test]
fn scalar_detectability_matches_closed_form() {
    let mut r = common::rng(11);
    let opts = SolveOptions::default();
    let mut skipped = 0;
    for _ in 0..200 {
        let a: f64 = r.random_range(-2.5..2.5);
        let c = if r.random_bool(0.5) { 0.0 } else { r.random_range(-2.0..2.0) };
        if c == 0.0 && (a.abs() - 1.0).abs() < 1e-3 {
            skipped += 1;
            continue;
        }
        let s = |v: f64| Matrix::from_element(1, 1, v);
        let sys = PolytopicSystem::lti(s(a), s(0.0), s(c)).unwrap();
        let eps = conditions::default_eps(&sys, ConditionId::LtiDet);
        let out = conditions::analyze(ConditionId::LtiDet, &sys, eps, &opts).unwrap();
        let truth = a.abs() < 1.0 || c != 0.0;
        assert_eq!(out.status().is_feasible(), truth, "a={a} c={c}: {:?}", out.outcome);
        if !truth {
            assert_eq!(out.status(), Status::Infeasible, "a={a}: {:?}", out.outcome);
        }
    }
    eprintln!("skipped {skipped} marginal instances");
}
