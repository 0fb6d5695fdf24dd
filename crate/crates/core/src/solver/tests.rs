use super::*;
use crate::estimates::fields::{manufactured_rhs, TestField};
use crate::operators::expr::Expr;
use crate::operators::preset::{laplace, twist_k};

fn zero_rhs() -> RightHandSide<f64> {
    RightHandSide::Constant(0.0)
}

#[test]
fn laplacian_reproduces_harmonic_quadratics_exactly() {
    // x^2 - y^2 is harmonic and the stencil is exact on quadratics, so the
    // discrete solution is the quadratic itself up to linear-solver noise.
    let op = laplace::<f64>(2);
    let cfg = SolveConfig::default();
    let out = solve_dirichlet(
        &op,
        &zero_rhs(),
        |x, y| x * x - y * y,
        33,
        GridDomain::Square,
        &cfg,
        None,
    )
    .unwrap();
    let mut exact = GridField::<f64>::new(33, GridDomain::Square).unwrap();
    exact.fill(|x, y| x * x - y * y);
    assert!(out.field.sup_diff_interior(&exact) < 1e-10);
    assert!(out.report.final_residual <= cfg.residual_tol);
}

#[test]
fn manufactured_twist2_converges_at_second_order() {
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let u_star = TestField::QuadSine {
        hxx: 2.0,
        hyy: 2.0,
        amp: 0.05,
        freq: 2.0,
    };
    let cfg = SolveConfig::default();
    let mut errors = Vec::new();
    for pps in [33usize, 65, 129] {
        let f = manufactured_rhs(&op, &u_star, pps, GridDomain::UnitBall).unwrap();
        let out = solve_dirichlet(
            &op,
            &f,
            |x, y| u_star.value(x, y),
            pps,
            GridDomain::UnitBall,
            &cfg,
            None,
        )
        .unwrap();
        let mut exact = GridField::<f64>::new(pps, GridDomain::UnitBall).unwrap();
        exact.fill(|x, y| u_star.value(x, y));
        errors.push(out.field.sup_diff_interior(&exact));
    }
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!(
            (3.5..=4.5).contains(&ratio),
            "refinement ratio {ratio} out of the second-order window; errors {errors:?}"
        );
    }
}

#[test]
fn twist2_near_quadratic_takes_few_newton_steps() {
    // c chosen so a radial quadratic nearly solves tr + sigma_2 - 1 = 1
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let cfg = SolveConfig::default();
    let c = 0.7;
    let out = solve_dirichlet(
        &op,
        &RightHandSide::Constant(1.0),
        |x, y| 0.5 * c * (x * x + y * y),
        65,
        GridDomain::UnitBall,
        &cfg,
        None,
    )
    .unwrap();
    assert!(
        out.report.newton_iters <= 15,
        "took {} Newton steps",
        out.report.newton_iters
    );
    assert!(out.report.hessians_in_domain);
}

#[test]
fn residual_history_is_strictly_decreasing() {
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let cfg = SolveConfig::default();
    let out = solve_dirichlet(
        &op,
        &zero_rhs(),
        |x, y| 0.3 * (x * x + y * y),
        33,
        GridDomain::UnitBall,
        &cfg,
        None,
    )
    .unwrap();
    for w in out.report.residual_history.windows(2) {
        assert!(w[1] < w[0], "history not strictly decreasing: {w:?}");
    }
}

#[test]
fn laplacian_discrete_maximum_principle() {
    // raising boundary data pointwise never lowers the solution
    let op = laplace::<f64>(2);
    let cfg = SolveConfig::default();
    let low = solve_dirichlet(
        &op,
        &zero_rhs(),
        |x, y| (3.0 * x).sin() + 0.5 * y,
        33,
        GridDomain::Square,
        &cfg,
        None,
    )
    .unwrap();
    let high = solve_dirichlet(
        &op,
        &zero_rhs(),
        |x, y| (3.0 * x).sin() + 0.5 * y + 0.25 * (1.0 + (2.0 * y).cos()),
        33,
        GridDomain::Square,
        &cfg,
        None,
    )
    .unwrap();
    for (ix, iy) in low.field.interior_nodes() {
        assert!(high.field.get(ix, iy) >= low.field.get(ix, iy) - 1e-12);
    }
}

#[test]
fn auxiliary_convex_problem_returns_exact_data() {
    // w quadratic with F_cup(D^2 w) = t already: the solver returns w
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let mut w = GridField::<f64>::new(33, GridDomain::UnitBall).unwrap();
    w.fill(|x, y| 0.25 * (x * x + y * y)); // tr - 1 = 0 at D^2 w = 0.5 I
    let cfg = SolveConfig::default();
    let out = solve_convex_auxiliary(&op.convex_part, 0.0, &w, &cfg).unwrap();
    assert!(out.field.sup_diff_interior(&w) < 1e-10);

    // trace with harmonic boundary data returns the harmonic quadratic
    let lap = laplace::<f64>(2);
    let mut w = GridField::<f64>::new(33, GridDomain::UnitBall).unwrap();
    w.fill(|x, y| x * x - y * y);
    let mut start = w.clone();
    // perturb the interior so the solve has work to do
    for (ix, iy) in w.interior_nodes() {
        let v = start.get(ix, iy);
        start.set(ix, iy, v + 0.1 * ((ix * 7 + iy) % 5) as f64);
    }
    let out = solve_convex_auxiliary(&lap.convex_part, 0.0, &start, &cfg).unwrap();
    assert!(out.field.sup_diff_interior(&w) < 1e-10);
}

#[test]
fn nonconvergence_carries_history_and_last_iterate() {
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let cfg = SolveConfig {
        max_newton: 1,
        ..SolveConfig::default()
    };
    let err = solve_dirichlet(
        &op,
        &zero_rhs(),
        |x, y| 0.3 * (x * x + y * y),
        33,
        GridDomain::UnitBall,
        &cfg,
        None,
    )
    .unwrap_err();
    match err {
        SolverError::NonConvergence { history, last, .. } => {
            assert!(!history.is_empty());
            assert_eq!(last.points_per_side(), 33);
        }
        other => panic!("expected nonconvergence, got {other:?}"),
    }
}

#[test]
fn x_dependent_right_hand_side_is_honored() {
    // Delta u = x + y has the exact discrete solution (x^3 + y^3)/6 since
    // second differences are exact on cubics.
    let mut op = laplace::<f64>(2);
    op.rhs = Some(SpatialFn::Expr(Expr::parse("x + y").unwrap()));
    let cfg = SolveConfig::default();
    let out = solve_dirichlet(
        &op,
        &zero_rhs(),
        |x, y| (x * x * x + y * y * y) / 6.0,
        33,
        GridDomain::Square,
        &cfg,
        None,
    )
    .unwrap();
    let mut exact = GridField::<f64>::new(33, GridDomain::Square).unwrap();
    exact.fill(|x, y| (x * x * x + y * y * y) / 6.0);
    assert!(out.field.sup_diff_interior(&exact) < 1e-9);
}

#[test]
fn warm_start_reduces_newton_work() {
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let cfg = SolveConfig::default();
    let coarse = solve_dirichlet(
        &op,
        &zero_rhs(),
        |x, y| 0.3 * (x * x + y * y),
        33,
        GridDomain::UnitBall,
        &cfg,
        None,
    )
    .unwrap();
    let warm = coarse.field.prolongate(65).unwrap();
    let cold_run = solve_dirichlet(
        &op,
        &zero_rhs(),
        |x, y| 0.3 * (x * x + y * y),
        65,
        GridDomain::UnitBall,
        &cfg,
        None,
    )
    .unwrap();
    let warm_run = solve_dirichlet(
        &op,
        &zero_rhs(),
        |x, y| 0.3 * (x * x + y * y),
        65,
        GridDomain::UnitBall,
        &cfg,
        Some(&warm),
    )
    .unwrap();
    assert!(warm_run.report.newton_iters <= cold_run.report.newton_iters + 5);
    assert!(warm_run.field.sup_diff_interior(&cold_run.field) < 1e-8);
}
