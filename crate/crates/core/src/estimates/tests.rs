use super::fields::TestField;
use super::*;
use crate::grid::{GridDomain, GridField};
use crate::operators::preset::{convex_concave, laplace, twist_k};
use crate::operators::{Gauge, MatrixFn, TwistedOperator};
use crate::sampling::SampleStream;
use crate::solver::{solve_dirichlet, RightHandSide, SolveConfig};
use crate::sym::{pairs, OpHessian};

fn pair_idx(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    pairs(n).iter().position(|&p| p == (i, j)).unwrap()
}

/// Full-index view of a canonical-pair Hessian.
fn full_entry(h: &OpHessian<f64>, n: usize, i: usize, j: usize, r: usize, s: usize) -> f64 {
    h.entry(pair_idx(n, i, j), pair_idx(n, r, s))
}

/// Index-loop oracle for the three contractions, written independently of
/// the production code path (raw full-index sums, no pair weights).
fn lemma_terms_oracle(
    op: &TwistedOperator<f64>,
    d2u: &crate::sym::SymMatrix<f64>,
    d3u: &crate::sym::Sym3Tensor<f64>,
) -> (f64, f64, f64) {
    let n = op.dim;
    let s = op.concave_part.eval(d2u).unwrap();
    let gp = op.gauge.g_prime(s).unwrap();
    let gpp = op.gauge.g_second(s).unwrap();
    let gcup = crate::operators::grad_operator(&op.convex_part, d2u, None).unwrap();
    let gcap = crate::operators::grad_operator(&op.concave_part, d2u, None).unwrap();
    let hcup = crate::operators::hess_operator(&op.convex_part, d2u, None).unwrap();
    let hcap = crate::operators::hess_operator(&op.concave_part, d2u, None).unwrap();
    let (mut t1, mut t2, mut t3) = (0.0, 0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for r in 0..n {
                        for ss in 0..n {
                            let uu = d3u.get(a, i, j) * d3u.get(b, r, ss);
                            t1 += gcup.get(a, b)
                                * (gp * full_entry(&hcap, n, i, j, r, ss)
                                    + gpp * gcap.get(i, j) * gcap.get(r, ss))
                                * uu;
                            t2 += gpp
                                * gcap.get(a, b)
                                * gcap.get(i, j)
                                * gcap.get(r, ss)
                                * uu;
                            t3 -= gp * gcap.get(a, b) * full_entry(&hcup, n, i, j, r, ss) * uu;
                        }
                    }
                }
            }
        }
    }
    (t1, t2, t3)
}

fn random_third_derivatives(n: usize, stream: &mut SampleStream) -> crate::sym::Sym3Tensor<f64> {
    let raw: Vec<f64> = (0..n * n * n).map(|_| stream.uniform(-1.0, 1.0)).collect();
    crate::sym::Sym3Tensor::from_fn_symmetrized(n, |a, i, j| raw[(a * n + i) * n + j])
}

#[test]
fn lemma_terms_vanish_without_third_derivatives() {
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let d2u = crate::sym::SymMatrix::identity(2);
    let d3u = crate::sym::Sym3Tensor::zero(2);
    let t = lemma_terms(&op, &d2u, &d3u).unwrap();
    assert_eq!((t.t1, t.t2, t.t3), (0.0, 0.0, 0.0));
}

#[test]
fn identity_gauge_kills_the_second_term() {
    let op = convex_concave::<f64>(2, 0.3, 0.4).unwrap();
    let mut stream = SampleStream::new(3);
    for _ in 0..50 {
        let d2u = op.domain.sample(&mut stream);
        let d3u = random_third_derivatives(2, &mut stream);
        let t = lemma_terms(&op, &d2u, &d3u).unwrap();
        assert_eq!(t.t2, 0.0);
        assert!(t.t1 <= 1e-12 && t.t3 <= 1e-12);
    }
}

#[test]
fn lemma_terms_match_the_index_loop_oracle() {
    let ops = [
        twist_k::<f64>(2, 2, 1.0).unwrap(),
        twist_k::<f64>(3, 3, 1.0).unwrap(),
        convex_concave::<f64>(2, 0.3, 0.4).unwrap(),
    ];
    let mut stream = SampleStream::new(5);
    for op in &ops {
        for _ in 0..20 {
            let d2u = op.domain.sample(&mut stream);
            if !op
                .gauge
                .contains_interior(op.concave_part.eval(&d2u).unwrap())
            {
                continue;
            }
            let d3u = random_third_derivatives(op.dim, &mut stream);
            let t = lemma_terms(op, &d2u, &d3u).unwrap();
            let (o1, o2, o3) = lemma_terms_oracle(op, &d2u, &d3u);
            assert!((t.t1 - o1).abs() <= 1e-10 * (1.0 + o1.abs()));
            assert!((t.t2 - o2).abs() <= 1e-10 * (1.0 + o2.abs()));
            assert!((t.t3 - o3).abs() <= 1e-10 * (1.0 + o3.abs()));
        }
    }
}

#[test]
fn lemma_sign_suite_small() {
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let mut stream = SampleStream::new(7);
    for _ in 0..200 {
        let d2u = op.domain.sample(&mut stream);
        let d3u = random_third_derivatives(2, &mut stream);
        let t = lemma_terms(&op, &d2u, &d3u).unwrap();
        assert!(t.t1 <= 1e-12, "t1 = {}", t.t1);
        assert!(t.t2 <= 1e-12, "t2 = {}", t.t2);
        assert!(t.t3 <= 1e-12, "t3 = {}", t.t3);
    }
}

#[test]
fn lemma_terms_reject_gauge_boundary() {
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    // sigma_2 = 0 on a degenerate matrix: not interior to U = [0, inf)
    let d2u = crate::sym::SymMatrix::from_diag(&[1.0, 0.0]);
    let d3u = crate::sym::Sym3Tensor::zero(2);
    assert!(lemma_terms(&op, &d2u, &d3u).is_err());
}

#[test]
fn supersolution_residual_vanishes_on_quadratic_solutions() {
    // constant Hessian: the gauge composition is a constant field
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let mut u = GridField::<f64>::new(33, GridDomain::UnitBall).unwrap();
    u.fill(|x, y| 0.25 * (x * x + y * y));
    let res = supersolution_residual(&op, &u, 1.0).unwrap();
    assert!(res.sup_abs() < 1e-9);
}

#[test]
fn supersolution_residual_matches_direct_assembly_for_linear_parts() {
    // identity gauge, linear F_cap: phi = <A, D^2 u> + c, so L phi can be
    // assembled directly from discrete Hessians of the same stencil
    let mut a = crate::sym::SymMatrix::zero(2);
    a.set(0, 0, 0.7);
    a.set(0, 1, -0.2);
    a.set(1, 1, 0.4);
    let op = TwistedOperator {
        name: "linear test".into(),
        dim: 2,
        convex_part: MatrixFn::Affine {
            grad: crate::sym::SymMatrix::identity(2),
            offset: 0.0,
        },
        concave_part: MatrixFn::Affine {
            grad: a.clone(),
            offset: 0.3,
        },
        gauge: Gauge::Identity,
        domain: crate::operators::DomainSet::All { dim: 2 },
        lambda_min: 1.0,
        lambda_max: 2.0,
        rhs: None,
    };
    let mut u = GridField::<f64>::new(33, GridDomain::Square).unwrap();
    u.fill(|x, y| (2.0 * x).sin() * (1.5 * y).cos() + 0.3 * x * x * y);
    let res = supersolution_residual(&op, &u, 1.0).unwrap();

    // direct route: phi from Hessians, then the linearized stencil with
    // constant coefficients I + A
    let pps = u.points_per_side();
    let mut phi = vec![f64::NAN; pps * pps];
    for (ix, iy) in u.interior_nodes() {
        let h = u.discrete_hessian(ix, iy).unwrap();
        phi[iy * pps + ix] = a.inner(&h) + 0.3;
    }
    let h2 = u.spacing() * u.spacing();
    let coeff = {
        let mut c = a.clone();
        c.add_to(0, 0, 1.0);
        c.add_to(1, 1, 1.0);
        c
    };
    for e in &res.entries {
        let at = |jx: usize, jy: usize| phi[jy * pps + jx];
        let pxx = (at(e.ix + 1, e.iy) - 2.0 * at(e.ix, e.iy) + at(e.ix - 1, e.iy)) / h2;
        let pyy = (at(e.ix, e.iy + 1) - 2.0 * at(e.ix, e.iy) + at(e.ix, e.iy - 1)) / h2;
        let pxy = (at(e.ix + 1, e.iy + 1) + at(e.ix - 1, e.iy - 1)
            - at(e.ix + 1, e.iy - 1)
            - at(e.ix - 1, e.iy + 1))
            / (4.0 * h2);
        let direct = coeff.get(0, 0) * pxx + coeff.get(1, 1) * pyy + 2.0 * coeff.get(0, 1) * pxy;
        assert!(
            (direct - e.value).abs() <= 1e-10 * (1.0 + direct.abs()),
            "node ({}, {}): {} vs {}",
            e.ix,
            e.iy,
            e.value,
            direct
        );
    }
}

#[test]
fn supersolution_residual_names_gauge_violations() {
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let mut u = GridField::<f64>::new(33, GridDomain::UnitBall).unwrap();
    u.fill(|x, y| 0.5 * (x * x - y * y)); // sigma_2 < 0
    let err = supersolution_residual(&op, &u, 1.0).unwrap_err();
    assert!(err.to_string().contains("node"));
}

#[test]
fn dyadic_scan_on_constant_hessian_fields() {
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let mut u = GridField::<f64>::new(129, GridDomain::UnitBall).unwrap();
    u.fill(|x, y| 0.25 * (x * x + y * y));
    let rep = dyadic_scan(&op, &u, 0.05, 3).unwrap();
    for level in &rep.per_level {
        assert_eq!(level.fraction_e, 0.0);
        assert!((level.t_k - rep.per_level[0].t_k).abs() < 1e-12);
    }
    // every ladder threshold is met at the first level
    for entry in &rep.ladder {
        assert_eq!(entry.first_level, Some(1));
    }
    let mut csv = Vec::new();
    rep.write_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("k,t_k,s_k,fractionE_k\n"));
}

#[test]
fn dyadic_scan_respects_resolution_limits() {
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let mut u = GridField::<f64>::new(33, GridDomain::UnitBall).unwrap();
    u.fill(|x, y| 0.25 * (x * x + y * y));
    assert!(matches!(
        dyadic_scan(&op, &u, 0.05, 4),
        Err(Error::Resolution(_))
    ));
}

#[test]
fn dyadic_scan_on_a_solution_links_s_and_t() {
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let cfg = SolveConfig::default();
    let out = solve_dirichlet(
        &op,
        &RightHandSide::Constant(0.0),
        |x, y| 0.3 * (x * x + y * y),
        65,
        GridDomain::UnitBall,
        &cfg,
        None,
    )
    .unwrap();
    let rep = dyadic_scan(&op, &out.field, 0.05, 2).unwrap();
    for level in &rep.per_level {
        let want = op.gauge.g(-level.t_k).unwrap();
        assert!(
            (level.s_k - want).abs() <= 1e-8,
            "s_k = {} vs G(-t_k) = {want}",
            level.s_k
        );
    }
    for w in rep.per_level.windows(2) {
        assert!(w[1].s_k >= w[0].s_k - 1e-10);
        assert!(w[1].t_k <= w[0].t_k + 1e-12);
    }
    assert!(rep.gamma > 0.0);
    assert!(rep.gamma_osc > 0.0);
}

#[test]
fn holder_seminorm_is_zero_for_quadratics() {
    let mut u = GridField::<f64>::new(65, GridDomain::UnitBall).unwrap();
    u.fill(|x, y| 0.4 * x * x - 0.1 * x * y + 0.2 * y * y);
    let hf = HessianField::from_grid(&u).unwrap();
    let rep = holder_seminorm(&hf, 0.5, 0.5);
    // exact up to rounding of the sampled values (~1e-16 / h^2)
    assert!(rep.seminorm <= 1e-10, "seminorm {}", rep.seminorm);
}

#[test]
fn holder_seminorm_of_a_linear_hessian_profile() {
    // u = x^3/2: D^2 u = diag(3x, 0), so the alpha = 1/2 seminorm over the
    // closed ball of radius r is 3 (2r)^(1/2), attained at the diametrical
    // axis pair.
    let mut u = GridField::<f64>::new(33, GridDomain::Square).unwrap();
    u.fill(|x, _| 0.5 * x * x * x);
    let hf = HessianField::from_grid(&u).unwrap();
    let radius = 0.25f64;
    let rep = holder_seminorm(&hf, 0.5, radius);
    let want = 3.0 * (2.0 * radius).sqrt();
    assert!(
        (rep.seminorm - want).abs() <= 1e-10 * want,
        "seminorm {} vs {want}",
        rep.seminorm
    );
    let (p, q) = rep.attained_at.unwrap();
    assert!((p[0] - q[0]).abs() >= 2.0 * radius - 1e-12);
    assert_eq!(p[1], q[1]);

    // smoke determinism: repeated runs agree bitwise
    let again = holder_seminorm(&hf, 0.9, radius);
    let again2 = holder_seminorm(&hf, 0.9, radius);
    assert_eq!(again.seminorm, again2.seminorm);
}

#[test]
fn holder_seminorm_is_ball_monotone() {
    let mut u = GridField::<f64>::new(65, GridDomain::UnitBall).unwrap();
    u.fill(|x, y| 0.3 * (x * x + y * y) + 0.02 * (3.0 * x).sin() * (2.0 * y).cos());
    let hf = HessianField::from_grid(&u).unwrap();
    let mut prev = 0.0;
    for radius in [0.2, 0.35, 0.5] {
        let rep = holder_seminorm(&hf, 0.5, radius);
        assert!(rep.seminorm >= prev);
        prev = rep.seminorm;
    }
}

#[test]
fn holder_scale_identity() {
    // seminorm(v_R, B_1/2) = R^alpha seminorm(u, B_R/2) when u is evaluated
    // on the scaled grid without interpolation
    let tf = TestField::QuadSine {
        hxx: 1.0,
        hyy: 0.8,
        amp: 0.05,
        freq: 1.3,
    };
    let r = 4.0;
    let alpha = 0.5;
    let v = tf.sample_rescaled::<f64>(r, 65, GridDomain::UnitBall).unwrap();
    let hf_v = HessianField::from_grid(&v).unwrap();
    let lhs = holder_seminorm(&hf_v, alpha, 0.5).seminorm;
    let hf_u = hf_v.scale_coords(r);
    let rhs = holder_seminorm(&hf_u, alpha, r / 2.0).seminorm;
    assert!(
        (lhs - r.powf(alpha) * rhs).abs() <= 1e-8 * (1.0 + lhs),
        "lhs = {lhs}, R^a rhs = {}",
        r.powf(alpha) * rhs
    );
}

#[test]
fn quadratic_approx_is_exact_on_zero_set_quadratics() {
    // a I with 2a + a^2 = 1 solves twist-2 with zero right-hand side
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let a = -1.0 + 2.0f64.sqrt();
    let mut u = GridField::<f64>::new(65, GridDomain::UnitBall).unwrap();
    u.fill(|x, y| 0.5 * a * (x * x + y * y));
    let rep = quadratic_approx(&u, &op, 0.5).unwrap();
    assert!(rep.sup_error <= 1e-10, "sup error {}", rep.sup_error);
    assert!(rep.shift.abs() <= 1e-10);
    assert!(rep.residual_at_p <= 1e-10);
    assert!((rep.coefficients[3] - a).abs() <= 1e-9);
}

#[test]
fn quadratic_approx_error_scales_linearly_in_eta() {
    // cubic-type perturbation: the best quadratic fit error scales like eta
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let a = -1.0 + 2.0f64.sqrt();
    let mut u = GridField::<f64>::new(257, GridDomain::UnitBall).unwrap();
    u.fill(|x, y| {
        let r = (x * x + y * y).sqrt();
        0.5 * a * (x * x + y * y) + 0.01 * r * r * r
    });
    let mut errs = Vec::new();
    for eta in [1.0, 0.5, 0.25] {
        errs.push(quadratic_approx(&u, &op, eta).unwrap().sup_error);
    }
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!(
            (1.5..=2.6).contains(&ratio),
            "eta-scaling ratio {ratio}; errors {errs:?}"
        );
    }
}

#[test]
fn quadratic_approx_needs_resolution() {
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let mut u = GridField::<f64>::new(33, GridDomain::UnitBall).unwrap();
    u.fill(|x, y| 0.2 * (x * x + y * y));
    assert!(matches!(
        quadratic_approx(&u, &op, 0.1),
        Err(Error::Resolution(_))
    ));
}

#[test]
fn rigidity_scan_is_zero_for_quadratics() {
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let tf = TestField::Quadratic {
        hxx: 0.8,
        hxy: 0.1,
        hyy: 0.5,
        gx: 0.0,
        gy: 0.0,
        c: 0.0,
    };
    let points = rigidity_scan(&op, &tf, 0.5, &[1.0, 2.0, 4.0, 8.0], 65).unwrap();
    for p in &points {
        assert!(p.value <= 1e-10, "value {}", p.value);
    }
}

#[test]
fn rigidity_scan_decays_once_the_bump_is_unresolved() {
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let tf = TestField::BumpQuadratic {
        hxx: 1.0,
        hyy: 1.0,
        center: [0.35, 0.15],
        radius: 0.125,
        amp: 0.05,
    };
    let points = rigidity_scan(&op, &tf, 0.5, &[1.0, 2.0, 4.0, 8.0], 65).unwrap();
    assert!(points[0].value > 0.0);
    let last = points.last().unwrap();
    assert!(
        last.value <= 0.1 * points[0].value,
        "R = 8 value {} vs R = 1 value {}",
        last.value,
        points[0].value
    );
}

#[test]
fn rigidity_scan_oscillatory_hessian_stays_bounded() {
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let tf = TestField::OscillatoryQuadratic {
        hxx: 2.0,
        hyy: 1.0,
        amp: 0.2,
        freq: 1.0,
    };
    let points = rigidity_scan(&op, &tf, 0.5, &[1.0, 2.0, 4.0], 65).unwrap();
    for p in &points {
        assert!(p.value.is_finite() && p.value > 0.0);
    }
}
