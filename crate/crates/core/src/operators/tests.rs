use super::preset::{convex_concave, laplace, twist_k, twisted_ma};
use super::*;

fn sym2(a: f64, b: f64, d: f64) -> SymMatrix<f64> {
    let mut m = SymMatrix::zero(2);
    m.set(0, 0, a);
    m.set(0, 1, b);
    m.set(1, 1, d);
    m
}

/// Independent oracle: sigma_k by enumerating eigenvalue subsets.
fn sigma_oracle(eigs: &[f64], k: usize) -> f64 {
    let n = eigs.len();
    let mut total = 0.0;
    // iterate k-subsets by bitmask (n <= 8)
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let mut prod = 1.0;
        for (i, &e) in eigs.iter().enumerate() {
            if mask & (1 << i) != 0 {
                prod *= e;
            }
        }
        total += prod;
    }
    total
}

#[test]
fn sigma_k_trivial_and_derived_examples() {
    let id3 = SymMatrix::<f64>::identity(3);
    assert_eq!(sigma_k(&id3, 1).unwrap(), 3.0);

    let zero3 = SymMatrix::<f64>::zero(3);
    assert_eq!(sigma_k(&zero3, 2).unwrap(), 0.0);

    // oracle: pairs of {1,2,3} -> 1*2 + 1*3 + 2*3 = 11
    let d: SymMatrix<f64> = SymMatrix::from_diag(&[1.0, 2.0, 3.0]);
    assert_eq!(sigma_oracle(&[1.0, 2.0, 3.0], 2), 11.0);
    assert!((sigma_k(&d, 2).unwrap() - 11.0).abs() < 1e-12);
}

#[test]
fn sigma_k_out_of_range_is_domain_error() {
    let id = SymMatrix::<f64>::identity(2);
    assert!(matches!(sigma_k(&id, 0), Err(Error::Domain(_))));
    assert!(matches!(sigma_k(&id, 3), Err(Error::Domain(_))));
}

#[test]
fn sigma_k_matches_subset_oracle_on_rotated_matrices() {
    let mut stream = crate::sampling::SampleStream::new(11);
    for n in 2..=4usize {
        for _ in 0..25 {
            let eigs: Vec<f64> = (0..n).map(|_| stream.uniform(-2.0, 2.0)).collect();
            let m = stream.rotated_from_eigs(&eigs);
            for k in 1..=n {
                let got = sigma_k(&m, k).unwrap();
                let want = sigma_oracle(&eigs, k);
                assert!(
                    (got - want).abs() <= 1e-10 * (1.0 + want.abs()),
                    "sigma_{k} mismatch: {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn sigma_is_orthogonally_invariant() {
    let mut stream = crate::sampling::SampleStream::new(17);
    for _ in 0..100 {
        let n = 2 + stream.uniform_usize(3); // 2..=4
        let m: SymMatrix<f64> = stream.sym_uniform(n, 1.5);
        let q = stream.orthogonal::<f64>(n);
        let rotated = SymMatrix::from_fn(n, |i, j| {
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    s += q.get(a, i) * m.get(a, b) * q.get(b, j);
                }
            }
            s
        });
        for k in 1..=n {
            let x = sigma_k(&m, k).unwrap();
            let y = sigma_k(&rotated, k).unwrap();
            assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
        }
    }
}

#[test]
fn project_blocks_examples() {
    // block-diagonal case
    let m = SymMatrix::block_diag(
        &SymMatrix::from_diag(&[4.0]),
        &SymMatrix::from_diag(&[7.0]),
    );
    let (a, b) = project_blocks(&m, BlockShape::new(1, 1).unwrap()).unwrap();
    assert_eq!(a.get(0, 0), 4.0);
    assert_eq!(b.get(0, 0), 7.0);

    // identity splits into identities
    let id4 = SymMatrix::<f64>::identity(4);
    let (a, b) = project_blocks(&id4, BlockShape::new(2, 2).unwrap()).unwrap();
    assert_eq!(a.tri_entries(), SymMatrix::<f64>::identity(2).tri_entries());
    assert_eq!(b.tri_entries(), SymMatrix::<f64>::identity(2).tri_entries());

    // off-diagonal entries are discarded by definition
    let mut m = SymMatrix::<f64>::zero(2);
    m.set(0, 1, 5.0);
    let (a, b) = project_blocks(&m, BlockShape::new(1, 1).unwrap()).unwrap();
    assert_eq!(a.get(0, 0), 0.0);
    assert_eq!(b.get(0, 0), 0.0);

    // shape mismatch errors
    assert!(project_blocks(&id4, BlockShape::new(1, 1).unwrap()).is_err());
}

#[test]
fn eval_twisted_preset_examples() {
    // twist-k at zero: both variable terms vanish, the folded constant stays
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let out = op.eval(&SymMatrix::zero(2), None).unwrap();
    assert!((out.value - (-1.0)).abs() < 1e-15);

    // twist-2 at the identity: 2 + 1 - 1 = 2
    let out = op.eval(&SymMatrix::identity(2), None).unwrap();
    assert!((out.value - 2.0).abs() < 1e-15);

    // twisted-MA at I_k (+) (-I_l): det roots are 1, eps terms cancel
    let op = twisted_ma::<f64>(1, 1, 0.1, 0.5, 4.0).unwrap();
    let m = SymMatrix::block_diag(
        &SymMatrix::identity(1),
        &SymMatrix::identity(1).scaled(-1.0),
    );
    let out = op.eval(&m, None).unwrap();
    assert!(out.value.abs() < 1e-14);
    assert!(out.in_domain);
}

#[test]
fn eval_twisted_flags_out_of_domain() {
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let out = op.eval(&SymMatrix::from_diag(&[10.0, 10.0]), None).unwrap();
    assert!(!out.in_domain);
}

#[test]
fn grad_of_trace_is_identity() {
    let f = MatrixFn::Affine {
        grad: SymMatrix::<f64>::identity(3),
        offset: 0.0,
    };
    let m = sym_random(3, 5);
    let g = grad_operator(&f, &m, None).unwrap();
    assert_eq!(g.tri_entries(), SymMatrix::<f64>::identity(3).tri_entries());
}

#[test]
fn grad_of_det_at_identity_is_cofactor() {
    // det = sigma_2 in dimension 2; cofactor of I is I
    let f = MatrixFn::<f64>::SigmaK { k: 2 };
    let g = grad_operator(&f, &SymMatrix::identity(2), None).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((g.get(i, j) - want).abs() < 1e-12);
        }
    }
    // cross-check by finite differences
    let fd = grad_operator_fd(&f, &SymMatrix::identity(2), None).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            assert!((g.get(i, j) - fd.get(i, j)).abs() < 1e-8);
        }
    }
}

#[test]
fn grad_of_sigma2_matches_enumeration_oracle() {
    // oracle: d sigma_2 / d m_ii = sigma_1 - m_ii on diagonal matrices
    let m = SymMatrix::from_diag(&[1.0, 2.0, 3.0]);
    let f = MatrixFn::<f64>::SigmaK { k: 2 };
    let g = grad_operator(&f, &m, None).unwrap();
    let tr = 6.0;
    for i in 0..3 {
        assert!((g.get(i, i) - (tr - m.get(i, i))).abs() < 1e-12);
    }
    assert!((g.get(0, 0) - 5.0).abs() < 1e-12);
    assert!((g.get(1, 1) - 4.0).abs() < 1e-12);
    assert!((g.get(2, 2) - 3.0).abs() < 1e-12);
}

fn sym_random(n: usize, seed: u64) -> SymMatrix<f64> {
    let mut stream = crate::sampling::SampleStream::new(seed);
    stream.sym_uniform(n, 1.0)
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let shape = BlockShape::new(1, 1).unwrap();
    let band = crate::envelope::EnvelopeSet::new(shape, 0.5, 4.0).unwrap();
    let cases: Vec<(MatrixFn<f64>, DomainSet<f64>)> = vec![
        (
            MatrixFn::Affine {
                grad: sym_random(3, 1),
                offset: 0.3,
            },
            DomainSet::All { dim: 3 },
        ),
        (
            MatrixFn::SigmaK { k: 2 },
            DomainSet::EigenBox {
                dim: 2,
                lo: 0.1,
                hi: 2.0,
            },
        ),
        (
            MatrixFn::SigmaK { k: 3 },
            DomainSet::EigenBox {
                dim: 3,
                lo: 0.1,
                hi: 2.0,
            },
        ),
        (
            MatrixFn::SigmaK { k: 2 },
            DomainSet::EigenBox {
                dim: 4,
                lo: -1.0,
                hi: 1.0,
            },
        ),
        (MatrixFn::BlockDetCup { shape, eps: 0.1 }, DomainSet::Band(band)),
        (MatrixFn::BlockDetCap { shape, eps: 0.1 }, DomainSet::Band(band)),
        (
            MatrixFn::DiagExpConvex {
                dim: 2,
                weight: 0.2,
            },
            DomainSet::EigenBox {
                dim: 2,
                lo: -1.0,
                hi: 1.0,
            },
        ),
        (
            MatrixFn::DiagExpConcave {
                dim: 2,
                weight: 0.2,
            },
            DomainSet::EigenBox {
                dim: 2,
                lo: -1.0,
                hi: 1.0,
            },
        ),
        (
            MatrixFn::QuadraticForm { a: sym_random(3, 2) },
            DomainSet::All { dim: 3 },
        ),
    ];
    for (f, dom) in &cases {
        let mut stream = crate::sampling::SampleStream::new(99);
        for _ in 0..100 {
            let m = dom.sample(&mut stream);
            let ga = grad_operator(f, &m, Some(dom)).unwrap();
            let gf = grad_operator_fd(f, &m, Some(dom)).unwrap();
            let scale = 1.0 + ga.max_abs();
            assert!(
                ga.minus(&gf).max_abs() <= 1e-6 * scale,
                "gradient mismatch for {} (analytic {:?} vs fd {:?})",
                f.name(),
                ga,
                gf
            );
        }
    }
}

#[test]
fn hessian_of_trace_is_zero() {
    let f = MatrixFn::Affine {
        grad: SymMatrix::<f64>::identity(3),
        offset: 0.0,
    };
    let h = hess_operator(&f, &sym_random(3, 3), None).unwrap();
    assert_eq!(h.max_abs(), 0.0);
}

#[test]
fn hessian_of_sigma2_in_dim2_is_the_constant_tensor() {
    // sigma_2 = m11 m22 - m12^2: the (11),(22) entry is 1 and the mixed
    // (12),(12) entry is -1/2 under the symmetrized-direction convention.
    let f = MatrixFn::<f64>::SigmaK { k: 2 };
    let h = hess_operator(&f, &sym_random(2, 4), None).unwrap();
    // canonical pairs for n = 2: 0 -> (0,0), 1 -> (0,1), 2 -> (1,1)
    assert!((h.entry(0, 2) - 1.0).abs() < 1e-12);
    assert!((h.entry(2, 0) - 1.0).abs() < 1e-12);
    assert!((h.entry(1, 1) - (-0.5)).abs() < 1e-12);
    assert!(h.entry(0, 0).abs() < 1e-12);
    assert!(h.entry(2, 2).abs() < 1e-12);
    assert!(h.entry(0, 1).abs() < 1e-12);
}

#[test]
fn quadratic_form_hessian_matches_symbolic_second_derivative() {
    // F(M) = tr(M A M): D^2 F[X, X] = 2 tr(X A X)
    let a = sym_random(3, 5);
    let f = MatrixFn::QuadraticForm { a: a.clone() };
    let h = hess_operator(&f, &sym_random(3, 6), None).unwrap();
    let mut stream = crate::sampling::SampleStream::new(12);
    for _ in 0..20 {
        let x: SymMatrix<f64> = stream.sym_uniform(3, 1.0);
        let xd = x.to_dense();
        let want = 2.0 * xd.mul(&a.to_dense()).mul(&xd).trace();
        let got = h.quad_form(&x);
        assert!((got - want).abs() < 1e-10 * (1.0 + want.abs()));
    }
}

#[test]
fn numeric_hessian_is_symmetric_across_nesting_order() {
    // independent nested first differences in both orders
    let f = MatrixFn::<f64>::Custom {
        dim: 2,
        expr: expr::Expr::parse("sigma2^2 + 0.3*tr").unwrap(),
    };
    let m = sym2(1.2, 0.1, 0.8);
    let h = 1e-4;
    let np = crate::sym::pair_count(2);
    for p in 0..np {
        for q in 0..np {
            let dp = SymMatrix::basis_direction(2, p);
            let dq = SymMatrix::basis_direction(2, q);
            let g = |m: &SymMatrix<f64>, d: &SymMatrix<f64>| {
                let mut plus = m.clone();
                plus.axpy(h, d);
                let mut minus = m.clone();
                minus.axpy(-h, d);
                (f.eval(&plus).unwrap() - f.eval(&minus).unwrap()) / (2.0 * h)
            };
            let pq = {
                let mut plus = m.clone();
                plus.axpy(h, &dq);
                let mut minus = m.clone();
                minus.axpy(-h, &dq);
                (g(&plus, &dp) - g(&minus, &dp)) / (2.0 * h)
            };
            let qp = {
                let mut plus = m.clone();
                plus.axpy(h, &dp);
                let mut minus = m.clone();
                minus.axpy(-h, &dp);
                (g(&plus, &dq) - g(&minus, &dq)) / (2.0 * h)
            };
            assert!((pq - qp).abs() < 1e-8 * (1.0 + pq.abs()));
        }
    }
    // the production estimate uses the four-point formula, symmetric by
    // construction
    let hh = hess_operator(&f, &m, None).unwrap();
    assert_eq!(hh.asymmetry(), 0.0);
}

#[test]
fn gauge_eval_examples() {
    let g = Gauge::Power { k: 3 };
    let v = g.eval(8.0f64).unwrap();
    assert!((v.g - 2.0).abs() < 1e-12);

    for k in 1..=5u32 {
        let v = Gauge::Power { k }.eval(1.0f64).unwrap();
        assert!((v.g - 1.0).abs() < 1e-14);
    }

    let v = Gauge::Identity.eval(-4.0f64).unwrap();
    assert_eq!((v.g, v.g_prime, v.q), (-4.0, 1.0, 1.0));
}

#[test]
fn gauge_domain_violation_names_the_condition() {
    let g = Gauge::Power { k: 2 };
    let err = g.eval(-1.0f64).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("(i)"), "message should name condition (i): {msg}");
}

#[test]
fn power_gauge_derivative_matches_finite_differences() {
    for k in 2..=4u32 {
        let g = Gauge::Power { k };
        for i in 1..60 {
            let x = 0.05 * i as f64;
            let h = 1e-6 * (1.0 + x);
            let fd = (g.g(x + h).unwrap() - g.g(x - h).unwrap()) / (2.0 * h);
            let gp = g.g_prime(x).unwrap();
            assert!((fd - gp).abs() <= 1e-6 * (1.0 + gp.abs()));
            // concavity: second difference nonpositive up to rounding
            let d2 = (g.g(x + h).unwrap() - 2.0 * g.g(x).unwrap() + g.g(x - h).unwrap())
                / (h * h);
            assert!(d2 <= 1e-10);
        }
    }
}

#[test]
fn power_gauge_q_lower_bounds_g_prime() {
    // the 1/k-corrected Q: G' >= Q everywhere on the interior of U
    for k in 2..=5u32 {
        let g = Gauge::Power { k };
        for i in 0..10_000 {
            let x = 1e-6 * (10f64).powf(9.0 * i as f64 / 9_999.0); // 1e-6 .. 1e3
            let q = g.q(x);
            let gp = g.g_prime(x).unwrap();
            assert!(q > 0.0);
            assert!(gp >= q - 1e-12, "G'({x}) = {gp} < Q = {q} at k = {k}");
        }
    }
}

#[test]
fn gauge_chain_rule_along_matrix_lines() {
    // d/dt G(F_cap(M + tX)) = G'(F_cap) * <grad F_cap, X>
    let op = twist_k::<f64>(2, 2, 1.0).unwrap();
    let mut stream = crate::sampling::SampleStream::new(23);
    for _ in 0..50 {
        let m = op.domain.sample(&mut stream);
        let x: SymMatrix<f64> = stream.sym_uniform(2, 0.3);
        let f = &op.concave_part;
        let s = f.eval(&m).unwrap();
        if s <= 0.05 {
            continue;
        }
        let grad = grad_operator(f, &m, Some(&op.domain)).unwrap();
        let analytic = op.gauge.g_prime(s).unwrap() * grad.inner(&x);
        let h = 1e-6;
        let at = |t: f64| {
            let mut mt = m.clone();
            mt.axpy(t, &x);
            op.gauge.g(f.eval(&mt).unwrap()).unwrap()
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        assert!(
            (fd - analytic).abs() <= 1e-5 * (1.0 + analytic.abs()),
            "chain rule mismatch: fd {fd} vs {analytic}"
        );
    }
}

#[test]
fn euler_identity_for_sigma_k() {
    // sigma_k is homogeneous of degree k: <grad sigma_k, M> = k sigma_k(M)
    let mut stream = crate::sampling::SampleStream::new(31);
    for _ in 0..50 {
        let n = 2 + stream.uniform_usize(3);
        let m: SymMatrix<f64> = stream.sym_uniform(n, 1.0);
        for k in 1..=n {
            let g = sigma_grad(&m, k).unwrap();
            let lhs = g.inner(&m);
            let rhs = k as f64 * sigma_k(&m, k).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }
    }
}

#[test]
fn custom_expression_operator_evaluates_invariants() {
    let f = MatrixFn::<f64>::Custom {
        dim: 2,
        expr: expr::Expr::parse("tr + sigma2 - 1").unwrap(),
    };
    assert!((f.eval(&SymMatrix::identity(2)).unwrap() - 2.0).abs() < 1e-12);
    let fd = grad_operator(&f, &SymMatrix::identity(2), None).unwrap();
    // grad(tr + det - 1) at I in dim 2 is I + cofactor(I) = 2I
    for i in 0..2 {
        assert!((fd.get(i, i) - 2.0).abs() < 1e-6);
    }
    assert!(fd.get(0, 1).abs() < 1e-6);
}

#[test]
fn spatial_rhs_is_subtracted() {
    let mut op = laplace::<f64>(2);
    op.rhs = Some(SpatialFn::Expr(expr::Expr::parse("1 + x*y").unwrap()));
    let v = op
        .eval_raw(&SymMatrix::identity(2), Some([2.0, 3.0]))
        .unwrap();
    assert!((v - (2.0 - 7.0)).abs() < 1e-14);
    assert!(op.eval_raw(&SymMatrix::identity(2), None).is_err());
}

#[test]
fn presets_validate_their_parameters() {
    assert!(twist_k::<f64>(2, 5, 1.0).is_err());
    assert!(twisted_ma::<f64>(1, 1, 0.5, 0.5, 4.0).is_err()); // eps too large
    assert!(twisted_ma::<f64>(1, 1, 0.1, 0.5, 1.0).is_err()); // kappa below 1/lambda
    assert!(convex_concave::<f64>(2, -0.1, 0.2).is_err());
    let op = twisted_ma::<f64>(1, 1, 0.1, 0.5, 4.0).unwrap();
    op.validate().unwrap();
}

#[test]
fn preset_spec_builds_and_describes() {
    let spec = super::preset::PresetSpec {
        preset: "twist-k".into(),
        k: Some(2),
        ..Default::default()
    };
    let op: TwistedOperator<f64> = super::preset::build(&spec).unwrap();
    assert_eq!(op.dim, 2);
    let text = super::preset::describe("twist-k").unwrap();
    assert!(text.contains("Delta u + sigma_k(D^2 u) = "));
    let text = super::preset::describe("twisted-ma").unwrap();
    assert!(text.contains("eps tr(pi_k M)"));
    let text = super::preset::describe("custom").unwrap();
    assert!(text.contains("sigma1"));
    assert!(super::preset::describe("nope").is_err());
}
