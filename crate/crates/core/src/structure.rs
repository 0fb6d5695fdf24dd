//! Sampling-based verification of the structural conditions.
//!
//! The checks here are evidence, not proofs: quasi-random samples over the
//! declared domain probe ellipticity (one-sided difference quotients along
//! positive semidefinite directions), convexity (midpoints plus the second
//! derivative as a quadratic form), and weak concavity (range, midpoint
//! concavity of the gauge composition, and the `G' >= Q` bound). Every
//! failure carries a concrete witness that re-evaluates as a violation.
//!
//! Normalization: directional slopes are measured against the trace of the
//! step, i.e. `P >= 0` is drawn with `tr P = 1` and the reported constants
//! bound `(F(M + tP) - F(M)) / t` from below and above. For the linear
//! trace operator this makes `lambda = Lambda = 1` exactly, and it is the
//! normalization under which the band envelope satisfies its two-sided
//! sandwich; the operator norm would break the upper bound at `P = I`.

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::operators::{
    hess_operator_fd_with_step, DomainSet, MatrixFn, TwistedOperator,
};
use crate::sampling::SampleStream;
use crate::scalar::Real;
use crate::sym::SymMatrix;
use serde::Serialize;

/// Observed ellipticity constants and any monotonicity violations.
#[derive(Clone, Debug, Serialize)]
pub struct EllipticityReport<T: Real> {
    pub lambda_hat: T,
    pub lambda_upper_hat: T,
    pub samples: usize,
    pub skipped: usize,
    pub violations: Vec<MonotonicityViolation<T>>,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityViolation<T: Real> {
    pub m: SymMatrix<T>,
    pub p: SymMatrix<T>,
    pub step: T,
    pub observed: T,
}

impl<T: Real> MonotonicityViolation<T> {
    /// Re-evaluates the recorded slope; report invariant: this reproduces
    /// `observed` exactly.
    pub fn reproduce(&self, f: &MatrixFn<T>) -> Result<T> {
        let mut stepped = self.m.clone();
        stepped.axpy(self.step, &self.p);
        Ok((f.eval(&stepped)? - f.eval(&self.m)?) / self.step)
    }
}

impl<T: Real> EllipticityReport<T> {
    pub fn passed(&self) -> bool {
        // "uniformly elliptic" threshold: the lower constant must clear a
        // small positive floor
        self.violations.is_empty() && self.lambda_hat > T::of(1e-8)
    }
}

/// Samples difference quotients of `f` along unit-trace PSD directions.
pub fn check_ellipticity<T: Real>(
    f: &MatrixFn<T>,
    set: &DomainSet<T>,
    trials: usize,
    seed: u64,
) -> Result<EllipticityReport<T>> {
    if trials < 1 {
        return Err(Error::Config("ellipticity check needs trials >= 1".into()));
    }
    let n = set.dim();
    let mut stream = SampleStream::new(seed);
    let mut lambda_hat = T::infinity();
    let mut lambda_upper_hat = T::neg_infinity();
    let mut violations = Vec::new();
    let mut used = 0usize;
    let mut skipped = 0usize;
    for _ in 0..trials {
        let m = set.sample(&mut stream);
        let p = stream.psd_unit_trace::<T>(n);
        let t = T::of(1e-4) * (T::one() + m.max_abs());
        let mut stepped = m.clone();
        stepped.axpy(t, &p);
        let (fm, fs) = match (f.eval(&m), f.eval(&stepped)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => {
                // evaluation left the operator's own domain: skip and count
                skipped += 1;
                continue;
            }
        };
        let slope = (fs - fm) / t;
        used += 1;
        lambda_hat = lambda_hat.min(slope);
        lambda_upper_hat = lambda_upper_hat.max(slope);
        if slope < T::of(-1e-10) {
            violations.push(MonotonicityViolation {
                m,
                p,
                step: t,
                observed: slope,
            });
        }
    }
    if used == 0 {
        return Err(Error::Domain(
            "every ellipticity sample failed to evaluate".into(),
        ));
    }
    Ok(EllipticityReport {
        lambda_hat,
        lambda_upper_hat,
        samples: used,
        skipped,
        violations,
        seed,
    })
}

/// A midpoint-convexity violation: `f((a + b)/2) > (f(a) + f(b))/2 + tol`.
#[derive(Clone, Debug, Serialize)]
pub struct ConvexityWitness<T: Real> {
    pub a: SymMatrix<T>,
    pub b: SymMatrix<T>,
    pub midpoint_value: T,
    pub average_value: T,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvexityReport<T: Real> {
    pub pass: bool,
    pub midpoint_pairs: usize,
    pub hessian_directions: usize,
    pub witnesses: Vec<ConvexityWitness<T>>,
    /// Directions where the second derivative came out negative.
    pub curvature_witnesses: Vec<(SymMatrix<T>, SymMatrix<T>, T)>,
    pub seed: u64,
}

/// Midpoint convexity over sampled pairs plus positive semidefiniteness of
/// the second derivative on random symmetric directions.
pub fn check_convexity<T: Real>(
    f: &MatrixFn<T>,
    set: &DomainSet<T>,
    trials: usize,
    seed: u64,
) -> Result<ConvexityReport<T>> {
    if trials < 1 {
        return Err(Error::Config("convexity check needs trials >= 1".into()));
    }
    let n = set.dim();
    let mut stream = SampleStream::new(seed);
    let tol = T::of(1e-10);
    // finite-difference curvature of expression operators is noisier
    let curv_tol = if crate::operators::has_analytic_derivatives(f) {
        T::of(1e-10)
    } else {
        T::of(1e-6)
    };
    let mut witnesses = Vec::new();
    let mut curvature_witnesses = Vec::new();
    for _ in 0..trials {
        let a = set.sample(&mut stream);
        let b = set.sample(&mut stream);
        let mut mid = a.clone();
        mid.axpy(T::one(), &b);
        let mid = mid.scaled(T::of(0.5));
        if let (Ok(fa), Ok(fb), Ok(fm)) = (f.eval(&a), f.eval(&b), f.eval(&mid)) {
            let avg = (fa + fb) * T::of(0.5);
            if fm > avg + tol {
                witnesses.push(ConvexityWitness {
                    a,
                    b,
                    midpoint_value: fm,
                    average_value: avg,
                });
            }
        }
    }
    let hess_points = (trials / 10).max(1);
    let mut directions = 0usize;
    for _ in 0..hess_points {
        let m = set.sample(&mut stream);
        let Ok(h) = crate::operators::hess_operator(f, &m, Some(set)) else {
            continue;
        };
        for _ in 0..20 {
            let x: SymMatrix<T> = stream.sym_uniform(n, T::one());
            let x = x.scaled((T::one() + x.frob_norm()).recip());
            let q = h.quad_form(&x);
            directions += 1;
            if q < -curv_tol * (T::one() + h.max_abs()) {
                curvature_witnesses.push((m.clone(), x, q));
            }
        }
    }
    Ok(ConvexityReport {
        pass: witnesses.is_empty() && curvature_witnesses.is_empty(),
        midpoint_pairs: trials,
        hessian_directions: directions,
        witnesses,
        curvature_witnesses,
        seed,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakConcavityReport<T: Real> {
    pub pass: bool,
    /// Samples whose `F_cap` value left the gauge interval (condition (i)).
    pub range_witnesses: Vec<(SymMatrix<T>, T)>,
    /// Midpoint-concavity failures of `G(F_cap(.))` (condition (ii)).
    pub concavity_witnesses: Vec<ConvexityWitness<T>>,
    /// Scalar points where `G' <= 0`, `G'' > 0`, or `G' < Q` by finite
    /// differences (conditions (ii) and (iii)).
    pub gauge_witnesses: Vec<(T, String)>,
    pub samples: usize,
    pub seed: u64,
}

/// Verifies weak concavity of the concave part of an operator over its
/// declared domain.
pub fn check_weak_concavity<T: Real>(
    op: &TwistedOperator<T>,
    trials: usize,
    seed: u64,
) -> Result<WeakConcavityReport<T>> {
    if trials < 1 {
        return Err(Error::Config("weak-concavity check needs trials >= 1".into()));
    }
    let mut stream = SampleStream::new(seed);
    let f = &op.concave_part;
    let gauge = op.gauge;
    let tol = T::of(1e-10);
    let mut range_witnesses = Vec::new();
    let mut concavity_witnesses = Vec::new();
    let mut gauge_witnesses = Vec::new();
    let mut values = Vec::new();
    for _ in 0..trials {
        let a = op.domain.sample(&mut stream);
        let b = op.domain.sample(&mut stream);
        let mut mid = a.clone();
        mid.axpy(T::one(), &b);
        let mid = mid.scaled(T::of(0.5));
        let mut in_range = true;
        for m in [&a, &b, &mid] {
            if let Ok(v) = f.eval(m) {
                if gauge.contains(v) {
                    values.push(v);
                } else {
                    range_witnesses.push(((*m).clone(), v));
                    in_range = false;
                }
            }
        }
        if !in_range {
            continue;
        }
        // midpoint concavity of G(F_cap(.))
        if let (Ok(fa), Ok(fb), Ok(fm)) = (f.eval(&a), f.eval(&b), f.eval(&mid)) {
            let (ga, gb, gm) = (gauge.g(fa)?, gauge.g(fb)?, gauge.g(fm)?);
            let avg = (ga + gb) * T::of(0.5);
            if gm < avg - tol {
                concavity_witnesses.push(ConvexityWitness {
                    a,
                    b,
                    midpoint_value: gm,
                    average_value: avg,
                });
            }
        }
    }
    // scalar gauge conditions on the sampled value range
    values.sort_by(|x, y| x.partial_cmp(y).unwrap());
    for v in values.iter().step_by((values.len() / 200).max(1)) {
        let x = *v;
        if !gauge.contains_interior(x) {
            continue;
        }
        let h = T::of(1e-6) * (T::one() + x.abs());
        if gauge.contains_interior(x - h) && gauge.contains_interior(x + h) {
            let gp_fd = (gauge.g(x + h)? - gauge.g(x - h)?) / (T::of(2.0) * h);
            if gp_fd <= T::zero() {
                gauge_witnesses.push((x, "G' <= 0 by finite differences".into()));
            }
            let g2_fd =
                (gauge.g(x + h)? - T::of(2.0) * gauge.g(x)? + gauge.g(x - h)?) / (h * h);
            if g2_fd > T::of(1e-6) {
                gauge_witnesses.push((x, "G'' > 0 by finite differences".into()));
            }
        }
        let gp = gauge.g_prime(x)?;
        if gp < gauge.q(x) - T::of(1e-12) {
            gauge_witnesses.push((x, "G' < Q".into()));
        }
    }
    Ok(WeakConcavityReport {
        pass: range_witnesses.is_empty()
            && concavity_witnesses.is_empty()
            && gauge_witnesses.is_empty(),
        range_witnesses,
        concavity_witnesses,
        gauge_witnesses,
        samples: trials,
        seed,
    })
}

/// The constants of the interior estimate, read off a solution field:
/// `gamma = inf Q(-F_cup(D^2 u))` and `Gamma = Osc G(-F_cup(D^2 u))` over
/// the interior nodes within the given radius.
///
/// `gamma` uses `Q` itself rather than a derivative of `Q`: it is the lower
/// bound on the gauge gain that the dyadic iteration consumes, and the only
/// reading that stays positive for the decreasing power-gauge `Q`.
///
/// Pass `radius = 1` for the full interior; discrete solutions develop a
/// thin boundary layer along the staircase mask where the Hessians leave
/// the declared domain, so refinement studies read a fixed inner ball.
pub fn compute_gamma_gamma_upper<T: Real>(
    op: &TwistedOperator<T>,
    u: &GridField<T>,
    radius: T,
) -> Result<(T, T)> {
    let r2 = radius * radius * (T::one() + T::of(1e-12));
    let mut gamma = T::infinity();
    let mut g_min = T::infinity();
    let mut g_max = T::neg_infinity();
    let mut any = false;
    for (ix, iy) in u.interior_nodes() {
        let [x, y] = u.point(ix, iy);
        if x * x + y * y > r2 {
            continue;
        }
        let Ok(hess) = u.discrete_hessian(ix, iy) else {
            continue;
        };
        let v = op.convex_part.eval(&hess)?;
        let arg = -v;
        if !op.gauge.contains(arg) {
            return Err(Error::GaugeDomain(format!(
                "-F_cup(D^2 u) = {} at node ({ix}, {iy}) lies outside the gauge interval",
                arg.as_f64()
            )));
        }
        let g = op.gauge.g(arg)?;
        gamma = gamma.min(op.gauge.q(arg));
        g_min = g_min.min(g);
        g_max = g_max.max(g);
        any = true;
    }
    if !any {
        return Err(Error::Resolution(
            "no interior node carries a full stencil".into(),
        ));
    }
    Ok((gamma, g_max - g_min))
}

/// Pass/fail with witness for one structural condition.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionVerdict {
    pub condition: String,
    pub verdict: bool,
    pub witness: Option<serde_json::Value>,
    pub samples: usize,
    pub seed: u64,
}

/// The assembled certificate for the structural conditions: degenerate
/// ellipticity of both parts, operational smoothness, convexity plus
/// uniform ellipticity of the convex part, and weak concavity.
#[derive(Clone, Debug, Serialize)]
pub struct StructureCertificate<T: Real> {
    pub schema_version: u32,
    pub operator: String,
    pub s1: ConditionVerdict,
    pub s2: ConditionVerdict,
    pub s3: ConditionVerdict,
    pub s4: ConditionVerdict,
    pub ellipticity: EllipticityReport<T>,
    pub notes: String,
}

impl<T: Real> StructureCertificate<T> {
    pub fn all_pass(&self) -> bool {
        self.s1.verdict && self.s2.verdict && self.s3.verdict && self.s4.verdict
    }
}

fn witness_json<T: Real, S: Serialize>(w: Option<&S>) -> Option<serde_json::Value> {
    w.and_then(|v| serde_json::to_value(v).ok())
}

/// Operational smoothness check: nested finite differences of `f` are
/// stable under halving the step (entrywise ratio within `[0.5, 2]` for
/// entries above the noise floor).
pub fn check_c2_stability<T: Real>(
    f: &MatrixFn<T>,
    set: &DomainSet<T>,
    points: usize,
    seed: u64,
) -> Result<(bool, Option<SymMatrix<T>>)> {
    let mut stream = SampleStream::new(seed);
    for _ in 0..points {
        let m = set.sample(&mut stream);
        let h0 = T::of(1e-3) * (T::one() + m.max_abs());
        let (Ok(h1), Ok(h2)) = (
            hess_operator_fd_with_step(f, &m, Some(set), h0),
            hess_operator_fd_with_step(f, &m, Some(set), h0 / T::of(2.0)),
        ) else {
            continue;
        };
        let floor = T::of(1e-5) * (T::one() + h1.max_abs());
        for p in 0..h1.pair_dim() {
            for q in 0..h1.pair_dim() {
                let (a, b) = (h1.entry(p, q), h2.entry(p, q));
                if a.abs() <= floor && b.abs() <= floor {
                    continue;
                }
                let ratio = a / b;
                if !(ratio >= T::of(0.5) && ratio <= T::of(2.0)) {
                    return Ok((false, Some(m)));
                }
            }
        }
    }
    Ok((true, None))
}

/// Runs all four structural checks and assembles the certificate.
pub fn structure_certificate<T: Real>(
    op: &TwistedOperator<T>,
    trials: usize,
    seed: u64,
) -> Result<StructureCertificate<T>> {
    // S1: both parts degenerate elliptic (no negative slopes beyond noise)
    let cup_ell = check_ellipticity(&op.convex_part, &op.domain, trials, seed)?;
    let cap_ell = check_ellipticity(&op.concave_part, &op.domain, trials, seed ^ 1)?;
    let s1_ok = cup_ell.violations.is_empty() && cap_ell.violations.is_empty();
    let s1 = ConditionVerdict {
        condition: "S1: both parts continuous degenerate elliptic".into(),
        verdict: s1_ok,
        witness: witness_json::<T, _>(
            cup_ell
                .violations
                .first()
                .or(cap_ell.violations.first()),
        ),
        samples: cup_ell.samples + cap_ell.samples,
        seed,
    };

    // S2: C^2 on the declared set, checked operationally
    let points = (trials / 50).clamp(3, 12);
    let (cup_c2, cup_w) = check_c2_stability(&op.convex_part, &op.domain, points, seed ^ 2)?;
    let (cap_c2, cap_w) = check_c2_stability(&op.concave_part, &op.domain, points, seed ^ 3)?;
    let s2 = ConditionVerdict {
        condition: "S2: second differences stable under step halving".into(),
        verdict: cup_c2 && cap_c2,
        witness: witness_json::<T, _>(cup_w.as_ref().or(cap_w.as_ref())),
        samples: points * 2,
        seed,
    };

    // S3: convex part convex and uniformly elliptic
    let conv = check_convexity(&op.convex_part, &op.domain, trials, seed ^ 4)?;
    let s3_ok = conv.pass && cup_ell.passed();
    let s3 = ConditionVerdict {
        condition: "S3: convex part convex and uniformly elliptic".into(),
        verdict: s3_ok,
        witness: witness_json::<T, _>(conv.witnesses.first()),
        samples: conv.midpoint_pairs,
        seed,
    };

    // S4: weak concavity via the gauge
    let weak = check_weak_concavity(op, trials, seed ^ 5)?;
    let s4 = ConditionVerdict {
        condition: "S4: concave part weakly concave under the gauge".into(),
        verdict: weak.pass,
        witness: witness_json::<T, _>(weak.concavity_witnesses.first())
            .or_else(|| witness_json::<T, _>(weak.range_witnesses.first())),
        samples: weak.samples,
        seed,
    };

    Ok(StructureCertificate {
        schema_version: crate::SCHEMA_VERSION,
        operator: op.name.clone(),
        s1,
        s2,
        s3,
        s4,
        ellipticity: cup_ell,
        notes: format!(
            "sampling-based evidence over {}; slopes normalized by tr(P)",
            op.domain.describe()
        ),
    })
}
