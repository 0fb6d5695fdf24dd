//! The interior-estimate verification harness.
//!
//! Everything here probes, on concrete fields, the machinery behind the
//! interior Holder estimate for twisted operators:
//!
//! * [`lemma_terms`] evaluates the three-term decomposition of
//!   `L[G(F_cap(D^2 u))]` pointwise; each term is structurally nonpositive
//!   (that is the supersolution property of the gauge composition).
//! * [`supersolution_residual`] applies the discrete linearized operator to
//!   the gauge composition on a solved field; the positive part is pure
//!   discretization error and shrinks under refinement.
//! * [`dyadic_scan`] tracks `t_k = sup F_cup(D^2 u)` and
//!   `s_k = inf G(F_cap(D^2 u))` over shrinking dyadic balls together with
//!   the exceptional-set fractions; on solutions `s_k = G(-t_k)` and `s_k`
//!   is nondecreasing.
//! * [`holder_seminorm`] is the brute-force discrete `C^alpha` seminorm of
//!   the Hessian field.
//! * [`quadratic_approx`] fits the rescaled field by a quadratic and
//!   projects its Hessian onto the zero level set along the identity
//!   direction (a one-dimensional root find, exact by uniform ellipticity).
//! * [`rigidity_scan`] measures `R^alpha`-scaled seminorms of parabolic
//!   rescalings of an entire field; growth across scales witnesses that the
//!   field is not a global solution.

pub mod fields;

use crate::error::{Error, Result};
use crate::grid::{GridDomain, GridField};
use crate::operators::{grad_operator, hess_operator, TwistedOperator};
use crate::scalar::Real;
use crate::structure::compute_gamma_gamma_upper;
use crate::sym::{solve_dense, Dense, Sym3Tensor, SymMatrix};
use fields::TestField;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};

/// The three terms of the decomposition of `L[G(F_cap(D^2 u))]`, returned
/// separately; their sum is the exact value of the linearized operator
/// applied to the gauge composition, given third derivatives `u_aij`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LemmaTerms<T> {
    /// `F_cup^{ab} (G' F_cap^{ij,rs} + G'' F_cap^{ij} F_cap^{rs}) u_aij u_brs`
    pub t1: T,
    /// `G'' F_cap^{ab} F_cap^{ij} F_cap^{rs} u_aij u_brs`
    pub t2: T,
    /// `-G' F_cap^{ab} F_cup^{ij,rs} u_aij u_brs`
    pub t3: T,
}

impl<T: Real> LemmaTerms<T> {
    pub fn sum(&self) -> T {
        self.t1 + self.t2 + self.t3
    }
}

/// Evaluates the three-term decomposition at a matrix point. Requires
/// `F_cap(d2u)` in the interior of the gauge interval and fully symmetric
/// third derivatives.
pub fn lemma_terms<T: Real>(
    op: &TwistedOperator<T>,
    d2u: &SymMatrix<T>,
    d3u: &Sym3Tensor<T>,
) -> Result<LemmaTerms<T>> {
    let n = op.dim;
    if d2u.dim() != n || d3u.dim() != n {
        return Err(Error::DimensionMismatch(
            "lemma terms need matching operator and tensor dimensions".into(),
        ));
    }
    let s = op.concave_part.eval(d2u)?;
    if !op.gauge.contains_interior(s) {
        return Err(Error::GaugeDomain(format!(
            "F_cap(D^2 u) = {} is not interior to the gauge interval",
            s.as_f64()
        )));
    }
    let g_prime = op.gauge.g_prime(s)?;
    let g_second = op.gauge.g_second(s)?;
    let grad_cup = grad_operator(&op.convex_part, d2u, Some(&op.domain))?;
    let grad_cap = grad_operator(&op.concave_part, d2u, Some(&op.domain))?;
    let hess_cup = hess_operator(&op.convex_part, d2u, Some(&op.domain))?;
    let hess_cap = hess_operator(&op.concave_part, d2u, Some(&op.domain))?;

    let slices: Vec<SymMatrix<T>> = (0..n).map(|a| d3u.slice(a)).collect();
    let v: Vec<T> = slices.iter().map(|va| grad_cap.inner(va)).collect();

    let mut t1 = T::zero();
    let mut t2 = T::zero();
    let mut t3 = T::zero();
    for a in 0..n {
        for b in 0..n {
            let b_cap = hess_cap.contract(&slices[a], &slices[b]);
            let b_cup = hess_cup.contract(&slices[a], &slices[b]);
            t1 += grad_cup.get(a, b) * (g_prime * b_cap + g_second * v[a] * v[b]);
            t2 += g_second * grad_cap.get(a, b) * v[a] * v[b];
            t3 -= g_prime * grad_cap.get(a, b) * b_cup;
        }
    }
    Ok(LemmaTerms { t1, t2, t3 })
}

/// A scalar value attached to a grid node.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NodeValue<T> {
    pub ix: usize,
    pub iy: usize,
    pub x: T,
    pub y: T,
    pub value: T,
}

/// Sparse per-node field, the output of nodewise diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct NodeField<T> {
    pub points_per_side: usize,
    pub h: T,
    pub entries: Vec<NodeValue<T>>,
}

impl<T: Real> NodeField<T> {
    pub fn max_positive(&self) -> T {
        self.entries
            .iter()
            .fold(T::zero(), |m, e| m.max(e.value))
    }

    pub fn sup_abs(&self) -> T {
        self.entries
            .iter()
            .fold(T::zero(), |m, e| m.max(e.value.abs()))
    }

    /// Restriction to the closed ball of the given radius about the origin.
    pub fn restrict_to_ball(&self, radius: T) -> NodeField<T> {
        let r2 = radius * radius * (T::one() + T::of(1e-12));
        NodeField {
            points_per_side: self.points_per_side,
            h: self.h,
            entries: self
                .entries
                .iter()
                .filter(|e| e.x * e.x + e.y * e.y <= r2)
                .copied()
                .collect(),
        }
    }
}

/// Applies the discrete linearized operator to `G(F_cap(D^2_h u))` within
/// the given radius.
///
/// The gauge composition is formed at every interior node of the ball, then
/// the second-difference stencil weighted by the linearization coefficients
/// is applied wherever the full 8-neighborhood carries values. On solutions
/// of `F(D^2 u) = const` the continuum value is nonpositive, so the
/// positive part of the returned field is a consistency error.
///
/// The radius exists because discrete solutions develop a thin layer along
/// the staircase boundary where `F_cap(D^2_h u)` can leave the gauge
/// interval; the harness reads well inside (the lemma's hypotheses are
/// interior statements). Gauge violations inside the requested ball are
/// still errors naming the node.
pub fn supersolution_residual<T: Real>(
    op: &TwistedOperator<T>,
    u: &GridField<T>,
    radius: T,
) -> Result<NodeField<T>> {
    let pps = u.points_per_side();
    // phi needs one extra ring beyond the requested ball for its stencil
    let margin = radius + T::of(2.0) * u.spacing();
    let m2 = margin * margin * (T::one() + T::of(1e-12));
    let r2 = radius * radius * (T::one() + T::of(1e-12));
    let mut phi = vec![T::nan(); pps * pps];
    let mut hessians: Vec<Option<SymMatrix<T>>> = vec![None; pps * pps];
    for (ix, iy) in u.interior_nodes() {
        let [x, y] = u.point(ix, iy);
        if x * x + y * y > m2 {
            continue;
        }
        let h = u
            .discrete_hessian(ix, iy)
            .map_err(|_| Error::Stencil(ix, iy))?;
        let s = op.concave_part.eval(&h)?;
        if !op.gauge.contains(s) {
            return Err(Error::GaugeDomain(format!(
                "F_cap(D^2 u) = {} at node ({ix}, {iy}) is outside the gauge interval",
                s.as_f64()
            )));
        }
        phi[iy * pps + ix] = op.gauge.g(s)?;
        hessians[iy * pps + ix] = Some(h);
    }
    let h2 = u.spacing() * u.spacing();
    let mut entries = Vec::new();
    for (ix, iy) in u.deep_interior_nodes() {
        let [x, y] = u.point(ix, iy);
        if x * x + y * y > r2 {
            continue;
        }
        let hess = hessians[iy * pps + ix].as_ref().expect("interior node");
        let a = op.linearization(hess)?;
        let at = |jx: usize, jy: usize| phi[jy * pps + jx];
        let two = T::of(2.0);
        let pxx = (at(ix + 1, iy) - two * at(ix, iy) + at(ix - 1, iy)) / h2;
        let pyy = (at(ix, iy + 1) - two * at(ix, iy) + at(ix, iy - 1)) / h2;
        let pxy = (at(ix + 1, iy + 1) + at(ix - 1, iy - 1)
            - at(ix + 1, iy - 1)
            - at(ix - 1, iy + 1))
            / (T::of(4.0) * h2);
        let value = a.get(0, 0) * pxx + a.get(1, 1) * pyy + two * a.get(0, 1) * pxy;
        let [x, y] = u.point(ix, iy);
        entries.push(NodeValue {
            ix,
            iy,
            x,
            y,
            value,
        });
    }
    Ok(NodeField {
        points_per_side: pps,
        h: u.spacing(),
        entries,
    })
}

/// Per-level data of the dyadic scan.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DyadicLevel<T> {
    pub k: u32,
    pub t_k: T,
    pub s_k: T,
    pub fraction_e: T,
    pub nodes: usize,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LadderEntry {
    pub delta: f64,
    pub first_level: Option<u32>,
}

/// Report of the dyadic oscillation scan.
#[derive(Clone, Debug, Serialize)]
pub struct DyadicReport<T> {
    pub schema_version: u32,
    pub xi: T,
    pub k_max: u32,
    pub per_level: Vec<DyadicLevel<T>>,
    pub gamma: T,
    #[serde(rename = "Gamma")]
    pub gamma_osc: T,
    /// First level at which the exceptional fraction drops below each
    /// threshold of the default ladder.
    pub ladder: Vec<LadderEntry>,
    /// Smallest exceptional fraction seen across levels.
    pub delta: T,
}

impl<T: Real> DyadicReport<T> {
    /// CSV with the documented column set.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,t_k,s_k,fractionE_k")?;
        for lev in &self.per_level {
            writeln!(
                w,
                "{},{},{},{}",
                lev.k,
                lev.t_k.as_f64(),
                lev.s_k.as_f64(),
                lev.fraction_e.as_f64()
            )?;
        }
        Ok(())
    }
}

/// Scans `F_cup(D^2 u)` and `G(F_cap(D^2 u))` over the dyadic balls
/// `B_{2^-k}`, `k = 1 .. k_max`.
pub fn dyadic_scan<T: Real>(
    op: &TwistedOperator<T>,
    u: &GridField<T>,
    xi: T,
    k_max: u32,
) -> Result<DyadicReport<T>> {
    if xi <= T::zero() {
        return Err(Error::Config("dyadic scan needs xi > 0".into()));
    }
    let m = u.points_per_side() - 1;
    let center = m / 2;
    // resolution precondition: at least 5 nodes per side in the deepest ball
    let axis_count = (0..=m)
        .filter(|&ix| u.in_dyadic_ball(ix, center, k_max))
        .count();
    if axis_count < 5 {
        return Err(Error::Resolution(format!(
            "ball B_(2^-{k_max}) holds only {axis_count} nodes per side (need 5)"
        )));
    }
    // operator values at the nodes of the largest scanned ball B_{1/2}
    let mut cup_vals = Vec::new();
    for (ix, iy) in u.interior_nodes() {
        if !u.in_dyadic_ball(ix, iy, 1) {
            continue;
        }
        let h = u.discrete_hessian(ix, iy)?;
        let cup = op.convex_part.eval(&h)?;
        let cap = op.concave_part.eval(&h)?;
        if !op.gauge.contains(cap) {
            return Err(Error::GaugeDomain(format!(
                "F_cap(D^2 u) = {} at node ({ix}, {iy}) is outside the gauge interval",
                cap.as_f64()
            )));
        }
        cup_vals.push((ix, iy, cup, op.gauge.g(cap)?));
    }
    let mut per_level = Vec::new();
    for k in 1..=k_max {
        let in_ball: Vec<&(usize, usize, T, T)> = cup_vals
            .iter()
            .filter(|(ix, iy, _, _)| u.in_dyadic_ball(*ix, *iy, k))
            .collect();
        if in_ball.is_empty() {
            return Err(Error::Resolution(format!(
                "ball B_(2^-{k}) contains no interior nodes"
            )));
        }
        let t_k = in_ball
            .iter()
            .fold(T::neg_infinity(), |m, e| m.max(e.2));
        let s_k = in_ball.iter().fold(T::infinity(), |m, e| m.min(e.3));
        let exceptional = in_ball.iter().filter(|e| e.2 <= t_k - xi).count();
        per_level.push(DyadicLevel {
            k,
            t_k,
            s_k,
            fraction_e: T::of_usize(exceptional) / T::of_usize(in_ball.len()),
            nodes: in_ball.len(),
        });
    }
    // constants over the largest scanned ball; the full discrete interior
    // carries a staircase boundary layer the scan never reads
    let (gamma, gamma_osc) = compute_gamma_gamma_upper(op, u, T::of(0.5))?;
    let ladder = [0.5, 0.25, 0.1]
        .iter()
        .map(|&delta| LadderEntry {
            delta,
            first_level: per_level
                .iter()
                .find(|lev| lev.fraction_e.as_f64() <= delta)
                .map(|lev| lev.k),
        })
        .collect();
    let delta = per_level
        .iter()
        .fold(T::infinity(), |m, lev| m.min(lev.fraction_e));
    Ok(DyadicReport {
        schema_version: crate::SCHEMA_VERSION,
        xi,
        k_max,
        per_level,
        gamma,
        gamma_osc,
        ladder,
        delta,
    })
}

/// Discrete Hessians attached to their node coordinates.
#[derive(Clone, Debug)]
pub struct HessianField<T: Real> {
    pub points: Vec<([T; 2], SymMatrix<T>)>,
}

impl<T: Real> HessianField<T> {
    /// Discrete Hessians at every interior node of the field.
    pub fn from_grid(u: &GridField<T>) -> Result<Self> {
        let mut points = Vec::new();
        for (ix, iy) in u.interior_nodes() {
            let h = u.discrete_hessian(ix, iy)?;
            points.push((u.point(ix, iy), h));
        }
        Ok(Self { points })
    }

    /// Scales coordinates by `r` (the pullback taking a unit-grid field of
    /// `v_R` to the `B_R`-grid field of `u`).
    pub fn scale_coords(&self, r: T) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|([x, y], h)| ([*x * r, *y * r], h.clone()))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GridLevelSeminorm<T> {
    pub h: T,
    pub seminorm: T,
}

/// Discrete Holder seminorm report.
#[derive(Clone, Debug, Serialize)]
pub struct HolderReport<T> {
    pub schema_version: u32,
    pub alpha: T,
    pub radius: T,
    pub seminorm: T,
    /// The node pair attaining the maximum.
    pub attained_at: Option<([T; 2], [T; 2])>,
    /// Filled by refinement studies; single evaluations leave it empty.
    pub grid_levels: Vec<GridLevelSeminorm<T>>,
}

/// Brute-force discrete `C^alpha` seminorm of a Hessian field over the
/// closed ball of the given radius: the maximum over node pairs of
/// `|H(x) - H(y)| / |x - y|^alpha` in the matrix operator norm. Pairs are
/// pruned against the running maximum through the monotone bound
/// `ratio <= |H(x) - H(y)| / |x - y|` for distances below one.
pub fn holder_seminorm<T: Real>(
    hf: &HessianField<T>,
    alpha: T,
    radius: T,
) -> HolderReport<T> {
    let r2 = radius * radius * (T::one() + T::of(1e-12));
    let pts: Vec<(&[T; 2], &SymMatrix<T>)> = hf
        .points
        .iter()
        .filter(|([x, y], _)| *x * *x + *y * *y <= r2)
        .map(|(p, h)| (p, h))
        .collect();
    let best_bits = AtomicU64::new(0f64.to_bits());
    let results: Vec<(T, usize, usize)> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut local_best = T::zero();
            let mut local_pair = (0usize, 0usize);
            let ([xi, yi], hi) = pts[i];
            for j in (i + 1)..pts.len() {
                let ([xj, yj], hj) = pts[j];
                let dx = *xi - *xj;
                let dy = *yi - *yj;
                let d2 = dx * dx + dy * dy;
                let num = hi.minus(hj).op_norm();
                let shared = T::of(f64::from_bits(best_bits.load(Ordering::Relaxed)));
                let floor = local_best.max(shared);
                // sound prune: for d <= 1 and alpha <= 1 the ratio is at
                // most num/d; for d > 1 it is at most num
                if d2 <= T::one() {
                    if num * num <= floor * floor * d2 {
                        continue;
                    }
                } else if num <= floor {
                    continue;
                }
                let ratio = num / d2.sqrt().powf(alpha);
                if ratio > local_best {
                    local_best = ratio;
                    local_pair = (i, j);
                }
            }
            // publish a monotone lower bound for other threads
            let mut seen = best_bits.load(Ordering::Relaxed);
            while f64::from_bits(seen) < local_best.as_f64() {
                match best_bits.compare_exchange(
                    seen,
                    local_best.as_f64().to_bits(),
                    Ordering::Relaxed,
                    Ordering::Relaxed,
                ) {
                    Ok(_) => break,
                    Err(actual) => seen = actual,
                }
            }
            (local_best, local_pair.0, local_pair.1)
        })
        .collect();
    let mut seminorm = T::zero();
    let mut pair = None;
    for (v, i, j) in results {
        if v > seminorm {
            seminorm = v;
            pair = Some((*pts[i].0, *pts[j].0));
        }
    }
    HolderReport {
        schema_version: crate::SCHEMA_VERSION,
        alpha,
        radius,
        seminorm,
        attained_at: pair,
        grid_levels: Vec::new(),
    }
}

/// Quadratic approximation report: the fitted polynomial (coefficients in
/// the rescaled coordinates, `[c, gx, gy, hxx, hxy, hyy]` with the
/// quadratic part `x^T H x / 2`), the sup error achieved, and the operator
/// residual after projecting the Hessian onto the zero level set.
#[derive(Clone, Debug, Serialize)]
pub struct QuadApproxReport<T> {
    pub schema_version: u32,
    pub eta: T,
    pub coefficients: [T; 6],
    pub sup_error: T,
    pub residual_at_p: T,
    /// Identity-direction shift applied by the projection.
    pub shift: T,
}

/// Least-squares quadratic fit to `eta^{-2} u(eta x)` over the unit ball,
/// followed by the identity-direction projection of the Hessian onto
/// `{F = 0}` (strictly increasing in the shift by uniform ellipticity).
pub fn quadratic_approx<T: Real>(
    u: &GridField<T>,
    op: &TwistedOperator<T>,
    eta: T,
) -> Result<QuadApproxReport<T>> {
    if eta <= T::zero() || eta > T::one() {
        return Err(Error::Config("eta must lie in (0, 1]".into()));
    }
    // nodes with |z| <= eta
    let e2 = eta * eta * (T::one() + T::of(1e-12));
    let mut nodes = Vec::new();
    let mut axis = std::collections::BTreeSet::new();
    for (ix, iy) in u.interior_nodes() {
        let [x, y] = u.point(ix, iy);
        if x * x + y * y <= e2 {
            nodes.push((x, y, u.get(ix, iy)));
            if y == T::zero() {
                axis.insert(ix);
            }
        }
    }
    if axis.len() < 9 {
        return Err(Error::Resolution(format!(
            "eta = {} resolves only {} nodes per side (need 9)",
            eta.as_f64(),
            axis.len()
        )));
    }
    // basis: 1, x, y, x^2/2, xy, y^2/2
    let basis = |x: T, y: T| -> [T; 6] {
        [
            T::one(),
            x,
            y,
            x * x * T::of(0.5),
            x * y,
            y * y * T::of(0.5),
        ]
    };
    let mut ata = Dense::zero(6);
    let mut atb = vec![T::zero(); 6];
    for &(x, y, v) in &nodes {
        let b = basis(x, y);
        for i in 0..6 {
            for j in 0..6 {
                ata.set(i, j, ata.get(i, j) + b[i] * b[j]);
            }
            atb[i] += b[i] * v;
        }
    }
    let coeff = solve_dense(&ata, &atb)?;
    let mut hess = SymMatrix::zero(2);
    hess.set(0, 0, coeff[3]);
    hess.set(0, 1, coeff[4]);
    hess.set(1, 1, coeff[5]);

    // project onto {F = 0} along +cI; F is strictly increasing in c
    let f_at = |c: T| -> Result<T> {
        let mut h = hess.clone();
        h.add_to(0, 0, c);
        h.add_to(1, 1, c);
        if !op.domain.contains(&h) {
            return Err(Error::Projection(format!(
                "shifted Hessian leaves the declared domain at c = {}",
                c.as_f64()
            )));
        }
        Ok(op.convex_part.eval(&h)? + op.concave_part.eval(&h)?)
    };
    let f0 = f_at(T::zero())?;
    let mut lo = T::zero();
    let mut hi = T::zero();
    if f0 > T::zero() {
        // walk down
        let mut step = T::of(0.25);
        loop {
            lo = lo - step;
            if f_at(lo)? <= T::zero() {
                hi = lo + step;
                break;
            }
            step = step * T::of(2.0);
        }
    } else if f0 < T::zero() {
        let mut step = T::of(0.25);
        loop {
            hi = hi + step;
            if f_at(hi)? >= T::zero() {
                lo = hi - step;
                break;
            }
            step = step * T::of(2.0);
        }
    }
    let mut shift = T::zero();
    if f0 != T::zero() {
        // bisection on the increasing map c -> F(C + cI)
        for _ in 0..200 {
            shift = (lo + hi) * T::of(0.5);
            let v = f_at(shift)?;
            if v.abs() <= T::of(1e-13) {
                break;
            }
            if v > T::zero() {
                hi = shift;
            } else {
                lo = shift;
            }
        }
    }
    let residual_at_p = f_at(shift)?.abs();

    // sup error of the projected quadratic against the rescaled field
    let eval_q = |x: T, y: T| -> T {
        coeff[0]
            + coeff[1] * x
            + coeff[2] * y
            + (coeff[3] + shift) * x * x * T::of(0.5)
            + coeff[4] * x * y
            + (coeff[5] + shift) * y * y * T::of(0.5)
    };
    let mut sup = T::zero();
    for &(x, y, v) in &nodes {
        sup = sup.max((v - eval_q(x, y)).abs());
    }
    let sup_error = sup / (eta * eta);

    Ok(QuadApproxReport {
        schema_version: crate::SCHEMA_VERSION,
        eta,
        coefficients: [
            coeff[0] / (eta * eta),
            coeff[1] / eta,
            coeff[2] / eta,
            coeff[3] + shift,
            coeff[4],
            coeff[5] + shift,
        ],
        sup_error,
        residual_at_p,
        shift,
    })
}

/// One scale of the rigidity diagnostic.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RigidityPoint<T> {
    pub r: T,
    /// `R^alpha [D^2 u]_{C^alpha(B_{R/2})}`, computed as the seminorm of
    /// the parabolic rescaling on the unit grid (the two agree exactly).
    pub value: T,
    /// Sup of `|F(D^2 v_R)|` over the sampled nodes; near zero only for
    /// global solutions.
    pub equation_residual_sup: T,
    pub growth_flagged: bool,
}

/// Runs the rigidity diagnostic: for each `R`, samples
/// `v_R(x) = R^{-2} u(R x)` on the unit grid, computes the discrete
/// `C^alpha` seminorm of its Hessian over `B_{1/2}`, and flags growth
/// beyond 10% between consecutive scales. Bounded, decaying values are the
/// signature of the quadratic-rigidity of entire solutions; a pure
/// quadratic gives exact zeros.
pub fn rigidity_scan<T: Real>(
    op: &TwistedOperator<T>,
    u_global: &TestField,
    alpha: T,
    r_list: &[T],
    points_per_side: usize,
) -> Result<Vec<RigidityPoint<T>>> {
    if r_list.is_empty() {
        return Err(Error::Config("rigidity scan needs at least one scale".into()));
    }
    let bound = T::of(u_global.hessian_bound());
    let mut out: Vec<RigidityPoint<T>> = Vec::new();
    for &r in r_list {
        if r <= T::zero() {
            return Err(Error::Config("rigidity scales must be positive".into()));
        }
        let v = u_global.sample_rescaled::<T>(r.as_f64(), points_per_side, GridDomain::UnitBall)?;
        // precondition: the analytic Hessian stays bounded on the sampled
        // ball
        for (ix, iy) in v.interior_nodes() {
            let [x, y] = v.point(ix, iy);
            let h = u_global.hessian(r * x, r * y);
            if !h.is_finite() || h.op_norm() > bound * (T::one() + T::of(1e-9)) {
                return Err(Error::Domain(format!(
                    "Hessian bound violated at ({}, {})",
                    (r * x).as_f64(),
                    (r * y).as_f64()
                )));
            }
        }
        let hf = HessianField::from_grid(&v)?;
        let rep = holder_seminorm(&hf, alpha, T::of(0.5));
        let mut residual_sup = T::zero();
        for (_, h) in hf
            .points
            .iter()
            .filter(|([x, y], _)| *x * *x + *y * *y <= T::of(0.25))
        {
            if let Ok(val) = op.eval_raw(h, None) {
                residual_sup = residual_sup.max(val.abs());
            }
        }
        let growth_flagged = out
            .last()
            .map(|prev: &RigidityPoint<T>| rep.seminorm > prev.value * T::of(1.1))
            .unwrap_or(false);
        out.push(RigidityPoint {
            r,
            value: rep.seminorm,
            equation_residual_sup: residual_sup,
            growth_flagged,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
