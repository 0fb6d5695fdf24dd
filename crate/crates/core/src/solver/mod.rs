//! Damped-Newton Dirichlet solver on uniform 2-D grids.
//!
//! Solves `F(D^2_h u) = f` at every interior node with prescribed boundary
//! values, where `F` is a twisted operator (or its convex part alone for
//! the auxiliary problem). The Newton direction solves the linearization
//! with coefficients `F_cup^{ij} + F_cap^{ij}` frozen per node; a
//! backtracking line search enforces strict decrease of the sup-norm
//! residual, and an eigenvalue floor keeps the per-node coefficient matrix
//! coercive when the linearization degenerates.
//!
//! Centered differences are not a monotone scheme; the solver targets the
//! smooth solutions the estimate machinery presumes, where consistency is
//! what matters.

pub mod sparse;

use crate::error::Error;
use crate::grid::{GridDomain, GridField};
use crate::operators::{MatrixFn, SpatialFn, TwistedOperator};
use crate::scalar::Real;
use crate::sym::SymMatrix;
use serde::Serialize;
use sparse::{bicgstab, Csr, Ilu0};
use thiserror::Error as ThisError;

/// Newton/line-search configuration.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SolveConfig<T> {
    pub residual_tol: T,
    pub max_newton: usize,
    pub line_search_shrink: T,
    pub min_step: T,
    /// Eigenvalue floor added to the per-node linearization coefficients.
    pub damping_floor: T,
    pub lin_rtol: T,
    pub lin_max_iter: usize,
}

impl<T: Real> Default for SolveConfig<T> {
    fn default() -> Self {
        Self {
            residual_tol: T::of(1e-10),
            max_newton: 60,
            line_search_shrink: T::of(0.5),
            min_step: T::of(1e-6),
            damping_floor: T::of(1e-8),
            lin_rtol: T::of(1e-13),
            lin_max_iter: 20_000,
        }
    }
}

/// Right-hand side: a constant or a node-indexed field on the same grid.
#[derive(Clone, Debug)]
pub enum RightHandSide<T: Real> {
    Constant(T),
    Field(GridField<T>),
}

impl<T: Real> RightHandSide<T> {
    fn at(&self, ix: usize, iy: usize) -> T {
        match self {
            RightHandSide::Constant(c) => *c,
            RightHandSide::Field(f) => f.get(ix, iy),
        }
    }

    fn check_grid(&self, pps: usize) -> Result<(), SolverError<T>> {
        if let RightHandSide::Field(f) = self {
            if f.points_per_side() != pps {
                return Err(SolverError::Eval(Error::DimensionMismatch(format!(
                    "right-hand side grid has {} points per side, expected {pps}",
                    f.points_per_side()
                ))));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport<T> {
    pub newton_iters: usize,
    pub residual_history: Vec<T>,
    pub final_residual: T,
    pub hessians_in_domain: bool,
    pub linear_iters_total: usize,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome<T: Real> {
    pub field: GridField<T>,
    pub report: SolveReport<T>,
}

#[derive(Debug, ThisError)]
pub enum SolverError<T: Real> {
    #[error("Newton did not converge: {reason} (last residual {:?})", .history.last())]
    NonConvergence {
        reason: String,
        history: Vec<T>,
        last: Box<GridField<T>>,
    },
    #[error("linear solve failed: {0}")]
    Linear(String),
    #[error(transparent)]
    Eval(#[from] Error),
}

struct Problem<'a, T: Real> {
    convex: &'a MatrixFn<T>,
    concave: &'a MatrixFn<T>,
    rhs_term: Option<&'a SpatialFn<T>>,
    f: &'a RightHandSide<T>,
}

impl<'a, T: Real> Problem<'a, T> {
    fn residual_at(
        &self,
        u: &GridField<T>,
        ix: usize,
        iy: usize,
        scratch: &mut SymMatrix<T>,
    ) -> Result<T, SolverError<T>> {
        hessian_into(u, ix, iy, scratch);
        let mut v = self.convex.eval(scratch)? + self.concave.eval(scratch)?;
        if let Some(rhs) = self.rhs_term {
            let [x, y] = u.point(ix, iy);
            v -= rhs.eval(x, y)?;
        }
        Ok(v - self.f.at(ix, iy))
    }
}

#[inline]
fn hessian_into<T: Real>(u: &GridField<T>, ix: usize, iy: usize, out: &mut SymMatrix<T>) {
    let h = u.spacing();
    let h2 = h * h;
    let c = u.get(ix, iy);
    out.set(
        0,
        0,
        (u.get(ix + 1, iy) - T::of(2.0) * c + u.get(ix - 1, iy)) / h2,
    );
    out.set(
        1,
        1,
        (u.get(ix, iy + 1) - T::of(2.0) * c + u.get(ix, iy - 1)) / h2,
    );
    out.set(
        0,
        1,
        (u.get(ix + 1, iy + 1) + u.get(ix - 1, iy - 1)
            - u.get(ix + 1, iy - 1)
            - u.get(ix - 1, iy + 1))
            / (T::of(4.0) * h2),
    );
}

fn sup_residual<T: Real>(
    problem: &Problem<T>,
    u: &GridField<T>,
    nodes: &[(usize, usize)],
) -> Result<T, SolverError<T>> {
    let mut scratch = SymMatrix::zero(2);
    let mut worst = T::zero();
    for &(ix, iy) in nodes {
        worst = worst.max(problem.residual_at(u, ix, iy, &mut scratch)?.abs());
    }
    Ok(worst)
}

/// Root of `c -> F(cI) = target` on the increasing branch through the
/// origin: expanding bracket then bisection. Returns `None` when the walk
/// leaves the evaluable region before finding a sign change.
fn elliptic_branch_shift<T: Real>(op: &TwistedOperator<T>, target: T) -> Option<T> {
    let phi = |c: T| -> Option<T> {
        let m = SymMatrix::identity(2).scaled(c);
        let v = op.convex_part.eval(&m).ok()? + op.concave_part.eval(&m).ok()?;
        v.is_finite().then_some(v - target)
    };
    let v0 = phi(T::zero())?;
    if v0 == T::zero() {
        return Some(T::zero());
    }
    let dir = if v0 < T::zero() { T::one() } else { -T::one() };
    let mut step = T::of(0.25);
    let mut prev = T::zero();
    let mut edge = T::zero();
    let mut bracketed = false;
    for _ in 0..60 {
        edge = prev + dir * step;
        match phi(edge) {
            Some(v) if v == T::zero() => return Some(edge),
            Some(v) if (v > T::zero()) != (v0 > T::zero()) => {
                bracketed = true;
                break;
            }
            Some(_) => {
                prev = edge;
                step = step * T::of(2.0);
            }
            None => return None,
        }
    }
    if !bracketed {
        return None;
    }
    let (mut lo, mut hi) = if prev < edge { (prev, edge) } else { (edge, prev) };
    for _ in 0..120 {
        let mid = (lo + hi) * T::of(0.5);
        let v = phi(mid)?;
        if v.abs() <= T::of(1e-13) {
            return Some(mid);
        }
        // phi(lo) and phi(hi) straddle zero; keep the sign split
        if (v > T::zero()) == (phi(hi)? > T::zero()) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some((lo + hi) * T::of(0.5))
}

/// Solves the Dirichlet problem `F(D^2 u) = f` in the masked region with
/// boundary data `g`, by damped Newton.
///
/// Without a warm start, nonlinear operators are initialized from the
/// linear problem `Delta v = n c*` where `F(c* I) = mean(f)` on the
/// elliptic branch; a zero start tends to push the first iterates onto the
/// wrong branch of `sigma_k`-type operators near the boundary, where Newton
/// stalls.
pub fn solve_dirichlet<T: Real>(
    op: &TwistedOperator<T>,
    f: &RightHandSide<T>,
    g: impl Fn(T, T) -> T,
    points_per_side: usize,
    domain: GridDomain,
    cfg: &SolveConfig<T>,
    warm_start: Option<&GridField<T>>,
) -> Result<SolveOutcome<T>, SolverError<T>> {
    if op.dim != 2 {
        return Err(SolverError::Eval(Error::Config(
            "the grid solver is two-dimensional".into(),
        )));
    }
    let problem = Problem {
        convex: &op.convex_part,
        concave: &op.concave_part,
        rhs_term: op.rhs.as_ref(),
        f,
    };
    let mut warnings = Vec::new();
    let mut u: GridField<T> = GridField::new(points_per_side, domain).map_err(SolverError::Eval)?;
    f.check_grid(points_per_side)?;
    if let Some(start) = warm_start {
        if start.points_per_side() != points_per_side {
            return Err(SolverError::Eval(Error::DimensionMismatch(
                "warm start grid size mismatch".into(),
            )));
        }
        u.values_mut().copy_from_slice(start.values());
        u.set_boundary(&g);
        return newton_loop(problem, u, op, cfg, &mut warnings);
    }
    u.set_boundary(&g);

    let nonlinear = !matches!(op.convex_part, MatrixFn::Affine { .. } | MatrixFn::Zero)
        || !matches!(op.concave_part, MatrixFn::Affine { .. } | MatrixFn::Zero);
    if nonlinear {
        let target = match f {
            RightHandSide::Constant(c) => *c,
            RightHandSide::Field(field) => {
                let nodes = field.interior_nodes();
                let sum = nodes
                    .iter()
                    .fold(T::zero(), |s, &(ix, iy)| s + field.get(ix, iy));
                sum / T::of_usize(nodes.len().max(1))
            }
        };
        if let Some(shift) = elliptic_branch_shift(op, target) {
            let lap = MatrixFn::Affine {
                grad: SymMatrix::identity(2),
                offset: T::zero(),
            };
            let zero = MatrixFn::Zero;
            let lap_rhs = RightHandSide::Constant(T::of(2.0) * shift);
            let lap_problem = Problem {
                convex: &lap,
                concave: &zero,
                rhs_term: None,
                f: &lap_rhs,
            };
            let lap_stub = TwistedOperator {
                name: "initialization".into(),
                dim: 2,
                convex_part: lap.clone(),
                concave_part: MatrixFn::Zero,
                gauge: crate::operators::Gauge::Identity,
                domain: crate::operators::DomainSet::All { dim: 2 },
                lambda_min: T::one(),
                lambda_max: T::one(),
                rhs: None,
            };
            if let Ok(init) = newton_loop(lap_problem, u.clone(), &lap_stub, cfg, &mut Vec::new())
            {
                u = init.field;
                warnings.push(format!(
                    "initialized from the linear problem at branch shift {}",
                    shift.as_f64()
                ));
            }
        }
    }

    newton_loop(problem, u, op, cfg, &mut warnings)
}

/// Solves the auxiliary convex problem `F_cup(D^2 v) = t_level` with the
/// boundary values of `w` (the dyadic rescaling of a solution).
pub fn solve_convex_auxiliary<T: Real>(
    fcup: &MatrixFn<T>,
    t_level: T,
    w: &GridField<T>,
    cfg: &SolveConfig<T>,
) -> Result<SolveOutcome<T>, SolverError<T>> {
    let zero = MatrixFn::Zero;
    let rhs = RightHandSide::Constant(t_level);
    let problem = Problem {
        convex: fcup,
        concave: &zero,
        rhs_term: None,
        f: &rhs,
    };
    let op_stub = TwistedOperator {
        name: "auxiliary convex problem".into(),
        dim: 2,
        convex_part: fcup.clone(),
        concave_part: MatrixFn::Zero,
        gauge: crate::operators::Gauge::Identity,
        domain: crate::operators::DomainSet::All { dim: 2 },
        lambda_min: T::of(1e-8),
        lambda_max: T::of(1e8),
        rhs: None,
    };
    let mut warnings = Vec::new();
    // start from w itself: its boundary values are the data
    newton_loop(problem, w.clone(), &op_stub, cfg, &mut warnings)
}

fn newton_loop<T: Real>(
    problem: Problem<'_, T>,
    mut u: GridField<T>,
    op: &TwistedOperator<T>,
    cfg: &SolveConfig<T>,
    warnings: &mut Vec<String>,
) -> Result<SolveOutcome<T>, SolverError<T>> {
    let nodes = u.interior_nodes();
    if nodes.is_empty() {
        return Err(SolverError::Eval(Error::Resolution(
            "no interior nodes to solve on".into(),
        )));
    }
    let index_of = {
        let pps = u.points_per_side();
        let mut map = vec![usize::MAX; pps * pps];
        for (row, &(ix, iy)) in nodes.iter().enumerate() {
            map[iy * pps + ix] = row;
        }
        map
    };

    let mut history = Vec::new();
    let mut lin_total = 0usize;
    let mut res_sup = sup_residual(&problem, &u, &nodes)?;
    history.push(res_sup);

    let pps = u.points_per_side();
    let h2 = u.spacing() * u.spacing();
    let mut iter = 0usize;
    while res_sup > cfg.residual_tol {
        if iter >= cfg.max_newton {
            return Err(SolverError::NonConvergence {
                reason: format!("residual {} after {iter} Newton steps", res_sup.as_f64()),
                history,
                last: Box::new(u),
            });
        }
        iter += 1;

        // residual and per-node linearization coefficients
        let mut neg_r = vec![T::zero(); nodes.len()];
        let mut coeffs: Vec<(T, T, T)> = Vec::with_capacity(nodes.len());
        let mut scratch = SymMatrix::zero(2);
        for (row, &(ix, iy)) in nodes.iter().enumerate() {
            neg_r[row] = -problem.residual_at(&u, ix, iy, &mut scratch)?;
            let mut a = crate::operators::grad_operator(problem.convex, &scratch, None)?;
            let ac = crate::operators::grad_operator(problem.concave, &scratch, None)?;
            a.axpy(T::one(), &ac);
            coeffs.push((a.get(0, 0), a.get(1, 1), a.get(0, 1)));
        }

        // Newton step with an eigenvalue floor on the coefficients; when
        // the line search fails (indefinite linearizations produce useless
        // directions at a tiny floor), escalate the floor and retry. Large
        // floors turn the step into a diffusive correction that restores
        // descent.
        let mut accepted = false;
        let mut floor = cfg.damping_floor;
        for _attempt in 0..6 {
            let mut rows: Vec<Vec<(usize, T)>> = Vec::with_capacity(nodes.len());
            for (row, &(ix, iy)) in nodes.iter().enumerate() {
                let (a11, a22, a12) = coeffs[row];
                let mid = (a11 + a22) * T::of(0.5);
                let rad = (((a11 - a22) * T::of(0.5)).powi(2) + a12 * a12).sqrt();
                let (a11, a22, a12) = if mid - rad < floor {
                    let shift = floor - (mid - rad);
                    (a11 + shift, a22 + shift, a12)
                } else {
                    (a11, a22, a12)
                };
                let mut row_entries: Vec<(usize, T)> = Vec::with_capacity(9);
                let push = |jx: usize, jy: usize, w: T, row_entries: &mut Vec<(usize, T)>| {
                    let col = index_of[jy * pps + jx];
                    if col != usize::MAX {
                        row_entries.push((col, w));
                    }
                };
                push(ix, iy, -T::of(2.0) * (a11 + a22) / h2, &mut row_entries);
                push(ix + 1, iy, a11 / h2, &mut row_entries);
                push(ix - 1, iy, a11 / h2, &mut row_entries);
                push(ix, iy + 1, a22 / h2, &mut row_entries);
                push(ix, iy - 1, a22 / h2, &mut row_entries);
                let w_cross = a12 / (T::of(2.0) * h2);
                push(ix + 1, iy + 1, w_cross, &mut row_entries);
                push(ix - 1, iy - 1, w_cross, &mut row_entries);
                push(ix + 1, iy - 1, -w_cross, &mut row_entries);
                push(ix - 1, iy + 1, -w_cross, &mut row_entries);
                rows.push(row_entries);
            }
            let jac = Csr::from_rows(rows).map_err(|e| SolverError::Linear(e.to_string()))?;
            let ilu = Ilu0::new(&jac)
                .map_err(|e| SolverError::Linear(format!("singular after damping: {e}")))?;
            let mut delta = vec![T::zero(); nodes.len()];
            let (iters, _rel) = bicgstab(
                &jac,
                &ilu,
                &neg_r,
                &mut delta,
                cfg.lin_rtol,
                cfg.lin_max_iter,
            )
            .map_err(|e| SolverError::Linear(e.to_string()))?;
            lin_total += iters;

            // backtracking line search on the sup-norm residual
            let mut alpha = T::one();
            while alpha >= cfg.min_step {
                let mut trial = u.clone();
                for (row, &(ix, iy)) in nodes.iter().enumerate() {
                    let v = trial.get(ix, iy) + alpha * delta[row];
                    trial.set(ix, iy, v);
                }
                let trial_res = sup_residual(&problem, &trial, &nodes)?;
                if trial_res < res_sup {
                    u = trial;
                    res_sup = trial_res;
                    history.push(res_sup);
                    accepted = true;
                    break;
                }
                alpha = alpha * cfg.line_search_shrink;
            }
            if accepted {
                break;
            }
            floor = (floor * T::of(1e2)).max(T::of(1e-4));
        }
        if !accepted {
            return Err(SolverError::NonConvergence {
                reason: format!(
                    "line search stalled below {} at residual {}",
                    cfg.min_step.as_f64(),
                    res_sup.as_f64()
                ),
                history,
                last: Box::new(u),
            });
        }
    }

    // containment of the discrete Hessian range in the declared domain
    let mut scratch = SymMatrix::zero(2);
    let mut in_domain = true;
    for &(ix, iy) in &nodes {
        hessian_into(&u, ix, iy, &mut scratch);
        if !op.domain.contains(&scratch) {
            in_domain = false;
            break;
        }
    }
    if !in_domain {
        warnings.push(
            "discrete Hessians leave the declared operator domain; estimate \
             hypotheses may not apply"
                .into(),
        );
    }

    Ok(SolveOutcome {
        field: u,
        report: SolveReport {
            newton_iters: iter,
            residual_history: history,
            final_residual: res_sup,
            hessians_in_domain: in_domain,
            linear_iters_total: lin_total,
            warnings: warnings.clone(),
        },
    })
}

#[cfg(test)]
mod tests;
