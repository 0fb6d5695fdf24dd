//! Closed-form test functions with exact Hessians.
//!
//! These drive manufactured-solution studies and the rigidity diagnostic:
//! the field value seeds grids, the analytic Hessian gives exact
//! right-hand sides and precondition checks.

use crate::error::Result;
use crate::grid::{GridDomain, GridField, NodeKind};
use crate::operators::TwistedOperator;
use crate::scalar::Real;
use crate::solver::RightHandSide;
use crate::sym::SymMatrix;
use serde::{Deserialize, Serialize};

/// Analytic scalar field on the plane.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestField {
    /// `c + gx x + gy y + (hxx x^2 + 2 hxy x y + hyy y^2)/2`.
    Quadratic {
        hxx: f64,
        hxy: f64,
        hyy: f64,
        #[serde(default)]
        gx: f64,
        #[serde(default)]
        gy: f64,
        #[serde(default)]
        c: f64,
    },
    /// Quadratic plus `amp * sin(freq x) sin(freq y)`; the manufactured
    /// solution of the convergence studies.
    QuadSine {
        hxx: f64,
        hyy: f64,
        amp: f64,
        freq: f64,
    },
    /// Quadratic plus a compactly supported `C^3` bump
    /// `amp * (1 - |x - center|^2 / radius^2)^4` inside its disk. The
    /// Hessian is constant outside the support.
    BumpQuadratic {
        hxx: f64,
        hyy: f64,
        center: [f64; 2],
        radius: f64,
        amp: f64,
    },
    /// Quadratic plus `amp * sin(freq x)`: a bounded, non-decaying Hessian
    /// oscillation. Not a solution of any twisted equation; diagnostic only.
    OscillatoryQuadratic {
        hxx: f64,
        hyy: f64,
        amp: f64,
        freq: f64,
    },
}

impl TestField {
    pub fn value<T: Real>(&self, x: T, y: T) -> T {
        match self {
            TestField::Quadratic {
                hxx,
                hxy,
                hyy,
                gx,
                gy,
                c,
            } => {
                T::of(*c)
                    + T::of(*gx) * x
                    + T::of(*gy) * y
                    + (T::of(*hxx) * x * x
                        + T::of(2.0 * *hxy) * x * y
                        + T::of(*hyy) * y * y)
                        * T::of(0.5)
            }
            TestField::QuadSine {
                hxx,
                hyy,
                amp,
                freq,
            } => {
                let f = T::of(*freq);
                (T::of(*hxx) * x * x + T::of(*hyy) * y * y) * T::of(0.5)
                    + T::of(*amp) * (f * x).sin() * (f * y).sin()
            }
            TestField::BumpQuadratic {
                hxx,
                hyy,
                center,
                radius,
                amp,
            } => {
                let quad = (T::of(*hxx) * x * x + T::of(*hyy) * y * y) * T::of(0.5);
                let dx = x - T::of(center[0]);
                let dy = y - T::of(center[1]);
                let s = (dx * dx + dy * dy) / T::of(radius * radius);
                if s < T::one() {
                    quad + T::of(*amp) * (T::one() - s).powi(4)
                } else {
                    quad
                }
            }
            TestField::OscillatoryQuadratic {
                hxx,
                hyy,
                amp,
                freq,
            } => {
                (T::of(*hxx) * x * x + T::of(*hyy) * y * y) * T::of(0.5)
                    + T::of(*amp) * (T::of(*freq) * x).sin()
            }
        }
    }

    pub fn hessian<T: Real>(&self, x: T, y: T) -> SymMatrix<T> {
        let mut h = SymMatrix::zero(2);
        match self {
            TestField::Quadratic { hxx, hxy, hyy, .. } => {
                h.set(0, 0, T::of(*hxx));
                h.set(0, 1, T::of(*hxy));
                h.set(1, 1, T::of(*hyy));
            }
            TestField::QuadSine {
                hxx,
                hyy,
                amp,
                freq,
            } => {
                let f = T::of(*freq);
                let a = T::of(*amp);
                h.set(0, 0, T::of(*hxx) - a * f * f * (f * x).sin() * (f * y).sin());
                h.set(1, 1, T::of(*hyy) - a * f * f * (f * x).sin() * (f * y).sin());
                h.set(0, 1, a * f * f * (f * x).cos() * (f * y).cos());
            }
            TestField::BumpQuadratic {
                hxx,
                hyy,
                center,
                radius,
                amp,
            } => {
                h.set(0, 0, T::of(*hxx));
                h.set(1, 1, T::of(*hyy));
                let dx = x - T::of(center[0]);
                let dy = y - T::of(center[1]);
                let r2 = T::of(radius * radius);
                let s = (dx * dx + dy * dy) / r2;
                if s < T::one() {
                    let a = T::of(*amp);
                    let w = T::one() - s;
                    // d/dxi (1-s)^4 = -8 (1-s)^3 di / r2
                    // d2/dxi dxj = 48 (1-s)^2 di dj / r2^2 - 8 (1-s)^3 delta_ij / r2
                    let w2 = w * w;
                    let c1 = T::of(48.0) * w2 / (r2 * r2);
                    let c2 = T::of(8.0) * w2 * w / r2;
                    h.add_to(0, 0, a * (c1 * dx * dx - c2));
                    h.add_to(1, 1, a * (c1 * dy * dy - c2));
                    h.add_to(0, 1, a * c1 * dx * dy);
                }
            }
            TestField::OscillatoryQuadratic {
                hxx,
                hyy,
                amp,
                freq,
            } => {
                let f = T::of(*freq);
                h.set(
                    0,
                    0,
                    T::of(*hxx) - T::of(*amp) * f * f * (f * x).sin(),
                );
                h.set(1, 1, T::of(*hyy));
            }
        }
        h
    }

    /// Crude uniform bound on the Hessian operator norm.
    pub fn hessian_bound(&self) -> f64 {
        match self {
            TestField::Quadratic { hxx, hxy, hyy, .. } => {
                hxx.abs() + 2.0 * hxy.abs() + hyy.abs()
            }
            TestField::QuadSine {
                hxx,
                hyy,
                amp,
                freq,
            } => hxx.abs().max(hyy.abs()) + 2.0 * amp.abs() * freq * freq,
            TestField::BumpQuadratic {
                hxx,
                hyy,
                radius,
                amp,
                ..
            } => {
                hxx.abs().max(hyy.abs())
                    + amp.abs() * 56.0 / (radius * radius)
            }
            TestField::OscillatoryQuadratic {
                hxx,
                hyy,
                amp,
                freq,
            } => hxx.abs().max(hyy.abs()) + amp.abs() * freq * freq,
        }
    }

    /// Samples the field on a grid (all non-outside nodes).
    pub fn sample_grid<T: Real>(
        &self,
        points_per_side: usize,
        domain: GridDomain,
    ) -> Result<GridField<T>> {
        let mut g: GridField<T> = GridField::new(points_per_side, domain)?;
        g.fill(|x, y| self.value(x, y));
        Ok(g)
    }

    /// Samples the parabolic rescaling `v_R(x) = R^{-2} u(R x)` on the unit
    /// grid; its Hessian field is `D^2 u(R x)`.
    pub fn sample_rescaled<T: Real>(
        &self,
        r: f64,
        points_per_side: usize,
        domain: GridDomain,
    ) -> Result<GridField<T>> {
        let mut g: GridField<T> = GridField::new(points_per_side, domain)?;
        let rr = T::of(r);
        g.fill(|x, y| self.value(rr * x, rr * y) / (rr * rr));
        Ok(g)
    }
}

/// Builds the manufactured right-hand side `f(x) := F(D^2 u*(x))` from the
/// analytic Hessian, node by node.
pub fn manufactured_rhs<T: Real>(
    op: &TwistedOperator<T>,
    u_star: &TestField,
    points_per_side: usize,
    domain: GridDomain,
) -> Result<RightHandSide<T>> {
    let mut f: GridField<T> = GridField::new(points_per_side, domain)?;
    for iy in 0..points_per_side {
        for ix in 0..points_per_side {
            if f.kind(ix, iy) == NodeKind::Outside {
                continue;
            }
            let [x, y] = f.point(ix, iy);
            let h = u_star.hessian(x, y);
            let v = op.convex_part.eval(&h)? + op.concave_part.eval(&h)?;
            f.set(ix, iy, v);
        }
    }
    Ok(RightHandSide::Field(f))
}
