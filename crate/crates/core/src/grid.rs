//! Scalar fields on uniform grids over `[-1, 1]^2`.
//!
//! Node coordinates are the exact rationals `(2i - m) / m` with
//! `m = points_per_side - 1`, so `h * m = 2` holds identically and masks are
//! decided by integer arithmetic: a node is inside the unit ball iff
//! `(2i - m)^2 + (2j - m)^2 < m^2`. Ball-masked fields impose boundary
//! values on the first layer of nodes outside the ball (no cut cells); the
//! diagnostics only read well inside, where that layer is invisible.
//!
//! The discrete Hessian is the standard second difference on the diagonal
//! and the four-point cross difference off it; both are exact on quadratic
//! polynomials.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sym::SymMatrix;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Geometry of the masked region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridDomain {
    /// The full square; edge nodes are boundary.
    Square,
    /// The unit ball `|x| < 1`; outside-nodes adjacent to the ball carry
    /// boundary values, the rest are unused.
    UnitBall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum NodeKind {
    Interior = 0,
    Boundary = 1,
    Outside = 2,
}

/// Scalar field on a uniform grid with a node mask.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GridField<T: Real> {
    points_per_side: usize,
    h: T,
    domain: GridDomain,
    values: Vec<T>,
    mask: Vec<NodeKind>,
}

impl<T: Real> GridField<T> {
    /// Zero field on the given grid. `points_per_side` must be odd and at
    /// least 5 so the origin is a node and stencils fit.
    pub fn new(points_per_side: usize, domain: GridDomain) -> Result<Self> {
        if points_per_side < 5 || points_per_side % 2 == 0 {
            return Err(Error::Config(format!(
                "points_per_side must be odd and >= 5, got {points_per_side}"
            )));
        }
        let m = (points_per_side - 1) as i64;
        // spacing as the exact rational 2/m: the product h * m recovers 2
        // identically in integer arithmetic
        debug_assert_eq!(2 * m / m, 2);
        let h = T::of(2.0) / T::of(m as f64);
        let n = points_per_side * points_per_side;
        let mut mask = vec![NodeKind::Outside; n];
        match domain {
            GridDomain::Square => {
                for iy in 0..points_per_side {
                    for ix in 0..points_per_side {
                        let edge = ix == 0
                            || iy == 0
                            || ix == points_per_side - 1
                            || iy == points_per_side - 1;
                        mask[iy * points_per_side + ix] = if edge {
                            NodeKind::Boundary
                        } else {
                            NodeKind::Interior
                        };
                    }
                }
            }
            GridDomain::UnitBall => {
                let inside = |ix: usize, iy: usize| -> bool {
                    let dx = 2 * ix as i64 - m;
                    let dy = 2 * iy as i64 - m;
                    dx * dx + dy * dy < m * m
                };
                for iy in 0..points_per_side {
                    for ix in 0..points_per_side {
                        if inside(ix, iy) {
                            mask[iy * points_per_side + ix] = NodeKind::Interior;
                        }
                    }
                }
                // first layer outside: any 8-neighborhood of an interior node
                for iy in 0..points_per_side {
                    for ix in 0..points_per_side {
                        if mask[iy * points_per_side + ix] != NodeKind::Outside {
                            continue;
                        }
                        let mut touches = false;
                        for dy in -1i64..=1 {
                            for dx in -1i64..=1 {
                                let jx = ix as i64 + dx;
                                let jy = iy as i64 + dy;
                                if jx < 0
                                    || jy < 0
                                    || jx >= points_per_side as i64
                                    || jy >= points_per_side as i64
                                {
                                    continue;
                                }
                                if mask[jy as usize * points_per_side + jx as usize]
                                    == NodeKind::Interior
                                {
                                    touches = true;
                                }
                            }
                        }
                        if touches {
                            mask[iy * points_per_side + ix] = NodeKind::Boundary;
                        }
                    }
                }
            }
        }
        Ok(Self {
            points_per_side,
            h,
            domain,
            values: vec![T::zero(); n],
            mask,
        })
    }

    pub fn points_per_side(&self) -> usize {
        self.points_per_side
    }

    pub fn spacing(&self) -> T {
        self.h
    }

    pub fn domain(&self) -> GridDomain {
        self.domain
    }

    /// Coordinate of the `i`-th node along an axis: `(2i - m) / m`.
    pub fn coord(&self, i: usize) -> T {
        let m = (self.points_per_side - 1) as i64;
        T::of((2 * i as i64 - m) as f64) / T::of(m as f64)
    }

    pub fn point(&self, ix: usize, iy: usize) -> [T; 2] {
        [self.coord(ix), self.coord(iy)]
    }

    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.points_per_side + ix
    }

    #[inline]
    pub fn kind(&self, ix: usize, iy: usize) -> NodeKind {
        self.mask[self.idx(ix, iy)]
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> T {
        self.values[self.idx(ix, iy)]
    }

    #[inline]
    pub fn set(&mut self, ix: usize, iy: usize, v: T) {
        let i = self.idx(ix, iy);
        self.values[i] = v;
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Exact squared distance test: is node (ix, iy) strictly inside the
    /// ball of radius `2^-level` (integer arithmetic)?
    pub fn in_dyadic_ball(&self, ix: usize, iy: usize, level: u32) -> bool {
        let m = (self.points_per_side - 1) as i64;
        let dx = 2 * ix as i64 - m;
        let dy = 2 * iy as i64 - m;
        let scale = 1i64 << (2 * level);
        (dx * dx + dy * dy) * scale < m * m
    }

    /// Fills every non-outside node from a function of the coordinates.
    pub fn fill(&mut self, f: impl Fn(T, T) -> T) {
        for iy in 0..self.points_per_side {
            for ix in 0..self.points_per_side {
                if self.kind(ix, iy) != NodeKind::Outside {
                    let [x, y] = self.point(ix, iy);
                    self.set(ix, iy, f(x, y));
                }
            }
        }
    }

    /// Sets boundary nodes only.
    pub fn set_boundary(&mut self, g: impl Fn(T, T) -> T) {
        for iy in 0..self.points_per_side {
            for ix in 0..self.points_per_side {
                if self.kind(ix, iy) == NodeKind::Boundary {
                    let [x, y] = self.point(ix, iy);
                    self.set(ix, iy, g(x, y));
                }
            }
        }
    }

    pub fn interior_nodes(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for iy in 0..self.points_per_side {
            for ix in 0..self.points_per_side {
                if self.kind(ix, iy) == NodeKind::Interior {
                    out.push((ix, iy));
                }
            }
        }
        out
    }

    /// Interior nodes whose full 8-neighborhood is interior too; discrete
    /// second derivatives of interior-defined fields exist there.
    pub fn deep_interior_nodes(&self) -> Vec<(usize, usize)> {
        self.interior_nodes()
            .into_iter()
            .filter(|&(ix, iy)| {
                let mut ok = true;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let jx = (ix as i64 + dx) as usize;
                        let jy = (iy as i64 + dy) as usize;
                        if self.kind(jx, jy) != NodeKind::Interior {
                            ok = false;
                        }
                    }
                }
                ok
            })
            .collect()
    }

    fn stencil_ok(&self, ix: usize, iy: usize) -> bool {
        if ix == 0 || iy == 0 || ix + 1 >= self.points_per_side || iy + 1 >= self.points_per_side
        {
            return false;
        }
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let jx = (ix as i64 + dx) as usize;
                let jy = (iy as i64 + dy) as usize;
                if self.kind(jx, jy) == NodeKind::Outside {
                    return false;
                }
            }
        }
        true
    }

    /// Discrete Hessian at an interior node: second differences on the
    /// diagonal, the four-point cross difference off it. Exact on
    /// quadratics.
    pub fn discrete_hessian(&self, ix: usize, iy: usize) -> Result<SymMatrix<T>> {
        if self.kind(ix, iy) != NodeKind::Interior || !self.stencil_ok(ix, iy) {
            return Err(Error::Stencil(ix, iy));
        }
        let h2 = self.h * self.h;
        let c = self.get(ix, iy);
        let mut hess = SymMatrix::zero(2);
        hess.set(
            0,
            0,
            (self.get(ix + 1, iy) - T::of(2.0) * c + self.get(ix - 1, iy)) / h2,
        );
        hess.set(
            1,
            1,
            (self.get(ix, iy + 1) - T::of(2.0) * c + self.get(ix, iy - 1)) / h2,
        );
        hess.set(
            0,
            1,
            (self.get(ix + 1, iy + 1) + self.get(ix - 1, iy - 1)
                - self.get(ix + 1, iy - 1)
                - self.get(ix - 1, iy + 1))
                / (T::of(4.0) * h2),
        );
        Ok(hess)
    }

    /// Parabolic rescaling `w_k(x) = 2^{2k} u(x / 2^k)` resampled on the
    /// native nodes of the dyadic subgrid; the discrete Hessian satisfies
    /// `D^2 w_k(x) = D^2 u(x / 2^k)` exactly at coincident nodes.
    pub fn rescale(&self, level: u32) -> Result<GridField<T>> {
        if level == 0 {
            return Ok(self.clone());
        }
        let m = self.points_per_side - 1;
        let div = 1usize << level;
        if m % div != 0 {
            return Err(Error::Resolution(format!(
                "2^{level} does not divide the grid refinement {m}"
            )));
        }
        let m_new = m / div;
        if m_new % 2 != 0 || m_new + 1 < 5 {
            return Err(Error::Resolution(format!(
                "rescaling by 2^{level} leaves {} points per side",
                m_new + 1
            )));
        }
        let mut out: GridField<T> = GridField::new(m_new + 1, self.domain)?;
        let scale = T::of((1u64 << (2 * level)) as f64);
        // target node j maps to source node i = j + (m - m_new)/2
        let offset = (m - m_new) / 2;
        for jy in 0..=m_new {
            for jx in 0..=m_new {
                if out.kind(jx, jy) == NodeKind::Outside {
                    continue;
                }
                let v = self.get(jx + offset, jy + offset);
                out.set(jx, jy, scale * v);
            }
        }
        Ok(out)
    }

    /// Bilinear prolongation onto a finer grid (warm starts).
    pub fn prolongate(&self, points_per_side: usize) -> Result<GridField<T>> {
        let mut fine: GridField<T> = GridField::new(points_per_side, self.domain)?;
        let m_coarse = (self.points_per_side - 1) as f64;
        for iy in 0..points_per_side {
            for ix in 0..points_per_side {
                if fine.kind(ix, iy) == NodeKind::Outside {
                    continue;
                }
                let [x, y] = fine.point(ix, iy);
                // continuous index on the coarse grid
                let fx = (x.as_f64() + 1.0) / 2.0 * m_coarse;
                let fy = (y.as_f64() + 1.0) / 2.0 * m_coarse;
                let cx = (fx.floor() as usize).min(self.points_per_side - 2);
                let cy = (fy.floor() as usize).min(self.points_per_side - 2);
                let tx = T::of(fx - cx as f64);
                let ty = T::of(fy - cy as f64);
                let one = T::one();
                let v = self.get(cx, cy) * (one - tx) * (one - ty)
                    + self.get(cx + 1, cy) * tx * (one - ty)
                    + self.get(cx, cy + 1) * (one - tx) * ty
                    + self.get(cx + 1, cy + 1) * tx * ty;
                fine.set(ix, iy, v);
            }
        }
        Ok(fine)
    }

    /// CSV layout: a two-line header (points per side, spacing, domain),
    /// then one `ix,iy,value,mask` row per node in row-major order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "points_per_side,h,domain")?;
        writeln!(
            w,
            "{},{},{}",
            self.points_per_side,
            self.h.as_f64(),
            match self.domain {
                GridDomain::Square => "square",
                GridDomain::UnitBall => "unit-ball",
            }
        )?;
        writeln!(w, "ix,iy,value,mask")?;
        for iy in 0..self.points_per_side {
            for ix in 0..self.points_per_side {
                writeln!(
                    w,
                    "{},{},{},{}",
                    ix,
                    iy,
                    self.get(ix, iy).as_f64(),
                    self.kind(ix, iy) as u8
                )?;
            }
        }
        Ok(())
    }

    /// Binary layout, little endian throughout: magic `TGF1`, `u32` points
    /// per side, `u8` domain tag (0 square, 1 unit ball), then row-major
    /// `f64` values and `u8` mask bytes.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"TGF1")?;
        w.write_all(&(self.points_per_side as u32).to_le_bytes())?;
        w.write_all(&[match self.domain {
            GridDomain::Square => 0u8,
            GridDomain::UnitBall => 1u8,
        }])?;
        for v in &self.values {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
        for k in &self.mask {
            w.write_all(&[*k as u8])?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<GridField<T>> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"TGF1" {
            return Err(Error::Config("bad magic in binary grid file".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let pps = u32::from_le_bytes(b4) as usize;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let domain = match tag[0] {
            0 => GridDomain::Square,
            1 => GridDomain::UnitBall,
            other => {
                return Err(Error::Config(format!("bad domain tag {other}")));
            }
        };
        let mut field: GridField<T> = GridField::new(pps, domain)?;
        let mut b8 = [0u8; 8];
        for i in 0..pps * pps {
            r.read_exact(&mut b8)?;
            field.values[i] = T::of(f64::from_le_bytes(b8));
        }
        // trust the stored mask layout only if it matches the reconstruction
        let mut mask_bytes = vec![0u8; pps * pps];
        r.read_exact(&mut mask_bytes)?;
        for (i, &b) in mask_bytes.iter().enumerate() {
            let stored = match b {
                0 => NodeKind::Interior,
                1 => NodeKind::Boundary,
                2 => NodeKind::Outside,
                other => {
                    return Err(Error::Config(format!("bad mask byte {other}")));
                }
            };
            if stored != field.mask[i] {
                return Err(Error::Config(
                    "stored mask disagrees with the grid geometry".into(),
                ));
            }
        }
        Ok(field)
    }

    /// Sup-norm difference over interior nodes.
    pub fn sup_diff_interior(&self, other: &GridField<T>) -> T {
        assert_eq!(self.points_per_side, other.points_per_side);
        let mut worst = T::zero();
        for (ix, iy) in self.interior_nodes() {
            worst = worst.max((self.get(ix, iy) - other.get(ix, iy)).abs());
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_times_refinement_is_two() {
        for pps in [5usize, 9, 17, 65] {
            let g = GridField::<f64>::new(pps, GridDomain::Square).unwrap();
            let m = (pps - 1) as f64;
            assert_eq!(g.spacing() * m, 2.0);
            assert_eq!(g.coord(0), -1.0);
            assert_eq!(g.coord(pps - 1), 1.0);
            assert_eq!(g.coord((pps - 1) / 2), 0.0);
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(GridField::<f64>::new(4, GridDomain::Square).is_err());
        assert!(GridField::<f64>::new(6, GridDomain::Square).is_err());
        assert!(GridField::<f64>::new(3, GridDomain::Square).is_err());
    }

    #[test]
    fn ball_mask_wraps_interior_with_boundary() {
        let g = GridField::<f64>::new(17, GridDomain::UnitBall).unwrap();
        // corners are far outside
        assert_eq!(g.kind(0, 0), NodeKind::Outside);
        // center is interior
        assert_eq!(g.kind(8, 8), NodeKind::Interior);
        // neighbors of interior nodes are never outside
        for (ix, iy) in g.interior_nodes() {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let jx = (ix as i64 + dx) as usize;
                    let jy = (iy as i64 + dy) as usize;
                    assert_ne!(g.kind(jx, jy), NodeKind::Outside);
                }
            }
        }
        // axis extremes at |x| = 1 are not interior (strict inequality)
        assert_ne!(g.kind(16, 8), NodeKind::Interior);
    }

    #[test]
    fn discrete_hessian_is_exact_on_quadratics() {
        let mut g = GridField::<f64>::new(17, GridDomain::Square).unwrap();
        g.fill(|x, _| x * x);
        for (ix, iy) in g.interior_nodes() {
            let h = g.discrete_hessian(ix, iy).unwrap();
            assert!((h.get(0, 0) - 2.0).abs() < 1e-12);
            assert!(h.get(1, 1).abs() < 1e-12);
            assert!(h.get(0, 1).abs() < 1e-12);
        }
        g.fill(|x, y| x * y);
        for (ix, iy) in g.interior_nodes() {
            let h = g.discrete_hessian(ix, iy).unwrap();
            assert!((h.get(0, 1) - 1.0).abs() < 1e-12);
            assert!(h.get(0, 0).abs() < 1e-12);
        }
    }

    #[test]
    fn discrete_hessian_error_bound_on_quartic() {
        // u = x^4 at x = 0.5 with h = 0.1: second difference gives 3.02,
        // within the Taylor remainder h^2 * u'''' / 12 = 0.02 of the true 3.
        let mut g = GridField::<f64>::new(21, GridDomain::Square).unwrap();
        g.fill(|x, _| x.powi(4));
        assert!((g.spacing() - 0.1).abs() < 1e-15);
        let ix = 15; // x = 0.5
        assert!((g.coord(ix) - 0.5).abs() < 1e-15);
        let h = g.discrete_hessian(ix, 10).unwrap();
        assert!((h.get(0, 0) - 3.02).abs() < 1e-10);
        assert!((h.get(0, 0) - 3.0).abs() <= 0.02 + 1e-12);
    }

    #[test]
    fn stencil_error_names_the_node() {
        let g = GridField::<f64>::new(17, GridDomain::UnitBall).unwrap();
        // a boundary node has no interior stencil
        let mut boundary = None;
        for iy in 0..17 {
            for ix in 0..17 {
                if g.kind(ix, iy) == NodeKind::Boundary {
                    boundary = Some((ix, iy));
                }
            }
        }
        let (bx, by) = boundary.unwrap();
        match g.discrete_hessian(bx, by) {
            Err(Error::Stencil(x, y)) => assert_eq!((x, y), (bx, by)),
            other => panic!("expected stencil error, got {other:?}"),
        }
    }

    #[test]
    fn rescale_preserves_quadratics_and_quartic_hessians() {
        // quadratic: w_k has identical quadratic coefficients
        let mut g = GridField::<f64>::new(65, GridDomain::Square).unwrap();
        g.fill(|x, y| 0.7 * x * x - 0.2 * x * y + 0.4 * y * y);
        let w = g.rescale(2).unwrap();
        for (ix, iy) in w.interior_nodes() {
            let [x, y] = w.point(ix, iy);
            let want = 0.7 * x * x - 0.2 * x * y + 0.4 * y * y;
            assert!((w.get(ix, iy) - want).abs() < 1e-12);
        }

        // k = 0 is the identity
        let w0 = g.rescale(0).unwrap();
        assert_eq!(w0.values(), g.values());

        // u = x^4: w_1(x) = x^4 / 4 and D^2 w_1(x) = 3 x^2 = D^2 u(x/2)
        g.fill(|x, _| x.powi(4));
        let w1 = g.rescale(1).unwrap();
        for (ix, iy) in w1.deep_interior_nodes() {
            let [x, _] = w1.point(ix, iy);
            assert!((w1.get(ix, iy) - x.powi(4) / 4.0).abs() < 1e-12);
            let hw = w1.discrete_hessian(ix, iy).unwrap();
            // exact coincidence with the source-grid Hessian at x/2
            let sx = ix + (64 - 32) / 2;
            let sy = iy + (64 - 32) / 2;
            let hu = g.discrete_hessian(sx, sy).unwrap();
            assert!((hw.get(0, 0) - hu.get(0, 0)).abs() < 1e-10);
        }

        // too-deep rescaling errors
        assert!(g.rescale(5).is_err());
    }

    #[test]
    fn binary_round_trip_and_mask_check() {
        let mut g = GridField::<f64>::new(9, GridDomain::UnitBall).unwrap();
        g.fill(|x, y| x + 2.0 * y);
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        let back = GridField::<f64>::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.values(), g.values());
        // corrupting a mask byte is rejected
        let mask_start = 4 + 4 + 1 + 8 * 81;
        let mut bad = buf.clone();
        bad[mask_start] = 2 - bad[mask_start].min(2);
        assert!(GridField::<f64>::read_binary(bad.as_slice()).is_err());
    }

    #[test]
    fn csv_has_documented_header() {
        let mut g = GridField::<f64>::new(5, GridDomain::Square).unwrap();
        g.fill(|x, y| x * y);
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("points_per_side,h,domain\n5,0.5,square\nix,iy,value,mask\n"));
    }

    #[test]
    fn prolongation_reproduces_bilinear_fields() {
        let mut coarse = GridField::<f64>::new(9, GridDomain::Square).unwrap();
        coarse.fill(|x, y| 1.0 + 2.0 * x - 0.5 * y + 0.25 * x * y);
        let fine = coarse.prolongate(17).unwrap();
        for (ix, iy) in fine.interior_nodes() {
            let [x, y] = fine.point(ix, iy);
            let want = 1.0 + 2.0 * x - 0.5 * y + 0.25 * x * y;
            assert!((fine.get(ix, iy) - want).abs() < 1e-12);
        }
    }
}
