//! Symmetric matrices and the small tensor types used for operator calculus.
//!
//! A [`SymMatrix`] stores the upper triangle of an `n x n` real symmetric
//! matrix (`n <= 8` in practice; nothing here is tuned for large `n`).
//!
//! Derivative convention. For a scalar function `F` of a symmetric matrix,
//! the gradient returned by this crate is the matrix of full-matrix partials
//! `g_ij = dF/dm_ij`, equivalently the directional derivative of `F` along
//! `(E_ij + E_ji)/2` for `i != j` and along `E_ii` on the diagonal. With that
//! convention the chain rule reads `d/dt F(M + tX) = <g, X>` where
//! [`SymMatrix::inner`] sums over all `n^2` index pairs (off-diagonal entries
//! count twice). Second derivatives follow the same rule: an [`OpHessian`]
//! stores `H_pq = D^2 F[D_p, D_q]` over canonical pairs `p = (i <= j)` with
//! `D_ii = E_ii`, `D_ij = (E_ij + E_ji)/2`, and
//! [`OpHessian::contract`]`(X, Y) = sum over all n^4 tuples of H X Y`.

use crate::error::{Error, Result};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

/// Number of canonical index pairs `(i <= j)` for dimension `n`.
pub fn pair_count(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Canonical pair list in row-major upper-triangle order.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(pair_count(n));
    for i in 0..n {
        for j in i..n {
            out.push((i, j));
        }
    }
    out
}

#[inline]
fn tri_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * n + 1 - i) / 2 + (j - i)
}

/// Dense `n x n` real symmetric matrix stored as its upper triangle.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix<T> {
    n: usize,
    a: Vec<T>,
}

impl<T: Real> SymMatrix<T> {
    pub fn zero(n: usize) -> Self {
        assert!(n >= 1, "dimension must be positive");
        Self {
            n,
            a: vec![T::zero(); pair_count(n)],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero(n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn from_diag(d: &[T]) -> Self {
        let mut m = Self::zero(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zero(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds from a row-major dense slice, averaging the two triangles.
    pub fn from_dense_rows(n: usize, rows: &[T]) -> Self {
        assert_eq!(rows.len(), n * n);
        Self::from_fn(n, |i, j| {
            (rows[i * n + j] + rows[j * n + i]) / T::of(2.0)
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.a[tri_index(self.n, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.a[tri_index(self.n, i, j)] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: T) {
        self.a[tri_index(self.n, i, j)] += v;
    }

    /// Upper-triangle entries in canonical pair order.
    pub fn tri_entries(&self) -> &[T] {
        &self.a
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> T {
        (0..self.n).fold(T::zero(), |s, i| s + self.get(i, i))
    }

    /// Frobenius inner product over all `n^2` entries (off-diagonal twice).
    pub fn inner(&self, other: &Self) -> T {
        assert_eq!(self.n, other.n);
        let mut s = T::zero();
        for i in 0..self.n {
            s += self.get(i, i) * other.get(i, i);
            for j in (i + 1)..self.n {
                s += T::of(2.0) * self.get(i, j) * other.get(i, j);
            }
        }
        s
    }

    pub fn frob_norm(&self) -> T {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.a.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            n: self.n,
            a: self.a.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            a: self
                .a
                .iter()
                .zip(&other.a)
                .map(|(&x, &y)| x + y)
                .collect(),
        }
    }

    pub fn minus(&self, other: &Self) -> Self {
        self.plus(&other.scaled(-T::one()))
    }

    /// `self + s * other` in place.
    pub fn axpy(&mut self, s: T, other: &Self) {
        assert_eq!(self.n, other.n);
        for (x, &y) in self.a.iter_mut().zip(&other.a) {
            *x += s * y;
        }
    }

    /// Canonical basis direction `D_p`: `E_ii` on the diagonal,
    /// `(E_ij + E_ji)/2` off it.
    pub fn basis_direction(n: usize, p: usize) -> Self {
        let (i, j) = pairs(n)[p];
        let mut d = Self::zero(n);
        d.set(i, j, if i == j { T::one() } else { T::of(0.5) });
        d
    }

    /// Entry of `self` seen as a canonical-pair vector (no weights).
    pub fn pair_entry(&self, p: usize) -> T {
        self.a[p]
    }

    pub fn to_dense(&self) -> Dense<T> {
        let n = self.n;
        let mut d = Dense::zero(n);
        for i in 0..n {
            for j in 0..n {
                d.set(i, j, self.get(i, j));
            }
        }
        d
    }

    /// Eigenvalues in ascending order (cyclic Jacobi; exact enough for n <= 8).
    pub fn eigenvalues(&self) -> Vec<T> {
        let mut e = self.eigen_decomposition().0;
        e.sort_by(|x, y| x.partial_cmp(y).unwrap());
        e
    }

    /// Eigenvalues (unsorted) and the orthogonal matrix of eigenvectors by
    /// columns: `self = V diag(e) V^T`.
    pub fn eigen_decomposition(&self) -> (Vec<T>, Dense<T>) {
        let n = self.n;
        let mut v = Dense::identity(n);
        if n == 1 {
            return (vec![self.get(0, 0)], v);
        }
        let mut a = self.to_dense();
        let tol = T::of(1e-14) * (T::one() + self.max_abs());
        for _sweep in 0..64 {
            let mut off = T::zero();
            for i in 0..n {
                for j in (i + 1)..n {
                    off = off.max(a.get(i, j).abs());
                }
            }
            if off <= tol {
                break;
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    let apq = a.get(i, j);
                    if apq.abs() <= tol * T::of(1e-2) {
                        continue;
                    }
                    let app = a.get(i, i);
                    let aqq = a.get(j, j);
                    let theta = (aqq - app) / (T::of(2.0) * apq);
                    let t = {
                        let s = if theta >= T::zero() { T::one() } else { -T::one() };
                        s / (theta.abs() + (theta * theta + T::one()).sqrt())
                    };
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    a.rotate(i, j, c, s);
                    // accumulate V <- V * G(i,j,theta)^T on the columns
                    for k in 0..n {
                        let vip = v.get(k, i);
                        let viq = v.get(k, j);
                        v.set(k, i, c * vip - s * viq);
                        v.set(k, j, s * vip + c * viq);
                    }
                }
            }
        }
        let eig: Vec<T> = (0..n).map(|i| a.get(i, i)).collect();
        (eig, v)
    }

    /// Spectral clamp: eigenvalues clipped into `[lo, hi]`, eigenvectors
    /// unchanged.
    pub fn clamp_spectrum(&self, lo: T, hi: T) -> SymMatrix<T> {
        let (e, v) = self.eigen_decomposition();
        let n = self.n;
        SymMatrix::from_fn(n, |i, j| {
            let mut s = T::zero();
            for k in 0..n {
                s += v.get(i, k) * e[k].max(lo).min(hi) * v.get(j, k);
            }
            s
        })
    }

    /// Operator 2-norm (largest absolute eigenvalue).
    pub fn op_norm(&self) -> T {
        self.eigenvalues()
            .into_iter()
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues()[0]
    }

    /// Leading `k x k` block.
    pub fn leading_block(&self, k: usize) -> Self {
        assert!(k <= self.n);
        Self::from_fn(k, |i, j| self.get(i, j))
    }

    /// Trailing `l x l` block.
    pub fn trailing_block(&self, l: usize) -> Self {
        assert!(l <= self.n);
        let off = self.n - l;
        Self::from_fn(l, |i, j| self.get(off + i, off + j))
    }

    /// Block-diagonal composition; the off-diagonal blocks are zero.
    pub fn block_diag(a: &Self, b: &Self) -> Self {
        let n = a.n + b.n;
        Self::from_fn(n, |i, j| {
            if i < a.n && j < a.n {
                a.get(i, j)
            } else if i >= a.n && j >= a.n {
                b.get(i - a.n, j - a.n)
            } else {
                T::zero()
            }
        })
    }
}

impl<T: Real> std::fmt::Debug for SymMatrix<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "SymMatrix {}x{}", self.n, self.n)?;
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| format!("{:>12.5e}", self.get(i, j))).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Minimal dense matrix used internally for powers and rotations.
#[derive(Clone, Debug)]
pub struct Dense<T> {
    n: usize,
    a: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            a: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut d = Self::zero(n);
        for i in 0..n {
            d.set(i, i, T::one());
        }
        d
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.a[i * self.n + j] = v;
    }

    pub fn trace(&self) -> T {
        (0..self.n).fold(T::zero(), |s, i| s + self.get(i, i))
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zero(n);
        for i in 0..n {
            for k in 0..n {
                let v = self.get(i, k);
                if v == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out.a[i * n + j] += v * other.get(k, j);
                }
            }
        }
        out
    }

    /// Symmetrizes into a `SymMatrix` (averages the triangles).
    pub fn to_sym(&self) -> SymMatrix<T> {
        SymMatrix::from_dense_rows(self.n, &self.a)
    }

    /// Two-sided Jacobi rotation in the (p, q) plane.
    fn rotate(&mut self, p: usize, q: usize, c: T, s: T) {
        let n = self.n;
        for k in 0..n {
            let akp = self.get(k, p);
            let akq = self.get(k, q);
            self.set(k, p, c * akp - s * akq);
            self.set(k, q, s * akp + c * akq);
        }
        for k in 0..n {
            let apk = self.get(p, k);
            let aqk = self.get(q, k);
            self.set(p, k, c * apk - s * aqk);
            self.set(q, k, s * apk + c * aqk);
        }
    }

    /// Inverse by Gauss elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        let n = self.n;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for col in 0..n {
            let mut piv = col;
            for r in (col + 1)..n {
                if a.get(r, col).abs() > a.get(piv, col).abs() {
                    piv = r;
                }
            }
            if a.get(piv, col).abs() <= T::of(1e-300) {
                return Err(Error::Domain("singular matrix in inverse".into()));
            }
            if piv != col {
                for j in 0..n {
                    let (x, y) = (a.get(col, j), a.get(piv, j));
                    a.set(col, j, y);
                    a.set(piv, j, x);
                    let (x, y) = (inv.get(col, j), inv.get(piv, j));
                    inv.set(col, j, y);
                    inv.set(piv, j, x);
                }
            }
            let d = a.get(col, col);
            for j in 0..n {
                a.set(col, j, a.get(col, j) / d);
                inv.set(col, j, inv.get(col, j) / d);
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a.get(r, col);
                if f == T::zero() {
                    continue;
                }
                for j in 0..n {
                    a.set(r, j, a.get(r, j) - f * a.get(col, j));
                    inv.set(r, j, inv.get(r, j) - f * inv.get(col, j));
                }
            }
        }
        Ok(inv)
    }

    pub fn determinant(&self) -> T {
        let n = self.n;
        let mut a = self.clone();
        let mut det = T::one();
        for col in 0..n {
            let mut piv = col;
            for r in (col + 1)..n {
                if a.get(r, col).abs() > a.get(piv, col).abs() {
                    piv = r;
                }
            }
            if a.get(piv, col) == T::zero() {
                return T::zero();
            }
            if piv != col {
                det = -det;
                for j in 0..n {
                    let (x, y) = (a.get(col, j), a.get(piv, j));
                    a.set(col, j, y);
                    a.set(piv, j, x);
                }
            }
            let d = a.get(col, col);
            det *= d;
            for r in (col + 1)..n {
                let f = a.get(r, col) / d;
                if f == T::zero() {
                    continue;
                }
                for j in col..n {
                    a.set(r, j, a.get(r, j) - f * a.get(col, j));
                }
            }
        }
        det
    }
}

/// Second derivative of a scalar operator: `H_pq = D^2 F[D_p, D_q]` over
/// canonical pairs, symmetric in `(p, q)` by construction.
#[derive(Clone, Debug)]
pub struct OpHessian<T> {
    n: usize,
    m: usize,
    a: Vec<T>,
}

impl<T: Real> OpHessian<T> {
    pub fn zero(n: usize) -> Self {
        let m = pair_count(n);
        Self {
            n,
            m,
            a: vec![T::zero(); m * m],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn pair_dim(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn entry(&self, p: usize, q: usize) -> T {
        self.a[p * self.m + q]
    }

    #[inline]
    pub fn set_entry(&mut self, p: usize, q: usize, v: T) {
        self.a[p * self.m + q] = v;
        self.a[q * self.m + p] = v;
    }

    /// Weight of a canonical pair in full-index sums (2 off the diagonal).
    fn weight(n: usize, p: usize) -> T {
        let (i, j) = pairs(n)[p];
        if i == j {
            T::one()
        } else {
            T::of(2.0)
        }
    }

    /// Full contraction `sum_{ijrs} H^{ij,rs} X_ij Y_rs`; equals the second
    /// directional derivative `D^2 F[X, Y]` for symmetric `X`, `Y`.
    pub fn contract(&self, x: &SymMatrix<T>, y: &SymMatrix<T>) -> T {
        assert_eq!(x.dim(), self.n);
        assert_eq!(y.dim(), self.n);
        let mut s = T::zero();
        for p in 0..self.m {
            let wx = Self::weight(self.n, p) * x.pair_entry(p);
            if wx == T::zero() {
                continue;
            }
            for q in 0..self.m {
                s += wx * Self::weight(self.n, q) * y.pair_entry(q) * self.entry(p, q);
            }
        }
        s
    }

    pub fn quad_form(&self, x: &SymMatrix<T>) -> T {
        self.contract(x, x)
    }

    pub fn max_abs(&self) -> T {
        self.a.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Largest asymmetry `|H_pq - H_qp|`; zero for everything built through
    /// `set_entry`, kept for independently assembled estimates.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for p in 0..self.m {
            for q in 0..self.m {
                worst = worst.max((self.a[p * self.m + q] - self.a[q * self.m + p]).abs());
            }
        }
        worst
    }
}

/// Fully symmetric rank-3 array, e.g. third derivatives `u_aij`.
#[derive(Clone, Debug)]
pub struct Sym3Tensor<T> {
    n: usize,
    a: Vec<T>,
}

impl<T: Real> Sym3Tensor<T> {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            a: vec![T::zero(); n * n * n],
        }
    }

    /// Builds from an arbitrary generator, symmetrizing over all six index
    /// permutations.
    pub fn from_fn_symmetrized(n: usize, f: impl Fn(usize, usize, usize) -> T) -> Self {
        let mut t = Self::zero(n);
        let sixth = T::one() / T::of(6.0);
        for a in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let s = f(a, i, j)
                        + f(a, j, i)
                        + f(i, a, j)
                        + f(i, j, a)
                        + f(j, a, i)
                        + f(j, i, a);
                    t.a[(a * n + i) * n + j] = s * sixth;
                }
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, a: usize, i: usize, j: usize) -> T {
        self.a[(a * self.n + i) * self.n + j]
    }

    /// The symmetric matrix `(u_aij)_{ij}` for fixed first index.
    pub fn slice(&self, a: usize) -> SymMatrix<T> {
        SymMatrix::from_fn(self.n, |i, j| self.get(a, i, j))
    }
}

/// Solves a small dense linear system `A x = b` by Gauss elimination with
/// partial pivoting. Used for least-squares normal equations.
pub fn solve_dense<T: Real>(a: &Dense<T>, b: &[T]) -> Result<Vec<T>> {
    let n = a.dim();
    assert_eq!(b.len(), n);
    let mut m = a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if m.get(r, col).abs() > m.get(piv, col).abs() {
                piv = r;
            }
        }
        if m.get(piv, col).abs() <= T::of(1e-300) {
            return Err(Error::Domain("singular linear system".into()));
        }
        if piv != col {
            for j in 0..n {
                let (u, v) = (m.get(col, j), m.get(piv, j));
                m.set(col, j, v);
                m.set(piv, j, u);
            }
            x.swap(col, piv);
        }
        for r in (col + 1)..n {
            let f = m.get(r, col) / m.get(col, col);
            if f == T::zero() {
                continue;
            }
            for j in col..n {
                m.set(r, j, m.get(r, j) - f * m.get(col, j));
            }
            x[r] = x[r] - f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for j in (col + 1)..n {
            s -= m.get(col, j) * x[j];
        }
        x[col] = s / m.get(col, col);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tri_indexing_round_trips() {
        let n = 5;
        let ps = pairs(n);
        for (p, &(i, j)) in ps.iter().enumerate() {
            assert_eq!(tri_index(n, i, j), p);
            assert_eq!(tri_index(n, j, i), p);
        }
    }

    #[test]
    fn reconstructed_matrix_is_symmetric() {
        let m = SymMatrix::<f64>::from_fn(4, |i, j| (i * 7 + j) as f64);
        let d = m.to_dense();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(d.get(i, j), d.get(j, i));
            }
        }
    }

    #[test]
    fn jacobi_eigenvalues_match_known_spectrum() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let mut m = SymMatrix::<f64>::zero(2);
        m.set(0, 0, 2.0);
        m.set(1, 1, 2.0);
        m.set(0, 1, 1.0);
        let e = m.eigenvalues();
        assert!((e[0] - 1.0).abs() < 1e-12);
        assert!((e[1] - 3.0).abs() < 1e-12);
        assert!((m.op_norm() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn dense_inverse_and_determinant() {
        let m = SymMatrix::<f64>::from_fn(3, |i, j| if i == j { 2.0 + i as f64 } else { 0.5 });
        let d = m.to_dense();
        let inv = d.inverse().unwrap();
        let prod = d.mul(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod.get(i, j) - want).abs() < 1e-12);
            }
        }
        let eig_prod: f64 = m.eigenvalues().iter().product();
        assert!((d.determinant() - eig_prod).abs() < 1e-10);
    }

    #[test]
    fn contraction_counts_off_diagonal_twice() {
        let mut x = SymMatrix::<f64>::zero(2);
        x.set(0, 1, 3.0);
        let mut y = SymMatrix::<f64>::zero(2);
        y.set(0, 1, 5.0);
        assert_eq!(x.inner(&y), 30.0);
    }

    #[test]
    fn solve_dense_small_system() {
        let mut a = Dense::<f64>::zero(2);
        a.set(0, 0, 2.0);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(1, 1, 3.0);
        let x = solve_dense(&a, &[5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] - 3.0).abs() < 1e-14);
    }
}
