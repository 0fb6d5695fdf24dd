//! Operator calculus for twisted-type equations.
//!
//! A twisted operator is a sum `F = F_cup + F_cap` where `F_cup` is convex
//! and uniformly elliptic and `F_cap` is weakly concave: some increasing
//! concave reparameterization `G` makes `G(F_cap(.))` concave, with `G'`
//! bounded below by a positive function `Q` on the relevant interval `U`.
//! This module provides the matrix functions themselves (the sigma_k family,
//! block determinant roots, affine and diagonal-exponential operators,
//! expression-defined operators and envelope extensions), their first and
//! second derivatives, the gauge triple `(G, Q, U)`, domain descriptors and
//! the operator presets.
//!
//! Derivatives follow the convention documented in [`crate::sym`]: gradients
//! are full-matrix partials, so Euler-type contraction identities hold with
//! plain double sums.

pub mod expr;
pub mod preset;

use crate::envelope::EnvelopeApprox;
use crate::error::{Error, Result};
use crate::sampling::SampleStream;
use crate::scalar::Real;
use crate::sym::{pair_count, pairs, Dense, OpHessian, SymMatrix};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Block splitting `R^n = R^k x R^l` used by block projections and the
/// ellipticity band.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockShape {
    pub k: usize,
    pub ell: usize,
}

impl BlockShape {
    pub fn new(k: usize, ell: usize) -> Result<Self> {
        if k < 1 || ell < 1 {
            return Err(Error::Config("block sizes must be at least 1".into()));
        }
        Ok(Self { k, ell })
    }

    pub fn dim(&self) -> usize {
        self.k + self.ell
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        if self.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "block shape ({}, {}) does not split dimension {}",
                self.k, self.ell, n
            )));
        }
        Ok(())
    }
}

/// Diagonal block projections: returns the leading `k x k` and trailing
/// `l x l` blocks; the off-diagonal blocks are discarded by definition.
pub fn project_blocks<T: Real>(
    m: &SymMatrix<T>,
    shape: BlockShape,
) -> Result<(SymMatrix<T>, SymMatrix<T>)> {
    shape.check_dim(m.dim())?;
    Ok((m.leading_block(shape.k), m.trailing_block(shape.ell)))
}

// ---------------------------------------------------------------------------
// Elementary symmetric polynomials of the eigenvalues.
// ---------------------------------------------------------------------------

/// All `e_0 .. e_n` from the characteristic polynomial (Faddeev-LeVerrier);
/// no eigen-decomposition, exact up to rounding for small `n`.
pub fn sigma_all<T: Real>(m: &SymMatrix<T>) -> Vec<T> {
    let n = m.dim();
    let mut e = vec![T::zero(); n + 1];
    e[0] = T::one();
    match n {
        1 => {
            e[1] = m.get(0, 0);
        }
        2 => {
            e[1] = m.trace();
            e[2] = m.get(0, 0) * m.get(1, 1) - m.get(0, 1) * m.get(0, 1);
        }
        3 => {
            let (a, b, c) = (m.get(0, 0), m.get(1, 1), m.get(2, 2));
            let (d, f, g) = (m.get(0, 1), m.get(0, 2), m.get(1, 2));
            e[1] = a + b + c;
            e[2] = a * b + a * c + b * c - d * d - f * f - g * g;
            e[3] = a * (b * c - g * g) - d * (d * c - g * f) + f * (d * g - b * f);
        }
        _ => {
            // p_j = tr(M^j), then Newton's identities.
            let dense = m.to_dense();
            let mut power = dense.clone();
            let mut p = vec![T::zero(); n + 1];
            for j in 1..=n {
                p[j] = power.trace();
                if j < n {
                    power = power.mul(&dense);
                }
            }
            for k in 1..=n {
                let mut s = T::zero();
                let mut sign = T::one();
                for i in 1..=k {
                    s += sign * e[k - i] * p[i];
                    sign = -sign;
                }
                e[k] = s / T::of_usize(k);
            }
        }
    }
    e
}

/// `sigma_k(M)`: the k-th symmetric polynomial of the eigenvalues.
pub fn sigma_k<T: Real>(m: &SymMatrix<T>, k: usize) -> Result<T> {
    let n = m.dim();
    if k < 1 || k > n {
        return Err(Error::Domain(format!(
            "sigma_{k} undefined for {n}x{n} matrices"
        )));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("sigma_k argument".into()));
    }
    Ok(sigma_all(m)[k])
}

/// Gradient of `sigma_k`: `sum_{j=0}^{k-1} (-1)^j e_{k-1-j} M^j`.
pub fn sigma_grad<T: Real>(m: &SymMatrix<T>, k: usize) -> Result<SymMatrix<T>> {
    let n = m.dim();
    if k < 1 || k > n {
        return Err(Error::Domain(format!(
            "sigma_{k} undefined for {n}x{n} matrices"
        )));
    }
    if k == 1 {
        return Ok(SymMatrix::identity(n));
    }
    if n == 2 && k == 2 {
        let mut g = SymMatrix::identity(2).scaled(m.trace());
        g.axpy(-T::one(), m);
        return Ok(g);
    }
    let e = sigma_all(m);
    let dense = m.to_dense();
    let mut acc = Dense::zero(n);
    let mut power = Dense::identity(n);
    let mut sign = T::one();
    for j in 0..k {
        let c = sign * e[k - 1 - j];
        for i in 0..n {
            for jj in 0..n {
                acc.set(i, jj, acc.get(i, jj) + c * power.get(i, jj));
            }
        }
        if j + 1 < k {
            power = power.mul(&dense);
            sign = -sign;
        }
    }
    Ok(acc.to_sym())
}

/// Second derivative of `sigma_k` over canonical pairs, by differentiating
/// the gradient formula.
pub fn sigma_hess<T: Real>(m: &SymMatrix<T>, k: usize) -> Result<OpHessian<T>> {
    let n = m.dim();
    if k < 1 || k > n {
        return Err(Error::Domain(format!(
            "sigma_{k} undefined for {n}x{n} matrices"
        )));
    }
    let mut h = OpHessian::zero(n);
    if k == 1 {
        return Ok(h);
    }
    let e = sigma_all(m);
    let grads: Vec<SymMatrix<T>> = (1..k)
        .map(|j| sigma_grad(m, j))
        .collect::<Result<_>>()?;
    let dense = m.to_dense();
    let mut powers = vec![Dense::identity(n)];
    for _ in 1..k {
        powers.push(powers.last().unwrap().mul(&dense));
    }
    let ps = pairs(n);
    for q in 0..pair_count(n) {
        let dq = SymMatrix::basis_direction(n, q);
        let dq_dense = dq.to_dense();
        // D(grad sigma_k)[D_q]
        let mut dg = Dense::zero(n);
        let mut sign = T::one();
        for j in 0..k {
            let coeff_idx = k - 1 - j;
            // d e_{k-1-j} [D_q]
            let de = if coeff_idx == 0 {
                T::zero()
            } else {
                grads[coeff_idx - 1].inner(&dq)
            };
            for i in 0..n {
                for jj in 0..n {
                    dg.set(i, jj, dg.get(i, jj) + sign * de * powers[j].get(i, jj));
                }
            }
            // e_{k-1-j} * d(M^j)[D_q] = e * sum_{a+b=j-1} M^a D_q M^b
            if j >= 1 {
                let c = sign * e[coeff_idx];
                for a in 0..j {
                    let b = j - 1 - a;
                    let term = powers[a].mul(&dq_dense).mul(&powers[b]);
                    for i in 0..n {
                        for jj in 0..n {
                            dg.set(i, jj, dg.get(i, jj) + c * term.get(i, jj));
                        }
                    }
                }
            }
            sign = -sign;
        }
        let dg_sym = dg.to_sym();
        for p in 0..=q {
            let (i, j) = ps[p];
            let v = if i == j {
                dg_sym.get(i, i)
            } else {
                dg_sym.get(i, j)
            };
            h.set_entry(p, q, v);
        }
    }
    Ok(h)
}

// ---------------------------------------------------------------------------
// Concavity gauge.
// ---------------------------------------------------------------------------

/// The triple `(G, Q, U)` certifying weak concavity. `G` is increasing and
/// concave on the interval `U`, and `G' >= Q > 0` on the interior of `U`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Gauge {
    /// `G(x) = x`, `Q = 1`, `U = R`. The trivial gauge for operators that
    /// are already concave.
    Identity,
    /// `G(x) = x^(1/k)` on `U = [0, inf)` with `Q(x) = min(1, (1/k)|x|^(1/k - 1))`.
    ///
    /// The `1/k` factor in `Q` keeps `G' >= Q` for large `x`; without it the
    /// bound fails beyond `x = 1`.
    Power { k: u32 },
}

/// Values of the gauge triple at a point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GaugeValues<T> {
    pub g: T,
    pub g_prime: T,
    pub q: T,
}

impl Gauge {
    /// The interval `U` as `(lo, hi)` with infinities for unbounded ends.
    pub fn interval(&self) -> (f64, f64) {
        match self {
            Gauge::Identity => (f64::NEG_INFINITY, f64::INFINITY),
            Gauge::Power { .. } => (0.0, f64::INFINITY),
        }
    }

    pub fn contains<T: Real>(&self, x: T) -> bool {
        let (lo, hi) = self.interval();
        x.as_f64() >= lo && x.as_f64() <= hi
    }

    pub fn contains_interior<T: Real>(&self, x: T) -> bool {
        let (lo, hi) = self.interval();
        x.as_f64() > lo && x.as_f64() < hi
    }

    fn domain_err<T: Real>(&self, x: T) -> Error {
        let (lo, hi) = self.interval();
        Error::GaugeDomain(format!(
            "x = {} outside the gauge interval U = [{lo}, {hi}] (range condition (i) of the weak-concavity contract)",
            x.as_f64()
        ))
    }

    pub fn g<T: Real>(&self, x: T) -> Result<T> {
        if !self.contains(x) {
            return Err(self.domain_err(x));
        }
        Ok(match self {
            Gauge::Identity => x,
            Gauge::Power { k } => x.powf(T::one() / T::of(*k as f64)),
        })
    }

    pub fn g_prime<T: Real>(&self, x: T) -> Result<T> {
        if !self.contains(x) {
            return Err(self.domain_err(x));
        }
        Ok(match self {
            Gauge::Identity => T::one(),
            Gauge::Power { k } => {
                let kk = T::of(*k as f64);
                if x == T::zero() {
                    T::infinity()
                } else {
                    x.powf(T::one() / kk - T::one()) / kk
                }
            }
        })
    }

    pub fn g_second<T: Real>(&self, x: T) -> Result<T> {
        if !self.contains(x) {
            return Err(self.domain_err(x));
        }
        Ok(match self {
            Gauge::Identity => T::zero(),
            Gauge::Power { k } => {
                let kk = T::of(*k as f64);
                let inv = T::one() / kk;
                if x == T::zero() {
                    T::neg_infinity()
                } else {
                    inv * (inv - T::one()) * x.powf(inv - T::of(2.0))
                }
            }
        })
    }

    /// `Q` is defined on all of `R`.
    pub fn q<T: Real>(&self, x: T) -> T {
        match self {
            Gauge::Identity => T::one(),
            Gauge::Power { k } => {
                let kk = T::of(*k as f64);
                if x == T::zero() {
                    T::one()
                } else {
                    T::one().min(x.abs().powf(T::one() / kk - T::one()) / kk)
                }
            }
        }
    }

    /// The triple `(G(x), G'(x), Q(x))`.
    pub fn eval<T: Real>(&self, x: T) -> Result<GaugeValues<T>> {
        Ok(GaugeValues {
            g: self.g(x)?,
            g_prime: self.g_prime(x)?,
            q: self.q(x),
        })
    }
}

// ---------------------------------------------------------------------------
// Domain descriptors.
// ---------------------------------------------------------------------------

/// Descriptor of the open set on which an operator is declared smooth and
/// elliptic. Two concrete shapes cover the catalog: an eigenvalue box and
/// the block ellipticity band of the twisted Monge-Ampere example.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "", tag = "kind", rename_all = "kebab-case")]
pub enum DomainSet<T: Real> {
    /// No constraint; samples are uniform symmetric matrices of unit scale.
    All { dim: usize },
    /// Matrices with all eigenvalues in `[lo, hi]`.
    EigenBox { dim: usize, lo: T, hi: T },
    /// The band `E_{lambda, kappa}` (see [`crate::envelope::EnvelopeSet`]).
    Band(crate::envelope::EnvelopeSet<T>),
}

impl<T: Real> DomainSet<T> {
    pub fn dim(&self) -> usize {
        match self {
            DomainSet::All { dim } => *dim,
            DomainSet::EigenBox { dim, .. } => *dim,
            DomainSet::Band(set) => set.shape.dim(),
        }
    }

    pub fn contains(&self, m: &SymMatrix<T>) -> bool {
        if m.dim() != self.dim() {
            return false;
        }
        match self {
            DomainSet::All { .. } => m.is_finite(),
            DomainSet::EigenBox { lo, hi, .. } => {
                let slack = T::of(1e-9) * (T::one() + hi.abs().max(lo.abs()));
                let e = m.eigenvalues();
                e[0] >= *lo - slack && e[e.len() - 1] <= *hi + slack
            }
            DomainSet::Band(set) => set.contains(m),
        }
    }

    /// Quasi-random sample from the set.
    pub fn sample(&self, stream: &mut SampleStream) -> SymMatrix<T> {
        match self {
            DomainSet::All { dim } => stream.sym_uniform(*dim, T::one()),
            DomainSet::EigenBox { dim, lo, hi } => stream.sym_in_eig_box(*dim, *lo, *hi),
            DomainSet::Band(set) => set.sample(stream),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DomainSet::All { dim } => format!("all symmetric {dim}x{dim} matrices"),
            DomainSet::EigenBox { dim, lo, hi } => format!(
                "{dim}x{dim} matrices with eigenvalues in [{}, {}]",
                lo.as_f64(),
                hi.as_f64()
            ),
            DomainSet::Band(set) => format!(
                "band E(lambda={}, kappa={}) for blocks ({}, {})",
                set.lambda.as_f64(),
                set.kappa.as_f64(),
                set.shape.k,
                set.shape.ell
            ),
        }
    }
}

// ---------------------------------------------------------------------------
// Matrix functions.
// ---------------------------------------------------------------------------

/// A scalar function of a symmetric matrix, with analytic derivatives where
/// available and central finite differences otherwise.
#[derive(Clone)]
pub enum MatrixFn<T: Real> {
    /// Identically zero (used as a missing concave part).
    Zero,
    /// `<grad, M> + offset`; `grad = I` gives the shifted trace.
    Affine { grad: SymMatrix<T>, offset: T },
    /// `sigma_k(M)`.
    SigmaK { k: usize },
    /// `-(det(-pi_l M))^(1/n) + eps * tr(pi_k M)`: the convex side of the
    /// twisted Monge-Ampere split. Requires `-pi_l M` positive definite.
    BlockDetCup { shape: BlockShape, eps: T },
    /// `(det(pi_k M))^(1/n) - eps * tr(pi_k M)`: the concave side. Requires
    /// `pi_k M` positive definite.
    BlockDetCap { shape: BlockShape, eps: T },
    /// `tr M + w * sum_i exp(m_ii)`: smooth, convex, uniformly elliptic on
    /// bounded sets.
    DiagExpConvex { dim: usize, weight: T },
    /// `-w * sum_i exp(-m_ii)`: smooth, concave, degenerate elliptic.
    DiagExpConcave { dim: usize, weight: T },
    /// `tr(M A M)` for a fixed symmetric `A`.
    QuadraticForm { a: SymMatrix<T> },
    /// Expression over the invariants `tr`, `det`, `sigma1..sigma8`.
    Custom { dim: usize, expr: expr::Expr },
    /// A built envelope extension used as a convex operator.
    Envelope(Arc<EnvelopeApprox<T>>),
}

impl<T: Real> MatrixFn<T> {
    pub fn name(&self) -> String {
        match self {
            MatrixFn::Zero => "0".into(),
            MatrixFn::Affine { offset, .. } => format!("<A, M> + {}", offset.as_f64()),
            MatrixFn::SigmaK { k } => format!("sigma_{k}(M)"),
            MatrixFn::BlockDetCup { shape, eps } => format!(
                "-(det(-pi_{}(M)))^(1/{}) + {} tr(pi_{}(M))",
                shape.ell,
                shape.dim(),
                eps.as_f64(),
                shape.k
            ),
            MatrixFn::BlockDetCap { shape, eps } => format!(
                "(det(pi_{}(M)))^(1/{}) - {} tr(pi_{}(M))",
                shape.k,
                shape.dim(),
                eps.as_f64(),
                shape.k
            ),
            MatrixFn::DiagExpConvex { weight, .. } => {
                format!("tr M + {} sum_i exp(m_ii)", weight.as_f64())
            }
            MatrixFn::DiagExpConcave { weight, .. } => {
                format!("-{} sum_i exp(-m_ii)", weight.as_f64())
            }
            MatrixFn::QuadraticForm { .. } => "tr(M A M)".into(),
            MatrixFn::Custom { .. } => "custom expression".into(),
            MatrixFn::Envelope(_) => "convex envelope extension".into(),
        }
    }

    pub fn eval(&self, m: &SymMatrix<T>) -> Result<T> {
        let v = match self {
            MatrixFn::Zero => T::zero(),
            MatrixFn::Affine { grad, offset } => grad.inner(m) + *offset,
            MatrixFn::SigmaK { k } => sigma_k(m, *k)?,
            MatrixFn::BlockDetCup { shape, eps } => {
                shape.check_dim(m.dim())?;
                let y = m.trailing_block(shape.ell).scaled(-T::one());
                let det = y.to_dense().determinant();
                if det <= T::zero() || y.min_eigenvalue() <= T::zero() {
                    return Err(Error::Domain(
                        "-pi_l(M) must be positive definite for the det root".into(),
                    ));
                }
                let root = det.powf(T::one() / T::of_usize(shape.dim()));
                -root + *eps * m.leading_block(shape.k).trace()
            }
            MatrixFn::BlockDetCap { shape, eps } => {
                shape.check_dim(m.dim())?;
                let z = m.leading_block(shape.k);
                let det = z.to_dense().determinant();
                if det <= T::zero() || z.min_eigenvalue() <= T::zero() {
                    return Err(Error::Domain(
                        "pi_k(M) must be positive definite for the det root".into(),
                    ));
                }
                let root = det.powf(T::one() / T::of_usize(shape.dim()));
                root - *eps * z.trace()
            }
            MatrixFn::DiagExpConvex { dim, weight } => {
                check_dim(*dim, m)?;
                let mut s = m.trace();
                for i in 0..*dim {
                    s += *weight * m.get(i, i).exp();
                }
                s
            }
            MatrixFn::DiagExpConcave { dim, weight } => {
                check_dim(*dim, m)?;
                let mut s = T::zero();
                for i in 0..*dim {
                    s -= *weight * (-m.get(i, i)).exp();
                }
                s
            }
            MatrixFn::QuadraticForm { a } => {
                check_dim(a.dim(), m)?;
                let md = m.to_dense();
                md.mul(&a.to_dense()).mul(&md).trace()
            }
            MatrixFn::Custom { dim, expr } => {
                check_dim(*dim, m)?;
                let e = sigma_all(m);
                let value = expr.eval(&|name| match name {
                    "tr" => Some(e[1].as_f64()),
                    "det" => Some(e[*dim].as_f64()),
                    _ => name
                        .strip_prefix("sigma")
                        .and_then(|s| s.parse::<usize>().ok())
                        .filter(|k| (1..=*dim).contains(k))
                        .map(|k| e[k].as_f64()),
                })?;
                T::of(value)
            }
            MatrixFn::Envelope(env) => env.eval(m)?,
        };
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{} at the given matrix", self.name())));
        }
        Ok(v)
    }

    /// Analytic gradient where a closed form exists.
    fn grad_analytic(&self, m: &SymMatrix<T>) -> Result<Option<SymMatrix<T>>> {
        Ok(match self {
            MatrixFn::Zero => Some(SymMatrix::zero(m.dim())),
            MatrixFn::Affine { grad, .. } => Some(grad.clone()),
            MatrixFn::SigmaK { k } => Some(sigma_grad(m, *k)?),
            MatrixFn::BlockDetCup { shape, eps } => {
                shape.check_dim(m.dim())?;
                let n = shape.dim();
                let y = m.trailing_block(shape.ell).scaled(-T::one());
                if y.min_eigenvalue() <= T::zero() {
                    return Err(Error::Domain(
                        "-pi_l(M) must be positive definite for the det root".into(),
                    ));
                }
                let det = y.to_dense().determinant();
                let root = det.powf(T::one() / T::of_usize(n));
                let yinv = y.to_dense().inverse()?;
                let mut g = SymMatrix::zero(m.dim());
                for i in 0..shape.k {
                    g.set(i, i, *eps);
                }
                let scale = root / T::of_usize(n);
                for i in 0..shape.ell {
                    for j in i..shape.ell {
                        let v = scale * (yinv.get(i, j) + yinv.get(j, i)) / T::of(2.0);
                        g.set(shape.k + i, shape.k + j, v);
                    }
                }
                Some(g)
            }
            MatrixFn::BlockDetCap { shape, eps } => {
                shape.check_dim(m.dim())?;
                let n = shape.dim();
                let z = m.leading_block(shape.k);
                if z.min_eigenvalue() <= T::zero() {
                    return Err(Error::Domain(
                        "pi_k(M) must be positive definite for the det root".into(),
                    ));
                }
                let det = z.to_dense().determinant();
                let root = det.powf(T::one() / T::of_usize(n));
                let zinv = z.to_dense().inverse()?;
                let mut g = SymMatrix::zero(m.dim());
                let scale = root / T::of_usize(n);
                for i in 0..shape.k {
                    for j in i..shape.k {
                        let mut v = scale * (zinv.get(i, j) + zinv.get(j, i)) / T::of(2.0);
                        if i == j {
                            v -= *eps;
                        }
                        g.set(i, j, v);
                    }
                }
                Some(g)
            }
            MatrixFn::DiagExpConvex { dim, weight } => {
                check_dim(*dim, m)?;
                let mut g = SymMatrix::identity(*dim);
                for i in 0..*dim {
                    g.add_to(i, i, *weight * m.get(i, i).exp());
                }
                Some(g)
            }
            MatrixFn::DiagExpConcave { dim, weight } => {
                check_dim(*dim, m)?;
                let mut g = SymMatrix::zero(*dim);
                for i in 0..*dim {
                    g.set(i, i, *weight * (-m.get(i, i)).exp());
                }
                Some(g)
            }
            MatrixFn::QuadraticForm { a } => {
                check_dim(a.dim(), m)?;
                let am = a.to_dense().mul(&m.to_dense());
                let ma = m.to_dense().mul(&a.to_dense());
                let n = m.dim();
                Some(SymMatrix::from_fn(n, |i, j| am.get(i, j) + ma.get(i, j)).scaled(
                    // (AM + MA) is already symmetric for symmetric A, M; the
                    // from_fn read of the upper triangle is exact.
                    T::one(),
                ))
            }
            MatrixFn::Custom { .. } => None,
            MatrixFn::Envelope(env) => Some(env.active_slope(m)?),
        })
    }

    /// Analytic second derivative where a closed form exists.
    fn hess_analytic(&self, m: &SymMatrix<T>) -> Result<Option<OpHessian<T>>> {
        let n = m.dim();
        Ok(match self {
            MatrixFn::Zero | MatrixFn::Affine { .. } => Some(OpHessian::zero(n)),
            MatrixFn::SigmaK { k } => Some(sigma_hess(m, *k)?),
            MatrixFn::BlockDetCup { shape, eps: _ } => {
                shape.check_dim(n)?;
                let nn = T::of_usize(shape.dim());
                let y = m.trailing_block(shape.ell).scaled(-T::one());
                if y.min_eigenvalue() <= T::zero() {
                    return Err(Error::Domain(
                        "-pi_l(M) must be positive definite for the det root".into(),
                    ));
                }
                let det = y.to_dense().determinant();
                let root = det.powf(T::one() / nn);
                let yinv = y.to_dense().inverse()?;
                Some(block_det_hess(
                    n,
                    shape,
                    &yinv,
                    root,
                    BlockSide::Trailing,
                    // F = -(det Y)^(1/n) with Y = -pi_l M:
                    // D^2 F[A,B] = root * ( tr(W_A W_B)/n - tr(W_A) tr(W_B)/n^2 )
                    true,
                ))
            }
            MatrixFn::BlockDetCap { shape, eps: _ } => {
                shape.check_dim(n)?;
                let nn = T::of_usize(shape.dim());
                let z = m.leading_block(shape.k);
                if z.min_eigenvalue() <= T::zero() {
                    return Err(Error::Domain(
                        "pi_k(M) must be positive definite for the det root".into(),
                    ));
                }
                let det = z.to_dense().determinant();
                let root = det.powf(T::one() / nn);
                let zinv = z.to_dense().inverse()?;
                Some(block_det_hess(
                    n,
                    shape,
                    &zinv,
                    root,
                    BlockSide::Leading,
                    false,
                ))
            }
            MatrixFn::DiagExpConvex { dim, weight } => {
                check_dim(*dim, m)?;
                let mut h = OpHessian::zero(n);
                for (p, &(i, j)) in pairs(n).iter().enumerate() {
                    if i == j {
                        h.set_entry(p, p, *weight * m.get(i, i).exp());
                    }
                }
                Some(h)
            }
            MatrixFn::DiagExpConcave { dim, weight } => {
                check_dim(*dim, m)?;
                let mut h = OpHessian::zero(n);
                for (p, &(i, j)) in pairs(n).iter().enumerate() {
                    if i == j {
                        h.set_entry(p, p, -*weight * (-m.get(i, i)).exp());
                    }
                }
                Some(h)
            }
            MatrixFn::QuadraticForm { a } => {
                check_dim(a.dim(), m)?;
                let ad = a.to_dense();
                let mut h = OpHessian::zero(n);
                let np = pair_count(n);
                for p in 0..np {
                    let dp = SymMatrix::basis_direction(n, p).to_dense();
                    for q in p..np {
                        let dq = SymMatrix::basis_direction(n, q).to_dense();
                        // D^2 tr(MAM)[X, Y] = 2 tr(X A Y)
                        let v = T::of(2.0) * dp.mul(&ad).mul(&dq).trace();
                        h.set_entry(p, q, v);
                    }
                }
                Some(h)
            }
            MatrixFn::Custom { .. } => None,
            // Piecewise linear: zero curvature wherever a single minorant is
            // active, which is almost everywhere.
            MatrixFn::Envelope(_) => Some(OpHessian::zero(n)),
        })
    }
}

fn check_dim<T: Real>(dim: usize, m: &SymMatrix<T>) -> Result<()> {
    if m.dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "operator of dimension {dim} applied to {}x{} matrix",
            m.dim(),
            m.dim()
        )));
    }
    Ok(())
}

enum BlockSide {
    Leading,
    Trailing,
}

/// Hessian of `(det of block)^(1/n)` compositions over canonical pairs.
fn block_det_hess<T: Real>(
    n: usize,
    shape: &BlockShape,
    binv: &Dense<T>,
    root: T,
    side: BlockSide,
    convex_side: bool,
) -> OpHessian<T> {
    let nn = T::of_usize(shape.dim());
    let (bsize, offset, flip) = match side {
        BlockSide::Leading => (shape.k, 0usize, T::one()),
        BlockSide::Trailing => (shape.ell, shape.k, -T::one()),
    };
    let np = pair_count(n);
    let ps = pairs(n);
    // W_p = Binv * (block of D_p), dense bsize x bsize; zero unless both
    // indices of the pair land in the block.
    let mut w: Vec<Option<Dense<T>>> = Vec::with_capacity(np);
    for p in 0..np {
        let (i, j) = ps[p];
        if i < offset || j < offset || i >= offset + bsize || j >= offset + bsize {
            w.push(None);
            continue;
        }
        let mut d = Dense::zero(bsize);
        let (bi, bj) = (i - offset, j - offset);
        if bi == bj {
            d.set(bi, bi, flip);
        } else {
            d.set(bi, bj, flip * T::of(0.5));
            d.set(bj, bi, flip * T::of(0.5));
        }
        w.push(Some(binv.mul(&d)));
    }
    let mut h = OpHessian::zero(n);
    for p in 0..np {
        let Some(wp) = &w[p] else { continue };
        for q in p..np {
            let Some(wq) = &w[q] else { continue };
            let tr_pq = wp.mul(wq).trace();
            let tr_p = wp.trace();
            let tr_q = wq.trace();
            // convex side: root*(tr(WpWq)/n - trWp trWq/n^2)
            // concave side: root*(trWp trWq/n^2 - tr(WpWq)/n)
            let v = if convex_side {
                root * (tr_pq / nn - tr_p * tr_q / (nn * nn))
            } else {
                root * (tr_p * tr_q / (nn * nn) - tr_pq / nn)
            };
            h.set_entry(p, q, v);
        }
    }
    h
}

// ---------------------------------------------------------------------------
// Finite-difference derivatives and the public derivative entry points.
// ---------------------------------------------------------------------------

fn fd_step_ok<T: Real>(
    m: &SymMatrix<T>,
    dir: &SymMatrix<T>,
    h: T,
    dom: Option<&DomainSet<T>>,
) -> bool {
    match dom {
        None => true,
        Some(d) => {
            let mut plus = m.clone();
            plus.axpy(h, dir);
            let mut minus = m.clone();
            minus.axpy(-h, dir);
            d.contains(&plus) && d.contains(&minus)
        }
    }
}

/// Central finite-difference gradient along the canonical directions. The
/// step shrinks once if it exits the declared domain, then errors.
pub fn grad_operator_fd<T: Real>(
    f: &MatrixFn<T>,
    m: &SymMatrix<T>,
    dom: Option<&DomainSet<T>>,
) -> Result<SymMatrix<T>> {
    let n = m.dim();
    let mut h = T::of(1e-5) * (T::one() + m.max_abs());
    let mut g = SymMatrix::zero(n);
    for p in 0..pair_count(n) {
        let dir = SymMatrix::basis_direction(n, p);
        let mut step = h;
        if !fd_step_ok(m, &dir, step, dom) {
            step = step / T::of(2.0);
            if !fd_step_ok(m, &dir, step, dom) {
                return Err(Error::Domain(
                    "finite-difference step exits the declared domain".into(),
                ));
            }
        }
        let mut plus = m.clone();
        plus.axpy(step, &dir);
        let mut minus = m.clone();
        minus.axpy(-step, &dir);
        let v = (f.eval(&plus)? - f.eval(&minus)?) / (T::of(2.0) * step);
        let (i, j) = pairs(n)[p];
        g.set(i, j, v);
        h = h.max(step);
    }
    Ok(g)
}

/// Nested central differences for the second derivative; symmetric in the
/// two directions by construction of the four-point formula.
pub fn hess_operator_fd<T: Real>(
    f: &MatrixFn<T>,
    m: &SymMatrix<T>,
    dom: Option<&DomainSet<T>>,
) -> Result<OpHessian<T>> {
    hess_operator_fd_with_step(f, m, dom, T::of(1e-3) * (T::one() + m.max_abs()))
}

pub fn hess_operator_fd_with_step<T: Real>(
    f: &MatrixFn<T>,
    m: &SymMatrix<T>,
    dom: Option<&DomainSet<T>>,
    h0: T,
) -> Result<OpHessian<T>> {
    let n = m.dim();
    let np = pair_count(n);
    let mut out = OpHessian::zero(n);
    for p in 0..np {
        let dp = SymMatrix::basis_direction(n, p);
        for q in p..np {
            let dq = SymMatrix::basis_direction(n, q);
            let mut corner = dp.clone();
            corner.axpy(T::one(), &dq);
            let mut step = h0;
            if !fd_step_ok(m, &corner, step, dom) {
                step = step / T::of(2.0);
                if !fd_step_ok(m, &corner, step, dom) {
                    return Err(Error::Domain(
                        "finite-difference step exits the declared domain".into(),
                    ));
                }
            }
            let eval_at = |sp: T, sq: T| -> Result<T> {
                let mut x = m.clone();
                x.axpy(sp * step, &dp);
                x.axpy(sq * step, &dq);
                f.eval(&x)
            };
            let v = (eval_at(T::one(), T::one())? - eval_at(T::one(), -T::one())?
                - eval_at(-T::one(), T::one())?
                + eval_at(-T::one(), -T::one())?)
                / (T::of(4.0) * step * step);
            out.set_entry(p, q, v);
        }
    }
    Ok(out)
}

/// First derivative `F^{ij}` of an operator: analytic for built-ins, central
/// finite differences otherwise.
pub fn grad_operator<T: Real>(
    f: &MatrixFn<T>,
    m: &SymMatrix<T>,
    dom: Option<&DomainSet<T>>,
) -> Result<SymMatrix<T>> {
    if let Some(g) = f.grad_analytic(m)? {
        return Ok(g);
    }
    grad_operator_fd(f, m, dom)
}

/// Second derivative `F^{ij,rs}` of an operator over canonical pairs.
pub fn hess_operator<T: Real>(
    f: &MatrixFn<T>,
    m: &SymMatrix<T>,
    dom: Option<&DomainSet<T>>,
) -> Result<OpHessian<T>> {
    if let Some(h) = f.hess_analytic(m)? {
        return Ok(h);
    }
    hess_operator_fd(f, m, dom)
}

/// Whether derivative calls on this operator take the analytic route.
pub fn has_analytic_derivatives<T: Real>(f: &MatrixFn<T>) -> bool {
    !matches!(f, MatrixFn::Custom { .. })
}

// ---------------------------------------------------------------------------
// Spatially dependent right-hand sides.
// ---------------------------------------------------------------------------

/// Position-dependent scalar term `f(x, y)` subtracted from the operator
/// value, supporting x-dependent equations in the solver.
#[derive(Clone, Debug)]
pub enum SpatialFn<T: Real> {
    Constant(T),
    /// Expression over the coordinates `x`, `y`.
    Expr(expr::Expr),
}

impl<T: Real> SpatialFn<T> {
    pub fn eval(&self, x: T, y: T) -> Result<T> {
        Ok(match self {
            SpatialFn::Constant(c) => *c,
            SpatialFn::Expr(e) => {
                let v = e.eval(&|name| match name {
                    "x" => Some(x.as_f64()),
                    "y" => Some(y.as_f64()),
                    _ => None,
                })?;
                T::of(v)
            }
        })
    }
}

// ---------------------------------------------------------------------------
// The twisted operator itself.
// ---------------------------------------------------------------------------

/// Result of a twisted-operator evaluation; `in_domain` is a soft warning,
/// evaluation outside the declared set is still returned when finite.
#[derive(Clone, Copy, Debug)]
pub struct EvalOutcome<T> {
    pub value: T,
    pub in_domain: bool,
}

/// A twisted-type operator `F = F_cup + F_cap` with its gauge, declared
/// domain, declared ellipticity constants, and an optional x-dependent
/// right-hand side.
#[derive(Clone)]
pub struct TwistedOperator<T: Real> {
    pub name: String,
    pub dim: usize,
    pub convex_part: MatrixFn<T>,
    pub concave_part: MatrixFn<T>,
    pub gauge: Gauge,
    pub domain: DomainSet<T>,
    pub lambda_min: T,
    pub lambda_max: T,
    pub rhs: Option<SpatialFn<T>>,
}

impl<T: Real> TwistedOperator<T> {
    /// `F_cup(M) + F_cap(M)`, minus the x-dependent right-hand side when one
    /// is configured; attaches an out-of-domain warning.
    pub fn eval(&self, m: &SymMatrix<T>, x: Option<[T; 2]>) -> Result<EvalOutcome<T>> {
        let value = self.eval_raw(m, x)?;
        Ok(EvalOutcome {
            value,
            in_domain: self.domain.contains(m),
        })
    }

    /// Evaluation without the domain check (solver hot path).
    pub fn eval_raw(&self, m: &SymMatrix<T>, x: Option<[T; 2]>) -> Result<T> {
        let mut v = self.convex_part.eval(m)? + self.concave_part.eval(m)?;
        if let Some(rhs) = &self.rhs {
            let [px, py] = x.ok_or_else(|| {
                Error::Config("operator has an x-dependent term but no point was given".into())
            })?;
            v -= rhs.eval(px, py)?;
        }
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{} evaluation", self.name)));
        }
        Ok(v)
    }

    /// Coefficients of the linearized operator: `F_cup^{ij} + F_cap^{ij}`
    /// at the given matrix.
    pub fn linearization(&self, m: &SymMatrix<T>) -> Result<SymMatrix<T>> {
        let mut g = grad_operator(&self.convex_part, m, Some(&self.domain))?;
        let gc = grad_operator(&self.concave_part, m, Some(&self.domain))?;
        g.axpy(T::one(), &gc);
        Ok(g)
    }

    /// Declared constants sanity: `lambda <= Lambda`.
    pub fn validate(&self) -> Result<()> {
        if self.lambda_min > self.lambda_max {
            return Err(Error::Config(format!(
                "declared lambda {} exceeds Lambda {}",
                self.lambda_min.as_f64(),
                self.lambda_max.as_f64()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
