//! Convex envelope extension over the block ellipticity band.
//!
//! Given a convex operator `F_cup` on the compact convex set
//! `E_{lambda,kappa}` (k-block uniformly positive, l-block uniformly
//! negative, norm bounded by kappa), the envelope is the supremum of the
//! admissible affine minorants
//!
//! ```text
//! l(M) = tr(-pi_l(N) pi_l(M)) + tr(pi_k(M)) + c,    N in E_{lambda,kappa},
//! ```
//!
//! constrained to stay below `F_cup` on the band. Every admissible slope is
//! `I_k (+) (-pi_l(N))` with `-pi_l(N)` spectrally inside `[lambda,
//! 1/lambda]`, which gives the two-sided ellipticity sandwich
//!
//! ```text
//! lambda * tr(P) <= env(M+P) - env(M) <= (1/lambda) * tr(P),    P >= 0,
//! ```
//!
//! exactly, for every `M` (inside or outside the band). `tr(P)` is the trace
//! norm of the positive semidefinite step; the sandwich is false in the
//! operator norm (take `P = I`), so the trace norm is what the verifier
//! uses.
//!
//! The supremum is approximated by sampling minorants: half of the slopes
//! are drawn from the band, half are derived from `grad F_cup` at the
//! sampled base point with the l-block spectrally clamped into the band so
//! the family stays admissible. Each intercept `c` is the exact minimum of
//! `F_cup - l` over a finite base sample of the band, so every stored
//! minorant is a true minorant on that sample set. The reported tolerance
//! estimates the distance to the ideal restricted-family envelope (nested
//! refinement gap plus the constraint slack measured on fresh validation
//! samples); it does not measure the distance to `F_cup` itself, which the
//! identity-slope family cannot attain when the k-slope of `F_cup` differs
//! from one.

use crate::error::{Error, Result};
use crate::operators::{grad_operator, BlockShape, MatrixFn};
use crate::sampling::SampleStream;
use crate::scalar::Real;
use crate::sym::SymMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// The compact convex band `E_{lambda, kappa}`: `lambda I <= pi_k(M) <=
/// (1/lambda) I`, `lambda I <= -pi_l(M) <= (1/lambda) I`, `||M|| <= kappa`
/// (operator norm).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EnvelopeSet<T: Real> {
    pub shape: BlockShape,
    pub lambda: T,
    pub kappa: T,
}

impl<T: Real> EnvelopeSet<T> {
    pub fn new(shape: BlockShape, lambda: T, kappa: T) -> Result<Self> {
        if lambda <= T::zero() || lambda > T::one() {
            return Err(Error::Config("lambda must lie in (0, 1]".into()));
        }
        if kappa < lambda.recip() {
            return Err(Error::Config(
                "kappa must be at least 1/lambda, otherwise the band is empty".into(),
            ));
        }
        Ok(Self {
            shape,
            lambda,
            kappa,
        })
    }

    pub fn contains(&self, m: &SymMatrix<T>) -> bool {
        if m.dim() != self.shape.dim() {
            return false;
        }
        let tol = T::of(1e-9) * (T::one() + self.kappa);
        let (lo, hi) = (self.lambda - tol, self.lambda.recip() + tol);
        let k_block = m.leading_block(self.shape.k);
        let ek = k_block.eigenvalues();
        if ek[0] < lo || ek[ek.len() - 1] > hi {
            return false;
        }
        let l_block = m.trailing_block(self.shape.ell).scaled(-T::one());
        let el = l_block.eigenvalues();
        if el[0] < lo || el[el.len() - 1] > hi {
            return false;
        }
        m.op_norm() <= self.kappa + tol
    }

    /// Quasi-random member: band blocks in a pseudo-random frame with a
    /// bounded off-diagonal block, shrunk until the norm constraint holds.
    pub fn sample(&self, stream: &mut SampleStream) -> SymMatrix<T> {
        let hi = self.lambda.recip().min(self.kappa);
        let k_block: SymMatrix<T> = stream.sym_in_eig_box(self.shape.k, self.lambda, hi);
        let l_block: SymMatrix<T> =
            stream.sym_in_eig_box(self.shape.ell, self.lambda, hi).scaled(-T::one());
        let mut m = SymMatrix::block_diag(&k_block, &l_block);
        // off-diagonal coupling, kept small enough for the norm cap
        let mut amp = (self.kappa - self.lambda.recip()).max(T::zero()) * T::of(0.3);
        let mut coupling = SymMatrix::zero(self.shape.dim());
        for i in 0..self.shape.k {
            for j in 0..self.shape.ell {
                coupling.set(i, self.shape.k + j, T::of(stream.uniform(-1.0, 1.0)));
            }
        }
        for _ in 0..60 {
            let mut cand = m.clone();
            cand.axpy(amp, &coupling);
            if cand.op_norm() <= self.kappa {
                m = cand;
                break;
            }
            amp = amp * T::of(0.5);
        }
        m
    }

    /// Deterministic diagonal corners of the band, useful base points for
    /// intercept minimization.
    pub fn corners(&self) -> Vec<SymMatrix<T>> {
        let hi = self.lambda.recip().min(self.kappa);
        let lo = self.lambda;
        let mut out = Vec::new();
        for &a in &[lo, hi] {
            for &b in &[lo, hi] {
                let k_block = SymMatrix::identity(self.shape.k).scaled(a);
                let l_block = SymMatrix::identity(self.shape.ell).scaled(-b);
                out.push(SymMatrix::block_diag(&k_block, &l_block));
            }
        }
        out
    }
}

/// One affine minorant, stored through its base point `N` in the band; the
/// slope is `I_k (+) (-pi_l(N))` and `c` is the intercept.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Minorant<T: Real> {
    pub n: SymMatrix<T>,
    pub c: T,
    #[serde(skip)]
    slope_l: Option<SymMatrix<T>>,
}

impl<T: Real> Minorant<T> {
    fn new(shape: BlockShape, n: SymMatrix<T>, c: T) -> Self {
        let slope_l = n.trailing_block(shape.ell).scaled(-T::one());
        Self {
            n,
            c,
            slope_l: Some(slope_l),
        }
    }

    fn slope_l(&self, shape: BlockShape) -> SymMatrix<T> {
        match &self.slope_l {
            Some(s) => s.clone(),
            None => self.n.trailing_block(shape.ell).scaled(-T::one()),
        }
    }

    /// `l(M)` without allocating when the cache is hot: caller passes the
    /// precomputed `tr(pi_k M)` and `pi_l(M)`.
    fn value_with(&self, tr_k: T, l_block: &SymMatrix<T>, shape: BlockShape) -> T {
        let s = match &self.slope_l {
            Some(s) => s.inner(l_block),
            None => self.slope_l(shape).inner(l_block),
        };
        tr_k + s + self.c
    }

    /// Full slope matrix `I_k (+) (-pi_l(N))`.
    pub fn slope(&self, shape: BlockShape) -> SymMatrix<T> {
        SymMatrix::block_diag(&SymMatrix::identity(shape.k), &self.slope_l(shape))
    }

    /// `l(M)` for arbitrary symmetric `M`.
    pub fn value(&self, shape: BlockShape, m: &SymMatrix<T>) -> T {
        let tr_k = m.leading_block(shape.k).trace();
        let l_block = m.trailing_block(shape.ell);
        self.value_with(tr_k, &l_block, shape)
    }
}

/// Sampled approximation of the band-restricted convex envelope.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EnvelopeApprox<T: Real> {
    pub set: EnvelopeSet<T>,
    pub minorants: Vec<Minorant<T>>,
    /// Estimated distance to the ideal restricted-family envelope:
    /// nested refinement gap plus constraint slack on validation samples.
    pub tolerance: T,
    pub refinement_gap: T,
    pub constraint_slack: T,
    pub seed: u64,
    #[serde(skip)]
    pub base_samples: Vec<SymMatrix<T>>,
}

impl<T: Real> EnvelopeApprox<T> {
    /// `max_j l_j(M)`; defined for every symmetric matrix of the right
    /// dimension, inside or outside the band.
    pub fn eval(&self, m: &SymMatrix<T>) -> Result<T> {
        self.best_index(m).map(|(_, v)| v)
    }

    /// Slope of the active minorant (the envelope's gradient wherever the
    /// maximizer is unique).
    pub fn active_slope(&self, m: &SymMatrix<T>) -> Result<SymMatrix<T>> {
        let (idx, _) = self.best_index(m)?;
        Ok(self.minorants[idx].slope(self.set.shape))
    }

    fn best_index(&self, m: &SymMatrix<T>) -> Result<(usize, T)> {
        if self.minorants.is_empty() {
            return Err(Error::Config("envelope has no minorants".into()));
        }
        if m.dim() != self.set.shape.dim() {
            return Err(Error::DimensionMismatch(format!(
                "envelope of dimension {} evaluated at a {}x{} matrix",
                self.set.shape.dim(),
                m.dim(),
                m.dim()
            )));
        }
        let shape = self.set.shape;
        let tr_k = m.leading_block(shape.k).trace();
        let l_block = m.trailing_block(shape.ell);
        let mut best = (0usize, T::neg_infinity());
        for (j, min) in self.minorants.iter().enumerate() {
            let v = min.value_with(tr_k, &l_block, shape);
            if v > best.1 {
                best = (j, v);
            }
        }
        Ok(best)
    }

    /// Restores the per-minorant slope caches after deserialization.
    pub fn warm(&mut self) {
        let shape = self.set.shape;
        for m in &mut self.minorants {
            if m.slope_l.is_none() {
                m.slope_l = Some(m.n.trailing_block(shape.ell).scaled(-T::one()));
            }
        }
    }

    /// Largest violation of the minorant property over the stored base
    /// samples (should be below 1e-10 by construction).
    pub fn minorant_violation(&self, fcup: &MatrixFn<T>) -> Result<T> {
        let shape = self.set.shape;
        let mut worst = T::zero();
        for x in &self.base_samples {
            let fx = fcup.eval(x)?;
            for min in &self.minorants {
                worst = worst.max(min.value(shape, x) - fx);
            }
        }
        Ok(worst)
    }
}

/// Builds the sampled envelope. `n_minorants` slope candidates are drawn
/// (band samples interleaved with clamped tangent slopes); each intercept is
/// minimized over `n_base` quasi-random band points plus the diagonal
/// corners.
pub fn build_envelope<T: Real>(
    fcup: &MatrixFn<T>,
    set: &EnvelopeSet<T>,
    n_minorants: usize,
    n_base: usize,
    seed: u64,
) -> Result<EnvelopeApprox<T>> {
    if n_minorants < 1 || n_base < 1 {
        return Err(Error::Config(
            "envelope needs at least one minorant and one base sample".into(),
        ));
    }
    let shape = set.shape;
    let mut stream = SampleStream::new(seed);
    let mut base: Vec<SymMatrix<T>> = set.corners();
    while base.len() < n_base + 4 {
        base.push(set.sample(&mut stream));
    }
    // Evaluate F_cup once per base point.
    let f_base: Vec<T> = base
        .iter()
        .map(|x| fcup.eval(x))
        .collect::<Result<_>>()?;

    // Slope candidates: band point, then the tangent-derived slope at that
    // point with its l-block clamped into the band so it stays admissible.
    let mut candidates: Vec<SymMatrix<T>> = Vec::with_capacity(n_minorants);
    while candidates.len() < n_minorants {
        let n_sample = set.sample(&mut stream);
        candidates.push(n_sample.clone());
        if candidates.len() < n_minorants {
            if let Ok(g) = grad_operator(fcup, &n_sample, None) {
                let s_l = g
                    .trailing_block(shape.ell)
                    .clamp_spectrum(set.lambda, set.lambda.recip());
                let mut tangent = n_sample;
                for i in 0..shape.ell {
                    for j in i..shape.ell {
                        tangent.set(shape.k + i, shape.k + j, -s_l.get(i, j));
                    }
                }
                candidates.push(tangent);
            }
        }
    }

    let minorants: Vec<Minorant<T>> = candidates
        .into_par_iter()
        .map(|n_point| {
            let slope_l = n_point.trailing_block(shape.ell).scaled(-T::one());
            let mut c = T::infinity();
            for (x, fx) in base.iter().zip(&f_base) {
                let l0 = x.leading_block(shape.k).trace() + slope_l.inner(&x.trailing_block(shape.ell));
                c = c.min(*fx - l0);
            }
            Minorant::new(shape, n_point, c)
        })
        .collect();

    let mut env = EnvelopeApprox {
        set: *set,
        minorants,
        tolerance: T::zero(),
        refinement_gap: T::zero(),
        constraint_slack: T::zero(),
        seed,
        base_samples: base,
    };

    // Tolerance report: how far the sampled envelope sits from the ideal
    // restricted-family envelope. Nested refinement gap (first half of the
    // minorants against all of them) plus the largest constraint violation
    // on fresh validation samples.
    let mut validation_stream = SampleStream::new(seed ^ 0x9e37_79b9_7f4a_7c15);
    let n_val = 200.max(n_base / 10);
    let validation: Vec<SymMatrix<T>> = (0..n_val)
        .map(|_| set.sample(&mut validation_stream))
        .collect();
    let half = EnvelopeApprox {
        set: *set,
        minorants: env.minorants[..(env.minorants.len() / 2).max(1)].to_vec(),
        tolerance: T::zero(),
        refinement_gap: T::zero(),
        constraint_slack: T::zero(),
        seed,
        base_samples: Vec::new(),
    };
    let mut gap = T::zero();
    let mut slack = T::zero();
    for x in &validation {
        let full = env.eval(x)?;
        let coarse = half.eval(x)?;
        gap = gap.max(full - coarse);
        let fx = fcup.eval(x)?;
        if full > fx {
            slack = slack.max(full - fx);
        }
    }
    env.refinement_gap = gap;
    env.constraint_slack = slack;
    env.tolerance = gap + slack;
    Ok(env)
}

/// One recorded sandwich violation.
#[derive(Clone, Debug, Serialize)]
pub struct SandwichViolation<T: Real> {
    pub m: SymMatrix<T>,
    pub p: SymMatrix<T>,
    pub difference: T,
    pub lower_bound: T,
    pub upper_bound: T,
}

/// Outcome of the two-sided ellipticity verification.
#[derive(Clone, Debug, Serialize)]
pub struct SandwichReport<T: Real> {
    pub trials: usize,
    pub tol: T,
    pub violations: Vec<SandwichViolation<T>>,
    /// Set when the minorant family is too small for the reported tolerance
    /// to be meaningful; the lower bound still holds for any admissible
    /// slope, the upper side is only as good as the family.
    pub underresolved: bool,
    pub seed: u64,
}

impl<T: Real> SandwichReport<T> {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `lambda * tr(P) <= env(M+P) - env(M) <= (1/lambda) * tr(P)` on
/// random pairs, with `M` drawn both inside and far outside the band, at the
/// tolerance reported by the build.
pub fn verify_sandwich<T: Real>(
    env: &EnvelopeApprox<T>,
    trials: usize,
    seed: u64,
) -> Result<SandwichReport<T>> {
    if trials < 1 {
        return Err(Error::Config("sandwich verification needs trials >= 1".into()));
    }
    let set = &env.set;
    let n = set.shape.dim();
    let mut stream = SampleStream::new(seed);
    let tol = env.tolerance + T::of(1e-9);
    let mut violations = Vec::new();
    for trial in 0..trials {
        let mut m = set.sample(&mut stream);
        if trial % 2 == 1 {
            // push outside the band
            let amp = set.kappa * T::of(stream.uniform(0.1, 2.0));
            let bump = stream.sym_uniform(n, amp);
            m.axpy(T::one(), &bump);
        }
        let scale = T::of(stream.uniform(0.0, 2.0));
        let p = stream.psd_unit_trace::<T>(n).scaled(scale);
        let mut m_plus = m.clone();
        m_plus.axpy(T::one(), &p);
        let diff = env.eval(&m_plus)? - env.eval(&m)?;
        let lower = set.lambda * p.trace();
        let upper = set.lambda.recip() * p.trace();
        if diff < lower - tol || diff > upper + tol {
            violations.push(SandwichViolation {
                m,
                p,
                difference: diff,
                lower_bound: lower,
                upper_bound: upper,
            });
        }
    }
    Ok(SandwichReport {
        trials,
        tol,
        violations,
        underresolved: env.minorants.len() < 8,
        seed,
    })
}
