//! Deterministic sampling.
//!
//! Set samples (matrices drawn from a domain descriptor) are driven by a
//! Halton sequence with a seeded Cranley-Patterson rotation, so certificates
//! are reproducible and roughly low-discrepancy. Direction samples and
//! perturbations come from a seeded ChaCha stream. All randomness in a run
//! flows from one `u64` seed.

use crate::scalar::Real;
use crate::sym::{Dense, SymMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Seeded sample stream: a rotated Halton sequence plus a ChaCha generator.
pub struct SampleStream {
    rng: ChaCha8Rng,
    shifts: Vec<f64>,
    index: u64,
}

impl SampleStream {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shifts = (0..PRIMES.len()).map(|_| rng.gen::<f64>()).collect();
        Self {
            rng,
            shifts,
            index: 1,
        }
    }

    /// Next rotated Halton point in `[0,1)^d` (`d <= 16`).
    pub fn quasi_point(&mut self, d: usize) -> Vec<f64> {
        assert!(d <= PRIMES.len(), "too many quasi-random dimensions");
        let i = self.index;
        self.index += 1;
        (0..d)
            .map(|k| {
                let v = radical_inverse(i, PRIMES[k]) + self.shifts[k];
                v - v.floor()
            })
            .collect()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen::<f64>() * (hi - lo) + lo
    }

    pub fn uniform_usize(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// Random orthogonal matrix as a product of Givens rotations with
    /// pseudo-random angles.
    pub fn orthogonal<T: Real>(&mut self, n: usize) -> Dense<T> {
        let mut q = Dense::identity(n);
        for i in 0..n {
            for j in (i + 1)..n {
                let theta = self.uniform(0.0, std::f64::consts::TAU);
                let (c, s) = (T::of(theta.cos()), T::of(theta.sin()));
                // q <- G(i,j,theta) * q
                for k in 0..n {
                    let a = q.get(i, k);
                    let b = q.get(j, k);
                    q.set(i, k, c * a - s * b);
                    q.set(j, k, s * a + c * b);
                }
            }
        }
        q
    }

    /// Symmetric matrix with the given eigenvalues in a pseudo-random frame.
    pub fn rotated_from_eigs<T: Real>(&mut self, eigs: &[T]) -> SymMatrix<T> {
        let n = eigs.len();
        let q = self.orthogonal::<T>(n);
        // Q^T diag(e) Q
        SymMatrix::from_fn(n, |i, j| {
            let mut s = T::zero();
            for k in 0..n {
                s += q.get(k, i) * eigs[k] * q.get(k, j);
            }
            s
        })
    }

    /// Quasi-random symmetric matrix with eigenvalues in `[lo, hi]`.
    pub fn sym_in_eig_box<T: Real>(&mut self, n: usize, lo: T, hi: T) -> SymMatrix<T> {
        let nrot = n * (n - 1) / 2;
        let u = self.quasi_point(n + nrot);
        let eigs: Vec<T> = (0..n)
            .map(|k| lo + (hi - lo) * T::of(u[k]))
            .collect();
        let mut q = Dense::identity(n);
        let mut dim = n;
        for i in 0..n {
            for j in (i + 1)..n {
                let theta = u[dim] * std::f64::consts::TAU;
                dim += 1;
                let (c, s) = (T::of(theta.cos()), T::of(theta.sin()));
                for k in 0..n {
                    let a = q.get(i, k);
                    let b = q.get(j, k);
                    q.set(i, k, c * a - s * b);
                    q.set(j, k, s * a + c * b);
                }
            }
        }
        SymMatrix::from_fn(n, |i, j| {
            let mut s = T::zero();
            for k in 0..n {
                s += q.get(k, i) * eigs[k] * q.get(k, j);
            }
            s
        })
    }

    /// Random positive semidefinite direction with unit trace. A quarter of
    /// the draws are rank one to exercise the degenerate edge of the cone.
    pub fn psd_unit_trace<T: Real>(&mut self, n: usize) -> SymMatrix<T> {
        let rank_one = self.rng.gen::<f64>() < 0.25;
        let mut w: Vec<T> = if rank_one {
            let mut v = vec![T::zero(); n];
            v[self.uniform_usize(n)] = T::one();
            v
        } else {
            (0..n).map(|_| T::of(self.uniform(0.0, 1.0))).collect()
        };
        let total: T = w.iter().fold(T::zero(), |s, &x| s + x);
        if total <= T::of(1e-12) {
            w[0] = T::one();
        }
        let total: T = w.iter().fold(T::zero(), |s, &x| s + x);
        for x in &mut w {
            *x = *x / total;
        }
        self.rotated_from_eigs(&w)
    }

    /// Symmetric matrix with independent uniform entries in `[-amp, amp]`.
    pub fn sym_uniform<T: Real>(&mut self, n: usize, amp: T) -> SymMatrix<T> {
        let mut m = SymMatrix::zero(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, amp * T::of(self.uniform(-1.0, 1.0)));
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_is_deterministic() {
        let mut a = SampleStream::new(42);
        let mut b = SampleStream::new(42);
        for _ in 0..10 {
            assert_eq!(a.quasi_point(5), b.quasi_point(5));
            assert_eq!(a.uniform(0.0, 1.0), b.uniform(0.0, 1.0));
        }
    }

    #[test]
    fn orthogonal_matrices_are_orthogonal() {
        let mut s = SampleStream::new(7);
        let q: Dense<f64> = s.orthogonal(4);
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = (0..4).map(|k| q.get(i, k) * q.get(j, k)).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eig_box_sample_respects_bounds() {
        let mut s = SampleStream::new(3);
        for _ in 0..20 {
            let m: SymMatrix<f64> = s.sym_in_eig_box(3, 0.1, 2.0);
            let e = m.eigenvalues();
            assert!(e[0] >= 0.1 - 1e-9 && e[2] <= 2.0 + 1e-9);
        }
    }

    #[test]
    fn psd_direction_has_unit_trace() {
        let mut s = SampleStream::new(5);
        for _ in 0..20 {
            let p: SymMatrix<f64> = s.psd_unit_trace(3);
            assert!((p.trace() - 1.0).abs() < 1e-12);
            assert!(p.min_eigenvalue() >= -1e-12);
        }
    }
}
