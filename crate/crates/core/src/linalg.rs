//! Deterministic reductions and a preconditioned conjugate-gradient solver.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Chunk length for parallel reductions. Partial sums are combined in a fixed
/// order, so results do not depend on the number of worker threads.
const CHUNK: usize = 4096;

/// Below this length element-wise loops run on the calling thread; handing
/// tiny vectors to the pool costs more than the work.
pub const PAR_MIN: usize = 1 << 14;

/// `f(i, &mut y[i])` for every index, in parallel for long vectors.
pub fn for_each_indexed<F>(y: &mut [f64], f: F)
where
    F: Fn(usize, &mut f64) + Sync + Send,
{
    if y.len() < PAR_MIN {
        y.iter_mut().enumerate().for_each(|(i, v)| f(i, v));
    } else {
        y.par_iter_mut().enumerate().for_each(|(i, v)| f(i, v));
    }
}

/// `(f(i))_i` for `i < n`, in parallel for long vectors.
pub fn build<F>(n: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    if n < PAR_MIN {
        (0..n).map(f).collect()
    } else {
        (0..n).into_par_iter().map(f).collect()
    }
}

fn max_by<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    if n < PAR_MIN {
        (0..n).map(f).fold(0.0, f64::max)
    } else {
        (0..n).into_par_iter().map(f).reduce(|| 0.0, f64::max)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= CHUNK {
        return a.iter().zip(b).map(|(p, q)| p * q).sum();
    }
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
        .collect();
    partial.iter().sum()
}

pub fn weighted_dot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    if a.len() <= CHUNK {
        return a.iter().zip(b).zip(w).map(|((p, q), r)| p * q * r).sum();
    }
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .zip(w.par_chunks(CHUNK))
        .map(|((x, y), z)| x.iter().zip(y).zip(z).map(|((p, q), r)| p * q * r).sum())
        .collect();
    partial.iter().sum()
}

pub fn sum(a: &[f64]) -> f64 {
    if a.len() <= CHUNK {
        return a.iter().sum();
    }
    let partial: Vec<f64> = a.par_chunks(CHUNK).map(|x| x.iter().sum()).collect();
    partial.iter().sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    max_by(a.len(), |i| a[i].abs())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    max_by(a.len(), |i| (a[i] - b[i]).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Final residual norm relative to the right-hand side.
    pub residual: f64,
}

/// Jacobi-preconditioned CG for a symmetric positive definite operator.
///
/// `apply(x, y)` writes `M x` into `y`; `diag_inv` holds `1 / M_ii`.
/// `x` carries the initial guess in and the solution out.
pub fn pcg<F>(
    apply: F,
    diag_inv: &[f64],
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgOutcome>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome { iterations: 0, residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for_each_indexed(&mut r, |i, ri| *ri = b[i] - *ri);
    let mut z = build(n, |i| r[i] * diag_inv[i]);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / bnorm;
    let mut it = 0;
    while res > rel_tol {
        if it >= max_iter {
            return Err(Error::Solver { iterations: it, residual: res });
        }
        apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::Solver { iterations: it, residual: res });
        }
        let alpha = rz / pq;
        for_each_indexed(x, |i, xi| *xi += alpha * p[i]);
        for_each_indexed(&mut r, |i, ri| *ri -= alpha * q[i]);
        for_each_indexed(&mut z, |i, zi| *zi = r[i] * diag_inv[i]);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for_each_indexed(&mut p, |i, pi| *pi = z[i] + beta * *pi);
        res = dot(&r, &r).sqrt() / bnorm;
        it += 1;
    }
    Ok(CgOutcome { iterations: it, residual: res })
}

/// Standard normal CDF and its upper tail, each accurate in its own tail.
pub fn normal_cdf_pair(g: f64) -> (f64, f64) {
    let upper = 0.5 * statrs::function::erf::erfc(g / std::f64::consts::SQRT_2);
    let lower = 0.5 * statrs::function::erf::erfc(-g / std::f64::consts::SQRT_2);
    (lower, upper)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cg_solves_tridiagonal() {
        let n = 50;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let mut v = 3.0 * x[i];
                if i > 0 {
                    v -= x[i - 1];
                }
                if i + 1 < n {
                    v -= x[i + 1];
                }
                y[i] = v;
            }
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let out = pcg(apply, &vec![1.0 / 3.0; n], &b, &mut x, 1e-13, 500).unwrap();
        assert!(out.residual <= 1e-13);
        let mut y = vec![0.0; n];
        apply(&x, &mut y);
        assert!(max_abs_diff(&y, &b) < 1e-11);
    }

    #[test]
    fn reductions_are_thread_independent() {
        let a: Vec<f64> = (0..100_000).map(|i| ((i * 7919) % 1000) as f64 * 1e-3).collect();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| dot(&a, &a));
        assert_eq!(single.to_bits(), dot(&a, &a).to_bits());
    }

    #[test]
    fn normal_tails() {
        let (lo, up) = normal_cdf_pair(0.0);
        assert!((lo - 0.5).abs() < 1e-15 && (up - 0.5).abs() < 1e-15);
        let (_, up) = normal_cdf_pair(8.0);
        assert!((up - 6.220960574271785e-16).abs() < 1e-25);
    }
}
