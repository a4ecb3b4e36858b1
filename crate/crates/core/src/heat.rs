//! Heat kernels of the discrete generator with respect to `θ h^d`.
//!
//! Time stepping is Crank–Nicolson with step-doubling error control. The step
//! is capped at `2 / max_x |L(x,x)|`, which keeps the explicit half of every
//! step a nonnegative matrix, so the scheme preserves positivity.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::linalg;
use crate::operator::{DiscreteGenerator, GHOST};
use crate::rng::{self, tags};

/// Largest grid handled by the dense eigendecomposition oracle.
pub const DENSE_LIMIT: usize = 4096;

/// Tolerated undershoot below zero.
pub const NEGATIVITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatOptions {
    /// Local error tolerance per step, relative to `max(1, ‖u‖∞)`.
    pub tol: f64,
    /// Relative residual for each linear solve.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Accepted steps taken without an error check once the step has settled.
    pub lazy_steps: usize,
}

impl Default for HeatOptions {
    fn default() -> Self {
        Self { tol: 1e-8, cg_tol: 1e-13, cg_max_iter: 10_000, lazy_steps: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverStats {
    pub step_cap: f64,
    pub accepted: usize,
    pub rejected: usize,
    pub cg_iterations: usize,
    pub max_cg_residual: f64,
    pub min_value: f64,
}

/// Crank–Nicolson propagator for one generator.
pub struct Evolver<'a> {
    gen: &'a DiscreteGenerator,
    opts: HeatOptions,
    cap: f64,
    stats: SolverStats,
    scratch: Vec<f64>,
}

impl<'a> Evolver<'a> {
    pub fn new(gen: &'a DiscreteGenerator, opts: HeatOptions) -> Self {
        let cap = 2.0 / gen.max_rate();
        Self {
            gen,
            opts,
            cap,
            stats: SolverStats { step_cap: cap, min_value: f64::INFINITY, ..Default::default() },
            scratch: vec![0.0; gen.grid().len()],
        }
    }

    pub fn stats(&self) -> SolverStats {
        self.stats
    }

    pub fn step_cap(&self) -> f64 {
        self.cap
    }

    /// One Crank–Nicolson step: `(Θ - dt/2 A) v = (Θ + dt/2 A) u`.
    pub fn cn_step(&mut self, u: &[f64], dt: f64) -> Result<Vec<f64>> {
        let gen = self.gen;
        let theta = gen.speed();
        let half = 0.5 * dt;
        gen.apply_stiffness(u, &mut self.scratch);
        let scratch = &self.scratch;
        let b = linalg::build(u.len(), |i| theta[i] * u[i] + half * scratch[i]);
        let diag = gen.stiffness_diag();
        let diag_inv = linalg::build(u.len(), |i| 1.0 / (theta[i] - half * diag[i]));
        let mut x = u.to_vec();
        let apply = |v: &[f64], y: &mut [f64]| {
            gen.apply_stiffness(v, y);
            linalg::for_each_indexed(y, |i, yi| *yi = theta[i] * v[i] - half * *yi);
        };
        let out = linalg::pcg(apply, &diag_inv, &b, &mut x, self.opts.cg_tol, self.opts.cg_max_iter)?;
        self.stats.cg_iterations += out.iterations;
        self.stats.max_cg_residual = self.stats.max_cg_residual.max(out.residual);
        Ok(x)
    }

    /// Evolves `u0` from time 0 and returns the states at `times`.
    pub fn evolve(&mut self, u0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_times(times)?;
        self.gen.grid().check_len(u0.len())?;
        let mut u = u0.to_vec();
        let mut t = 0.0;
        let mut dt = self.cap / 64.0;
        let mut lazy = 0usize;
        let mut out = Vec::with_capacity(times.len());
        for &target in times {
            while t < target {
                let remaining = target - t;
                let truncated = dt >= remaining;
                let step = if truncated { remaining } else { dt };
                if lazy > 0 {
                    u = self.cn_step(&u, step)?;
                    lazy -= 1;
                } else {
                    let full = self.cn_step(&u, step)?;
                    let mid = self.cn_step(&u, 0.5 * step)?;
                    let fine = self.cn_step(&mid, 0.5 * step)?;
                    let err = linalg::max_abs_diff(&full, &fine) / 3.0;
                    let scale = self.opts.tol * linalg::norm_inf(&u).max(1.0);
                    let factor = if err > 0.0 { 0.9 * (scale / err).cbrt() } else { 2.0 };
                    if err > scale {
                        self.stats.rejected += 1;
                        dt = step * factor.max(0.2);
                        continue;
                    }
                    u = fine;
                    if !truncated {
                        dt = (step * factor.min(2.0)).min(self.cap);
                    }
                    if step >= self.cap * (1.0 - 1e-12) && err < 0.1 * scale {
                        lazy = self.opts.lazy_steps;
                    }
                }
                t = if truncated { target } else { t + step };
                self.stats.accepted += 1;
                self.check_positive(&u, t)?;
            }
            out.push(u.clone());
        }
        Ok(out)
    }

    fn check_positive(&mut self, u: &[f64], time: f64) -> Result<()> {
        let (cell, value) = u
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |a, (i, &v)| if v < a.1 { (i, v) } else { a });
        self.stats.min_value = self.stats.min_value.min(value);
        if value < -NEGATIVITY_TOL {
            return Err(Error::Positivity { value, cell, time });
        }
        Ok(())
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Config("no output times requested".to_string()));
    }
    let mut prev = 0.0;
    for &t in times {
        if !(t.is_finite() && t > prev) {
            return Err(Error::Config(format!(
                "times must be positive and strictly increasing, got {times:?}"
            )));
        }
        prev = t;
    }
    Ok(())
}

/// `p(t, x0, ·)` at several times, as a density with respect to `θ h^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelColumn {
    pub source: usize,
    pub times: Vec<f64>,
    #[serde(skip)]
    pub values: Vec<Vec<f64>>,
    pub options: HeatOptions,
    pub stats: SolverStats,
}

/// Point mass at `x0` normalised to unit mass with respect to `θ h^d`.
pub fn delta(gen: &DiscreteGenerator, x0: usize) -> Vec<f64> {
    let mut u = vec![0.0; gen.grid().len()];
    u[x0] = 1.0 / (gen.speed()[x0] * gen.grid().cell_volume());
    u
}

pub fn heat_kernel_column(
    gen: &DiscreteGenerator,
    x0: usize,
    times: &[f64],
    opts: HeatOptions,
) -> Result<KernelColumn> {
    if x0 >= gen.grid().len() {
        return Err(Error::Domain(format!("source {x0} outside grid of {} nodes", gen.grid().len())));
    }
    let mut ev = Evolver::new(gen, opts);
    let values = ev.evolve(&delta(gen, x0), times)?;
    Ok(KernelColumn { source: x0, times: times.to_vec(), values, options: opts, stats: ev.stats() })
}

impl KernelColumn {
    pub fn at(&self, t: f64) -> Option<&[f64]> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.max(1.0))
            .map(|k| self.values[k].as_slice())
    }

    /// `Σ_y p θ h^d` at every stored time.
    pub fn masses(&self, gen: &DiscreteGenerator) -> Vec<f64> {
        let w = gen.grid().cell_volume();
        self.values
            .iter()
            .map(|v| linalg::weighted_dot(v, &vec![1.0; v.len()], gen.speed()) * w)
            .collect()
    }

    pub fn l2_norms(&self, gen: &DiscreteGenerator) -> Vec<f64> {
        self.values.iter().map(|v| gen.inner(v, v).sqrt()).collect()
    }

    pub fn min_value(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        io::ensure_dir(dir)?;
        io::write_json(&dir.join("meta.json"), self)?;
        for (k, v) in self.values.iter().enumerate() {
            io::write_f64_array(&dir.join(format!("p_t{k}.f64")), v)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut col: KernelColumn = io::read_json(&dir.join("meta.json"))?;
        col.values = (0..col.times.len())
            .map(|k| io::read_f64_array(&dir.join(format!("p_t{k}.f64"))))
            .collect::<Result<_>>()?;
        Ok(col)
    }
}

/// Maximum deviation of `p(s+t, x0, ·)` from `Σ_u p(s,x0,u) p(t,u,·) θ(u) h^d`.
///
/// The sum over `u` is the semigroup applied to `p(s, x0, ·)`, computed by
/// evolving that column for time `t`. With `s = 0` the delta is evolved.
pub fn chapman_kolmogorov_check(
    gen: &DiscreteGenerator,
    column: &KernelColumn,
    s: f64,
    t: f64,
) -> Result<f64> {
    let target = column
        .at(s + t)
        .ok_or_else(|| Error::Pairing(format!("column has no time {}", s + t)))?;
    let start = if s == 0.0 {
        delta(gen, column.source)
    } else {
        column
            .at(s)
            .ok_or_else(|| Error::Pairing(format!("column has no time {s}")))?
            .to_vec()
    };
    if start.len() != gen.grid().len() {
        return Err(Error::Pairing("column and generator grids differ".to_string()));
    }
    let mut ev = Evolver::new(gen, column.options);
    let evolved = ev.evolve(&start, &[t])?.pop().expect("one time");
    Ok(linalg::max_abs_diff(&evolved, target))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbedReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`.
    pub slack: f64,
    pub h_squared: f64,
    /// The same comparison with the exact discrete growth rate in the exponent.
    pub sharp_slack: f64,
}

/// Compares `‖e^ψ P_t f‖²_θ` with `e^{h(ψ)² t} ‖e^ψ f‖²_θ`.
pub fn perturbed_l2_check(
    gen: &DiscreteGenerator,
    psi: &[f64],
    f: &[f64],
    t: f64,
    opts: HeatOptions,
) -> Result<PerturbedReport> {
    gen.grid().check_len(psi.len())?;
    gen.grid().check_len(f.len())?;
    let max_psi = linalg::norm_inf(psi);
    if !max_psi.is_finite() || 2.0 * max_psi > 700.0 {
        return Err(Error::Rescaling(max_psi));
    }
    let h2 = gen.h_squared(psi)?;
    let rate = gen.perturbation_rate(psi)?;
    let weighted = |u: &[f64]| -> f64 {
        let v: Vec<f64> = u.iter().zip(psi).map(|(a, p)| a * p.exp()).collect();
        gen.inner(&v, &v)
    };
    let mut ev = Evolver::new(gen, opts);
    let ut = ev.evolve(f, &[t])?.pop().expect("one time");
    let lhs = weighted(&ut);
    let base = weighted(f);
    let rhs = (h2 * t).exp() * base;
    Ok(PerturbedReport {
        lhs,
        rhs,
        slack: rhs - lhs,
        h_squared: h2,
        sharp_slack: (rate * t).exp() * base - lhs,
    })
}

/// Dense spectral representation of the semigroup, for small grids.
pub struct DenseSemigroup {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    inv_sqrt_speed: Vec<f64>,
    cell_volume: f64,
}

impl DenseSemigroup {
    pub fn new(gen: &DiscreteGenerator) -> Result<Self> {
        let n = gen.grid().len();
        if n > DENSE_LIMIT {
            return Err(Error::Config(format!("dense oracle limited to {DENSE_LIMIT} nodes, got {n}")));
        }
        let s: Vec<f64> = gen.speed().iter().map(|t| 1.0 / t.sqrt()).collect();
        let mut b = gen.dense_stiffness();
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] *= s[i] * s[j];
            }
        }
        let eig = SymmetricEigen::new(b);
        Ok(Self {
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            inv_sqrt_speed: s,
            cell_volume: gen.grid().cell_volume(),
        })
    }

    /// `p(t, x0, ·)`.
    pub fn column(&self, t: f64, x0: usize) -> Vec<f64> {
        let v = &self.eigenvectors;
        let n = v.nrows();
        let w: Vec<f64> = (0..n).map(|k| (t * self.eigenvalues[k]).exp() * v[(x0, k)]).collect();
        (0..n)
            .map(|y| {
                let s: f64 = (0..n).map(|k| v[(y, k)] * w[k]).sum();
                s * self.inv_sqrt_speed[y] * self.inv_sqrt_speed[x0] / self.cell_volume
            })
            .collect()
    }

    /// `∫_0^∞ p(t, x0, ·) dt`; requires a strictly negative spectrum.
    pub fn green_column(&self, x0: usize) -> Result<Vec<f64>> {
        let top = self.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if top >= 0.0 {
            return Err(Error::Matrix("spectrum touches zero; no Green's function".to_string()));
        }
        let v = &self.eigenvectors;
        let n = v.nrows();
        let w: Vec<f64> = (0..n).map(|k| -v[(x0, k)] / self.eigenvalues[k]).collect();
        Ok((0..n)
            .map(|y| {
                let s: f64 = (0..n).map(|k| v[(y, k)] * w[k]).sum();
                s * self.inv_sqrt_speed[y] * self.inv_sqrt_speed[x0] / self.cell_volume
            })
            .collect())
    }
}

/// Runs `n_paths` independent copies of the jump process from `x0` up to time
/// `t` and returns the number of walkers at each node.
///
/// Walkers are processed in fixed batches, each with its own random stream,
/// so counts are identical for any worker count.
pub fn simulate_walkers(
    gen: &DiscreteGenerator,
    x0: usize,
    t: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<u64>> {
    const BATCH: usize = 4096;
    let n = gen.grid().len();
    if x0 >= n {
        return Err(Error::Domain(format!("source {x0} outside grid")));
    }
    let deg = 2 * gen.grid().dim();
    // Per node: total exit rate and cumulative jump probabilities.
    let mut rate = vec![0.0; n];
    let mut targets = vec![0u32; n * deg];
    let mut cumul = vec![0.0; n * deg];
    for x in 0..n {
        let total: f64 = gen.neighbours(x).map(|(_, c)| c).sum();
        rate[x] = total / gen.speed()[x];
        let mut acc = 0.0;
        for (k, (y, c)) in gen.neighbours(x).enumerate() {
            acc += c / total;
            targets[x * deg + k] = y;
            cumul[x * deg + k] = acc;
        }
        cumul[x * deg + deg - 1] = 1.0;
    }
    let batches = n_paths.div_ceil(BATCH);
    let counts = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, tags::WALKERS, b as u64);
            let mut local = vec![0u64; n];
            let count = BATCH.min(n_paths - b * BATCH);
            for _ in 0..count {
                let mut x = x0;
                let mut clock = 0.0;
                loop {
                    let e: f64 = -(1.0 - r.random::<f64>()).ln();
                    clock += e / rate[x];
                    if clock > t {
                        break;
                    }
                    let u: f64 = r.random();
                    let row = &cumul[x * deg..(x + 1) * deg];
                    let k = row.iter().position(|&c| u < c).unwrap_or(deg - 1);
                    let y = targets[x * deg + k];
                    if y == GHOST {
                        // Killed at the boundary.
                        x = usize::MAX;
                        break;
                    }
                    x = y as usize;
                }
                if x != usize::MAX {
                    local[x] += 1;
                }
            }
            local
        })
        .reduce(
            || vec![0u64; n],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(p, q)| *p += q);
                a
            },
        );
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkerComparison {
    pub tv_distance: f64,
    /// `½ Σ √(π(1-π)/n)`, the expected TV size from sampling noise alone.
    pub multinomial_bound: f64,
    pub ratio: f64,
}

/// Total variation distance between walker frequencies and the kernel masses
/// `p θ h^d`.
pub fn compare_walkers(
    gen: &DiscreteGenerator,
    kernel: &[f64],
    counts: &[u64],
) -> Result<WalkerComparison> {
    gen.grid().check_len(kernel.len())?;
    gen.grid().check_len(counts.len())?;
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::InsufficientSamples("no surviving walkers".to_string()));
    }
    let nf = n as f64;
    let w = gen.grid().cell_volume();
    let (mut tv, mut bound) = (0.0, 0.0);
    for x in 0..counts.len() {
        let pi = (kernel[x] * gen.speed()[x] * w).clamp(0.0, 1.0);
        tv += (counts[x] as f64 / nf - pi).abs();
        bound += (pi * (1.0 - pi) / nf).sqrt();
    }
    let (tv, bound) = (0.5 * tv, 0.5 * bound);
    Ok(WalkerComparison { tv_distance: tv, multinomial_bound: bound, ratio: tv / bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvironmentField;
    use crate::grid::Grid;
    use crate::operator::assemble_generator;

    #[test]
    fn dense_column_conserves_mass() {
        let g = Grid::new(2, 6, 1.0).unwrap();
        let f = EnvironmentField::constant(g, 1.0, 2.0).unwrap();
        let gen = assemble_generator(&f).unwrap();
        let d = DenseSemigroup::new(&gen).unwrap();
        let col = d.column(0.7, 3);
        let mass: f64 = col.iter().map(|p| p * 2.0).sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cn_matches_dense_on_constant_grid() {
        let g = Grid::new(2, 8, 1.0).unwrap();
        let f = EnvironmentField::constant(g, 1.0, 1.0).unwrap();
        let gen = assemble_generator(&f).unwrap();
        let col = heat_kernel_column(&gen, 9, &[0.5, 1.0], HeatOptions::default()).unwrap();
        let d = DenseSemigroup::new(&gen).unwrap();
        for (k, &t) in col.times.iter().enumerate() {
            assert!(linalg::max_abs_diff(&col.values[k], &d.column(t, 9)) < 1e-6);
        }
        for m in col.masses(&gen) {
            assert!((m - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_times() {
        let g = Grid::new(2, 8, 1.0).unwrap();
        let gen = assemble_generator(&EnvironmentField::constant(g, 1.0, 1.0).unwrap()).unwrap();
        assert!(heat_kernel_column(&gen, 0, &[1.0, 0.5], HeatOptions::default()).is_err());
        assert!(heat_kernel_column(&gen, 0, &[], HeatOptions::default()).is_err());
    }
}
