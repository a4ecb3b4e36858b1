//! Green's functions in three dimensions, the Gaussian reference kernel, the
//! effective covariance and the Green scaling-limit experiment.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::env::{generate_environment, EnvironmentSpec, SpeedMode};
use crate::error::{Error, Result};
use crate::grid::{Grid, Point};
use crate::heat::{heat_kernel_column, HeatOptions, KernelColumn};
use crate::io;
use crate::linalg;
use crate::operator::{Boundary, DiscreteGenerator, GeneratorOptions};
use crate::rng;

/// Relative residual the Green solve must reach.
pub const GREEN_RESIDUAL: f64 = 1e-9;

/// Symmetric positive definite `d × d` matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariance {
    pub dim: usize,
    pub entries: Vec<f64>,
}

impl Covariance {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::Matrix(format!("expected {} entries, got {}", dim * dim, entries.len())));
        }
        let c = Self { dim, entries };
        c.cholesky()?;
        Ok(c)
    }

    pub fn scalar(dim: usize, value: f64) -> Result<Self> {
        let mut e = vec![0.0; dim * dim];
        for i in 0..dim {
            e[i * dim + i] = value;
        }
        Self::new(dim, e)
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    fn cholesky(&self) -> Result<Cholesky<f64, Dyn>> {
        let m = self.matrix();
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-12 * m.amax().max(1.0) {
            return Err(Error::Matrix("covariance is not symmetric".to_string()));
        }
        Cholesky::new(m).ok_or_else(|| Error::Matrix("covariance is not positive definite".to_string()))
    }

    /// `det Σ` and the quadratic form `v · Σ⁻¹ v`.
    fn det_and_form(&self, v: &[f64]) -> Result<(f64, f64)> {
        let ch = self.cholesky()?;
        let l = ch.l();
        let det = l.diagonal().iter().map(|x| x * x).product();
        let w = ch.solve(&DVector::from_column_slice(v));
        let q = v.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
        Ok((det, q))
    }
}

fn difference(x: &[f64], y: &[f64], dim: usize) -> Result<Vec<f64>> {
    if x.len() < dim || y.len() < dim {
        return Err(Error::Dimension { expected: dim, got: x.len().min(y.len()) });
    }
    Ok((0..dim).map(|i| y[i] - x[i]).collect())
}

/// `k_t^Σ(x, y) = (2πt)^{-d/2} (det Σ)^{-1/2} exp(-(y-x)·Σ⁻¹(y-x)/(2t))`.
pub fn gaussian_kernel(t: f64, x: &[f64], y: &[f64], sigma: &Covariance) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    let d = sigma.dim;
    let v = difference(x, y, d)?;
    let (det, q) = sigma.det_and_form(&v)?;
    Ok((2.0 * std::f64::consts::PI * t).powf(-(d as f64) / 2.0) / det.sqrt() * (-q / (2.0 * t)).exp())
}

/// `∫_0^∞ k_t^Σ(x, y) dt = Γ(d/2 - 1) / (2 π^{d/2} √det Σ · Q^{(d-2)/2})` with
/// `Q = (y-x)·Σ⁻¹(y-x)`.
pub fn g_bm(x: &[f64], y: &[f64], sigma: &Covariance) -> Result<f64> {
    let d = sigma.dim;
    if d < 3 {
        return Err(Error::Dimension { expected: 3, got: d });
    }
    let v = difference(x, y, d)?;
    let (det, q) = sigma.det_and_form(&v)?;
    if q == 0.0 {
        return Err(Error::Domain("Green's function is singular on the diagonal".to_string()));
    }
    let df = d as f64;
    Ok(gamma(df / 2.0 - 1.0) / (2.0 * std::f64::consts::PI.powf(df / 2.0) * det.sqrt() * q.powf((df - 2.0) / 2.0)))
}

/// Exterior data for the Dirichlet box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FarField {
    /// Zero outside the box.
    Zero,
    /// `scale · g_BM` of the given covariance, centred at the source.
    Newtonian { scale: f64, sigma: Covariance },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenField {
    pub source: usize,
    pub grid: Grid,
    pub far_field: FarField,
    /// Relative residual of the linear solve.
    pub residual: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub values: Vec<f64>,
}

impl GreenField {
    pub fn save(&self, dir: &Path) -> Result<()> {
        io::ensure_dir(dir)?;
        io::write_json(&dir.join("meta.json"), self)?;
        io::write_f64_array(&dir.join("g.f64"), &self.values)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut g: GreenField = io::read_json(&dir.join("meta.json"))?;
        g.values = io::read_f64_array(&dir.join("g.f64"))?;
        g.grid.check_len(g.values.len())?;
        Ok(g)
    }

    /// Trilinear interpolation at a point inside the box.
    pub fn interpolate(&self, p: &Point) -> Result<f64> {
        let g = &self.grid;
        let h = g.h();
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..g.dim() {
            let s = p[a] / h;
            let i = s.floor();
            if i < 0.0 || i + 1.0 > (g.n() - 1) as f64 {
                return Err(Error::Geometry(format!("point {p:?} lies outside the interpolation range")));
            }
            base[a] = i as usize;
            frac[a] = s - i;
        }
        let mut v = 0.0;
        for corner in 0..(1usize << g.dim()) {
            let mut w = 1.0;
            let mut c = base;
            for a in 0..g.dim() {
                if corner >> a & 1 == 1 {
                    c[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w != 0.0 {
                v += w * self.values[g.index(c)];
            }
        }
        Ok(v)
    }
}

/// Solves `-L g = δ_{x0} / (θ h^d)` in a Dirichlet box. The speed measure
/// cancels, so the system is `-A g = e_{x0} / h^d` plus exterior data.
pub fn green_function(gen: &DiscreteGenerator, x0: usize, far: &FarField) -> Result<GreenField> {
    let g = *gen.grid();
    if g.dim() != 3 {
        return Err(Error::Dimension { expected: 3, got: g.dim() });
    }
    if gen.options().boundary != Boundary::Dirichlet {
        return Err(Error::Mode("the Green solve needs a Dirichlet box".to_string()));
    }
    if x0 >= g.len() {
        return Err(Error::Domain(format!("source {x0} outside grid of {} nodes", g.len())));
    }
    let origin = g.position(x0);
    let mut rhs = match far {
        FarField::Zero => vec![0.0; g.len()],
        FarField::Newtonian { scale, sigma } => {
            if sigma.dim != 3 {
                return Err(Error::Dimension { expected: 3, got: sigma.dim });
            }
            sigma.cholesky()?;
            gen.boundary_source(|p| scale * g_bm(&origin, p, sigma).unwrap_or(0.0))
        }
    };
    rhs[x0] += 1.0 / g.cell_volume();
    let diag_inv: Vec<f64> = gen.stiffness_diag().iter().map(|d| -1.0 / d).collect();
    let apply = |v: &[f64], y: &mut [f64]| {
        gen.apply_stiffness(v, y);
        y.par_iter_mut().for_each(|x| *x = -*x);
    };
    let mut values = vec![0.0; g.len()];
    let out = linalg::pcg(apply, &diag_inv, &rhs, &mut values, 0.1 * GREEN_RESIDUAL, 20 * g.len())?;
    // Independent residual check.
    let mut r = vec![0.0; g.len()];
    gen.apply_stiffness(&values, &mut r);
    r.iter_mut().zip(&rhs).for_each(|(a, b)| *a = -*a - b);
    let residual = linalg::dot(&r, &r).sqrt() / linalg::dot(&rhs, &rhs).sqrt();
    if residual > GREEN_RESIDUAL {
        return Err(Error::Solver { iterations: out.iterations, residual });
    }
    Ok(GreenField { source: x0, grid: g, far_field: far.clone(), residual, iterations: out.iterations, values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    pub times: Vec<f64>,
    /// `Σ̂(t) = M(t)/t` with `M` the second-moment matrix of the kernel.
    pub per_time: Vec<Covariance>,
    /// `Σ̂` at the largest time.
    pub sigma: Covariance,
    /// Increment estimate `(M(t₂) - M(t₁)) / (t₂ - t₁)` over the last two times.
    pub increment: Covariance,
    /// Relative change of `tr Σ̂` between the last two times.
    pub trend: f64,
    /// Half the box side over the largest kernel spread `√(t max_i Σ̂_ii)`.
    pub wrap_margin: f64,
    pub stable: bool,
}

/// Second-moment matrix `Σ_y (y-x)(y-x)ᵀ p θ h^d`, averaged over columns.
fn second_moments(gen: &DiscreteGenerator, columns: &[KernelColumn], k: usize) -> Vec<f64> {
    let g = gen.grid();
    let d = g.dim();
    let mut acc = vec![0.0; d * d];
    for c in columns {
        let p = &c.values[k];
        let part: Vec<f64> = (0..g.len())
            .into_par_iter()
            .fold(
                || vec![0.0; d * d],
                |mut m, y| {
                    let v = g.displacement(c.source, y);
                    let w = p[y] * gen.speed()[y] * g.cell_volume();
                    for i in 0..d {
                        for j in 0..d {
                            m[i * d + j] += v[i] * v[j] * w;
                        }
                    }
                    m
                },
            )
            .reduce(
                || vec![0.0; d * d],
                |mut a, b| {
                    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        acc.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
    }
    acc.iter().map(|a| a / columns.len() as f64).collect()
}

/// Relative trend above which the covariance estimate is flagged unstable.
pub const SIGMA_STABILITY: f64 = 0.05;

/// Smallest ratio of half the box to the kernel spread for which periodic
/// images do not bias the second moments.
pub const WRAP_MARGIN: f64 = 4.0;

pub fn sigma_estimate(gen: &DiscreteGenerator, columns: &[KernelColumn]) -> Result<SigmaEstimate> {
    let first = columns.first().ok_or_else(|| Error::InsufficientSamples("no kernel columns".to_string()))?;
    let times = first.times.clone();
    if times.len() < 2 || columns.iter().any(|c| c.times != times) {
        return Err(Error::InsufficientSamples("need at least two shared times".to_string()));
    }
    let d = gen.grid().dim();
    let moments: Vec<Vec<f64>> = (0..times.len()).map(|k| second_moments(gen, columns, k)).collect();
    let symmetrise = |m: Vec<f64>| -> Vec<f64> {
        let mut s = m.clone();
        for i in 0..d {
            for j in 0..d {
                s[i * d + j] = 0.5 * (m[i * d + j] + m[j * d + i]);
            }
        }
        s
    };
    let per_time = times
        .iter()
        .zip(&moments)
        .map(|(t, m)| Covariance::new(d, symmetrise(m.iter().map(|v| v / t).collect())))
        .collect::<Result<Vec<_>>>()?;
    let n = times.len();
    let increment: Vec<f64> = moments[n - 1]
        .iter()
        .zip(&moments[n - 2])
        .map(|(x, y)| (x - y) / (times[n - 1] - times[n - 2]))
        .collect();
    let trace = |c: &Covariance| (0..d).map(|i| c.get(i, i)).sum::<f64>();
    let sigma = per_time[n - 1].clone();
    let trend = (trace(&sigma) - trace(&per_time[n - 2])) / trace(&sigma);
    let spread = (times[n - 1] * (0..d).map(|i| sigma.get(i, i)).fold(0.0, f64::max)).sqrt();
    let wrap_margin = gen.grid().side() / 2.0 / spread;
    Ok(SigmaEstimate {
        times,
        per_time,
        increment: Covariance::new(d, symmetrise(increment))?,
        stable: trend.abs() <= SIGMA_STABILITY && wrap_margin >= WRAP_MARGIN,
        sigma,
        trend,
        wrap_margin,
    })
}

/// `count` quasi-uniform points in the shell `r1 ≤ |x| ≤ r2`: Fibonacci
/// directions with radii from a golden-ratio sequence.
pub fn annulus_points(count: usize, r1: f64, r2: f64) -> Vec<Point> {
    let golden = 0.5 * (1.0 + 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let phi = 2.0 * std::f64::consts::PI * i as f64 / golden;
            let s = (1.0 - z * z).sqrt();
            let r = r1 + (r2 - r1) * ((i as f64 * golden).fract());
            [r * s * phi.cos(), r * s * phi.sin(), r * z]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub r1: f64,
    pub r2: f64,
    pub scales: Vec<f64>,
    pub samples: usize,
    /// Known covariance; estimated from auxiliary torus runs when absent.
    pub sigma: Option<Covariance>,
    /// Cells per side of the auxiliary torus.
    pub sigma_cells: usize,
    pub sigma_times: Vec<f64>,
    pub sigma_sources: usize,
    /// Prefactor used for the negative control.
    pub wrong_a: Option<f64>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            r1: 0.375,
            r2: 0.75,
            scales: vec![4.0, 8.0, 16.0],
            samples: 64,
            sigma: None,
            sigma_cells: 40,
            sigma_times: vec![4.0, 8.0, 10.0],
            sigma_sources: 4,
            wrong_a: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub a: f64,
    pub sigma: Covariance,
    pub sigma_trend: Option<f64>,
    pub scales: Vec<f64>,
    pub errors: Vec<f64>,
    pub wrong_a_errors: Option<Vec<f64>>,
    pub residual: f64,
    pub decreasing: bool,
    /// Whether the error at the largest scale is below half the smallest.
    pub halved: bool,
    /// Whether the negative control fails to halve.
    pub control_plateaus: Option<bool>,
    pub pass: bool,
}

fn sup_error(green: &GreenField, x0: &Point, pts: &[Point], n: f64, a: f64, sigma: &Covariance) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in pts {
        let p = [x0[0] + n * x[0], x0[1] + n * x[1], x0[2] + n * x[2]];
        let v = n * green.interpolate(&p)?;
        let reference = a * g_bm(&[0.0; 3], x, sigma)?;
        worst = worst.max((v - reference).abs());
    }
    Ok(worst)
}

/// Local error tolerance of the auxiliary kernel runs; second moments need
/// far less accuracy than pointwise kernel values.
pub const SIGMA_HEAT_TOL: f64 = 1e-6;

/// Estimates `Σ` for the speed-`Λ` process from kernels on an auxiliary
/// torus drawn from the same law.
pub fn auxiliary_sigma(spec: &EnvironmentSpec, cfg: &ScalingConfig) -> Result<SigmaEstimate> {
    let mut aux = spec.clone();
    aux.cells = cfg.sigma_cells;
    aux.side = cfg.sigma_cells as f64 * spec.spacing();
    aux.seed = rng::mix(spec.seed, rng::tags::SIGMA, 0);
    let field = generate_environment(&aux)?;
    let gen = DiscreteGenerator::new(&field, GeneratorOptions::default())?;
    let g = *gen.grid();
    let columns = (0..cfg.sigma_sources)
        .map(|i| {
            let c = g.n() / 4 + (i * g.n()) / (2 * cfg.sigma_sources.max(1));
            let x0 = g.index([c, (c * 3) % g.n(), (c * 5) % g.n()]);
            heat_kernel_column(&gen, x0, &cfg.sigma_times, HeatOptions { tol: SIGMA_HEAT_TOL, ..HeatOptions::default() })
        })
        .collect::<Result<Vec<_>>>()?;
    sigma_estimate(&gen, &columns)
}

/// Errors `e_n = sup_x |n^{d-2} g(x0, x0 + n x) - a g_BM(0, x)|` over an
/// annulus, with `a = 1 / mean Λ`.
pub fn scaling_limit_experiment(spec: &EnvironmentSpec, cfg: &ScalingConfig) -> Result<ScalingReport> {
    if spec.dim != 3 {
        return Err(Error::Dimension { expected: 3, got: spec.dim });
    }
    if spec.speed != SpeedMode::Lambda {
        return Err(Error::Mode("the scaling experiment needs speed Λ".to_string()));
    }
    if !(cfg.r1 > 0.0 && cfg.r1 < cfg.r2) || cfg.scales.is_empty() || cfg.samples == 0 {
        return Err(Error::Config("need 0 < r1 < r2, scales and samples".to_string()));
    }
    let field = generate_environment(spec)?;
    let grid = *field.grid();
    let n_max = cfg.scales.iter().cloned().fold(0.0, f64::max);
    if n_max * cfg.r2 > grid.side() / 8.0 * (1.0 + 1e-12) {
        return Err(Error::Geometry(format!(
            "annulus radius {} exceeds L/8 = {}",
            n_max * cfg.r2,
            grid.side() / 8.0
        )));
    }
    let a = grid.len() as f64 / field.max_eig().iter().sum::<f64>();
    let (sigma, sigma_trend) = match &cfg.sigma {
        Some(s) => (s.clone(), None),
        None => {
            let est = auxiliary_sigma(spec, cfg)?;
            (est.sigma, Some(est.trend))
        }
    };
    let gen = DiscreteGenerator::new(
        &field,
        GeneratorOptions { boundary: Boundary::Dirichlet, ..GeneratorOptions::default() },
    )?;
    let c = grid.n() / 2;
    let x0 = grid.index([c, c, c]);
    let green = green_function(&gen, x0, &FarField::Newtonian { scale: a, sigma: sigma.clone() })?;
    let origin = grid.position(x0);
    let pts = annulus_points(cfg.samples, cfg.r1, cfg.r2);
    let errors = cfg
        .scales
        .iter()
        .map(|&n| sup_error(&green, &origin, &pts, n, a, &sigma))
        .collect::<Result<Vec<_>>>()?;
    let wrong_a_errors = match cfg.wrong_a {
        Some(w) => Some(
            cfg.scales
                .iter()
                .map(|&n| sup_error(&green, &origin, &pts, n, w, &sigma))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let halved = errors.last().expect("nonempty") < &(0.5 * errors[0]);
    let control_plateaus = wrong_a_errors
        .as_ref()
        .map(|e| *e.last().expect("nonempty") >= 0.5 * e[0]);
    Ok(ScalingReport {
        a,
        sigma,
        sigma_trend,
        scales: cfg.scales.clone(),
        errors,
        wrong_a_errors,
        residual: green.residual,
        decreasing,
        halved,
        control_plateaus,
        pass: decreasing && halved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_examples() {
        let id = Covariance::scalar(2, 1.0).unwrap();
        let v = gaussian_kernel(1.0, &[0.0, 0.0], &[0.0, 0.0], &id).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        let four = Covariance::scalar(2, 4.0).unwrap();
        let v = gaussian_kernel(1.0, &[0.0, 0.0], &[0.0, 0.0], &four).unwrap();
        assert!((v - 1.0 / (8.0 * std::f64::consts::PI)).abs() < 1e-15);
        assert!(Covariance::new(2, vec![1.0, 2.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn newtonian_potential() {
        let s = Covariance::scalar(3, 2.0).unwrap();
        let g = g_bm(&[0.0; 3], &[0.0, 3.0, 4.0], &s).unwrap();
        assert!((g - 1.0 / (20.0 * std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn annulus_radii() {
        for p in annulus_points(64, 0.375, 0.75) {
            let r = crate::grid::norm(&p);
            assert!((0.375 - 1e-12..=0.75 + 1e-12).contains(&r));
        }
    }
}
