//! Finite-volume assembly of the divergence-form generator.
//!
//! The stiffness matrix `A` has entries `A(x, y) = c(x, y)` for grid
//! neighbours and `A(x, x) = -Σ_y c(x, y)`, with edge conductance
//! `c = mean(a_e(x), a_e(y)) / h²`. The generator is `L = Θ⁻¹ A`, which is
//! self-adjoint in `ℓ²(θ h^d)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::EnvironmentField;
use crate::error::{Error, Result};
use crate::grid::{Grid, Point};
use crate::linalg;

/// Marks a neighbour slot that leaves a Dirichlet box.
pub const GHOST: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Periodic,
    /// Zero exterior values one spacing beyond the outermost nodes.
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMean {
    #[default]
    Harmonic,
    Arithmetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GeneratorOptions {
    pub boundary: Boundary,
    pub mean: EdgeMean,
}

#[derive(Debug, Clone)]
pub struct DiscreteGenerator {
    grid: Grid,
    options: GeneratorOptions,
    coeff: Arc<Vec<Vec<f64>>>,
    speed: Arc<Vec<f64>>,
    fwd: Vec<Vec<u32>>,
    bwd: Vec<Vec<u32>>,
    cf: Vec<Vec<f64>>,
    cb: Vec<Vec<f64>>,
    diag: Vec<f64>,
}

/// Periodic generator with harmonic-mean conductances.
pub fn assemble_generator(field: &EnvironmentField) -> Result<DiscreteGenerator> {
    DiscreteGenerator::new(field, GeneratorOptions::default())
}

impl DiscreteGenerator {
    pub fn new(field: &EnvironmentField, options: GeneratorOptions) -> Result<Self> {
        let grid = *field.grid();
        let coeff: Vec<Vec<f64>> = (0..grid.dim()).map(|i| field.diag(i).to_vec()).collect();
        Self::from_coefficients(grid, coeff, field.speed().to_vec(), options)
    }

    /// Assembles from raw coefficient arrays, rejecting any zero or
    /// non-finite conductance.
    pub fn from_coefficients(
        grid: Grid,
        coeff: Vec<Vec<f64>>,
        speed: Vec<f64>,
        options: GeneratorOptions,
    ) -> Result<Self> {
        let dim = grid.dim();
        if coeff.len() != dim {
            return Err(Error::Dimension { expected: dim, got: coeff.len() });
        }
        for a in &coeff {
            grid.check_len(a.len())?;
        }
        grid.check_len(speed.len())?;
        if let Some(x) = speed.iter().position(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Assembly {
                cell: grid.coords(x)[..dim].to_vec(),
                reason: format!("speed measure {} is not positive and finite", speed[x]),
            });
        }
        let n = grid.len();
        let h2 = grid.h() * grid.h();
        let side = grid.n();
        let mut fwd = Vec::with_capacity(dim);
        let mut bwd = Vec::with_capacity(dim);
        let mut cf = Vec::with_capacity(dim);
        let mut cb = Vec::with_capacity(dim);
        for axis in 0..dim {
            let a = &coeff[axis];
            let stride = grid.stride(axis);
            let nb = |x: usize, step: i64| -> u32 {
                let c = (x / stride) % side;
                match options.boundary {
                    Boundary::Dirichlet if (step > 0 && c + 1 == side) || (step < 0 && c == 0) => {
                        GHOST
                    }
                    _ => grid.shift(x, axis, step) as u32,
                }
            };
            let f: Vec<u32> = (0..n).into_par_iter().map(|x| nb(x, 1)).collect();
            let b: Vec<u32> = (0..n).into_par_iter().map(|x| nb(x, -1)).collect();
            let edge = |x: usize, y: u32| -> f64 {
                if y == GHOST {
                    return a[x] / h2;
                }
                let (p, q) = (a[x], a[y as usize]);
                match options.mean {
                    EdgeMean::Harmonic => 2.0 * p * q / (p + q) / h2,
                    EdgeMean::Arithmetic => 0.5 * (p + q) / h2,
                }
            };
            let c_f: Vec<f64> = (0..n).into_par_iter().map(|x| edge(x, f[x])).collect();
            // Backward conductances are copied from the forward ones so that
            // the matrix is symmetric bit for bit.
            let c_b: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|x| if b[x] == GHOST { a[x] / h2 } else { c_f[b[x] as usize] })
                .collect();
            for (x, c) in c_f.iter().chain(c_b.iter()).enumerate() {
                if !(c.is_finite() && *c > 0.0) {
                    let cell = x % n;
                    return Err(Error::Assembly {
                        cell: grid.coords(cell)[..dim].to_vec(),
                        reason: format!("conductance along axis {axis} is {c}"),
                    });
                }
            }
            fwd.push(f);
            bwd.push(b);
            cf.push(c_f);
            cb.push(c_b);
        }
        let diag = (0..n)
            .into_par_iter()
            .map(|x| {
                let mut s = 0.0;
                for axis in 0..dim {
                    s += cf[axis][x];
                    s += cb[axis][x];
                }
                -s
            })
            .collect();
        Ok(Self {
            grid,
            options,
            coeff: Arc::new(coeff),
            speed: Arc::new(speed),
            fwd,
            bwd,
            cf,
            cb,
            diag,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn options(&self) -> GeneratorOptions {
        self.options
    }

    pub fn speed(&self) -> &[f64] {
        &self.speed
    }

    pub fn coefficient(&self, axis: usize) -> &[f64] {
        &self.coeff[axis]
    }

    /// Diagonal of the stiffness matrix (non-positive).
    pub fn stiffness_diag(&self) -> &[f64] {
        &self.diag
    }

    /// Neighbours and conductances of node `x`; ghost slots carry `GHOST`.
    pub fn neighbours(&self, x: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        (0..self.grid.dim()).flat_map(move |axis| {
            [(self.fwd[axis][x], self.cf[axis][x]), (self.bwd[axis][x], self.cb[axis][x])]
        })
    }

    /// Largest diagonal rate `max_x |A(x,x)| / θ(x)` of the generator.
    pub fn max_rate(&self) -> f64 {
        self.diag
            .par_iter()
            .zip(self.speed.par_iter())
            .map(|(d, t)| -d / t)
            .reduce(|| 0.0, f64::max)
    }

    /// `y = A u` with zero exterior values.
    pub fn apply_stiffness(&self, u: &[f64], y: &mut [f64]) {
        let dim = self.grid.dim();
        linalg::for_each_indexed(y, |x, yx| {
            let ux = u[x];
            let mut s = 0.0;
            for axis in 0..dim {
                let f = self.fwd[axis][x];
                let b = self.bwd[axis][x];
                let uf = if f == GHOST { 0.0 } else { u[f as usize] };
                let ub = if b == GHOST { 0.0 } else { u[b as usize] };
                s += self.cf[axis][x] * (uf - ux);
                s += self.cb[axis][x] * (ub - ux);
            }
            *yx = s;
        });
    }

    /// `y = L u = Θ⁻¹ A u`.
    pub fn apply(&self, u: &[f64], y: &mut [f64]) {
        self.apply_stiffness(u, y);
        linalg::for_each_indexed(y, |x, v| *v /= self.speed[x]);
    }

    /// Sum over ghost edges of `c · g(ghost position)`, the right-hand side
    /// contribution of exterior Dirichlet data `g`.
    pub fn boundary_source<F>(&self, g: F) -> Vec<f64>
    where
        F: Fn(&Point) -> f64 + Sync,
    {
        let h = self.grid.h();
        (0..self.grid.len())
            .into_par_iter()
            .map(|x| {
                let mut s = 0.0;
                for axis in 0..self.grid.dim() {
                    for (nb, c, sign) in [
                        (self.fwd[axis][x], self.cf[axis][x], 1.0),
                        (self.bwd[axis][x], self.cb[axis][x], -1.0),
                    ] {
                        if nb == GHOST {
                            let mut p = self.grid.position(x);
                            p[axis] += sign * h;
                            s += c * g(&p);
                        }
                    }
                }
                s
            })
            .collect()
    }

    /// Discrete Dirichlet form `Σ_edges c (u(x) - u(y))² h^d`.
    pub fn dirichlet_energy(&self, u: &[f64]) -> Result<f64> {
        self.grid.check_len(u.len())?;
        let dim = self.grid.dim();
        let per_node: Vec<f64> = (0..self.grid.len())
            .into_par_iter()
            .map(|x| {
                let mut s = 0.0;
                for axis in 0..dim {
                    let f = self.fwd[axis][x];
                    let du = if f == GHOST { u[x] } else { u[f as usize] - u[x] };
                    s += self.cf[axis][x] * du * du;
                    if self.bwd[axis][x] == GHOST {
                        s += self.cb[axis][x] * u[x] * u[x];
                    }
                }
                s
            })
            .collect();
        Ok(linalg::sum(&per_node) * self.grid.cell_volume())
    }

    /// `max_x Σ_e a_e(x) (∂_e ψ)(x)² / θ(x)` with forward differences.
    pub fn h_squared(&self, psi: &[f64]) -> Result<f64> {
        self.grid.check_len(psi.len())?;
        let h = self.grid.h();
        Ok((0..self.grid.len())
            .into_par_iter()
            .map(|x| {
                let mut s = 0.0;
                for axis in 0..self.grid.dim() {
                    let f = self.fwd[axis][x];
                    if f == GHOST {
                        continue;
                    }
                    let d = (psi[f as usize] - psi[x]) / h;
                    s += self.coeff[axis][x] * d * d;
                }
                s / self.speed[x]
            })
            .reduce(|| 0.0, f64::max))
    }

    /// Exact growth rate of `‖e^ψ P_t f‖²` for the discrete semigroup:
    /// `max_x Σ_y c(x,y)(cosh(ψ(y)-ψ(x)) - 1) / θ(x)`, doubled.
    pub fn perturbation_rate(&self, psi: &[f64]) -> Result<f64> {
        self.grid.check_len(psi.len())?;
        Ok((0..self.grid.len())
            .into_par_iter()
            .map(|x| {
                let s: f64 = self
                    .neighbours(x)
                    .filter(|(y, _)| *y != GHOST)
                    .map(|(y, c)| c * ((psi[y as usize] - psi[x]).cosh() - 1.0))
                    .sum();
                2.0 * s / self.speed[x]
            })
            .reduce(|| 0.0, f64::max))
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        linalg::weighted_dot(u, v, &self.speed) * self.grid.cell_volume()
    }

    /// Entries `(row, col, value)` of `L`, sorted by row then column.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for x in 0..self.grid.len() {
            let t = self.speed[x];
            let mut row: Vec<(usize, f64)> = vec![(x, self.diag[x] / t)];
            for (y, c) in self.neighbours(x) {
                if y != GHOST {
                    row.push((y as usize, c / t));
                }
            }
            row.sort_by_key(|e| e.0);
            // Tiny periodic grids can see the same neighbour twice.
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (c, v) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += v,
                    _ => merged.push((c, v)),
                }
            }
            out.extend(merged.into_iter().map(|(c, v)| (x, c, v)));
        }
        out
    }

    /// Dense stiffness matrix, for oracles on small grids.
    pub fn dense_stiffness(&self) -> DMatrix<f64> {
        let n = self.grid.len();
        let mut m = DMatrix::zeros(n, n);
        for x in 0..n {
            m[(x, x)] += self.diag[x];
            for (y, c) in self.neighbours(x) {
                if y != GHOST {
                    m[(x, y as usize)] += c;
                }
            }
        }
        m
    }
}

/// `(u, v)_θ = Σ u v θ h^d`.
pub fn weighted_inner_product(field: &EnvironmentField, u: &[f64], v: &[f64]) -> Result<f64> {
    let g = field.grid();
    g.check_len(u.len())?;
    g.check_len(v.len())?;
    Ok(linalg::weighted_dot(u, v, field.speed()) * g.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_environment, EnvironmentSpec, TailIndices};

    fn random_field(n: usize, seed: u64) -> EnvironmentField {
        let spec = EnvironmentSpec {
            tails: TailIndices::symmetric(6.0),
            exponents: crate::env::Exponents { p: 2.0, q: 2.0, r: Some(2.0) },
            speed: crate::env::SpeedMode::Independent { tails: TailIndices::symmetric(6.0) },
            seed,
            range: 2.0,
            ..EnvironmentSpec::constant(2, n as f64, n)
        };
        generate_environment(&spec).unwrap()
    }

    #[test]
    fn unit_laplacian_rates() {
        let g = Grid::new(2, 8, 0.5).unwrap();
        let gen = assemble_generator(&EnvironmentField::constant(g, 4.0, 1.0).unwrap()).unwrap();
        for (r, c, v) in gen.entries() {
            if r == c {
                assert_eq!(v, -64.0);
            } else {
                assert_eq!(v, 16.0);
            }
        }
    }

    #[test]
    fn rows_sum_to_zero_and_symmetric() {
        let f = random_field(8, 2);
        let gen = assemble_generator(&f).unwrap();
        let a = gen.dense_stiffness();
        for x in 0..a.nrows() {
            let mut s = 0.0;
            for (y, c) in gen.neighbours(x) {
                s += c;
                let _ = y;
            }
            assert_eq!(s + gen.stiffness_diag()[x], 0.0);
            for y in 0..a.ncols() {
                assert_eq!(a[(x, y)], a[(y, x)]);
            }
        }
    }

    #[test]
    fn zero_coefficient_is_rejected() {
        let g = Grid::new(2, 4, 1.0).unwrap();
        let mut a = vec![vec![1.0; 16]; 2];
        a[1][5] = 0.0;
        let err = DiscreteGenerator::from_coefficients(g, a, vec![1.0; 16], Default::default());
        assert!(matches!(err, Err(Error::Assembly { .. })));
    }

    #[test]
    fn linear_psi_h_squared() {
        let g = Grid::new(2, 16, 0.25).unwrap();
        let f = EnvironmentField::constant(g, 1.0, 1.0).unwrap();
        let gen = DiscreteGenerator::new(
            &f,
            GeneratorOptions { boundary: Boundary::Dirichlet, ..Default::default() },
        )
        .unwrap();
        let psi: Vec<f64> = (0..g.len()).map(|x| 0.7 * g.position(x)[0]).collect();
        assert!((gen.h_squared(&psi).unwrap() - 0.49).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_energy_identity() {
        let f = random_field(16, 5);
        for boundary in [Boundary::Periodic, Boundary::Dirichlet] {
            let gen = DiscreteGenerator::new(&f, GeneratorOptions { boundary, ..Default::default() })
                .unwrap();
            let u: Vec<f64> = (0..f.grid().len()).map(|x| ((x * 37 % 101) as f64).sin()).collect();
            let mut lu = vec![0.0; u.len()];
            gen.apply(&u, &mut lu);
            let e = gen.dirichlet_energy(&u).unwrap();
            assert!((e + gen.inner(&u, &lu)).abs() <= 1e-10 * e);
        }
    }
}
