#![allow(dead_code)]

use heatlab_core::env::{generate_environment, EnvironmentField, SpeedMode};
use heatlab_core::operator::DiscreteGenerator;
use heatlab_core::suites::ensemble_spec;
use nalgebra::{DMatrix, SymmetricEigen};

pub fn random_field(cells: usize, speed: SpeedMode, seed: u64) -> EnvironmentField {
    let spec = ensemble_spec(2, cells, cells as f64, 6.0, speed, seed);
    generate_environment(&spec).expect("valid spec")
}

/// Stiffness matrix assembled column by column from the matrix-free product.
pub fn dense_stiffness(gen: &DiscreteGenerator) -> DMatrix<f64> {
    let n = gen.grid().len();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        gen.apply_stiffness(&e, &mut col);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    m
}

/// `p(t, x, y)` for all pairs from the eigendecomposition of
/// `Θ^{-1/2} A Θ^{-1/2}`.
pub struct Oracle {
    eig: SymmetricEigen<f64, nalgebra::Dyn>,
    speed: Vec<f64>,
    volume: f64,
}

impl Oracle {
    pub fn new(gen: &DiscreteGenerator) -> Self {
        let a = dense_stiffness(gen);
        let speed = gen.speed().to_vec();
        let n = speed.len();
        let s = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (speed[i] * speed[j]).sqrt());
        Self { eig: SymmetricEigen::new(s), speed, volume: gen.grid().cell_volume() }
    }

    pub fn kernel(&self, t: f64) -> DMatrix<f64> {
        let q = &self.eig.eigenvectors;
        let d = DMatrix::from_diagonal(&self.eig.eigenvalues.map(|l| (l * t).exp()));
        let e = q * d * q.transpose();
        let n = self.speed.len();
        DMatrix::from_fn(n, n, |x, y| e[(y, x)] / ((self.speed[x] * self.speed[y]).sqrt() * self.volume))
    }

    pub fn column(&self, t: f64, x: usize) -> Vec<f64> {
        let k = self.kernel(t);
        (0..self.speed.len()).map(|y| k[(x, y)]).collect()
    }
}

/// Shortest paths by repeated relaxation over an explicit edge list.
pub fn bellman_ford(n: usize, edges: &[(usize, usize, f64)], source: usize) -> Vec<f64> {
    let mut d = vec![f64::INFINITY; n];
    d[source] = 0.0;
    for _ in 0..n {
        let mut changed = false;
        for &(a, b, w) in edges {
            if d[a] + w < d[b] {
                d[b] = d[a] + w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    d
}
