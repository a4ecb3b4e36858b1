mod common;

use common::dense_stiffness;
use heatlab_core::env::{EnvironmentField, EnvironmentSpec};
use heatlab_core::green::{self, Covariance, FarField, GreenField, ScalingConfig};
use heatlab_core::heat::{heat_kernel_column, HeatOptions};
use heatlab_core::operator::{assemble_generator, Boundary, DiscreteGenerator, GeneratorOptions};
use heatlab_core::{Error, Grid};
use nalgebra::DVector;

fn dirichlet(field: &EnvironmentField) -> DiscreteGenerator {
    DiscreteGenerator::new(field, GeneratorOptions { boundary: Boundary::Dirichlet, ..Default::default() }).unwrap()
}

#[test]
fn green_function_matches_dense_solve() {
    let g = Grid::new(3, 8, 0.5).unwrap();
    let a0: Vec<f64> = (0..g.len()).map(|x| 1.0 + 0.5 * ((x * 7) % 5) as f64).collect();
    let a1: Vec<f64> = (0..g.len()).map(|x| 2.0 - 0.3 * ((x * 3) % 4) as f64).collect();
    let a2 = vec![1.5; g.len()];
    let field = EnvironmentField::from_arrays(g, vec![a0, a1, a2], vec![1.0; g.len()]).unwrap();
    let gen = dirichlet(&field);
    let x0 = g.index([3, 4, 4]);
    let gf = green::green_function(&gen, x0, &FarField::Zero).unwrap();
    let a = dense_stiffness(&gen);
    let mut rhs = DVector::zeros(g.len());
    rhs[x0] = 1.0 / g.cell_volume();
    let exact = (-a).lu().solve(&rhs).unwrap();
    for (u, v) in gf.values.iter().zip(exact.iter()) {
        assert!((u - v).abs() < 1e-8 * v.abs().max(1e-3), "{u} vs {v}");
    }
    assert!(gf.residual < green::GREEN_RESIDUAL);
}

#[test]
fn brownian_green_function_is_time_integral() {
    let sigma = Covariance::new(3, vec![1.0, 0.2, 0.0, 0.2, 2.0, 0.1, 0.0, 0.1, 3.0]).unwrap();
    let x = [0.0; 3];
    let y = [0.7, -0.4, 1.1];
    // ∫₀^∞ p(t) dt with t = e^s.
    let (lo, hi, n) = (-12.0f64, 40.0f64, 60_000);
    let ds = (hi - lo) / n as f64;
    let integral: f64 = (0..n)
        .map(|i| {
            let s = lo + (i as f64 + 0.5) * ds;
            let t = s.exp();
            green::gaussian_kernel(t, &x, &y, &sigma).unwrap() * t * ds
        })
        .sum();
    let closed = green::g_bm(&x, &y, &sigma).unwrap();
    assert!((integral / closed - 1.0).abs() < 1e-6, "{integral} vs {closed}");
}

#[test]
fn identity_covariance_closed_form() {
    let id = Covariance::scalar(3, 1.0).unwrap();
    let v = green::g_bm(&[0.0; 3], &[0.0, 2.0, 0.0], &id).unwrap();
    assert!((v - 1.0 / (2.0 * std::f64::consts::PI * 2.0)).abs() < 1e-14);
    assert!(green::g_bm(&[0.0; 2], &[1.0, 0.0], &Covariance::scalar(2, 1.0).unwrap()).is_err());
}

#[test]
fn covariance_validation() {
    assert!(Covariance::new(2, vec![1.0, 0.5, 0.4, 1.0]).is_err());
    assert!(Covariance::new(2, vec![1.0, 2.0, 2.0, 1.0]).is_err());
    assert!(Covariance::new(2, vec![1.0; 3]).is_err());
}

#[test]
fn interpolation_and_roundtrip() {
    let g = Grid::new(3, 8, 1.0).unwrap();
    let field = EnvironmentField::constant(g, 1.0, 1.0).unwrap();
    let gen = dirichlet(&field);
    let x0 = g.index([4, 4, 4]);
    let gf = green::green_function(&gen, x0, &FarField::Zero).unwrap();
    for y in [x0, g.index([2, 5, 6])] {
        assert!((gf.interpolate(&g.position(y)).unwrap() - gf.values[y]).abs() < 1e-12);
    }
    let mid = {
        let (p, q) = (g.position(x0), g.position(g.index([5, 4, 4])));
        [(p[0] + q[0]) / 2.0, p[1], p[2]]
    };
    let expect = 0.5 * (gf.values[x0] + gf.values[g.index([5, 4, 4])]);
    assert!((gf.interpolate(&mid).unwrap() - expect).abs() < 1e-12);
    let dir = tempfile::tempdir().unwrap();
    gf.save(dir.path()).unwrap();
    assert_eq!(GreenField::load(dir.path()).unwrap(), gf);
}

#[test]
fn green_needs_dirichlet_three_dimensions() {
    let g = Grid::new(3, 8, 1.0).unwrap();
    let field = EnvironmentField::constant(g, 1.0, 1.0).unwrap();
    assert!(green::green_function(&assemble_generator(&field).unwrap(), 0, &FarField::Zero).is_err());
    let g2 = Grid::new(2, 8, 1.0).unwrap();
    let f2 = EnvironmentField::constant(g2, 1.0, 1.0).unwrap();
    assert!(green::green_function(&dirichlet(&f2), 0, &FarField::Zero).is_err());
}

#[test]
fn sigma_of_unit_laplacian_is_two() {
    let g = Grid::new(3, 24, 1.0).unwrap();
    let field = EnvironmentField::constant(g, 1.0, 1.0).unwrap();
    let gen = assemble_generator(&field).unwrap();
    let col = heat_kernel_column(&gen, g.index([12, 12, 12]), &[1.0, 2.0], HeatOptions::default()).unwrap();
    let est = green::sigma_estimate(&gen, &[col]).unwrap();
    for i in 0..3 {
        assert!((est.sigma.get(i, i) - 2.0).abs() < 1e-5, "{:?}", est.sigma);
        for j in 0..i {
            assert!(est.sigma.get(i, j).abs() < 1e-9);
        }
    }
}

#[test]
fn scaling_experiment_preconditions() {
    let spec = EnvironmentSpec::constant(2, 32.0, 32);
    assert!(green::scaling_limit_experiment(&spec, &ScalingConfig::default()).is_err());
    let spec = EnvironmentSpec::constant(3, 32.0, 32);
    let cfg = ScalingConfig { scales: vec![4.0, 8.0, 16.0], ..ScalingConfig::default() };
    assert!(matches!(green::scaling_limit_experiment(&spec, &cfg), Err(Error::Mode(_) | Error::Geometry(_))));
}
