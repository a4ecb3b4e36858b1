mod common;

use common::{random_field, Oracle};
use heatlab_core::env::{EnvironmentField, SpeedMode, TailIndices};
use heatlab_core::heat::{self, chapman_kolmogorov_check, heat_kernel_column, HeatOptions};
use heatlab_core::operator::assemble_generator;
use heatlab_core::Grid;
use proptest::prelude::*;

const TIMES: [f64; 4] = [0.25, 1.0, 2.0, 4.0];

fn tight() -> HeatOptions {
    HeatOptions { tol: 1e-11, ..HeatOptions::default() }
}

#[test]
fn crank_nicolson_matches_eigen_oracle() {
    for (seed, speed) in [(1, SpeedMode::Unit), (2, SpeedMode::Lambda)] {
        let field = random_field(8, speed, seed);
        let gen = assemble_generator(&field).unwrap();
        let oracle = Oracle::new(&gen);
        for x0 in [0, 27, 63] {
            let col = heat_kernel_column(&gen, x0, &TIMES, tight()).unwrap();
            for (i, &t) in TIMES.iter().enumerate() {
                let exact = oracle.column(t, x0);
                for (a, b) in col.values[i].iter().zip(&exact) {
                    assert!((a - b).abs() < 1e-7, "t = {t}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn dense_semigroup_agrees_with_test_oracle() {
    let field = random_field(8, SpeedMode::Independent { tails: TailIndices::symmetric(6.0) }, 5);
    let gen = assemble_generator(&field).unwrap();
    let lib = heat::DenseSemigroup::new(&gen).unwrap();
    let oracle = Oracle::new(&gen);
    for x0 in [0, 17] {
        for (a, b) in lib.column(1.5, x0).iter().zip(oracle.column(1.5, x0)) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn kernel_is_symmetric_and_semigroup() {
    let field = random_field(8, SpeedMode::Lambda, 9);
    let gen = assemble_generator(&field).unwrap();
    let a = heat_kernel_column(&gen, 3, &[1.0, 2.0], tight()).unwrap();
    let b = heat_kernel_column(&gen, 40, &[1.0, 2.0], tight()).unwrap();
    assert!((a.values[1][40] - b.values[1][3]).abs() < 1e-9);
    assert!(chapman_kolmogorov_check(&gen, &a, 1.0, 1.0).unwrap() < 1e-8);
}

#[test]
fn constant_torus_approaches_gaussian() {
    let g = Grid::new(2, 64, 0.25).unwrap();
    let field = EnvironmentField::constant(g, 1.0, 1.0).unwrap();
    let gen = assemble_generator(&field).unwrap();
    let x0 = g.index([32, 32, 0]);
    let col = heat_kernel_column(&gen, x0, &[1.0], HeatOptions::default()).unwrap();
    let exact = 1.0 / (4.0 * std::f64::consts::PI);
    assert!((col.values[0][x0] / exact - 1.0).abs() < 0.01);
}

#[test]
fn walkers_follow_the_kernel() {
    let field = random_field(16, SpeedMode::Lambda, 4);
    let gen = assemble_generator(&field).unwrap();
    let x0 = 8 * 16 + 8;
    let col = heat_kernel_column(&gen, x0, &[1.0], tight()).unwrap();
    let counts = heat::simulate_walkers(&gen, x0, 1.0, 200_000, 11).unwrap();
    assert_eq!(counts.iter().sum::<u64>(), 200_000);
    let cmp = heat::compare_walkers(&gen, &col.values[0], &counts).unwrap();
    assert!(cmp.ratio < 3.0, "{cmp:?}");
}

#[test]
fn walkers_are_reproducible() {
    let field = random_field(8, SpeedMode::Unit, 2);
    let gen = assemble_generator(&field).unwrap();
    let a = heat::simulate_walkers(&gen, 0, 0.5, 5_000, 3).unwrap();
    let b = heat::simulate_walkers(&gen, 0, 0.5, 5_000, 3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn save_load_roundtrip() {
    let field = random_field(8, SpeedMode::Unit, 1);
    let gen = assemble_generator(&field).unwrap();
    let col = heat_kernel_column(&gen, 5, &[0.5, 1.0], HeatOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    col.save(dir.path()).unwrap();
    let back = heat::KernelColumn::load(dir.path()).unwrap();
    assert_eq!(back.values, col.values);
    assert_eq!((back.source, &back.times), (col.source, &col.times));
}

#[test]
fn bad_times_rejected() {
    let field = random_field(8, SpeedMode::Unit, 1);
    let gen = assemble_generator(&field).unwrap();
    assert!(heat_kernel_column(&gen, 0, &[1.0, 0.5], HeatOptions::default()).is_err());
    assert!(heat_kernel_column(&gen, 0, &[], HeatOptions::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mass_and_positivity(seed in 0u64..1000, lambda in any::<bool>(), x0 in 0usize..256) {
        let speed = if lambda { SpeedMode::Lambda } else { SpeedMode::Unit };
        let field = random_field(16, speed, seed);
        let gen = assemble_generator(&field).unwrap();
        let col = heat_kernel_column(&gen, x0, &[0.1, 1.0, 8.0], HeatOptions::default()).unwrap();
        for m in col.masses(&gen) {
            prop_assert!((m - 1.0).abs() < 1e-9);
        }
        prop_assert!(col.min_value() >= -heat::NEGATIVITY_TOL);
    }

    #[test]
    fn l2_norm_decreases(seed in 0u64..1000) {
        let field = random_field(12, SpeedMode::Lambda, seed);
        let gen = assemble_generator(&field).unwrap();
        let col = heat_kernel_column(&gen, 0, &[0.25, 0.5, 1.0, 2.0], HeatOptions::default()).unwrap();
        let norms = col.l2_norms(&gen);
        for w in norms.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9));
        }
    }

    #[test]
    fn perturbed_bound_holds(seed in 0u64..1000, slope in -1.0f64..1.0, t in 0.1f64..2.0) {
        let field = random_field(8, SpeedMode::Unit, seed);
        let gen = assemble_generator(&field).unwrap();
        let g = *field.grid();
        let psi: Vec<f64> = (0..g.len()).map(|x| slope * (g.position(x)[0] * std::f64::consts::TAU / g.side()).sin()).collect();
        let f: Vec<f64> = (0..g.len()).map(|x| 1.0 + (x % 5) as f64).collect();
        let rep = heat::perturbed_l2_check(&gen, &psi, &f, t, tight()).unwrap();
        prop_assert!(rep.slack >= -1e-9 * rep.rhs.max(1.0), "{:?}", rep);
    }
}
