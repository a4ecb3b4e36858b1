mod common;

use common::{bellman_ford, dense_stiffness, random_field};
use heatlab_core::env::{EnvironmentField, SpeedMode};
use heatlab_core::metric::{self, MetricGraph, Neighborhood};
use heatlab_core::operator::{assemble_generator, Boundary, DiscreteGenerator, GeneratorOptions};
use heatlab_core::Grid;
use proptest::prelude::*;

#[test]
fn dirichlet_rows_leak_mass() {
    let field = random_field(8, SpeedMode::Unit, 3);
    let gen = DiscreteGenerator::new(&field, GeneratorOptions { boundary: Boundary::Dirichlet, ..Default::default() })
        .unwrap();
    let a = dense_stiffness(&gen);
    let corner: f64 = a.row(0).iter().sum();
    let inner: f64 = a.row(3 * 8 + 3).iter().sum();
    assert!(corner < -1e-6);
    assert!(inner.abs() < 1e-12);
}

#[test]
fn entries_match_dense_generator() {
    let field = random_field(8, SpeedMode::Lambda, 8);
    let gen = assemble_generator(&field).unwrap();
    let a = dense_stiffness(&gen);
    for (r, c, v) in gen.entries() {
        let expect = a[(r, c)] / field.speed()[r];
        assert!((v - expect).abs() < 1e-12 * expect.abs().max(1.0));
    }
}

#[test]
fn dijkstra_matches_bellman_ford() {
    for (seed, nb) in [(1, Neighborhood::N4), (2, Neighborhood::N8), (3, Neighborhood::N16)] {
        let field = random_field(10, SpeedMode::Lambda, seed);
        let graph = MetricGraph::new(&field, nb).unwrap();
        let n = field.grid().len();
        let edges: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|x| graph.edges(x).map(move |e| e.map(|(y, w)| (x, y, w))).collect::<Vec<_>>())
            .collect::<Result<_, _>>()
            .unwrap();
        for source in [0, 55] {
            let fast = graph.dijkstra(source).unwrap();
            let slow = bellman_ford(n, &edges, source);
            for (a, b) in fast.distances.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12 * b.max(1.0));
            }
        }
    }
}

#[test]
fn anisotropic_constant_tensor() {
    // a = diag(1, 4), θ = Λ = 4: along x the speed is √(θ/a₁₁) = 2.
    let g = Grid::new(2, 32, 1.0).unwrap();
    let field = EnvironmentField::from_arrays(g, vec![vec![1.0; g.len()], vec![4.0; g.len()]], vec![4.0; g.len()]).unwrap();
    let x0 = g.index([16, 16, 0]);
    let m = metric::intrinsic_distance_map(&field, x0, Neighborhood::N16).unwrap();
    for step in 1..10 {
        let y = g.shift(x0, 0, step);
        assert!((m.distances[y] / g.distance(x0, y) - 2.0).abs() < 1e-12);
        let y = g.shift(x0, 1, step);
        assert!((m.distances[y] / g.distance(x0, y) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn lambda_speed_dominates_euclidean() {
    let field = random_field(24, SpeedMode::Lambda, 6);
    let m = metric::intrinsic_distance_map(&field, 0, Neighborhood::N16).unwrap();
    let rep = metric::euclidean_comparison(&m, &field).unwrap();
    assert!(rep.min_ratio >= 1.0 - 0.02, "{rep:?}");
}

#[test]
fn metric_save_load_roundtrip() {
    let field = random_field(8, SpeedMode::Unit, 2);
    let m = metric::intrinsic_distance_map(&field, 9, Neighborhood::N8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    m.save(dir.path()).unwrap();
    assert_eq!(metric::MetricField::load(dir.path()).unwrap(), m);
}

#[test]
fn neighbourhood_parsing() {
    assert_eq!(Neighborhood::parse("16", 2).unwrap(), Neighborhood::N16);
    assert_eq!(Neighborhood::parse("26", 3).unwrap(), Neighborhood::N26);
    assert!(Neighborhood::parse("16", 3).is_err());
    assert!(Neighborhood::parse("5", 2).is_err());
}

#[test]
fn finer_grids_converge() {
    // Constant tensor: the 16-neighbourhood error on an off-lattice
    // direction does not grow under refinement.
    let mut errors = Vec::new();
    for n in [16usize, 32, 64] {
        let g = Grid::new(2, n, 16.0 / n as f64).unwrap();
        let field = EnvironmentField::constant(g, 1.0, 1.0).unwrap();
        let x0 = g.index([0, 0, 0]);
        let y = g.index([n / 4, n / 8 * 3 / 2, 0]);
        let m = metric::intrinsic_distance_map(&field, x0, Neighborhood::N16).unwrap();
        errors.push((m.distances[y] / g.distance(x0, y) - 1.0).abs());
    }
    assert!(errors.iter().all(|e| *e < 0.03), "{errors:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn stiffness_is_symmetric_with_zero_row_sums(seed in 0u64..10_000, lambda in any::<bool>()) {
        let speed = if lambda { SpeedMode::Lambda } else { SpeedMode::Unit };
        let field = random_field(8, speed, seed);
        let gen = assemble_generator(&field).unwrap();
        let a = dense_stiffness(&gen);
        let n = a.nrows();
        for i in 0..n {
            prop_assert!(a[(i, i)] <= 0.0);
            let row: f64 = a.row(i).iter().sum();
            prop_assert!(row.abs() < 1e-10 * a[(i, i)].abs().max(1.0));
            for j in 0..i {
                prop_assert!((a[(i, j)] - a[(j, i)]).abs() < 1e-12 * a[(i, j)].abs().max(1.0));
                prop_assert!(a[(i, j)] >= 0.0);
            }
        }
    }

    #[test]
    fn energy_matches_quadratic_form(seed in 0u64..10_000, coeffs in prop::collection::vec(-1.0f64..1.0, 64)) {
        let field = random_field(8, SpeedMode::Unit, seed);
        let gen = assemble_generator(&field).unwrap();
        let mut au = vec![0.0; 64];
        gen.apply_stiffness(&coeffs, &mut au);
        let quad: f64 = -coeffs.iter().zip(&au).map(|(u, v)| u * v).sum::<f64>() * field.grid().cell_volume();
        let energy = gen.dirichlet_energy(&coeffs).unwrap();
        prop_assert!((quad - energy).abs() < 1e-9 * energy.max(1.0));
    }

    #[test]
    fn triangle_inequality(seed in 0u64..10_000, x in 0usize..144, z in 0usize..144, y in 0usize..144) {
        let field = random_field(12, SpeedMode::Lambda, seed);
        let graph = MetricGraph::new(&field, Neighborhood::N16).unwrap();
        let maps = vec![graph.dijkstra(x).unwrap(), graph.dijkstra(z).unwrap()];
        let rep = metric::triangle_audit(&maps, &[(x, z, y)]).unwrap();
        prop_assert_eq!(rep.violations, 0);
        // Symmetry of the distance.
        prop_assert!((maps[0].distances[z] - maps[1].distances[x]).abs() < 1e-9 * maps[0].distances[z].max(1.0));
    }
}
