mod common;

use common::{bellman_ford, random_field, Oracle};
use heatlab_core::bounds::{self, HarnackParams, KernelData, Ranges};
use heatlab_core::env::{EnvironmentField, Exponents, SpeedMode};
use heatlab_core::heat::{heat_kernel_column, HeatOptions, KernelColumn};
use heatlab_core::metric::{MetricField, MetricGraph, Neighborhood};
use heatlab_core::operator::assemble_generator;
use heatlab_core::{Error, Grid};

fn dyadic(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 2f64.powi(k)).collect()
}

#[test]
fn upper_curve_matches_exhaustive_enumeration() {
    let field = random_field(8, SpeedMode::Lambda, 12);
    let g = *field.grid();
    let gen = assemble_generator(&field).unwrap();
    let oracle = Oracle::new(&gen);
    let x0 = 27;
    let times = dyadic(-2, 3);
    let column = KernelColumn {
        source: x0,
        times: times.clone(),
        values: times.iter().map(|&t| oracle.column(t, x0)).collect(),
        options: HeatOptions::default(),
        stats: Default::default(),
    };
    let graph = MetricGraph::new(&field, Neighborhood::N16).unwrap();
    let edges: Vec<(usize, usize, f64)> = (0..g.len())
        .flat_map(|x| graph.edges(x).map(move |e| e.unwrap()).map(move |(y, w)| (x, y, w)).collect::<Vec<_>>())
        .collect();
    let dist = bellman_ford(g.len(), &edges, x0);
    let metric = MetricField { source: x0, neighborhood: Neighborhood::N16, grid: g, distances: dist.clone() };
    let data = KernelData { grid: &g, column: &column, metric: Some(&metric), seed: None };
    let gamma = 0.7;
    let curve = bounds::upper_intrinsic_curve(&data, &Ranges::within(f64::INFINITY), gamma).unwrap();
    for (i, &(t, m)) in curve.iter().enumerate() {
        let brute = (0..g.len())
            .map(|y| {
                let e = g.distance(x0, y);
                column.values[i][y].ln() + t.ln() + dist[y] * dist[y] / (8.0 * t) - gamma * (1.0 + e / t.sqrt()).ln()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((m - brute).abs() < 1e-9, "t = {t}: {m} vs {brute}");
    }
}

struct Member {
    grid: Grid,
    column: KernelColumn,
    metric: MetricField,
}

fn members(count: u64, speed: SpeedMode, times: &[f64]) -> Vec<Member> {
    (0..count)
        .map(|seed| {
            let field = random_field(32, speed, seed);
            let gen = assemble_generator(&field).unwrap();
            let x0 = field.grid().index([16, 16, 0]);
            let column = heat_kernel_column(&gen, x0, times, HeatOptions::default()).unwrap();
            let metric = heatlab_core::metric::intrinsic_distance_map(&field, x0, Neighborhood::N16).unwrap();
            Member { grid: *field.grid(), column, metric }
        })
        .collect()
}

fn data(ms: &[Member]) -> Vec<KernelData<'_>> {
    ms.iter()
        .map(|m| KernelData { grid: &m.grid, column: &m.column, metric: Some(&m.metric), seed: None })
        .collect()
}

#[test]
fn upper_bound_passes_and_rejects_corruption() {
    let times = dyadic(-2, 5);
    let mut ms = members(2, SpeedMode::Lambda, &times);
    let fit = bounds::verify_upper_intrinsic(&data(&ms), &Ranges::within(12.0), 0.05).unwrap();
    assert!(fit.pass, "{fit:?}");
    assert!(fit.constant("c1").unwrap() > 0.0);
    for m in &mut ms {
        for (k, t) in m.column.times.iter().enumerate() {
            m.column.values[k].iter_mut().for_each(|v| *v *= t.sqrt());
        }
    }
    let bad = bounds::verify_upper_intrinsic(&data(&ms), &Ranges::within(12.0), 0.05).unwrap();
    assert!(!bad.pass);
}

#[test]
fn lower_and_euclidean_bounds_on_ensemble() {
    let times = dyadic(-2, 5);
    let ms = members(2, SpeedMode::Lambda, &times);
    let ranges = Ranges { t_min: Some(1.0), t_max: None, max_distance: 12.0 };
    let lower = bounds::verify_lower(&data(&ms), &ranges, 0.1).unwrap();
    assert!(lower.constant("c3").unwrap() > 0.0);
    let euclid = bounds::verify_upper_euclidean(&data(&ms), &ranges).unwrap();
    assert!(euclid.pass);
}

#[test]
fn constant_environment_euclidean_constant() {
    // For the continuum kernel c₂₂ = 1/4; the lattice kernel approaches it
    // from below.
    let g = Grid::new(2, 64, 0.5).unwrap();
    let field = EnvironmentField::constant(g, 1.0, 1.0).unwrap();
    let gen = assemble_generator(&field).unwrap();
    let x0 = g.index([32, 32, 0]);
    let column = heat_kernel_column(&gen, x0, &dyadic(0, 3), HeatOptions::default()).unwrap();
    let d = [KernelData { grid: &g, column: &column, metric: None, seed: None }];
    let fit = bounds::verify_upper_euclidean(&d, &Ranges::within(6.0)).unwrap();
    let c22 = fit.constant("c22").unwrap();
    assert!(fit.pass);
    assert!(c22 > 0.1 && c22 <= 0.25 + 1e-9, "{c22}");
}

#[test]
fn long_range_scale_must_fit() {
    let times = dyadic(-4, 2);
    let ms = members(1, SpeedMode::Lambda, &times);
    let err = bounds::verify_long_range(&data(&ms), &[1.0, 2.0, 16.0], 0.01).unwrap_err();
    assert!(matches!(err, Error::Geometry(_)));
}

#[test]
fn floor_holds_on_constant_environment() {
    let g = Grid::new(2, 64, 0.5).unwrap();
    let field = EnvironmentField::constant(g, 1.0, 1.0).unwrap();
    let gen = assemble_generator(&field).unwrap();
    let x0 = g.index([32, 32, 0]);
    let column = heat_kernel_column(&gen, x0, &[4.0], HeatOptions::default()).unwrap();
    let e = Exponents { p: 2.0, q: 2.0, r: None };
    let rep = bounds::near_diagonal_floor(&field, &column, 4.0, &HarnackParams::default_for(2), &e).unwrap();
    assert!(rep.pass, "{rep:?}");
}

#[test]
fn burn_in_needs_settled_tail() {
    assert_eq!(bounds::burn_in_time(&[1.0, 2.0, 4.0], &[5.0, 0.1, 0.2]), Some(2.0));
    assert_eq!(bounds::burn_in_time(&[1.0, 2.0, 4.0], &[0.0, 0.0, 3.0]), None);
}
