use heatlab_core::env::{EnvironmentField, EnvironmentSpec, Exponents, TailIndices};
use heatlab_core::rng;
use heatlab_core::stochastics::{
    self, chain_geometry, holder_bound, region_layout, rosenthal_check, DiscreteVariable, MomentConfig, RegionShape,
};
use heatlab_core::{Error, Grid};
use proptest::prelude::*;

/// `E|Σ Y_i|^k` by convolving the laws one variable at a time.
fn convolved_moment(vars: &[DiscreteVariable], k: f64) -> f64 {
    let mut law: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    for v in vars {
        law = law
            .iter()
            .flat_map(|&(s, p)| v.values.iter().zip(&v.probs).map(move |(x, q)| (s + x, p * q)))
            .collect();
    }
    law.iter().map(|(s, p)| p * s.abs().powf(k)).sum()
}

fn variables(seed: u64, count: usize, support: usize) -> Vec<DiscreteVariable> {
    let mut r = rng::stream(seed, 99, 0);
    (0..count).map(|_| DiscreteVariable::random_centered(&mut r, support)).collect()
}

#[test]
fn rosenthal_closed_forms() {
    let one = rosenthal_check(&[DiscreteVariable::rademacher()], 4.0).unwrap();
    assert_eq!(one.lhs, 1.0);
    assert_eq!(one.ratio, 1.0);
    let two = rosenthal_check(&[DiscreteVariable::rademacher(), DiscreteVariable::rademacher()], 4.0).unwrap();
    assert_eq!(two.lhs, 8.0);
    assert_eq!(two.ratio, 2.0);
}

#[test]
fn rosenthal_rejects_bad_input() {
    let biased = DiscreteVariable::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
    assert!(matches!(rosenthal_check(&[biased], 3.0), Err(Error::Centering(_))));
    assert!(DiscreteVariable::new(vec![0.0, 1.0], vec![0.5, 0.4]).is_err());
    let many = vec![DiscreteVariable::rademacher(); stochastics::MAX_VARIABLES + 1];
    assert!(rosenthal_check(&many, 3.0).is_err());
}

#[test]
fn rosenthal_experiment_is_reproducible() {
    let a = stochastics::rosenthal_experiment(40, &[3.0, 4.0], 7).unwrap();
    let b = stochastics::rosenthal_experiment(40, &[3.0, 4.0], 7).unwrap();
    assert_eq!(a, b);
    assert!(a.constant <= 4.0);
}

#[test]
fn chain_geometry_shape() {
    let c = chain_geometry(&[24.0, 0.0, 0.0], 8.0).unwrap();
    assert_eq!(c.k, 36);
    assert_eq!(c.points.len(), c.k + 1);
    assert!((c.ball_radius - 8.0 / 48.0).abs() < 1e-15);
    assert_eq!(c.points[0], [0.0; 3]);
    assert_eq!(c.points[c.k], [24.0, 0.0, 0.0]);
    assert!(chain_geometry(&[1.0, 0.0, 0.0], 8.0).is_err());
}

#[test]
fn constant_environment_chain_is_one() {
    let g = Grid::new(2, 64, 1.0).unwrap();
    let field = EnvironmentField::constant(g, 1.0, 1.0).unwrap();
    let c = chain_geometry(&[20.0, 0.0, 0.0], 10.0).unwrap();
    let rep = stochastics::chained_average_bound(&field, &c, &c.points, 2.0, 2.0, 1.0).unwrap();
    assert_eq!(rep.per_ball, 1.0);
    assert!(rep.holder_ok);
    let mut off = c.points.clone();
    off[1][1] += c.ball_radius * 2.0;
    assert!(matches!(
        stochastics::chained_average_bound(&field, &c, &off, 2.0, 2.0, 1.0),
        Err(Error::Sequence(_))
    ));
}

#[test]
fn layouts_cover_the_count() {
    for count in [1, 4, 16, 64, 256, 1024] {
        for dim in [2, 3] {
            let l = region_layout(RegionShape::Box, count, dim);
            assert_eq!(l.iter().product::<usize>(), count);
        }
    }
    assert_eq!(region_layout(RegionShape::Segment, 8, 2), vec![8, 1]);
}

#[test]
fn moment_experiment_reproducible_and_guarded() {
    let spec = EnvironmentSpec {
        tails: TailIndices::symmetric(8.0),
        range: 2.0,
        ..EnvironmentSpec::constant(2, 32.0, 32)
    };
    let cfg = MomentConfig { counts: vec![4, 16], samples: 40, resamples: 50, ..MomentConfig::default() };
    let a = stochastics::moment_bound_experiment(&spec, &cfg).unwrap();
    let b = stochastics::moment_bound_experiment(&spec, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 2);
    let light = EnvironmentSpec { tails: TailIndices::symmetric(3.0), ..spec };
    assert!(matches!(stochastics::moment_bound_experiment(&light, &cfg), Err(Error::MomentMargin(_))));
}

#[test]
fn chain_experiment_on_constant_field() {
    let g = Grid::new(2, 64, 1.0).unwrap();
    let field = EnvironmentField::constant(g, 1.0, 1.0).unwrap();
    let e = Exponents { p: 2.0, q: 2.0, r: None };
    let exp = stochastics::chain_experiment(&field, &[24.0, 0.0, 0.0], &[8.0, 16.0], 5, 1, &e, 1.0).unwrap();
    assert!(exp.within_factor_two && exp.holder_ok);
    for row in &exp.rows {
        assert_eq!(row.max_per_ball, 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumeration_matches_convolution(seed in 0u64..1_000_000, n in 1usize..=5, support in 2usize..=4, k in prop::sample::select(vec![3.0, 4.0])) {
        let vars = variables(seed, n, support);
        let rep = rosenthal_check(&vars, k).unwrap();
        let oracle = convolved_moment(&vars, k);
        prop_assert!((rep.lhs - oracle).abs() <= 1e-9 * oracle.max(1e-12), "{} vs {}", rep.lhs, oracle);
    }

    #[test]
    fn fourth_moment_constant_is_four(seed in 0u64..1_000_000, n in 1usize..=6, support in 2usize..=4) {
        let vars = variables(seed, n, support);
        let rep = rosenthal_check(&vars, 4.0).unwrap();
        prop_assert!(rep.ratio <= 4.0 + 1e-12, "{:?}", rep);
    }

    #[test]
    fn holder_dominates_inner_product(
        a in prop::collection::vec(0.0f64..10.0, 1..20),
        p in 1.1f64..6.0,
    ) {
        let b: Vec<f64> = a.iter().rev().map(|v| v + 0.5).collect();
        let q = p / (p - 1.0);
        let inner: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        prop_assert!(inner <= holder_bound(&a, &b, p, q) * (1.0 + 1e-12));
    }
}
