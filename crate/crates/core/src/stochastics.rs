//! Monte Carlo and exact-enumeration experiments on environment ensembles:
//! chain geometry for the chaining argument, Rosenthal ratios, the
//! concentration moment bound and chained ergodic averages.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{self, generate_environment, EnvironmentField, EnvironmentSpec};
use crate::error::{Error, Result};
use crate::grid::{norm, Point};
use crate::rng::{self, tags};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainGeometry {
    pub endpoint: Point,
    pub radius: f64,
    pub k: usize,
    /// `x_j = (j/k) x` for `j = 0..=k`.
    pub points: Vec<Point>,
    pub ball_radius: f64,
    pub step: f64,
}

impl ChainGeometry {
    pub fn distance(&self) -> f64 {
        norm(&self.endpoint)
    }

    /// Whether `y` lies in the ball around `x_j`.
    pub fn admits(&self, j: usize, y: &Point) -> bool {
        let c = &self.points[j];
        let d = norm(&[y[0] - c[0], y[1] - c[1], y[2] - c[2]]);
        d <= self.ball_radius * (1.0 + 1e-12)
    }
}

/// Smallest `k ≥ 12 d(0,x)/r`, which always satisfies `k ≤ 16 d(0,x)/r`
/// when `r ≤ 4 d(0,x)`.
pub fn chain_geometry(x: &Point, r: f64) -> Result<ChainGeometry> {
    let dist = norm(x);
    if !(r > 0.0) || !(dist > 0.0) || r > 4.0 * dist * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "chain radius must lie in (0, 4 d(0,x)] = (0, {}], got {r}",
            4.0 * dist
        )));
    }
    let lo = 12.0 * dist / r;
    let hi = 16.0 * dist / r;
    let k = ((lo - 1e-9 * lo).ceil() as usize).max(1);
    if k as f64 > hi * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("no integer k in [{lo}, {hi}]")));
    }
    let points = (0..=k)
        .map(|j| {
            let f = j as f64 / k as f64;
            [f * x[0], f * x[1], f * x[2]]
        })
        .collect();
    Ok(ChainGeometry {
        endpoint: *x,
        radius: r,
        k,
        points,
        ball_radius: r / 48.0,
        step: r * dist / k as f64,
    })
}

/// A finitely supported random variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteVariable {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl DiscreteVariable {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.len() != probs.len() || values.is_empty() {
            return Err(Error::Config("values and probabilities must have equal nonzero length".to_string()));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Config("probabilities must be nonnegative and sum to one".to_string()));
        }
        Ok(Self { values, probs })
    }

    /// Uniform on `±1`.
    pub fn rademacher() -> Self {
        Self { values: vec![-1.0, 1.0], probs: vec![0.5, 0.5] }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }

    pub fn abs_moment(&self, k: f64) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v.abs().powf(k) * p).sum()
    }

    /// A random centred variable with `support` atoms.
    pub fn random_centered<R: Rng>(rng: &mut R, support: usize) -> Self {
        let u = Uniform::new(-1.0, 1.0).expect("valid range");
        let mut values: Vec<f64> = (0..support).map(|_| u.sample(rng)).collect();
        let mut probs: Vec<f64> = (0..support).map(|_| rng.random::<f64>() + 0.05).collect();
        let s: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= s);
        let m: f64 = values.iter().zip(&probs).map(|(v, p)| v * p).sum();
        values.iter_mut().for_each(|v| *v -= m);
        Self { values, probs }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RosenthalRatio {
    /// `E|Σ Y_i|^k` by enumeration.
    pub lhs: f64,
    pub sum_kth: f64,
    pub variance_power: f64,
    pub ratio: f64,
}

pub const MAX_VARIABLES: usize = 6;
pub const MAX_SUPPORT: usize = 4;

/// Exact `E|Σ Y_i|^k / max(Σ E|Y_i|^k, (Σ E Y_i²)^{k/2})` by enumerating the
/// product space.
pub fn rosenthal_check(vars: &[DiscreteVariable], k: f64) -> Result<RosenthalRatio> {
    if !(k > 2.0) {
        return Err(Error::Config(format!("exponent must exceed 2, got {k}")));
    }
    if vars.is_empty() || vars.len() > MAX_VARIABLES {
        return Err(Error::Config(format!("need 1 to {MAX_VARIABLES} variables, got {}", vars.len())));
    }
    for (i, v) in vars.iter().enumerate() {
        if v.values.len() > MAX_SUPPORT {
            return Err(Error::Config(format!("variable {i} has more than {MAX_SUPPORT} atoms")));
        }
        let scale = v.values.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
        if v.mean().abs() > 1e-12 * scale {
            return Err(Error::Centering(format!("variable {i} has mean {}", v.mean())));
        }
    }
    let mut lhs = 0.0;
    let mut idx = vec![0usize; vars.len()];
    loop {
        let mut s = 0.0;
        let mut p = 1.0;
        for (v, &i) in vars.iter().zip(&idx) {
            s += v.values[i];
            p *= v.probs[i];
        }
        lhs += p * s.abs().powf(k);
        let mut pos = 0;
        loop {
            if pos == vars.len() {
                let sum_kth: f64 = vars.iter().map(|v| v.abs_moment(k)).sum();
                let variance_power = vars.iter().map(|v| v.abs_moment(2.0)).sum::<f64>().powf(k / 2.0);
                return Ok(RosenthalRatio {
                    lhs,
                    sum_kth,
                    variance_power,
                    ratio: lhs / sum_kth.max(variance_power),
                });
            }
            idx[pos] += 1;
            if idx[pos] < vars[pos].values.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosenthalReport {
    pub ensembles: usize,
    pub exponents: Vec<f64>,
    /// Largest ratio per exponent.
    pub max_ratio: Vec<f64>,
    /// Single constant bounding every ratio observed.
    pub constant: f64,
}

/// Ratios over `count` random ensembles with `1..=6` variables of up to four
/// atoms each, for every exponent in `exponents`.
pub fn rosenthal_experiment(count: usize, exponents: &[f64], seed: u64) -> Result<RosenthalReport> {
    let mut max_ratio = vec![0.0f64; exponents.len()];
    for e in 0..count {
        let mut r = rng::stream(seed, tags::ROSENTHAL, e as u64);
        let n = r.random_range(1..=MAX_VARIABLES);
        let vars: Vec<DiscreteVariable> = (0..n)
            .map(|_| {
                let support = r.random_range(2..=MAX_SUPPORT);
                DiscreteVariable::random_centered(&mut r, support)
            })
            .collect();
        for (m, &k) in max_ratio.iter_mut().zip(exponents) {
            *m = m.max(rosenthal_check(&vars, k)?.ratio);
        }
    }
    let constant = max_ratio.iter().cloned().fold(0.0, f64::max);
    Ok(RosenthalReport { ensembles: count, exponents: exponents.to_vec(), max_ratio, constant })
}

/// Arrangement of the `K` dependence cubes making up a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionShape {
    /// A near-cubic block of cubes.
    Box,
    /// A row of cubes along the first axis.
    Segment,
}

/// Cubes per axis for `count` cubes in `dim` dimensions.
pub fn region_layout(shape: RegionShape, count: usize, dim: usize) -> Vec<usize> {
    match shape {
        RegionShape::Segment => {
            let mut v = vec![1; dim];
            v[0] = count;
            v
        }
        RegionShape::Box => {
            let mut rest = count;
            let mut v = Vec::with_capacity(dim);
            for remaining in (1..=dim).rev() {
                let target = (rest as f64).powf(1.0 / remaining as f64);
                let pick = (1..=rest)
                    .filter(|f| rest % f == 0)
                    .min_by(|a, b| (*a as f64 - target).abs().total_cmp(&(*b as f64 - target).abs()))
                    .expect("1 divides everything");
                v.push(pick);
                rest /= pick;
            }
            v
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentConfig {
    pub xi: f64,
    pub counts: Vec<usize>,
    pub samples: usize,
    pub resamples: usize,
    pub shape: RegionShape,
    pub seed: u64,
}

impl Default for MomentConfig {
    fn default() -> Self {
        Self {
            xi: 1.5,
            counts: vec![16, 64, 256, 1024],
            samples: 2000,
            resamples: 1000,
            shape: RegionShape::Box,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub count: usize,
    pub moment: f64,
    pub ci: [f64; 2],
    /// `moment / K^ξ`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentScalingReport {
    pub xi: f64,
    pub p: f64,
    pub mean: f64,
    pub rows: Vec<MomentRow>,
    /// `max_K ratio / min_K ratio`.
    pub spread: f64,
    /// Bootstrap 95% interval of the spread.
    pub spread_ci: [f64; 2],
    /// Whether the two halves of the sample give overlapping intervals for
    /// every `K`.
    pub halves_agree: bool,
    pub pass: bool,
}

/// Bound on `max/min` of the normalised moments required to pass.
pub const MOMENT_SPREAD_LIMIT: f64 = 3.0;

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

/// Integrals `∫_R (Λ^p - E Λ^p)` over the nested regions of each size for
/// one environment.
fn region_integrals(field: &EnvironmentField, layouts: &[Vec<usize>], cube_cells: usize, p: f64, mean: f64) -> Vec<f64> {
    let g = field.grid();
    let vol = g.cell_volume();
    layouts
        .iter()
        .map(|lay| {
            let ext: Vec<usize> = (0..3).map(|a| if a < g.dim() { lay[a] * cube_cells } else { 1 }).collect();
            let mut s = 0.0;
            for i in 0..ext[0] {
                for j in 0..ext[1] {
                    for k in 0..ext[2] {
                        let x = g.index([i, j, k]);
                        s += field.max_eig()[x].powf(p) - mean;
                    }
                }
            }
            s * vol
        })
        .collect()
}

/// Monte Carlo estimate of `E|∫_R (Λ^p - E Λ^p)|^{2ξ}` for regions made of
/// `K` disjoint cubes of the dependence range.
pub fn moment_bound_experiment(spec: &EnvironmentSpec, cfg: &MomentConfig) -> Result<MomentScalingReport> {
    spec.validate()?;
    if !(cfg.xi > 1.0) {
        return Err(Error::Config(format!("ξ must exceed 1, got {}", cfg.xi)));
    }
    if cfg.samples < 4 || cfg.resamples < 10 || cfg.counts.is_empty() {
        return Err(Error::Config("too few samples, resamples or region sizes".to_string()));
    }
    let p = spec.exponents.p;
    let order = 2.0 * cfg.xi * p;
    let smax = spec.scales().into_iter().fold(0.0, f64::max);
    let kappa_moment = match spec.tails.upper {
        Some(a) if a < env::MOMENT_MARGIN * order => {
            return Err(Error::MomentMargin(format!(
                "upper tail index {a} too small for E[Λ^{order}] (need {})",
                env::MOMENT_MARGIN * order
            )))
        }
        _ => spec.tails.moment(p).ok_or_else(|| Error::MomentMargin(format!("E[Λ^{p}] is infinite")))?,
    };
    let mean = kappa_moment * smax.powf(p);
    let g = spec.grid()?;
    let cube_cells = (spec.range / g.h()).round() as usize;
    if cube_cells == 0 || ((cube_cells as f64) * g.h() - spec.range).abs() > 1e-9 * spec.range {
        return Err(Error::Geometry(format!("range {} is not a multiple of the spacing {}", spec.range, g.h())));
    }
    let mut counts = cfg.counts.clone();
    counts.sort_unstable();
    let layouts: Vec<Vec<usize>> = counts.iter().map(|&k| region_layout(cfg.shape, k, g.dim())).collect();
    for (k, lay) in counts.iter().zip(&layouts) {
        if lay.iter().any(|c| c * cube_cells > g.n()) {
            return Err(Error::Geometry(format!("{k} cubes of side {} do not fit in the box", spec.range)));
        }
    }
    let integrals: Vec<Vec<f64>> = (0..cfg.samples)
        .into_par_iter()
        .map(|m| {
            let mut s = spec.clone();
            s.seed = rng::mix(cfg.seed, tags::MOMENTS, m as u64);
            let field = generate_environment(&s)?;
            Ok(region_integrals(&field, &layouts, cube_cells, p, mean))
        })
        .collect::<Result<_>>()?;
    let powers: Vec<Vec<f64>> = integrals
        .iter()
        .map(|row| row.iter().map(|v| v.abs().powf(2.0 * cfg.xi)).collect())
        .collect();
    let nk = counts.len();
    let means = |idx: &mut dyn Iterator<Item = usize>| {
        let mut acc = vec![0.0; nk];
        let mut n = 0usize;
        for i in idx {
            for (a, v) in acc.iter_mut().zip(&powers[i]) {
                *a += v;
            }
            n += 1;
        }
        acc.iter().map(|a| a / n as f64).collect::<Vec<f64>>()
    };
    let norm_k: Vec<f64> = counts.iter().map(|&k| (k as f64).powf(cfg.xi)).collect();
    let spread_of = |m: &[f64]| {
        let r: Vec<f64> = m.iter().zip(&norm_k).map(|(a, b)| a / b).collect();
        let hi = r.iter().cloned().fold(0.0, f64::max);
        let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
        hi / lo
    };
    let point = means(&mut (0..cfg.samples));
    let boot = |lo: usize, hi: usize, tag_index: u64| -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut r = rng::stream(cfg.seed, tags::BOOTSTRAP, tag_index);
        let mut per_k = vec![Vec::with_capacity(cfg.resamples); nk];
        let mut spreads = Vec::with_capacity(cfg.resamples);
        for _ in 0..cfg.resamples {
            let m = means(&mut (0..hi - lo).map(|_| r.random_range(lo..hi)));
            for (v, x) in per_k.iter_mut().zip(&m) {
                v.push(*x);
            }
            spreads.push(spread_of(&m));
        }
        per_k.iter_mut().for_each(|v| v.sort_by(f64::total_cmp));
        spreads.sort_by(f64::total_cmp);
        (per_k, spreads)
    };
    let (per_k, spreads) = boot(0, cfg.samples, 0);
    let half = cfg.samples / 2;
    let (a, _) = boot(0, half, 1);
    let (b, _) = boot(half, cfg.samples, 2);
    let halves_agree = a.iter().zip(&b).all(|(x, y)| {
        percentile(x, 0.025) <= percentile(y, 0.975) && percentile(y, 0.025) <= percentile(x, 0.975)
    });
    let rows: Vec<MomentRow> = counts
        .iter()
        .enumerate()
        .map(|(i, &k)| MomentRow {
            count: k,
            moment: point[i],
            ci: [percentile(&per_k[i], 0.025), percentile(&per_k[i], 0.975)],
            ratio: point[i] / norm_k[i],
        })
        .collect();
    let spread = spread_of(&point);
    let spread_ci = [percentile(&spreads, 0.025), percentile(&spreads, 0.975)];
    Ok(MomentScalingReport {
        xi: cfg.xi,
        p,
        mean,
        rows,
        spread,
        spread_ci,
        halves_agree,
        pass: spread <= MOMENT_SPREAD_LIMIT && spread_ci[1] <= MOMENT_SPREAD_LIMIT,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSumReport {
    pub k: usize,
    pub kappa: f64,
    /// Per-ball factors `(1∨‖Λ‖_{p,B})^κ` and `(1∨‖λ‖_{q,B})^κ`.
    pub upper_terms: Vec<f64>,
    pub lower_terms: Vec<f64>,
    pub sum: f64,
    pub per_ball: f64,
    /// Right side of the Hölder step.
    pub holder_bound: f64,
    pub holder_ok: bool,
}

/// Sum over the chain of `(1∨‖Λ‖_{p,B(y_j,√s)})^κ (1∨‖λ‖_{q,B(y_j,√s)})^κ`
/// for `j = 0..k-1`.
pub fn chained_average_bound(
    field: &EnvironmentField,
    chain: &ChainGeometry,
    ys: &[Point],
    p: f64,
    q: f64,
    kappa: f64,
) -> Result<ChainSumReport> {
    if ys.len() != chain.k + 1 {
        return Err(Error::Sequence(format!("expected {} points, got {}", chain.k + 1, ys.len())));
    }
    for (j, y) in ys.iter().enumerate() {
        if !chain.admits(j, y) {
            return Err(Error::Sequence(format!("point {j} lies outside its ball")));
        }
    }
    if !(p > 1.0 && q > 1.0 && kappa > 0.0) {
        return Err(Error::Config("need p, q > 1 and κ > 0".to_string()));
    }
    let g = field.grid();
    let r = chain.step.sqrt();
    let mut upper_terms = Vec::with_capacity(chain.k);
    let mut lower_terms = Vec::with_capacity(chain.k);
    for y in &ys[..chain.k] {
        let u = env::ball_norm(g, y, r, Some(p), |x| (field.max_eig()[x], 1.0))?;
        let l = env::ball_norm(g, y, r, Some(q), |x| (field.min_eig()[x], 1.0))?;
        upper_terms.push(u.max(1.0).powf(kappa));
        lower_terms.push(l.max(1.0).powf(kappa));
    }
    let sum: f64 = upper_terms.iter().zip(&lower_terms).map(|(a, b)| a * b).sum();
    let holder_bound = holder_bound(&upper_terms, &lower_terms, p, q);
    Ok(ChainSumReport {
        k: chain.k,
        kappa,
        sum,
        per_ball: sum / chain.k as f64,
        holder_ok: sum <= holder_bound * (1.0 + 1e-12),
        holder_bound,
        upper_terms,
        lower_terms,
    })
}

/// `k^{1-1/p-1/q} (Σ a^p)^{1/p} (Σ b^q)^{1/q}`, which dominates `Σ a b` when
/// `1/p + 1/q ≤ 1`.
pub fn holder_bound(a: &[f64], b: &[f64], p: f64, q: f64) -> f64 {
    let k = a.len() as f64;
    let sa: f64 = a.iter().map(|v| v.powf(p)).sum();
    let sb: f64 = b.iter().map(|v| v.powf(q)).sum();
    k.powf(1.0 - 1.0 / p - 1.0 / q) * sa.powf(1.0 / p) * sb.powf(1.0 / q)
}

/// A random admissible sequence: endpoints fixed, interior points uniform
/// in their balls.
pub fn random_chain_points<R: Rng>(rng: &mut R, chain: &ChainGeometry, dim: usize) -> Vec<Point> {
    let u = Uniform::new(-1.0, 1.0).expect("valid range");
    (0..=chain.k)
        .map(|j| {
            if j == 0 || j == chain.k {
                return chain.points[j];
            }
            loop {
                let mut o = [0.0; 3];
                for v in o.iter_mut().take(dim) {
                    *v = u.sample(rng);
                }
                if norm(&o) <= 1.0 {
                    let c = chain.points[j];
                    let r = chain.ball_radius;
                    return [c[0] + r * o[0], c[1] + r * o[1], c[2] + r * o[2]];
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub radius: f64,
    pub k: usize,
    pub mean_per_ball: f64,
    pub max_per_ball: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainExperiment {
    /// Ball-average burn-in radius of the environment at the origin.
    pub burn_in: Option<f64>,
    pub rows: Vec<ChainRow>,
    /// Rows with radius at or above the burn-in.
    pub admissible: usize,
    /// Whether `max sum/k` changes by at most a factor 2 between consecutive
    /// admissible radii (needs two of them).
    pub within_factor_two: bool,
    pub holder_ok: bool,
}

/// Chain sums from the origin to `endpoint` for each radius, over the
/// straight chain and `sequences` random admissible sequences.
pub fn chain_experiment(
    field: &EnvironmentField,
    endpoint: &Point,
    radii: &[f64],
    sequences: usize,
    seed: u64,
    e: &env::Exponents,
    kappa: f64,
) -> Result<ChainExperiment> {
    let dim = field.grid().dim();
    let stats = env::environment_stats(field, &[[0.0; 3]], &[1.0, 2.0, 4.0, 8.0, 16.0], e)?;
    let burn_in = stats.curves[0].burn_in;
    let mut r = rng::stream(seed, tags::CHAIN, 0);
    let mut holder_ok = true;
    let mut rows = Vec::with_capacity(radii.len());
    for &radius in radii {
        let geo = chain_geometry(endpoint, radius)?;
        let mut per_ball = Vec::with_capacity(sequences + 1);
        for s in 0..=sequences {
            let ys = if s == 0 { geo.points.clone() } else { random_chain_points(&mut r, &geo, dim) };
            let rep = chained_average_bound(field, &geo, &ys, e.p, e.q, kappa)?;
            holder_ok &= rep.holder_ok;
            per_ball.push(rep.per_ball);
        }
        rows.push(ChainRow {
            radius,
            k: geo.k,
            mean_per_ball: per_ball.iter().sum::<f64>() / per_ball.len() as f64,
            max_per_ball: per_ball.iter().cloned().fold(0.0, f64::max),
        });
    }
    let mut admissible: Vec<&ChainRow> =
        rows.iter().filter(|row| burn_in.is_some_and(|b| row.radius >= b)).collect();
    admissible.sort_by(|a, b| a.radius.total_cmp(&b.radius));
    let within_factor_two = admissible.len() >= 2
        && admissible.windows(2).all(|w| (0.5..=2.0).contains(&(w[0].max_per_ball / w[1].max_per_ball)));
    Ok(ChainExperiment { burn_in, admissible: admissible.len(), rows, within_factor_two, holder_ok })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_example() {
        let c = chain_geometry(&[10.0, 0.0, 0.0], 4.0).unwrap();
        assert_eq!(c.k, 30);
        assert!((c.step - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.points[30], [10.0, 0.0, 0.0]);
        let c = chain_geometry(&[2.0, 0.0, 0.0], 8.0).unwrap();
        assert!(c.k == 3 || c.k == 4);
        assert!(chain_geometry(&[2.0, 0.0, 0.0], 8.0 + 1e-6).is_err());
    }

    #[test]
    fn rosenthal_closed_forms() {
        let r = rosenthal_check(&[DiscreteVariable::rademacher()], 4.0).unwrap();
        assert_eq!(r.ratio, 1.0);
        let r = rosenthal_check(&[DiscreteVariable::rademacher(), DiscreteVariable::rademacher()], 4.0).unwrap();
        assert_eq!(r.lhs, 8.0);
        assert_eq!(r.ratio, 2.0);
        let off = DiscreteVariable::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert!(matches!(rosenthal_check(&[off], 4.0), Err(Error::Centering(_))));
    }

    #[test]
    fn layouts() {
        assert_eq!(region_layout(RegionShape::Box, 64, 2), vec![8, 8]);
        assert_eq!(region_layout(RegionShape::Box, 64, 3), vec![4, 4, 4]);
        assert_eq!(region_layout(RegionShape::Box, 16, 3).iter().product::<usize>(), 16);
        assert_eq!(region_layout(RegionShape::Segment, 5, 2), vec![5, 1]);
    }

    #[test]
    fn holder_identity() {
        let a = [1.0, 2.0, 3.5];
        let b = [1.2, 1.0, 4.0];
        let s: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!(s <= holder_bound(&a, &b, 3.0, 3.0));
    }
}
