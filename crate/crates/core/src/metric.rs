//! Intrinsic distances as shortest paths on the periodic grid graph.
//!
//! An edge with step vector `e` has length `|e| · ½(w(x) + w(y))` where
//! `w(z) = √(Σ_i ê_i² θ(z) / a_i(z))` is the Riemannian speed along `ê`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::EnvironmentField;
use crate::error::{Error, Result};
use crate::grid::{Grid, Point};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neighborhood {
    /// Axis neighbours only.
    N4,
    /// Axis and diagonal neighbours.
    N8,
    /// N8 plus knight moves.
    N16,
    N6,
    /// All 26 neighbours of the 3×3×3 cube.
    N26,
}

impl Neighborhood {
    pub fn dim(&self) -> usize {
        match self {
            Neighborhood::N4 | Neighborhood::N8 | Neighborhood::N16 => 2,
            Neighborhood::N6 | Neighborhood::N26 => 3,
        }
    }

    pub fn parse(s: &str, dim: usize) -> Result<Self> {
        let nb = match s {
            "4" => Neighborhood::N4,
            "8" => Neighborhood::N8,
            "16" => Neighborhood::N16,
            "6" => Neighborhood::N6,
            "26" => Neighborhood::N26,
            _ => return Err(Error::Config(format!("unknown neighbourhood {s}"))),
        };
        if nb.dim() != dim {
            return Err(Error::Config(format!("neighbourhood {s} does not fit dimension {dim}")));
        }
        Ok(nb)
    }

    /// The default for a dimension: 16 in 2D, 26 in 3D.
    pub fn default_for(dim: usize) -> Self {
        if dim == 2 {
            Neighborhood::N16
        } else {
            Neighborhood::N26
        }
    }

    pub fn steps(&self) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        match self {
            Neighborhood::N4 | Neighborhood::N8 | Neighborhood::N16 => {
                let r = if *self == Neighborhood::N16 { 2 } else { 1 };
                for i in -r..=r {
                    for j in -r..=r {
                        let (a, b) = (i64::abs(i), i64::abs(j));
                        let keep = match self {
                            Neighborhood::N4 => a + b == 1,
                            Neighborhood::N8 => a.max(b) == 1,
                            _ => a.max(b) == 1 || (a.min(b) == 1 && a.max(b) == 2),
                        };
                        if keep {
                            out.push([i, j, 0]);
                        }
                    }
                }
            }
            Neighborhood::N6 | Neighborhood::N26 => {
                for i in -1..=1i64 {
                    for j in -1..=1i64 {
                        for k in -1..=1i64 {
                            let s = i.abs() + j.abs() + k.abs();
                            if s > 0 && (*self == Neighborhood::N26 || s == 1) {
                                out.push([i, j, k]);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Precomputed edge list for a neighbourhood: step, its length in grid units
/// and the squared direction cosines.
struct Stencil {
    steps: Vec<[i64; 3]>,
    lengths: Vec<f64>,
    cos2: Vec<[f64; 3]>,
}

impl Stencil {
    fn new(nb: Neighborhood) -> Self {
        let steps = nb.steps();
        let lengths: Vec<f64> = steps
            .iter()
            .map(|s| ((s[0] * s[0] + s[1] * s[1] + s[2] * s[2]) as f64).sqrt())
            .collect();
        let cos2 = steps
            .iter()
            .zip(&lengths)
            .map(|(s, l)| {
                let mut c = [0.0; 3];
                for i in 0..3 {
                    c[i] = (s[i] as f64 / l).powi(2);
                }
                c
            })
            .collect();
        Self { steps, lengths, cos2 }
    }
}

/// Per-node, per-direction speeds `w`.
fn direction_speeds(field: &EnvironmentField, st: &Stencil) -> Vec<Vec<f64>> {
    let g = field.grid();
    let dim = g.dim();
    st.cos2
        .iter()
        .map(|c| {
            (0..g.len())
                .into_par_iter()
                .map(|x| {
                    let mut s = 0.0;
                    for i in 0..dim {
                        if c[i] > 0.0 {
                            s += c[i] / field.diag(i)[x];
                        }
                    }
                    (s * field.speed()[x]).sqrt()
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricField {
    pub source: usize,
    pub neighborhood: Neighborhood,
    pub grid: Grid,
    #[serde(skip)]
    pub distances: Vec<f64>,
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Weighted periodic grid graph for one field and neighbourhood.
pub struct MetricGraph<'a> {
    field: &'a EnvironmentField,
    nb: Neighborhood,
    st: Stencil,
    speeds: Vec<Vec<f64>>,
}

impl<'a> MetricGraph<'a> {
    pub fn new(field: &'a EnvironmentField, nb: Neighborhood) -> Result<Self> {
        if nb.dim() != field.grid().dim() {
            return Err(Error::Config(format!(
                "neighbourhood {nb:?} does not fit dimension {}",
                field.grid().dim()
            )));
        }
        let st = Stencil::new(nb);
        let speeds = direction_speeds(field, &st);
        Ok(Self { field, nb, st, speeds })
    }

    /// Outgoing edges `(target, length)` of node `x`.
    pub fn edges(&self, x: usize) -> impl Iterator<Item = Result<(usize, f64)>> + '_ {
        let g = self.field.grid();
        let c = g.coords(x);
        let h = g.h();
        (0..self.st.steps.len()).map(move |k| {
            let s = self.st.steps[k];
            let y = g.index_wrapped([c[0] as i64 + s[0], c[1] as i64 + s[1], c[2] as i64 + s[2]]);
            let w = self.st.lengths[k] * h * 0.5 * (self.speeds[k][x] + self.speeds[k][y]);
            if w.is_finite() && w > 0.0 {
                Ok((y, w))
            } else {
                Err(Error::Metric { from: x, to: y, reason: format!("edge length {w}") })
            }
        })
    }

    pub fn dijkstra(&self, x0: usize) -> Result<MetricField> {
        let g = self.field.grid();
        if x0 >= g.len() {
            return Err(Error::Domain(format!("source {x0} outside grid")));
        }
        let mut dist = vec![f64::INFINITY; g.len()];
        let mut done = vec![false; g.len()];
        let mut heap = BinaryHeap::new();
        dist[x0] = 0.0;
        heap.push(Entry(0.0, x0));
        while let Some(Entry(d, x)) = heap.pop() {
            if done[x] {
                continue;
            }
            done[x] = true;
            for e in self.edges(x) {
                let (y, w) = e?;
                let nd = d + w;
                if nd < dist[y] {
                    dist[y] = nd;
                    heap.push(Entry(nd, y));
                }
            }
        }
        Ok(MetricField { source: x0, neighborhood: self.nb, grid: *g, distances: dist })
    }
}

pub fn intrinsic_distance_map(
    field: &EnvironmentField,
    x0: usize,
    nb: Neighborhood,
) -> Result<MetricField> {
    MetricGraph::new(field, nb)?.dijkstra(x0)
}

impl MetricField {
    pub fn save(&self, dir: &Path) -> Result<()> {
        io::ensure_dir(dir)?;
        io::write_json(&dir.join("meta.json"), self)?;
        io::write_f64_array(&dir.join("d.f64"), &self.distances)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut m: MetricField = io::read_json(&dir.join("meta.json"))?;
        m.distances = io::read_f64_array(&dir.join("d.f64"))?;
        m.grid.check_len(m.distances.len())?;
        Ok(m)
    }
}

/// Graph distances for the unit tensor and unit speed on the same stencil.
pub fn graph_euclidean_map(grid: &Grid, x0: usize, nb: Neighborhood) -> Result<MetricField> {
    let unit = EnvironmentField::constant(*grid, 1.0, 1.0)?;
    intrinsic_distance_map(&unit, x0, nb)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub pairs: usize,
    /// `min_y d_θ(x0, y) / |x0 - y|`.
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `min_y d_θ / d_graph` where `d_graph` is the unit-tensor graph metric.
    pub min_graph_ratio: f64,
}

/// Ratios of intrinsic to Euclidean distance for a map computed at `θ ≡ Λ`.
pub fn euclidean_comparison(metric: &MetricField, field: &EnvironmentField) -> Result<ComparisonReport> {
    let lambda_speed = field
        .speed()
        .iter()
        .zip(field.max_eig())
        .all(|(t, l)| (t - l).abs() <= 1e-12 * l);
    if !lambda_speed {
        return Err(Error::Mode("comparison needs the speed measure equal to Λ".to_string()));
    }
    if metric.grid != *field.grid() {
        return Err(Error::Pairing("metric and field grids differ".to_string()));
    }
    let reference = graph_euclidean_map(field.grid(), metric.source, metric.neighborhood)?;
    let g = field.grid();
    let mut rep = ComparisonReport {
        pairs: 0,
        min_ratio: f64::INFINITY,
        max_ratio: 0.0,
        min_graph_ratio: f64::INFINITY,
    };
    for y in 0..g.len() {
        if y == metric.source {
            continue;
        }
        let d = g.distance(metric.source, y);
        let r = metric.distances[y] / d;
        rep.pairs += 1;
        rep.min_ratio = rep.min_ratio.min(r);
        rep.max_ratio = rep.max_ratio.max(r);
        rep.min_graph_ratio = rep.min_graph_ratio.min(metric.distances[y] / reference.distances[y]);
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub pairs: usize,
    pub lower_violations: usize,
    pub upper_violations: usize,
    /// `√(min θ/Λ)`.
    pub lower_factor: f64,
    /// `√(max θ/λ)`.
    pub upper_factor: f64,
}

/// Checks `√(min θ/Λ)·|x-y| ≤ d_θ(x,y) ≤ √(max θ/λ)·d_graph(x,y)` on the
/// given targets. The upper side uses the unit-tensor graph distance because
/// graph paths cannot be shorter than that on the same stencil.
pub fn sandwich_check(
    metric: &MetricField,
    field: &EnvironmentField,
    targets: &[usize],
) -> Result<SandwichReport> {
    let g = field.grid();
    let lo = (0..g.len())
        .map(|x| field.speed()[x] / field.max_eig()[x])
        .fold(f64::INFINITY, f64::min)
        .sqrt();
    let hi = (0..g.len())
        .map(|x| field.speed()[x] / field.min_eig()[x])
        .fold(0.0, f64::max)
        .sqrt();
    let reference = graph_euclidean_map(g, metric.source, metric.neighborhood)?;
    let mut rep = SandwichReport {
        pairs: targets.len(),
        lower_violations: 0,
        upper_violations: 0,
        lower_factor: lo,
        upper_factor: hi,
    };
    for &y in targets {
        let d = metric.distances[y];
        if d < lo * g.distance(metric.source, y) * (1.0 - 1e-12) {
            rep.lower_violations += 1;
        }
        if d > hi * reference.distances[y] * (1.0 + 1e-12) {
            rep.upper_violations += 1;
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleReport {
    pub triples: usize,
    pub violations: usize,
    pub worst_excess: f64,
}

/// Audits `d(x,y) ≤ d(x,z) + d(z,y)` on triples drawn from precomputed maps.
/// `maps` must contain a map for every `x` and `z` used.
pub fn triangle_audit(maps: &[MetricField], triples: &[(usize, usize, usize)]) -> Result<TriangleReport> {
    let find = |s: usize| {
        maps.iter()
            .find(|m| m.source == s)
            .ok_or_else(|| Error::Pairing(format!("no distance map from node {s}")))
    };
    let mut rep = TriangleReport { triples: triples.len(), violations: 0, worst_excess: 0.0 };
    for &(x, z, y) in triples {
        let (mx, mz) = (find(x)?, find(z)?);
        let lhs = mx.distances[y];
        let rhs = mx.distances[z] + mz.distances[y];
        let excess = lhs - rhs;
        if excess > 1e-12 * rhs.max(1e-300) {
            rep.violations += 1;
        }
        rep.worst_excess = rep.worst_excess.max(excess);
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityReport {
    pub spacings: Vec<f64>,
    /// `max |d^{(h_k)} - d^{(h_{k+1})}|` over nodes of the coarsest grid.
    pub differences: Vec<f64>,
    /// `log2` of successive difference ratios.
    pub observed_orders: Vec<f64>,
    /// Radii and `sup_{|y-x0| ≤ ε} d_θ(x0, y)` on the finest grid.
    pub ball_radii: Vec<f64>,
    pub ball_sups: Vec<f64>,
    pub convergent: bool,
}

/// Minimum ratio between successive refinement differences for a sequence
/// to count as convergent.
pub const CONVERGENCE_RATIO: f64 = 1.5;

/// Self-convergence study over nested refinements of the same continuum
/// field. `levels[k]` must have spacing `h_0 / 2^k` with the same side.
pub fn strict_locality_probe(levels: &[MetricField], source: &Point) -> Result<LocalityReport> {
    if levels.len() < 3 {
        return Err(Error::Config("need at least three refinement levels".to_string()));
    }
    let coarse = levels[0].grid;
    for (k, m) in levels.iter().enumerate() {
        let expect = coarse.n() << k;
        if m.grid.n() != expect || (m.grid.side() - coarse.side()).abs() > 1e-9 * coarse.side() {
            return Err(Error::Pairing(format!("level {k} is not a dyadic refinement")));
        }
        if m.source != m.grid.nearest(source) {
            return Err(Error::Pairing(format!("level {k} has a different source")));
        }
    }
    let mut differences = Vec::new();
    for k in 0..levels.len() - 1 {
        let (a, b) = (&levels[k], &levels[k + 1]);
        let fa = 1usize << k;
        let diff = (0..coarse.len())
            .map(|x| {
                let c = coarse.coords(x);
                let ia = a.grid.index([c[0] * fa, c[1] * fa, c[2] * fa]);
                let ib = b.grid.index([c[0] * 2 * fa, c[1] * 2 * fa, c[2] * 2 * fa]);
                (a.distances[ia] - b.distances[ib]).abs()
            })
            .fold(0.0, f64::max);
        differences.push(diff);
    }
    let observed_orders: Vec<f64> = differences.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let convergent = differences
        .windows(2)
        .all(|w| w[1] == 0.0 || w[0] / w[1] >= CONVERGENCE_RATIO);
    let fine = levels.last().expect("three levels");
    let h = fine.grid.h();
    let mut ball_radii = Vec::new();
    let mut ball_sups = Vec::new();
    let mut eps = h;
    while eps <= fine.grid.side() / 8.0 {
        let s = fine
            .grid
            .ball(source, eps)
            .into_iter()
            .map(|y| fine.distances[y])
            .fold(0.0, f64::max);
        ball_radii.push(eps);
        ball_sups.push(s);
        eps *= 2.0;
    }
    Ok(LocalityReport {
        spacings: levels.iter().map(|m| m.grid.h()).collect(),
        differences,
        observed_orders,
        ball_radii,
        ball_sups,
        convergent,
    })
}
