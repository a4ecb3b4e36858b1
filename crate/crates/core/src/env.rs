//! Random environments: diagonal conductivity tensors and speed measures on a
//! periodic grid, generated from finite-range Gaussian noise pushed through a
//! two-sided Pareto transform.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Point};
use crate::io;
use crate::linalg::normal_cdf_pair;
use crate::rng::{self, tags};

pub const FORMAT_VERSION: u32 = 1;

/// Required headroom of a tail index over the highest moment it must support.
pub const MOMENT_MARGIN: f64 = 1.1;

/// How the Gaussian field underlying the environment is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MarginalModel {
    /// Iid block values smoothed by a compact biweight mollifier.
    Checkerboard,
    /// Poisson superposition of biweight bumps; `density` is points per unit volume.
    Blob { density: f64 },
}

/// Pareto tail indices of the multiplier `κ`. `upper` controls
/// `P(κ > x) = x^{-upper} / 2`, `lower` controls `P(κ < x) = x^{lower} / 2`.
/// `None` switches that side off.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TailIndices {
    pub upper: Option<f64>,
    pub lower: Option<f64>,
}

impl TailIndices {
    pub const NONE: TailIndices = TailIndices { upper: None, lower: None };

    pub fn symmetric(index: f64) -> Self {
        Self { upper: Some(index), lower: Some(index) }
    }

    /// `E[κ^m]`, or `None` when infinite.
    pub fn moment(&self, m: f64) -> Option<f64> {
        let up = match self.upper {
            None => 0.5,
            Some(a) if a > m => 0.5 * a / (a - m),
            Some(_) => return None,
        };
        let lo = match self.lower {
            None => 0.5,
            Some(a) if a + m > 0.0 => 0.5 * a / (a + m),
            Some(_) => return None,
        };
        Some(up + lo)
    }

    /// Maps a standard normal value to `κ`.
    pub fn transform(&self, g: f64) -> f64 {
        let (lo, up) = normal_cdf_pair(g);
        if g >= 0.0 {
            match self.upper {
                Some(a) => (2.0 * up).max(f64::MIN_POSITIVE).powf(-1.0 / a),
                None => 1.0,
            }
        } else {
            match self.lower {
                Some(a) => (2.0 * lo).max(f64::MIN_POSITIVE).powf(1.0 / a),
                None => 1.0,
            }
        }
    }

    fn check(&self, what: &str, m: f64, side_upper: bool) -> Result<()> {
        let idx = if side_upper { self.upper } else { self.lower };
        match idx {
            Some(a) if a < MOMENT_MARGIN * m => Err(Error::MomentMargin(format!(
                "{what} needs tail index >= {:.4} (10% above {m}), got {a}",
                MOMENT_MARGIN * m
            ))),
            _ => Ok(()),
        }
    }

    fn validate(&self) -> Result<()> {
        for a in [self.upper, self.lower].into_iter().flatten() {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidSpec(format!("tail index must be positive, got {a}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SpeedMode {
    /// Speed measure identically one.
    #[default]
    Unit,
    /// Speed measure equal to the largest tensor eigenvalue.
    Lambda,
    /// Speed measure drawn from an independent field with its own tails.
    Independent { tails: TailIndices },
}

/// Integrability regime requested for the environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `1/r + 1/q + (r-1)/(r(p-1)) < 2/d` with the speed measure in play.
    M1,
    /// `1/p + 1/q < 2/d`.
    M2,
}

/// Target integrability exponents. `r = None` means `r = ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub p: f64,
    pub q: f64,
    pub r: Option<f64>,
}

impl Default for Exponents {
    fn default() -> Self {
        Self { p: 2.0, q: 2.0, r: None }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub dim: usize,
    /// Box side length.
    pub side: f64,
    /// Cells per side.
    pub cells: usize,
    /// Dependence range.
    pub range: f64,
    pub model: MarginalModel,
    #[serde(default)]
    pub tails: TailIndices,
    /// Per-axis scale of the tensor diagonal; defaults to all ones.
    #[serde(default)]
    pub anisotropy: Option<Vec<f64>>,
    #[serde(default)]
    pub speed: SpeedMode,
    #[serde(default)]
    pub exponents: Exponents,
    #[serde(default)]
    pub regime: Option<Regime>,
    pub seed: u64,
    /// When false the block noise is used raw, giving a discontinuous field.
    #[serde(default = "default_true")]
    pub mollified: bool,
}

impl EnvironmentSpec {
    /// A checkerboard spec with no tails (constant unit environment).
    pub fn constant(dim: usize, side: f64, cells: usize) -> Self {
        Self {
            dim,
            side,
            cells,
            range: 4.0 * side / cells as f64,
            model: MarginalModel::Checkerboard,
            tails: TailIndices::NONE,
            anisotropy: None,
            speed: SpeedMode::Unit,
            exponents: Exponents::default(),
            regime: None,
            seed: 0,
            mollified: true,
        }
    }

    pub fn spacing(&self) -> f64 {
        self.side / self.cells as f64
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.cells, self.spacing())
    }

    pub fn scales(&self) -> Vec<f64> {
        self.anisotropy.clone().unwrap_or_else(|| vec![1.0; self.dim])
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.dim != 2 && self.dim != 3 {
            problems.push(format!("dimension must be 2 or 3, got {}", self.dim));
        }
        if self.cells < 8 {
            problems.push(format!("need at least 8 cells per side, got {}", self.cells));
        }
        let h = self.spacing();
        if !(self.side.is_finite() && h > 0.0) {
            problems.push(format!("spacing must be positive, got {h}"));
        }
        if !(self.range >= 2.0 * h * (1.0 - 1e-12)) {
            problems.push(format!("dependence range {} below twice the spacing {h}", self.range));
        }
        if self.range > self.side / 2.0 {
            problems.push(format!("dependence range {} exceeds half the box", self.range));
        }
        if let MarginalModel::Blob { density } = self.model {
            if !(density.is_finite() && density > 0.0) {
                problems.push(format!("blob density must be positive, got {density}"));
            }
        }
        let s = self.scales();
        if s.len() != self.dim || s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            problems.push("anisotropy must have one positive entry per axis".to_string());
        }
        let e = self.exponents;
        if !(e.p > 1.0 && e.q > 1.0 && e.p.is_finite() && e.q.is_finite()) {
            problems.push(format!("exponents p, q must be finite and > 1, got {}, {}", e.p, e.q));
        }
        if let Some(r) = e.r {
            if !(r > 1.0 && r.is_finite()) {
                problems.push(format!("exponent r must be > 1, got {r}"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::InvalidSpec(problems.join("; ")));
        }
        self.tails.validate()?;
        if let SpeedMode::Independent { tails } = self.speed {
            tails.validate()?;
        }
        let d = self.dim as f64;
        match self.regime {
            Some(Regime::M2) if 1.0 / e.p + 1.0 / e.q >= 2.0 / d => {
                return Err(Error::InvalidSpec(format!(
                    "1/p + 1/q = {} is not below 2/d = {}",
                    1.0 / e.p + 1.0 / e.q,
                    2.0 / d
                )));
            }
            Some(Regime::M1) => {
                let inv_r = e.r.map_or(0.0, |r| 1.0 / r);
                let lhs = inv_r + 1.0 / e.q + (1.0 - inv_r) / (e.p - 1.0);
                if lhs >= 2.0 / d {
                    return Err(Error::InvalidSpec(format!(
                        "1/r + 1/q + (r-1)/(r(p-1)) = {lhs} is not below 2/d = {}",
                        2.0 / d
                    )));
                }
            }
            _ => {}
        }
        self.check_moments()
    }

    fn check_moments(&self) -> Result<()> {
        let e = self.exponents;
        let t = &self.tails;
        t.check("E[Λ^p]", e.p, true)?;
        t.check("E[λ^-q]", e.q, false)?;
        let speed_tails = match self.speed {
            SpeedMode::Unit => TailIndices::NONE,
            SpeedMode::Lambda => *t,
            SpeedMode::Independent { tails } => tails,
        };
        match e.r {
            Some(r) => speed_tails.check("E[θ^r]", r, true)?,
            None if speed_tails.upper.is_some() => {
                return Err(Error::MomentMargin(
                    "r = ∞ needs a bounded speed measure".to_string(),
                ))
            }
            None => {}
        }
        speed_tails.check("E[θ^-1]", 1.0, false)?;
        if self.regime == Some(Regime::M1) {
            match self.speed {
                SpeedMode::Unit => {}
                SpeedMode::Lambda => t.check("E[Λ^p θ^(1-p)]", 1.0, true)?,
                SpeedMode::Independent { tails } => {
                    tails.check("E[Λ^p θ^(1-p)]", e.p - 1.0, false)?
                }
            }
        }
        Ok(())
    }
}

/// A sampled environment. Arrays are indexed by grid node.
#[derive(Debug, Clone)]
pub struct EnvironmentField {
    spec: Option<EnvironmentSpec>,
    grid: Grid,
    diag: Vec<Vec<f64>>,
    min_eig: Vec<f64>,
    max_eig: Vec<f64>,
    speed: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FieldMeta {
    format_version: u32,
    grid: Grid,
    spec: Option<EnvironmentSpec>,
    seed: Option<u64>,
}

impl EnvironmentField {
    /// Builds a field from explicit arrays, checking every invariant.
    pub fn from_arrays(grid: Grid, diag: Vec<Vec<f64>>, speed: Vec<f64>) -> Result<Self> {
        if diag.len() != grid.dim() {
            return Err(Error::Dimension { expected: grid.dim(), got: diag.len() });
        }
        for a in &diag {
            grid.check_len(a.len())?;
        }
        grid.check_len(speed.len())?;
        let n = grid.len();
        let mut min_eig = vec![f64::INFINITY; n];
        let mut max_eig = vec![0.0f64; n];
        for a in &diag {
            for x in 0..n {
                min_eig[x] = min_eig[x].min(a[x]);
                max_eig[x] = max_eig[x].max(a[x]);
            }
        }
        for x in 0..n {
            if !(min_eig[x] > 0.0 && max_eig[x].is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "tensor entries at node {x} must be positive and finite"
                )));
            }
            if !(speed[x] > 0.0 && speed[x].is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "speed measure at node {x} must be positive and finite, got {}",
                    speed[x]
                )));
            }
        }
        Ok(Self { spec: None, grid, diag, min_eig, max_eig, speed })
    }

    /// Constant tensor `value * I` with speed measure `speed`.
    pub fn constant(grid: Grid, value: f64, speed: f64) -> Result<Self> {
        let n = grid.len();
        Self::from_arrays(grid, vec![vec![value; n]; grid.dim()], vec![speed; n])
    }

    pub fn spec(&self) -> Option<&EnvironmentSpec> {
        self.spec.as_ref()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Tensor diagonal entries along `axis`.
    pub fn diag(&self, axis: usize) -> &[f64] {
        &self.diag[axis]
    }

    pub fn min_eig(&self) -> &[f64] {
        &self.min_eig
    }

    pub fn max_eig(&self) -> &[f64] {
        &self.max_eig
    }

    pub fn speed(&self) -> &[f64] {
        &self.speed
    }

    /// Same tensor with a different speed measure.
    pub fn with_speed(&self, speed: Vec<f64>) -> Result<Self> {
        let mut out = Self::from_arrays(self.grid, self.diag.clone(), speed)?;
        out.spec = self.spec.clone();
        Ok(out)
    }

    /// Same tensor with the speed measure set to the largest eigenvalue.
    pub fn with_lambda_speed(&self) -> Self {
        let mut out = self.clone();
        out.speed = self.max_eig.clone();
        if let Some(s) = out.spec.as_mut() {
            s.speed = SpeedMode::Lambda;
        }
        out
    }

    pub fn with_unit_speed(&self) -> Self {
        let mut out = self.clone();
        out.speed = vec![1.0; self.grid.len()];
        if let Some(s) = out.spec.as_mut() {
            s.speed = SpeedMode::Unit;
        }
        out
    }

    /// Tensor multiplied by `factor`, speed unchanged.
    pub fn scaled_tensor(&self, factor: f64) -> Result<Self> {
        let diag = self.diag.iter().map(|a| a.iter().map(|v| v * factor).collect()).collect();
        Self::from_arrays(self.grid, diag, self.speed.clone())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        io::ensure_dir(dir)?;
        let meta = FieldMeta {
            format_version: FORMAT_VERSION,
            grid: self.grid,
            seed: self.spec.as_ref().map(|s| s.seed),
            spec: self.spec.clone(),
        };
        io::write_json(&dir.join("meta.json"), &meta)?;
        for (i, a) in self.diag.iter().enumerate() {
            io::write_f64_array(&dir.join(format!("a{i}.f64")), a)?;
        }
        io::write_f64_array(&dir.join("theta.f64"), &self.speed)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let meta: FieldMeta = io::read_json(&meta_path)?;
        if meta.format_version != FORMAT_VERSION {
            return Err(Error::Parse {
                path: meta_path,
                line: 0,
                column: 0,
                message: format!("unsupported format version {}", meta.format_version),
            });
        }
        let grid = Grid::new(meta.grid.dim(), meta.grid.n(), meta.grid.h())?;
        let diag = (0..grid.dim())
            .map(|i| io::read_f64_array(&dir.join(format!("a{i}.f64"))))
            .collect::<Result<Vec<_>>>()?;
        let speed = io::read_f64_array(&dir.join("theta.f64"))?;
        let mut f = Self::from_arrays(grid, diag, speed)?;
        f.spec = meta.spec;
        Ok(f)
    }
}

/// Biweight kernel `15/16 (1-u²)²` on `[-1, 1]` and its CDF.
fn biweight_cdf(u: f64) -> f64 {
    if u <= -1.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    0.5 + 15.0 / 16.0 * (u - 2.0 * u.powi(3) / 3.0 + u.powi(5) / 5.0)
}

fn bump(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (1.0 - r2) * (1.0 - r2)
    }
}

/// Layout of the noise blocks: `per_side` blocks of side `side`, shifted by `offset`.
struct Blocks {
    dim: usize,
    per_side: usize,
    side: f64,
    offset: [f64; 3],
}

impl Blocks {
    fn new(spec: &EnvironmentSpec) -> Self {
        let per_side = ((spec.side / (spec.range / 2.0)) - 1e-9).ceil().max(1.0) as usize;
        let side = spec.side / per_side as f64;
        let mut r = rng::stream(spec.seed, tags::GRID_OFFSET, 0);
        let mut offset = [0.0; 3];
        for o in offset.iter_mut().take(spec.dim) {
            *o = r.random::<f64>() * side;
        }
        Self { dim: spec.dim, per_side, side, offset }
    }

    fn count(&self) -> usize {
        self.per_side.pow(self.dim as u32)
    }

    fn index(&self, c: [i64; 3]) -> usize {
        let n = self.per_side as i64;
        let mut idx = 0usize;
        for &ci in c.iter().take(self.dim) {
            idx = idx * self.per_side + ci.rem_euclid(n) as usize;
        }
        idx
    }

    /// Position of `p` in block coordinates (offset removed).
    fn local(&self, p: &Point, axis: usize) -> f64 {
        (p[axis] - self.offset[axis]) / self.side
    }
}

fn block_normals(spec: &EnvironmentSpec, blocks: &Blocks, tag: u64) -> Vec<f64> {
    (0..blocks.count())
        .into_par_iter()
        .map(|b| rng::stream(spec.seed, tag, b as u64).sample(StandardNormal))
        .collect()
}

/// Standard normal field from mollified block noise.
fn checkerboard_field(spec: &EnvironmentSpec, grid: &Grid, tag: u64) -> Vec<f64> {
    let blocks = Blocks::new(spec);
    let values = block_normals(spec, &blocks, tag);
    let rho = spec.range / 4.0;
    let dim = spec.dim;
    (0..grid.len())
        .into_par_iter()
        .map(|x| {
            let p = grid.position(x);
            if !spec.mollified {
                let mut c = [0i64; 3];
                for (axis, ci) in c.iter_mut().enumerate().take(dim) {
                    *ci = blocks.local(&p, axis).floor() as i64;
                }
                return values[blocks.index(c)];
            }
            // Per axis, at most a few blocks meet the mollifier window.
            let mut ranges: [Vec<(i64, f64)>; 3] = Default::default();
            for axis in 0..dim {
                let u = blocks.local(&p, axis);
                let w = rho / blocks.side;
                let lo = (u - w).floor() as i64;
                let hi = (u + w).floor() as i64;
                for b in lo..=hi {
                    let a0 = (b as f64 - u) / w;
                    let a1 = (b as f64 + 1.0 - u) / w;
                    let wt = biweight_cdf(a1) - biweight_cdf(a0);
                    if wt > 0.0 {
                        ranges[axis].push((b, wt));
                    }
                }
            }
            if dim == 2 {
                ranges[2].push((0, 1.0));
            }
            let (mut num, mut den) = (0.0, 0.0);
            for &(b0, w0) in &ranges[0] {
                for &(b1, w1) in &ranges[1] {
                    for &(b2, w2) in &ranges[2] {
                        let w = w0 * w1 * w2;
                        num += w * values[blocks.index([b0, b1, b2])];
                        den += w * w;
                    }
                }
            }
            num / den.sqrt()
        })
        .collect()
}

/// Standard normal field from a marked Poisson bump superposition.
fn blob_field(spec: &EnvironmentSpec, grid: &Grid, density: f64, tag: u64) -> Vec<f64> {
    let blocks = Blocks::new(spec);
    let dim = spec.dim;
    let mean = density * blocks.side.powi(dim as i32);
    let poisson = Poisson::new(mean).ok();
    let points: Vec<Vec<(Point, f64)>> = (0..blocks.count())
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(spec.seed, tag ^ (tags::BLOB_POINTS << 32), b as u64);
            let count = poisson.as_ref().map_or(0, |d| d.sample(&mut r) as usize);
            let mut c = [0usize; 3];
            let mut rem = b;
            for axis in (0..dim).rev() {
                c[axis] = rem % blocks.per_side;
                rem /= blocks.per_side;
            }
            (0..count)
                .map(|_| {
                    let mut z = [0.0; 3];
                    for axis in 0..dim {
                        z[axis] = blocks.offset[axis]
                            + (c[axis] as f64 + r.random::<f64>()) * blocks.side;
                    }
                    (z, r.sample::<f64, _>(StandardNormal))
                })
                .collect()
        })
        .collect();
    let radius = spec.range / 2.0;
    let reach = (radius / blocks.side).ceil() as i64 + 1;
    let box_side = spec.side;
    (0..grid.len())
        .into_par_iter()
        .map(|x| {
            let p = grid.position(x);
            let mut base = [0i64; 3];
            for (axis, b) in base.iter_mut().enumerate().take(dim) {
                *b = blocks.local(&p, axis).floor() as i64;
            }
            let zr = if dim == 3 { -reach..=reach } else { 0..=0 };
            let (mut num, mut den) = (0.0, 0.0);
            for i in -reach..=reach {
                for j in -reach..=reach {
                    for k in zr.clone() {
                        let b = blocks.index([base[0] + i, base[1] + j, base[2] + k]);
                        for (z, mark) in &points[b] {
                            let mut r2 = 0.0;
                            for axis in 0..dim {
                                let mut dz = p[axis] - z[axis];
                                dz -= box_side * (dz / box_side).round();
                                r2 += dz * dz;
                            }
                            let phi = if spec.mollified {
                                bump(r2 / (radius * radius))
                            } else if r2 < radius * radius {
                                1.0
                            } else {
                                0.0
                            };
                            num += phi * mark;
                            den += phi * phi;
                        }
                    }
                }
            }
            if den > 0.0 {
                num / den.sqrt()
            } else {
                0.0
            }
        })
        .collect()
}

fn gaussian_field(spec: &EnvironmentSpec, grid: &Grid, tag: u64) -> Vec<f64> {
    match spec.model {
        MarginalModel::Checkerboard => checkerboard_field(spec, grid, tag),
        MarginalModel::Blob { density } => blob_field(spec, grid, density, tag),
    }
}

/// Samples the environment described by `spec`. The result depends only on
/// the environment spec (including its seed), never on the worker count.
pub fn generate_environment(spec: &EnvironmentSpec) -> Result<EnvironmentField> {
    spec.validate()?;
    let grid = spec.grid()?;
    let scales = spec.scales();
    let kappa: Vec<f64> = if spec.tails == TailIndices::NONE {
        vec![1.0; grid.len()]
    } else {
        gaussian_field(spec, &grid, tags::CONDUCTANCE)
            .into_par_iter()
            .map(|g| spec.tails.transform(g))
            .collect()
    };
    let diag: Vec<Vec<f64>> = scales.iter().map(|s| kappa.iter().map(|k| k * s).collect()).collect();
    let speed = match spec.speed {
        SpeedMode::Unit => vec![1.0; grid.len()],
        SpeedMode::Lambda => {
            let smax = scales.iter().cloned().fold(0.0, f64::max);
            kappa.iter().map(|k| k * smax).collect()
        }
        SpeedMode::Independent { tails } => gaussian_field(spec, &grid, tags::SPEED)
            .into_par_iter()
            .map(|g| tails.transform(g))
            .collect(),
    };
    let mut field = EnvironmentField::from_arrays(grid, diag, speed)?;
    field.spec = Some(spec.clone());
    Ok(field)
}

/// Discrete ball norm `(mean_B |f|^p w)^{1/p}`; `p = None` gives the sup.
pub fn ball_norm<F>(grid: &Grid, center: &Point, radius: f64, p: Option<f64>, f: F) -> Result<f64>
where
    F: Fn(usize) -> (f64, f64),
{
    check_radius(grid, radius)?;
    let nodes = grid.ball(center, radius);
    Ok(norm_over(&nodes, p, f))
}

pub(crate) fn norm_over<F>(nodes: &[usize], p: Option<f64>, f: F) -> f64
where
    F: Fn(usize) -> (f64, f64),
{
    match p {
        None => nodes.iter().map(|&x| f(x).0.abs()).fold(0.0, f64::max),
        Some(p) => {
            let s: f64 = nodes
                .iter()
                .map(|&x| {
                    let (v, w) = f(x);
                    v.abs().powf(p) * w
                })
                .sum();
            (s / nodes.len() as f64).powf(1.0 / p)
        }
    }
}

pub(crate) fn check_radius(grid: &Grid, radius: f64) -> Result<()> {
    if !(radius >= 0.0) || radius > grid.side() / 2.0 {
        return Err(Error::Domain(format!(
            "radius {radius} must lie in [0, L/2] = [0, {}]",
            grid.side() / 2.0
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxMoments {
    pub max_eig_p: f64,
    pub min_eig_neg_q: f64,
    pub speed_r: Option<f64>,
    pub max_eig_p_speed_1mp: f64,
    pub speed_inv: f64,
    pub max_eig: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallCurve {
    pub center: Point,
    pub radii: Vec<f64>,
    /// Ball averages of `Λ^p`.
    pub max_eig_p: Vec<f64>,
    /// Ball averages of `λ^{-q}`.
    pub min_eig_neg_q: Vec<f64>,
    /// Smallest tested radius from which both averages stay within a factor 2
    /// of the box average.
    pub burn_in: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub exponents: Exponents,
    pub moments: BoxMoments,
    pub curves: Vec<BallCurve>,
}

pub fn box_moments(field: &EnvironmentField, e: &Exponents) -> BoxMoments {
    let n = field.grid.len() as f64;
    let mean = |g: &dyn Fn(usize) -> f64| (0..field.grid.len()).map(g).sum::<f64>() / n;
    let (lo, hi, th) = (&field.min_eig, &field.max_eig, &field.speed);
    BoxMoments {
        max_eig_p: mean(&|x| hi[x].powf(e.p)),
        min_eig_neg_q: mean(&|x| lo[x].powf(-e.q)),
        speed_r: e.r.map(|r| mean(&|x| th[x].powf(r))),
        max_eig_p_speed_1mp: mean(&|x| hi[x].powf(e.p) * th[x].powf(1.0 - e.p)),
        speed_inv: mean(&|x| 1.0 / th[x]),
        max_eig: mean(&|x| hi[x]),
    }
}

pub fn environment_stats(
    field: &EnvironmentField,
    centers: &[Point],
    radii: &[f64],
    e: &Exponents,
) -> Result<MomentReport> {
    for &r in radii {
        check_radius(&field.grid, r)?;
    }
    let mut radii = radii.to_vec();
    radii.sort_by(f64::total_cmp);
    let moments = box_moments(field, e);
    let curves = centers
        .par_iter()
        .map(|c| {
            let mut up = Vec::with_capacity(radii.len());
            let mut lo = Vec::with_capacity(radii.len());
            for &r in &radii {
                let nodes = field.grid.ball(c, r);
                let k = nodes.len() as f64;
                up.push(nodes.iter().map(|&x| field.max_eig[x].powf(e.p)).sum::<f64>() / k);
                lo.push(nodes.iter().map(|&x| field.min_eig[x].powf(-e.q)).sum::<f64>() / k);
            }
            let within = |v: f64, target: f64| v <= 2.0 * target && v >= 0.5 * target;
            let mut burn_in = None;
            for i in (0..radii.len()).rev() {
                if within(up[i], moments.max_eig_p) && within(lo[i], moments.min_eig_neg_q) {
                    burn_in = Some(radii[i]);
                } else {
                    break;
                }
            }
            BallCurve { center: *c, radii: radii.clone(), max_eig_p: up, min_eig_neg_q: lo, burn_in }
        })
        .collect();
    Ok(MomentReport { exponents: *e, moments, curves })
}

/// Product of the three local norms controlling the maximal inequality:
/// `‖1∨(Λ/θ)‖_{p,B,θ} · ‖1∨λ^{-1}‖_{q,B} · ‖1∨θ‖_{r,B}`.
pub fn a_script(field: &EnvironmentField, center: &Point, n: f64, e: &Exponents) -> Result<f64> {
    let g = &field.grid;
    let (lo, hi, th) = (&field.min_eig, &field.max_eig, &field.speed);
    let f1 = ball_norm(g, center, n, Some(e.p), |x| ((hi[x] / th[x]).max(1.0), th[x]))?;
    let f2 = ball_norm(g, center, n, Some(e.q), |x| ((1.0 / lo[x]).max(1.0), 1.0))?;
    let f3 = ball_norm(g, center, n, e.r, |x| (th[x].max(1.0), 1.0))?;
    Ok(f1 * f2 * f3)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heavy_spec(seed: u64) -> EnvironmentSpec {
        EnvironmentSpec {
            tails: TailIndices::symmetric(8.0),
            exponents: Exponents { p: 5.0, q: 5.0, r: None },
            regime: Some(Regime::M2),
            seed,
            range: 2.0,
            ..EnvironmentSpec::constant(2, 32.0, 32)
        }
    }

    #[test]
    fn biweight_cdf_limits() {
        assert_eq!(biweight_cdf(-1.0), 0.0);
        assert!((biweight_cdf(1.0) - 1.0).abs() < 1e-15);
        assert!((biweight_cdf(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pareto_moments_match_quadrature() {
        let t = TailIndices { upper: Some(6.0), lower: Some(3.0) };
        let n = 200_000;
        let mut s = 0.0;
        for i in 0..n {
            let u = (i as f64 + 0.5) / n as f64;
            let g = statrs::distribution::ContinuousCDF::inverse_cdf(
                &statrs::distribution::Normal::standard(),
                u,
            );
            s += t.transform(g).powi(2);
        }
        let exact = t.moment(2.0).unwrap();
        assert!((s / n as f64 - exact).abs() / exact < 2e-3);
        assert!(t.moment(6.0).is_none());
        assert!(t.moment(-3.0).is_none());
    }

    #[test]
    fn constant_spec_gives_unit_field() {
        let f = generate_environment(&EnvironmentSpec::constant(2, 8.0, 8)).unwrap();
        assert!(f.min_eig().iter().all(|&v| v == 1.0));
        assert!(f.max_eig().iter().all(|&v| v == 1.0));
        assert!(f.speed().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn spec_validation() {
        assert!(heavy_spec(1).validate().is_ok());
        let mut s = heavy_spec(1);
        s.tails.upper = Some(5.0);
        assert!(matches!(s.validate(), Err(Error::MomentMargin(_))));
        let mut s = heavy_spec(1);
        s.cells = 4;
        s.side = 4.0;
        assert!(matches!(s.validate(), Err(Error::InvalidSpec(_))));
        let mut s = heavy_spec(1);
        s.exponents = Exponents { p: 2.0, q: 2.0, r: None };
        assert!(matches!(s.validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn field_is_standard_normal_pointwise() {
        // Each node value is a unit-variance combination of iid normals.
        let mut s2 = 0.0;
        let mut m = 0;
        for seed in 0..40 {
            let spec = heavy_spec(seed);
            let g = checkerboard_field(&spec, &spec.grid().unwrap(), tags::CONDUCTANCE);
            for x in (0..g.len()).step_by(97) {
                s2 += g[x] * g[x];
                m += 1;
            }
        }
        assert!((s2 / m as f64 - 1.0).abs() < 0.15);
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let spec = heavy_spec(3);
        let a = generate_environment(&spec).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| generate_environment(&spec).unwrap());
        assert_eq!(a.diag(0), b.diag(0));
        assert_eq!(a.speed(), b.speed());
    }

    #[test]
    fn lambda_mode_identity() {
        let mut spec = heavy_spec(4);
        spec.speed = SpeedMode::Lambda;
        spec.exponents.r = Some(5.0);
        let f = generate_environment(&spec).unwrap();
        let m = box_moments(&f, &spec.exponents);
        assert!((m.max_eig_p_speed_1mp - m.max_eig).abs() < 1e-12 * m.max_eig);
    }

    #[test]
    fn a_script_constant_is_one() {
        let g = Grid::new(2, 16, 1.0).unwrap();
        let f = EnvironmentField::constant(g, 1.0, 1.0).unwrap();
        let v = a_script(&f, &[3.0, 3.0, 0.0], 4.0, &Exponents::default()).unwrap();
        assert_eq!(v, 1.0);
        assert!(a_script(&f, &[0.0; 3], 9.0, &Exponents::default()).is_err());
    }
}
