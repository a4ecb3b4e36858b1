//! Periodic cubic grids in two or three dimensions.
//!
//! Node `i` along an axis sits at position `i * h`. Storage is row-major with
//! axis 0 slowest. Points are `[f64; 3]` with a trailing zero when `dim == 2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
    h: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, h: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Dimension { expected: 3, got: dim });
        }
        if n < 2 {
            return Err(Error::Geometry(format!("grid needs at least 2 cells per side, got {n}")));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Geometry(format!("grid spacing must be positive, got {h}")));
        }
        Ok(Self { dim, n, h })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per side.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Box side length.
    pub fn side(&self) -> f64 {
        self.n as f64 * self.h
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of one cell, `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    pub fn index(&self, c: [usize; 3]) -> usize {
        let mut idx = 0;
        for &ci in c.iter().take(self.dim) {
            idx = idx * self.n + ci;
        }
        idx
    }

    pub fn coords(&self, mut idx: usize) -> [usize; 3] {
        let mut c = [0usize; 3];
        for axis in (0..self.dim).rev() {
            c[axis] = idx % self.n;
            idx /= self.n;
        }
        c
    }

    /// Index with signed coordinates wrapped onto the torus.
    pub fn index_wrapped(&self, c: [i64; 3]) -> usize {
        let n = self.n as i64;
        let mut w = [0usize; 3];
        for axis in 0..self.dim {
            w[axis] = c[axis].rem_euclid(n) as usize;
        }
        self.index(w)
    }

    /// Periodic neighbour of `idx` shifted by `step` along `axis`.
    pub fn shift(&self, idx: usize, axis: usize, step: i64) -> usize {
        let c = self.coords(idx);
        let mut s = [c[0] as i64, c[1] as i64, c[2] as i64];
        s[axis] += step;
        self.index_wrapped(s)
    }

    pub fn position(&self, idx: usize) -> Point {
        let c = self.coords(idx);
        let mut p = [0.0; 3];
        for axis in 0..self.dim {
            p[axis] = c[axis] as f64 * self.h;
        }
        p
    }

    /// Minimal-image displacement from `a` to `b` in grid steps.
    pub fn displacement_steps(&self, a: usize, b: usize) -> [i64; 3] {
        let (ca, cb) = (self.coords(a), self.coords(b));
        let n = self.n as i64;
        let mut d = [0i64; 3];
        for axis in 0..self.dim {
            let mut k = (cb[axis] as i64 - ca[axis] as i64).rem_euclid(n);
            if k > n / 2 {
                k -= n;
            }
            d[axis] = k;
        }
        d
    }

    /// Minimal-image displacement from `a` to `b` in length units.
    pub fn displacement(&self, a: usize, b: usize) -> Point {
        let s = self.displacement_steps(a, b);
        [s[0] as f64 * self.h, s[1] as f64 * self.h, s[2] as f64 * self.h]
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        norm(&self.displacement(a, b))
    }

    /// Periodic sup-norm distance in length units.
    pub fn sup_distance(&self, a: usize, b: usize) -> f64 {
        let s = self.displacement_steps(a, b);
        s.iter().map(|k| k.unsigned_abs()).max().unwrap_or(0) as f64 * self.h
    }

    /// Nearest node to a point, wrapped onto the torus.
    pub fn nearest(&self, p: &Point) -> usize {
        let mut c = [0i64; 3];
        for axis in 0..self.dim {
            c[axis] = (p[axis] / self.h).round() as i64;
        }
        self.index_wrapped(c)
    }

    /// Nodes whose minimal-image distance to `center` is at most `radius`.
    pub fn ball(&self, center: &Point, radius: f64) -> Vec<usize> {
        let k = (radius / self.h).ceil() as i64 + 1;
        let mut c0 = [0f64; 3];
        for axis in 0..self.dim {
            c0[axis] = center[axis] / self.h;
        }
        let base = [c0[0].round() as i64, c0[1].round() as i64, c0[2].round() as i64];
        let r2 = radius * radius * (1.0 + 1e-12);
        let mut out = Vec::new();
        let zr = if self.dim == 3 { -k..=k } else { 0..=0 };
        for i in -k..=k {
            for j in -k..=k {
                for l in zr.clone() {
                    let off = [i, j, l];
                    let mut d2 = 0.0;
                    let mut node = [0i64; 3];
                    for axis in 0..self.dim {
                        node[axis] = base[axis] + off[axis];
                        let dx = (node[axis] as f64 - c0[axis]) * self.h;
                        d2 += dx * dx;
                    }
                    if d2 <= r2 {
                        out.push(self.index_wrapped(node));
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn check_len(&self, got: usize) -> Result<()> {
        if got == self.len() {
            Ok(())
        } else {
            Err(Error::Dimension { expected: self.len(), got })
        }
    }
}

pub fn norm(p: &Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}
