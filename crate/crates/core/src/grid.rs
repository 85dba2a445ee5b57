//! Uniform node-centred discretisation of the unit box `(0,1)^dim`.
//!
//! Nodes are stored in row-major order with axis 0 (the `x₁` direction)
//! varying fastest: `index = i₀ + n·i₁ + n²·i₂`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const MIN_POINTS: usize = 8;

/// A point of the box. Only the first `dim` coordinates are meaningful.
pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
    h: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(LabError::UnsupportedDimension(dim));
        }
        if n < MIN_POINTS {
            return Err(LabError::TooFewPoints(n));
        }
        Ok(Self {
            dim,
            n,
            h: 1.0 / (n - 1) as f64,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Total number of nodes, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Distance in the flat array between neighbours along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow(axis as u32)
    }

    pub fn coord(&self, k: usize) -> f64 {
        // exact at both ends of the axis
        if k + 1 == self.n {
            1.0
        } else {
            k as f64 * self.h
        }
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut rest = idx;
        for slot in out.iter_mut().take(self.dim) {
            *slot = rest % self.n;
            rest /= self.n;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .take(self.dim)
            .rev()
            .fold(0, |acc, &k| acc * self.n + k)
    }

    pub fn point(&self, idx: usize) -> Point {
        let m = self.multi_index(idx);
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = self.coord(m[a]);
        }
        p
    }

    /// Position of node `idx` along `axis`.
    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        (idx / self.stride(axis)) % self.n
    }

    /// Trapezoid-rule weight of node `idx`.
    pub fn weight(&self, idx: usize) -> f64 {
        let m = self.multi_index(idx);
        (0..self.dim)
            .map(|a| {
                if m[a] == 0 || m[a] + 1 == self.n {
                    0.5 * self.h
                } else {
                    self.h
                }
            })
            .product()
    }

    /// Trapezoid weights for every node, in storage order.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    /// True when the node lies on some face of the box.
    pub fn is_boundary(&self, idx: usize) -> bool {
        self.depth(idx) == 0
    }

    /// Number of node layers between `idx` and the nearest face.
    pub fn depth(&self, idx: usize) -> usize {
        let m = self.multi_index(idx);
        (0..self.dim)
            .map(|a| m[a].min(self.n - 1 - m[a]))
            .min()
            .unwrap_or(0)
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }
}
