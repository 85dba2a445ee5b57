//! Compactly supported smooth test functions.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::{Grid, Point};

/// Radial bump `φ(x) = exp(1 − 1/(1 − s))`, `s = |x − c|²/r²`, with peak
/// value 1 at the centre and support equal to the closed ball of radius `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    center: Vec<f64>,
    radius: f64,
}

impl TestFunction {
    pub fn bump(center: &[f64], radius: f64) -> Result<Self> {
        if !(2..=3).contains(&center.len()) {
            return Err(LabError::UnsupportedDimension(center.len()));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(LabError::SupportTouchesBoundary { margin: radius });
        }
        let tf = Self {
            center: center.to_vec(),
            radius,
        };
        let margin = tf.boundary_margin();
        if !(margin > 0.0) {
            return Err(LabError::SupportTouchesBoundary { margin });
        }
        Ok(tf)
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Distance from the support to the nearest face of the box.
    pub fn boundary_margin(&self) -> f64 {
        self.center
            .iter()
            .map(|&c| (c - self.radius).min(1.0 - c - self.radius))
            .fold(f64::INFINITY, f64::min)
    }

    fn scaled_dist2(&self, x: &Point) -> f64 {
        self.center
            .iter()
            .zip(x)
            .map(|(c, xi)| (xi - c) * (xi - c))
            .sum::<f64>()
            / (self.radius * self.radius)
    }

    pub fn value(&self, x: &Point) -> f64 {
        let s = self.scaled_dist2(x);
        if s >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - s)).exp()
        }
    }

    /// Closed-form gradient; writes `dim` entries into `out`.
    pub fn gradient(&self, x: &Point, out: &mut [f64]) {
        let s = self.scaled_dist2(x);
        if s >= 1.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let one_minus = 1.0 - s;
        let phi = (1.0 - 1.0 / one_minus).exp();
        let factor = -phi / (one_minus * one_minus) * 2.0 / (self.radius * self.radius);
        for (a, o) in out.iter_mut().enumerate().take(self.dim()) {
            *o = factor * (x[a] - self.center[a]);
        }
    }

    pub fn sample(&self, grid: Grid) -> ScalarField {
        ScalarField::sample(grid, |p| self.value(p))
    }

    pub fn sample_gradient(&self, grid: Grid) -> VectorField {
        VectorField::sample(grid, |p, out| self.gradient(p, out))
    }

    /// Nodes where φ is nonzero.
    pub fn support_mask(&self, grid: &Grid) -> Vec<bool> {
        grid.points().map(|p| self.scaled_dist2(&p) < 1.0).collect()
    }
}
