//! Nodal fields sampled on a [`Grid`].

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{LabError, Result};
use crate::grid::{Grid, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::InvalidData(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Nodewise evaluation of `f` at every grid point.
    pub fn sample<F>(grid: Grid, f: F) -> Self
    where
        F: Fn(&Point) -> f64,
    {
        let values = grid.points().map(|p| f(&p)).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Combines two fields nodewise. Panics if the grids differ.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.map(|v| -v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn from_components(components: Vec<ScalarField>) -> Result<Self> {
        let grid = *components
            .first()
            .ok_or(LabError::ComponentMismatch {
                expected: 2,
                actual: 0,
            })?
            .grid();
        if components.len() != grid.dim() {
            return Err(LabError::ComponentMismatch {
                expected: grid.dim(),
                actual: components.len(),
            });
        }
        if components.iter().any(|c| *c.grid() != grid) {
            return Err(LabError::GridMismatch);
        }
        Ok(Self { grid, components })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, &vec![0.0; grid.dim()])
    }

    pub fn constant(grid: Grid, c: &[f64]) -> Self {
        Self {
            grid,
            components: (0..grid.dim())
                .map(|i| ScalarField::constant(grid, c[i]))
                .collect(),
        }
    }

    /// Samples a vector-valued function; `f` receives the point and a
    /// buffer of length `dim` to fill.
    pub fn sample<F>(grid: Grid, f: F) -> Self
    where
        F: Fn(&Point, &mut [f64]),
    {
        let dim = grid.dim();
        let mut comps = vec![Vec::with_capacity(grid.len()); dim];
        let mut buf = vec![0.0; dim];
        for p in grid.points() {
            buf.iter_mut().for_each(|b| *b = 0.0);
            f(&p, &mut buf);
            for (c, &b) in comps.iter_mut().zip(&buf) {
                c.push(b);
            }
        }
        Self {
            grid,
            components: comps
                .into_iter()
                .map(|values| ScalarField { grid, values })
                .collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn into_components(self) -> Vec<ScalarField> {
        self.components
    }

    pub fn map_components(&self, f: impl Fn(&ScalarField) -> ScalarField) -> Self {
        Self {
            grid: self.grid,
            components: self.components.iter().map(f).collect(),
        }
    }

    pub fn zip_components(
        &self,
        other: &Self,
        f: impl Fn(&ScalarField, &ScalarField) -> ScalarField,
    ) -> Self {
        Self {
            grid: self.grid,
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map_components(|f| f.scale(c))
    }

    /// Nodewise Euclidean inner product.
    pub fn dot(&self, other: &Self) -> ScalarField {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let mut out = ScalarField::zeros(self.grid);
        for (a, b) in self.components.iter().zip(&other.components) {
            for ((o, &x), &y) in out.values.iter_mut().zip(&a.values).zip(&b.values) {
                *o += x * y;
            }
        }
        out
    }

    /// Nodewise Euclidean length.
    pub fn magnitude(&self) -> ScalarField {
        self.dot(self).map(f64::sqrt)
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }
}

impl Add for &VectorField {
    type Output = VectorField;
    fn add(self, rhs: &VectorField) -> VectorField {
        self.zip_components(rhs, |a, b| a + b)
    }
}

impl Sub for &VectorField {
    type Output = VectorField;
    fn sub(self, rhs: &VectorField) -> VectorField {
        self.zip_components(rhs, |a, b| a - b)
    }
}

impl Neg for &VectorField {
    type Output = VectorField;
    fn neg(self) -> VectorField {
        self.map_components(|c| -c)
    }
}

/// Antisymmetric matrix of scalar fields. Only the strictly upper entries
/// are stored; the rest follow from `C_ji = -C_ij` and `C_ii = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrixField {
    grid: Grid,
    dim: usize,
    upper: Vec<ScalarField>,
}

impl SkewMatrixField {
    /// Builds the field from a generator of upper entries, called for
    /// every pair `i < j` in row-major order.
    pub fn from_upper(grid: Grid, mut entry: impl FnMut(usize, usize) -> ScalarField) -> Self {
        let dim = grid.dim();
        let mut upper = Vec::with_capacity(dim * (dim - 1) / 2);
        for i in 0..dim {
            for j in i + 1..dim {
                upper.push(entry(i, j));
            }
        }
        Self { grid, dim, upper }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        i * self.dim - i * (i + 1) / 2 + (j - i - 1)
    }

    /// Value of entry `(i, j)` at node `idx`.
    pub fn value(&self, i: usize, j: usize, idx: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.upper[self.slot(i, j)].get(idx),
            std::cmp::Ordering::Greater => -self.upper[self.slot(j, i)].get(idx),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> ScalarField {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => ScalarField::zeros(self.grid),
            std::cmp::Ordering::Less => self.upper[self.slot(i, j)].clone(),
            std::cmp::Ordering::Greater => -&self.upper[self.slot(j, i)],
        }
    }

    /// Iterates over `((i, j), C_ij)` for `i < j`.
    pub fn upper_entries(&self) -> impl Iterator<Item = ((usize, usize), &ScalarField)> + '_ {
        let dim = self.dim;
        (0..dim)
            .flat_map(move |i| (i + 1..dim).map(move |j| (i, j)))
            .zip(self.upper.iter())
    }

    pub fn max_abs(&self) -> f64 {
        self.upper.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }
}

pub(crate) fn ensure_same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(LabError::GridMismatch)
    }
}
