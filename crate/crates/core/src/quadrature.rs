//! Trapezoid quadrature over the box and the norms built on it.

use crate::error::{LabError, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::{Grid, Point};

/// Trapezoid-rule approximation of `∫_(0,1)^dim f`.
pub fn integrate(f: &ScalarField) -> f64 {
    let g = f.grid();
    f.values()
        .iter()
        .enumerate()
        .map(|(i, &v)| g.weight(i) * v)
        .sum()
}

/// Like [`integrate`], restricted to the nodes where `mask` is set.
/// Weights stay those of the full box.
pub fn integrate_masked(f: &ScalarField, mask: &[bool]) -> f64 {
    let g = f.grid();
    f.values()
        .iter()
        .zip(mask)
        .enumerate()
        .filter(|(_, (_, &m))| m)
        .map(|(i, (&v, _))| g.weight(i) * v)
        .sum()
}

/// Quantities with a pointwise magnitude.
pub trait Magnitude {
    fn grid(&self) -> &Grid;
    fn magnitude_at(&self, idx: usize) -> f64;
}

impl Magnitude for ScalarField {
    fn grid(&self) -> &Grid {
        ScalarField::grid(self)
    }
    fn magnitude_at(&self, idx: usize) -> f64 {
        self.get(idx).abs()
    }
}

impl Magnitude for VectorField {
    fn grid(&self) -> &Grid {
        VectorField::grid(self)
    }
    fn magnitude_at(&self, idx: usize) -> f64 {
        self.components()
            .iter()
            .map(|c| c.get(idx) * c.get(idx))
            .sum::<f64>()
            .sqrt()
    }
}

/// `(∫ |f|^p)^(1/p)` with trapezoid weights.
pub fn lp_norm<F: Magnitude>(f: &F, p: f64) -> Result<f64> {
    lp_norm_where(f, p, None)
}

/// L^p norm over the nodes selected by `mask`.
pub fn lp_norm_masked<F: Magnitude>(f: &F, p: f64, mask: &[bool]) -> Result<f64> {
    lp_norm_where(f, p, Some(mask))
}

fn lp_norm_where<F: Magnitude>(f: &F, p: f64, mask: Option<&[bool]>) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(LabError::InvalidExponent(p));
    }
    let g = *f.grid();
    let mut acc = 0.0;
    for idx in 0..g.len() {
        if mask.is_some_and(|m| !m[idx]) {
            continue;
        }
        let m = f.magnitude_at(idx);
        let term = if p == 2.0 { m * m } else { m.powf(p) };
        acc += g.weight(idx) * term;
    }
    Ok(if p == 2.0 { acc.sqrt() } else { acc.powf(1.0 / p) })
}

/// Nodes of the three-point Gauss-Legendre rule on (0,1), with weights.
const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// L² distance between the multilinear (Q1) reconstruction of the nodal
/// field and an exact function, integrated cell by cell with a tensor
/// Gauss rule. Measures the error of `f` as a function on the box rather
/// than at the nodes only.
pub fn l2_error_reconstructed(f: &ScalarField, exact: impl Fn(&Point) -> f64) -> f64 {
    let g = *f.grid();
    let dim = g.dim();
    let n = g.n();
    let h = g.h();
    let cells_per_axis = n - 1;
    let n_cells = cells_per_axis.pow(dim as u32);
    let n_gauss = 3usize.pow(dim as u32);
    let n_corners = 1usize << dim;
    let mut acc = 0.0;
    let mut cell = [0usize; 3];
    for c in 0..n_cells {
        let mut rest = c;
        for slot in cell.iter_mut().take(dim) {
            *slot = rest % cells_per_axis;
            rest /= cells_per_axis;
        }
        let mut corner_vals = [0.0; 8];
        for (corner, val) in corner_vals.iter_mut().enumerate().take(n_corners) {
            let mut m = [0usize; 3];
            for a in 0..dim {
                m[a] = cell[a] + ((corner >> a) & 1);
            }
            *val = f.get(g.flat_index(&m));
        }
        for q in 0..n_gauss {
            let mut rest = q;
            let mut local = [0.0; 3];
            let mut x = [0.0; 3];
            let mut w = 1.0;
            for a in 0..dim {
                let (t, wt) = GAUSS3[rest % 3];
                rest /= 3;
                local[a] = t;
                x[a] = (cell[a] as f64 + t) * h;
                w *= wt * h;
            }
            let mut interp = 0.0;
            for (corner, val) in corner_vals.iter().enumerate().take(n_corners) {
                let mut shape = 1.0;
                for (a, t) in local.iter().enumerate().take(dim) {
                    shape *= if (corner >> a) & 1 == 1 { *t } else { 1.0 - t };
                }
                interp += shape * val;
            }
            let e = interp - exact(&x);
            acc += w * e * e;
        }
    }
    acc.sqrt()
}
