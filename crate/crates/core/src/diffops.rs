//! Second-order finite-difference operators: gradient, divergence `D`,
//! the antisymmetric curl matrix `C`, the Laplacian and `∇D`.
//!
//! Every operator is assembled from one primitive, the first partial
//! derivative along an axis (centred in the interior, one-sided
//! second-order at the faces). Composite operators are compositions of
//! that primitive, so in the interior they are products of commuting shift
//! operators and satisfy the discrete analogues of the Schwarz identities
//! exactly. In particular the Laplacian is `Σ_a ∂_a ∂_a`, whose interior
//! stencil spans `±2h`.

use serde::{Deserialize, Serialize};

use crate::field::{ScalarField, SkewMatrixField, VectorField};
use crate::grid::Grid;

/// Describes where a composite stencil result is trusted: nodes at least
/// `depth` layers away from every face, where all centred stencils fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StencilSpec {
    pub depth: usize,
}

impl StencilSpec {
    pub const GRADIENT: StencilSpec = StencilSpec { depth: 1 };
    pub const DIVERGENCE: StencilSpec = StencilSpec { depth: 1 };
    pub const CURL: StencilSpec = StencilSpec { depth: 1 };
    pub const LAPLACIAN: StencilSpec = StencilSpec { depth: 2 };
    pub const GRAD_DIV: StencilSpec = StencilSpec { depth: 2 };
    /// `D(Δu)` and `C(Δv)`, the deepest composites used anywhere.
    pub const THIRD_ORDER: StencilSpec = StencilSpec { depth: 3 };

    /// Formal order of accuracy of every stencil.
    pub const fn order(&self) -> usize {
        2
    }

    pub const fn then(self, other: StencilSpec) -> StencilSpec {
        StencilSpec {
            depth: self.depth + other.depth,
        }
    }

    pub fn is_interior(&self, grid: &Grid, idx: usize) -> bool {
        grid.depth(idx) >= self.depth
    }

    pub fn mask(&self, grid: &Grid) -> Vec<bool> {
        (0..grid.len()).map(|i| self.is_interior(grid, i)).collect()
    }

    /// Physical width of the excluded layer.
    pub fn margin(&self, grid: &Grid) -> f64 {
        self.depth as f64 * grid.h()
    }
}

/// `∂f/∂x_axis`.
pub fn partial(f: &ScalarField, axis: usize) -> ScalarField {
    let g = *f.grid();
    let n = g.n();
    let s = g.stride(axis);
    let inv_h = 1.0 / g.h();
    let half_inv_h = 0.5 * inv_h;
    let v = f.values();
    let mut out = vec![0.0; g.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let k = (idx / s) % n;
        *o = if k == 0 {
            let (f0, f1, f2) = (v[idx], v[idx + s], v[idx + 2 * s]);
            (2.0 * (f1 - f0) - 0.5 * (f2 - f0)) * inv_h
        } else if k == n - 1 {
            let (f0, f1, f2) = (v[idx], v[idx - s], v[idx - 2 * s]);
            -(2.0 * (f1 - f0) - 0.5 * (f2 - f0)) * inv_h
        } else {
            (v[idx + s] - v[idx - s]) * half_inv_h
        };
    }
    ScalarField::from_values(g, out).expect("same grid")
}

pub fn gradient(f: &ScalarField) -> VectorField {
    let comps = (0..f.grid().dim()).map(|a| partial(f, a)).collect();
    VectorField::from_components(comps).expect("one component per axis")
}

/// `D(w) = Σ ∂w_i/∂x_i`.
pub fn divergence(w: &VectorField) -> ScalarField {
    let mut acc = partial(w.component(0), 0);
    for a in 1..w.dim() {
        let d = partial(w.component(a), a);
        acc.values_mut()
            .iter_mut()
            .zip(d.values())
            .for_each(|(x, y)| *x += y);
    }
    acc
}

/// `C_ij(w) = ∂w_i/∂x_j − ∂w_j/∂x_i`.
pub fn curl_matrix(w: &VectorField) -> SkewMatrixField {
    SkewMatrixField::from_upper(*w.grid(), |i, j| {
        &partial(w.component(i), j) - &partial(w.component(j), i)
    })
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    let mut acc = partial(&partial(f, 0), 0);
    for a in 1..f.grid().dim() {
        let d = partial(&partial(f, a), a);
        acc.values_mut()
            .iter_mut()
            .zip(d.values())
            .for_each(|(x, y)| *x += y);
    }
    acc
}

pub fn vector_laplacian(w: &VectorField) -> VectorField {
    w.map_components(laplacian)
}

/// `∇D(w)`.
pub fn grad_div(w: &VectorField) -> VectorField {
    gradient(&divergence(w))
}

/// All second partials `∂_p ∂_q f` for `p ≤ q`.
pub fn second_partials(f: &ScalarField) -> Vec<ScalarField> {
    let dim = f.grid().dim();
    let firsts: Vec<ScalarField> = (0..dim).map(|a| partial(f, a)).collect();
    let mut out = Vec::with_capacity(dim * (dim + 1) / 2);
    for p in 0..dim {
        for q in p..dim {
            out.push(partial(&firsts[p], q));
        }
    }
    out
}

/// Largest nodewise absolute difference over the trusted region.
pub fn max_abs_diff_on(a: &ScalarField, b: &ScalarField, spec: StencilSpec) -> f64 {
    let g = a.grid();
    a.values()
        .iter()
        .zip(b.values())
        .enumerate()
        .filter(|(i, _)| spec.is_interior(g, *i))
        .fold(0.0, |m, (_, (x, y))| m.max((x - y).abs()))
}

/// Largest nodewise absolute value over the trusted region.
pub fn max_abs_on(a: &ScalarField, spec: StencilSpec) -> f64 {
    let g = a.grid();
    a.values()
        .iter()
        .enumerate()
        .filter(|(i, _)| spec.is_interior(g, *i))
        .fold(0.0, |m, (_, x)| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::new(2, n).unwrap()
    }

    fn vf(g: Grid, f: impl Fn(f64, f64) -> [f64; 2]) -> VectorField {
        VectorField::sample(g, |p, out| {
            let v = f(p[0], p[1]);
            out.copy_from_slice(&v);
        })
    }

    #[test]
    fn gradient_of_constant_and_linear() {
        let g = grid(17);
        let c = ScalarField::constant(g, 2.5);
        assert_eq!(gradient(&c).max_abs(), 0.0);
        let x = ScalarField::sample(g, |p| p[0]);
        let gr = gradient(&x);
        for idx in 0..g.len() {
            assert!((gr.component(0).get(idx) - 1.0).abs() < 1e-12);
            assert_eq!(gr.component(1).get(idx), 0.0);
        }
    }

    #[test]
    fn gradient_converges_second_order() {
        let err = |n: usize| {
            let g = grid(n);
            let f = ScalarField::sample(g, |p| (PI * p[0]).sin());
            let exact = ScalarField::sample(g, |p| PI * (PI * p[0]).cos());
            (&partial(&f, 0) - &exact).max_abs()
        };
        let ratio = err(33) / err(65);
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn divergence_examples() {
        let g = grid(17);
        let c = VectorField::constant(g, &[1.5, -2.0]);
        assert_eq!(divergence(&c).max_abs(), 0.0);

        let q = vf(g, |x, y| [x * x, y * y]);
        let exact = ScalarField::sample(g, |p| 2.0 * p[0] + 2.0 * p[1]);
        assert!(max_abs_diff_on(&divergence(&q), &exact, StencilSpec::DIVERGENCE) < 1e-12);

        let s = vf(g, |_, y| [(2.0 * PI * y).sin(), 0.0]);
        assert_eq!(divergence(&s).max_abs(), 0.0);
    }

    #[test]
    fn curl_examples() {
        let g = grid(17);
        let psi = ScalarField::sample(g, |p| p[0] * p[1]);
        let c = curl_matrix(&gradient(&psi));
        assert!(max_abs_on(&c.entry(0, 1), StencilSpec::CURL.then(StencilSpec::GRADIENT)) < 1e-12);

        let rot = vf(g, |x, y| [-y, x]);
        let c = curl_matrix(&rot);
        for idx in 0..g.len() {
            assert!((c.value(0, 1, idx) + 2.0).abs() < 1e-12);
            assert!((c.value(1, 0, idx) - 2.0).abs() < 1e-12);
        }

        let w = vf(g, |_, y| [y * y, 0.0]);
        let exact = ScalarField::sample(g, |p| 2.0 * p[1]);
        assert!(max_abs_diff_on(&curl_matrix(&w).entry(0, 1), &exact, StencilSpec::CURL) < 1e-12);
    }

    #[test]
    fn laplacian_examples() {
        let g = grid(33);
        let f = ScalarField::sample(g, |p| p[0] * p[0]);
        let two = ScalarField::constant(g, 2.0);
        assert!(max_abs_diff_on(&laplacian(&f), &two, StencilSpec::LAPLACIAN) < 1e-10);

        let harmonic = ScalarField::sample(g, |p| p[0] * p[0] - p[1] * p[1]);
        assert!(max_abs_on(&laplacian(&harmonic), StencilSpec::LAPLACIAN) < 1e-10);

        let err = |n: usize| {
            let g = grid(n);
            let f = ScalarField::sample(g, |p| (PI * p[0]).sin() * (PI * p[1]).sin());
            let exact = f.scale(-2.0 * PI * PI);
            max_abs_diff_on(&laplacian(&f), &exact, StencilSpec::LAPLACIAN)
        };
        let (e1, e2) = (err(33), err(65));
        assert!(e2 < 0.03, "{e2}");
        assert!((3.5..4.5).contains(&(e1 / e2)), "{}", e1 / e2);
    }

    #[test]
    fn grad_div_examples() {
        let g = grid(17);
        let c = VectorField::constant(g, &[1.0, 2.0]);
        assert_eq!(grad_div(&c).max_abs(), 0.0);

        let q = vf(g, |x, y| [x * x, y * y]);
        let gd = grad_div(&q);
        let two = ScalarField::constant(g, 2.0);
        for a in 0..2 {
            assert!(max_abs_diff_on(gd.component(a), &two, StencilSpec::GRAD_DIV) < 1e-10);
        }

        // ∇D(w) = Δw for gradient fields; unequal frequencies keep the
        // discrete error from cancelling
        let err = |n: usize| {
            let g = grid(n);
            let w = vf(g, |x, y| {
                [
                    PI * (PI * x).cos() * (2.0 * PI * y).sin(),
                    2.0 * PI * (PI * x).sin() * (2.0 * PI * y).cos(),
                ]
            });
            let diff = &grad_div(&w) - &vector_laplacian(&w);
            (0..2)
                .map(|a| max_abs_on(diff.component(a), StencilSpec::GRAD_DIV))
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(33), err(65));
        assert!((3.0..5.0).contains(&(e1 / e2)), "{e1} {e2}");
    }

    #[test]
    fn third_order_mask_excludes_three_layers() {
        let g = grid(17);
        let m = StencilSpec::THIRD_ORDER.mask(&g);
        assert_eq!(m.iter().filter(|&&b| b).count(), 11 * 11);
        assert_eq!(StencilSpec::LAPLACIAN.then(StencilSpec::DIVERGENCE), StencilSpec::THIRD_ORDER);
    }
}
