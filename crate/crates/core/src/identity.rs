//! Term-by-term evaluation of the Green-Gauss integral formula
//!
//! ```text
//! ∫ φ Δu·Δv = −⟨D(Δu), φ D(v)⟩ − ∫ D(u) ∇φ·Δv + ∫ D(u) ∇φ·∇D(v)
//!             − ∫ D(v) ∇φ·∇D(u) − Σ_ij ∫ Δv_i C_ij(u) ∂_jφ
//!             − ½ Σ_ij ⟨C_ij(Δv), φ C_ij(u)⟩
//! ```
//!
//! and of the two intermediate identities used to derive it (the pairing
//! expansion and the divergence-free reduction).
//!
//! Pairings of a derivative with a compactly supported function are
//! realised in one of two ways:
//!
//! * `Direct`: the derivative is applied by stencil composition and the
//!   product is integrated, e.g. `∫ D(Δu) φ D(v)`;
//! * `ByParts`: the derivative is moved onto the test side,
//!   `−∫ Δu·∇(φ D(v))`, where `∇(φ g) = g ∇φ + φ ∇g` uses the closed-form
//!   `∇φ`.
//!
//! The two agree to `O(h²)` for smooth data.

use serde::{Deserialize, Serialize};

use crate::diffops::{curl_matrix, divergence, gradient, partial, vector_laplacian, StencilSpec};
use crate::error::{LabError, Result};
use crate::field::{ensure_same_grid, ScalarField, SkewMatrixField, VectorField};
use crate::grid::Grid;
use crate::testfn::TestFunction;

/// Default relative residual gate at `n = 129` for smooth trigonometric data.
pub const DEFAULT_REL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingMode {
    Direct,
    #[default]
    ByParts,
}

impl PairingMode {
    /// Stencil depth of the deepest composite evaluated in this mode.
    pub fn stencil(&self) -> StencilSpec {
        match self {
            PairingMode::Direct => StencilSpec::THIRD_ORDER,
            PairingMode::ByParts => StencilSpec::GRAD_DIV,
        }
    }
}

/// The six right-hand-side contributions, signed as they enter the sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityTerms {
    /// `−⟨D(Δu), φD(v)⟩`
    #[serde(rename = "pairing_D")]
    pub pairing_d: f64,
    /// `−∫ D(u) ∇φ·Δv`
    pub gradphi_lap: f64,
    /// `+∫ D(u) ∇φ·∇D(v)`
    #[serde(rename = "gradphi_gradD_v")]
    pub gradphi_graddiv_v: f64,
    /// `−∫ D(v) ∇φ·∇D(u)`
    #[serde(rename = "gradphi_gradD_u")]
    pub gradphi_graddiv_u: f64,
    /// `−Σ ∫ Δv_i C_ij(u) ∂_jφ`
    pub cross_curl: f64,
    /// `−½ Σ ⟨C_ij(Δv), φ C_ij(u)⟩`
    #[serde(rename = "pairing_C")]
    pub pairing_c: f64,
}

impl IdentityTerms {
    pub const NAMES: [&'static str; 6] = [
        "pairing_D",
        "gradphi_lap",
        "gradphi_gradD_v",
        "gradphi_gradD_u",
        "cross_curl",
        "pairing_C",
    ];

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.pairing_d,
            self.gradphi_lap,
            self.gradphi_graddiv_v,
            self.gradphi_graddiv_u,
            self.cross_curl,
            self.pairing_c,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            pairing_d: a[0],
            gradphi_lap: a[1],
            gradphi_graddiv_v: a[2],
            gradphi_graddiv_u: a[3],
            cross_curl: a[4],
            pairing_c: a[5],
        }
    }

    pub fn sum(&self) -> f64 {
        self.to_array().iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub n: usize,
    pub mode: PairingMode,
    /// `∫ φ Δu·Δv`
    pub lhs: f64,
    pub terms: IdentityTerms,
    pub rhs_sum: f64,
    pub residual: f64,
    /// Largest of `|lhs|`, every `|term|` and `∫ φ |Δu||Δv|`.
    pub scale: f64,
    pub relative_residual: f64,
}

impl IdentityReport {
    fn new(n: usize, mode: PairingMode, lhs: f64, terms: IdentityTerms, magnitude: f64) -> Self {
        let rhs_sum = terms.sum();
        let residual = (lhs - rhs_sum).abs();
        let scale = terms
            .to_array()
            .iter()
            .fold(lhs.abs().max(magnitude), |m, t| m.max(t.abs()));
        Self {
            n,
            mode,
            lhs,
            terms,
            rhs_sum,
            residual,
            scale,
            relative_residual: relative(residual, scale),
        }
    }
}

/// Right-hand side of the pairing expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrelimTerms {
    /// `−∫ Δu·∇(φ D(v))`
    #[serde(rename = "by_parts_D")]
    pub by_parts_d: f64,
    /// `∫ φ Δv·(∇D(u) − Δu)`
    pub curl_curl_defect: f64,
    /// `−Σ ∫ Δv_i C_ij(u) ∂_jφ`
    pub cross_curl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrelimReport {
    pub n: usize,
    pub mode: PairingMode,
    /// `⟨D(Δu), φD(v)⟩ + ½ Σ ⟨C_ij(Δv), φ C_ij(u)⟩`
    pub lhs: f64,
    #[serde(rename = "lhs_pairing_D")]
    pub lhs_pairing_d: f64,
    #[serde(rename = "lhs_half_pairing_C")]
    pub lhs_half_pairing_c: f64,
    pub terms: PrelimTerms,
    pub rhs_sum: f64,
    pub residual: f64,
    pub relative_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivFreeReport {
    pub n: usize,
    /// `∫ Δu·∇(φ D(v))`
    pub lhs: f64,
    /// `∫ ∇D(u)·∇(φ D(v))`
    pub rhs: f64,
    /// `∫ (∇D(u) − Δu)·∇(φ D(v))`, a divergence-free field against a gradient
    pub aux: f64,
    pub residual: f64,
    pub relative_residual: f64,
}

fn relative(residual: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        0.0
    } else {
        residual / scale
    }
}

/// Derived fields shared by every term. `lap_u`/`lap_v` are supplied by
/// the caller so the same machinery evaluates both the stencil Laplacian
/// of sampled fields and `−a`, `−b` for lifted data.
pub struct IdentityKernel {
    grid: Grid,
    weights: Vec<f64>,
    region: Option<Vec<bool>>,
    phi: ScalarField,
    grad_phi: VectorField,
    lap_u: VectorField,
    lap_v: VectorField,
    div_u: ScalarField,
    div_v: ScalarField,
    grad_div_u: VectorField,
    grad_div_v: VectorField,
    curl_u: SkewMatrixField,
    /// `∂_j C_ij(u)` summed over `j`, per component `i`
    div_curl_u: VectorField,
}

impl IdentityKernel {
    /// Kernel with `Δu`, `Δv` taken from the stencil Laplacian.
    pub fn new(u: &VectorField, v: &VectorField, phi: &TestFunction, mode: PairingMode) -> Result<Self> {
        check_inputs(u, v, phi, mode.stencil())?;
        Self::assemble(u, v, vector_laplacian(u), vector_laplacian(v), phi, None)
    }

    /// Kernel with caller-supplied Laplacians, integrating only over
    /// `region` (all nodes when `None`).
    pub fn with_laplacians(
        u: &VectorField,
        v: &VectorField,
        lap_u: VectorField,
        lap_v: VectorField,
        phi: &TestFunction,
        region: Option<Vec<bool>>,
    ) -> Result<Self> {
        check_inputs(u, v, phi, PairingMode::ByParts.stencil())?;
        ensure_same_grid(lap_u.grid(), u.grid())?;
        ensure_same_grid(lap_v.grid(), u.grid())?;
        Self::assemble(u, v, lap_u, lap_v, phi, region)
    }

    fn assemble(
        u: &VectorField,
        v: &VectorField,
        lap_u: VectorField,
        lap_v: VectorField,
        phi: &TestFunction,
        region: Option<Vec<bool>>,
    ) -> Result<Self> {
        let grid = *u.grid();
        let div_u = divergence(u);
        let div_v = divergence(v);
        let curl_u = curl_matrix(u);
        let dim = grid.dim();
        let div_curl_u = VectorField::from_components(
            (0..dim)
                .map(|i| {
                    let mut acc = ScalarField::zeros(grid);
                    for j in 0..dim {
                        if i != j {
                            acc = &acc + &partial(&curl_u.entry(i, j), j);
                        }
                    }
                    acc
                })
                .collect(),
        )?;
        Ok(Self {
            grid,
            weights: grid.weights(),
            region,
            phi: phi.sample(grid),
            grad_phi: phi.sample_gradient(grid),
            grad_div_u: gradient(&div_u),
            grad_div_v: gradient(&div_v),
            lap_u,
            lap_v,
            div_u,
            div_v,
            curl_u,
            div_curl_u,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        match &self.region {
            None => (0..self.grid.len()).map(|i| self.weights[i] * f(i)).sum(),
            Some(mask) => (0..self.grid.len())
                .filter(|&i| mask[i])
                .map(|i| self.weights[i] * f(i))
                .sum(),
        }
    }

    fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Component `a` of `∇(φ D(v))` at node `i`.
    fn grad_phi_div_v(&self, a: usize, i: usize) -> f64 {
        self.div_v.get(i) * self.grad_phi.component(a).get(i)
            + self.phi.get(i) * self.grad_div_v.component(a).get(i)
    }

    /// `∫ φ Δu·Δv`
    pub fn lhs(&self) -> f64 {
        let (lu, lv) = (&self.lap_u, &self.lap_v);
        self.integrate(|i| {
            let dot: f64 = (0..self.dim())
                .map(|a| lu.component(a).get(i) * lv.component(a).get(i))
                .sum();
            self.phi.get(i) * dot
        })
    }

    /// `∫ φ |Δu||Δv|`, the size of the left-hand integrand; keeps relative
    /// residuals meaningful when the left-hand side cancels.
    pub fn magnitude(&self) -> f64 {
        let (lu, lv) = (&self.lap_u, &self.lap_v);
        let norm = |w: &VectorField, i: usize| {
            (0..self.dim())
                .map(|a| w.component(a).get(i).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        self.integrate(|i| self.phi.get(i).abs() * norm(lu, i) * norm(lv, i))
    }

    /// `⟨D(Δu), φ D(v)⟩`
    pub fn pairing_d(&self, mode: PairingMode) -> f64 {
        match mode {
            PairingMode::Direct => {
                let d_lap_u = divergence(&self.lap_u);
                self.integrate(|i| d_lap_u.get(i) * self.phi.get(i) * self.div_v.get(i))
            }
            PairingMode::ByParts => -self.laplacian_u_against_grad(),
        }
    }

    /// `Σ_ij ⟨C_ij(Δv), φ C_ij(u)⟩`
    pub fn pairing_c(&self, mode: PairingMode) -> f64 {
        let dim = self.dim();
        match mode {
            PairingMode::Direct => {
                let curl_lap_v = curl_matrix(&self.lap_v);
                let mut total = 0.0;
                for ((i, j), c) in curl_lap_v.upper_entries() {
                    total += 2.0
                        * self.integrate(|k| c.get(k) * self.phi.get(k) * self.curl_u.value(i, j, k));
                }
                total
            }
            PairingMode::ByParts => {
                // −2 Σ_ij ∫ Δv_i ∂_j(φ C_ij(u))
                -2.0 * self.integrate(|k| {
                    let mut acc = 0.0;
                    for i in 0..dim {
                        let mut d = self.phi.get(k) * self.div_curl_u.component(i).get(k);
                        for j in 0..dim {
                            d += self.grad_phi.component(j).get(k) * self.curl_u.value(i, j, k);
                        }
                        acc += self.lap_v.component(i).get(k) * d;
                    }
                    acc
                })
            }
        }
    }

    /// `∫ Δu·∇(φ D(v))`
    fn laplacian_u_against_grad(&self) -> f64 {
        self.integrate(|i| {
            (0..self.dim())
                .map(|a| self.lap_u.component(a).get(i) * self.grad_phi_div_v(a, i))
                .sum()
        })
    }

    /// `∫ ∇D(u)·∇(φ D(v))`
    fn grad_div_u_against_grad(&self) -> f64 {
        self.integrate(|i| {
            (0..self.dim())
                .map(|a| self.grad_div_u.component(a).get(i) * self.grad_phi_div_v(a, i))
                .sum()
        })
    }

    /// `∫ D(u) ∇φ·Δv`
    fn div_u_gradphi_lap_v(&self) -> f64 {
        self.integrate(|i| {
            let dot: f64 = (0..self.dim())
                .map(|a| self.grad_phi.component(a).get(i) * self.lap_v.component(a).get(i))
                .sum();
            self.div_u.get(i) * dot
        })
    }

    /// `∫ D(x) ∇φ·∇D(y)` for `(x, y) = (u, v)` or `(v, u)`.
    fn div_gradphi_grad_div(&self, first_is_u: bool) -> f64 {
        let (d, gd) = if first_is_u {
            (&self.div_u, &self.grad_div_v)
        } else {
            (&self.div_v, &self.grad_div_u)
        };
        self.integrate(|i| {
            let dot: f64 = (0..self.dim())
                .map(|a| self.grad_phi.component(a).get(i) * gd.component(a).get(i))
                .sum();
            d.get(i) * dot
        })
    }

    /// `Σ_ij ∫ Δv_i C_ij(u) ∂_jφ`
    fn cross_curl_integral(&self) -> f64 {
        let dim = self.dim();
        self.integrate(|k| {
            let mut acc = 0.0;
            for i in 0..dim {
                let mut inner = 0.0;
                for j in 0..dim {
                    inner += self.curl_u.value(i, j, k) * self.grad_phi.component(j).get(k);
                }
                acc += self.lap_v.component(i).get(k) * inner;
            }
            acc
        })
    }

    /// The six signed right-hand-side terms.
    pub fn terms(&self, mode: PairingMode) -> IdentityTerms {
        let t = [
            -self.pairing_d(mode),
            -self.div_u_gradphi_lap_v(),
            self.div_gradphi_grad_div(true),
            -self.div_gradphi_grad_div(false),
            -self.cross_curl_integral(),
            -0.5 * self.pairing_c(mode),
        ];
        // `+ 0.0` turns the `-0.0` of negated empty integrals into `0.0`
        IdentityTerms::from_array(t.map(|x| x + 0.0))
    }

    pub fn identity_report(&self, mode: PairingMode) -> IdentityReport {
        IdentityReport::new(self.grid.n(), mode, self.lhs(), self.terms(mode), self.magnitude())
    }

    pub fn prelim_report(&self, mode: PairingMode) -> PrelimReport {
        let lhs_pairing_d = self.pairing_d(mode);
        let lhs_half_pairing_c = 0.5 * self.pairing_c(mode);
        let lhs = lhs_pairing_d + lhs_half_pairing_c;
        let dim = self.dim();
        let curl_curl_defect = self.integrate(|i| {
            let dot: f64 = (0..dim)
                .map(|a| {
                    self.lap_v.component(a).get(i)
                        * (self.grad_div_u.component(a).get(i) - self.lap_u.component(a).get(i))
                })
                .sum();
            self.phi.get(i) * dot
        });
        let terms = PrelimTerms {
            by_parts_d: -self.laplacian_u_against_grad(),
            curl_curl_defect,
            cross_curl: -self.cross_curl_integral(),
        };
        let rhs_sum = terms.by_parts_d + terms.curl_curl_defect + terms.cross_curl;
        let residual = (lhs - rhs_sum).abs();
        let scale = [lhs, terms.by_parts_d, terms.curl_curl_defect, terms.cross_curl]
            .iter()
            .fold(self.magnitude(), |m, t| m.max(t.abs()));
        PrelimReport {
            n: self.grid.n(),
            mode,
            lhs,
            lhs_pairing_d,
            lhs_half_pairing_c,
            terms,
            rhs_sum,
            residual,
            relative_residual: relative(residual, scale),
        }
    }

    pub fn divfree_report(&self) -> DivFreeReport {
        let lhs = self.laplacian_u_against_grad();
        let rhs = self.grad_div_u_against_grad();
        let dim = self.dim();
        let aux = self.integrate(|i| {
            (0..dim)
                .map(|a| {
                    (self.grad_div_u.component(a).get(i) - self.lap_u.component(a).get(i))
                        * self.grad_phi_div_v(a, i)
                })
                .sum()
        });
        let residual = (lhs - rhs).abs();
        DivFreeReport {
            n: self.grid.n(),
            lhs,
            rhs,
            aux,
            residual,
            relative_residual: relative(residual, lhs.abs().max(rhs.abs())),
        }
    }
}

fn check_inputs(u: &VectorField, v: &VectorField, phi: &TestFunction, spec: StencilSpec) -> Result<()> {
    ensure_same_grid(u.grid(), v.grid())?;
    let grid = u.grid();
    if phi.dim() != grid.dim() {
        return Err(LabError::ComponentMismatch {
            expected: grid.dim(),
            actual: phi.dim(),
        });
    }
    check_support_margin(phi, grid, spec)
}

/// Fails unless the support of `φ` keeps `spec.depth` node layers away
/// from every face.
pub fn check_support_margin(phi: &TestFunction, grid: &Grid, spec: StencilSpec) -> Result<()> {
    let required = spec.margin(grid);
    let actual = phi.boundary_margin();
    if actual < required {
        return Err(LabError::SupportMargin {
            required,
            actual,
            depth: spec.depth,
        });
    }
    Ok(())
}

/// Evaluates every term of the integral formula.
pub fn eval_identity(
    u: &VectorField,
    v: &VectorField,
    phi: &TestFunction,
    mode: PairingMode,
) -> Result<IdentityReport> {
    Ok(IdentityKernel::new(u, v, phi, mode)?.identity_report(mode))
}

/// Evaluates both sides of the pairing expansion.
pub fn eval_prelim_identity(
    u: &VectorField,
    v: &VectorField,
    phi: &TestFunction,
    mode: PairingMode,
) -> Result<PrelimReport> {
    Ok(IdentityKernel::new(u, v, phi, mode)?.prelim_report(mode))
}

/// Checks `∫ Δu·∇(φD(v)) = ∫ ∇D(u)·∇(φD(v))`.
pub fn eval_divfree_reduction(u: &VectorField, v: &VectorField, phi: &TestFunction) -> Result<DivFreeReport> {
    Ok(IdentityKernel::new(u, v, phi, PairingMode::ByParts)?.divfree_report())
}

/// Smooth non-gradient pair used by the refinement studies. In 2-D
/// `u = (sin πx sin πy, sin πx sin 2πy)`,
/// `v = (sin πx sin πy + xy, cos πx sin πy)`; in 3-D every entry gains a
/// factor `sin πz` and a third component is added.
pub fn trig_test_pair(grid: Grid) -> (VectorField, VectorField) {
    use std::f64::consts::PI;
    let three = grid.dim() == 3;
    let u = VectorField::sample(grid, |p, out| {
        let (x, y, z) = (p[0], p[1], p[2]);
        let sz = if three { (PI * z).sin() } else { 1.0 };
        out[0] = (PI * x).sin() * (PI * y).sin() * sz;
        out[1] = (PI * x).sin() * (2.0 * PI * y).sin() * sz;
        if three {
            out[2] = (PI * x).sin() * (PI * y).sin() * (2.0 * PI * z).sin();
        }
    });
    let v = VectorField::sample(grid, |p, out| {
        let (x, y, z) = (p[0], p[1], p[2]);
        let sz = if three { (PI * z).sin() } else { 1.0 };
        out[0] = (PI * x).sin() * (PI * y).sin() * sz + x * y;
        out[1] = (PI * x).cos() * (PI * y).sin() * sz;
        if three {
            out[2] = (PI * x).sin() * (PI * y).cos() * (PI * z).sin() + x * z;
        }
    });
    (u, v)
}
