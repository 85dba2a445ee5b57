//! Homogeneous Dirichlet Poisson problems `−Δu = f` on the unit box and
//! the H⁻¹ norm computed through them.
//!
//! The discrete operator is the compact 5-point (2-D) / 7-point (3-D)
//! Laplacian acting on interior nodes, with the solution pinned to zero on
//! the boundary. Two backends invert it: a separable sine transform, exact
//! for the discrete operator up to rounding, and matrix-free conjugate
//! gradients.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::diffops::gradient;
use crate::error::{LabError, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::Grid;
use crate::quadrature::{integrate, lp_norm};
use crate::report::ConvergenceReport;
use crate::testfn::TestFunction;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MAX_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    SineTransform,
    ConjugateGradient,
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::SineTransform => "sine-transform",
            Backend::ConjugateGradient => "conjugate-gradient",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub backend: Backend,
    pub tol: f64,
    /// Defaults to `10·n` when unset.
    pub max_iter: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            backend: Backend::SineTransform,
            tol: DEFAULT_TOL,
            max_iter: None,
        }
    }
}

impl SolverConfig {
    pub fn with_backend(backend: Backend) -> Self {
        Self {
            backend,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol <= MAX_TOL) {
            return Err(LabError::InvalidTolerance(self.tol));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub backend: Backend,
    /// Largest iteration count over the solved components (0 for the
    /// direct backend).
    pub iterations: usize,
    /// Largest relative residual `‖−Δ_h u − f‖ / ‖f‖` over interior nodes.
    pub residual: f64,
}

impl SolveStats {
    fn merge(self, other: SolveStats) -> SolveStats {
        SolveStats {
            backend: self.backend,
            iterations: self.iterations.max(other.iterations),
            residual: self.residual.max(other.residual),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution<F> {
    pub rhs: F,
    pub solution: F,
    pub stats: SolveStats,
}

/// Right-hand sides the solver accepts: scalar fields, and vector fields
/// solved componentwise.
pub trait DirichletRhs: Clone + Sized {
    fn solve_with(&self, cfg: &SolverConfig) -> Result<(Self, SolveStats)>;
}

impl DirichletRhs for ScalarField {
    fn solve_with(&self, cfg: &SolverConfig) -> Result<(Self, SolveStats)> {
        solve_scalar(self, cfg)
    }
}

impl DirichletRhs for VectorField {
    fn solve_with(&self, cfg: &SolverConfig) -> Result<(Self, SolveStats)> {
        let mut comps = Vec::with_capacity(self.dim());
        let mut stats: Option<SolveStats> = None;
        for c in self.components() {
            let (u, s) = solve_scalar(c, cfg)?;
            comps.push(u);
            stats = Some(stats.map_or(s, |acc| acc.merge(s)));
        }
        let field = VectorField::from_components(comps)?;
        Ok((field, stats.expect("at least two components")))
    }
}

/// Solves `−Δ_h u = f` in the interior with `u = 0` on the boundary.
pub fn solve_dirichlet<F: DirichletRhs>(f: &F, cfg: &SolverConfig) -> Result<PoissonSolution<F>> {
    cfg.validate()?;
    let (solution, stats) = f.solve_with(cfg)?;
    Ok(PoissonSolution {
        rhs: f.clone(),
        solution,
        stats,
    })
}

fn solve_scalar(f: &ScalarField, cfg: &SolverConfig) -> Result<(ScalarField, SolveStats)> {
    let grid = *f.grid();
    let layout = Interior::new(grid);
    let rhs = layout.gather(f);
    let (u, iterations) = match cfg.backend {
        Backend::SineTransform => (sine_transform_solve(&layout, &rhs), 0),
        Backend::ConjugateGradient => {
            let max_iter = cfg.max_iter.unwrap_or(10 * grid.n());
            conjugate_gradient(&layout, &rhs, cfg.tol, max_iter)?
        }
    };
    let residual = layout.relative_residual(&u, &rhs);
    let stats = SolveStats {
        backend: cfg.backend,
        iterations,
        residual,
    };
    Ok((layout.scatter(&u), stats))
}

/// Dense indexing of the `(n−2)^dim` interior unknowns.
#[derive(Debug, Clone, Copy)]
pub struct Interior {
    grid: Grid,
    m: usize,
}

impl Interior {
    pub fn new(grid: Grid) -> Self {
        Self {
            grid,
            m: grid.n() - 2,
        }
    }

    /// Unknowns per axis.
    pub fn per_axis(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.grid.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    fn stride(&self, axis: usize) -> usize {
        self.m.pow(axis as u32)
    }

    fn grid_index(&self, k: usize) -> usize {
        let mut rest = k;
        let mut multi = [0usize; 3];
        for slot in multi.iter_mut().take(self.grid.dim()) {
            *slot = rest % self.m + 1;
            rest /= self.m;
        }
        self.grid.flat_index(&multi)
    }

    pub fn gather(&self, f: &ScalarField) -> Vec<f64> {
        (0..self.len()).map(|k| f.get(self.grid_index(k))).collect()
    }

    pub fn scatter(&self, u: &[f64]) -> ScalarField {
        let mut out = vec![0.0; self.grid.len()];
        for (k, &v) in u.iter().enumerate() {
            out[self.grid_index(k)] = v;
        }
        ScalarField::from_values(self.grid, out).expect("grid-sized")
    }

    /// `−Δ_h u` with zero Dirichlet data, on interior unknowns.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let dim = self.grid.dim();
        let m = self.m;
        let inv_h2 = 1.0 / (self.grid.h() * self.grid.h());
        let diag = 2.0 * dim as f64;
        for (k, o) in out.iter_mut().enumerate() {
            let mut acc = diag * u[k];
            for a in 0..dim {
                let s = self.stride(a);
                let pos = (k / s) % m;
                if pos > 0 {
                    acc -= u[k - s];
                }
                if pos + 1 < m {
                    acc -= u[k + s];
                }
            }
            *o = acc * inv_h2;
        }
    }

    fn relative_residual(&self, u: &[f64], rhs: &[f64]) -> f64 {
        let norm_f = norm2(rhs);
        if norm_f == 0.0 {
            return norm2(u);
        }
        let mut au = vec![0.0; u.len()];
        self.apply(u, &mut au);
        let r: f64 = au
            .iter()
            .zip(rhs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        r / norm_f
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Type-I discrete sine transform of length `m`,
/// `X_k = Σ_j x_j sin(π j k / (m+1))`, computed through an FFT of the odd
/// extension of length `2(m+1)`.
struct SineTransform {
    m: usize,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl SineTransform {
    fn new(m: usize) -> Self {
        let len = 2 * (m + 1);
        let fft = FftPlanner::new().plan_fft_forward(len);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        Self {
            m,
            fft,
            buf: vec![Complex::default(); len],
            scratch,
        }
    }

    fn apply(&mut self, line: &mut [f64]) {
        let m = self.m;
        let len = 2 * (m + 1);
        self.buf[0] = Complex::default();
        self.buf[m + 1] = Complex::default();
        for j in 0..m {
            self.buf[j + 1] = Complex::new(line[j], 0.0);
            self.buf[len - 1 - j] = Complex::new(-line[j], 0.0);
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (k, x) in line.iter_mut().enumerate() {
            *x = -0.5 * self.buf[k + 1].im;
        }
    }
}

fn sine_transform_all_axes(layout: &Interior, data: &mut [f64], dst: &mut SineTransform) {
    let m = layout.m;
    let dim = layout.grid.dim();
    let mut line = vec![0.0; m];
    for axis in 0..dim {
        let s = layout.stride(axis);
        for start in 0..data.len() {
            if !(start / s).is_multiple_of(m) {
                continue;
            }
            for (j, l) in line.iter_mut().enumerate() {
                *l = data[start + j * s];
            }
            dst.apply(&mut line);
            for (j, l) in line.iter().enumerate() {
                data[start + j * s] = *l;
            }
        }
    }
}

fn sine_transform_solve(layout: &Interior, rhs: &[f64]) -> Vec<f64> {
    let m = layout.m;
    let dim = layout.grid.dim();
    let h = layout.grid.h();
    let mut data = rhs.to_vec();
    let mut dst = SineTransform::new(m);
    sine_transform_all_axes(layout, &mut data, &mut dst);

    let eig: Vec<f64> = (1..=m)
        .map(|k| {
            let s = (k as f64 * std::f64::consts::PI / (2.0 * (m + 1) as f64)).sin();
            4.0 * s * s / (h * h)
        })
        .collect();
    // DST-I is its own inverse up to (2/(m+1)) per axis
    let norm = (2.0 / (m + 1) as f64).powi(dim as i32);
    for (k, v) in data.iter_mut().enumerate() {
        let mut lam = 0.0;
        let mut rest = k;
        for _ in 0..dim {
            lam += eig[rest % m];
            rest /= m;
        }
        *v *= norm / lam;
    }
    sine_transform_all_axes(layout, &mut data, &mut dst);
    data
}

fn conjugate_gradient(
    layout: &Interior,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let len = rhs.len();
    let mut x = vec![0.0; len];
    let norm_b = norm2(rhs);
    if norm_b == 0.0 {
        return Ok((x, 0));
    }
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; len];
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for it in 1..=max_iter {
        layout.apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rr / pap;
        for i in 0..len {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        if rr_new.sqrt() <= tol * norm_b {
            return Ok((x, it));
        }
        let beta = rr_new / rr;
        for i in 0..len {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Err(LabError::SolverNotConverged {
        backend: Backend::ConjugateGradient.name(),
        iterations: max_iter,
        residual: rr.sqrt() / norm_b,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegNormResult {
    pub value: f64,
    pub lifted: PoissonSolution<ScalarField>,
}

/// `‖f‖_{H⁻¹} = ‖∇(−Δ)⁻¹ f‖_{L²}`.
pub fn neg_norm_h_minus_1(f: &ScalarField, cfg: &SolverConfig) -> Result<NegNormResult> {
    let lifted = solve_dirichlet(f, cfg)?;
    let value = lp_norm(&gradient(&lifted.solution), 2.0)?;
    Ok(NegNormResult { value, lifted })
}

/// Tabulates `∫ u^ε_i φ` and `∫ ∇u^ε_i · ∇φ` for every component `i` and
/// every test function against the same quantities for the lifted limit.
/// Rows are ordered by test function, then component, then value before
/// gradient.
pub fn weak_w1p_limit_check(
    eps: &[f64],
    family: &[PoissonSolution<VectorField>],
    limit: &PoissonSolution<VectorField>,
    dictionary: &[TestFunction],
    tolerance: f64,
) -> Result<Vec<ConvergenceReport>> {
    assert_eq!(eps.len(), family.len(), "one solution per epsilon");
    let grid = *limit.solution.grid();
    for s in family {
        crate::field::ensure_same_grid(s.solution.grid(), &grid)?;
    }
    let grads = |w: &VectorField| -> Vec<VectorField> {
        w.components().iter().map(gradient).collect()
    };
    let family_grads: Vec<Vec<VectorField>> = family.iter().map(|s| grads(&s.solution)).collect();
    let limit_grads = grads(&limit.solution);

    let mut out = Vec::new();
    for (d, phi) in dictionary.iter().enumerate() {
        let phi_s = phi.sample(grid);
        let grad_phi = phi.sample_gradient(grid);
        for i in 0..grid.dim() {
            let value_of = |u: &VectorField| integrate(&(u.component(i) * &phi_s));
            let values = family.iter().map(|s| value_of(&s.solution)).collect();
            out.push(ConvergenceReport::new(
                format!("phi{d}:u{}", i + 1),
                eps.to_vec(),
                values,
                value_of(&limit.solution),
                tolerance,
            ));
            let grad_of = |g: &[VectorField]| integrate(&g[i].dot(&grad_phi));
            let values = family_grads.iter().map(|g| grad_of(g)).collect();
            out.push(ConvergenceReport::new(
                format!("phi{d}:grad_u{}", i + 1),
                eps.to_vec(),
                values,
                grad_of(&limit_grads),
                tolerance,
            ));
        }
    }
    Ok(out)
}
