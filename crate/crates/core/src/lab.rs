//! Oscillatory sequences, hypothesis diagnostics, the div-curl product
//! experiment and the term-by-term trace of the compensated-compactness
//! argument.
//!
//! Oscillation parameters are always commensurate with the box:
//! `ε = 1/(2πk)` for integer `k`, and a 1-periodic profile `f` is realised
//! as `f(k·x_j)`, so every realisation completes exactly `k` periods per
//! unit length.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diffops::{curl_matrix, divergence, second_partials, StencilSpec};
use crate::error::{LabError, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::Grid;
use crate::identity::{check_support_margin, IdentityKernel, IdentityTerms, PairingMode};
use crate::poisson::{neg_norm_h_minus_1, solve_dirichlet, SolveStats, SolverConfig};
use crate::quadrature::{integrate, integrate_masked, lp_norm};
use crate::report::{fit_rate, ConvergenceReport};
use crate::testfn::TestFunction;

/// Grid intervals required per oscillation period.
pub const INTERVALS_PER_PERIOD: usize = 16;
/// Product and weak-limit gates, relative to `∫φ`.
pub const PRODUCT_REL_TOL: f64 = 1e-2;
pub const WEAK_REL_TOL: f64 = 1e-2;
/// Diagnostics at or below this are structural zeros.
pub const STRUCTURAL_ZERO: f64 = 1e-10;
/// A compactness diagnostic passes when it decays by at least this factor.
pub const DECAY_FACTOR: f64 = 0.5;
/// Allowed growth of norms across a schedule.
pub const BOUND_FACTOR: f64 = 2.0;
/// Mean of `sin²`, the product limit of the counterexample pair.
pub const COUNTEREXAMPLE_PRODUCT_MEAN: f64 = 0.5;
/// Per-row balance gate of the proof trace.
pub const TRACE_REL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Wave {
    None,
    Sin,
    Cos,
}

/// `offset + wave(2πt)`: a 1-periodic profile whose mean is `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Profile {
    pub offset: f64,
    pub wave: Wave,
}

impl Profile {
    pub const SIN: Profile = Profile {
        offset: 0.0,
        wave: Wave::Sin,
    };
    pub const COS: Profile = Profile {
        offset: 0.0,
        wave: Wave::Cos,
    };

    pub fn constant(c: f64) -> Self {
        Self {
            offset: c,
            wave: Wave::None,
        }
    }

    pub fn shifted(offset: f64, wave: Wave) -> Self {
        Self { offset, wave }
    }

    pub fn mean(&self) -> f64 {
        self.offset
    }

    pub fn is_constant(&self) -> bool {
        self.wave == Wave::None
    }

    pub fn value(&self, t: f64) -> f64 {
        self.offset
            + match self.wave {
                Wave::None => 0.0,
                Wave::Sin => (2.0 * PI * t).sin(),
                Wave::Cos => (2.0 * PI * t).cos(),
            }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wave = match self.wave {
            Wave::None => return write!(f, "{}", self.offset),
            Wave::Sin => "sin",
            Wave::Cos => "cos",
        };
        if self.offset == 0.0 {
            f.write_str(wave)
        } else {
            write!(f, "{}+{wave}", self.offset)
        }
    }
}

/// Accepts `sin`, `cos`, `constant` (= 1), `affine+sin` / `affine+cos`
/// (offset 1), `<c>+sin`, `<c>+cos` and a bare number `<c>`.
impl FromStr for Profile {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || LabError::InvalidProfile(s.to_string());
        let wave_of = |w: &str| match w {
            "sin" => Ok(Wave::Sin),
            "cos" => Ok(Wave::Cos),
            _ => Err(bad()),
        };
        match s {
            "sin" | "cos" => return Ok(Profile::shifted(0.0, wave_of(s)?)),
            "constant" => return Ok(Profile::constant(1.0)),
            _ => {}
        }
        if let Some((head, wave)) = s.split_once('+') {
            let offset = if head == "affine" {
                1.0
            } else {
                head.parse::<f64>().map_err(|_| bad())?
            };
            if !offset.is_finite() {
                return Err(bad());
            }
            return Ok(Profile::shifted(offset, wave_of(wave)?));
        }
        match s.parse::<f64>() {
            Ok(c) if c.is_finite() => Ok(Profile::constant(c)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Profile {
    type Error = LabError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Profile> for String {
    fn from(p: Profile) -> String {
        p.to_string()
    }
}

/// Strictly decreasing `ε_m = 1/(2π k_m)`, stored by the integers `k_m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct EpsSchedule {
    ks: Vec<u32>,
}

impl EpsSchedule {
    pub fn new(ks: Vec<u32>) -> Result<Self> {
        if ks.is_empty() {
            return Err(LabError::InvalidSchedule("empty schedule".into()));
        }
        if ks[0] == 0 {
            return Err(LabError::InvalidSchedule("k must be positive".into()));
        }
        if ks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::InvalidSchedule(format!(
                "k must be strictly increasing, got {ks:?}"
            )));
        }
        Ok(Self { ks })
    }

    /// Recovers `k` from each `ε`; rejects values that are not of the form
    /// `1/(2πk)`.
    pub fn from_eps(eps: &[f64]) -> Result<Self> {
        let ks = eps
            .iter()
            .map(|&e| {
                if !(e > 0.0 && e < 1.0) {
                    return Err(LabError::NonCommensurate(e));
                }
                let k = 1.0 / (2.0 * PI * e);
                let rounded = k.round();
                if rounded < 1.0 || (k - rounded).abs() > 1e-9 * rounded {
                    return Err(LabError::NonCommensurate(e));
                }
                Ok(rounded as u32)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ks)
    }

    pub fn ks(&self) -> &[u32] {
        &self.ks
    }

    pub fn len(&self) -> usize {
        self.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ks.is_empty()
    }

    pub fn eps(&self) -> Vec<f64> {
        self.ks.iter().map(|&k| eps_of(k)).collect()
    }

    pub fn max_k(&self) -> u32 {
        *self.ks.last().expect("non-empty")
    }
}

impl TryFrom<Vec<u32>> for EpsSchedule {
    type Error = LabError;
    fn try_from(ks: Vec<u32>) -> Result<Self> {
        Self::new(ks)
    }
}

impl From<EpsSchedule> for Vec<u32> {
    fn from(s: EpsSchedule) -> Vec<u32> {
        s.ks
    }
}

pub fn eps_of(k: u32) -> f64 {
    1.0 / (2.0 * PI * k as f64)
}

/// Smallest admissible `n` for oscillation index `k`.
pub fn required_n(k: u32) -> usize {
    INTERVALS_PER_PERIOD * k as usize + 1
}

pub fn check_resolution(grid: &Grid, k: u32) -> Result<()> {
    let required = required_n(k);
    if grid.n() < required {
        return Err(LabError::UnderResolved {
            k,
            n: grid.n(),
            required_n: required,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    DivFree,
    CurlFree,
    Counterexample,
    Custom,
}

/// Hypotheses of the div-curl lemma as they apply to one family:
/// weak convergence in `L^p` (i) and `L^q` (ii), compactness of the
/// divergence (iii) and of the curl (iv) in the negative norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisStatus {
    pub i: bool,
    pub ii: bool,
    pub iii: bool,
    pub iv: bool,
}

impl HypothesisStatus {
    pub const ALL: HypothesisStatus = HypothesisStatus {
        i: true,
        ii: true,
        iii: true,
        iv: true,
    };
}

/// Adds `profile(k·x_axis)` to `component`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub component: usize,
    pub axis: usize,
    pub profile: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatoryFamily {
    pub label: String,
    pub kind: FamilyKind,
    pub dim: usize,
    pub layers: Vec<Layer>,
    pub schedule: EpsSchedule,
    /// Constant weak limit, one entry per component.
    pub declared_limit: Vec<f64>,
    pub declared: HypothesisStatus,
}

impl OscillatoryFamily {
    pub fn custom(
        label: impl Into<String>,
        dim: usize,
        layers: Vec<Layer>,
        schedule: EpsSchedule,
        declared: HypothesisStatus,
    ) -> Result<Self> {
        Self::build(label.into(), FamilyKind::Custom, dim, layers, schedule, declared)
    }

    fn build(
        label: String,
        kind: FamilyKind,
        dim: usize,
        layers: Vec<Layer>,
        schedule: EpsSchedule,
        declared: HypothesisStatus,
    ) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(LabError::UnsupportedDimension(dim));
        }
        if let Some(l) = layers.iter().find(|l| l.component >= dim || l.axis >= dim) {
            return Err(LabError::InvalidData(format!(
                "layer (component {}, axis {}) outside dimension {dim}",
                l.component, l.axis
            )));
        }
        let mut declared_limit = vec![0.0; dim];
        for l in &layers {
            declared_limit[l.component] += l.profile.mean();
        }
        Ok(Self {
            label,
            kind,
            dim,
            layers,
            schedule,
            declared_limit,
            declared,
        })
    }

    /// Same construction in another dimension; the extra components are
    /// zero.
    pub fn with_dim(self, dim: usize) -> Result<Self> {
        Self::build(self.label, self.kind, dim, self.layers, self.schedule, self.declared)
    }

    pub fn eps(&self) -> Vec<f64> {
        self.schedule.eps()
    }

    pub fn realize(&self, grid: Grid, idx: usize) -> Result<VectorField> {
        if grid.dim() != self.dim {
            return Err(LabError::ComponentMismatch {
                expected: self.dim,
                actual: grid.dim(),
            });
        }
        let k = self.schedule.ks()[idx];
        check_resolution(&grid, k)?;
        let kf = k as f64;
        Ok(VectorField::sample(grid, |p, out| {
            for l in &self.layers {
                out[l.component] += l.profile.value(kf * p[l.axis]);
            }
        }))
    }

    pub fn limit_field(&self, grid: Grid) -> VectorField {
        VectorField::constant(grid, &self.declared_limit)
    }
}

/// `a^ε = (f(x₂/ε), 0)`: the divergence vanishes identically.
pub fn gen_divfree(profile: Profile, schedule: EpsSchedule) -> Result<OscillatoryFamily> {
    OscillatoryFamily::build(
        format!("div-free({profile})"),
        FamilyKind::DivFree,
        2,
        vec![Layer {
            component: 0,
            axis: 1,
            profile,
        }],
        schedule,
        HypothesisStatus {
            iv: profile.is_constant(),
            ..HypothesisStatus::ALL
        },
    )
}

/// `b^ε = (g(x₁/ε), 0)`: every curl entry vanishes identically.
pub fn gen_curlfree(profile: Profile, schedule: EpsSchedule) -> Result<OscillatoryFamily> {
    OscillatoryFamily::build(
        format!("curl-free({profile})"),
        FamilyKind::CurlFree,
        2,
        vec![Layer {
            component: 0,
            axis: 0,
            profile,
        }],
        schedule,
        HypothesisStatus {
            iii: profile.is_constant(),
            ..HypothesisStatus::ALL
        },
    )
}

/// `A^ε = (s, 0)` and `B^ε = (s, s)` with `s = sin(x₁/ε)`. Both converge
/// weakly to zero, `A^ε·B^ε = s²` converges to `½` instead of `0`; `A`
/// has a non-compact divergence and `B` a non-compact divergence and curl.
pub fn gen_counterexample(schedule: EpsSchedule) -> Result<(OscillatoryFamily, OscillatoryFamily)> {
    let layer = |component| Layer {
        component,
        axis: 0,
        profile: Profile::SIN,
    };
    let a = OscillatoryFamily::build(
        "counterexample-A".into(),
        FamilyKind::Counterexample,
        2,
        vec![layer(0)],
        schedule.clone(),
        HypothesisStatus {
            iii: false,
            ..HypothesisStatus::ALL
        },
    )?;
    let b = OscillatoryFamily::build(
        "counterexample-B".into(),
        FamilyKind::Counterexample,
        2,
        vec![layer(0), layer(1)],
        schedule,
        HypothesisStatus {
            iii: false,
            iv: false,
            ..HypothesisStatus::ALL
        },
    )?;
    Ok((a, b))
}

/// Axis-aligned box strictly inside the unit box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SubBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || !(2..=3).contains(&lower.len()) {
            return Err(LabError::InvalidSubBox("corner dimensions differ".into()));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(0.0 < *l && l < u && *u < 1.0) {
                return Err(LabError::InvalidSubBox(format!(
                    "need 0 < lower < upper < 1, got [{l}, {u}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Bounding box of `supp φ` widened by `margin` on every side.
    pub fn around(phi: &TestFunction, margin: f64) -> Result<Self> {
        let r = phi.radius() + margin;
        Self::new(
            phi.center().iter().map(|c| c - r).collect(),
            phi.center().iter().map(|c| c + r).collect(),
        )
    }

    /// Default box: halfway between the support of `φ` and the faces.
    pub fn default_for(phi: &TestFunction) -> Result<Self> {
        Self::around(phi, 0.5 * phi.boundary_margin())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Distance from `supp φ` to the faces of the box; positive when the
    /// support is strictly inside.
    pub fn support_margin(&self, phi: &TestFunction) -> f64 {
        let r = phi.radius();
        phi.center()
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(c, (l, u))| (c - r - l).min(u - c - r))
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance from the box to the faces of the unit box.
    pub fn boundary_margin(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l.min(1.0 - u))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| l <= x && x <= u)
    }

    pub fn mask(&self, grid: &Grid) -> Vec<bool> {
        (0..grid.len())
            .map(|i| self.contains(&grid.point(i)[..grid.dim()]))
            .collect()
    }

    /// The box must contain `supp φ` with a positive margin and stay clear
    /// of the layers where composite stencils are one-sided.
    pub fn validate_for(&self, phi: &TestFunction, grid: &Grid) -> Result<()> {
        if self.dim() != grid.dim() || phi.dim() != grid.dim() {
            return Err(LabError::InvalidSubBox("dimension mismatch".into()));
        }
        let m = self.support_margin(phi);
        if m <= 0.0 {
            return Err(LabError::InvalidSubBox(format!(
                "test-function support is not strictly inside the box (margin {m})"
            )));
        }
        let required = PairingMode::ByParts.stencil().margin(grid);
        if self.boundary_margin() < required {
            return Err(LabError::InvalidSubBox(format!(
                "box is {} from the boundary, needs {required}",
                self.boundary_margin()
            )));
        }
        Ok(())
    }
}

/// Five bumps of varied centres and radii.
pub fn default_dictionary(dim: usize) -> Vec<TestFunction> {
    let specs: [([f64; 2], f64); 5] = [
        ([0.5, 0.5], 0.3),
        ([0.3, 0.35], 0.15),
        ([0.7, 0.6], 0.2),
        ([0.4, 0.7], 0.18),
        ([0.6, 0.3], 0.25),
    ];
    specs
        .iter()
        .map(|(c, r)| {
            let mut center = c.to_vec();
            center.resize(dim, 0.5);
            TestFunction::bump(&center, *r).expect("dictionary bumps are admissible")
        })
        .collect()
}

/// Runs `f` for every schedule index on its own thread; results come back
/// in schedule order.
fn per_eps<T: Send>(len: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = (0..len).map(|i| s.spawn(move || f(i))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

fn same_schedule(a: &OscillatoryFamily, b: &OscillatoryFamily) -> Result<()> {
    if a.schedule != b.schedule {
        return Err(LabError::InvalidSchedule(format!(
            "families use different schedules: {:?} vs {:?}",
            a.schedule.ks(),
            b.schedule.ks()
        )));
    }
    if a.dim != b.dim {
        return Err(LabError::ComponentMismatch {
            expected: a.dim,
            actual: b.dim,
        });
    }
    Ok(())
}

/// Tabulates `∫ (a^ε·b^ε) φ` against `(ā·b̄) ∫φ`; the verdict gate is
/// `rel_tol·∫φ` (see [`PRODUCT_REL_TOL`]).
pub fn product_test(
    a: &OscillatoryFamily,
    b: &OscillatoryFamily,
    phi: &TestFunction,
    grid: Grid,
    rel_tol: f64,
) -> Result<ConvergenceReport> {
    same_schedule(a, b)?;
    check_resolution(&grid, a.schedule.max_k())?;
    let phi_s = phi.sample(grid);
    let values = per_eps(a.schedule.len(), |m| {
        let (x, y) = (a.realize(grid, m)?, b.realize(grid, m)?);
        Ok(integrate(&(&x.dot(&y) * &phi_s)))
    })?;
    let int_phi = integrate(&phi_s);
    let limit_dot: f64 = a.declared_limit.iter().zip(&b.declared_limit).map(|(x, y)| x * y).sum();
    Ok(ConvergenceReport::new(
        format!("product:{}*{}", a.label, b.label),
        a.eps(),
        values,
        limit_dot * int_phi,
        rel_tol * int_phi,
    ))
}

/// Passes when the diagnostic is a structural zero throughout or has
/// decayed by [`DECAY_FACTOR`] over the schedule.
pub fn compactness_verdict(values: &[f64]) -> bool {
    if values.iter().all(|v| v.abs() <= STRUCTURAL_ZERO) {
        return true;
    }
    match (values.first(), values.last()) {
        (Some(&first), Some(&last)) if first > 0.0 => last / first <= DECAY_FACTOR,
        _ => false,
    }
}

/// Weak-limit gaps vanish: within tolerance at the end of the schedule,
/// or decaying by [`DECAY_FACTOR`] over it.
fn gaps_vanish(r: &ConvergenceReport) -> bool {
    r.pass || compactness_verdict(&r.gaps)
}

fn bounded(norms: &[f64]) -> bool {
    let first = norms.first().copied().unwrap_or(0.0);
    norms.iter().all(|&x| x <= BOUND_FACTOR * first)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurlDiagnostic {
    /// e.g. `C12`
    pub entry: String,
    pub values: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub label: String,
    pub kind: FamilyKind,
    pub n: usize,
    pub ks: Vec<u32>,
    pub eps: Vec<f64>,
    pub p: f64,
    pub q: f64,
    /// Negative norms are `H⁻¹` norms standing in for `W^{-1,p}`.
    pub surrogate: bool,
    pub dictionary: Vec<TestFunction>,
    pub lp_norms: Vec<f64>,
    pub lq_norms: Vec<f64>,
    /// `∫ a^ε_i φ_d` against `ā_i ∫ φ_d`, labelled `phi{d}:a{i}`.
    pub weak: Vec<ConvergenceReport>,
    /// `‖D(a^ε)‖_{H⁻¹}`
    pub div_neg_norm: Vec<f64>,
    pub div_pass: bool,
    /// `‖C_ij(a^ε)‖_{H⁻¹}` for `i < j`
    pub curl_neg_norm: Vec<CurlDiagnostic>,
    pub declared: HypothesisStatus,
    pub measured: HypothesisStatus,
    pub matches_declaration: bool,
}

/// Measures every hypothesis on one family. Failures are reported as
/// measured, whatever the declaration says.
pub fn hypothesis_check(
    family: &OscillatoryFamily,
    grid: Grid,
    dictionary: &[TestFunction],
    p: f64,
    cfg: &SolverConfig,
) -> Result<HypothesisReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(LabError::InvalidExponent(p));
    }
    if dictionary.is_empty() {
        return Err(LabError::InvalidData("empty test-function dictionary".into()));
    }
    check_resolution(&grid, family.schedule.max_k())?;
    let q = p / (p - 1.0);
    let dim = grid.dim();

    struct Row {
        lp: f64,
        lq: f64,
        weak: Vec<f64>,
        div: f64,
        curl: Vec<f64>,
    }
    let sampled: Vec<ScalarField> = dictionary.iter().map(|phi| phi.sample(grid)).collect();
    let rows = per_eps(family.schedule.len(), |m| {
        let a = family.realize(grid, m)?;
        let mut weak = Vec::with_capacity(dictionary.len() * dim);
        for phi in &sampled {
            for c in a.components() {
                weak.push(integrate(&(c * phi)));
            }
        }
        let div = neg_norm_h_minus_1(&divergence(&a), cfg)?.value;
        let curl = curl_matrix(&a)
            .upper_entries()
            .map(|(_, c)| Ok(neg_norm_h_minus_1(c, cfg)?.value))
            .collect::<Result<Vec<_>>>()?;
        Ok(Row {
            lp: lp_norm(&a, p)?,
            lq: lp_norm(&a, q)?,
            weak,
            div,
            curl,
        })
    })?;

    let eps = family.eps();
    let mut weak = Vec::new();
    for (d, phi) in sampled.iter().enumerate() {
        let int_phi = integrate(phi);
        for i in 0..dim {
            let values = rows.iter().map(|r| r.weak[d * dim + i]).collect();
            weak.push(ConvergenceReport::new(
                format!("phi{d}:a{}", i + 1),
                eps.clone(),
                values,
                family.declared_limit[i] * int_phi,
                WEAK_REL_TOL * int_phi,
            ));
        }
    }
    let weak_pass = weak.iter().all(gaps_vanish);

    let lp_norms: Vec<f64> = rows.iter().map(|r| r.lp).collect();
    let lq_norms: Vec<f64> = rows.iter().map(|r| r.lq).collect();
    let div_neg_norm: Vec<f64> = rows.iter().map(|r| r.div).collect();
    let div_pass = compactness_verdict(&div_neg_norm);
    let mut curl_neg_norm = Vec::new();
    let mut slot = 0;
    for i in 0..dim {
        for j in i + 1..dim {
            let values: Vec<f64> = rows.iter().map(|r| r.curl[slot]).collect();
            curl_neg_norm.push(CurlDiagnostic {
                entry: format!("C{}{}", i + 1, j + 1),
                pass: compactness_verdict(&values),
                values,
            });
            slot += 1;
        }
    }
    let measured = HypothesisStatus {
        i: bounded(&lp_norms) && weak_pass,
        ii: bounded(&lq_norms) && weak_pass,
        iii: div_pass,
        iv: curl_neg_norm.iter().all(|c| c.pass),
    };
    Ok(HypothesisReport {
        label: family.label.clone(),
        kind: family.kind,
        n: grid.n(),
        ks: family.schedule.ks().to_vec(),
        eps,
        p,
        q,
        surrogate: p != 2.0,
        dictionary: dictionary.to_vec(),
        lp_norms,
        lq_norms,
        weak,
        div_neg_norm,
        div_pass,
        curl_neg_norm,
        declared: family.declared,
        measured,
        matches_declaration: measured == family.declared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofTraceRow {
    pub k: u32,
    pub eps: f64,
    /// `∫ (a^ε·b^ε) φ`
    pub lhs: f64,
    pub terms: IdentityTerms,
    pub rhs_sum: f64,
    pub residual: f64,
    pub scale: f64,
    pub relative_residual: f64,
    /// Second-difference `L²` norms of `u^ε`, `v^ε` on the box.
    pub w22_u: f64,
    pub w22_v: f64,
    pub solve_u: SolveStats,
    pub solve_v: SolveStats,
}

/// Convergence of one term along the schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermConvergence {
    pub term: String,
    /// Gaps to the value computed from the declared limits.
    pub gaps_to_limit: Vec<f64>,
    /// Gaps to the Richardson extrapolation over the last two rows.
    pub gaps_to_extrapolation: Vec<f64>,
    pub rate: Option<f64>,
    pub converging: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofTraceReport {
    pub a: String,
    pub b: String,
    pub n: usize,
    pub phi: TestFunction,
    pub subbox: SubBox,
    pub tolerance: f64,
    pub rows: Vec<ProofTraceRow>,
    /// Terms evaluated on the lifted declared limits.
    pub limit_lhs: f64,
    pub limit_terms: IdentityTerms,
    /// Per-term targets extrapolated to `ε → 0` assuming first-order decay.
    pub extrapolated: bool,
    pub extrapolated_terms: Option<IdentityTerms>,
    pub lhs_convergence: TermConvergence,
    pub term_convergence: Vec<TermConvergence>,
    pub balance_pass: bool,
    pub w22_ratio_u: f64,
    pub w22_ratio_v: f64,
    pub regularity_pass: bool,
    /// Terms whose gaps to the limit do not decay.
    pub non_convergent_terms: Vec<String>,
}

impl ProofTraceReport {
    pub fn pass(&self) -> bool {
        self.balance_pass && self.regularity_pass
    }
}

fn w22(u: &VectorField, mask: &[bool]) -> f64 {
    let dim = u.dim();
    let mut total = 0.0;
    for c in u.components() {
        let seconds = second_partials(c);
        let mut slot = 0;
        for p in 0..dim {
            for q in p..dim {
                let d = &seconds[slot];
                let mult = if p == q { 1.0 } else { 2.0 };
                total += mult * integrate_masked(&(d * d), mask);
                slot += 1;
            }
        }
    }
    total.sqrt()
}

fn convergence(term: &str, eps: &[f64], values: &[f64], limit: f64, extrap: Option<f64>, scale: f64) -> TermConvergence {
    let gaps_to_limit: Vec<f64> = values.iter().map(|v| (v - limit).abs()).collect();
    let gaps_to_extrapolation = match extrap {
        Some(t) => values.iter().map(|v| (v - t).abs()).collect(),
        None => Vec::new(),
    };
    let floor = STRUCTURAL_ZERO * scale.max(1.0);
    let converging = gaps_to_limit.iter().all(|&g| g <= floor)
        || match (gaps_to_limit.first(), gaps_to_limit.last()) {
            (Some(&f), Some(&l)) => l <= DECAY_FACTOR * f,
            _ => true,
        };
    TermConvergence {
        term: term.to_string(),
        rate: fit_rate(eps, &gaps_to_limit, floor),
        gaps_to_limit,
        gaps_to_extrapolation,
        converging,
    }
}

/// Lifts both families (`−Δu^ε = a^ε`, `−Δv^ε = b^ε`) and evaluates every
/// term of the integral formula with `Δu^ε = −a^ε`, `Δv^ε = −b^ε` over the
/// box, pairings by parts. Rows balance when their relative residual is
/// within `balance_tol` (see [`TRACE_REL_TOL`]).
pub fn proof_trace(
    a: &OscillatoryFamily,
    b: &OscillatoryFamily,
    phi: &TestFunction,
    subbox: &SubBox,
    grid: Grid,
    cfg: &SolverConfig,
    balance_tol: f64,
) -> Result<ProofTraceReport> {
    same_schedule(a, b)?;
    check_resolution(&grid, a.schedule.max_k())?;
    check_support_margin(phi, &grid, StencilSpec::GRAD_DIV)?;
    subbox.validate_for(phi, &grid)?;
    let mask = subbox.mask(&grid);
    let mode = PairingMode::ByParts;

    let evaluate = |x: &VectorField, y: &VectorField| -> Result<(IdentityKernel, SolveStats, SolveStats, VectorField, VectorField)> {
        let su = solve_dirichlet(x, cfg)?;
        let sv = solve_dirichlet(y, cfg)?;
        let kernel = IdentityKernel::with_laplacians(
            &su.solution,
            &sv.solution,
            -x,
            -y,
            phi,
            Some(mask.clone()),
        )?;
        Ok((kernel, su.stats, sv.stats, su.solution, sv.solution))
    };

    let eps = a.eps();
    let rows = per_eps(a.schedule.len(), |m| {
        let (x, y) = (a.realize(grid, m)?, b.realize(grid, m)?);
        let (kernel, solve_u, solve_v, u, v) = evaluate(&x, &y)?;
        let report = kernel.identity_report(mode);
        Ok(ProofTraceRow {
            k: a.schedule.ks()[m],
            eps: eps[m],
            lhs: report.lhs,
            terms: report.terms,
            rhs_sum: report.rhs_sum,
            residual: report.residual,
            scale: report.scale,
            relative_residual: report.relative_residual,
            w22_u: w22(&u, &mask),
            w22_v: w22(&v, &mask),
            solve_u,
            solve_v,
        })
    })?;

    let (limit_kernel, ..) = evaluate(&a.limit_field(grid), &b.limit_field(grid))?;
    let limit_lhs = limit_kernel.lhs();
    let limit_terms = limit_kernel.terms(mode);

    let extrapolate = |vals: &[f64]| -> Option<f64> {
        let m = vals.len();
        if m < 2 {
            return None;
        }
        let (e0, e1) = (eps[m - 2], eps[m - 1]);
        Some((e0 * vals[m - 1] - e1 * vals[m - 2]) / (e0 - e1))
    };
    let lhs_values: Vec<f64> = rows.iter().map(|r| r.lhs).collect();
    let scale = rows
        .iter()
        .flat_map(|r| r.terms.to_array().into_iter().chain([r.lhs]))
        .fold(0.0f64, |m, t| m.max(t.abs()));
    let lhs_convergence = convergence("lhs", &eps, &lhs_values, limit_lhs, extrapolate(&lhs_values), scale);
    let limit_arr = limit_terms.to_array();
    let mut extrapolated_arr = [0.0; 6];
    let mut term_convergence = Vec::with_capacity(6);
    for (t, name) in IdentityTerms::NAMES.iter().enumerate() {
        let values: Vec<f64> = rows.iter().map(|r| r.terms.to_array()[t]).collect();
        let ex = extrapolate(&values);
        extrapolated_arr[t] = ex.unwrap_or(f64::NAN);
        term_convergence.push(convergence(name, &eps, &values, limit_arr[t], ex, scale));
    }
    let extrapolated = rows.len() >= 2;

    let ratio = |vals: Vec<f64>| {
        let max = vals.iter().fold(0.0f64, |m, v| m.max(*v));
        let min = vals.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        if max == 0.0 {
            1.0
        } else {
            max / min
        }
    };
    let w22_ratio_u = ratio(rows.iter().map(|r| r.w22_u).collect());
    let w22_ratio_v = ratio(rows.iter().map(|r| r.w22_v).collect());
    Ok(ProofTraceReport {
        a: a.label.clone(),
        b: b.label.clone(),
        n: grid.n(),
        phi: phi.clone(),
        subbox: subbox.clone(),
        tolerance: balance_tol,
        balance_pass: rows.iter().all(|r| r.relative_residual <= balance_tol),
        regularity_pass: w22_ratio_u <= BOUND_FACTOR && w22_ratio_v <= BOUND_FACTOR,
        non_convergent_terms: term_convergence
            .iter()
            .filter(|t| !t.converging)
            .map(|t| t.term.clone())
            .collect(),
        rows,
        limit_lhs,
        limit_terms,
        extrapolated,
        extrapolated_terms: extrapolated.then(|| IdentityTerms::from_array(extrapolated_arr)),
        lhs_convergence,
        term_convergence,
        w22_ratio_u,
        w22_ratio_v,
    })
}
