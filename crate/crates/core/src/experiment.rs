//! The experiments behind the command-line subcommands. Each run returns an
//! [`Outcome`]: named pass/fail checks, the full report as JSON, and a
//! per-ε (or per-grid) table for CSV output.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Command, ExperimentConfig, FieldPair, Format, ResolvedConfig, TracePair};
use crate::diffops::divergence;
use crate::error::{LabError, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::{Grid, Point};
use crate::identity::{trig_test_pair, IdentityKernel, IdentityTerms, PairingMode};
use crate::io::{write_csv, Table, SCHEMA_VERSION};
use crate::lab::{
    default_dictionary, gen_counterexample, gen_curlfree, gen_divfree, hypothesis_check, product_test,
    proof_trace, OscillatoryFamily, SubBox, BOUND_FACTOR, COUNTEREXAMPLE_PRODUCT_MEAN, DECAY_FACTOR,
    PRODUCT_REL_TOL,
};
use crate::poisson::{neg_norm_h_minus_1, solve_dirichlet};
use crate::quadrature::{integrate, l2_error_reconstructed, lp_norm};
use crate::report::fit_rate;

/// Reference grid of the identity gates; finer rungs are gated at
/// `tol·1.2·(128/(n−1))²`.
const IDENTITY_REFERENCE_INTERVALS: f64 = 128.0;
const IDENTITY_SLACK: f64 = 1.2;
/// Per-doubling error ratio window for second-order quantities.
const RATIO_WINDOW: (f64, f64) = (3.0, 5.0);
/// Counterexample products must stay this far (relative to `∫φ`) from the
/// declared-limit product.
const SEPARATION: f64 = 0.4;
/// Residuals below this are treated as exact in ratio checks.
const EXACT: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub pass: bool,
}

impl Check {
    fn le(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!("<= {limit:e}"),
            pass: value <= limit,
        }
    }

    fn ge(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!(">= {limit:e}"),
            pass: value >= limit,
        }
    }

    fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!("in [{lo}, {hi}]"),
            pass: (lo..=hi).contains(&value),
        }
    }

    fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            bound: "holds".into(),
            pass: ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub config: ResolvedConfig,
    pub checks: Vec<Check>,
    pub report: Value,
    pub table: Table,
}

impl Outcome {
    pub fn command(&self) -> Command {
        self.config.command
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        let envelope = json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command().name(),
            "pass": self.pass(),
            "checks": self.checks,
            "config": self.config,
            "report": self.report,
        });
        let mut s = serde_json::to_string_pretty(&envelope).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        write_csv(&mut buf, self.command().name(), &self.config, &self.table).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8")
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }
}

/// Exit status for a run that could not start or finish: solver failures
/// count as violated criteria, everything else as invalid configuration.
pub fn exit_code_for_error(e: &LabError) -> i32 {
    match e {
        LabError::SolverNotConverged { .. } => 1,
        _ => 2,
    }
}

pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<Outcome> {
    let rc = cfg.resolve(command)?;
    match command {
        Command::VerifyIdentity => verify_identity(rc),
        Command::Divcurl => divcurl(rc),
        Command::Counterexample => counterexample(rc),
        Command::Trace => trace(rc),
        Command::Negnorm => negnorm(rc),
        Command::PoissonMms => poisson_mms(rc),
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("report serialises")
}

/// The two families a command works with, realised on `rc.dim`.
pub fn families(rc: &ResolvedConfig) -> Result<(OscillatoryFamily, OscillatoryFamily)> {
    let (a, b) = match (rc.command, rc.pair) {
        (Command::Counterexample, _) | (Command::Trace, TracePair::Counterexample) => {
            gen_counterexample(rc.k_schedule.clone())?
        }
        _ => (
            gen_divfree(rc.profile_a, rc.k_schedule.clone())?,
            gen_curlfree(rc.profile_b, rc.k_schedule.clone())?,
        ),
    };
    Ok((a.with_dim(rc.dim)?, b.with_dim(rc.dim)?))
}

#[derive(Debug, Clone, Serialize)]
struct Rung {
    n: usize,
    h: f64,
    identity: crate::identity::IdentityReport,
    identity_direct: f64,
    identity_by_parts: f64,
    prelim_direct: crate::identity::PrelimReport,
    prelim_by_parts: f64,
    divfree: crate::identity::DivFreeReport,
    /// `|rhs_sum(direct) − rhs_sum(by parts)|`
    mode_gap: f64,
}

fn identity_gate(tol: f64, n: usize) -> f64 {
    let r = IDENTITY_REFERENCE_INTERVALS / (n - 1) as f64;
    tol * (IDENTITY_SLACK * r * r).min(1.0)
}

/// Error ratio between two rungs, normalised to a grid doubling.
fn doubling_ratio(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> Option<f64> {
    if e_coarse <= EXACT && e_fine <= EXACT {
        return None;
    }
    let expected = (h_coarse / h_fine).powi(2);
    Some(e_coarse / e_fine / expected * 4.0)
}

fn verify_identity(rc: ResolvedConfig) -> Result<Outcome> {
    let mut rungs = Vec::new();
    for &n in &rc.ladder {
        let grid = Grid::new(rc.dim, n)?;
        let (u, v) = match rc.fields {
            FieldPair::Trig => trig_test_pair(grid),
            FieldPair::Zero => (VectorField::zeros(grid), VectorField::zeros(grid)),
        };
        let kernel = IdentityKernel::new(&u, &v, &rc.bump, PairingMode::Direct)?;
        let direct = kernel.identity_report(PairingMode::Direct);
        let by_parts = kernel.identity_report(PairingMode::ByParts);
        rungs.push(Rung {
            n,
            h: grid.h(),
            identity_direct: direct.relative_residual,
            identity_by_parts: by_parts.relative_residual,
            mode_gap: (direct.rhs_sum - by_parts.rhs_sum).abs(),
            identity: if rc.mode == PairingMode::Direct { direct } else { by_parts },
            prelim_direct: kernel.prelim_report(PairingMode::Direct),
            prelim_by_parts: kernel.prelim_report(PairingMode::ByParts).relative_residual,
            divfree: kernel.divfree_report(),
        });
    }

    let mode = match rc.mode {
        PairingMode::Direct => "direct",
        PairingMode::ByParts => "by-parts",
    };
    type Pick = fn(&Rung) -> f64;
    let gated: [(&str, Pick); 3] = [
        ("identity", |r| r.identity.relative_residual),
        ("prelim[direct]", |r| r.prelim_direct.relative_residual),
        ("divfree", |r| r.divfree.relative_residual),
    ];
    let mut checks = Vec::new();
    for r in rungs.iter().filter(|r| r.n > IDENTITY_REFERENCE_INTERVALS as usize) {
        for (name, pick) in gated {
            let name = if name == "identity" { format!("identity[{mode}]") } else { name.to_string() };
            checks.push(Check::le(format!("{name} n={}", r.n), pick(r), identity_gate(rc.tol, r.n)));
        }
    }
    let mut rates = serde_json::Map::new();
    let ratio_items: [(&str, Pick); 4] = [
        ("identity", |r| r.identity.relative_residual),
        ("prelim[direct]", |r| r.prelim_direct.relative_residual),
        ("divfree", |r| r.divfree.relative_residual),
        ("mode-gap", |r| r.mode_gap),
    ];
    let hs: Vec<f64> = rungs.iter().map(|r| r.h).collect();
    for (name, pick) in ratio_items {
        let vals: Vec<f64> = rungs.iter().map(pick).collect();
        rates.insert(name.to_string(), to_value(&fit_rate(&hs, &vals, EXACT)));
        for w in rungs.windows(2) {
            let label = format!("{name} ratio n={}->{}", w[0].n, w[1].n);
            checks.push(match doubling_ratio(pick(&w[0]), pick(&w[1]), w[0].h, w[1].h) {
                Some(q) => Check::within(label, q, RATIO_WINDOW.0, RATIO_WINDOW.1),
                None => Check::holds(format!("{label} (exact)"), true),
            });
        }
    }

    let mut table = Table::new(
        ["n", "h", "lhs", "rhs_sum"]
            .into_iter()
            .map(String::from)
            .chain(IdentityTerms::NAMES.iter().map(|s| s.to_string()))
            .chain(
                [
                    "rel_identity_direct",
                    "rel_identity_by_parts",
                    "rel_prelim_direct",
                    "rel_prelim_by_parts",
                    "rel_divfree",
                    "divfree_aux",
                    "mode_gap",
                ]
                .map(String::from),
            ),
    );
    for r in &rungs {
        let mut row = vec![r.n.to_string(), num(r.h), num(r.identity.lhs), num(r.identity.rhs_sum)];
        row.extend(r.identity.terms.to_array().map(num));
        row.extend(
            [
                r.identity_direct,
                r.identity_by_parts,
                r.prelim_direct.relative_residual,
                r.prelim_by_parts,
                r.divfree.relative_residual,
                r.divfree.aux,
                r.mode_gap,
            ]
            .map(num),
        );
        table.push(row);
    }
    Ok(Outcome {
        report: json!({ "rungs": to_value(&rungs), "rates": rates }),
        config: rc,
        checks,
        table,
    })
}

fn max_gap(reports: &[crate::report::ConvergenceReport], m: usize) -> f64 {
    reports.iter().map(|r| r.gaps[m]).fold(0.0, f64::max)
}

fn divcurl(rc: ResolvedConfig) -> Result<Outcome> {
    let grid = Grid::new(rc.dim, rc.n)?;
    let (a, b) = families(&rc)?;
    let product = product_test(&a, &b, &rc.bump, grid, rc.tol)?;
    let dict = default_dictionary(rc.dim);
    let ha = hypothesis_check(&a, grid, &dict, rc.p, &rc.solver)?;
    let hb = hypothesis_check(&b, grid, &dict, rc.p, &rc.solver)?;

    let checks = vec![
        Check::le(
            "product final gap",
            product.final_gap().unwrap_or(0.0),
            product.tolerance,
        ),
        Check::holds("product gaps non-increasing", product.monotone),
        Check::holds("A (i) bounded in L^p, weakly convergent", ha.measured.i),
        Check::holds("B (ii) bounded in L^q, weakly convergent", hb.measured.ii),
        Check::holds("A (iii) divergence compact", ha.measured.iii),
        Check::holds("B (iv) curl compact", hb.measured.iv),
    ];

    let mut columns: Vec<String> = ["k", "eps", "product", "gap", "a_lp", "b_lq", "a_div_hm1"]
        .map(String::from)
        .to_vec();
    columns.extend(hb.curl_neg_norm.iter().map(|c| format!("b_curl_hm1_{}", c.entry)));
    columns.extend(["a_weak_max_gap", "b_weak_max_gap"].map(String::from));
    let mut table = Table::new(columns);
    for (m, &k) in a.schedule.ks().iter().enumerate() {
        let mut row = vec![
            k.to_string(),
            num(product.eps[m]),
            num(product.values[m]),
            num(product.gaps[m]),
            num(ha.lp_norms[m]),
            num(hb.lq_norms[m]),
            num(ha.div_neg_norm[m]),
        ];
        row.extend(hb.curl_neg_norm.iter().map(|c| num(c.values[m])));
        row.push(num(max_gap(&ha.weak, m)));
        row.push(num(max_gap(&hb.weak, m)));
        table.push(row);
    }
    Ok(Outcome {
        report: json!({
            "families": [to_value(&a), to_value(&b)],
            "product": to_value(&product),
            "hypotheses": [to_value(&ha), to_value(&hb)],
        }),
        config: rc,
        checks,
        table,
    })
}

fn counterexample(rc: ResolvedConfig) -> Result<Outcome> {
    let grid = Grid::new(rc.dim, rc.n)?;
    let (a, b) = families(&rc)?;
    let int_phi = integrate(&rc.bump.sample(grid));
    let half = COUNTEREXAMPLE_PRODUCT_MEAN * int_phi;
    let square = product_test(&a, &a, &rc.bump, grid, PRODUCT_REL_TOL)?;
    let product = product_test(&a, &b, &rc.bump, grid, PRODUCT_REL_TOL)?;
    let dict = default_dictionary(rc.dim);
    let ha = hypothesis_check(&a, grid, &dict, rc.p, &rc.solver)?;
    let hb = hypothesis_check(&b, grid, &dict, rc.p, &rc.solver)?;

    let last = |v: &[f64]| *v.last().expect("non-empty schedule");
    let div = &ha.div_neg_norm;
    let checks = vec![
        Check::le("a1^2 final relative distance to half-integral", (last(&square.values) - half).abs() / half, rc.tol),
        Check::ge("a1^2 final distance to declared-limit product", last(&square.values).abs() / int_phi, SEPARATION),
        Check::le("a.b final relative distance to half-integral", (last(&product.values) - half).abs() / half, rc.tol),
        Check::holds("a.b does not converge to the declared-limit product (expected)", !product.pass),
        Check::ge("H^-1 of D(a) final/first", last(div) / div[0], DECAY_FACTOR),
        Check::holds("A (iii) measured as failed", !ha.measured.iii),
        Check::holds("B (iv) measured as failed", !hb.measured.iv),
        Check::holds("measured hypotheses confirm declarations", ha.matches_declaration && hb.matches_declaration),
    ];

    let mut table = Table::new(
        ["k", "eps", "a1_squared", "a_dot_b", "a_div_hm1", "b_div_hm1", "b_curl_hm1_C12", "a_weak_max_gap"]
            .map(String::from),
    );
    for (m, &k) in a.schedule.ks().iter().enumerate() {
        table.push(vec![
            k.to_string(),
            num(square.eps[m]),
            num(square.values[m]),
            num(product.values[m]),
            num(ha.div_neg_norm[m]),
            num(hb.div_neg_norm[m]),
            num(hb.curl_neg_norm[0].values[m]),
            num(max_gap(&ha.weak, m)),
        ]);
    }
    Ok(Outcome {
        report: json!({
            "families": [to_value(&a), to_value(&b)],
            "integral_phi": int_phi,
            "declared_product_limit": 0.0,
            "observed_product_limit": half,
            "a1_squared": to_value(&square),
            "product": to_value(&product),
            "hypotheses": [to_value(&ha), to_value(&hb)],
        }),
        config: rc,
        checks,
        table,
    })
}

fn trace(rc: ResolvedConfig) -> Result<Outcome> {
    let grid = Grid::new(rc.dim, rc.n)?;
    let (a, b) = families(&rc)?;
    let subbox = match &rc.subbox {
        Some(s) => s.clone(),
        None => SubBox::default_for(&rc.bump)?,
    };
    let tr = proof_trace(&a, &b, &rc.bump, &subbox, grid, &rc.solver, rc.tol)?;

    let mut checks: Vec<Check> = tr
        .rows
        .iter()
        .map(|r| Check::le(format!("balance k={}", r.k), r.relative_residual, rc.tol))
        .collect();
    checks.push(Check::le("second-difference norm ratio u", tr.w22_ratio_u, BOUND_FACTOR));
    checks.push(Check::le("second-difference norm ratio v", tr.w22_ratio_v, BOUND_FACTOR));

    let mut columns: Vec<String> = ["k", "eps", "lhs"].map(String::from).to_vec();
    columns.extend(IdentityTerms::NAMES.iter().map(|s| s.to_string()));
    columns.extend(["rhs_sum", "relative_residual", "w22_u", "w22_v", "gap_lhs"].map(String::from));
    columns.extend(IdentityTerms::NAMES.iter().map(|s| format!("gap_{s}")));
    let mut table = Table::new(columns);
    for (m, r) in tr.rows.iter().enumerate() {
        let mut row = vec![r.k.to_string(), num(r.eps), num(r.lhs)];
        row.extend(r.terms.to_array().map(num));
        row.extend([r.rhs_sum, r.relative_residual, r.w22_u, r.w22_v, tr.lhs_convergence.gaps_to_limit[m]].map(num));
        row.extend(tr.term_convergence.iter().map(|t| num(t.gaps_to_limit[m])));
        table.push(row);
    }
    Ok(Outcome {
        report: json!({
            "families": [to_value(&a), to_value(&b)],
            "trace": to_value(&tr),
        }),
        config: rc,
        checks,
        table,
    })
}

fn eigenfunction(modes: &[u32]) -> impl Fn(&Point) -> f64 + '_ {
    move |p| {
        modes
            .iter()
            .enumerate()
            .map(|(a, &m)| (m as f64 * PI * p[a]).sin())
            .product()
    }
}

fn negnorm(rc: ResolvedConfig) -> Result<Outcome> {
    let grid = Grid::new(rc.dim, rc.n)?;
    let mut checks = Vec::new();
    let mut table = Table::new(["item", "k", "value", "target", "relative_error"].map(String::from));
    let mut eigen = Vec::new();
    for modes in &rc.modes {
        let f = ScalarField::sample(grid, eigenfunction(modes));
        let value = neg_norm_h_minus_1(&f, &rc.solver)?.value;
        let sum_sq: f64 = modes.iter().map(|&m| (m * m) as f64).sum();
        let target = 0.5f64.powf(rc.dim as f64 / 2.0) / (PI * sum_sq.sqrt());
        let rel = (value - target).abs() / target;
        let label = format!("eigen{modes:?}");
        checks.push(Check::le(format!("{label} relative error"), rel, rc.tol));
        table.push(vec![label.clone(), String::new(), num(value), num(target), num(rel)]);
        eigen.push(json!({ "modes": modes, "value": value, "target": target, "relative_error": rel }));
    }
    let zero = neg_norm_h_minus_1(&ScalarField::zeros(grid), &rc.solver)?.value;
    checks.push(Check::le("zero right-hand side", zero, 0.0));
    table.push(vec!["zero".into(), String::new(), num(zero), num(0.0), String::new()]);

    let sgrid = Grid::new(rc.dim, rc.schedule_n())?;
    let (a, _) = gen_counterexample(rc.k_schedule.clone())?;
    let a = a.with_dim(rc.dim)?;
    let mut diag = Vec::new();
    for (m, &k) in a.schedule.ks().iter().enumerate() {
        let v = neg_norm_h_minus_1(&divergence(&a.realize(sgrid, m)?), &rc.solver)?.value;
        table.push(vec!["counterexample-divergence".into(), k.to_string(), num(v), String::new(), String::new()]);
        diag.push(v);
    }
    let ratio = diag.last().expect("non-empty schedule") / diag[0];
    checks.push(Check::ge("counterexample divergence final/first", ratio, DECAY_FACTOR));
    Ok(Outcome {
        report: json!({
            "eigenfunctions": eigen,
            "zero": zero,
            "counterexample_divergence": {
                "n": sgrid.n(),
                "ks": a.schedule.ks(),
                "eps": a.eps(),
                "values": diag,
                "final_over_first": ratio,
            },
        }),
        config: rc,
        checks,
        table,
    })
}

#[derive(Debug, Clone, Serialize)]
struct MmsRung {
    n: usize,
    h: f64,
    /// `L²` error of the multilinear reconstruction against the exact solution.
    l2_reconstructed: f64,
    /// Trapezoid `L²` norm of the nodal error.
    l2_nodal: f64,
    eigen_l2_nodal: f64,
    iterations: usize,
    residual: f64,
}

fn poisson_mms(rc: ResolvedConfig) -> Result<Outcome> {
    let dim = rc.dim;
    let exact = |p: &Point| (0..dim).map(|a| p[a] * (1.0 - p[a])).product::<f64>();
    let rhs = |p: &Point| {
        (0..dim)
            .map(|a| {
                2.0 * (0..dim)
                    .filter(|&b| b != a)
                    .map(|b| p[b] * (1.0 - p[b]))
                    .product::<f64>()
            })
            .sum::<f64>()
    };
    let ones = vec![1u32; dim];
    let eigen = eigenfunction(&ones);
    let lambda = dim as f64 * PI * PI;

    let mut rungs = Vec::new();
    for &n in &rc.ladder {
        let grid = Grid::new(dim, n)?;
        let sol = solve_dirichlet(&ScalarField::sample(grid, rhs), &rc.solver)?;
        let err = &sol.solution - &ScalarField::sample(grid, exact);
        let esol = solve_dirichlet(&ScalarField::sample(grid, |p| lambda * eigen(p)), &rc.solver)?;
        let eerr = &esol.solution - &ScalarField::sample(grid, &eigen);
        rungs.push(MmsRung {
            n,
            h: grid.h(),
            l2_reconstructed: l2_error_reconstructed(&sol.solution, exact),
            l2_nodal: lp_norm(&err, 2.0)?,
            eigen_l2_nodal: lp_norm(&eerr, 2.0)?,
            iterations: sol.stats.iterations.max(esol.stats.iterations),
            residual: sol.stats.residual.max(esol.stats.residual),
        });
    }
    let hs: Vec<f64> = rungs.iter().map(|r| r.h).collect();
    let rate = |v: Vec<f64>| fit_rate(&hs, &v, 0.0);
    let rate_mms = rate(rungs.iter().map(|r| r.l2_reconstructed).collect());
    let rate_eigen = rate(rungs.iter().map(|r| r.eigen_l2_nodal).collect());
    let (lo, hi) = (2.0 - rc.tol, 2.0 + rc.tol);
    let mut checks = Vec::new();
    for (name, r) in [("manufactured solution L2 order", rate_mms), ("eigenfunction nodal L2 order", rate_eigen)] {
        checks.push(match r {
            Some(r) => Check::within(name, r, lo, hi),
            None => Check::holds(format!("{name} (needs two grids)"), false),
        });
    }

    let mut table = Table::new(
        ["n", "h", "l2_reconstructed", "l2_nodal", "eigen_l2_nodal", "iterations", "residual"].map(String::from),
    );
    for r in &rungs {
        table.push(vec![
            r.n.to_string(),
            num(r.h),
            num(r.l2_reconstructed),
            num(r.l2_nodal),
            num(r.eigen_l2_nodal),
            r.iterations.to_string(),
            num(r.residual),
        ]);
    }
    Ok(Outcome {
        report: json!({
            "rungs": to_value(&rungs),
            "rate_reconstructed": rate_mms,
            "rate_eigen_nodal": rate_eigen,
        }),
        config: rc,
        checks,
        table,
    })
}
