//! Experiment configuration: a TOML file, overridden by command-line
//! flags, resolved per command into the values actually used. The resolved
//! form is echoed into every report.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::MIN_POINTS;
use crate::identity::PairingMode;
use crate::lab::{check_resolution, required_n, EpsSchedule, Profile, SubBox};
use crate::poisson::{Backend, SolverConfig, DEFAULT_TOL};
use crate::testfn::TestFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    VerifyIdentity,
    Divcurl,
    Counterexample,
    Trace,
    Negnorm,
    PoissonMms,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::VerifyIdentity,
        Command::Divcurl,
        Command::Counterexample,
        Command::Trace,
        Command::Negnorm,
        Command::PoissonMms,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::VerifyIdentity => "verify-identity",
            Command::Divcurl => "divcurl",
            Command::Counterexample => "counterexample",
            Command::Trace => "trace",
            Command::Negnorm => "negnorm",
            Command::PoissonMms => "poisson-mms",
        }
    }

    /// Default gate of the command's headline criterion.
    pub fn default_tol(&self) -> f64 {
        match self {
            Command::VerifyIdentity => 1e-3,
            Command::Divcurl => 1e-2,
            Command::Counterexample => 2e-2,
            Command::Trace => 1e-3,
            Command::Negnorm => 1e-2,
            Command::PoissonMms => 0.2,
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

impl FromStr for Format {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(LabError::Config(format!("unknown format {s:?}"))),
        }
    }
}

/// Field pair used by `verify-identity`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldPair {
    #[default]
    Trig,
    Zero,
}

/// Family pair used by `trace`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TracePair {
    #[default]
    Divcurl,
    Counterexample,
}

/// Everything a run can be configured with. Unset optional entries take
/// command-specific defaults in [`ExperimentConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub n: Option<usize>,
    /// Grid sizes of refinement studies.
    pub ladder: Option<Vec<usize>>,
    pub k_schedule: Vec<u32>,
    pub profile_a: Profile,
    pub profile_b: Profile,
    pub p: f64,
    /// Conjugate exponent; derived from `p` when unset.
    pub q: Option<f64>,
    pub bump_center: Option<Vec<f64>>,
    pub bump_radius: f64,
    pub subbox: Option<SubBox>,
    pub tol: Option<f64>,
    pub backend: Backend,
    pub solver_tol: f64,
    pub mode: PairingMode,
    pub fields: FieldPair,
    pub pair: TracePair,
    /// Eigenfunction indices for `negnorm`, one entry per axis.
    pub modes: Option<Vec<Vec<u32>>>,
    pub format: Format,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            n: None,
            ladder: None,
            k_schedule: vec![2, 4, 8, 16],
            profile_a: Profile::shifted(1.0, crate::lab::Wave::Sin),
            profile_b: Profile::shifted(2.0, crate::lab::Wave::Cos),
            p: 2.0,
            q: None,
            bump_center: None,
            bump_radius: 0.3,
            subbox: None,
            tol: None,
            backend: Backend::SineTransform,
            solver_tol: DEFAULT_TOL,
            mode: PairingMode::ByParts,
            fields: FieldPair::Trig,
            pair: TracePair::Divcurl,
            modes: None,
            format: Format::Json,
            out: None,
        }
    }
}

/// Configuration with every default filled in for one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub command: Command,
    pub dim: usize,
    /// Single grid size (unused by ladder commands).
    pub n: usize,
    pub ladder: Vec<usize>,
    pub k_schedule: EpsSchedule,
    pub profile_a: Profile,
    pub profile_b: Profile,
    pub p: f64,
    pub q: f64,
    pub bump: TestFunction,
    pub subbox: Option<SubBox>,
    pub tol: f64,
    pub solver: SolverConfig,
    pub mode: PairingMode,
    pub fields: FieldPair,
    pub pair: TracePair,
    pub modes: Vec<Vec<u32>>,
    pub format: Format,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn resolve(&self, command: Command) -> Result<ResolvedConfig> {
        let dim = self.dim;
        if !(2..=3).contains(&dim) {
            return Err(LabError::UnsupportedDimension(dim));
        }
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(LabError::InvalidExponent(self.p));
        }
        let q = match self.q {
            Some(q) => {
                if (1.0 / self.p + 1.0 / q - 1.0).abs() > 1e-12 {
                    return Err(LabError::Config(format!(
                        "p = {} and q = {q} are not conjugate",
                        self.p
                    )));
                }
                q
            }
            None => self.p / (self.p - 1.0),
        };
        let tol = self.tol.unwrap_or(command.default_tol());
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(LabError::InvalidTolerance(tol));
        }
        let solver = SolverConfig {
            backend: self.backend,
            tol: self.solver_tol,
            max_iter: None,
        };
        solver.validate()?;
        let k_schedule = EpsSchedule::new(self.k_schedule.clone())?;

        let center = self.bump_center.clone().unwrap_or_else(|| vec![0.5; dim]);
        if center.len() != dim {
            return Err(LabError::ComponentMismatch {
                expected: dim,
                actual: center.len(),
            });
        }
        let bump = TestFunction::bump(&center, self.bump_radius)?;

        let default_n = match command {
            Command::Negnorm => 129,
            _ => 257,
        };
        let n = self.n.unwrap_or(default_n);
        if n < MIN_POINTS {
            return Err(LabError::TooFewPoints(n));
        }
        let ladder = match (&self.ladder, command) {
            (Some(l), _) => l.clone(),
            (None, Command::PoissonMms) => vec![33, 65, 129],
            (None, Command::VerifyIdentity) => vec![65, 129, 257],
            (None, _) => Vec::new(),
        };
        if let Some(&bad) = ladder.iter().find(|&&m| m < MIN_POINTS) {
            return Err(LabError::TooFewPoints(bad));
        }
        if ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::Config(format!("ladder must increase, got {ladder:?}")));
        }
        if matches!(command, Command::VerifyIdentity | Command::PoissonMms) && ladder.is_empty() {
            return Err(LabError::Config("empty ladder".into()));
        }
        if matches!(command, Command::Divcurl | Command::Counterexample | Command::Trace) {
            let grid = crate::grid::Grid::new(dim, n)?;
            check_resolution(&grid, k_schedule.max_k())?;
        }
        if let Some(sb) = &self.subbox {
            let grid = crate::grid::Grid::new(dim, n)?;
            sb.validate_for(&bump, &grid)?;
        }

        let modes = match &self.modes {
            Some(m) => m.clone(),
            None if dim == 2 => vec![vec![1, 1], vec![2, 3]],
            None => vec![vec![1, 1, 1], vec![1, 2, 3]],
        };
        if modes.iter().any(|m| m.len() != dim || m.contains(&0)) {
            return Err(LabError::Config(format!(
                "every mode needs {dim} positive indices, got {modes:?}"
            )));
        }

        Ok(ResolvedConfig {
            command,
            dim,
            n,
            ladder,
            k_schedule,
            profile_a: self.profile_a,
            profile_b: self.profile_b,
            p: self.p,
            q,
            bump,
            subbox: self.subbox.clone(),
            tol,
            solver,
            mode: self.mode,
            fields: self.fields,
            pair: self.pair,
            modes,
            format: self.format,
        })
    }
}

impl ResolvedConfig {
    /// Grid on which the schedule of the `negnorm` divergence diagnostic
    /// is resolved: `n` when fine enough, otherwise the smallest admissible
    /// size.
    pub fn schedule_n(&self) -> usize {
        self.n.max(required_n(self.k_schedule.max_k()))
    }
}
