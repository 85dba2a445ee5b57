//! Command-line runner for the div-curl laboratory.
//!
//! Exit codes: 0 when every check of the run holds (for the
//! counterexample this includes the expected failures), 1 when a check is
//! violated, 2 for invalid configuration.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use divcurl_lab::config::{Command, ExperimentConfig, FieldPair, Format, TracePair};
use divcurl_lab::experiment::{exit_code_for_error, families, run, Outcome};
use divcurl_lab::identity::PairingMode;
use divcurl_lab::io::{write_field_binary, write_field_csv};
use divcurl_lab::lab::Profile;
use divcurl_lab::poisson::Backend;
use divcurl_lab::grid::Grid;

const DEFAULT_OUT_DIR: &str = "divcurl-out";

#[derive(Parser)]
#[command(name = "divcurl", version, about = "Div-curl lemma and integral-identity experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Term-by-term check of the integral formula over a refinement ladder
    VerifyIdentity(Opts),
    /// Product of a div-free and a curl-free oscillating family
    Divcurl(Opts),
    /// Product of a pair violating the compactness hypotheses
    Counterexample(Opts),
    /// Per-ε trace of every term after lifting both families
    Trace(Opts),
    /// Negative-norm diagnostics
    Negnorm(Opts),
    /// Manufactured-solution convergence of the Poisson solver
    PoissonMms(Opts),
}

#[derive(Clone, Copy, ValueEnum)]
enum DumpFormat {
    Csv,
    Bin,
}

#[derive(Args, Clone)]
struct Opts {
    /// TOML file with configuration keys; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Grid sizes for refinement studies, e.g. 65,129,257
    #[arg(long, value_delimiter = ',')]
    ladder: Option<Vec<usize>>,
    /// Oscillation indices k, ε = 1/(2πk), e.g. 2,4,8,16
    #[arg(long, value_delimiter = ',')]
    k_schedule: Option<Vec<u32>>,
    /// sin | cos | affine+sin | <c>+cos | constant | <c>
    #[arg(long)]
    profile_a: Option<Profile>,
    #[arg(long)]
    profile_b: Option<Profile>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    bump_center: Option<Vec<f64>>,
    #[arg(long)]
    bump_radius: Option<f64>,
    /// Gate of the command's headline criterion
    #[arg(long)]
    tol: Option<f64>,
    /// sine-transform | conjugate-gradient
    #[arg(long, value_parser = kebab::<Backend>)]
    backend: Option<Backend>,
    #[arg(long)]
    solver_tol: Option<f64>,
    /// direct | by-parts
    #[arg(long, value_parser = kebab::<PairingMode>)]
    mode: Option<PairingMode>,
    /// trig | zero (verify-identity)
    #[arg(long, value_parser = kebab::<FieldPair>)]
    fields: Option<FieldPair>,
    /// divcurl | counterexample (trace)
    #[arg(long, value_parser = kebab::<TracePair>)]
    pair: Option<TracePair>,
    /// json | csv
    #[arg(long)]
    format: Option<Format>,
    /// Report file; defaults to <out-dir>/<command>.<format>
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "DIVCURL_OUT_DIR", default_value = DEFAULT_OUT_DIR)]
    out_dir: PathBuf,
    /// Also write the finest-ε realisations of both families
    #[arg(long, value_enum)]
    dump_fields: Option<DumpFormat>,
}

fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

impl Opts {
    fn config(&self) -> divcurl_lab::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_toml_file(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        macro_rules! set_opt {
            ($($field:ident),*) => {$(
                if self.$field.is_some() {
                    cfg.$field = self.$field.clone();
                }
            )*};
        }
        set!(dim, k_schedule, profile_a, profile_b, p, bump_radius, backend, solver_tol, mode, fields, pair, format);
        set_opt!(n, ladder, q, bump_center, tol, out);
        Ok(cfg)
    }
}

fn report_path(cfg: &ExperimentConfig, opts: &Opts, command: Command) -> PathBuf {
    cfg.out
        .clone()
        .unwrap_or_else(|| opts.out_dir.join(format!("{}.{}", command.name(), cfg.format.extension())))
}

fn write_report(path: &Path, outcome: &Outcome, format: Format) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, outcome.render(format))
}

fn dump_fields(cfg: &ExperimentConfig, command: Command, dir: &Path, format: DumpFormat) -> Result<(), String> {
    if !matches!(command, Command::Divcurl | Command::Counterexample | Command::Trace) {
        return Err(format!("{command} has no oscillating families to dump"));
    }
    let rc = cfg.resolve(command).map_err(|e| e.to_string())?;
    let (a, b) = families(&rc).map_err(|e| e.to_string())?;
    let grid = Grid::new(rc.dim, rc.n).map_err(|e| e.to_string())?;
    let last = a.schedule.len() - 1;
    let k = a.schedule.max_k();
    fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    for (name, fam) in [("a", &a), ("b", &b)] {
        let field = fam.realize(grid, last).map_err(|e| e.to_string())?;
        let ext = match format {
            DumpFormat::Csv => "csv",
            DumpFormat::Bin => "bin",
        };
        let path = dir.join(format!("{command}_{name}_k{k}.{ext}"));
        let w = BufWriter::new(File::create(&path).map_err(|e| e.to_string())?);
        match format {
            DumpFormat::Csv => write_field_csv(w, &field),
            DumpFormat::Bin => write_field_binary(w, &field),
        }
        .map_err(|e| e.to_string())?;
        println!("field dump: {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, opts) = match cli.command {
        Sub::VerifyIdentity(o) => (Command::VerifyIdentity, o),
        Sub::Divcurl(o) => (Command::Divcurl, o),
        Sub::Counterexample(o) => (Command::Counterexample, o),
        Sub::Trace(o) => (Command::Trace, o),
        Sub::Negnorm(o) => (Command::Negnorm, o),
        Sub::PoissonMms(o) => (Command::PoissonMms, o),
    };
    let cfg = match opts.config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = match run(command, &cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code_for_error(&e) as u8);
        }
    };
    let path = report_path(&cfg, &opts, command);
    if let Err(e) = write_report(&path, &outcome, cfg.format) {
        eprintln!("error: cannot write {}: {e}", path.display());
        return ExitCode::from(2);
    }
    for c in &outcome.checks {
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {}: {:e} ({})", c.name, c.value, c.bound);
    }
    println!("{command}: {} ({})", if outcome.pass() { "PASS" } else { "FAIL" }, path.display());
    if let Some(format) = opts.dump_fields {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if let Err(e) = dump_fields(&cfg, command, &dir, format) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    ExitCode::from(outcome.exit_code() as u8)
}
