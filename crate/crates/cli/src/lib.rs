//! Command-line harness: resolves the experiment configuration, owns the
//! thread pool, dispatches to the core operations and writes a manifest with
//! checksums of every output.
//!
//! Exit status: 0 on success, 1 on usage or input errors, 2 when an invariant
//! check on the results fails.

pub mod config;
pub mod experiments;
pub mod fixtures;
pub mod output;
pub mod selftest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use gammaflow_core::minimizer::UpdateScheme;

use config::{load_config, ExperimentConfig, Kind, MinimizeParams};
use experiments::Ctx;
use output::{Outputs, RunManifest, MANIFEST};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;

pub const THREADS_ENV: &str = "GAMMAFLOW_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invariant failed: {0}")]
    Invariant(String),
    #[error(transparent)]
    Core(#[from] gammaflow_core::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(gammaflow_core::Error::Internal(_)) => EXIT_INVARIANT,
            CliError::Core(_) => EXIT_USAGE,
            CliError::Invariant(_) | CliError::Internal(_) => EXIT_INVARIANT,
        }
    }

    fn status(&self) -> &'static str {
        if self.exit_code() == EXIT_INVARIANT {
            "invariant_failed"
        } else {
            "error"
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "gammaflow", version, about = "Coercivity and Gamma-convergence experiments for p-energies of S^1-valued maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to GAMMAFLOW_THREADS, then to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Clone, Debug, Default)]
pub struct MinimizeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Winding degree of the boundary datum.
    #[arg(long, allow_hyphen_values = true)]
    pub degree: Option<i32>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Nodes per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Use the |grad u|^2 (1 + |grad u|^2)^(p/2-1) integrand.
    #[arg(long)]
    pub variant: bool,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    /// Over-relaxation factor in (1, 2); golden-section updates otherwise.
    #[arg(long)]
    pub overrelax: Option<f64>,
    /// Field file to start from.
    #[arg(long)]
    pub warm_from: Option<PathBuf>,
    /// Comma-separated exponents for a warm-started sweep.
    #[arg(long, value_delimiter = ',')]
    pub schedule: Option<Vec<f64>>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// p-energies of a lattice field.
    Energy(Common),
    /// Plaquette (2-D) or face (3-D) vorticity of a lattice field.
    Jacobian(Common),
    /// Greedy X + dS decomposition of a 0-current.
    Decompose(Common),
    /// Flat norm of a 0-current, or flat distance between two.
    Flatnorm(Common),
    /// Deformation of a closed polygon onto the dual 1-skeleton.
    Deform(Common),
    /// Recovery energy at one exponent.
    Recover(Common),
    /// Boundary-value minimization on the unit disk or square.
    Minimize(MinimizeArgs),
    /// Recovery energies along an exponent schedule.
    Sweep(Common),
    /// Known-answer checks of every module.
    Selftest(Common),
    /// Writes the bundled fixtures and checks the golden CSVs.
    Fixtures(Common),
}

/// Runs the harness on `args` (including the program name) and returns the
/// exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn thread_budget(flag: Option<usize>, config: Option<usize>) -> Result<usize, CliError> {
    let n = match flag.or(config) {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| CliError::Usage(format!("{THREADS_ENV}={v} is not a thread count")))?,
            Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if n == 0 {
        return Err(CliError::Usage("thread budget must be positive".into()));
    }
    Ok(n)
}

fn apply_minimize_flags(cfg: &mut ExperimentConfig, a: &MinimizeArgs) -> Result<(), CliError> {
    let mut m = match (cfg.minimize.take(), a.degree) {
        (Some(m), _) => m,
        (None, Some(d)) => MinimizeParams::new(d),
        (None, None) => return Err(CliError::Usage("minimize needs --degree or a `minimize` config block".into())),
    };
    if let Some(d) = a.degree {
        m.degree = d;
    }
    if let Some(p) = a.p {
        m.p = p;
    }
    if let Some(g) = a.grid {
        m.grid = g;
    }
    if a.variant {
        m.variant = true;
    }
    if let Some(t) = a.tol {
        m.tol = t;
    }
    if let Some(s) = a.max_sweeps {
        m.max_sweeps = s;
    }
    if let Some(w) = a.overrelax {
        m.scheme = UpdateScheme::Overrelaxed(w);
    }
    if let Some(w) = &a.warm_from {
        // flags are relative to the working directory
        m.warm_from = Some(std::path::absolute(w).map_err(|e| CliError::Usage(format!("{}: {e}", w.display())))?);
    }
    if let Some(s) = &a.schedule {
        m.schedule = Some(s.clone());
    }
    cfg.minimize = Some(m);
    Ok(())
}

fn block<'a, T>(b: &'a Option<T>, kind: Kind) -> Result<&'a T, CliError> {
    b.as_ref().ok_or_else(|| CliError::Usage(format!("config has no `{}` block", kind.name())))
}

fn dispatch(kind: Kind, cfg: &ExperimentConfig, ctx: &mut Ctx) -> Result<(), CliError> {
    match kind {
        Kind::Energy => experiments::energy(block(&cfg.energy, kind)?, ctx),
        Kind::Jacobian => experiments::jacobian(block(&cfg.jacobian, kind)?, ctx),
        Kind::Decompose => experiments::decompose_cmd(block(&cfg.decompose, kind)?, ctx),
        Kind::Flatnorm => experiments::flatnorm(block(&cfg.flatnorm, kind)?, ctx),
        Kind::Deform => experiments::deform(block(&cfg.deform, kind)?, ctx),
        Kind::Recover => experiments::recover(block(&cfg.recover, kind)?, ctx),
        Kind::Minimize => experiments::minimize_cmd(block(&cfg.minimize, kind)?, ctx),
        Kind::Sweep => experiments::sweep(block(&cfg.sweep, kind)?, ctx),
        Kind::Selftest => selftest::run(ctx.out),
    }
}

/// Resolves the configuration and runs one experiment.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let (kind, common, min_args) = match &cli.command {
        Command::Energy(c) => (Some(Kind::Energy), c, None),
        Command::Jacobian(c) => (Some(Kind::Jacobian), c, None),
        Command::Decompose(c) => (Some(Kind::Decompose), c, None),
        Command::Flatnorm(c) => (Some(Kind::Flatnorm), c, None),
        Command::Deform(c) => (Some(Kind::Deform), c, None),
        Command::Recover(c) => (Some(Kind::Recover), c, None),
        Command::Minimize(a) => (Some(Kind::Minimize), &a.common, Some(a)),
        Command::Sweep(c) => (Some(Kind::Sweep), c, None),
        Command::Selftest(c) => (Some(Kind::Selftest), c, None),
        Command::Fixtures(c) => (None, c, None),
    };
    let (mut cfg, base) = match &common.config {
        Some(p) => (load_config(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
        None => (ExperimentConfig::default(), PathBuf::new()),
    };
    if let (Some(want), Some(have)) = (kind, cfg.experiment) {
        if want != have {
            return Err(CliError::Usage(format!("config is for `{}`, not `{}`", have.name(), want.name())));
        }
    }
    cfg.experiment = kind;
    let seed = common.seed.or(cfg.seed).unwrap_or(0);
    cfg.seed = Some(seed);
    let out = match (&common.out, &cfg.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => config::resolve(&base, o),
        (None, None) => return Err(CliError::Usage("no output directory: pass --out or set `out`".into())),
    };
    cfg.out = Some(out.clone());
    let threads = thread_budget(common.threads, cfg.threads)?;
    cfg.threads = Some(threads);
    if let Some(a) = min_args {
        apply_minimize_flags(&mut cfg, a)?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let mut outputs = Outputs::create(&out)?;
    let start = Instant::now();
    let result = pool.install(|| match kind {
        Some(k) => dispatch(k, &cfg, &mut Ctx { base: &base, seed, out: &mut outputs }),
        None => fixtures::run(&mut outputs),
    });
    let manifest = RunManifest {
        artifact: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: kind.map_or("fixtures", Kind::name).into(),
        config: serde_json::to_value(&cfg).map_err(|e| CliError::Internal(e.to_string()))?,
        status: result.as_ref().map_or_else(|e| e.status(), |_| "ok").into(),
        failure: result.as_ref().err().map(|e| e.to_string()),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        outputs: outputs.files().to_vec(),
    };
    std::fs::write(outputs.dir().join(MANIFEST), output::to_json(&manifest)?)
        .map_err(|e| CliError::Usage(format!("{MANIFEST}: {e}")))?;
    result
}
