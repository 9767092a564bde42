//! Command-line front end: certification, refutation, quadrature
//! construction, resolvent scans, perturbation and left-invertibility
//! checks, each emitting a self-verifying JSON report.

// `!(x > 0.0)` is deliberate: it rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod recheck;
pub mod report;
#[cfg(test)]
mod tests;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lyapcert::models::{load_matrix, Family, ModelSpec};
use lyapcert::space::NormModel;
use lyapcert::{Matrix, MEMBERSHIP_TOL};

pub use report::{RunReport, Verdict};

#[derive(Debug, Parser)]
#[command(name = "lyapcert", version, about = "Lyapunov-inequality stability certificates for matrix semigroups")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyKind {
    Heat,
    Upwind,
    Jordan,
    RandomStable,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Built-in generator family.
    #[arg(long, value_enum, conflicts_with = "file", required_unless_present = "file")]
    pub family: Option<FamilyKind>,
    /// Generator as a matrix JSON file.
    #[arg(long)]
    pub file: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Seed for the random-stable family and for sampled checks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Interval length (heat).
    #[arg(long, default_value_t = 1.0)]
    pub length: f64,
    /// Transport speed (upwind).
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// Cell size (upwind).
    #[arg(long, default_value_t = 1.0)]
    pub h: f64,
    /// Diagonal value, real part (jordan).
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub lambda_im: f64,
    /// Stability margin (random-stable).
    #[arg(long, default_value_t = 0.5)]
    pub margin: f64,
    /// Added to the diagonal of any generator.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub shift: f64,
    /// Norm weight W as a matrix JSON file (default: W = I).
    #[arg(long)]
    pub norm_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Membership tolerance; may only tighten the default 1e-8.
    #[arg(long, default_value_t = MEMBERSHIP_TOL)]
    pub tol: f64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Refute, or certify exponential stability with explicit decay constants.
    Certify {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Points of the envelope check grid on [0, horizon/epsilon].
        #[arg(long, default_value_t = 200)]
        grid_points: usize,
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        /// Seeded vectors for the integral identity check.
        #[arg(long, default_value_t = 3)]
        datko_samples: usize,
    },
    /// Search for an eigenvalue in the closed right half-plane.
    Refute {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Seeded random PSD candidates checked against the witness.
        #[arg(long, default_value_t = 100)]
        psd_trials: usize,
    },
    /// Build Q0 by quadrature of the semigroup integral.
    Q0 {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Strongly positive P as a matrix JSON file (default: P = W).
        #[arg(long)]
        riesz_file: Option<PathBuf>,
        #[arg(long)]
        tmax: Option<f64>,
        #[arg(long)]
        panels: Option<usize>,
    },
    /// Grid scans of the right half-plane and left strip resolvent bounds.
    Resolvent {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Strip depth, a number or `auto`.
        #[arg(long, default_value = "auto")]
        delta0: String,
        #[arg(long)]
        omega_max: Option<f64>,
        #[arg(long, default_value_t = 401)]
        n_axis: usize,
        #[arg(long, default_value_t = 64)]
        n_interior: usize,
        #[arg(long, default_value_t = 400)]
        n_strip: usize,
        /// Offsets `a − s(A)` for vertical-line resolvent sups.
        #[arg(long, value_delimiter = ',')]
        abscissa_offsets: Vec<f64>,
    },
    /// Robustness of the canonical member under A -> A + B.
    Perturb {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, conflicts_with = "random_trials", required_unless_present = "random_trials")]
        b_file: Option<PathBuf>,
        #[arg(long)]
        random_trials: Option<usize>,
        /// One or more alpha > 1 (comma separated).
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
    },
    /// Lower envelope fit and the strong positivity bound theta >= c^2/(2 alpha).
    Leftinv {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Log grid `lo:hi:n` (default: 64 points on [0.01, 20/|s(A)|]).
        #[arg(long)]
        t_grid: Option<String>,
        /// Dimensions for a refinement study of the same family.
        #[arg(long, value_delimiter = ',')]
        study_n: Vec<usize>,
    },
    /// Write a generator as matrix JSON.
    Gen {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Output file (default: <out-dir>/matrix.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-validate a report from its embedded data.
    Recheck {
        report: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

impl ModelArgs {
    pub fn spec(&self) -> ModelSpec {
        let family = match (self.family, &self.file) {
            (_, Some(path)) => Family::File { path: path.clone() },
            (Some(FamilyKind::Heat), None) => Family::Heat { length: self.length },
            (Some(FamilyKind::Upwind), None) => Family::Upwind { speed: self.speed, h: self.h },
            (Some(FamilyKind::Jordan), None) => Family::Jordan { lambda_re: self.lambda, lambda_im: self.lambda_im },
            (Some(FamilyKind::RandomStable), None) => Family::RandomStable { margin: self.margin, seed: self.seed },
            (None, None) => unreachable!("clap requires --family or --file"),
        };
        ModelSpec { family, n: self.n, shift: self.shift }
    }

    /// The model description (with `n` taken from the matrix for files), `A` and the norm model.
    pub fn load(&self) -> Result<(ModelSpec, Matrix, NormModel)> {
        let mut spec = self.spec();
        let a = spec.build().context("building generator")?;
        lyapcert::numkernel::ensure_square(&a).context("generator")?;
        spec.n = a.nrows();
        let nm = match &self.norm_file {
            Some(path) => NormModel::new(load_matrix(path).context("norm file")?).context("norm weight")?,
            None => NormModel::identity(spec.n),
        };
        if nm.dim() != spec.n {
            bail!("norm weight has dimension {} but the generator has {}", nm.dim(), spec.n);
        }
        Ok((spec, a, nm))
    }
}

impl RunArgs {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol <= MEMBERSHIP_TOL) {
            bail!("--tol must lie in (0, {MEMBERSHIP_TOL:e}], got {}", self.tol);
        }
        apply_threads(self.threads)
    }
}

pub fn apply_threads(threads: Option<usize>) -> Result<()> {
    if let Some(t) = threads {
        if t == 0 {
            bail!("--threads must be positive");
        }
        lyapcert::par::set_threads(t);
    }
    Ok(())
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Recheck { report, threads } => {
            apply_threads(threads)?;
            recheck::run(&report)
        }
        other => {
            let report = commands::execute(other)?;
            Ok(report.verdict.exit_code())
        }
    }
}

/// Parses `args` (program name first), runs, and maps the outcome to an exit
/// code. Usage and runtime errors give 1, leaving 2 for refutations.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
