//! The `bffg` command line: `smooth` and `verify`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{BffgError, Result};
use crate::instances;
use crate::io::{read_model, ResultFile};
use crate::kernel::Kernel;
use crate::optics::{check_parallel_equivalence, check_sequential_equivalence, EquivalenceReport};
use crate::space::Space;
use crate::stream::RandomStream;
use crate::tree::{run_bffg_exact, run_bffg_sampling};

pub const EXIT_MALFORMED: i32 = 1;
pub const EXIT_UNSUPPORTED: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VERIFY_FAILED: i32 = 4;

/// Largest deviation `verify` accepts.
pub const VERIFY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(
    name = "bffg",
    version,
    about = "Backward filtering forward guiding on directed tree models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Smooth a tree model given as JSON.
    Smooth(SmoothArgs),
    /// Check sequential and parallel optic equivalence on random instances.
    Verify(VerifyArgs),
}

#[derive(Debug, clap::Args)]
struct SmoothArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exact,
    Sampling,
}

#[derive(Debug, clap::Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Family::Both)]
    family: Family,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Discrete,
    Gaussian,
    Both,
    Identity,
}

/// Exit code for a library error.
pub fn exit_code(e: &BffgError) -> i32 {
    match e.root() {
        BffgError::Unsupported(_) | BffgError::NonProductMeasure | BffgError::TooLarge(_) => EXIT_UNSUPPORTED,
        BffgError::NotPositiveDefinite(_)
        | BffgError::ZeroDenominator(_)
        | BffgError::InconsistentRow(_)
        | BffgError::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_MALFORMED,
    }
}

/// Runs the command line on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_MALFORMED } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match cli.command {
        Command::Smooth(a) => smooth(&a, out, err),
        Command::Verify(a) => verify(&a, out, err),
    }
}

fn smooth(a: &SmoothArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let report = |e: BffgError, err: &mut dyn Write| {
        let _ = writeln!(err, "error: {e}");
        exit_code(&e)
    };
    let model = match read_model(&a.model) {
        Ok(m) => m,
        Err(e) => return report(e, err),
    };
    let start = Instant::now();
    let result = match a.mode {
        Mode::Exact => {
            run_bffg_exact(&model).and_then(|r| ResultFile::from_exact(&model, &r, start.elapsed().as_secs_f64()))
        }
        Mode::Sampling => {
            if a.samples == 0 {
                return report(BffgError::Format("--samples must be positive".into()), err);
            }
            run_bffg_sampling(&model, a.samples, a.seed)
                .map(|r| ResultFile::from_sampling(&r, start.elapsed().as_secs_f64()))
        }
    };
    let result = match result {
        Ok(r) => r,
        Err(e) => return report(e, err),
    };
    if let Err(e) = std::fs::write(&a.output, result.to_json_pretty() + "\n") {
        let _ = writeln!(err, "error: cannot write {}: {e}", a.output.display());
        return EXIT_MALFORMED;
    }
    let _ = writeln!(
        out,
        "mode: {}",
        if a.mode == Mode::Exact { "exact" } else { "sampling" }
    );
    if let Some(ess) = result.effective_sample_size {
        let _ = writeln!(out, "samples: {}", a.samples);
        let _ = writeln!(out, "seed: {}", a.seed);
        let _ = writeln!(out, "effective sample size: {ess:.6}");
    }
    let _ = writeln!(out, "evidence: {:e}", result.evidence);
    let _ = writeln!(out, "log evidence: {}", result.log_evidence);
    0
}

/// Reports of one randomized trial: sequential, then parallel.
pub fn verify_trial(family: Family, seed: u64) -> Result<(EquivalenceReport, EquivalenceReport)> {
    let s = &mut RandomStream::new(seed);
    match family {
        Family::Discrete => {
            let (n0, n1, n2) = (
                instances::size(2, 5, s),
                instances::size(2, 5, s),
                instances::size(2, 5, s),
            );
            let seq = check_sequential_equivalence(
                &instances::discrete_kernel(n0, n1, s),
                &instances::discrete_kernel(n0, n1, s),
                &instances::discrete_kernel(n1, n2, s),
                &instances::discrete_kernel(n1, n2, s),
                &instances::discrete_potential(n2, s),
                &instances::discrete_measure(n0, s),
            )?;
            let (a, b, c, d) = (
                instances::size(2, 5, s),
                instances::size(2, 5, s),
                instances::size(2, 5, s),
                instances::size(2, 5, s),
            );
            let par = check_parallel_equivalence(
                &instances::discrete_kernel(a, b, s),
                &instances::discrete_kernel(a, b, s),
                &instances::discrete_kernel(c, d, s),
                &instances::discrete_kernel(c, d, s),
                &instances::discrete_potential(b, s),
                &instances::discrete_potential(d, s),
                &instances::discrete_measure(a, s),
                &instances::discrete_measure(c, s),
            )?;
            Ok((seq, par))
        }
        Family::Gaussian => {
            let (d0, d1, d2) = (
                instances::size(1, 3, s),
                instances::size(1, 3, s),
                instances::size(1, 3, s),
            );
            let (k01, k12) = (
                instances::linear_gaussian_kernel(d0, d1, s),
                instances::linear_gaussian_kernel(d1, d2, s),
            );
            let seq = check_sequential_equivalence(
                &k01,
                &instances::inflated_kernel(&k01, s),
                &k12,
                &instances::inflated_kernel(&k12, s),
                &instances::gaussian_potential(d2, s),
                &instances::gaussian_measure(d0, s),
            )?;
            let (a, b, c, d) = (
                instances::size(1, 2, s),
                instances::size(1, 2, s),
                instances::size(1, 2, s),
                instances::size(1, 2, s),
            );
            let (k1, k2) = (
                instances::linear_gaussian_kernel(a, b, s),
                instances::linear_gaussian_kernel(c, d, s),
            );
            let par = check_parallel_equivalence(
                &k1,
                &instances::inflated_kernel(&k1, s),
                &k2,
                &instances::inflated_kernel(&k2, s),
                &instances::gaussian_potential(b, s),
                &instances::gaussian_potential(d, s),
                &instances::gaussian_measure(a, s),
                &instances::gaussian_measure(c, s),
            )?;
            Ok((seq, par))
        }
        Family::Identity => {
            let n = instances::size(2, 5, s);
            let id = Kernel::identity(Space::Finite(n));
            let seq = check_sequential_equivalence(
                &id,
                &id,
                &id,
                &id,
                &instances::discrete_potential(n, s),
                &instances::discrete_measure(n, s),
            )?;
            let par = check_parallel_equivalence(
                &id,
                &id,
                &id,
                &id,
                &instances::discrete_potential(n, s),
                &instances::discrete_potential(n, s),
                &instances::discrete_measure(n, s),
                &instances::discrete_measure(n, s),
            )?;
            Ok((seq, par))
        }
        Family::Both => unreachable!("expanded by the caller"),
    }
}

fn family_name(f: Family) -> &'static str {
    match f {
        Family::Discrete => "discrete",
        Family::Gaussian => "gaussian",
        Family::Both => "both",
        Family::Identity => "identity",
    }
}

fn verify(a: &VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let families: &[Family] = match a.family {
        Family::Both => &[Family::Discrete, Family::Gaussian],
        Family::Discrete => &[Family::Discrete],
        Family::Gaussian => &[Family::Gaussian],
        Family::Identity => &[Family::Identity],
    };
    let mut code = 0;
    for &f in families {
        let name = family_name(f);
        let (mut seq_dev, mut par_dev, mut msg_err) = (0.0f64, 0.0f64, 0.0f64);
        for t in 0..a.trials {
            let seed = a.seed.wrapping_add(t);
            let (seq, par) = match verify_trial(f, seed) {
                Ok(r) => r,
                Err(e) => {
                    let _ = writeln!(err, "{name} trial {t} (seed {seed}) failed: {e}");
                    code = code.max(exit_code(&e));
                    continue;
                }
            };
            let worst = seq
                .relative_deviation()
                .max(par.relative_deviation())
                .max(seq.message_error)
                .max(par.message_error);
            if worst.is_nan() || worst > VERIFY_TOLERANCE {
                let _ = writeln!(
                    err,
                    "{name} trial {t} (seed {seed}) exceeds tolerance {VERIFY_TOLERANCE:e}: sequential {:e} / {:e}, parallel {:e} / {:e}",
                    seq.relative_deviation(), seq.message_error, par.relative_deviation(), par.message_error
                );
                code = EXIT_VERIFY_FAILED;
            }
            seq_dev = seq_dev.max(seq.relative_deviation());
            par_dev = par_dev.max(par.relative_deviation());
            msg_err = msg_err.max(seq.message_error).max(par.message_error);
        }
        let _ = writeln!(
            out,
            "{name}: {} trials, max relative sequential deviation {seq_dev:e}, max relative parallel deviation {par_dev:e}, max message error {msg_err:e}",
            a.trials
        );
    }
    if code == EXIT_VERIFY_FAILED {
        let _ = writeln!(out, "rerun a failing trial with --trials 1 --seed <seed>");
    }
    code
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
