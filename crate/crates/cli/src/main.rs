//! `vmfp`: run simulations, kernel checks, Picard iterations and the
//! acceptance suite from a TOML config.

use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vmfp_core::diagnostics::emit_csv;
use vmfp_core::driver::{picard_run, simulate};
use vmfp_core::greens::KernelVariant;
use vmfp_core::scenario::{parse_config_with, save_snapshot, Config, Snapshot};
use vmfp_core::verify::{greens_checks, run_all};
use vmfp_core::Error;

#[derive(Debug, Parser)]
#[command(name = "vmfp", version, about = "Vlasov-Maxwell-Fokker-Planck simulator and verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config; every key has a default.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Directory for CSV, snapshot and summary files.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    /// Override a config key, e.g. `--set grid.nx=32`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, value_name = "N", default_value = "1")]
    threads: NonZeroUsize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Time-step the configured scenario; writes diagnostics.csv and final.snap.
    Simulate,
    /// Kernel normalization, semigroup, moment and scaling checks.
    GreensTest {
        /// Use `2s` in the velocity exponent of the kernel (negative control).
        #[arg(long, hide = true)]
        inject_kernel_bug: bool,
    },
    /// Picard iteration over [0, picard.t_end]; writes picard.csv.
    Picard,
    /// The full acceptance suite; writes verify.txt.
    Verify,
}

const EXIT_FAIL: u8 = 1;
const EXIT_CFL: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NO_CONVERGENCE: u8 = 4;
const EXIT_INVALID: u8 = 5;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::CflViolation { .. } => EXIT_CFL,
        Error::Io { .. } => EXIT_IO,
        Error::NoConvergence { .. } => EXIT_NO_CONVERGENCE,
        _ => EXIT_INVALID,
    }
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<Config, Error> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => String::new(),
    };
    parse_config_with(&text, overrides)
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run_simulate(cfg: &Config, out: &Path) -> Result<u8, Error> {
    eprintln!(
        "simulate: scenario {} on {}x{}^2, {} steps of dt {:.4e}",
        cfg.scenario.name,
        cfg.grid.nx,
        cfg.grid.nv,
        cfg.steps(),
        cfg.dt()
    );
    let result = simulate(cfg, |_, _| {})?;
    let csv = out.join("diagnostics.csv");
    emit_csv(&result.records, &csv)?;
    let snap = Snapshot {
        state: result.final_state,
        exponents: cfg.exponents(),
        scenario_hash: cfg.hash(),
    };
    let snap_path = out.join("final.snap");
    save_snapshot(&snap, &snap_path)?;
    let (first, last) = (&result.records[0], result.records.last().unwrap());
    eprintln!(
        "t = {}: mass {:.12e}, e_total {:.12e} (from {:.12e})",
        last.t, last.mass, last.e_total, first.e_total
    );
    eprintln!("wrote {} and {}", csv.display(), snap_path.display());
    Ok(0)
}

fn run_greens_test(cfg: &Config, out: &Path, inject: bool) -> Result<u8, Error> {
    let variant = if inject {
        KernelVariant::DoubledVelocityElapsed
    } else {
        KernelVariant::Exact
    };
    let checks = greens_checks(cfg.grid()?, variant)?;
    let mut table = String::new();
    for c in &checks {
        eprintln!("{c}");
        table.push_str(&format!("{c}\n"));
    }
    write_text(&out.join("greens.txt"), &table)?;
    Ok(if checks.iter().all(|c| c.pass) { 0 } else { EXIT_FAIL })
}

fn run_picard(cfg: &Config, out: &Path) -> Result<u8, Error> {
    let result = picard_run(cfg)?;
    let report = &result.report;
    for r in &report.rows {
        eprintln!(
            "n = {:>2}  R = {:<8} f {:.3e}  fields {:.3e}  ratio {:.3}",
            r.n, r.r_n, r.f_diff, r.field_diff, r.ratio
        );
    }
    let csv = out.join("picard.csv");
    report.write_csv(&csv)?;
    eprintln!("wrote {}", csv.display());
    if report.converged {
        eprintln!("converged after {} iterations", report.rows.len());
        return Ok(0);
    }
    match report.verdict() {
        Err(e) => eprintln!("{e}"),
        Ok(()) => eprintln!("not converged to {:e} after {} iterations", cfg.picard.tol, report.rows.len()),
    }
    Ok(EXIT_NO_CONVERGENCE)
}

fn run_verify(cfg: &Config, out: &Path) -> Result<u8, Error> {
    let outcomes = run_all(cfg, |o| eprintln!("{o}"));
    let summary: String = outcomes
        .iter()
        .map(|o| format!("{} {} {}\n", if o.pass { "PASS" } else { "FAIL" }, o.id, o.name))
        .collect();
    write_text(&out.join("verify.txt"), &summary)?;
    let passed = outcomes.iter().filter(|o| o.pass).count();
    eprintln!("{passed}/{} criteria passed", outcomes.len());
    Ok(if passed == outcomes.len() { 0 } else { EXIT_FAIL })
}

fn execute(cli: &Cli) -> Result<u8, Error> {
    let cfg = load_config(cli.config.as_deref(), &cli.overrides)?;
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.get())
        .build()
        .map_err(|e| Error::HypothesisViolation(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Simulate => run_simulate(&cfg, &cli.out),
        Command::GreensTest { inject_kernel_bug } => run_greens_test(&cfg, &cli.out, *inject_kernel_bug),
        Command::Picard => run_picard(&cfg, &cli.out),
        Command::Verify => run_verify(&cfg, &cli.out),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INVALID } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
