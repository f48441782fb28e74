//! Command-line harness: admissibility reports, single runs, parameter
//! sweeps, and weak-form verification of existing artifacts.
//!
//! Exit codes: 0 success, 1 verification failure or I/O/config problem,
//! 2 bad arguments, 3 inadmissible parameters without --force, 4 solver
//! abort (positivity or stability loss).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kslg::config;
use kslg::error::Error;
use kslg::experiment;
use kslg::params::{b_minus, b_plus, chi_threshold_lw, ModelParams};

#[derive(Parser)]
#[command(name = "kslg", version, about = "Chemotaxis invariant laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form admissibility analysis of (chi, a, b).
    Admissible(AdmissibleArgs),
    /// Run one experiment from a config file and write its artifacts.
    Run(RunArgs),
    /// Run a k- or chi-sweep from a config file.
    Sweep(RunArgs),
    /// Replay weak-form verification on an existing artifact directory.
    Verify { dir: PathBuf },
}

#[derive(Args)]
struct AdmissibleArgs {
    #[arg(long)]
    chi: f64,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    b: Option<f64>,
    /// Reporting dimension for the classical thresholds.
    #[arg(long, default_value_t = 3)]
    n: u32,
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Run even if (chi, a, b) is inadmissible.
    #[arg(long)]
    force: bool,
}

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INADMISSIBLE: u8 = 3;
const EXIT_ABORT: u8 = 4;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Admissible(args) => cmd_admissible(&args),
        Command::Run(args) => cmd_run(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Verify { dir } => cmd_verify(&dir),
    };
    ExitCode::from(code)
}

fn cmd_admissible(args: &AdmissibleArgs) -> u8 {
    let (bp, bm) = match (b_plus(args.a, args.chi), b_minus(args.a, args.chi)) {
        (Ok(bp), Ok(bm)) => (bp, bm),
        (Err(e), _) | (_, Err(e)) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    println!("chi = {:.7}", args.chi);
    println!("a = {:.7}", args.a);
    println!("b_plus = {bp:.7}");
    println!("b_minus = {bm:.7}");
    if let Some(b) = args.b {
        let p = match ModelParams::new(args.chi, args.a, b, args.n.max(1), 8.0) {
            Ok(p) => p,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        };
        let rep = p.admissibility();
        println!("b = {b:.7}");
        println!("discriminant = {:.7e}", rep.discriminant);
        println!("coercivity = {:.7e}", rep.coercivity);
        println!("admissible = {}", rep.admissible);
        println!("frontier = {}", rep.frontier);
    }
    for n in [2u32, 3, 4] {
        let thr = chi_threshold_lw(n).expect("n >= 2");
        let relation = if args.chi < thr { "below" } else { "at-or-above" };
        println!("classical threshold n={n}: {thr:.7} ({relation})");
    }
    0
}

fn load_config(path: &PathBuf) -> Result<config::ExperimentConfig, u8> {
    config::parse_file(path).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_FAIL
    })
}

fn cmd_run(args: &RunArgs) -> u8 {
    let cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let rep = cfg.model.admissibility();
    if !rep.admissible && !args.force {
        eprintln!(
            "error: parameters (chi={}, a={}, b={}) are not admissible (b_plus = {:.7}); \
             rerun with --force to override",
            cfg.model.chi, cfg.model.a, cfg.model.b, rep.b_plus
        );
        return EXIT_INADMISSIBLE;
    }
    match experiment::run_experiment(&cfg) {
        Ok(artifacts) => {
            let s = artifacts.summary;
            println!("final_mass_u = {:.16e}", s.final_mass_u);
            println!("final_mass_v = {:.16e}", s.final_mass_v);
            println!("final_energy = {:.16e}", s.final_energy);
            println!("gronwall_max_slack = {:.16e}", s.gronwall_max_slack);
            println!("defect_integral = {:.16e}", s.defect_integral);
            println!(
                "verification = {}/{} checks passed",
                s.verification_rows - s.verification_failures,
                s.verification_rows
            );
            if let Some(dir) = &cfg.output_dir {
                println!("artifacts written to {}", dir.display());
            }
            if s.verification_failures > 0 {
                EXIT_FAIL
            } else {
                0
            }
        }
        Err(e @ (Error::Positivity { .. } | Error::Stability { .. })) => {
            eprintln!("solver abort: {e}");
            EXIT_ABORT
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAIL
        }
    }
}

fn cmd_sweep(args: &RunArgs) -> u8 {
    let cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let rows = match experiment::run_sweep(&cfg, args.force) {
        Ok(rows) => rows,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAIL;
        }
    };
    if let Some(sweep) = &cfg.sweep {
        if sweep.axis == config::SweepAxis::Chi && cfg.model.n >= 2 {
            let thr = chi_threshold_lw(cfg.model.n).expect("n >= 2");
            for row in &rows {
                let relation = if row.param < thr { "below" } else { "above" };
                println!(
                    "chi = {} is {relation} the classical n={} threshold {thr:.4}",
                    row.param, cfg.model.n
                );
            }
        }
    }
    let mut buf = Vec::new();
    if let Err(e) = experiment::write_sweep_csv(&rows, &mut buf) {
        eprintln!("error: {e}");
        return EXIT_FAIL;
    }
    match &cfg.output_dir {
        Some(dir) => {
            let path = dir.join("sweep.csv");
            if let Err(e) = std::fs::write(&path, &buf) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return EXIT_FAIL;
            }
            println!("sweep summary written to {}", path.display());
        }
        None => {
            print!("{}", String::from_utf8_lossy(&buf));
        }
    }
    let aborted = rows.iter().filter(|r| r.aborted).count();
    if aborted > 0 {
        println!("{aborted}/{} members aborted", rows.len());
    }
    0
}

fn cmd_verify(dir: &PathBuf) -> u8 {
    match experiment::verify_artifacts(dir) {
        Ok(rows) => {
            let failures = rows.iter().filter(|r| !r.pass).count();
            let mut buf = Vec::new();
            if let Err(e) = kslg::weakform::write_verification_csv(&rows, &mut buf) {
                eprintln!("error: {e}");
                return EXIT_FAIL;
            }
            let path = dir.join("verification.csv");
            if let Err(e) = std::fs::write(&path, &buf) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return EXIT_FAIL;
            }
            println!("verification = {}/{} checks passed", rows.len() - failures, rows.len());
            if failures > 0 {
                EXIT_FAIL
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAIL
        }
    }
}
