//! `nearcrit`: runs experiment configs and the identity suite.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 configuration or
//! engine error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use nearcrit_core::experiment::{
    apply_override, preset, presets, run, write_report, ExperimentConfig, ExperimentReport,
};
use nearcrit_core::oracles::{run_identity_suite, IDENTITY_SEED};
use serde_json::Value;

#[derive(Parser)]
#[command(
    name = "nearcrit",
    version,
    about = "Nearly critical branching experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config (a JSON file, or `preset:<name>`).
    Run {
        config: String,
        /// Directory for the CSV and JSON sidecar (default: config `output`, else `.`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Set a config field by dotted path, e.g. `tolerances.terminal_tv=0.1`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Record wall-clock time in the sidecar (makes reports non-reproducible).
        #[arg(long)]
        wall_time: bool,
    },
    /// List the built-in configs, or print one verbatim.
    ListPresets {
        #[arg(long, value_name = "NAME")]
        show: Option<String>,
    },
    /// Run the exact identity suite.
    Identities {
        #[arg(long, default_value_t = 12)]
        max_k: usize,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = IDENTITY_SEED)]
        seed: u64,
    },
}

fn load_config(source: &str, overrides: &[String]) -> Result<ExperimentConfig, String> {
    let text = match source.strip_prefix("preset:") {
        Some(name) => preset(name)
            .ok_or_else(|| format!("unknown preset {name:?}; see `nearcrit list-presets`"))?
            .to_string(),
        None => std::fs::read_to_string(source).map_err(|e| format!("{source}: {e}"))?,
    };
    let mut value: Value = serde_json::from_str(&text).map_err(|e| format!("{source}: {e}"))?;
    for o in overrides {
        apply_override(&mut value, o).map_err(|e| e.to_string())?;
    }
    ExperimentConfig::from_value(value).map_err(|e| format!("{source}: {e}"))
}

fn print_report(report: &ExperimentReport) {
    if !report.rows.is_empty() {
        println!(
            "{:>8} {:>14} {:>12} {:>14} {:>12}",
            "n", "tv_to_limit", "lost_mass", "mass", "mean"
        );
        for r in &report.rows {
            println!(
                "{:>8} {:>14.6e} {:>12.3e} {:>14.6e} {:>12.6}",
                r.n, r.tv_to_limit, r.lost_mass, r.mass, r.mean
            );
        }
    }
    for c in &report.checks {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {}: {:.6e} (threshold {:.3e})",
            c.name, c.value, c.threshold
        );
    }
}

fn run_command(
    config: &str,
    out: Option<PathBuf>,
    overrides: &[String],
    wall_time: bool,
) -> ExitCode {
    let cfg = match load_config(config, overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let start = Instant::now();
    let mut report = match run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if wall_time {
        report.wall_time_seconds = Some(start.elapsed().as_secs_f64());
    }
    let dir = out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    print_report(&report);
    match write_report(&report, Path::new(&dir)) {
        Ok((csv, json)) => println!("wrote {} and {}", csv.display(), json.display()),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    verdict(report.passed)
}

fn verdict(passed: bool) -> ExitCode {
    if passed {
        println!("all checks passed");
        ExitCode::SUCCESS
    } else {
        println!("some checks failed");
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            overrides,
            wall_time,
        } => run_command(&config, out, &overrides, wall_time),
        Command::ListPresets { show: Some(name) } => match preset(&name) {
            Some(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            None => {
                eprintln!("error: unknown preset {name:?}");
                ExitCode::from(2)
            }
        },
        Command::ListPresets { show: None } => {
            for name in presets().keys() {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::Identities {
            max_k,
            samples,
            seed,
        } => match run_identity_suite(max_k, samples, seed) {
            Ok(report) => {
                for c in &report.checks {
                    let v = if c.passed() { "PASS" } else { "FAIL" };
                    println!("{v} {}: {} cases, {} failures", c.name, c.cases, c.failures);
                }
                verdict(report.passed())
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
