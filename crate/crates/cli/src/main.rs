//! Command-line front end for the cone fractional integration library.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod run;

use std::process::ExitCode;

use clap::Parser;

use config::{parse_config, Command};

/// Fractional integration with a light-cone singular kernel: apply the
/// operator and run the numerical experiments. Every run writes
/// `report.json` and `samples.csv` to `--out` and exits with status 0 only
/// when all pass/fail flags of the report pass (1 when some fail, 2 on errors).
#[derive(Debug, Parser)]
#[command(name = "conefrac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (experiment, flags) = cli.command.split();
    let result = parse_config(experiment, &flags).and_then(|cfg| {
        if cfg.q_derived {
            println!("q = {} (from alpha/n = 1/p - 1/q)", cfg.q);
        }
        log::info!("running {experiment:?} into {}", cfg.out.display());
        let (report, field) = run::run(&cfg)?;
        run::write_artifacts(&cfg, &report, field.as_ref())?;
        Ok(report)
    });
    match result {
        Ok(report) => {
            for line in report.summary_lines() {
                println!("{line}");
            }
            println!("{}: runtime {:.3}s", report.experiment, report.runtime_s);
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
