use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddelm_cli::commands::{self, Preset};
use ddelm_cli::report::{append_csv, write_json, RunReport};
use ddelm_cli::{CliError, ConfigError, RunConfig, EXIT_FAILED, EXIT_NOT_CONVERGED, EXIT_OK};

#[derive(Parser)]
#[command(name = "ddelm", about = "Domain-decomposed ELM solvers and their ablations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a key, e.g. `--set theta=0.9`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn load(&self, mut base: RunConfig) -> Result<RunConfig, ConfigError> {
        if let Some(p) = &self.config {
            base.apply_file(p)?;
        }
        base.apply_overrides(&self.sets)?;
        Ok(base)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured method.
    Solve(ConfigArgs),
    /// Run an ablation preset: table1, table2, methods, table3..table6.
    Ablation {
        preset: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Compare every driver with the dense oracle on a tiny instance.
    OracleCheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Negate the driver's flux rows on this subdomain.
        #[arg(long)]
        corrupt_flux: Option<usize>,
    },
    /// Pointwise variance of the random forcing field over many seeds.
    GrfStats {
        #[arg(long, default_value_t = 32.0)]
        alpha: f64,
        #[arg(long, default_value_t = 500)]
        seeds: usize,
        /// Sample points per side.
        #[arg(long, default_value_t = 16)]
        points: usize,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn persist(report: &RunReport) -> Result<(), CliError> {
    if let Some(p) = &report.config.json_out {
        write_json(p, report)?;
    }
    if let Some(p) = &report.config.csv_out {
        append_csv(p, &report.runs)?;
    }
    Ok(())
}

fn print_runs(report: &RunReport) {
    println!("{}", ddelm_cli::report::CSV_HEADER);
    for r in &report.runs {
        let (l2, h1) = r.errors.as_ref().map(|e| (format!("{:.3e}", e.l2), format!("{:.3e}", e.h1))).unwrap_or_default();
        let status = match (&r.failure, r.converged) {
            (Some(f), _) => format!("  # failed: {f}"),
            (None, false) => "  # not converged".into(),
            _ => String::new(),
        };
        println!(
            "{},{},{},{},{:?},{:?},{l2},{h1},{},{:.3},{}{status}",
            r.method.name(),
            r.s,
            r.m,
            r.theta,
            r.flux_variant,
            r.trace_basis,
            r.iterations,
            r.timings.total(),
            r.seed
        );
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Solve(args) => {
            let cfg = args.load(RunConfig::default())?;
            let report = commands::solve(&cfg)?;
            persist(&report)?;
            print_runs(&report);
            Ok(if report.all_converged() { EXIT_OK } else { EXIT_NOT_CONVERGED })
        }
        Command::Ablation { preset, cfg } => {
            let p = Preset::parse(&preset).ok_or_else(|| ConfigError::BadValue {
                key: "preset".into(),
                value: preset.clone(),
                reason: format!("expected one of {:?}", Preset::NAMES),
            })?;
            let cfg = cfg.load(RunConfig::default())?;
            let report = commands::ablation(&cfg, p)?;
            persist(&report)?;
            print_runs(&report);
            Ok(if report.all_converged() { EXIT_OK } else { EXIT_NOT_CONVERGED })
        }
        Command::OracleCheck { cfg, corrupt_flux } => {
            let cfg = cfg.load(RunConfig::tiny())?;
            let report = commands::oracle_check(&cfg, corrupt_flux)?;
            if let Some(p) = &cfg.json_out {
                write_json(p, &report)?;
            }
            for c in &report.cases {
                println!(
                    "{} theta={} mu_rel={:.2e} field_l2={:.2e} operator_rel={:.2e} {}",
                    c.method.name(),
                    c.theta,
                    c.mu_rel,
                    c.field_l2,
                    c.operator_rel,
                    if c.passed { "PASS" } else { "FAIL" }
                );
                if !c.passed {
                    if let Some(w) = &c.worst {
                        println!(
                            "  worst operator entry ({}, {}): driver {:.6e} oracle {:.6e} at {:?}, subdomains {:?}",
                            w.row, w.col, w.driver, w.oracle, w.coord, w.subdomains
                        );
                    }
                }
            }
            Ok(if report.passed { EXIT_OK } else { EXIT_FAILED })
        }
        Command::GrfStats { alpha, seeds, points, json } => {
            let st = commands::grf_stats(alpha, seeds, points)?;
            if let Some(p) = &json {
                write_json(p, &st)?;
            }
            println!(
                "alpha={} seeds={} points={} variance={:.6e} target={:.6e} rel_error={:.3}% {}",
                st.alpha,
                st.seeds,
                st.points,
                st.variance,
                st.target,
                100.0 * st.rel_error,
                if st.passed { "PASS" } else { "FAIL" }
            );
            Ok(if st.passed { EXIT_OK } else { EXIT_FAILED })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
