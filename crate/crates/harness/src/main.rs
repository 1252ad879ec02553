use std::io::Write;
use std::process::ExitCode;

use brwp_harness::config::load_config;
use brwp_harness::experiment::{mixture_marginal, run_experiment, RunStatus};
use brwp_harness::output::format_float;
use brwp_harness::{validate_kernels, HarnessError};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "brwp",
    about = "Interacting-particle sampler for nonsmooth targets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or a shipped config name.
    Run {
        config: String,
        /// Config overrides, `--key=value` or `key=value` (dotted keys for sections).
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Compare every kernel with its oracle; exits 4 if any check fails.
    ValidateKernels {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the exact marginal of a mixture config as `x,density` lines.
    Marginal {
        config: String,
        #[arg(long)]
        dim: usize,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
}

fn run(cli: Cli) -> Result<i32, HarnessError> {
    match cli.command {
        Command::Run { config, overrides } => {
            let mut cfg = load_config(&config, &overrides)?;
            if cfg.output_dir.is_none() {
                cfg.output_dir = Some(format!(
                    "runs/{}-{}",
                    cfg.experiment.as_str(),
                    &cfg.hash()[..12]
                ));
            }
            let record = run_experiment(&cfg)?;
            let dir = cfg.output_dir.as_deref().unwrap_or_default();
            match &record.status {
                RunStatus::Failed { message } => {
                    eprintln!("run failed: {message}\npartial metrics kept in {dir}/metrics.csv");
                    return Ok(3);
                }
                RunStatus::Completed => {
                    eprintln!(
                        "{} finished in {:.1}s, {} metric rows in {dir}/metrics.csv (config {})",
                        cfg.experiment.as_str(),
                        record.wall_clock_secs,
                        record.rows.len(),
                        &record.config_hash[..12]
                    );
                }
            }
            if let Some(v) = &record.validation {
                println!("{}", v.to_json());
                if !v.all_passed() {
                    return Ok(4);
                }
            }
            Ok(0)
        }
        Command::ValidateKernels { seed } => {
            let report = validate_kernels(seed)?;
            println!("{}", report.to_json());
            Ok(if report.all_passed() { 0 } else { 4 })
        }
        Command::Marginal {
            config,
            dim,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let m = mixture_marginal(&cfg, dim)?;
            if m.grid_too_narrow() {
                eprintln!(
                    "warning: grid captures only {:.6} of the mass",
                    m.mass_captured
                );
            }
            let mut out = std::io::stdout().lock();
            let written = (|| -> std::io::Result<()> {
                writeln!(out, "x,density")?;
                for (x, p) in m.curve.grid.points().into_iter().zip(&m.curve.density) {
                    writeln!(out, "{},{}", format_float(x), format_float(*p))?;
                }
                out.flush()
            })();
            match written {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(HarnessError::Io {
                    path: "<stdout>".into(),
                    message: e.to_string(),
                }),
                _ => Ok(0),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
