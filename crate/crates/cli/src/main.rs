use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rbsde_cli::{list_catalog, run, run_geometry, run_oracle, CliError, RunConfig};

#[derive(Parser)]
#[command(
    name = "rbsde",
    version,
    about = "Reflected BSDE penalization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// TOML run configuration.
    config: PathBuf,
    /// Override a config entry, as `section.key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory, taking precedence over the config and RBSDE_OUTPUT_DIR.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Cap on worker threads, taking precedence over the config.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Geometry report, penalization schedule and checks.
    Run(ConfigArgs),
    /// Print the catalog of domains, terminals and generators.
    List,
    /// Geometry report only.
    Geometry(ConfigArgs),
    /// Closed-form circle solution only.
    Oracle(ConfigArgs),
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    let load = |a: &ConfigArgs| -> Result<(RunConfig, PathBuf), CliError> {
        let mut cfg = RunConfig::load(&a.config, &a.overrides)?;
        if let Some(t) = a.threads {
            cfg.threads = t;
        }
        let out = a
            .output
            .clone()
            .unwrap_or_else(|| cfg.resolved_output_dir());
        Ok((cfg, out))
    };
    match cmd {
        Command::List => print!("{}", list_catalog()),
        Command::Run(a) => {
            let (cfg, out) = load(&a)?;
            let outcome = run(&cfg, &out);
            match &outcome {
                Ok(o) => {
                    for c in &o.checks {
                        println!(
                            "{:<18} PASS  worst {:.3e}  tol {:.3e}",
                            c.name, c.worst_violation, c.tolerance
                        );
                    }
                }
                Err(CliError::ChecksFailed { .. }) => {
                    eprintln!("see {}", out.join("checks.json").display())
                }
                Err(_) => {}
            }
            outcome?;
            println!("outputs in {}", out.display());
        }
        Command::Geometry(a) => {
            let (cfg, out) = load(&a)?;
            let g = run_geometry(&cfg, &out)?;
            println!(
                "gamma {:.6}  R0 {:.6}  smallness {:?}",
                g.report.gamma, g.report.r0, g.report.smallness_case
            );
        }
        Command::Oracle(a) => {
            let (cfg, out) = load(&a)?;
            let v = run_oracle(&cfg, &out)?;
            println!("{v}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
