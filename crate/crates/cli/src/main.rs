use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use weakcoupling_cli::{resolve_config, rerun, run, CliError, ExecOptions, Registry, RunOutcome};

/// Weak-coupling experiments.
///
/// Run an experiment with `wcl <experiment> [--config FILE] [--set KEY=VALUE]...`.
/// Outputs go to `<output-dir>/<experiment>/`; the output directory comes from
/// `--output-dir`, the config, `WCL_OUTPUT_DIR`, or defaults to `wcl-output`.
#[derive(Parser)]
#[command(name = "wcl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the available experiments.
    List {
        #[arg(long)]
        json: bool,
    },
    /// Re-run an experiment from its manifest and compare output hashes.
    Rerun {
        manifest: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Print the resolved configuration of an experiment as TOML.
    ShowConfig {
        experiment: String,
        #[command(flatten)]
        config: ConfigArgs,
    },
    #[command(external_subcommand)]
    Experiment(Vec<OsString>),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML file merged over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted override applied after the file, e.g. `--set kernel.tau=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct ExecArgs {
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads for the parallel parts.
    #[arg(long, conflicts_with = "serial")]
    threads: Option<usize>,
    /// Single worker thread.
    #[arg(long)]
    serial: bool,
}

impl ExecArgs {
    fn options(&self) -> ExecOptions {
        ExecOptions { output_dir: self.output_dir.clone(), threads: self.threads, serial: self.serial }
    }
}

#[derive(Parser)]
#[command(name = "wcl <experiment>", no_binary_name = true)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    exec: ExecArgs,
}

fn summarize(o: &RunOutcome) {
    for r in &o.reports {
        for c in &r.checks {
            println!("{} {}: {} ({})", if c.passed { "PASS" } else { "FAIL" }, r.name, c.name, c.detail);
        }
    }
    println!("outputs in {}", o.dir.display());
}

fn failure_code(o: &RunOutcome) -> ExitCode {
    let failed = o.manifest.failed_checks();
    if failed.is_empty() {
        return ExitCode::SUCCESS;
    }
    for f in failed {
        eprintln!("failed check {f}");
    }
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let registry = Registry::with_builtins();
    let result = match cli.command {
        Command::List { json } => {
            if json {
                println!("{}", registry.list_json());
            } else {
                print!("{}", registry.list_text());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ShowConfig { experiment, config } => {
            resolve_config(&registry, &experiment, config.config.as_deref(), &config.set).map(|c| {
                print!("{}", c.to_toml());
                ExitCode::SUCCESS
            })
        }
        Command::Rerun { manifest, exec } => rerun(&registry, &manifest, &exec.options()).map(|r| {
            summarize(&r.outcome);
            if r.identical() {
                println!("outputs identical to {}", manifest.display());
                failure_code(&r.outcome)
            } else {
                eprintln!("outputs differ from the manifest: {}", r.mismatches.join(", "));
                ExitCode::from(1)
            }
        }),
        Command::Experiment(args) => {
            let name = args[0].to_string_lossy().into_owned();
            let parsed = match RunArgs::try_parse_from(&args[1..]) {
                Ok(p) => p,
                Err(e) => e.exit(),
            };
            resolve_config(&registry, &name, parsed.config.config.as_deref(), &parsed.config.set)
                .and_then(|cfg| run(&registry, &cfg, &parsed.exec.options()))
                .map(|o| {
                    summarize(&o);
                    failure_code(&o)
                })
        }
    };
    result.unwrap_or_else(|e: CliError| {
        eprintln!("error: {e}");
        ExitCode::from(e.exit_code() as u8)
    })
}
