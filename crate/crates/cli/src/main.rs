//! `dtqw`: runs walk scenarios from TOML files or built-in presets.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dtqw::scenario::{list_presets, preset, resolve_output_dir, Scenario, OUTPUT_DIR_ENV};
use dtqw::Error;

#[derive(Parser)]
#[command(name = "dtqw", version, about = "Discrete-time quantum walk scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunOptions {
    /// Output directory (default: the config's `output`, else $DTQW_OUTPUT_DIR/<name>, else output/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOptions,
    },
    /// Run a built-in preset.
    Preset {
        name: String,
        #[command(flatten)]
        opts: RunOptions,
    },
    /// List built-in presets.
    ListPresets,
    /// Parse and validate a scenario file without running it.
    Validate { config: PathBuf },
}

/// 0 success, 1 configuration or I/O error, 2 numerical-invariant violation.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Invariant(_) | Error::Unnormalized { .. } | Error::IllDefinedWinding(_) | Error::AmbiguousCrossing(_) => 2,
        _ => 1,
    }
}

fn execute(scenario: &Scenario, opts: &RunOptions) -> Result<(), Error> {
    if let Some(n) = opts.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let dir = resolve_output_dir(opts.out.as_deref(), scenario);
    let manifest = scenario.run(&dir, opts.seed)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{}: wrote {} file(s) and manifest.json to {} in {:.2} s",
        manifest.name,
        manifest.outputs.len(),
        dir.display(),
        manifest.wall_clock_seconds
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run { config, opts } => Scenario::from_path(config).and_then(|s| execute(&s, opts)),
        Command::Preset { name, opts } => preset(name).and_then(|s| execute(&s, opts)),
        Command::ListPresets => {
            for (name, description) in list_presets() {
                println!("{name:<7} {description}");
            }
            Ok(())
        }
        Command::Validate { config } => Scenario::from_path(config).map(|s| {
            for w in s.warnings() {
                eprintln!("warning: {w}");
            }
            println!("{}: ok", config.display());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Io(_)) {
                eprintln!("(default output root can be set with {OUTPUT_DIR_ENV})");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariant_failures_exit_with_two() {
        assert_eq!(exit_code(&Error::Invariant("drift".into())), 2);
        assert_eq!(exit_code(&Error::IllDefinedWinding("gap".into())), 2);
        assert_eq!(exit_code(&Error::Config("bad".into())), 1);
    }
}
