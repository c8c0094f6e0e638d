use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use levycensor_cli::{exit_code, parse_config, run_experiment, ConfigLayer, EXIT_ERROR};

/// Monte Carlo experiments for censored symmetric pure-jump Lévy processes.
///
/// Exit status: 0 when every check holds, 2 when a bound is violated, 1 on errors.
#[derive(Debug, Parser)]
#[command(name = "levycensor", version)]
struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
    #[command(flatten)]
    layer: ConfigLayer,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match parse_config(cli.config.as_deref(), &cli.layer) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_ERROR as u8);
        }
    };
    if cli.print_config {
        let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return ExitCode::SUCCESS;
    }
    let result = run_experiment(&cfg);
    match &result {
        Ok(m) => {
            // A closed stdout (e.g. a pipe into `head`) must not turn a finished run into a panic.
            let mut out = std::io::stdout().lock();
            let verdict = if m.pass { "pass" } else { "VIOLATION" };
            let _ = writeln!(out, "{}: {verdict} ({:.1} s, config {})", m.experiment, m.wall_time_seconds, &m.config_hash[..12]);
            for p in &m.outputs {
                let _ = writeln!(out, "  {}", p.display());
            }
        }
        Err(e) => eprintln!("error: {e:#}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
