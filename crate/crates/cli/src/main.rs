mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use fnorp::Mode;

use commands::{Command, Failure};
use config::RunConfig;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Regularized,
    Trivial,
}

/// Regularized rough paths over fractional Brownian motion.
///
/// Exit status: 0 when every declared tolerance holds, 1 when one is
/// violated, 2 on invalid input or a refused resource request.
#[derive(Debug, Parser)]
#[command(name = "fnorp", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long = "c-reg")]
    c_reg: Option<f64>,
}

fn resolve(cli: &Cli) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(&cli.config).map_err(|e| format!("cannot read {}: {e}", cli.config.display()))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(m) = cli.mode {
        cfg.mode = match m {
            ModeArg::Regularized => Mode::Regularized,
            ModeArg::Trivial => Mode::Trivial,
        };
    }
    if let Some(c) = cli.c_reg {
        cfg.c_reg = c;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("fnorp: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("fnorp: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("fnorp: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = match commands::run(cli.command, &cfg, &cli.out) {
        Ok(o) => o,
        Err(Failure::Input(e)) => {
            eprintln!("fnorp: {e}");
            return ExitCode::from(2);
        }
    };
    let code = if outcome.tolerances_met { 0 } else { 1 };
    let manifest = commands::manifest(cli.command, &cfg, &outcome, code);
    if let Err(e) = commands::write_manifest(&cli.out, &manifest) {
        eprintln!("fnorp: {e}");
        return ExitCode::from(2);
    }
    if code == 1 {
        eprintln!("fnorp: tolerances violated, see the reports in {}", cli.out.display());
    }
    ExitCode::from(code)
}
