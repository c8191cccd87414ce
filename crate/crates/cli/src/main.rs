//! `homog`: batch driver for the homogenization toolkit.

mod commands;

use clap::{Parser, Subcommand};
use commands::{Outcome, RunContext};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_VERDICT_FALSE: u8 = 4;

/// Overrides the output directory when `--output-dir` is absent.
pub const OUTPUT_DIR_ENV: &str = "HOMOG_OUTPUT_DIR";

#[derive(Parser)]
#[command(
    name = "homog",
    version,
    about = "Effective boundary data for oscillating Dirichlet problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (default: config `output_dir`, then `HOMOG_OUTPUT_DIR`, then `out`).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// One Dirichlet solve.
    Solve { config: PathBuf },
    /// Strip corrector solve and oscillation profile.
    Corrector { config: PathBuf },
    /// Effective boundary value at boundary points.
    Gbar { config: PathBuf },
    /// Lattice equidistribution counts.
    Equidist { config: PathBuf },
    /// Rational-normal audit of a planar boundary.
    Audit { config: PathBuf },
    /// Barrier verification suite.
    Barriers { config: PathBuf },
    /// Full sandwich pipeline.
    Homogenize { config: PathBuf },
    /// Operator and data checks.
    Validate { config: PathBuf },
}

impl Command {
    fn parts(&self) -> (&'static str, &PathBuf) {
        match self {
            Command::Solve { config } => ("solve", config),
            Command::Corrector { config } => ("corrector", config),
            Command::Gbar { config } => ("gbar", config),
            Command::Equidist { config } => ("equidist", config),
            Command::Audit { config } => ("audit", config),
            Command::Barriers { config } => ("barriers", config),
            Command::Homogenize { config } => ("homogenize", config),
            Command::Validate { config } => ("validate", config),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, path) = cli.command.parts();
    let start = Instant::now();
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);

    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let header: commands::Common = match toml::from_str(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let out = cli
        .output_dir
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .or(header.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return ExitCode::from(EXIT_CONFIG);
    }
    let _ = std::fs::remove_file(out.join("error.json"));
    let threads = cli.threads.or(header.threads).unwrap_or(0);
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let seed = cli.seed.or(header.seed).unwrap_or(0);
    let ctx = RunContext { out: out.clone(), seed };

    let outcome = commands::run(name, &text, &ctx);
    let (code, config_echo, error) = match &outcome {
        Ok(Outcome { verdict, config }) => (
            if *verdict { EXIT_OK } else { EXIT_VERDICT_FALSE },
            config.clone(),
            None,
        ),
        Err(e) => (e.code(), serde_json::Value::Null, Some(e.payload())),
    };
    if let Some(err) = &error {
        eprintln!("error: {}", err["message"].as_str().unwrap_or("unknown"));
        let _ = std::fs::write(
            out.join("error.json"),
            serde_json::to_string_pretty(err).unwrap_or_default(),
        );
    }
    let manifest = json!({
        "command": name,
        "config_path": path.display().to_string(),
        "config_text": text,
        "config": config_echo,
        "seed": seed,
        "threads": if threads > 0 { threads } else { rayon::current_num_threads() },
        "versions": {
            "homog": env!("CARGO_PKG_VERSION"),
            "homog_core": env!("CARGO_PKG_VERSION"),
        },
        "started_unix": started,
        "wall_seconds": start.elapsed().as_secs_f64(),
        "exit_code": code,
    });
    if let Err(e) = std::fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).unwrap_or_default(),
    ) {
        eprintln!("error: cannot write manifest: {e}");
        return ExitCode::from(EXIT_NUMERICAL);
    }
    ExitCode::from(code)
}
