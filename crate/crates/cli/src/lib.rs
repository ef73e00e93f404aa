//! Command-line driver: identity, asymptotic and inequality suites.

pub mod config;
pub mod suites;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::config::ExperimentConfig;

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "ALS_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_RESIDUAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Parser)]
#[command(name = "alsieve", version, about = "Large sieve identity, asymptotic and inequality suites")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration; defaults apply to anything missing.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, ahead of $ALS_OUT_DIR and the config file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Replaces every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Replaces every residual tolerance.
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Exact and floating identity suites.
    Identities,
    /// Asymptotic sweeps over Q.
    Asymptotics,
    /// Randomized large sieve inequality suites.
    Sieve,
}

/// What a command produced.
#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

pub fn resolve_out_dir(flag: Option<&Path>, env: Option<OsString>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match env {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.output.dir.clone(),
    }
}

/// Loads the configuration and applies the command-line overrides.
pub fn effective_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(t) = cli.tolerance {
        if !(t >= 0.0) {
            return Err(CliError::Config(format!("tolerance {t} is negative")));
        }
        cfg.set_tolerance(t);
    }
    if let Some(w) = cli.workers {
        cfg.output.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Outcome {
    match try_run(cli, std::env::var_os(OUT_DIR_ENV)) {
        Ok(o) => o,
        Err(e) => Outcome {
            exit_code: EXIT_CONFIG,
            files: Vec::new(),
            summary: e.to_string(),
        },
    }
}

pub fn try_run(cli: &Cli, env_out: Option<OsString>) -> Result<Outcome, CliError> {
    let cfg = effective_config(cli)?;
    let out = resolve_out_dir(cli.out.as_deref(), env_out, &cfg);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if cfg.output.workers > 0 {
        builder = builder.num_threads(cfg.output.workers);
    }
    let pool = builder.build().map_err(|e| CliError::Config(e.to_string()))?;
    let result = pool.install(|| match cli.command {
        Command::Identities => cmd_identities(&cfg),
        Command::Asymptotics => cmd_asymptotics(&cfg),
        Command::Sieve => cmd_sieve(&cfg),
    })?;
    let files = write_all(&out, &result.files)?;
    Ok(Outcome {
        exit_code: result.exit_code,
        files,
        summary: result.summary,
    })
}

/// A command's result before anything touches the disk.
pub struct Rendered {
    pub exit_code: i32,
    pub files: Vec<(&'static str, String)>,
    pub summary: String,
}

fn write_all(dir: &Path, files: &[(&'static str, String)]) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    files
        .iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            Ok(path)
        })
        .collect()
}

#[derive(Serialize)]
struct JsonDoc<'a, T: Serialize> {
    config_hash: String,
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    body: &'a T,
}

fn json<T: Serialize>(cfg: &ExperimentConfig, body: &T) -> String {
    let mut s = serde_json::to_string_pretty(&JsonDoc {
        config_hash: cfg.hash(),
        config: cfg,
        body,
    })
    .expect("reports serialize");
    s.push('\n');
    s
}

pub fn cmd_identities(cfg: &ExperimentConfig) -> Result<Rendered, CliError> {
    let report = suites::identity_suite(&cfg.identities)?;
    let mut summary = String::new();
    let suites = [
        "split",
        "cancellation",
        "euler_maclaurin",
        "mobius_switch",
        "gcd_expansion",
        "orthogonality",
        "primitive_count",
        "euler_factor",
    ];
    for name in suites {
        let failed = report.cases.iter().filter(|c| c.suite == name && !c.pass).count();
        let worst = report.worst(name).map_or(0.0, |c| c.residual);
        let _ = writeln!(
            summary,
            "{name}: {} cases, {failed} failed, max residual {worst:.3e}",
            report.count(name)
        );
    }
    let failures: Vec<_> = report.failures().collect();
    if !failures.is_empty() {
        let _ = writeln!(summary, "residual violations:");
        for c in failures.iter().take(50) {
            let _ = writeln!(summary, "  {}", c.to_csv());
        }
        if failures.len() > 50 {
            let _ = writeln!(summary, "  ... {} more", failures.len() - 50);
        }
    }
    Ok(Rendered {
        exit_code: if report.passed() { EXIT_OK } else { EXIT_RESIDUAL },
        files: vec![("identities.csv", report.to_csv()), ("identities.json", json(cfg, &report))],
        summary,
    })
}

pub fn cmd_asymptotics(cfg: &ExperimentConfig) -> Result<Rendered, CliError> {
    let report = suites::asymptotics_suite(&cfg.asymptotics, &cfg.identities.cutoff, &cfg.hash())?;
    let mut card = String::from(suites::CardinalityRow::CSV_HEADER);
    card.push('\n');
    for r in &report.cardinality {
        card.push_str(&r.to_csv());
        card.push('\n');
    }
    let mut special = String::from(suites::SpecialRow::CSV_HEADER);
    special.push('\n');
    for r in &report.special {
        special.push_str(&r.to_csv());
        special.push('\n');
    }
    let mut summary = String::new();
    let _ = writeln!(summary, "regime {}", report.table.metadata.regime);
    for r in &report.table.rows {
        let _ = writeln!(summary, "  Q = {:>8}: |S - S_diag|/Q = {:.6e}", r.q, r.normalized_error);
    }
    match report.table.decay_ratio {
        Some(d) => {
            let _ = writeln!(summary, "decay ratio (last/first) = {d:.6}");
        }
        None => {
            let _ = writeln!(summary, "decay ratio: single grid point");
        }
    }
    let ok = !cfg.asymptotics.require_decay || report.decays();
    Ok(Rendered {
        exit_code: if ok { EXIT_OK } else { EXIT_RESIDUAL },
        files: vec![
            ("asymptotics.csv", report.table.to_csv()),
            ("cardinality.csv", card),
            ("special.csv", special),
            ("asymptotics.json", json(cfg, &report)),
        ],
        summary,
    })
}

pub fn cmd_sieve(cfg: &ExperimentConfig) -> Result<Rendered, CliError> {
    let report = suites::sieve_suite(&cfg.sieve)?;
    let mut summary = String::new();
    let _ = writeln!(summary, "seed {}", cfg.sieve.seed);
    for s in &report.summaries {
        let _ = writeln!(
            summary,
            "{}: {} trials, max ratio {:.6}",
            s.kind.name(),
            s.trials,
            s.worst()
        );
    }
    if let Some(b) = &report.bilinear {
        let _ = writeln!(summary, "bilinear: L = {:.6}, ratio {:.6}", b.mellin.script_l, b.result.ratio);
    }
    let ok = report.worst() <= 1.0 + cfg.sieve.ratio_slack;
    Ok(Rendered {
        exit_code: if ok { EXIT_OK } else { EXIT_RESIDUAL },
        files: vec![("sieve.csv", report.to_csv()), ("sieve.json", json(cfg, &report))],
        summary,
    })
}
