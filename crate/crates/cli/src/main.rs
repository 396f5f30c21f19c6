use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mmrelay::config::{apply_seed_override, load_config, SystemConfig, SEED_ENV};
use mmrelay::correlation::ThetaCache;
use mmrelay::experiment::{
    exit_code, is_quadform_preset, parse_formats, preset, run_quadratic_form_sweep, run_sweep, run_verify,
    write_quadform_outputs, write_sweep_outputs, EXIT_OK,
};
use mmrelay::verification::VerifyOptions;
use mmrelay::{Error, Result};

/// Massive-MIMO relay downlink simulator.
#[derive(Parser)]
#[command(name = "mmrelay", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sum-rate sweep over transmit power with both engines.
    Sweep(SweepArgs),
    /// Numerical checks of the lemmas, theorems and quadratic-form limits.
    Verify(VerifyArgs),
    /// Quadratic-form sweep against its two equivalents.
    Quadform(QuadformArgs),
}

#[derive(Args)]
struct Common {
    /// Override the number of Monte-Carlo trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the seed (decimal or 0x hex).
    #[arg(long)]
    seed: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated output formats.
    #[arg(long, default_value = "csv,svg")]
    format: String,
    /// Comma-separated power grid in dBm; defaults to the config's grid.
    #[arg(long)]
    grid: Option<String>,
    /// Directory caching one-ring correlation matrices between runs.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Built-in figure preset (fig2a … fig7b).
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// JSON scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct QuadformArgs {
    /// fig6a, fig6b, fig7a or fig7b.
    #[arg(long)]
    preset: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run a single check.
    #[arg(long)]
    only: Option<String>,
    /// Comma-separated antenna ladder.
    #[arg(long, default_value = "64,128,256")]
    ladder: String,
    /// Comma-separated CSIT error levels τ² for the channel checks.
    #[arg(long, default_value = "0,0.1")]
    tau_sq: String,
    /// Draws per ladder point.
    #[arg(long, default_value_t = 200)]
    draws: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Directory for gap-report CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_list<T: std::str::FromStr>(what: &str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::InvalidConfig(format!("bad {what} entry {s:?}"))))
        .collect()
}

fn resolve(cfg: &mut SystemConfig, common: &Common) -> Result<Vec<f64>> {
    apply_seed_override(cfg, std::env::var(SEED_ENV).ok().as_deref())?;
    apply_seed_override(cfg, common.seed.as_deref())?;
    if let Some(t) = common.trials {
        cfg.trials = t;
    }
    if let Some(g) = &common.grid {
        cfg.power_grid_dbm = parse_list("grid", g)?;
    }
    cfg.validate()?;
    Ok(cfg.power_grid_dbm.clone())
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let (name, mut cfg) = match (&args.preset, &args.config) {
        (Some(p), _) => (p.clone(), preset(p)?),
        (None, Some(path)) => (stem(path), load_config(path)?),
        (None, None) => return Err(Error::InvalidConfig("one of --preset or --config is required".into())),
    };
    let formats = parse_formats(&args.common.format)?;
    let grid = resolve(&mut cfg, &args.common)?;
    let cache = args.common.cache_dir.as_ref().map(ThetaCache::new);
    let result = run_sweep(&cfg, &grid, cache.as_ref())?;
    println!("{name}: fingerprint {} seed {} trials {}", result.fingerprint, result.seed, result.trials);
    for r in &result.rows {
        println!(
            "{:>7.1} dBm  AF mc {:.4} de {:.4}  DF mc {:.4} de {:.4}",
            r.p_dbm, r.sumrate_mc_af, r.sumrate_de_af, r.sumrate_mc_df, r.sumrate_de_df
        );
    }
    report_written(&write_sweep_outputs(&name, &cfg, &result, &args.common.out, &formats)?);
    Ok(())
}

fn quadform(args: &QuadformArgs) -> Result<()> {
    if !is_quadform_preset(&args.preset) {
        return Err(Error::InvalidConfig(format!(
            "quadform presets are fig6a, fig6b, fig7a, fig7b; got {}",
            args.preset
        )));
    }
    let mut cfg = preset(&args.preset)?;
    let formats = parse_formats(&args.common.format)?;
    let grid = resolve(&mut cfg, &args.common)?;
    let cache = args.common.cache_dir.as_ref().map(ThetaCache::new);
    let rows = run_quadratic_form_sweep(&cfg, &grid, cache.as_ref())?;
    for r in &rows {
        println!(
            "{:>7.1} dBm  mc {:.6} iterative {:.6} closed form {:.6}",
            r.p_dbm, r.quadform_mc, r.quadform_de_iterative, r.quadform_closed_form
        );
    }
    report_written(&write_quadform_outputs(&args.preset, &rows, &args.common.out, &formats)?);
    Ok(())
}

fn verify(args: &VerifyArgs) -> Result<i32> {
    let opts = VerifyOptions {
        ladder: parse_list("ladder", &args.ladder)?,
        only: args.only.clone(),
        tau_sq: parse_list("tau_sq", &args.tau_sq)?,
        draws: args.draws,
        seed: args.seed,
    };
    let report = run_verify(&opts, args.out.as_deref())?;
    for o in &report.outcomes {
        println!("[{}] {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    report_written(&report.written);
    let failed = report.failures();
    if !failed.is_empty() {
        eprintln!("failed checks: {}", failed.join(", "));
    }
    Ok(report.exit_code())
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "sweep".into(), |s| s.to_string_lossy().into_owned())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Sweep(a) => sweep(a).map(|_| EXIT_OK),
        Command::Quadform(a) => quadform(a).map(|_| EXIT_OK),
        Command::Verify(a) => verify(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
