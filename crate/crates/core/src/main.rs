use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use temporal_recon::cli::{run_experiment, RunConfig, Settings};
use temporal_recon::error::{Error, ErrorKind};

/// Reconcile probabilistic forecasts across a temporal hierarchy and score
/// them over rolling test origins.
#[derive(Debug, Parser)]
#[command(name = "temporal-recon", version)]
struct Args {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the synthetic scenario even if a data file is configured.
    #[arg(long)]
    synthetic: bool,
    /// Comma-separated: bu,ba,ga,la,wls,cv,cvfull.
    #[arg(long)]
    methods: Option<String>,
    /// Comma-separated: stacked,ranked,permuted.
    #[arg(long)]
    schemes: Option<String>,
    /// Comma-separated: simplex,affine,free.
    #[arg(long = "cv-regime")]
    cv_regime: Option<String>,
}

fn settings(args: &Args) -> Result<Settings, Error> {
    let mut s = Settings::default();
    if let Some(path) = &args.config {
        s.merge_file(path)?;
    }
    s.merge_env(std::env::vars())?;
    if let Some(seed) = args.seed {
        s.set("seed", seed.to_string())?;
    }
    if let Some(out) = &args.out {
        s.set("out", out.display().to_string())?;
    }
    if args.synthetic {
        s.set("synthetic", "true")?;
    }
    if let Some(m) = &args.methods {
        s.set("methods", m.as_str())?;
    }
    if let Some(sc) = &args.schemes {
        s.set("schemes", sc.as_str())?;
    }
    if let Some(r) = &args.cv_regime {
        s.set("cv_regimes", r.as_str())?;
    }
    Ok(s)
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match settings(&args).and_then(RunConfig::from_settings) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    match run_experiment(&cfg) {
        Ok(report) => {
            for row in &report.crps {
                eprintln!(
                    "{:>9} {:<12} CRPS mean {:.4}",
                    row.scheme, row.method, row.mean
                );
            }
            eprintln!("reports written to {}", cfg.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
