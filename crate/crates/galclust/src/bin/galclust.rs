//! Batch driver: `galclust <mock|angcorr|kl|sys> --config run.toml`
//! with optional `--seed`, `--out`, `--threads` overrides and `--dry-run`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use galclust::config::RunConfig;
use galclust::driver;

#[derive(Parser)]
#[command(
    name = "galclust",
    version,
    about = "Galaxy clustering statistics: mock catalogs, FFT angular correlations, KL likelihood, zero-point systematics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate mock galaxy and random catalogs plus a zero-point table.
    Mock(Common),
    /// Angular correlation functions per stripe with streak censoring.
    Angcorr(Common),
    /// Karhunen-Loeve likelihood surfaces over (sigma8, gamma).
    Kl(Common),
    /// Zero-point systematics injection and filtering comparison.
    Sys(Common),
}

#[derive(Args)]
struct Common {
    /// Structured-text run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread cap (0 = automatic).
    #[arg(long)]
    threads: Option<usize>,
    /// Print the resolved plan without writing anything.
    #[arg(long)]
    dry_run: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&RunConfig, bool) -> galclust::Result<driver::Artifacts>) =
        match &cli.command {
            Command::Mock(c) => (c, driver::run_mock),
            Command::Angcorr(c) => (c, driver::run_angcorr),
            Command::Kl(c) => (c, driver::run_kl),
            Command::Sys(c) => (c, driver::run_sys),
        };

    let mut cfg = match RunConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(threads) = common.threads {
        cfg.threads = threads;
    }

    let work = || run(&cfg, common.dry_run);
    let result = if cfg.threads > 0 {
        match rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build() {
            Ok(pool) => pool.install(work),
            Err(e) => {
                eprintln!("error: could not build thread pool: {e}");
                return ExitCode::from(5);
            }
        }
    } else {
        work()
    };

    match result {
        Ok(artifacts) => {
            for f in &artifacts.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
