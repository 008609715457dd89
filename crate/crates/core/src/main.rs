use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use csi_gpr::harness::{config::PAPER_SIZE, run_experiment, ExperimentConfig};

/// Monte Carlo comparison of GP-based channel reconstruction from reduced
/// pilots against full-pilot LS and MMSE estimation.
#[derive(Debug, Parser)]
#[command(name = "csi-gpr", version, about)]
struct Cli {
    /// `key = value` configuration file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated SNR grid in dB.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<String>,
    /// Comma-separated probing cases (case1, case2, case3).
    #[arg(long)]
    scheme: Option<String>,
    /// Comma-separated kernel families (rbf, matern, rq).
    #[arg(long)]
    kernel: Option<String>,
    /// Comma-separated channel models (kronecker, weichselberger).
    #[arg(long)]
    model: Option<String>,
    /// Array size, `N` or `NRxNT`.
    #[arg(long)]
    size: Option<String>,
    /// Random-coupling weight of the Weichselberger model, in [0, 1].
    #[arg(long)]
    richness: Option<f64>,
    /// Optimizer restarts per fit.
    #[arg(long)]
    restarts: Option<usize>,
    /// Use the 36x36 array.
    #[arg(long)]
    paper_scale: bool,
}

fn build_config(cli: &Cli) -> csi_gpr::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    if cli.paper_scale {
        (cfg.n_rx, cfg.n_tx) = (PAPER_SIZE, PAPER_SIZE);
    }
    let overrides: [(&str, Option<String>); 10] = [
        ("seed", cli.seed.map(|v| v.to_string())),
        ("trials", cli.trials.map(|v| v.to_string())),
        ("out", cli.out.as_ref().map(|p| p.display().to_string())),
        ("snr", cli.snr.clone()),
        ("scheme", cli.scheme.clone()),
        ("kernel", cli.kernel.clone()),
        ("model", cli.model.clone()),
        ("size", cli.size.clone()),
        ("richness", cli.richness.map(|v| v.to_string())),
        ("restarts", cli.restarts.map(|v| v.to_string())),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v).map_err(|e| e.context(format!("--{key}")))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_experiment(&cfg) {
        Ok((results, files)) => {
            println!("{} result rows written to {}", results.rows.len(), files.results.display());
            if let Ok(table) = results.table2() {
                println!(
                    "{:<8} {:>6} {:>10} {:>14} {:>14}",
                    "series", "T", "saving %", "relative MI %", "MI fidelity %"
                );
                for r in table {
                    println!(
                        "{:<8} {:>6} {:>10.2} {:>14.2} {:>14.2}",
                        r.estimator, r.pilot_length, r.pilot_saving_pct, r.relative_mi_pct, r.mi_fidelity_pct
                    );
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
