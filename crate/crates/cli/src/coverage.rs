use std::path::PathBuf;

use clap::Args;
use didpanel::inference::{coverage_study, CoverageConfig};
use serde_json::json;

use crate::error::CliError;
use crate::input::{read_config, resolve_seed};
use crate::output::{write_report, OutDir, ReportParts, Timings};

#[derive(Debug, Args)]
pub struct CoverageArgs {
    /// Coverage study config (JSON); flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, env = "DIDPANEL_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_reps: Option<usize>,
    /// Bootstrap draws per replication.
    #[arg(long)]
    pub draws: Option<usize>,
    /// Units per simulated panel.
    #[arg(long)]
    pub n_units: Option<usize>,
}

pub fn run(args: CoverageArgs, timings: bool) -> Result<(), CliError> {
    let mut timings = Timings::new(timings);
    let (mut cfg, file_seed): (CoverageConfig, bool) = read_config(args.config.as_deref())?;
    cfg.seed = resolve_seed(args.seed, file_seed.then_some(cfg.seed))?;
    if let Some(v) = args.n_reps {
        cfg.n_reps = v;
    }
    if let Some(v) = args.draws {
        cfg.bootstrap.n_draws = v;
    }
    if let Some(v) = args.n_units {
        cfg.dgp.n_units = v;
    }
    let out = OutDir::create(&args.out)?;
    let report = timings.stage("coverage", || coverage_study(&cfg))?;
    out.write_json("coverage.json", &report)?;
    let summary = json!({
        "n_reps": report.n_reps,
        "failures": report.failures,
        "uniform_coverage": report.uniform_coverage,
        "uniform_coverage_mc_se": report.uniform_coverage_mc_se,
        "max_abs_bias": report.max_abs_bias,
    });
    write_report(
        &out,
        ReportParts {
            command: "coverage",
            config: &cfg,
            summary,
            skipped_cells: json!([]),
            diagnostics: &[],
        },
        timings,
    )?;
    Ok(())
}
