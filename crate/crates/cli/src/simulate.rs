use std::path::PathBuf;

use clap::Args;
use didpanel::panel::io::{write_claims, write_panel, write_units};
use didpanel::sim::{simulate_claims, simulate_panel, DgpConfig};
use serde::Serialize;
use serde_json::json;

use crate::error::CliError;
use crate::input::{read_config, resolve_seed};
use crate::output::{write_report, OutDir, ReportParts, Timings};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// DGP config (JSON); flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, env = "DIDPANEL_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_units: Option<usize>,
    #[arg(long)]
    pub window_start: Option<i32>,
    #[arg(long)]
    pub window_months: Option<usize>,
    #[arg(long)]
    pub cohort_band: Option<usize>,
    #[arg(long)]
    pub never_treated_share: Option<f64>,
    #[arg(long)]
    pub baseline: Option<f64>,
    #[arg(long)]
    pub dropout_share: Option<f64>,
}

#[derive(Serialize)]
struct TruthRow {
    event_time: i32,
    effect: f64,
}

#[derive(Serialize)]
struct Truth {
    window: (i32, i32),
    event_effects: Vec<TruthRow>,
}

pub fn run(args: SimulateArgs, timings: bool) -> Result<(), CliError> {
    let mut timings = Timings::new(timings);
    let (mut cfg, file_seed): (DgpConfig, bool) = read_config(args.config.as_deref())?;
    cfg.seed = resolve_seed(args.seed, file_seed.then_some(cfg.seed))?;
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = args.$f { cfg.$f = v; } )* };
    }
    set!(n_units, window_start, window_months, cohort_band, never_treated_share, baseline, dropout_share);

    let out = OutDir::create(&args.out)?;
    let sim = timings.stage("simulate", || simulate_panel(&cfg))?;
    let claims = timings.stage("claims", || simulate_claims(&sim));
    timings.stage("write", || -> Result<(), CliError> {
        out.write_with("claims.csv", |w| write_claims(w, &claims))?;
        out.write_with("units.csv", |w| write_units(w, &sim.panel.units))?;
        out.write_with("panel.csv", |w| write_panel(w, &sim.panel))?;
        let truth = Truth {
            window: (sim.panel.window.lo, sim.panel.window.hi),
            event_effects: sim
                .truth
                .iter()
                .map(|&(event_time, effect)| TruthRow { event_time, effect })
                .collect(),
        };
        out.write_json("truth.json", &truth)?;
        Ok(())
    })?;

    let summary = json!({
        "n_units": sim.panel.n_units(),
        "n_claims": claims.len(),
        "panel_rows": sim.panel.observations.len(),
        "window": [sim.panel.window.lo, sim.panel.window.hi],
        "balanced": sim.panel.balanced,
    });
    write_report(
        &out,
        ReportParts {
            command: "simulate",
            config: &cfg,
            summary,
            skipped_cells: json!([]),
            diagnostics: &sim.panel.diagnostics,
        },
        timings,
    )?;
    Ok(())
}
