use std::path::PathBuf;

use clap::Args;
use didpanel::inference::BootstrapConfig;
use didpanel::staggered::{event_study, write_event_study, CovariateSpec, DidConfig, DidData, Outcome};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::CliError;
use crate::input::{load_panel, parse_range, read_config, resolve_seed, sample_filter, PanelSource};
use crate::output::{write_report, OutDir, ReportParts, Timings};

/// Resolved settings of an `estimate` run. Keys match the long flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub claims: Option<PathBuf>,
    pub units: Option<PathBuf>,
    pub window: Option<(i32, i32)>,
    pub balanced: bool,
    pub age_range: Option<(f64, f64)>,
    pub filter: Vec<String>,
    pub outcome: Outcome,
    pub anticipation: i32,
    pub event_window: (i32, i32),
    pub include_never_treated: bool,
    pub min_treated: usize,
    pub min_control: usize,
    pub trim: f64,
    pub ps_spec: CovariateSpec,
    pub or_spec: CovariateSpec,
    pub draws: usize,
    pub level: f64,
    pub seed: Option<u64>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        let did = DidConfig::default();
        let boot = BootstrapConfig::default();
        Self {
            claims: None,
            units: None,
            window: None,
            balanced: true,
            age_range: Some((20.0, 40.0)),
            filter: vec![],
            outcome: did.outcome,
            anticipation: did.anticipation,
            event_window: did.event_window,
            include_never_treated: did.include_never_treated,
            min_treated: did.min_treated,
            min_control: did.min_control,
            trim: did.eps_trim,
            ps_spec: did.ps_spec,
            or_spec: did.or_spec,
            draws: boot.n_draws,
            level: boot.level,
            seed: None,
        }
    }
}

fn spec(s: &str) -> Result<CovariateSpec, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("expected intercept, linear or quadratic, got {s:?}"))
}

fn outcome(s: &str) -> Result<Outcome, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("expected rx, psy or gp, got {s:?}"))
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Estimation config (JSON); flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub claims: Option<PathBuf>,
    #[arg(long)]
    pub units: Option<PathBuf>,
    #[arg(long, env = "DIDPANEL_SEED")]
    pub seed: Option<u64>,
    /// Panel months as `lo:hi`; defaults to the span of claim months.
    #[arg(long, value_parser = parse_range::<i32>, allow_hyphen_values = true)]
    pub window: Option<(i32, i32)>,
    #[arg(long)]
    pub balanced: Option<bool>,
    /// Inclusive age-at-first-birth range as `lo:hi`.
    #[arg(long, value_parser = parse_range::<f64>)]
    pub age_range: Option<(f64, f64)>,
    /// Unit filter such as `employed=true`; repeatable.
    #[arg(long)]
    pub filter: Vec<String>,
    #[arg(long, value_parser = outcome)]
    pub outcome: Option<Outcome>,
    #[arg(long)]
    pub anticipation: Option<i32>,
    /// Event times as `lo:hi`.
    #[arg(long, value_parser = parse_range::<i32>, allow_hyphen_values = true)]
    pub event_window: Option<(i32, i32)>,
    #[arg(long)]
    pub include_never_treated: Option<bool>,
    #[arg(long)]
    pub min_treated: Option<usize>,
    #[arg(long)]
    pub min_control: Option<usize>,
    #[arg(long)]
    pub trim: Option<f64>,
    #[arg(long, value_parser = spec)]
    pub ps_spec: Option<CovariateSpec>,
    #[arg(long, value_parser = spec)]
    pub or_spec: Option<CovariateSpec>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
}

impl EstimateArgs {
    fn resolve(self) -> Result<(EstimateConfig, PathBuf), CliError> {
        let (mut cfg, _): (EstimateConfig, bool) = read_config(self.config.as_deref())?;
        macro_rules! set {
            ($($f:ident),*) => { $( if self.$f.is_some() { cfg.$f = self.$f; } )* };
        }
        set!(claims, units, window, age_range, seed);
        macro_rules! set_value {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { cfg.$f = v; } )* };
        }
        set_value!(
            balanced, outcome, anticipation, event_window, include_never_treated, min_treated, min_control, trim,
            ps_spec, or_spec, draws, level
        );
        if !self.filter.is_empty() {
            cfg.filter = self.filter;
        }
        cfg.seed = Some(resolve_seed(cfg.seed, None)?);
        Ok((cfg, self.out))
    }
}

impl EstimateConfig {
    fn did(&self) -> DidConfig {
        DidConfig {
            anticipation: self.anticipation,
            event_window: self.event_window,
            include_never_treated: self.include_never_treated,
            min_treated: self.min_treated,
            min_control: self.min_control,
            eps_trim: self.trim,
            ps_spec: self.ps_spec,
            or_spec: self.or_spec,
            outcome: self.outcome,
            ..DidConfig::default()
        }
    }

    fn bootstrap(&self) -> BootstrapConfig {
        BootstrapConfig {
            n_draws: self.draws,
            level: self.level,
            seed: self.seed.unwrap_or_default(),
            ..BootstrapConfig::default()
        }
    }
}

pub fn run(args: EstimateArgs, timings: bool) -> Result<(), CliError> {
    let mut timings = Timings::new(timings);
    let (cfg, out) = args.resolve()?;
    let did = cfg.did();
    did.validate()?;
    cfg.bootstrap().validate()?;
    let filter = sample_filter(cfg.age_range, &cfg.filter)?;
    let out = OutDir::create(&out)?;

    let loaded = timings.stage("panel", || {
        load_panel(PanelSource {
            claims: cfg.claims.as_ref(),
            units: cfg.units.as_ref(),
            window: cfg.window,
            balanced: cfg.balanced,
            filter,
        })
    })?;
    let data = DidData::from_panel(&loaded.panel, cfg.outcome);
    let run = timings.stage("estimate", || event_study(&data, &did, Some(&cfg.bootstrap())))?;
    out.write_with("event_study.csv", |w| write_event_study(w, &run.curve))?;

    let summary = json!({
        "n": loaded.panel.n_units(),
        "n_input_units": loaded.input_units,
        "n_filtered_out": loaded.filtered_out,
        "window": [loaded.panel.window.lo, loaded.panel.window.hi],
        "cohorts": data.cohorts().len(),
        "cells_estimated": run.cells.effects.len(),
        "cells_skipped": run.cells.skipped.len(),
        "event_times": run.curve.event_times.len(),
        "uniform_critical_value": run.curve.uniform_critical_value,
    });
    let mut diagnostics = loaded.diagnostics;
    if let Some(b) = &run.band {
        diagnostics.extend(b.diagnostics.iter().cloned());
    }
    write_report(
        &out,
        ReportParts {
            command: "estimate",
            config: &cfg,
            summary,
            skipped_cells: serde_json::to_value(&run.cells.skipped).map_err(didpanel::Error::from)?,
            diagnostics: &diagnostics,
        },
        timings,
    )?;
    Ok(())
}
