use std::path::PathBuf;

use clap::{Args, ValueEnum};
use didpanel::dml::{
    dml_atet, linear_did, mothers_from_panel, placebo_reform, shrink_window, AtetResult, DmlConfig, Learner,
    LinearDid, ReformDesign, SampleBuilder,
};
use didpanel::sim::{simulate_mothers, MothersConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::CliError;
use crate::input::{load_panel, parse_range, read_config, resolve_seed, sample_filter, PanelSource};
use crate::output::{write_report, OutDir, ReportParts, Timings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Mean,
    Linear,
    Forest,
}

/// Resolved settings of a `dml` run. Keys match the long flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmlRunConfig {
    pub claims: Option<PathBuf>,
    pub units: Option<PathBuf>,
    pub window: Option<(i32, i32)>,
    pub balanced: bool,
    pub age_range: Option<(f64, f64)>,
    pub filter: Vec<String>,
    /// Simulated mothers instead of a claims panel.
    pub mothers: Option<MothersConfig>,
    pub reform: i32,
    pub birth_window: u32,
    pub event_year: i32,
    pub k_folds: usize,
    pub learner: LearnerKind,
    pub n_trees: usize,
    pub trim: f64,
    pub placebo_shifts: Vec<u32>,
    pub windows: Vec<u32>,
    pub linear: bool,
    pub seed: Option<u64>,
}

impl Default for DmlRunConfig {
    fn default() -> Self {
        let d = DmlConfig::default();
        Self {
            claims: None,
            units: None,
            window: None,
            balanced: true,
            age_range: Some((20.0, 40.0)),
            filter: vec![],
            mothers: None,
            reform: 132,
            birth_window: 3,
            event_year: 1,
            k_folds: d.k_folds,
            learner: LearnerKind::Forest,
            n_trees: 1000,
            trim: d.trim,
            placebo_shifts: vec![],
            windows: vec![],
            linear: false,
            seed: None,
        }
    }
}

impl DmlRunConfig {
    fn dml(&self) -> DmlConfig {
        let learner = match self.learner {
            LearnerKind::Mean => Learner::Mean,
            LearnerKind::Linear => Learner::Linear,
            LearnerKind::Forest => match Learner::forest() {
                Learner::Forest { shape, tune_grid, tune_folds, tune_trees, .. } => Learner::Forest {
                    n_trees: self.n_trees,
                    shape,
                    tune_grid,
                    tune_folds,
                    tune_trees,
                },
                other => other,
            },
        };
        DmlConfig {
            k_folds: self.k_folds,
            g_learner: learner.clone(),
            l_learner: learner,
            trim: self.trim,
            seed: self.seed.unwrap_or_default(),
        }
    }

    fn design(&self) -> ReformDesign {
        ReformDesign {
            reform: self.reform,
            window: self.birth_window,
            shift: 0,
            event_year: self.event_year,
        }
    }
}

#[derive(Debug, Args)]
pub struct DmlArgs {
    /// DML config (JSON); flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub claims: Option<PathBuf>,
    #[arg(long)]
    pub units: Option<PathBuf>,
    /// Simulate mothers from this config (JSON) instead of reading claims.
    #[arg(long, conflicts_with_all = ["claims", "units"])]
    pub mothers_config: Option<PathBuf>,
    #[arg(long, env = "DIDPANEL_SEED")]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_range::<i32>, allow_hyphen_values = true)]
    pub window: Option<(i32, i32)>,
    #[arg(long)]
    pub balanced: Option<bool>,
    #[arg(long, value_parser = parse_range::<f64>)]
    pub age_range: Option<(f64, f64)>,
    #[arg(long)]
    pub filter: Vec<String>,
    /// Reform month index (0 = January 2010).
    #[arg(long)]
    pub reform: Option<i32>,
    /// Birth window length in months on each side of the reform.
    #[arg(long)]
    pub birth_window: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    pub event_year: Option<i32>,
    #[arg(long)]
    pub k_folds: Option<usize>,
    #[arg(long, value_enum)]
    pub learner: Option<LearnerKind>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub trim: Option<f64>,
    /// Placebo reform shifts in months, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub placebo_shifts: Vec<u32>,
    /// Alternative birth windows, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub windows: Vec<u32>,
    /// Also report the linear DiD regression.
    #[arg(long)]
    pub linear: bool,
}

impl DmlArgs {
    fn resolve(self) -> Result<(DmlRunConfig, PathBuf), CliError> {
        let (mut cfg, _): (DmlRunConfig, bool) = read_config(self.config.as_deref())?;
        macro_rules! set {
            ($($f:ident),*) => { $( if self.$f.is_some() { cfg.$f = self.$f; } )* };
        }
        set!(claims, units, window, age_range, seed);
        macro_rules! set_value {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { cfg.$f = v; } )* };
        }
        set_value!(balanced, reform, birth_window, event_year, k_folds, learner, n_trees, trim);
        if let Some(path) = &self.mothers_config {
            let (m, _): (MothersConfig, bool) = read_config(Some(path))?;
            cfg.mothers = Some(m);
        }
        if !self.filter.is_empty() {
            cfg.filter = self.filter;
        }
        if !self.placebo_shifts.is_empty() {
            cfg.placebo_shifts = self.placebo_shifts;
        }
        if !self.windows.is_empty() {
            cfg.windows = self.windows;
        }
        cfg.linear |= self.linear;
        cfg.seed = Some(resolve_seed(cfg.seed, None)?);
        Ok((cfg, self.out))
    }
}

#[derive(Serialize)]
struct Shifted {
    shift: u32,
    result: AtetResult,
}

#[derive(Serialize)]
struct Windowed {
    window: u32,
    result: AtetResult,
}

#[derive(Serialize)]
struct AtetFile {
    design: ReformDesign,
    covariates: Vec<String>,
    n: usize,
    /// Cell counts in the order d1t1, d0t1, d1t0, d0t0.
    cells: [usize; 4],
    main: AtetResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    linear: Option<LinearDid>,
    placebos: Vec<Shifted>,
    windows: Vec<Windowed>,
}

pub fn run(args: DmlArgs, timings: bool) -> Result<(), CliError> {
    let mut timings = Timings::new(timings);
    let (cfg, out) = args.resolve()?;
    let out = OutDir::create(&out)?;

    let mut diagnostics = vec![];
    let (records, names) = timings.stage("input", || -> Result<_, CliError> {
        match &cfg.mothers {
            Some(m) => Ok(simulate_mothers(m)?),
            None => {
                let loaded = load_panel(PanelSource {
                    claims: cfg.claims.as_ref(),
                    units: cfg.units.as_ref(),
                    window: cfg.window,
                    balanced: cfg.balanced,
                    filter: sample_filter(cfg.age_range, &cfg.filter)?,
                })?;
                diagnostics = loaded.diagnostics;
                Ok(mothers_from_panel(&loaded.panel))
            }
        }
    })?;

    let dml = cfg.dml();
    let builder = SampleBuilder::new(&records, &names, cfg.design());
    let sample = builder.build()?;
    let main = timings.stage("main", || dml_atet(&sample, &dml))?;
    let linear = if cfg.linear {
        Some(timings.stage("linear", || linear_did(&sample))?)
    } else {
        None
    };
    let placebos = timings.stage("placebo", || {
        cfg.placebo_shifts
            .iter()
            .map(|&shift| Ok(Shifted { shift, result: placebo_reform(&builder, shift, &dml)? }))
            .collect::<didpanel::Result<Vec<_>>>()
    })?;
    let windows = timings.stage("windows", || {
        cfg.windows
            .iter()
            .map(|&window| Ok(Windowed { window, result: shrink_window(&builder, window, &dml)? }))
            .collect::<didpanel::Result<Vec<_>>>()
    })?;

    let file = AtetFile {
        design: cfg.design(),
        covariates: names.clone(),
        n: sample.len(),
        cells: sample.cell_counts(),
        main,
        linear,
        placebos,
        windows,
    };
    out.write_json("atet.json", &file)?;
    let summary = json!({
        "n": file.n,
        "theta": file.main.theta,
        "se": file.main.se,
        "n_trimmed": file.main.n_trimmed,
        "placebo_blocks": file.placebos.len(),
        "window_blocks": file.windows.len(),
    });
    write_report(
        &out,
        ReportParts {
            command: "dml",
            config: &cfg,
            summary,
            skipped_cells: json!([]),
            diagnostics: &diagnostics,
        },
        timings,
    )?;
    Ok(())
}
