//! Config files, flag parsing helpers and panel loading shared by the
//! subcommands.

use std::collections::HashSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use didpanel::panel::io::{read_claims, read_units};
use didpanel::panel::{build_panel, MonthRange, Panel, SampleFilter};
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::error::CliError;

/// Reads a JSON config file. Returns the parsed config and whether the file
/// set `seed` itself.
pub fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<(T, bool), CliError> {
    let Some(path) = path else {
        return Ok((T::default(), false));
    };
    let file = open(path)?;
    let raw: Value = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let has_seed = raw.get("seed").is_some_and(|v| !v.is_null());
    let cfg = serde_json::from_value(raw).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok((cfg, has_seed))
}

pub fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::config(format!("cannot open {}: {e}", path.display())))
}

/// The flag (or `DIDPANEL_SEED`) wins over the config file; one of them is
/// required.
pub fn resolve_seed(flag: Option<u64>, from_file: Option<u64>) -> Result<u64, CliError> {
    flag.or(from_file)
        .ok_or_else(|| CliError::config("a seed is required: pass --seed, set DIDPANEL_SEED or add \"seed\" to the config"))
}

/// Parses `lo:hi`.
pub fn parse_range<T: std::str::FromStr>(s: &str) -> Result<(T, T), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<T>().map_err(|_| format!("cannot parse {v:?} in {s:?}"));
    Ok((p(a)?, p(b)?))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::config(format!("filter {key}: expected true or false, got {v:?}"))),
    }
}

/// Builds the unit filter from the default age range and `key=value`
/// expressions such as `employed=true` or `birth_year=1985:1990`.
pub fn sample_filter(age_range: Option<(f64, f64)>, exprs: &[String]) -> Result<SampleFilter, CliError> {
    let mut f = SampleFilter {
        age_at_first_birth: age_range,
        ..SampleFilter::none()
    };
    for e in exprs {
        let (key, value) = e
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("filter {e:?}: expected key=value")))?;
        let key = key.trim();
        let range_err = |m: String| CliError::config(format!("filter {key}: {m}"));
        match key {
            "employed" => f.employed = Some(parse_bool(key, value)?),
            "subsidy" => f.subsidy = Some(parse_bool(key, value)?),
            "cesarean" => f.cesarean = Some(parse_bool(key, value)?),
            "age" => f.age_at_first_birth = Some(parse_range(value).map_err(range_err)?),
            "birth_year" => f.birth_years = Some(parse_range(value).map_err(range_err)?),
            other => {
                return Err(CliError::config(format!(
                    "unknown filter key {other:?}; use employed, subsidy, cesarean, age or birth_year"
                )))
            }
        }
    }
    Ok(f)
}

pub struct PanelSource<'a> {
    pub claims: Option<&'a PathBuf>,
    pub units: Option<&'a PathBuf>,
    pub window: Option<(i32, i32)>,
    pub balanced: bool,
    pub filter: SampleFilter,
}

pub struct LoadedPanel {
    pub panel: Panel,
    pub input_units: usize,
    pub filtered_out: usize,
    pub diagnostics: Vec<String>,
}

/// Reads claims and units, applies the unit filter and builds the panel.
/// Without an explicit window, the span of claim months is used.
pub fn load_panel(src: PanelSource<'_>) -> Result<LoadedPanel, CliError> {
    let claims_path = src.claims.ok_or_else(|| CliError::config("missing claims file (--claims)"))?;
    let units_path = src.units.ok_or_else(|| CliError::config("missing units file (--units)"))?;
    let claims = read_claims(std::io::BufReader::new(open(claims_path)?))?;
    let units = read_units(std::io::BufReader::new(open(units_path)?))?;
    let input_units = units.len();
    let (kept, excluded) = src.filter.apply(&units);
    let ids: HashSet<&str> = kept.iter().map(|u| u.unit_id.as_str()).collect();
    let claims: Vec<_> = claims.into_iter().filter(|c| ids.contains(c.unit_id.as_str())).collect();
    let window = match src.window {
        Some((lo, hi)) => MonthRange::new(lo, hi)?,
        None => {
            let lo = claims.iter().map(|c| c.month).min();
            let hi = claims.iter().map(|c| c.month).max();
            match (lo, hi) {
                (Some(lo), Some(hi)) => MonthRange { lo, hi },
                _ => return Err(CliError::data("no claims for the selected units; cannot infer the window")),
            }
        }
    };
    let panel = build_panel(&claims, &kept, window, src.balanced)?;
    let mut diagnostics = Vec::new();
    if !excluded.is_empty() {
        diagnostics.push(format!("{} units excluded by the sample filter", excluded.len()));
    }
    diagnostics.extend(panel.diagnostics.iter().cloned());
    Ok(LoadedPanel {
        panel,
        input_units,
        filtered_out: excluded.len(),
        diagnostics,
    })
}
