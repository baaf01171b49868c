//! Output directory handling, atomic writes and the run report.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use tempfile::NamedTempFile;

use crate::error::CliError;

pub fn version() -> String {
    format!("{} ({})", env!("CARGO_PKG_VERSION"), env!("DIDPANEL_GIT_DESCRIBE"))
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)
            .map_err(|e| CliError::config(format!("cannot create output directory {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf() })
    }

    /// Writes through a temporary file in the same directory, then renames.
    pub fn write_with(
        &self,
        name: &str,
        fill: impl FnOnce(&mut dyn Write) -> didpanel::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let target = self.root.join(name);
        let unwritable = |e: std::io::Error| CliError::config(format!("cannot write {}: {e}", target.display()));
        let mut tmp = NamedTempFile::new_in(&self.root).map_err(unwritable)?;
        {
            let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
            fill(&mut buf)?;
            buf.flush().map_err(unwritable)?;
        }
        tmp.persist(&target).map_err(|e| unwritable(e.error))?;
        Ok(target)
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> Result<PathBuf, CliError> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }
}

/// Wall-clock time per stage; only reported when asked for, so that reports
/// stay byte-identical across reruns by default.
pub struct Timings {
    enabled: bool,
    stages: BTreeMap<String, f64>,
    started: Instant,
}

impl Timings {
    pub fn new(enabled: bool) -> Self {
        Self {
            enabled,
            stages: BTreeMap::new(),
            started: Instant::now(),
        }
    }

    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.stages.insert(name.to_string(), t.elapsed().as_secs_f64());
        out
    }

    fn finish(mut self) -> Option<BTreeMap<String, f64>> {
        self.stages.insert("total".into(), self.started.elapsed().as_secs_f64());
        self.enabled.then_some(self.stages)
    }
}

#[derive(Serialize)]
struct Report<'a, C: Serialize> {
    command: &'a str,
    version: String,
    config: &'a C,
    summary: Value,
    skipped_cells: Value,
    diagnostics: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<BTreeMap<String, f64>>,
}

pub struct ReportParts<'a, C: Serialize> {
    pub command: &'a str,
    pub config: &'a C,
    pub summary: Value,
    pub skipped_cells: Value,
    pub diagnostics: &'a [String],
}

pub fn write_report<C: Serialize>(out: &OutDir, parts: ReportParts<'_, C>, timings: Timings) -> Result<PathBuf, CliError> {
    let report = Report {
        command: parts.command,
        version: version(),
        config: parts.config,
        summary: parts.summary,
        skipped_cells: parts.skipped_cells,
        diagnostics: parts.diagnostics,
        timings: timings.finish(),
    };
    out.write_json("report.json", &report)
}
