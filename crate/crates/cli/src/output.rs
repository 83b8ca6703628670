//! File output and the run manifest. All writes go through one [`Outputs`]
//! on the main thread, after any parallel work has finished.

use std::path::{Path, PathBuf};
use std::time::Instant;

use becsim_core::config::ConfigFile;
use becsim_core::verify::{worst, Check, Status};
use serde::Serialize;

use crate::CliError;

pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'static str,
    pub config_path: Option<String>,
    /// The parsed configuration with defaults filled in.
    pub config: Option<&'a ConfigFile>,
    pub tol_scale: f64,
    pub wall_clock_seconds: f64,
    pub files: Vec<String>,
    pub status: Status,
    pub checks: Vec<Check>,
    pub details: serde_json::Value,
}

pub struct ManifestInput<'a> {
    pub command: &'a str,
    pub config_path: Option<&'a Path>,
    pub config: Option<&'a ConfigFile>,
    pub tol_scale: f64,
    pub started: Instant,
    pub checks: Vec<Check>,
    pub details: serde_json::Value,
}

/// Writes `<stem>_manifest.json` listing every file written so far, and
/// returns the overall status.
pub fn finish(out: &mut Outputs, stem: &str, input: ManifestInput) -> Result<Status, CliError> {
    let name = format!("{stem}_manifest.json");
    let mut files = out.files.clone();
    files.push(name.clone());
    let status = worst(&input.checks);
    let manifest = Manifest {
        command: input.command,
        version: env!("CARGO_PKG_VERSION"),
        config_path: input.config_path.map(|p| p.display().to_string()),
        config: input.config,
        tol_scale: input.tol_scale,
        wall_clock_seconds: input.started.elapsed().as_secs_f64(),
        files,
        status,
        checks: input.checks,
        details: input.details,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Io(format!("cannot encode manifest: {e}")))?;
    out.write(&name, &text)?;
    Ok(status)
}

/// Prefixes check names, e.g. with the run they belong to.
pub fn prefixed(prefix: &str, checks: Vec<Check>) -> Vec<Check> {
    checks
        .into_iter()
        .map(|mut c| {
            c.name = format!("{prefix}_{}", c.name);
            c
        })
        .collect()
}

pub fn print_checks(checks: &[Check]) {
    for c in checks {
        println!(
            "{:<5} {} = {:?} ({} {:?})",
            c.status.as_str(),
            c.name,
            c.value,
            c.relation,
            c.limit
        );
    }
}
