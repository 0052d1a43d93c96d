//! Report files: never overwritten, always stamped with the effective config and version.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

pub const TOOL: &str = "sqlbalance";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Opens `path` for writing, refusing to replace an existing file.
pub fn create_new(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    match OpenOptions::new().write(true).create_new(true).open(path) {
        Ok(f) => Ok(BufWriter::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
            bail!("refusing to overwrite existing file {}", path.display())
        }
        Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = create_new(path)?;
    w.write_all(bytes)?;
    w.flush().with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a RunConfig,
    result: &'a T,
}

pub fn render_report<T: Serialize>(command: &str, config: &RunConfig, result: &T) -> Result<String> {
    let env = Envelope {
        tool: TOOL,
        version: VERSION,
        command,
        config,
        result,
    };
    let mut s = serde_json::to_string_pretty(&env)?;
    s.push('\n');
    Ok(s)
}

/// Writes `<report_dir>/<command>.json` when a report directory is configured, otherwise prints
/// the report to `stdout`. Returns the path written, if any.
pub fn emit_report<T: Serialize>(
    command: &str,
    config: &RunConfig,
    result: &T,
    stdout: &mut dyn Write,
) -> Result<Option<PathBuf>> {
    let text = render_report(command, config, result)?;
    match &config.paths.report_dir {
        Some(dir) => {
            let path = dir.join(format!("{command}.json"));
            write_bytes(&path, text.as_bytes())?;
            Ok(Some(path))
        }
        None => {
            stdout.write_all(text.as_bytes())?;
            Ok(None)
        }
    }
}

/// Writes a CSV file from a header and string rows.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create_new(path)?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

pub fn fmt_f(x: f64) -> String {
    format!("{x:.6}")
}
