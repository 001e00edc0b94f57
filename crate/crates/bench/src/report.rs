//! Machine-readable output: JSON arrays or CSV rows of flat records.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use serde::Serialize;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "RNSCKKS_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

/// Serializes `rows` in the requested format.
pub fn render<T: Serialize>(rows: &[T], format: Format) -> Result<Vec<u8>> {
    Ok(match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(rows)?;
            out.push(b'\n');
            out
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r)?;
            }
            w.into_inner().context("flushing CSV")?
        }
    })
}

/// Where a report goes: the explicit path, else `$RNSCKKS_OUT_DIR/<stem>.<ext>`,
/// else standard output (`None`).
pub fn destination(out: Option<&Path>, stem: &str, extension: &str) -> Option<PathBuf> {
    if let Some(p) = out {
        return Some(p.to_path_buf());
    }
    std::env::var_os(OUT_DIR_ENV).map(|dir| Path::new(&dir).join(format!("{stem}.{extension}")))
}

pub fn emit(bytes: &[u8], dest: Option<&Path>) -> Result<()> {
    match dest {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?;
            log::info!("wrote {}", p.display());
        }
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}
