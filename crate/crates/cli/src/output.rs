//! CSV artifacts with a reproducibility sidecar (`<file>.meta.json`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

pub const TOOL: &str = "aojc";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance shared by every artifact of one command invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_id: String,
    pub config_sha256: String,
    pub master_seed: u64,
}

impl RunMeta {
    pub fn new(command: &str, config_id: &str, config_sha256: &str, master_seed: u64) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            command: command.into(),
            config_id: config_id.into(),
            config_sha256: config_sha256.into(),
            master_seed,
        }
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    #[serde(flatten)]
    meta: &'a RunMeta,
    file: String,
    rows: usize,
}

/// An in-memory table written in one go.
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, dir: &Path, name: &str, meta: &RunMeta) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        write_sidecar(&path, meta, self.rows.len())?;
        Ok(path)
    }
}

/// Writes a pretty-printed JSON artifact plus its sidecar.
pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, meta: &RunMeta) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text)?;
    write_sidecar(&path, meta, 1)?;
    Ok(path)
}

fn write_sidecar(path: &Path, meta: &RunMeta, rows: usize) -> Result<()> {
    let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let side = Sidecar { meta, file: file.clone(), rows };
    let mut text = serde_json::to_string_pretty(&side)?;
    text.push('\n');
    fs::write(path.with_file_name(format!("{file}.meta.json")), text)?;
    Ok(())
}

/// Shortest round-trip formatting, so identical values give identical
/// bytes.
pub fn f(x: f64) -> String {
    format!("{x}")
}
