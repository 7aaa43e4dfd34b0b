//! Report envelopes, atomic writes and CSV rows.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "infodisc";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// What a run was asked to do. Output locations and formatting are not part
/// of it, so the same experiment written elsewhere has the same hash.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: String,
    pub seed: u64,
    pub inputs: Value,
    pub params: Value,
}

impl ExperimentConfig {
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("serializable");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// One flat CSV row: `(column, value)` in a fixed order.
pub type Row = Vec<(&'static str, String)>;

pub struct Output {
    pub config: ExperimentConfig,
    pub report: Value,
    pub rows: Vec<Row>,
    /// Exit status 1: a checked bound was violated.
    pub violation: bool,
}

impl Output {
    pub fn envelope(&self) -> Value {
        json!({
            "tool": TOOL,
            "version": VERSION,
            "command": self.config.command,
            "seed": self.config.seed,
            "config_hash": self.config.hash(),
            "config": self.config,
            "report": self.report,
        })
    }

    fn csv_header(&self) -> Vec<&'static str> {
        let mut h = vec!["version", "seed", "config_hash"];
        if let Some(r) = self.rows.first() {
            h.extend(r.iter().map(|c| c.0));
        }
        h
    }

    fn csv_records(&self) -> Vec<Vec<String>> {
        let hash = self.config.hash();
        self.rows
            .iter()
            .map(|r| {
                let mut v = vec![VERSION.to_string(), self.config.seed.to_string(), hash.clone()];
                v.extend(r.iter().map(|c| c.1.clone()));
                v
            })
            .collect()
    }

    pub fn csv_text(&self, header: bool) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if header {
            w.write_record(self.csv_header())?;
        }
        for rec in self.csv_records() {
            w.write_record(&rec)?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    pub fn json_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.envelope()).expect("serializable");
        s.push('\n');
        s
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => Ok(self.json_text()),
            Format::Csv => self.csv_text(true),
        }
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Appends rows to `path`, writing the header if the file is new. The whole
/// file is rewritten atomically.
pub fn append_csv(path: &Path, out: &Output) -> Result<()> {
    if out.rows.is_empty() {
        return Ok(());
    }
    let existing = match fs::read_to_string(path) {
        Ok(text) => Some(text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
    };
    let mut text = match existing {
        Some(mut text) => {
            let header = out.csv_text(true)?;
            let want = header.lines().next().unwrap_or_default();
            let have = text.lines().next().unwrap_or_default();
            if have != want {
                bail!("{} has columns `{have}`, expected `{want}`", path.display());
            }
            if !text.ends_with('\n') {
                text.push('\n');
            }
            text + &out.csv_text(false)?
        }
        None => out.csv_text(true)?,
    };
    if !text.ends_with('\n') {
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

pub fn fmt_set(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}
