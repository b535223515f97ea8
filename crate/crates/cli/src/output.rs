//! Rendering and atomic writing of command outputs.

use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Table,
}

pub struct Artifact {
    pub name: &'static str,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: &'static str, bytes: Vec<u8>) -> Self {
        Self { name, bytes }
    }
}

pub enum Verdict {
    Ok,
    /// Exit 1.
    CheckFailed(String),
    /// Exit 3, after the report is written.
    RuntimeFailed(String),
}

/// What a command produced. A single artifact goes to `--out` as a file
/// (or stdout); several go into `--out` as a directory.
pub struct Run {
    pub artifacts: Vec<Artifact>,
    pub single: bool,
    pub summary: Vec<String>,
    pub verdict: Verdict,
}

impl Run {
    pub fn single(bytes: Vec<u8>, summary: Vec<String>) -> Self {
        Self { artifacts: vec![Artifact::new("out", bytes)], single: true, summary, verdict: Verdict::Ok }
    }

    pub fn multi(artifacts: Vec<Artifact>, summary: Vec<String>) -> Self {
        Self { artifacts, single: false, summary, verdict: Verdict::Ok }
    }

    pub fn check_failure(mut self, why: &str) -> Self {
        self.verdict = Verdict::CheckFailed(why.into());
        self
    }

    pub fn runtime_failure(mut self, why: &str) -> Self {
        self.verdict = Verdict::RuntimeFailed(why.into());
        self
    }

    /// Writes every artifact. With several artifacts and no `--out`, only
    /// the first goes to stdout.
    pub fn emit(&self, out: Option<&Path>) -> Result<(), CliError> {
        match out {
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(&self.artifacts[0].bytes)?;
                stdout.flush()?;
            }
            Some(path) if self.single => write_atomic(path, &self.artifacts[0].bytes)?,
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                // stage everything before the first rename
                let staged = self
                    .artifacts
                    .iter()
                    .map(|a| stage(dir, &a.bytes).map(|t| (t, dir.join(a.name))))
                    .collect::<Result<Vec<_>, _>>()?;
                for (tmp, dest) in staged {
                    tmp.persist(dest).map_err(|e| e.error)?;
                }
            }
        }
        Ok(())
    }
}

fn stage(dir: &Path, bytes: &[u8]) -> std::io::Result<tempfile::NamedTempFile> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    Ok(tmp)
}

/// Temp file in the destination directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    stage(dir, bytes)?.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| CliError::Runtime(e.into()))?;
    v.push(b'\n');
    Ok(v)
}

pub fn csv_bytes<const N: usize>(header: [&str; N], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let map = |e: csv::Error| CliError::Runtime(e.into());
    w.write_record(header).map_err(map)?;
    for r in rows {
        w.write_record(&r).map_err(map)?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(std::io::Error::other(e.to_string()).into()))
}

/// Left-aligned plain-text table.
pub struct Table {
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<const N: usize>(header: [&str; N]) -> Self {
        Self { rows: vec![header.iter().map(|s| s.to_string()).collect()] }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let cols = self.rows.iter().map(Vec::len).max().unwrap_or(0);
        let widths: Vec<usize> = (0..cols)
            .map(|c| self.rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &self.rows {
            let line: Vec<String> = r.iter().enumerate().map(|(c, s)| format!("{s:<w$}", w = widths[c])).collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}
