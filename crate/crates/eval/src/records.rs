//! Attempt records and the append-only JSON-lines log.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One benchmark attempt. Field order is the canonical serialization order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: String,
    pub mode: String,
    pub query: String,
    pub attempt: usize,
    pub success: bool,
    pub precision: bool,
    pub tokens: u64,
    pub function_calls: u64,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
}

pub type RecordKey = (String, String, String, usize);

impl RunRecord {
    pub fn key(&self) -> RecordKey {
        (self.model.clone(), self.mode.clone(), self.query.clone(), self.attempt)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("record file {path}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RecordError + '_ {
    move |source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a records file. A missing file is empty; a torn final line from an
/// interrupted write is dropped.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, RecordError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(io_err(path))?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if Some(i) == last => break,
            Err(e) => {
                return Err(RecordError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Sorts records into canonical order and drops duplicate keys, keeping the first.
pub fn canonical(mut records: Vec<RunRecord>) -> Vec<RunRecord> {
    let mut seen = BTreeSet::new();
    records.retain(|r| seen.insert(r.key()));
    records.sort_by_key(|a| a.key());
    records
}

/// Serializes records, one per line.
pub fn render_lines(records: &[RunRecord]) -> String {
    records.iter().map(|r| r.to_line() + "\n").collect()
}

/// Writes `contents` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

/// Append-only writer shared between worker threads.
#[derive(Debug)]
pub struct RecordLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl RecordLog {
    /// Opens `path` for appending and returns the records already in it.
    pub fn open(path: &Path) -> Result<(Self, Vec<RunRecord>), RecordError> {
        let existing = read_records(path)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(path))?;
        }
        // Drop any torn tail before appending.
        write_atomic(path, &render_lines(&existing)).map_err(io_err(path))?;
        let file = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
        Ok((
            Self {
                path: path.to_path_buf(),
                file: Mutex::new(file),
            },
            existing,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &RunRecord) -> Result<(), RecordError> {
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        writeln!(file, "{}", record.to_line())
            .and_then(|_| file.flush())
            .map_err(io_err(&self.path))
    }

    /// Rewrites the file in canonical order.
    pub fn finish(self, records: &[RunRecord]) -> Result<(), RecordError> {
        drop(self.file);
        write_atomic(&self.path, &render_lines(records)).map_err(io_err(&self.path))
    }
}
