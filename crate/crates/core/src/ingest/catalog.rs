//! Run discovery and incremental re-scanning of a log directory.
//!
//! An [`Ingestor`] remembers, per file, how far it has read. Each call to
//! [`Ingestor::rescan`] consumes only newly appended bytes and publishes a
//! fresh immutable [`RunCatalog`] snapshot. Readers holding an older snapshot
//! are never affected.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{debug, warn};
use serde::Serialize;

use super::event::decode_event;
use super::frame::{FrameError, FrameReader};
use super::predictions::{parse_line, LineError, PredictionRecord, PREDICTIONS_FILE};
use crate::aggregation::{ScalarPoint, ScalarSeries};

pub const CONFIG_FILE: &str = "config.json";

/// Upper bound on individual line errors retained per run; the count is always exact.
const MAX_LINE_ERRORS: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{0} is not a directory")]
    NotADirectory(PathBuf),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl IngestError {
    pub fn code(&self) -> &'static str {
        match self {
            IngestError::NotADirectory(_) => "NOT_A_DIRECTORY",
            IngestError::Io(_) => "IO_ERROR",
        }
    }
}

/// A problem with one file, surfaced rather than aborting the scan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileWarning {
    pub file: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunHealth {
    pub event_files: usize,
    pub events_read: u64,
    /// Scalar values dropped because they were NaN or infinite.
    pub dropped_non_finite: u64,
    /// Prediction-log lines rejected during parsing.
    pub skipped_lines: usize,
    pub line_errors: Vec<LineError>,
    pub warnings: Vec<FileWarning>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub run_id: String,
    pub series: BTreeMap<String, ScalarSeries>,
    pub predictions: Arc<Vec<PredictionRecord>>,
    pub config: BTreeMap<String, String>,
    pub health: RunHealth,
}

impl Run {
    pub fn scalar_tags(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunCatalog {
    runs: BTreeMap<String, Arc<Run>>,
    /// Monotonic snapshot counter; changes whenever any run changes.
    pub version: u64,
    pub warnings: Vec<FileWarning>,
}

impl RunCatalog {
    pub fn from_runs(runs: impl IntoIterator<Item = Run>) -> Self {
        Self {
            runs: runs.into_iter().map(|r| (r.run_id.clone(), Arc::new(r))).collect(),
            version: 0,
            warnings: Vec::new(),
        }
    }

    pub fn get(&self, run_id: &str) -> Option<&Arc<Run>> {
        self.runs.get(run_id)
    }

    /// Runs in `run_id` order.
    pub fn runs(&self) -> impl Iterator<Item = &Arc<Run>> {
        self.runs.values()
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn series(&self, run_id: &str, tag: &str) -> Option<&ScalarSeries> {
        self.runs.get(run_id)?.series.get(tag)
    }
}

/// Scans `root` once and returns the resulting catalog.
pub fn discover_runs(root: impl AsRef<Path>) -> Result<RunCatalog, IngestError> {
    let mut ingestor = Ingestor::new(root)?;
    ingestor.rescan()?;
    Ok(ingestor.snapshot())
}

/// Reads a single run directory, named after its last path component.
pub fn load_run(dir: impl AsRef<Path>) -> Result<Run, IngestError> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(IngestError::NotADirectory(dir.to_path_buf()));
    }
    let run_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut state = RunState::default();
    state.scan(dir, &list_run_files(dir)?);
    Ok(state.build(&run_id))
}

pub fn is_event_file(name: &str) -> bool {
    name.contains("tfevents")
}

#[derive(Debug, Default)]
struct EventFileState {
    offset: u64,
    dead: bool,
}

#[derive(Debug, Default)]
struct RunState {
    event_files: BTreeMap<String, EventFileState>,
    points: BTreeMap<String, BTreeMap<u64, (f64, f64)>>,
    predictions: Arc<Vec<PredictionRecord>>,
    predictions_offset: u64,
    predictions_lines: usize,
    config: BTreeMap<String, String>,
    health: RunHealth,
    cached: Option<Arc<Run>>,
}

impl RunState {
    fn build(&self, run_id: &str) -> Run {
        let series = self
            .points
            .iter()
            .map(|(tag, pts)| {
                let points = pts
                    .iter()
                    .map(|(&step, &(wall_time, value))| ScalarPoint { step, wall_time, value })
                    .collect();
                (tag.clone(), ScalarSeries::new(tag.clone(), points))
            })
            .collect();
        Run {
            run_id: run_id.to_owned(),
            series,
            predictions: Arc::clone(&self.predictions),
            config: self.config.clone(),
            health: self.health.clone(),
        }
    }

    /// Consumes new data from every file of one run directory.
    fn scan(&mut self, dir: &Path, listing: &RunListing) -> bool {
        let mut changed = false;
        self.health.event_files = listing.event_files.len();
        for name in &listing.event_files {
            changed |= self.ingest_event_file(name, &dir.join(name));
        }
        if listing.has_predictions {
            match self.ingest_predictions(&dir.join(PREDICTIONS_FILE)) {
                Ok(c) => changed |= c,
                Err(e) => {
                    self.warn(PREDICTIONS_FILE, "IO_ERROR", e.to_string());
                    changed = true;
                }
            }
        }
        changed | self.load_config(&dir.join(CONFIG_FILE))
    }

    fn warn(&mut self, file: &str, code: &str, message: String) {
        warn!("{file}: {message}");
        let w = FileWarning {
            file: file.to_owned(),
            code: code.to_owned(),
            message,
        };
        if !self.health.warnings.contains(&w) {
            self.health.warnings.push(w);
        }
    }

    /// Reads newly appended frames from one event file. Returns whether anything changed.
    fn ingest_event_file(&mut self, name: &str, path: &Path) -> bool {
        let state = self.event_files.entry(name.to_owned()).or_default();
        if state.dead {
            return false;
        }
        let start = state.offset;
        let opened = File::open(path).and_then(|mut f| {
            f.seek(SeekFrom::Start(start))?;
            Ok(f)
        });
        let file = match opened {
            Ok(f) => f,
            Err(e) => {
                state.dead = true;
                self.warn(name, "IO_ERROR", e.to_string());
                return true;
            }
        };
        let mut reader = FrameReader::resume(io::BufReader::new(file), start);
        let mut changed = false;
        let mut failure = None;
        for frame in reader.by_ref() {
            let frame = match frame {
                Ok(f) => f,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            };
            changed = true;
            self.health.events_read += 1;
            match decode_event(&frame.payload) {
                Ok(decoded) => {
                    self.health.dropped_non_finite += decoded.non_finite as u64;
                    for ev in decoded.scalars {
                        self.points
                            .entry(ev.tag)
                            .or_default()
                            .insert(ev.step, (ev.wall_time, ev.value));
                    }
                }
                Err(e) => {
                    let msg = format!("frame at offset {}: {e}", frame.offset);
                    self.warn(name, e.code(), msg);
                }
            }
        }
        let offset = reader.offset();
        let state = self.event_files.get_mut(name).expect("inserted above");
        state.offset = offset;
        if let Some(e) = failure {
            state.dead = true;
            let code = e.code();
            let msg = match &e {
                FrameError::CrcMismatch { .. } => e.to_string(),
                FrameError::Io(io) => format!("read failed after offset {offset}: {io}"),
            };
            self.warn(name, code, msg);
            changed = true;
        }
        changed
    }

    /// Consumes complete, newly appended lines of the prediction log.
    fn ingest_predictions(&mut self, path: &Path) -> io::Result<bool> {
        let mut file = File::open(path)?;
        let len = file.metadata()?.len();
        if len <= self.predictions_offset {
            return Ok(false);
        }
        file.seek(SeekFrom::Start(self.predictions_offset))?;
        let mut buf = Vec::with_capacity((len - self.predictions_offset) as usize);
        file.take(len - self.predictions_offset).read_to_end(&mut buf)?;
        let Some(last_newline) = buf.iter().rposition(|&b| b == b'\n') else {
            return Ok(false);
        };
        let complete = &buf[..=last_newline];
        let mut new_records = Vec::new();
        let mut reader = BufReader::new(complete);
        let mut text = String::new();
        loop {
            text.clear();
            if reader.read_line(&mut text)? == 0 {
                break;
            }
            self.predictions_lines += 1;
            match parse_line(&text) {
                Ok(Some(r)) => new_records.push(r),
                Ok(None) => {}
                Err(reason) => {
                    self.health.skipped_lines += 1;
                    if self.health.line_errors.len() < MAX_LINE_ERRORS {
                        self.health.line_errors.push(LineError {
                            line_no: self.predictions_lines,
                            reason,
                        });
                    }
                }
            }
        }
        self.predictions_offset += complete.len() as u64;
        Arc::make_mut(&mut self.predictions).extend(new_records);
        Ok(true)
    }

    fn load_config(&mut self, path: &Path) -> bool {
        let config = match fs::read(path) {
            Ok(bytes) => match serde_json::from_slice::<BTreeMap<String, serde_json::Value>>(&bytes) {
                Ok(map) => map
                    .into_iter()
                    .map(|(k, v)| {
                        let s = match v {
                            serde_json::Value::String(s) => s,
                            other => other.to_string(),
                        };
                        (k, s)
                    })
                    .collect(),
                Err(e) => {
                    self.warn(CONFIG_FILE, "BAD_CONFIG", e.to_string());
                    BTreeMap::new()
                }
            },
            Err(e) if e.kind() == io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => {
                self.warn(CONFIG_FILE, "IO_ERROR", e.to_string());
                BTreeMap::new()
            }
        };
        if config != self.config {
            self.config = config;
            true
        } else {
            false
        }
    }
}

/// Incremental scanner over a log directory.
#[derive(Debug)]
pub struct Ingestor {
    root: PathBuf,
    runs: BTreeMap<String, RunState>,
    version: u64,
    warnings: Vec<FileWarning>,
    snapshot: Arc<RunCatalog>,
}

impl Ingestor {
    pub fn new(root: impl AsRef<Path>) -> Result<Self, IngestError> {
        let root = root.as_ref().to_path_buf();
        if !root.is_dir() {
            return Err(IngestError::NotADirectory(root));
        }
        Ok(Self {
            root,
            runs: BTreeMap::new(),
            version: 0,
            warnings: Vec::new(),
            snapshot: Arc::new(RunCatalog::default()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// The most recently published snapshot.
    pub fn snapshot(&self) -> RunCatalog {
        (*self.snapshot).clone()
    }

    pub fn shared_snapshot(&self) -> Arc<RunCatalog> {
        Arc::clone(&self.snapshot)
    }

    /// Reads any new data under the root. Returns the new snapshot if anything changed.
    pub fn rescan(&mut self) -> Result<Option<Arc<RunCatalog>>, IngestError> {
        if !self.root.is_dir() {
            return Err(IngestError::NotADirectory(self.root.clone()));
        }
        let mut warnings = Vec::new();
        let mut changed_any = false;
        let mut entries: Vec<(String, PathBuf)> = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            let path = entry.path();
            if path.is_dir() {
                entries.push((entry.file_name().to_string_lossy().into_owned(), path));
            }
        }
        entries.sort();

        let mut seen = BTreeSet::new();
        for (run_id, dir) in entries {
            let listing = match list_run_files(&dir) {
                Ok(l) => l,
                Err(e) => {
                    warnings.push(FileWarning {
                        file: run_id.clone(),
                        code: "IO_ERROR".into(),
                        message: format!("unreadable run directory: {e}"),
                    });
                    continue;
                }
            };
            if listing.event_files.is_empty() && !listing.has_predictions {
                continue;
            }
            seen.insert(run_id.clone());
            let state = self.runs.entry(run_id.clone()).or_default();
            let changed = state.scan(&dir, &listing) | state.cached.is_none();
            if changed {
                debug!("run {run_id} changed");
                state.cached = Some(Arc::new(state.build(&run_id)));
                changed_any = true;
            }
        }
        let before = self.runs.len();
        self.runs.retain(|id, _| seen.contains(id));
        changed_any |= self.runs.len() != before;
        changed_any |= warnings != self.warnings;
        self.warnings = warnings;

        if !changed_any && self.version > 0 {
            return Ok(None);
        }
        self.version += 1;
        let catalog = RunCatalog {
            runs: self
                .runs
                .iter()
                .map(|(id, s)| (id.clone(), Arc::clone(s.cached.as_ref().expect("built on first scan"))))
                .collect(),
            version: self.version,
            warnings: self.warnings.clone(),
        };
        self.snapshot = Arc::new(catalog);
        Ok(Some(Arc::clone(&self.snapshot)))
    }
}

struct RunListing {
    event_files: Vec<String>,
    has_predictions: bool,
}

fn list_run_files(dir: &Path) -> io::Result<RunListing> {
    let mut event_files = Vec::new();
    let mut has_predictions = false;
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if is_event_file(&name) {
            event_files.push(name);
        } else if name == PREDICTIONS_FILE {
            has_predictions = true;
        }
    }
    event_files.sort();
    Ok(RunListing {
        event_files,
        has_predictions,
    })
}
