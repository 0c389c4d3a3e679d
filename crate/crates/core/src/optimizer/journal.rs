//! `study.jsonl`: a header line followed by one trial record per line.
//!
//! The file is append-only and guarded by a sibling `.lock` file holding
//! the owner's pid. A lock whose pid no longer exists (checked through
//! `/proc` where available) is treated as stale and taken over.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{OptimizerError, Study, TpeSettings, TrialRecord};
use crate::evaluation::Metric;
use crate::space::{PipelineConfig, SearchSpace};

const FORMAT: &str = "graphtune-study";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: line {line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
    #[error("{0} is locked by another running process (pid {1})")]
    Locked(String, String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> JournalError + '_ {
    move |source| JournalError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyHeader {
    pub format: String,
    pub version: u32,
    pub study_id: String,
    pub metric: Metric,
    pub seed: u64,
    pub space: SearchSpace,
    pub base: PipelineConfig,
    pub settings: TpeSettings,
}

impl StudyHeader {
    pub fn new(study_id: &str, space: SearchSpace, metric: Metric, seed: u64, base: PipelineConfig, settings: TpeSettings) -> Self {
        StudyHeader { format: FORMAT.into(), version: VERSION, study_id: study_id.into(), metric, seed, space, base, settings }
    }
}

#[derive(Debug)]
struct Lock {
    path: PathBuf,
}

fn pid_alive(pid: &str) -> bool {
    let proc_root = Path::new("/proc");
    if !proc_root.is_dir() {
        return true;
    }
    pid.trim().parse::<u32>().map(|p| proc_root.join(p.to_string()).exists()).unwrap_or(false)
}

impl Lock {
    fn acquire(journal: &Path) -> Result<Lock, JournalError> {
        let path = PathBuf::from(format!("{}.lock", journal.display()));
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    write!(f, "{}", std::process::id()).map_err(io(&path))?;
                    return Ok(Lock { path });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let owner = std::fs::read_to_string(&path).unwrap_or_default();
                    if pid_alive(&owner) {
                        return Err(JournalError::Locked(journal.display().to_string(), owner.trim().to_string()));
                    }
                    log::warn!("removing stale lock {} (pid {})", path.display(), owner.trim());
                    std::fs::remove_file(&path).map_err(io(&path))?;
                }
                Err(e) => return Err(io(&path)(e)),
            }
        }
        Err(JournalError::Locked(journal.display().to_string(), "unknown".into()))
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[derive(Debug)]
pub(super) struct Journal {
    path: PathBuf,
    file: File,
    _lock: Lock,
}

impl Journal {
    pub(super) fn append(&mut self, record: &TrialRecord) -> Result<(), JournalError> {
        let line = serde_json::to_string(record).expect("trial record serializes");
        writeln!(self.file, "{line}").and_then(|_| self.file.flush()).map_err(io(&self.path))
    }
}

impl Study {
    /// Starts a fresh journal at `path` (replacing any file there) holding
    /// the header and the trials recorded so far.
    pub fn persist_to(&mut self, path: &Path) -> Result<(), OptimizerError> {
        let lock = Lock::acquire(path)?;
        let mut text = serde_json::to_string(&self.header).expect("header serializes") + "\n";
        for t in &self.trials {
            text += &(serde_json::to_string(t).expect("trial record serializes") + "\n");
        }
        let tmp = PathBuf::from(format!("{}.tmp", path.display()));
        std::fs::write(&tmp, text).map_err(io(&tmp))?;
        std::fs::rename(&tmp, path).map_err(io(path))?;
        let file = OpenOptions::new().append(true).open(path).map_err(io(path))?;
        self.journal = Some(Journal { path: path.to_path_buf(), file, _lock: lock });
        Ok(())
    }

    /// Reopens a journal for appending. A final line cut short by an
    /// interrupted write is dropped.
    pub fn open(path: &Path) -> Result<Study, OptimizerError> {
        let lock = Lock::acquire(path)?;
        let text = std::fs::read_to_string(path).map_err(io(path))?;
        let corrupt = |line: usize, message: String| JournalError::Corrupt { path: path.display().to_string(), line, message };
        let lines: Vec<&str> = text.lines().collect();
        let header: StudyHeader = serde_json::from_str(lines.first().ok_or_else(|| corrupt(1, "empty file".into()))?)
            .map_err(|e| corrupt(1, e.to_string()))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(corrupt(1, format!("unsupported header {} v{}", header.format, header.version)).into());
        }
        header.settings.validate().map_err(OptimizerError::Settings)?;
        let mut trials = Vec::new();
        let mut truncated = false;
        for (i, line) in lines.iter().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<TrialRecord>(line) {
                Ok(t) if t.trial_index == trials.len() => trials.push(t),
                Ok(t) => return Err(corrupt(i + 1, format!("expected trial {}, found {}", trials.len(), t.trial_index)).into()),
                Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {
                    log::warn!("{}: dropping incomplete final record", path.display());
                    truncated = true;
                }
                Err(e) => return Err(corrupt(i + 1, e.to_string()).into()),
            }
        }
        let mut study = Study { header, trials, closed: false, journal: None };
        if truncated {
            drop(lock);
            study.persist_to(path)?;
            return Ok(study);
        }
        let file = OpenOptions::new().append(true).open(path).map_err(io(path))?;
        study.journal = Some(Journal { path: path.to_path_buf(), file, _lock: lock });
        Ok(study)
    }
}
