//! Line-delimited JSON corpus files.
//!
//! A corpus `c.jsonl` holds one accepted record per line. Rejected attempts
//! go to `c.rejects.jsonl` and the run manifest to `c.manifest.json`. Records
//! share one id space across both files; ids are strictly increasing within
//! each.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::metrics::{DigitSequence, MetricError};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: digits field has {found:?} at position {position}, expected 0-9")]
    DigitRange {
        line: usize,
        position: usize,
        found: char,
    },
    #[error("line {line}: id {id} does not follow previous id {previous}")]
    IdOrder { line: usize, id: u64, previous: u64 },
    #[error("line {line}: unsupported format_version {found} (expected {FORMAT_VERSION})")]
    Version { line: usize, found: u32 },
    #[error("line {line}: accepted record has no digits")]
    EmptyDigits { line: usize },
}

impl CorpusError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One accepted sequence with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub format_version: u32,
    pub id: u64,
    pub source_tag: String,
    pub requested_length: Option<usize>,
    pub raw_text: Option<String>,
    pub digits: DigitSequence,
    pub created_at: DateTime<Utc>,
    pub meta: Map<String, Value>,
}

/// An attempt that produced no usable sequence, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRecord {
    pub format_version: u32,
    pub id: u64,
    pub source_tag: String,
    pub requested_length: Option<usize>,
    pub raw_text: Option<String>,
    pub reason: String,
    pub created_at: DateTime<Utc>,
    pub meta: Map<String, Value>,
}

/// Wire form of [`CorpusRecord`], with digits kept as text so range
/// violations can be reported with their position.
#[derive(Deserialize)]
struct RawRecord {
    format_version: u32,
    id: u64,
    source_tag: String,
    requested_length: Option<usize>,
    raw_text: Option<String>,
    digits: String,
    created_at: DateTime<Utc>,
    meta: Map<String, Value>,
}

impl CorpusRecord {
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("corpus records always serialize");
        line.push('\n');
        line
    }

    pub fn parse_line(text: &str, line: usize) -> Result<Self, CorpusError> {
        let raw: RawRecord = serde_json::from_str(text).map_err(|e| CorpusError::Parse {
            line,
            message: e.to_string(),
        })?;
        if raw.format_version != FORMAT_VERSION {
            return Err(CorpusError::Version {
                line,
                found: raw.format_version,
            });
        }
        let digits = DigitSequence::from_digit_str(&raw.digits).map_err(|e| match e {
            MetricError::DigitOutOfRange { position, value } => CorpusError::DigitRange {
                line,
                position,
                found: char::from_u32(value).unwrap_or(char::REPLACEMENT_CHARACTER),
            },
            other => CorpusError::Parse {
                line,
                message: other.to_string(),
            },
        })?;
        if digits.is_empty() {
            return Err(CorpusError::EmptyDigits { line });
        }
        Ok(Self {
            format_version: raw.format_version,
            id: raw.id,
            source_tag: raw.source_tag,
            requested_length: raw.requested_length,
            raw_text: raw.raw_text,
            digits,
            created_at: raw.created_at,
            meta: raw.meta,
        })
    }
}

impl RejectedRecord {
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("rejected records always serialize");
        line.push('\n');
        line
    }
}

/// File locations belonging to one corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusPaths {
    pub corpus: PathBuf,
    pub rejects: PathBuf,
    pub manifest: PathBuf,
}

impl CorpusPaths {
    pub fn for_corpus(corpus: impl Into<PathBuf>) -> Self {
        let corpus = corpus.into();
        Self {
            rejects: corpus.with_extension("rejects.jsonl"),
            manifest: corpus.with_extension("manifest.json"),
            corpus,
        }
    }
}

/// Streams records from a corpus file in order, checking the schema and id
/// ordering. Blank lines are ignored.
pub struct CorpusReader<R> {
    lines: io::Lines<BufReader<R>>,
    line: usize,
    previous_id: Option<u64>,
    path: PathBuf,
}

impl CorpusReader<File> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
        Ok(Self::new(file, path))
    }
}

impl<R: Read> CorpusReader<R> {
    pub fn new(reader: R, path: impl Into<PathBuf>) -> Self {
        Self {
            lines: BufReader::new(reader).lines(),
            line: 0,
            previous_id: None,
            path: path.into(),
        }
    }
}

impl<R: Read> Iterator for CorpusReader<R> {
    type Item = Result<CorpusRecord, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(text) => text,
                Err(e) => return Some(Err(CorpusError::io(&self.path, e))),
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            let record = match CorpusRecord::parse_line(&text, self.line) {
                Ok(r) => r,
                Err(e) => return Some(Err(e)),
            };
            if let Some(previous) = self.previous_id {
                if record.id <= previous {
                    return Some(Err(CorpusError::IdOrder {
                        line: self.line,
                        id: record.id,
                        previous,
                    }));
                }
            }
            self.previous_id = Some(record.id);
            return Some(Ok(record));
        }
    }
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusRecord>, CorpusError> {
    CorpusReader::open(path)?.collect()
}

/// Reads a rejects sidecar. A missing file means no rejections.
pub fn read_rejects(path: impl AsRef<Path>) -> Result<Vec<RejectedRecord>, CorpusError> {
    let path = path.as_ref();
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(CorpusError::io(path, e)),
    };
    let mut out: Vec<RejectedRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: RejectedRecord = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(previous) = out.last() {
            if record.id <= previous.id {
                return Err(CorpusError::IdOrder {
                    line: i + 1,
                    id: record.id,
                    previous: previous.id,
                });
            }
        }
        out.push(record);
    }
    Ok(out)
}

/// Drops an unterminated final line left behind by an interrupted write.
/// Returns whether anything was removed. A missing file is left alone.
pub fn repair_tail(path: impl AsRef<Path>) -> Result<bool, CorpusError> {
    let path = path.as_ref();
    let mut file = match OpenOptions::new().read(true).write(true).open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(false),
        Err(e) => return Err(CorpusError::io(path, e)),
    };
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(|e| CorpusError::io(path, e))?;
    if bytes.is_empty() || bytes.last() == Some(&b'\n') {
        return Ok(false);
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    file.set_len(keep as u64)
        .and_then(|_| file.seek(SeekFrom::End(0)).map(|_| ()))
        .map_err(|e| CorpusError::io(path, e))?;
    Ok(true)
}

/// Append-only writer. Each record goes out in a single `write` of one full
/// line, so an interruption loses at most the record being written.
#[derive(Debug)]
pub struct CorpusWriter {
    file: File,
    path: PathBuf,
}

impl CorpusWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn append_to(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| CorpusError::io(path, e))?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn write_line(&mut self, line: &str) -> Result<(), CorpusError> {
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| CorpusError::io(&self.path, e))
    }

    pub fn append(&mut self, record: &CorpusRecord) -> Result<(), CorpusError> {
        self.write_line(&record.to_line())
    }

    pub fn append_rejected(&mut self, record: &RejectedRecord) -> Result<(), CorpusError> {
        self.write_line(&record.to_line())
    }

    pub fn sync(&self) -> Result<(), CorpusError> {
        self.file
            .sync_data()
            .map_err(|e| CorpusError::io(&self.path, e))
    }
}

/// Appends externally produced records (e.g. human sessions) to an existing
/// or new corpus, continuing its id numbering.
#[derive(Debug)]
pub struct CorpusAppender {
    writer: CorpusWriter,
    next_id: u64,
    count: u64,
}

impl CorpusAppender {
    pub fn open(paths: &CorpusPaths) -> Result<Self, CorpusError> {
        repair_tail(&paths.corpus)?;
        let mut next_id = 0;
        let mut count = 0;
        if paths.corpus.exists() {
            for record in CorpusReader::open(&paths.corpus)? {
                next_id = record?.id + 1;
                count += 1;
            }
        }
        if let Some(last) = read_rejects(&paths.rejects)?.last() {
            next_id = next_id.max(last.id + 1);
        }
        Ok(Self {
            writer: CorpusWriter::append_to(&paths.corpus)?,
            next_id,
            count,
        })
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Assigns the next id to `record`, writes it and returns the id.
    pub fn append(&mut self, mut record: CorpusRecord) -> Result<CorpusRecord, CorpusError> {
        record.id = self.next_id;
        self.writer.append(&record)?;
        self.next_id += 1;
        self.count += 1;
        Ok(record)
    }
}
