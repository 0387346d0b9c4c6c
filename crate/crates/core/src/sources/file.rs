use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::{Draw, LengthSpec, Outcome, SequenceSource, SourceError};
use crate::corpus::{read_corpus, CorpusReader, CorpusRecord};

/// Sequences read back from a corpus file, in file order.
#[derive(Debug, Clone)]
pub struct FileSource {
    path: PathBuf,
    records: Vec<CorpusRecord>,
}

impl FileSource {
    /// Loads and validates the whole file.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, SourceError> {
        let path = path.as_ref();
        Ok(Self {
            records: read_corpus(path)?,
            path: path.to_path_buf(),
        })
    }

    /// Lazily streams records without loading the file up front.
    pub fn stream(
        path: impl AsRef<Path>,
    ) -> Result<CorpusReader<std::fs::File>, SourceError> {
        Ok(CorpusReader::open(path)?)
    }

    pub fn records(&self) -> &[CorpusRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<CorpusRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl SequenceSource for FileSource {
    fn source_tag(&self) -> String {
        "file".into()
    }

    fn seed(&self) -> Option<u64> {
        None
    }

    fn config(&self) -> Value {
        json!({ "kind": "file", "path": self.path })
    }

    fn length_spec(&self) -> Option<LengthSpec> {
        None
    }

    fn draw(&mut self, index: u64) -> Result<Draw, SourceError> {
        let record = self
            .records
            .get(index as usize)
            .ok_or(SourceError::Exhausted { index })?;
        let mut meta = record.meta.clone();
        meta.insert("origin_id".into(), record.id.into());
        meta.insert("origin_source_tag".into(), record.source_tag.clone().into());
        Ok(Draw {
            outcome: Outcome::Accepted(record.digits.clone()),
            requested_length: record.requested_length,
            raw_text: record.raw_text.clone(),
            meta,
        })
    }
}
