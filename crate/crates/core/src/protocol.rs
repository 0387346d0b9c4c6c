//! Corpus collection runs: collect N accepted sequences from a source,
//! persist them record by record, and resume interrupted runs.
//!
//! Record ids are attempt indices. An accepted record with id `i` holds the
//! source's draw for index `i`, so a resumed run reproduces an uninterrupted
//! one exactly for deterministic sources.

use std::fs;
use std::io;
use std::path::Path;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{
    read_corpus, read_rejects, repair_tail, CorpusError, CorpusPaths, CorpusRecord, CorpusWriter,
    RejectedRecord, FORMAT_VERSION,
};
use crate::sources::{Draw, LengthSpec, Outcome, SequenceSource, SourceError};

/// Manifest is rewritten after this many new records, and at the end of a run.
const MANIFEST_EVERY: u64 = 256;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("target count must be at least 1")]
    InvalidTarget,
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("attempt budget of {budget} exhausted with {accepted}/{target} accepted")]
    BudgetExhausted { budget: u64, accepted: u64, target: u64 },
    #[error("manifest {field} is {manifest} but the run was configured with {given}")]
    ManifestMismatch {
        field: &'static str,
        manifest: String,
        given: String,
    },
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("record id {id} appears in both the corpus and the rejects file")]
    IdCollision { id: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub target_count: u64,
    pub completed_count: u64,
    pub rejected_count: u64,
    /// Attempts issued; also the next record id.
    pub attempts: u64,
    pub attempt_budget: u64,
    pub seed: Option<u64>,
    pub source_tag: String,
    pub source_config: Value,
    pub length_spec: Option<LengthSpec>,
}

impl RunManifest {
    pub fn is_complete(&self) -> bool {
        self.completed_count >= self.target_count
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProtocolError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        let manifest: Self = serde_json::from_str(&text)
            .map_err(|e| ProtocolError::CorruptManifest(format!("{}: {e}", path.display())))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(ProtocolError::CorruptManifest(format!(
                "unsupported format_version {}",
                manifest.format_version
            )));
        }
        if manifest.completed_count + manifest.rejected_count > manifest.attempts {
            return Err(ProtocolError::CorruptManifest(
                "completed + rejected exceeds attempts".into(),
            ));
        }
        Ok(manifest)
    }

    /// Writes via a temporary file and rename so readers never see a torn
    /// manifest.
    pub fn store(&self, path: impl AsRef<Path>) -> Result<(), ProtocolError> {
        let path = path.as_ref();
        let tmp = path.with_extension("json.tmp");
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&tmp, text)
            .and_then(|_| fs::rename(&tmp, path))
            .map_err(|e| CorpusError::io(path, e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CollectOptions {
    /// Maximum attempts (accepted + rejected) for the whole run. Defaults to
    /// ten per target record plus 100.
    pub attempt_budget: Option<u64>,
    /// Stop after this many new accepted records in this invocation, leaving
    /// the run resumable.
    pub stop_after: Option<u64>,
}

fn default_budget(target: u64) -> u64 {
    target.saturating_mul(10).saturating_add(100)
}

/// Starts a fresh run, truncating any previous corpus at `paths`.
pub fn collect<S: SequenceSource>(
    source: &mut S,
    target_count: u64,
    paths: &CorpusPaths,
    options: &CollectOptions,
) -> Result<RunManifest, ProtocolError> {
    if target_count == 0 {
        return Err(ProtocolError::InvalidTarget);
    }
    let mut manifest = RunManifest {
        format_version: FORMAT_VERSION,
        target_count,
        completed_count: 0,
        rejected_count: 0,
        attempts: 0,
        attempt_budget: options
            .attempt_budget
            .unwrap_or_else(|| default_budget(target_count)),
        seed: source.seed(),
        source_tag: source.source_tag(),
        source_config: source.config(),
        length_spec: source.length_spec(),
    };
    let mut corpus = CorpusWriter::create(&paths.corpus)?;
    let mut rejects = CorpusWriter::create(&paths.rejects)?;
    manifest.store(&paths.manifest)?;
    run(source, &mut manifest, &mut corpus, &mut rejects, paths, options)?;
    Ok(manifest)
}

/// Continues the run recorded at `paths`. The source must be configured as in
/// the original run; seed, tag and configuration are checked against the
/// manifest. Counts are rebuilt from the files, which are authoritative.
pub fn resume<S: SequenceSource>(
    source: &mut S,
    paths: &CorpusPaths,
    options: &CollectOptions,
) -> Result<RunManifest, ProtocolError> {
    let stored = RunManifest::load(&paths.manifest)?;
    check_matches(&stored, source)?;

    repair_tail(&paths.corpus)?;
    repair_tail(&paths.rejects)?;
    let accepted = match read_corpus(&paths.corpus) {
        Ok(records) => records,
        Err(CorpusError::Io { source: e, .. }) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let rejected = read_rejects(&paths.rejects)?;

    let mut rejected_ids = rejected.iter().map(|r| r.id).peekable();
    for record in &accepted {
        while rejected_ids.next_if(|&id| id < record.id).is_some() {}
        if rejected_ids.peek() == Some(&record.id) {
            return Err(ProtocolError::IdCollision { id: record.id });
        }
    }

    let next_id = accepted
        .last()
        .map(|r| r.id + 1)
        .max(rejected.last().map(|r| r.id + 1))
        .unwrap_or(0);
    let mut manifest = RunManifest {
        completed_count: accepted.len() as u64,
        rejected_count: rejected.len() as u64,
        attempts: next_id,
        ..stored.clone()
    };
    if manifest.completed_count > manifest.target_count {
        return Err(ProtocolError::CorruptManifest(format!(
            "corpus holds {} records but the target is {}",
            manifest.completed_count, manifest.target_count
        )));
    }
    if manifest.is_complete() {
        if manifest != stored {
            manifest.store(&paths.manifest)?;
        }
        return Ok(manifest);
    }

    let mut corpus = CorpusWriter::append_to(&paths.corpus)?;
    let mut rejects = CorpusWriter::append_to(&paths.rejects)?;
    manifest.store(&paths.manifest)?;
    run(source, &mut manifest, &mut corpus, &mut rejects, paths, options)?;
    Ok(manifest)
}

fn check_matches<S: SequenceSource>(manifest: &RunManifest, source: &S) -> Result<(), ProtocolError> {
    let mismatch = |field, manifest: String, given: String| {
        Err(ProtocolError::ManifestMismatch {
            field,
            manifest,
            given,
        })
    };
    if manifest.seed != source.seed() {
        return mismatch("seed", format!("{:?}", manifest.seed), format!("{:?}", source.seed()));
    }
    if manifest.source_tag != source.source_tag() {
        return mismatch("source_tag", manifest.source_tag.clone(), source.source_tag());
    }
    if manifest.source_config != source.config() {
        return mismatch(
            "source_config",
            manifest.source_config.to_string(),
            source.config().to_string(),
        );
    }
    if manifest.length_spec != source.length_spec() {
        return mismatch(
            "length_spec",
            format!("{:?}", manifest.length_spec),
            format!("{:?}", source.length_spec()),
        );
    }
    Ok(())
}

fn run<S: SequenceSource>(
    source: &mut S,
    manifest: &mut RunManifest,
    corpus: &mut CorpusWriter,
    rejects: &mut CorpusWriter,
    paths: &CorpusPaths,
    options: &CollectOptions,
) -> Result<(), ProtocolError> {
    let tag = source.source_tag();
    let mut new_records = 0u64;
    let mut since_store = 0u64;

    let outcome = loop {
        if manifest.is_complete() {
            break Ok(());
        }
        if options.stop_after.is_some_and(|limit| new_records >= limit) {
            break Ok(());
        }
        if manifest.attempts >= manifest.attempt_budget {
            break Err(ProtocolError::BudgetExhausted {
                budget: manifest.attempt_budget,
                accepted: manifest.completed_count,
                target: manifest.target_count,
            });
        }
        let mut batch = (manifest.target_count - manifest.completed_count)
            .min(manifest.attempt_budget - manifest.attempts)
            .min(source.concurrency().max(1) as u64);
        if let Some(limit) = options.stop_after {
            batch = batch.min(limit - new_records);
        }
        let draws = match source.draw_batch(manifest.attempts, batch as usize) {
            Ok(d) => d,
            Err(e) => break Err(e.into()),
        };
        for (offset, draw) in draws.into_iter().enumerate() {
            let id = manifest.attempts + offset as u64;
            match persist(draw, id, &tag, manifest, corpus, rejects) {
                Ok(true) => new_records += 1,
                Ok(false) => {}
                Err(e) => {
                    manifest.attempts = id;
                    manifest.store(&paths.manifest)?;
                    return Err(e);
                }
            }
        }
        manifest.attempts += batch;
        since_store += batch;
        if since_store >= MANIFEST_EVERY {
            manifest.store(&paths.manifest)?;
            since_store = 0;
        }
    };
    corpus.sync()?;
    rejects.sync()?;
    manifest.store(&paths.manifest)?;
    outcome
}

fn persist(
    draw: Draw,
    id: u64,
    tag: &str,
    manifest: &mut RunManifest,
    corpus: &mut CorpusWriter,
    rejects: &mut CorpusWriter,
) -> Result<bool, ProtocolError> {
    let Draw {
        outcome,
        requested_length,
        raw_text,
        meta,
    } = draw;
    match outcome {
        Outcome::Accepted(digits) => {
            corpus.append(&CorpusRecord {
                format_version: FORMAT_VERSION,
                id,
                source_tag: tag.to_string(),
                requested_length,
                raw_text,
                digits,
                created_at: Utc::now(),
                meta,
            })?;
            manifest.completed_count += 1;
            Ok(true)
        }
        Outcome::Rejected(reason) => {
            rejects.append_rejected(&RejectedRecord {
                format_version: FORMAT_VERSION,
                id,
                source_tag: tag.to_string(),
                requested_length,
                raw_text,
                reason,
                created_at: Utc::now(),
                meta,
            })?;
            manifest.rejected_count += 1;
            Ok(false)
        }
    }
}
