//! Generators of digit sequences.
//!
//! Every source is addressed by record index: drawing index `i` twice from
//! identically configured sources yields the same result. This is what lets
//! [`crate::protocol::resume`] continue a run mid-stream.

mod bias;
mod file;
mod length;
mod llm;
mod prompt;
mod uniform;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::metrics::DigitSequence;

pub use bias::{
    calibrate_bias_model, BiasModelParams, BiasPreset, BiasSource, Calibration, CalibrationOptions,
    PatternTargets, TransitionMatrix,
};
pub use file::FileSource;
pub use length::LengthSpec;
pub use llm::{ChatCompletionRequest, ChatMessage, LlmEndpointConfig, LlmSource, CHAT_COMPLETIONS_PATH};
pub use prompt::{build_prompt, clean_response};
pub use uniform::UniformSource;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("invalid length spec: {0}")]
    InvalidLengthSpec(String),
    #[error("invalid bias parameters: {0}")]
    InvalidParams(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty after cleaning")]
    EmptyAfterCleaning,
    #[error("request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("calibration did not converge after {iterations} iterations (best residual {residual:.6})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("source exhausted at record index {index}")]
    Exhausted { index: u64 },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Accepted(DigitSequence),
    Rejected(String),
}

/// One attempt to obtain a sequence, with whatever provenance the source has.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub outcome: Outcome,
    pub requested_length: Option<usize>,
    pub raw_text: Option<String>,
    pub meta: Map<String, Value>,
}

impl Draw {
    pub fn accepted(digits: DigitSequence) -> Self {
        Self {
            outcome: Outcome::Accepted(digits),
            requested_length: None,
            raw_text: None,
            meta: Map::new(),
        }
    }

    pub fn digits(&self) -> Option<&DigitSequence> {
        match &self.outcome {
            Outcome::Accepted(d) => Some(d),
            Outcome::Rejected(_) => None,
        }
    }
}

pub trait SequenceSource {
    /// Label stored with every record, e.g. `uniform` or `llm:<model>`.
    fn source_tag(&self) -> String;

    fn seed(&self) -> Option<u64>;

    /// Snapshot of the configuration, persisted in the run manifest. Must not
    /// contain secrets.
    fn config(&self) -> Value;

    fn length_spec(&self) -> Option<LengthSpec>;

    fn draw(&mut self, index: u64) -> Result<Draw, SourceError>;

    /// Number of draws worth issuing together.
    fn concurrency(&self) -> usize {
        1
    }

    /// Draws `count` consecutive indices starting at `start`, returned in index
    /// order.
    fn draw_batch(&mut self, start: u64, count: usize) -> Result<Vec<Draw>, SourceError> {
        (start..start + count as u64).map(|i| self.draw(i)).collect()
    }
}

impl<S: SequenceSource + ?Sized> SequenceSource for Box<S> {
    fn source_tag(&self) -> String {
        (**self).source_tag()
    }
    fn seed(&self) -> Option<u64> {
        (**self).seed()
    }
    fn config(&self) -> Value {
        (**self).config()
    }
    fn length_spec(&self) -> Option<LengthSpec> {
        (**self).length_spec()
    }
    fn draw(&mut self, index: u64) -> Result<Draw, SourceError> {
        (**self).draw(index)
    }
    fn concurrency(&self) -> usize {
        (**self).concurrency()
    }
    fn draw_batch(&mut self, start: u64, count: usize) -> Result<Vec<Draw>, SourceError> {
        (**self).draw_batch(start, count)
    }
}

/// Iterator over the accepted sequences of a source, starting at index 0.
/// Rejected draws are skipped; errors end the stream after being yielded.
pub struct SequenceStream<S> {
    source: S,
    next_index: u64,
    failed: bool,
}

impl<S: SequenceSource> SequenceStream<S> {
    pub fn new(source: S) -> Self {
        Self {
            source,
            next_index: 0,
            failed: false,
        }
    }
}

impl<S: SequenceSource> Iterator for SequenceStream<S> {
    type Item = Result<DigitSequence, SourceError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.failed {
            let index = self.next_index;
            self.next_index += 1;
            match self.source.draw(index) {
                Ok(Draw {
                    outcome: Outcome::Accepted(digits),
                    ..
                }) => return Some(Ok(digits)),
                Ok(_) => continue,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
        None
    }
}
