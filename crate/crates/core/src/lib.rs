//! Random number generation task (RNGT) analysis.
//!
//! - [`metrics`]: pattern metrics and extended indices for one digit sequence
//! - [`sources`]: uniform, Markov-bias, chat-completions and file sources
//! - [`protocol`]: resumable corpus collection
//! - [`report`]: corpus aggregation, baselines and report rendering
//! - [`corpus`]: the line-delimited corpus file format

pub mod corpus;
pub mod metrics;
pub mod protocol;
pub mod report;
pub mod rng;
pub mod sources;

pub use corpus::{CorpusPaths, CorpusRecord, FORMAT_VERSION};
pub use metrics::{compute_all, DigitSequence, MetricError, SequenceMetrics};
pub use protocol::{collect, resume, CollectOptions, ProtocolError, RunManifest};
pub use report::{aggregate, compare, digit_histogram_report, AggregateStats, BaselineSet};
pub use sources::{LengthSpec, SequenceSource, SourceError};
