//! Corpus aggregation, baseline comparison and report rendering.
//!
//! Every metric is aggregated two ways: the unweighted mean over sequences
//! and the pooled value over all digits (or pairs) of the corpus. Numbers are
//! rendered with four decimals; ties round half to even.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusRecord;
use crate::metrics::{DigitSequence, SequenceMetrics, SequenceTally, ALPHABET};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("unknown baseline profile {0:?}")]
    UnknownProfile(String),
    #[error("no baseline profile selected")]
    NoProfiles,
}

/// Four decimals. Rust's float formatting rounds exact ties to even.
pub fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

fn fmt4_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), fmt4)
}

/// `x` rounded to the four decimals it is displayed with.
pub fn round4(x: f64) -> f64 {
    fmt4(x).parse().expect("formatted float parses")
}

/// Mean and sample standard deviation of `values`, summed in sorted order so
/// the result does not depend on input order. The deviation of a single value
/// is 0.
fn mean_sd(values: &mut [f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let mut squares: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    squares.sort_by(f64::total_cmp);
    let var = squares.iter().sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub included: usize,
    pub skipped: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub pooled: Option<f64>,
}

impl MetricSummary {
    fn from_values(values: impl Iterator<Item = Option<f64>>, pooled: Option<f64>) -> Self {
        let mut included = Vec::new();
        let mut skipped = 0;
        for v in values {
            match v {
                Some(v) => included.push(v),
                None => skipped += 1,
            }
        }
        let stats = mean_sd(&mut included);
        Self {
            included: included.len(),
            skipped,
            mean: stats.map(|s| s.0),
            sd: stats.map(|s| s.1),
            pooled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitSummary {
    pub digit: u8,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub pooled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthSummary {
    pub mean: f64,
    pub sd: f64,
    pub min: usize,
    pub max: usize,
    /// Mean requested length over records that carry one.
    pub requested_mean: Option<f64>,
    /// Records whose realised length differs from the requested one.
    pub off_request: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub sequences: usize,
    pub length: LengthSummary,
    pub repeat: MetricSummary,
    pub increase: MetricSummary,
    pub decrease: MetricSummary,
    pub mean_digit: MetricSummary,
    pub coupon_score: MetricSummary,
    pub evans_rng_index: MetricSummary,
    pub turning_point_index: MetricSummary,
    pub digits: Vec<DigitSummary>,
}

impl AggregateStats {
    /// `(name, summary)` for every scalar metric, in report order.
    pub fn metric_rows(&self) -> [(&'static str, &MetricSummary); 7] {
        [
            ("repeat", &self.repeat),
            ("increase", &self.increase),
            ("decrease", &self.decrease),
            ("mean_digit", &self.mean_digit),
            ("coupon_score", &self.coupon_score),
            ("evans_rng_index", &self.evans_rng_index),
            ("turning_point_index", &self.turning_point_index),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "included", "skipped", "mean", "sd", "pooled"])
            .expect("in-memory write");
        for (name, m) in self.metric_rows() {
            w.write_record([
                name.to_string(),
                m.included.to_string(),
                m.skipped.to_string(),
                fmt4_opt(m.mean),
                fmt4_opt(m.sd),
                fmt4_opt(m.pooled),
            ])
            .expect("in-memory write");
        }
        into_string(w)
    }

    pub fn render_text(&self) -> String {
        let mut rows = vec![vec![
            "metric".to_string(),
            "included".into(),
            "skipped".into(),
            "mean".into(),
            "sd".into(),
            "pooled".into(),
        ]];
        for (name, m) in self.metric_rows() {
            rows.push(vec![
                name.to_string(),
                m.included.to_string(),
                m.skipped.to_string(),
                fmt4_opt(m.mean),
                fmt4_opt(m.sd),
                fmt4_opt(m.pooled),
            ]);
        }
        let mut out = String::new();
        let _ = writeln!(out, "sequences: {}", self.sequences);
        let _ = writeln!(
            out,
            "length: mean {} sd {} min {} max {}",
            fmt4(self.length.mean),
            fmt4(self.length.sd),
            self.length.min,
            self.length.max
        );
        if let Some(requested) = self.length.requested_mean {
            let _ = writeln!(
                out,
                "requested length: mean {} ({} records off request)",
                fmt4(requested),
                self.length.off_request
            );
        }
        out.push('\n');
        out.push_str(&align(&rows));
        out
    }
}

fn into_string(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Left-aligned first column, right-aligned others, two-space gutters.
fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[c]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Aggregates the sequences of a corpus.
pub fn aggregate(corpus: &[CorpusRecord]) -> Result<AggregateStats, ReportError> {
    let sequences: Vec<&DigitSequence> = corpus.iter().map(|r| &r.digits).collect();
    let mut stats = aggregate_sequences(sequences.iter().copied())?;
    let requested: Vec<(usize, usize)> = corpus
        .iter()
        .filter_map(|r| r.requested_length.map(|q| (q, r.digits.len())))
        .collect();
    if !requested.is_empty() {
        let mut values: Vec<f64> = requested.iter().map(|(q, _)| *q as f64).collect();
        stats.length.requested_mean = mean_sd(&mut values).map(|s| s.0);
        stats.length.off_request = requested.iter().filter(|(q, n)| q != n).count();
    }
    Ok(stats)
}

pub fn aggregate_sequences<'a>(
    sequences: impl IntoIterator<Item = &'a DigitSequence>,
) -> Result<AggregateStats, ReportError> {
    let sequences: Vec<&DigitSequence> = sequences.into_iter().collect();
    if sequences.is_empty() {
        return Err(ReportError::EmptyCorpus);
    }
    let tallies: Vec<SequenceTally> = sequences
        .par_iter()
        .map(|s| SequenceTally::from_sequence(s))
        .collect();
    let metrics: Vec<SequenceMetrics> = tallies.iter().map(SequenceTally::metrics).collect();
    let mut pooled = SequenceTally::default();
    for t in &tallies {
        pooled.merge(t);
    }

    let mut lengths: Vec<f64> = sequences.iter().map(|s| s.len() as f64).collect();
    let (len_mean, len_sd) = mean_sd(&mut lengths).expect("nonempty corpus");
    let length = LengthSummary {
        mean: len_mean,
        sd: len_sd,
        min: sequences.iter().map(|s| s.len()).min().unwrap_or(0),
        max: sequences.iter().map(|s| s.len()).max().unwrap_or(0),
        requested_mean: None,
        off_request: 0,
    };

    let summary = |f: fn(&SequenceMetrics) -> Option<f64>, pooled: Option<f64>| {
        MetricSummary::from_values(metrics.iter().map(f), pooled)
    };

    let pooled_freq = pooled.digit_freq();
    let digits = (0..ALPHABET)
        .map(|d| {
            let mut values: Vec<f64> = metrics
                .iter()
                .filter_map(|m| m.pattern.digit_freq.map(|f| f[d]))
                .collect();
            let (mean, sd) = mean_sd(&mut values).unwrap_or((0.0, 0.0));
            DigitSummary {
                digit: d as u8,
                mean,
                sd,
                min: values.first().copied().unwrap_or(0.0),
                max: values.last().copied().unwrap_or(0.0),
                pooled: pooled_freq.map_or(0.0, |f| f[d]),
            }
        })
        .collect();

    Ok(AggregateStats {
        sequences: sequences.len(),
        length,
        repeat: summary(|m| m.pattern.repeat_freq, pooled.repeat_freq()),
        increase: summary(|m| m.pattern.increase_freq, pooled.increase_freq()),
        decrease: summary(|m| m.pattern.decrease_freq, pooled.decrease_freq()),
        mean_digit: summary(|m| m.pattern.mean_digit, pooled.mean_digit()),
        coupon_score: summary(|m| m.extended.coupon_score, pooled.coupon_score()),
        evans_rng_index: summary(|m| m.extended.evans_rng_index, pooled.evans_rng_index()),
        turning_point_index: summary(
            |m| m.extended.turning_point_index,
            pooled.turning_point_index(),
        ),
        digits,
    })
}

/// Reference pattern statistics for one population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineProfile {
    pub repeat: f64,
    pub increase: f64,
    pub decrease: f64,
    pub mean_digit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSet {
    pub profiles: BTreeMap<String, BaselineProfile>,
}

impl Default for BaselineSet {
    fn default() -> Self {
        Self::reference()
    }
}

impl BaselineSet {
    pub const PROFILE_NAMES: [&'static str; 3] = ["uniform", "human", "chatgpt_2024"];

    /// Ideal uniform digits, human participants (voluntary generation) and
    /// gpt-3.5-turbo-0125 under default settings.
    pub fn reference() -> Self {
        let profiles = [
            (
                "uniform",
                BaselineProfile {
                    repeat: 0.1,
                    increase: 0.09,
                    decrease: 0.09,
                    mean_digit: Some(4.5),
                },
            ),
            (
                "human",
                BaselineProfile {
                    repeat: 0.076,
                    increase: 0.154,
                    decrease: 0.169,
                    mean_digit: Some(4.537),
                },
            ),
            (
                "chatgpt_2024",
                BaselineProfile {
                    repeat: 0.001,
                    increase: 0.063,
                    decrease: 0.078,
                    mean_digit: Some(4.492),
                },
            ),
        ];
        Self {
            profiles: profiles
                .into_iter()
                .map(|(name, p)| (name.to_string(), p))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<&BaselineProfile, ReportError> {
        self.profiles
            .get(name)
            .ok_or_else(|| ReportError::UnknownProfile(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub profile: String,
    /// Per-sequence mean.
    pub observed: f64,
    pub observed_pooled: Option<f64>,
    pub baseline: f64,
    /// `|round4(observed) - baseline|`.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub profiles: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

/// Observed aggregate against each selected profile. Metrics with no
/// observed value, or absent from a profile, are left out.
pub fn compare<S: AsRef<str>>(
    stats: &AggregateStats,
    baselines: &BaselineSet,
    profiles: &[S],
) -> Result<ComparisonTable, ReportError> {
    if profiles.is_empty() {
        return Err(ReportError::NoProfiles);
    }
    let selected: Vec<(&str, &BaselineProfile)> = profiles
        .iter()
        .map(|p| baselines.get(p.as_ref()).map(|b| (p.as_ref(), b)))
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    let metrics: [(&str, &MetricSummary, fn(&BaselineProfile) -> Option<f64>); 4] = [
        ("repeat", &stats.repeat, |b| Some(b.repeat)),
        ("increase", &stats.increase, |b| Some(b.increase)),
        ("decrease", &stats.decrease, |b| Some(b.decrease)),
        ("mean_digit", &stats.mean_digit, |b| b.mean_digit),
    ];
    for (metric, summary, pick) in metrics {
        let Some(observed) = summary.mean else { continue };
        for (name, profile) in &selected {
            let Some(baseline) = pick(profile) else { continue };
            rows.push(ComparisonRow {
                metric: metric.to_string(),
                profile: name.to_string(),
                observed,
                observed_pooled: summary.pooled,
                baseline,
                deviation: (round4(observed) - baseline).abs(),
            });
        }
    }
    Ok(ComparisonTable {
        profiles: selected.iter().map(|(n, _)| n.to_string()).collect(),
        rows,
    })
}

const COMPARISON_HEADER: [&str; 6] = [
    "metric",
    "profile",
    "observed",
    "observed_pooled",
    "baseline",
    "abs_deviation",
];

impl ComparisonTable {
    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.metric.clone(),
                    r.profile.clone(),
                    fmt4(r.observed),
                    fmt4_opt(r.observed_pooled),
                    fmt4(r.baseline),
                    fmt4(r.deviation),
                ]
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(COMPARISON_HEADER).expect("in-memory write");
        for row in self.cells() {
            w.write_record(&row).expect("in-memory write");
        }
        into_string(w)
    }

    pub fn render_text(&self) -> String {
        let mut rows = vec![COMPARISON_HEADER.iter().map(|s| s.to_string()).collect()];
        rows.extend(self.cells());
        align(&rows)
    }

    /// Metric by profile matrix with the observed value first; the data behind
    /// a grouped bar chart of pattern frequencies.
    pub fn plot_data(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["metric".to_string(), "observed".to_string()];
        header.extend(self.profiles.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        let mut metrics: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !metrics.contains(&r.metric.as_str()) {
                metrics.push(&r.metric);
            }
        }
        for metric in metrics {
            let rows: Vec<&ComparisonRow> = self.rows.iter().filter(|r| r.metric == metric).collect();
            let mut record = vec![metric.to_string(), fmt4(rows[0].observed)];
            for profile in &self.profiles {
                record.push(
                    rows.iter()
                        .find(|r| &r.profile == profile)
                        .map_or_else(|| "NA".to_string(), |r| fmt4(r.baseline)),
                );
            }
            w.write_record(&record).expect("in-memory write");
        }
        into_string(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitHistogram {
    pub rows: Vec<DigitSummary>,
    pub most_frequent: u8,
    pub least_frequent: u8,
}

/// Per-digit mean frequency across sequences, with extremes. Ties resolve to
/// the smaller digit.
pub fn digit_histogram_report(corpus: &[CorpusRecord]) -> Result<DigitHistogram, ReportError> {
    Ok(digit_histogram(&aggregate(corpus)?))
}

pub fn digit_histogram(stats: &AggregateStats) -> DigitHistogram {
    let rows = stats.digits.clone();
    let mut most = &rows[0];
    let mut least = &rows[0];
    for row in &rows[1..] {
        if row.mean > most.mean {
            most = row;
        }
        if row.mean < least.mean {
            least = row;
        }
    }
    DigitHistogram {
        most_frequent: most.digit,
        least_frequent: least.digit,
        rows,
    }
}

const UNIFORM_DIGIT_FREQ: f64 = 1.0 / ALPHABET as f64;

impl DigitHistogram {
    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.digit.to_string(),
                    fmt4(r.mean),
                    fmt4(r.sd),
                    fmt4(r.min),
                    fmt4(r.max),
                    fmt4(r.pooled),
                ]
            })
            .collect()
    }

    const HEADER: [&'static str; 6] = ["digit", "mean", "sd", "min", "max", "pooled"];

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::HEADER).expect("in-memory write");
        for row in self.cells() {
            w.write_record(&row).expect("in-memory write");
        }
        into_string(w)
    }

    pub fn render_text(&self) -> String {
        let mut rows = vec![Self::HEADER.iter().map(|s| s.to_string()).collect()];
        rows.extend(self.cells());
        let mut out = align(&rows);
        let _ = writeln!(
            out,
            "most frequent: {}  least frequent: {}",
            self.most_frequent, self.least_frequent
        );
        out
    }

    /// Observed mean frequency next to the uniform expectation, per digit.
    pub fn plot_data(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["digit", "observed", "uniform"])
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record([r.digit.to_string(), fmt4(r.mean), fmt4(UNIFORM_DIGIT_FREQ)])
                .expect("in-memory write");
        }
        into_string(w)
    }
}

/// Every report file for a corpus, as `(file name, contents)` in a fixed
/// order.
pub fn render_reports<S: AsRef<str>>(
    corpus: &[CorpusRecord],
    baselines: &BaselineSet,
    profiles: &[S],
) -> Result<Vec<(&'static str, String)>, ReportError> {
    let stats = aggregate(corpus)?;
    let table = compare(&stats, baselines, profiles)?;
    let histogram = digit_histogram(&stats);
    let summary = format!(
        "{}\n{}\n{}",
        stats.render_text(),
        table.render_text(),
        histogram.render_text()
    );
    Ok(vec![
        ("summary.txt", summary),
        ("aggregate.csv", stats.to_csv()),
        ("comparison.csv", table.to_csv()),
        ("digits.csv", histogram.to_csv()),
        ("plot_patterns.csv", table.plot_data()),
        ("plot_digits.csv", histogram.plot_data()),
    ])
}
