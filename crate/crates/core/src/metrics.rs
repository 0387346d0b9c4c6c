//! Randomness metrics over decimal digit sequences.
//!
//! Single-metric functions return [`MetricError::Undefined`] when a sequence
//! is too short. [`compute_all`] instead carries undefined values as `None`
//! so corpus aggregation can skip them.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of symbols in the alphabet.
pub const ALPHABET: usize = 10;

/// Bitmask with one bit per digit, all set.
const FULL_COLLECTION: u16 = (1 << ALPHABET) - 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("{metric} is undefined for sequences shorter than {min_len} (got {len})")]
    Undefined {
        metric: &'static str,
        min_len: usize,
        len: usize,
    },
    #[error("value {value} at position {position} is not a digit in 0..=9")]
    DigitOutOfRange { position: usize, value: u32 },
}

/// An ordered sequence of decimal digits.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct DigitSequence(Vec<u8>);

impl DigitSequence {
    pub fn new(digits: Vec<u8>) -> Result<Self, MetricError> {
        if let Some((position, &value)) = digits.iter().enumerate().find(|(_, &d)| d > 9) {
            return Err(MetricError::DigitOutOfRange {
                position,
                value: u32::from(value),
            });
        }
        Ok(Self(digits))
    }

    /// Parses a compact digit string such as `"0193"`. Every character must be
    /// an ASCII digit.
    pub fn from_digit_str(text: &str) -> Result<Self, MetricError> {
        text.chars()
            .enumerate()
            .map(|(position, c)| {
                c.to_digit(10)
                    .map(|d| d as u8)
                    .ok_or(MetricError::DigitOutOfRange {
                        position,
                        value: u32::from(c),
                    })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Self)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn reversed(&self) -> Self {
        Self(self.0.iter().rev().copied().collect())
    }

    pub fn to_digit_string(&self) -> String {
        self.0.iter().map(|&d| char::from(b'0' + d)).collect()
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.0
    }
}

impl fmt::Display for DigitSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_digit_string())
    }
}

impl TryFrom<Vec<u8>> for DigitSequence {
    type Error = MetricError;

    fn try_from(digits: Vec<u8>) -> Result<Self, Self::Error> {
        Self::new(digits)
    }
}

impl Serialize for DigitSequence {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_digit_string())
    }
}

impl<'de> Deserialize<'de> for DigitSequence {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Self::from_digit_str(&text).map_err(serde::de::Error::custom)
    }
}

fn require_len(seq: &DigitSequence, metric: &'static str, min_len: usize) -> Result<(), MetricError> {
    if seq.len() < min_len {
        Err(MetricError::Undefined {
            metric,
            min_len,
            len: seq.len(),
        })
    } else {
        Ok(())
    }
}

fn pair_fraction(
    seq: &DigitSequence,
    metric: &'static str,
    hit: impl Fn(u8, u8) -> bool,
) -> Result<f64, MetricError> {
    require_len(seq, metric, 2)?;
    let hits = seq.0.windows(2).filter(|w| hit(w[0], w[1])).count();
    Ok(ratio(hits as u64, (seq.len() - 1) as u64))
}

fn ratio(count: u64, total: u64) -> f64 {
    count as f64 / total as f64
}

/// Fraction of adjacent pairs made of the same digit.
pub fn repeat_frequency(seq: &DigitSequence) -> Result<f64, MetricError> {
    pair_fraction(seq, "repeat_frequency", |a, b| a == b)
}

/// Fraction of adjacent pairs where the successor is the predecessor plus one.
/// `9 -> 0` does not count.
pub fn increase_frequency(seq: &DigitSequence) -> Result<f64, MetricError> {
    pair_fraction(seq, "increase_frequency", |a, b| b == a + 1)
}

/// Fraction of adjacent pairs where the successor is the predecessor minus one.
/// `0 -> 9` does not count.
pub fn decrease_frequency(seq: &DigitSequence) -> Result<f64, MetricError> {
    pair_fraction(seq, "decrease_frequency", |a, b| a == b + 1)
}

/// Share of positions holding each digit, indexed by digit.
pub fn digit_frequencies(seq: &DigitSequence) -> Result<[f64; ALPHABET], MetricError> {
    require_len(seq, "digit_frequencies", 1)?;
    let mut counts = [0u64; ALPHABET];
    for &d in seq.as_slice() {
        counts[d as usize] += 1;
    }
    Ok(frequencies_from_counts(&counts, seq.len() as u64))
}

fn frequencies_from_counts(counts: &[u64; ALPHABET], total: u64) -> [f64; ALPHABET] {
    let mut out = [0.0; ALPHABET];
    for (slot, &c) in out.iter_mut().zip(counts) {
        *slot = ratio(c, total);
    }
    out
}

pub fn mean_digit(seq: &DigitSequence) -> Result<f64, MetricError> {
    require_len(seq, "mean_digit", 1)?;
    let sum: u64 = seq.as_slice().iter().map(|&d| u64::from(d)).sum();
    Ok(ratio(sum, seq.len() as u64))
}

/// Mean number of digits consumed until all ten digits have appeared, over
/// successive completed collections. The scan restarts after each completion.
/// `None` when no collection completes.
pub fn coupon_score(seq: &DigitSequence) -> Option<f64> {
    let tally = CouponTally::scan(seq.as_slice());
    tally.score()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct CouponTally {
    completed: u64,
    consumed: u64,
}

impl CouponTally {
    fn scan(digits: &[u8]) -> Self {
        let mut tally = Self::default();
        let mut seen = 0u16;
        let mut span = 0u64;
        for &d in digits {
            seen |= 1 << d;
            span += 1;
            if seen == FULL_COLLECTION {
                tally.completed += 1;
                tally.consumed += span;
                seen = 0;
                span = 0;
            }
        }
        tally
    }

    fn score(&self) -> Option<f64> {
        (self.completed > 0).then(|| ratio(self.consumed, self.completed))
    }
}

/// Adjacent-pair counts, `counts[a][b]` for the digram `a b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DigramCounts(pub [[u64; ALPHABET]; ALPHABET]);

impl Default for DigramCounts {
    fn default() -> Self {
        Self([[0; ALPHABET]; ALPHABET])
    }
}

impl DigramCounts {
    pub fn from_sequence(seq: &DigitSequence) -> Self {
        let mut counts = Self::default();
        for w in seq.as_slice().windows(2) {
            counts.0[w[0] as usize][w[1] as usize] += 1;
        }
        counts
    }

    pub fn merge(&mut self, other: &Self) {
        for (row, other_row) in self.0.iter_mut().zip(&other.0) {
            for (c, o) in row.iter_mut().zip(other_row) {
                *c += o;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    /// Redundancy ratio `Σ n_ij ln n_ij / Σ n_i ln n_i`, with `0 ln 0 = 0` and a
    /// zero result when the denominator vanishes.
    pub fn evans_index(&self) -> f64 {
        let mut numerator = 0.0;
        let mut denominator = 0.0;
        for row in &self.0 {
            let mut row_total = 0u64;
            for &c in row {
                numerator += x_ln_x(c);
                row_total += c;
            }
            denominator += x_ln_x(row_total);
        }
        if denominator == 0.0 {
            0.0
        } else {
            (numerator / denominator).clamp(0.0, 1.0)
        }
    }
}

fn x_ln_x(count: u64) -> f64 {
    if count == 0 {
        0.0
    } else {
        let x = count as f64;
        x * x.ln()
    }
}

/// Evans RNG index over adjacent digrams: 0 for equidistributed digrams, 1 for
/// a fully redundant structure.
pub fn evans_rng_index(seq: &DigitSequence) -> Result<f64, MetricError> {
    require_len(seq, "evans_rng_index", 2)?;
    Ok(DigramCounts::from_sequence(seq).evans_index())
}

fn count_turning_points(digits: &[u8]) -> u64 {
    digits
        .windows(3)
        .filter(|w| (w[1] > w[0] && w[1] > w[2]) || (w[1] < w[0] && w[1] < w[2]))
        .count() as u64
}

/// Expected number of turning points among `interior` positions of an ideally
/// random sequence.
fn expected_turning_points(interior: u64) -> f64 {
    2.0 * interior as f64 / 3.0
}

fn turning_point_ratio(observed: u64, interior: u64) -> f64 {
    100.0 * observed as f64 / expected_turning_points(interior)
}

/// Strict local extrema over interior positions, as a percentage of the
/// `2(n-2)/3` expectation. Plateaus contribute nothing.
pub fn turning_point_index(seq: &DigitSequence) -> Result<f64, MetricError> {
    require_len(seq, "turning_point_index", 3)?;
    let observed = count_turning_points(seq.as_slice());
    Ok(turning_point_ratio(observed, (seq.len() - 2) as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternMetrics {
    pub length: usize,
    pub repeat_freq: Option<f64>,
    pub increase_freq: Option<f64>,
    pub decrease_freq: Option<f64>,
    pub mean_digit: Option<f64>,
    pub digit_freq: Option<[f64; ALPHABET]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedMetrics {
    pub coupon_score: Option<f64>,
    pub evans_rng_index: Option<f64>,
    pub turning_point_index: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub pattern: PatternMetrics,
    pub extended: ExtendedMetrics,
}

/// Integer tallies behind every metric. Tallies of several sequences can be
/// merged to obtain pooled corpus values.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SequenceTally {
    pub digits: u64,
    pub digit_sum: u64,
    pub digit_counts: [u64; ALPHABET],
    pub pairs: u64,
    pub repeats: u64,
    pub increases: u64,
    pub decreases: u64,
    pub digrams: DigramCounts,
    pub interior_positions: u64,
    pub turning_points: u64,
    pub collections: u64,
    pub collection_digits: u64,
}

impl SequenceTally {
    pub fn from_sequence(seq: &DigitSequence) -> Self {
        let digits = seq.as_slice();
        let mut tally = Self {
            digits: digits.len() as u64,
            ..Self::default()
        };
        let mut seen = 0u16;
        let mut span = 0u64;
        for (i, &d) in digits.iter().enumerate() {
            tally.digit_sum += u64::from(d);
            tally.digit_counts[d as usize] += 1;

            seen |= 1 << d;
            span += 1;
            if seen == FULL_COLLECTION {
                tally.collections += 1;
                tally.collection_digits += span;
                seen = 0;
                span = 0;
            }

            if i == 0 {
                continue;
            }
            let prev = digits[i - 1];
            tally.pairs += 1;
            tally.digrams.0[prev as usize][d as usize] += 1;
            if d == prev {
                tally.repeats += 1;
            } else if d == prev + 1 {
                tally.increases += 1;
            } else if prev == d + 1 {
                tally.decreases += 1;
            }

            if i >= 2 {
                tally.interior_positions += 1;
                let before = digits[i - 2];
                if (prev > before && prev > d) || (prev < before && prev < d) {
                    tally.turning_points += 1;
                }
            }
        }
        tally
    }

    pub fn merge(&mut self, other: &Self) {
        self.digits += other.digits;
        self.digit_sum += other.digit_sum;
        for (c, o) in self.digit_counts.iter_mut().zip(&other.digit_counts) {
            *c += o;
        }
        self.pairs += other.pairs;
        self.repeats += other.repeats;
        self.increases += other.increases;
        self.decreases += other.decreases;
        self.digrams.merge(&other.digrams);
        self.interior_positions += other.interior_positions;
        self.turning_points += other.turning_points;
        self.collections += other.collections;
        self.collection_digits += other.collection_digits;
    }

    pub fn repeat_freq(&self) -> Option<f64> {
        (self.pairs > 0).then(|| ratio(self.repeats, self.pairs))
    }

    pub fn increase_freq(&self) -> Option<f64> {
        (self.pairs > 0).then(|| ratio(self.increases, self.pairs))
    }

    pub fn decrease_freq(&self) -> Option<f64> {
        (self.pairs > 0).then(|| ratio(self.decreases, self.pairs))
    }

    pub fn mean_digit(&self) -> Option<f64> {
        (self.digits > 0).then(|| ratio(self.digit_sum, self.digits))
    }

    pub fn digit_freq(&self) -> Option<[f64; ALPHABET]> {
        (self.digits > 0).then(|| frequencies_from_counts(&self.digit_counts, self.digits))
    }

    pub fn coupon_score(&self) -> Option<f64> {
        CouponTally {
            completed: self.collections,
            consumed: self.collection_digits,
        }
        .score()
    }

    pub fn evans_rng_index(&self) -> Option<f64> {
        (self.pairs > 0).then(|| self.digrams.evans_index())
    }

    pub fn turning_point_index(&self) -> Option<f64> {
        (self.interior_positions > 0)
            .then(|| turning_point_ratio(self.turning_points, self.interior_positions))
    }

    pub fn metrics(&self) -> SequenceMetrics {
        SequenceMetrics {
            pattern: PatternMetrics {
                length: self.digits as usize,
                repeat_freq: self.repeat_freq(),
                increase_freq: self.increase_freq(),
                decrease_freq: self.decrease_freq(),
                mean_digit: self.mean_digit(),
                digit_freq: self.digit_freq(),
            },
            extended: ExtendedMetrics {
                coupon_score: self.coupon_score(),
                evans_rng_index: self.evans_rng_index(),
                turning_point_index: self.turning_point_index(),
            },
        }
    }
}

/// Every metric in one pass. Values equal the single-metric functions
/// bit for bit; metrics undefined for this length are `None`.
pub fn compute_all(seq: &DigitSequence) -> SequenceMetrics {
    SequenceTally::from_sequence(seq).metrics()
}
