use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SourceError;

/// Redraw cap for [`LengthSpec::sample`]. With the feasibility check in
/// [`LengthSpec::validate`] the acceptance probability is never tiny enough
/// for this to trigger in practice.
const MAX_REDRAWS: usize = 100_000;

/// Sampling law for the requested length of a sequence: a normal variate,
/// rounded, redrawn until it lands in `[min_len, max_len]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthSpec {
    pub mean: f64,
    pub sd: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for LengthSpec {
    fn default() -> Self {
        Self {
            mean: 269.0,
            sd: 325.0,
            min_len: 2,
            max_len: 922,
        }
    }
}

impl LengthSpec {
    pub fn validate(&self) -> Result<(), SourceError> {
        let invalid = |reason: String| Err(SourceError::InvalidLengthSpec(reason));
        if !self.mean.is_finite() || !self.sd.is_finite() {
            return invalid("mean and sd must be finite".into());
        }
        if self.sd < 0.0 {
            return invalid(format!("sd must be non-negative, got {}", self.sd));
        }
        if self.min_len < 1 || self.min_len > self.max_len {
            return invalid(format!(
                "need 1 <= min_len <= max_len, got {}..={}",
                self.min_len, self.max_len
            ));
        }
        let (lo, hi) = (self.min_len as f64, self.max_len as f64);
        if self.sd == 0.0 {
            let fixed = self.mean.round();
            if fixed < lo || fixed > hi {
                return invalid(format!(
                    "degenerate length {fixed} lies outside {}..={}",
                    self.min_len, self.max_len
                ));
            }
        } else if lo > self.mean + 10.0 * self.sd || hi < self.mean - 10.0 * self.sd {
            return invalid(format!(
                "{}..={} is more than 10 sd away from mean {}",
                self.min_len, self.max_len, self.mean
            ));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize, SourceError> {
        self.validate()?;
        if self.sd == 0.0 {
            return Ok(self.mean.round() as usize);
        }
        let normal = Normal::new(self.mean, self.sd)
            .map_err(|e| SourceError::InvalidLengthSpec(e.to_string()))?;
        let (lo, hi) = (self.min_len as f64, self.max_len as f64);
        for _ in 0..MAX_REDRAWS {
            let draw = normal.sample(rng).round();
            if draw >= lo && draw <= hi {
                return Ok(draw as usize);
            }
        }
        Err(SourceError::InvalidLengthSpec(format!(
            "no length in {}..={} after {MAX_REDRAWS} draws",
            self.min_len, self.max_len
        )))
    }
}
