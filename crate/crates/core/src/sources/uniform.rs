use rand::Rng;
use serde_json::{json, Map, Value};

use super::{Draw, LengthSpec, Outcome, SequenceSource, SourceError};
use crate::metrics::DigitSequence;
use crate::rng::record_rng;

/// I.i.d. uniform digits with lengths drawn from a [`LengthSpec`].
#[derive(Debug, Clone)]
pub struct UniformSource {
    seed: u64,
    spec: LengthSpec,
}

impl UniformSource {
    pub fn new(seed: u64, spec: LengthSpec) -> Result<Self, SourceError> {
        spec.validate()?;
        Ok(Self { seed, spec })
    }

    pub fn sequences(self) -> super::SequenceStream<Self> {
        super::SequenceStream::new(self)
    }
}

impl SequenceSource for UniformSource {
    fn source_tag(&self) -> String {
        "uniform".into()
    }

    fn seed(&self) -> Option<u64> {
        Some(self.seed)
    }

    fn config(&self) -> Value {
        json!({ "kind": "uniform" })
    }

    fn length_spec(&self) -> Option<LengthSpec> {
        Some(self.spec)
    }

    fn draw(&mut self, index: u64) -> Result<Draw, SourceError> {
        let mut rng = record_rng(self.seed, index);
        let len = self.spec.sample(&mut rng)?;
        let digits: Vec<u8> = (0..len).map(|_| rng.random_range(0..10u8)).collect();
        let mut meta = Map::new();
        meta.insert("seed".into(), self.seed.into());
        Ok(Draw {
            outcome: Outcome::Accepted(DigitSequence::new(digits).expect("digits below 10")),
            requested_length: Some(len),
            raw_text: None,
            meta,
        })
    }
}
