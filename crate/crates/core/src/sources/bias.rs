//! First-order Markov simulators of biased digit generation.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{Draw, LengthSpec, Outcome, SequenceSource, SourceError};
use crate::metrics::{DigitSequence, ALPHABET};
use crate::rng::{record_rng, RecordRng};

/// Transition masses towards the same digit, the next digit up and the next
/// digit down. The rest of each row is spread uniformly over the remaining
/// digits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasModelParams {
    pub p_repeat: f64,
    pub p_up: f64,
    pub p_down: f64,
}

impl BiasModelParams {
    pub fn new(p_repeat: f64, p_up: f64, p_down: f64) -> Result<Self, SourceError> {
        let params = Self {
            p_repeat,
            p_up,
            p_down,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        for (name, p) in [
            ("p_repeat", self.p_repeat),
            ("p_up", self.p_up),
            ("p_down", self.p_down),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SourceError::InvalidParams(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        let total = self.p_repeat + self.p_up + self.p_down;
        if total > 1.0 + 1e-12 {
            return Err(SourceError::InvalidParams(format!(
                "p_repeat + p_up + p_down = {total} exceeds 1"
            )));
        }
        Ok(())
    }
}

/// Row-stochastic matrix realised from [`BiasModelParams`].
///
/// State 0 has no down-neighbour and state 9 no up-neighbour; in those rows
/// the missing mass joins the remainder spread over the eight non-special
/// digits.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    rows: [[f64; ALPHABET]; ALPHABET],
    cumulative: [[f64; ALPHABET]; ALPHABET],
}

impl TransitionMatrix {
    pub fn from_params(params: &BiasModelParams) -> Self {
        let mut rows = [[0.0; ALPHABET]; ALPHABET];
        for (state, row) in rows.iter_mut().enumerate() {
            let mut special = [false; ALPHABET];
            let mut assigned = 0.0;
            row[state] = params.p_repeat;
            special[state] = true;
            assigned += params.p_repeat;
            if state + 1 < ALPHABET {
                row[state + 1] = params.p_up;
                special[state + 1] = true;
                assigned += params.p_up;
            }
            if state > 0 {
                row[state - 1] = params.p_down;
                special[state - 1] = true;
                assigned += params.p_down;
            }
            let others = special.iter().filter(|s| !**s).count();
            let share = (1.0 - assigned).max(0.0) / others as f64;
            for (p, is_special) in row.iter_mut().zip(special) {
                if !is_special {
                    *p = share;
                }
            }
        }
        let mut cumulative = [[0.0; ALPHABET]; ALPHABET];
        for (cdf, row) in cumulative.iter_mut().zip(&rows) {
            let mut acc = 0.0;
            for (c, p) in cdf.iter_mut().zip(row) {
                acc += p;
                *c = acc;
            }
        }
        Self { rows, cumulative }
    }

    pub fn row(&self, state: usize) -> &[f64; ALPHABET] {
        &self.rows[state]
    }

    fn next(&self, state: u8, rng: &mut RecordRng) -> u8 {
        sample_cdf(&self.cumulative[state as usize], &self.rows[state as usize], rng)
    }
}

/// Inverse-CDF draw. Falls back to the last digit with positive mass when
/// rounding leaves the final cumulative value just below `u`.
fn sample_cdf(cdf: &[f64; ALPHABET], masses: &[f64; ALPHABET], rng: &mut RecordRng) -> u8 {
    let u: f64 = rng.random();
    if let Some(d) = cdf.iter().position(|&c| u < c) {
        return d as u8;
    }
    masses.iter().rposition(|&p| p > 0.0).unwrap_or(ALPHABET - 1) as u8
}

/// Markov-chain sequences: uniform first digit (unless weighted), each later
/// digit drawn from the previous digit's row.
#[derive(Debug, Clone)]
pub struct BiasSource {
    label: String,
    params: BiasModelParams,
    matrix: TransitionMatrix,
    seed: u64,
    spec: LengthSpec,
    initial: Option<[f64; ALPHABET]>,
}

impl BiasSource {
    pub fn new(
        label: impl Into<String>,
        params: BiasModelParams,
        seed: u64,
        spec: LengthSpec,
    ) -> Result<Self, SourceError> {
        params.validate()?;
        spec.validate()?;
        Ok(Self {
            label: label.into(),
            matrix: TransitionMatrix::from_params(&params),
            params,
            seed,
            spec,
            initial: None,
        })
    }

    /// Replaces the uniform first-digit distribution with `weights`, which are
    /// normalised.
    pub fn with_initial_weights(mut self, weights: [f64; ALPHABET]) -> Result<Self, SourceError> {
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || total <= 0.0 {
            return Err(SourceError::InvalidParams(
                "initial weights must be non-negative with a positive sum".into(),
            ));
        }
        self.initial = Some(weights.map(|w| w / total));
        Ok(self)
    }

    pub fn matrix(&self) -> &TransitionMatrix {
        &self.matrix
    }

    pub fn params(&self) -> BiasModelParams {
        self.params
    }

    pub fn sequences(self) -> super::SequenceStream<Self> {
        super::SequenceStream::new(self)
    }

    fn generate(&self, index: u64) -> Result<(usize, Vec<u8>), SourceError> {
        let mut rng = record_rng(self.seed, index);
        let len = self.spec.sample(&mut rng)?;
        let mut digits = Vec::with_capacity(len);
        if len == 0 {
            return Ok((len, digits));
        }
        let first = match &self.initial {
            None => rng.random_range(0..ALPHABET as u8),
            Some(weights) => {
                let mut cdf = [0.0; ALPHABET];
                let mut acc = 0.0;
                for (c, w) in cdf.iter_mut().zip(weights) {
                    acc += w;
                    *c = acc;
                }
                sample_cdf(&cdf, weights, &mut rng)
            }
        };
        digits.push(first);
        let mut state = first;
        for _ in 1..len {
            state = self.matrix.next(state, &mut rng);
            digits.push(state);
        }
        Ok((len, digits))
    }
}

impl SequenceSource for BiasSource {
    fn source_tag(&self) -> String {
        format!("bias:{}", self.label)
    }

    fn seed(&self) -> Option<u64> {
        Some(self.seed)
    }

    fn config(&self) -> Value {
        json!({
            "kind": "bias",
            "preset": self.label,
            "params": self.params,
            "initial_weights": self.initial,
        })
    }

    fn length_spec(&self) -> Option<LengthSpec> {
        Some(self.spec)
    }

    fn draw(&mut self, index: u64) -> Result<Draw, SourceError> {
        let (len, digits) = self.generate(index)?;
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

/// Target adjacent-pair frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternTargets {
    pub repeat: f64,
    pub increase: f64,
    pub decrease: f64,
}

impl PatternTargets {
    pub fn new(repeat: f64, increase: f64, decrease: f64) -> Self {
        Self {
            repeat,
            increase,
            decrease,
        }
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        for (name, t) in [
            ("repeat", self.repeat),
            ("increase", self.increase),
            ("decrease", self.decrease),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return Err(SourceError::InvalidParams(format!("target {name} = {t} is outside [0, 1]")));
            }
        }
        let total = self.repeat + self.increase + self.decrease;
        if total > 1.0 {
            return Err(SourceError::InvalidParams(format!(
                "targets sum to {total}, which exceeds 1"
            )));
        }
        Ok(())
    }

    fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.repeat - other.repeat)
            .abs()
            .max((self.increase - other.increase).abs())
            .max((self.decrease - other.decrease).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    /// Simulated digits per Monte Carlo evaluation.
    pub min_digits: u64,
    pub max_iterations: usize,
    pub damping: f64,
    /// Largest acceptable residual.
    pub tolerance: f64,
    /// Residual at which iteration stops early.
    pub stop_residual: f64,
    pub spec: LengthSpec,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            min_digits: 1_000_000,
            max_iterations: 100,
            damping: 0.8,
            tolerance: 0.005,
            stop_residual: 0.0005,
            spec: LengthSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub params: BiasModelParams,
    pub targets: PatternTargets,
    pub achieved: PatternTargets,
    pub residual: f64,
    pub iterations: usize,
    pub seed: u64,
}

/// Pooled pair frequencies of simulated sequences totalling at least
/// `min_digits` digits.
fn simulate_marginals(
    params: BiasModelParams,
    seed: u64,
    spec: LengthSpec,
    min_digits: u64,
) -> Result<PatternTargets, SourceError> {
    let source = BiasSource::new("calibration", params, seed, spec)?;
    let (mut digits, mut pairs, mut repeats, mut ups, mut downs) = (0u64, 0u64, 0u64, 0u64, 0u64);
    let mut index = 0;
    while digits < min_digits {
        let (_, seq) = source.generate(index)?;
        index += 1;
        digits += seq.len() as u64;
        for w in seq.windows(2) {
            pairs += 1;
            if w[1] == w[0] {
                repeats += 1;
            } else if w[1] == w[0] + 1 {
                ups += 1;
            } else if w[0] == w[1] + 1 {
                downs += 1;
            }
        }
    }
    let pairs = pairs.max(1) as f64;
    Ok(PatternTargets::new(
        repeats as f64 / pairs,
        ups as f64 / pairs,
        downs as f64 / pairs,
    ))
}

fn project(mut p: [f64; 3]) -> [f64; 3] {
    for x in &mut p {
        *x = x.clamp(0.0, 1.0);
    }
    let total: f64 = p.iter().sum();
    if total > 1.0 {
        for x in &mut p {
            *x /= total;
        }
    }
    p
}

/// Searches for Markov masses whose simulated pair frequencies hit `targets`.
///
/// Damped fixed-point iteration: each step moves the masses by `damping`
/// times the gap between targets and the Monte Carlo estimate. Every estimate
/// reuses `seed`, so the map being iterated is deterministic.
pub fn calibrate_bias_model(
    targets: PatternTargets,
    seed: u64,
    options: &CalibrationOptions,
) -> Result<Calibration, SourceError> {
    targets.validate()?;
    options.spec.validate()?;
    let goal = [targets.repeat, targets.increase, targets.decrease];
    let mut masses = project(goal);
    let mut best: Option<Calibration> = None;

    for iteration in 1..=options.max_iterations {
        let params = BiasModelParams {
            p_repeat: masses[0],
            p_up: masses[1],
            p_down: masses[2],
        };
        let achieved = simulate_marginals(params, seed, options.spec, options.min_digits)?;
        let residual = achieved.max_abs_diff(&targets);
        if best.as_ref().is_none_or(|b| residual < b.residual) {
            best = Some(Calibration {
                params,
                targets,
                achieved,
                residual,
                iterations: iteration,
                seed,
            });
        }
        if residual <= options.stop_residual {
            break;
        }
        let measured = [achieved.repeat, achieved.increase, achieved.decrease];
        let mut next = masses;
        for k in 0..3 {
            next[k] += options.damping * (goal[k] - measured[k]);
        }
        masses = project(next);
    }

    let best = best.expect("at least one iteration runs");
    if best.residual < options.tolerance {
        Ok(best)
    } else {
        Err(SourceError::NotConverged {
            iterations: options.max_iterations,
            residual: best.residual,
        })
    }
}

/// Named, pre-calibrated parameter sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasPreset {
    pub name: String,
    pub params: BiasModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<PatternTargets>,
}

impl BiasPreset {
    pub const BUILTIN: [&'static str; 3] = ["uniform", "human", "chatgpt_2024"];

    /// Presets frozen from `calibrate_bias_model` with seed 2024 and default
    /// options.
    pub fn builtin(name: &str) -> Option<Self> {
        let (targets, params) = match name {
            "uniform" => (
                PatternTargets::new(0.1, 0.09, 0.09),
                BiasModelParams {
                    p_repeat: 0.100_128_086_749_297_48,
                    p_up: 0.099_838_882_990_508_78,
                    p_down: 0.099_864_548_463_129_42,
                },
            ),
            "human" => (
                PatternTargets::new(0.076, 0.154, 0.169),
                BiasModelParams {
                    p_repeat: 0.076_208_830_326_162_05,
                    p_up: 0.169_462_194_458_062_5,
                    p_down: 0.185_780_922_533_382_7,
                },
            ),
            "chatgpt_2024" => (
                PatternTargets::new(0.001, 0.063, 0.078),
                BiasModelParams {
                    p_repeat: 0.001_027_547_874_628_176_5,
                    p_up: 0.070_330_589_132_877_97,
                    p_down: 0.086_930_835_361_005_93,
                },
            ),
            _ => return None,
        };
        Some(Self {
            name: name.to_string(),
            params,
            targets: Some(targets),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn near_uniform_interior_rows() {
        let m = TransitionMatrix::from_params(&BiasModelParams::new(0.1, 0.09, 0.09).unwrap());
        let row = m.row(4);
        assert_eq!(row[4], 0.1);
        assert_eq!(row[5], 0.09);
        assert_eq!(row[3], 0.09);
        let share = (1.0 - 0.28) / 7.0;
        for d in [0, 1, 2, 6, 7, 8, 9] {
            assert!((row[d] - share).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_rows_spread_missing_mass() {
        let m = TransitionMatrix::from_params(&BiasModelParams::new(0.1, 0.2, 0.3).unwrap());
        let zero = m.row(0);
        assert_eq!(zero[0], 0.1);
        assert_eq!(zero[1], 0.2);
        for &p in &zero[2..] {
            assert!((p - 0.7 / 8.0).abs() < 1e-12);
        }
        let nine = m.row(9);
        assert_eq!(nine[9], 0.1);
        assert_eq!(nine[8], 0.3);
        for &p in &nine[..8] {
            assert!((p - 0.6 / 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_repeat_gives_constant_sequences() {
        let params = BiasModelParams::new(1.0, 0.0, 0.0).unwrap();
        let source = BiasSource::new("const", params, 5, LengthSpec::default()).unwrap();
        for seq in source.sequences().take(200) {
            let seq = seq.unwrap();
            assert!(seq.as_slice().windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(BiasModelParams::new(0.5, 0.4, 0.2).is_err());
        assert!(BiasModelParams::new(-0.1, 0.0, 0.0).is_err());
        assert!(PatternTargets::new(0.9, 0.9, 0.9).validate().is_err());
    }

    #[test]
    fn initial_weights_pin_first_digit() {
        let params = BiasModelParams::new(0.1, 0.09, 0.09).unwrap();
        let mut weights = [0.0; ALPHABET];
        weights[2] = 1.0;
        let source = BiasSource::new("w", params, 1, LengthSpec::default())
            .unwrap()
            .with_initial_weights(weights)
            .unwrap();
        for seq in source.sequences().take(100) {
            assert_eq!(seq.unwrap().as_slice()[0], 2);
        }
    }

    #[test]
    fn calibration_rejects_infeasible_targets() {
        let err = calibrate_bias_model(
            PatternTargets::new(0.9, 0.9, 0.9),
            1,
            &CalibrationOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, SourceError::InvalidParams(_)));
    }

    #[test]
    fn calibration_reports_non_convergence() {
        // a single iteration starting from the raw targets cannot absorb the
        // boundary-state distortion to this precision
        let options = CalibrationOptions {
            max_iterations: 1,
            tolerance: 1e-6,
            min_digits: 50_000,
            ..CalibrationOptions::default()
        };
        let err = calibrate_bias_model(PatternTargets::new(0.076, 0.154, 0.169), 3, &options)
            .unwrap_err();
        assert!(matches!(err, SourceError::NotConverged { iterations: 1, .. }));
    }

    proptest! {
        #[test]
        fn rows_sum_to_one(a in 0.0f64..=1.0, b in 0.0f64..=1.0, c in 0.0f64..=1.0) {
            let total = a + b + c;
            let scale = if total > 1.0 { total } else { 1.0 };
            let params = BiasModelParams::new(a / scale, b / scale, c / scale).unwrap();
            let m = TransitionMatrix::from_params(&params);
            for state in 0..ALPHABET {
                let sum: f64 = m.row(state).iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12, "state {} sums to {}", state, sum);
                prop_assert!(m.row(state).iter().all(|&p| p >= 0.0));
            }
        }
    }
}
