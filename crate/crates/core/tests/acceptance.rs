//! Acceptance gate. Prints one PASS/FAIL line per criterion, with sub-checks
//! indented beneath it, and exits non-zero if any criterion fails for a
//! reason other than the documented ones in `KNOWN_UNATTAINABLE`.
//!
//! Run with `cargo test -p rngt-core --test acceptance`.

mod common;
mod naive;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{requested_length, MockLlm, Reply};
use rngt_core::corpus::{read_corpus, CorpusPaths};
use rngt_core::metrics::{compute_all, evans_rng_index, DigitSequence, SequenceTally};
use rngt_core::report::{aggregate, compare, AggregateStats, BaselineSet};
use rngt_core::sources::{
    build_prompt, calibrate_bias_model, clean_response, BiasModelParams, BiasSource,
    CalibrationOptions, LengthSpec, LlmEndpointConfig, LlmSource, PatternTargets,
    SequenceSource, UniformSource,
};
use rngt_core::{collect, resume, CollectOptions};
use serde_json::Value;

/// Sub-checks that cannot pass under the metric definitions in force. The
/// measured value is still computed and printed; see the README for the
/// arithmetic.
const KNOWN_UNATTAINABLE: [&str; 2] = ["tpi-uniform", "evans-uniform"];

const CORPUS_SIZE: u64 = 10_000;

struct Check {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn check(id: &'static str, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        id,
        pass,
        detail: detail.into(),
    }
}

fn within(id: &'static str, label: &str, got: f64, want: f64, tol: f64) -> Check {
    let shown = format!("{want:.4}");
    let shown = shown.trim_end_matches('0').trim_end_matches('.');
    check(
        id,
        (got - want).abs() <= tol,
        format!("{label} = {got:.4} (want {shown} ± {tol})"),
    )
}

struct Criterion {
    name: &'static str,
    checks: Vec<Check>,
}

fn collect_corpus(source: &mut impl SequenceSource, dir: &Path, name: &str) -> AggregateStats {
    let paths = CorpusPaths::for_corpus(dir.join(name));
    collect(source, CORPUS_SIZE, &paths, &CollectOptions::default()).expect("collection runs");
    aggregate(&read_corpus(&paths.corpus).expect("corpus reads back")).expect("corpus is non-empty")
}

fn uniform_ground_truth(dir: &Path) -> Criterion {
    let start = Instant::now();
    let mut source = UniformSource::new(2024, LengthSpec::default()).unwrap();
    let stats = collect_corpus(&mut source, dir, "uniform.jsonl");
    let elapsed = start.elapsed();

    let mut checks = vec![
        within("repeat", "repeat", stats.repeat.mean.unwrap(), 0.1, 0.005),
        within("increase", "increase", stats.increase.mean.unwrap(), 0.09, 0.005),
        within("decrease", "decrease", stats.decrease.mean.unwrap(), 0.09, 0.005),
        within("mean-digit", "mean digit", stats.mean_digit.mean.unwrap(), 4.5, 0.02),
    ];
    let worst = stats
        .digits
        .iter()
        .max_by(|a, b| (a.mean - 0.1).abs().total_cmp(&(b.mean - 0.1).abs()))
        .unwrap();
    checks.push(within(
        "digit-freq",
        &format!("worst digit frequency (digit {})", worst.digit),
        worst.mean,
        0.1,
        0.005,
    ));
    checks.push(check(
        "runtime",
        elapsed < Duration::from_secs(60),
        format!("10,000 sequences collected and analysed in {:.2} s (want < 60 s)", elapsed.as_secs_f64()),
    ));
    Criterion {
        name: "uniform ground truth",
        checks,
    }
}

fn profile_reproduction(
    name: &'static str,
    profile: &str,
    targets: PatternTargets,
    dir: &Path,
) -> Criterion {
    let mut checks = Vec::new();
    let calibration = match calibrate_bias_model(targets, 2024, &CalibrationOptions::default()) {
        Ok(c) => c,
        Err(e) => {
            checks.push(check("calibration", false, e.to_string()));
            return Criterion { name, checks };
        }
    };
    checks.push(check(
        "calibration",
        calibration.residual < 0.005,
        format!(
            "residual {:.5} after {} iterations (want < 0.005)",
            calibration.residual, calibration.iterations
        ),
    ));
    let params: BiasModelParams = calibration.params;
    let mut source = BiasSource::new(profile, params, 7, LengthSpec::default()).unwrap();
    let stats = collect_corpus(&mut source, dir, &format!("{profile}.jsonl"));
    let table = compare(&stats, &BaselineSet::reference(), &[profile]).unwrap();
    for row in table.rows.iter().filter(|r| r.metric != "mean_digit") {
        let id = match row.metric.as_str() {
            "repeat" => "repeat",
            "increase" => "increase",
            _ => "decrease",
        };
        checks.push(within(id, &row.metric, row.observed, row.baseline, 0.01));
    }
    Criterion { name, checks }
}

fn oracle_equivalence() -> Criterion {
    let sequences = naive::all_sequences(3, 5);
    let mut mismatches = 0;
    for digits in &sequences {
        let m = compute_all(&DigitSequence::new(digits.clone()).unwrap());
        let same = m.pattern.repeat_freq == naive::repeat(digits)
            && m.pattern.increase_freq == naive::increase(digits)
            && m.pattern.decrease_freq == naive::decrease(digits)
            && m.pattern.mean_digit == naive::mean(digits)
            && m.pattern.digit_freq.map(|f| f.to_vec()) == naive::digit_freq(digits)
            && m.extended.coupon_score == naive::coupon(digits)
            && m.extended.evans_rng_index == naive::evans(digits)
            && m.extended.turning_point_index == naive::turning(digits);
        if !same {
            mismatches += 1;
        }
    }
    Criterion {
        name: "oracle equivalence",
        checks: vec![check(
            "exhaustive",
            sequences.len() == 363 && mismatches == 0,
            format!("{} sequences over {{0,1,2}} of length <= 5, {mismatches} mismatches", sequences.len()),
        )],
    }
}

fn fixed_length(n: usize) -> LengthSpec {
    LengthSpec {
        mean: n as f64,
        sd: 0.0,
        min_len: n,
        max_len: n,
    }
}

fn extended_metrics() -> Criterion {
    let mut checks = Vec::new();

    // coupon: pool completed collections until there are at least 100k. Long
    // sequences keep the censoring at each sequence end negligible; short ones
    // drop the long collections and bias the mean low.
    let mut source = UniformSource::new(99, fixed_length(100_000)).unwrap();
    let mut pooled = SequenceTally::default();
    let mut index = 0;
    while pooled.collections < 100_000 {
        let draw = source.draw(index).unwrap();
        pooled.merge(&SequenceTally::from_sequence(draw.digits().unwrap()));
        index += 1;
    }
    let analytic: f64 = 10.0 * (1..=10).map(|k| 1.0 / k as f64).sum::<f64>();
    checks.push(within(
        "coupon",
        &format!("coupon score over {} collections", pooled.collections),
        pooled.coupon_score().unwrap(),
        analytic,
        0.3,
    ));

    let long = || UniformSource::new(5, fixed_length(10_000)).unwrap().sequences();
    let sequences: Vec<DigitSequence> = long().take(50).map(Result::unwrap).collect();
    let tpi: f64 = sequences
        .iter()
        .map(|s| compute_all(s).extended.turning_point_index.unwrap())
        .sum::<f64>()
        / sequences.len() as f64;
    checks.push(within(
        "tpi-uniform",
        "TPI, 50 uniform sequences of 10,000 digits",
        tpi,
        100.0,
        2.0,
    ));

    let mut constant_ok = true;
    for d in 0..10u8 {
        for n in [3, 10, 1_000, 10_000] {
            let v = evans_rng_index(&DigitSequence::new(vec![d; n]).unwrap()).unwrap();
            constant_ok &= v == 1.0;
        }
    }
    checks.push(check(
        "evans-constant",
        constant_ok,
        "Evans index of constant sequences (every digit, n = 3..10,000) is exactly 1.0",
    ));

    let evans_max = sequences
        .iter()
        .map(|s| evans_rng_index(s).unwrap())
        .fold(f64::MIN, f64::max);
    checks.push(check(
        "evans-uniform",
        evans_max < 0.05,
        format!("largest Evans index over 50 uniform 10,000-digit sequences = {evans_max:.4} (want < 0.05)"),
    ));
    Criterion {
        name: "extended metrics",
        checks,
    }
}

fn protocol_fidelity() -> Criterion {
    let mut checks = Vec::new();
    let mock = MockLlm::start(|_, body| Reply::content(&"7".repeat(requested_length(body))));
    let mut config = LlmEndpointConfig::new(mock.base_url().parse().unwrap(), "gpt-3.5-turbo-0125", "k");
    config.concurrency = 1;
    let mut source = LlmSource::new(config, LengthSpec::default(), 11).unwrap();
    let mut exact = 0;
    let indices = 0..8u64;
    for i in indices.clone() {
        source.draw(i).unwrap();
    }
    for (i, captured) in indices.zip(mock.captured()) {
        let (target, _) = source.request_for(i).unwrap();
        let expected = format!(
            "Continue generating and dictating a sequence of random numbers, using the digits 0-9, until you reach {target} digits."
        );
        let messages = captured.body["messages"].as_array().cloned().unwrap_or_default();
        if messages.len() == 1
            && messages[0]["role"] == "user"
            && messages[0]["content"] == Value::String(expected.clone())
            && build_prompt(target) == expected
        {
            exact += 1;
        }
    }
    checks.push(check(
        "prompt",
        exact == 8,
        format!("{exact}/8 request bodies carry the exact prompt with the sampled length"),
    ));

    let fixtures: [(&str, Option<&str>); 10] = [
        ("123", Some("123")),
        ("1 2 3 four 5", Some("1235")),
        ("abc", None),
        ("", None),
        ("Here you go: 4, 8, 15, 16, 23, 42.", Some("4815162342")),
        ("-7.5e3", Some("753")),
        ("0\n9\t1 ", Some("091")),
        ("٣٤ and ５", None),
        ("½ 2²", Some("2")),
        ("x0y0z", Some("00")),
    ];
    let mut failures = Vec::new();
    for (raw, want) in fixtures {
        let got = clean_response(raw).ok().map(|d| d.to_string());
        if got.as_deref() != want {
            failures.push(format!("{raw:?} -> {got:?}"));
        }
    }
    checks.push(check(
        "cleaning",
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} fixtures: only ASCII digits 0-9 survive, empty results are rejected", fixtures.len())
        } else {
            format!("mismatches: {}", failures.join("; "))
        },
    ));
    Criterion {
        name: "protocol fidelity",
        checks,
    }
}

fn normalized_lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|line| {
            let mut v: Value = serde_json::from_str(line).unwrap();
            v.as_object_mut().unwrap().remove("created_at");
            v
        })
        .collect()
}

fn determinism_and_resume(dir: &Path) -> Criterion {
    let uniform = || UniformSource::new(7, LengthSpec::default()).unwrap();
    let full = CorpusPaths::for_corpus(dir.join("seed7-full.jsonl"));
    collect(&mut uniform(), 1000, &full, &CollectOptions::default()).unwrap();

    let part = CorpusPaths::for_corpus(dir.join("seed7-part.jsonl"));
    let halfway = CollectOptions {
        stop_after: Some(500),
        ..CollectOptions::default()
    };
    let first = collect(&mut uniform(), 1000, &part, &halfway).unwrap();
    resume(&mut uniform(), &part, &CollectOptions::default()).unwrap();

    let a = normalized_lines(&full.corpus);
    let b = normalized_lines(&part.corpus);
    let manifests_equal = fs::read(&full.manifest).unwrap() == fs::read(&part.manifest).unwrap();
    Criterion {
        name: "determinism & resume",
        checks: vec![
            check(
                "resume",
                first.completed_count == 500 && a.len() == 1000 && a == b,
                format!(
                    "interrupted at {}/1000 and resumed: {} of {} records identical apart from created_at",
                    first.completed_count,
                    a.iter().zip(&b).filter(|(x, y)| x == y).count(),
                    a.len()
                ),
            ),
            check("manifest", manifests_equal, "final manifests byte-identical"),
        ],
    }
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria = [
        uniform_ground_truth(dir.path()),
        profile_reproduction(
            "human-profile reproduction",
            "human",
            PatternTargets::new(0.076, 0.154, 0.169),
            dir.path(),
        ),
        profile_reproduction(
            "chatgpt-profile reproduction",
            "chatgpt_2024",
            PatternTargets::new(0.001, 0.063, 0.078),
            dir.path(),
        ),
        oracle_equivalence(),
        extended_metrics(),
        protocol_fidelity(),
        determinism_and_resume(dir.path()),
    ];

    let mut unexpected = 0;
    for criterion in &criteria {
        let pass = criterion.checks.iter().all(|c| c.pass);
        println!("{} {}", if pass { "PASS" } else { "FAIL" }, criterion.name);
        for c in &criterion.checks {
            let mark = match (c.pass, KNOWN_UNATTAINABLE.contains(&c.id)) {
                (true, _) => "ok  ",
                (false, true) => "FAIL (known)",
                (false, false) => {
                    unexpected += 1;
                    "FAIL"
                }
            };
            println!("    {mark} {}: {}", c.id, c.detail);
        }
    }
    let passed = criteria
        .iter()
        .filter(|c| c.checks.iter().all(|k| k.pass))
        .count();
    println!(
        "acceptance: {passed}/{} criteria pass; {unexpected} unexpected sub-check failure(s)",
        criteria.len()
    );
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
