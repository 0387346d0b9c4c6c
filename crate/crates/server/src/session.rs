//! Validation of human session submissions.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "source_tag": "human",
//!   "digits": "3819...",            // or [3, 8, 1, 9, ...]
//!   "meta": {
//!     "mode": "voluntary",          // or "target"
//!     "target_length": 30,          // required when mode is "target"
//!     "timestamps": ["2026-10-15T09:00:00.120Z", ...]
//!   }
//! }
//! ```

use chrono::{DateTime, Utc};
use rngt_core::{CorpusRecord, DigitSequence, FORMAT_VERSION};
use serde::Serialize;
use serde_json::{Map, Value};

/// Fewest digits a session may contain; pair metrics need two.
pub const MIN_SESSION_DIGITS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionMode {
    Voluntary,
    Target(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidSession {
    pub digits: DigitSequence,
    pub mode: SessionMode,
    pub meta: Map<String, Value>,
}

impl ValidSession {
    pub fn into_record(self, created_at: DateTime<Utc>) -> CorpusRecord {
        let requested_length = match self.mode {
            SessionMode::Voluntary => None,
            SessionMode::Target(n) => Some(n),
        };
        CorpusRecord {
            format_version: FORMAT_VERSION,
            id: 0,
            source_tag: "human".into(),
            requested_length,
            raw_text: None,
            digits: self.digits,
            created_at,
            meta: self.meta,
        }
    }
}

fn parse_digits(value: Option<&Value>, errors: &mut Vec<FieldError>) -> Option<Vec<u8>> {
    match value {
        None => {
            errors.push(FieldError::new("digits", "is required"));
            None
        }
        Some(Value::String(text)) => {
            let mut out = Vec::with_capacity(text.len());
            let mut ok = true;
            for (i, c) in text.chars().enumerate() {
                match c.to_digit(10) {
                    Some(d) => out.push(d as u8),
                    None => {
                        ok = false;
                        errors.push(FieldError::new(
                            format!("digits[{i}]"),
                            format!("{c:?} is not a digit 0-9"),
                        ));
                    }
                }
            }
            ok.then_some(out)
        }
        Some(Value::Array(items)) => {
            let mut out = Vec::with_capacity(items.len());
            let mut ok = true;
            for (i, item) in items.iter().enumerate() {
                let digit = match item {
                    Value::Number(n) => n.as_u64().filter(|&d| d <= 9),
                    Value::String(s) if s.len() == 1 => s.parse::<u64>().ok(),
                    _ => None,
                };
                match digit {
                    Some(d) => out.push(d as u8),
                    None => {
                        ok = false;
                        errors.push(FieldError::new(
                            format!("digits[{i}]"),
                            format!("{item} is not a digit 0-9"),
                        ));
                    }
                }
            }
            ok.then_some(out)
        }
        Some(_) => {
            errors.push(FieldError::new(
                "digits",
                "expected a digit string or an array of digits",
            ));
            None
        }
    }
}

fn parse_mode(meta: &Map<String, Value>, errors: &mut Vec<FieldError>) -> Option<SessionMode> {
    match meta.get("mode") {
        None => Some(SessionMode::Voluntary),
        Some(Value::String(m)) if m == "voluntary" => Some(SessionMode::Voluntary),
        Some(Value::String(m)) if m == "target" => {
            match meta.get("target_length").and_then(Value::as_u64) {
                Some(n) if n >= MIN_SESSION_DIGITS as u64 => Some(SessionMode::Target(n as usize)),
                _ => {
                    errors.push(FieldError::new(
                        "meta.target_length",
                        format!("target mode needs an integer target_length of at least {MIN_SESSION_DIGITS}"),
                    ));
                    None
                }
            }
        }
        Some(other) => {
            errors.push(FieldError::new(
                "meta.mode",
                format!("expected \"voluntary\" or \"target\", got {other}"),
            ));
            None
        }
    }
}

fn check_timestamps(meta: &Map<String, Value>, digits: usize, errors: &mut Vec<FieldError>) {
    let Some(value) = meta.get("timestamps") else {
        return;
    };
    let Some(items) = value.as_array() else {
        errors.push(FieldError::new("meta.timestamps", "expected an array of timestamps"));
        return;
    };
    if items.len() != digits {
        errors.push(FieldError::new(
            "meta.timestamps",
            format!("has {} entries for {digits} digits", items.len()),
        ));
    }
    let mut previous: Option<DateTime<Utc>> = None;
    for (i, item) in items.iter().enumerate() {
        let parsed = item
            .as_str()
            .and_then(|s| DateTime::parse_from_rfc3339(s).ok())
            .map(|t| t.with_timezone(&Utc));
        match parsed {
            None => errors.push(FieldError::new(
                format!("meta.timestamps[{i}]"),
                "expected an RFC 3339 timestamp",
            )),
            Some(t) => {
                if previous.is_some_and(|p| t < p) {
                    errors.push(FieldError::new(
                        format!("meta.timestamps[{i}]"),
                        "is earlier than the previous keystroke",
                    ));
                }
                previous = Some(t);
            }
        }
    }
}

/// Checks a submission body, collecting every field-level problem.
pub fn validate_submission(body: &Value) -> Result<ValidSession, Vec<FieldError>> {
    let mut errors = Vec::new();
    let Some(obj) = body.as_object() else {
        return Err(vec![FieldError::new("", "expected a JSON object")]);
    };

    match obj.get("format_version").and_then(Value::as_u64) {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        _ => errors.push(FieldError::new(
            "format_version",
            format!("must be {FORMAT_VERSION}"),
        )),
    }
    match obj.get("source_tag").and_then(Value::as_str) {
        Some("human") => {}
        _ => errors.push(FieldError::new("source_tag", "must be \"human\"")),
    }

    let meta = match obj.get("meta") {
        None => Map::new(),
        Some(Value::Object(m)) => m.clone(),
        Some(_) => {
            errors.push(FieldError::new("meta", "expected an object"));
            Map::new()
        }
    };

    let digits = parse_digits(obj.get("digits"), &mut errors);
    let mode = parse_mode(&meta, &mut errors);

    if let Some(digits) = &digits {
        if digits.len() < MIN_SESSION_DIGITS {
            errors.push(FieldError::new(
                "digits",
                format!("enter at least {MIN_SESSION_DIGITS} digits"),
            ));
        }
        if let Some(SessionMode::Target(n)) = mode {
            if digits.len() > n {
                errors.push(FieldError::new(
                    "digits",
                    format!("{} digits exceed the target length {n}", digits.len()),
                ));
            }
        }
        check_timestamps(&meta, digits.len(), &mut errors);
    }

    match (digits, mode) {
        (Some(digits), Some(mode)) if errors.is_empty() => Ok(ValidSession {
            digits: DigitSequence::new(digits).expect("digits validated"),
            mode,
            meta,
        }),
        _ => Err(errors),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn fields(body: Value) -> Vec<String> {
        validate_submission(&body)
            .unwrap_err()
            .into_iter()
            .map(|e| e.field)
            .collect()
    }

    #[test]
    fn accepts_string_and_array_forms() {
        let a = validate_submission(&json!({
            "format_version": 1, "source_tag": "human", "digits": "3819"
        }))
        .unwrap();
        let b = validate_submission(&json!({
            "format_version": 1, "source_tag": "human", "digits": [3, 8, 1, 9]
        }))
        .unwrap();
        assert_eq!(a.digits, b.digits);
        assert_eq!(a.mode, SessionMode::Voluntary);
    }

    #[test]
    fn rejects_out_of_range_digit() {
        assert_eq!(
            fields(json!({"format_version": 1, "source_tag": "human", "digits": [1, 10]})),
            vec!["digits[1]"]
        );
        assert_eq!(
            fields(json!({"format_version": 1, "source_tag": "human", "digits": ["1", "10"]})),
            vec!["digits[1]"]
        );
    }

    #[test]
    fn rejects_short_and_untagged_sessions() {
        let f = fields(json!({"format_version": 1, "source_tag": "llm", "digits": "7"}));
        assert_eq!(f, vec!["source_tag", "digits"]);
        assert_eq!(fields(json!({"source_tag": "human", "digits": "77"})), vec!["format_version"]);
        assert_eq!(fields(json!([1, 2])), vec![""]);
    }

    #[test]
    fn target_mode_caps_length() {
        let ok = validate_submission(&json!({
            "format_version": 1, "source_tag": "human", "digits": "12345",
            "meta": {"mode": "target", "target_length": 5}
        }))
        .unwrap();
        assert_eq!(ok.mode, SessionMode::Target(5));
        assert_eq!(ok.into_record(Utc::now()).requested_length, Some(5));
        assert_eq!(
            fields(json!({
                "format_version": 1, "source_tag": "human", "digits": "123456",
                "meta": {"mode": "target", "target_length": 5}
            })),
            vec!["digits"]
        );
        assert_eq!(
            fields(json!({
                "format_version": 1, "source_tag": "human", "digits": "12",
                "meta": {"mode": "target"}
            })),
            vec!["meta.target_length"]
        );
    }

    #[test]
    fn timestamps_must_not_go_backwards() {
        let f = fields(json!({
            "format_version": 1, "source_tag": "human", "digits": "123",
            "meta": {"timestamps": [
                "2026-10-15T09:00:00.000Z",
                "2026-10-15T09:00:01.000Z",
                "2026-10-15T08:59:59.000Z"
            ]}
        }));
        assert_eq!(f, vec!["meta.timestamps[2]"]);
        let f = fields(json!({
            "format_version": 1, "source_tag": "human", "digits": "123",
            "meta": {"timestamps": ["2026-10-15T09:00:00Z", "yesterday"]}
        }));
        assert_eq!(f, vec!["meta.timestamps", "meta.timestamps[1]"]);
    }
}
