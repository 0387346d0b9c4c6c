use crate::metrics::DigitSequence;

use super::SourceError;

const PROMPT_HEAD: &str =
    "Continue generating and dictating a sequence of random numbers, using the digits 0-9, until you reach ";
const PROMPT_TAIL: &str = " digits.";

/// The task instruction sent to a model, asking for `target_length` digits.
pub fn build_prompt(target_length: usize) -> String {
    format!("{PROMPT_HEAD}{target_length}{PROMPT_TAIL}")
}

/// Keeps every ASCII digit of `raw` in order and drops everything else.
pub fn clean_response(raw: &str) -> Result<DigitSequence, SourceError> {
    let digits: Vec<u8> = raw
        .bytes()
        .filter(u8::is_ascii_digit)
        .map(|b| b - b'0')
        .collect();
    if digits.is_empty() {
        return Err(SourceError::EmptyAfterCleaning);
    }
    Ok(DigitSequence::new(digits).expect("ascii digits are in range"))
}
