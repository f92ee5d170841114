//! Turning raw model output into a label and a probability.

use crate::corpus::Label;

use super::BackendError;

/// Two-candidate softmax over the label log-probabilities.
///
/// Returns the arg-max label and its renormalised probability. An exact tie
/// gives label 1 with probability 0.5.
pub fn decide_from_logprobs(logprob_0: f64, logprob_1: f64) -> Result<(Label, f64), BackendError> {
    if !logprob_0.is_finite() || !logprob_1.is_finite() {
        return Err(BackendError::NonFiniteLogprob { logprob_0, logprob_1 });
    }
    if logprob_0 == logprob_1 {
        return Ok((Label::Parkinson, 0.5));
    }
    let (label, hi, lo) = if logprob_1 > logprob_0 {
        (Label::Parkinson, logprob_1, logprob_0)
    } else {
        (Label::Control, logprob_0, logprob_1)
    };
    // exp(hi) / (exp(hi) + exp(lo)) with the max subtracted
    let p = 1.0 / (1.0 + (lo - hi).exp());
    Ok((label, p))
}

/// First standalone `0` or `1` in free text.
///
/// Tokens are maximal runs of letters, digits and underscores, with a `.`
/// kept inside a token when digits sit on both sides. Only a token that is
/// exactly `0` or `1` counts, so `10`, `0.5` and `F0` are skipped.
pub fn parse_generated_label(text: &str) -> Result<Label, BackendError> {
    let chars: Vec<char> = text.chars().collect();
    let is_word = |i: usize| {
        let c = chars[i];
        c.is_alphanumeric()
            || c == '_'
            || (c == '.'
                && i > 0
                && i + 1 < chars.len()
                && chars[i - 1].is_ascii_digit()
                && chars[i + 1].is_ascii_digit())
    };
    let mut i = 0;
    while i < chars.len() {
        if !is_word(i) {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && is_word(i) {
            i += 1;
        }
        match chars[start..i] {
            ['0'] => return Ok(Label::Control),
            ['1'] => return Ok(Label::Parkinson),
            _ => {}
        }
    }
    Err(BackendError::InvalidModelOutput(text.to_string()))
}
