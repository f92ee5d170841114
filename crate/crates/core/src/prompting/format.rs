//! Significant-digit number rendering for feature lists.

pub const DEFAULT_SIG_DIGITS: usize = 6;

const FIXED_MIN: i32 = -4;
const FIXED_MAX_EXCLUSIVE: i32 = 6;

/// Render `v` with `sig_digits` significant digits.
///
/// Positional notation is used when the rounded magnitude lies in
/// [1e-4, 1e6), scientific (`1.23457e-5`) otherwise. Trailing zeros and a
/// dangling decimal point are trimmed; zero renders as `0`.
pub fn format_value(v: f64, sig_digits: usize) -> String {
    let sig = sig_digits.max(1);
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.*e}", sig - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (FIXED_MIN..FIXED_MAX_EXCLUSIVE).contains(&exp) {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{v:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim_fraction(mantissa))
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
