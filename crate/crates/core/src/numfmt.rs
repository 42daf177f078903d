//! Decimal text helpers shared by the model, bank and detection file writers.
//!
//! Reals written to text files are first rounded to a fixed number of
//! significant digits ("canonicalized"). A canonical value prints with `{}`
//! in at most that many digits and parses back to the identical `f64`, which
//! is what makes the text formats bit-exact on reload.

/// Rounds `x` to `digits` significant decimal digits.
pub fn canonical(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    let s = format!("{:.*e}", digits.saturating_sub(1), x);
    s.parse().expect("formatted float parses")
}

/// Formats `x` with `digits` significant digits in plain decimal notation.
pub fn format_sig(x: f64, digits: usize) -> String {
    let c = canonical(x, digits);
    if c == 0.0 {
        // avoid "-0"
        return "0".to_string();
    }
    format!("{c}")
}

/// Digits used for model reals (thresholds, tree weights, leaf values).
pub const MODEL_DIGITS: usize = 12;
/// Digits used for real-valued filter weights.
pub const BANK_DIGITS: usize = 9;
/// Digits used for detection coordinates and scores.
pub const DETECTION_DIGITS: usize = 6;
