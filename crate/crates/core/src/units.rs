//! SPICE-style numeric values with SI suffixes.

use std::fmt::Write;

/// Scale suffixes recognised after a number, longest first so `meg` wins over `m`.
const SUFFIXES: &[(&str, i32)] = &[
    ("meg", 6),
    ("f", -15),
    ("p", -12),
    ("n", -9),
    ("u", -6),
    ("m", -3),
    ("k", 3),
    ("g", 9),
    ("t", 12),
];

/// Parse `50`, `1.5e-3`, `30f`, `2.2meg`, `30fF`. Trailing alphabetic unit
/// names after the suffix are ignored, as SPICE does.
pub fn parse_value(text: &str) -> Option<f64> {
    let text = text.trim();
    let bytes = text.as_bytes();
    let mut end = 0;
    if end < bytes.len() && (bytes[end] == b'+' || bytes[end] == b'-') {
        end += 1;
    }
    let digits_start = end;
    while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
        end += 1;
    }
    if end == digits_start {
        return None;
    }
    let mut has_exp = false;
    if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
        let mut probe = end + 1;
        if probe < bytes.len() && (bytes[probe] == b'+' || bytes[probe] == b'-') {
            probe += 1;
        }
        let exp_digits = probe;
        while probe < bytes.len() && bytes[probe].is_ascii_digit() {
            probe += 1;
        }
        if probe > exp_digits {
            end = probe;
            has_exp = true;
        }
    }
    let literal = &text[..end];
    let rest = text[end..].to_ascii_lowercase();
    if !rest.chars().all(|c| c.is_ascii_alphabetic()) {
        return None;
    }
    let exponent = SUFFIXES
        .iter()
        .find(|(s, _)| rest.starts_with(s))
        .map(|&(_, e)| e);
    match exponent {
        None => literal.parse().ok(),
        // Splice the scale into the literal so the result is correctly
        // rounded rather than the product of two rounded numbers.
        Some(e) if !has_exp => format!("{literal}e{e}").parse().ok(),
        Some(e) => literal.parse::<f64>().ok().map(|v| v * 10f64.powi(e)),
    }
}

/// Shortest text that parses back to exactly `value`.
pub fn format_value(value: f64) -> String {
    let mut s = String::new();
    let mag = value.abs();
    if value == 0.0 || (1e-3..1e7).contains(&mag) {
        write!(s, "{value}").unwrap();
    } else {
        write!(s, "{value:e}").unwrap();
    }
    s
}
