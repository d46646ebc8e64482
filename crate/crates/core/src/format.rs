//! Locale-independent number formatting for exported tables.

use alloc::format;
use alloc::string::{String, ToString};

/// Significant digits used in every exported number.
pub const EXPORT_SIGNIFICANT_DIGITS: usize = 12;

/// Formats `v` like C's `%.{digits}g`: the shorter of fixed and scientific
/// notation, trailing zeros removed, `.` as decimal separator.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, v)).to_string()
    }
}

/// [`format_significant`] with the export precision.
pub fn format_export(v: f64) -> String {
    format_significant(v, EXPORT_SIGNIFICANT_DIGITS)
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
