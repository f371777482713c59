//! Locale-free number formatting for CSV output.

/// Shortest rendering with at most 12 significant digits: fixed notation
/// for exponents in `-5..12`, scientific otherwise, trailing zeros trimmed.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // Round once in scientific form so the exponent reflects any carry.
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// `sig12` for present values, empty cell otherwise.
pub fn cell(x: Option<f64>) -> String {
    x.map(sig12).unwrap_or_default()
}
