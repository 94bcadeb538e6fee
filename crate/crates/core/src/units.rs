//! Numeric values with engineering suffixes.
//!
//! Suffixes are case-sensitive single letters: `T G M k m u n p f`
//! (`K` is also accepted for kilo). `inf` denotes an infinite value and is
//! only meaningful where the caller allows it.

/// Parses a value such as `2.5k`, `40m`, `1e3` or `inf`.
pub fn parse_value(token: &str) -> Result<f64, String> {
    if token.eq_ignore_ascii_case("inf") {
        return Ok(f64::INFINITY);
    }
    let (mantissa, scale) = match token.char_indices().last() {
        Some((i, c)) if c.is_ascii_alphabetic() => {
            let scale = match c {
                'T' => 1e12,
                'G' => 1e9,
                'M' => 1e6,
                'k' | 'K' => 1e3,
                'm' => 1e-3,
                'u' => 1e-6,
                'n' => 1e-9,
                'p' => 1e-12,
                'f' => 1e-15,
                _ => return Err(format!("unknown suffix '{c}' in '{token}'")),
            };
            (&token[..i], Some(scale))
        }
        _ => (token, None),
    };
    let base: f64 = mantissa
        .parse()
        .map_err(|_| format!("invalid number '{token}'"))?;
    if !base.is_finite() {
        return Err(format!("invalid number '{token}'"));
    }
    Ok(match scale {
        Some(s) if s >= 1.0 => base * s,
        // Dividing keeps "40m" == 0.04 exactly.
        Some(s) => base / (1.0 / s).round(),
        None => base,
    })
}

/// Formats a value so that [`parse_value`] reads back the identical `f64`.
pub fn format_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v:?}")
    }
}

/// Formats ohms in the `3.000e3 Ω` style used by the reports.
pub fn format_ohms(v: f64) -> String {
    if v.is_infinite() {
        "inf Ω".to_string()
    } else {
        format!("{v:.3e} Ω")
    }
}
