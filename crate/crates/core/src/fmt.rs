//! Number formatting for CSV output: exact round-trip text for data files
//! and fixed 12-significant-digit text for reports.

/// Shortest decimal text that parses back to exactly `x`.
pub fn shortest(x: f64) -> String {
    let s = format!("{x:?}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

/// Formats `x` like C's `%.12g`: 12 significant digits, trailing zeros
/// removed, exponent notation outside `1e-4 <= |x| < 1e12`.
pub fn g12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();

    let mut out = String::new();
    if negative {
        out.push('-');
    }
    if (-4..12).contains(&exp) {
        if exp >= 0 {
            let split = (exp + 1) as usize;
            out.push_str(&digits[..split]);
            let frac = digits[split..].trim_end_matches('0');
            if !frac.is_empty() {
                out.push('.');
                out.push_str(frac);
            }
        } else {
            out.push_str("0.");
            for _ in 0..(-exp - 1) {
                out.push('0');
            }
            out.push_str(digits.trim_end_matches('0'));
        }
    } else {
        out.push_str(&digits[..1]);
        let frac = digits[1..].trim_end_matches('0');
        if !frac.is_empty() {
            out.push('.');
            out.push_str(frac);
        }
        out.push('e');
        out.push(if exp < 0 { '-' } else { '+' });
        out.push_str(&format!("{:02}", exp.abs()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::g12;

    #[test]
    fn matches_printf_g() {
        assert_eq!(g12(1.0), "1");
        assert_eq!(g12(0.6), "0.6");
        assert_eq!(g12(-0.02), "-0.02");
        assert_eq!(g12(1.6), "1.6");
        assert_eq!(g12(123456.5), "123456.5");
        assert_eq!(g12(1.0 / 3.0), "0.333333333333");
        assert_eq!(g12(0.0001), "0.0001");
        assert_eq!(g12(0.00001234), "1.234e-05");
        assert_eq!(g12(1e12), "1e+12");
        assert_eq!(g12(999999999999.0), "999999999999");
        assert_eq!(g12(-0.0), "0");
    }

    #[test]
    fn parses_back_to_twelve_digit_value() {
        for &x in &[0.1, 2.0 / 3.0, 1234.5678, 7.25e-7, 3.0e15] {
            let back: f64 = g12(x).parse().unwrap();
            assert!((back - x).abs() <= 1e-11 * x.abs());
        }
    }
}
