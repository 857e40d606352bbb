//! Number formatting for CSV (6 significant digits) and human tables.

/// Six significant digits, scientific notation outside `[1e-5, 1e6)`.
/// Non-finite values print as `Inf`, `-Inf` or `NA`.
pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "NA".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "Inf".into() } else { "-Inf".into() };
    }
    if x == 0.0 {
        return "0.00000".into();
    }
    // Take the exponent after rounding so 999999.7 does not gain a digit.
    let sci = format!("{x:.5e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..].parse().expect("exponent");
    if (-5..6).contains(&exp) {
        format!("{:.*}", (5 - exp) as usize, x)
    } else {
        sci
    }
}

pub fn sig6_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), sig6)
}

/// Two decimals for tables; `-` for an unbounded side.
pub fn dec2(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.2}")
    } else {
        "-".into()
    }
}

/// `H * alpha`: how many of `h` in-control points are expected outside the
/// central `1 - alpha` band.
pub fn expected_exceedance(h: usize, alpha: f64) -> f64 {
    h as f64 * alpha
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(25.0606), "25.0606");
        assert_eq!(sig6(3.0), "3.00000");
        assert_eq!(sig6(0.000123456789), "0.000123457");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(999999.7), "1.00000e6");
        assert_eq!(sig6(-7.4251234), "-7.42512");
        assert_eq!(sig6(1.23e-9), "1.23000e-9");
        assert_eq!(sig6(f64::NEG_INFINITY), "-Inf");
        assert_eq!(sig6(f64::NAN), "NA");
        assert_eq!(sig6(0.0), "0.00000");
    }

    #[test]
    fn table_decimals() {
        assert_eq!(dec2(45.164), "45.16");
        assert_eq!(dec2(f64::NEG_INFINITY), "-");
    }

    #[test]
    fn exceedance_examples() {
        assert!((expected_exceedance(66, 0.05) - 3.3).abs() < 1e-12);
        assert!((expected_exceedance(66, 0.01) - 0.66).abs() < 1e-12);
        assert_eq!(expected_exceedance(0, 0.05), 0.0);
    }
}
