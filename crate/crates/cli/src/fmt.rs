//! Number formatting for human-facing reports: fixed at 6 significant
//! digits. Machine outputs (JSON/CSV) keep full precision instead.

/// Format with 6 significant digits, plain decimal for moderate
/// magnitudes and scientific notation otherwise.
pub fn sig6(v: f64) -> String {
    if v == 0.0 {
        return "0.000000".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.5e}")
    }
}

#[cfg(test)]
mod tests {
    use super::sig6;

    #[test]
    fn moderate_magnitudes_are_plain() {
        assert_eq!(sig6(0.004891), "0.00489100");
        assert_eq!(sig6(1.0), "1.00000");
        assert_eq!(sig6(123.456789), "123.457");
    }

    #[test]
    fn extremes_go_scientific() {
        assert_eq!(sig6(1.23456789e-7), "1.23457e-7");
        assert_eq!(sig6(9.87654321e8), "9.87654e8");
    }

    #[test]
    fn zero_and_negative() {
        assert_eq!(sig6(0.0), "0.000000");
        assert_eq!(sig6(-0.5), "-0.500000");
    }
}
