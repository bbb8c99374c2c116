//! Number formatting for CSV output.

/// Shortest representation that parses back to the same `f64`, switching to
/// exponent notation for very small or very large magnitudes.
pub fn number(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for x in [
            0.0,
            1.0,
            0.5,
            1e-6,
            2.318704027401623e-217,
            -3.2e-7,
            123.25,
            1e20,
            f64::MIN_POSITIVE,
        ] {
            let s = number(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(number(1e-6), "1e-6");
        assert_eq!(number(0.25), "0.25");
    }
}
