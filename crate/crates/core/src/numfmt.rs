//! Round-trip-exact float formatting for files the toolkit writes.
//!
//! All numeric output uses 17 significant digits, enough to reconstruct the
//! exact `f64` bit pattern on read-back, so a value that travels through an
//! exchange file compares bit-identical to the in-process value.

/// Format with 17 significant digits (scientific notation).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parse a float previously written by [`fmt_f64`] (or any valid literal).
pub fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let values = [
            0.0,
            -0.0,
            1.0,
            -1.0,
            0.1,
            2.0 / 3.0,
            f64::MIN_POSITIVE,
            1.234_567_890_123_456_7e300,
            -9.876_543_210_987_654e-200,
            std::f64::consts::PI,
        ];
        for &v in &values {
            let back = parse_f64(&fmt_f64(v)).unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "value {v}");
        }
    }

    #[test]
    fn round_trip_random_bits() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        while checked < 2000 {
            let v = f64::from_bits(rng.gen::<u64>());
            if !v.is_finite() {
                continue;
            }
            let back = parse_f64(&fmt_f64(v)).unwrap();
            assert_eq!(v.to_bits(), back.to_bits());
            checked += 1;
        }
    }
}
