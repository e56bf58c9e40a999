//! Number formatting for machine-readable output.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, Serializer};

/// 17 significant digits in scientific notation. Round-trips every f64 and
/// is valid JSON number syntax.
pub fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

/// 6 significant digits for human-facing tables.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || (1e-4..1e6).contains(&v.abs()) {
        let digits = 5 - v.abs().log10().floor().max(-4.0) as i32;
        format!("{:.*}", digits.max(0) as usize, v)
    } else {
        format!("{v:.5e}")
    }
}

struct Sig17Formatter;

impl Formatter for Sig17Formatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(sig17(value).as_bytes())
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        w.write_all(sig17(value as f64).as_bytes())
    }
}

/// Serialize to JSON with every float written at 17 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, Sig17Formatter);
    value.serialize(&mut ser).expect("in-memory JSON serialization");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig17_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1.798, 5.819e7, -8.99e5, 1e-300, 0.0] {
            let s = sig17(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
        }
    }

    #[test]
    fn json_floats_parse_back() {
        let s = to_json(&vec![0.1, 2.5e-7]);
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![0.1, 2.5e-7]);
    }

    #[test]
    fn sig6_examples() {
        assert_eq!(sig6(-0.000353083), "-0.000353083");
        assert_eq!(sig6(1.79786), "1.79786");
        assert_eq!(sig6(-0.566825), "-0.566825");
        assert_eq!(sig6(5.819e7), "5.81900e7");
    }
}
