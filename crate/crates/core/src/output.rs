//! Text formats shared by every artifact writer.
//!
//! Numbers are always written with 17 significant digits so that a value
//! read back from disk is bit-identical to the one that was written.

use std::io::Write;

use serde::ser::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::Result;

/// Formats `x` with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// A float that serializes into JSON as 17-significant-digit text.
/// Non-finite values become `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num17(pub f64);

impl Serialize for Num17 {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return serializer.serialize_none();
        }
        let raw = RawValue::from_string(fmt17(self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

pub fn nums(values: &[f64]) -> Vec<Num17> {
    values.iter().copied().map(Num17).collect()
}

/// Appends `record` as one NDJSON line.
pub fn write_ndjson<W: Write, T: Serialize>(w: &mut W, record: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, record)?;
    w.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for &x in &[0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt17(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn json_numbers_are_raw_text() {
        #[derive(serde::Serialize)]
        struct R {
            x: Num17,
            y: Num17,
        }
        let s = serde_json::to_string(&R { x: Num17(0.5), y: Num17(f64::NAN) }).unwrap();
        assert_eq!(s, r#"{"x":5.0000000000000000e-1,"y":null}"#);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["x"].as_f64(), Some(0.5));
    }
}
