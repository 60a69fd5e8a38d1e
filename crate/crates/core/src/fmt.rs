use std::io;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, Serializer};

/// Scientific notation with 17 significant digits; parses back to the same `f64`.
pub fn sci17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Compact JSON whose floats are written with [`sci17`]. Non-finite floats
/// become `null`.
struct Sci17;

impl Formatter for Sci17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(sci17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn write_null<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        CompactFormatter.write_null(writer)
    }
}

/// Serializes `value` as one line of JSON with 17-digit floats.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, Sci17);
    value.serialize(&mut ser).expect("in-memory JSON serialization");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for x in [0.1, -1.0 / 3.0, 6.02214076e23, f64::MIN_POSITIVE, 0.0, -0.0] {
            assert_eq!(sci17(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn json_floats() {
        let s = to_json(&(0.1, f64::NAN, vec![1.0f64], "a"));
        assert_eq!(s, "[1.0000000000000001e-1,null,[1.0000000000000000e0],\"a\"]");
        let back: (f64, Option<f64>, Vec<f64>, String) = serde_json::from_str(&s).unwrap();
        assert_eq!(back.0, 0.1);
        assert_eq!(back.1, None);
    }
}
