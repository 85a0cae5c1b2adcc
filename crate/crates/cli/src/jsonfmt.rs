//! Deterministic JSON emission: every float is rendered with exactly twelve
//! significant digits so identical inputs produce byte-identical reports, and
//! files are written atomically (write to a sibling temp file, then rename).

use anyhow::{Context, Result};
use serde::{Serialize, Serializer};
use std::path::Path;

/// A float that serializes as a JSON number with 12 significant digits.
/// Non-finite values serialize as null.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct J(pub f64);

impl From<f64> for J {
    fn from(v: f64) -> Self {
        J(v)
    }
}

impl Serialize for J {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return serializer.serialize_none();
        }
        let text = format!("{:.11e}", self.0);
        let raw = serde_json::value::RawValue::from_string(text)
            .map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

/// Serialize a report and write it atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value).context("serializing report")?;
    body.push('\n');
    write_atomic(path, body.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)
        .with_context(|| format!("writing `{}`", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("renaming into `{}`", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        let s = serde_json::to_string(&J(12.724072071242837e6)).unwrap();
        assert_eq!(s, "1.27240720712e7");
        let s = serde_json::to_string(&J(-3.0)).unwrap();
        assert_eq!(s, "-3.00000000000e0");
        let s = serde_json::to_string(&J(f64::INFINITY)).unwrap();
        assert_eq!(s, "null");
    }

    #[test]
    fn parses_back_as_json_number() {
        let s = serde_json::to_string(&vec![J(1.5), J(2.5e-7)]).unwrap();
        let v: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(v, vec![1.5, 2.5e-7]);
    }
}
