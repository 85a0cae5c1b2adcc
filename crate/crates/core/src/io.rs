//! CSV ingestion for the measured-data formats.
//!
//! * reflection traces: `freq_hz,re,im`
//! * mode combs: `f_hz[,q_i[,q_i_sigma]]`
//! * time series: `t_s,df_over_f` or `t_s,f_hz` (converted against a
//!   reference frequency)
//! * per-mode loss tangents: `f_hz,q_tls` or `f_hz,q_tls_inv`

use crate::resonance::{ComplexTrace, ResonanceError};
use crate::stability::{FrequencySeries, StabilityError};
use crate::stack_fit::{CombMode, ModeComb, StackFitError};
use crate::Real;
use num_complex::Complex;
use std::io::Read;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("csv parse error: {0}")]
    Parse(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("row {row}: {problem}")]
    BadRow { row: usize, problem: String },
    #[error("series column must be `df_over_f` or `f_hz`, found neither")]
    UnknownSeriesColumn,
    #[error("`f_hz` series requires a reference frequency")]
    MissingReference,
    #[error(transparent)]
    Trace(#[from] ResonanceError),
    #[error(transparent)]
    Comb(#[from] StackFitError),
    #[error(transparent)]
    Series(#[from] StabilityError),
}

fn headers(reader: &mut csv::Reader<impl Read>) -> Result<Vec<String>, CsvError> {
    Ok(reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect())
}

fn field(record: &csv::StringRecord, idx: usize, row: usize) -> Result<Real, CsvError> {
    let raw = record.get(idx).ok_or(CsvError::BadRow {
        row,
        problem: format!("missing field {idx}"),
    })?;
    raw.trim().parse::<Real>().map_err(|e| CsvError::BadRow {
        row,
        problem: format!("`{raw}`: {e}"),
    })
}

/// Read a complex reflection trace (`freq_hz,re,im`).
pub fn read_trace_csv(
    r: impl Read,
    input_power: Option<Real>,
) -> Result<ComplexTrace<Real>, CsvError> {
    let mut reader = csv::Reader::from_reader(r);
    let hs = headers(&mut reader)?;
    let col = |name: &'static str| -> Result<usize, CsvError> {
        hs.iter().position(|h| h == name).ok_or(CsvError::MissingColumn(name))
    };
    let (fi, ri, ii) = (col("freq_hz")?, col("re")?, col("im")?);
    let mut freqs = Vec::new();
    let mut resp = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        freqs.push(field(&record, fi, row)?);
        resp.push(Complex::new(field(&record, ri, row)?, field(&record, ii, row)?));
    }
    Ok(ComplexTrace::new(freqs, resp, input_power)?)
}

/// Read a mode comb (`f_hz[,q_i[,q_i_sigma]]`).
pub fn read_comb_csv(r: impl Read) -> Result<ModeComb<Real>, CsvError> {
    let mut reader = csv::Reader::from_reader(r);
    let hs = headers(&mut reader)?;
    let fi = hs
        .iter()
        .position(|h| h == "f_hz")
        .ok_or(CsvError::MissingColumn("f_hz"))?;
    let qi = hs.iter().position(|h| h == "q_i");
    let si = hs.iter().position(|h| h == "q_i_sigma");
    let mut modes = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let frequency = field(&record, fi, row)?;
        let parse_opt = |idx: Option<usize>| -> Result<Option<Real>, CsvError> {
            match idx {
                Some(i) => match record.get(i).map(str::trim) {
                    None | Some("") => Ok(None),
                    Some(_) => Ok(Some(field(&record, i, row)?)),
                },
                None => Ok(None),
            }
        };
        modes.push(CombMode {
            frequency,
            q_i: parse_opt(qi)?,
            q_i_sigma: parse_opt(si)?,
        });
    }
    Ok(ModeComb::new(modes)?)
}

/// Read a fractional-frequency time series. `t_s,df_over_f` is used as-is;
/// `t_s,f_hz` is converted to (f − f_ref)/f_ref with the supplied reference.
pub fn read_series_csv(
    r: impl Read,
    reference_hz: Option<Real>,
) -> Result<FrequencySeries<Real>, CsvError> {
    let mut reader = csv::Reader::from_reader(r);
    let hs = headers(&mut reader)?;
    let ti = hs
        .iter()
        .position(|h| h == "t_s")
        .ok_or(CsvError::MissingColumn("t_s"))?;
    let (vi, absolute) = if let Some(i) = hs.iter().position(|h| h == "df_over_f") {
        (i, false)
    } else if let Some(i) = hs.iter().position(|h| h == "f_hz") {
        (i, true)
    } else {
        return Err(CsvError::UnknownSeriesColumn);
    };
    if absolute && reference_hz.is_none() {
        return Err(CsvError::MissingReference);
    }
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        ts.push(field(&record, ti, row)?);
        let v = field(&record, vi, row)?;
        ys.push(if absolute {
            let f_ref = reference_hz.unwrap();
            (v - f_ref) / f_ref
        } else {
            v
        });
    }
    Ok(FrequencySeries::from_timestamps(&ts, ys)?)
}

/// Read per-mode TLS tangents (`f_hz,q_tls` or `f_hz,q_tls_inv`), returned as
/// (frequency, 1/Q_TLS) pairs.
pub fn read_tls_csv(r: impl Read) -> Result<Vec<(Real, Real)>, CsvError> {
    let mut reader = csv::Reader::from_reader(r);
    let hs = headers(&mut reader)?;
    let fi = hs
        .iter()
        .position(|h| h == "f_hz")
        .ok_or(CsvError::MissingColumn("f_hz"))?;
    let (vi, inverse) = if let Some(i) = hs.iter().position(|h| h == "q_tls_inv") {
        (i, true)
    } else if let Some(i) = hs.iter().position(|h| h == "q_tls") {
        (i, false)
    } else {
        return Err(CsvError::MissingColumn("q_tls or q_tls_inv"));
    };
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let f = field(&record, fi, row)?;
        let v = field(&record, vi, row)?;
        out.push((f, if inverse { v } else { v.recip() }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_csv_round_trip() {
        let mut text = String::from("freq_hz,re,im\n");
        for i in 0..32 {
            text.push_str(&format!("{},{},{}\n", 5e9 + i as f64 * 100.0, 1.0, -0.25));
        }
        let trace = read_trace_csv(text.as_bytes(), Some(1e-10)).unwrap();
        assert_eq!(trace.len(), 32);
        assert_eq!(trace.input_power, Some(1e-10));
        assert_eq!(trace.response()[3].im, -0.25);
    }

    #[test]
    fn comb_csv_optional_columns() {
        let text = "f_hz,q_i,q_i_sigma\n4.0e9,1e7,1e5\n4.0127e9,,\n4.0254e9,2e7,\n";
        let comb = read_comb_csv(text.as_bytes()).unwrap();
        assert_eq!(comb.modes.len(), 3);
        assert_eq!(comb.modes[0].q_i, Some(1e7));
        assert_eq!(comb.modes[1].q_i, None);
        assert_eq!(comb.modes[2].q_i_sigma, None);
    }

    #[test]
    fn series_csv_absolute_frequency_conversion() {
        let mut text = String::from("t_s,f_hz\n");
        for i in 0..40 {
            text.push_str(&format!("{},{}\n", i as f64 * 37.0, 5e9 + i as f64));
        }
        assert!(matches!(
            read_series_csv(text.as_bytes(), None),
            Err(CsvError::MissingReference)
        ));
        let s = read_series_csv(text.as_bytes(), Some(5e9)).unwrap();
        assert!((s.values()[10] - 10.0 / 5e9).abs() < 1e-18);
    }

    #[test]
    fn bad_rows_are_reported_with_position() {
        let text = "freq_hz,re,im\n1.0,0.0,0.0\nnot_a_number,0,0\n";
        match read_trace_csv(text.as_bytes(), None) {
            Err(CsvError::BadRow { row: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tls_csv_accepts_q_or_inverse() {
        let inv = "f_hz,q_tls_inv\n4e9,1e-7\n5e9,2e-7\n";
        let v = read_tls_csv(inv.as_bytes()).unwrap();
        assert_eq!(v[1], (5e9, 2e-7));
        let q = "f_hz,q_tls\n4e9,1e7\n";
        let v = read_tls_csv(q.as_bytes()).unwrap();
        assert!((v[0].1 - 1e-7).abs() < 1e-20);
    }
}
