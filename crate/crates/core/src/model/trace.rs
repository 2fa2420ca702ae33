use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace has no samples")]
    Empty,
    #[error("timestamps must be strictly increasing (index {index}: {prev} then {next})")]
    NonIncreasingTime { index: usize, prev: f64, next: f64 },
    #[error("signal `{name}` has {got} samples, expected {expected}")]
    LengthMismatch { name: String, got: usize, expected: usize },
    #[error("non-finite value in `{name}` at index {index}")]
    NonFinite { name: String, index: usize },
    #[error("unit given for unknown signal `{0}`")]
    UnknownUnit(String),
    #[error("signal name `{0}` is reserved or empty")]
    BadSignalName(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv header must start with `t`")]
    CsvHeader,
    #[error("csv row {row}: cannot parse `{value}` as a number")]
    CsvValue { row: usize, value: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A time-indexed, multi-signal record of one rollout.
///
/// Samples are interpreted as sample-and-hold: the value at `times[i]` holds
/// until `times[i + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    times: Vec<f64>,
    signals: BTreeMap<String, Vec<f64>>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    units: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct RawTrace {
    times: Vec<f64>,
    signals: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    units: BTreeMap<String, String>,
}

impl<'de> Deserialize<'de> for Trace {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawTrace::deserialize(deserializer)?;
        Trace::with_units(raw.times, raw.signals, raw.units).map_err(serde::de::Error::custom)
    }
}

impl Trace {
    pub fn new(times: Vec<f64>, signals: BTreeMap<String, Vec<f64>>) -> Result<Self, TraceError> {
        Self::with_units(times, signals, BTreeMap::new())
    }

    pub fn with_units(
        times: Vec<f64>,
        signals: BTreeMap<String, Vec<f64>>,
        units: BTreeMap<String, String>,
    ) -> Result<Self, TraceError> {
        if times.is_empty() {
            return Err(TraceError::Empty);
        }
        for (index, t) in times.iter().enumerate() {
            if !t.is_finite() {
                return Err(TraceError::NonFinite { name: "t".into(), index });
            }
        }
        for (i, w) in times.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(TraceError::NonIncreasingTime { index: i + 1, prev: w[0], next: w[1] });
            }
        }
        for (name, series) in &signals {
            if name.is_empty() || name == "t" {
                return Err(TraceError::BadSignalName(name.clone()));
            }
            if series.len() != times.len() {
                return Err(TraceError::LengthMismatch {
                    name: name.clone(),
                    got: series.len(),
                    expected: times.len(),
                });
            }
            if let Some(index) = series.iter().position(|v| !v.is_finite()) {
                return Err(TraceError::NonFinite { name: name.clone(), index });
            }
        }
        if let Some(name) = units.keys().find(|k| !signals.contains_key(*k)) {
            return Err(TraceError::UnknownUnit(name.clone()));
        }
        Ok(Self { times, signals, units })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn signal(&self, name: &str) -> Option<&[f64]> {
        self.signals.get(name).map(Vec::as_slice)
    }

    pub fn signal_names(&self) -> impl Iterator<Item = &str> {
        self.signals.keys().map(String::as_str)
    }

    pub fn signals(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.signals
    }

    pub fn unit(&self, name: &str) -> Option<&str> {
        self.units.get(name).map(String::as_str)
    }

    pub fn units(&self) -> &BTreeMap<String, String> {
        &self.units
    }

    /// Samples `range` as a new trace; `None` when the range is empty.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Option<Trace> {
        if range.is_empty() {
            return None;
        }
        Some(Trace {
            times: self.times[range.clone()].to_vec(),
            signals: self.signals.iter().map(|(k, v)| (k.clone(), v[range.clone()].to_vec())).collect(),
            units: self.units.clone(),
        })
    }

    /// Reads the CSV layout `t,<signal1>,<signal2>,...`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, TraceError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0).map(str::trim) != Some("t") {
            return Err(TraceError::CsvHeader);
        }
        let names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
        let mut times = Vec::new();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let row = i + 2;
            let parse =
                |s: &str| s.trim().parse::<f64>().map_err(|_| TraceError::CsvValue { row, value: s.to_string() });
            times.push(parse(&record[0])?);
            for (col, field) in columns.iter_mut().zip(record.iter().skip(1)) {
                col.push(parse(field)?);
            }
        }
        let mut signals = BTreeMap::new();
        for (name, col) in names.into_iter().zip(columns) {
            if signals.insert(name.clone(), col).is_some() {
                return Err(TraceError::BadSignalName(name));
            }
        }
        Trace::new(times, signals)
    }

    /// Writes CSV with shortest round-trip decimal formatting, LF line endings.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TraceError> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend(self.signals.keys().cloned());
        wtr.write_record(&header)?;
        for i in 0..self.times.len() {
            let mut row = vec![fmt_float(self.times[i])];
            row.extend(self.signals.values().map(|s| fmt_float(s[i])));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self, TraceError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }

    /// Loads a `.json` or `.csv` trace file, chosen by extension.
    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let bytes = std::fs::read(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Self::from_json_str(&String::from_utf8_lossy(&bytes)),
            _ => Self::read_csv(bytes.as_slice()),
        }
    }
}

fn fmt_float(v: f64) -> String {
    // `{:?}` keeps the shortest representation that parses back to the same bits.
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trace {
        Trace::new(
            vec![0.0, 0.1, 0.2],
            BTreeMap::from([
                ("contact".to_string(), vec![20.0, 600.5, 1e-17]),
                ("z".to_string(), vec![0.3, 0.25, -0.125]),
            ]),
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_traces() {
        assert!(matches!(Trace::new(vec![], BTreeMap::new()), Err(TraceError::Empty)));
        assert!(matches!(
            Trace::new(vec![0.0, 0.0], BTreeMap::new()),
            Err(TraceError::NonIncreasingTime { index: 1, .. })
        ));
        assert!(matches!(
            Trace::new(vec![0.0, 1.0], BTreeMap::from([("x".into(), vec![1.0])])),
            Err(TraceError::LengthMismatch { .. })
        ));
        assert!(matches!(
            Trace::new(vec![0.0], BTreeMap::from([("x".into(), vec![f64::NAN])])),
            Err(TraceError::NonFinite { .. })
        ));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let trace = sample();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,contact,z\n"));
        assert!(!text.contains('\r'));
        assert_eq!(Trace::read_csv(buf.as_slice()).unwrap(), trace);
    }

    #[test]
    fn json_layout() {
        let trace = Trace::from_json_str(r#"{"times":[0,1],"signals":{"x":[1,2]},"units":{"x":"m"}}"#).unwrap();
        assert_eq!(trace.unit("x"), Some("m"));
        assert_eq!(Trace::from_json_str(&trace.to_json_string()).unwrap(), trace);
        assert!(Trace::from_json_str(r#"{"times":[1,0],"signals":{}}"#).is_err());
    }

    #[test]
    fn csv_reports_bad_cell() {
        let err = Trace::read_csv("t,x\n0,1\n1,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::CsvValue { row: 3, .. }));
    }
}
