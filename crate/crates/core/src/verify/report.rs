//! Report rows, the constants ledger and their CSV/JSON forms.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

/// One named scalar, optionally gated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    #[serde(with = "float_text")]
    pub value: f64,
    /// `None` for informational values.
    pub pass: Option<bool>,
}

/// Outcome of one experiment on one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub instance: String,
    pub params: BTreeMap<String, String>,
    pub measurements: Vec<Measurement>,
    /// Wall time; kept out of the CSV so that reruns compare byte-for-byte.
    #[serde(with = "float_text")]
    pub runtime_secs: f64,
}

impl Report {
    pub fn new(experiment: impl Into<String>, instance: impl Into<String>) -> Self {
        Self {
            experiment: experiment.into(),
            instance: instance.into(),
            params: BTreeMap::new(),
            measurements: Vec::new(),
            runtime_secs: 0.0,
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn measure(&mut self, name: &str, value: f64) -> &mut Self {
        self.measurements.push(Measurement { name: name.into(), value, pass: None });
        self
    }

    pub fn gate(&mut self, name: &str, value: f64, pass: bool) -> &mut Self {
        self.measurements.push(Measurement { name: name.into(), value, pass: Some(pass) });
        self
    }

    /// Records an error as a failed row instead of aborting.
    pub fn failure(experiment: &str, instance: &str, err: &Error) -> Self {
        let mut r = Self::new(experiment, instance);
        r.param("error", err.to_string().replace([',', '\n', ';'], " "));
        r.gate("completed", 0.0, false);
        r
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.measurements.iter().find(|m| m.name == name).map(|m| m.value)
    }

    pub fn passed(&self) -> bool {
        self.measurements.iter().all(|m| m.pass != Some(false))
    }

    pub fn gates(&self) -> impl Iterator<Item = &Measurement> {
        self.measurements.iter().filter(|m| m.pass.is_some())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }

    fn flat_params(&self) -> String {
        self.params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
    }
}

/// Floats as their shortest round-trip text, so `inf` and `NaN` survive JSON.
mod float_text {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub const CSV_HEADER: [&str; 6] = ["experiment", "instance", "params", "measurement", "value", "pass"];

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// One row per measurement, in report order.
pub fn write_csv<W: Write>(reports: &[Report], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    for r in reports {
        let params = r.flat_params();
        for m in &r.measurements {
            let pass = match m.pass {
                Some(true) => "true",
                Some(false) => "false",
                None => "",
            };
            w.write_record([r.experiment.as_str(), &r.instance, &params, &m.name, &m.value.to_string(), pass])
                .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_csv`]: consecutive rows sharing experiment, instance
/// and parameters form one report. Runtimes are not stored and read as 0.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<Report>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(csv_error)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Format(format!("unexpected CSV header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut out: Vec<Report> = Vec::new();
    for row in rd.records() {
        let row = row.map_err(csv_error)?;
        let value: f64 = row[4].parse().map_err(|_| Error::Format(format!("bad value {:?}", &row[4])))?;
        let pass = match &row[5] {
            "true" => Some(true),
            "false" => Some(false),
            "" => None,
            other => return Err(Error::Format(format!("bad pass flag {other:?}"))),
        };
        let same = out
            .last()
            .is_some_and(|r| r.experiment == row[0] && r.instance == row[1] && r.flat_params() == row[2]);
        if !same {
            let mut r = Report::new(&row[0], &row[1]);
            for kv in row[2].split(';').filter(|s| !s.is_empty()) {
                let (k, v) = kv.split_once('=').ok_or_else(|| Error::Format(format!("bad parameter {kv:?}")))?;
                r.params.insert(k.into(), v.into());
            }
            out.push(r);
        }
        out.last_mut().expect("pushed above").measurements.push(Measurement { name: row[3].into(), value, pass });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tag {
    Configured,
    Measured,
}

impl std::fmt::Display for Tag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Tag::Configured => "configured",
            Tag::Measured => "measured",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub name: String,
    #[serde(with = "float_text")]
    pub value: f64,
    pub tag: Tag,
    pub experiment: String,
}

/// Every constant a run used or produced, tagged by origin.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantsLedger {
    pub entries: Vec<LedgerEntry>,
}

impl ConstantsLedger {
    pub fn configured(&mut self, experiment: &str, name: &str, value: f64) {
        self.push(experiment, name, value, Tag::Configured);
    }

    pub fn measured(&mut self, experiment: &str, name: &str, value: f64) {
        self.push(experiment, name, value, Tag::Measured);
    }

    fn push(&mut self, experiment: &str, name: &str, value: f64, tag: Tag) {
        self.entries.push(LedgerEntry { name: name.into(), value, tag, experiment: experiment.into() });
    }

    /// Largest measured value of `name` over all experiments.
    pub fn max_measured(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .filter(|e| e.tag == Tag::Measured && e.name == name)
            .map(|e| e.value)
            .reduce(f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["experiment", "constant", "value", "tag"]).map_err(csv_error)?;
        for e in &self.entries {
            w.write_record([e.experiment.as_str(), &e.name, &e.value.to_string(), &e.tag.to_string()])
                .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut r = Report::new("weak_ln", "sphere-0");
        r.param("n", 2).param("tau", 0.25);
        r.measure("gamma", 1.0 / 3.0).gate("ratio", f64::INFINITY, false).measure("nan", f64::NAN);
        r.runtime_secs = 0.125;
        r
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let r = sample();
        let back = Report::from_json(&r.to_json()).unwrap();
        assert_eq!(back.measurements[0].value.to_bits(), r.measurements[0].value.to_bits());
        assert!(back.measurements[1].value.is_infinite());
        assert!(back.measurements[2].value.is_nan());
        assert_eq!(back.params, r.params);
        assert_eq!(back.runtime_secs, 0.125);
    }

    #[test]
    fn csv_round_trip_keeps_rows() {
        let mut a = sample();
        a.measurements.pop();
        let mut b = Report::new("gauge", "x");
        b.gate("div", 1e-7, true);
        let mut buf = Vec::new();
        write_csv(&[a.clone(), b.clone()], &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        a.runtime_secs = 0.0;
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn failures_fail() {
        let r = Report::failure("x", "y", &Error::EmptyMask);
        assert!(!r.passed());
        assert!(sample().measurements.iter().any(|m| m.pass == Some(false)));
    }
}
