use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-client outcome. Times are seconds since the first snapshot of the
/// simulated sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompromiseRecord {
    pub client_id: u64,
    pub first_compromise_time: Option<i64>,
    pub circuits_built: u64,
    pub circuits_compromised: u64,
}

impl CompromiseRecord {
    pub fn new(client_id: u64) -> Self {
        CompromiseRecord {
            client_id,
            first_compromise_time: None,
            circuits_built: 0,
            circuits_compromised: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.first_compromise_time.is_some() != (self.circuits_compromised > 0) {
            return Err(Error::InvalidInput(format!(
                "client {}: first_compromise_time must be set exactly when circuits were compromised",
                self.client_id
            )));
        }
        if self.circuits_compromised > self.circuits_built {
            return Err(Error::InvalidInput(format!(
                "client {}: more compromised than built circuits",
                self.client_id
            )));
        }
        Ok(())
    }
}

/// Writes `client_id,first_compromise_time,circuits_built,circuits_compromised`
/// rows; a client never compromised has an empty time field.
pub fn write_records_csv(records: &[CompromiseRecord], writer: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in records {
        wtr.serialize(r)?;
    }
    if records.is_empty() {
        wtr.write_record(["client_id", "first_compromise_time", "circuits_built", "circuits_compromised"])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_records_csv(reader: impl Read) -> Result<Vec<CompromiseRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["client_id", "first_compromise_time", "circuits_built", "circuits_compromised"];
    if headers.iter().ne(expected) {
        return Err(Error::parse(1, format!("expected header {}", expected.join(","))));
    }
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let record: CompromiseRecord = row?;
        record.validate()?;
        out.push(record);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub time: i64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub points: Vec<CurvePoint>,
}

impl TimeSeries {
    pub fn fractions(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.fraction).collect()
    }
}

/// Fraction of clients compromised by time `t`, sampled at
/// `t_k = horizon * k / resolution` for `k = 0..=resolution`.
pub fn compromise_curve(records: &[CompromiseRecord], horizon: i64, resolution: usize) -> Result<TimeSeries> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no records".into()));
    }
    if horizon < 0 || resolution == 0 {
        return Err(Error::InvalidInput("horizon must be non-negative and resolution positive".into()));
    }
    let mut times: Vec<i64> = records.iter().filter_map(|r| r.first_compromise_time).collect();
    times.sort_unstable();
    let n = records.len() as f64;
    let points = (0..=resolution)
        .map(|k| {
            let t = (horizon as i128 * k as i128 / resolution as i128) as i64;
            let hit = times.partition_point(|&x| x <= t);
            CurvePoint {
                time: t,
                fraction: hit as f64 / n,
            }
        })
        .collect();
    Ok(TimeSeries { points })
}
