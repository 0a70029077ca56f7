//! Interval load/generation records and their CSV form.
//!
//! ```text
//! timestamp,member_id,load_kwh,generation_kwh
//! 2018-01-01T00:00:00Z,h01,0.41,0
//! ```

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 4] = ["timestamp", "member_id", "load_kwh", "generation_kwh"];

/// Observed energy of one member over one data interval starting at `timestamp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub timestamp: DateTime<Utc>,
    pub member_id: String,
    /// kWh consumed.
    pub load: f64,
    /// kWh generated.
    pub generation: f64,
}

/// A hole in the timestamp sequence: no records strictly between the two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub after: DateTime<Utc>,
    pub before: DateTime<Utc>,
}

#[derive(Debug, Clone, Default)]
pub struct TimeSeries {
    /// Sorted by `(timestamp, member_id)`.
    pub records: Vec<IntervalRecord>,
    /// Smallest spacing between distinct timestamps, minutes.
    pub resolution_minutes: Option<u32>,
    pub gaps: Vec<Gap>,
    pub warnings: Vec<String>,
}

pub fn load_timeseries_file(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_timeseries(std::io::BufReader::new(file))
}

/// Parse the interval CSV. Timestamps must be non-decreasing in file order
/// and each `(timestamp, member_id)` may appear once.
pub fn load_timeseries<R: Read>(reader: R) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let header = rdr.headers()?.clone();
    let mut series = TimeSeries::default();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        let msg = "empty time series input".to_string();
        log::warn!("{msg}");
        series.warnings.push(msg);
        return Ok(series);
    }
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::MalformedRow {
            line: 1,
            message: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }

    let mut seen: HashSet<(DateTime<Utc>, String)> = HashSet::new();
    let mut previous: Option<DateTime<Utc>> = None;
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != 4 {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected 4 fields, found {}", row.len()),
            });
        }
        let timestamp = DateTime::parse_from_rfc3339(&row[0])
            .map_err(|e| Error::MalformedRow {
                line,
                message: format!("timestamp `{}`: {e}", &row[0]),
            })?
            .with_timezone(&Utc);
        let member_id = row[1].to_string();
        if member_id.is_empty() {
            return Err(Error::MalformedRow {
                line,
                message: "empty member_id".into(),
            });
        }
        let load = parse_energy(&row[2], "load_kwh", line)?;
        let generation = parse_energy(&row[3], "generation_kwh", line)?;

        if let Some(prev) = previous {
            if timestamp < prev {
                return Err(Error::NonMonotoneTimestamp {
                    line,
                    timestamp: format_timestamp(&timestamp),
                    previous: format_timestamp(&prev),
                });
            }
        }
        previous = Some(timestamp);
        if !seen.insert((timestamp, member_id.clone())) {
            return Err(Error::DuplicateKey {
                line,
                timestamp: format_timestamp(&timestamp),
                member_id,
            });
        }
        series.records.push(IntervalRecord {
            timestamp,
            member_id,
            load,
            generation,
        });
    }

    if series.records.is_empty() {
        let msg = "time series has a header but no records".to_string();
        log::warn!("{msg}");
        series.warnings.push(msg);
        return Ok(series);
    }
    series
        .records
        .sort_by(|x, y| (x.timestamp, &x.member_id).cmp(&(y.timestamp, &y.member_id)));
    let (resolution, gaps) = scan_spacing(&series.records);
    series.resolution_minutes = resolution;
    for gap in &gaps {
        let msg = format!(
            "gap in time series between {} and {}",
            format_timestamp(&gap.after),
            format_timestamp(&gap.before)
        );
        log::warn!("{msg}");
        series.warnings.push(msg);
    }
    series.gaps = gaps;
    Ok(series)
}

fn parse_energy(field: &str, name: &str, line: u64) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| Error::MalformedRow {
        line,
        message: format!("{name} `{field}` is not a number"),
    })?;
    if !v.is_finite() || v < 0.0 {
        return Err(Error::MalformedRow {
            line,
            message: format!("{name} must be finite and >= 0, got {field}"),
        });
    }
    Ok(v)
}

/// Resolution (smallest step between distinct timestamps) and the gaps
/// wider than it. `records` must be sorted by timestamp.
pub fn scan_spacing(records: &[IntervalRecord]) -> (Option<u32>, Vec<Gap>) {
    let mut stamps: Vec<DateTime<Utc>> = records.iter().map(|r| r.timestamp).collect();
    stamps.dedup();
    let step = stamps
        .windows(2)
        .map(|w| (w[1] - w[0]).num_seconds())
        .filter(|&s| s > 0)
        .min();
    let Some(step) = step else {
        return (None, Vec::new());
    };
    let gaps = stamps
        .windows(2)
        .filter(|w| (w[1] - w[0]).num_seconds() > step)
        .map(|w| Gap {
            after: w[0],
            before: w[1],
        })
        .collect();
    (Some((step / 60).max(1) as u32), gaps)
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn write_timeseries<W: Write>(records: &[IntervalRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            format_timestamp(&r.timestamp),
            r.member_id.clone(),
            r.load.to_string(),
            r.generation.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
