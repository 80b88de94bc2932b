//! CSV ingestion of a bottom-level series.
//!
//! Expected schema: header `timestamp,value`, one row per bottom period,
//! ISO-8601 UTC timestamps, values in native units. Gaps are rejected.

use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime, Utc};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub start: DateTime<Utc>,
    pub period: Duration,
    pub values: Vec<f64>,
}

impl Series {
    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + self.period * index as i32
    }
}

/// Parses RFC 3339 timestamps, or naive `YYYY-MM-DDTHH:MM[:SS]` read as UTC.
pub fn parse_timestamp(raw: &str) -> std::result::Result<DateTime<Utc>, String> {
    let raw = raw.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Ok(t.and_utc());
        }
    }
    Err(format!("unrecognised timestamp `{raw}`"))
}

const MAX_LISTED_GAPS: usize = 10;

pub fn ingest_csv(path: &Path, period: Duration) -> Result<Series> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;

    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "value" {
        return Err(Error::Schema(format!(
            "expected header `timestamp,value`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut stamps: Vec<DateTime<Utc>> = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Schema(format!("row {row}: {e}")))?;
        let stamp =
            parse_timestamp(&record[0]).map_err(|e| Error::Schema(format!("row {row}: {e}")))?;
        let value: f64 = record[1]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::Schema(format!("row {row}: invalid value `{}`", &record[1])))?;
        if let Some(prev) = stamps.last() {
            if stamp <= *prev {
                return Err(Error::NonMonotoneTimestamps {
                    row,
                    timestamp: stamp.to_rfc3339(),
                });
            }
        }
        stamps.push(stamp);
        values.push(value);
    }
    let start = *stamps
        .first()
        .ok_or_else(|| Error::Schema("file has no data rows".into()))?;

    let mut missing = Vec::new();
    let mut missing_count = 0usize;
    for (i, pair) in stamps.windows(2).enumerate() {
        let step = pair[1] - pair[0];
        if step == period {
            continue;
        }
        let off_grid = (step.num_seconds() % period.num_seconds()) != 0;
        if off_grid {
            return Err(Error::Schema(format!(
                "row {}: timestamp {} is off the {}-minute grid",
                i + 3,
                pair[1].to_rfc3339(),
                period.num_minutes()
            )));
        }
        let mut t = pair[0] + period;
        while t < pair[1] {
            missing_count += 1;
            if missing.len() < MAX_LISTED_GAPS {
                missing.push(t.to_rfc3339());
            }
            t += period;
        }
    }
    if missing_count > 0 {
        let mut listed = missing.join(", ");
        if missing_count > missing.len() {
            listed.push_str(&format!(" and {} more", missing_count - missing.len()));
        }
        return Err(Error::Gap(listed));
    }

    Ok(Series {
        start,
        period,
        values,
    })
}
