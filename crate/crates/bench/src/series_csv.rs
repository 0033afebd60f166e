//! `timestamp,ASSET1,...,ASSETn` files with ISO-8601 UTC hourly timestamps.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use tkat_core::data::RawSeriesTable;

use crate::error::{BenchError, Result};

const NAIVE_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

/// Unix seconds from RFC 3339 or a naive timestamp read as UTC.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    let s = s.strip_suffix('Z').unwrap_or(s);
    NAIVE_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|t| t.and_utc().timestamp())
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

/// Parses a series table; `target` defaults to the first value column.
pub fn read_series(reader: impl Read, path: &Path, target: Option<&str>) -> Result<RawSeriesTable> {
    let csv_err = |source| BenchError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.len() < 2 || !headers[0].eq_ignore_ascii_case("timestamp") {
        return Err(BenchError::format(path, "header must be `timestamp,<series>...`"));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut timestamps = Vec::new();
    let mut columns = vec![Vec::new(); names.len()];
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let line = i + 2;
        let ts = parse_timestamp(&record[0])
            .ok_or_else(|| BenchError::format(path, format!("line {line}: bad timestamp `{}`", &record[0])))?;
        timestamps.push(ts);
        for (j, col) in columns.iter_mut().enumerate() {
            let field = &record[j + 1];
            let v: f64 = field.parse().map_err(|_| {
                BenchError::format(path, format!("line {line}: bad value `{field}` for `{}`", names[j]))
            })?;
            col.push(v);
        }
    }
    let target = target.map(str::to_string).unwrap_or_else(|| names[0].clone());
    Ok(RawSeriesTable::new(timestamps, names, columns, target)?)
}

pub fn read_series_file(path: &Path, target: Option<&str>) -> Result<RawSeriesTable> {
    let file = std::fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
    read_series(std::io::BufReader::new(file), path, target)
}

/// Values use the shortest representation that round-trips.
pub fn write_series(writer: impl Write, table: &RawSeriesTable) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp".to_string()];
    header.extend(table.names.iter().cloned());
    w.write_record(&header)?;
    for (r, &ts) in table.timestamps.iter().enumerate() {
        let mut row = vec![format_timestamp(ts)];
        row.extend(table.columns.iter().map(|c| c[r].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn series_to_bytes(table: &RawSeriesTable) -> Vec<u8> {
    let mut out = Vec::new();
    write_series(&mut out, table).expect("writing to memory cannot fail");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use tkat_core::synth::{generate, SynthSpec};

    #[test]
    fn timestamp_formats() {
        assert_eq!(parse_timestamp("2020-01-01T00:00:00Z"), Some(1_577_836_800));
        assert_eq!(parse_timestamp("2020-01-01T01:00:00+01:00"), Some(1_577_836_800));
        assert_eq!(parse_timestamp("2020-01-01 00:00:00"), Some(1_577_836_800));
        assert_eq!(parse_timestamp("2020-01-01T03:00"), Some(1_577_836_800 + 3 * 3600));
        assert_eq!(parse_timestamp("yesterday"), None);
        assert_eq!(format_timestamp(1_577_836_800), "2020-01-01T00:00:00Z");
    }

    #[test]
    fn round_trip_is_exact() {
        let table = generate(&SynthSpec::new(50, 3, 1)).unwrap();
        let bytes = series_to_bytes(&table);
        let back = read_series(&bytes[..], Path::new("mem"), None).unwrap();
        assert_eq!(back, table);
        assert_eq!(series_to_bytes(&back), bytes);
    }

    #[test]
    fn errors_name_the_line() {
        let text = "timestamp,A\n2020-01-01T00:00:00Z,1.0\n2020-01-01T01:00:00Z,abc\n";
        let err = read_series(text.as_bytes(), Path::new("x.csv"), None).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let text = "time,A\n";
        assert!(read_series(text.as_bytes(), Path::new("x.csv"), None).is_err());
        let gap = "timestamp,A\n2020-01-01T00:00:00Z,1.0\n2020-01-01T02:00:00Z,1.0\n";
        assert!(read_series(gap.as_bytes(), Path::new("x.csv"), None).is_err());
        let missing = "timestamp,A\n2020-01-01T00:00:00Z,1.0\n";
        assert!(read_series(missing.as_bytes(), Path::new("x.csv"), Some("B")).is_err());
    }
}
