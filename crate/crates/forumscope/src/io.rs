//! Post logs in CSV and JSON Lines.

use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use forumscope_core::ingest::{PostRecord, PostTable};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column order of the CSV format.
pub const COLUMNS: [&str; 6] = ["forum_id", "thread_id", "post_id", "username", "date", "content"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(Error::InvalidArgument(format!("unknown format `{other}`"))),
        }
    }
}

impl Format {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &std::path::Path) -> Option<Format> {
        match path.extension()?.to_str()? {
            "csv" => Some(Format::Csv),
            "jsonl" | "ndjson" => Some(Format::Jsonl),
            _ => None,
        }
    }
}

/// Accepts `YYYY-MM-DD` or a full timestamp, keeping the calendar day.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.date_naive());
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|dt| dt.date())
}

fn field_error(row: usize, field: &str, reason: impl Into<String>) -> Error {
    Error::Parse {
        row,
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn record_from_fields(row: usize, fields: [&str; 6]) -> Result<PostRecord> {
    let date = parse_date(fields[4]).ok_or_else(|| field_error(row, "date", format!("unparseable date `{}`", fields[4])))?;
    Ok(PostRecord {
        forum_id: fields[0].to_string(),
        thread_id: fields[1].to_string(),
        post_id: fields[2].to_string(),
        username: fields[3].to_string(),
        date,
        content: fields[5].to_string(),
    })
}

/// Reads raw records. Rows are numbered from 1, excluding the CSV header.
pub fn read_records(input: impl Read, format: Format) -> Result<Vec<PostRecord>> {
    match format {
        Format::Csv => read_csv(input),
        Format::Jsonl => read_jsonl(input),
    }
}

fn read_csv(input: impl Read) -> Result<Vec<PostRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let header = reader.headers().map_err(|e| field_error(0, "header", e.to_string()))?.clone();
    if header.iter().map(str::trim).ne(COLUMNS) {
        return Err(field_error(
            0,
            "header",
            format!("expected `{}`, found `{}`", COLUMNS.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut out = Vec::new();
    for (ix, row) in reader.records().enumerate() {
        let row_no = ix + 1;
        let rec = row.map_err(|e| field_error(row_no, "record", e.to_string()))?;
        if rec.len() != COLUMNS.len() {
            let field = COLUMNS.get(rec.len()).copied().unwrap_or("content");
            return Err(field_error(row_no, field, format!("expected {} fields, found {}", COLUMNS.len(), rec.len())));
        }
        let fields: [&str; 6] = std::array::from_fn(|i| &rec[i]);
        out.push(record_from_fields(row_no, fields)?);
    }
    Ok(out)
}

fn read_jsonl(input: impl Read) -> Result<Vec<PostRecord>> {
    let mut out = Vec::new();
    let mut row_no = 0;
    for line in BufReader::new(input).lines() {
        let line = line.map_err(|e| field_error(row_no + 1, "record", e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        row_no += 1;
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| field_error(row_no, "record", e.to_string()))?;
        let obj = value.as_object().ok_or_else(|| field_error(row_no, "record", "not a JSON object"))?;
        let mut fields = [""; 6];
        for (slot, name) in fields.iter_mut().zip(COLUMNS) {
            *slot = match obj.get(name) {
                Some(serde_json::Value::String(s)) => s.as_str(),
                Some(_) => return Err(field_error(row_no, name, "expected a string")),
                None => return Err(field_error(row_no, name, "missing field")),
            };
        }
        out.push(record_from_fields(row_no, fields)?);
    }
    Ok(out)
}

/// Parses and indexes a post log, rejecting dates after today.
pub fn parse_posts(input: impl Read, format: Format) -> Result<PostTable> {
    parse_posts_until(input, format, chrono::Utc::now().date_naive())
}

pub fn parse_posts_until(input: impl Read, format: Format, latest: NaiveDate) -> Result<PostTable> {
    Ok(PostTable::new(read_records(input, format)?, latest)?)
}

#[derive(Serialize)]
struct JsonPost<'a> {
    forum_id: &'a str,
    thread_id: &'a str,
    post_id: &'a str,
    username: &'a str,
    date: String,
    content: &'a str,
}

/// Writes records in the given format; dates as `YYYY-MM-DD`.
pub fn write_records(out: impl Write, records: &[PostRecord], format: Format) -> Result<()> {
    let io_err = |e: std::io::Error| Error::io("<output>", e);
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(COLUMNS).map_err(|e| Error::io("<output>", e.into()))?;
            for r in records {
                let date = r.date.format("%Y-%m-%d").to_string();
                w.write_record([&r.forum_id, &r.thread_id, &r.post_id, &r.username, &date, &r.content])
                    .map_err(|e| Error::io("<output>", e.into()))?;
            }
            w.flush().map_err(io_err)?;
        }
        Format::Jsonl => {
            let mut out = std::io::BufWriter::new(out);
            for r in records {
                let post = JsonPost {
                    forum_id: &r.forum_id,
                    thread_id: &r.thread_id,
                    post_id: &r.post_id,
                    username: &r.username,
                    date: r.date.format("%Y-%m-%d").to_string(),
                    content: &r.content,
                };
                serde_json::to_writer(&mut out, &post)?;
                out.write_all(b"\n").map_err(io_err)?;
            }
            out.flush().map_err(io_err)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn date_forms() {
        let d = NaiveDate::from_ymd_opt(2016, 3, 9).unwrap();
        for s in ["2016-03-09", "2016-03-09T23:10:00Z", "2016-03-09T01:02:03+05:00", "2016-03-09 10:11:12", "2016-03-09T10:11:12.5"] {
            assert_eq!(parse_date(s), Some(d), "{s}");
        }
        assert_eq!(parse_date("09/03/2016"), None);
    }

    #[test]
    fn csv_header_is_checked() {
        let err = read_records("a,b\n".as_bytes(), Format::Csv).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 0, .. }));
    }

    #[test]
    fn bad_date_names_row_and_field() {
        let input = "forum_id,thread_id,post_id,username,date,content\nF,t,p1,u,2016-01-01,x\nF,t,p2,u,yesterday,y\n";
        match read_records(input.as_bytes(), Format::Csv).unwrap_err() {
            Error::Parse { row, field, .. } => assert_eq!((row, field.as_str()), (2, "date")),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn jsonl_missing_field() {
        let input = "{\"forum_id\":\"F\",\"thread_id\":\"t\",\"post_id\":\"p\",\"date\":\"2016-01-01\",\"content\":\"\"}\n";
        match read_records(input.as_bytes(), Format::Jsonl).unwrap_err() {
            Error::Parse { row, field, .. } => assert_eq!((row, field.as_str()), (1, "username")),
            e => panic!("{e}"),
        }
    }
}
