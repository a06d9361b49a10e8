use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};

use super::{Attribute, AttributeKind, Dataset, DatasetId, SeriesRecord, TsfHeader, TIMESTAMP_FORMAT};
use crate::error::{Error, Result};

fn err(line: usize, token: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        token: token.to_string(),
        message: message.into(),
    }
}

fn parse_bool(line: usize, token: &str) -> Result<bool> {
    match token {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(err(line, token, "expected `true` or `false`")),
    }
}

fn parse_timestamp(line: usize, token: &str) -> Result<NaiveDateTime> {
    NaiveDateTime::parse_from_str(token, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDate::parse_from_str(token, "%Y-%m-%d").map(|d| d.and_hms_opt(0, 0, 0).unwrap()))
        .map_err(|_| err(line, token, "malformed timestamp"))
}

fn parse_value(line: usize, token: &str) -> Result<Option<f64>> {
    let token = token.trim();
    if token == "?" {
        return Ok(None);
    }
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(err(line, token, "non-numeric value")),
    }
}

fn parse_header_line(header: &mut TsfHeader, line_no: usize, line: &str) -> Result<()> {
    let mut parts = line.split_whitespace();
    let key = parts.next().unwrap_or(line);
    let rest: Vec<&str> = parts.collect();
    let single = |what: &str| -> Result<&str> {
        match rest.as_slice() {
            [v] => Ok(*v),
            _ => Err(err(line_no, line, format!("malformed header line: {what} expects one value"))),
        }
    };
    match key {
        "@relation" => header.relation = Some(single("@relation")?.to_string()),
        "@attribute" => match rest.as_slice() {
            [name, kind] => {
                let kind = AttributeKind::parse(kind)
                    .ok_or_else(|| err(line_no, kind, "malformed header line: unknown attribute type"))?;
                header.attributes.push(Attribute {
                    name: name.to_string(),
                    kind,
                });
            }
            _ => return Err(err(line_no, line, "malformed header line: @attribute expects <name> <type>")),
        },
        "@frequency" => header.frequency = Some(single("@frequency")?.to_string()),
        "@horizon" => {
            let v = single("@horizon")?;
            let h = v
                .parse::<usize>()
                .map_err(|_| err(line_no, v, "malformed header line: @horizon expects an integer"))?;
            header.horizon = Some(h);
        }
        "@missing" => header.missing = Some(parse_bool(line_no, single("@missing")?)?),
        "@equallength" => header.equal_length = Some(parse_bool(line_no, single("@equallength")?)?),
        _ => return Err(err(line_no, key, "malformed header line: unknown attribute")),
    }
    Ok(())
}

fn parse_series_line(header: &TsfHeader, index: usize, line_no: usize, line: &str) -> Result<SeriesRecord> {
    let fields: Vec<&str> = line.split(':').collect();
    let expected = header.attributes.len() + 1;
    if fields.len() != expected {
        return Err(err(
            line_no,
            line,
            format!("expected {expected} `:`-separated fields, found {}", fields.len()),
        ));
    }
    let name_idx = header.name_index();
    let ts_idx = header.timestamp_index();
    let mut record = SeriesRecord::new(format!("T{}", index + 1), Vec::new());
    for (i, field) in fields[..fields.len() - 1].iter().enumerate() {
        if Some(i) == name_idx {
            record.name = field.to_string();
        } else if Some(i) == ts_idx {
            record.start_timestamp = Some(parse_timestamp(line_no, field)?);
        } else {
            record.extra.push(field.to_string());
        }
    }
    let raw = fields[fields.len() - 1];
    if raw.trim().is_empty() {
        return Err(err(line_no, raw, "series has no values"));
    }
    record.values = raw
        .split(',')
        .map(|t| parse_value(line_no, t))
        .collect::<Result<_>>()?;
    Ok(record)
}

/// Parses a `.tsf` byte stream. The dataset id is the `@relation` name.
pub fn parse_tsf(raw: &[u8]) -> Result<Dataset> {
    let text = std::str::from_utf8(raw).map_err(|e| {
        let line = raw[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count() + 1;
        err(line, "<bytes>", "invalid UTF-8")
    })?;
    let mut header = TsfHeader::default();
    let mut series = Vec::new();
    let mut in_data = false;
    for (i, line) in text.split('\n').enumerate() {
        let line_no = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        if !in_data {
            if !line.starts_with('@') {
                return Err(err(line_no, line, "malformed header line: expected `@` attribute"));
            }
            if line.trim() == "@data" {
                in_data = true;
            } else {
                parse_header_line(&mut header, line_no, line.trim())?;
            }
        } else {
            series.push(parse_series_line(&header, series.len(), line_no, line.trim())?);
        }
    }
    if !in_data {
        return Err(err(text.lines().count(), "", "`@data` section absent"));
    }
    if series.is_empty() {
        return Err(Error::NoSeries);
    }
    let id = DatasetId::new(header.relation.clone().unwrap_or_else(|| "dataset".into()));
    Dataset::from_header(id, header, series)
}

/// Reads and parses a `.tsf` file from disk.
pub fn read_tsf(path: impl AsRef<Path>) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    parse_tsf(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_SERIES: &str = "# example\n@relation demo\n@attribute series_name string\n@attribute start_timestamp date\n@frequency daily\n@horizon 2\n@missing true\n@equallength true\n@data\nT1:2020-01-01 00-00-00:1.0,2.0,3.0\nT2:2020-01-01 00-00-00:4.0,?,6.0\n";

    #[test]
    fn parses_two_series_with_missing() {
        let ds = parse_tsf(TWO_SERIES.as_bytes()).unwrap();
        assert_eq!(ds.meta.series_count, 2);
        assert_eq!(ds.series[0].values, vec![Some(1.0), Some(2.0), Some(3.0)]);
        assert_eq!(ds.series[1].values[1], None);
        assert_eq!(ds.meta.horizon, 2);
        assert_eq!(ds.series[1].name, "T2");
        assert!(ds.series[0].start_timestamp.is_some());
    }

    #[test]
    fn crlf_accepted() {
        let crlf = TWO_SERIES.replace('\n', "\r\n");
        assert_eq!(parse_tsf(crlf.as_bytes()).unwrap(), parse_tsf(TWO_SERIES.as_bytes()).unwrap());
    }

    #[test]
    fn empty_data_section() {
        let text = "@relation x\n@frequency daily\n@data\n";
        let e = parse_tsf(text.as_bytes()).unwrap_err();
        assert_eq!(e.to_string(), "no series found");
    }

    #[test]
    fn missing_data_sentinel() {
        let text = "@relation x\n@frequency daily\n";
        assert!(matches!(parse_tsf(text.as_bytes()), Err(Error::Parse { .. })));
    }

    #[test]
    fn bad_token_reports_line() {
        let text = "@relation x\n@attribute series_name string\n@frequency daily\n@data\nA:1,2\nB:1,abc\n";
        match parse_tsf(text.as_bytes()).unwrap_err() {
            Error::Parse { line, token, .. } => {
                assert_eq!(line, 6);
                assert_eq!(token, "abc");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn wrong_field_count() {
        let text = "@relation x\n@attribute series_name string\n@frequency daily\n@data\nA:1,2\nB:x:1,2\n";
        assert!(matches!(parse_tsf(text.as_bytes()), Err(Error::Parse { line: 6, .. })));
    }

    #[test]
    fn malformed_header() {
        let text = "@relation x\n@horizon soon\n@data\nA:1\n";
        assert!(matches!(parse_tsf(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let text = "@relation x\n@colour red\n@data\nA:1\n";
        assert!(matches!(parse_tsf(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }
}
