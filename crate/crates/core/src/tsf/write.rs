use std::fmt::Write as _;
use std::path::Path;

use super::{Dataset, TIMESTAMP_FORMAT};
use crate::error::Result;

/// Renders a dataset as a `.tsf` byte stream. `f64` values use Rust's
/// shortest round-trip decimal form, so parsing the output yields the exact
/// same bits.
pub fn serialize_tsf(dataset: &Dataset) -> Vec<u8> {
    let header = &dataset.header;
    let mut out = String::new();
    if let Some(r) = &header.relation {
        let _ = writeln!(out, "@relation {r}");
    }
    for a in &header.attributes {
        let _ = writeln!(out, "@attribute {} {}", a.name, a.kind.token());
    }
    if let Some(f) = &header.frequency {
        let _ = writeln!(out, "@frequency {f}");
    }
    if let Some(h) = header.horizon {
        let _ = writeln!(out, "@horizon {h}");
    }
    if let Some(m) = header.missing {
        let _ = writeln!(out, "@missing {m}");
    }
    if let Some(e) = header.equal_length {
        let _ = writeln!(out, "@equallength {e}");
    }
    out.push_str("@data\n");

    let name_idx = header.name_index();
    let ts_idx = header.timestamp_index();
    for s in &dataset.series {
        let mut extra = s.extra.iter();
        for i in 0..header.attributes.len() {
            if Some(i) == name_idx {
                out.push_str(&s.name);
            } else if Some(i) == ts_idx {
                if let Some(ts) = s.start_timestamp {
                    let _ = write!(out, "{}", ts.format(TIMESTAMP_FORMAT));
                }
            } else if let Some(v) = extra.next() {
                out.push_str(v);
            }
            out.push(':');
        }
        for (k, v) in s.values.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            match v {
                Some(v) => {
                    let _ = write!(out, "{v}");
                }
                None => out.push('?'),
            }
        }
        out.push('\n');
    }
    out.into_bytes()
}

pub fn write_tsf(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serialize_tsf(dataset))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::*;

    fn small(values: Vec<Option<f64>>) -> Dataset {
        let series = vec![
            SeriesRecord::new("A", values),
            SeriesRecord::from_values("B", &[2.0, 3.0]),
        ];
        Dataset::with_config("demo".into(), Frequency::Daily, 9, 2, series).unwrap()
    }

    #[test]
    fn renders_value() {
        let text = String::from_utf8(serialize_tsf(&small(vec![Some(1.5)]))).unwrap();
        assert!(text.contains("A:1.5\n"), "{text}");
    }

    #[test]
    fn renders_missing_marker() {
        let text = String::from_utf8(serialize_tsf(&small(vec![Some(1.0), None, Some(0.1)]))).unwrap();
        let line = text.lines().find(|l| l.starts_with("A:")).unwrap();
        let slots: Vec<&str> = line[2..].split(',').collect();
        assert_eq!(slots, vec!["1", "?", "0.1"]);
    }

    #[test]
    fn header_derived_dataset_round_trips() {
        let text = "@relation demo\n@attribute series_name string\n@attribute start_timestamp date\n@attribute state string\n@frequency 10_minutes\n@horizon 4\n@data\nA:2001-02-03 04-05-06:NSW:1e-300,2.5,?\nB:2001-02-03 00-00-00:VIC:-0.1,3\n";
        let ds = parse_tsf(text.as_bytes()).unwrap();
        assert_eq!(parse_tsf(&serialize_tsf(&ds)).unwrap(), ds);
        assert_eq!(ds.series[0].extra, vec!["NSW".to_string()]);
    }
}
