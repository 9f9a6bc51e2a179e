use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// A named univariate daily series with strictly increasing dates.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSeries {
    pub name: String,
    pub observations: Vec<(NaiveDate, f64)>,
}

impl RawSeries {
    /// Sorts and validates observations.
    pub fn new(name: impl Into<String>, mut observations: Vec<(NaiveDate, f64)>) -> Result<Self> {
        let name = name.into();
        if let Some((_, _)) = observations.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Data(format!(
                "series `{name}` contains a non-finite value"
            )));
        }
        observations.sort_by_key(|(d, _)| *d);
        if let Some(w) = observations.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Data(format!(
                "series `{name}` repeats date {}",
                w[0].0
            )));
        }
        Ok(Self { name, observations })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.observations.first().map(|(d, _)| *d)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.observations.last().map(|(d, _)| *d)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.observations.iter().map(|(_, v)| *v)
    }
}

/// Reads a `date,value` CSV. Rows may come in any order; the result is
/// sorted. The series is named after the file stem.
pub fn load_csv(path: impl AsRef<Path>) -> Result<RawSeries> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".into());
    parse_csv(&bytes, &path.display().to_string(), &name)
}

/// Parses CSV bytes; `source` labels error messages.
pub fn parse_csv(bytes: &[u8], source: &str, name: &str) -> Result<RawSeries> {
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.len() != 2
        || !headers[0].eq_ignore_ascii_case("date")
        || !headers[1].eq_ignore_ascii_case("value")
    {
        return Err(parse_err(
            1,
            format!(
                "expected header `date,value`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut rows: Vec<(NaiveDate, f64, u64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| parse_err(line, format!("bad date `{}`: {e}", &record[0])))?;
        let value: f64 = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("bad value `{}`", &record[1])))?;
        if !value.is_finite() {
            return Err(Error::NonFiniteValue {
                path: source.to_string(),
                line,
            });
        }
        rows.push((date, value, line));
    }
    rows.sort_by_key(|r| (r.0, r.2));
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateDate {
            path: source.to_string(),
            date: w[1].0.to_string(),
            line: w[1].2,
        });
    }
    Ok(RawSeries {
        name: name.to_string(),
        observations: rows.into_iter().map(|(d, v, _)| (d, v)).collect(),
    })
}

/// Writes a series in the `date,value` schema.
pub fn write_csv(series: &RawSeries, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(csv_io)?;
    w.write_record(["date", "value"]).map_err(csv_io)?;
    for (d, v) in &series.observations {
        w.write_record([d.to_string(), v.to_string()])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RawSeries> {
        parse_csv(s.as_bytes(), "mem.csv", "mem")
    }

    #[test]
    fn three_rows() {
        let s = parse("date,value\n2020-01-01,1.5\n2020-01-02,2\n2020-01-03,-0.5\n").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.values().collect::<Vec<_>>(), vec![1.5, 2.0, -0.5]);
    }

    #[test]
    fn unsorted_rows_are_sorted() {
        let s = parse("date,value\n2020-01-03,3\n2020-01-01,1\n2020-01-02,2\n").unwrap();
        assert_eq!(s.values().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        assert_eq!(s.first_date(), NaiveDate::from_ymd_opt(2020, 1, 1));
    }

    #[test]
    fn nan_reports_its_line() {
        let e = parse("date,value\n2019-12-31,1\n2020-01-01,NaN\n").unwrap_err();
        assert!(matches!(e, Error::NonFiniteValue { line: 3, .. }), "{e}");
    }

    #[test]
    fn duplicates_and_garbage_are_rejected() {
        assert!(matches!(
            parse("date,value\n2020-01-01,1\n2020-01-01,2\n"),
            Err(Error::DuplicateDate { line: 3, .. })
        ));
        assert!(matches!(
            parse("date,value\n2020-13-01,1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse("when,value\n2020-01-01,1\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse("date,value\n2020-01-01,abc\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gold.csv");
        let s = parse("date,value\n2020-01-01,0.1\n2020-01-02,1e-17\n").unwrap();
        write_csv(&s, &path).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(back.name, "gold");
        assert_eq!(back.observations, s.observations);
    }
}
