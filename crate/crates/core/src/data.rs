//! CSV input and output, growth rates and the bundled GNP sample.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HAMILTON84: &str = include_str!("../data/hamilton84GNP.csv");

/// Column selection for [`load_csv`]. Columns are header names, or zero-based
/// indices when `header` is false.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub date_col: Option<String>,
    pub value_col: String,
    pub header: bool,
}

impl LoadOptions {
    pub fn column(name: &str) -> Self {
        Self { date_col: None, value_col: name.to_string(), header: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Series {
    pub dates: Option<Vec<NaiveDate>>,
    pub values: Vec<f64>,
    pub warnings: Vec<String>,
}

fn locate(headers: Option<&csv::StringRecord>, col: &str, width: usize) -> Result<usize> {
    match headers {
        Some(h) => h.iter().position(|c| c.trim() == col).ok_or_else(|| Error::Data(format!("missing column `{col}`"))),
        None => col
            .parse::<usize>()
            .ok()
            .filter(|&i| i < width)
            .ok_or_else(|| Error::Data(format!("column `{col}` must be an index below {width} without a header"))),
    }
}

pub fn read_csv<R: Read>(reader: R, options: &LoadOptions) -> Result<Series> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(options.header).trim(csv::Trim::All).from_reader(reader);
    let headers = if options.header { Some(rdr.headers()?.clone()) } else { None };
    let mut records = rdr.records().peekable();
    let width = match (&headers, records.peek()) {
        (Some(h), _) => h.len(),
        (None, Some(Ok(r))) => r.len(),
        _ => 0,
    };
    let vi = locate(headers.as_ref(), &options.value_col, width)?;
    let di = options.date_col.as_deref().map(|c| locate(headers.as_ref(), c, width)).transpose()?;
    let mut out = Series { dates: di.map(|_| Vec::new()), ..Default::default() };
    let mut skipped = 0;
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let row = i + 1 + options.header as usize;
        let raw = rec.get(vi).unwrap_or("");
        if raw.is_empty() && out.values.is_empty() {
            skipped += 1;
            continue;
        }
        let v: f64 = raw.parse().map_err(|_| Error::Data(format!("row {row}: `{raw}` is not a number")))?;
        if !v.is_finite() {
            return Err(Error::Data(format!("row {row}: value is not finite")));
        }
        out.values.push(v);
        if let (Some(di), Some(dates)) = (di, out.dates.as_mut()) {
            let raw = rec.get(di).unwrap_or("");
            let d = NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|_| Error::Data(format!("row {row}: `{raw}` is not a YYYY-MM-DD date")))?;
            if dates.last().is_some_and(|last| *last >= d) {
                out.warnings.push(format!("row {row}: dates are not increasing"));
            }
            dates.push(d);
        }
    }
    if out.values.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    if skipped > 0 {
        out.warnings.push(format!("skipped {skipped} leading rows with an empty value"));
    }
    Ok(out)
}

pub fn load_csv(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Series> {
    read_csv(std::fs::File::open(path)?, options)
}

/// Writes named columns of equal length with up to 17 significant digits.
pub fn write_csv<W: Write>(writer: W, names: &[&str], columns: &[Vec<f64>]) -> Result<()> {
    if names.len() != columns.len() || columns.windows(2).any(|w| w[0].len() != w[1].len()) {
        return Err(Error::Data("columns must match names and share one length".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(names)?;
    for i in 0..columns.first().map_or(0, Vec::len) {
        w.write_record(columns.iter().map(|c| c[i].to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// `100 (log x_t - log x_{t-1})`.
pub fn growth_rate(levels: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = levels.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Domain(format!("level {} at position {i} is not positive", levels[i])));
    }
    Ok(levels.windows(2).map(|w| 100.0 * (w[1].ln() - w[0].ln())).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetName {
    #[serde(rename = "hamilton84GNP")]
    Hamilton84Gnp,
    #[serde(rename = "chp10GNP")]
    Chp10Gnp,
    #[serde(rename = "USGNP")]
    UsGnp,
    #[serde(rename = "USRGDP")]
    UsRgdp,
}

impl DatasetName {
    pub const ALL: [DatasetName; 4] = [Self::Hamilton84Gnp, Self::Chp10Gnp, Self::UsGnp, Self::UsRgdp];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hamilton84Gnp => "hamilton84GNP",
            Self::Chp10Gnp => "chp10GNP",
            Self::UsGnp => "USGNP",
            Self::UsRgdp => "USRGDP",
        }
    }

    pub fn span(self) -> (&'static str, &'static str) {
        match self {
            Self::Hamilton84Gnp => ("1951Q2", "1984Q4"),
            Self::Chp10Gnp => ("1951Q2", "2010Q4"),
            Self::UsGnp | Self::UsRgdp => ("1947Q2", "2024Q2"),
        }
    }

    pub fn bundled(self) -> bool {
        matches!(self, Self::Hamilton84Gnp)
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown dataset `{s}`")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: DatasetName,
    pub first: String,
    pub last: String,
    pub bundled: bool,
}

pub fn list_datasets() -> Vec<DatasetInfo> {
    DatasetName::ALL
        .into_iter()
        .map(|name| {
            let (first, last) = name.span();
            DatasetInfo { name, first: first.into(), last: last.into(), bundled: name.bundled() }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRow {
    /// First day of the quarter.
    pub date: NaiveDate,
    pub level: f64,
    pub growth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: DatasetName,
    pub rows: Vec<DataRow>,
}

impl Dataset {
    /// Growth observations in date order.
    pub fn growth(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.growth).collect()
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "level", "growth"])?;
        for r in &self.rows {
            w.write_record([r.date.format("%Y-%m-%d").to_string(), r.level.to_string(), r.growth.map(|g| g.to_string()).unwrap_or_default()])?;
        }
        w.flush()?;
        Ok(())
    }

    fn parse(name: DatasetName, text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|e| Error::Data(e.to_string()))?;
            let level: f64 = rec[1].parse().map_err(|_| Error::Data(format!("bad level `{}`", &rec[1])))?;
            let growth = if rec[2].is_empty() { None } else { Some(rec[2].parse().map_err(|_| Error::Data(format!("bad growth `{}`", &rec[2])))?) };
            rows.push(DataRow { date, level, growth });
        }
        Ok(Self { name, rows })
    }
}

/// Loads a bundled dataset. The level column of the bundled sample is an
/// index (1951Q1 = 100) rebuilt from the published growth rates.
pub fn dataset(name: DatasetName) -> Result<Dataset> {
    match name {
        DatasetName::Hamilton84Gnp => Dataset::parse(name, HAMILTON84),
        other => Err(Error::Data(format!(
            "dataset `{other}` is not bundled; export the series from its public source and load it with load_csv"
        ))),
    }
}

pub fn quarter_label(d: NaiveDate) -> String {
    format!("{}Q{}", d.year(), d.month0() / 3 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rows_and_header_errors() {
        let s = read_csv("date,y\n2000-01-01,1.5\n2000-04-01,2\n2000-07-01,-3e-1\n".as_bytes(), &LoadOptions { date_col: Some("date".into()), value_col: "y".into(), header: true }).unwrap();
        assert_eq!(s.values, vec![1.5, 2.0, -0.3]);
        assert_eq!(s.dates.unwrap().len(), 3);
        assert!(s.warnings.is_empty());
        let e = read_csv("1.0\n2.0\n".as_bytes(), &LoadOptions::column("y")).unwrap_err();
        assert!(e.to_string().contains("missing column"));
        let nh = read_csv("1.0,4\n2.0,5\n".as_bytes(), &LoadOptions { date_col: None, value_col: "1".into(), header: false }).unwrap();
        assert_eq!(nh.values, vec![4.0, 5.0]);
        let bad = read_csv("y\n1\nabc\n".as_bytes(), &LoadOptions::column("y")).unwrap_err();
        assert!(bad.to_string().contains("row 3"), "{bad}");
        assert!(read_csv("y\n".as_bytes(), &LoadOptions::column("y")).is_err());
        let w = read_csv("d,y\n2000-04-01,1\n2000-01-01,2\n".as_bytes(), &LoadOptions { date_col: Some("d".into()), value_col: "y".into(), header: true }).unwrap();
        assert_eq!(w.warnings.len(), 1);
    }

    #[test]
    fn growth_rates() {
        assert_eq!(growth_rate(&[100.0, 100.0]).unwrap(), vec![0.0]);
        let g = growth_rate(&[100.0, 100.0 * 0.01f64.exp()]).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-12);
        let g = growth_rate(&[1.0, 1.1, 1.21, 1.331]).unwrap();
        assert!(g.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
        assert!(growth_rate(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn bundled_sample() {
        let d = dataset(DatasetName::Hamilton84Gnp).unwrap();
        let g = d.growth();
        assert_eq!(g.len(), 135);
        let rows: Vec<&DataRow> = d.rows.iter().filter(|r| r.growth.is_some()).collect();
        assert_eq!(quarter_label(rows[0].date), "1951Q2");
        assert_eq!(quarter_label(rows[134].date), "1984Q4");
        for w in d.rows.windows(2) {
            assert!(w[1].date > w[0].date);
            let back = 100.0 * (w[1].level.ln() - w[0].level.ln());
            assert!((back - w[1].growth.unwrap()).abs() < 1e-6);
        }
        assert!(dataset(DatasetName::Chp10Gnp).is_err());
        assert_eq!("usgnp".parse::<DatasetName>().unwrap(), DatasetName::UsGnp);
        assert_eq!(list_datasets().len(), 4);
    }

    #[test]
    fn export_round_trip() {
        let d = dataset(DatasetName::Hamilton84Gnp).unwrap();
        let mut buf = Vec::new();
        d.write(&mut buf).unwrap();
        let again = Dataset::parse(d.name, std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(d, again);
    }
}
