use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime};
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Hourly rainfall at `d` stations plus outlet runoff for one watershed.
#[derive(Debug, Clone, PartialEq)]
pub struct HydroSeries {
    pub name: String,
    pub station_names: Vec<String>,
    /// (L, d), mm/h.
    pub rainfall: Array2<f64>,
    /// m³/s.
    pub runoff: Vec<f64>,
    pub timestamps: Vec<NaiveDateTime>,
}

/// Column mapping for a delimited watershed file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSchema {
    #[serde(default = "default_timestamp_column")]
    pub timestamp: String,
    /// Rainfall columns in station order. Empty means every column that is
    /// neither the timestamp nor the runoff column.
    #[serde(default)]
    pub rainfall: Vec<String>,
    #[serde(default = "default_runoff_column")]
    pub runoff: String,
}

fn default_timestamp_column() -> String {
    "timestamp".into()
}

fn default_runoff_column() -> String {
    "runoff".into()
}

impl Default for SeriesSchema {
    fn default() -> Self {
        Self {
            timestamp: default_timestamp_column(),
            rainfall: Vec::new(),
            runoff: default_runoff_column(),
        }
    }
}

impl HydroSeries {
    /// Builds a series and checks every invariant.
    pub fn new(
        name: impl Into<String>,
        station_names: Vec<String>,
        rainfall: Array2<f64>,
        runoff: Vec<f64>,
        timestamps: Vec<NaiveDateTime>,
    ) -> Result<Self> {
        let series = Self {
            name: name.into(),
            station_names,
            rainfall,
            runoff,
            timestamps,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn len(&self) -> usize {
        self.runoff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runoff.is_empty()
    }

    pub fn station_count(&self) -> usize {
        self.rainfall.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.runoff.len();
        if self.rainfall.nrows() != len || self.timestamps.len() != len {
            return Err(Error::Dimension(format!(
                "rainfall rows {}, runoff length {}, timestamps {} must agree",
                self.rainfall.nrows(),
                len,
                self.timestamps.len()
            )));
        }
        if self.station_count() == 0 {
            return Err(Error::Dimension("at least one rainfall station is required".into()));
        }
        if self.station_names.len() != self.station_count() {
            return Err(Error::Dimension(format!(
                "{} station names for {} rainfall columns",
                self.station_names.len(),
                self.station_count()
            )));
        }
        for (row, (rain, &flow)) in self.rainfall.rows().into_iter().zip(&self.runoff).enumerate() {
            check_value(row, "runoff", flow)?;
            for (j, &v) in rain.iter().enumerate() {
                check_value(row, &self.station_names[j], v)?;
            }
        }
        check_hourly(&self.timestamps)
    }

    /// Rows `range` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> HydroSeries {
        HydroSeries {
            name: self.name.clone(),
            station_names: self.station_names.clone(),
            rainfall: self.rainfall.slice(s![start..end, ..]).to_owned(),
            runoff: self.runoff[start..end].to_vec(),
            timestamps: self.timestamps[start..end].to_vec(),
        }
    }

    /// Writes the canonical comma-separated form: timestamp, one column per
    /// station, runoff.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.len() * (self.station_count() + 2) * 8);
        out.push_str("timestamp");
        for name in &self.station_names {
            out.push(',');
            out.push_str(name);
        }
        out.push_str(",runoff\n");
        for (i, ts) in self.timestamps.iter().enumerate() {
            out.push_str(&ts.format(TIMESTAMP_FORMAT).to_string());
            for v in self.rainfall.row(i) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push(',');
            out.push_str(&self.runoff[i].to_string());
            out.push('\n');
        }
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn check_value(row: usize, column: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::Data {
            row,
            reason: format!("non-finite value in `{column}`"),
        });
    }
    if v < 0.0 {
        return Err(Error::Data {
            row,
            reason: format!("negative value {v} in `{column}`"),
        });
    }
    Ok(())
}

fn check_hourly(timestamps: &[NaiveDateTime]) -> Result<()> {
    for pair in timestamps.windows(2) {
        let step = pair[1] - pair[0];
        if step == Duration::zero() {
            return Err(Error::Integrity {
                instant: pair[1].format(TIMESTAMP_FORMAT).to_string(),
                reason: "duplicate timestamp".into(),
            });
        }
        if step != Duration::hours(1) {
            return Err(Error::Integrity {
                instant: pair[1].format(TIMESTAMP_FORMAT).to_string(),
                reason: format!("expected a 1-hour step, found {} minutes", step.num_minutes()),
            });
        }
    }
    Ok(())
}

pub fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    for fmt in [
        TIMESTAMP_FORMAT,
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(ts) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(ts);
        }
    }
    DateTime::parse_from_rfc3339(raw).ok().map(|ts| ts.naive_utc())
}

/// Reads a delimited watershed file. Rows are reordered by timestamp before
/// the hourly-continuity check; value errors report the data row index in
/// file order (0-based, header excluded).
pub fn load_series(path: &Path, schema: &SeriesSchema) -> Result<HydroSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let column = |name: &str| {
        index.get(name).copied().ok_or_else(|| Error::Schema {
            column: name.to_string(),
        })
    };

    let ts_col = column(&schema.timestamp)?;
    let runoff_col = column(&schema.runoff)?;
    let rain_names: Vec<String> = if schema.rainfall.is_empty() {
        headers
            .iter()
            .filter(|h| *h != schema.timestamp && *h != schema.runoff)
            .map(str::to_string)
            .collect()
    } else {
        schema.rainfall.clone()
    };
    if rain_names.is_empty() {
        return Err(Error::Schema {
            column: "<rainfall>".into(),
        });
    }
    let rain_cols = rain_names.iter().map(|n| column(n)).collect::<Result<Vec<_>>>()?;

    let mut rows: Vec<(NaiveDateTime, Vec<f64>, f64)> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let field = |col: usize| record.get(col).unwrap_or("");
        let ts = parse_timestamp(field(ts_col)).ok_or_else(|| Error::Parse {
            location: format!("{} data row {row}", path.display()),
            reason: format!("unparseable timestamp `{}`", field(ts_col)),
        })?;
        let number = |col: usize, name: &str| -> Result<f64> {
            let v: f64 = field(col).parse().map_err(|_| Error::Data {
                row,
                reason: format!("`{}` in `{name}` is not a number", field(col)),
            })?;
            check_value(row, name, v)?;
            Ok(v)
        };
        let rain = rain_cols
            .iter()
            .zip(&rain_names)
            .map(|(&c, n)| number(c, n))
            .collect::<Result<Vec<_>>>()?;
        let flow = number(runoff_col, &schema.runoff)?;
        rows.push((ts, rain, flow));
    }
    rows.sort_by_key(|r| r.0);

    let d = rain_names.len();
    let mut rainfall = Array2::zeros((rows.len(), d));
    let mut runoff = Vec::with_capacity(rows.len());
    let mut timestamps = Vec::with_capacity(rows.len());
    for (i, (ts, rain, flow)) in rows.into_iter().enumerate() {
        for (j, v) in rain.into_iter().enumerate() {
            rainfall[[i, j]] = v;
        }
        runoff.push(flow);
        timestamps.push(ts);
    }
    check_hourly(&timestamps)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    HydroSeries::new(name, rain_names, rainfall, runoff, timestamps)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Parse {
            location: path.display().to_string(),
            reason: e.to_string(),
        }
    }
}

/// Splits off the earliest `⌊fraction·L⌋` rows for training. Each segment
/// must be at least `min_segment` rows long.
pub fn split_chronological(
    series: &HydroSeries,
    train_fraction: f64,
    min_segment: usize,
) -> Result<(HydroSeries, HydroSeries)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    let len = series.len();
    // The epsilon absorbs representation error in products that are exact integers.
    let cut = ((train_fraction * len as f64) + 1e-9).floor() as usize;
    let min_segment = min_segment.max(1);
    if cut < min_segment || len - cut < min_segment {
        return Err(Error::Size(format!(
            "split of {len} rows at {train_fraction} gives segments ({cut}, {}); each needs at least {min_segment}",
            len - cut
        )));
    }
    Ok((series.slice(0, cut), series.slice(cut, len)))
}
