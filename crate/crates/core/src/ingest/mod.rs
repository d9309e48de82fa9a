//! Parsing and validation of the four raw sources.
//!
//! Every parser follows the same policy: a bad row becomes a line-numbered
//! [`Rejection`] and parsing continues. Only structural problems (wrong
//! header, duplicate identifiers, a cyclic hierarchy) abort a file.

mod demographics;
mod disease;
mod locations;
mod mobility;
mod pois;
mod posts;

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use demographics::{parse_demographics, write_demographics, DemographicRecord, Gazetteer};
pub use disease::{parse_disease, write_disease, DiseaseRecord};
pub use locations::{extract_locations, state_abbreviation, LocationIndex, LocationMatch};
pub use mobility::{parse_mobility, write_mobility, MobilityRecord, MAX_MOBILITY, MIN_MOBILITY};
pub use pois::{parse_pois, write_pois, Poi, POI_HEADER};
pub use posts::{hash_author, parse_posts, write_posts, RawPost};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}: expected header `{expected}`, found `{found}`")]
    Header {
        file: &'static str,
        expected: String,
        found: String,
    },
    #[error("duplicate geo_id `{geo_id}` on lines {first} and {second}")]
    DuplicateGeoId {
        geo_id: String,
        first: usize,
        second: usize,
    },
    #[error("parent cycle through geo_id `{0}`")]
    Cycle(String),
    #[error("expected exactly one nation record, found {0}")]
    NationCount(usize),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// A row that could not be turned into a record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line number in the source file (the header is line 1).
    pub line: usize,
    pub reason: String,
}

impl Rejection {
    pub fn new(line: usize, reason: impl Into<String>) -> Self {
        Rejection {
            line,
            reason: reason.into(),
        }
    }
}

/// Output of a parser: accepted records plus every rejected row.
#[derive(Clone, Debug, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub rejections: Vec<Rejection>,
    /// Number of data rows seen; always `records.len() + rejections.len()`.
    pub rows: usize,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Parsed {
            records: Vec::new(),
            rejections: Vec::new(),
            rows: 0,
        }
    }
}

impl<T> Parsed<T> {
    fn accept(&mut self, record: T) {
        self.rows += 1;
        self.records.push(record);
    }

    fn reject(&mut self, line: usize, reason: impl Into<String>) {
        self.rows += 1;
        self.rejections.push(Rejection::new(line, reason));
    }
}

pub(crate) fn csv_reader(input: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input.as_bytes())
}

pub(crate) fn check_header(
    reader: &mut csv::Reader<&[u8]>,
    file: &'static str,
    expected: &[&str],
) -> Result<(), IngestError> {
    let header = reader.headers()?;
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(IngestError::Header {
            file,
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

pub(crate) fn field<'r>(
    record: &'r csv::StringRecord,
    index: usize,
    name: &str,
) -> Result<&'r str, String> {
    record.get(index).ok_or_else(|| format!("missing field `{name}`"))
}

pub(crate) fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    index: usize,
    name: &str,
) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    let raw = field(record, index, name)?;
    raw.parse::<T>()
        .map_err(|e| format!("invalid {name} `{raw}`: {e}"))
}

pub(crate) fn parse_fraction(
    record: &csv::StringRecord,
    index: usize,
    name: &str,
) -> Result<f64, String> {
    let value: f64 = parse_field(record, index, name)?;
    if !(0.0..=1.0).contains(&value) {
        return Err(format!("{name} {value} outside [0,1]"));
    }
    Ok(value)
}

pub(crate) fn line_of(record: &csv::StringRecord, fallback: usize) -> usize {
    record
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback)
}

/// Reads every data row, turning low-level csv errors into rejections.
pub(crate) fn for_each_row<T>(
    mut reader: csv::Reader<&[u8]>,
    parsed: &mut Parsed<T>,
    mut row: impl FnMut(&csv::StringRecord, usize, &mut Parsed<T>),
) {
    let mut last_line = 1;
    for result in reader.records() {
        match result {
            Ok(record) => {
                let line = line_of(&record, last_line + 1);
                last_line = line;
                if record.len() == 1 && record.get(0) == Some("") {
                    continue;
                }
                row(&record, line, parsed);
            }
            Err(err) => {
                let line = err
                    .position()
                    .map(|p| p.line() as usize)
                    .unwrap_or(last_line + 1);
                last_line = line;
                parsed.reject(line, err.to_string());
            }
        }
    }
}
