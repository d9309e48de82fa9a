use serde::{Deserialize, Serialize};

use super::mobility::{MAX_MOBILITY, MIN_MOBILITY};
use super::{check_header, csv_reader, field, for_each_row, parse_field, IngestError, Parsed};
use crate::geo::valid_coordinate;

pub const POI_HEADER: [&str; 5] = ["name", "tag", "lat", "lon", "mobility"];

/// A point of interest with its own busyness level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub name: String,
    /// Lowercased category such as `grocery`.
    pub tag: String,
    pub lat: f64,
    pub lon: f64,
    pub mobility: u8,
}

pub fn parse_pois(input: &str) -> Result<Parsed<Poi>, IngestError> {
    let mut reader = csv_reader(input);
    check_header(&mut reader, "pois.csv", &POI_HEADER)?;
    let mut parsed = Parsed::default();
    for_each_row(reader, &mut parsed, |record, line, parsed| match parse_row(record) {
        Ok(p) => parsed.accept(p),
        Err(reason) => parsed.reject(line, reason),
    });
    Ok(parsed)
}

fn parse_row(record: &csv::StringRecord) -> Result<Poi, String> {
    if record.len() != POI_HEADER.len() {
        return Err(format!("expected 5 fields, found {}", record.len()));
    }
    let name = field(record, 0, "name")?.to_string();
    let tag = field(record, 1, "tag")?.to_lowercase();
    if name.is_empty() || tag.is_empty() {
        return Err("empty name or tag".into());
    }
    let lat: f64 = parse_field(record, 2, "lat")?;
    let lon: f64 = parse_field(record, 3, "lon")?;
    if !valid_coordinate(lat, lon) {
        return Err(format!("coordinate ({lat}, {lon}) out of range"));
    }
    let mobility: i64 = parse_field(record, 4, "mobility")?;
    if !(MIN_MOBILITY as i64..=MAX_MOBILITY as i64).contains(&mobility) {
        return Err(format!("mobility level {mobility} outside [1,5]"));
    }
    Ok(Poi {
        name,
        tag,
        lat,
        lon,
        mobility: mobility as u8,
    })
}

pub fn write_pois<W: std::io::Write>(out: W, pois: &[Poi]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(POI_HEADER)?;
    for p in pois {
        w.write_record([
            p.name.clone(),
            p.tag.clone(),
            p.lat.to_string(),
            p.lon.to_string(),
            p.mobility.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
