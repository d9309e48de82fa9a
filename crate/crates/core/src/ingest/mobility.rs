use std::collections::HashSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{check_header, csv_reader, field, for_each_row, parse_field, Gazetteer, IngestError, Parsed};
use crate::geo::GeoId;

pub const MOBILITY_HEADER: [&str; 3] = ["geo_id", "date", "level"];

pub const MIN_MOBILITY: u8 = 1;
pub const MAX_MOBILITY: u8 = 5;

/// Traffic busyness of an area on a date, from 1 (quiet) to 5 (busiest).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MobilityRecord {
    pub geo_id: GeoId,
    pub date: NaiveDate,
    pub level: u8,
}

/// Parses `mobility.csv`. Out-of-range levels are rejected, never clamped.
pub fn parse_mobility(
    input: &str,
    gazetteer: Option<&Gazetteer>,
) -> Result<Parsed<MobilityRecord>, IngestError> {
    let mut reader = csv_reader(input);
    check_header(&mut reader, "mobility.csv", &MOBILITY_HEADER)?;
    let mut parsed = Parsed::default();
    let mut seen = HashSet::new();
    for_each_row(reader, &mut parsed, |record, line, parsed| {
        match parse_row(record, gazetteer) {
            Ok(r) => {
                if seen.insert((r.geo_id.clone(), r.date)) {
                    parsed.accept(r);
                } else {
                    parsed.reject(line, format!("duplicate row for {} on {}", r.geo_id, r.date));
                }
            }
            Err(reason) => parsed.reject(line, reason),
        }
    });
    parsed
        .records
        .sort_by(|a, b| (&a.geo_id, a.date).cmp(&(&b.geo_id, b.date)));
    Ok(parsed)
}

fn parse_row(
    record: &csv::StringRecord,
    gazetteer: Option<&Gazetteer>,
) -> Result<MobilityRecord, String> {
    if record.len() != MOBILITY_HEADER.len() {
        return Err(format!("expected 3 fields, found {}", record.len()));
    }
    let geo_id = GeoId::new(field(record, 0, "geo_id")?);
    if geo_id.as_str().is_empty() {
        return Err("empty geo_id".into());
    }
    if let Some(g) = gazetteer {
        if g.get(geo_id.as_str()).is_none() {
            return Err(format!("unknown geo_id `{geo_id}`"));
        }
    }
    let date: NaiveDate = parse_field(record, 1, "date")?;
    let level: i64 = parse_field(record, 2, "level")?;
    if !(MIN_MOBILITY as i64..=MAX_MOBILITY as i64).contains(&level) {
        return Err(format!("mobility level {level} outside [1,5]"));
    }
    Ok(MobilityRecord {
        geo_id,
        date,
        level: level as u8,
    })
}

pub fn write_mobility<W: std::io::Write>(
    out: W,
    records: &[MobilityRecord],
) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(MOBILITY_HEADER)?;
    for r in records {
        writer.write_record([r.geo_id.to_string(), r.date.to_string(), r.level.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}
