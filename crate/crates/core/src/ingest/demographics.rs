use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{
    check_header, csv_reader, field, for_each_row, parse_field, parse_fraction, IngestError,
    Parsed, Rejection,
};
use crate::geo::{valid_coordinate, GeoId, Level};

pub const DEMOGRAPHICS_HEADER: [&str; 10] = [
    "geo_id",
    "level",
    "name",
    "parent_geo_id",
    "population",
    "pop_density",
    "pct_over_65",
    "pct_female",
    "lat",
    "lon",
];

/// Census figures and position of one area, plus its administrative parent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemographicRecord {
    pub geo_id: GeoId,
    pub level: Level,
    pub name: String,
    pub parent_geo_id: Option<GeoId>,
    pub population: u64,
    /// People per square mile.
    pub pop_density: f64,
    pub pct_over_65: f64,
    pub pct_female: f64,
    pub lat: f64,
    pub lon: f64,
}

impl DemographicRecord {
    /// The A2 sub-vector: population, density, share over 65, share female.
    pub fn features(&self) -> [f64; 4] {
        [
            self.population as f64,
            self.pop_density,
            self.pct_over_65,
            self.pct_female,
        ]
    }
}

/// Parses `demographics.csv` and validates that the accepted records form a
/// single tree rooted at the nation.
///
/// Rows whose parent is missing or sits at the wrong level are rejected, and
/// the rejection cascades to their descendants. Duplicate identifiers, parent
/// cycles and a nation count other than one are hard errors.
pub fn parse_demographics(input: &str) -> Result<Parsed<DemographicRecord>, IngestError> {
    let mut reader = csv_reader(input);
    check_header(&mut reader, "demographics.csv", &DEMOGRAPHICS_HEADER)?;

    let mut rows: Parsed<(usize, DemographicRecord)> = Parsed::default();
    for_each_row(reader, &mut rows, |record, line, parsed| {
        match parse_row(record) {
            Ok(r) => parsed.accept((line, r)),
            Err(reason) => parsed.reject(line, reason),
        }
    });

    let mut first_line: HashMap<&GeoId, usize> = HashMap::new();
    for (line, r) in &rows.records {
        if let Some(&first) = first_line.get(&r.geo_id) {
            return Err(IngestError::DuplicateGeoId {
                geo_id: r.geo_id.to_string(),
                first,
                second: *line,
            });
        }
        first_line.insert(&r.geo_id, *line);
    }

    detect_cycle(rows.records.iter().map(|(_, r)| r))?;

    let nations = rows
        .records
        .iter()
        .filter(|(_, r)| r.level == Level::Nation)
        .count();
    if nations != 1 {
        return Err(IngestError::NationCount(nations));
    }

    let mut candidates = rows.records;
    candidates.sort_by(|a, b| (a.1.level, &a.1.geo_id).cmp(&(b.1.level, &b.1.geo_id)));
    let mut accepted: HashMap<GeoId, Level> = HashMap::new();
    let mut records = Vec::with_capacity(candidates.len());
    let mut rejections = rows.rejections;
    for (line, r) in candidates {
        let verdict = match (&r.parent_geo_id, r.level.parent()) {
            (None, None) => Ok(()),
            (Some(_), None) => Err("nation must not have a parent".to_string()),
            (None, Some(_)) => Err(format!("{} `{}` has no parent", r.level, r.geo_id)),
            (Some(parent), Some(expected)) => match accepted.get(parent) {
                None => Err(format!("parent `{parent}` of `{}` not found", r.geo_id)),
                Some(&level) if level != expected => Err(format!(
                    "parent `{parent}` of {} `{}` is a {level}, expected a {expected}",
                    r.level, r.geo_id
                )),
                Some(_) => Ok(()),
            },
        };
        match verdict {
            Ok(()) => {
                accepted.insert(r.geo_id.clone(), r.level);
                records.push(r);
            }
            Err(reason) => rejections.push(Rejection::new(line, reason)),
        }
    }
    if !records.iter().any(|r| r.level == Level::Nation) {
        return Err(IngestError::NationCount(0));
    }
    rejections.sort_by_key(|r| r.line);
    Ok(Parsed {
        records,
        rejections,
        rows: rows.rows,
    })
}

fn parse_row(record: &csv::StringRecord) -> Result<DemographicRecord, String> {
    if record.len() != DEMOGRAPHICS_HEADER.len() {
        return Err(format!(
            "expected {} fields, found {}",
            DEMOGRAPHICS_HEADER.len(),
            record.len()
        ));
    }
    let geo_id = field(record, 0, "geo_id")?;
    if geo_id.is_empty() {
        return Err("empty geo_id".into());
    }
    let level: Level = parse_field(record, 1, "level")?;
    let name = field(record, 2, "name")?.to_owned();
    let parent = field(record, 3, "parent_geo_id")?;
    let population: u64 = parse_field(record, 4, "population")?;
    let pop_density: f64 = parse_field(record, 5, "pop_density")?;
    if !(pop_density.is_finite() && pop_density >= 0.0) {
        return Err(format!("pop_density {pop_density} must be a non-negative number"));
    }
    let pct_over_65 = parse_fraction(record, 6, "pct_over_65")?;
    let pct_female = parse_fraction(record, 7, "pct_female")?;
    let lat: f64 = parse_field(record, 8, "lat")?;
    let lon: f64 = parse_field(record, 9, "lon")?;
    if !valid_coordinate(lat, lon) {
        return Err(format!("coordinate ({lat}, {lon}) out of range"));
    }
    Ok(DemographicRecord {
        geo_id: GeoId::new(geo_id),
        level,
        name,
        parent_geo_id: (!parent.is_empty()).then(|| GeoId::new(parent)),
        population,
        pop_density,
        pct_over_65,
        pct_female,
        lat,
        lon,
    })
}

fn detect_cycle<'a>(
    records: impl Iterator<Item = &'a DemographicRecord>,
) -> Result<(), IngestError> {
    let parent: HashMap<&GeoId, &GeoId> = records
        .filter_map(|r| r.parent_geo_id.as_ref().map(|p| (&r.geo_id, p)))
        .collect();
    let mut cleared: HashSet<&GeoId> = HashSet::new();
    for &start in parent.keys() {
        let mut path: HashSet<&GeoId> = HashSet::new();
        let mut cursor = start;
        loop {
            if cleared.contains(cursor) {
                break;
            }
            if !path.insert(cursor) {
                return Err(IngestError::Cycle(cursor.to_string()));
            }
            match parent.get(cursor) {
                Some(&next) => cursor = next,
                None => break,
            }
        }
        cleared.extend(path);
    }
    Ok(())
}

pub fn write_demographics<W: std::io::Write>(
    out: W,
    records: &[DemographicRecord],
) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(DEMOGRAPHICS_HEADER)?;
    for r in records {
        writer.write_record([
            r.geo_id.to_string(),
            r.level.to_string(),
            r.name.clone(),
            r.parent_geo_id
                .as_ref()
                .map(ToString::to_string)
                .unwrap_or_default(),
            r.population.to_string(),
            r.pop_density.to_string(),
            r.pct_over_65.to_string(),
            r.pct_female.to_string(),
            r.lat.to_string(),
            r.lon.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Validated demographic records indexed by identifier.
#[derive(Clone, Debug)]
pub struct Gazetteer {
    records: Vec<DemographicRecord>,
    index: HashMap<GeoId, usize>,
}

impl Gazetteer {
    /// Wraps records that already passed [`parse_demographics`].
    pub fn new(records: Vec<DemographicRecord>) -> Self {
        let index = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.geo_id.clone(), i))
            .collect();
        Gazetteer { records, index }
    }

    pub fn get(&self, geo_id: &str) -> Option<&DemographicRecord> {
        self.index.get(geo_id).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[DemographicRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The ancestor (or self) at the given level.
    pub fn ancestor_at(&self, geo_id: &str, level: Level) -> Option<&DemographicRecord> {
        let mut cursor = self.get(geo_id)?;
        loop {
            if cursor.level == level {
                return Some(cursor);
            }
            cursor = self.get(cursor.parent_geo_id.as_ref()?.as_str())?;
        }
    }
}
