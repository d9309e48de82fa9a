use std::collections::HashMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{
    check_header, csv_reader, field, for_each_row, parse_field, Gazetteer, IngestError, Parsed,
};
use crate::geo::GeoId;

pub const DISEASE_HEADER: [&str; 7] = [
    "date",
    "geo_id",
    "state",
    "confirmed",
    "new_cases",
    "deaths",
    "fatality_rate",
];

/// Published fatality rates are rounded to a tenth of a percent.
const FATALITY_TOLERANCE: f64 = 5e-4;

/// Daily disease counts for one area.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiseaseRecord {
    pub date: NaiveDate,
    pub geo_id: GeoId,
    pub state: String,
    pub confirmed: u64,
    pub new_cases: u64,
    pub deaths: u64,
    /// Always `deaths / confirmed`, or 0 without confirmed cases.
    pub fatality_rate: f64,
}

impl DiseaseRecord {
    pub fn new(
        date: NaiveDate,
        geo_id: impl Into<GeoId>,
        state: impl Into<String>,
        confirmed: u64,
        new_cases: u64,
        deaths: u64,
    ) -> Self {
        DiseaseRecord {
            date,
            geo_id: geo_id.into(),
            state: state.into(),
            confirmed,
            new_cases,
            deaths,
            fatality_rate: fatality_rate(confirmed, deaths),
        }
    }

    /// The A1 sub-vector: confirmed, new cases, deaths, fatality rate.
    pub fn features(&self) -> [f64; 4] {
        [
            self.confirmed as f64,
            self.new_cases as f64,
            self.deaths as f64,
            self.fatality_rate,
        ]
    }
}

fn fatality_rate(confirmed: u64, deaths: u64) -> f64 {
    if confirmed == 0 {
        0.0
    } else {
        deaths as f64 / confirmed as f64
    }
}

/// Parses `disease.csv`. When a gazetteer is given, rows naming an unknown
/// area are rejected.
pub fn parse_disease(
    input: &str,
    gazetteer: Option<&Gazetteer>,
) -> Result<Parsed<DiseaseRecord>, IngestError> {
    let mut reader = csv_reader(input);
    check_header(&mut reader, "disease.csv", &DISEASE_HEADER)?;

    let mut parsed = Parsed::default();
    let mut seen: HashMap<(GeoId, NaiveDate), usize> = HashMap::new();
    for_each_row(reader, &mut parsed, |record, line, parsed| {
        match parse_row(record, gazetteer) {
            Ok(row) => {
                let key = (row.geo_id.clone(), row.date);
                if let Some(first) = seen.get(&key) {
                    parsed.reject(
                        line,
                        format!(
                            "duplicate row for {} on {} (first on line {first})",
                            row.geo_id, row.date
                        ),
                    );
                } else {
                    seen.insert(key, line);
                    parsed.accept(row);
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
) -> Result<DiseaseRecord, String> {
    if record.len() != DISEASE_HEADER.len() {
        return Err(format!(
            "expected {} fields, found {}",
            DISEASE_HEADER.len(),
            record.len()
        ));
    }
    let date: NaiveDate = parse_field(record, 0, "date")?;
    let geo_id = GeoId::new(field(record, 1, "geo_id")?);
    if geo_id.as_str().is_empty() {
        return Err("empty geo_id".into());
    }
    if let Some(gazetteer) = gazetteer {
        if gazetteer.get(geo_id.as_str()).is_none() {
            return Err(format!("unknown geo_id `{geo_id}`"));
        }
    }
    let state = field(record, 2, "state")?.to_owned();
    let confirmed: u64 = parse_field(record, 3, "confirmed")?;
    let new_cases: u64 = parse_field(record, 4, "new_cases")?;
    let deaths: u64 = parse_field(record, 5, "deaths")?;
    if deaths > confirmed {
        return Err(format!("deaths {deaths} exceed confirmed {confirmed}"));
    }
    if new_cases > confirmed {
        return Err(format!("new_cases {new_cases} exceed confirmed {confirmed}"));
    }
    let computed = fatality_rate(confirmed, deaths);
    let reported = field(record, 6, "fatality_rate")?;
    if !reported.is_empty() {
        let reported: f64 = reported
            .parse()
            .map_err(|e| format!("invalid fatality_rate `{reported}`: {e}"))?;
        if !(0.0..=1.0).contains(&reported) {
            return Err(format!("fatality_rate {reported} outside [0,1]"));
        }
        if (reported - computed).abs() > FATALITY_TOLERANCE {
            return Err(format!(
                "fatality_rate {reported} disagrees with deaths/confirmed = {computed:.6}"
            ));
        }
    }
    Ok(DiseaseRecord {
        date,
        geo_id,
        state,
        confirmed,
        new_cases,
        deaths,
        fatality_rate: computed,
    })
}

pub fn write_disease<W: std::io::Write>(
    out: W,
    records: &[DiseaseRecord],
) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(DISEASE_HEADER)?;
    for r in records {
        writer.write_record([
            r.date.to_string(),
            r.geo_id.to_string(),
            r.state.clone(),
            r.confirmed.to_string(),
            r.new_cases.to_string(),
            r.deaths.to_string(),
            r.fatality_rate.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "date,geo_id,state,confirmed,new_cases,deaths,fatality_rate\n";

    fn parse(rows: &str) -> Parsed<DiseaseRecord> {
        parse_disease(&format!("{HEADER}{rows}"), None).unwrap()
    }

    #[test]
    fn cuyahoga_row() {
        let parsed = parse("2020-03-22,39035,OH,125,33,1,0.008\n");
        assert!(parsed.rejections.is_empty());
        let r = &parsed.records[0];
        assert_eq!(r.date, NaiveDate::from_ymd_opt(2020, 3, 22).unwrap());
        assert_eq!(r.geo_id.as_str(), "39035");
        assert_eq!((r.confirmed, r.new_cases, r.deaths), (125, 33, 1));
        assert_eq!(r.fatality_rate, 0.008);
    }

    #[test]
    fn zero_cases_zero_fatality() {
        let parsed = parse("2020-03-08,39035,OH,0,0,0,0\n2020-03-09,39035,OH,0,0,0,\n");
        assert_eq!(parsed.records.len(), 2);
        assert!(parsed.records.iter().all(|r| r.fatality_rate == 0.0));
    }

    #[test]
    fn deaths_above_confirmed_rejected() {
        let parsed = parse("2020-03-22,39035,OH,1,0,2,1.0\n");
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.rejections.len(), 1);
        assert_eq!(parsed.rejections[0].line, 2);
        assert!(parsed.rejections[0].reason.contains("deaths"));
    }

    #[test]
    fn malformed_rows_rejected_not_fatal() {
        let parsed = parse(
            "2020-03-22,39035,OH,125,33,1,0.008\n\
             not-a-date,39035,OH,1,1,0,0\n\
             2020-03-23,39035,OH,abc,1,0,0\n\
             2020-03-24,39035,OH,3\n\
             2020-03-25,39035,OH,10,1,1,0.5\n",
        );
        assert_eq!(parsed.records.len(), 1);
        let lines: Vec<usize> = parsed.rejections.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![3, 4, 5, 6]);
        assert_eq!(parsed.rows, 5);
    }

    #[test]
    fn records_sorted_by_area_then_date() {
        let parsed = parse(
            "2020-03-23,B,OH,1,1,0,0\n2020-03-22,B,OH,1,1,0,0\n2020-03-24,A,OH,1,1,0,0\n",
        );
        let keys: Vec<(String, String)> = parsed
            .records
            .iter()
            .map(|r| (r.geo_id.to_string(), r.date.to_string()))
            .collect();
        assert_eq!(
            keys,
            vec![
                ("A".into(), "2020-03-24".into()),
                ("B".into(), "2020-03-22".into()),
                ("B".into(), "2020-03-23".into())
            ]
        );
    }

    #[test]
    fn duplicate_area_date_rejected() {
        let parsed = parse("2020-03-22,A,OH,1,1,0,0\n2020-03-22,A,OH,2,1,0,0\n");
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.rejections[0].line, 3);
    }

    #[test]
    fn wrong_header_is_an_error() {
        assert!(matches!(
            parse_disease("date,geo\n", None),
            Err(IngestError::Header { .. })
        ));
    }

    #[test]
    fn round_trip() {
        let parsed = parse("2020-03-22,39035,OH,125,33,1,0.008\n2020-03-23,39035,OH,150,25,2,\n");
        let mut buf = Vec::new();
        write_disease(&mut buf, &parsed.records).unwrap();
        let again = parse_disease(std::str::from_utf8(&buf).unwrap(), None).unwrap();
        assert_eq!(again.records, parsed.records);
    }
}
