//! Seeded synthetic inputs for tests, benchmarks and demos.

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geo::{GeoId, Level};
use crate::graph::{build_ahin, Ahin, AhinInputs, BuildConfig, DiseaseFallback, PerceptionRecord};
use crate::ingest::{DemographicRecord, DiseaseRecord, MobilityRecord};

/// Shape of a generated gazetteer.
#[derive(Clone, Copy, Debug)]
pub struct GazetteerShape {
    pub states: usize,
    pub counties_per_state: usize,
    pub cities_per_county: usize,
}

impl GazetteerShape {
    pub fn node_count(&self) -> usize {
        let counties = self.states * self.counties_per_state;
        1 + self.states + counties + counties * self.cities_per_county
    }
}

fn record(
    rng: &mut ChaCha8Rng,
    geo_id: String,
    level: Level,
    parent: Option<&str>,
    lat: f64,
    lon: f64,
) -> DemographicRecord {
    let population = match level {
        Level::Nation => 328_000_000,
        Level::State => rng.random_range(500_000..20_000_000),
        Level::County => rng.random_range(10_000..1_500_000),
        Level::City => rng.random_range(1_000..400_000),
    };
    DemographicRecord {
        name: format!("{level} {geo_id}"),
        geo_id: GeoId::new(geo_id),
        level,
        parent_geo_id: parent.map(GeoId::from),
        population,
        pop_density: (rng.random_range(5.0..6000.0_f64) * 10.0).round() / 10.0,
        pct_over_65: (rng.random_range(0.08..0.28_f64) * 1000.0).round() / 1000.0,
        pct_female: (rng.random_range(0.46..0.54_f64) * 1000.0).round() / 1000.0,
        lat: (lat * 1e4).round() / 1e4,
        lon: (lon * 1e4).round() / 1e4,
    }
}

/// Random nation/state/county/city tree inside a continental bounding box.
pub fn gazetteer(shape: GazetteerShape, seed: u64) -> Vec<DemographicRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![record(&mut rng, "US".into(), Level::Nation, None, 39.8, -98.6)];
    for s in 0..shape.states {
        let state_id = format!("S{s:02}");
        let (slat, slon) = (rng.random_range(27.0..47.0), rng.random_range(-120.0..-72.0));
        out.push(record(&mut rng, state_id.clone(), Level::State, Some("US"), slat, slon));
        for c in 0..shape.counties_per_state {
            let county_id = format!("{state_id}C{c:03}");
            let clat = slat + rng.random_range(-1.5..1.5);
            let clon = slon + rng.random_range(-1.5..1.5);
            out.push(record(&mut rng, county_id.clone(), Level::County, Some(&state_id), clat, clon));
            for k in 0..shape.cities_per_county {
                let lat = clat + rng.random_range(-0.3..0.3);
                let lon = clon + rng.random_range(-0.3..0.3);
                out.push(record(&mut rng, format!("{county_id}K{k:03}"), Level::City, Some(&county_id), lat, lon));
            }
        }
    }
    out
}

pub fn dates(start: NaiveDate, days: usize) -> Vec<NaiveDate> {
    (0..days as u64)
        .map(|d| start.checked_add_days(Days::new(d)).expect("date in range"))
        .collect()
}

/// Cumulative county-level case counts growing over `dates`.
pub fn disease(records: &[DemographicRecord], dates: &[NaiveDate], seed: u64) -> Vec<DiseaseRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for r in records.iter().filter(|r| r.level == Level::County) {
        let mut confirmed = 0u64;
        let mut deaths = 0u64;
        let growth = rng.random_range(0.0..6.0);
        for &date in dates {
            let new_cases = (growth * rng.random_range(0.0..2.0_f64)).round() as u64;
            confirmed += new_cases;
            if confirmed > deaths && rng.random_bool(0.05) {
                deaths += 1;
            }
            let state = r.parent_geo_id.as_ref().map(|p| p.to_string()).unwrap_or_default();
            out.push(DiseaseRecord::new(date, r.geo_id.clone(), state, confirmed, new_cases, deaths));
        }
    }
    out
}

pub fn mobility(records: &[DemographicRecord], dates: &[NaiveDate], seed: u64) -> Vec<MobilityRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for r in records.iter().filter(|r| r.level == Level::City) {
        for &date in dates {
            out.push(MobilityRecord {
                geo_id: r.geo_id.clone(),
                date,
                level: rng.random_range(1..=5),
            });
        }
    }
    out
}

/// Graph used to score link reconstruction: three well separated counties,
/// each holding ten tight triples of cities. With `k = 2` every city's near
/// edges stay inside its triple. The six city attributes that vary (four
/// demographic, mobility, perception) take one of two values, and every
/// triple carries its own three-of-six on/off pattern, so after min-max
/// normalisation each city vector has exactly three ones.
pub fn planted_cluster_ahin(seed: u64) -> Ahin {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let date = NaiveDate::from_ymd_opt(2020, 3, 24).expect("valid date");

    let mut patterns: Vec<[bool; 6]> = Vec::new();
    for mask in 0u8..64 {
        if mask.count_ones() == 3 {
            let mut p = [false; 6];
            for (i, bit) in p.iter_mut().enumerate() {
                *bit = mask & (1 << i) != 0;
            }
            patterns.push(p);
        }
    }

    let mut demographics = vec![DemographicRecord {
        geo_id: "US".into(),
        level: Level::Nation,
        name: "Plantedland".into(),
        parent_geo_id: None,
        population: 1_000_000,
        pop_density: 100.0,
        pct_over_65: 0.15,
        pct_female: 0.5,
        lat: 40.0,
        lon: -90.0,
    }];
    demographics.push(DemographicRecord {
        geo_id: "ST".into(),
        level: Level::State,
        name: "Planted State".into(),
        parent_geo_id: Some("US".into()),
        ..demographics[0].clone()
    });
    let mut disease = Vec::new();
    let mut mobility = Vec::new();
    let mut perceptions = Vec::new();
    for c in 0..3 {
        let county = format!("C{c}");
        let (clat, clon) = (40.0 + 3.0 * c as f64, -90.0 + 3.0 * c as f64);
        demographics.push(DemographicRecord {
            geo_id: GeoId::new(county.clone()),
            level: Level::County,
            name: format!("County {c}"),
            parent_geo_id: Some("ST".into()),
            lat: clat,
            lon: clon,
            ..demographics[0].clone()
        });
        disease.push(DiseaseRecord::new(date, county.clone(), "ST", 50, 5, 1));
        let mut chosen = patterns.clone();
        chosen.shuffle(&mut rng);
        for (t, &pattern) in chosen.iter().enumerate().take(10) {
            let (tlat, tlon) = (clat + 0.5 * (t / 5) as f64, clon + 0.5 * (t % 5) as f64);
            for m in 0..3 {
                let id = format!("C{c}T{t}M{m}");
                let pick = |on: bool, lo: f64, hi: f64| if on { hi } else { lo };
                demographics.push(DemographicRecord {
                    geo_id: GeoId::new(id.clone()),
                    level: Level::City,
                    name: format!("Town {id}"),
                    parent_geo_id: Some(GeoId::new(county.clone())),
                    population: if pattern[0] { 90_000 } else { 10_000 },
                    pop_density: pick(pattern[1], 200.0, 4000.0),
                    pct_over_65: pick(pattern[2], 0.1, 0.25),
                    pct_female: pick(pattern[3], 0.48, 0.53),
                    lat: tlat + 0.01 * m as f64 + rng.random_range(0.0..0.002),
                    lon: tlon + 0.01 * ((m * 2) % 3) as f64 + rng.random_range(0.0..0.002),
                });
                mobility.push(MobilityRecord {
                    geo_id: GeoId::new(id.clone()),
                    date,
                    level: if pattern[4] { 5 } else { 1 },
                });
                perceptions.push(PerceptionRecord {
                    geo_id: GeoId::new(id),
                    date,
                    value: pick(pattern[5], 0.2, 0.8),
                });
            }
        }
    }
    build_ahin(
        AhinInputs {
            demographics: &demographics,
            disease: &disease,
            mobility: &mobility,
            perceptions: &perceptions,
        },
        BuildConfig {
            k: 2,
            disease_fallback: DiseaseFallback::Ancestor,
            ..BuildConfig::default()
        },
    )
    .expect("planted graph is well formed")
}

/// Graph over [`gazetteer`] with county case counts and city mobility on
/// `days` consecutive days from 2020-03-01.
pub fn ahin(shape: GazetteerShape, days: usize, seed: u64) -> Ahin {
    let records = gazetteer(shape, seed);
    let dates = dates(NaiveDate::from_ymd_opt(2020, 3, 1).expect("valid date"), days);
    let disease = disease(&records, &dates, seed ^ 1);
    let mobility = mobility(&records, &dates, seed ^ 2);
    build_ahin(
        AhinInputs {
            demographics: &records,
            disease: &disease,
            mobility: &mobility,
            perceptions: &[],
        },
        BuildConfig::default(),
    )
    .expect("generated inputs are consistent")
}

/// Five days in which a single county goes from no cases to its first three
/// and keeps growing while every other input stays fixed. Returns the graph,
/// the county and the dates.
pub fn first_case_ahin(seed: u64) -> (Ahin, GeoId, Vec<NaiveDate>) {
    let shape = GazetteerShape {
        states: 2,
        counties_per_state: 3,
        cities_per_county: 3,
    };
    let records = gazetteer(shape, seed);
    let dates = dates(NaiveDate::from_ymd_opt(2020, 3, 8).expect("valid date"), 5);
    let target = GeoId::new("S00C000");
    let confirmed = [0u64, 3, 5, 9, 14];
    let mut disease = Vec::new();
    let mut mobility = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for r in &records {
        let state = r.parent_geo_id.as_ref().map(|p| p.to_string()).unwrap_or_default();
        let level = rng.random_range(1..=5);
        for (i, &date) in dates.iter().enumerate() {
            match r.level {
                Level::County => {
                    let (c, new) = if r.geo_id == target {
                        (confirmed[i], confirmed[i] - if i > 0 { confirmed[i - 1] } else { 0 })
                    } else {
                        (0, 0)
                    };
                    disease.push(DiseaseRecord::new(date, r.geo_id.clone(), state.clone(), c, new, 0));
                }
                Level::City => mobility.push(MobilityRecord {
                    geo_id: r.geo_id.clone(),
                    date,
                    level,
                }),
                _ => {}
            }
        }
    }
    let ahin = build_ahin(
        AhinInputs {
            demographics: &records,
            disease: &disease,
            mobility: &mobility,
            perceptions: &[],
        },
        BuildConfig::default(),
    )
    .expect("generated inputs are consistent");
    (ahin, target, dates)
}
