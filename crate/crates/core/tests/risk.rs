use asat_core::gae::{train_gae, GaeConfig, NeighborIndex, RelationMatrices};
use asat_core::graph::*;
use asat_core::ingest::{parse_demographics, parse_disease, parse_mobility, Poi};
use asat_core::risk::*;
use asat_core::{synth, GeoId, Level};
use chrono::NaiveDate;
use proptest::prelude::*;

fn day(d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, d).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit_vec() -> impl Strategy<Value = [f64; FEATURE_DIM]> {
    proptest::array::uniform10(0.0..=1.0f64)
}

fn weights() -> impl Strategy<Value = [f64; FEATURE_DIM]> {
    proptest::array::uniform10(0.0..=1.0f64)
}

proptest! {
    #[test]
    fn index_matches_weighted_sum(x in unit_vec(), g in weights(), invert in any::<bool>()) {
        let profile = RiskProfile::new(g, invert).unwrap();
        let mut oriented = x;
        if invert {
            oriented[PERCEPTION_DIM] = 1.0 - x[PERCEPTION_DIM];
        }
        prop_assert!((profile.index(&x) - dot(&oriented, &g)).abs() < 1e-12);
    }

    #[test]
    fn sign_contract(x in unit_vec(), g in weights(), dim in 0..FEATURE_DIM, step in 0.0..1.0f64) {
        let profile = RiskProfile::new(g, true).unwrap();
        let mut up = x;
        up[dim] = (x[dim] + step).min(1.0);
        let (before, after) = (profile.index(&x), profile.index(&up));
        if dim == PERCEPTION_DIM {
            prop_assert!(after <= before + 1e-15);
        } else {
            prop_assert!(after >= before - 1e-15);
        }
    }

    #[test]
    fn scaling_gamma_keeps_rankings(
        xs in proptest::collection::vec(unit_vec(), 2..40),
        g in weights(),
        c in 1e-3..1e3f64,
    ) {
        let profile = RiskProfile::new(g, true).unwrap();
        let scaled = profile.scaled(c).unwrap();
        let a: Vec<f64> = xs.iter().map(|x| profile.index(x)).collect();
        let b: Vec<f64> = xs.iter().map(|x| scaled.index(x)).collect();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((y - c * x).abs() <= 1e-12 * (1.0 + c * x.abs()));
        }
        for i in 0..xs.len() {
            for j in 0..xs.len() {
                if (a[i] - a[j]).abs() > 1e-9 * (1.0 + a[i].abs()) {
                    prop_assert_eq!(a[i] < a[j], b[i] < b[j]);
                }
            }
        }
    }
}

#[test]
fn invalid_weights_are_rejected() {
    let mut g = [0.1; FEATURE_DIM];
    g[2] = f64::NAN;
    assert!(matches!(RiskProfile::new(g, true), Err(RiskError::NonFiniteWeight { .. })));
    assert!(RiskProfile::default().scaled(-1.0).is_err());
    assert!(RiskProfile::default().scaled(0.0).is_ok());
}

struct Fixture {
    ahin: Ahin,
    index: NeighborIndex,
    relations: RelationMatrices,
    profile: RiskProfile,
}

impl Fixture {
    fn new(ahin: Ahin, relations: RelationMatrices) -> Self {
        let index = NeighborIndex::build(&ahin).unwrap();
        Fixture {
            ahin,
            index,
            relations,
            profile: RiskProfile::default(),
        }
    }

    fn assessor(&self) -> Assessor<'_> {
        Assessor {
            ahin: &self.ahin,
            index: &self.index,
            relations: &self.relations,
            profile: &self.profile,
            coverage_km: DEFAULT_COVERAGE_KM,
        }
    }
}

#[test]
fn first_case_raises_the_index() {
    for seed in 0..5 {
        let (ahin, target, dates) = synth::first_case_ahin(seed);
        let trained = train_gae(&ahin, &GaeConfig { seed, ..Default::default() }).unwrap();
        for relations in [RelationMatrices::identity(FEATURE_DIM), trained.relations] {
            let f = Fixture::new(ahin.clone(), relations);
            let series = f.assessor().compare_dates(target.as_str(), &dates).unwrap();
            assert_eq!(series.len(), 5);
            assert!(series[1].index > series[0].index, "seed {seed}: {series:?}");
            for pair in series.windows(2) {
                assert!(pair[1].index >= pair[0].index - 1e-12, "seed {seed}: {series:?}");
            }
            // Days 1..4 differ only in magnitudes that normalise to the same values.
            assert_eq!(series[2].index, series[3].index);
        }
    }
}

#[test]
fn identical_snapshots_give_equal_indexes() {
    let (ahin, _, dates) = synth::first_case_ahin(3);
    let f = Fixture::new(ahin, RelationMatrices::identity(FEATURE_DIM));
    let county = f.ahin.lookup("S01C001").unwrap();
    let series = f
        .assessor()
        .compare_dates("S01C001", &dates)
        .unwrap()
        .into_iter()
        .map(|d| d.index)
        .collect::<Vec<_>>();
    assert!(series.windows(2).all(|w| w[0] == w[1]), "{series:?}");
    assert_eq!(series[0], f.assessor().index_of(county, dates[0]));
}

#[test]
fn gamma_scaling_keeps_area_rankings() {
    let ahin = synth::ahin(
        synth::GazetteerShape {
            states: 3,
            counties_per_state: 4,
            cities_per_county: 5,
        },
        4,
        11,
    );
    let trained = train_gae(&ahin, &GaeConfig { epochs: 30, ..Default::default() }).unwrap();
    let mut f = Fixture::new(ahin, trained.relations);
    let date = f.ahin.latest_date().unwrap();
    let cities = f.ahin.level_nodes(Level::City).to_vec();
    let base: Vec<f64> = cities.iter().map(|&v| f.assessor().index_of(v, date)).collect();
    for c in [0.01, 0.5, 3.0, 250.0] {
        f.profile = RiskProfile::default().scaled(c).unwrap();
        let scaled: Vec<f64> = cities.iter().map(|&v| f.assessor().index_of(v, date)).collect();
        let mut order_a: Vec<usize> = (0..cities.len()).collect();
        let mut order_b = order_a.clone();
        order_a.sort_by(|&i, &j| base[i].total_cmp(&base[j]).then(i.cmp(&j)));
        order_b.sort_by(|&i, &j| scaled[i].total_cmp(&scaled[j]).then(i.cmp(&j)));
        assert_eq!(order_a, order_b, "c = {c}");
    }
}

const DEMOGRAPHICS: &str = "geo_id,level,name,parent_geo_id,population,pop_density,pct_over_65,pct_female,lat,lon
US,nation,United States,,328239523,93,0.165,0.508,39.8,-98.6
39,state,Ohio,US,11689100,286,0.175,0.51,40.4,-82.8
42,state,Pennsylvania,US,12801989,286,0.187,0.51,40.9,-77.8
39035,county,Cuyahoga County,39,1235072,1389,0.18,0.52,41.43,-81.67
39049,county,Franklin County,39,1316756,2423,0.12,0.51,39.97,-83.0
42003,county,Allegheny County,42,1216045,1675,0.194,0.516,40.47,-79.98
42101,county,Philadelphia County,42,1584064,11797,0.139,0.527,40.0,-75.13
3916000,city,Cleveland,39035,383793,5107,0.135,0.518,41.4993,-81.6944
39035-44106,city,University Circle,39035,25893,6942,0.102,0.531,41.5054,-81.6058
3941664,city,Lakewood,39035,50942,9035,0.121,0.512,41.482,-81.7982
3918000,city,Columbus,39049,898553,3960,0.1,0.51,39.9612,-82.9988
3922694,city,Dublin,39049,49328,2009,0.109,0.506,40.0992,-83.1141
4261000,city,Pittsburgh,42003,300286,5521,0.143,0.515,40.4406,-79.9959
4206064,city,Bethel Park,42003,32313,2317,0.219,0.523,40.3276,-80.0395
4260000,city,Philadelphia,42101,1584064,11797,0.139,0.527,39.9526,-75.1652
";

const DISEASE: &str = "date,geo_id,state,confirmed,new_cases,deaths,fatality_rate
2020-03-22,39035,OH,125,33,1,0.008
2020-03-22,39049,OH,50,12,0,0
2020-03-22,42003,PA,40,8,0,0
2020-03-22,42101,PA,90,30,1,0.0111
";

fn ohio_fixture() -> Fixture {
    let demographics = parse_demographics(DEMOGRAPHICS).unwrap().records;
    let disease = parse_disease(DISEASE, None).unwrap().records;
    let mobility = parse_mobility(
        "geo_id,date,level\n39035-44106,2020-03-22,3\n3916000,2020-03-22,4\n3941664,2020-03-22,2\n",
        None,
    )
    .unwrap()
    .records;
    let ahin = build_ahin(
        AhinInputs {
            demographics: &demographics,
            disease: &disease,
            mobility: &mobility,
            perceptions: &[],
        },
        BuildConfig::default(),
    )
    .unwrap();
    Fixture::new(ahin, RelationMatrices::identity(FEATURE_DIM))
}

const EUCLID_AVE: (f64, f64) = (41.5036, -81.62);

#[test]
fn coordinate_gives_three_level_chain() {
    let f = ohio_fixture();
    let a = f
        .assessor()
        .assess(
            &Location::Coordinate {
                lat: EUCLID_AVE.0,
                lon: EUCLID_AVE.1,
            },
            day(22),
            Some(3),
        )
        .unwrap();
    assert!(!a.stale);
    let ids: Vec<&str> = a.chain.iter().map(|l| l.geo_id.as_str()).collect();
    assert_eq!(ids, ["39", "39035", "39035-44106"]);
    let levels: Vec<Level> = a.chain.iter().map(|l| l.level).collect();
    assert_eq!(levels, [Level::State, Level::County, Level::City]);
    assert_eq!(a.chain[1].density, 1389.0);
    assert_eq!(a.chain[1].confirmed, 125.0);
    assert_eq!(a.chain[2].mobility, 3.0);
    for l in &a.chain {
        assert!((0.0..=1.0).contains(&l.index));
        assert_eq!(l.factors.len(), FEATURE_DIM);
        let sum: f64 = l.factors.iter().map(|x| x.contribution).sum();
        assert!((sum - l.index).abs() < 1e-12);
    }
    let loc = a.location.unwrap();
    assert_eq!(loc.geo_id.as_str(), "39035-44106");
    assert!(loc.distance_km < 2.0);
    assert_eq!(loc.mobility, Some(3));
    assert!((0.0..=1.0).contains(&loc.index));
}

#[test]
fn local_mobility_only_moves_the_location_entry() {
    let f = ohio_fixture();
    let at = |m| {
        f.assessor()
            .assess(
                &Location::Coordinate {
                    lat: EUCLID_AVE.0,
                    lon: EUCLID_AVE.1,
                },
                day(22),
                m,
            )
            .unwrap()
    };
    let (quiet, busy) = (at(Some(1)), at(Some(5)));
    assert_eq!(quiet.chain, busy.chain);
    let (q, b) = (quiet.location.unwrap().index, busy.location.unwrap().index);
    assert!((b - q - 0.1).abs() < 1e-12, "mobility weight 0.1 times a unit swing");
}

#[test]
fn nation_is_a_single_level() {
    let f = ohio_fixture();
    let a = f.assessor().assess(&Location::Area(GeoId::new("US")), day(22), None).unwrap();
    assert_eq!(a.chain.len(), 1);
    assert_eq!(a.chain[0].level, Level::Nation);
    assert!(a.location.is_none());
    let county = f.assessor().assess(&Location::Area(GeoId::new("42003")), day(22), None).unwrap();
    let ids: Vec<&str> = county.chain.iter().map(|l| l.geo_id.as_str()).collect();
    assert_eq!(ids, ["42", "42003"]);
}

#[test]
fn assessment_is_deterministic() {
    let f = ohio_fixture();
    let loc = Location::Coordinate {
        lat: 40.44,
        lon: -80.0,
    };
    let a = f.assessor().assess(&loc, day(22), None).unwrap();
    let b = ohio_fixture().assessor().assess(&loc, day(22), None).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn assessment_errors() {
    let f = ohio_fixture();
    let a = f.assessor();
    let ocean = Location::Coordinate {
        lat: 35.0,
        lon: -60.0,
    };
    assert!(matches!(a.assess(&ocean, day(22), None), Err(RiskError::OutsideCoverage { .. })));
    let bad = Location::Coordinate {
        lat: 91.0,
        lon: 0.0,
    };
    assert!(matches!(a.assess(&bad, day(22), None), Err(RiskError::InvalidCoordinate { .. })));
    let nan = Location::Coordinate {
        lat: f64::NAN,
        lon: 0.0,
    };
    assert!(matches!(a.assess(&nan, day(22), None), Err(RiskError::InvalidCoordinate { .. })));
    assert!(matches!(
        a.assess(&Location::Area(GeoId::new("nope")), day(22), None),
        Err(RiskError::UnknownArea(_))
    ));
    assert!(matches!(a.compare_dates("39035", &[]), Err(RiskError::EmptyDates)));
    assert!(matches!(a.compare_dates("nope", &[day(22)]), Err(RiskError::UnknownArea(_))));
}

#[test]
fn unknown_date_is_stale_with_zero_disease() {
    let f = ohio_fixture();
    let a = f
        .assessor()
        .assess(&Location::Area(GeoId::new("39035")), day(1), None)
        .unwrap();
    assert!(a.stale);
    assert_eq!(a.chain[1].confirmed, 0.0);
    let series = f.assessor().compare_dates("39035", &[day(1), day(22)]).unwrap();
    assert!(series[0].stale);
    assert!(!series[1].stale);
}

fn grocery(name: &str, lat: f64, lon: f64, mobility: u8) -> Poi {
    Poi {
        name: name.into(),
        tag: "grocery".into(),
        lat,
        lon,
        mobility,
    }
}

#[test]
fn pois_sorted_and_scored() {
    let f = ohio_fixture();
    let pois = vec![
        grocery("Far", 41.52, -81.60, 3),
        grocery("Here", EUCLID_AVE.0, EUCLID_AVE.1, 3),
        grocery("Near", 41.505, -81.615, 3),
        grocery("Columbus", 39.96, -83.0, 3),
        Poi {
            tag: "pharmacy".into(),
            ..grocery("Drugs", 41.504, -81.62, 2)
        },
    ];
    let a = f.assessor();
    let got = a.nearby_pois(&pois, EUCLID_AVE.0, EUCLID_AVE.1, "GROCERY", 5.0, day(22)).unwrap();
    let names: Vec<&str> = got.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, ["Here", "Near", "Far"]);
    assert_eq!(got[0].distance_km, 0.0);
    for p in &got {
        assert!((0.0..=1.0).contains(&p.index));
        assert_eq!(p.geo_id.as_str(), "39035-44106");
    }
    assert!(a.nearby_pois(&pois, EUCLID_AVE.0, EUCLID_AVE.1, "grocery", 0.0, day(22)).unwrap().is_empty());
    assert!(a.nearby_pois(&pois, EUCLID_AVE.0, EUCLID_AVE.1, "bakery", 5.0, day(22)).unwrap().is_empty());
    assert!(a.nearby_pois(&[], EUCLID_AVE.0, EUCLID_AVE.1, "grocery", 5.0, day(22)).unwrap().is_empty());
    assert!(a.nearby_pois(&pois, 95.0, 0.0, "grocery", 5.0, day(22)).is_err());
}

#[test]
fn busier_poi_scores_at_least_as_high() {
    let f = ohio_fixture();
    let pois: Vec<Poi> = (1..=5).map(|m| grocery(&format!("m{m}"), 41.505, -81.61, m)).collect();
    let got = f.assessor().nearby_pois(&pois, EUCLID_AVE.0, EUCLID_AVE.1, "grocery", 5.0, day(22)).unwrap();
    let mut by_level: Vec<(u8, f64)> = got.iter().map(|p| (p.mobility, p.index)).collect();
    by_level.sort_by_key(|p| p.0);
    for w in by_level.windows(2) {
        assert!(w[1].1 >= w[0].1);
    }
}
