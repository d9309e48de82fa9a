use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{RiskError, RiskProfile};
use crate::gae::{encode_node_with, NeighborIndex, NodeEncoding, RelationMatrices};
use crate::geo::{haversine_km, valid_coordinate, DistanceMetric, GeoId, Level};
use crate::graph::{Ahin, NodeId, DENSITY_DIM, FEATURE_DIM, FEATURE_NAMES, MOBILITY_DIM, PERCEPTION_DIM};
use crate::ingest::{Poi, MAX_MOBILITY, MIN_MOBILITY};

/// Coordinates farther than this from every leaf area are not assessed.
pub const DEFAULT_COVERAGE_KM: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Location {
    Coordinate { lat: f64, lon: f64 },
    Area(GeoId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub dimension: String,
    /// Encoded value after orientation.
    pub value: f64,
    pub weight: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelAssessment {
    pub level: Level,
    pub geo_id: GeoId,
    pub name: String,
    pub index: f64,
    /// Raw awareness score.
    pub perception: f64,
    /// Raw population density.
    pub density: f64,
    /// Raw mobility level, 0 when absent.
    pub mobility: f64,
    pub confirmed: f64,
    pub neighbors: usize,
    pub factors: Vec<Factor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationAssessment {
    pub lat: f64,
    pub lon: f64,
    /// Leaf area the coordinate resolved to.
    pub geo_id: GeoId,
    pub distance_km: f64,
    pub mobility: Option<u8>,
    pub index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub date: NaiveDate,
    /// Set when the date has no ingested data and dated features are zero.
    pub stale: bool,
    /// Outermost first, ending at the resolved area. The nation appears only
    /// when it is itself the target.
    pub chain: Vec<LevelAssessment>,
    pub location: Option<LocationAssessment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatedIndex {
    pub date: NaiveDate,
    pub index: f64,
    pub stale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPoi {
    pub name: String,
    pub tag: String,
    pub lat: f64,
    pub lon: f64,
    pub mobility: u8,
    pub distance_km: f64,
    pub geo_id: GeoId,
    pub index: f64,
}

/// Read-only scoring over one graph snapshot and trained relation matrices.
#[derive(Debug, Clone, Copy)]
pub struct Assessor<'a> {
    pub ahin: &'a Ahin,
    pub index: &'a NeighborIndex,
    pub relations: &'a RelationMatrices,
    pub profile: &'a RiskProfile,
    pub coverage_km: f64,
}

/// Busyness 1..=5 mapped onto [0, 1].
fn mobility_unit(level: u8) -> f64 {
    f64::from(level.clamp(MIN_MOBILITY, MAX_MOBILITY) - MIN_MOBILITY) / f64::from(MAX_MOBILITY - MIN_MOBILITY)
}

impl<'a> Assessor<'a> {
    pub fn encode(&self, v: NodeId, date: NaiveDate) -> NodeEncoding {
        encode_node_with(v, self.index, self.relations, |u| self.ahin.normalized(u, date))
    }

    pub fn index_of(&self, v: NodeId, date: NaiveDate) -> f64 {
        self.profile.index(&self.encode(v, date).vector)
    }

    pub fn level_assessment(&self, v: NodeId, date: NaiveDate) -> LevelAssessment {
        let encoding = self.encode(v, date);
        let oriented = self.profile.orient(&encoding.vector);
        let factors: Vec<Factor> = (0..FEATURE_DIM)
            .map(|d| Factor {
                dimension: FEATURE_NAMES[d].to_string(),
                value: oriented[d],
                weight: self.profile.weights()[d],
                contribution: oriented[d] * self.profile.weights()[d],
            })
            .collect();
        let raw = self.ahin.feature_vector(v, date).raw;
        let node = self.ahin.node(v);
        LevelAssessment {
            level: node.level,
            geo_id: node.geo_id.clone(),
            name: node.name.clone(),
            index: self.profile.index(&encoding.vector),
            perception: raw[PERCEPTION_DIM],
            density: raw[DENSITY_DIM],
            mobility: raw[MOBILITY_DIM],
            confirmed: raw[0],
            neighbors: encoding.neighbors.len(),
            factors,
        }
    }

    /// Nearest leaf area to a coordinate and its great-circle distance.
    pub fn resolve_coordinate(&self, lat: f64, lon: f64) -> Result<(NodeId, f64), RiskError> {
        if !valid_coordinate(lat, lon) {
            return Err(RiskError::InvalidCoordinate { lat, lon });
        }
        let (node, _) = self
            .ahin
            .nearest(self.ahin.leaf_level(), (lat, lon), DistanceMetric::Haversine)
            .ok_or(RiskError::OutsideCoverage {
                lat,
                lon,
                distance_km: f64::INFINITY,
            })?;
        Ok((node, haversine_km((lat, lon), self.ahin.node(node).gps())))
    }

    pub fn lookup(&self, geo_id: &str) -> Result<NodeId, RiskError> {
        self.ahin
            .lookup(geo_id)
            .ok_or_else(|| RiskError::UnknownArea(geo_id.to_string()))
    }

    /// Hierarchical assessment of a coordinate or area on `date`. A
    /// coordinate resolves to its nearest leaf area and adds a location entry
    /// using that area's encoding, with `local_mobility` overriding mobility.
    pub fn assess(
        &self,
        location: &Location,
        date: NaiveDate,
        local_mobility: Option<u8>,
    ) -> Result<RiskAssessment, RiskError> {
        let (target, point) = match location {
            Location::Area(id) => (self.lookup(id.as_str())?, None),
            Location::Coordinate { lat, lon } => {
                let (node, distance_km) = self.resolve_coordinate(*lat, *lon)?;
                if distance_km > self.coverage_km {
                    return Err(RiskError::OutsideCoverage {
                        lat: *lat,
                        lon: *lon,
                        distance_km,
                    });
                }
                (node, Some((*lat, *lon, distance_km)))
            }
        };
        let lineage = self.ahin.lineage(target);
        let chain: Vec<LevelAssessment> = lineage
            .iter()
            .filter(|&&v| v == target || v != self.ahin.nation())
            .map(|&v| self.level_assessment(v, date))
            .collect();
        let location = point.map(|(lat, lon, distance_km)| {
            let mut encoded = self.encode(target, date).vector;
            if let Some(m) = local_mobility {
                encoded[MOBILITY_DIM] = mobility_unit(m);
            }
            LocationAssessment {
                lat,
                lon,
                geo_id: self.ahin.node(target).geo_id.clone(),
                distance_km,
                mobility: local_mobility,
                index: self.profile.index(&encoded),
            }
        });
        Ok(RiskAssessment {
            date,
            stale: !self.ahin.is_known_date(date),
            chain,
            location,
        })
    }

    /// Index of one area on each date, in the order given.
    pub fn compare_dates(&self, geo_id: &str, dates: &[NaiveDate]) -> Result<Vec<DatedIndex>, RiskError> {
        if dates.is_empty() {
            return Err(RiskError::EmptyDates);
        }
        let v = self.lookup(geo_id)?;
        Ok(dates
            .iter()
            .map(|&date| DatedIndex {
                date,
                index: self.index_of(v, date),
                stale: !self.ahin.is_known_date(date),
            })
            .collect())
    }

    /// POIs with `tag` strictly within `radius_km`, nearest first. Each is
    /// scored with its nearest leaf area's encoding and its own mobility.
    pub fn nearby_pois(
        &self,
        pois: &[Poi],
        lat: f64,
        lon: f64,
        tag: &str,
        radius_km: f64,
        date: NaiveDate,
    ) -> Result<Vec<ScoredPoi>, RiskError> {
        if !valid_coordinate(lat, lon) {
            return Err(RiskError::InvalidCoordinate { lat, lon });
        }
        let tag = tag.to_lowercase();
        let mut out = Vec::new();
        for poi in pois.iter().filter(|p| p.tag == tag) {
            let distance_km = haversine_km((lat, lon), (poi.lat, poi.lon));
            if distance_km.partial_cmp(&radius_km) != Some(std::cmp::Ordering::Less) {
                continue;
            }
            let (area, _) = self.resolve_coordinate(poi.lat, poi.lon)?;
            let mut encoded = self.encode(area, date).vector;
            encoded[MOBILITY_DIM] = mobility_unit(poi.mobility);
            out.push(ScoredPoi {
                name: poi.name.clone(),
                tag: poi.tag.clone(),
                lat: poi.lat,
                lon: poi.lon,
                mobility: poi.mobility,
                distance_km,
                geo_id: self.ahin.node(area).geo_id.clone(),
                index: self.profile.index(&encoded),
            });
        }
        out.sort_by(|a, b| a.distance_km.total_cmp(&b.distance_km).then_with(|| a.name.cmp(&b.name)));
        Ok(out)
    }
}
