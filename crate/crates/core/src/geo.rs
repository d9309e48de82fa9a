//! Identifiers, administrative levels and distance helpers shared by every stage.

use std::borrow::Borrow;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Mean Earth radius used by [`haversine_km`].
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Opaque area identifier. FIPS-like codes for real data, free-form for fixtures.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GeoId(String);

impl GeoId {
    pub fn new(id: impl Into<String>) -> Self {
        GeoId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for GeoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for GeoId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for GeoId {
    fn from(s: &str) -> Self {
        GeoId(s.to_owned())
    }
}

impl From<String> for GeoId {
    fn from(s: String) -> Self {
        GeoId(s)
    }
}

/// Administrative level of an area; this is the entity type of a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Nation,
    State,
    County,
    City,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::Nation, Level::State, Level::County, Level::City];

    /// The level one step above, `None` for the nation.
    pub fn parent(self) -> Option<Level> {
        match self {
            Level::Nation => None,
            Level::State => Some(Level::Nation),
            Level::County => Some(Level::State),
            Level::City => Some(Level::County),
        }
    }

    pub fn child(self) -> Option<Level> {
        match self {
            Level::Nation => Some(Level::State),
            Level::State => Some(Level::County),
            Level::County => Some(Level::City),
            Level::City => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Nation => "nation",
            Level::State => "state",
            Level::County => "county",
            Level::City => "city",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nation" => Ok(Level::Nation),
            "state" => Ok(Level::State),
            "county" => Ok(Level::County),
            "city" => Ok(Level::City),
            other => Err(format!("unknown level `{other}`")),
        }
    }
}

/// How distances between GPS coordinates are measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    /// Euclidean distance on raw (lat, lon) degrees.
    #[default]
    Euclidean,
    /// Great-circle distance in kilometres.
    Haversine,
}

impl DistanceMetric {
    pub fn distance(self, a: (f64, f64), b: (f64, f64)) -> f64 {
        match self {
            DistanceMetric::Euclidean => euclidean_deg(a, b),
            DistanceMetric::Haversine => haversine_km(a, b),
        }
    }
}

impl FromStr for DistanceMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euclidean" => Ok(DistanceMetric::Euclidean),
            "haversine" => Ok(DistanceMetric::Haversine),
            other => Err(format!("unknown distance metric `{other}`")),
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMetric::Euclidean => "euclidean",
            DistanceMetric::Haversine => "haversine",
        })
    }
}

pub fn euclidean_deg(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dlat = a.0 - b.0;
    let dlon = a.1 - b.1;
    (dlat * dlat + dlon * dlon).sqrt()
}

/// Great-circle distance between two `(lat, lon)` points in degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

pub fn valid_coordinate(lat: f64, lon: f64) -> bool {
    lat.is_finite() && lon.is_finite() && (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_chain() {
        assert_eq!(Level::City.parent(), Some(Level::County));
        assert_eq!(Level::Nation.parent(), None);
        assert_eq!(Level::State.child(), Some(Level::County));
        assert_eq!("County".parse::<Level>().unwrap(), Level::County);
        assert!("town".parse::<Level>().is_err());
    }

    #[test]
    fn haversine_known_distance() {
        // Cleveland to Columbus is roughly 203 km.
        let d = haversine_km((41.4993, -81.6944), (39.9612, -82.9988));
        assert!((d - 203.0).abs() < 3.0, "{d}");
        assert_eq!(haversine_km((10.0, 10.0), (10.0, 10.0)), 0.0);
    }

    #[test]
    fn euclidean_on_degrees() {
        assert!((euclidean_deg((0.0, 0.0), (3.0, 4.0)) - 5.0).abs() < 1e-12);
    }
}
