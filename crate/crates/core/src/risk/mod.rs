//! Weighted risk index over encoded feature vectors and the hierarchical
//! assessments built on it.

mod assess;

use serde::{Deserialize, Serialize};

pub use assess::{
    Assessor, DatedIndex, Factor, LevelAssessment, Location, LocationAssessment, RiskAssessment, ScoredPoi,
    DEFAULT_COVERAGE_KM,
};

use crate::graph::{Features, FEATURE_DIM, FEATURE_NAMES, PERCEPTION_DIM};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RiskError {
    #[error("weight for `{dimension}` is negative ({weight})")]
    NegativeWeight { dimension: String, weight: f64 },
    #[error("weight for `{0}` is not finite")]
    NonFiniteWeight(String),
    #[error("expected {expected} values, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("profile line {line}: {reason}")]
    Profile { line: usize, reason: String },
    #[error("no dates requested")]
    EmptyDates,
    #[error("unknown area `{0}`")]
    UnknownArea(String),
    #[error("coordinate ({lat}, {lon}) is not a valid latitude/longitude")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("({lat}, {lon}) is {distance_km:.1} km from the nearest covered area")]
    OutsideCoverage { lat: f64, lon: f64, distance_km: f64 },
}

/// `sum_i gamma_i x_i` over a vector already oriented so that every
/// dimension raises risk.
pub fn risk_index(oriented: &[f64], gamma: &[f64]) -> Result<f64, RiskError> {
    if oriented.len() != gamma.len() {
        return Err(RiskError::Dimension {
            expected: gamma.len(),
            found: oriented.len(),
        });
    }
    for (i, &g) in gamma.iter().enumerate() {
        let dimension = FEATURE_NAMES.get(i).map_or_else(|| i.to_string(), |s| s.to_string());
        if !g.is_finite() {
            return Err(RiskError::NonFiniteWeight(dimension));
        }
        if g < 0.0 {
            return Err(RiskError::NegativeWeight { dimension, weight: g });
        }
    }
    Ok(oriented.iter().zip(gamma).map(|(x, g)| x * g).sum())
}

/// Expert weights per feature dimension and the awareness orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    weights: Features,
    invert_awareness: bool,
}

impl Default for RiskProfile {
    /// Uniform weights summing to one, awareness inverted.
    fn default() -> Self {
        RiskProfile {
            weights: [1.0 / FEATURE_DIM as f64; FEATURE_DIM],
            invert_awareness: true,
        }
    }
}

pub const PROFILE_HEADER: &str = "dimension,weight";
pub const INVERT_AWARENESS_KEY: &str = "invert_awareness";

impl RiskProfile {
    pub fn new(weights: Features, invert_awareness: bool) -> Result<Self, RiskError> {
        risk_index(&[0.0; FEATURE_DIM], &weights)?;
        Ok(RiskProfile {
            weights,
            invert_awareness,
        })
    }

    pub fn weights(&self) -> &Features {
        &self.weights
    }

    pub fn invert_awareness(&self) -> bool {
        self.invert_awareness
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Multiplies every weight by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self, RiskError> {
        let mut weights = self.weights;
        weights.iter_mut().for_each(|w| *w *= c);
        RiskProfile::new(weights, self.invert_awareness)
    }

    /// Flips awareness to `1 - a4` when the profile inverts it.
    pub fn orient(&self, encoded: &Features) -> Features {
        let mut out = *encoded;
        if self.invert_awareness {
            out[PERCEPTION_DIM] = 1.0 - out[PERCEPTION_DIM];
        }
        out
    }

    pub fn index(&self, encoded: &Features) -> f64 {
        self.orient(encoded)
            .iter()
            .zip(&self.weights)
            .map(|(x, g)| x * g)
            .sum()
    }

    /// Parses a `dimension,weight` CSV. Unlisted dimensions weigh zero; an
    /// optional `invert_awareness` row takes `1`/`0`/`true`/`false`.
    pub fn parse(text: &str) -> Result<Self, RiskError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, header)) if header.trim() == PROFILE_HEADER => {}
            Some((i, _)) => {
                return Err(RiskError::Profile {
                    line: i + 1,
                    reason: format!("expected header `{PROFILE_HEADER}`"),
                })
            }
            None => {
                return Err(RiskError::Profile {
                    line: 1,
                    reason: "empty profile".into(),
                })
            }
        }
        let mut weights = [0.0; FEATURE_DIM];
        let mut seen = [false; FEATURE_DIM];
        let mut invert = true;
        for (i, line) in lines {
            let err = |reason: String| RiskError::Profile { line: i + 1, reason };
            let (name, value) = line
                .split_once(',')
                .ok_or_else(|| err("expected `dimension,weight`".into()))?;
            let (name, value) = (name.trim(), value.trim());
            if name == INVERT_AWARENESS_KEY {
                invert = match value {
                    "1" | "true" => true,
                    "0" | "false" => false,
                    _ => return Err(err(format!("invalid {INVERT_AWARENESS_KEY} value `{value}`"))),
                };
                continue;
            }
            let d = FEATURE_NAMES
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| err(format!("unknown dimension `{name}`")))?;
            if seen[d] {
                return Err(err(format!("dimension `{name}` listed twice")));
            }
            seen[d] = true;
            weights[d] = value.parse().map_err(|_| err(format!("invalid weight `{value}`")))?;
        }
        RiskProfile::new(weights, invert)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{PROFILE_HEADER}\n");
        for (name, w) in FEATURE_NAMES.iter().zip(&self.weights) {
            out.push_str(&format!("{name},{w}\n"));
        }
        out.push_str(&format!("{INVERT_AWARENESS_KEY},{}\n", u8::from(self.invert_awareness)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_examples() {
        let g = RiskProfile::default();
        let ones = [1.0; FEATURE_DIM];
        assert!((risk_index(&ones, g.weights()).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(risk_index(&[0.0; FEATURE_DIM], g.weights()).unwrap(), 0.0);
        assert!((risk_index(&[0.5; FEATURE_DIM], g.weights()).unwrap() - 0.5).abs() < 1e-12);
        let mut bad = *g.weights();
        bad[3] = -0.1;
        assert!(matches!(risk_index(&ones, &bad), Err(RiskError::NegativeWeight { .. })));
        assert!(risk_index(&ones[..3], g.weights()).is_err());
    }

    #[test]
    fn orientation() {
        let g = RiskProfile::default();
        let mut v = [0.0; FEATURE_DIM];
        v[PERCEPTION_DIM] = 1.0;
        // A fully aware area with nothing else going on carries no risk.
        assert_eq!(g.index(&v), 0.0);
        let plain = RiskProfile::new(*g.weights(), false).unwrap();
        assert!((plain.index(&v) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn profile_csv() {
        let g = RiskProfile::default();
        assert_eq!(RiskProfile::parse(&g.to_csv()).unwrap(), g);
        let p = RiskProfile::parse("dimension,weight\nconfirmed,0.5\nmobility,0.5\ninvert_awareness,0\n").unwrap();
        assert_eq!(p.weights()[0], 0.5);
        assert_eq!(p.weights()[1], 0.0);
        assert!(!p.invert_awareness());
        assert!(matches!(
            RiskProfile::parse("dimension,weight\nconfirmed,-1\n"),
            Err(RiskError::NegativeWeight { .. })
        ));
        assert!(matches!(
            RiskProfile::parse("dimension,weight\nbogus,1\n"),
            Err(RiskError::Profile { line: 2, .. })
        ));
        assert!(RiskProfile::parse("dimension,weight\nconfirmed,1\nconfirmed,1\n").is_err());
        assert!(RiskProfile::parse("dim,w\n").is_err());
    }
}
