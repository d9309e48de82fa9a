//! Per-node, per-date attribute vectors.

use std::collections::{BTreeSet, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::NodeId;
use crate::geo::Level;

/// Dimension of the concatenated attribute vector.
pub const FEATURE_DIM: usize = 10;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "confirmed",
    "new_cases",
    "deaths",
    "fatality_rate",
    "population",
    "pop_density",
    "pct_over_65",
    "pct_female",
    "mobility",
    "perception",
];

pub const DENSITY_DIM: usize = 5;
pub const MOBILITY_DIM: usize = 8;
pub const PERCEPTION_DIM: usize = 9;

pub type Features = [f64; FEATURE_DIM];

/// Attribute vector of one area on one date, raw and min-max normalised
/// within its level on that date.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub raw: Features,
    pub normalized: Features,
    /// False when the date is not covered by any source.
    pub known_date: bool,
}

impl FeatureVector {
    pub fn a1(&self) -> &[f64] {
        &self.raw[0..4]
    }

    pub fn a2(&self) -> &[f64] {
        &self.raw[4..8]
    }

    pub fn a3(&self) -> f64 {
        self.raw[MOBILITY_DIM]
    }

    pub fn a4(&self) -> f64 {
        self.raw[PERCEPTION_DIM]
    }
}

/// Where a node without its own disease row takes A1 from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiseaseFallback {
    /// Absent rows are zero-padded.
    ZeroPad,
    /// Use the closest ancestor reporting on that date (cities take their
    /// county's counts), else zero-pad.
    #[default]
    Ancestor,
}

type Ranges = [(f64, f64); FEATURE_DIM];

#[derive(Clone, Debug, Default)]
pub(crate) struct FeatureStore {
    pub(crate) demographics: Vec<[f64; 4]>,
    pub(crate) disease: HashMap<(NodeId, NaiveDate), [f64; 4]>,
    pub(crate) mobility: HashMap<(NodeId, NaiveDate), f64>,
    pub(crate) perception: HashMap<(NodeId, NaiveDate), f64>,
    pub(crate) parents: Vec<Option<NodeId>>,
    pub(crate) levels: Vec<Level>,
    pub(crate) fallback: DiseaseFallback,
    pub(crate) dates: BTreeSet<NaiveDate>,
    pub(crate) ranges: HashMap<(Level, NaiveDate), Ranges>,
    pub(crate) undated: HashMap<Level, Ranges>,
}

impl FeatureStore {
    /// Computes the normalisation cohorts; call once after filling the maps.
    pub(crate) fn finish(&mut self) {
        self.dates = self
            .disease
            .keys()
            .map(|k| k.1)
            .chain(self.mobility.keys().map(|k| k.1))
            .chain(self.perception.keys().map(|k| k.1))
            .collect();
        let n = self.levels.len();
        let mut ranges = HashMap::new();
        for &date in &self.dates {
            for node in 0..n {
                let id = NodeId(node as u32);
                let raw = self.raw(id, Some(date));
                widen(ranges.entry((self.levels[node], date)).or_insert_with(empty), &raw);
            }
        }
        let mut undated = HashMap::new();
        for node in 0..n {
            let raw = self.raw(NodeId(node as u32), None);
            widen(undated.entry(self.levels[node]).or_insert_with(empty), &raw);
        }
        self.ranges = ranges;
        self.undated = undated;
    }

    fn disease_for(&self, node: NodeId, date: NaiveDate) -> Option<[f64; 4]> {
        let mut cursor = Some(node);
        while let Some(id) = cursor {
            if let Some(v) = self.disease.get(&(id, date)) {
                return Some(*v);
            }
            if self.fallback == DiseaseFallback::ZeroPad {
                return None;
            }
            cursor = self.parents[id.index()];
        }
        None
    }

    /// Raw vector; `None` as date means a date outside every source.
    pub(crate) fn raw(&self, node: NodeId, date: Option<NaiveDate>) -> Features {
        let mut out = [0.0; FEATURE_DIM];
        out[4..8].copy_from_slice(&self.demographics[node.index()]);
        if let Some(date) = date {
            if let Some(a1) = self.disease_for(node, date) {
                out[0..4].copy_from_slice(&a1);
            }
            if let Some(&m) = self.mobility.get(&(node, date)) {
                out[MOBILITY_DIM] = m;
            }
            if let Some(&p) = self.perception.get(&(node, date)) {
                out[PERCEPTION_DIM] = p;
            }
        }
        out
    }

    pub(crate) fn vector(&self, node: NodeId, date: NaiveDate) -> FeatureVector {
        let level = self.levels[node.index()];
        let known = self.dates.contains(&date);
        let raw = self.raw(node, known.then_some(date));
        let ranges = if known {
            &self.ranges[&(level, date)]
        } else {
            &self.undated[&level]
        };
        let mut normalized = [0.0; FEATURE_DIM];
        for (i, out) in normalized.iter_mut().enumerate() {
            let (lo, hi) = ranges[i];
            if hi > lo {
                *out = ((raw[i] - lo) / (hi - lo)).clamp(0.0, 1.0);
            }
        }
        FeatureVector {
            raw,
            normalized,
            known_date: known,
        }
    }
}

fn empty() -> Ranges {
    [(f64::INFINITY, f64::NEG_INFINITY); FEATURE_DIM]
}

fn widen(ranges: &mut Ranges, raw: &Features) {
    for (r, &x) in ranges.iter_mut().zip(raw) {
        r.0 = r.0.min(x);
        r.1 = r.1.max(x);
    }
}
