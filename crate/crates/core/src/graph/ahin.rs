use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::features::{DiseaseFallback, FeatureStore, FeatureVector, Features};
use super::knn::{knn_geospatial, KnnPoint};
use super::GraphError;
use crate::geo::{DistanceMetric, GeoId, Level, EARTH_RADIUS_KM};
use crate::ingest::{DemographicRecord, DiseaseRecord, MobilityRecord};

/// Dense index of a node inside one [`Ahin`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationType {
    /// Administrative affiliation, parent to child.
    Include,
    /// Same-level geographic proximity.
    Near,
}

impl RelationType {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationType::Include => "include",
            RelationType::Near => "near",
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoNode {
    pub geo_id: GeoId,
    pub level: Level,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub parent: Option<NodeId>,
}

impl GeoNode {
    pub fn gps(&self) -> (f64, f64) {
        (self.lat, self.lon)
    }
}

/// Awareness score of an area on a date.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptionRecord {
    pub geo_id: GeoId,
    pub date: NaiveDate,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AhinInputs<'a> {
    pub demographics: &'a [DemographicRecord],
    pub disease: &'a [DiseaseRecord],
    pub mobility: &'a [MobilityRecord],
    pub perceptions: &'a [PerceptionRecord],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildConfig {
    /// Same-level neighbours kept per node.
    pub k: usize,
    pub metric: DistanceMetric,
    pub disease_fallback: DiseaseFallback,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            k: 2,
            metric: DistanceMetric::Euclidean,
            disease_fallback: DiseaseFallback::Ancestor,
        }
    }
}

/// Node and edge totals, broken down by type.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AhinCounts {
    pub nations: usize,
    pub states: usize,
    pub counties: usize,
    pub cities: usize,
    pub include_edges: usize,
    pub near_edges: usize,
}

impl AhinCounts {
    pub fn nodes(&self) -> usize {
        self.nations + self.states + self.counties + self.cities
    }

    pub fn edges(&self) -> usize {
        self.include_edges + self.near_edges
    }
}

/// Typed area graph: include edges form a tree rooted at the nation, near
/// edges join k-nearest areas of the same level. Immutable once built.
#[derive(Clone, Debug)]
pub struct Ahin {
    nodes: Vec<GeoNode>,
    index: HashMap<GeoId, NodeId>,
    children: Vec<Vec<NodeId>>,
    near: Vec<Vec<NodeId>>,
    near_edges: Vec<(NodeId, NodeId)>,
    by_level: [Vec<NodeId>; 4],
    /// Per level, (latitude, node) sorted by latitude; prunes `nearest`.
    by_latitude: [Vec<(f64, NodeId)>; 4],
    features: FeatureStore,
    config: BuildConfig,
}

fn level_slot(level: Level) -> usize {
    match level {
        Level::Nation => 0,
        Level::State => 1,
        Level::County => 2,
        Level::City => 3,
    }
}

pub fn build_ahin(inputs: AhinInputs<'_>, config: BuildConfig) -> Result<Ahin, GraphError> {
    if inputs.demographics.is_empty() {
        return Err(GraphError::EmptyDemographics);
    }
    let mut records: Vec<&DemographicRecord> = inputs.demographics.iter().collect();
    records.sort_by(|a, b| (a.level, &a.geo_id).cmp(&(b.level, &b.geo_id)));
    let mut index = HashMap::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if index.insert(r.geo_id.clone(), NodeId(i as u32)).is_some() {
            return Err(GraphError::DuplicateGeoId(r.geo_id.to_string()));
        }
    }
    let nations = records.iter().filter(|r| r.level == Level::Nation).count();
    if nations != 1 {
        return Err(GraphError::InvalidHierarchy(format!(
            "expected exactly one nation, found {nations}"
        )));
    }

    let mut nodes = Vec::with_capacity(records.len());
    let mut children = vec![Vec::new(); records.len()];
    let mut by_level: [Vec<NodeId>; 4] = Default::default();
    for (i, r) in records.iter().enumerate() {
        let parent = match (&r.parent_geo_id, r.level.parent()) {
            (None, None) => None,
            (Some(p), Some(expected)) => {
                let pid = *index.get(p).ok_or_else(|| {
                    GraphError::InvalidHierarchy(format!("parent `{p}` of `{}` missing", r.geo_id))
                })?;
                let actual = records[pid.index()].level;
                if actual != expected {
                    return Err(GraphError::InvalidHierarchy(format!(
                        "parent `{p}` of {} `{}` is a {actual}",
                        r.level, r.geo_id
                    )));
                }
                children[pid.index()].push(NodeId(i as u32));
                Some(pid)
            }
            _ => {
                return Err(GraphError::InvalidHierarchy(format!(
                    "`{}` has an inconsistent parent",
                    r.geo_id
                )))
            }
        };
        by_level[level_slot(r.level)].push(NodeId(i as u32));
        nodes.push(GeoNode {
            geo_id: r.geo_id.clone(),
            level: r.level,
            name: r.name.clone(),
            lat: r.lat,
            lon: r.lon,
            parent,
        });
    }

    let mut near_set: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    for level_nodes in &by_level {
        let points: Vec<KnnPoint<'_>> = level_nodes
            .iter()
            .map(|&id| KnnPoint {
                key: nodes[id.index()].geo_id.as_str(),
                coord: nodes[id.index()].gps(),
            })
            .collect();
        for (a, b) in knn_geospatial(&points, config.k, config.metric) {
            near_set.insert((level_nodes[a], level_nodes[b]));
        }
    }

    let lookup = |id: &GeoId, what: &str| -> Result<NodeId, GraphError> {
        index
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UnknownArea(format!("{what} row for `{id}`")))
    };
    let mut features = FeatureStore {
        demographics: records.iter().map(|r| r.features()).collect(),
        parents: nodes.iter().map(|n| n.parent).collect(),
        levels: nodes.iter().map(|n| n.level).collect(),
        fallback: config.disease_fallback,
        ..Default::default()
    };
    for r in inputs.disease {
        features
            .disease
            .insert((lookup(&r.geo_id, "disease")?, r.date), r.features());
    }
    for r in inputs.mobility {
        features
            .mobility
            .insert((lookup(&r.geo_id, "mobility")?, r.date), r.level as f64);
    }
    for r in inputs.perceptions {
        if !(0.0..=1.0).contains(&r.value) {
            return Err(GraphError::InvalidFeature(format!(
                "perception {} for `{}` outside [0,1]",
                r.value, r.geo_id
            )));
        }
        features
            .perception
            .insert((lookup(&r.geo_id, "perception")?, r.date), r.value);
    }
    features.finish();

    Ok(Ahin::assemble(nodes, index, children, near_set, by_level, features, config))
}

impl Ahin {
    fn assemble(
        nodes: Vec<GeoNode>,
        index: HashMap<GeoId, NodeId>,
        children: Vec<Vec<NodeId>>,
        near_set: BTreeSet<(NodeId, NodeId)>,
        by_level: [Vec<NodeId>; 4],
        features: FeatureStore,
        config: BuildConfig,
    ) -> Ahin {
        let mut near = vec![Vec::new(); nodes.len()];
        for &(a, b) in &near_set {
            near[a.index()].push(b);
            near[b.index()].push(a);
        }
        for list in &mut near {
            list.sort_unstable();
        }
        let by_latitude = by_level.clone().map(|ids| {
            let mut v: Vec<(f64, NodeId)> = ids.into_iter().map(|id| (nodes[id.index()].lat, id)).collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            v
        });
        Ahin {
            nodes,
            index,
            children,
            near,
            near_edges: near_set.into_iter().collect(),
            by_level,
            by_latitude,
            features,
            config,
        }
    }

    /// Copy of this graph with the given near edges removed (either
    /// orientation accepted); used to hold out edges for evaluation.
    pub fn without_near_edges(&self, removed: &[(NodeId, NodeId)]) -> Ahin {
        let drop: HashSet<(NodeId, NodeId)> = removed
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        let kept: BTreeSet<(NodeId, NodeId)> = self
            .near_edges
            .iter()
            .copied()
            .filter(|e| !drop.contains(e))
            .collect();
        Ahin::assemble(
            self.nodes.clone(),
            self.index.clone(),
            self.children.clone(),
            kept,
            self.by_level.clone(),
            self.features.clone(),
            self.config,
        )
    }

    pub fn config(&self) -> BuildConfig {
        self.config
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[GeoNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &GeoNode {
        &self.nodes[id.index()]
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn lookup(&self, geo_id: &str) -> Option<NodeId> {
        self.index.get(geo_id).copied()
    }

    pub fn nation(&self) -> NodeId {
        self.by_level[0][0]
    }

    pub fn level_nodes(&self, level: Level) -> &[NodeId] {
        &self.by_level[level_slot(level)]
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.index()].parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id.index()]
    }

    /// Near neighbours, sorted.
    pub fn near(&self, id: NodeId) -> &[NodeId] {
        &self.near[id.index()]
    }

    /// Canonical near edges `(a, b)` with `a < b`, sorted.
    pub fn near_edges(&self) -> &[(NodeId, NodeId)] {
        &self.near_edges
    }

    /// Include edges as `(parent, child)`, ordered by child.
    pub fn include_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.node_ids()
            .filter_map(|id| self.parent(id).map(|p| (p, id)))
    }

    pub fn has_near_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.near[a.index()].binary_search(&b).is_ok()
    }

    /// Path from the nation down to `id`, inclusive.
    pub fn lineage(&self, id: NodeId) -> Vec<NodeId> {
        let mut chain = vec![id];
        let mut cursor = id;
        while let Some(p) = self.parent(cursor) {
            chain.push(p);
            cursor = p;
        }
        chain.reverse();
        chain
    }

    /// Ancestor (or self) at `level`.
    pub fn ancestor_at(&self, id: NodeId, level: Level) -> Option<NodeId> {
        self.lineage(id)
            .into_iter()
            .find(|&n| self.nodes[n.index()].level == level)
    }

    pub fn counts(&self) -> AhinCounts {
        AhinCounts {
            nations: self.by_level[0].len(),
            states: self.by_level[1].len(),
            counties: self.by_level[2].len(),
            cities: self.by_level[3].len(),
            include_edges: self.nodes.len() - 1,
            near_edges: self.near_edges.len(),
        }
    }

    /// Every date covered by at least one dated source, ascending.
    pub fn dates(&self) -> impl DoubleEndedIterator<Item = NaiveDate> + '_ {
        self.features.dates.iter().copied()
    }

    pub fn latest_date(&self) -> Option<NaiveDate> {
        self.features.dates.last().copied()
    }

    pub fn is_known_date(&self, date: NaiveDate) -> bool {
        self.features.dates.contains(&date)
    }

    pub fn feature_vector(&self, id: NodeId, date: NaiveDate) -> FeatureVector {
        self.features.vector(id, date)
    }

    /// Normalised vector only; what the encoder consumes.
    pub fn normalized(&self, id: NodeId, date: NaiveDate) -> Features {
        self.features.vector(id, date).normalized
    }

    pub fn feature_vector_of(&self, geo_id: &str, date: NaiveDate) -> Result<FeatureVector, GraphError> {
        let id = self
            .lookup(geo_id)
            .ok_or_else(|| GraphError::UnknownArea(geo_id.to_string()))?;
        Ok(self.feature_vector(id, date))
    }

    /// Closest node of `level` to a coordinate under `metric`; ties go to the
    /// smaller geo_id. Walks outward from the query latitude and stops once
    /// the latitude gap alone exceeds the best distance.
    pub fn nearest(&self, level: Level, coord: (f64, f64), metric: DistanceMetric) -> Option<(NodeId, f64)> {
        let sorted = &self.by_latitude[level_slot(level)];
        let lower_bound = |lat: f64| match metric {
            DistanceMetric::Euclidean => (lat - coord.0).abs(),
            DistanceMetric::Haversine => EARTH_RADIUS_KM * (lat - coord.0).abs().to_radians(),
        };
        let start = sorted.partition_point(|&(lat, _)| lat < coord.0);
        let mut best: Option<(NodeId, f64)> = None;
        let consider = |id: NodeId, best: &mut Option<(NodeId, f64)>| {
            let d = metric.distance(coord, self.nodes[id.index()].gps());
            let better = match *best {
                None => true,
                Some((b, bd)) => d < bd || (d == bd && self.nodes[id.index()].geo_id < self.nodes[b.index()].geo_id),
            };
            if better {
                *best = Some((id, d));
            }
        };
        // Slack absorbs rounding between the bound and the metric.
        let pruned = |lat: f64, best: Option<(NodeId, f64)>| {
            best.is_some_and(|(_, bd)| lower_bound(lat) > bd * (1.0 + 1e-12) + 1e-12)
        };
        let (mut up, mut down) = (start, start);
        loop {
            let up_open = up < sorted.len() && !pruned(sorted[up].0, best);
            let down_open = down > 0 && !pruned(sorted[down - 1].0, best);
            if !up_open && !down_open {
                break;
            }
            if up_open {
                consider(sorted[up].1, &mut best);
                up += 1;
            }
            if down_open {
                down -= 1;
                consider(sorted[down].1, &mut best);
            }
        }
        best
    }

    /// Deepest populated level.
    pub fn leaf_level(&self) -> Level {
        *Level::ALL
            .iter()
            .rev()
            .find(|&&l| !self.level_nodes(l).is_empty())
            .unwrap_or(&Level::Nation)
    }
}
