use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::stages::{read_perceptions, GraphManifest, PerceptionRow, Snapshot};
use super::*;
use crate::checkpoint;
use crate::gae::{NeighborIndex, RelationMatrices};
use crate::geo::GeoId;
use crate::graph::{Ahin, PerceptionRecord};
use crate::ingest::{LocationIndex, Poi};
use crate::perception::{attribute_posts, AreaPerception, Lexicon, PerceptionSource, ScoredPost};
use crate::risk::{
    Assessor, DatedIndex, Location, RiskAssessment, RiskError, RiskProfile, ScoredPoi, DEFAULT_COVERAGE_KM,
};

/// Directories and files an [`Engine`] is loaded from.
#[derive(Debug, Clone)]
pub struct EnginePaths {
    pub snapshot: PathBuf,
    pub models: PathBuf,
    /// Risk profile; the default profile when absent.
    pub gamma: Option<PathBuf>,
}

/// Posts filed under one area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaPosts {
    pub geo_id: GeoId,
    pub date: Option<NaiveDate>,
    pub posts: Vec<ScoredPost>,
    /// True when the area's awareness on the date came from synthetic posts.
    pub synthetic: bool,
    pub perception: Option<AreaPerception>,
}

/// A loaded snapshot with trained relations, ready for queries. Immutable;
/// share it behind an `Arc`.
#[derive(Debug)]
pub struct Engine {
    ahin: Ahin,
    index: NeighborIndex,
    relations: RelationMatrices,
    profile: RiskProfile,
    coverage_km: f64,
    posts: BTreeMap<GeoId, Vec<ScoredPost>>,
    perceptions: BTreeMap<(GeoId, NaiveDate), AreaPerception>,
    pois: Vec<Poi>,
}

impl Engine {
    pub fn from_parts(
        ahin: Ahin,
        relations: RelationMatrices,
        profile: RiskProfile,
        posts: BTreeMap<GeoId, Vec<ScoredPost>>,
        perceptions: BTreeMap<(GeoId, NaiveDate), AreaPerception>,
        pois: Vec<Poi>,
    ) -> Result<Self, PipelineError> {
        let index = NeighborIndex::build(&ahin)?;
        Ok(Engine {
            ahin,
            index,
            relations,
            profile,
            coverage_km: DEFAULT_COVERAGE_KM,
            posts,
            perceptions,
            pois,
        })
    }

    /// Loads the snapshot and the outputs of the gae training stage.
    pub fn load(paths: &EnginePaths) -> Result<Self, PipelineError> {
        let manifest = GraphManifest::read(&paths.models.join(GRAPH_MANIFEST_FILE), "train --component gae")?;
        let snapshot = load_snapshot(&paths.snapshot)?;
        if snapshot.checksum != manifest.snapshot {
            return Err(PipelineError::Invalid {
                path: paths.models.clone(),
                reason: "models were trained on a different snapshot".into(),
            });
        }
        let relations_path = paths.models.join(RELATIONS_FILE);
        let relations = checkpoint::read_relations(&read_text(&relations_path, Some("train --component gae"))?)
            .map_err(|source| PipelineError::Checkpoint {
                path: relations_path,
                source,
            })?;
        let rows = read_perceptions(&paths.models.join(PERCEPTIONS_FILE))?;
        let profile = match &paths.gamma {
            Some(path) => RiskProfile::parse(&read_text(path, None)?)?,
            None => RiskProfile::default(),
        };
        Self::from_snapshot(&snapshot, &manifest, relations, &rows, profile)
    }

    fn from_snapshot(
        snapshot: &Snapshot,
        manifest: &GraphManifest,
        relations: RelationMatrices,
        rows: &[PerceptionRow],
        profile: RiskProfile,
    ) -> Result<Self, PipelineError> {
        let records: Vec<PerceptionRecord> = rows
            .iter()
            .map(|r| PerceptionRecord {
                geo_id: r.geo_id.clone(),
                date: r.date,
                value: r.value,
            })
            .collect();
        let ahin = snapshot.ahin(manifest.config, &records)?;
        let gazetteer = snapshot.gazetteer();
        let posts = attribute_posts(&snapshot.posts, &LocationIndex::new(&gazetteer), Lexicon::bundled());
        let perceptions = rows.iter().map(|r| ((r.geo_id.clone(), r.date), r.perception())).collect();
        Self::from_parts(ahin, relations, profile, posts, perceptions, snapshot.pois.clone())
    }

    pub fn with_coverage_km(mut self, km: f64) -> Self {
        self.coverage_km = km;
        self
    }

    pub fn ahin(&self) -> &Ahin {
        &self.ahin
    }

    pub fn profile(&self) -> &RiskProfile {
        &self.profile
    }

    pub fn relations(&self) -> &RelationMatrices {
        &self.relations
    }

    pub fn pois(&self) -> &[Poi] {
        &self.pois
    }

    pub fn assessor(&self) -> Assessor<'_> {
        Assessor {
            ahin: &self.ahin,
            index: &self.index,
            relations: &self.relations,
            profile: &self.profile,
            coverage_km: self.coverage_km,
        }
    }

    pub fn latest_date(&self) -> Option<NaiveDate> {
        self.ahin.latest_date()
    }

    pub fn assess(
        &self,
        location: &Location,
        date: NaiveDate,
        local_mobility: Option<u8>,
    ) -> Result<RiskAssessment, RiskError> {
        self.assessor().assess(location, date, local_mobility)
    }

    /// Index of an area on every day from `from` to `to` inclusive.
    pub fn timeseries(&self, geo_id: &str, from: NaiveDate, to: NaiveDate) -> Result<Vec<DatedIndex>, RiskError> {
        let dates: Vec<NaiveDate> = from.iter_days().take_while(|d| *d <= to).collect();
        self.assessor().compare_dates(geo_id, &dates)
    }

    pub fn nearby_pois(
        &self,
        lat: f64,
        lon: f64,
        tag: &str,
        radius_km: f64,
        date: NaiveDate,
    ) -> Result<Vec<ScoredPoi>, RiskError> {
        self.assessor().nearby_pois(&self.pois, lat, lon, tag, radius_km, date)
    }

    pub fn perception(&self, geo_id: &str, date: NaiveDate) -> Option<AreaPerception> {
        self.perceptions.get(&(GeoId::new(geo_id), date)).copied()
    }

    /// Posts filed under an area, on `date` when given. The synthetic flag
    /// refers to `date`, or the latest date when none is given.
    pub fn posts(&self, geo_id: &str, date: Option<NaiveDate>) -> Result<AreaPosts, RiskError> {
        self.assessor().lookup(geo_id)?;
        let all = self.posts.get(&GeoId::new(geo_id)).map(Vec::as_slice).unwrap_or(&[]);
        let posts = all.iter().filter(|p| date.is_none_or(|d| p.date == d)).cloned().collect();
        let perception = date.or_else(|| self.latest_date()).and_then(|d| self.perception(geo_id, d));
        Ok(AreaPosts {
            geo_id: GeoId::new(geo_id),
            date,
            posts,
            synthetic: perception.is_some_and(|p| p.source == PerceptionSource::Synthetic),
            perception,
        })
    }
}

impl EnginePaths {
    pub fn new(snapshot: impl AsRef<Path>, models: impl AsRef<Path>, gamma: Option<&Path>) -> Self {
        EnginePaths {
            snapshot: snapshot.as_ref().to_path_buf(),
            models: models.as_ref().to_path_buf(),
            gamma: gamma.map(Path::to_path_buf),
        }
    }
}
