use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Ahin, GraphError, NodeId, RelationType};
use crate::geo::Level;

/// Directed type graph every meta-path must follow.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSchema {
    edges: Vec<(Level, RelationType, Level)>,
}

impl Default for NetworkSchema {
    fn default() -> Self {
        use Level::*;
        use RelationType::*;
        NetworkSchema {
            edges: vec![
                (Nation, Include, State),
                (State, Include, County),
                (County, Include, City),
                (State, Near, State),
                (County, Near, County),
                (City, Near, City),
            ],
        }
    }
}

impl NetworkSchema {
    pub fn edges(&self) -> &[(Level, RelationType, Level)] {
        &self.edges
    }

    pub fn allows(&self, from: Level, relation: RelationType, to: Level) -> bool {
        self.edges.contains(&(from, relation, to))
    }

    /// Number of entity types plus relation types.
    pub fn type_count(&self) -> usize {
        let entities: BTreeSet<Level> = self.edges.iter().flat_map(|e| [e.0, e.2]).collect();
        let relations: BTreeSet<RelationType> = self.edges.iter().map(|e| e.1).collect();
        entities.len() + relations.len()
    }
}

/// A typed walk template `T1 -r1-> T2 -r2-> ... T(L+1)` over the schema.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaPath {
    start: Level,
    steps: Vec<(RelationType, Level)>,
}

impl MetaPath {
    pub fn new(start: Level, steps: Vec<(RelationType, Level)>) -> Result<Self, GraphError> {
        if steps.is_empty() {
            return Err(GraphError::InvalidMetaPath("a meta-path needs at least one step".into()));
        }
        let schema = NetworkSchema::default();
        let mut from = start;
        for &(relation, to) in &steps {
            if !schema.allows(from, relation, to) {
                return Err(GraphError::InvalidMetaPath(format!(
                    "{from} -{relation}-> {to} is not in the network schema"
                )));
            }
            from = to;
        }
        Ok(MetaPath { start, steps })
    }

    fn builtin(start: Level, mid: Level) -> Self {
        MetaPath {
            start,
            steps: vec![(RelationType::Include, mid), (RelationType::Near, mid)],
        }
    }

    /// county -include-> city -near-> city
    pub fn p1() -> Self {
        Self::builtin(Level::County, Level::City)
    }

    /// state -include-> county -near-> county
    pub fn p2() -> Self {
        Self::builtin(Level::State, Level::County)
    }

    /// nation -include-> state -near-> state
    pub fn p3() -> Self {
        Self::builtin(Level::Nation, Level::State)
    }

    /// The path guiding nodes of `level`: cities P1, counties P2, states P3.
    pub fn for_level(level: Level) -> Option<Self> {
        match level {
            Level::City => Some(Self::p1()),
            Level::County => Some(Self::p2()),
            Level::State => Some(Self::p3()),
            Level::Nation => None,
        }
    }

    pub fn start(&self) -> Level {
        self.start
    }

    pub fn end(&self) -> Level {
        self.steps.last().map(|s| s.1).unwrap_or(self.start)
    }

    pub fn steps(&self) -> &[(RelationType, Level)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_relation(&self) -> RelationType {
        self.steps.last().map(|s| s.0).unwrap_or(RelationType::Include)
    }
}

impl fmt::Display for MetaPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.start)?;
        for (relation, level) in &self.steps {
            write!(f, " -{relation}-> {level}")?;
        }
        Ok(())
    }
}

/// Terminal nodes of all instances of a meta-path from one start node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaPathNeighbors {
    /// Sorted and distinct; never contains the start node.
    pub nodes: Vec<NodeId>,
    /// Relation of the last hop, which selects the attention matrix.
    pub relation: RelationType,
}

pub fn meta_path_neighbors(
    ahin: &Ahin,
    node: NodeId,
    path: &MetaPath,
) -> Result<MetaPathNeighbors, GraphError> {
    let level = ahin.node(node).level;
    if level != path.start() {
        return Err(GraphError::InvalidMetaPath(format!(
            "path `{path}` starts at {} but `{}` is a {level}",
            path.start(),
            ahin.node(node).geo_id
        )));
    }
    let mut frontier: BTreeSet<NodeId> = BTreeSet::from([node]);
    for &(relation, to) in path.steps() {
        let mut next = BTreeSet::new();
        for &n in &frontier {
            match relation {
                RelationType::Include => next.extend(
                    ahin.children(n)
                        .iter()
                        .copied()
                        .filter(|&c| ahin.node(c).level == to),
                ),
                RelationType::Near => next.extend(ahin.near(n).iter().copied()),
            }
        }
        frontier = next;
    }
    frontier.remove(&node);
    Ok(MetaPathNeighbors {
        nodes: frontier.into_iter().collect(),
        relation: path.final_relation(),
    })
}
