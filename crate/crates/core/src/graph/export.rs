//! Node table and edge list for a built graph.

use std::io::Write;

use super::Ahin;

pub const NODES_HEADER: [&str; 6] = ["geo_id", "level", "name", "parent_geo_id", "lat", "lon"];
pub const EDGES_HEADER: [&str; 5] = ["source", "source_type", "relation", "target", "target_type"];

pub fn write_nodes<W: Write>(out: W, ahin: &Ahin) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(NODES_HEADER)?;
    for node in ahin.nodes() {
        let parent = node
            .parent
            .map(|p| ahin.node(p).geo_id.to_string())
            .unwrap_or_default();
        w.write_record([
            node.geo_id.as_str(),
            node.level.as_str(),
            &node.name,
            &parent,
            &node.lat.to_string(),
            &node.lon.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Include edges (parent first) followed by near edges (smaller geo_id first).
pub fn write_edges<W: Write>(out: W, ahin: &Ahin) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EDGES_HEADER)?;
    let include = ahin.include_edges().map(|e| (e, "include"));
    let near = ahin.near_edges().iter().map(|&e| (e, "near"));
    for ((a, b), relation) in include.chain(near) {
        let (a, b) = (ahin.node(a), ahin.node(b));
        w.write_record([
            a.geo_id.as_str(),
            a.level.as_str(),
            relation,
            b.geo_id.as_str(),
            b.level.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
