//! Plain-text model checkpoints.
//!
//! Numbers are written with Rust's shortest round-trip float formatting, so
//! reading a checkpoint back reproduces every parameter bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::gae::{RelationMatrices, RelationMatrix};
use crate::graph::{RelationType, FEATURE_DIM};
use crate::nn::{Activation, Mlp};
use crate::perception::{CganPair, Embedder, PerceptionModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CheckpointError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("expected a `{expected}` checkpoint, found `{found}`")]
    Kind { expected: String, found: String },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("inconsistent network shape in section `{0}`")]
    Shape(String),
}

/// Parsed checkpoint: kind, top-level keys, and named parameter sections.
#[derive(Debug, Clone, Default, PartialEq)]
struct Document {
    kind: String,
    keys: BTreeMap<String, String>,
    sections: Vec<(String, BTreeMap<String, String>, Vec<f64>)>,
}

fn header(kind: &str) -> String {
    format!("asat-checkpoint v{FORMAT_VERSION} {kind}\n")
}

fn write_values(out: &mut String, values: &[f64]) {
    for v in values {
        writeln!(out, "{v}").unwrap();
    }
}

fn write_mlp(out: &mut String, name: &str, net: &Mlp) {
    writeln!(out, "[{name}]").unwrap();
    let sizes: Vec<String> = net.sizes().iter().map(|s| s.to_string()).collect();
    let acts: Vec<String> = net.activations().iter().map(|a| a.name()).collect();
    writeln!(out, "sizes={}", sizes.join(",")).unwrap();
    writeln!(out, "activations={}", acts.join(",")).unwrap();
    writeln!(out, "count={}", net.param_count()).unwrap();
    write_values(out, net.params());
}

fn parse(text: &str, expected: &str) -> Result<Document, CheckpointError> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or(CheckpointError::Parse {
        line: 1,
        reason: "empty checkpoint".into(),
    })?;
    let mut parts = first.split_whitespace();
    if parts.next() != Some("asat-checkpoint") {
        return Err(CheckpointError::Parse {
            line: 1,
            reason: "not a checkpoint".into(),
        });
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.strip_prefix('v'))
        .and_then(|v| v.parse().ok())
        .ok_or(CheckpointError::Parse {
            line: 1,
            reason: "missing version".into(),
        })?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let kind = parts.next().unwrap_or("").to_string();
    if kind != expected {
        return Err(CheckpointError::Kind {
            expected: expected.into(),
            found: kind,
        });
    }
    let mut doc = Document {
        kind,
        ..Document::default()
    };
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: &str| CheckpointError::Parse {
            line: i + 1,
            reason: reason.into(),
        };
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            doc.sections.push((name.to_string(), BTreeMap::new(), Vec::new()));
        } else if let Some((k, v)) = line.split_once('=') {
            match doc.sections.last_mut() {
                Some((_, keys, values)) if values.is_empty() => keys.insert(k.into(), v.into()),
                Some(_) => return Err(err("key after values")),
                None => doc.keys.insert(k.into(), v.into()),
            };
        } else {
            let value: f64 = line.parse().map_err(|_| err("expected a number"))?;
            match doc.sections.last_mut() {
                Some((_, _, values)) => values.push(value),
                None => return Err(err("value outside a section")),
            }
        }
    }
    Ok(doc)
}

fn key<'d>(keys: &'d BTreeMap<String, String>, name: &str) -> Result<&'d str, CheckpointError> {
    keys.get(name)
        .map(String::as_str)
        .ok_or_else(|| CheckpointError::MissingKey(name.into()))
}

fn number<T: std::str::FromStr>(keys: &BTreeMap<String, String>, name: &str) -> Result<T, CheckpointError> {
    key(keys, name)?.parse().map_err(|_| CheckpointError::Parse {
        line: 0,
        reason: format!("invalid value for `{name}`"),
    })
}

fn read_mlp(doc: &Document, name: &str) -> Result<Mlp, CheckpointError> {
    let (_, keys, values) = doc
        .sections
        .iter()
        .find(|(n, _, _)| n == name)
        .ok_or_else(|| CheckpointError::MissingKey(format!("[{name}]")))?;
    let shape = || CheckpointError::Shape(name.into());
    let sizes = key(keys, "sizes")?
        .split(',')
        .map(|s| s.parse::<usize>().map_err(|_| shape()))
        .collect::<Result<Vec<_>, _>>()?;
    let activations = key(keys, "activations")?
        .split(',')
        .map(|s| Activation::parse(s).ok_or_else(shape))
        .collect::<Result<Vec<_>, _>>()?;
    let count: usize = number(keys, "count")?;
    if count != values.len() {
        return Err(shape());
    }
    Mlp::from_parts(sizes, activations, values.clone()).ok_or_else(shape)
}

pub fn write_perception(model: &PerceptionModel, embedder: &Embedder) -> String {
    let mut out = header("perception");
    writeln!(out, "embedding_dim={}", embedder.dim).unwrap();
    writeln!(out, "embedding_seed={}", embedder.seed).unwrap();
    write_mlp(&mut out, "network", model.net());
    out
}

pub fn read_perception(text: &str) -> Result<(PerceptionModel, Embedder), CheckpointError> {
    let doc = parse(text, "perception")?;
    let embedder = Embedder::new(number(&doc.keys, "embedding_dim")?, number(&doc.keys, "embedding_seed")?);
    let net = read_mlp(&doc, "network")?;
    if net.input_dim() != embedder.dim {
        return Err(CheckpointError::Shape("network".into()));
    }
    let model = PerceptionModel::from_net(net).ok_or_else(|| CheckpointError::Shape("network".into()))?;
    Ok((model, embedder))
}

pub fn write_cgan(pair: &CganPair, embedder: &Embedder) -> String {
    let mut out = header("cgan");
    writeln!(out, "noise_dim={}", pair.noise_dim).unwrap();
    writeln!(out, "embedding_dim={}", pair.embedding_dim).unwrap();
    writeln!(out, "condition_dim={}", pair.condition_dim).unwrap();
    writeln!(out, "embedding_seed={}", embedder.seed).unwrap();
    write_mlp(&mut out, "generator", &pair.generator);
    write_mlp(&mut out, "discriminator", &pair.discriminator);
    out
}

pub fn read_cgan(text: &str) -> Result<(CganPair, Embedder), CheckpointError> {
    let doc = parse(text, "cgan")?;
    let pair = CganPair {
        generator: read_mlp(&doc, "generator")?,
        discriminator: read_mlp(&doc, "discriminator")?,
        noise_dim: number(&doc.keys, "noise_dim")?,
        embedding_dim: number(&doc.keys, "embedding_dim")?,
        condition_dim: number(&doc.keys, "condition_dim")?,
    };
    let consistent = pair.generator.input_dim() == pair.noise_dim + pair.condition_dim
        && pair.generator.output_dim() == pair.embedding_dim
        && pair.discriminator.input_dim() == pair.embedding_dim + pair.condition_dim
        && pair.discriminator.output_dim() == 1;
    if !consistent {
        return Err(CheckpointError::Shape("cgan".into()));
    }
    let embedder = Embedder::new(pair.embedding_dim, number(&doc.keys, "embedding_seed")?);
    Ok((pair, embedder))
}

pub const RELATIONS_HEADER: &str = "relation,d_a,row";

/// Relation matrices as CSV: one row per matrix row, after a version comment.
pub fn write_relations(relations: &RelationMatrices) -> String {
    let d = relations.near.dim();
    let mut out = format!("# asat-relations v{FORMAT_VERSION}\n{RELATIONS_HEADER}");
    for j in 0..d {
        write!(out, ",c{j}").unwrap();
    }
    out.push('\n');
    for r in [RelationType::Include, RelationType::Near] {
        let m = relations.get(r);
        for i in 0..d {
            write!(out, "{},{d},{i}", r.as_str()).unwrap();
            for j in 0..d {
                write!(out, ",{}", m.get(i, j)).unwrap();
            }
            out.push('\n');
        }
    }
    out
}

pub fn read_relations(text: &str) -> Result<RelationMatrices, CheckpointError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let bad = |line: usize, reason: &str| CheckpointError::Parse {
        line: line + 1,
        reason: reason.into(),
    };
    match lines.next() {
        Some((_, l)) if l.trim() == format!("# asat-relations v{FORMAT_VERSION}") => {}
        Some((i, _)) => return Err(bad(i, "missing version comment")),
        None => return Err(bad(0, "empty file")),
    }
    match lines.next() {
        Some((_, l)) if l.starts_with(RELATIONS_HEADER) => {}
        Some((i, _)) => return Err(bad(i, "missing header")),
        None => return Err(bad(1, "missing header")),
    }
    let d = FEATURE_DIM;
    let mut include = vec![f64::NAN; d * d];
    let mut near = vec![f64::NAN; d * d];
    for (i, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 3 + d {
            return Err(bad(i, "wrong number of columns"));
        }
        if cells[1].parse::<usize>().ok() != Some(d) {
            return Err(bad(i, "unexpected d_a"));
        }
        let row: usize = cells[2].parse().map_err(|_| bad(i, "invalid row"))?;
        if row >= d {
            return Err(bad(i, "row out of range"));
        }
        let target = match cells[0] {
            "include" => &mut include,
            "near" => &mut near,
            _ => return Err(bad(i, "unknown relation")),
        };
        for j in 0..d {
            target[row * d + j] = cells[3 + j].parse().map_err(|_| bad(i, "invalid number"))?;
        }
    }
    if include.iter().chain(&near).any(|v| v.is_nan()) {
        return Err(CheckpointError::Shape("relations".into()));
    }
    Ok(RelationMatrices {
        include: RelationMatrix::from_vec(d, include).map_err(|_| CheckpointError::Shape("include".into()))?,
        near: RelationMatrix::from_vec(d, near).map_err(|_| CheckpointError::Shape("near".into()))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::CganConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perception_round_trip() {
        let model = PerceptionModel::new(32, 16, 3);
        let e = Embedder::default();
        let (back, e2) = read_perception(&write_perception(&model, &e)).unwrap();
        assert_eq!(back, model);
        assert_eq!(e2, e);
    }

    #[test]
    fn cgan_round_trip() {
        let pair = CganPair::new(32, 10, &CganConfig::default());
        let (back, _) = read_cgan(&write_cgan(&pair, &Embedder::default())).unwrap();
        assert_eq!(back, pair);
    }

    #[test]
    fn relations_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut r = RelationMatrices::identity(FEATURE_DIM);
        r.near.as_mut_slice().iter_mut().for_each(|v| *v = rng.random::<f64>() * 1e-3 - 7.0);
        let text = write_relations(&r);
        assert!(text.starts_with("# asat-relations v1\nrelation,d_a,row,c0,"));
        assert_eq!(read_relations(&text).unwrap(), r);
    }

    #[test]
    fn rejects_wrong_kind_and_version() {
        let text = write_perception(&PerceptionModel::new(4, 2, 1), &Embedder::new(4, 1));
        assert!(matches!(read_cgan(&text), Err(CheckpointError::Kind { .. })));
        let v2 = text.replacen("v1", "v2", 1);
        assert_eq!(read_perception(&v2).unwrap_err(), CheckpointError::Version(2));
        let truncated: String = text.lines().take(8).collect::<Vec<_>>().join("\n");
        assert!(read_perception(&truncated).is_err());
    }
}
