use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::geo::DistanceMetric;

/// A point taking part in a same-level neighbour search.
#[derive(Clone, Copy, Debug)]
pub struct KnnPoint<'a> {
    /// Tie-break key; the geo_id of the area.
    pub key: &'a str,
    pub coord: (f64, f64),
}

/// Undirected k-nearest-neighbour edges among `points`.
///
/// Every point links to its `k` closest peers, closer first and the smaller
/// key first on equal distance. Edges come back as index pairs `(i, j)` with
/// `i < j`; a pair chosen from both sides is stored once.
pub fn knn_geospatial(
    points: &[KnnPoint<'_>],
    k: usize,
    metric: DistanceMetric,
) -> BTreeSet<(usize, usize)> {
    if points.len() < 2 || k == 0 {
        return BTreeSet::new();
    }
    let picks: Vec<Vec<usize>> = (0..points.len())
        .into_par_iter()
        .map(|i| nearest(points, i, k, metric))
        .collect();
    let mut edges = BTreeSet::new();
    for (i, neighbours) in picks.into_iter().enumerate() {
        for j in neighbours {
            edges.insert((i.min(j), i.max(j)));
        }
    }
    edges
}

fn nearest(points: &[KnnPoint<'_>], i: usize, k: usize, metric: DistanceMetric) -> Vec<usize> {
    let origin = points[i].coord;
    let mut others: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, p)| (metric.distance(origin, p.coord), j))
        .collect();
    let order = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
        a.0.total_cmp(&b.0)
            .then_with(|| points[a.1].key.cmp(points[b.1].key))
    };
    let k = k.min(others.len());
    if k < others.len() {
        others.select_nth_unstable_by(k - 1, order);
        others.truncate(k);
    }
    others.sort_by(order);
    others.into_iter().map(|(_, j)| j).collect()
}
