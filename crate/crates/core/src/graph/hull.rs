use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::policy::Seed;
use super::{support_query, Algorithm, Cycle, DisplacementGraph, MeanCycle, Mode};
use crate::error::{Error, Result};
use crate::geometry::{convex_hull, ConvexPolygon, Norm, RationalVec2};

/// Default cap on support queries per polygon.
pub const DEFAULT_DIRECTION_BUDGET: usize = 4096;

const START_DIRECTIONS: [[i64; 2]; 8] = [[1, 0], [1, 1], [0, 1], [-1, 1], [-1, 0], [-1, -1], [0, -1], [1, -1]];

/// Cycle whose mean is a polygon vertex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub vertex: RationalVec2,
    pub cycle: Cycle,
}

/// Hull of the cycle means of a graph, with build parameters and a
/// witness cycle per vertex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoPolygon {
    #[serde(flatten)]
    pub polygon: ConvexPolygon,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<Norm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// True when every hull edge was confirmed by a support query and every
    /// query was verified exactly.
    pub certified: bool,
    pub directions_queried: usize,
    #[serde(default)]
    pub witnesses: Vec<Witness>,
}

impl PseudoPolygon {
    pub fn witness(&self, vertex: &RationalVec2) -> Option<&Cycle> {
        self.witnesses.iter().find(|w| &w.vertex == vertex).map(|w| &w.cycle)
    }
}

fn to_i64(v: &BigInt) -> Result<i64> {
    i64::try_from(v).map_err(|_| Error::Overflow(format!("edge normal component {v} exceeds i64")))
}

fn angle(d: [i64; 2]) -> f64 {
    (d[1] as f64).atan2(d[0] as f64)
}

/// Policy of the answered direction closest in angle to `d`.
fn nearest_seed(seeds: &[(f64, Seed)], d: [i64; 2]) -> Option<&Seed> {
    let a = angle(d);
    let gap = |b: f64| {
        let t = (a - b).abs() % std::f64::consts::TAU;
        t.min(std::f64::consts::TAU - t)
    };
    seeds.iter().min_by(|x, y| gap(x.0).total_cmp(&gap(y.0))).map(|(_, s)| s)
}

/// Exact hull of all cycle means, by support-oracle refinement.
pub fn pseudo_rotation_polygon(graph: &DisplacementGraph) -> Result<PseudoPolygon> {
    pseudo_rotation_polygon_with(graph, DEFAULT_DIRECTION_BUDGET, Algorithm::Auto)
}

pub fn pseudo_rotation_polygon_with(
    graph: &DisplacementGraph,
    budget: usize,
    algorithm: Algorithm,
) -> Result<PseudoPolygon> {
    let mut points: BTreeMap<RationalVec2, Cycle> = BTreeMap::new();
    let mut answers: BTreeMap<[i64; 2], BigRational> = BTreeMap::new();
    let mut certified = true;
    let mut pending: Vec<[i64; 2]> = START_DIRECTIONS.to_vec();
    let mut seeds: Vec<(f64, Seed)> = Vec::new();

    loop {
        if answers.len() + pending.len() > budget {
            certified = false;
            break;
        }
        let results: Vec<Result<(MeanCycle, Option<Seed>)>> =
            pending.par_iter().map(|&d| support_query(graph, d, algorithm, nearest_seed(&seeds, d))).collect();
        for (d, r) in pending.iter().zip(results) {
            let (r, seed) = r?;
            if let Some(seed) = seed {
                seeds.push((angle(*d), seed));
            }
            certified &= r.certified;
            answers.insert(*d, r.value);
            points.entry(r.mean).or_insert(r.cycle);
        }
        let hull = convex_hull(&points.keys().cloned().collect::<Vec<_>>())?;
        let mut next = BTreeSet::new();
        for ((a, _), normal) in hull.edges().into_iter().zip(hull.edge_normals()) {
            let Some((nx, ny)) = normal.primitive_direction() else {
                continue;
            };
            let d = [to_i64(&nx)?, to_i64(&ny)?];
            match answers.get(&d) {
                None => {
                    next.insert(d);
                }
                Some(v) => {
                    // an answer above the edge would have added a point outside the hull
                    debug_assert!(*v <= a.dot(&RationalVec2::from_ints(d[0], d[1])));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        pending = next.into_iter().collect();
    }

    let polygon = convex_hull(&points.keys().cloned().collect::<Vec<_>>())?;
    let witnesses =
        polygon.vertices().iter().map(|v| Witness { vertex: v.clone(), cycle: points[v].clone() }).collect();
    let info = graph.grid_info();
    Ok(PseudoPolygon {
        polygon,
        mode: info.map(|i| i.mode),
        delta: info.map(|i| i.delta),
        grid: info.map(|i| i.resolution),
        norm: info.map(|i| i.norm),
        threshold: info.map(|i| i.threshold),
        certified,
        directions_queried: answers.len(),
        witnesses,
    })
}
