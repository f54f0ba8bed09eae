//! Cell-transition digraphs with integer displacement labels and their
//! maximum-mean-cycle support oracle.

mod hull;
mod karp;
mod policy;
mod scc;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Norm, RationalVec2};
use crate::torus::{LiftMap, PseudoOrbit};

pub use hull::{pseudo_rotation_polygon, pseudo_rotation_polygon_with, PseudoPolygon, DEFAULT_DIRECTION_BUDGET};

/// Which side of the sandwich a graph approximates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Edges are genuine δ-jumps between cell centres.
    Inner,
    /// Every δ-pseudo-orbit is a path.
    Outer,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Inner => "inner",
            Mode::Outer => "outer",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inner" => Ok(Mode::Inner),
            "outer" => Ok(Mode::Outer),
            _ => Err(Error::Parse(format!("unknown mode {s:?} (expected inner or outer)"))),
        }
    }
}

/// Directed edge `from → to` with integer displacement label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: u32,
    pub to: u32,
    pub label: [i32; 2],
}

/// Closed walk `nodes[0] → nodes[1] → … → nodes[L] = nodes[0]`, where the
/// k-th edge carries `labels[k]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cycle {
    pub nodes: Vec<u32>,
    pub labels: Vec<[i32; 2]>,
}

impl Cycle {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Sum of labels divided by the length, computed in floating point.
    pub fn float_mean(&self) -> [f64; 2] {
        let l = self.labels.len() as f64;
        let s = self.labels.iter().fold([0i64; 2], |a, w| [a[0] + w[0] as i64, a[1] + w[1] as i64]);
        [s[0] as f64 / l, s[1] as f64 / l]
    }
}

/// Row of lifted lattice targets `(i_u + lo ..= i_u + hi, j_u + dj)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Span {
    pub dj: i32,
    pub lo: i32,
    pub hi: i32,
}

#[derive(Clone, Debug)]
pub(crate) enum Storage {
    /// Cells of an `N × N` grid; node `u = j·N + i`. Edges are the lattice
    /// points of each node's spans.
    Lattice { n: usize, row_start: Vec<u32>, spans: Vec<Span> },
    /// Compressed adjacency lists.
    Explicit { offsets: Vec<u32>, targets: Vec<u32>, labels: Vec<[i32; 2]> },
}

/// Parameters a grid graph was built with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub resolution: usize,
    pub delta: f64,
    pub mode: Mode,
    pub norm: Norm,
    /// Strict distance threshold actually used for edges.
    pub threshold: f64,
}

/// Digraph whose edges `(u, v, w)` say that cell `u` can pseudo-jump to
/// cell `v` with integer displacement `w`.
#[derive(Clone, Debug)]
pub struct DisplacementGraph {
    pub(crate) storage: Storage,
    info: Option<GridInfo>,
    scc_index: Vec<u32>,
    scc_sizes: Vec<u32>,
}

/// Largest label component representable in the binary export.
pub const LABEL_LIMIT: i32 = i8::MAX as i32;

#[inline]
fn center(k: i64, n: usize) -> f64 {
    (k as f64 + 0.5) / n as f64
}

impl DisplacementGraph {
    /// Graph on `nodes` vertices with the given edges.
    pub fn from_edges(nodes: usize, edges: &[Edge]) -> Result<Self> {
        if nodes > u32::MAX as usize {
            return Err(Error::Overflow("too many nodes".into()));
        }
        let mut sorted = edges.to_vec();
        for e in &sorted {
            if e.from as usize >= nodes || e.to as usize >= nodes {
                return Err(Error::InvalidParameter(format!("edge {e:?} refers to a missing node")));
            }
        }
        sorted.sort();
        sorted.dedup();
        let mut offsets = vec![0u32; nodes + 1];
        for e in &sorted {
            offsets[e.from as usize + 1] += 1;
        }
        for k in 0..nodes {
            offsets[k + 1] += offsets[k];
        }
        let storage = Storage::Explicit {
            offsets,
            targets: sorted.iter().map(|e| e.to).collect(),
            labels: sorted.iter().map(|e| e.label).collect(),
        };
        Ok(Self::with_storage(storage, None))
    }

    fn with_storage(storage: Storage, info: Option<GridInfo>) -> Self {
        let mut g = Self { storage, info, scc_index: Vec::new(), scc_sizes: Vec::new() };
        let (index, sizes) = scc::tarjan(&g);
        g.scc_index = index;
        g.scc_sizes = sizes;
        g
    }

    pub fn node_count(&self) -> usize {
        match &self.storage {
            Storage::Lattice { n, .. } => n * n,
            Storage::Explicit { offsets, .. } => offsets.len() - 1,
        }
    }

    pub fn edge_count(&self) -> usize {
        match &self.storage {
            Storage::Lattice { spans, .. } => spans.iter().map(|s| (s.hi - s.lo + 1) as usize).sum(),
            Storage::Explicit { targets, .. } => targets.len(),
        }
    }

    /// Build parameters, for graphs built from a map.
    pub fn grid_info(&self) -> Option<&GridInfo> {
        self.info.as_ref()
    }

    pub fn scc_index(&self) -> &[u32] {
        &self.scc_index
    }

    /// Node count of every strongly connected component.
    pub fn scc_sizes(&self) -> &[u32] {
        &self.scc_sizes
    }

    /// Calls `f(v, label)` for every out-edge of `u`.
    pub fn for_each_successor(&self, u: u32, mut f: impl FnMut(u32, [i32; 2])) {
        match &self.storage {
            Storage::Lattice { n, row_start, spans } => {
                let n = *n as i64;
                let (iu, ju) = (u as i64 % n, u as i64 / n);
                for s in &spans[row_start[u as usize] as usize..row_start[u as usize + 1] as usize] {
                    let jj = ju + s.dj as i64;
                    let (wy, vj) = (jj.div_euclid(n), jj.rem_euclid(n));
                    for di in s.lo..=s.hi {
                        let ii = iu + di as i64;
                        f((vj * n + ii.rem_euclid(n)) as u32, [ii.div_euclid(n) as i32, wy as i32]);
                    }
                }
            }
            Storage::Explicit { offsets, targets, labels } => {
                for k in offsets[u as usize] as usize..offsets[u as usize + 1] as usize {
                    f(targets[k], labels[k]);
                }
            }
        }
    }

    pub fn successors(&self, u: u32) -> Vec<(u32, [i32; 2])> {
        let mut out = Vec::new();
        self.for_each_successor(u, |v, w| out.push((v, w)));
        out
    }

    /// All edges, ordered by source.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::with_capacity(self.edge_count());
        for u in 0..self.node_count() as u32 {
            self.for_each_successor(u, |to, label| out.push(Edge { from: u, to, label }));
        }
        out
    }

    pub fn has_edge(&self, u: u32, v: u32, w: [i32; 2]) -> bool {
        if u as usize >= self.node_count() || v as usize >= self.node_count() {
            return false;
        }
        match &self.storage {
            Storage::Lattice { n, row_start, spans } => {
                let n = *n as i64;
                let di = (v as i64 % n) + n * w[0] as i64 - u as i64 % n;
                let dj = (v as i64 / n) + n * w[1] as i64 - u as i64 / n;
                spans[row_start[u as usize] as usize..row_start[u as usize + 1] as usize]
                    .iter()
                    .any(|s| s.dj as i64 == dj && (s.lo as i64..=s.hi as i64).contains(&di))
            }
            Storage::Explicit { offsets, targets, labels } => (offsets[u as usize] as usize
                ..offsets[u as usize + 1] as usize)
                .any(|k| targets[k] == v && labels[k] == w),
        }
    }

    /// Same graph with materialized adjacency lists.
    pub fn to_explicit(&self) -> DisplacementGraph {
        let mut g = Self::from_edges(self.node_count(), &self.edges()).expect("edges of an existing graph");
        g.info = self.info;
        g
    }

    /// Lattice step of an edge: the offset from `u`'s cell to the lifted
    /// target cell. For explicit graphs this is the label itself.
    pub(crate) fn step_of(&self, u: u32, v: u32, w: [i32; 2]) -> [i64; 2] {
        match &self.storage {
            Storage::Lattice { n, .. } => {
                let n = *n as i64;
                [v as i64 % n + n * w[0] as i64 - u as i64 % n, v as i64 / n + n * w[1] as i64 - u as i64 / n]
            }
            Storage::Explicit { .. } => [w[0] as i64, w[1] as i64],
        }
    }

    /// Cell centres along a cycle of a grid graph, lifted so consecutive
    /// points differ by the edge displacements.
    pub fn center_orbit(&self, cycle: &Cycle) -> Option<PseudoOrbit> {
        let Storage::Lattice { n, .. } = &self.storage else {
            return None;
        };
        let info = self.info?;
        let n = *n;
        let first = *cycle.nodes.first()? as i64;
        let mut pos = [first % n as i64, first / n as i64];
        let mut points = vec![[center(pos[0], n), center(pos[1], n)]];
        for k in 0..cycle.len() {
            let s = self.step_of(cycle.nodes[k], cycle.nodes[k + 1], cycle.labels[k]);
            pos = [pos[0] + s[0], pos[1] + s[1]];
            points.push([center(pos[0], n), center(pos[1], n)]);
        }
        let delta = match info.mode {
            Mode::Inner => info.delta,
            Mode::Outer => info.threshold,
        };
        Some(PseudoOrbit::new(points, delta))
    }

    /// Writes the edge list as little-endian `(u32 from, u32 to, i8 wx, i8 wy)`.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut out = std::io::BufWriter::new(file);
        let mut failure = None;
        for u in 0..self.node_count() as u32 {
            self.for_each_successor(u, |v, w| {
                if failure.is_some() {
                    return;
                }
                let mut rec = [0u8; 10];
                rec[..4].copy_from_slice(&u.to_le_bytes());
                rec[4..8].copy_from_slice(&v.to_le_bytes());
                rec[8] = w[0] as i8 as u8;
                rec[9] = w[1] as i8 as u8;
                if let Err(e) = out.write_all(&rec) {
                    failure = Some(e);
                }
            });
        }
        if let Some(e) = failure {
            return Err(e.into());
        }
        out.flush()?;
        Ok(())
    }

    /// Reads an edge list written by [`DisplacementGraph::write_binary`].
    pub fn read_binary(path: &Path, nodes: usize) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        if bytes.len() % 10 != 0 {
            return Err(Error::Parse(format!("{}: length is not a multiple of 10", path.display())));
        }
        let edges: Vec<Edge> = bytes
            .chunks_exact(10)
            .map(|r| Edge {
                from: u32::from_le_bytes([r[0], r[1], r[2], r[3]]),
                to: u32::from_le_bytes([r[4], r[5], r[6], r[7]]),
                label: [r[8] as i8 as i32, r[9] as i8 as i32],
            })
            .collect();
        Self::from_edges(nodes, &edges)
    }
}

/// Edge threshold for a build: `δ` (strict, shrunk by a relative 1e-12 to
/// absorb re-evaluation round-off) in inner mode, and
/// `δ + r_h + ω(r_h) = δ + 2r_h + ω_φ(r_h)` in outer mode.
pub fn edge_threshold(map: &LiftMap, resolution: usize, delta: f64, mode: Mode, norm: Norm) -> f64 {
    let h = 1.0 / resolution as f64;
    let r = norm.cell_radius(h);
    match mode {
        Mode::Inner => delta * (1.0 - 1e-12),
        Mode::Outer => (delta + 2.0 * r + map.phi_modulus_in(r, norm)) * (1.0 + 1e-12),
    }
}

/// Builds the transition graph of `map` on the `N × N` grid (`h = 1/N`).
pub fn build_graph(map: &LiftMap, resolution: usize, delta: f64, mode: Mode, norm: Norm) -> Result<DisplacementGraph> {
    if resolution == 0 || !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("need resolution ≥ 1 and δ > 0 (got {resolution}, {delta})")));
    }
    let n = resolution;
    let h = 1.0 / n as f64;
    if h > delta {
        return Err(Error::GridTooCoarse { step: h, delta });
    }
    if (n as u64) * (n as u64) > u32::MAX as u64 {
        return Err(Error::Overflow(format!("grid {n} has too many cells")));
    }
    let thr = edge_threshold(map, n, delta, mode, norm);
    let nn = n as i64;

    let per_node: Vec<Result<Vec<Span>>> = (0..n * n)
        .into_par_iter()
        .map(|u| {
            let (iu, ju) = ((u % n) as i64, (u / n) as i64);
            let p = map.eval([center(iu, n), center(ju, n)]);
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::NonFinite(center(iu, n), center(ju, n)));
            }
            let inside = |i: i64, j: i64| norm.dist(p, [center(i, n), center(j, n)]) < thr;
            let j_lo = ((p[1] - thr) * n as f64 - 0.5).floor() as i64 - 1;
            let j_hi = ((p[1] + thr) * n as f64 - 0.5).ceil() as i64 + 1;
            let mut spans = Vec::new();
            for j in j_lo..=j_hi {
                let dy = (center(j, n) - p[1]).abs();
                let half = match norm {
                    Norm::Euclidean => {
                        if dy >= thr {
                            continue;
                        }
                        (thr * thr - dy * dy).sqrt()
                    }
                    Norm::Max => {
                        if dy >= thr {
                            continue;
                        }
                        thr
                    }
                };
                let mut lo = ((p[0] - half) * n as f64 - 0.5).ceil() as i64;
                let mut hi = ((p[0] + half) * n as f64 - 0.5).floor() as i64;
                // settle the ends on the exact predicate
                while inside(lo - 1, j) {
                    lo -= 1;
                }
                while lo <= hi && !inside(lo, j) {
                    lo += 1;
                }
                while inside(hi + 1, j) {
                    hi += 1;
                }
                while hi >= lo && !inside(hi, j) {
                    hi -= 1;
                }
                if lo > hi {
                    continue;
                }
                for (i, jj) in [(lo, j), (hi, j)] {
                    let w = [i.div_euclid(nn), jj.div_euclid(nn)];
                    let m = w[0].abs().max(w[1].abs());
                    if m > LABEL_LIMIT as i64 {
                        return Err(Error::LabelOverflow { magnitude: m, bound: LABEL_LIMIT as i64 });
                    }
                }
                spans.push(Span { dj: (j - ju) as i32, lo: (lo - iu) as i32, hi: (hi - iu) as i32 });
            }
            Ok(spans)
        })
        .collect();

    let mut row_start = Vec::with_capacity(n * n + 1);
    let mut spans = Vec::new();
    row_start.push(0u32);
    for r in per_node {
        spans.extend(r?);
        row_start.push(u32::try_from(spans.len()).map_err(|_| Error::Overflow("too many spans".into()))?);
    }
    let info = GridInfo { resolution: n, delta, mode, norm, threshold: thr };
    Ok(DisplacementGraph::with_storage(Storage::Lattice { n, row_start, spans }, Some(info)))
}

/// Exact mean label of a closed walk.
pub fn cycle_mean_vector(graph: &DisplacementGraph, cycle: &Cycle) -> Result<RationalVec2> {
    let l = cycle.labels.len();
    if l == 0 || cycle.nodes.len() != l + 1 {
        return Err(Error::InvalidCycle(format!("{} nodes for {} labels", cycle.nodes.len(), l)));
    }
    if cycle.nodes[0] != cycle.nodes[l] {
        return Err(Error::InvalidCycle("path is not closed".into()));
    }
    let mut sum = [0i64; 2];
    for k in 0..l {
        let (u, v, w) = (cycle.nodes[k], cycle.nodes[k + 1], cycle.labels[k]);
        if !graph.has_edge(u, v, w) {
            return Err(Error::InvalidCycle(format!("no edge {u} -> {v} with label {w:?}")));
        }
        sum = [sum[0] + w[0] as i64, sum[1] + w[1] as i64];
    }
    let l = BigInt::from(l);
    Ok(RationalVec2::new(BigRational::new(BigInt::from(sum[0]), l.clone()), BigRational::new(BigInt::from(sum[1]), l)))
}

/// Result of a support query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCycle {
    /// Integer direction the query was answered for.
    pub direction: [i64; 2],
    /// `max ⟨mean, direction⟩` over all cycles.
    #[serde(with = "crate::geometry::rational_serde")]
    pub value: BigRational,
    pub mean: RationalVec2,
    pub cycle: Cycle,
    /// False when the exact verification gave up (pathological inputs).
    pub certified: bool,
}

/// Which max-mean-cycle algorithm answers a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    /// Karp for adjacency-list graphs, policy iteration for grid graphs.
    Auto,
    Karp,
    PolicyIteration,
}

/// Largest direction component accepted by the support oracle.
pub const DIRECTION_LIMIT: i64 = 1 << 60;

/// Maximum mean of `⟨label, θ⟩` over the cycles of `graph`, with one
/// attaining simple cycle. Floating directions are converted exactly.
pub fn max_mean_cycle(graph: &DisplacementGraph, theta: [f64; 2]) -> Result<MeanCycle> {
    let exact = RationalVec2::from_f64(theta)?;
    let (a, b) = exact.primitive_direction().ok_or(Error::ZeroDirection)?;
    let dir = [bigint_to_i64(&a)?, bigint_to_i64(&b)?];
    let mut r = max_mean_cycle_dir(graph, dir, Algorithm::Auto)?;
    r.value = r.mean.dot(&exact);
    Ok(r)
}

fn bigint_to_i64(v: &BigInt) -> Result<i64> {
    i64::try_from(v)
        .ok()
        .filter(|x| x.abs() <= DIRECTION_LIMIT)
        .ok_or_else(|| Error::Overflow(format!("direction component {v} is too large")))
}

/// Support query for an integer direction.
pub fn max_mean_cycle_dir(graph: &DisplacementGraph, dir: [i64; 2], algorithm: Algorithm) -> Result<MeanCycle> {
    support_query(graph, dir, algorithm, None).map(|(m, _)| m)
}

/// Support query that can start policy iteration from an earlier policy.
pub(crate) fn support_query(
    graph: &DisplacementGraph,
    dir: [i64; 2],
    algorithm: Algorithm,
    seed: Option<&policy::Seed>,
) -> Result<(MeanCycle, Option<policy::Seed>)> {
    if dir == [0, 0] {
        return Err(Error::ZeroDirection);
    }
    if dir[0].abs() > DIRECTION_LIMIT || dir[1].abs() > DIRECTION_LIMIT {
        return Err(Error::Overflow(format!("direction {dir:?} is too large")));
    }
    let use_karp = match algorithm {
        Algorithm::Karp => true,
        Algorithm::PolicyIteration => false,
        Algorithm::Auto => matches!(graph.storage, Storage::Explicit { .. }),
    };
    let (cycle, certified, seed) = if use_karp {
        (karp::max_mean_cycle(graph, dir)?, true, None)
    } else {
        let (c, ok, s) = policy::max_mean_cycle(graph, dir, seed)?;
        (c, ok, Some(s))
    };
    let mean = cycle_mean_vector(graph, &cycle)?;
    let d = RationalVec2::from_ints(dir[0], dir[1]);
    Ok((MeanCycle { direction: dir, value: mean.dot(&d), mean, cycle, certified }, seed))
}

/// Weight of an edge in a query: `⟨step, dir⟩`.
#[inline]
pub(crate) fn weight(step: [i64; 2], dir: [i64; 2]) -> i128 {
    step[0] as i128 * dir[0] as i128 + step[1] as i128 * dir[1] as i128
}
