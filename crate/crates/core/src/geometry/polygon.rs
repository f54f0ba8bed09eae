use std::cmp::Ordering;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::vec::{rat_to_f64, RationalVec2};
use crate::error::{Error, Result};

/// Convex polygon with exact rational vertices.
///
/// Vertices are stored counterclockwise starting from the lexicographically
/// smallest one, with no repeated or collinear vertices. A single vertex is a
/// point, two vertices a segment.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ConvexPolygon {
    vertices: Vec<RationalVec2>,
}

/// Result of a support-function query.
#[derive(Clone, Debug, PartialEq)]
pub struct Support {
    pub value: f64,
    /// Indices of every vertex attaining the maximum: one vertex, or the two
    /// endpoints of an edge orthogonal to the direction.
    pub argmax: Vec<usize>,
}

fn orient(o: &RationalVec2, a: &RationalVec2, b: &RationalVec2) -> BigRational {
    a.sub(o).cross(&b.sub(o))
}

/// Minimal convex polygon containing `points` (Andrew's monotone chain,
/// exact arithmetic).
pub fn convex_hull(points: &[RationalVec2]) -> Result<ConvexPolygon> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let mut pts = points.to_vec();
    pts.sort();
    pts.dedup();
    if pts.len() <= 2 {
        return Ok(ConvexPolygon { vertices: pts });
    }
    let mut lower: Vec<RationalVec2> = Vec::with_capacity(pts.len());
    for p in &pts {
        while lower.len() >= 2 && !orient(&lower[lower.len() - 2], &lower[lower.len() - 1], p).is_positive() {
            lower.pop();
        }
        lower.push(p.clone());
    }
    let mut upper: Vec<RationalVec2> = Vec::with_capacity(pts.len());
    for p in pts.iter().rev() {
        while upper.len() >= 2 && !orient(&upper[upper.len() - 2], &upper[upper.len() - 1], p).is_positive() {
            upper.pop();
        }
        upper.push(p.clone());
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    // all points collinear: the chains collapse to the two extremes
    if lower.len() == 2 && lower[0] == lower[1] {
        lower.pop();
    }
    Ok(ConvexPolygon { vertices: lower })
}

impl ConvexPolygon {
    pub fn point(p: RationalVec2) -> Self {
        Self { vertices: vec![p] }
    }

    /// Builds a polygon from vertices that are already in hull order; falls
    /// back to a full hull computation when they are not.
    pub fn from_vertices(vertices: Vec<RationalVec2>) -> Result<Self> {
        let hull = convex_hull(&vertices)?;
        Ok(hull)
    }

    pub fn vertices(&self) -> &[RationalVec2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn is_point(&self) -> bool {
        self.vertices.len() == 1
    }

    pub fn is_segment(&self) -> bool {
        self.vertices.len() == 2
    }

    pub fn float_vertices(&self) -> Vec<[f64; 2]> {
        self.vertices.iter().map(RationalVec2::to_f64).collect()
    }

    /// Directed edges `(a, b)` in counterclockwise order. A segment yields
    /// both orientations; a point yields nothing.
    pub fn edges(&self) -> Vec<(&RationalVec2, &RationalVec2)> {
        let n = self.vertices.len();
        match n {
            0 | 1 => vec![],
            _ => (0..n).map(|i| (&self.vertices[i], &self.vertices[(i + 1) % n])).collect(),
        }
    }

    /// Outward normals `(b − a)` rotated clockwise, one per directed edge.
    pub fn edge_normals(&self) -> Vec<RationalVec2> {
        self.edges()
            .into_iter()
            .map(|(a, b)| {
                let d = b.sub(a);
                RationalVec2::new(d.y.clone(), -d.x)
            })
            .collect()
    }

    /// Exact support value and argmax set in a rational direction.
    pub fn support_exact(&self, dir: &RationalVec2) -> Result<(BigRational, Vec<usize>)> {
        if dir.is_zero() {
            return Err(Error::ZeroDirection);
        }
        let mut best: Option<BigRational> = None;
        let mut arg = Vec::new();
        for (i, v) in self.vertices.iter().enumerate() {
            let d = v.dot(dir);
            match best.as_ref().map(|b| d.cmp(b)) {
                None | Some(Ordering::Greater) => {
                    best = Some(d);
                    arg.clear();
                    arg.push(i);
                }
                Some(Ordering::Equal) => arg.push(i),
                Some(Ordering::Less) => {}
            }
        }
        best.map(|b| (b, arg)).ok_or(Error::EmptyPointSet)
    }

    /// Support function `max ⟨v, θ⟩` over the vertices. Ties are resolved
    /// exactly (θ is read as the exact dyadic rational it represents).
    pub fn support(&self, theta: [f64; 2]) -> Result<Support> {
        if !(theta[0].is_finite() && theta[1].is_finite()) {
            return Err(Error::NonFinite(theta[0], theta[1]));
        }
        let dir = RationalVec2::from_f64(theta)?;
        let (value, argmax) = self.support_exact(&dir)?;
        Ok(Support { value: rat_to_f64(&value), argmax })
    }

    /// Exact membership test (boundary included).
    pub fn contains(&self, p: &RationalVec2) -> bool {
        match self.vertices.len() {
            0 => false,
            1 => &self.vertices[0] == p,
            2 => {
                let (a, b) = (&self.vertices[0], &self.vertices[1]);
                if !orient(a, b, p).is_zero() {
                    return false;
                }
                let ab = b.sub(a);
                let t = p.sub(a).dot(&ab);
                !t.is_negative() && t <= ab.dot(&ab)
            }
            _ => self.edges().into_iter().all(|(a, b)| !orient(a, b, p).is_negative()),
        }
    }

    pub fn contains_polygon(&self, other: &ConvexPolygon) -> bool {
        other.vertices.iter().all(|v| self.contains(v))
    }

    /// Exact (signed, ≥ 0 for convex) distance-free test used for certificates:
    /// how far `p` lies outside along the worst edge normal. Zero or negative
    /// when inside.
    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        FloatPolygon::new(self).distance(p, 1.0)
    }

    /// Largest reduced denominator over all vertices.
    pub fn max_denominator(&self) -> num_bigint::BigInt {
        self.vertices.iter().map(RationalVec2::common_denominator).max().unwrap_or_default()
    }

    /// Twice the signed area.
    pub fn double_area(&self) -> BigRational {
        let n = self.vertices.len();
        let mut s = BigRational::zero();
        for i in 0..n {
            s += self.vertices[i].cross(&self.vertices[(i + 1) % n]);
        }
        s
    }

    pub fn diameter(&self) -> f64 {
        let f = self.float_vertices();
        let mut d: f64 = 0.0;
        for i in 0..f.len() {
            for j in i + 1..f.len() {
                d = d.max((f[i][0] - f[j][0]).hypot(f[i][1] - f[j][1]));
            }
        }
        d
    }
}

/// Float copy of a polygon for hot-loop distance queries.
#[derive(Clone, Debug)]
pub struct FloatPolygon {
    v: Vec<[f64; 2]>,
}

impl FloatPolygon {
    pub fn new(p: &ConvexPolygon) -> Self {
        Self { v: p.float_vertices() }
    }

    /// Euclidean distance from `p` to the dilation `scale · P`.
    pub fn distance(&self, p: [f64; 2], scale: f64) -> f64 {
        let v: Vec<[f64; 2]> = self.v.iter().map(|a| [a[0] * scale, a[1] * scale]).collect();
        match v.len() {
            0 => f64::INFINITY,
            1 => (p[0] - v[0][0]).hypot(p[1] - v[0][1]),
            2 => point_segment(p, v[0], v[1]),
            n => {
                let mut inside = true;
                let mut best = f64::INFINITY;
                for i in 0..n {
                    let a = v[i];
                    let b = v[(i + 1) % n];
                    let cr = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
                    if cr < 0.0 {
                        inside = false;
                    }
                    best = best.min(point_segment(p, a, b));
                }
                if inside {
                    0.0
                } else {
                    best
                }
            }
        }
    }
}

fn point_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 { ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let c = [a[0] + t * ab[0], a[1] + t * ab[1]];
    (p[0] - c[0]).hypot(p[1] - c[1])
}

/// Euclidean distance from `v` to the dilated polygon `nP = {n p : p ∈ P}`.
pub fn dist_point_scaled_polygon(v: [f64; 2], n: u64, p: &ConvexPolygon) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if n == 0 {
        return Err(Error::InvalidParameter("dilation factor n must be ≥ 1".into()));
    }
    Ok(FloatPolygon::new(p).distance(v, n as f64))
}

/// Symmetric Hausdorff distance between two convex polygons. For convex sets
/// the distance function to the other set is convex, so its maximum over a
/// polygon is attained at a vertex.
pub fn hausdorff(p: &ConvexPolygon, q: &ConvexPolygon) -> f64 {
    if p == q {
        return 0.0;
    }
    let fp = FloatPolygon::new(p);
    let fq = FloatPolygon::new(q);
    let a = p.float_vertices().into_iter().map(|v| fq.distance(v, 1.0)).fold(0.0, f64::max);
    let b = q.float_vertices().into_iter().map(|v| fp.distance(v, 1.0)).fold(0.0, f64::max);
    a.max(b)
}

/// Largest reduced denominator an extremal point of a δ-upper-stable
/// rotation set can have: ⌊4/(πδ²)⌋.
///
/// The disk-area inequality behind the bound is strict, so when 4/(πδ²) is
/// an integer `m` (up to round-off) the inclusive value `m` is returned.
/// A result of 0 means the bound is degenerate: no rational vertex survives.
pub fn max_vertex_denominator(delta: f64) -> Result<u64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let x = 4.0 / (std::f64::consts::PI * delta * delta);
    if x >= u64::MAX as f64 {
        return Err(Error::Overflow(format!("denominator bound {x} does not fit u64")));
    }
    let m = x.round();
    if (x - m).abs() <= 1e-9 * m.max(1.0) {
        Ok(m as u64)
    } else {
        Ok(x.floor() as u64)
    }
}

#[derive(Serialize, Deserialize)]
struct PolygonRepr {
    vertices: Vec<RationalVec2>,
    #[serde(default)]
    float_vertices: Vec<[f64; 2]>,
}

impl Serialize for ConvexPolygon {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolygonRepr { vertices: self.vertices.clone(), float_vertices: self.float_vertices() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConvexPolygon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = PolygonRepr::deserialize(d)?;
        convex_hull(&r.vertices).map_err(serde::de::Error::custom)
    }
}
