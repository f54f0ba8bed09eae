use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{orbit_hull_estimate, OrbitHull};
use crate::geometry::{
    convex_hull, hausdorff, max_vertex_denominator, ConvexPolygon, FloatPolygon, Norm, RationalVec2,
};
use crate::graph::{build_graph, pseudo_rotation_polygon, Mode, PseudoPolygon};
use crate::torus::LiftMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    EvidenceStable,
    Unstable,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub norm: Norm,
    pub samples: usize,
    pub orbit_length: u64,
    pub seed: u64,
    /// Overrides the default tolerance `3·(r_h + ω(r_h))`.
    pub tolerance: Option<f64>,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { norm: Norm::Euclidean, samples: 64, orbit_length: 4000, seed: 0, tolerance: None }
    }
}

/// Outcome of a stability probe with every polygon it was based on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub verdict: Verdict,
    pub delta: f64,
    pub grid: usize,
    pub tolerance: f64,
    pub inner: PseudoPolygon,
    pub outer: PseudoPolygon,
    pub orbit_hull: OrbitHull,
    pub hausdorff_outer_inner: f64,
    pub hausdorff_outer_orbit: f64,
    /// Largest distance from an inner vertex to the orbit hull.
    pub inner_excess: f64,
    /// `⌊4/(πδ²)⌋`.
    pub max_vertex_denominator: u64,
    /// For an evidence-stable verdict: the inner polygon with each vertex
    /// replaced by the simplest rational within tolerance whose denominator
    /// respects the bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation_polygon: Option<ConvexPolygon>,
    pub notes: Vec<String>,
}

/// Simplest rational point `(a/q, b/q)` with `q ≤ max_q` within `tol` of `v`.
fn snap(v: [f64; 2], max_q: u64, tol: f64) -> Option<RationalVec2> {
    for q in 1..=max_q.max(1) {
        let qf = q as f64;
        let (a, b) = ((v[0] * qf).round(), (v[1] * qf).round());
        if (a / qf - v[0]).hypot(b / qf - v[1]) <= tol {
            let r = |n: f64| num_rational::BigRational::new(BigInt::from(n as i64), BigInt::from(q));
            return Some(RationalVec2::new(r(a), r(b)));
        }
    }
    None
}

/// Compares the inner and outer δ/2-pseudo-rotation polygons with the orbit
/// hull. Grid step `h = 1/grid` must not exceed δ/2.
pub fn probe_stability(map: &LiftMap, delta: f64, grid: usize) -> Result<StabilityVerdict> {
    probe_stability_with(map, delta, grid, ProbeOptions::default())
}

pub fn probe_stability_with(map: &LiftMap, delta: f64, grid: usize, options: ProbeOptions) -> Result<StabilityVerdict> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    if grid == 0 {
        return Err(Error::InvalidParameter("grid resolution must be ≥ 1".into()));
    }
    let h = 1.0 / grid as f64;
    if h > delta / 2.0 {
        return Err(Error::GridTooCoarse { step: h, delta: delta / 2.0 });
    }
    let half = delta / 2.0;
    let inner = pseudo_rotation_polygon(&build_graph(map, grid, half, Mode::Inner, options.norm)?)?;
    let outer = pseudo_rotation_polygon(&build_graph(map, grid, half, Mode::Outer, options.norm)?)?;
    let orbit = orbit_hull_estimate(map, options.samples, options.orbit_length, options.seed)?;

    let r = options.norm.cell_radius(h);
    let tolerance = options.tolerance.unwrap_or(3.0 * (r + map.modulus(r, options.norm)));
    let h_oi = hausdorff(&outer.polygon, &inner.polygon);
    let h_oo = hausdorff(&outer.polygon, &orbit.polygon);
    let orbit_poly = FloatPolygon::new(&orbit.polygon);
    let inner_excess =
        inner.polygon.float_vertices().into_iter().map(|v| orbit_poly.distance(v, 1.0)).fold(0.0, f64::max);
    let bound = max_vertex_denominator(delta)?;

    let mut notes = Vec::new();
    if !inner.certified || !outer.certified {
        notes.push("a support query was not certified".to_string());
    }
    let slack = tolerance + orbit.error_radius;
    let mut rotation_polygon = None;
    let verdict = if h_oi <= tolerance && h_oo <= slack {
        let snapped: Option<Vec<RationalVec2>> =
            inner.polygon.float_vertices().into_iter().map(|v| snap(v, bound, tolerance)).collect();
        match snapped.map(|s| convex_hull(&s)) {
            Some(Ok(p)) if hausdorff(&p, &outer.polygon) <= tolerance => {
                rotation_polygon = Some(p);
                Verdict::EvidenceStable
            }
            _ => {
                notes.push(format!("vertices are not explained by denominators up to {bound}"));
                Verdict::Inconclusive
            }
        }
    } else if inner_excess > slack {
        notes.push(format!("certified pseudo-orbits reach {inner_excess:.3e} beyond every sampled orbit"));
        Verdict::Unstable
    } else {
        Verdict::Inconclusive
    };
    Ok(StabilityVerdict {
        verdict,
        delta,
        grid,
        tolerance,
        inner,
        outer,
        orbit_hull: orbit,
        hausdorff_outer_inner: h_oi,
        hausdorff_outer_orbit: h_oo,
        inner_excess,
        max_vertex_denominator: bound,
        rotation_polygon,
        notes,
    })
}
