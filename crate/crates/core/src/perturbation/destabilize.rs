use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use super::{c0_move, find_close_pair, pigeonhole_radius, split_vectors, PerturbationPatch};
use crate::error::{Error, Result};
use crate::estimation::{find_periodic_orbit, orbit_points};
use crate::geometry::{format_rational, to_torus, ConvexPolygon, FloatPolygon, RationalVec2};
use crate::torus::LiftMap;

/// Residual required of the periodic orbit of the perturbed map.
const CERTIFICATE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DestabilizeOptions {
    /// Grid resolution of the periodic-orbit search.
    pub search_resolution: usize,
    /// Grid resolution of the sup-distance measurement.
    pub verify_resolution: usize,
}

impl Default for DestabilizeOptions {
    fn default() -> Self {
        Self { search_resolution: 32, verify_resolution: 512 }
    }
}

fn pair_string(v: &RationalVec2) -> String {
    format!("{},{}", format_rational(&v.x), format_rational(&v.y))
}

/// Record of one destabilizing perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    /// `"p1/q,p2/q"`.
    pub vertex: String,
    pub k: u64,
    pub u0: [i64; 2],
    pub v0: String,
    pub v1: String,
    pub chosen: String,
    /// Measured `d_C0` between the original and the perturbed lift.
    pub perturbation_size: f64,
    /// `2/√(πq)`.
    pub budget: f64,
    /// Periodic orbit of the perturbed lift realizing `chosen`, first point
    /// repeated at the end up to the integer translation.
    pub certified_orbit: Vec<[f64; 2]>,
    pub orbit_residual: f64,
    pub close_pair_distance: f64,
    /// Torus point whose image was relocated, and its new image.
    pub relocated: [f64; 2],
    pub relocated_to: [f64; 2],
    /// Residual of the periodic orbit of the original lift.
    pub source_residual: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub conservativity_broken: bool,
}

/// Perturbed lift together with the new rotation vector it realizes.
#[derive(Clone, Debug)]
pub struct Destabilization {
    pub map: LiftMap,
    pub new_vector: RationalVec2,
    pub perturbation_size: f64,
    pub report: PerturbationReport,
}

/// Pushes the rotation set out of `polygon` near the rational extremal
/// point `vertex = (p₁/q, p₂/q)` by a perturbation smaller than `2/√(πq)`.
pub fn destabilize(map: &LiftMap, polygon: &ConvexPolygon, vertex: &RationalVec2) -> Result<Destabilization> {
    destabilize_with(map, polygon, vertex, DestabilizeOptions::default())
}

/// Steps: find a q-periodic orbit realizing the vertex; take its closest
/// pair `(xᵢ, xⱼ)` and re-index the orbit from `xᵢ`, so that
/// `f̃ᵏ(x̃ᵢ) ≈ x̃ᵢ + u0` with `k = j − i`; split `v` into `v0 = u0/k` and
/// `v1 = (q·v − u0)/(q − k)`; close the short cycle realizing whichever of
/// them lies outside the polygon by relocating the image of its last point.
pub fn destabilize_with(
    map: &LiftMap,
    polygon: &ConvexPolygon,
    vertex: &RationalVec2,
    options: DestabilizeOptions,
) -> Result<Destabilization> {
    let (p1, p2, q) = vertex.reduced_form();
    let q = q.to_u64().ok_or_else(|| Error::Overflow(format!("denominator {q} exceeds u64")))?;
    if q < 2 {
        return Err(Error::Precondition(format!(
            "vertex {vertex} has denominator 1; a denominator above 1 is required"
        )));
    }
    if !polygon.vertices().contains(vertex) {
        return Err(Error::Precondition(format!("{vertex} is not a vertex of the polygon")));
    }
    let p = [
        p1.to_i64().ok_or_else(|| Error::Overflow(format!("{p1} exceeds i64")))?,
        p2.to_i64().ok_or_else(|| Error::Overflow(format!("{p2} exceeds i64")))?,
    ];

    let search = find_periodic_orbit(map, vertex, options.search_resolution)?;
    let Some(z) = search.point else {
        return Err(Error::RealizationUnavailable { target: vertex.to_string(), residual: search.residual });
    };
    let orbit = orbit_points(map, z, q);
    let torus: Vec<[f64; 2]> = orbit[..q as usize].iter().map(|&w| to_torus(w)).collect();
    let pair = find_close_pair(&torus)?;
    let (i, j) = (pair.i, pair.j);
    let k = (j - i) as u64;
    let u0 = [(orbit[j][0] - orbit[i][0]).round() as i64, (orbit[j][1] - orbit[i][1]).round() as i64];
    let (v0, v1) = split_vectors(q, vertex, k, u0)?;

    let fp = FloatPolygon::new(polygon);
    let outside = |v: &RationalVec2| (!polygon.contains(v)).then(|| fp.distance(v.to_f64(), 1.0));
    let use_v0 = match (outside(&v0), outside(&v1)) {
        (Some(a), Some(b)) => a >= b,
        (Some(_), None) => true,
        (None, Some(_)) => false,
        (None, None) => return Err(Error::EstimateTooLarge { v0: pair_string(&v0), v1: pair_string(&v1) }),
    };

    // the short cycle, its start, the relocated point and its new image
    let qi = q as usize;
    let (start, len, last, target, shift) = if use_v0 {
        (i, k, j - 1, torus[i], u0)
    } else {
        (j, q - k, (i + qi - 1) % qi, torus[j], [p[0] - u0[0], p[1] - u0[1]])
    };
    let keep: Vec<[f64; 2]> = (0..qi).filter(|&m| m != i && m != j).map(|m| torus[m]).collect();
    let budget = pigeonhole_radius(qi);
    let patch = PerturbationPatch {
        points: vec![torus[last]],
        targets: vec![target],
        epsilon: budget,
        support_radius: None,
        keep,
    };
    let perturbed = c0_move(map, &patch)?;

    let z0 = orbit[start];
    let new_orbit = orbit_points(&perturbed, z0, len);
    let end = new_orbit[len as usize];
    let residual = (end[0] - z0[0] - shift[0] as f64).hypot(end[1] - z0[1] - shift[1] as f64);
    if !(residual < CERTIFICATE_TOLERANCE) {
        return Err(Error::RealizationUnavailable { target: pair_string(if use_v0 { &v0 } else { &v1 }), residual });
    }

    let size = map.c0_distance(&perturbed, options.verify_resolution, &[torus[last]]);
    let new_vector = if use_v0 { v0.clone() } else { v1.clone() };
    let report = PerturbationReport {
        vertex: pair_string(vertex),
        k,
        u0,
        v0: pair_string(&v0),
        v1: pair_string(&v1),
        chosen: pair_string(&new_vector),
        perturbation_size: size,
        budget,
        certified_orbit: new_orbit,
        orbit_residual: residual,
        close_pair_distance: pair.distance,
        relocated: torus[last],
        relocated_to: target,
        source_residual: search.residual,
        conservativity_broken: map.is_conservative(),
    };
    Ok(Destabilization { map: perturbed, new_vector, perturbation_size: size, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::birkhoff_vector;
    use crate::torus::PinnedParams;

    fn segment(p: i64, q: i64) -> ConvexPolygon {
        ConvexPolygon::from_vertices(vec![RationalVec2::zero(), RationalVec2::from_ratios(p, q, 0, 1)]).unwrap()
    }

    #[test]
    fn pinned_half_turn_vertex_escapes() {
        let m = LiftMap::pinned(PinnedParams::new(1, 2, 0.9, 0.9).unwrap());
        let poly = segment(1, 2);
        let v = RationalVec2::from_ratios(1, 2, 0, 1);
        let d = destabilize(&m, &poly, &v).unwrap();
        assert!(!poly.contains(&d.new_vector));
        assert!(d.new_vector == RationalVec2::zero() || d.new_vector == RationalVec2::from_ints(1, 0));
        assert!(d.perturbation_size < 2.0 / (2.0 * std::f64::consts::PI).sqrt());
        assert!(d.report.orbit_residual < 1e-9);
        let z = d.report.certified_orbit[0];
        let w = birkhoff_vector(&d.map, z, d.report.certified_orbit.len() as u64 - 1).unwrap();
        let nv = d.new_vector.to_f64();
        assert!((w[0] - nv[0]).abs() < 1e-9 && (w[1] - nv[1]).abs() < 1e-9);
    }

    #[test]
    fn period_five_vertex_escapes() {
        let m = LiftMap::pinned(PinnedParams::new(2, 5, 0.9, 0.9).unwrap());
        let poly = segment(2, 5);
        let d = destabilize(&m, &poly, &RationalVec2::from_ratios(2, 5, 0, 1)).unwrap();
        assert!(!poly.contains(&d.new_vector));
        assert!(d.perturbation_size < 2.0 / (5.0 * std::f64::consts::PI).sqrt());
        let n = d.report.certified_orbit.len() - 1;
        let (a, b) = (d.report.certified_orbit[0], d.report.certified_orbit[n]);
        let nv = d.new_vector.to_f64();
        assert!(((b[0] - a[0]) / n as f64 - nv[0]).abs() < 1e-9 && ((b[1] - a[1]) / n as f64 - nv[1]).abs() < 1e-9);
        let json = serde_json::to_value(&d.report).unwrap();
        for key in ["vertex", "k", "u0", "v0", "v1", "chosen", "perturbation_size", "budget", "certified_orbit"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["vertex"], "2/5,0/1");
    }

    #[test]
    fn denominator_one_is_rejected() {
        let m = LiftMap::pinned(PinnedParams::new(1, 2, 0.9, 0.9).unwrap());
        let r = destabilize(&m, &segment(1, 2), &RationalVec2::zero());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn missing_orbit_is_reported() {
        let m = LiftMap::translation(0.3, 0.0);
        let poly = segment(1, 2);
        let r = destabilize(&m, &poly, &RationalVec2::from_ratios(1, 2, 0, 1));
        assert!(matches!(r, Err(Error::RealizationUnavailable { .. })));
    }
}
