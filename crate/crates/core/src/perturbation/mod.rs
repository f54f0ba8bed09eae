//! C0 relocation patches, the destabilizing construction for rational
//! extremal points, and the stability probe.

mod destabilize;
mod probe;

use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Serialize};

pub use destabilize::{destabilize, destabilize_with, Destabilization, DestabilizeOptions, PerturbationReport};
pub use probe::{probe_stability, probe_stability_with, ProbeOptions, StabilityVerdict, Verdict};

use crate::error::{Error, Result};
use crate::geometry::{to_torus, torus_delta, Norm, RationalVec2};
use crate::torus::{Bump, LiftMap};

/// Cap on bump margins; keeps every support inside one fundamental domain
/// around its segment.
const MAX_SUPPORT_RADIUS: f64 = 0.15;

/// Finite relocation `x ↦ σ(x)` for `x ∈ E`, to be realized by a map
/// ε-close to the original one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPatch {
    /// The set `E`, as torus points.
    pub points: Vec<[f64; 2]>,
    /// `σ(x)` for each point of `E`, as torus points.
    pub targets: Vec<[f64; 2]>,
    pub epsilon: f64,
    /// Upper bound on bump margins; `None` picks them automatically.
    #[serde(default)]
    pub support_radius: Option<f64>,
    /// Torus points that every bump support must avoid.
    #[serde(default)]
    pub keep: Vec<[f64; 2]>,
}

impl PerturbationPatch {
    pub fn new(points: Vec<[f64; 2]>, targets: Vec<[f64; 2]>, epsilon: f64) -> Self {
        Self { points, targets, epsilon, support_radius: None, keep: Vec::new() }
    }
}

fn same_torus_point(a: [f64; 2], b: [f64; 2]) -> bool {
    to_torus(a) == to_torus(b)
}

fn point_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 { ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p[0] - a[0] - t * ab[0]).hypot(p[1] - a[1] - t * ab[1])
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let orient = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Distance between the projections of two short segments of R² to T².
fn torus_segment_distance(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> f64 {
    let mut best = f64::INFINITY;
    let base = [c[0] - a[0] - (c[0] - a[0]).round(), c[1] - a[1] - (c[1] - a[1]).round()];
    for sx in -1..=1 {
        for sy in -1..=1 {
            let c2 = [a[0] + base[0] + sx as f64, a[1] + base[1] + sy as f64];
            let d2 = [c2[0] + d[0] - c[0], c2[1] + d[1] - c[1]];
            let dist = if segments_cross(a, b, c2, d2) {
                0.0
            } else {
                point_segment(a, c2, d2)
                    .min(point_segment(b, c2, d2))
                    .min(point_segment(c2, a, b))
                    .min(point_segment(d2, a, b))
            };
            best = best.min(dist);
        }
    }
    best
}

/// Bumps realizing a patch against `map`, one per point of `E`.
///
/// Bump `i` slides `f(xᵢ)` to `σ(xᵢ)` with margins
/// `rᵢ = min(ε − d(f(xᵢ), σ(xᵢ)), gapᵢ / (2√2)) / 2`, where `gapᵢ` is the
/// distance from its segment to the other segments and to the protected
/// points. The supports lie within `√2·rᵢ` of the segments and are
/// therefore pairwise disjoint.
pub fn plan_bumps(map: &LiftMap, patch: &PerturbationPatch) -> Result<Vec<Bump>> {
    if patch.points.len() != patch.targets.len() {
        return Err(Error::InvalidParameter(format!(
            "patch has {} points but {} targets",
            patch.points.len(),
            patch.targets.len()
        )));
    }
    if !(patch.epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", patch.epsilon)));
    }
    let m = patch.points.len();
    for i in 0..m {
        for j in i + 1..m {
            if same_torus_point(patch.points[i], patch.points[j]) {
                return Err(Error::InvalidParameter(format!("patch point {i} is repeated at {j}")));
            }
            if same_torus_point(patch.targets[i], patch.targets[j]) {
                return Err(Error::NotInjective);
            }
        }
    }
    let anchors: Vec<[f64; 2]> = patch.points.iter().map(|&x| map.eval(to_torus(x))).collect();
    let ends: Vec<[f64; 2]> = anchors
        .iter()
        .zip(&patch.targets)
        .map(|(a, t)| {
            let d = torus_delta(*a, *t);
            [a[0] + d[0], a[1] + d[1]]
        })
        .collect();
    let mut bumps = Vec::with_capacity(m);
    for i in 0..m {
        let len = Norm::Euclidean.torus_dist(anchors[i], patch.targets[i]);
        if len >= patch.epsilon {
            return Err(Error::PatchInfeasible(format!(
                "relocation {i} moves by {len}, not below epsilon {}",
                patch.epsilon
            )));
        }
        if len == 0.0 {
            bumps.push(Bump::new(anchors[i], anchors[i], 1.0, 1.0, 1.0));
            continue;
        }
        let mut gap = f64::INFINITY;
        for j in (0..m).filter(|&j| j != i) {
            gap = gap.min(torus_segment_distance(anchors[i], ends[i], anchors[j], ends[j]));
        }
        for &k in &patch.keep {
            let k = [anchors[i][0] + torus_delta(anchors[i], k)[0], anchors[i][1] + torus_delta(anchors[i], k)[1]];
            gap = gap.min(torus_segment_distance(anchors[i], ends[i], k, k));
        }
        let mut r = 0.5 * (patch.epsilon - len).min(gap / (2.0 * std::f64::consts::SQRT_2));
        r = r.min(MAX_SUPPORT_RADIUS);
        if let Some(cap) = patch.support_radius {
            r = r.min(cap);
        }
        if !(r > 0.0) {
            return Err(Error::PatchInfeasible(format!("no room for the support of relocation {i}")));
        }
        bumps.push(Bump::new(anchors[i], patch.targets[i], r, r, r));
    }
    Ok(bumps)
}

/// `g = B_m ∘ … ∘ B_1 ∘ f` with `g(x) = σ(x)` on `E` and `d_C0(f, g) < ε`.
///
/// A conservative flag on `map` is dropped unless every relocation is
/// trivial: the bumps do not preserve area.
pub fn c0_move(map: &LiftMap, patch: &PerturbationPatch) -> Result<LiftMap> {
    let bumps: Vec<Bump> = plan_bumps(map, patch)?.into_iter().filter(|b| b.displacement() > 0.0).collect();
    if bumps.is_empty() {
        return Ok(map.clone());
    }
    Ok(LiftMap::with_bumps(map, bumps).with_conservative(false))
}

/// Closest pair of a finite set of torus points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosePair {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
}

/// Pigeonhole radius: any `q` points of T² contain two at distance below
/// `2/√(πq)`.
pub fn pigeonhole_radius(q: usize) -> f64 {
    2.0 / (std::f64::consts::PI * q as f64).sqrt()
}

/// Pair `i < j` minimizing the toroidal distance (first such pair in
/// lexicographic order on ties).
pub fn find_close_pair(points: &[[f64; 2]]) -> Result<ClosePair> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 points, got {}", points.len())));
    }
    let mut best = ClosePair { i: 0, j: 1, distance: f64::INFINITY };
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = Norm::Euclidean.torus_dist(points[i], points[j]);
            if d < best.distance {
                best = ClosePair { i, j, distance: d };
            }
        }
    }
    Ok(best)
}

/// `v0 = u0/k` and `v1 = (q·v − u0)/(q − k)`, so that
/// `k·v0 + (q − k)·v1 = q·v`.
pub fn split_vectors(q: u64, v: &RationalVec2, k: u64, u0: [i64; 2]) -> Result<(RationalVec2, RationalVec2)> {
    if q < 2 {
        return Err(Error::Precondition(format!("denominator must exceed 1, got {q}")));
    }
    if k == 0 || k >= q {
        return Err(Error::InvalidParameter(format!("k must lie in 1..={}, got {k}", q - 1)));
    }
    if v.common_denominator() != q.into() {
        return Err(Error::CoprimalityViolated(format!("{v} does not have reduced denominator {q}")));
    }
    let u = RationalVec2::from_ints(u0[0], u0[1]);
    let kr = BigRational::from_integer(k.into());
    let inv = |r: &BigRational| BigRational::one() / r;
    let v0 = u.scale(&inv(&kr));
    let qr = BigRational::from_integer(q.into());
    let v1 = v.scale(&qr).sub(&u).scale(&inv(&(qr - &kr)));
    if v0 == *v || v1 == *v {
        return Err(Error::CoprimalityViolated(format!("split of {v} at k = {k} returns v itself")));
    }
    Ok((v0, v1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ratio;
    use crate::torus::MapFamily;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trivial_relocation_leaves_the_map_alone() {
        let f = LiftMap::shear(0.2);
        let p = [0.3, 0.4];
        let img = to_torus(f.eval(p));
        let g = c0_move(&f, &PerturbationPatch::new(vec![p], vec![img], 0.1)).unwrap();
        for z in [[0.1, 0.2], [0.3, 0.4], [0.9, 0.05]] {
            assert_eq!(g.eval(z), f.eval(z));
        }
    }

    #[test]
    fn identity_moved_at_one_point() {
        let f = LiftMap::identity();
        let p = [0.5, 0.5];
        let g = c0_move(&f, &PerturbationPatch::new(vec![p], vec![[0.55, 0.5]], 0.1)).unwrap();
        assert_eq!(g.eval(p), [0.55, 0.5]);
        let d = f.c0_distance(&g, 400, &[p]);
        assert!(d <= 0.05 + 1e-12, "{d}");
        // bijective on the support: the inverse bumps undo it
        let MapFamily::Perturbed { bumps, .. } = g.family() else { panic!("not perturbed") };
        for k in 0..400 {
            let z = [0.4 + 0.2 * (k % 20) as f64 / 20.0, 0.4 + 0.2 * (k / 20) as f64 / 20.0];
            let w = bumps[0].apply_inverse(g.eval(z));
            assert!((w[0] - z[0]).abs() < 1e-12 && (w[1] - z[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn relocations_hit_their_targets_exactly() {
        let f = LiftMap::coupled_shear(0.1, 0.0, 0.2, 0.1);
        let pts = vec![[0.1, 0.1], [0.6, 0.2], [0.3, 0.8]];
        let targets: Vec<[f64; 2]> =
            pts.iter().map(|&p| to_torus(f.eval(p))).map(|t| to_torus([t[0] + 0.03, t[1] - 0.02])).collect();
        let g = c0_move(&f, &PerturbationPatch::new(pts.clone(), targets.clone(), 0.05)).unwrap();
        for (p, t) in pts.iter().zip(&targets) {
            let w = g.eval(*p);
            assert!(Norm::Euclidean.torus_dist(w, *t) < 1e-15, "{w:?} vs {t:?}");
        }
        assert!(f.c0_distance(&g, 300, &pts) < 0.05);
    }

    #[test]
    fn patch_errors() {
        let f = LiftMap::identity();
        let far = PerturbationPatch::new(vec![[0.5, 0.5]], vec![[0.7, 0.5]], 0.1);
        assert!(matches!(c0_move(&f, &far), Err(Error::PatchInfeasible(_))));
        let clash = PerturbationPatch::new(vec![[0.1, 0.1], [0.2, 0.2]], vec![[0.15, 0.1], [0.15, 0.1]], 0.1);
        assert!(matches!(c0_move(&f, &clash), Err(Error::NotInjective)));
        let crossing = PerturbationPatch::new(vec![[0.1, 0.1], [0.1, 0.15]], vec![[0.1, 0.15], [0.1, 0.1]], 0.1);
        assert!(matches!(c0_move(&f, &crossing), Err(Error::PatchInfeasible(_))));
    }

    #[test]
    fn conservative_flag_is_dropped() {
        let f = LiftMap::translation(0.1, 0.2);
        assert!(f.is_conservative());
        let g = c0_move(&f, &PerturbationPatch::new(vec![[0.5, 0.5]], vec![[0.62, 0.7]], 0.1)).unwrap();
        assert!(!g.is_conservative());
    }

    #[test]
    fn close_pair_examples() {
        let ring: Vec<[f64; 2]> = (0..5).map(|i| [i as f64 / 5.0, 0.0]).collect();
        let c = find_close_pair(&ring).unwrap();
        assert!((c.distance - 0.2).abs() < 1e-15 && c.distance < pigeonhole_radius(5));
        let c = find_close_pair(&[[0.0, 0.0], [0.5, 0.5]]).unwrap();
        assert!((c.distance - 0.5f64.sqrt()).abs() < 1e-15 && c.distance < pigeonhole_radius(2));
        assert!((pigeonhole_radius(2) - 0.7979).abs() < 1e-4);
        assert!((pigeonhole_radius(5) - 0.5046).abs() < 1e-4);
        assert!(find_close_pair(&[[0.0, 0.0]]).is_err());
    }

    #[test]
    fn close_pair_beats_the_pigeonhole_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for q in 2..=50 {
            for _ in 0..200 {
                let pts: Vec<[f64; 2]> = (0..q).map(|_| [rng.gen(), rng.gen()]).collect();
                let c = find_close_pair(&pts).unwrap();
                let brute = (0..q)
                    .flat_map(|i| (0..q).filter(move |&j| j != i).map(move |j| (i, j)))
                    .map(|(i, j)| Norm::Euclidean.torus_dist(pts[i], pts[j]))
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(c.distance, brute);
                assert!(c.i < c.j && c.distance < pigeonhole_radius(q));
            }
        }
    }

    #[test]
    fn split_examples() {
        let (v0, v1) = split_vectors(2, &RationalVec2::from_ratios(1, 2, 1, 2), 1, [0, 0]).unwrap();
        assert_eq!((v0, v1), (RationalVec2::from_ints(0, 0), RationalVec2::from_ints(1, 1)));
        let (v0, v1) = split_vectors(3, &RationalVec2::from_ratios(1, 3, 0, 1), 1, [1, 0]).unwrap();
        assert_eq!((v0, v1), (RationalVec2::from_ints(1, 0), RationalVec2::from_ints(0, 0)));
        let v = RationalVec2::from_ratios(2, 5, 1, 5);
        let (v0, v1) = split_vectors(5, &v, 2, [1, 1]).unwrap();
        assert_eq!(v0, RationalVec2::new(ratio(1, 2), ratio(1, 2)));
        assert_eq!(v1, RationalVec2::new(ratio(1, 3), ratio(0, 1)));
    }

    #[test]
    fn split_errors() {
        let v = RationalVec2::from_ratios(1, 3, 0, 1);
        assert!(matches!(split_vectors(3, &v, 0, [0, 0]), Err(Error::InvalidParameter(_))));
        assert!(matches!(split_vectors(3, &v, 3, [0, 0]), Err(Error::InvalidParameter(_))));
        assert!(matches!(split_vectors(1, &RationalVec2::zero(), 1, [0, 0]), Err(Error::Precondition(_))));
        let not_reduced = RationalVec2::from_ratios(1, 2, 0, 1);
        assert!(matches!(split_vectors(4, &not_reduced, 1, [0, 0]), Err(Error::CoprimalityViolated(_))));
    }

    proptest! {
        #[test]
        fn split_identity(p1 in -6i64..6, p2 in -6i64..6, q in 2u64..9, kk in 0u64..100, a in -3i64..=3, b in -3i64..=3) {
            let v = RationalVec2::from_ratios(p1, q as i64, p2, q as i64);
            prop_assume!(v.common_denominator() == q.into());
            let k = 1 + kk % (q - 1);
            let (v0, v1) = split_vectors(q, &v, k, [a, b]).unwrap();
            let lhs = v0.scale(&BigRational::from_integer(k.into())).add(&v1.scale(&BigRational::from_integer((q - k).into())));
            prop_assert_eq!(lhs, v.scale(&BigRational::from_integer(q.into())));
            prop_assert!(v0 != v && v1 != v);
        }
    }
}
