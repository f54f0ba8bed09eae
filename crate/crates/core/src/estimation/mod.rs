//! Orbit-based and measure-based estimates of the rotation set.

mod periodic;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use periodic::{find_periodic_orbit, find_periodic_orbit_with, orbit_points, PeriodicSearch, DEFAULT_TOLERANCE};

use crate::error::{Error, Result};
use crate::geometry::{convex_hull, to_torus, ConvexPolygon, Norm, RationalVec2};
use crate::torus::LiftMap;

/// Resolution of the grid used to bound `sup ‖φ‖` for error radii.
const SUP_RESOLUTION: usize = 256;

/// Compensated (Neumaier) running sum of plane vectors.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct VecSum {
    sum: [f64; 2],
    comp: [f64; 2],
}

impl VecSum {
    #[inline]
    pub(crate) fn add(&mut self, v: [f64; 2]) {
        for k in 0..2 {
            let t = self.sum[k] + v[k];
            if self.sum[k].abs() >= v[k].abs() {
                self.comp[k] += (self.sum[k] - t) + v[k];
            } else {
                self.comp[k] += (v[k] - t) + self.sum[k];
            }
            self.sum[k] = t;
        }
    }

    pub(crate) fn value(&self) -> [f64; 2] {
        [self.sum[0] + self.comp[0], self.sum[1] + self.comp[1]]
    }
}

/// Total displacement `f̃ⁿ(z) − z`.
///
/// The orbit is tracked on the fundamental domain and the displacements
/// are summed with compensation, so precision does not degrade as the
/// lifted orbit drifts away from the origin.
pub fn total_displacement(map: &LiftMap, z: [f64; 2], n: u64) -> [f64; 2] {
    let mut w = to_torus(z);
    let mut acc = VecSum::default();
    for _ in 0..n {
        let d = map.phi(w);
        acc.add(d);
        w = to_torus([w[0] + d[0], w[1] + d[1]]);
    }
    acc.value()
}

/// `(f̃ⁿ(z) − z)/n`.
pub fn birkhoff_vector(map: &LiftMap, z: [f64; 2], n: u64) -> Result<[f64; 2]> {
    if n == 0 {
        return Err(Error::InvalidParameter("orbit length must be ≥ 1".into()));
    }
    let s = total_displacement(map, z, n);
    Ok([s[0] / n as f64, s[1] / n as f64])
}

/// A finite-time rotation vector with its error radius `2·sup‖φ‖/n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitEstimate {
    pub base: [f64; 2],
    pub n: u64,
    pub vector: [f64; 2],
    pub error_radius: f64,
}

/// Birkhoff vector of one orbit; `sup_phi` is a bound on `sup ‖φ‖`.
pub fn orbit_estimate(map: &LiftMap, z: [f64; 2], n: u64, sup_phi: f64) -> Result<OrbitEstimate> {
    let vector = birkhoff_vector(map, z, n)?;
    Ok(OrbitEstimate { base: z, n, vector, error_radius: 2.0 * sup_phi / n as f64 })
}

/// Midpoint-rule value of `∫ φ dλ` with its error bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LebesgueEstimate {
    pub resolution: usize,
    pub vector: [f64; 2],
    /// `ω_φ` of the cell radius.
    pub error_bound: f64,
}

/// Mean displacement over Lebesgue measure: the rotation vector of λ when λ
/// is invariant, and in any case a point of the rotation set of every map
/// whose invariant measures average to it.
pub fn lebesgue_rotation_vector(map: &LiftMap, resolution: usize) -> Result<LebesgueEstimate> {
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!("quadrature resolution must be ≥ 2, got {resolution}")));
    }
    let m = resolution;
    let h = 1.0 / m as f64;
    let rows: Vec<VecSum> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut acc = VecSum::default();
            let y = (j as f64 + 0.5) * h;
            for i in 0..m {
                acc.add(map.phi([(i as f64 + 0.5) * h, y]));
            }
            acc
        })
        .collect();
    let mut total = VecSum::default();
    for r in &rows {
        total.add(r.sum);
        total.add(r.comp);
    }
    let s = total.value();
    let cells = (m * m) as f64;
    Ok(LebesgueEstimate {
        resolution: m,
        vector: [s[0] / cells, s[1] / cells],
        error_bound: map.phi_modulus(Norm::Euclidean.cell_radius(h)),
    })
}

/// Hull of sampled Birkhoff vectors: an inner estimate of the rotation set
/// up to `error_radius`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitHull {
    pub polygon: ConvexPolygon,
    pub error_radius: f64,
    pub seed: u64,
    pub samples: Vec<OrbitEstimate>,
}

fn reverse_base4(mut k: u64, digits: u32) -> (u64, u64) {
    let (mut x, mut y) = (0u64, 0u64);
    for _ in 0..digits {
        x = (x << 1) | (k & 1);
        y = (y << 1) | ((k >> 1) & 1);
        k >>= 2;
    }
    (x, y)
}

const SAMPLE_DIGITS: u32 = 26;

/// Base point of sample `k`.
///
/// For every `m`, samples `0..4ᵐ` occupy distinct cells of a `2ᵐ × 2ᵐ`
/// grid: the cell comes from reversing the base-4 digits of `k`. The whole
/// pattern is translated by a seeded offset and each point is jittered
/// inside its finest cell by a generator keyed by `(seed, k)`, so a sample
/// does not depend on how many others are drawn.
pub fn sample_point(seed: u64, k: u64) -> [f64; 2] {
    let (cx, cy) = reverse_base4(k, SAMPLE_DIGITS);
    let side = (1u64 << SAMPLE_DIGITS) as f64;
    let mut offset = ChaCha8Rng::seed_from_u64(seed);
    let (ox, oy): (f64, f64) = (offset.gen(), offset.gen());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k + 1);
    let (u, v): (f64, f64) = (rng.gen(), rng.gen());
    to_torus([(cx as f64 + u) / side + ox, (cy as f64 + v) / side + oy])
}

/// Convex hull of `samples` Birkhoff vectors of length `n`.
///
/// Growing `samples` with the same seed only adds points, so the hull is
/// monotone in the sample count.
pub fn orbit_hull_estimate(map: &LiftMap, samples: usize, n: u64, seed: u64) -> Result<OrbitHull> {
    if samples == 0 {
        return Err(Error::InvalidParameter("sample count must be ≥ 1".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("orbit length must be ≥ 1".into()));
    }
    let sup = map.sup_phi(SUP_RESOLUTION);
    let estimates: Vec<OrbitEstimate> = (0..samples as u64)
        .into_par_iter()
        .map(|k| orbit_estimate(map, sample_point(seed, k), n, sup))
        .collect::<Result<_>>()?;
    let pts = estimates.iter().map(|e| RationalVec2::from_f64(e.vector)).collect::<Result<Vec<_>>>()?;
    Ok(OrbitHull { polygon: convex_hull(&pts)?, error_radius: 2.0 * sup / n as f64, seed, samples: estimates })
}

/// Writes samples as CSV with columns `z0x,z0y,n,vx,vy,err_radius`.
pub fn write_birkhoff_csv<W: Write>(mut out: W, samples: &[OrbitEstimate]) -> Result<()> {
    writeln!(out, "z0x,z0y,n,vx,vy,err_radius")?;
    for s in samples {
        writeln!(out, "{},{},{},{},{},{}", s.base[0], s.base[1], s.n, s.vector[0], s.vector[1], s.error_radius)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::PinnedParams;
    use proptest::prelude::*;

    #[test]
    fn translation_vector_is_exact_for_dyadic_steps() {
        let t = LiftMap::translation(0.25, -0.5);
        for n in [1, 7, 1000] {
            assert_eq!(birkhoff_vector(&t, [0.3, 0.9], n).unwrap(), [0.25, -0.5]);
        }
        let t = LiftMap::translation(0.1, 0.7);
        let v = birkhoff_vector(&t, [0.0, 0.0], 100_000).unwrap();
        assert!((v[0] - 0.1).abs() < 1e-15 && (v[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn periodic_point_gives_its_rotation_vector() {
        let m = LiftMap::pinned(PinnedParams::new(1, 3, 0.9, 0.9).unwrap());
        let v = birkhoff_vector(&m, [0.0, 0.5], 3).unwrap();
        assert!((v[0] - 1.0 / 3.0).abs() < 1e-15 && v[1].abs() < 1e-15, "{v:?}");
    }

    #[test]
    fn zero_length_is_rejected() {
        assert!(birkhoff_vector(&LiftMap::identity(), [0.0, 0.0], 0).is_err());
    }

    #[test]
    fn doubling_the_length_moves_by_the_telescoping_bound() {
        let m = LiftMap::coupled_shear(0.1, -0.2, 0.3, 0.2);
        let osc = m.osc().certified_bound;
        for k in 0..4 {
            let z = sample_point(7, k);
            let a = birkhoff_vector(&m, z, 100_000).unwrap();
            let b = birkhoff_vector(&m, z, 200_000).unwrap();
            let d = (a[0] - b[0]).hypot(a[1] - b[1]);
            assert!(d <= 2.0 * osc * (1e-5 + 0.5e-5), "{d}");
        }
    }

    #[test]
    fn shifting_the_base_point_along_the_orbit() {
        let m = LiftMap::coupled_shear(0.0, 0.0, 0.4, 0.3);
        let sup = m.sup_phi(256);
        for (k, n) in [(0, 10), (1, 100), (2, 1000)] {
            let z = sample_point(3, k);
            let a = birkhoff_vector(&m, z, n).unwrap();
            let b = birkhoff_vector(&m, m.eval(z), n).unwrap();
            assert!((a[0] - b[0]).hypot(a[1] - b[1]) <= 2.0 * sup * 2.0 / n as f64);
        }
    }

    #[test]
    fn lebesgue_examples() {
        let t = LiftMap::translation(0.25, 0.5);
        let e = lebesgue_rotation_vector(&t, 16).unwrap();
        assert_eq!(e.vector, [0.25, 0.5]);
        assert_eq!(e.error_bound, 0.0);
        let s = LiftMap::coupled_shear(0.0, 0.0, 0.3, 0.2);
        let e = lebesgue_rotation_vector(&s, 64).unwrap();
        assert!(e.vector[0].abs() < 1e-15 && e.vector[1].abs() < 1e-15, "{:?}", e.vector);
        let r = lebesgue_rotation_vector(&s.compose_rotation([0.125, -0.375]), 64).unwrap();
        assert!((r.vector[0] - e.vector[0] - 0.125).abs() < 1e-15);
        assert!((r.vector[1] - e.vector[1] + 0.375).abs() < 1e-15);
        assert!(lebesgue_rotation_vector(&s, 1).is_err());
    }

    #[test]
    fn lebesgue_bound_covers_a_fine_reference() {
        let m = LiftMap::pinned(PinnedParams::new(1, 2, 0.9, 0.9).unwrap());
        let fine = lebesgue_rotation_vector(&m, 2048).unwrap();
        for res in [4, 16, 64] {
            let e = lebesgue_rotation_vector(&m, res).unwrap();
            let d = (e.vector[0] - fine.vector[0]).hypot(e.vector[1] - fine.vector[1]);
            assert!(d <= e.error_bound + fine.error_bound, "res {res}: {d} vs {}", e.error_bound);
        }
    }

    #[test]
    fn samples_are_stratified() {
        let mut cells: Vec<(u64, u64)> = (0..64)
            .map(|k| {
                let p = sample_point(11, k);
                assert!((0.0..1.0).contains(&p[0]) && (0.0..1.0).contains(&p[1]));
                // cells of the grid translated with the pattern
                let o = sample_point(11, 0);
                let c = to_torus([p[0] - o[0] + 0.125, p[1] - o[1] + 0.125]);
                ((c[0] * 4.0) as u64, (c[1] * 4.0) as u64)
            })
            .take(16)
            .collect();
        cells.sort();
        cells.dedup();
        assert_eq!(cells.len(), 16);
        assert_eq!(sample_point(11, 5), sample_point(11, 5));
        assert_ne!(sample_point(11, 5), sample_point(12, 5));
    }

    #[test]
    fn translation_hull_is_a_point() {
        let h = orbit_hull_estimate(&LiftMap::translation(0.25, 0.5), 10, 50, 1).unwrap();
        assert!(h.polygon.is_point());
        assert_eq!(h.polygon.vertices()[0], RationalVec2::from_ratios(1, 4, 1, 2));
    }

    #[test]
    fn pinned_hull_spans_both_orbits() {
        let m = LiftMap::pinned(PinnedParams::new(1, 2, 0.9, 0.9).unwrap());
        let h = orbit_hull_estimate(&m, 64, 2000, 5).unwrap();
        let fp = crate::geometry::FloatPolygon::new(&h.polygon);
        for v in [[0.0, 0.0], [0.5, 0.0]] {
            assert!(fp.distance(v, 1.0) <= h.error_radius, "{v:?} missed, radius {}", h.error_radius);
        }
    }

    #[test]
    fn csv_layout() {
        let s = OrbitEstimate { base: [0.5, 0.25], n: 10, vector: [0.1, -0.2], error_radius: 0.02 };
        let mut buf = Vec::new();
        write_birkhoff_csv(&mut buf, &[s]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "z0x,z0y,n,vx,vy,err_radius\n0.5,0.25,10,0.1,-0.2,0.02\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn hull_grows_with_the_sample_count(seed in 0u64..1000, s in 1usize..24) {
            let m = LiftMap::coupled_shear(0.0, 0.0, 0.3, 0.2);
            let a = orbit_hull_estimate(&m, s, 200, seed).unwrap();
            let b = orbit_hull_estimate(&m, s + 5, 200, seed).unwrap();
            prop_assert!(b.polygon.contains_polygon(&a.polygon));
        }

        #[test]
        fn recomputation_is_bit_identical(x in 0.0f64..1.0, y in 0.0f64..1.0, n in 1u64..500) {
            let m = LiftMap::coupled_shear(0.1, 0.0, 0.3, 0.2);
            prop_assert_eq!(birkhoff_vector(&m, [x, y], n).unwrap(), birkhoff_vector(&m, [x, y], n).unwrap());
        }
    }
}
