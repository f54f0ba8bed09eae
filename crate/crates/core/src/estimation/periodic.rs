//! Numerical search for periodic orbits with a prescribed rotation vector.

use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RationalVec2;
use crate::torus::LiftMap;

/// Residual below which a point counts as periodic.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

const CANDIDATES: usize = 24;
const CONTRACTION_STEPS: usize = 400;

/// Outcome of a search for `z` with `f̃^q(z) = z + (p₁, p₂)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSearch {
    pub target: RationalVec2,
    pub period: u64,
    pub translation: [i64; 2],
    /// `None` when no point reached the tolerance.
    pub point: Option<[f64; 2]>,
    /// Smallest residual `‖f̃^q(z) − z − (p₁,p₂)‖` found.
    pub residual: f64,
    pub tolerance: f64,
}

struct Target {
    q: u64,
    p: [i64; 2],
}

impl Target {
    fn new(v: &RationalVec2) -> Result<Self> {
        let (p1, p2, q) = v.reduced_form();
        let conv = |x: &num_bigint::BigInt| {
            x.to_i64().ok_or_else(|| Error::Overflow(format!("rotation vector component {x} exceeds i64")))
        };
        let q = conv(&q)?;
        Ok(Target { q: q as u64, p: [conv(&p1)?, conv(&p2)?] })
    }

    fn residual(&self, map: &LiftMap, z: [f64; 2]) -> f64 {
        let w = map.iterate(z, self.q);
        (w[0] - z[0] - self.p[0] as f64).hypot(w[1] - z[1] - self.p[1] as f64)
    }

    /// `f̃^q(z) − (p₁,p₂)`: a point periodic for the target is a fixed point.
    fn step(&self, map: &LiftMap, z: [f64; 2]) -> [f64; 2] {
        let w = map.iterate(z, self.q);
        [w[0] - self.p[0] as f64, w[1] - self.p[1] as f64]
    }
}

/// The orbit `z, f̃(z), …, f̃^q(z)` of a found point.
pub fn orbit_points(map: &LiftMap, z: [f64; 2], q: u64) -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(q as usize + 1);
    let mut w = z;
    pts.push(w);
    for _ in 0..q {
        w = map.eval(w);
        pts.push(w);
    }
    pts
}

/// Looks for a point of period `q` realizing `target = (p₁/q, p₂/q)`, with
/// the default tolerance.
pub fn find_periodic_orbit(map: &LiftMap, target: &RationalVec2, resolution: usize) -> Result<PeriodicSearch> {
    find_periodic_orbit_with(map, target, resolution, DEFAULT_TOLERANCE)
}

/// Grid scan of the residual over `[0,1)²`, then refinement of the best
/// candidates: iteration of `z ↦ f̃^q(z) − (p₁,p₂)` while it lowers the
/// residual, followed by a shrinking compass search. No derivatives are
/// used.
pub fn find_periodic_orbit_with(
    map: &LiftMap,
    target: &RationalVec2,
    resolution: usize,
    tolerance: f64,
) -> Result<PeriodicSearch> {
    if resolution == 0 {
        return Err(Error::InvalidParameter("search resolution must be ≥ 1".into()));
    }
    let t = Target::new(target)?;
    let h = 1.0 / resolution as f64;
    let grid: Vec<(f64, usize)> = (0..resolution * resolution)
        .into_par_iter()
        .map(|k| (t.residual(map, [(k % resolution) as f64 * h, (k / resolution) as f64 * h]), k))
        .collect();
    let at = |k: usize| [(k % resolution) as f64 * h, (k / resolution) as f64 * h];
    let report = |point: Option<[f64; 2]>, residual: f64| PeriodicSearch {
        target: target.clone(),
        period: t.q,
        translation: t.p,
        point,
        residual,
        tolerance,
    };
    if let Some(&(r, k)) = grid.iter().find(|(r, _)| *r < tolerance) {
        return Ok(report(Some(at(k)), r));
    }

    let mut order: Vec<(f64, usize)> = grid.into_iter().filter(|(r, _)| r.is_finite()).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.truncate(CANDIDATES);
    let refined: Vec<([f64; 2], f64)> =
        order.par_iter().map(|&(r, k)| refine(map, &t, at(k), r, h, tolerance)).collect();
    let (z, r) = refined
        .into_iter()
        .fold(None, |best: Option<([f64; 2], f64)>, c| match best {
            Some(b) if b.1 <= c.1 => Some(b),
            _ => Some(c),
        })
        .ok_or(Error::NonFinite(f64::NAN, f64::NAN))?;
    Ok(report((r < tolerance).then_some(z), r))
}

fn refine(map: &LiftMap, t: &Target, start: [f64; 2], r0: f64, h: f64, tolerance: f64) -> ([f64; 2], f64) {
    let goal = tolerance * 1e-3;
    let (mut best, mut best_r) = (start, r0);

    let mut z = start;
    for _ in 0..CONTRACTION_STEPS {
        z = t.step(map, z);
        let r = t.residual(map, z);
        if !r.is_finite() {
            break;
        }
        if r < best_r {
            best = z;
            best_r = r;
        }
        if best_r < goal {
            return (best, best_r);
        }
        if r > 4.0 * best_r {
            break;
        }
    }

    let mut step = h;
    const DIRS: [[f64; 2]; 8] =
        [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
    while step > 1e-15 * (1.0 + best[0].abs().max(best[1].abs())) && best_r >= goal {
        let mut moved = false;
        for d in DIRS {
            let c = [best[0] + step * d[0], best[1] + step * d[1]];
            let r = t.residual(map, c);
            if r < best_r {
                best = c;
                best_r = r;
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (best, best_r)
}
