use std::collections::HashMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{LiftMap, OscReport};
use crate::error::{Error, Result};

/// Outcome of the structural checks on a lift. Dynamical defects are
/// recorded here rather than raised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftReport {
    pub resolution: usize,
    /// Largest jump of the field across the seams `x = 0 ~ 1`, `y = 0 ~ 1`.
    pub periodicity_defect: f64,
    /// Grid triangles whose image has non-positive orientation.
    pub folded_cells: usize,
    /// Pairs of distinct grid points whose images on the torus are closer
    /// than `collision_tolerance`.
    pub collisions: usize,
    pub collision_tolerance: f64,
    pub injective: bool,
    /// Winding number of the image of the unit square's boundary around the
    /// image of its centre.
    pub winding_number: i64,
    pub degree_one: bool,
    /// Largest relative area change over the test squares.
    pub area_defect: f64,
    pub conservative_claimed: bool,
    /// `None` when the map makes no area-preservation claim.
    pub conservative_confirmed: Option<bool>,
    pub osc: OscReport,
    pub notes: Vec<String>,
}

impl LiftReport {
    pub fn passed(&self) -> bool {
        self.periodicity_defect < 1e-9
            && self.injective
            && self.degree_one
            && self.conservative_confirmed != Some(false)
    }
}

const SEAM_TOLERANCE: f64 = 1e-9;
const AREA_TOLERANCE: f64 = 1e-3;

/// Runs all checks at grid resolution 64.
pub fn verify_lift(map: &LiftMap) -> Result<LiftReport> {
    verify_lift_at(map, 64)
}

pub fn verify_lift_at(map: &LiftMap, resolution: usize) -> Result<LiftReport> {
    let m = resolution.max(4);
    let h = 1.0 / m as f64;

    let mut images = Vec::with_capacity((m + 1) * (m + 1));
    for j in 0..=m {
        for i in 0..=m {
            let z = [i as f64 * h, j as f64 * h];
            let w = map.eval(z);
            if !w[0].is_finite() || !w[1].is_finite() {
                return Err(Error::NonFinite(z[0], z[1]));
            }
            images.push(w);
        }
    }
    let at = |i: usize, j: usize| images[j * (m + 1) + i];

    let mut periodicity_defect: f64 = 0.0;
    for k in 0..=4 * m {
        let t = (k as f64 / (4 * m) as f64).min(1.0 - f64::EPSILON);
        for (a, b) in [([0.0, t], [1.0, t]), ([t, 0.0], [t, 1.0])] {
            let (fa, fb) = (map.raw_field(a), map.raw_field(b));
            periodicity_defect = periodicity_defect.max((fa[0] - fb[0]).hypot(fa[1] - fb[1]));
        }
    }

    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let mut folded_cells = 0;
    for j in 0..m {
        for i in 0..m {
            if orient(at(i, j), at(i + 1, j), at(i, j + 1)) <= 0.0 {
                folded_cells += 1;
            }
            if orient(at(i + 1, j + 1), at(i, j + 1), at(i + 1, j)) <= 0.0 {
                folded_cells += 1;
            }
        }
    }

    let collision_tolerance = 1e-6 * h;
    let collisions =
        count_collisions(&(0..m * m).map(|k| at(k % m, k / m)).collect::<Vec<_>>(), collision_tolerance, h);

    let winding_number = boundary_winding(map)?;
    let area_defect = area_defect(map);
    let conservative_claimed = map.is_conservative();
    let osc = map.osc_at(m.max(64));

    let mut notes = Vec::new();
    if periodicity_defect >= SEAM_TOLERANCE {
        notes.push(format!("field jumps by {periodicity_defect:.3e} across a seam"));
    }
    if osc.grid_value > 1.0 {
        notes.push(format!("large oscillation: grid estimate {:.4}", osc.grid_value));
    }
    if folded_cells > 0 {
        notes.push(format!("{folded_cells} grid triangles change orientation"));
    }
    if conservative_claimed && area_defect >= AREA_TOLERANCE {
        notes.push(format!("area-preservation claim not confirmed: relative defect {area_defect:.3e}"));
    }

    Ok(LiftReport {
        resolution: m,
        periodicity_defect,
        folded_cells,
        collisions,
        collision_tolerance,
        injective: folded_cells == 0 && collisions == 0,
        winding_number,
        degree_one: winding_number == 1,
        area_defect,
        conservative_claimed,
        conservative_confirmed: conservative_claimed.then_some(area_defect < AREA_TOLERANCE),
        osc,
        notes,
    })
}

/// Counts pairs of points closer than `tol` on the torus, bucketing at
/// scale `cell`.
fn count_collisions(points: &[[f64; 2]], tol: f64, cell: f64) -> usize {
    let b = (1.0 / cell).floor().max(1.0) as i64;
    let key = |p: [f64; 2]| {
        let w = crate::geometry::to_torus(p);
        (((w[0] * b as f64) as i64).min(b - 1), ((w[1] * b as f64) as i64).min(b - 1))
    };
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (k, &p) in points.iter().enumerate() {
        buckets.entry(key(p)).or_default().push(k);
    }
    let mut count = 0;
    for (k, &p) in points.iter().enumerate() {
        let (bx, by) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let nb = ((bx + dx).rem_euclid(b), (by + dy).rem_euclid(b));
                for &l in buckets.get(&nb).map(Vec::as_slice).unwrap_or(&[]) {
                    if l > k && crate::geometry::Norm::Euclidean.torus_dist(p, points[l]) < tol {
                        count += 1;
                    }
                }
            }
        }
    }
    count
}

fn boundary_winding(map: &LiftMap) -> Result<i64> {
    let centre = map.eval([0.5, 0.5]);
    let corners = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]];
    let angle = |z: [f64; 2]| {
        let w = map.eval(z);
        let d = [w[0] - centre[0], w[1] - centre[1]];
        (d[1].atan2(d[0]), d[0].hypot(d[1]))
    };
    let mut total = 0.0;
    for side in corners.windows(2) {
        let (a, b) = (side[0], side[1]);
        let point = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        let mut stack = vec![(0.0f64, 1.0f64, 0u32)];
        while let Some((s, t, depth)) = stack.pop() {
            let ((th0, r0), (th1, r1)) = (angle(point(s)), angle(point(t)));
            if r0 == 0.0 || r1 == 0.0 {
                return Ok(0);
            }
            let mut d = th1 - th0;
            d -= TAU * (d / TAU).round();
            if d.abs() > 0.25 && depth < 40 {
                let mid = 0.5 * (s + t);
                // pushed in reverse so the side is walked in order
                stack.push((mid, t, depth + 1));
                stack.push((s, mid, depth + 1));
            } else {
                total += d;
            }
        }
    }
    Ok((total / TAU).round() as i64)
}

/// Largest relative area change of 16 test squares of side 1/8, measured
/// with the shoelace formula on the sampled image of each boundary.
fn area_defect(map: &LiftMap) -> f64 {
    let side = 0.125;
    let per_side = 256;
    let mut worst: f64 = 0.0;
    for k in 0..16 {
        // van der Corput offsets keep the squares spread over the torus
        let ox = (k as f64 * 0.618_033_988_749_895).fract();
        let oy = (k as f64 * 0.754_877_666_246_693).fract();
        let mut pts = Vec::with_capacity(4 * per_side);
        let corners = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        for c in 0..4 {
            let (a, b) = (corners[c], corners[(c + 1) % 4]);
            for s in 0..per_side {
                let t = s as f64 / per_side as f64;
                let z = [ox + side * (a[0] + t * (b[0] - a[0])), oy + side * (a[1] + t * (b[1] - a[1]))];
                pts.push(map.eval(z));
            }
        }
        let o = pts[0];
        let mut area = 0.0;
        for i in 0..pts.len() {
            let (p, q) = (pts[i], pts[(i + 1) % pts.len()]);
            area += (p[0] - o[0]) * (q[1] - o[1]) - (q[0] - o[0]) * (p[1] - o[1]);
        }
        area *= 0.5;
        worst = worst.max((area - side * side).abs() / (side * side));
    }
    worst
}
