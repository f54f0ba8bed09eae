//! Lifts `f̃ = id + φ` of torus homeomorphisms isotopic to the identity.

mod bump;
mod config;
mod grid;
mod verify;

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use bump::Bump;
pub use config::{load_map, MapConfig};
pub use grid::GridField;
pub use verify::{verify_lift, verify_lift_at, LiftReport};

use crate::error::{Error, Result};
use crate::geometry::{to_torus, Norm};

/// User-supplied displacement field.
///
/// The closure is called on points of the fundamental domain `[0,1)²`,
/// which makes the lift periodic whatever the closure does on the seams;
/// [`verify_lift`] measures the resulting seam defect.
#[derive(Clone)]
pub struct CustomField {
    pub name: String,
    pub field: Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>,
    pub lipschitz: f64,
}

impl fmt::Debug for CustomField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomField").field("name", &self.name).field("lipschitz", &self.lipschitz).finish()
    }
}

/// Two-parameter family with prescribed periodic orbits.
///
/// `φ₁ = (p/q)(1 − cos 2πy)/2 − lock·[(1 + cos 2πy)/2 · sin 2πx / 2π
///        + (1 − cos 2πy)/2 · sin 2πqx / 2πq]`,
/// `φ₂ = −contraction · sin 4πy / 4π`.
///
/// The circles `y = 0` and `y = 1/2` are attracting. On `y = 0` the point
/// `x = 0` is an attracting fixed point with displacement `(0,0)`; on
/// `y = 1/2` the orbit of `x = 0` is a q-periodic orbit with rotation vector
/// `(p/q, 0)`. The rotation set is the segment joining `(0,0)` and `(p/q,0)`.
/// Both maps in the triangular decomposition are monotone, so the lift is a
/// homeomorphism for `lock, contraction ∈ (0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinnedParams {
    pub p: i64,
    pub q: u32,
    pub lock: f64,
    pub contraction: f64,
}

impl PinnedParams {
    pub fn new(p: i64, q: u32, lock: f64, contraction: f64) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidParameter("pinned family needs q ≥ 1".into()));
        }
        for (name, v) in [("lock", lock), ("contraction", contraction)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        Ok(Self { p, q, lock, contraction })
    }

    /// Point of the built-in q-periodic orbit at index `k`.
    pub fn periodic_point(&self, k: u32) -> [f64; 2] {
        [(self.p * k as i64) as f64 / self.q as f64, 0.5]
    }

    #[inline]
    fn phi(&self, x: f64, y: f64) -> [f64; 2] {
        let q = self.q as f64;
        let c = (TAU * y).cos();
        let near = 0.5 * (1.0 + c);
        let far = 0.5 * (1.0 - c);
        let rot = self.p as f64 / q;
        let px = rot * far - self.lock * (near * (TAU * x).sin() / TAU + far * (TAU * q * x).sin() / (TAU * q));
        let py = -self.contraction * (2.0 * TAU * y).sin() / (2.0 * TAU);
        [px, py]
    }

    fn lipschitz(&self) -> f64 {
        let q = self.q as f64;
        let dx = self.lock;
        let dy = PI * (self.p as f64 / q).abs() + self.lock * (0.5 + 0.5 / q);
        (dx * dx + dy * dy + self.contraction * self.contraction).sqrt()
    }
}

/// Named analytic families and sampled fields.
#[derive(Clone, Debug)]
pub enum MapFamily {
    /// `φ ≡ (a, b)`.
    Translation {
        a: f64,
        b: f64,
    },
    /// `φ = (r sin 2πy, 0)`.
    Shear {
        r: f64,
    },
    /// `φ = (a + r sin 2πy, b + s sin 2πx)`.
    CoupledShear {
        a: f64,
        b: f64,
        r: f64,
        s: f64,
    },
    Pinned(PinnedParams),
    Grid(Arc<GridField>),
    Custom(CustomField),
    /// `g̃ = B_k ∘ … ∘ B_1 ∘ f̃` for bumps with disjoint supports.
    Perturbed {
        base: Arc<LiftMap>,
        bumps: Arc<[Bump]>,
    },
}

/// A lift `f̃ = id + φ` with a certified Lipschitz bound for `φ`.
#[derive(Clone, Debug)]
pub struct LiftMap {
    family: MapFamily,
    /// Constant added to φ (rotation composition).
    shift: [f64; 2],
    /// Integer translation removed by [`LiftMap::canonicalize`].
    integer_offset: [i64; 2],
    conservative: bool,
    lipschitz: f64,
}

impl LiftMap {
    fn from_family(family: MapFamily, lipschitz: f64) -> Self {
        Self { family, shift: [0.0, 0.0], integer_offset: [0, 0], conservative: false, lipschitz }
    }

    pub fn identity() -> Self {
        Self::translation(0.0, 0.0)
    }

    pub fn translation(a: f64, b: f64) -> Self {
        let mut m = Self::from_family(MapFamily::Translation { a, b }, 0.0);
        m.conservative = true;
        m
    }

    pub fn shear(r: f64) -> Self {
        let mut m = Self::from_family(MapFamily::Shear { r }, TAU * r.abs());
        m.conservative = true;
        m
    }

    pub fn coupled_shear(a: f64, b: f64, r: f64, s: f64) -> Self {
        Self::from_family(MapFamily::CoupledShear { a, b, r, s }, TAU * r.abs().max(s.abs()))
    }

    pub fn pinned(params: PinnedParams) -> Self {
        Self::from_family(MapFamily::Pinned(params), params.lipschitz())
    }

    pub fn grid(field: GridField) -> Self {
        let lip = field.lipschitz();
        Self::from_family(MapFamily::Grid(Arc::new(field)), lip)
    }

    pub fn custom(name: &str, lipschitz: f64, field: impl Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static) -> Self {
        Self::from_family(
            MapFamily::Custom(CustomField { name: name.to_string(), field: Arc::new(field), lipschitz }),
            lipschitz,
        )
    }

    /// Post-composes with relocation bumps. The caller guarantees that the
    /// bump supports are pairwise disjoint.
    pub fn with_bumps(base: &LiftMap, bumps: Vec<Bump>) -> Self {
        let base_lip = base.lipschitz;
        let excess = bumps.iter().map(Bump::lipschitz_excess).fold(0.0, f64::max);
        let lip = base_lip + excess * (1.0 + base_lip);
        let mut m = Self::from_family(MapFamily::Perturbed { base: Arc::new(base.clone()), bumps: bumps.into() }, lip);
        m.conservative = base.conservative;
        m
    }

    pub fn with_conservative(mut self, flag: bool) -> Self {
        self.conservative = flag;
        self
    }

    pub fn family(&self) -> &MapFamily {
        &self.family
    }

    pub fn family_name(&self) -> &str {
        match &self.family {
            MapFamily::Translation { .. } => "translation",
            MapFamily::Shear { .. } => "shear",
            MapFamily::CoupledShear { .. } => "coupled_shear",
            MapFamily::Pinned(_) => "pinned",
            MapFamily::Grid(_) => "grid",
            MapFamily::Custom(c) => &c.name,
            MapFamily::Perturbed { .. } => "perturbed",
        }
    }

    pub fn is_conservative(&self) -> bool {
        self.conservative
    }

    pub fn integer_offset(&self) -> [i64; 2] {
        self.integer_offset
    }

    pub fn shift(&self) -> [f64; 2] {
        self.shift
    }

    /// Lipschitz constant of φ.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Modulus of continuity of φ: `|φ(z) − φ(z′)| ≤ ω_φ(|z − z′|)`.
    pub fn phi_modulus(&self, r: f64) -> f64 {
        self.lipschitz * r
    }

    /// Modulus of φ measured in `norm` on both sides.
    pub fn phi_modulus_in(&self, r: f64, norm: Norm) -> f64 {
        match norm {
            Norm::Euclidean => self.lipschitz * r,
            // |·|∞ ≤ |·|₂ on the output, |·|₂ ≤ √2 |·|∞ on the input
            Norm::Max => self.lipschitz * std::f64::consts::SQRT_2 * r,
        }
    }

    /// Modulus of continuity of f̃ in the given norm:
    /// `‖f̃(z) − f̃(z′)‖ ≤ ω(‖z − z′‖)`.
    pub fn modulus(&self, r: f64, norm: Norm) -> f64 {
        r + self.phi_modulus_in(r, norm)
    }

    /// Raw displacement field on the fundamental domain, before the
    /// rotation shift.
    #[inline]
    fn raw_phi(&self, w: [f64; 2]) -> [f64; 2] {
        match &self.family {
            MapFamily::Translation { a, b } => [*a, *b],
            MapFamily::Shear { r } => [r * (TAU * w[1]).sin(), 0.0],
            MapFamily::CoupledShear { a, b, r, s } => [a + r * (TAU * w[1]).sin(), b + s * (TAU * w[0]).sin()],
            MapFamily::Pinned(p) => p.phi(w[0], w[1]),
            MapFamily::Grid(g) => g.sample(w),
            MapFamily::Custom(c) => (c.field)(w),
            MapFamily::Perturbed { base, bumps } => {
                let mut z = base.eval(w);
                for b in bumps.iter() {
                    z = b.apply(z);
                }
                [z[0] - w[0], z[1] - w[1]]
            }
        }
    }

    /// Field evaluated without reducing the argument; used for seam checks.
    pub(crate) fn raw_field(&self, w: [f64; 2]) -> [f64; 2] {
        self.raw_phi(w)
    }

    /// Displacement `φ(z mod Z²)` including rotation shift and canonical offset.
    #[inline]
    pub fn phi(&self, z: [f64; 2]) -> [f64; 2] {
        let w = to_torus(z);
        let d = self.raw_phi(w);
        [d[0] + self.shift[0] - self.integer_offset[0] as f64, d[1] + self.shift[1] - self.integer_offset[1] as f64]
    }

    /// `f̃(z) = z + φ(z mod Z²)`.
    #[inline]
    pub fn eval(&self, z: [f64; 2]) -> [f64; 2] {
        let d = self.phi(z);
        [z[0] + d[0], z[1] + d[1]]
    }

    /// `f̃ⁿ(z)`.
    pub fn iterate(&self, z: [f64; 2], n: u64) -> [f64; 2] {
        let mut p = z;
        for _ in 0..n {
            p = self.eval(p);
        }
        p
    }

    /// Lift of `R_v ∘ f`: displacement `φ + v`.
    pub fn compose_rotation(&self, v: [f64; 2]) -> LiftMap {
        let mut m = self.clone();
        m.shift = [self.shift[0] + v[0], self.shift[1] + v[1]];
        m
    }

    /// Moves to the lift whose displacement at the origin lies in `[0,1)²`
    /// and records the integer translation that was removed.
    pub fn canonicalize(&self) -> LiftMap {
        let d = self.phi([0.0, 0.0]);
        let m = [d[0].floor() as i64, d[1].floor() as i64];
        let mut out = self.clone();
        out.integer_offset = [self.integer_offset[0] + m[0], self.integer_offset[1] + m[1]];
        out
    }

    /// Grid estimate and certified upper bound of `osc(f) = diam φ(T²)`.
    pub fn osc(&self) -> OscReport {
        self.osc_at(256)
    }

    pub fn osc_at(&self, resolution: usize) -> OscReport {
        let m = resolution.max(2);
        let h = 1.0 / m as f64;
        // the shift is constant, so leaving it out keeps the value exactly invariant
        let pts: Vec<[f64; 2]> = (0..m * m).map(|k| self.raw_phi([(k % m) as f64 * h, (k / m) as f64 * h])).collect();
        let grid_value = float_diameter(&pts);
        let inflation = 2.0 * self.phi_modulus(Norm::Euclidean.cell_radius(h));
        OscReport { resolution: m, grid_value, certified_bound: grid_value + inflation }
    }

    /// Certified upper bound of `sup ‖φ‖`.
    pub fn sup_phi(&self, resolution: usize) -> f64 {
        let m = resolution.max(2);
        let h = 1.0 / m as f64;
        let mut best: f64 = 0.0;
        for k in 0..m * m {
            let d = self.phi([(k % m) as f64 * h, (k / m) as f64 * h]);
            best = best.max(d[0].hypot(d[1]));
        }
        best + self.phi_modulus(Norm::Euclidean.cell_radius(h))
    }

    /// Sup-distance `max ‖f̃ − g̃‖` over a regular grid plus extra points.
    pub fn c0_distance(&self, other: &LiftMap, resolution: usize, extra: &[[f64; 2]]) -> f64 {
        let m = resolution.max(1);
        let h = 1.0 / m as f64;
        let grid = (0..m * m).map(|k| [(k % m) as f64 * h, (k / m) as f64 * h]);
        grid.chain(extra.iter().copied())
            .map(|z| {
                let a = self.eval(z);
                let b = other.eval(z);
                (a[0] - b[0]).hypot(a[1] - b[1])
            })
            .fold(0.0, f64::max)
    }
}

/// Oscillation estimate: grid diameter of the displacement range and the
/// certified bound `grid + 2ω_φ(r_h)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscReport {
    pub resolution: usize,
    pub grid_value: f64,
    pub certified_bound: f64,
}

/// Diameter of a planar point cloud via its float convex hull.
pub(crate) fn float_diameter(pts: &[[f64; 2]]) -> f64 {
    let mut p = pts.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    p.dedup();
    if p.len() <= 1 {
        return 0.0;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    let mut d: f64 = 0.0;
    for i in 0..hull.len() {
        for j in i + 1..hull.len() {
            d = d.max((hull[i][0] - hull[j][0]).hypot(hull[i][1] - hull[j][1]));
        }
    }
    if hull.len() < 2 {
        d = d.max((p[0][0] - p[p.len() - 1][0]).hypot(p[0][1] - p[p.len() - 1][1]));
    }
    d
}

/// Finite sequence of lifted points with per-step tolerance δ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoOrbit {
    pub points: Vec<[f64; 2]>,
    pub delta: f64,
}

/// Round-off tolerance used when δ = 0 (true orbits).
pub const ORBIT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoOrbitCheck {
    pub max_step_error: f64,
    pub valid: bool,
}

impl PseudoOrbit {
    pub fn new(points: Vec<[f64; 2]>, delta: f64) -> Self {
        Self { points, delta }
    }

    /// Checks `d(f̃(x̃ᵢ), x̃ᵢ₊₁) < δ` for every step.
    pub fn check(&self, map: &LiftMap, norm: Norm) -> PseudoOrbitCheck {
        let max_step_error = self.points.windows(2).map(|w| norm.dist(map.eval(w[0]), w[1])).fold(0.0, f64::max);
        let valid = if self.delta == 0.0 { max_step_error <= ORBIT_TOLERANCE } else { max_step_error < self.delta };
        PseudoOrbitCheck { max_step_error, valid }
    }

    /// `(x̃ₙ − x̃₀)/n`.
    pub fn mean_displacement(&self) -> Option<[f64; 2]> {
        let n = self.points.len().checked_sub(1).filter(|&n| n > 0)?;
        let (a, b) = (self.points[0], self.points[n]);
        Some([(b[0] - a[0]) / n as f64, (b[1] - a[1]) / n as f64])
    }
}
