use serde::{Deserialize, Serialize};

use crate::geometry::torus_delta;

/// Compactly supported homeomorphism of T² that slides the point `anchor`
/// to `target` along the geodesic segment joining them.
///
/// In coordinates `(s, t)` along and across the segment (anchor at `s = 0`,
/// target at `s = len`) the map is `s ↦ s + χ(t)·Δ(s)`, `t ↦ t`, where
/// `χ(t) = max(0, 1 − |t|/half_width)` and `Δ` is the piecewise linear
/// profile `0` at `−back`, `len` at `0`, `0` at `len + front`. Every slope of
/// `Δ` exceeds −1, so each line `t = const` is moved by an increasing
/// homeomorphism. The largest displacement is `len`, attained only at the
/// anchor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub anchor: [f64; 2],
    pub target: [f64; 2],
    pub back: f64,
    pub front: f64,
    pub half_width: f64,
    dir: [f64; 2],
    len: f64,
}

impl Bump {
    /// `anchor` and `target` are points of R²; only their toroidal
    /// difference matters. Margins must be positive.
    pub fn new(anchor: [f64; 2], target: [f64; 2], back: f64, front: f64, half_width: f64) -> Self {
        let d = torus_delta(anchor, target);
        let len = d[0].hypot(d[1]);
        let dir = if len > 0.0 { [d[0] / len, d[1] / len] } else { [1.0, 0.0] };
        // keep the target on the same sheet as the anchor
        let target = [anchor[0] + d[0], anchor[1] + d[1]];
        Self { anchor, target, back, front, half_width, dir, len }
    }

    pub fn displacement(&self) -> f64 {
        self.len
    }

    pub fn direction(&self) -> [f64; 2] {
        self.dir
    }

    /// Local coordinates `(s, t)` of the representative of `z` nearest to
    /// the segment midpoint.
    fn local(&self, z: [f64; 2]) -> (f64, f64) {
        let mid = [self.anchor[0] + 0.5 * self.len * self.dir[0], self.anchor[1] + 0.5 * self.len * self.dir[1]];
        let r = torus_delta(mid, z);
        let s = r[0] * self.dir[0] + r[1] * self.dir[1] + 0.5 * self.len;
        let t = -r[0] * self.dir[1] + r[1] * self.dir[0];
        (s, t)
    }

    fn profile(&self, s: f64) -> f64 {
        if s <= -self.back || s >= self.len + self.front {
            0.0
        } else if s <= 0.0 {
            self.len * (s + self.back) / self.back
        } else {
            self.len * (1.0 - s / (self.len + self.front))
        }
    }

    fn cutoff(&self, t: f64) -> f64 {
        (1.0 - t.abs() / self.half_width).max(0.0)
    }

    /// Whether `z` lies in the (closed) support rectangle.
    pub fn in_support(&self, z: [f64; 2]) -> bool {
        let (s, t) = self.local(z);
        t.abs() < self.half_width && s > -self.back && s < self.len + self.front
    }

    /// Applies the homeomorphism to a point of R² (equivariantly).
    pub fn apply(&self, z: [f64; 2]) -> [f64; 2] {
        if self.len == 0.0 {
            return z;
        }
        if z == self.anchor {
            return self.target;
        }
        let (s, t) = self.local(z);
        let c = self.cutoff(t);
        if c == 0.0 {
            return z;
        }
        let m = c * self.profile(s);
        [z[0] + m * self.dir[0], z[1] + m * self.dir[1]]
    }

    /// Inverse of [`Bump::apply`].
    pub fn apply_inverse(&self, z: [f64; 2]) -> [f64; 2] {
        if self.len == 0.0 {
            return z;
        }
        let (s1, t) = self.local(z);
        let c = self.cutoff(t);
        if c == 0.0 || s1 <= -self.back || s1 >= self.len + self.front {
            return z;
        }
        let cl = c * self.len;
        let s = if s1 <= cl {
            (s1 - cl) / (1.0 + cl / self.back)
        } else {
            (s1 - cl) / (1.0 - cl / (self.len + self.front))
        };
        let m = s1 - s;
        [z[0] - m * self.dir[0], z[1] - m * self.dir[1]]
    }

    /// Lipschitz constant of `apply − id`.
    pub fn lipschitz_excess(&self) -> f64 {
        if self.len == 0.0 {
            return 0.0;
        }
        let along = self.len * (1.0 / self.back).max(1.0 / (self.len + self.front));
        let across = self.len / self.half_width;
        along.hypot(across)
    }
}
