use std::path::Path;

use crate::error::{Error, Result};

/// Displacement field sampled on an `N × N` grid of the torus with periodic
/// bilinear interpolation. Sample `(i, j)` sits at `(i/N, j/N)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    n: usize,
    /// Row-major, two channels: `values[(j·N + i)·2 + c]`.
    values: Vec<f64>,
}

impl GridField {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("grid resolution must be positive".into()));
        }
        if values.len() != 2 * n * n {
            return Err(Error::InvalidParameter(format!(
                "grid of resolution {n} needs {} values, got {}",
                2 * n * n,
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            let (i, j) = ((k / 2) % n, (k / 2) / n);
            return Err(Error::NonFinite(i as f64 / n as f64, j as f64 / n as f64));
        }
        Ok(Self { n, values })
    }

    /// Samples `field` at the grid nodes.
    pub fn from_fn(n: usize, field: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Self> {
        let mut values = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let d = field([i as f64 / n as f64, j as f64 / n as f64]);
                values.extend_from_slice(&d);
            }
        }
        Self::new(n, values)
    }

    /// Reads a little-endian `f32` array of length `2N²`.
    pub fn read_f32(path: &Path, n: usize) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        if bytes.len() != 8 * n * n {
            return Err(Error::Parse(format!(
                "{}: expected {} bytes for a {n}×{n} two-channel f32 grid, found {}",
                path.display(),
                8 * n * n,
                bytes.len()
            )));
        }
        let values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        Self::new(n, values)
    }

    pub fn write_f32(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(4 * self.values.len());
        for v in &self.values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        std::fs::write(path, out).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    #[inline]
    fn node(&self, i: usize, j: usize) -> [f64; 2] {
        let k = 2 * ((j % self.n) * self.n + (i % self.n));
        [self.values[k], self.values[k + 1]]
    }

    /// Bilinear interpolation at a point of `[0,1)²`.
    #[inline]
    pub fn sample(&self, w: [f64; 2]) -> [f64; 2] {
        let n = self.n as f64;
        let (sx, sy) = (w[0] * n, w[1] * n);
        let (fx, fy) = (sx.floor(), sy.floor());
        let (tx, ty) = (sx - fx, sy - fy);
        let i = (fx as i64).rem_euclid(self.n as i64) as usize;
        let j = (fy as i64).rem_euclid(self.n as i64) as usize;
        let a = self.node(i, j);
        let b = self.node(i + 1, j);
        let c = self.node(i, j + 1);
        let d = self.node(i + 1, j + 1);
        let mut out = [0.0; 2];
        for k in 0..2 {
            let lo = a[k] + tx * (b[k] - a[k]);
            let hi = c[k] + tx * (d[k] - c[k]);
            out[k] = lo + ty * (hi - lo);
        }
        out
    }

    /// Lipschitz bound of the interpolant from the stencil differences.
    ///
    /// Inside a cell each partial derivative is a convex combination of the
    /// neighbouring node differences divided by the step, so the Jacobian's
    /// Frobenius norm is at most `N·√(Dx² + Dy²)`.
    pub fn lipschitz(&self) -> f64 {
        let mut dx: f64 = 0.0;
        let mut dy: f64 = 0.0;
        for j in 0..self.n {
            for i in 0..self.n {
                let a = self.node(i, j);
                let b = self.node(i + 1, j);
                let c = self.node(i, j + 1);
                dx = dx.max((b[0] - a[0]).hypot(b[1] - a[1]));
                dy = dy.max((c[0] - a[0]).hypot(c[1] - a[1]));
            }
        }
        self.n as f64 * dx.hypot(dy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_nodes_and_wraps() {
        let g = GridField::from_fn(4, |w| [w[0], 2.0 * w[1]]).unwrap();
        assert_eq!(g.sample([0.25, 0.5]), [0.25, 1.0]);
        assert_eq!(g.sample([0.125, 0.0]), [0.125, 0.0]);
        // between the last node and the wrapped first node
        let s = g.sample([0.875, 0.0]);
        assert!((s[0] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_bounds_sampled_slopes() {
        let g = GridField::from_fn(16, |w| [0.1 * (std::f64::consts::TAU * w[1]).sin(), 0.0]).unwrap();
        let l = g.lipschitz();
        assert!(l <= std::f64::consts::TAU * 0.1 + 1e-12);
        for k in 0..200 {
            let a = [k as f64 / 200.0, (k * 7 % 200) as f64 / 200.0];
            let b = [a[0], (a[1] + 0.003) % 1.0];
            let (pa, pb) = (g.sample(a), g.sample(b));
            let d = (pa[0] - pb[0]).hypot(pa[1] - pb[1]);
            assert!(d <= l * 0.003 + 1e-12);
        }
    }

    #[test]
    fn f32_round_trip() {
        let g = GridField::from_fn(8, |w| [w[0] * 0.5, -w[1]]).unwrap();
        let dir = std::env::temp_dir().join(format!("grid-rt-{}.bin", std::process::id()));
        g.write_f32(&dir).unwrap();
        let h = GridField::read_f32(&dir, 8).unwrap();
        std::fs::remove_file(&dir).ok();
        assert_eq!(g, h);
        assert!(GridField::read_f32(&dir, 8).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(GridField::new(3, vec![0.0; 17]).is_err());
        assert!(GridField::new(1, vec![f64::NAN, 0.0]).is_err());
    }
}
