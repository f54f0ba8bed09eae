//! Explicit rotational-deviation constants and empirical deviation traces of
//! orbits and pseudo-orbits against a candidate rotation polygon.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{to_torus, ConvexPolygon, FloatPolygon};
use crate::torus::LiftMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviationKind {
    Orbit,
    Pseudo,
}

/// Deviation bound for maps whose rotation set is ε-upper-stable:
/// `4(osc + 1)/(πε²) + ε` for orbits and `16(osc + 2)/(πε²) + ε` for
/// ε/2-pseudo-orbits.
pub fn deviation_constant(osc: f64, epsilon: f64, kind: DeviationKind) -> Result<f64> {
    if !(osc >= 0.0) || !osc.is_finite() {
        return Err(Error::InvalidParameter(format!("oscillation must be finite and ≥ 0, got {osc}")));
    }
    if epsilon >= 1.0 {
        return Err(Error::EpsilonTooLarge(epsilon));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let e2 = PI * epsilon * epsilon;
    Ok(match kind {
        DeviationKind::Orbit => 4.0 * (osc + 1.0) / e2 + epsilon,
        DeviationKind::Pseudo => 16.0 * (osc + 2.0) / e2 + epsilon,
    })
}

/// How the per-step noise of a pseudo-orbit is drawn; its norm is always
/// strictly below δ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Uniform in the open δ-disk.
    Uniform,
    /// Random direction, norm in `[0.9δ, δ)`.
    Boundary,
    /// Always pushes along a fixed direction with norm just below δ.
    DirectionLocked([f64; 2]),
}

/// Largest noise norm used; keeps every step strictly inside the δ-ball.
const NOISE_CEILING: f64 = 1.0 - 1e-12;

/// Orbit or pseudo-orbit kept as a torus point plus an integer cell, so
/// displacements stay exact to round-off over long horizons.
struct Walker {
    w: [f64; 2],
    cell: [i64; 2],
}

impl Walker {
    fn new(z: [f64; 2]) -> Self {
        let w = to_torus(z);
        Self { w, cell: [(z[0] - w[0]).round() as i64, (z[1] - w[1]).round() as i64] }
    }

    fn step(&mut self, map: &LiftMap, noise: [f64; 2]) {
        let d = map.phi(self.w);
        let z = [self.w[0] + d[0] + noise[0], self.w[1] + d[1] + noise[1]];
        let w = to_torus(z);
        self.cell[0] += (z[0] - w[0]).round() as i64;
        self.cell[1] += (z[1] - w[1]).round() as i64;
        self.w = w;
    }

    fn position(&self) -> [f64; 2] {
        [self.cell[0] as f64 + self.w[0], self.cell[1] as f64 + self.w[1]]
    }

    fn displacement_from(&self, o: &Walker) -> [f64; 2] {
        [
            (self.cell[0] - o.cell[0]) as f64 + (self.w[0] - o.w[0]),
            (self.cell[1] - o.cell[1]) as f64 + (self.w[1] - o.w[1]),
        ]
    }
}

struct Noise {
    delta: f64,
    mode: NoiseMode,
    rng: ChaCha8Rng,
    locked: [f64; 2],
}

impl Noise {
    fn new(delta: f64, mode: NoiseMode, seed: u64) -> Result<Self> {
        let mut locked = [0.0, 0.0];
        if let NoiseMode::DirectionLocked(d) = mode {
            let n = d[0].hypot(d[1]);
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::InvalidParameter("noise direction must be a nonzero finite vector".into()));
            }
            locked = [d[0] / n * delta * NOISE_CEILING, d[1] / n * delta * NOISE_CEILING];
        }
        Ok(Self { delta, mode, rng: ChaCha8Rng::seed_from_u64(seed), locked })
    }

    fn draw(&mut self) -> [f64; 2] {
        if self.delta == 0.0 {
            return [0.0, 0.0];
        }
        let radius = match self.mode {
            NoiseMode::DirectionLocked(_) => return self.locked,
            NoiseMode::Uniform => self.rng.gen::<f64>().sqrt(),
            NoiseMode::Boundary => 1.0 - 0.1 * self.rng.gen::<f64>(),
        } * self.delta
            * NOISE_CEILING;
        let a = TAU * self.rng.gen::<f64>();
        [radius * a.cos(), radius * a.sin()]
    }
}

/// Parameters of one deviation run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationConfig {
    pub n_max: u64,
    /// Noise bound; 0 for true orbits.
    pub delta: f64,
    pub noise: NoiseMode,
    pub seed: u64,
    /// Bound to test against.
    pub constant: Option<f64>,
}

impl DeviationConfig {
    pub fn orbit(n_max: u64) -> Self {
        Self { n_max, delta: 0.0, noise: NoiseMode::Uniform, seed: 0, constant: None }
    }
}

/// Deviation `d(x̃ₙ − x̃₀, nP)` at one checkpoint, with the running maximum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub n: u64,
    pub deviation: f64,
    pub running_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub kind: DeviationKind,
    pub n_max: u64,
    pub delta: f64,
    pub noise: NoiseMode,
    pub seed: u64,
    pub base: [f64; 2],
    pub constant: Option<f64>,
    pub max_deviation: f64,
    pub argmax_n: u64,
    /// `max_deviation > constant`.
    pub violated: bool,
    /// Log-spaced checkpoints; the last entry is `n_max`.
    pub trace: Vec<TracePoint>,
}

/// Checkpoints `1..=16`, then about 24 per decade, then `n_max`.
pub fn checkpoints(n_max: u64) -> Vec<u64> {
    let mut out: Vec<u64> = (1..=16.min(n_max)).collect();
    let mut k = 0u32;
    loop {
        let n = (16.0 * 10f64.powf(k as f64 / 24.0)).round() as u64;
        if n >= n_max {
            break;
        }
        if n > *out.last().unwrap_or(&0) {
            out.push(n);
        }
        k += 1;
    }
    if out.last() != Some(&n_max) && n_max > 0 {
        out.push(n_max);
    }
    out
}

/// The first `n + 1` points of a seeded pseudo-orbit from `x0`.
pub fn pseudo_orbit(
    map: &LiftMap,
    x0: [f64; 2],
    n: u64,
    delta: f64,
    noise: NoiseMode,
    seed: u64,
) -> Result<Vec<[f64; 2]>> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("noise bound must be finite and ≥ 0, got {delta}")));
    }
    let mut gen = Noise::new(delta, noise, seed)?;
    let mut walker = Walker::new(x0);
    let mut pts = Vec::with_capacity(n as usize + 1);
    pts.push(walker.position());
    for _ in 0..n {
        walker.step(map, gen.draw());
        pts.push(walker.position());
    }
    Ok(pts)
}

/// Runs an orbit (`delta = 0`) or a pseudo-orbit for `n_max` steps and
/// tracks its distance to the dilated polygon `nP`.
pub fn max_deviation(
    map: &LiftMap,
    polygon: &ConvexPolygon,
    x0: [f64; 2],
    config: &DeviationConfig,
) -> Result<DeviationReport> {
    if config.n_max == 0 {
        return Err(Error::InvalidParameter("horizon must be ≥ 1".into()));
    }
    if polygon.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if !(config.delta >= 0.0) || !config.delta.is_finite() {
        return Err(Error::InvalidParameter(format!("noise bound must be finite and ≥ 0, got {}", config.delta)));
    }
    let fp = FloatPolygon::new(polygon);
    let marks = checkpoints(config.n_max);
    let mut next = 0usize;
    let mut gen = Noise::new(config.delta, config.noise, config.seed)?;
    let origin = Walker::new(x0);
    let mut walker = Walker::new(x0);
    let (mut best, mut argmax) = (0.0f64, 0u64);
    let mut trace = Vec::with_capacity(marks.len());
    for n in 1..=config.n_max {
        walker.step(map, gen.draw());
        let dev = fp.distance(walker.displacement_from(&origin), n as f64);
        if dev > best {
            best = dev;
            argmax = n;
        }
        if marks.get(next) == Some(&n) {
            trace.push(TracePoint { n, deviation: dev, running_max: best });
            next += 1;
        }
    }
    Ok(DeviationReport {
        kind: if config.delta == 0.0 { DeviationKind::Orbit } else { DeviationKind::Pseudo },
        n_max: config.n_max,
        delta: config.delta,
        noise: config.noise,
        seed: config.seed,
        base: x0,
        constant: config.constant,
        max_deviation: best,
        argmax_n: argmax,
        violated: config.constant.is_some_and(|c| best > c),
        trace,
    })
}

/// Writes the trace as CSV with columns `n,dev,bound_C`.
pub fn write_trace_csv<W: Write>(mut out: W, report: &DeviationReport) -> Result<()> {
    writeln!(out, "n,dev,bound_C")?;
    let c = report.constant.map(|c| c.to_string()).unwrap_or_default();
    for t in &report.trace {
        writeln!(out, "{},{},{}", t.n, t.deviation, c)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RationalVec2;
    use crate::torus::PinnedParams;
    use proptest::prelude::*;

    fn point(x: f64, y: f64) -> ConvexPolygon {
        ConvexPolygon::point(RationalVec2::from_f64([x, y]).unwrap())
    }

    #[test]
    fn constants_match_the_closed_forms() {
        let p = deviation_constant(1.0, 0.2, DeviationKind::Pseudo).unwrap();
        assert!((p - 382.172).abs() < 1e-3, "{p}");
        let o = deviation_constant(1.0, 0.2, DeviationKind::Orbit).unwrap();
        assert!((o - 63.862).abs() < 1e-3, "{o}");
        let t = deviation_constant(0.0, 0.5, DeviationKind::Pseudo).unwrap();
        assert!((t - 41.2437).abs() < 1e-3, "{t}");
    }

    #[test]
    fn constant_errors() {
        assert!(matches!(deviation_constant(1.0, 1.0, DeviationKind::Orbit), Err(Error::EpsilonTooLarge(_))));
        assert!(deviation_constant(1.0, 0.0, DeviationKind::Orbit).is_err());
        assert!(deviation_constant(-1.0, 0.5, DeviationKind::Orbit).is_err());
    }

    #[test]
    fn translation_orbit_has_no_deviation() {
        let m = LiftMap::translation(0.25, -0.5);
        let r = max_deviation(&m, &point(0.25, -0.5), [0.1, 0.2], &DeviationConfig::orbit(10_000)).unwrap();
        assert!(r.max_deviation < 1e-9, "{}", r.max_deviation);
        assert!(!r.violated);
        assert_eq!(r.kind, DeviationKind::Orbit);
    }

    #[test]
    fn locked_noise_drifts_linearly() {
        let m = LiftMap::translation(0.3, 0.1);
        let config = DeviationConfig {
            n_max: 2000,
            delta: 0.1,
            noise: NoiseMode::DirectionLocked([1.0, 0.0]),
            seed: 0,
            constant: Some(50.0),
        };
        let r = max_deviation(&m, &point(0.3, 0.1), [0.0, 0.0], &config).unwrap();
        for t in &r.trace {
            assert!((t.deviation - 0.1 * t.n as f64).abs() < 1e-9 * t.n as f64, "{t:?}");
        }
        assert!(r.violated && r.argmax_n == 2000);
    }

    #[test]
    fn noise_stays_below_delta() {
        let m = LiftMap::coupled_shear(0.0, 0.0, 0.3, 0.2);
        for mode in [NoiseMode::Uniform, NoiseMode::Boundary, NoiseMode::DirectionLocked([1.0, 1.0])] {
            let pts = pseudo_orbit(&m, [0.2, 0.7], 500, 0.05, mode, 3).unwrap();
            let orbit = crate::torus::PseudoOrbit::new(pts, 0.05);
            assert!(orbit.check(&m, crate::geometry::Norm::Euclidean).valid, "{mode:?}");
        }
    }

    #[test]
    fn checkpoint_layout() {
        assert_eq!(checkpoints(5), vec![1, 2, 3, 4, 5]);
        let c = checkpoints(100_000);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*c.last().unwrap(), 100_000);
        assert!(c.len() < 150);
    }

    #[test]
    fn pinned_orbits_stay_within_the_orbit_constant() {
        let m = LiftMap::pinned(PinnedParams::new(1, 2, 0.9, 0.9).unwrap());
        let seg =
            ConvexPolygon::from_vertices(vec![RationalVec2::zero(), RationalVec2::from_ratios(1, 2, 0, 1)]).unwrap();
        let c = deviation_constant(m.osc().certified_bound, 0.1, DeviationKind::Orbit).unwrap();
        let config = DeviationConfig { constant: Some(c), ..DeviationConfig::orbit(20_000) };
        for z in [[0.1, 0.3], [0.7, 0.45], [0.33, 0.9]] {
            assert!(!max_deviation(&m, &seg, z, &config).unwrap().violated);
        }
    }

    #[test]
    fn csv_layout() {
        let m = LiftMap::translation(0.5, 0.0);
        let config = DeviationConfig { constant: Some(2.0), ..DeviationConfig::orbit(3) };
        let r = max_deviation(&m, &point(0.5, 0.0), [0.0, 0.0], &config).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &r).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "n,dev,bound_C\n1,0,2\n2,0,2\n3,0,2\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn orbit_constant_is_smaller(osc in 0.0f64..10.0, eps in 0.01f64..0.99) {
            prop_assert!(deviation_constant(osc, eps, DeviationKind::Orbit).unwrap()
                < deviation_constant(osc, eps, DeviationKind::Pseudo).unwrap());
        }

        #[test]
        fn deviations_are_subadditive(seed in 0u64..1000, m in 1usize..200, n in 1usize..200) {
            let map = LiftMap::coupled_shear(0.1, 0.0, 0.3, 0.2);
            let poly = ConvexPolygon::from_vertices(vec![
                RationalVec2::from_f64([0.0, -0.1]).unwrap(),
                RationalVec2::from_f64([0.2, 0.0]).unwrap(),
                RationalVec2::from_f64([0.1, 0.15]).unwrap(),
            ]).unwrap();
            let fp = FloatPolygon::new(&poly);
            let pts = pseudo_orbit(&map, [0.4, 0.6], (m + n) as u64, 0.05, NoiseMode::Uniform, seed).unwrap();
            let d = |a: usize, b: usize| fp.distance([pts[b][0] - pts[a][0], pts[b][1] - pts[a][1]], (b - a) as f64);
            prop_assert!(d(0, m + n) <= d(m, m + n) + d(0, m) + 1e-12);
        }
    }
}
