//! End-to-end acceptance checks. Runs every criterion in sequence, writes one
//! PASS/FAIL line per criterion to stderr (uncaptured), then fails if any
//! criterion failed.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rotaset_core::deviations::{deviation_constant, max_deviation, DeviationConfig, DeviationKind, NoiseMode};
use rotaset_core::estimation::{lebesgue_rotation_vector, orbit_estimate, sample_point};
use rotaset_core::geometry::{hausdorff, max_vertex_denominator, ConvexPolygon, FloatPolygon, Norm, RationalVec2};
use rotaset_core::graph::{
    build_graph, max_mean_cycle_dir, pseudo_rotation_polygon, Algorithm, DisplacementGraph, Edge, Mode,
};
use rotaset_core::perturbation::{
    destabilize, find_close_pair, pigeonhole_radius, probe_stability, split_vectors, Verdict,
};
use rotaset_core::torus::{LiftMap, PinnedParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn line(text: &str) {
    // bypasses the harness's output capture
    let mut err = std::io::stderr();
    let _ = writeln!(err, "{text}");
}

fn criterion(id: u32, name: &str, budget: Duration, body: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    let (pass, detail) = match result {
        Ok(o) => (o.pass && elapsed <= budget, o.detail),
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    let over = if elapsed > budget { " over time budget" } else { "" };
    line(&format!(
        "criterion {id} [{name}]: {} ({:.1}s / {:.0}s{over}) {detail}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    ));
    pass
}

fn torus_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = |x: f64, y: f64| {
        let t = (x - y).rem_euclid(1.0);
        t.min(1.0 - t)
    };
    d(a[0], b[0]).hypot(d(a[1], b[1]))
}

fn close_pairs() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut failures, mut worst_ratio) = (0usize, 0.0f64);
    for q in 2..=50usize {
        let bound = pigeonhole_radius(q);
        for trial in 0..10_000 {
            let pts: Vec<[f64; 2]> = (0..q).map(|_| [rng.gen(), rng.gen()]).collect();
            let pair = find_close_pair(&pts).expect("pair");
            let d = torus_dist(pts[pair.i], pts[pair.j]);
            let mut ok = pair.i < pair.j && pair.j < q && (d - pair.distance).abs() <= 1e-15 && d < bound;
            if trial < 50 {
                let mut best = f64::INFINITY;
                for a in 0..q {
                    for b in a + 1..q {
                        best = best.min(torus_dist(pts[a], pts[b]));
                    }
                }
                ok &= (best - d).abs() <= 1e-15;
            }
            worst_ratio = worst_ratio.max(d / bound);
            failures += usize::from(!ok);
        }
    }
    Outcome { pass: failures == 0, detail: format!("failures {failures}, worst distance/bound {worst_ratio:.4}") }
}

fn destabilization() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (p, q) in [(1i64, 2u32), (2, 5)] {
        let map = LiftMap::pinned(PinnedParams::new(p, q, 0.9, 0.9).unwrap());
        let vertex = RationalVec2::from_ratios(p, q as i64, 0, 1);
        let poly = ConvexPolygon::from_vertices(vec![RationalVec2::zero(), vertex.clone()]).unwrap();
        let d = destabilize(&map, &poly, &vertex).expect("destabilize");
        let budget = 2.0 / (std::f64::consts::PI * q as f64).sqrt();

        // independent size check: random points plus the relocated one
        let mut rng = ChaCha8Rng::seed_from_u64(q as u64);
        let mut size = 0.0f64;
        let probes = (0..200_000).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).chain([d.report.relocated]);
        for z in probes {
            let (a, b) = (map.eval(z), d.map.eval(z));
            size = size.max((a[0] - b[0]).hypot(a[1] - b[1]));
        }

        // the periodic orbit, recomputed from its first point
        let len = d.report.certified_orbit.len() as u64 - 1;
        let z0 = d.report.certified_orbit[0];
        let end = d.map.iterate(z0, len);
        let nv = d.new_vector.to_f64();
        let residual = (end[0] - z0[0] - nv[0] * len as f64).hypot(end[1] - z0[1] - nv[1] * len as f64);

        let ok = d.perturbation_size < budget
            && size <= d.perturbation_size + 1e-12
            && residual < 1e-9
            && !poly.contains(&d.new_vector);
        pass &= ok;
        detail.push(format!(
            "q={q}: size {:.4} (sampled {size:.4}) < {budget:.4}, new vector {}, residual {residual:.1e}",
            d.perturbation_size, d.new_vector
        ));
    }
    Outcome { pass, detail: detail.join("; ") }
}

/// Evidence-stable polygons found by the probes, with their tolerance.
fn probe_runs() -> Vec<(String, f64, Option<ConvexPolygon>, u64)> {
    let mut out = Vec::new();
    for (p, q, delta) in [(1i64, 2u32, 0.05), (2, 5, 0.1)] {
        let map = LiftMap::pinned(PinnedParams::new(p, q, 0.9, 0.9).unwrap());
        let v = probe_stability(&map, delta, 128).expect("probe");
        let poly = (v.verdict == Verdict::EvidenceStable).then(|| v.rotation_polygon.clone().expect("polygon"));
        out.push((format!("pinned {p}/{q} at {delta}"), delta, poly, v.max_vertex_denominator));
    }
    out
}

fn denominators(runs: &[(String, f64, Option<ConvexPolygon>, u64)]) -> Outcome {
    let five = max_vertex_denominator(0.5).unwrap();
    let mut pass = five == 5;
    let mut stable = 0;
    for (name, delta, poly, bound) in runs {
        if let Some(p) = poly {
            stable += 1;
            let ok = *bound == max_vertex_denominator(*delta).unwrap() && p.max_denominator() <= BigInt::from(*bound);
            if !ok {
                line(&format!("  {name}: denominator {} exceeds {bound}", p.max_denominator()));
            }
            pass &= ok;
        }
    }
    pass &= stable > 0;
    Outcome { pass, detail: format!("bound(0.5) = {five}, {stable} evidence-stable verdicts checked") }
}

struct Sandwich {
    name: &'static str,
    map: LiftMap,
    delta: f64,
    inner: ConvexPolygon,
    outer: ConvexPolygon,
}

const TRANSLATION: [f64; 2] = [0.31, -0.17];
const GRID: usize = 128;

fn sandwiches() -> Vec<Sandwich> {
    let maps = [
        ("translation", LiftMap::translation(TRANSLATION[0], TRANSLATION[1])),
        ("shear", LiftMap::shear(0.3)),
        ("coupled shear", LiftMap::coupled_shear(0.0, 0.0, 0.3, 0.2)),
    ];
    let mut out = Vec::new();
    for (name, map) in maps {
        for delta in [0.1, 0.05, 0.025] {
            let poly = |mode| {
                let g = build_graph(&map, GRID, delta, mode, Norm::Euclidean).expect("graph");
                let p = pseudo_rotation_polygon(&g).expect("polygon");
                assert!(p.certified, "{name} {mode} {delta} not certified");
                p.polygon
            };
            let (inner, outer) = (poly(Mode::Inner), poly(Mode::Outer));
            out.push(Sandwich { name, map: map.clone(), delta, inner, outer });
        }
    }
    out
}

fn graph_sandwich(all: &[Sandwich]) -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    let point = ConvexPolygon::point(RationalVec2::from_f64(TRANSLATION).unwrap());
    let r = Norm::Euclidean.cell_radius(1.0 / GRID as f64);
    for s in all {
        if !s.outer.contains_polygon(&s.inner) {
            pass = false;
            notes.push(format!("{} δ={}: inner not inside outer", s.name, s.delta));
        }
        if s.name == "translation" {
            let slack = s.delta + r + s.map.modulus(r, Norm::Euclidean);
            let (ho, hi) = (hausdorff(&s.outer, &point), hausdorff(&s.inner, &point));
            if ho > slack || hi > slack {
                pass = false;
            }
            notes.push(format!("δ={}: outer {ho:.4} inner {hi:.4} slack {slack:.4}", s.delta));
        }
    }
    for w in all.windows(2).filter(|w| w[0].name == w[1].name) {
        if !w[0].outer.contains_polygon(&w[1].outer) || !w[0].inner.contains_polygon(&w[1].inner) {
            pass = false;
            notes.push(format!("{}: no shrinkage from δ={} to δ={}", w[0].name, w[0].delta, w[1].delta));
        }
    }
    Outcome { pass, detail: notes.join("; ") }
}

/// Every simple cycle, as (label sum, length).
fn simple_cycles(n: usize, edges: &[Edge]) -> Vec<([i64; 2], i64)> {
    fn walk(
        start: u32,
        u: u32,
        sum: [i64; 2],
        len: i64,
        seen: &mut Vec<bool>,
        edges: &[Edge],
        out: &mut Vec<([i64; 2], i64)>,
    ) {
        for e in edges.iter().filter(|e| e.from == u) {
            let s = [sum[0] + e.label[0] as i64, sum[1] + e.label[1] as i64];
            if e.to == start {
                out.push((s, len + 1));
            } else if e.to > start && !seen[e.to as usize] {
                seen[e.to as usize] = true;
                walk(start, e.to, s, len + 1, seen, edges, out);
                seen[e.to as usize] = false;
            }
        }
    }
    let mut out = Vec::new();
    for s in 0..n as u32 {
        let mut seen = vec![false; n];
        seen[s as usize] = true;
        walk(s, s, [0, 0], 0, &mut seen, edges, &mut out);
    }
    out
}

fn karp_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut mismatches, mut queries, mut acyclic) = (0usize, 0usize, 0usize);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=10usize);
        let p = rng.gen_range(0.1..0.45);
        let mut edges = Vec::new();
        for u in 0..n as u32 {
            for v in 0..n as u32 {
                let copies = if rng.gen_bool(0.1) { 2 } else { 1 };
                for _ in 0..copies {
                    if rng.gen_bool(p) {
                        edges.push(Edge { from: u, to: v, label: [rng.gen_range(-3..=3), rng.gen_range(-3..=3)] });
                    }
                }
            }
        }
        let g = DisplacementGraph::from_edges(n, &edges).expect("graph");
        let cycles = simple_cycles(n, &edges);
        for _ in 0..16 {
            let d = loop {
                let d = [rng.gen_range(-20..=20i64), rng.gen_range(-20..=20i64)];
                if d != [0, 0] {
                    break d;
                }
            };
            queries += 1;
            let best = cycles
                .iter()
                .map(|(s, l)| BigRational::new(BigInt::from(s[0] * d[0] + s[1] * d[1]), BigInt::from(*l)))
                .max();
            match (max_mean_cycle_dir(&g, d, Algorithm::Karp), best) {
                (Ok(m), Some(b)) => {
                    let dir = RationalVec2::from_ints(d[0], d[1]);
                    let valid =
                        rotaset_core::graph::cycle_mean_vector(&g, &m.cycle).map(|v| v == m.mean).unwrap_or(false);
                    if m.value != b || m.mean.dot(&dir) != b || !valid {
                        mismatches += 1;
                    }
                }
                (Err(rotaset_core::Error::NoCycles), None) => acyclic += 1,
                _ => mismatches += 1,
            }
        }
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("{queries} queries, {mismatches} mismatches, {acyclic} on acyclic graphs"),
    }
}

fn deviation_checks(stable: Option<(ConvexPolygon, f64)>) -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    let a = deviation_constant(1.0, 0.2, DeviationKind::Pseudo).unwrap();
    let b = deviation_constant(1.0, 0.2, DeviationKind::Orbit).unwrap();
    pass &= (a - 382.172).abs() < 1e-3 && (b - 63.862).abs() < 1e-3;
    notes.push(format!("constants {a:.3} {b:.3}"));

    match stable {
        Some((poly, delta)) => {
            let map = LiftMap::pinned(PinnedParams::new(1, 2, 0.9, 0.9).unwrap());
            let c = deviation_constant(map.osc().certified_bound, delta, DeviationKind::Pseudo).unwrap();
            let modes = [NoiseMode::Uniform, NoiseMode::Boundary, NoiseMode::DirectionLocked([1.0, 0.0])];
            let mut worst = 0.0f64;
            let mut violations = 0;
            for seed in 0..1000u64 {
                let x0 = sample_point(99, seed);
                let config = DeviationConfig {
                    n_max: 100_000,
                    delta: delta / 2.0,
                    noise: modes[(seed % 3) as usize],
                    seed,
                    constant: Some(c),
                };
                let r = max_deviation(&map, &poly, x0, &config).unwrap();
                worst = worst.max(r.max_deviation);
                violations += usize::from(r.violated);
            }
            pass &= violations == 0;
            notes.push(format!("pinned: worst {worst:.4} vs C {c:.1}, {violations} violations"));
        }
        None => {
            pass = false;
            notes.push("no evidence-stable pinned polygon".into());
        }
    }

    let delta: f64 = 0.1;
    let m = LiftMap::translation(TRANSLATION[0], TRANSLATION[1]);
    let point = ConvexPolygon::point(RationalVec2::from_f64(TRANSLATION).unwrap());
    for c in [10.0, 41.2437, 382.172] {
        let n = (2.0 * c / delta).ceil() as u64;
        let config = DeviationConfig {
            n_max: n,
            delta,
            noise: NoiseMode::DirectionLocked([0.6, 0.8]),
            seed: 0,
            constant: Some(c),
        };
        let r = max_deviation(&m, &point, [0.3, 0.3], &config).unwrap();
        pass &= r.violated;
        notes.push(format!("translation: {:.1} > {c} by n = {n}", r.max_deviation));
    }
    Outcome { pass, detail: notes.join("; ") }
}

fn consistency(all: &[Sandwich]) -> Outcome {
    let pinned = LiftMap::pinned(PinnedParams::new(1, 2, 0.9, 0.9).unwrap());
    let pinned_outer =
        pseudo_rotation_polygon(&build_graph(&pinned, GRID, 0.05, Mode::Outer, Norm::Euclidean).unwrap())
            .unwrap()
            .polygon;
    let mut families: Vec<(&str, &LiftMap, &ConvexPolygon)> =
        all.iter().filter(|s| s.delta == 0.05).map(|s| (s.name, &s.map, &s.outer)).collect();
    families.push(("pinned", &pinned, &pinned_outer));

    let (mut birkhoff_violations, mut worst) = (0usize, 0.0f64);
    for (_, map, outer) in &families {
        let fp = FloatPolygon::new(outer);
        let sup = map.sup_phi(256);
        for k in 0..100 {
            let e = orbit_estimate(map, sample_point(7, k), 100_000, sup).unwrap();
            let d = fp.distance(e.vector, 1.0);
            worst = worst.max(d);
            birkhoff_violations += usize::from(d > e.error_radius);
        }
    }
    let mut lebesgue_violations = 0;
    let mut outers: Vec<(&LiftMap, &ConvexPolygon)> = all.iter().map(|s| (&s.map, &s.outer)).collect();
    outers.push((&pinned, &pinned_outer));
    let mut cache: Vec<(String, [f64; 2], f64)> = Vec::new();
    for (map, outer) in outers {
        let key = format!("{:?}", map.family());
        let (v, err) = match cache.iter().find(|c| c.0 == key) {
            Some(c) => (c.1, c.2),
            None => {
                let l = lebesgue_rotation_vector(map, 512).unwrap();
                cache.push((key, l.vector, l.error_bound));
                (l.vector, l.error_bound)
            }
        };
        lebesgue_violations += usize::from(FloatPolygon::new(outer).distance(v, 1.0) > err);
    }
    Outcome {
        pass: birkhoff_violations == 0 && lebesgue_violations == 0,
        detail: format!(
            "{} Birkhoff vectors, {birkhoff_violations} outside (largest distance {worst:.2e}); {lebesgue_violations} Lebesgue violations over {} polygons",
            families.len() * 100,
            all.len() + 1
        ),
    }
}

fn split_identity() -> Outcome {
    let (mut checked, mut failures) = (0usize, 0usize);
    for q in 2..=12i64 {
        for p1 in 0..q {
            for p2 in 0..q {
                if p1.gcd(&p2).gcd(&q) != 1 {
                    continue;
                }
                let v = RationalVec2::from_ratios(p1, q, p2, q);
                for k in 1..q {
                    for a in -3..=3 {
                        for b in -3..=3 {
                            checked += 1;
                            let Ok((v0, v1)) = split_vectors(q as u64, &v, k as u64, [a, b]) else {
                                failures += 1;
                                continue;
                            };
                            let r = |n: i64| BigRational::from_integer(BigInt::from(n));
                            let lhs_x = &v0.x * r(k) + &v1.x * r(q - k);
                            let lhs_y = &v0.y * r(k) + &v1.y * r(q - k);
                            let exact = lhs_x == &v.x * r(q) && lhs_y == &v.y * r(q);
                            let u0_ok = (&v0.x * r(k) - r(a)).is_zero() && (&v0.y * r(k) - r(b)).is_zero();
                            let distinct = v0 != v && v1 != v;
                            if !(exact && u0_ok && distinct) {
                                failures += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    Outcome { pass: failures == 0, detail: format!("{checked} cases, {failures} failures") }
}

#[test]
fn acceptance_criteria() {
    let secs = Duration::from_secs;
    let mut results = Vec::new();
    results.push(criterion(1, "close pairs under the pigeonhole radius", secs(30), close_pairs));
    results.push(criterion(2, "destabilization of q = 2 and q = 5 vertices", secs(240), destabilization));

    let mut runs = Vec::new();
    results.push(criterion(3, "vertex denominator bound", secs(600), || {
        runs = probe_runs();
        denominators(&runs)
    }));

    let mut all = Vec::new();
    results.push(criterion(4, "inner/outer sandwich at grid 128", secs(300), || {
        all = sandwiches();
        graph_sandwich(&all)
    }));
    results.push(criterion(5, "Karp against simple-cycle enumeration", secs(60), karp_oracle));

    let stable = runs.iter().find(|r| r.0.starts_with("pinned 1/2")).and_then(|r| r.2.clone().map(|p| (p, r.1)));
    results.push(criterion(6, "deviation constants and drift", secs(600), || deviation_checks(stable)));
    results.push(criterion(7, "Birkhoff and Lebesgue vectors inside outer polygons", secs(600), || {
        if all.is_empty() {
            return Outcome { pass: false, detail: "sandwich polygons unavailable".into() };
        }
        consistency(&all)
    }));
    results.push(criterion(8, "split identity", secs(5), split_identity));

    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
