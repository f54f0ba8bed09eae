mod plot;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use rotaset_core::deviations::{
    deviation_constant, max_deviation, write_trace_csv, DeviationConfig, DeviationKind, DeviationReport, NoiseMode,
};
use rotaset_core::estimation::{lebesgue_rotation_vector, orbit_hull_estimate, write_birkhoff_csv};
use rotaset_core::geometry::{parse_rational, ConvexPolygon, Norm, RationalVec2};
use rotaset_core::graph::{build_graph, pseudo_rotation_polygon, Mode};
use rotaset_core::perturbation::{destabilize, probe_stability_with, ProbeOptions};
use rotaset_core::torus::{load_map, verify_lift_at, LiftMap, MapConfig};
use rotaset_core::Error;

#[derive(Parser)]
#[command(name = "rotaset", version, about = "Rotation sets of torus homeomorphisms")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "ROTASET_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = NormArg::Euclidean)]
    norm: NormArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Euclidean,
    Max,
}

impl From<NormArg> for Norm {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Euclidean => Norm::Euclidean,
            NormArg::Max => Norm::Max,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Inner,
    Outer,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Uniform,
    Boundary,
    Locked,
}

#[derive(Args)]
struct MapArg {
    /// Map config (JSON).
    #[arg(long)]
    map: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Inner or outer δ-pseudo-rotation polygon from the cell graph.
    PseudoSet {
        #[command(flatten)]
        map: MapArg,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        grid: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Outer)]
        mode: ModeArg,
        /// Also write the edge list in binary form.
        #[arg(long)]
        export_graph: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Hull of sampled Birkhoff vectors.
    OrbitHull {
        #[command(flatten)]
        map: MapArg,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, short = 'n', default_value_t = 10_000)]
        length: u64,
        /// Per-sample CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Mean displacement against Lebesgue measure.
    Lebesgue {
        #[command(flatten)]
        map: MapArg,
        #[arg(long, default_value_t = 512)]
        resolution: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Stability verdict from the inner/outer sandwich and the orbit hull.
    Probe {
        #[command(flatten)]
        map: MapArg,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        grid: usize,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long, default_value_t = 4000)]
        orbit_length: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Destabilizing perturbation at a rational vertex.
    Perturb {
        #[command(flatten)]
        map: MapArg,
        /// Polygon JSON (any artifact with vertices).
        #[arg(long)]
        polygon: PathBuf,
        /// Vertex as "p1/q,p2/q".
        #[arg(long, value_parser = parse_vertex)]
        vertex: RationalVec2,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Rotational deviations of orbits or pseudo-orbits.
    Deviations {
        #[command(flatten)]
        map: MapArg,
        /// Polygon JSON (any artifact with vertices).
        #[arg(long)]
        polygon: PathBuf,
        /// Noise bound; 0 follows true orbits.
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, short = 'n', default_value_t = 100_000)]
        steps: u64,
        #[arg(long, value_enum, default_value_t = NoiseArg::Uniform)]
        noise: NoiseArg,
        /// Push direction for locked noise, "x,y".
        #[arg(long, value_parser = parse_pair, default_value = "1,0")]
        direction: [f64; 2],
        /// Base point, "x,y".
        #[arg(long, value_parser = parse_pair, default_value = "0,0")]
        start: [f64; 2],
        /// Independent runs; each gets its own seed derived from --seed.
        #[arg(long, default_value_t = 1)]
        runs: u64,
        /// Stability tolerance used for the bound.
        #[arg(long, conflicts_with = "bound")]
        epsilon: Option<f64>,
        /// Explicit bound to test against.
        #[arg(long)]
        bound: Option<f64>,
        /// Trace CSV of the worst run.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// SVG rendering of polygons, orbit clouds and deviation traces.
    Plot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Structural checks on a map config.
    VerifyMap {
        #[command(flatten)]
        map: MapArg,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(',').ok_or("expected \"x,y\"")?;
    let f = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    let v = [f(a)?, f(b)?];
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err("coordinates must be finite".into())
    }
}

fn parse_vertex(s: &str) -> Result<RationalVec2, String> {
    let (a, b) = s.split_once(',').ok_or("expected \"p1/q,p2/q\"")?;
    let x = parse_rational(a.trim()).map_err(|e| e.to_string())?;
    let y = parse_rational(b.trim()).map_err(|e| e.to_string())?;
    Ok(RationalVec2::new(x, y))
}

/// Failure of a command: a library error or a check that did not pass.
struct Failure {
    kind: String,
    message: String,
    detail: Option<Value>,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { kind: e.kind().to_string(), message: e.to_string(), detail: None }
    }
}

type CmdResult = Result<(), Failure>;

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Error::Io(format!("{}: {e}", path.display())).into()
}

/// Pretty JSON with a trailing newline, to a file or stdout.
fn emit<T: Serialize>(value: &T, path: Option<&Path>) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| io_failure(p, e)),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::from(e).into()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

/// Map config re-serialized for provenance.
fn load(arg: &MapArg) -> Result<(LiftMap, Value), Failure> {
    let config = MapConfig::load(&arg.map)?;
    let map = load_map(&arg.map)?;
    Ok((map, serde_json::to_value(config).map_err(Error::from)?))
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    Ok(serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?)
}

/// Polygon stored at the top level of an artifact or under
/// `rotation_polygon`, `polygon` or `outer`.
fn read_polygon(path: &Path) -> Result<ConvexPolygon, Failure> {
    let v = read_json(path)?;
    let node = ["rotation_polygon", "polygon", "outer"]
        .iter()
        .filter_map(|k| v.get(*k))
        .find(|n| n.get("vertices").is_some())
        .unwrap_or(&v);
    Ok(serde_json::from_value(node.clone()).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?)
}

/// Artifact body plus the parameters that produced it.
fn with_provenance<T: Serialize>(body: &T, command: &str, params: Value) -> Result<Value, Failure> {
    let mut v = serde_json::to_value(body).map_err(Error::from)?;
    let meta = json!({ "command": command, "version": env!("CARGO_PKG_VERSION"), "params": params });
    match v.as_object_mut() {
        Some(obj) => {
            obj.insert("provenance".into(), meta);
            Ok(v)
        }
        None => Ok(json!({ "result": v, "provenance": meta })),
    }
}

/// Seed of run `k`, drawn from a stream of the master seed.
fn run_seed(seed: u64, k: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng.gen()
}

fn run(cli: Cli) -> CmdResult {
    let norm: Norm = cli.norm.into();
    let norm_name = serde_json::to_value(norm).map_err(Error::from)?;
    match cli.command {
        Command::PseudoSet { map, delta, grid, mode, export_graph, output } => {
            let (lift, config) = load(&map)?;
            let mode = match mode {
                ModeArg::Inner => Mode::Inner,
                ModeArg::Outer => Mode::Outer,
            };
            let graph = build_graph(&lift, grid, delta, mode, norm)?;
            if let Some(path) = &export_graph {
                graph.write_binary(path)?;
            }
            let poly = pseudo_rotation_polygon(&graph)?;
            let params = json!({ "map": config, "delta": delta, "grid": grid, "mode": mode, "norm": norm_name });
            emit(&with_provenance(&poly, "pseudo-set", params)?, output.as_deref())
        }
        Command::OrbitHull { map, samples, length, csv, output } => {
            let (lift, config) = load(&map)?;
            let hull = orbit_hull_estimate(&lift, samples, length, cli.seed)?;
            if let Some(path) = &csv {
                let mut w = create(path)?;
                write_birkhoff_csv(&mut w, &hull.samples)?;
                w.flush().map_err(|e| io_failure(path, e))?;
            }
            let params = json!({ "map": config, "samples": samples, "length": length, "seed": cli.seed });
            emit(&with_provenance(&hull, "orbit-hull", params)?, output.as_deref())
        }
        Command::Lebesgue { map, resolution, output } => {
            let (lift, config) = load(&map)?;
            let est = lebesgue_rotation_vector(&lift, resolution)?;
            let params = json!({ "map": config, "resolution": resolution });
            emit(&with_provenance(&est, "lebesgue", params)?, output.as_deref())
        }
        Command::Probe { map, delta, grid, samples, orbit_length, output } => {
            let (lift, config) = load(&map)?;
            let options = ProbeOptions { norm, samples, orbit_length, seed: cli.seed, tolerance: None };
            let verdict = probe_stability_with(&lift, delta, grid, options)?;
            let params = json!({
                "map": config, "delta": delta, "grid": grid, "samples": samples,
                "orbit_length": orbit_length, "seed": cli.seed, "norm": norm_name,
            });
            emit(&with_provenance(&verdict, "probe", params)?, output.as_deref())
        }
        Command::Perturb { map, polygon, vertex, output } => {
            let (lift, config) = load(&map)?;
            let poly = read_polygon(&polygon)?;
            let d = destabilize(&lift, &poly, &vertex)?;
            let params = json!({ "map": config, "polygon": poly, "vertex": d.report.vertex });
            emit(&with_provenance(&d.report, "perturb", params)?, output.as_deref())
        }
        Command::Deviations {
            map,
            polygon,
            delta,
            steps,
            noise,
            direction,
            start,
            runs,
            epsilon,
            bound,
            csv,
            output,
        } => {
            let (lift, config) = load(&map)?;
            let poly = read_polygon(&polygon)?;
            let kind = if delta == 0.0 { DeviationKind::Orbit } else { DeviationKind::Pseudo };
            let osc = lift.osc().certified_bound;
            let constant = match (bound, epsilon) {
                (Some(c), _) => Some(c),
                (None, Some(e)) => Some(deviation_constant(osc, e, kind)?),
                (None, None) => None,
            };
            if runs == 0 {
                return Err(Error::InvalidParameter("--runs must be ≥ 1".into()).into());
            }
            let noise = match noise {
                NoiseArg::Uniform => NoiseMode::Uniform,
                NoiseArg::Boundary => NoiseMode::Boundary,
                NoiseArg::Locked => NoiseMode::DirectionLocked(direction),
            };
            let reports: Vec<DeviationReport> = (0..runs)
                .into_par_iter()
                .map(|k| {
                    let config = DeviationConfig { n_max: steps, delta, noise, seed: run_seed(cli.seed, k), constant };
                    max_deviation(&lift, &poly, start, &config)
                })
                .collect::<Result<_, _>>()?;
            let worst = reports
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.max_deviation.total_cmp(&b.1.max_deviation).then(b.0.cmp(&a.0)))
                .map(|(k, _)| k)
                .unwrap_or(0);
            if let Some(path) = &csv {
                let mut w = create(path)?;
                write_trace_csv(&mut w, &reports[worst])?;
                w.flush().map_err(|e| io_failure(path, e))?;
            }
            let summary = json!({
                "kind": kind,
                "constant": constant,
                "osc": osc,
                "epsilon": epsilon,
                "runs": runs,
                "violations": reports.iter().filter(|r| r.violated).count(),
                "violated": reports.iter().any(|r| r.violated),
                "max_deviation": reports[worst].max_deviation,
                "argmax_n": reports[worst].argmax_n,
                "worst_run": worst,
                "worst": reports[worst],
            });
            let params = json!({
                "map": config, "polygon": poly, "delta": delta, "steps": steps, "noise": noise,
                "start": start, "seed": cli.seed, "norm": norm_name,
            });
            emit(&with_provenance(&summary, "deviations", params)?, output.as_deref())
        }
        Command::Plot { inputs, output } => {
            let docs = inputs.iter().map(|p| read_json(p)).collect::<Result<Vec<_>, _>>()?;
            let svg = plot::render(&docs).map_err(|m| Failure::from(Error::Parse(m)))?;
            match output {
                Some(p) => std::fs::write(&p, svg).map_err(|e| io_failure(&p, e)),
                None => std::io::stdout().write_all(svg.as_bytes()).map_err(|e| Error::from(e).into()),
            }
        }
        Command::VerifyMap { map, resolution, output } => {
            let (lift, config) = load(&map)?;
            let report = verify_lift_at(&lift, resolution)?;
            let passed = report.passed();
            let mut doc = with_provenance(&report, "verify-map", json!({ "map": config, "resolution": resolution }))?;
            doc["passed"] = json!(passed);
            emit(&doc, output.as_deref())?;
            if passed {
                Ok(())
            } else {
                Err(Failure {
                    kind: "verification-failed".into(),
                    message: "the map failed a structural check".into(),
                    detail: Some(json!({ "notes": report.notes })),
                })
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = cli.threads.unwrap_or(0);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("{}", json!({ "error": "threads", "message": e.to_string() }));
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let mut v = json!({ "error": f.kind, "message": f.message });
            if let Some(d) = f.detail {
                v["detail"] = d;
            }
            eprintln!("{v}");
            ExitCode::from(1)
        }
    }
}
