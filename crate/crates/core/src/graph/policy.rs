//! Policy iteration for the maximum cycle mean, followed by an exact
//! integer certificate.
//!
//! The floating-point phase is Howard's algorithm with lexicographic
//! (gain, bias) improvement. The exact phase takes the best policy cycle
//! `S/L` and checks with Bellman–Ford passes on `(rank, potential)` keys that
//! no cycle has `Σ (L·ω − S) > 0`. A cycle appearing in the parent graph of
//! those passes beats the candidate and restarts the search from it.

use std::ops::Add;

use rayon::prelude::*;

use super::{weight, Cycle, DisplacementGraph, Storage};
use crate::error::{Error, Result};

const DEAD: u32 = u32::MAX;
const MAX_POLICY_ROUNDS: usize = 10_000;
const MAX_RESTARTS: usize = 256;

#[derive(Clone, Copy, Debug)]
struct Choice {
    to: u32,
    label: [i32; 2],
    weight: i128,
}

#[derive(Clone, Copy, Debug)]
struct Best<T> {
    choice: Choice,
    rank: u32,
    val: T,
}

#[derive(Clone, Copy)]
struct Entry<T> {
    rank: u32,
    idx: u32,
    val: T,
}

#[inline]
fn beats<T: PartialOrd>(a_rank: u32, a_val: &T, b_rank: u32, b_val: &T) -> bool {
    a_rank < b_rank || (a_rank == b_rank && a_val > b_val)
}

#[inline]
fn pick<T: PartialOrd + Copy>(a: Entry<T>, b: Entry<T>) -> Entry<T> {
    if beats(b.rank, &b.val, a.rank, &a.val) {
        b
    } else {
        a
    }
}

trait Value: Copy + Default + PartialOrd + Add<Output = Self> + Send + Sync {}
impl<T: Copy + Default + PartialOrd + Add<Output = T> + Send + Sync> Value for T {}

/// Range-maximum tables over extended lattice rows, kept between rounds.
struct Tables<T> {
    levels: Vec<Vec<Entry<T>>>,
}

impl<T> Tables<T> {
    fn new() -> Self {
        Tables { levels: Vec::new() }
    }
}

/// For every live node, the out-edge maximizing `(−rank(v), val(v) + lin(ω) + c)`.
fn best_choices<T: Value>(
    g: &DisplacementGraph,
    dir: [i64; 2],
    rank: &[u32],
    val: &[T],
    lin: impl Fn(i128) -> T + Sync,
    c: T,
    tables: &mut Tables<T>,
) -> Vec<Option<Best<T>>> {
    match &g.storage {
        Storage::Explicit { offsets, targets, labels } => (0..g.node_count())
            .into_par_iter()
            .map(|u| {
                if rank[u] == DEAD {
                    return None;
                }
                let mut best: Option<Best<T>> = None;
                for k in offsets[u] as usize..offsets[u + 1] as usize {
                    let v = targets[k] as usize;
                    if rank[v] == DEAD {
                        continue;
                    }
                    let w = weight(g.step_of(u as u32, v as u32, labels[k]), dir);
                    let cand = val[v] + lin(w) + c;
                    if best.as_ref().is_none_or(|b| beats(rank[v], &cand, b.rank, &b.val)) {
                        best = Some(Best {
                            choice: Choice { to: v as u32, label: labels[k], weight: w },
                            rank: rank[v],
                            val: cand,
                        });
                    }
                }
                best
            })
            .collect(),
        Storage::Lattice { n, row_start, spans } => {
            let n = *n;
            let width = 2 * n;
            let ni = n as i64;
            let longest = spans.iter().map(|s| (s.hi - s.lo + 1) as usize).max().unwrap_or(1).min(width);
            let depth = (usize::BITS - longest.leading_zeros()) as usize;
            let levels = &mut tables.levels;
            levels.resize_with(depth, Vec::new);
            let blank = Entry { rank: DEAD, idx: 0, val: T::default() };
            for level in levels.iter_mut() {
                level.resize(n * width, blank);
            }
            levels[0].par_iter_mut().enumerate().for_each(|(k, e)| {
                let (j, i) = (k / width, k % width);
                let v = j * n + i % n;
                *e = Entry { rank: rank[v], idx: i as u32, val: val[v] + lin(dir[0] as i128 * i as i128) };
            });
            for p in 1..depth {
                let span = 1 << (p - 1);
                let (lower, upper) = levels.split_at_mut(p);
                let prev = &lower[p - 1];
                upper[0].par_iter_mut().enumerate().for_each(|(k, e)| {
                    *e = if k % width + 2 * span <= width { pick(prev[k], prev[k + span]) } else { prev[k] };
                });
            }
            let levels = &tables.levels;
            let query = |jj: usize, a: usize, b: usize| {
                let len = b - a + 1;
                let p = (usize::BITS - 1 - len.leading_zeros()) as usize;
                let row = &levels[p][jj * width..(jj + 1) * width];
                pick(row[a], row[b + 1 - (1 << p)])
            };
            (0..n * n)
                .into_par_iter()
                .map(|u| {
                    let (iu, ju) = ((u % n) as i64, (u / n) as i64);
                    let mut best: Option<Best<T>> = None;
                    for s in &spans[row_start[u] as usize..row_start[u + 1] as usize] {
                        let jabs = ju + s.dj as i64;
                        let jj = jabs.rem_euclid(ni) as usize;
                        let row_w = dir[1] as i128 * (jabs - ju) as i128;
                        let (lo, hi) = (iu + s.lo as i64, iu + s.hi as i64);
                        let mut a = lo;
                        while a <= hi {
                            let k = a.div_euclid(ni);
                            let b = hi.min(k * ni + width as i64 - 1);
                            let e = query(jj, (a - k * ni) as usize, (b - k * ni) as usize);
                            let iabs = e.idx as i64 + k * ni;
                            let shift = dir[0] as i128 * (k * ni - iu) as i128 + row_w;
                            let cand = e.val + lin(shift) + c;
                            if best.as_ref().is_none_or(|bst| beats(e.rank, &cand, bst.rank, &bst.val)) {
                                let w = dir[0] as i128 * (iabs - iu) as i128 + row_w;
                                best = Some(Best {
                                    choice: Choice {
                                        to: (jj * n + iabs.rem_euclid(ni) as usize) as u32,
                                        label: [iabs.div_euclid(ni) as i32, jabs.div_euclid(ni) as i32],
                                        weight: w,
                                    },
                                    rank: e.rank,
                                    val: cand,
                                });
                            }
                            a = b + 1;
                        }
                    }
                    best
                })
                .collect()
        }
    }
}

/// Nodes from which an infinite walk exists.
fn live_nodes(g: &DisplacementGraph) -> Vec<bool> {
    let n = g.node_count();
    if let Storage::Lattice { row_start, .. } = &g.storage {
        if row_start.windows(2).all(|w| w[1] > w[0]) {
            return vec![true; n];
        }
    }
    let mut outdeg = vec![0usize; n];
    let mut preds: Vec<Vec<u32>> = vec![Vec::new(); n];
    for u in 0..n as u32 {
        g.for_each_successor(u, |v, _| {
            outdeg[u as usize] += 1;
            preds[v as usize].push(u);
        });
    }
    let mut live = vec![true; n];
    let mut queue: Vec<usize> = (0..n).filter(|&u| outdeg[u] == 0).collect();
    while let Some(v) = queue.pop() {
        if !live[v] {
            continue;
        }
        live[v] = false;
        for &p in &preds[v] {
            outdeg[p as usize] -= 1;
            if outdeg[p as usize] == 0 {
                queue.push(p as usize);
            }
        }
    }
    live
}

struct Evaluation {
    class: Vec<u32>,
    /// (weight sum, length, a node on the cycle)
    classes: Vec<(i128, i128, u32)>,
    bias: Vec<f64>,
}

/// Gains and biases of a policy (a functional graph on the live nodes).
fn evaluate(policy: &[Option<Choice>]) -> Evaluation {
    let n = policy.len();
    let mut class = vec![DEAD; n];
    let mut bias = vec![0.0f64; n];
    let mut stamp = vec![usize::MAX; n];
    let mut classes: Vec<(i128, i128, u32)> = Vec::new();
    let mut gains: Vec<f64> = Vec::new();
    let mut path = Vec::new();
    for start in 0..n {
        if policy[start].is_none() || class[start] != DEAD {
            continue;
        }
        path.clear();
        let mut u = start;
        while class[u] == DEAD && stamp[u] != start {
            stamp[u] = start;
            path.push(u);
            u = policy[u].expect("live policy").to as usize;
        }
        if class[u] == DEAD {
            let pos = path.iter().position(|&x| x == u).expect("cycle entry");
            let cyc = &path[pos..];
            let s: i128 = cyc.iter().map(|&x| policy[x].expect("live").weight).sum();
            let l = cyc.len() as i128;
            let c = classes.len() as u32;
            classes.push((s, l, u as u32));
            let gain = s as f64 / l as f64;
            gains.push(gain);
            for &x in cyc {
                class[x] = c;
            }
            bias[u] = 0.0;
            for &x in cyc[1..].iter().rev() {
                let ch = policy[x].expect("live");
                bias[x] = ch.weight as f64 - gain + bias[ch.to as usize];
            }
            path.truncate(pos);
        }
        for &x in path.iter().rev() {
            let ch = policy[x].expect("live");
            let c = class[ch.to as usize];
            class[x] = c;
            bias[x] = ch.weight as f64 - gains[c as usize] + bias[ch.to as usize];
        }
    }
    Evaluation { class, classes, bias }
}

fn cmp_ratio(a: (i128, i128), b: (i128, i128)) -> std::cmp::Ordering {
    (a.0 * b.1).cmp(&(b.0 * a.1))
}

/// Rank of every class: 0 for the largest gain, equal gains share a rank.
fn class_ranks(classes: &[(i128, i128, u32)]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by(|&a, &b| cmp_ratio((classes[b].0, classes[b].1), (classes[a].0, classes[a].1)));
    let mut ranks = vec![0u32; classes.len()];
    let mut r = 0u32;
    for k in 0..order.len() {
        if k > 0
            && cmp_ratio((classes[order[k]].0, classes[order[k]].1), (classes[order[k - 1]].0, classes[order[k - 1]].1))
                != std::cmp::Ordering::Equal
        {
            r += 1;
        }
        ranks[order[k]] = r;
    }
    ranks
}

fn node_ranks(ev: &Evaluation) -> Vec<u32> {
    let cr = class_ranks(&ev.classes);
    ev.class.iter().map(|&c| if c == DEAD { DEAD } else { cr[c as usize] }).collect()
}

/// Howard iterations from `policy` until no strict improvement.
fn improve(g: &DisplacementGraph, dir: [i64; 2], policy: &mut [Option<Choice>]) -> Evaluation {
    let lin = |w: i128| w as f64;
    let mut tables = Tables::new();
    for _ in 0..MAX_POLICY_ROUNDS {
        let ev = evaluate(policy);
        let rank = node_ranks(&ev);
        let best = best_choices(g, dir, &rank, &ev.bias, lin, 0.0, &mut tables);
        let mut changed = false;
        for (u, b) in best.into_iter().enumerate() {
            let (Some(b), Some(cur)) = (b, policy[u]) else {
                continue;
            };
            let cur_val = ev.bias[cur.to as usize] + cur.weight as f64;
            let tol = 1e-10 * (1.0 + cur_val.abs());
            if b.rank < rank[u] || (b.rank == rank[u] && b.val > cur_val + tol) {
                policy[u] = Some(b.choice);
                changed = true;
            }
        }
        if !changed {
            return ev;
        }
    }
    evaluate(policy)
}

fn policy_cycle(policy: &[Option<Choice>], root: u32) -> Cycle {
    let mut nodes = vec![root];
    let mut labels = Vec::new();
    let mut u = root;
    loop {
        let ch = policy[u as usize].expect("live");
        labels.push(ch.label);
        u = ch.to;
        nodes.push(u);
        if u == root {
            return Cycle { nodes, labels };
        }
    }
}

/// Outcome of the exact phase.
enum Verdict {
    Certified,
    /// A parent-graph cycle that beats the candidate: its edges.
    Better(Vec<(u32, Choice)>),
    GaveUp,
}

fn certify(g: &DisplacementGraph, dir: [i64; 2], ev: &Evaluation, s: i128, l: i128) -> Verdict {
    let n = g.node_count();
    let mut rank = node_ranks(ev);
    let mut pot: Vec<i128> = ev.bias.iter().map(|&x| (l as f64 * x).round() as i128).collect();
    let mut parent: Vec<Option<Choice>> = vec![None; n];
    let lin = move |w: i128| l * w;
    let max_passes = 4 * n + 64;
    let mut tables = Tables::new();
    for _ in 0..max_passes {
        let best = best_choices(g, dir, &rank, &pot, lin, -s, &mut tables);
        let mut changed = false;
        for (u, b) in best.into_iter().enumerate() {
            let Some(b) = b else { continue };
            if beats(b.rank, &b.val, rank[u], &pot[u]) {
                rank[u] = b.rank;
                pot[u] = b.val;
                parent[u] = Some(b.choice);
                changed = true;
            }
        }
        if !changed {
            return Verdict::Certified;
        }
        if let Some(c) = better_parent_cycle(&parent, s, l) {
            return Verdict::Better(c);
        }
    }
    Verdict::GaveUp
}

/// Looks for a cycle in the parent graph whose mean exceeds `s/l`.
fn better_parent_cycle(parent: &[Option<Choice>], s: i128, l: i128) -> Option<Vec<(u32, Choice)>> {
    let n = parent.len();
    let mut stamp = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut path: Vec<usize> = Vec::new();
    for start in 0..n {
        if done[start] || parent[start].is_none() {
            continue;
        }
        path.clear();
        let mut u: usize = start;
        loop {
            if done[u] {
                break;
            }
            if stamp[u] == start {
                let pos = path.iter().position(|&x| x == u).expect("cycle entry");
                let cyc: Vec<(u32, Choice)> =
                    path[pos..].iter().map(|&x| (x as u32, parent[x].expect("parent"))).collect();
                let cs: i128 = cyc.iter().map(|(_, c)| c.weight).sum();
                let cl = cyc.len() as i128;
                if cs * l > s * cl {
                    return Some(cyc);
                }
                break;
            }
            stamp[u] = start;
            path.push(u);
            match parent[u] {
                Some(c) => u = c.to as usize,
                None => break,
            }
        }
        for &x in &path {
            done[x] = true;
        }
    }
    None
}

/// Final policy of a query, reusable as the starting policy of a nearby one.
pub(crate) type Seed = Vec<Option<(u32, [i32; 2])>>;

/// Maximum mean cycle of `⟨step, dir⟩`, optionally starting from an earlier
/// policy. The flag is false if the exact verification hit its pass budget.
pub(crate) fn max_mean_cycle(g: &DisplacementGraph, dir: [i64; 2], seed: Option<&Seed>) -> Result<(Cycle, bool, Seed)> {
    let n = g.node_count();
    let live = live_nodes(g);
    if !live.iter().any(|&x| x) {
        return Err(Error::NoCycles);
    }
    let mut policy: Vec<Option<Choice>> = match seed {
        Some(seed) if seed.len() == n => seed
            .iter()
            .enumerate()
            .map(|(u, s)| {
                s.map(|(to, label)| Choice { to, label, weight: weight(g.step_of(u as u32, to, label), dir) })
            })
            .collect(),
        _ => {
            let zero_rank: Vec<u32> = live.iter().map(|&a| if a { 0 } else { DEAD }).collect();
            let lin = |w: i128| w as f64;
            best_choices(g, dir, &zero_rank, &vec![0.0; n], lin, 0.0, &mut Tables::new())
                .into_iter()
                .map(|b| b.map(|b| b.choice))
                .collect()
        }
    };
    let seed_of = |p: &[Option<Choice>]| p.iter().map(|c| c.map(|c| (c.to, c.label))).collect::<Seed>();

    for _ in 0..MAX_RESTARTS {
        let ev = improve(g, dir, &mut policy);
        let ranks = class_ranks(&ev.classes);
        let top = (0..ev.classes.len()).find(|&c| ranks[c] == 0).expect("a policy cycle");
        let (s, l, root) = ev.classes[top];
        match certify(g, dir, &ev, s, l) {
            Verdict::Certified => return Ok((policy_cycle(&policy, root), true, seed_of(&policy))),
            Verdict::GaveUp => return Ok((policy_cycle(&policy, root), false, seed_of(&policy))),
            Verdict::Better(edges) => {
                for (u, c) in edges {
                    policy[u as usize] = Some(c);
                }
            }
        }
    }
    let ev = evaluate(&policy);
    let ranks = class_ranks(&ev.classes);
    let top = (0..ev.classes.len()).find(|&c| ranks[c] == 0).expect("a policy cycle");
    Ok((policy_cycle(&policy, ev.classes[top].2), false, seed_of(&policy)))
}
