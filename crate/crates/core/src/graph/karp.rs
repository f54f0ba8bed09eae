use super::{weight, Cycle, DisplacementGraph};
use crate::error::{Error, Result};

/// `a/b < c/d` for positive denominators.
fn less(a: (i128, i128), c: (i128, i128)) -> Result<bool> {
    let l = a.0.checked_mul(c.1);
    let r = c.0.checked_mul(a.1);
    match (l, r) {
        (Some(l), Some(r)) => Ok(l < r),
        _ => Err(Error::Overflow("cycle mean comparison".into())),
    }
}

/// Exact fraction `(numerator, denominator)` with positive denominator.
type Ratio = (i128, i128);

struct LocalEdge {
    from: usize,
    to: usize,
    weight: i128,
    label: [i32; 2],
}

/// Karp's algorithm on every strongly connected component, exact in i128.
pub(crate) fn max_mean_cycle(g: &DisplacementGraph, dir: [i64; 2]) -> Result<Cycle> {
    let comps = g.scc_sizes().len();
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); comps];
    for (u, &c) in g.scc_index().iter().enumerate() {
        members[c as usize].push(u as u32);
    }
    let mut local = vec![usize::MAX; g.node_count()];

    let mut best: Option<(Ratio, Vec<u32>, Vec<LocalEdge>)> = None;
    for (c, nodes) in members.into_iter().enumerate() {
        for (k, &u) in nodes.iter().enumerate() {
            local[u as usize] = k;
        }
        let mut edges = Vec::new();
        for (k, &u) in nodes.iter().enumerate() {
            g.for_each_successor(u, |v, w| {
                if g.scc_index()[v as usize] as usize == c {
                    edges.push(LocalEdge {
                        from: k,
                        to: local[v as usize],
                        weight: weight(g.step_of(u, v, w), dir),
                        label: w,
                    });
                }
            });
        }
        if edges.is_empty() {
            continue;
        }
        let lambda = karp_value(nodes.len(), &edges)?;
        let better = match &best {
            None => true,
            Some((b, _, _)) => less(*b, lambda)?,
        };
        if better {
            best = Some((lambda, nodes, edges));
        }
    }
    let Some(((s, l), nodes, edges)) = best else {
        return Err(Error::NoCycles);
    };
    extract_cycle(&nodes, &edges, s, l)
}

/// Walk tables `D_k(v)`: the heaviest walk of exactly k edges from node 0.
fn walk_table(m: usize, edges: &[LocalEdge]) -> Result<Vec<Vec<Option<i128>>>> {
    let mut d: Vec<Vec<Option<i128>>> = vec![vec![None; m]; m + 1];
    d[0][0] = Some(0);
    for k in 0..m {
        for e in edges {
            if let Some(x) = d[k][e.from] {
                let y = x.checked_add(e.weight).ok_or_else(|| Error::Overflow("walk weight".into()))?;
                let slot = &mut d[k + 1][e.to];
                if slot.is_none_or(|z| y > z) {
                    *slot = Some(y);
                }
            }
        }
    }
    Ok(d)
}

/// Maximum cycle mean of a strongly connected component as `(num, den)`.
fn karp_value(m: usize, edges: &[LocalEdge]) -> Result<(i128, i128)> {
    let d = walk_table(m, edges)?;
    let mut best: Option<(i128, i128)> = None;
    for v in 0..m {
        let Some(dm) = d[m][v] else { continue };
        let mut worst: Option<(i128, i128)> = None;
        for k in 0..m {
            if let Some(dk) = d[k][v] {
                let r = (dm - dk, (m - k) as i128);
                if worst.map_or(Ok(true), |w| less(r, w))? {
                    worst = Some(r);
                }
            }
        }
        if let Some(w) = worst {
            if best.map_or(Ok(true), |b| less(b, w))? {
                best = Some(w);
            }
        }
    }
    best.ok_or(Error::NoCycles)
}

/// Finds a cycle of mean `s/l` among the edges tight for the potentials
/// `π(v) = max_{k<m} (l·D_k(v) − k·s)`.
fn extract_cycle(nodes: &[u32], edges: &[LocalEdge], s: i128, l: i128) -> Result<Cycle> {
    let m = nodes.len();
    let d = walk_table(m, edges)?;
    let ovf = || Error::Overflow("potential".into());
    let mut pot: Vec<Option<i128>> = vec![None; m];
    for v in 0..m {
        for (k, row) in d.iter().enumerate().take(m) {
            if let Some(x) = row[v] {
                let val = l.checked_mul(x).and_then(|a| a.checked_sub((k as i128).checked_mul(s)?)).ok_or_else(ovf)?;
                if pot[v].is_none_or(|p| val > p) {
                    pot[v] = Some(val);
                }
            }
        }
    }
    let mut tight: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (idx, e) in edges.iter().enumerate() {
        if let (Some(pu), Some(pv)) = (pot[e.from], pot[e.to]) {
            let reach = pu.checked_add(l.checked_mul(e.weight).ok_or_else(ovf)?).ok_or_else(ovf)? - s;
            if reach == pv {
                tight[e.from].push(idx);
            }
        }
    }
    // iterative DFS; a back edge closes a cycle of tight edges
    let mut colour = vec![0u8; m];
    let mut via: Vec<usize> = vec![usize::MAX; m];
    for start in 0..m {
        if colour[start] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        colour[start] = 1;
        while let Some(&mut (u, ref mut pos)) = stack.last_mut() {
            if *pos < tight[u].len() {
                let e = tight[u][*pos];
                *pos += 1;
                let v = edges[e].to;
                match colour[v] {
                    0 => {
                        colour[v] = 1;
                        via[v] = e;
                        stack.push((v, 0));
                    }
                    1 => {
                        let mut path = vec![e];
                        let mut x = u;
                        while x != v {
                            let pe = via[x];
                            path.push(pe);
                            x = edges[pe].from;
                        }
                        path.reverse();
                        let mut cyc_nodes: Vec<u32> = path.iter().map(|&e| nodes[edges[e].from]).collect();
                        cyc_nodes.push(nodes[v]);
                        let labels = path.iter().map(|&e| edges[e].label).collect();
                        return Ok(Cycle { nodes: cyc_nodes, labels });
                    }
                    _ => {}
                }
            } else {
                colour[u] = 2;
                stack.pop();
            }
        }
    }
    Err(Error::InvalidCycle("no critical cycle among tight edges".into()))
}
