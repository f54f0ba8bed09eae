use super::{DisplacementGraph, Storage};

/// Resumable position in a node's out-edge list.
#[derive(Clone, Copy, Default)]
struct Cursor {
    span: u32,
    offset: i32,
}

fn next_successor(g: &DisplacementGraph, u: u32, c: &mut Cursor) -> Option<u32> {
    match &g.storage {
        Storage::Lattice { n, row_start, spans } => {
            let n = *n as i64;
            let (a, b) = (row_start[u as usize], row_start[u as usize + 1]);
            loop {
                let k = a + c.span;
                if k >= b {
                    return None;
                }
                let s = spans[k as usize];
                let di = s.lo + c.offset;
                if di > s.hi {
                    c.span += 1;
                    c.offset = 0;
                    continue;
                }
                c.offset += 1;
                let i = (u as i64 % n + di as i64).rem_euclid(n);
                let j = (u as i64 / n + s.dj as i64).rem_euclid(n);
                return Some((j * n + i) as u32);
            }
        }
        Storage::Explicit { offsets, targets, .. } => {
            let k = offsets[u as usize] as usize + c.offset as usize;
            if k >= offsets[u as usize + 1] as usize {
                return None;
            }
            c.offset += 1;
            Some(targets[k])
        }
    }
}

/// Iterative Tarjan. Components are numbered in reverse topological order
/// (sinks first).
pub(crate) fn tarjan(g: &DisplacementGraph) -> (Vec<u32>, Vec<u32>) {
    const UNSEEN: u32 = u32::MAX;
    let n = g.node_count();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSEEN; n];
    let mut sizes = Vec::new();
    let mut stack: Vec<u32> = Vec::new();
    let mut call: Vec<(u32, Cursor)> = Vec::new();
    let mut counter = 0u32;

    for root in 0..n as u32 {
        if index[root as usize] != UNSEEN {
            continue;
        }
        index[root as usize] = counter;
        low[root as usize] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root as usize] = true;
        call.push((root, Cursor::default()));

        while let Some(top) = call.last_mut() {
            let u = top.0;
            match next_successor(g, u, &mut top.1) {
                Some(v) => {
                    if index[v as usize] == UNSEEN {
                        index[v as usize] = counter;
                        low[v as usize] = counter;
                        counter += 1;
                        stack.push(v);
                        on_stack[v as usize] = true;
                        call.push((v, Cursor::default()));
                    } else if on_stack[v as usize] {
                        low[u as usize] = low[u as usize].min(index[v as usize]);
                    }
                }
                None => {
                    call.pop();
                    if let Some(parent) = call.last() {
                        let p = parent.0 as usize;
                        low[p] = low[p].min(low[u as usize]);
                    }
                    if low[u as usize] == index[u as usize] {
                        let id = sizes.len() as u32;
                        let mut size = 0;
                        loop {
                            let w = stack.pop().expect("tarjan stack");
                            on_stack[w as usize] = false;
                            comp[w as usize] = id;
                            size += 1;
                            if w == u {
                                break;
                            }
                        }
                        sizes.push(size);
                    }
                }
            }
        }
    }
    (comp, sizes)
}
