//! Minimum-degree fill-reducing ordering on an explicit elimination graph.
//!
//! Circuit graphs here are quasi-planar with many degree-one leaves (probe
//! and qubit nodes hanging off a resonator), so the plain algorithm without
//! supervariables or approximate degrees is fast enough.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Returns `perm` with `perm[k]` = original index eliminated at step `k`.
/// Ties break on the lower original index, so the result is deterministic.
pub fn minimum_degree(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut graph: Vec<Vec<usize>> = adjacency
        .iter()
        .enumerate()
        .map(|(i, nbrs)| {
            let mut v: Vec<usize> = nbrs.iter().copied().filter(|&j| j != i).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();

    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        graph.iter().enumerate().map(|(i, v)| Reverse((v.len(), i))).collect();
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut merged = Vec::new();

    while let Some(Reverse((degree, p))) = heap.pop() {
        if done[p] || degree != graph[p].len() {
            continue;
        }
        done[p] = true;
        order.push(p);
        let clique = std::mem::take(&mut graph[p]);
        for &u in &clique {
            // graph[u] <- (graph[u] \ {p}) ∪ (clique \ {u}); both sorted.
            let own = &graph[u];
            merged.clear();
            let (mut i, mut j) = (0, 0);
            while i < own.len() || j < clique.len() {
                let a = own.get(i).copied().unwrap_or(usize::MAX);
                let b = clique.get(j).copied().unwrap_or(usize::MAX);
                let next = if a <= b {
                    i += 1;
                    if a == b {
                        j += 1;
                    }
                    a
                } else {
                    j += 1;
                    b
                };
                if next != p && next != u {
                    merged.push(next);
                }
            }
            std::mem::swap(&mut graph[u], &mut merged);
            heap.push(Reverse((graph[u].len(), u)));
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn is_permutation(p: &[usize]) -> bool {
        let mut seen = vec![false; p.len()];
        p.iter().all(|&i| i < p.len() && !std::mem::replace(&mut seen[i], true))
    }

    #[test]
    fn star_eliminates_leaves_first() {
        // Hub 0 with leaves 1..5: eliminating the hub first would fill a clique.
        let mut adj = vec![vec![]; 6];
        for leaf in 1..6 {
            adj[0].push(leaf);
            adj[leaf].push(0);
        }
        let order = minimum_degree(&adj);
        assert!(is_permutation(&order));
        assert_eq!(order[0], 1);
        assert!(order.iter().position(|&i| i == 0).unwrap() >= 4);
    }

    #[test]
    fn grid_is_a_permutation() {
        let side = 12;
        let id = |r: usize, c: usize| r * side + c;
        let mut adj = vec![vec![]; side * side];
        for r in 0..side {
            for c in 0..side {
                if c + 1 < side {
                    adj[id(r, c)].push(id(r, c + 1));
                    adj[id(r, c + 1)].push(id(r, c));
                }
                if r + 1 < side {
                    adj[id(r, c)].push(id(r + 1, c));
                    adj[id(r + 1, c)].push(id(r, c));
                }
            }
        }
        assert!(is_permutation(&minimum_degree(&adj)));
    }

    #[test]
    fn empty_and_isolated() {
        assert!(minimum_degree(&[]).is_empty());
        assert_eq!(minimum_degree(&[vec![], vec![]]), vec![0, 1]);
    }
}
