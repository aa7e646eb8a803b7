//! Brute-force graph oracles shared by the integration tests.

use std::collections::{BTreeSet, VecDeque};

/// Connected-component label (smallest member) per node via flood fill.
pub fn flood_labels(n: usize, edges: &BTreeSet<(usize, usize)>) -> Vec<usize> {
    let mut label = vec![usize::MAX; n];
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        label[s] = s;
        while let Some(u) = stack.pop() {
            for &(a, b) in edges {
                let w = if a == u {
                    b
                } else if b == u {
                    a
                } else {
                    continue;
                };
                if label[w] == usize::MAX {
                    label[w] = s;
                    stack.push(w);
                }
            }
        }
    }
    label
}

/// Parent of every node reachable from `root` in the undirected forest.
pub fn bfs_parents(n: usize, edges: &BTreeSet<(usize, usize)>, root: usize) -> Vec<Option<usize>> {
    let mut parent = vec![None; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(x) = queue.pop_front() {
        for &(a, b) in edges {
            let w = if a == x {
                b
            } else if b == x {
                a
            } else {
                continue;
            };
            if !seen[w] {
                seen[w] = true;
                parent[w] = Some(x);
                queue.push_back(w);
            }
        }
    }
    parent
}

pub fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Undirected edge set of a parent map.
pub fn forest_edges(parent: &[Option<usize>]) -> BTreeSet<(usize, usize)> {
    parent
        .iter()
        .enumerate()
        .filter_map(|(c, p)| p.map(|p| key(c, p)))
        .collect()
}
