//! Naive edge-set oracles. Deliberately slow and obvious: they are the
//! reference every structure test compares against.

use std::collections::{BTreeSet, VecDeque};

/// Normalised undirected edge.
pub fn edge(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

fn adjacency(n: usize, edges: &BTreeSet<(usize, usize)>) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    adj
}

/// BFS parent map from `u`, or `None` entries for unreachable nodes.
fn bfs(n: usize, edges: &BTreeSet<(usize, usize)>, u: usize) -> Vec<Option<usize>> {
    let adj = adjacency(n, edges);
    let mut prev = vec![None; n];
    prev[u] = Some(u);
    let mut queue = VecDeque::from([u]);
    while let Some(x) = queue.pop_front() {
        for &y in &adj[x] {
            if prev[y].is_none() {
                prev[y] = Some(x);
                queue.push_back(y);
            }
        }
    }
    prev
}

/// Is there a path between `u` and `v` using `edges`?
pub fn naive_connected(edges: &BTreeSet<(usize, usize)>, u: usize, v: usize) -> bool {
    let n = edges
        .iter()
        .map(|&(_, b)| b + 1)
        .max()
        .unwrap_or(0)
        .max(u + 1)
        .max(v + 1);
    bfs(n, edges, u)[v].is_some()
}

/// Component label per node (label = smallest member).
pub fn components(n: usize, edges: &BTreeSet<(usize, usize)>) -> Vec<usize> {
    let mut label = vec![usize::MAX; n];
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        for (i, p) in bfs(n, edges, s).iter().enumerate() {
            if p.is_some() {
                label[i] = s;
            }
        }
    }
    label
}

/// Dynamic-connectivity oracle mirroring the compound operations.
#[derive(Debug, Clone)]
pub struct EdgeOracle {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl EdgeOracle {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            edges: BTreeSet::new(),
        }
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn connected(&self, u: usize, v: usize) -> bool {
        bfs(self.n, &self.edges, u)[v].is_some()
    }

    pub fn components(&self) -> Vec<usize> {
        components(self.n, &self.edges)
    }

    /// Incremental step: `0` if already connected, else add the edge and `1`.
    pub fn query_union(&mut self, u: usize, v: usize) -> u8 {
        if self.connected(u, v) {
            0
        } else {
            self.edges.insert(edge(u, v));
            1
        }
    }

    /// Toggle step on a forest. After ordering the pair by priority, a
    /// disconnected pair gains the edge (`0`); otherwise `v` loses the edge
    /// to its neighbour on the path towards `u` (`1`).
    pub fn query_toggle(&mut self, u: usize, v: usize, priority: &[f64]) -> u8 {
        let (u, v) = if priority[u] < priority[v] {
            (v, u)
        } else {
            (u, v)
        };
        let prev = bfs(self.n, &self.edges, u);
        match prev[v] {
            None => {
                self.edges.insert(edge(u, v));
                0
            }
            Some(p) => {
                self.edges.remove(&edge(v, p));
                1
            }
        }
    }
}

/// Weakly-connected component labels of a functional pointer graph.
pub fn pointer_components(parent: &[usize]) -> Vec<usize> {
    let edges: BTreeSet<_> = parent
        .iter()
        .enumerate()
        .filter(|&(i, &p)| i != p)
        .map(|(i, &p)| edge(i, p))
        .collect();
    components(parent.len(), &edges)
}
