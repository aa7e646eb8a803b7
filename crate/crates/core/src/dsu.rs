//! Disjoint-set union with randomised linking-by-index and path compression.
//!
//! Every parent change and every node visited by a `find` is logged so the
//! trace generator can derive per-step mask supervision. Priorities are
//! supplied by the caller; this module never samples randomness.

use std::collections::BTreeSet;

use crate::error::{invalid, Result};

/// Per-step supervision emitted by a compound data-structure operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthRecord {
    /// Query answer bit.
    pub y: u8,
    /// Keep mask, `1` = pointer preserved, `0` = node touched by the step.
    pub mask: Vec<u8>,
    /// Post-operation pointer target of every node.
    pub parent: Vec<usize>,
}

pub(crate) fn validate_priorities(n: usize, priorities: &[f64]) -> Result<()> {
    if n == 0 {
        return Err(invalid("node count must be at least 1"));
    }
    if priorities.len() != n {
        return Err(invalid(format!(
            "expected {n} priorities, got {}",
            priorities.len()
        )));
    }
    if let Some(p) = priorities.iter().find(|p| !(0.0..1.0).contains(*p)) {
        return Err(invalid(format!("priority {p} outside [0, 1)")));
    }
    let mut sorted = priorities.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid("priorities must be pairwise distinct"));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DsuState {
    parent: Vec<usize>,
    priority: Vec<f64>,
    write_log: BTreeSet<usize>,
    visit_log: BTreeSet<usize>,
}

impl DsuState {
    pub fn new(n: usize, priorities: &[f64]) -> Result<Self> {
        validate_priorities(n, priorities)?;
        Ok(Self {
            parent: (0..n).collect(),
            priority: priorities.to_vec(),
            write_log: BTreeSet::new(),
            visit_log: BTreeSet::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    pub fn priorities(&self) -> &[f64] {
        &self.priority
    }

    /// Nodes whose parent changed since the log was last cleared.
    pub fn write_log(&self) -> &BTreeSet<usize> {
        &self.write_log
    }

    /// Nodes on any find path (roots included) since the log was last cleared.
    pub fn visit_log(&self) -> &BTreeSet<usize> {
        &self.visit_log
    }

    pub fn clear_logs(&mut self) {
        self.write_log.clear();
        self.visit_log.clear();
    }

    fn check(&self, u: usize) -> Result<()> {
        if u >= self.parent.len() {
            return Err(invalid(format!(
                "node {u} out of range for {} nodes",
                self.parent.len()
            )));
        }
        Ok(())
    }

    fn write_parent(&mut self, u: usize, p: usize) {
        if self.parent[u] != p {
            self.parent[u] = p;
            self.write_log.insert(u);
        }
    }

    /// Returns the root of `u`, compressing the path behind it.
    ///
    /// Two passes replace the recursive formulation: the first walks to the
    /// root, the second points every non-root node on the path at it. Only
    /// assignments that change a parent are logged, so a repeated find is
    /// write-free.
    pub fn find(&mut self, u: usize) -> Result<usize> {
        self.check(u)?;
        let mut root = u;
        self.visit_log.insert(root);
        while self.parent[root] != root {
            root = self.parent[root];
            self.visit_log.insert(root);
        }
        let mut w = u;
        while w != root {
            let next = self.parent[w];
            self.write_parent(w, root);
            w = next;
        }
        Ok(root)
    }

    pub fn union(&mut self, u: usize, v: usize) -> Result<()> {
        let x = self.find(u)?;
        let y = self.find(v)?;
        if x != y {
            if self.priority[x] < self.priority[y] {
                self.write_parent(x, y);
            } else {
                self.write_parent(y, x);
            }
        }
        Ok(())
    }

    /// Query-then-union step: answers `0` if `u` and `v` were already in the
    /// same set, otherwise links them and answers `1`.
    ///
    /// The mask zeroes every node visited by the finds (paths to both roots,
    /// endpoints inclusive). Logs are cleared on return.
    pub fn query_union(&mut self, u: usize, v: usize) -> Result<(u8, GroundTruthRecord)> {
        self.check(u)?;
        self.check(v)?;
        if u == v {
            return Err(invalid("query_union requires u != v"));
        }
        self.clear_logs();
        let y = if self.find(u)? == self.find(v)? {
            0
        } else {
            self.union(u, v)?;
            1
        };
        let mask = (0..self.len())
            .map(|i| u8::from(!self.visit_log.contains(&i)))
            .collect();
        let record = GroundTruthRecord {
            y,
            mask,
            parent: self.parent.clone(),
        };
        self.clear_logs();
        Ok((y, record))
    }

    /// Root reached from `u` without compressing anything.
    pub fn peek_root(&self, mut u: usize) -> usize {
        while self.parent[u] != u {
            u = self.parent[u];
        }
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walk_root(parent: &[usize], mut u: usize) -> usize {
        let mut steps = 0;
        while parent[u] != u {
            u = parent[u];
            steps += 1;
            assert!(steps <= parent.len(), "cycle in parent array");
        }
        u
    }

    #[test]
    fn new_is_identity() {
        let s = DsuState::new(3, &[0.2, 0.9, 0.5]).unwrap();
        assert_eq!(s.parents(), &[0, 1, 2]);
        assert!(s.write_log().is_empty());
        let s = DsuState::new(1, &[0.7]).unwrap();
        assert_eq!(s.parents(), &[0]);
    }

    #[test]
    fn new_rejects_bad_priorities() {
        assert!(matches!(
            DsuState::new(2, &[0.3, 0.3]),
            Err(crate::Error::InvalidArgument(_))
        ));
        assert!(DsuState::new(2, &[0.3, 1.0]).is_err());
        assert!(DsuState::new(2, &[0.3]).is_err());
        assert!(DsuState::new(0, &[]).is_err());
    }

    #[test]
    fn find_compresses_chain() {
        let mut s = DsuState::new(3, &[0.1, 0.2, 0.3]).unwrap();
        s.parent = vec![1, 2, 2];
        let reference = walk_root(&s.parent, 0);
        assert_eq!(s.find(0).unwrap(), reference);
        assert_eq!(s.find(0).unwrap(), 2);
        assert_eq!(s.parents(), &[2, 2, 2]);
        assert_eq!(s.write_log().iter().copied().collect::<Vec<_>>(), vec![0]);
        assert_eq!(s.visit_log().len(), 3);
    }

    #[test]
    fn find_on_root_writes_nothing() {
        let mut s = DsuState::new(2, &[0.1, 0.2]).unwrap();
        assert_eq!(s.find(0).unwrap(), 0);
        assert!(s.write_log().is_empty());
        assert!(s.find(5).is_err());
    }

    #[test]
    fn second_find_is_idempotent() {
        let mut s = DsuState::new(4, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        s.parent = vec![1, 2, 3, 3];
        let r = s.find(0).unwrap();
        s.clear_logs();
        assert_eq!(s.find(0).unwrap(), r);
        assert!(s.write_log().is_empty());
    }

    #[test]
    fn union_links_lower_priority_root_under_higher() {
        let mut s = DsuState::new(2, &[0.2, 0.9]).unwrap();
        s.union(0, 1).unwrap();
        assert_eq!(s.parents(), &[1, 1]);

        let mut s = DsuState::new(2, &[0.9, 0.2]).unwrap();
        s.union(0, 1).unwrap();
        assert_eq!(s.parents(), &[0, 0]);

        let mut s = DsuState::new(2, &[0.9, 0.2]).unwrap();
        s.union(1, 1).unwrap();
        assert_eq!(s.parents(), &[0, 1]);
    }

    #[test]
    fn query_union_answers() {
        let mut s = DsuState::new(2, &[0.2, 0.9]).unwrap();
        let (y, rec) = s.query_union(0, 1).unwrap();
        assert_eq!(y, 1);
        assert_eq!(rec.parent, vec![1, 1]);
        assert_eq!(rec.mask, vec![0, 0]);
        let (y, rec) = s.query_union(0, 1).unwrap();
        assert_eq!(y, 0);
        assert_eq!(rec.parent, vec![1, 1]);
        assert!(s.write_log().is_empty());
        assert!(s.query_union(1, 1).is_err());
    }

    #[test]
    fn ascending_chain_is_linear() {
        let n = 6;
        let pr: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let mut s = DsuState::new(n, &pr).unwrap();
        for i in 0..n - 1 {
            let (y, _) = s.query_union(i, i + 1).unwrap();
            assert_eq!(y, 1);
        }
        let expected: Vec<usize> = (0..n).map(|i| (i + 1).min(n - 1)).collect();
        assert_eq!(s.parents(), expected.as_slice());
    }

    #[test]
    fn mask_covers_only_find_paths() {
        let mut s = DsuState::new(5, &[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        s.parent = vec![1, 2, 2, 3, 4];
        let (y, rec) = s.query_union(0, 3).unwrap();
        assert_eq!(y, 1);
        // paths 0->1->2 and 3; roots 2 and 3, r2 < r3 so 2 goes under 3
        assert_eq!(rec.mask, vec![0, 0, 0, 0, 1]);
        assert_eq!(rec.parent, vec![2, 2, 3, 3, 4]);
    }
}
