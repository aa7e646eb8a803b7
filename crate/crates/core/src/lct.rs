//! Link/cut trees over splay trees keyed by depth.
//!
//! Each preferred path lives in a splay tree. Path-parents hang off BST
//! roots only, and the root of the top-most BST of a tree marks itself by
//! pointing its BST parent at itself. Flip bits implement `evert` lazily.
//!
//! Every assignment to a BST parent or a path-parent is logged (even when
//! the value does not change), which is what the trace generator turns into
//! mask supervision.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::dsu::{validate_priorities, GroundTruthRecord};
use crate::error::{invalid, Error, Result};

/// Which nodes count as touched when deriving the step mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskPolicy {
    /// Nodes whose BST parent or path-parent was assigned.
    #[default]
    PointerWrites,
    /// Nodes with any field assigned (children and flip bits included).
    AnyWrite,
}

#[derive(Debug, Clone)]
pub struct LctState {
    left: Vec<Option<usize>>,
    right: Vec<Option<usize>>,
    bst_parent: Vec<Option<usize>>,
    path_parent: Vec<Option<usize>>,
    flip: Vec<bool>,
    priority: Vec<f64>,
    write_log: BTreeSet<usize>,
    touch_log: BTreeSet<usize>,
    rotations: u64,
}

impl LctState {
    pub fn new(n: usize, priorities: &[f64]) -> Result<Self> {
        validate_priorities(n, priorities)?;
        Ok(Self {
            left: vec![None; n],
            right: vec![None; n],
            bst_parent: (0..n).map(Some).collect(),
            path_parent: vec![None; n],
            flip: vec![false; n],
            priority: priorities.to_vec(),
            write_log: BTreeSet::new(),
            touch_log: BTreeSet::new(),
            rotations: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn left(&self, u: usize) -> Option<usize> {
        self.left[u]
    }

    pub fn right(&self, u: usize) -> Option<usize> {
        self.right[u]
    }

    pub fn bst_parent(&self, u: usize) -> Option<usize> {
        self.bst_parent[u]
    }

    pub fn path_parent(&self, u: usize) -> Option<usize> {
        self.path_parent[u]
    }

    pub fn flip(&self, u: usize) -> bool {
        self.flip[u]
    }

    pub fn priorities(&self) -> &[f64] {
        &self.priority
    }

    /// Total rotations performed since construction.
    pub fn rotations(&self) -> u64 {
        self.rotations
    }

    pub fn write_log(&self) -> &BTreeSet<usize> {
        &self.write_log
    }

    pub fn touch_log(&self) -> &BTreeSet<usize> {
        &self.touch_log
    }

    pub fn clear_logs(&mut self) {
        self.write_log.clear();
        self.touch_log.clear();
    }

    /// The single pointer of every node: BST parent if set, else path-parent.
    pub fn pointer_targets(&self) -> Vec<usize> {
        (0..self.len())
            .map(|u| {
                self.bst_parent[u]
                    .or(self.path_parent[u])
                    .expect("every node holds exactly one parent pointer")
            })
            .collect()
    }

    fn check(&self, u: usize) -> Result<()> {
        if u >= self.len() {
            return Err(invalid(format!(
                "node {u} out of range for {} nodes",
                self.len()
            )));
        }
        Ok(())
    }

    fn is_bst_root(&self, u: usize) -> bool {
        match self.bst_parent[u] {
            None => true,
            Some(p) => p == u,
        }
    }

    fn set_bst_parent(&mut self, u: usize, p: Option<usize>) {
        self.bst_parent[u] = p;
        self.write_log.insert(u);
        self.touch_log.insert(u);
    }

    fn set_path_parent(&mut self, u: usize, p: Option<usize>) {
        self.path_parent[u] = p;
        self.write_log.insert(u);
        self.touch_log.insert(u);
    }

    fn set_left(&mut self, u: usize, c: Option<usize>) {
        self.left[u] = c;
        self.touch_log.insert(u);
    }

    fn set_right(&mut self, u: usize, c: Option<usize>) {
        self.right[u] = c;
        self.touch_log.insert(u);
    }

    fn toggle_flip(&mut self, u: usize) {
        self.flip[u] ^= true;
        self.touch_log.insert(u);
    }

    /// Pushes a pending flip of `u` down to its children. Absent is a no-op.
    pub fn release(&mut self, u: Option<usize>) {
        let Some(u) = u else { return };
        if !self.flip[u] {
            return;
        }
        let (l, r) = (self.left[u], self.right[u]);
        self.set_left(u, r);
        self.set_right(u, l);
        if let Some(l) = self.left[u] {
            self.toggle_flip(l);
        }
        if let Some(r) = self.right[u] {
            self.toggle_flip(r);
        }
        self.flip[u] = false;
    }

    /// Raises `u` one level in its BST. The caller must have released `u`,
    /// its parent and its grandparent.
    pub fn rotate(&mut self, u: usize) -> Result<()> {
        self.check(u)?;
        if self.is_bst_root(u) {
            return Err(Error::ContractViolation(format!(
                "rotate({u}) on a BST root"
            )));
        }
        self.rotate_unchecked(u);
        Ok(())
    }

    fn rotate_unchecked(&mut self, u: usize) {
        let v = self.bst_parent[u].expect("rotated node has a BST parent");
        let w = self.bst_parent[v];
        let grandparent = w.filter(|&w| w != v);
        if self.left[v] == Some(u) {
            let moved = self.right[u];
            self.set_left(v, moved);
            if let Some(m) = moved {
                self.set_bst_parent(m, Some(v));
            }
            self.set_right(u, Some(v));
        } else {
            let moved = self.left[u];
            self.set_right(v, moved);
            if let Some(m) = moved {
                self.set_bst_parent(m, Some(v));
            }
            self.set_left(u, Some(v));
        }
        self.set_path_parent(u, self.path_parent[v]);
        self.set_bst_parent(v, Some(u));
        self.set_path_parent(v, None);
        if let Some(g) = grandparent {
            if self.left[g] == Some(v) {
                self.set_left(g, Some(u));
            } else {
                self.set_right(g, Some(u));
            }
        }
        // a self-pointing top root hands the marker over to u
        let new_parent = if w == Some(v) { Some(u) } else { w };
        self.set_bst_parent(u, new_parent);
        self.rotations += 1;
    }

    /// Makes `u` the root of its BST with zig, zig-zig and zig-zag steps.
    pub fn splay(&mut self, u: usize) {
        while !self.is_bst_root(u) {
            let v = self.bst_parent[u].expect("non-root has a BST parent");
            let w = if self.is_bst_root(v) {
                None
            } else {
                self.bst_parent[v]
            };
            self.release(w);
            self.release(Some(v));
            self.release(Some(u));
            match w {
                None => self.rotate_unchecked(u),
                Some(w) => {
                    if (self.left[w] == Some(v)) == (self.left[v] == Some(u)) {
                        self.rotate_unchecked(v);
                        self.rotate_unchecked(u);
                    } else {
                        self.rotate_unchecked(u);
                        self.rotate_unchecked(u);
                    }
                }
            }
        }
        self.release(Some(u));
    }

    /// Makes the path from `u` to its tree root preferred, with `u` the root
    /// of the top-most BST and without a right child.
    pub fn expose(&mut self, u: usize) {
        loop {
            self.splay(u);
            if let Some(r) = self.right[u] {
                self.set_bst_parent(r, None);
                self.set_path_parent(r, Some(u));
                self.set_right(u, None);
            }
            if let Some(w) = self.path_parent[u] {
                self.splay(w);
                if let Some(r) = self.right[w] {
                    self.set_bst_parent(r, None);
                    self.set_path_parent(r, Some(w));
                }
                self.set_right(w, Some(u));
                self.set_bst_parent(u, Some(w));
                self.set_path_parent(u, None);
            }
            if self.bst_parent[u] == Some(u) {
                break;
            }
        }
    }

    pub fn find_root(&mut self, u: usize) -> Result<usize> {
        self.check(u)?;
        self.expose(u);
        let mut root = u;
        loop {
            self.release(Some(root));
            match self.left[root] {
                Some(l) => root = l,
                None => break,
            }
        }
        self.expose(root);
        Ok(root)
    }

    /// Hangs the tree rooted at `u` below `v`.
    ///
    /// Errors with a contract violation if `u` is not the root of its tree
    /// or if both nodes already share a tree.
    pub fn link(&mut self, u: usize, v: usize) -> Result<()> {
        self.check(u)?;
        self.check(v)?;
        self.expose(u);
        if self.left[u].is_some() {
            return Err(Error::ContractViolation(format!(
                "link: {u} is not a tree root"
            )));
        }
        self.expose(v);
        if u == v || self.bst_parent[u] != Some(u) {
            return Err(Error::ContractViolation(format!(
                "link: {u} and {v} are already in the same tree"
            )));
        }
        self.set_left(u, Some(v));
        self.set_bst_parent(v, Some(u));
        Ok(())
    }

    /// Removes the edge between `u` and its parent in the modelled forest.
    pub fn cut(&mut self, u: usize) -> Result<()> {
        self.check(u)?;
        self.expose(u);
        match self.left[u] {
            Some(l) => {
                self.set_bst_parent(l, Some(l));
                self.set_left(u, None);
                Ok(())
            }
            None => Err(Error::ContractViolation(format!("cut: {u} is a tree root"))),
        }
    }

    /// Re-roots the tree containing `u` at `u`.
    pub fn evert(&mut self, u: usize) -> Result<()> {
        self.check(u)?;
        self.expose(u);
        self.toggle_flip(u);
        self.release(Some(u));
        Ok(())
    }

    pub fn query_toggle(&mut self, u: usize, v: usize) -> Result<(u8, GroundTruthRecord)> {
        self.query_toggle_with(u, v, MaskPolicy::PointerWrites)
    }

    /// Evert the higher-priority endpoint, then link the pair if they were
    /// disconnected (answer `0`) or cut the other endpoint from its parent
    /// (answer `1`).
    pub fn query_toggle_with(
        &mut self,
        u: usize,
        v: usize,
        policy: MaskPolicy,
    ) -> Result<(u8, GroundTruthRecord)> {
        self.check(u)?;
        self.check(v)?;
        if u == v {
            return Err(invalid("query_toggle requires u != v"));
        }
        self.clear_logs();
        let (u, v) = if self.priority[u] < self.priority[v] {
            (v, u)
        } else {
            (u, v)
        };
        self.evert(u)?;
        let y = if self.find_root(v)? != u {
            self.link(u, v)?;
            0
        } else {
            self.cut(v)?;
            1
        };
        let touched = match policy {
            MaskPolicy::PointerWrites => &self.write_log,
            MaskPolicy::AnyWrite => &self.touch_log,
        };
        let mask = (0..self.len())
            .map(|i| u8::from(!touched.contains(&i)))
            .collect();
        let record = GroundTruthRecord {
            y,
            mask,
            parent: self.pointer_targets(),
        };
        self.clear_logs();
        Ok((y, record))
    }

    /// Flip-resolved in-order listing of the BST rooted at `root`, i.e. its
    /// preferred path ordered from shallowest to deepest.
    pub fn bst_in_order(&self, root: usize) -> Vec<usize> {
        let mut out = Vec::new();
        // (node, inherited flip parity, children already pushed)
        let mut stack = vec![(root, false, false)];
        while let Some((u, parity, expanded)) = stack.pop() {
            if expanded {
                out.push(u);
                continue;
            }
            let p = parity ^ self.flip[u];
            let (first, second) = if p {
                (self.right[u], self.left[u])
            } else {
                (self.left[u], self.right[u])
            };
            if let Some(s) = second {
                stack.push((s, p, false));
            }
            stack.push((u, p, true));
            if let Some(f) = first {
                stack.push((f, p, false));
            }
        }
        out
    }

    /// BST roots: nodes that are either a top root or carry a path-parent.
    pub fn bst_roots(&self) -> Vec<usize> {
        (0..self.len()).filter(|&u| self.is_bst_root(u)).collect()
    }

    /// Rooted forest represented by the structure, as a parent map
    /// (`None` for tree roots).
    pub fn modelled_forest(&self) -> Vec<Option<usize>> {
        let mut parent = vec![None; self.len()];
        for r in self.bst_roots() {
            let path = self.bst_in_order(r);
            parent[path[0]] = self.path_parent[r];
            for w in path.windows(2) {
                parent[w[1]] = Some(w[0]);
            }
        }
        parent
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation found.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for u in 0..self.len() {
            match (self.bst_parent[u], self.path_parent[u]) {
                (Some(_), Some(_)) => return Err(format!("node {u} holds two parent pointers")),
                (None, None) => return Err(format!("node {u} holds no parent pointer")),
                _ => {}
            }
            for c in [self.left[u], self.right[u]].into_iter().flatten() {
                if self.bst_parent[c] != Some(u) {
                    return Err(format!("child {c} of {u} does not point back"));
                }
            }
            if let Some(p) = self.bst_parent[u] {
                if p != u && self.left[p] != Some(u) && self.right[p] != Some(u) {
                    return Err(format!("{u} points at {p} which does not own it"));
                }
            }
        }
        Ok(())
    }

    /// DOT rendering of the modelled forest.
    pub fn forest_dot(&self) -> String {
        let mut s = String::from("digraph forest {\n");
        for (u, p) in self.modelled_forest().iter().enumerate() {
            let _ = writeln!(s, "  {u};");
            if let Some(p) = p {
                let _ = writeln!(s, "  {u} -> {p};");
            }
        }
        s.push_str("}\n");
        s
    }

    /// DOT rendering of the raw pointers: solid BST edges, dashed path-parents.
    pub fn pointer_dot(&self) -> String {
        let mut s = String::from("digraph lct {\n");
        for u in 0..self.len() {
            let _ = writeln!(s, "  {u};");
            if let Some(p) = self.bst_parent[u] {
                let _ = writeln!(s, "  {u} -> {p};");
            }
            if let Some(p) = self.path_parent[u] {
                let _ = writeln!(s, "  {u} -> {p} [style=dashed];");
            }
        }
        s.push_str("}\n");
        s
    }
}
