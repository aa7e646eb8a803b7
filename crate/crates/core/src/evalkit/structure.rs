use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::tracegen::oracle::pointer_components;
use crate::tracegen::{episode_from_pairs, write_atomic, Episode, Kind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StructureStep {
    pub step: usize,
    /// Every pointer walk ends in a self-loop.
    pub valid: bool,
    /// Weakly-connected pointer components equal the true components.
    pub partition_match: bool,
    /// Longest walk to a self-loop; absent for invalid graphs.
    pub depth: Option<usize>,
    pub components: usize,
}

/// Steps from `i` to its self-loop, or `None` if the walk cycles.
fn walk_length(ptr: &[usize], i: usize) -> Option<usize> {
    let mut u = i;
    for steps in 0..=ptr.len() {
        if ptr[u] == u {
            return Some(steps);
        }
        u = ptr[u];
    }
    None
}

/// Depth of a pointer forest, or `None` if it has a non-trivial cycle.
pub fn pointer_depth(ptr: &[usize]) -> Option<usize> {
    (0..ptr.len())
        .map(|i| walk_length(ptr, i))
        .try_fold(0, |acc, d| d.map(|d| acc.max(d)))
}

/// Structural report for the pointers carried after every step.
pub fn rollout_structure(pointers: &[Vec<usize>], ep: &Episode) -> Result<Vec<StructureStep>> {
    if pointers.len() != ep.steps.len() {
        return Err(invalid(format!(
            "{} pointer snapshots for {} steps",
            pointers.len(),
            ep.steps.len()
        )));
    }
    let truth = ep.oracle_components();
    pointers
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(step, (ptr, truth))| {
            if ptr.len() != ep.n || ptr.iter().any(|&p| p >= ep.n) {
                return Err(invalid(format!(
                    "malformed pointer snapshot at step {step}"
                )));
            }
            let labels = pointer_components(ptr);
            let mut distinct = labels.clone();
            distinct.sort_unstable();
            distinct.dedup();
            let depth = pointer_depth(ptr);
            Ok(StructureStep {
                step,
                valid: depth.is_some(),
                partition_match: labels == truth,
                depth,
                components: distinct.len(),
            })
        })
        .collect()
}

/// Ground-truth pointers after every step.
pub fn truth_pointers(ep: &Episode) -> Vec<Vec<usize>> {
    ep.steps.iter().map(|s| s.parent.clone()).collect()
}

/// DOT digraph of one pointer snapshot, self-loops drawn as double circles.
pub fn pointer_dot(ptr: &[usize], title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "digraph \"{title}\" {{");
    for (i, &p) in ptr.iter().enumerate() {
        if p == i {
            let _ = writeln!(s, "  {i} [shape=doublecircle];");
        } else {
            let _ = writeln!(s, "  {i} -> {p};");
        }
    }
    s.push_str("}\n");
    s
}

/// Writes `<split>_<episode>_<step>.dot` for every snapshot.
pub fn write_dot_files(
    dir: &Path,
    split: &str,
    episode: usize,
    pointers: &[Vec<usize>],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    pointers
        .iter()
        .enumerate()
        .map(|(t, ptr)| {
            let name = format!("{split}_{episode}_{t}");
            let path = dir.join(format!("{name}.dot"));
            write_atomic(&path, pointer_dot(ptr, &name).as_bytes())?;
            Ok(path)
        })
        .collect()
}

/// `union(i, i + 1)` for `i = 0..n-1` under ascending priorities, which
/// builds a single chain.
pub fn pathological_protocol(n: usize) -> Result<Episode> {
    if n < 2 {
        return Err(invalid("the protocol needs at least 2 nodes"));
    }
    let priorities: Vec<f64> = (0..n).map(|i| (i + 1) as f64 / (n + 1) as f64).collect();
    let pairs: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    episode_from_pairs(Kind::Dsu, priorities, &pairs, 0)
}
