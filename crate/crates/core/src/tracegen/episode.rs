use std::fmt;

use serde::{Deserialize, Serialize};

use super::oracle::{pointer_components, EdgeOracle};
use super::rng::TraceRng;
use crate::dsu::{DsuState, GroundTruthRecord};
use crate::error::{invalid, Result};
use crate::lct::LctState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Dsu,
    Lct,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Dsu => "dsu",
            Kind::Lct => "lct",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Kind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dsu" => Ok(Kind::Dsu),
            "lct" => Ok(Kind::Lct),
            other => Err(invalid(format!("unknown structure kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub u: usize,
    pub v: usize,
    pub y: u8,
    pub mask: Vec<u8>,
    pub parent: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub kind: Kind,
    pub n: usize,
    pub ops: usize,
    pub seed: u64,
    pub priorities: Vec<f64>,
    pub steps: Vec<StepRecord>,
}

/// A single compound-operation driver over either structure.
#[derive(Debug, Clone)]
pub enum Structure {
    Dsu(DsuState),
    Lct(LctState),
}

impl Structure {
    pub fn new(kind: Kind, priorities: &[f64]) -> Result<Self> {
        Ok(match kind {
            Kind::Dsu => Structure::Dsu(DsuState::new(priorities.len(), priorities)?),
            Kind::Lct => Structure::Lct(LctState::new(priorities.len(), priorities)?),
        })
    }

    pub fn apply(&mut self, u: usize, v: usize) -> Result<GroundTruthRecord> {
        let (_, rec) = match self {
            Structure::Dsu(s) => s.query_union(u, v)?,
            Structure::Lct(s) => s.query_toggle(u, v)?,
        };
        Ok(rec)
    }
}

fn sample_priorities(rng: &mut TraceRng, n: usize) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(n);
    while out.len() < n {
        let r = rng.next_f64();
        if !out.contains(&r) {
            out.push(r);
        }
    }
    out
}

/// Uniform unordered pair, kept in the order it was drawn.
fn sample_pair(rng: &mut TraceRng, n: usize) -> (usize, usize) {
    let u = rng.below(n as u64) as usize;
    let mut v = rng.below(n as u64 - 1) as usize;
    if v >= u {
        v += 1;
    }
    (u, v)
}

pub fn generate_episode(kind: Kind, n: usize, ops: usize, seed: u64) -> Result<Episode> {
    if n < 2 {
        return Err(invalid("episodes need at least 2 nodes"));
    }
    if ops < 1 {
        return Err(invalid("episodes need at least 1 operation"));
    }
    let mut rng = TraceRng::new(seed);
    let priorities = sample_priorities(&mut rng, n);
    let pairs: Vec<_> = (0..ops).map(|_| sample_pair(&mut rng, n)).collect();
    episode_from_pairs(kind, priorities, &pairs, seed)
}

/// Drives the structure over a fixed operation list.
pub fn episode_from_pairs(
    kind: Kind,
    priorities: Vec<f64>,
    pairs: &[(usize, usize)],
    seed: u64,
) -> Result<Episode> {
    let mut structure = Structure::new(kind, &priorities)?;
    let mut steps = Vec::with_capacity(pairs.len());
    for &(u, v) in pairs {
        let rec = structure.apply(u, v)?;
        steps.push(StepRecord {
            u,
            v,
            y: rec.y,
            mask: rec.mask,
            parent: rec.parent,
        });
    }
    Ok(Episode {
        kind,
        n: priorities.len(),
        ops: pairs.len(),
        seed,
        priorities,
        steps,
    })
}

impl Episode {
    /// Pointer snapshot in force before step `t` (identity before the first).
    pub fn pointers_before(&self, t: usize) -> Vec<usize> {
        if t == 0 {
            (0..self.n).collect()
        } else {
            self.steps[t - 1].parent.clone()
        }
    }

    /// Ground-truth component labels after every step, from the oracle.
    pub fn oracle_components(&self) -> Vec<Vec<usize>> {
        let mut oracle = EdgeOracle::new(self.n);
        self.steps
            .iter()
            .map(|s| {
                match self.kind {
                    Kind::Dsu => oracle.query_union(s.u, s.v),
                    Kind::Lct => oracle.query_toggle(s.u, s.v, &self.priorities),
                };
                oracle.components()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Shape,
    Answer,
    Partition,
    MaskConsistency,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub step: usize,
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    // labels are canonical (smallest member), so equality is exact
    a == b
}

/// Replays an episode against the edge oracle.
pub fn validate_episode(ep: &Episode) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut push =
        |step, kind, detail: String| report.violations.push(Violation { step, kind, detail });
    if ep.priorities.len() != ep.n || ep.steps.len() != ep.ops {
        push(0, ViolationKind::Shape, "header does not match body".into());
        return report;
    }
    let mut oracle = EdgeOracle::new(ep.n);
    let mut prev: Vec<usize> = (0..ep.n).collect();
    for (t, s) in ep.steps.iter().enumerate() {
        if s.u == s.v
            || s.u >= ep.n
            || s.v >= ep.n
            || s.mask.len() != ep.n
            || s.parent.len() != ep.n
        {
            push(
                t,
                ViolationKind::Shape,
                format!("malformed step ({}, {})", s.u, s.v),
            );
            return report;
        }
        let y = match ep.kind {
            Kind::Dsu => oracle.query_union(s.u, s.v),
            Kind::Lct => oracle.query_toggle(s.u, s.v, &ep.priorities),
        };
        if y != s.y {
            push(
                t,
                ViolationKind::Answer,
                format!("recorded {} but oracle says {y}", s.y),
            );
        }
        if s.parent.iter().any(|&p| p >= ep.n)
            || !same_partition(&pointer_components(&s.parent), &oracle.components())
        {
            push(
                t,
                ViolationKind::Partition,
                "pointer components differ from oracle".into(),
            );
        }
        for i in 0..ep.n {
            if s.mask[i] == 1 && s.parent[i] != prev[i] {
                push(
                    t,
                    ViolationKind::MaskConsistency,
                    format!(
                        "node {i} kept but pointer moved {} -> {}",
                        prev[i], s.parent[i]
                    ),
                );
            }
        }
        prev.clone_from(&s.parent);
    }
    report
}
