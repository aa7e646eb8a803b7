//! Episode generation, oracles, validation and dataset persistence.
//!
//! Datasets are directories holding a `dataset.json` manifest (the
//! generating [`DatasetSpec`]) and one `<split>.jsonl` file per split, one
//! episode per line:
//!
//! ```text
//! {"version":1,"kind":"dsu","n":20,"ops":30,"seed":123,"priorities":[...],
//!  "steps":[{"u":3,"v":7,"y":1,"mask":[1,...],"parent":[0,...]}]}
//! ```
//!
//! Field order is fixed and reals are written with 17 significant digits,
//! so write, load and write again is byte-identical. Mask bits use
//! `1 = keep` (pointer unchanged by the step).

mod episode;
pub mod oracle;
pub mod rng;

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use episode::{
    episode_from_pairs, generate_episode, validate_episode, Episode, Kind, StepRecord, Structure,
    ValidationReport, Violation, ViolationKind,
};
pub use oracle::naive_connected;

use crate::error::{invalid, Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub name: String,
    pub episodes: usize,
    pub n: usize,
    pub ops: usize,
}

impl SplitSpec {
    pub fn new(name: &str, episodes: usize, n: usize, ops: usize) -> Self {
        Self {
            name: name.to_string(),
            episodes,
            n,
            ops,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub kind: Kind,
    pub master_seed: u64,
    pub splits: Vec<SplitSpec>,
}

impl DatasetSpec {
    /// 70 training and 35 validation sequences at n=20/30 ops, then 35 test
    /// sequences at each larger size; LCT adds a 200-node/300-op test set.
    pub fn standard(kind: Kind, master_seed: u64) -> Self {
        let mut splits = vec![
            SplitSpec::new("train", 70, 20, 30),
            SplitSpec::new("val", 35, 20, 30),
            SplitSpec::new("test_20", 35, 20, 30),
            SplitSpec::new("test_50", 35, 50, 75),
            SplitSpec::new("test_100", 35, 100, 150),
        ];
        if kind == Kind::Lct {
            splits.push(SplitSpec::new("test_200", 35, 200, 300));
        }
        Self {
            kind,
            master_seed,
            splits,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for s in &self.splits {
            if !names.insert(s.name.as_str()) {
                return Err(invalid(format!("duplicate split name '{}'", s.name)));
            }
            if s.name.is_empty() || s.name.contains(['/', '\\']) {
                return Err(invalid(format!("bad split name '{}'", s.name)));
            }
        }
        Ok(())
    }

    pub fn split(&self, name: &str) -> Option<&SplitSpec> {
        self.splits.iter().find(|s| s.name == name)
    }

    /// Per-episode seeds for every split, checked for collisions.
    pub fn episode_seeds(&self) -> Result<Vec<Vec<u64>>> {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(self.splits.len());
        for s in &self.splits {
            let seeds: Vec<u64> = (0..s.episodes as u64)
                .map(|i| rng::derive_seed(self.master_seed, &s.name, i))
                .collect();
            for &seed in &seeds {
                if !seen.insert(seed) {
                    return Err(invalid(format!(
                        "derived seed collision in split '{}'",
                        s.name
                    )));
                }
            }
            out.push(seeds);
        }
        Ok(out)
    }
}

/// A generated or loaded split.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub name: String,
    pub episodes: Vec<Episode>,
}

pub fn generate_splits(spec: &DatasetSpec) -> Result<Vec<Split>> {
    spec.validate()?;
    let seeds = spec.episode_seeds()?;
    spec.splits
        .iter()
        .zip(seeds)
        .map(|(s, seeds)| {
            let episodes = seeds
                .par_iter()
                .map(|&seed| generate_episode(spec.kind, s.n, s.ops, seed))
                .collect::<Result<Vec<_>>>()?;
            Ok(Split {
                name: s.name.clone(),
                episodes,
            })
        })
        .collect()
}

fn write_real(out: &mut String, x: f64) {
    let _ = write!(out, "{x:.16e}");
}

fn write_list<T: std::fmt::Display>(out: &mut String, xs: &[T]) {
    out.push('[');
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{x}");
    }
    out.push(']');
}

/// One JSONL line (without trailing newline) in the fixed field order.
pub fn episode_to_line(ep: &Episode) -> String {
    let mut s = String::with_capacity(64 + ep.steps.len() * ep.n * 6);
    let _ = write!(
        s,
        "{{\"version\":{FORMAT_VERSION},\"kind\":\"{}\",\"n\":{},\"ops\":{},\"seed\":{},\"priorities\":[",
        ep.kind, ep.n, ep.ops, ep.seed
    );
    for (i, &p) in ep.priorities.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write_real(&mut s, p);
    }
    s.push_str("],\"steps\":[");
    for (i, st) in ep.steps.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(
            s,
            "{{\"u\":{},\"v\":{},\"y\":{},\"mask\":",
            st.u, st.v, st.y
        );
        write_list(&mut s, &st.mask);
        s.push_str(",\"parent\":");
        write_list(&mut s, &st.parent);
        s.push('}');
    }
    s.push_str("]}");
    s
}

#[derive(Deserialize)]
struct EpisodeLine {
    version: u32,
    #[serde(flatten)]
    episode: Episode,
}

pub fn episode_from_line(line: &str) -> Result<Episode> {
    let parsed: EpisodeLine = serde_json::from_str(line)?;
    if parsed.version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: parsed.version,
        });
    }
    let ep = parsed.episode;
    if ep.priorities.len() != ep.n || ep.steps.len() != ep.ops {
        return Err(Error::Malformed(format!(
            "episode seed {} header disagrees with its body",
            ep.seed
        )));
    }
    Ok(ep)
}

/// Writes `contents` to `path` through a sibling temporary file and rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_split(path: &Path, episodes: &[Episode]) -> Result<()> {
    let mut out = String::new();
    for ep in episodes {
        out.push_str(&episode_to_line(ep));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn load_split(path: &Path) -> Result<Vec<Episode>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(episode_from_line(&line)?);
    }
    Ok(out)
}

pub const MANIFEST: &str = "dataset.json";

/// Generates every split and writes the manifest plus one file per split.
pub fn generate_dataset(spec: &DatasetSpec, dir: &Path) -> Result<Vec<PathBuf>> {
    let splits = generate_splits(spec)?;
    write_dataset(spec, &splits, dir)
}

pub fn write_dataset(spec: &DatasetSpec, splits: &[Split], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(splits.len());
    for split in splits {
        let path = dir.join(format!("{}.jsonl", split.name));
        write_split(&path, &split.episodes)?;
        paths.push(path);
    }
    let manifest = serde_json::to_string_pretty(spec)?;
    write_atomic(&dir.join(MANIFEST), manifest.as_bytes())?;
    Ok(paths)
}

/// Loads a dataset directory in manifest split order.
pub fn load_dataset(dir: &Path) -> Result<(DatasetSpec, Vec<Split>)> {
    let spec: DatasetSpec = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
    spec.validate()?;
    let splits = spec
        .splits
        .iter()
        .map(|s| {
            Ok(Split {
                name: s.name.clone(),
                episodes: load_split(&dir.join(format!("{}.jsonl", s.name)))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((spec, splits))
}
