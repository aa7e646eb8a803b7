use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{train_loop, Snapshots, TrainConfig, TrainOutcome};
use crate::error::{invalid, Error, Result};
use crate::evalkit::trace_all;
use crate::pgn::{ModelConfig, ModelParams, Variant};
use crate::tracegen::{write_atomic, Episode};

/// One line of a recorded-pointer file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedPointer {
    pub split: String,
    pub episode: usize,
    pub step: usize,
    pub pointers: Vec<usize>,
}

/// Pointers a model carries through free-running rollouts, indexed by
/// episode then step.
pub fn record_pointers(
    params: &ModelParams,
    config: &ModelConfig,
    episodes: &[Episode],
) -> Result<Vec<Vec<Vec<usize>>>> {
    if !config.variant.uses_pointers() {
        return Err(invalid(format!(
            "variant {} infers no pointers",
            config.variant
        )));
    }
    Ok(trace_all(params, config, episodes, None)?
        .into_iter()
        .map(|t| t.pointers)
        .collect())
}

/// Writes one line per (split, episode, step), splits in the given order.
pub fn write_recorded(path: &Path, splits: &[(&str, &[Vec<Vec<usize>>])]) -> Result<()> {
    let mut out = String::new();
    for &(split, recorded) in splits {
        for (episode, steps) in recorded.iter().enumerate() {
            for (step, ptr) in steps.iter().enumerate() {
                let line = RecordedPointer {
                    split: split.to_string(),
                    episode,
                    step,
                    pointers: ptr.clone(),
                };
                out.push_str(&serde_json::to_string(&line)?);
                out.push('\n');
            }
        }
    }
    write_atomic(path, out.as_bytes())
}

/// Reads a recorded-pointer file back into per-split nested lists, checking
/// that every (episode, step) appears once and in order.
pub fn load_recorded(path: &Path) -> Result<BTreeMap<String, Vec<Vec<Vec<usize>>>>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out: BTreeMap<String, Vec<Vec<Vec<usize>>>> = BTreeMap::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: RecordedPointer = serde_json::from_str(&line)?;
        let eps = out.entry(r.split.clone()).or_default();
        if r.episode == eps.len() {
            eps.push(Vec::new());
        }
        let ok = r.episode + 1 == eps.len() && eps[r.episode].len() == r.step;
        if !ok {
            return Err(Error::Malformed(format!(
                "recorded pointers out of order at {} episode {} step {}",
                r.split, r.episode, r.step
            )));
        }
        eps[r.episode].push(r.pointers);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TwoPhaseOutcome {
    pub phase1: TrainOutcome,
    pub phase2_config: ModelConfig,
    pub phase2: TrainOutcome,
    pub recorded_train: Vec<Vec<Vec<usize>>>,
    pub recorded_val: Vec<Vec<Vec<usize>>>,
}

/// Trains a pointer-inferring model, records the pointers it carries over
/// the training and validation episodes, then trains a fresh query-only
/// model over those fixed pointers.
pub fn ptrs_two_phase(
    phase1_model: &ModelConfig,
    cfg: &TrainConfig,
    train: &[Episode],
    val: &[Episode],
) -> Result<TwoPhaseOutcome> {
    if !phase1_model.variant.uses_pointers() {
        return Err(invalid("phase 1 must train a pointer-inferring variant"));
    }
    let phase1 = train_loop(phase1_model, cfg, train, val, None)?;
    let recorded_train = record_pointers(&phase1.best, phase1_model, train)?;
    let recorded_val = record_pointers(&phase1.best, phase1_model, val)?;
    let phase2_config = ModelConfig::with_latent(Variant::FixedPtrs, phase1_model.latent_dim);
    assert!(!phase2_config.pointer_loss && !phase2_config.mask_loss);
    let phase2 = train_loop(
        &phase2_config,
        cfg,
        train,
        val,
        Some(Snapshots {
            train: &recorded_train,
            val: &recorded_val,
        }),
    )?;
    Ok(TwoPhaseOutcome {
        phase1,
        phase2_config,
        phase2,
        recorded_train,
        recorded_val,
    })
}
