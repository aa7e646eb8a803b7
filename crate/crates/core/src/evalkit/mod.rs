//! Query F1, pointer and mask accuracy, rollout structure and
//! credit-assignment analyses.
//!
//! Query F1 is pooled over every (episode, step) of a split. Pointer and
//! mask accuracy are pooled over every (node, step) pair.

mod credit;
mod metrics;
mod structure;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use credit::{credit_assignment, summarise_credit, CreditStep, CreditSummary};
pub use metrics::{f1_binary, mean_std, median, Confusion, MeanStd};
pub use structure::{
    pathological_protocol, pointer_depth, pointer_dot, rollout_structure, truth_pointers,
    write_dot_files, StructureStep,
};

use crate::adcore::Tape;
use crate::error::{invalid, Result};
use crate::pgn::{bind, rollout, Mode, ModelConfig, ModelParams};
use crate::tracegen::Episode;

/// Per-step record of one rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutTrace {
    /// Pointers carried after each step.
    pub pointers: Vec<Vec<usize>>,
    /// Hard keep bits, when the model has a mask head.
    pub masks: Vec<Option<Vec<u8>>>,
    pub predictions: Vec<u8>,
    pub query_logits: Vec<f64>,
    /// Winning node of every readout dimension.
    pub winners: Vec<Vec<usize>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn trace_episode(
    params: &ModelParams,
    config: &ModelConfig,
    ep: &Episode,
    mode: Mode,
    external: Option<&[Vec<usize>]>,
) -> Result<RolloutTrace> {
    let mut tape = Tape::with_checks(true);
    let bound = bind(&mut tape, params, false);
    let steps = rollout(&mut tape, &bound, config, ep, mode, external)?;
    let mut trace = RolloutTrace {
        pointers: Vec::with_capacity(steps.len()),
        masks: Vec::with_capacity(steps.len()),
        predictions: Vec::with_capacity(steps.len()),
        query_logits: Vec::with_capacity(steps.len()),
        winners: Vec::with_capacity(steps.len()),
    };
    for s in steps {
        let logit = tape.value(s.out.query_logit).item();
        trace.query_logits.push(logit);
        trace.predictions.push(u8::from(sigmoid(logit) > 0.5));
        trace.winners.push(
            tape.winners(s.out.readout)
                .expect("readout is a max reduction")
                .to_vec(),
        );
        trace.masks.push(s.predicted_mask);
        trace.pointers.push(s.pointers);
    }
    Ok(trace)
}

/// Which pointers pointer accuracy compares against the ground truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointerMetric {
    /// Pointers carried through a free-running rollout.
    #[default]
    Carried,
    /// Per-step argmax targets under teacher forcing.
    TeacherForcedArgmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub steps: usize,
    pub query_f1: f64,
    pub pointer_accuracy: Option<f64>,
    pub mask_accuracy: Option<f64>,
}

/// Free-running traces for every episode, in input order.
pub fn trace_all(
    params: &ModelParams,
    config: &ModelConfig,
    episodes: &[Episode],
    external: Option<&[Vec<Vec<usize>>]>,
) -> Result<Vec<RolloutTrace>> {
    if let Some(ext) = external {
        if ext.len() != episodes.len() {
            return Err(invalid("one pointer snapshot list per episode required"));
        }
    }
    episodes
        .par_iter()
        .enumerate()
        .map(|(i, ep)| {
            let ext = external.map(|e| e[i].as_slice());
            trace_episode(params, config, ep, Mode::FreeRunning, ext)
        })
        .collect()
}

fn fraction(hits: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Metrics from precomputed traces.
pub fn report_from_traces(
    config: &ModelConfig,
    traces: &[RolloutTrace],
    episodes: &[Episode],
) -> EvalReport {
    let mut confusion = Confusion::default();
    let (mut ptr_hits, mut ptr_total, mut mask_hits, mut mask_total) = (0u64, 0u64, 0u64, 0u64);
    let mut steps = 0;
    for (trace, ep) in traces.iter().zip(episodes) {
        let targets: Vec<u8> = ep.steps.iter().map(|s| s.y).collect();
        let c = Confusion::from_pairs(&trace.predictions, &targets);
        confusion.tp += c.tp;
        confusion.fp += c.fp;
        confusion.fn_ += c.fn_;
        confusion.tn += c.tn;
        steps += ep.steps.len();
        for (t, s) in ep.steps.iter().enumerate() {
            let ptr = &trace.pointers[t];
            ptr_hits += ptr.iter().zip(&s.parent).filter(|(a, b)| a == b).count() as u64;
            ptr_total += ep.n as u64;
            if let Some(m) = &trace.masks[t] {
                mask_hits += m.iter().zip(&s.mask).filter(|(a, b)| a == b).count() as u64;
                mask_total += ep.n as u64;
            }
        }
    }
    let variant = config.variant;
    EvalReport {
        episodes: episodes.len(),
        steps,
        query_f1: confusion.f1(),
        pointer_accuracy: variant
            .uses_pointers()
            .then(|| fraction(ptr_hits, ptr_total)),
        mask_accuracy: variant
            .has_mask_head()
            .then(|| fraction(mask_hits, mask_total)),
    }
}

/// Free-running evaluation with carried-pointer accuracy.
pub fn evaluate(
    params: &ModelParams,
    config: &ModelConfig,
    episodes: &[Episode],
    external: Option<&[Vec<Vec<usize>>]>,
) -> Result<EvalReport> {
    evaluate_with(params, config, episodes, external, PointerMetric::Carried)
}

pub fn evaluate_with(
    params: &ModelParams,
    config: &ModelConfig,
    episodes: &[Episode],
    external: Option<&[Vec<Vec<usize>>]>,
    metric: PointerMetric,
) -> Result<EvalReport> {
    let traces = trace_all(params, config, episodes, external)?;
    let mut report = report_from_traces(config, &traces, episodes);
    if metric == PointerMetric::TeacherForcedArgmax && config.variant.has_pointer_head() {
        let (hits, total) = episodes
            .par_iter()
            .enumerate()
            .map(|(i, ep)| -> Result<(u64, u64)> {
                let mut tape = Tape::with_checks(true);
                let bound = bind(&mut tape, params, false);
                let ext = external.map(|e| e[i].as_slice());
                let steps = rollout(&mut tape, &bound, config, ep, Mode::TeacherForced, ext)?;
                let mut hits = 0;
                for (s, truth) in steps.iter().zip(&ep.steps) {
                    let tg = s.targets.as_ref().expect("pointer head");
                    hits += tg.iter().zip(&truth.parent).filter(|(a, b)| a == b).count() as u64;
                }
                Ok((hits, (ep.n * ep.steps.len()) as u64))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        report.pointer_accuracy = Some(fraction(hits, total));
    }
    Ok(report)
}
