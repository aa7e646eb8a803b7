use serde::{Deserialize, Serialize};

use super::model::{
    features, mask_decisions, pointer_targets, pointer_update, step_forward, Adjacency, Bound,
    StepOutput,
};
use super::{ModelConfig, Variant};
use crate::adcore::{Tape, Tensor};
use crate::error::{invalid, Result};
use crate::tracegen::Episode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Message graph and carried pointers come from the ground truth.
    TeacherForced,
    /// The model carries its own keep bits and argmax pointers.
    FreeRunning,
}

#[derive(Debug, Clone)]
pub struct RolloutStep {
    pub out: StepOutput,
    /// Message graph the processor used at this step.
    pub adjacency: Adjacency,
    /// The model's hard keep bits, when it has a mask head.
    pub predicted_mask: Option<Vec<u8>>,
    /// Argmax pointer targets, when it has a pointer head.
    pub targets: Option<Vec<usize>>,
    /// Pointers carried into the next step.
    pub pointers: Vec<usize>,
}

fn check_snapshots(ep: &Episode, external: &[Vec<usize>]) -> Result<()> {
    if external.len() != ep.steps.len() || external.iter().any(|p| p.len() != ep.n) {
        return Err(invalid(format!(
            "pointer snapshots must cover {} steps of {} nodes",
            ep.steps.len(),
            ep.n
        )));
    }
    Ok(())
}

/// Runs the model over a whole episode on `tape`.
///
/// `external` supplies post-step pointer snapshots for `fixed_ptrs`; step
/// `t` then passes messages along snapshot `t - 1` (identity at `t = 0`).
pub fn rollout(
    tape: &mut Tape,
    p: &Bound,
    config: &ModelConfig,
    ep: &Episode,
    mode: Mode,
    external: Option<&[Vec<usize>]>,
) -> Result<Vec<RolloutStep>> {
    let n = ep.n;
    let variant = config.variant;
    if ep.priorities.len() != n
        || ep
            .steps
            .iter()
            .any(|s| s.mask.len() != n || s.parent.len() != n)
    {
        return Err(invalid("episode is missing per-node ground truth"));
    }
    if variant == Variant::FixedPtrs {
        let ext = external.ok_or_else(|| invalid("fixed_ptrs needs pointer snapshots"))?;
        check_snapshots(ep, ext)?;
    }
    let identity: Vec<usize> = (0..n).collect();
    let mut h = tape.constant(Tensor::zeros(n, p.latent_dim()));
    let mut carried = identity.clone();
    let mut out = Vec::with_capacity(ep.steps.len());
    for (t, s) in ep.steps.iter().enumerate() {
        let prev_truth = if t == 0 {
            &identity
        } else {
            &ep.steps[t - 1].parent
        };
        let adjacency = match variant {
            Variant::Deepsets => Adjacency::identity(n),
            Variant::Gnn | Variant::Supgnn => Adjacency::complete(n),
            Variant::FixedPtrs => {
                let ext = external.expect("checked above");
                let prev = if t == 0 { &identity } else { &ext[t - 1] };
                Adjacency::from_pointers(prev, true)?
            }
            Variant::PgnMo => Adjacency::from_pointers(&carried, config.symmetrise)?,
            Variant::Pgn | Variant::PgnNm | Variant::PgnAsym => match mode {
                Mode::TeacherForced => Adjacency::from_pointers(prev_truth, config.symmetrise)?,
                Mode::FreeRunning => Adjacency::from_pointers(&carried, config.symmetrise)?,
            },
        };
        let e = features(&ep.priorities, s.u, s.v);
        let step = step_forward(
            tape,
            p,
            &e,
            h,
            &adjacency,
            variant.has_mask_head(),
            variant.has_pointer_head(),
        )?;
        let predicted_mask = step.mask_logits.map(|m| mask_decisions(tape.value(m)));
        let targets = step.pointer_logits.map(|l| pointer_targets(tape.value(l)));
        let pointers = match variant {
            Variant::Deepsets | Variant::Gnn | Variant::Supgnn => identity.clone(),
            Variant::FixedPtrs => external.expect("checked above")[t].clone(),
            Variant::PgnMo => {
                let keep = match mode {
                    Mode::TeacherForced => &s.mask,
                    Mode::FreeRunning => predicted_mask.as_ref().expect("mask head"),
                };
                pointer_update(&carried, keep, targets.as_ref().expect("pointer head"))
            }
            Variant::Pgn | Variant::PgnNm | Variant::PgnAsym => match mode {
                Mode::TeacherForced => s.parent.clone(),
                Mode::FreeRunning => {
                    let keep = match &predicted_mask {
                        Some(m) => m.clone(),
                        None => vec![0; n],
                    };
                    pointer_update(&carried, &keep, targets.as_ref().expect("pointer head"))
                }
            },
        };
        carried.clone_from(&pointers);
        h = step.h;
        out.push(RolloutStep {
            out: step,
            adjacency,
            predicted_mask,
            targets,
            pointers,
        });
    }
    Ok(out)
}
