//! Teacher-forced episode losses, Adam, and the early-stopping epoch loop.
//!
//! An epoch is one shuffled pass over the training episodes with one
//! parameter update per episode. After every epoch the model is rolled out
//! free-running on the validation split and the parameters with the best
//! query F1 (earliest on ties) are kept.

mod pointers;

use serde::{Deserialize, Serialize};

pub use pointers::{
    load_recorded, ptrs_two_phase, record_pointers, write_recorded, RecordedPointer,
    TwoPhaseOutcome,
};

use crate::adcore::{Gradients, Tape, Tensor, Var};
use crate::error::{invalid, Result};
use crate::evalkit::evaluate;
use crate::pgn::{
    bind, rollout, Bound, Mode, ModelConfig, ModelParams, PointerLossScope, RolloutStep,
};
use crate::tracegen::rng::TraceRng;
use crate::tracegen::Episode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub query: f64,
    pub pointer: f64,
    pub mask: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            query: 1.0,
            pointer: 1.0,
            mask: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weights: LossWeights,
    pub init_seed: u64,
    pub shuffle_seed: u64,
}

pub const DESK_EPOCHS: usize = 500;
pub const FULL_EPOCHS: usize = 5000;

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            epochs: DESK_EPOCHS,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weights: LossWeights::default(),
            init_seed: 0,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.epochs == 0 {
            return Err(invalid("learning rate and epochs must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.epsilon > 0.0)
        {
            return Err(invalid("Adam needs betas in [0, 1) and a positive epsilon"));
        }
        let w = self.weights;
        if [w.query, w.pointer, w.mask]
            .iter()
            .any(|x| !(*x >= 0.0) || !x.is_finite())
        {
            return Err(invalid("loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

/// A recorded episode loss. `total` is the differentiable mean over steps;
/// the components are the unweighted per-step means.
#[derive(Debug)]
pub struct EpisodeLoss {
    pub total: Var,
    pub query: f64,
    pub pointer: f64,
    pub mask: f64,
    pub steps: Vec<RolloutStep>,
}

fn accumulate(tape: &mut Tape, acc: Option<Var>, term: Var) -> Result<Option<Var>> {
    Ok(Some(match acc {
        None => term,
        Some(a) => tape.add(a, term)?,
    }))
}

/// Teacher-forced rollout plus the weighted, step-averaged losses enabled
/// by the variant.
pub fn episode_loss(
    tape: &mut Tape,
    p: &Bound,
    config: &ModelConfig,
    weights: &LossWeights,
    ep: &Episode,
    external: Option<&[Vec<usize>]>,
) -> Result<EpisodeLoss> {
    if ep.steps.is_empty() {
        return Err(invalid("episode has no steps"));
    }
    let steps = rollout(tape, p, config, ep, Mode::TeacherForced, external)?;
    let use_query = config.query_loss && weights.query > 0.0;
    let use_ptr = config.pointer_loss && weights.pointer > 0.0;
    let use_mask = config.mask_loss && weights.mask > 0.0;
    let (mut sq, mut sp, mut sm) = (0.0, 0.0, 0.0);
    let mut acc: Option<Var> = None;
    for (s, truth) in steps.iter().zip(&ep.steps) {
        if use_query {
            let l = tape.bce_with_logits(s.out.query_logit, &[f64::from(truth.y)])?;
            sq += tape.value(l).item();
            let l = tape.scale(l, weights.query)?;
            acc = accumulate(tape, acc, l)?;
        }
        if use_ptr {
            let logits = s
                .out
                .pointer_logits
                .ok_or_else(|| invalid("variant lacks a pointer head"))?;
            let rows: Vec<usize> = match config.pointer_loss_scope {
                PointerLossScope::All => (0..ep.n).collect(),
                PointerLossScope::Modified => (0..ep.n).filter(|&i| truth.mask[i] == 0).collect(),
            };
            if !rows.is_empty() {
                let targets: Vec<usize> = rows.iter().map(|&i| truth.parent[i]).collect();
                let logits = if rows.len() == ep.n {
                    logits
                } else {
                    tape.select_rows(logits, &rows)?
                };
                let l = tape.softmax_cross_entropy(logits, &targets)?;
                sp += tape.value(l).item();
                let l = tape.scale(l, weights.pointer)?;
                acc = accumulate(tape, acc, l)?;
            }
        }
        if use_mask {
            let logits = s
                .out
                .mask_logits
                .ok_or_else(|| invalid("variant lacks a mask head"))?;
            let targets: Vec<f64> = truth.mask.iter().map(|&m| f64::from(m)).collect();
            let l = tape.bce_with_logits(logits, &targets)?;
            sm += tape.value(l).item();
            let l = tape.scale(l, weights.mask)?;
            acc = accumulate(tape, acc, l)?;
        }
    }
    let t = steps.len() as f64;
    let total = match acc {
        Some(a) => tape.scale(a, 1.0 / t)?,
        None => tape.constant(Tensor::scalar(0.0)),
    };
    Ok(EpisodeLoss {
        total,
        query: sq / t,
        pointer: sp / t,
        mask: sm / t,
        steps,
    })
}

/// Loss value and per-parameter gradients (zeros where nothing flowed).
pub fn loss_and_grads(
    params: &ModelParams,
    config: &ModelConfig,
    weights: &LossWeights,
    ep: &Episode,
    external: Option<&[Vec<usize>]>,
) -> Result<(f64, [f64; 3], Vec<Tensor>)> {
    let mut tape = Tape::with_checks(true);
    let bound = bind(&mut tape, params, true);
    let loss = episode_loss(&mut tape, &bound, config, weights, ep, external)?;
    let grads: Gradients = tape.backward(loss.total)?;
    let g = bound
        .vars()
        .iter()
        .zip(params.tensors())
        .map(|(&v, t)| grads.get_or_zeros(v, t.shape()))
        .collect();
    Ok((
        tape.value(loss.total).item(),
        [loss.query, loss.pointer, loss.mask],
        g,
    ))
}

/// Adam moment estimates mirroring the parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl OptimState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam step.
pub fn adam_update(
    params: &mut ModelParams,
    grads: &[Tensor],
    state: &mut OptimState,
    cfg: &TrainConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params
        .tensors_mut()
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        let it = p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut()));
        for ((w, &gi), (mi, vi)) in it {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *w -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub query_loss: f64,
    pub pointer_loss: f64,
    pub mask_loss: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: ModelParams,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    /// Validation F1 of the freshly initialised model.
    pub initial_val_f1: f64,
    pub history: Vec<EpochRecord>,
}

/// Pointer snapshots for the training and validation episodes, required
/// by `fixed_ptrs`.
#[derive(Debug, Clone, Copy)]
pub struct Snapshots<'a> {
    pub train: &'a [Vec<Vec<usize>>],
    pub val: &'a [Vec<Vec<usize>>],
}

pub fn train_loop(
    model: &ModelConfig,
    cfg: &TrainConfig,
    train: &[Episode],
    val: &[Episode],
    snapshots: Option<Snapshots<'_>>,
) -> Result<TrainOutcome> {
    train_loop_with(model, cfg, train, val, snapshots, |_| {})
}

/// [`train_loop`] with a callback after every epoch.
pub fn train_loop_with(
    model: &ModelConfig,
    cfg: &TrainConfig,
    train: &[Episode],
    val: &[Episode],
    snapshots: Option<Snapshots<'_>>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    model.validate()?;
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(invalid("training and validation sets must be non-empty"));
    }
    if let Some(s) = snapshots {
        if s.train.len() != train.len() || s.val.len() != val.len() {
            return Err(invalid("pointer snapshots must match the episode lists"));
        }
    }
    let mut params = ModelParams::init(model, cfg.init_seed)?;
    let mut state = OptimState::new(&params);
    let mut rng = TraceRng::new(cfg.shuffle_seed);
    let val_ext = snapshots.map(|s| s.val);
    let initial_val_f1 = evaluate(&params, model, val, val_ext)?.query_f1;
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut best_val_f1 = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut sums = [0.0f64; 4];
        for &i in &order {
            let ext = snapshots.map(|s| s.train[i].as_slice());
            let (loss, parts, grads) =
                loss_and_grads(&params, model, &cfg.weights, &train[i], ext)?;
            adam_update(&mut params, &grads, &mut state, cfg);
            sums[0] += loss;
            for (s, p) in sums[1..].iter_mut().zip(parts) {
                *s += p;
            }
        }
        let n = train.len() as f64;
        let val_f1 = evaluate(&params, model, val, val_ext)?.query_f1;
        let record = EpochRecord {
            epoch,
            loss: sums[0] / n,
            query_loss: sums[1] / n,
            pointer_loss: sums[2] / n,
            mask_loss: sums[3] / n,
            val_f1,
        };
        if val_f1 > best_val_f1 {
            best_val_f1 = val_f1;
            best_epoch = epoch;
            best.clone_from(&params);
        }
        on_epoch(&record);
        history.push(record);
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_f1,
        initial_val_f1,
        history,
    })
}

/// Central-difference step used by [`gradient_check`].
pub const GRADCHECK_EPS: f64 = 1e-6;
/// Denominator floor for the relative error. Round-off in a central
/// difference of an O(1) loss is about 1e-10, so gradients below the floor
/// are judged on absolute error scaled by it.
pub const GRADCHECK_FLOOR: f64 = 1e-4;

/// Finite-difference check of the full teacher-forced episode loss over
/// every parameter entry, on a random `n`-node, `ops`-step DSU episode.
pub fn gradient_check(
    variant: crate::pgn::Variant,
    latent_dim: usize,
    n: usize,
    ops: usize,
    seed: u64,
) -> Result<crate::adcore::GradCheckReport> {
    let config = ModelConfig::with_latent(variant, latent_dim);
    let ep = crate::tracegen::generate_episode(crate::tracegen::Kind::Dsu, n, ops, seed)?;
    let external: Option<Vec<Vec<usize>>> = (variant == crate::pgn::Variant::FixedPtrs)
        .then(|| ep.steps.iter().map(|s| s.parent.clone()).collect());
    let ext = external.as_deref();
    let params = ModelParams::init(&config, seed)?;
    let weights = LossWeights::default();
    let (_, _, analytic) = loss_and_grads(&params, &config, &weights, &ep, ext)?;
    let mut tensors = params.into_tensors();
    crate::adcore::grad_check(
        &mut tensors,
        &analytic,
        GRADCHECK_EPS,
        GRADCHECK_FLOOR,
        |ts| {
            let p = ModelParams::from_tensors(&config, ts.to_vec())?;
            let mut tape = Tape::with_checks(true);
            let bound = bind(&mut tape, &p, false);
            let loss = episode_loss(&mut tape, &bound, &config, &weights, &ep, ext)?;
            Ok(tape.value(loss.total).item())
        },
    )
}
