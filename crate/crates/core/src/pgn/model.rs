use super::params::{ModelParams, Slot};
use crate::adcore::{Tape, Tensor, Var};
use crate::error::{invalid, Error, Result};

/// Message graph: `incoming[i]` lists the senders node `i` aggregates over,
/// sorted and deduplicated. Every node has at least one sender.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    incoming: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn identity(n: usize) -> Self {
        Self {
            incoming: (0..n).map(|i| vec![i]).collect(),
        }
    }

    pub fn complete(n: usize) -> Self {
        Self {
            incoming: vec![(0..n).collect(); n],
        }
    }

    /// Symmetrised: `i` and `j` exchange messages iff either points at the
    /// other. Directed: `i` hears from itself and from every `j` pointing
    /// at `i`.
    pub fn from_pointers(ptr: &[usize], symmetrise: bool) -> Result<Self> {
        let n = ptr.len();
        if let Some(&bad) = ptr.iter().find(|&&p| p >= n) {
            return Err(invalid(format!(
                "pointer target {bad} out of range for {n} nodes"
            )));
        }
        let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, &j) in ptr.iter().enumerate() {
            incoming[j].push(i);
            if symmetrise {
                incoming[i].push(j);
            }
        }
        if !symmetrise {
            for (i, set) in incoming.iter_mut().enumerate() {
                set.push(i);
            }
        }
        for set in &mut incoming {
            set.sort_unstable();
            set.dedup();
        }
        Ok(Self { incoming })
    }

    pub fn from_incoming(incoming: Vec<Vec<usize>>) -> Result<Self> {
        let n = incoming.len();
        let mut incoming = incoming;
        for (i, set) in incoming.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if set.is_empty() {
                return Err(Error::ContractViolation(format!(
                    "node {i} has no incoming edge"
                )));
            }
            if set.iter().any(|&j| j >= n) {
                return Err(invalid(format!("sender out of range for node {i}")));
            }
        }
        Ok(Self { incoming })
    }

    pub fn len(&self) -> usize {
        self.incoming.len()
    }

    pub fn is_empty(&self) -> bool {
        self.incoming.is_empty()
    }

    pub fn incoming(&self) -> &[Vec<usize>] {
        &self.incoming
    }

    /// Whether `receiver` aggregates a message from `sender`.
    pub fn has_edge(&self, receiver: usize, sender: usize) -> bool {
        self.incoming[receiver].binary_search(&sender).is_ok()
    }

    /// Dense 0/1 matrix, row = receiver, column = sender.
    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        let n = self.len();
        self.incoming
            .iter()
            .map(|set| {
                let mut row = vec![0u8; n];
                for &j in set {
                    row[j] = 1;
                }
                row
            })
            .collect()
    }
}

/// Tape handles for every parameter tensor, in slot order.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
    latent_dim: usize,
}

impl Bound {
    pub fn get(&self, slot: Slot) -> Var {
        self.vars[slot.index()]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }
}

/// Places the parameters on `tape`, as differentiable leaves when
/// `trainable` and as constants otherwise.
pub fn bind(tape: &mut Tape, params: &ModelParams, trainable: bool) -> Bound {
    let vars = params
        .tensors()
        .iter()
        .map(|t| {
            if trainable {
                tape.param(t)
            } else {
                tape.constant(t.clone())
            }
        })
        .collect();
    Bound {
        vars,
        latent_dim: params.get(Slot::QueryW).rows(),
    }
}

/// Operation features: `[priority, is_endpoint]` per node.
pub fn features(priorities: &[f64], u: usize, v: usize) -> Tensor {
    let n = priorities.len();
    let mut t = Tensor::zeros(n, 2);
    for (i, &r) in priorities.iter().enumerate() {
        t.set(i, 0, r);
        t.set(i, 1, if i == u || i == v { 1.0 } else { 0.0 });
    }
    t
}

fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_row_bias(y, b)
}

/// `z = [e | h_prev] W + b`, no nonlinearity.
pub fn encode(tape: &mut Tape, p: &Bound, e: Var, h_prev: Var) -> Result<Var> {
    let x = tape.concat_cols(e, h_prev)?;
    affine(tape, x, p.get(Slot::EncW), p.get(Slot::EncB))
}

/// One max-aggregation message-passing layer over `adj`.
///
/// The message weight splits into a receiver block and a sender block, so
/// `max_j relu(a_i + b_j) = relu(a_i + max_j b_j)`; floating-point addition
/// is monotone, so the two forms agree bit for bit.
pub fn process(tape: &mut Tape, p: &Bound, z: Var, adj: &Adjacency) -> Result<Var> {
    let k = p.latent_dim();
    if adj.len() != tape.shape(z).0 {
        return Err(invalid("adjacency size differs from node count"));
    }
    let w = p.get(Slot::MsgW);
    let top: Vec<usize> = (0..k).collect();
    let bottom: Vec<usize> = (k..2 * k).collect();
    let w_recv = tape.select_rows(w, &top)?;
    let w_send = tape.select_rows(w, &bottom)?;
    let recv = affine(tape, z, w_recv, p.get(Slot::MsgB))?;
    let send = tape.matmul(z, w_send)?;
    let pooled = tape.reduce_max(send, adj.incoming())?;
    let pre = tape.add(recv, pooled)?;
    let msg = tape.relu(pre)?;
    let x = tape.concat_cols(z, msg)?;
    let h = affine(tape, x, p.get(Slot::UpdW), p.get(Slot::UpdB))?;
    tape.relu(h)
}

/// Keep logits, one per node (`n x 1`), from `[z | h]`.
pub fn mask_head(tape: &mut Tape, p: &Bound, zh: Var) -> Result<Var> {
    affine(tape, zh, p.get(Slot::MaskW), p.get(Slot::MaskB))
}

/// Hard keep bits: `1` iff `sigmoid(logit) > 0.5`.
pub fn mask_decisions(logits: &Tensor) -> Vec<u8> {
    logits
        .data()
        .iter()
        .map(|&x| u8::from(1.0 / (1.0 + (-x).exp()) > 0.5))
        .collect()
}

/// All-pairs attention logits (`n x n`), self included.
pub fn pointer_head(tape: &mut Tape, p: &Bound, h: Var) -> Result<Var> {
    let q = affine(tape, h, p.get(Slot::QueryW), p.get(Slot::QueryB))?;
    let k = affine(tape, h, p.get(Slot::KeyW), p.get(Slot::KeyB))?;
    tape.matmul_nt(q, k)
}

/// Row argmax of the attention logits, ties to the lowest index.
pub fn pointer_targets(logits: &Tensor) -> Vec<usize> {
    (0..logits.rows()).map(|i| logits.row_argmax(i)).collect()
}

/// Keeps the old target where the keep bit is 1, else takes the new one.
pub fn pointer_update(prev: &[usize], keep: &[u8], targets: &[usize]) -> Vec<usize> {
    prev.iter()
        .zip(keep)
        .zip(targets)
        .map(|((&old, &k), &new)| if k == 1 { old } else { new })
        .collect()
}

/// Query logit from the node-wise max of `[z | h]`. Returns the logit and
/// the `1 x 2k` readout whose winners are kept on the tape.
pub fn decode_query(tape: &mut Tape, p: &Bound, zh: Var) -> Result<(Var, Var)> {
    let n = tape.shape(zh).0;
    let readout = tape.reduce_max(zh, &[(0..n).collect()])?;
    let y = affine(tape, readout, p.get(Slot::DecW), p.get(Slot::DecB))?;
    Ok((y, readout))
}

#[derive(Debug, Clone, Copy)]
pub struct StepOutput {
    pub z: Var,
    pub h: Var,
    pub query_logit: Var,
    pub readout: Var,
    pub mask_logits: Option<Var>,
    pub pointer_logits: Option<Var>,
}

/// One model step over a given message graph.
pub fn step_forward(
    tape: &mut Tape,
    p: &Bound,
    e: &Tensor,
    h_prev: Var,
    adj: &Adjacency,
    mask: bool,
    pointers: bool,
) -> Result<StepOutput> {
    let e = tape.constant(e.clone());
    let z = encode(tape, p, e, h_prev)?;
    let h = process(tape, p, z, adj)?;
    let zh = tape.concat_cols(z, h)?;
    let (query_logit, readout) = decode_query(tape, p, zh)?;
    let mask_logits = if mask {
        Some(mask_head(tape, p, zh)?)
    } else {
        None
    };
    let pointer_logits = if pointers {
        Some(pointer_head(tape, p, h)?)
    } else {
        None
    };
    Ok(StepOutput {
        z,
        h,
        query_logit,
        readout,
        mask_logits,
        pointer_logits,
    })
}
