use serde::Serialize;

use super::RolloutTrace;
use crate::error::{invalid, Result};
use crate::tracegen::Episode;

/// Fractions of readout dimensions won by each node group at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CreditStep {
    pub episode: usize,
    pub step: usize,
    /// Won by the two operated nodes.
    pub operated: f64,
    /// Won by other nodes the step modifies.
    pub relevant: f64,
    /// Won by everything else.
    pub irrelevant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CreditSummary {
    pub steps: usize,
    pub operated: f64,
    pub relevant: f64,
    pub irrelevant: f64,
}

impl CreditSummary {
    /// Operated plus other relevant nodes.
    pub fn relevant_total(&self) -> f64 {
        self.operated + self.relevant
    }
}

pub fn credit_assignment(traces: &[RolloutTrace], episodes: &[Episode]) -> Result<Vec<CreditStep>> {
    if traces.len() != episodes.len() {
        return Err(invalid("one trace per episode required"));
    }
    let mut out = Vec::new();
    for (e, (trace, ep)) in traces.iter().zip(episodes).enumerate() {
        if trace.winners.len() != ep.steps.len() {
            return Err(invalid(format!("trace {e} has the wrong step count")));
        }
        for (t, (winners, s)) in trace.winners.iter().zip(&ep.steps).enumerate() {
            if winners.is_empty() || winners.iter().any(|&w| w >= ep.n) {
                return Err(invalid(format!("bad winners at episode {e} step {t}")));
            }
            let (mut a, mut b, mut c) = (0usize, 0usize, 0usize);
            for &w in winners {
                if w == s.u || w == s.v {
                    a += 1;
                } else if s.mask[w] == 0 {
                    b += 1;
                } else {
                    c += 1;
                }
            }
            let total = winners.len() as f64;
            out.push(CreditStep {
                episode: e,
                step: t,
                operated: a as f64 / total,
                relevant: b as f64 / total,
                irrelevant: c as f64 / total,
            });
        }
    }
    Ok(out)
}

pub fn summarise_credit(steps: &[CreditStep]) -> CreditSummary {
    let n = steps.len().max(1) as f64;
    CreditSummary {
        steps: steps.len(),
        operated: steps.iter().map(|s| s.operated).sum::<f64>() / n,
        relevant: steps.iter().map(|s| s.relevant).sum::<f64>() / n,
        irrelevant: steps.iter().map(|s| s.irrelevant).sum::<f64>() / n,
    }
}
