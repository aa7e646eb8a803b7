//! Pointer graph networks trained against instrumented data-structure traces.
//!
//! * [`dsu`] and [`lct`]: ground-truth disjoint-set union and link/cut trees
//!   with write tracking.
//! * [`tracegen`]: episode generation, naive oracles, validation, JSONL I/O.
//! * [`adcore`]: dense tensors with a reverse-mode tape.
//! * [`pgn`]: the step model and every baseline/ablation variant.
//! * [`train`]: teacher-forced losses, Adam, early stopping.
//! * [`evalkit`]: metrics, rollout structure and credit-assignment analyses.

pub mod adcore;
pub mod dsu;
mod error;
pub mod evalkit;
pub mod lct;
pub mod pgn;
pub mod tracegen;
pub mod train;

pub use error::{Error, Result};
