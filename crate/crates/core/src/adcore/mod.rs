//! Dense `f64` tensors and a small reverse-mode automatic differentiation tape.

mod tape;
mod tensor;

pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use crate::error::Result;

/// Worst entry found by [`grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: usize,
    pub worst_entry: usize,
    pub checked: usize,
}

/// Relative error with an absolute floor on the denominator so entries
/// whose true gradient is near zero are judged on absolute error.
pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` against central differences of `loss` for every
/// entry of every parameter.
///
/// `loss` must evaluate the same function the analytic gradient came from.
pub fn grad_check(
    params: &mut [Tensor],
    analytic: &[Tensor],
    eps: f64,
    floor: f64,
    mut loss: impl FnMut(&[Tensor]) -> Result<f64>,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: 0,
        worst_entry: 0,
        checked: 0,
    };
    for p in 0..params.len() {
        for e in 0..params[p].data().len() {
            let orig = params[p].data()[e];
            params[p].data_mut()[e] = orig + eps;
            let plus = loss(params)?;
            params[p].data_mut()[e] = orig - eps;
            let minus = loss(params)?;
            params[p].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = rel_error(analytic[p].data()[e], numeric, floor);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = p;
                report.worst_entry = e;
            }
        }
    }
    Ok(report)
}
