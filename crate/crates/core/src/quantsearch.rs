//! Search for the smallest weight fraction width that holds accuracy.
//!
//! Hardware accuracy is evaluated at increasing widths until another
//! fractional bit buys no more than 0.1 percentage points — networks whose
//! outputs are still saturating score zero and never satisfy the exit test,
//! so widths too narrow to represent any weight are skipped over naturally.
//! When no width converges below the cap, the most accurate width seen is
//! returned with the `exhausted` flag set.

use thiserror::Error;

use crate::fixedpoint::{quantize_model, FixedFormat, QuantizeError};
use crate::inference::{accuracy_on_encoded, encode_dataset};
use crate::model::{AnnModel, Dataset};

/// Accuracy improvements at or below this threshold end the search.
pub const CONVERGENCE_THRESHOLD: f64 = 0.001;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Quant(#[from] QuantizeError),
    #[error("the validation split is empty; nothing to evaluate accuracy on")]
    EmptyValidation,
}

/// Outcome of the width search.
#[derive(Debug, Clone, PartialEq)]
pub struct MinQResult {
    /// Selected weight fraction width.
    pub q: u32,
    /// Hardware accuracy at `q`.
    pub ha: f64,
    /// Every `(q, accuracy)` pair evaluated, in order.
    pub history: Vec<(u32, f64)>,
    /// True when the cap was reached without convergence; `q` is then the
    /// most accurate width evaluated.
    pub exhausted: bool,
}

/// Core search loop over an accuracy evaluator.
///
/// Returns the first width whose accuracy is positive and improves on the
/// previous width by at most [`CONVERGENCE_THRESHOLD`]; zero-accuracy widths
/// only ever continue the search.
pub fn min_q_loop(mut eval: impl FnMut(u32) -> f64, max_q: u32) -> MinQResult {
    assert!(max_q >= 1, "the width cap must allow at least one evaluation");
    let mut history: Vec<(u32, f64)> = Vec::new();
    let mut previous: Option<f64> = None;
    for q in 1..=max_q {
        let ha = eval(q);
        history.push((q, ha));
        if let Some(prev) = previous {
            if ha > 0.0 && ha - prev <= CONVERGENCE_THRESHOLD {
                return MinQResult { q, ha, history, exhausted: false };
            }
        }
        previous = Some(ha);
    }
    let &(q, ha) = history
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .expect("at least one width was evaluated");
    MinQResult { q, ha, history, exhausted: true }
}

/// Quantizes `model` at widths `1..=max_q` and returns the converged width
/// per [`min_q_loop`], evaluating accuracy on `validation`.
pub fn find_min_q(
    model: &AnnModel,
    validation: &Dataset,
    input_bits: u32,
    input_frac_bits: u32,
    max_q: u32,
) -> Result<MinQResult, SearchError> {
    if validation.samples.is_empty() {
        return Err(SearchError::EmptyValidation);
    }
    // Input encoding does not depend on the weight width.
    let fmt = FixedFormat { input_bits, input_frac_bits, q: 0, acc_frac_bits: input_frac_bits };
    let encoded = encode_dataset(validation, &fmt);
    let mut error: Option<QuantizeError> = None;
    let result = min_q_loop(
        |q| match quantize_model(model, q, input_bits, input_frac_bits) {
            Ok(qa) => accuracy_on_encoded(&qa, &encoded),
            Err(e) => {
                error.get_or_insert(e);
                0.0
            }
        },
        max_q,
    );
    match error {
        Some(e) => Err(e.into()),
        None => Ok(result),
    }
}
