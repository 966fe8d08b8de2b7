//! Digit-based recoding: the sharing-free baseline synthesizer.
//!
//! Every row of the constant matrix is expanded into its canonical signed
//! digits and summed with a balanced adder tree. A row with `T` nonzero
//! digits therefore costs exactly `max(T - 1, 0)` operations at depth
//! `ceil(log2 T)`, and rows share nothing. Optimizers are measured against
//! this count.

use super::{build_tree, csd_terms, CmBlockSpec, ShiftAddDag, Term};

/// Synthesizes a block by digit-based recoding.
pub fn synth_dbr(spec: &CmBlockSpec) -> ShiftAddDag {
    let mut nodes = Vec::new();
    let mut outputs = Vec::with_capacity(spec.num_outputs());
    for row in &spec.rows {
        let terms: Vec<Term> = row
            .iter()
            .enumerate()
            .flat_map(|(input, &c)| csd_terms(c, input))
            .collect();
        if terms.is_empty() {
            outputs.push(Term::zero());
        } else {
            outputs.push(build_tree(&terms, &mut nodes));
        }
    }
    ShiftAddDag { num_inputs: spec.num_inputs(), nodes, outputs }
}

/// Operation count the recoding baseline uses for a block: the sum over rows
/// of `max(digits - 1, 0)`.
pub fn dbr_opcount(spec: &CmBlockSpec) -> u64 {
    spec.rows
        .iter()
        .map(|row| super::vector_digits(row).saturating_sub(1))
        .sum()
}
