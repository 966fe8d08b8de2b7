//! Post-quantization weight tuning against the bit-exact accuracy oracle.
//!
//! Both tuners propose small weight edits, evaluate the full hardware
//! accuracy of the edited network, and keep an edit only when accuracy does
//! not drop below the best value seen. [`tune_parallel`] removes the least
//! significant signed digit of one weight at a time, shrinking the adder
//! networks of a fully parallel design. [`tune_smac`] pushes weights toward
//! higher factors of two so a time-multiplexed multiply-accumulate block can
//! drop its trailing zero bits, optionally compensating a weight edit with a
//! small bias offset.

use crate::fixedpoint::{
    largest_left_shift, magnitude_bits, smallest_left_shift, to_csd, QuantizedAnn,
};
use crate::inference::accuracy_on_encoded;

/// Outcome of a tuning run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneResult {
    pub initial_ha: f64,
    pub final_ha: f64,
    /// Full passes over the network, including the final one that commits
    /// nothing.
    pub passes: u32,
    pub commits: u64,
}

/// Which weights share one multiply-accumulate block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuneScope {
    /// One block per neuron: weights are grouped per neuron.
    PerNeuron,
    /// One block for the whole network: a single weight group.
    Global,
}

/// Removes the least significant nonzero signed digit of `w`.
///
/// `11 = +16-4-1` becomes `12`; a power of two loses its only digit and
/// becomes zero.
pub fn drop_low_digit(w: i64) -> i64 {
    debug_assert!(w != 0, "zero has no digit to remove");
    for (position, &d) in to_csd(w).digits.iter().enumerate() {
        if d != 0 {
            return w - i64::from(d) * (1i64 << position);
        }
    }
    w
}

/// Tunes a network for the fully parallel architecture: drops signed digits
/// wherever accuracy allows, sweeping layer by layer until a full sweep
/// commits nothing. The total nonzero-digit count strictly decreases with
/// every commit.
pub fn tune_parallel(qa: &mut QuantizedAnn, data: &[(Vec<i64>, usize)]) -> TuneResult {
    let initial_ha = accuracy_on_encoded(qa, data);
    let mut bha = initial_ha;
    let mut passes = 0;
    let mut commits = 0;
    loop {
        passes += 1;
        let mut changed = false;
        for l in 0..qa.weights.len() {
            for n in 0..qa.weights[l].len() {
                for i in 0..qa.weights[l][n].len() {
                    let w = qa.weights[l][n][i];
                    if w == 0 {
                        continue;
                    }
                    qa.weights[l][n][i] = drop_low_digit(w);
                    let ha = accuracy_on_encoded(qa, data);
                    if ha >= bha {
                        bha = ha;
                        changed = true;
                        commits += 1;
                    } else {
                        qa.weights[l][n][i] = w;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    TuneResult { initial_ha, final_ha: bha, passes, commits }
}

/// The two nearest multiples of `2^(sls+1)` around `w`, sign restored.
///
/// For a weight whose trailing-zero count equals the group minimum `sls`,
/// committing either candidate raises that weight's trailing-zero count and
/// so can raise the whole group's.
pub fn smac_candidates(w: i64, sls: u32) -> (i64, i64) {
    debug_assert!(w != 0 && largest_left_shift(w) == sls);
    let step = 1i64 << (sls + 1);
    let low = w.abs() - (w.abs() % step);
    if w < 0 {
        (-low, -(low + step))
    } else {
        (low, low + step)
    }
}

/// Tunes a network for a time-multiplexed architecture: raises the smallest
/// trailing-zero count of each weight group so the accumulate loop can run
/// on right-shifted weights. Passes repeat while any group's trailing-zero
/// floor improves; a weight edit that costs accuracy may be rescued by a
/// bias offset of at most four integer units.
pub fn tune_smac(
    qa: &mut QuantizedAnn,
    data: &[(Vec<i64>, usize)],
    scope: TuneScope,
) -> TuneResult {
    let initial_ha = accuracy_on_encoded(qa, data);
    let mut bha = initial_ha;
    let mut passes = 0;
    let mut commits = 0;
    let groups: Vec<Vec<(usize, usize)>> = match scope {
        TuneScope::PerNeuron => (0..qa.weights.len())
            .flat_map(|l| (0..qa.weights[l].len()).map(move |n| vec![(l, n)]))
            .collect(),
        TuneScope::Global => vec![(0..qa.weights.len())
            .flat_map(|l| (0..qa.weights[l].len()).map(move |n| (l, n)))
            .collect()],
    };
    loop {
        passes += 1;
        let mut any_improved = false;
        for group in &groups {
            let before = group_sls(qa, group);
            let Some(sls) = before else { continue };
            for &(l, n) in group {
                for i in 0..qa.weights[l][n].len() {
                    let w = qa.weights[l][n][i];
                    if w == 0 || largest_left_shift(w) != sls {
                        continue;
                    }
                    // Never widen the group's multiplier.
                    let max_bits = group
                        .iter()
                        .flat_map(|&(gl, gn)| qa.weights[gl][gn].iter())
                        .map(|&gw| magnitude_bits(gw))
                        .max()
                        .unwrap();
                    let (pw1, pw2) = smac_candidates(w, sls);
                    let fitting: Vec<i64> = [pw1, pw2]
                        .into_iter()
                        .filter(|&pw| magnitude_bits(pw) <= max_bits)
                        .collect();
                    // First try the plain weight edits; ties keep the lower
                    // magnitude.
                    let mut best: Option<(i64, f64)> = None;
                    for &pw in &fitting {
                        qa.weights[l][n][i] = pw;
                        let ha = accuracy_on_encoded(qa, data);
                        qa.weights[l][n][i] = w;
                        if best.is_none_or(|(_, b)| ha > b) {
                            best = Some((pw, ha));
                        }
                    }
                    if let Some((pw, ha)) = best {
                        if ha >= bha {
                            qa.weights[l][n][i] = pw;
                            bha = ha;
                            commits += 1;
                            continue;
                        }
                    }
                    // Then try to rescue an edit with a small bias offset.
                    let bias = qa.biases[l][n];
                    let mut best: Option<(i64, i64, f64)> = None;
                    for &pw in &fitting {
                        for delta in [0, 1, -1, 2, -2, 3, -3, 4, -4] {
                            qa.weights[l][n][i] = pw;
                            qa.biases[l][n] = bias + delta;
                            let ha = accuracy_on_encoded(qa, data);
                            qa.weights[l][n][i] = w;
                            qa.biases[l][n] = bias;
                            if best.is_none_or(|(_, _, b)| ha > b) {
                                best = Some((pw, delta, ha));
                            }
                        }
                    }
                    if let Some((pw, delta, ha)) = best {
                        if ha >= bha {
                            qa.weights[l][n][i] = pw;
                            qa.biases[l][n] = bias + delta;
                            bha = ha;
                            commits += 1;
                        }
                    }
                }
            }
            if sls_rank(group_sls(qa, group)) > sls_rank(before) {
                any_improved = true;
            }
        }
        if !any_improved || passes >= 64 {
            break;
        }
    }
    TuneResult { initial_ha, final_ha: bha, passes, commits }
}

fn group_sls(qa: &QuantizedAnn, group: &[(usize, usize)]) -> Option<u32> {
    let weights: Vec<i64> = group
        .iter()
        .flat_map(|&(l, n)| qa.weights[l][n].iter().copied())
        .collect();
    smallest_left_shift(&weights)
}

/// Orders trailing-zero floors with "unbounded" (all weights zero) on top.
fn sls_rank(sls: Option<u32>) -> u64 {
    sls.map_or(u64::MAX, u64::from)
}
