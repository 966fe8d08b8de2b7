//! Shift-add networks for constant multiplication.
//!
//! A constant-multiplication block multiplies one or more input variables by
//! integer constants: a single constant by one variable, multiple constants
//! by one variable (the time-multiplexed case), a constant row vector by an
//! input vector (one neuron), or a full constant matrix by a vector (one
//! layer). [`dbr::synth_dbr`] lowers such a block to adders, subtractors and
//! wires by recoding each constant in canonical signed digits, one operation
//! per extra digit. [`cse::optimize_greedy`] (via [`optimize_cse`]) shares
//! subexpressions across digits, rows, and outputs; [`exact::optimize_exact`]
//! proves minimal operation counts on small instances by branch and bound.
//!
//! The intermediate representation is deliberately tiny: a list of add/sub
//! nodes whose operands are left-shifted, optionally negated references to
//! inputs or earlier nodes, plus one such reference per block output.
//! [`verify_dag`] checks a network against its constant matrix both
//! symbolically and on random vectors; every synthesizer's result is
//! verifiable in isolation.

pub mod cse;
pub mod dbr;
pub mod exact;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixedpoint::{largest_left_shift, nonzero_digits, to_csd, QuantizedAnn};
use crate::inference::Architecture;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Errors raised by block extraction and synthesis.
#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{arch} with {style} multipliers is not a synthesizable combination{hint}")]
    IllegalCombination {
        arch: Architecture,
        style: MultStyle,
        hint: &'static str,
    },
    #[error(
        "exhaustive synthesis is limited to at most 4 distinct odd coefficients of at most \
         8 bits, or 2x2 blocks; this block has {distinct} distinct odd coefficients of up \
         to {bits} bits in a {rows}x{cols} matrix"
    )]
    EffortBoundExceeded {
        distinct: usize,
        bits: u32,
        rows: usize,
        cols: usize,
    },
    #[error("block kind {kind:?} does not fit a {rows}x{cols} coefficient matrix")]
    KindShapeMismatch { kind: CmKind, rows: usize, cols: usize },
    #[error("constant matrix must have at least one row and one column")]
    EmptyMatrix,
}

/// How multiplications are realized in the emitted hardware.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultStyle {
    /// `*` operators, left to logic synthesis.
    Behavioral,
    /// One shift-add network per neuron (constant row times input vector).
    Cavm,
    /// One shift-add network per layer (constant matrix times input vector).
    Cmvm,
    /// One shift-add network per layer computing every distinct odd weight
    /// times the currently selected input of a time-multiplexed design.
    Mcm,
}

impl std::fmt::Display for MultStyle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            MultStyle::Behavioral => "behavioral",
            MultStyle::Cavm => "cavm",
            MultStyle::Cmvm => "cmvm",
            MultStyle::Mcm => "mcm",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for MultStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "behavioral" => Ok(MultStyle::Behavioral),
            "cavm" => Ok(MultStyle::Cavm),
            "cmvm" => Ok(MultStyle::Cmvm),
            "mcm" => Ok(MultStyle::Mcm),
            other => Err(format!(
                "unknown multiplier style {other:?}; expected behavioral, cavm, cmvm, or mcm"
            )),
        }
    }
}

/// Shape class of a constant multiplication block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmKind {
    /// Single constant, single variable (1x1).
    Scm,
    /// Constant column, single variable (m x 1).
    Mcm,
    /// Constant row, variable vector (1 x n).
    Cavm,
    /// Constant matrix, variable vector (m x n).
    Cmvm,
}

/// A constant multiplication problem: compute `rows * x` for an input
/// vector `x`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CmBlockSpec {
    pub kind: CmKind,
    /// `rows[output][input]`, integer constants.
    pub rows: Vec<Vec<i64>>,
}

impl CmBlockSpec {
    /// Builds a spec, inferring the narrowest kind that fits the shape.
    pub fn new(rows: Vec<Vec<i64>>) -> Result<CmBlockSpec, SynthError> {
        let (m, n) = matrix_shape(&rows)?;
        let kind = match (m, n) {
            (1, 1) => CmKind::Scm,
            (_, 1) => CmKind::Mcm,
            (1, _) => CmKind::Cavm,
            _ => CmKind::Cmvm,
        };
        Ok(CmBlockSpec { kind, rows })
    }

    /// Builds a spec with an explicit kind, rejecting shape mismatches.
    pub fn with_kind(kind: CmKind, rows: Vec<Vec<i64>>) -> Result<CmBlockSpec, SynthError> {
        let (m, n) = matrix_shape(&rows)?;
        let fits = match kind {
            CmKind::Scm => m == 1 && n == 1,
            CmKind::Mcm => n == 1,
            CmKind::Cavm => m == 1,
            CmKind::Cmvm => true,
        };
        if !fits {
            return Err(SynthError::KindShapeMismatch { kind, rows: m, cols: n });
        }
        Ok(CmBlockSpec { kind, rows })
    }

    pub fn num_outputs(&self) -> usize {
        self.rows.len()
    }

    pub fn num_inputs(&self) -> usize {
        self.rows[0].len()
    }
}

fn matrix_shape(rows: &[Vec<i64>]) -> Result<(usize, usize), SynthError> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(SynthError::EmptyMatrix);
    }
    let n = rows[0].len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(SynthError::EmptyMatrix);
    }
    Ok((rows.len(), n))
}

/// What a [`Term`] points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TermSource {
    /// The constant zero; only meaningful for output bindings.
    Zero,
    /// Block input `x{i+1}`.
    Input(usize),
    /// An earlier add/sub node.
    Node(usize),
}

/// A shifted, optionally negated reference: `±(source << shift)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub source: TermSource,
    pub shift: u32,
    pub negate: bool,
}

impl Term {
    pub fn input(index: usize) -> Term {
        Term { source: TermSource::Input(index), shift: 0, negate: false }
    }

    pub fn node(index: usize) -> Term {
        Term { source: TermSource::Node(index), shift: 0, negate: false }
    }

    pub fn zero() -> Term {
        Term { source: TermSource::Zero, shift: 0, negate: false }
    }

    /// The same reference shifted further left and/or negated.
    pub fn compose(self, shift: u32, negate: bool) -> Term {
        Term {
            source: self.source,
            shift: self.shift + shift,
            negate: self.negate ^ negate,
        }
    }
}

/// Operation of one DAG node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DagOp {
    Add,
    Sub,
}

/// One adder or subtractor: `lhs op rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagNode {
    pub op: DagOp,
    pub lhs: Term,
    pub rhs: Term,
}

/// A shift-add network: nodes in topological order plus one output binding
/// per row of the block it implements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftAddDag {
    pub num_inputs: usize,
    pub nodes: Vec<DagNode>,
    pub outputs: Vec<Term>,
}

impl ShiftAddDag {
    /// Number of add/sub operations.
    pub fn opcount(&self) -> u64 {
        self.nodes.len() as u64
    }

    /// Renders the stable textual listing: inputs, one node per line, then
    /// output bindings.
    pub fn listing(&self) -> String {
        let mut out = String::new();
        for i in 0..self.num_inputs {
            out.push_str(&format!("input x{}\n", i + 1));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let op = match node.op {
                DagOp::Add => '+',
                DagOp::Sub => '-',
            };
            out.push_str(&format!(
                "t{} = {} {} {}\n",
                i + 1,
                render_term(&node.lhs),
                op,
                render_term(&node.rhs)
            ));
        }
        for (i, term) in self.outputs.iter().enumerate() {
            out.push_str(&format!("y{} = {}\n", i + 1, render_term(term)));
        }
        out
    }
}

fn render_term(term: &Term) -> String {
    if matches!(term.source, TermSource::Zero) {
        return "0".to_string();
    }
    let base = match term.source {
        TermSource::Input(i) => format!("x{}", i + 1),
        TermSource::Node(i) => format!("t{}", i + 1),
        TermSource::Zero => unreachable!(),
    };
    let shifted = if term.shift > 0 {
        format!("({} << {})", base, term.shift)
    } else {
        base
    };
    if term.negate {
        format!("-{shifted}")
    } else {
        shifted
    }
}

/// Longest input-to-output path, counted in add/sub nodes.
pub fn adder_depth(dag: &ShiftAddDag) -> u32 {
    let mut depth = vec![0u32; dag.nodes.len()];
    let term_depth = |term: &Term, depth: &[u32]| -> u32 {
        match term.source {
            TermSource::Node(i) => depth[i],
            _ => 0,
        }
    };
    for (i, node) in dag.nodes.iter().enumerate() {
        depth[i] = 1 + term_depth(&node.lhs, &depth).max(term_depth(&node.rhs, &depth));
    }
    dag.outputs
        .iter()
        .map(|t| term_depth(t, &depth))
        .max()
        .unwrap_or(0)
}

/// Symbolic value of every node and output as coefficient vectors over the
/// block inputs. Returns `(node_coeffs, output_coeffs)`.
fn propagate_coefficients(dag: &ShiftAddDag) -> (Vec<Vec<i128>>, Vec<Vec<i128>>) {
    let n = dag.num_inputs;
    let term_coeffs = |term: &Term, nodes: &[Vec<i128>]| -> Vec<i128> {
        let base = match term.source {
            TermSource::Zero => vec![0; n],
            TermSource::Input(i) => {
                let mut v = vec![0; n];
                v[i] = 1;
                v
            }
            TermSource::Node(i) => nodes[i].clone(),
        };
        let sign = if term.negate { -1 } else { 1 };
        base.iter().map(|&c| sign * (c << term.shift)).collect()
    };
    let mut node_coeffs: Vec<Vec<i128>> = Vec::with_capacity(dag.nodes.len());
    for node in &dag.nodes {
        let lhs = term_coeffs(&node.lhs, &node_coeffs);
        let rhs = term_coeffs(&node.rhs, &node_coeffs);
        let combined = lhs
            .iter()
            .zip(&rhs)
            .map(|(&a, &b)| match node.op {
                DagOp::Add => a + b,
                DagOp::Sub => a - b,
            })
            .collect();
        node_coeffs.push(combined);
    }
    let outputs = dag
        .outputs
        .iter()
        .map(|t| term_coeffs(t, &node_coeffs))
        .collect();
    (node_coeffs, outputs)
}

/// Checks a network against its spec: symbolic coefficient propagation must
/// reproduce the constant matrix exactly, and evaluation on `trials` random
/// input vectors must match direct multiplication.
pub fn verify_dag(dag: &ShiftAddDag, spec: &CmBlockSpec, trials: u32) -> bool {
    if dag.num_inputs != spec.num_inputs() || dag.outputs.len() != spec.num_outputs() {
        return false;
    }
    let (_, output_coeffs) = propagate_coefficients(dag);
    for (coeffs, row) in output_coeffs.iter().zip(&spec.rows) {
        if coeffs.len() != row.len() || coeffs.iter().zip(row).any(|(&c, &r)| c != i128::from(r)) {
            return false;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xDA6);
    for _ in 0..trials {
        let x: Vec<i128> = (0..dag.num_inputs).map(|_| rng.gen_range(-1000..=1000)).collect();
        let evaluated = evaluate_dag(dag, &x);
        for (got, row) in evaluated.iter().zip(&spec.rows) {
            let expected: i128 = row.iter().zip(&x).map(|(&c, &xi)| i128::from(c) * xi).sum();
            if *got != expected {
                return false;
            }
        }
    }
    true
}

/// Evaluates the network on one concrete input vector.
pub fn evaluate_dag(dag: &ShiftAddDag, x: &[i128]) -> Vec<i128> {
    let term_value = |term: &Term, nodes: &[i128]| -> i128 {
        let base = match term.source {
            TermSource::Zero => 0,
            TermSource::Input(i) => x[i],
            TermSource::Node(i) => nodes[i],
        };
        let shifted = base << term.shift;
        if term.negate {
            -shifted
        } else {
            shifted
        }
    };
    let mut values: Vec<i128> = Vec::with_capacity(dag.nodes.len());
    for node in &dag.nodes {
        let lhs = term_value(&node.lhs, &values);
        let rhs = term_value(&node.rhs, &values);
        values.push(match node.op {
            DagOp::Add => lhs + rhs,
            DagOp::Sub => lhs - rhs,
        });
    }
    dag.outputs.iter().map(|t| term_value(t, &values)).collect()
}

/// Splits a nonzero weight into `sign * odd << shift`.
///
/// Returns `(odd_magnitude, shift, negative)`, or `None` for zero.
pub fn odd_decompose(w: i64) -> Option<(i64, u32, bool)> {
    if w == 0 {
        return None;
    }
    let shift = largest_left_shift(w);
    Some((w.abs() >> shift, shift, w < 0))
}

/// Extracts the constant-multiplication blocks a layer needs under the given
/// architecture and multiplier style.
///
/// * parallel + cavm: one row spec per neuron.
/// * parallel + cmvm: one matrix spec for the whole layer.
/// * smac_neuron + mcm: one column spec of the distinct odd weight
///   magnitudes; shifts and signs are reapplied at the multiplexer terms.
/// * behavioral: no blocks.
///
/// The single shared-block architecture is never synthesized multiplierless:
/// its one multiplier faces every weight of the network, so a shift-add
/// replacement would degenerate to one adder tree per weight.
pub fn layer_block(
    arch: Architecture,
    style: MultStyle,
    qa: &QuantizedAnn,
    layer: usize,
) -> Result<Vec<CmBlockSpec>, SynthError> {
    match (arch, style) {
        (_, MultStyle::Behavioral) => Ok(Vec::new()),
        (Architecture::Parallel, MultStyle::Cavm) => qa.weights[layer]
            .iter()
            .map(|row| CmBlockSpec::new(vec![row.clone()]))
            .collect(),
        (Architecture::Parallel, MultStyle::Cmvm) => {
            Ok(vec![CmBlockSpec::new(qa.weights[layer].clone())?])
        }
        (Architecture::SmacNeuron, MultStyle::Mcm) => {
            let constants = mcm_constants(&qa.weights[layer]);
            if constants.is_empty() {
                // Every weight is zero; there is nothing to multiply.
                return Ok(Vec::new());
            }
            Ok(vec![CmBlockSpec::new(constants.into_iter().map(|c| vec![c]).collect())?])
        }
        (Architecture::SmacAnn, _) => Err(SynthError::IllegalCombination {
            arch,
            style,
            hint: "; the shared block computes every product through one multiplier, use behavioral",
        }),
        (arch, style) => Err(SynthError::IllegalCombination { arch, style, hint: "" }),
    }
}

/// Distinct odd magnitudes of a layer's weights, ascending.
pub fn mcm_constants(weights: &[Vec<i64>]) -> Vec<i64> {
    let mut constants: Vec<i64> = weights
        .iter()
        .flatten()
        .filter_map(|&w| odd_decompose(w).map(|(odd, _, _)| odd))
        .collect();
    constants.sort_unstable();
    constants.dedup();
    constants
}

/// Synthesis effort for [`optimize_cse`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effort {
    /// Deterministic polynomial-time sharing heuristic.
    Greedy,
    /// Branch-and-bound proof of minimality; small instances only.
    Exhaustive,
}

/// Synthesizes a block with subexpression sharing.
///
/// The greedy effort never uses more operations than [`dbr::synth_dbr`]; the
/// exhaustive effort never uses more than the greedy one and is minimal
/// (within the bounded search space) on the instances it accepts.
pub fn optimize_cse(spec: &CmBlockSpec, effort: Effort) -> Result<ShiftAddDag, SynthError> {
    match effort {
        Effort::Greedy => Ok(cse::optimize_greedy(spec)),
        Effort::Exhaustive => exact::optimize_exact(spec),
    }
}

// ---------------------------------------------------------------------------
// Shared construction helpers for the synthesizers.
// ---------------------------------------------------------------------------

/// Signed-digit expansion of `coefficient * x{input}` as terms.
pub(crate) fn csd_terms(coefficient: i64, input: usize) -> Vec<Term> {
    to_csd(coefficient)
        .digits
        .iter()
        .enumerate()
        .filter(|(_, &d)| d != 0)
        .map(|(position, &d)| Term {
            source: TermSource::Input(input),
            shift: position as u32,
            negate: d < 0,
        })
        .collect()
}

/// Combines two signed terms into one node, folding the signs into the
/// operation. The result carries `negate` only when both operands were
/// negative, in which case the node computes the magnitude of the sum.
pub(crate) fn combine(a: Term, b: Term, nodes: &mut Vec<DagNode>) -> Term {
    let plain = |t: Term| Term { negate: false, ..t };
    let (op, lhs, rhs, negate) = match (a.negate, b.negate) {
        (false, false) => (DagOp::Add, a, b, false),
        (false, true) => (DagOp::Sub, a, plain(b), false),
        (true, false) => (DagOp::Sub, b, plain(a), false),
        (true, true) => (DagOp::Add, plain(a), plain(b), true),
    };
    nodes.push(DagNode { op, lhs, rhs });
    Term {
        source: TermSource::Node(nodes.len() - 1),
        shift: 0,
        negate,
    }
}

/// Sums a term list with a balanced tree of `len - 1` nodes, keeping the
/// adder depth at `ceil(log2(len))`.
pub(crate) fn build_tree(terms: &[Term], nodes: &mut Vec<DagNode>) -> Term {
    assert!(!terms.is_empty(), "cannot sum zero terms");
    if terms.len() == 1 {
        return terms[0];
    }
    let mid = terms.len().div_ceil(2);
    let left = build_tree(&terms[..mid], nodes);
    let right = build_tree(&terms[mid..], nodes);
    combine(left, right, nodes)
}

/// Odd, sign-normalized form of a coefficient vector.
///
/// Returns `None` for the zero vector, otherwise `(canon, shift, negated)`
/// such that `v = ±(canon << shift)`, the components of `canon` share no
/// factor of two, and the first nonzero component of `canon` is positive.
pub(crate) fn canon_vector(v: &[i64]) -> Option<(Vec<i64>, u32, bool)> {
    let shift = v.iter().filter(|&&c| c != 0).map(|&c| largest_left_shift(c)).min()?;
    let mut canon: Vec<i64> = v.iter().map(|&c| c >> shift).collect();
    let negated = canon.iter().find(|&&c| c != 0).is_some_and(|&c| c < 0);
    if negated {
        for c in &mut canon {
            *c = -*c;
        }
    }
    Some((canon, shift, negated))
}

/// Flips a vector's sign so its first nonzero component is positive.
pub(crate) fn sign_normalize(v: &[i64]) -> (Vec<i64>, bool) {
    let flip = v.iter().find(|&&c| c != 0).is_some_and(|&c| c < 0);
    if flip {
        (v.iter().map(|&c| -c).collect(), true)
    } else {
        (v.to_vec(), false)
    }
}

/// Total signed digits of a coefficient vector.
pub(crate) fn vector_digits(v: &[i64]) -> u64 {
    v.iter().map(|&c| u64::from(nonzero_digits(c))).sum()
}

/// True when `v` selects a single input unshifted: exactly one component,
/// equal to one.
pub(crate) fn unit_index(v: &[i64]) -> Option<usize> {
    let mut unit = None;
    for (i, &c) in v.iter().enumerate() {
        match c {
            0 => {}
            1 if unit.is_none() => unit = Some(i),
            _ => return None,
        }
    }
    unit
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The worked two-output example used throughout: y1 = 11*x1 + 3*x2,
    /// y2 = 5*x1 + 13*x2.
    pub(crate) fn worked_spec() -> CmBlockSpec {
        CmBlockSpec::new(vec![vec![11, 3], vec![5, 13]]).unwrap()
    }

    /// Hand-built published four-operation structure for [`worked_spec`]:
    /// s = x1 + x2; t = s + (s << 1); y1 = t + (x1 << 3); y2 = (s << 4) - y1.
    fn published_four_op_dag() -> ShiftAddDag {
        ShiftAddDag {
            num_inputs: 2,
            nodes: vec![
                DagNode { op: DagOp::Add, lhs: Term::input(0), rhs: Term::input(1) },
                DagNode { op: DagOp::Add, lhs: Term::node(0), rhs: Term::node(0).compose(1, false) },
                DagNode { op: DagOp::Add, lhs: Term::node(1), rhs: Term::input(0).compose(3, false) },
                DagNode { op: DagOp::Sub, lhs: Term::node(0).compose(4, false), rhs: Term::node(2) },
            ],
            outputs: vec![Term::node(2), Term::node(3)],
        }
    }

    #[test]
    fn kind_inference_follows_shape() {
        assert_eq!(CmBlockSpec::new(vec![vec![45]]).unwrap().kind, CmKind::Scm);
        assert_eq!(CmBlockSpec::new(vec![vec![3], vec![5]]).unwrap().kind, CmKind::Mcm);
        assert_eq!(CmBlockSpec::new(vec![vec![3, 5]]).unwrap().kind, CmKind::Cavm);
        assert_eq!(worked_spec().kind, CmKind::Cmvm);
        assert!(CmBlockSpec::with_kind(CmKind::Mcm, vec![vec![1, 2], vec![3, 4]]).is_err());
        assert!(CmBlockSpec::new(vec![]).is_err());
    }

    #[test]
    fn verification_accepts_the_published_structure() {
        let dag = published_four_op_dag();
        assert!(verify_dag(&dag, &worked_spec(), 100));
        assert_eq!(dag.opcount(), 4);
    }

    #[test]
    fn verification_rejects_a_flipped_sign() {
        let mut dag = published_four_op_dag();
        dag.nodes[3].op = DagOp::Add;
        assert!(!verify_dag(&dag, &worked_spec(), 10));
        let mut dag = published_four_op_dag();
        dag.nodes[0].rhs.negate = true;
        assert!(!verify_dag(&dag, &worked_spec(), 10));
        // Shape mismatches fail rather than panic.
        let spec = CmBlockSpec::new(vec![vec![11, 3]]).unwrap();
        assert!(!verify_dag(&published_four_op_dag(), &spec, 10));
    }

    #[test]
    fn depth_counts_operations_on_the_longest_path() {
        let empty = ShiftAddDag { num_inputs: 1, nodes: vec![], outputs: vec![Term::input(0)] };
        assert_eq!(adder_depth(&empty), 0);
        // The published structure chains s -> t -> y1 -> y2: four operations
        // deep on the x1 path.
        assert_eq!(adder_depth(&published_four_op_dag()), 4);
    }

    #[test]
    fn listing_is_stable_and_complete() {
        let dag = published_four_op_dag();
        let expected = "\
input x1
input x2
t1 = x1 + x2
t2 = t1 + (t1 << 1)
t3 = t2 + (x1 << 3)
t4 = (t1 << 4) - t3
y1 = t3
y2 = t4
";
        assert_eq!(dag.listing(), expected);
    }

    #[test]
    fn listing_renders_negated_and_zero_bindings() {
        let dag = ShiftAddDag {
            num_inputs: 1,
            nodes: vec![],
            outputs: vec![Term::zero(), Term::input(0).compose(3, true)],
        };
        assert_eq!(dag.listing(), "input x1\ny1 = 0\ny2 = -(x1 << 3)\n");
    }

    #[test]
    fn odd_decompose_splits_shift_and_sign() {
        assert_eq!(odd_decompose(20), Some((5, 2, false)));
        assert_eq!(odd_decompose(24), Some((3, 3, false)));
        assert_eq!(odd_decompose(-26), Some((13, 1, true)));
        assert_eq!(odd_decompose(0), None);
    }

    #[test]
    fn canon_vector_normalizes_shift_and_sign() {
        assert_eq!(canon_vector(&[16, 16]), Some((vec![1, 1], 4, false)));
        assert_eq!(canon_vector(&[-6, 10]), Some((vec![3, -5], 1, true)));
        assert_eq!(canon_vector(&[0, 0]), None);
        assert_eq!(unit_index(&[0, 1, 0]), Some(1));
        assert_eq!(unit_index(&[0, 2]), None);
    }

    fn tiny_qa(weights: Vec<Vec<Vec<i64>>>) -> QuantizedAnn {
        use crate::model::{Activation, AnnStructure, LayerSpec};
        let num_inputs = weights[0][0].len();
        let layers = weights
            .iter()
            .map(|layer| LayerSpec { neurons: layer.len(), activation: Activation::Relu })
            .collect();
        let biases = weights.iter().map(|layer| vec![0; layer.len()]).collect();
        QuantizedAnn {
            structure: AnnStructure { num_inputs, layers },
            format: crate::fixedpoint::FixedFormat::with_q(4),
            weights,
            biases,
        }
    }

    #[test]
    fn layer_blocks_follow_architecture_and_style() {
        let qa = tiny_qa(vec![vec![vec![20, 24], vec![26, 0]]]);
        let cavm = layer_block(Architecture::Parallel, MultStyle::Cavm, &qa, 0).unwrap();
        assert_eq!(cavm.len(), 2);
        assert_eq!(cavm[0].rows, vec![vec![20, 24]]);
        let cmvm = layer_block(Architecture::Parallel, MultStyle::Cmvm, &qa, 0).unwrap();
        assert_eq!(cmvm.len(), 1);
        assert_eq!(cmvm[0].kind, CmKind::Cmvm);
        // Distinct odd magnitudes {5, 3, 13} sorted ascending; shifts and
        // signs live at the multiplexer terms, not in the block.
        let mcm = layer_block(Architecture::SmacNeuron, MultStyle::Mcm, &qa, 0).unwrap();
        assert_eq!(mcm[0].rows, vec![vec![3], vec![5], vec![13]]);
        assert_eq!(mcm[0].kind, CmKind::Mcm);
        assert!(layer_block(Architecture::Parallel, MultStyle::Behavioral, &qa, 0)
            .unwrap()
            .is_empty());
        let err = layer_block(Architecture::SmacAnn, MultStyle::Mcm, &qa, 0).unwrap_err();
        assert!(err.to_string().contains("not a synthesizable combination"));
        assert!(layer_block(Architecture::SmacNeuron, MultStyle::Cavm, &qa, 0).is_err());
    }

    #[test]
    fn all_zero_layer_yields_no_mcm_block() {
        let qa = tiny_qa(vec![vec![vec![0, 0]]]);
        assert!(layer_block(Architecture::SmacNeuron, MultStyle::Mcm, &qa, 0)
            .unwrap()
            .is_empty());
    }
}
