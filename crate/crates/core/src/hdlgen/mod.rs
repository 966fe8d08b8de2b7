//! Verilog emission for the three architectures.
//!
//! Every emitter produces a [`FileSet`]: deterministic, self-contained
//! synthesizable RTL plus a golden-model testbench and a generic synthesis
//! script. The generated text is validated structurally by [`check`] (module
//! balance, declarations, instantiation ports); simulation and synthesis
//! themselves are left to external tools.
//!
//! Numeric conventions shared by all emitters:
//!
//! * layer input/output codes are `input_bits` wide; a layer's codes are
//!   signed exactly when its activation can go negative,
//! * every datapath wire is declared `signed` and sized from the worst-case
//!   magnitude of the value it carries, so no arithmetic ever wraps,
//! * activation blocks mirror the accuracy oracle bit for bit: clamp at
//!   accumulator scale, arithmetic right shift by `q`, saturate to the
//!   output width.

mod check;
mod parallel;
mod smac_ann;
mod smac_neuron;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::fixedpoint::{magnitude_bits, FixedFormat, QuantizedAnn};
use crate::inference::{cycle_count, forward_hw, Architecture};
use crate::model::Activation;
use crate::shiftadds::{ShiftAddDag, SynthError, Term, TermSource};

pub use check::{check_fileset, CheckError};

/// Relative path → file content, ordered so emission is reproducible.
pub type FileSet = BTreeMap<String, String>;

#[derive(Debug, Error)]
pub enum EmitError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("testbench needs at least one stimulus vector")]
    EmptyStimulus,
    #[error("stimulus vector {index} has {got} values; the network takes {expected}")]
    StimulusShape { index: usize, got: usize, expected: usize },
    #[error(
        "stimulus vector {index} holds code {value}, outside the {bits}-bit input range"
    )]
    StimulusRange { index: usize, value: i64, bits: u32 },
    #[error(
        "worst-case accumulator of layer {layer} neuron {neuron} exceeds 62 bits; \
         weights are too wide to emit"
    )]
    AccumulatorOverflow { layer: usize, neuron: usize },
}

/// How multiplications are realized; re-exported so callers need one import.
pub use crate::shiftadds::MultStyle;

/// Emits the synthesizable RTL for a network: a top module plus its
/// architecture's submodules, one file per module group.
///
/// The `(arch, style)` combination must be legal (the same rule as
/// [`crate::shiftadds::layer_block`]); `top` is sanitized into a Verilog
/// identifier and prefixes every module name.
pub fn emit_design(
    qa: &QuantizedAnn,
    arch: Architecture,
    style: MultStyle,
    top: &str,
) -> Result<FileSet, EmitError> {
    // Surface an illegal pairing before any text is generated.
    for layer in 0..qa.structure.layers.len() {
        crate::shiftadds::layer_block(arch, style, qa, layer)?;
    }
    guard_accumulators(qa)?;
    let top = sanitize_name(top);
    match arch {
        Architecture::Parallel => parallel::emit(qa, style, &top),
        Architecture::SmacNeuron => smac_neuron::emit(qa, style, &top),
        Architecture::SmacAnn => smac_ann::emit(qa, &top),
    }
}

/// Emits the self-checking testbench: drives each stimulus vector, waits the
/// architecture's cycle count, and compares every output against the exact
/// integer model, printing one failing line per mismatch and a final verdict.
pub fn emit_testbench(
    qa: &QuantizedAnn,
    arch: Architecture,
    vectors: &[Vec<i64>],
    top: &str,
) -> Result<FileSet, EmitError> {
    if vectors.is_empty() {
        return Err(EmitError::EmptyStimulus);
    }
    let num_inputs = qa.structure.num_inputs;
    let input_hi = (1i64 << qa.format.input_bits) - 1;
    for (index, v) in vectors.iter().enumerate() {
        if v.len() != num_inputs {
            return Err(EmitError::StimulusShape {
                index,
                got: v.len(),
                expected: num_inputs,
            });
        }
        if let Some(&value) = v.iter().find(|&&c| c < 0 || c > input_hi) {
            return Err(EmitError::StimulusRange {
                index,
                value,
                bits: qa.format.input_bits,
            });
        }
    }
    guard_accumulators(qa)?;
    let top = sanitize_name(top);
    let text = render_testbench(qa, arch, vectors, &top);
    let mut files = FileSet::new();
    files.insert(format!("tb/{top}_tb.v"), text);
    Ok(files)
}

/// Renders the generic synthesis script template: reads the RTL, elaborates
/// `top`, constrains the clock to `clock_period` time units (1.0 by
/// default), and writes area/timing reports. The command names are the
/// common TCL vocabulary; vendor flows rename a handful of them.
pub fn emit_synth_script(top: &str, clock_period: f64) -> String {
    let top = sanitize_name(top);
    let mut s = String::new();
    s.push_str("# Generic synthesis script template.\n");
    s.push_str("# Adapt command names to the synthesis tool in use.\n");
    s.push_str(&format!("set top_module {top}\n"));
    s.push_str("set rtl_dir ../rtl\n");
    s.push_str("read_verilog [glob $rtl_dir/*.v]\n");
    s.push_str("elaborate $top_module\n");
    s.push_str(&format!(
        "create_clock -name clk -period {clock_period:.3} [get_ports clk]\n"
    ));
    s.push_str("set_input_delay 0.0 -clock clk [all_inputs]\n");
    s.push_str("set_output_delay 0.0 -clock clk [all_outputs]\n");
    s.push_str("compile\n");
    s.push_str("report_area > area.rpt\n");
    s.push_str("report_timing > timing.rpt\n");
    s.push_str("write_verilog ${top_module}_netlist.v\n");
    s
}

/// Lowercases and strips a design name into a safe Verilog identifier.
pub fn sanitize_name(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        let c = c.to_ascii_lowercase();
        if c.is_ascii_alphanumeric() || c == '_' {
            out.push(c);
        } else {
            out.push('_');
        }
    }
    if out.is_empty() || out.starts_with(|c: char| c.is_ascii_digit()) {
        out.insert(0, 'd');
    }
    out
}

// ---------------------------------------------------------------------------
// Width bookkeeping shared by the emitters.
// ---------------------------------------------------------------------------

/// Largest magnitude a code entering `layer` can carry.
pub(crate) fn input_bound(qa: &QuantizedAnn, layer: usize) -> i64 {
    let bits = qa.format.input_bits;
    if layer_inputs_signed(qa, layer) {
        1i64 << (bits - 1)
    } else {
        (1i64 << bits) - 1
    }
}

/// True when the codes entering `layer` are signed (produced by a signed
/// activation); primary inputs are always unsigned.
pub(crate) fn layer_inputs_signed(qa: &QuantizedAnn, layer: usize) -> bool {
    layer > 0 && qa.structure.layers[layer - 1].activation.signed_output()
}

/// Worst-case accumulator width of one neuron, checked against overflow.
pub(crate) fn acc_bits(qa: &QuantizedAnn, layer: usize, neuron: usize) -> u32 {
    crate::inference::neuron_acc_bits(qa, layer, neuron)
}

/// Rejects networks whose worst-case inner product cannot be tracked in the
/// 64-bit arithmetic this generator (and the accuracy oracle) relies on.
fn guard_accumulators(qa: &QuantizedAnn) -> Result<(), EmitError> {
    for (layer, specs) in qa.structure.layers.iter().enumerate() {
        let x_max = input_bound(qa, layer);
        for neuron in 0..specs.neurons {
            let sum = qa.weights[layer][neuron]
                .iter()
                .try_fold(0i64, |acc, &w| {
                    acc.checked_add(w.checked_abs()?.checked_mul(x_max)?)
                })
                .and_then(|s| s.checked_add(qa.biases[layer][neuron].checked_abs()?));
            match sum {
                Some(bound) if magnitude_bits(bound) + 1 <= 62 => {}
                _ => return Err(EmitError::AccumulatorOverflow { layer, neuron }),
            }
        }
    }
    Ok(())
}

/// Bits needed by a register counting `0..=max_value`.
pub(crate) fn counter_bits(max_value: u64) -> u32 {
    (64 - max_value.leading_zeros()).max(1)
}

/// A sized signed decimal literal, `-14'sd37` style.
pub(crate) fn slit(width: u32, value: i64) -> String {
    if value < 0 {
        format!("-{width}'sd{}", value.unsigned_abs())
    } else {
        format!("{width}'sd{value}")
    }
}

/// Zero- or sign-extends an `input_bits` code expression by one bit so it
/// can enter signed arithmetic.
pub(crate) fn extend_code(name: &str, bits: u32, signed: bool) -> String {
    if signed {
        format!("{{{name}[{}], {name}}}", bits - 1)
    } else {
        format!("{{1'b0, {name}}}")
    }
}

// ---------------------------------------------------------------------------
// Shift-add DAG rendering.
// ---------------------------------------------------------------------------

/// Textual form of one synthesized DAG: wire declarations, one adder or
/// subtractor assign per node, and one expression (or `None` for constant
/// zero) per output binding.
pub(crate) struct DagText {
    pub lines: Vec<String>,
    pub outputs: Vec<Option<String>>,
    /// Worst-case magnitude of each output binding's value.
    pub output_bounds: Vec<i64>,
}

/// Renders `dag` with node wires named `{prefix}sa1..`, fed by
/// `input_exprs` whose worst-case magnitudes are `input_bounds`.
pub(crate) fn render_dag(
    dag: &ShiftAddDag,
    prefix: &str,
    input_exprs: &[String],
    input_bounds: &[i64],
) -> DagText {
    assert_eq!(dag.num_inputs, input_exprs.len());
    let bounds = node_bounds(dag, input_bounds);
    let widths: Vec<u32> = bounds.iter().map(|&b| magnitude_bits(b) + 1).collect();
    let names: Vec<String> =
        (0..dag.nodes.len()).map(|i| format!("{prefix}sa{}", i + 1)).collect();
    let term = |t: &Term| -> String {
        let base = match t.source {
            TermSource::Zero => unreachable!("zero only binds outputs"),
            TermSource::Input(i) => input_exprs[i].clone(),
            TermSource::Node(i) => names[i].clone(),
        };
        let shifted = if t.shift > 0 {
            format!("({base} <<< {})", t.shift)
        } else {
            base
        };
        if t.negate {
            format!("-({shifted})")
        } else {
            shifted
        }
    };
    let mut lines = Vec::new();
    for (i, node) in dag.nodes.iter().enumerate() {
        let op = match node.op {
            crate::shiftadds::DagOp::Add => '+',
            crate::shiftadds::DagOp::Sub => '-',
        };
        lines.push(format!("  wire signed [{}:0] {};", widths[i] - 1, names[i]));
        lines.push(format!(
            "  assign {} = {} {} {};",
            names[i],
            term(&node.lhs),
            op,
            term(&node.rhs)
        ));
    }
    let mut outputs = Vec::new();
    let mut output_bounds = Vec::new();
    for out in &dag.outputs {
        match out.source {
            TermSource::Zero => {
                outputs.push(None);
                output_bounds.push(0);
            }
            TermSource::Input(i) => {
                outputs.push(Some(term(out)));
                output_bounds.push(input_bounds[i] << out.shift);
            }
            TermSource::Node(i) => {
                outputs.push(Some(term(out)));
                output_bounds.push(bounds[i] << out.shift);
            }
        }
    }
    DagText { lines, outputs, output_bounds }
}

/// Worst-case magnitude of every node value, from per-node coefficients.
fn node_bounds(dag: &ShiftAddDag, input_bounds: &[i64]) -> Vec<i64> {
    let n = dag.num_inputs;
    let mut coefs: Vec<Vec<i128>> = Vec::with_capacity(dag.nodes.len());
    let term_coefs = |t: &Term, coefs: &[Vec<i128>]| -> Vec<i128> {
        let mut v = match t.source {
            TermSource::Zero => vec![0; n],
            TermSource::Input(i) => {
                let mut unit = vec![0i128; n];
                unit[i] = 1;
                unit
            }
            TermSource::Node(i) => coefs[i].clone(),
        };
        for c in &mut v {
            *c <<= t.shift;
            if t.negate {
                *c = -*c;
            }
        }
        v
    };
    for node in &dag.nodes {
        let lhs = term_coefs(&node.lhs, &coefs);
        let rhs = term_coefs(&node.rhs, &coefs);
        let combined: Vec<i128> = lhs
            .iter()
            .zip(&rhs)
            .map(|(a, b)| match node.op {
                crate::shiftadds::DagOp::Add => a + b,
                crate::shiftadds::DagOp::Sub => a - b,
            })
            .collect();
        coefs.push(combined);
    }
    coefs
        .iter()
        .map(|c| {
            let bound: i128 = c
                .iter()
                .zip(input_bounds)
                .map(|(&coef, &b)| coef.unsigned_abs() as i128 * i128::from(b))
                .sum();
            i64::try_from(bound).expect("node bound fits 64 bits")
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Activation datapath.
// ---------------------------------------------------------------------------

/// Emits the clamping/requantizing activation chain from the signed
/// accumulator expression `acc` (`acc_width` bits) into an `input_bits`-wide
/// output wire `{prefix}z`. Returns the generated lines.
pub(crate) fn render_activation(
    prefix: &str,
    act: Activation,
    fmt: &FixedFormat,
    acc: &str,
    acc_width: u32,
) -> Vec<String> {
    let w = acc_width.max(fmt.acc_frac_bits + 2) + 1;
    let ib = fmt.input_bits;
    let one = slit(w, 1i64 << fmt.acc_frac_bits);
    let zero = slit(w, 0);
    let y = format!("{prefix}y");
    let c = format!("{prefix}c");
    let r = format!("{prefix}r");
    let z = format!("{prefix}z");
    let mut lines = Vec::new();
    lines.push(format!("  wire signed [{}:0] {y};", w - 1));
    lines.push(format!("  assign {y} = {acc};"));
    match act {
        Activation::Relu => {
            lines.push(format!("  wire signed [{}:0] {c};", w - 1));
            lines.push(format!("  assign {c} = {y} < {zero} ? {zero} : {y};"));
        }
        Activation::Lin => {
            lines.push(format!("  wire signed [{}:0] {c};", w - 1));
            lines.push(format!("  assign {c} = {y};"));
        }
        Activation::Satlin => {
            lines.push(format!("  wire signed [{}:0] {c};", w - 1));
            lines.push(format!(
                "  assign {c} = {y} < {zero} ? {zero} : ({y} > {one} ? {one} : {y});"
            ));
        }
        Activation::Htanh => {
            lines.push(format!("  wire signed [{}:0] {c};", w - 1));
            lines.push(format!(
                "  assign {c} = {y} < -{one} ? -{one} : ({y} > {one} ? {one} : {y});"
            ));
        }
        Activation::Hsig => {
            let h = format!("{prefix}h");
            lines.push(format!("  wire signed [{}:0] {h};", w - 1));
            lines.push(format!("  assign {h} = ({y} + {one}) >>> 1;"));
            lines.push(format!("  wire signed [{}:0] {c};", w - 1));
            lines.push(format!(
                "  assign {c} = {h} < {zero} ? {zero} : ({h} > {one} ? {one} : {h});"
            ));
        }
    }
    lines.push(format!("  wire signed [{}:0] {r};", w - 1));
    lines.push(format!("  assign {r} = {c} >>> {};", fmt.q));
    if act.signed_output() {
        let lo = slit(w, -(1i64 << (ib - 1)));
        let hi = slit(w, (1i64 << (ib - 1)) - 1);
        let lo_bits = format!("{{1'b1, {{{}{{1'b0}}}}}}", ib - 1);
        let hi_bits = format!("{{1'b0, {{{}{{1'b1}}}}}}", ib - 1);
        lines.push(format!("  wire signed [{}:0] {z};", ib - 1));
        lines.push(format!(
            "  assign {z} = {r} < {lo} ? {lo_bits} : ({r} > {hi} ? {hi_bits} : {r}[{}:0]);",
            ib - 1
        ));
    } else {
        let hi = slit(w, (1i64 << ib) - 1);
        let hi_bits = format!("{{{ib}{{1'b1}}}}");
        lines.push(format!("  wire [{}:0] {z};", ib - 1));
        lines.push(format!(
            "  assign {z} = {r} < {zero} ? {{{ib}{{1'b0}}}} : ({r} > {hi} ? {hi_bits} : {r}[{}:0]);",
            ib - 1
        ));
    }
    lines
}

// ---------------------------------------------------------------------------
// Testbench.
// ---------------------------------------------------------------------------

/// Output code rendered as an exact bit-pattern literal plus display text;
/// the hex pattern keeps negative codes unambiguous in the comparison.
fn golden_literal(code: i64, bits: u32) -> (String, String) {
    let mask = if bits >= 64 { u64::MAX } else { (1u64 << bits) - 1 };
    let pattern = format!(
        "{bits}'h{:0width$x}",
        (code as u64) & mask,
        width = bits.div_ceil(4) as usize
    );
    (pattern, code.to_string())
}

fn render_testbench(
    qa: &QuantizedAnn,
    arch: Architecture,
    vectors: &[Vec<i64>],
    top: &str,
) -> String {
    let ib = qa.format.input_bits;
    let num_inputs = qa.structure.num_inputs;
    let last = qa.structure.layers.len() - 1;
    let num_outputs = qa.structure.layers[last].neurons;
    let out_signed = qa.structure.layers[last].activation.signed_output();
    let cycles = cycle_count(arch, &qa.structure);
    let timed = !matches!(arch, Architecture::Parallel);

    let mut s = String::new();
    s.push_str("`timescale 1ns / 1ps\n\n");
    s.push_str(&format!("module {top}_tb;\n"));
    s.push_str("  reg clk;\n");
    s.push_str("  reg rst;\n");
    if timed {
        s.push_str("  reg start;\n");
    }
    for i in 1..=num_inputs {
        s.push_str(&format!("  reg [{}:0] x{i};\n", ib - 1));
    }
    let sgn = if out_signed { "signed " } else { "" };
    for m in 1..=num_outputs {
        s.push_str(&format!("  wire {sgn}[{}:0] y{m};\n", ib - 1));
    }
    if timed {
        s.push_str("  wire done;\n");
    }
    s.push_str("  integer errors;\n\n");

    s.push_str(&format!("  {top} dut (\n"));
    s.push_str("    .clk(clk),\n");
    s.push_str("    .rst(rst),\n");
    if timed {
        s.push_str("    .start(start),\n");
    }
    for i in 1..=num_inputs {
        s.push_str(&format!("    .x{i}(x{i}),\n"));
    }
    for m in 1..=num_outputs {
        let comma = if timed || m < num_outputs { "," } else { "" };
        s.push_str(&format!("    .y{m}(y{m}){comma}\n"));
    }
    if timed {
        s.push_str("    .done(done)\n");
    }
    s.push_str("  );\n\n");
    s.push_str("  always #5 clk = ~clk;\n\n");

    s.push_str("  initial begin\n");
    s.push_str("    clk = 1'b0;\n");
    s.push_str("    rst = 1'b1;\n");
    if timed {
        s.push_str("    start = 1'b0;\n");
    }
    for i in 1..=num_inputs {
        s.push_str(&format!("    x{i} = {};\n", ulit(ib, 0)));
    }
    s.push_str("    errors = 0;\n");
    s.push_str("    @(posedge clk);\n");
    s.push_str("    @(posedge clk);\n");
    s.push_str("    rst = 1'b0;\n");
    s.push_str("    @(posedge clk);\n");

    for (v, codes) in vectors.iter().enumerate() {
        let golden = forward_hw(qa, codes);
        let outputs = golden.layer_outputs.last().expect("at least one layer");
        s.push_str(&format!("\n    // vector {}\n", v + 1));
        for (i, &code) in codes.iter().enumerate() {
            s.push_str(&format!("    x{} = {};\n", i + 1, ulit(ib, code)));
        }
        if timed {
            s.push_str("    start = 1'b1;\n");
            s.push_str("    @(posedge clk);\n");
            s.push_str("    start = 1'b0;\n");
        }
        s.push_str(&format!("    repeat ({cycles}) @(posedge clk);\n"));
        s.push_str("    #1;\n");
        if timed {
            s.push_str("    if (done !== 1'b1) begin\n");
            s.push_str("      errors = errors + 1;\n");
            s.push_str(&format!(
                "      $display(\"FAIL vector {}: done not asserted after {cycles} cycles\");\n",
                v + 1
            ));
            s.push_str("    end\n");
        }
        for (m, &code) in outputs.iter().enumerate() {
            let (pattern, display) = golden_literal(code, ib);
            s.push_str(&format!("    if (y{} !== {pattern}) begin\n", m + 1));
            s.push_str("      errors = errors + 1;\n");
            s.push_str(&format!(
                "      $display(\"FAIL vector {} output y{}: got %0d expected {display}\", y{});\n",
                v + 1,
                m + 1,
                m + 1
            ));
            s.push_str("    end\n");
        }
    }

    s.push_str("\n    if (errors == 0) $display(\"PASS\");\n");
    s.push_str("    else $display(\"FAIL: %0d mismatches\", errors);\n");
    s.push_str("    $finish;\n");
    s.push_str("  end\nendmodule\n");
    s
}

/// A sized unsigned decimal literal.
pub(crate) fn ulit(width: u32, value: i64) -> String {
    debug_assert!(value >= 0);
    format!("{width}'d{value}")
}
