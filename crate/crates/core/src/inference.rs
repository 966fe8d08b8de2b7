//! Bit-exact integer inference and the architecture cost model.
//!
//! [`forward_hw`] reproduces, in plain integer arithmetic, exactly what the
//! emitted RTL computes: products of input codes and integer weights summed
//! into a wide accumulator, bias added at accumulator scale, a piecewise
//! linear activation, then an arithmetic right shift with saturation back to
//! the layer's 8-bit output code. Every accuracy figure used by the search
//! and tuning stages comes from this oracle, so a weight change is accepted
//! or rejected against the same numbers the hardware will produce.
//!
//! The module also prices the three architectures: exact cycle counts and
//! multiply-accumulate block sizes (multiplier, adder/register widths, and
//! multiplexer sizes).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixedpoint::{magnitude_bits, model_tnzd, FixedFormat, QuantizedAnn};
use crate::model::{Activation, AnnStructure, Dataset};
use crate::shiftadds::MultStyle;

/// Errors raised by the cost model.
#[derive(Debug, Error)]
pub enum CostError {
    #[error("the parallel architecture has no multiply-accumulate blocks")]
    NoMacBlocks,
}

/// Hardware organization of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Every multiplication in silicon at once; one pipeline cycle per layer.
    Parallel,
    /// One time-multiplexed multiply-accumulate block per neuron.
    SmacNeuron,
    /// A single multiply-accumulate block shared by the whole network.
    SmacAnn,
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Architecture::Parallel => "parallel",
            Architecture::SmacNeuron => "smac_neuron",
            Architecture::SmacAnn => "smac_ann",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "parallel" => Ok(Architecture::Parallel),
            "smac_neuron" => Ok(Architecture::SmacNeuron),
            "smac_ann" => Ok(Architecture::SmacAnn),
            other => Err(format!(
                "unknown architecture {other:?}; expected parallel, smac_neuron, or smac_ann"
            )),
        }
    }
}

/// Encodes one real feature in [0,1] as an unsigned input code.
///
/// Nearest-value rounding (ties away from zero), clamped to the code range.
pub fn encode_input(x: f64, fmt: &FixedFormat) -> i64 {
    let scaled = (x * (1u64 << fmt.input_frac_bits) as f64).round() as i64;
    scaled.clamp(0, (1i64 << fmt.input_bits) - 1)
}

/// Encodes every sample of a dataset once, for repeated accuracy queries.
pub fn encode_dataset(data: &Dataset, fmt: &FixedFormat) -> Vec<(Vec<i64>, usize)> {
    data.samples
        .iter()
        .map(|(features, label)| {
            (features.iter().map(|&x| encode_input(x, fmt)).collect(), *label)
        })
        .collect()
}

/// Applies an activation to an accumulator value and requantizes the result
/// to the layer's output code.
///
/// Clamping happens at accumulator scale against `ONE = 2^acc_frac_bits`,
/// then the value is shifted right by `q` bits (arithmetic) and saturated to
/// the output width: signed for `htanh`, unsigned otherwise.
pub fn activate(act: Activation, y: i64, fmt: &FixedFormat) -> i64 {
    let one = 1i64 << fmt.acc_frac_bits;
    let clamped = match act {
        Activation::Relu => y.max(0),
        Activation::Lin => y,
        Activation::Satlin => y.clamp(0, one),
        Activation::Htanh => y.clamp(-one, one),
        Activation::Hsig => ((y + one) >> 1).clamp(0, one),
    };
    let requantized = clamped >> fmt.q;
    if act.signed_output() {
        let hi = (1i64 << (fmt.input_bits - 1)) - 1;
        requantized.clamp(-hi - 1, hi)
    } else {
        requantized.clamp(0, (1i64 << fmt.input_bits) - 1)
    }
}

/// Result of one exact forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardResult {
    /// Index of the largest final output; ties resolve to the lowest index.
    pub class: usize,
    /// Output codes of every layer, in order.
    pub layer_outputs: Vec<Vec<i64>>,
}

/// Runs the network on one vector of input codes, exactly as the hardware
/// computes it.
pub fn forward_hw(qa: &QuantizedAnn, x: &[i64]) -> ForwardResult {
    assert_eq!(
        x.len(),
        qa.structure.num_inputs,
        "input vector length must match the network"
    );
    let mut layer_outputs = Vec::with_capacity(qa.structure.layers.len());
    let mut current: Vec<i64> = x.to_vec();
    for (k, spec) in qa.structure.layers.iter().enumerate() {
        let mut outputs = Vec::with_capacity(spec.neurons);
        for m in 0..spec.neurons {
            // The accumulator is sized for the worst case, so the i128 sum
            // here can never wrap; it collapses back to i64 losslessly.
            let mut acc: i128 = 0;
            for (w, xin) in qa.weights[k][m].iter().zip(&current) {
                acc += i128::from(*w) * i128::from(*xin);
            }
            acc += i128::from(qa.biases[k][m]);
            let y = i64::try_from(acc).expect("accumulator fits 64 bits");
            outputs.push(activate(spec.activation, y, &qa.format));
        }
        layer_outputs.push(outputs.clone());
        current = outputs;
    }
    let class = argmax(layer_outputs.last().expect("at least one layer"));
    ForwardResult { class, layer_outputs }
}

/// Index of the maximum, lowest index on ties.
fn argmax(values: &[i64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Fraction of dataset samples the quantized network classifies correctly.
pub fn hardware_accuracy(qa: &QuantizedAnn, data: &Dataset) -> f64 {
    accuracy_on_encoded(qa, &encode_dataset(data, &qa.format))
}

/// [`hardware_accuracy`] over samples that are already encoded.
pub fn accuracy_on_encoded(qa: &QuantizedAnn, encoded: &[(Vec<i64>, usize)]) -> f64 {
    assert!(!encoded.is_empty(), "accuracy over an empty dataset is undefined");
    let correct = encoded
        .iter()
        .filter(|(x, label)| forward_hw(qa, x).class == *label)
        .count();
    correct as f64 / encoded.len() as f64
}

/// Exact cycles from input application to registered outputs.
///
/// Parallel designs cost one cycle per layer plus the output register. A
/// per-neuron block serializes each layer over its inputs plus one
/// bias/activation cycle. A single shared block additionally serializes the
/// neurons, with one extra write-back cycle each.
pub fn cycle_count(arch: Architecture, structure: &AnnStructure) -> u64 {
    match arch {
        Architecture::Parallel => structure.layers.len() as u64 + 1,
        Architecture::SmacNeuron => (0..structure.layers.len())
            .map(|k| structure.layer_inputs(k) as u64 + 1)
            .sum(),
        Architecture::SmacAnn => (0..structure.layers.len())
            .map(|k| (structure.layer_inputs(k) as u64 + 2) * structure.layers[k].neurons as u64)
            .sum(),
    }
}

/// Sizes of one multiply-accumulate block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacBlockSize {
    /// Multiplier operand widths: input code bits by weight magnitude bits
    /// (plus a sign bit when any weight is negative).
    pub multiplier_bits: [u32; 2],
    /// Accumulator adder width.
    pub adder_bits: u32,
    /// Accumulator register width (equal to the adder).
    pub register_bits: u32,
    /// Inputs selectable by the input multiplexer.
    pub input_mux_size: usize,
    /// Constants selectable by the weight multiplexer.
    pub weight_mux_size: usize,
    /// Constants selectable by the bias multiplexer.
    pub bias_mux_size: usize,
}

/// Largest magnitude an input code of `layer` can take.
fn input_max_abs(qa: &QuantizedAnn, layer: usize) -> i64 {
    let bits = qa.format.input_bits;
    if layer > 0 && qa.structure.layers[layer - 1].activation.signed_output() {
        1i64 << (bits - 1)
    } else {
        (1i64 << bits) - 1
    }
}

/// Width needed by the accumulator of one neuron: the worst-case magnitude
/// of `sum(|w| * x_max) + |b|`, plus a sign bit.
pub fn neuron_acc_bits(qa: &QuantizedAnn, layer: usize, neuron: usize) -> u32 {
    let x_max = input_max_abs(qa, layer);
    let bound: i64 = qa.weights[layer][neuron]
        .iter()
        .map(|&w| w.abs() * x_max)
        .sum::<i64>()
        + qa.biases[layer][neuron].abs();
    magnitude_bits(bound) + 1
}

/// Multiplier operand widths for a set of weights of one layer.
fn multiplier_bits(qa: &QuantizedAnn, weights: &[i64]) -> [u32; 2] {
    let magnitude = weights.iter().map(|&w| magnitude_bits(w)).max().unwrap_or(0);
    let sign = u32::from(weights.iter().any(|&w| w < 0));
    [qa.format.input_bits, (magnitude + sign).max(1)]
}

/// Sizes every multiply-accumulate block of a time-multiplexed design:
/// one entry per neuron for [`Architecture::SmacNeuron`], a single global
/// entry for [`Architecture::SmacAnn`].
pub fn mac_sizes(arch: Architecture, qa: &QuantizedAnn) -> Result<Vec<MacBlockSize>, CostError> {
    match arch {
        Architecture::Parallel => Err(CostError::NoMacBlocks),
        Architecture::SmacNeuron => {
            let mut blocks = Vec::new();
            for (k, spec) in qa.structure.layers.iter().enumerate() {
                let inputs = qa.structure.layer_inputs(k);
                for m in 0..spec.neurons {
                    let acc = neuron_acc_bits(qa, k, m);
                    blocks.push(MacBlockSize {
                        multiplier_bits: multiplier_bits(qa, &qa.weights[k][m]),
                        adder_bits: acc,
                        register_bits: acc,
                        input_mux_size: inputs,
                        weight_mux_size: inputs,
                        bias_mux_size: 1,
                    });
                }
            }
            Ok(blocks)
        }
        Architecture::SmacAnn => {
            let all_weights: Vec<i64> = qa.weights.iter().flatten().flatten().copied().collect();
            let acc = qa
                .structure
                .layers
                .iter()
                .enumerate()
                .flat_map(|(k, spec)| (0..spec.neurons).map(move |m| (k, m)))
                .map(|(k, m)| neuron_acc_bits(qa, k, m))
                .max()
                .unwrap_or(1);
            let total_biases: usize = qa.biases.iter().map(Vec::len).sum();
            let input_mux = (0..qa.structure.layers.len())
                .map(|k| qa.structure.layer_inputs(k))
                .max()
                .unwrap_or(0);
            Ok(vec![MacBlockSize {
                multiplier_bits: multiplier_bits(qa, &all_weights),
                adder_bits: acc,
                register_bits: acc,
                input_mux_size: input_mux,
                weight_mux_size: all_weights.len(),
                bias_mux_size: total_biases,
            }])
        }
    }
}

/// Everything the `report` command prints, serializable as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostReport {
    pub shape: String,
    pub arch: Architecture,
    pub mult_style: MultStyle,
    pub q: u32,
    /// Total nonzero signed digits over weights and biases.
    pub tnzd: u64,
    pub cycles: u64,
    /// Shift-add operations when multiplierless, absent for behavioral
    /// multipliers.
    pub adders: Option<u64>,
    /// Per block: input code bits by weight bits.
    pub multiplier_bits: Vec<[u32; 2]>,
    pub adder_bits: Vec<u32>,
    pub register_bits: Vec<u32>,
    pub hardware_accuracy: Option<f64>,
}

impl CostReport {
    /// Assembles the report for a quantized network; `adders` comes from the
    /// synthesized shift-add networks and `accuracy` from the dataset, when
    /// available.
    pub fn build(
        arch: Architecture,
        mult_style: MultStyle,
        qa: &QuantizedAnn,
        adders: Option<u64>,
        hardware_accuracy: Option<f64>,
    ) -> CostReport {
        let (multiplier, adder, register) = match mac_sizes(arch, qa) {
            Ok(blocks) => (
                blocks.iter().map(|b| b.multiplier_bits).collect(),
                blocks.iter().map(|b| b.adder_bits).collect(),
                blocks.iter().map(|b| b.register_bits).collect(),
            ),
            // Parallel datapaths have no MAC block; report per-neuron
            // multiplier and accumulator widths with the 8-bit output
            // registers.
            Err(CostError::NoMacBlocks) => {
                let mut mult = Vec::new();
                let mut adder = Vec::new();
                let mut register = Vec::new();
                for (k, spec) in qa.structure.layers.iter().enumerate() {
                    for m in 0..spec.neurons {
                        mult.push(multiplier_bits(qa, &qa.weights[k][m]));
                        adder.push(neuron_acc_bits(qa, k, m));
                        register.push(qa.format.input_bits);
                    }
                }
                (mult, adder, register)
            }
        };
        CostReport {
            shape: qa.structure.shape_label(),
            arch,
            mult_style,
            q: qa.format.q,
            tnzd: model_tnzd(qa),
            cycles: cycle_count(arch, &qa.structure),
            adders,
            multiplier_bits: multiplier,
            adder_bits: adder,
            register_bits: register,
            hardware_accuracy,
        }
    }

    /// Renders the human-readable table next to the JSON artifact.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let mut row = |name: &str, value: String| {
            out.push_str(&format!("{name:<22} {value}\n"));
        };
        row("network", self.shape.clone());
        row("architecture", self.arch.to_string());
        row("multiplier style", self.mult_style.to_string());
        row("fractional bits (q)", self.q.to_string());
        row("nonzero digits", self.tnzd.to_string());
        row("cycles per sample", self.cycles.to_string());
        match self.adders {
            Some(n) => row("shift-add operations", n.to_string()),
            None => row("shift-add operations", "- (behavioral multipliers)".into()),
        }
        let max_mult = self
            .multiplier_bits
            .iter()
            .max_by_key(|m| m[0] * m[1])
            .copied()
            .unwrap_or([0, 0]);
        row("widest multiplier", format!("{}x{}", max_mult[0], max_mult[1]));
        row(
            "widest adder",
            self.adder_bits.iter().max().copied().unwrap_or(0).to_string(),
        );
        row(
            "widest register",
            self.register_bits.iter().max().copied().unwrap_or(0).to_string(),
        );
        match self.hardware_accuracy {
            Some(a) => row("hardware accuracy", format!("{:.4}", a)),
            None => row("hardware accuracy", "- (no dataset)".into()),
        }
        out
    }
}
