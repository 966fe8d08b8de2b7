//! Per-neuron time-multiplexed architecture: every layer owns one control
//! counter and one MAC per neuron; inputs are multiplexed one per cycle, the
//! extra cycle adds the bias and stores the activated output. Layers chain
//! through their `done` pulses, so a sample flows through the network in
//! `sum(inputs_k + 1)` cycles.

use super::{
    acc_bits, counter_bits, extend_code, input_bound, layer_inputs_signed,
    render_activation, render_dag, slit, ulit, EmitError, FileSet,
};
use crate::fixedpoint::QuantizedAnn;
use crate::inference::Architecture;
use crate::shiftadds::{layer_block, odd_decompose, optimize_cse, Effort, MultStyle};

pub(super) fn emit(
    qa: &QuantizedAnn,
    style: MultStyle,
    top: &str,
) -> Result<FileSet, EmitError> {
    let mut files = FileSet::new();
    for layer in 0..qa.structure.layers.len() {
        files.insert(
            format!("rtl/{top}_l{}.v", layer + 1),
            layer_file(qa, style, top, layer)?,
        );
    }
    files.insert(format!("rtl/{top}.v"), top_module(qa, top));
    Ok(files)
}

/// One file per layer: its control counter, its MAC modules, and the layer
/// module wiring them together.
fn layer_file(
    qa: &QuantizedAnn,
    style: MultStyle,
    top: &str,
    layer: usize,
) -> Result<String, EmitError> {
    let inputs = qa.structure.layer_inputs(layer);
    let cnt_bits = counter_bits(inputs as u64);

    // Shared odd-magnitude products for the mcm style: product index used by
    // each weight, plus the wire widths of the shared network's outputs.
    let mcm = if style == MultStyle::Mcm {
        Some(mcm_products(qa, layer)?)
    } else {
        None
    };

    let mut s = String::new();
    s.push_str(&ctrl_module(top, layer, inputs, cnt_bits));
    s.push('\n');
    for m in 0..qa.structure.layers[layer].neurons {
        s.push_str(&mac_module(qa, top, layer, m, cnt_bits, mcm.as_ref()));
        s.push('\n');
    }
    s.push_str(&layer_module(qa, top, layer, cnt_bits, mcm.as_ref()));
    Ok(s)
}

/// The shared product network of one mcm-style layer.
struct McmProducts {
    /// Distinct odd magnitudes, ascending; `products[j]` drives wire `p{j+1}`.
    constants: Vec<i64>,
    /// Wire width of each product.
    widths: Vec<u32>,
    /// Declarations and assigns computing the products from `xsel`.
    lines: Vec<String>,
}

impl McmProducts {
    fn index_of(&self, odd: i64) -> usize {
        self.constants.binary_search(&odd).expect("odd magnitude is in the block")
    }
}

fn mcm_products(qa: &QuantizedAnn, layer: usize) -> Result<McmProducts, EmitError> {
    let x_max = input_bound(qa, layer);
    let blocks = layer_block(Architecture::SmacNeuron, MultStyle::Mcm, qa, layer)?;
    let Some(block) = blocks.first() else {
        // Every weight of the layer is zero.
        return Ok(McmProducts { constants: Vec::new(), widths: Vec::new(), lines: Vec::new() });
    };
    let constants: Vec<i64> = block.rows.iter().map(|r| r[0]).collect();
    let dag = optimize_cse(block, Effort::Greedy)?;
    let text = render_dag(&dag, "mcm_", &["xsel".into()], &[x_max]);
    let mut lines = text.lines.clone();
    let mut widths = Vec::with_capacity(constants.len());
    for (j, out) in text.outputs.iter().enumerate() {
        let w = crate::fixedpoint::magnitude_bits(text.output_bounds[j]) + 1;
        widths.push(w);
        let expr = out.as_deref().expect("odd magnitudes are nonzero");
        lines.push(format!("  wire signed [{}:0] p{};", w - 1, j + 1));
        lines.push(format!("  assign p{} = {expr};", j + 1));
    }
    Ok(McmProducts { constants, widths, lines })
}

fn ctrl_module(top: &str, layer: usize, inputs: usize, cnt_bits: u32) -> String {
    let c = cnt_bits;
    let last = format!("{c}'d{inputs}");
    let mut s = String::new();
    s.push_str(&format!("module {top}_l{}_ctrl (\n", layer + 1));
    s.push_str("  input wire clk,\n");
    s.push_str("  input wire rst,\n");
    s.push_str("  input wire go,\n");
    s.push_str("  output wire busy,\n");
    s.push_str("  output wire done,\n");
    s.push_str(&format!("  output reg [{}:0] cnt\n", c - 1));
    s.push_str(");\n\n");
    s.push_str("  reg active;\n");
    s.push_str("  always @(posedge clk) begin\n");
    s.push_str("    if (rst) begin\n");
    s.push_str("      active <= 1'b0;\n");
    s.push_str(&format!("      cnt <= {c}'d0;\n"));
    s.push_str("    end else if (go && !active) begin\n");
    s.push_str("      active <= 1'b1;\n");
    s.push_str(&format!("      cnt <= {c}'d0;\n"));
    s.push_str("    end else if (active) begin\n");
    s.push_str(&format!("      if (cnt == {last}) begin\n"));
    s.push_str("        active <= 1'b0;\n");
    s.push_str(&format!("        cnt <= {c}'d0;\n"));
    s.push_str("      end else begin\n");
    s.push_str(&format!("        cnt <= cnt + {c}'d1;\n"));
    s.push_str("      end\n");
    s.push_str("    end\n");
    s.push_str("  end\n");
    s.push_str("  assign busy = active;\n");
    s.push_str(&format!("  assign done = active && (cnt == {last});\n"));
    s.push_str("endmodule\n");
    s
}

fn mac_module(
    qa: &QuantizedAnn,
    top: &str,
    layer: usize,
    neuron: usize,
    cnt_bits: u32,
    mcm: Option<&McmProducts>,
) -> String {
    let fmt = &qa.format;
    let ib = fmt.input_bits;
    let c = cnt_bits;
    let act = qa.structure.layers[layer].activation;
    let out_sgn = if act.signed_output() { "signed " } else { "" };
    let a = acc_bits(qa, layer, neuron);
    let row = &qa.weights[layer][neuron];
    let bias = qa.biases[layer][neuron];

    // The mcm flavor consumes only the shared products its weights need.
    let used_products: Vec<usize> = match mcm {
        Some(p) => {
            let mut used: Vec<usize> = row
                .iter()
                .filter_map(|&w| odd_decompose(w).map(|(odd, _, _)| p.index_of(odd)))
                .collect();
            used.sort_unstable();
            used.dedup();
            used
        }
        None => Vec::new(),
    };

    let mut s = String::new();
    s.push_str(&format!("module {top}_l{}_mac{} (\n", layer + 1, neuron + 1));
    s.push_str("  input wire clk,\n");
    s.push_str("  input wire rst,\n");
    s.push_str("  input wire busy,\n");
    s.push_str(&format!("  input wire [{}:0] cnt,\n", c - 1));
    match mcm {
        None => s.push_str(&format!("  input wire signed [{ib}:0] x,\n")),
        Some(p) => {
            for &j in &used_products {
                s.push_str(&format!(
                    "  input wire signed [{}:0] p{},\n",
                    p.widths[j] - 1,
                    j + 1
                ));
            }
        }
    }
    s.push_str(&format!("  output wire {out_sgn}[{}:0] z\n", ib - 1));
    s.push_str(");\n\n");

    // Weight selection: one case arm per cycle index.
    match mcm {
        None => {
            let ww = qa.weight_width(layer);
            for (n, &w) in row.iter().enumerate() {
                if w != 0 {
                    s.push_str(&format!(
                        "  localparam signed [{}:0] W{} = {};\n",
                        ww - 1,
                        n + 1,
                        slit(ww, w)
                    ));
                }
            }
            s.push_str(&format!("  reg signed [{}:0] wsel;\n", ww - 1));
            s.push_str("  always @* begin\n");
            s.push_str("    case (cnt)\n");
            for (n, &w) in row.iter().enumerate() {
                if w != 0 {
                    s.push_str(&format!("      {c}'d{n}: wsel = W{};\n", n + 1));
                }
            }
            s.push_str(&format!("      default: wsel = {};\n", slit(ww, 0)));
            s.push_str("    endcase\n");
            s.push_str("  end\n");
            s.push_str(&format!("  wire signed [{}:0] prod;\n", a - 1));
            s.push_str("  assign prod = x * wsel;\n");
        }
        Some(p) => {
            s.push_str(&format!("  reg signed [{}:0] prod;\n", a - 1));
            s.push_str("  always @* begin\n");
            if row.iter().all(|&w| w == 0) {
                s.push_str(&format!("    prod = {};\n", slit(a, 0)));
            } else {
                s.push_str("    case (cnt)\n");
                for (n, &w) in row.iter().enumerate() {
                    let Some((odd, shift, negative)) = odd_decompose(w) else {
                        continue;
                    };
                    let name = format!("p{}", p.index_of(odd) + 1);
                    let shifted = if shift > 0 {
                        format!("({name} <<< {shift})")
                    } else {
                        name
                    };
                    let expr = if negative { format!("-{shifted}") } else { shifted };
                    s.push_str(&format!("      {c}'d{n}: prod = {expr};\n"));
                }
                s.push_str(&format!("      default: prod = {};\n", slit(a, 0)));
                s.push_str("    endcase\n");
            }
            s.push_str("  end\n");
        }
    }
    s.push('\n');

    s.push_str(&format!("  localparam signed [{}:0] B = {};\n", a - 1, slit(a, bias)));
    s.push_str(&format!("  reg signed [{}:0] acc;\n", a - 1));
    s.push_str(&format!("  wire signed [{}:0] ya;\n", a - 1));
    s.push_str("  assign ya = acc + B;\n");
    for line in render_activation("a_", act, fmt, "ya", a) {
        s.push_str(&line);
        s.push('\n');
    }
    s.push('\n');

    let zero_out = if act.signed_output() { slit(ib, 0) } else { ulit(ib, 0) };
    s.push_str(&format!("  reg {out_sgn}[{}:0] zq;\n", ib - 1));
    s.push_str("  always @(posedge clk) begin\n");
    s.push_str("    if (rst) begin\n");
    s.push_str(&format!("      acc <= {};\n", slit(a, 0)));
    s.push_str(&format!("      zq <= {zero_out};\n"));
    s.push_str("    end else if (busy) begin\n");
    s.push_str(&format!("      if (cnt == {c}'d0) begin\n"));
    s.push_str("        acc <= prod;\n");
    s.push_str(&format!("      end else if (cnt < {c}'d{}) begin\n", row.len()));
    s.push_str("        acc <= acc + prod;\n");
    s.push_str("      end else begin\n");
    s.push_str("        zq <= a_z;\n");
    s.push_str("      end\n");
    s.push_str("    end\n");
    s.push_str("  end\n");
    s.push_str("  assign z = zq;\n");
    s.push_str("endmodule\n");
    s
}

fn layer_module(
    qa: &QuantizedAnn,
    top: &str,
    layer: usize,
    cnt_bits: u32,
    mcm: Option<&McmProducts>,
) -> String {
    let ib = qa.format.input_bits;
    let c = cnt_bits;
    let inputs = qa.structure.layer_inputs(layer);
    let neurons = qa.structure.layers[layer].neurons;
    let in_signed = layer_inputs_signed(qa, layer);
    let in_sgn = if in_signed { "signed " } else { "" };
    let out_sgn = if qa.structure.layers[layer].activation.signed_output() {
        "signed "
    } else {
        ""
    };
    let row_used = |m: usize| -> Vec<usize> {
        let p = mcm.expect("only called for mcm");
        let mut used: Vec<usize> = qa.weights[layer][m]
            .iter()
            .filter_map(|&w| odd_decompose(w).map(|(odd, _, _)| p.index_of(odd)))
            .collect();
        used.sort_unstable();
        used.dedup();
        used
    };

    let mut s = String::new();
    s.push_str(&format!("module {top}_l{} (\n", layer + 1));
    s.push_str("  input wire clk,\n");
    s.push_str("  input wire rst,\n");
    s.push_str("  input wire go,\n");
    for n in 1..=inputs {
        s.push_str(&format!("  input wire {in_sgn}[{}:0] i{n},\n", ib - 1));
    }
    for m in 1..=neurons {
        s.push_str(&format!("  output wire {out_sgn}[{}:0] o{m},\n", ib - 1));
    }
    s.push_str("  output wire done\n");
    s.push_str(");\n\n");

    s.push_str("  wire busy;\n");
    s.push_str(&format!("  wire [{}:0] cnt;\n", c - 1));
    s.push_str(&format!("  {top}_l{}_ctrl ctrl (\n", layer + 1));
    s.push_str("    .clk(clk),\n");
    s.push_str("    .rst(rst),\n");
    s.push_str("    .go(go),\n");
    s.push_str("    .busy(busy),\n");
    s.push_str("    .done(done),\n");
    s.push_str("    .cnt(cnt)\n");
    s.push_str("  );\n\n");

    for n in 1..=inputs {
        s.push_str(&format!("  wire signed [{ib}:0] xs{n};\n"));
        s.push_str(&format!(
            "  assign xs{n} = {};\n",
            extend_code(&format!("i{n}"), ib, in_signed)
        ));
    }
    s.push_str(&format!("  reg signed [{ib}:0] xsel;\n"));
    s.push_str("  always @* begin\n");
    s.push_str("    case (cnt)\n");
    for n in 0..inputs {
        s.push_str(&format!("      {c}'d{n}: xsel = xs{};\n", n + 1));
    }
    s.push_str(&format!("      default: xsel = {};\n", slit(ib + 1, 0)));
    s.push_str("    endcase\n");
    s.push_str("  end\n\n");

    if let Some(p) = mcm {
        for line in &p.lines {
            s.push_str(line);
            s.push('\n');
        }
        s.push('\n');
    }

    for m in 1..=neurons {
        s.push_str(&format!("  wire {out_sgn}[{}:0] z{m};\n", ib - 1));
        s.push_str(&format!("  {top}_l{}_mac{m} mac{m} (\n", layer + 1));
        s.push_str("    .clk(clk),\n");
        s.push_str("    .rst(rst),\n");
        s.push_str("    .busy(busy),\n");
        s.push_str("    .cnt(cnt),\n");
        match mcm {
            None => s.push_str("    .x(xsel),\n"),
            Some(_) => {
                for j in row_used(m - 1) {
                    s.push_str(&format!("    .p{}(p{}),\n", j + 1, j + 1));
                }
            }
        }
        s.push_str(&format!("    .z(z{m})\n"));
        s.push_str("  );\n");
        s.push_str(&format!("  assign o{m} = z{m};\n\n"));
    }

    s.push_str("endmodule\n");
    s
}

fn top_module(qa: &QuantizedAnn, top: &str) -> String {
    let ib = qa.format.input_bits;
    let num_inputs = qa.structure.num_inputs;
    let num_layers = qa.structure.layers.len();
    let last = num_layers - 1;
    let num_outputs = qa.structure.layers[last].neurons;
    let out_sgn = if qa.structure.layers[last].activation.signed_output() {
        "signed "
    } else {
        ""
    };

    let mut s = String::new();
    s.push_str(&format!("module {top} (\n"));
    s.push_str("  input wire clk,\n");
    s.push_str("  input wire rst,\n");
    s.push_str("  input wire start,\n");
    for i in 1..=num_inputs {
        s.push_str(&format!("  input wire [{}:0] x{i},\n", ib - 1));
    }
    for m in 1..=num_outputs {
        s.push_str(&format!("  output wire {out_sgn}[{}:0] y{m},\n", ib - 1));
    }
    s.push_str("  output wire done\n");
    s.push_str(");\n\n");

    for (k, spec) in qa.structure.layers.iter().enumerate() {
        let sgn = if spec.activation.signed_output() { "signed " } else { "" };
        s.push_str(&format!("  wire l{}_done;\n", k + 1));
        for m in 1..=spec.neurons {
            s.push_str(&format!("  wire {sgn}[{}:0] l{}_o{m};\n", ib - 1, k + 1));
        }
    }
    s.push('\n');

    for k in 0..num_layers {
        let inputs = qa.structure.layer_inputs(k);
        s.push_str(&format!("  {top}_l{} l{} (\n", k + 1, k + 1));
        s.push_str("    .clk(clk),\n");
        s.push_str("    .rst(rst),\n");
        if k == 0 {
            s.push_str("    .go(start),\n");
        } else {
            s.push_str(&format!("    .go(l{k}_done),\n"));
        }
        for n in 1..=inputs {
            let src = if k == 0 {
                format!("x{n}")
            } else {
                format!("l{k}_o{n}")
            };
            s.push_str(&format!("    .i{n}({src}),\n"));
        }
        for m in 1..=qa.structure.layers[k].neurons {
            s.push_str(&format!("    .o{m}(l{}_o{m}),\n", k + 1));
        }
        s.push_str(&format!("    .done(l{}_done)\n", k + 1));
        s.push_str("  );\n\n");
    }

    s.push_str("  reg done_q;\n");
    s.push_str("  always @(posedge clk) begin\n");
    s.push_str("    if (rst) begin\n");
    s.push_str("      done_q <= 1'b0;\n");
    s.push_str("    end else if (start) begin\n");
    s.push_str("      done_q <= 1'b0;\n");
    s.push_str(&format!("    end else if (l{num_layers}_done) begin\n"));
    s.push_str("      done_q <= 1'b1;\n");
    s.push_str("    end\n");
    s.push_str("  end\n");
    s.push_str("  assign done = done_q;\n");
    for m in 1..=num_outputs {
        s.push_str(&format!("  assign y{m} = l{num_layers}_o{m};\n"));
    }
    s.push_str("endmodule\n");
    s
}

#[cfg(test)]
mod tests {
    use super::super::{check_fileset, emit_design};
    use crate::fixedpoint::{FixedFormat, QuantizedAnn};
    use crate::inference::Architecture;
    use crate::model::{Activation, AnnStructure, LayerSpec};
    use crate::shiftadds::MultStyle;

    fn qa(
        act: Activation,
        weights: Vec<Vec<Vec<i64>>>,
        biases: Vec<Vec<i64>>,
        q: u32,
    ) -> QuantizedAnn {
        let layers = weights
            .iter()
            .map(|layer| LayerSpec { neurons: layer.len(), activation: act })
            .collect();
        QuantizedAnn {
            structure: AnnStructure { num_inputs: weights[0][0].len(), layers },
            format: FixedFormat::with_q(q),
            weights,
            biases,
        }
    }

    fn wide_layer(neurons: usize, inputs: usize, seed_w: i64) -> Vec<Vec<i64>> {
        (0..neurons)
            .map(|m| (0..inputs).map(|n| ((m * inputs + n) as i64 % 13) - 6 + seed_w).collect())
            .collect()
    }

    #[test]
    fn sixteen_input_layer_gets_ten_macs_and_a_mod17_counter() {
        let weights = vec![wide_layer(10, 16, 0)];
        let biases = vec![vec![1; 10]];
        let net = qa(Activation::Relu, weights, biases, 3);
        let files =
            emit_design(&net, Architecture::SmacNeuron, MultStyle::Behavioral, "t").unwrap();
        let layer = &files["rtl/t_l1.v"];
        let instances = layer
            .lines()
            .filter(|l| l.trim_start().starts_with("t_l1_mac") && l.trim_end().ends_with('('))
            .count();
        assert_eq!(instances, 10, "{layer}");
        // inputs + 1 states: counter compares against 16 at five bits.
        assert!(layer.contains("cnt == 5'd16"), "{layer}");
        assert!(layer.contains("reg [4:0] cnt"), "{layer}");
        check_fileset(&files).unwrap();
    }

    #[test]
    fn macs_chain_layer_to_layer_through_done_pulses() {
        let net = qa(
            Activation::Satlin,
            vec![wide_layer(3, 4, 1), wide_layer(2, 3, 2)],
            vec![vec![0; 3], vec![0; 2]],
            2,
        );
        let files =
            emit_design(&net, Architecture::SmacNeuron, MultStyle::Behavioral, "t").unwrap();
        let top = &files["rtl/t.v"];
        assert!(top.contains(".go(start)"), "{top}");
        assert!(top.contains(".go(l1_done)"), "{top}");
        assert!(top.contains("end else if (l2_done) begin"), "{top}");
        check_fileset(&files).unwrap();
    }

    #[test]
    fn mcm_style_shares_odd_products_and_drops_multiplies() {
        // Weights 6=3<<1, 12=3<<2, -3, 5: odd magnitudes {3, 5} shared.
        let net = qa(
            Activation::Relu,
            vec![vec![vec![6, 12], vec![-3, 5]]],
            vec![vec![0, 0]],
            2,
        );
        let files = emit_design(&net, Architecture::SmacNeuron, MultStyle::Mcm, "t").unwrap();
        let layer = &files["rtl/t_l1.v"];
        assert!(!layer.contains(" * "), "{layer}");
        assert!(layer.contains("assign p1 = "), "{layer}");
        assert!(layer.contains("assign p2 = "), "{layer}");
        // 6 = p1 << 1 and 12 = p1 << 2 reuse the same product wire.
        assert!(layer.contains("prod = (p1 <<< 1);"), "{layer}");
        assert!(layer.contains("prod = (p1 <<< 2);"), "{layer}");
        assert!(layer.contains("prod = -p1;"), "{layer}");
        check_fileset(&files).unwrap();
    }

    #[test]
    fn all_zero_layer_still_emits_a_constant_product() {
        let net = qa(
            Activation::Relu,
            vec![vec![vec![0, 0]]],
            vec![vec![9]],
            2,
        );
        let files = emit_design(&net, Architecture::SmacNeuron, MultStyle::Mcm, "t").unwrap();
        let layer = &files["rtl/t_l1.v"];
        assert!(layer.contains("prod = "), "{layer}");
        check_fileset(&files).unwrap();
    }
}
