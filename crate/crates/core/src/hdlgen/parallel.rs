//! Fully parallel architecture: one combinational module per layer, every
//! neuron computing its inner product in the same cycle, with the network
//! outputs registered in the top module.

use super::{
    acc_bits, extend_code, input_bound, layer_inputs_signed, render_activation, render_dag,
    slit, ulit, EmitError, FileSet,
};
use crate::fixedpoint::QuantizedAnn;
use crate::inference::Architecture;
use crate::shiftadds::{layer_block, optimize_cse, Effort, MultStyle};

pub(super) fn emit(
    qa: &QuantizedAnn,
    style: MultStyle,
    top: &str,
) -> Result<FileSet, EmitError> {
    let mut files = FileSet::new();
    for layer in 0..qa.structure.layers.len() {
        files.insert(
            format!("rtl/{top}_l{}.v", layer + 1),
            layer_module(qa, style, top, layer)?,
        );
    }
    files.insert(format!("rtl/{top}.v"), top_module(qa, top));
    Ok(files)
}

fn layer_module(
    qa: &QuantizedAnn,
    style: MultStyle,
    top: &str,
    layer: usize,
) -> Result<String, EmitError> {
    let fmt = &qa.format;
    let ib = fmt.input_bits;
    let act = qa.structure.layers[layer].activation;
    let neurons = qa.structure.layers[layer].neurons;
    let inputs = qa.structure.layer_inputs(layer);
    let in_signed = layer_inputs_signed(qa, layer);
    let in_sgn = if in_signed { "signed " } else { "" };
    let out_sgn = if act.signed_output() { "signed " } else { "" };
    let x_max = input_bound(qa, layer);

    let mut s = String::new();
    s.push_str(&format!("module {top}_l{} (\n", layer + 1));
    for n in 1..=inputs {
        s.push_str(&format!("  input wire {in_sgn}[{}:0] i{n},\n", ib - 1));
    }
    for m in 1..=neurons {
        let comma = if m < neurons { "," } else { "" };
        s.push_str(&format!("  output wire {out_sgn}[{}:0] o{m}{comma}\n", ib - 1));
    }
    s.push_str(");\n\n");

    for n in 1..=inputs {
        s.push_str(&format!("  wire signed [{ib}:0] xs{n};\n"));
        s.push_str(&format!(
            "  assign xs{n} = {};\n",
            extend_code(&format!("i{n}"), ib, in_signed)
        ));
    }
    s.push('\n');

    let xs_exprs: Vec<String> = (1..=inputs).map(|n| format!("xs{n}")).collect();
    let xs_bounds = vec![x_max; inputs];

    // One accumulator expression per neuron, by multiplier style.
    let mut acc_exprs: Vec<String> = Vec::with_capacity(neurons);
    match style {
        MultStyle::Behavioral => {
            let ww = qa.weight_width(layer);
            for m in 0..neurons {
                let a = acc_bits(qa, layer, m);
                let mut terms = Vec::new();
                for (n, &w) in qa.weights[layer][m].iter().enumerate() {
                    if w != 0 {
                        s.push_str(&format!(
                            "  localparam signed [{}:0] W{}_{} = {};\n",
                            ww - 1,
                            m + 1,
                            n + 1,
                            slit(ww, w)
                        ));
                        terms.push(format!("xs{} * W{}_{}", n + 1, m + 1, n + 1));
                    }
                }
                s.push_str(&format!(
                    "  localparam signed [{}:0] B{} = {};\n",
                    a - 1,
                    m + 1,
                    slit(a, qa.biases[layer][m])
                ));
                terms.push(format!("B{}", m + 1));
                acc_exprs.push(terms.join(" + "));
            }
        }
        MultStyle::Cavm => {
            let blocks = layer_block(Architecture::Parallel, style, qa, layer)?;
            for (m, block) in blocks.iter().enumerate() {
                let dag = optimize_cse(block, Effort::Greedy)?;
                let text = render_dag(&dag, &format!("n{}_", m + 1), &xs_exprs, &xs_bounds);
                for line in &text.lines {
                    s.push_str(line);
                    s.push('\n');
                }
                let a = acc_bits(qa, layer, m);
                s.push_str(&format!(
                    "  localparam signed [{}:0] B{} = {};\n",
                    a - 1,
                    m + 1,
                    slit(a, qa.biases[layer][m])
                ));
                acc_exprs.push(match &text.outputs[0] {
                    Some(expr) => format!("{expr} + B{}", m + 1),
                    None => format!("B{}", m + 1),
                });
            }
        }
        MultStyle::Cmvm => {
            let blocks = layer_block(Architecture::Parallel, style, qa, layer)?;
            let dag = optimize_cse(&blocks[0], Effort::Greedy)?;
            let text = render_dag(&dag, "", &xs_exprs, &xs_bounds);
            for line in &text.lines {
                s.push_str(line);
                s.push('\n');
            }
            for m in 0..neurons {
                let a = acc_bits(qa, layer, m);
                s.push_str(&format!(
                    "  localparam signed [{}:0] B{} = {};\n",
                    a - 1,
                    m + 1,
                    slit(a, qa.biases[layer][m])
                ));
                acc_exprs.push(match &text.outputs[m] {
                    Some(expr) => format!("{expr} + B{}", m + 1),
                    None => format!("B{}", m + 1),
                });
            }
        }
        MultStyle::Mcm => unreachable!("rejected by the legality check"),
    }
    s.push('\n');

    for (m, acc_expr) in acc_exprs.iter().enumerate() {
        let a = acc_bits(qa, layer, m);
        s.push_str(&format!("  wire signed [{}:0] acc{};\n", a - 1, m + 1));
        s.push_str(&format!("  assign acc{} = {acc_expr};\n", m + 1));
        for line in render_activation(
            &format!("a{}_", m + 1),
            act,
            fmt,
            &format!("acc{}", m + 1),
            a,
        ) {
            s.push_str(&line);
            s.push('\n');
        }
        s.push_str(&format!("  assign o{} = a{}_z;\n\n", m + 1, m + 1));
    }

    s.push_str("endmodule\n");
    Ok(s)
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
    for i in 1..=num_inputs {
        s.push_str(&format!("  input wire [{}:0] x{i},\n", ib - 1));
    }
    for m in 1..=num_outputs {
        let comma = if m < num_outputs { "," } else { "" };
        s.push_str(&format!("  output wire {out_sgn}[{}:0] y{m}{comma}\n", ib - 1));
    }
    s.push_str(");\n\n");

    for (k, spec) in qa.structure.layers.iter().enumerate() {
        let sgn = if spec.activation.signed_output() { "signed " } else { "" };
        for m in 1..=spec.neurons {
            s.push_str(&format!("  wire {sgn}[{}:0] l{}_o{m};\n", ib - 1, k + 1));
        }
    }
    s.push('\n');

    for k in 0..num_layers {
        let inputs = qa.structure.layer_inputs(k);
        s.push_str(&format!("  {top}_l{} l{} (\n", k + 1, k + 1));
        for n in 1..=inputs {
            let src = if k == 0 {
                format!("x{n}")
            } else {
                format!("l{k}_o{n}")
            };
            s.push_str(&format!("    .i{n}({src}),\n"));
        }
        let neurons = qa.structure.layers[k].neurons;
        for m in 1..=neurons {
            let comma = if m < neurons { "," } else { "" };
            s.push_str(&format!("    .o{m}(l{}_o{m}){comma}\n", k + 1));
        }
        s.push_str("  );\n\n");
    }

    for m in 1..=num_outputs {
        s.push_str(&format!("  reg {out_sgn}[{}:0] y{m}_q;\n", ib - 1));
    }
    s.push_str("  always @(posedge clk) begin\n");
    s.push_str("    if (rst) begin\n");
    for m in 1..=num_outputs {
        s.push_str(&format!("      y{m}_q <= {};\n", ulit(ib, 0)));
    }
    s.push_str("    end else begin\n");
    for m in 1..=num_outputs {
        s.push_str(&format!("      y{m}_q <= l{}_o{m};\n", num_layers));
    }
    s.push_str("    end\n");
    s.push_str("  end\n");
    for m in 1..=num_outputs {
        s.push_str(&format!("  assign y{m} = y{m}_q;\n"));
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

    #[test]
    fn single_neuron_behavioral_layer_is_one_mac_expression() {
        let net = qa(Activation::Lin, vec![vec![vec![11, -3]]], vec![vec![5]], 4);
        let files =
            emit_design(&net, Architecture::Parallel, MultStyle::Behavioral, "t").unwrap();
        let layer = &files["rtl/t_l1.v"];
        assert!(
            layer.contains("assign acc1 = xs1 * W1_1 + xs2 * W1_2 + B1;"),
            "{layer}"
        );
        assert!(layer.contains("localparam signed [4:0] W1_2 = -5'sd3;"), "{layer}");
        let top = &files["rtl/t.v"];
        assert!(top.contains("y1_q <= l1_o1;"), "{top}");
        assert!(top.contains("assign y1 = y1_q;"), "{top}");
        check_fileset(&files).unwrap();
    }

    #[test]
    fn zero_weight_rows_collapse_to_the_bias() {
        let net = qa(
            Activation::Relu,
            vec![vec![vec![0, 0], vec![2, 0]]],
            vec![vec![7, 0]],
            2,
        );
        for style in [MultStyle::Behavioral, MultStyle::Cavm, MultStyle::Cmvm] {
            let files = emit_design(&net, Architecture::Parallel, style, "t").unwrap();
            let layer = &files["rtl/t_l1.v"];
            assert!(layer.contains("assign acc1 = B1;"), "{style}:\n{layer}");
            check_fileset(&files).unwrap();
        }
    }

    #[test]
    fn multiplierless_styles_emit_no_multiply_operator() {
        let net = qa(
            Activation::Satlin,
            vec![vec![vec![7, 11], vec![28, -11]], vec![vec![5, 5]]],
            vec![vec![1, -2], vec![3]],
            3,
        );
        for style in [MultStyle::Cavm, MultStyle::Cmvm] {
            let files = emit_design(&net, Architecture::Parallel, style, "t").unwrap();
            for (name, text) in &files {
                assert!(!text.contains(" * "), "{style} leaked a multiply in {name}:\n{text}");
            }
            check_fileset(&files).unwrap();
        }
    }

    #[test]
    fn signed_activations_propagate_into_port_declarations() {
        let net = qa(
            Activation::Htanh,
            vec![vec![vec![3], vec![-3]], vec![vec![1, 2]]],
            vec![vec![0, 0], vec![0]],
            2,
        );
        let files =
            emit_design(&net, Architecture::Parallel, MultStyle::Behavioral, "t").unwrap();
        let l2 = &files["rtl/t_l2.v"];
        // Layer 2 consumes the signed codes of layer 1.
        assert!(l2.contains("input wire signed [7:0] i1"), "{l2}");
        assert!(l2.contains("assign xs1 = {i1[7], i1};"), "{l2}");
        let top = &files["rtl/t.v"];
        assert!(top.contains("output wire signed [7:0] y1"), "{top}");
        check_fileset(&files).unwrap();
    }
}
