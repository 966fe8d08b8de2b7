//! Single shared-MAC architecture: one multiplier and one adder serve the
//! whole network. A controller steps a phase counter through each neuron's
//! multiply cycles plus a bias cycle and a store cycle, a neuron counter
//! through each layer, and a layer counter through the network, while flat
//! indices address the weight and bias multiplexers. Layer values live in two
//! ping-pong banks of registers: a layer reads the bank its predecessor
//! wrote and fills the other one as its neurons complete.

use super::{
    counter_bits, render_activation, slit, ulit, EmitError, FileSet,
};
use crate::fixedpoint::{signed_width, QuantizedAnn};
use crate::inference::neuron_acc_bits;

/// Shape quantities shared by the three generated modules.
struct Geometry {
    num_layers: usize,
    /// Inputs per layer.
    iota: Vec<usize>,
    /// Neurons per layer.
    eta: Vec<usize>,
    /// Phase counter width; phase runs `0..=iota+1` per neuron.
    p: u32,
    /// Layer counter width.
    l: u32,
    /// Neuron counter width.
    n: u32,
    /// Flat weight index width.
    wi: u32,
    /// Flat bias index width.
    bi: u32,
    /// Shared accumulator width.
    a: u32,
    /// Weight multiplexer word width.
    ww: u32,
    /// Bias multiplexer word width.
    bw: u32,
    /// Entries per register bank.
    r: usize,
    /// Entries ever read as inputs (bounds the read multiplexer).
    max_iota: usize,
    /// Entries ever written as outputs (bounds the write multiplexer).
    max_eta: usize,
}

fn geometry(qa: &QuantizedAnn) -> Geometry {
    let num_layers = qa.structure.layers.len();
    let iota: Vec<usize> = (0..num_layers).map(|k| qa.structure.layer_inputs(k)).collect();
    let eta: Vec<usize> = qa.structure.layers.iter().map(|l| l.neurons).collect();
    let max_iota = *iota.iter().max().expect("at least one layer");
    let max_eta = *eta.iter().max().expect("at least one layer");
    let total_weights: usize = iota.iter().zip(&eta).map(|(i, e)| i * e).sum();
    let total_biases: usize = eta.iter().sum();
    let a = (0..num_layers)
        .flat_map(|k| (0..eta[k]).map(move |m| (k, m)))
        .map(|(k, m)| neuron_acc_bits(qa, k, m))
        .max()
        .expect("at least one neuron");
    let ww = qa
        .weights
        .iter()
        .flatten()
        .flatten()
        .map(|&w| signed_width(w))
        .max()
        .expect("at least one weight")
        .max(1);
    let bw = qa
        .biases
        .iter()
        .flatten()
        .map(|&b| signed_width(b))
        .max()
        .expect("at least one bias")
        .max(1);
    Geometry {
        num_layers,
        p: counter_bits(max_iota as u64 + 1),
        l: counter_bits(num_layers as u64 - 1),
        n: counter_bits(max_eta as u64 - 1),
        wi: counter_bits(total_weights as u64 - 1),
        bi: counter_bits(total_biases as u64 - 1),
        a,
        ww,
        bw,
        r: max_iota.max(max_eta),
        max_iota,
        max_eta,
        iota,
        eta,
    }
}

pub(super) fn emit(qa: &QuantizedAnn, top: &str) -> Result<FileSet, EmitError> {
    let g = geometry(qa);
    let mut files = FileSet::new();
    files.insert(format!("rtl/{top}_ctrl.v"), ctrl_module(&g, top));
    files.insert(format!("rtl/{top}_mac.v"), mac_module(qa, &g, top));
    files.insert(format!("rtl/{top}.v"), top_module(qa, &g, top));
    Ok(files)
}

fn ctrl_module(g: &Geometry, top: &str) -> String {
    let (p, l, n, wi, bi) = (g.p, g.l, g.n, g.wi, g.bi);
    let mut s = String::new();
    s.push_str(&format!("module {top}_ctrl (\n"));
    s.push_str("  input wire clk,\n");
    s.push_str("  input wire rst,\n");
    s.push_str("  input wire go,\n");
    s.push_str("  output wire busy,\n");
    s.push_str("  output wire done,\n");
    s.push_str("  output wire mul,\n");
    s.push_str("  output wire mul_first,\n");
    s.push_str("  output wire biasc,\n");
    s.push_str("  output wire store,\n");
    s.push_str(&format!("  output reg [{}:0] phase,\n", p - 1));
    s.push_str(&format!("  output reg [{}:0] lidx,\n", l - 1));
    s.push_str(&format!("  output reg [{}:0] nidx,\n", n - 1));
    s.push_str(&format!("  output reg [{}:0] widx,\n", wi - 1));
    s.push_str(&format!("  output reg [{}:0] bidx\n", bi - 1));
    s.push_str(");\n\n");

    s.push_str("  reg active;\n");
    s.push_str(&format!("  reg [{}:0] phase_last;\n", p - 1));
    s.push_str(&format!("  reg [{}:0] neuron_last;\n", n - 1));
    s.push_str("  always @* begin\n");
    s.push_str("    case (lidx)\n");
    for (k, &iota) in g.iota.iter().enumerate() {
        s.push_str(&format!("      {l}'d{k}: phase_last = {p}'d{};\n", iota + 1));
    }
    s.push_str(&format!("      default: phase_last = {p}'d{};\n", g.iota[0] + 1));
    s.push_str("    endcase\n");
    s.push_str("  end\n");
    s.push_str("  always @* begin\n");
    s.push_str("    case (lidx)\n");
    for (k, &eta) in g.eta.iter().enumerate() {
        s.push_str(&format!("      {l}'d{k}: neuron_last = {n}'d{};\n", eta - 1));
    }
    s.push_str(&format!("      default: neuron_last = {n}'d{};\n", g.eta[0] - 1));
    s.push_str("    endcase\n");
    s.push_str("  end\n\n");

    s.push_str("  assign busy = active;\n");
    s.push_str("  assign store = active && (phase == phase_last);\n");
    s.push_str(&format!(
        "  assign biasc = active && (phase == phase_last - {p}'d1);\n"
    ));
    s.push_str("  assign mul = active && !biasc && !store;\n");
    s.push_str(&format!("  assign mul_first = mul && (phase == {p}'d0);\n"));
    s.push_str(&format!(
        "  assign done = store && (lidx == {l}'d{}) && (nidx == neuron_last);\n",
        g.num_layers - 1
    ));
    s.push('\n');

    s.push_str("  always @(posedge clk) begin\n");
    s.push_str("    if (rst) begin\n");
    s.push_str("      active <= 1'b0;\n");
    s.push_str(&format!("      phase <= {p}'d0;\n"));
    s.push_str(&format!("      lidx <= {l}'d0;\n"));
    s.push_str(&format!("      nidx <= {n}'d0;\n"));
    s.push_str(&format!("      widx <= {wi}'d0;\n"));
    s.push_str(&format!("      bidx <= {bi}'d0;\n"));
    s.push_str("    end else if (go && !active) begin\n");
    s.push_str("      active <= 1'b1;\n");
    s.push_str(&format!("      phase <= {p}'d0;\n"));
    s.push_str(&format!("      lidx <= {l}'d0;\n"));
    s.push_str(&format!("      nidx <= {n}'d0;\n"));
    s.push_str(&format!("      widx <= {wi}'d0;\n"));
    s.push_str(&format!("      bidx <= {bi}'d0;\n"));
    s.push_str("    end else if (active) begin\n");
    s.push_str("      if (store) begin\n");
    s.push_str(&format!("        phase <= {p}'d0;\n"));
    s.push_str(&format!("        bidx <= bidx + {bi}'d1;\n"));
    s.push_str("        if (nidx == neuron_last) begin\n");
    s.push_str(&format!("          nidx <= {n}'d0;\n"));
    s.push_str(&format!("          if (lidx == {l}'d{}) begin\n", g.num_layers - 1));
    s.push_str("            active <= 1'b0;\n");
    s.push_str(&format!("            lidx <= {l}'d0;\n"));
    s.push_str("          end else begin\n");
    s.push_str(&format!("            lidx <= lidx + {l}'d1;\n"));
    s.push_str("          end\n");
    s.push_str("        end else begin\n");
    s.push_str(&format!("          nidx <= nidx + {n}'d1;\n"));
    s.push_str("        end\n");
    s.push_str("      end else begin\n");
    s.push_str(&format!("        phase <= phase + {p}'d1;\n"));
    s.push_str("        if (mul) begin\n");
    s.push_str(&format!("          widx <= widx + {wi}'d1;\n"));
    s.push_str("        end\n");
    s.push_str("      end\n");
    s.push_str("    end\n");
    s.push_str("  end\n");
    s.push_str("endmodule\n");
    s
}

fn mac_module(qa: &QuantizedAnn, g: &Geometry, top: &str) -> String {
    let fmt = &qa.format;
    let ib = fmt.input_bits;
    let (a, ww, bw) = (g.a, g.ww, g.bw);
    let mut s = String::new();
    s.push_str(&format!("module {top}_mac (\n"));
    s.push_str("  input wire clk,\n");
    s.push_str("  input wire rst,\n");
    s.push_str("  input wire mul,\n");
    s.push_str("  input wire mul_first,\n");
    s.push_str("  input wire biasc,\n");
    s.push_str(&format!("  input wire signed [{ib}:0] xsel,\n"));
    s.push_str(&format!("  input wire [{}:0] widx,\n", g.wi - 1));
    s.push_str(&format!("  input wire [{}:0] bidx,\n", g.bi - 1));
    s.push_str(&format!("  input wire [{}:0] lidx,\n", g.l - 1));
    s.push_str(&format!("  output wire [{}:0] zout\n", ib - 1));
    s.push_str(");\n\n");

    // Flat weight store, addressed in layer-major, neuron-major order.
    s.push_str(&format!("  reg signed [{}:0] wsel;\n", ww - 1));
    s.push_str("  always @* begin\n");
    s.push_str("    case (widx)\n");
    let mut flat = 0usize;
    for layer in &qa.weights {
        for row in layer {
            for &w in row {
                s.push_str(&format!("      {}'d{flat}: wsel = {};\n", g.wi, slit(ww, w)));
                flat += 1;
            }
        }
    }
    s.push_str(&format!("      default: wsel = {};\n", slit(ww, 0)));
    s.push_str("    endcase\n");
    s.push_str("  end\n\n");

    s.push_str(&format!("  reg signed [{}:0] bsel;\n", bw - 1));
    s.push_str("  always @* begin\n");
    s.push_str("    case (bidx)\n");
    let mut flat = 0usize;
    for layer in &qa.biases {
        for &b in layer {
            s.push_str(&format!("      {}'d{flat}: bsel = {};\n", g.bi, slit(bw, b)));
            flat += 1;
        }
    }
    s.push_str(&format!("      default: bsel = {};\n", slit(bw, 0)));
    s.push_str("    endcase\n");
    s.push_str("  end\n\n");

    s.push_str(&format!("  wire signed [{}:0] prod;\n", a - 1));
    s.push_str("  assign prod = xsel * wsel;\n");
    s.push_str(&format!("  reg signed [{}:0] acc;\n", a - 1));
    s.push_str("  always @(posedge clk) begin\n");
    s.push_str("    if (rst) begin\n");
    s.push_str(&format!("      acc <= {};\n", slit(a, 0)));
    s.push_str("    end else if (mul) begin\n");
    s.push_str("      acc <= mul_first ? prod : acc + prod;\n");
    s.push_str("    end else if (biasc) begin\n");
    s.push_str("      acc <= acc + bsel;\n");
    s.push_str("    end\n");
    s.push_str("  end\n\n");

    // One activation chain per layer; the layer counter picks the result.
    for (k, spec) in qa.structure.layers.iter().enumerate() {
        for line in render_activation(&format!("a{}_", k + 1), spec.activation, fmt, "acc", a)
        {
            s.push_str(&line);
            s.push('\n');
        }
    }
    s.push_str(&format!("  reg [{}:0] zsel;\n", ib - 1));
    s.push_str("  always @* begin\n");
    s.push_str("    case (lidx)\n");
    for k in 0..g.num_layers {
        s.push_str(&format!("      {}'d{k}: zsel = a{}_z;\n", g.l, k + 1));
    }
    s.push_str("      default: zsel = a1_z;\n");
    s.push_str("    endcase\n");
    s.push_str("  end\n");
    s.push_str("  assign zout = zsel;\n");
    s.push_str("endmodule\n");
    s
}

fn top_module(qa: &QuantizedAnn, g: &Geometry, top: &str) -> String {
    let ib = qa.format.input_bits;
    let num_inputs = qa.structure.num_inputs;
    let last = g.num_layers - 1;
    let num_outputs = g.eta[last];
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

    s.push_str("  wire busy;\n");
    s.push_str("  wire ctrl_done;\n");
    s.push_str("  wire mul;\n");
    s.push_str("  wire mul_first;\n");
    s.push_str("  wire biasc;\n");
    s.push_str("  wire store;\n");
    s.push_str(&format!("  wire [{}:0] phase;\n", g.p - 1));
    s.push_str(&format!("  wire [{}:0] lidx;\n", g.l - 1));
    s.push_str(&format!("  wire [{}:0] nidx;\n", g.n - 1));
    s.push_str(&format!("  wire [{}:0] widx;\n", g.wi - 1));
    s.push_str(&format!("  wire [{}:0] bidx;\n", g.bi - 1));
    s.push_str(&format!("  {top}_ctrl ctrl (\n"));
    s.push_str("    .clk(clk),\n");
    s.push_str("    .rst(rst),\n");
    s.push_str("    .go(start),\n");
    s.push_str("    .busy(busy),\n");
    s.push_str("    .done(ctrl_done),\n");
    s.push_str("    .mul(mul),\n");
    s.push_str("    .mul_first(mul_first),\n");
    s.push_str("    .biasc(biasc),\n");
    s.push_str("    .store(store),\n");
    s.push_str("    .phase(phase),\n");
    s.push_str("    .lidx(lidx),\n");
    s.push_str("    .nidx(nidx),\n");
    s.push_str("    .widx(widx),\n");
    s.push_str("    .bidx(bidx)\n");
    s.push_str("  );\n\n");

    // Ping-pong banks: even layer indices read bank 0 and write bank 1.
    for r in 0..g.r {
        s.push_str(&format!("  reg [{}:0] b0_{r};\n", ib - 1));
    }
    for r in 0..g.r {
        s.push_str(&format!("  reg [{}:0] b1_{r};\n", ib - 1));
    }
    s.push('\n');

    s.push_str(&format!("  reg [{}:0] xsel_raw;\n", ib - 1));
    s.push_str("  always @* begin\n");
    s.push_str("    if (lidx[0] == 1'b0) begin\n");
    s.push_str("      case (phase)\n");
    for r in 0..g.max_iota {
        s.push_str(&format!("        {}'d{r}: xsel_raw = b0_{r};\n", g.p));
    }
    s.push_str(&format!("        default: xsel_raw = {};\n", ulit(ib, 0)));
    s.push_str("      endcase\n");
    s.push_str("    end else begin\n");
    s.push_str("      case (phase)\n");
    for r in 0..g.max_iota {
        s.push_str(&format!("        {}'d{r}: xsel_raw = b1_{r};\n", g.p));
    }
    s.push_str(&format!("        default: xsel_raw = {};\n", ulit(ib, 0)));
    s.push_str("      endcase\n");
    s.push_str("    end\n");
    s.push_str("  end\n");

    // Codes entering layer k carry the signedness of layer k-1's activation.
    s.push_str(&format!("  reg signed [{ib}:0] xsel;\n"));
    s.push_str("  always @* begin\n");
    s.push_str("    case (lidx)\n");
    for k in 0..g.num_layers {
        let signed = super::layer_inputs_signed(qa, k);
        let ext = super::extend_code("xsel_raw", ib, signed);
        s.push_str(&format!("      {}'d{k}: xsel = {ext};\n", g.l));
    }
    s.push_str(&format!(
        "      default: xsel = {};\n",
        super::extend_code("xsel_raw", ib, false)
    ));
    s.push_str("    endcase\n");
    s.push_str("  end\n\n");

    s.push_str(&format!("  wire [{}:0] zout;\n", ib - 1));
    s.push_str(&format!("  {top}_mac mac (\n"));
    s.push_str("    .clk(clk),\n");
    s.push_str("    .rst(rst),\n");
    s.push_str("    .mul(mul),\n");
    s.push_str("    .mul_first(mul_first),\n");
    s.push_str("    .biasc(biasc),\n");
    s.push_str("    .xsel(xsel),\n");
    s.push_str("    .widx(widx),\n");
    s.push_str("    .bidx(bidx),\n");
    s.push_str("    .lidx(lidx),\n");
    s.push_str("    .zout(zout)\n");
    s.push_str("  );\n\n");

    s.push_str("  always @(posedge clk) begin\n");
    s.push_str("    if (rst) begin\n");
    for r in 0..g.r {
        s.push_str(&format!("      b0_{r} <= {};\n", ulit(ib, 0)));
    }
    for r in 0..g.r {
        s.push_str(&format!("      b1_{r} <= {};\n", ulit(ib, 0)));
    }
    s.push_str("    end else if (start && !busy) begin\n");
    for i in 0..num_inputs {
        s.push_str(&format!("      b0_{i} <= x{};\n", i + 1));
    }
    s.push_str("    end else if (busy && store) begin\n");
    s.push_str("      if (lidx[0] == 1'b0) begin\n");
    s.push_str("        case (nidx)\n");
    for r in 0..g.max_eta {
        s.push_str(&format!("          {}'d{r}: b1_{r} <= zout;\n", g.n));
    }
    s.push_str("          default: b1_0 <= zout;\n");
    s.push_str("        endcase\n");
    s.push_str("      end else begin\n");
    s.push_str("        case (nidx)\n");
    for r in 0..g.max_eta {
        s.push_str(&format!("          {}'d{r}: b0_{r} <= zout;\n", g.n));
    }
    s.push_str("          default: b0_0 <= zout;\n");
    s.push_str("        endcase\n");
    s.push_str("      end\n");
    s.push_str("    end\n");
    s.push_str("  end\n\n");

    s.push_str("  reg done_q;\n");
    s.push_str("  always @(posedge clk) begin\n");
    s.push_str("    if (rst) begin\n");
    s.push_str("      done_q <= 1'b0;\n");
    s.push_str("    end else if (start) begin\n");
    s.push_str("      done_q <= 1'b0;\n");
    s.push_str("    end else if (ctrl_done) begin\n");
    s.push_str("      done_q <= 1'b1;\n");
    s.push_str("    end\n");
    s.push_str("  end\n");
    s.push_str("  assign done = done_q;\n");
    let out_bank = g.num_layers % 2;
    for m in 0..num_outputs {
        s.push_str(&format!("  assign y{} = b{out_bank}_{m};\n", m + 1));
    }
    s.push_str("endmodule\n");
    s
}

#[cfg(test)]
mod tests {
    use super::super::{check_fileset, emit_design, MultStyle};
    use crate::fixedpoint::{FixedFormat, QuantizedAnn};
    use crate::inference::Architecture;
    use crate::model::{Activation, AnnStructure, LayerSpec};
    use crate::shiftadds::SynthError;

    fn qa(
        acts: Vec<Activation>,
        weights: Vec<Vec<Vec<i64>>>,
        biases: Vec<Vec<i64>>,
        q: u32,
    ) -> QuantizedAnn {
        let layers = weights
            .iter()
            .zip(&acts)
            .map(|(layer, &activation)| LayerSpec { neurons: layer.len(), activation })
            .collect();
        QuantizedAnn {
            structure: AnnStructure { num_inputs: weights[0][0].len(), layers },
            format: FixedFormat::with_q(q),
            weights,
            biases,
        }
    }

    #[test]
    fn shared_mac_design_is_three_modules_with_one_multiplier() {
        let net = qa(
            vec![Activation::Relu, Activation::Lin],
            vec![
                vec![vec![3, -2, 5], vec![1, 1, 1]],
                vec![vec![2, -4], vec![6, 0]],
            ],
            vec![vec![1, 0], vec![-3, 2]],
            3,
        );
        let files =
            emit_design(&net, Architecture::SmacAnn, MultStyle::Behavioral, "t").unwrap();
        assert_eq!(
            files.keys().collect::<Vec<_>>(),
            vec!["rtl/t.v", "rtl/t_ctrl.v", "rtl/t_mac.v"]
        );
        let mac = &files["rtl/t_mac.v"];
        assert_eq!(mac.matches(" * ").count(), 1, "{mac}");
        // Flat weight store: 6 + 4 weights, flat indices 0..=9, sized by the
        // widest weight (5 and 6 need four signed bits).
        assert!(mac.contains("4'd0: wsel = 4'sd3;"), "{mac}");
        assert!(mac.contains("4'd9: wsel = 4'sd0;"), "{mac}");
        // Both layers' activation chains are present and muxed.
        assert!(mac.contains("a1_z"), "{mac}");
        assert!(mac.contains("a2_z"), "{mac}");
        check_fileset(&files).unwrap();
    }

    #[test]
    fn ping_pong_banks_alternate_read_and_write_sides() {
        let net = qa(
            vec![Activation::Relu, Activation::Relu],
            vec![vec![vec![1, 2], vec![3, 4]], vec![vec![1, -1]]],
            vec![vec![0, 0], vec![0]],
            2,
        );
        let files =
            emit_design(&net, Architecture::SmacAnn, MultStyle::Behavioral, "t").unwrap();
        let top = &files["rtl/t.v"];
        // Even layer index: read bank 0, write bank 1.
        assert!(top.contains("xsel_raw = b0_0;"), "{top}");
        assert!(top.contains("b1_0 <= zout;"), "{top}");
        // Two layers: outputs come from bank 0.
        assert!(top.contains("assign y1 = b0_0;"), "{top}");
        check_fileset(&files).unwrap();
    }

    #[test]
    fn multiplierless_styles_are_rejected_for_the_shared_block() {
        let net = qa(
            vec![Activation::Relu],
            vec![vec![vec![3, 5]]],
            vec![vec![0]],
            2,
        );
        for style in [MultStyle::Cavm, MultStyle::Cmvm, MultStyle::Mcm] {
            let err = emit_design(&net, Architecture::SmacAnn, style, "t").unwrap_err();
            let text = err.to_string();
            assert!(
                matches!(
                    err,
                    super::super::EmitError::Synth(SynthError::IllegalCombination { .. })
                ),
                "{style}: {text}"
            );
            assert!(text.contains("use behavioral"), "{text}");
        }
    }
}
