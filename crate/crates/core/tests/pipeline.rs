//! End-to-end checks of the command-line binary: every stage runs on the
//! bundled fixture, outputs are machine-parsable, reruns are idempotent,
//! report numbers can be re-derived from the artifacts, and failures exit
//! nonzero with a one-line JSON error.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use annsynth::fixedpoint::{model_tnzd, FixedFormat, QuantizedAnn};
use annsynth::inference::{accuracy_on_encoded, cycle_count, encode_dataset, Architecture};
use annsynth::model::{load_dataset, Activation, AnnStructure, LayerSpec};

fn model_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata/tiny_model.json")
}

fn data_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata/tiny_data.csv")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_annsynth"))
        .args(args)
        .output()
        .expect("binary spawns")
}

/// Parses the last stdout line as the stage's JSON summary.
fn summary(output: &Output) -> serde_json::Value {
    assert!(
        output.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    let line = stdout.lines().rev().find(|l| !l.trim().is_empty()).expect("stdout not empty");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("summary line {line:?}: {e}"))
}

fn path_arg(p: &Path) -> String {
    p.to_str().expect("utf-8 path").to_string()
}

#[test]
fn stages_chain_on_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = path_arg(dir.path());
    let model = path_arg(&model_path());
    let data = path_arg(&data_path());

    // The fixture weights are exact sixteenths, so the width search must
    // stop at five fractional bits at the latest.
    let quantize = summary(&run(&[
        "quantize", "--model", &model, "--data", &data, "--max-q", "16", "--out-dir", &out,
    ]));
    assert!(quantize["q"].as_u64().unwrap() <= 5, "q = {}", quantize["q"]);
    assert_eq!(quantize["exhausted"], serde_json::json!(false));
    assert_eq!(quantize["seed"], serde_json::json!(0));

    let quantized: QuantizedAnn = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("quantized.json")).unwrap(),
    )
    .unwrap();

    let tune = summary(&run(&[
        "tune",
        "--net",
        &path_arg(&dir.path().join("quantized.json")),
        "--data",
        &data,
        "--arch",
        "parallel",
        "--out-dir",
        &out,
    ]));
    assert!(
        tune["tnzd_after"].as_u64().unwrap() < tune["tnzd_before"].as_u64().unwrap(),
        "tuning should cheapen the fixture: {tune}"
    );
    assert!(tune["final_ha"].as_f64().unwrap() >= tune["initial_ha"].as_f64().unwrap());

    let tuned_path = path_arg(&dir.path().join("tuned.json"));
    let tuned: QuantizedAnn =
        serde_json::from_str(&std::fs::read_to_string(&tuned_path).unwrap()).unwrap();
    assert_eq!(tuned.format.q, quantized.format.q);
    assert!(model_tnzd(&tuned) < model_tnzd(&quantized));

    let synth = summary(&run(&[
        "synth", "--net", &tuned_path, "--arch", "parallel", "--mult-style", "cmvm",
        "--out-dir", &out,
    ]));
    assert_eq!(synth["listings"], serde_json::json!(2));

    let emit = summary(&run(&[
        "emit", "--net", &tuned_path, "--data", &data, "--arch", "parallel", "--mult-style",
        "cmvm", "--top", "tiny", "--out-dir", &out,
    ]));
    assert!(emit["files"].as_u64().unwrap() >= 4);
    for file in ["rtl/tiny.v", "rtl/tiny_l1.v", "rtl/tiny_l2.v", "tb/tiny_tb.v", "scripts/synth.tcl"]
    {
        assert!(dir.path().join(file).is_file(), "{file} missing");
    }

    // The simulated accuracy must equal the bit-exact model run in-process.
    let simulate = summary(&run(&["simulate", "--net", &tuned_path, "--data", &data]));
    let dataset = load_dataset(&data_path()).unwrap();
    let oracle = accuracy_on_encoded(&tuned, &encode_dataset(&dataset, &tuned.format));
    assert_eq!(simulate["hardware_accuracy"].as_f64().unwrap(), oracle);
    assert_eq!(simulate["samples"], serde_json::json!(dataset.samples.len()));

    // Report numbers re-derive from the artifacts: the digit count from the
    // tuned network file, the operation count from the listings, the cycle
    // count from the structure.
    let report = summary(&run(&[
        "report", "--net", &tuned_path, "--arch", "parallel", "--mult-style", "cmvm",
        "--data", &data,
    ]));
    assert_eq!(report["tnzd"].as_u64().unwrap(), model_tnzd(&tuned));
    assert_eq!(
        report["cycles"].as_u64().unwrap(),
        cycle_count(Architecture::Parallel, &tuned.structure)
    );
    let listed_ops: usize = ["dags/l1.txt", "dags/l2.txt"]
        .iter()
        .map(|file| {
            std::fs::read_to_string(dir.path().join(file))
                .unwrap()
                .lines()
                .filter(|l| l.starts_with('t') && l.contains(" = "))
                .count()
        })
        .sum();
    assert_eq!(report["adders"].as_u64().unwrap() as usize, listed_ops);
    assert_eq!(report["hardware_accuracy"].as_f64().unwrap(), oracle);
}

#[test]
fn subcommands_are_idempotent() {
    let model = path_arg(&model_path());
    let data = path_arg(&data_path());
    let mut trees = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let out = path_arg(dir.path());
        summary(&run(&[
            "quantize", "--model", &model, "--data", &data, "--seed", "3", "--out-dir", &out,
        ]));
        summary(&run(&[
            "tune",
            "--net",
            &path_arg(&dir.path().join("quantized.json")),
            "--data",
            &data,
            "--arch",
            "smac_neuron",
            "--seed",
            "3",
            "--out-dir",
            &out,
        ]));
        trees.push((
            std::fs::read(dir.path().join("quantized.json")).unwrap(),
            std::fs::read(dir.path().join("tuned.json")).unwrap(),
        ));
    }
    assert_eq!(trees[0].0, trees[1].0, "quantize is not deterministic");
    assert_eq!(trees[0].1, trees[1].1, "tune is not deterministic");
}

#[test]
fn report_reproduces_the_published_operation_count() {
    // The 2x2 matrix whose shared synthesis needs exactly four operations.
    let net = QuantizedAnn {
        structure: AnnStructure {
            num_inputs: 2,
            layers: vec![LayerSpec { neurons: 2, activation: Activation::Relu }],
        },
        format: FixedFormat::with_q(4),
        weights: vec![vec![vec![11, 3], vec![5, 13]]],
        biases: vec![vec![0, 0]],
    };
    let dir = tempfile::tempdir().unwrap();
    let net_path = dir.path().join("net.json");
    std::fs::write(&net_path, serde_json::to_string_pretty(&net).unwrap()).unwrap();
    let report = summary(&run(&[
        "report", "--net", &path_arg(&net_path), "--arch", "parallel", "--mult-style", "cmvm",
    ]));
    assert_eq!(report["adders"], serde_json::json!(4));
    assert_eq!(report["q"], serde_json::json!(4));
}

#[test]
fn failures_exit_with_one_json_line() {
    let data = path_arg(&data_path());
    let cases: Vec<Vec<&str>> = vec![
        vec!["simulate", "--net", "/no/such/net.json", "--data", &data],
        vec!["quantize", "--model", "/no/such/model.json", "--data", &data],
    ];
    for args in cases {
        let output = run(&args);
        assert!(!output.status.success(), "{args:?} should fail");
        let stderr = String::from_utf8_lossy(&output.stderr);
        let lines: Vec<&str> = stderr.lines().filter(|l| !l.trim().is_empty()).collect();
        assert_eq!(lines.len(), 1, "expected one stderr line, got {stderr:?}");
        let parsed: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert!(parsed["error"].is_string(), "missing error field: {parsed}");
    }

    // An illegal architecture/style pairing is caught before any file is
    // written and is reported the same way.
    let dir = tempfile::tempdir().unwrap();
    let out = path_arg(dir.path());
    let model = path_arg(&model_path());
    summary(&run(&["quantize", "--model", &model, "--data", &data, "--out-dir", &out]));
    let output = run(&[
        "emit",
        "--net",
        &path_arg(&dir.path().join("quantized.json")),
        "--data",
        &data,
        "--arch",
        "smac_ann",
        "--mult-style",
        "cmvm",
        "--out-dir",
        &out,
    ]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    let parsed: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert!(
        parsed["error"].as_str().unwrap().contains("behavioral"),
        "the error should point at the legal alternative: {parsed}"
    );
    assert!(!dir.path().join("rtl").exists(), "no partial RTL on failure");
}
