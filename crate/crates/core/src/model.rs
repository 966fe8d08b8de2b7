//! Network and dataset ingestion.
//!
//! A network arrives as a JSON file carrying its structure (input count,
//! per-layer neuron counts and activations) next to row-major weight matrices
//! and bias vectors. A dataset arrives as CSV: one sample per line, feature
//! values in [0,1] followed by an integer class label; lines starting with
//! `#` are comments.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Errors raised while loading or validating models and datasets.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("layer {layer}: expected {expected} {what}, found {found}")]
    ShapeMismatch {
        layer: usize,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("model declares no layers")]
    NoLayers,
    #[error("line {line}: {reason}")]
    BadSample { line: usize, reason: String },
    #[error("malformed dataset: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset is empty")]
    EmptyDataset,
}

/// Activation applied by every neuron of a layer.
///
/// All five are the piecewise-linear activations that stay exact in integer
/// arithmetic; there is no smooth sigmoid/tanh in the hardware flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Hard sigmoid: clamp((y + 1) / 2, 0, 1).
    Hsig,
    /// Hard tanh: clamp(y, -1, 1).
    Htanh,
    /// Identity.
    Lin,
    /// max(0, y).
    Relu,
    /// clamp(y, 0, 1).
    Satlin,
}

impl Activation {
    /// True when the activation can go negative, which makes the layer's
    /// outputs signed codes.
    pub fn signed_output(self) -> bool {
        matches!(self, Activation::Htanh)
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Activation::Hsig => "hsig",
            Activation::Htanh => "htanh",
            Activation::Lin => "lin",
            Activation::Relu => "relu",
            Activation::Satlin => "satlin",
        };
        f.write_str(name)
    }
}

/// One layer: how many neurons and which activation they share.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub neurons: usize,
    pub activation: Activation,
}

/// Topology of a fully-connected feedforward network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnStructure {
    pub num_inputs: usize,
    pub layers: Vec<LayerSpec>,
}

impl AnnStructure {
    /// Number of inputs feeding `layer` (0-based).
    pub fn layer_inputs(&self, layer: usize) -> usize {
        if layer == 0 {
            self.num_inputs
        } else {
            self.layers[layer - 1].neurons
        }
    }

    /// Compact `16-10-10` style description of the hidden/output widths.
    pub fn shape_label(&self) -> String {
        let mut label = self.num_inputs.to_string();
        for layer in &self.layers {
            label.push('-');
            label.push_str(&layer.neurons.to_string());
        }
        label
    }
}

/// A trained network with real-valued weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnModel {
    pub structure: AnnStructure,
    /// `weights[layer][neuron][input]`.
    pub weights: Vec<Vec<Vec<f64>>>,
    /// `biases[layer][neuron]`.
    pub biases: Vec<Vec<f64>>,
}

impl AnnModel {
    /// Checks that weight matrices and bias vectors match the structure.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.structure.layers.is_empty() {
            return Err(ModelError::NoLayers);
        }
        let num_layers = self.structure.layers.len();
        if self.weights.len() != num_layers {
            return Err(ModelError::ShapeMismatch {
                layer: 0,
                what: "weight matrices",
                expected: num_layers,
                found: self.weights.len(),
            });
        }
        if self.biases.len() != num_layers {
            return Err(ModelError::ShapeMismatch {
                layer: 0,
                what: "bias vectors",
                expected: num_layers,
                found: self.biases.len(),
            });
        }
        for (k, spec) in self.structure.layers.iter().enumerate() {
            if self.weights[k].len() != spec.neurons {
                return Err(ModelError::ShapeMismatch {
                    layer: k + 1,
                    what: "weight rows",
                    expected: spec.neurons,
                    found: self.weights[k].len(),
                });
            }
            let inputs = self.structure.layer_inputs(k);
            for row in &self.weights[k] {
                if row.len() != inputs {
                    return Err(ModelError::ShapeMismatch {
                        layer: k + 1,
                        what: "weights per neuron",
                        expected: inputs,
                        found: row.len(),
                    });
                }
            }
            if self.biases[k].len() != spec.neurons {
                return Err(ModelError::ShapeMismatch {
                    layer: k + 1,
                    what: "biases",
                    expected: spec.neurons,
                    found: self.biases[k].len(),
                });
            }
        }
        Ok(())
    }
}

/// Loads and validates a network from its JSON description.
pub fn load_model(path: &Path) -> Result<AnnModel, ModelError> {
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let model: AnnModel = serde_json::from_str(&text)?;
    model.validate()?;
    Ok(model)
}

/// Serializes a network back to the JSON layout [`load_model`] reads.
pub fn save_model(model: &AnnModel, path: &Path) -> Result<(), ModelError> {
    let text = serde_json::to_string_pretty(model).expect("model serializes");
    fs::write(path, text).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// A labeled classification dataset with features already scaled to [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub num_features: usize,
    pub num_classes: usize,
    /// `(features, label)` pairs.
    pub samples: Vec<(Vec<f64>, usize)>,
}

/// Loads a CSV dataset: per line, `num_features` values in [0,1] then an
/// integer label. Lines starting with `#` are skipped.
///
/// Features must already be normalized; out-of-range values are rejected
/// rather than silently rescaled.
pub fn load_dataset(path: &Path) -> Result<Dataset, ModelError> {
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut samples = Vec::new();
    let mut num_features = None;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() < 2 {
            return Err(ModelError::BadSample {
                line,
                reason: "need at least one feature and a label".into(),
            });
        }
        let features_here = record.len() - 1;
        let expected = *num_features.get_or_insert(features_here);
        if features_here != expected {
            return Err(ModelError::BadSample {
                line,
                reason: format!("expected {expected} features, found {features_here}"),
            });
        }
        let mut features = Vec::with_capacity(features_here);
        for field in record.iter().take(features_here) {
            let value: f64 = field.parse().map_err(|_| ModelError::BadSample {
                line,
                reason: format!("feature {field:?} is not a number"),
            })?;
            if !(0.0..=1.0).contains(&value) {
                return Err(ModelError::BadSample {
                    line,
                    reason: format!("feature {value} is outside [0,1]"),
                });
            }
            features.push(value);
        }
        let label_field = &record[features_here];
        let label: usize = label_field.parse().map_err(|_| ModelError::BadSample {
            line,
            reason: format!("label {label_field:?} is not a non-negative integer"),
        })?;
        samples.push((features, label));
    }
    if samples.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let num_classes = samples.iter().map(|(_, label)| label + 1).max().unwrap();
    Ok(Dataset {
        num_features: num_features.unwrap(),
        num_classes,
        samples,
    })
}

/// Splits a dataset into `(train, validation)` with a seeded shuffle.
///
/// The validation part holds `round(fraction * len)` samples; together the
/// parts are a permutation of the input, and identical `(data, fraction,
/// seed)` always reproduce the identical split.
pub fn split_validation(data: &Dataset, fraction: f64, seed: u64) -> (Dataset, Dataset) {
    assert!((0.0..=1.0).contains(&fraction), "fraction must be in [0,1]");
    let mut indices: Vec<usize> = (0..data.samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let validation_len = (fraction * data.samples.len() as f64).round() as usize;
    let take = |selected: &[usize]| Dataset {
        num_features: data.num_features,
        num_classes: data.num_classes,
        samples: selected.iter().map(|&i| data.samples[i].clone()).collect(),
    };
    let validation = take(&indices[..validation_len]);
    let train = take(&indices[validation_len..]);
    (train, validation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn tiny_model() -> AnnModel {
        AnnModel {
            structure: AnnStructure {
                num_inputs: 2,
                layers: vec![
                    LayerSpec {
                        neurons: 2,
                        activation: Activation::Relu,
                    },
                    LayerSpec {
                        neurons: 3,
                        activation: Activation::Lin,
                    },
                ],
            },
            weights: vec![
                vec![vec![0.5, -0.25], vec![0.125, 1.0]],
                vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-0.5, 0.5]],
            ],
            biases: vec![vec![0.0, 0.125], vec![0.0, 0.0, 0.25]],
        }
    }

    #[test]
    fn model_round_trips_through_json() {
        let model = tiny_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, &path).unwrap();
        let reloaded = load_model(&path).unwrap();
        assert_eq!(model, reloaded);
    }

    #[test]
    fn shape_mismatch_names_the_layer() {
        let mut model = tiny_model();
        model.weights[1].pop();
        let err = model.validate().unwrap_err();
        let message = err.to_string();
        assert!(message.contains("layer 2"), "got: {message}");
    }

    #[test]
    fn dataset_skips_comments_and_counts_classes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let mut file = std::fs::File::create(&path).unwrap();
        writeln!(file, "# feature1, feature2, label").unwrap();
        writeln!(file, "0.0, 0.5, 0").unwrap();
        writeln!(file, "1.0, 0.25, 2").unwrap();
        drop(file);
        let data = load_dataset(&path).unwrap();
        assert_eq!(data.num_features, 2);
        assert_eq!(data.num_classes, 3);
        assert_eq!(data.samples.len(), 2);
        assert_eq!(data.samples[1], (vec![1.0, 0.25], 2));
    }

    #[test]
    fn dataset_rejects_out_of_range_features() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "0.2,1.5,0\n").unwrap();
        let err = load_dataset(&path).unwrap_err();
        assert!(err.to_string().contains("outside [0,1]"), "got: {err}");
    }

    fn synthetic_dataset(len: usize) -> Dataset {
        Dataset {
            num_features: 1,
            num_classes: 2,
            samples: (0..len).map(|i| (vec![i as f64 / len as f64], i % 2)).collect(),
        }
    }

    #[test]
    fn split_sizes_follow_rounding() {
        let (train, validation) = split_validation(&synthetic_dataset(10), 0.3, 7);
        assert_eq!(validation.samples.len(), 3);
        assert_eq!(train.samples.len(), 7);
        // The benchmark-sized case: 7494 samples at 30% -> 2248.
        let (train, validation) = split_validation(&synthetic_dataset(7494), 0.3, 0);
        assert_eq!(validation.samples.len(), 2248);
        assert_eq!(train.samples.len(), 7494 - 2248);
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let data = synthetic_dataset(50);
        let (train_a, val_a) = split_validation(&data, 0.3, 42);
        let (train_b, val_b) = split_validation(&data, 0.3, 42);
        assert_eq!(train_a, train_b);
        assert_eq!(val_a, val_b);
        let (_, val_c) = split_validation(&data, 0.3, 43);
        assert_ne!(val_a.samples, val_c.samples, "different seeds should shuffle differently");
    }

    proptest! {
        #[test]
        fn split_partitions_the_input(len in 1usize..200, fraction in 0.0f64..1.0, seed: u64) {
            let data = synthetic_dataset(len);
            let (train, validation) = split_validation(&data, fraction, seed);
            prop_assert_eq!(train.samples.len() + validation.samples.len(), len);
            let mut merged: Vec<_> = train.samples.iter().chain(&validation.samples).cloned().collect();
            let mut original = data.samples.clone();
            merged.sort_by(|a, b| a.partial_cmp(b).unwrap());
            original.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_assert_eq!(merged, original);
        }
    }
}
