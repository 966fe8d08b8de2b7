//! Fixed-point formats, ceiling quantization, and canonical signed digit
//! (CSD) arithmetic.
//!
//! Weights are quantized to `q` fractional bits and biases to
//! `input_frac_bits + q` so that a bias can be added to an accumulator of
//! weight-by-input products without any alignment shift. All signed-digit
//! bookkeeping (digit counts, shiftability) used by the tuners and the
//! shift-add synthesizer lives here.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AnnModel, AnnStructure};

/// Errors raised while quantizing a model.
#[derive(Debug, Error)]
pub enum QuantizeError {
    #[error("weight {value} at layer {layer} is not finite")]
    NonFiniteWeight { layer: usize, value: f64 },
    #[error("fractional bit count {0} exceeds the supported maximum of 32")]
    FracBitsTooLarge(u32),
}

/// Bit layout shared by every stage of the flow.
///
/// Inputs are unsigned `input_bits`-wide codes with `input_frac_bits`
/// fractional bits, weights carry `q` fractional bits, and the accumulator
/// (hence every bias) carries `acc_frac_bits = input_frac_bits + q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedFormat {
    /// Width of the input/output codes at every layer boundary.
    pub input_bits: u32,
    /// Fractional bits of the input codes.
    pub input_frac_bits: u32,
    /// Fractional bits of the quantized weights.
    pub q: u32,
    /// Fractional bits of the accumulator and of the quantized biases.
    pub acc_frac_bits: u32,
}

impl FixedFormat {
    /// Format with 8-bit inputs in [0,1) and `q` fractional weight bits.
    pub fn with_q(q: u32) -> Self {
        FixedFormat {
            input_bits: 8,
            input_frac_bits: 8,
            q,
            acc_frac_bits: 8 + q,
        }
    }
}

/// Quantizes one real value to `frac_bits` fractional bits by taking the
/// ceiling of the scaled value.
///
/// The ceiling is the mathematical one, so negative values move toward zero:
/// `quantize_value(-0.3, 3) == -2`.
pub fn quantize_value(w: f64, frac_bits: u32) -> i64 {
    (w * (1u64 << frac_bits) as f64).ceil() as i64
}

/// A network with integer weights and biases at a fixed format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedAnn {
    pub structure: AnnStructure,
    pub format: FixedFormat,
    /// `weights[layer][neuron][input]`, at `format.q` fractional bits.
    pub weights: Vec<Vec<Vec<i64>>>,
    /// `biases[layer][neuron]`, at `format.acc_frac_bits` fractional bits.
    pub biases: Vec<Vec<i64>>,
}

impl QuantizedAnn {
    /// Smallest two's-complement width that holds every weight of `layer`.
    pub fn weight_width(&self, layer: usize) -> u32 {
        self.weights[layer]
            .iter()
            .flatten()
            .map(|&w| signed_width(w))
            .max()
            .unwrap_or(1)
    }
}

/// Quantizes every weight to `q` fractional bits and every bias to the
/// accumulator scale `fmt.input_frac_bits + q`.
pub fn quantize_model(model: &AnnModel, q: u32, input_bits: u32, input_frac_bits: u32) -> Result<QuantizedAnn, QuantizeError> {
    if input_frac_bits + q > 32 {
        return Err(QuantizeError::FracBitsTooLarge(input_frac_bits + q));
    }
    let fmt = FixedFormat {
        input_bits,
        input_frac_bits,
        q,
        acc_frac_bits: input_frac_bits + q,
    };
    let mut weights = Vec::with_capacity(model.weights.len());
    for (k, matrix) in model.weights.iter().enumerate() {
        let mut rows = Vec::with_capacity(matrix.len());
        for row in matrix {
            for &w in row {
                if !w.is_finite() {
                    return Err(QuantizeError::NonFiniteWeight { layer: k + 1, value: w });
                }
            }
            rows.push(row.iter().map(|&w| quantize_value(w, q)).collect());
        }
        weights.push(rows);
    }
    let mut biases = Vec::with_capacity(model.biases.len());
    for (k, row) in model.biases.iter().enumerate() {
        for &b in row {
            if !b.is_finite() {
                return Err(QuantizeError::NonFiniteWeight { layer: k + 1, value: b });
            }
        }
        biases.push(row.iter().map(|&b| quantize_value(b, fmt.acc_frac_bits)).collect());
    }
    Ok(QuantizedAnn {
        structure: model.structure.clone(),
        format: fmt,
        weights,
        biases,
    })
}

/// Canonical signed digit form of an integer: digits in {-1, 0, +1} stored
/// least significant first, with no two adjacent nonzero digits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsdForm {
    /// Digit at index `i` weighs `2^i`.
    pub digits: Vec<i8>,
    /// The encoded value.
    pub value: i64,
}

/// Encodes `v` in canonical signed digit form.
///
/// The form of a negative value is the digit-wise negation of the form of its
/// magnitude, so digit counts are symmetric around zero.
pub fn to_csd(v: i64) -> CsdForm {
    let mut digits = Vec::new();
    let mut m = v.unsigned_abs();
    while m != 0 {
        if m & 1 == 1 {
            // Choose the digit that leaves the remainder divisible by 4,
            // which is what forbids adjacent nonzero digits.
            let d: i8 = if m & 3 == 1 { 1 } else { -1 };
            digits.push(d);
            m = if d == 1 { m - 1 } else { m + 1 };
        } else {
            digits.push(0);
        }
        m >>= 1;
    }
    if v < 0 {
        for d in &mut digits {
            *d = -*d;
        }
    }
    CsdForm { digits, value: v }
}

/// Decodes a signed digit form back to the integer it represents.
pub fn from_csd(form: &CsdForm) -> i64 {
    form.digits
        .iter()
        .enumerate()
        .map(|(i, &d)| i64::from(d) << i)
        .sum()
}

/// Number of nonzero digits in the canonical signed digit form of `v`.
pub fn nonzero_digits(v: i64) -> u32 {
    to_csd(v).digits.iter().filter(|&&d| d != 0).count() as u32
}

/// Largest `k` such that `v` is divisible by `2^k` (the two-adic valuation).
///
/// Odd values return 0. `v` must be nonzero: zero is divisible by every
/// power of two.
pub fn largest_left_shift(v: i64) -> u32 {
    assert!(v != 0, "largest_left_shift is undefined for zero");
    v.unsigned_abs().trailing_zeros()
}

/// Minimum [`largest_left_shift`] over the nonzero entries of a group.
///
/// Zero entries are skipped; a group with no nonzero entry has no bounded
/// shiftability and returns `None`.
pub fn smallest_left_shift(group: &[i64]) -> Option<u32> {
    group
        .iter()
        .filter(|&&v| v != 0)
        .map(|&v| largest_left_shift(v))
        .min()
}

/// Bits needed for the magnitude of `v` (0 for zero).
pub fn magnitude_bits(v: i64) -> u32 {
    64 - v.unsigned_abs().leading_zeros()
}

/// Smallest two's-complement width that represents `v`.
pub fn signed_width(v: i64) -> u32 {
    for bits in 1..=63u32 {
        let lo = -(1i64 << (bits - 1));
        let hi = (1i64 << (bits - 1)) - 1;
        if v >= lo && v <= hi {
            return bits;
        }
    }
    64
}

/// Total nonzero signed digits over all integer weights and biases.
///
/// This is the principal cost proxy of the flow: under a parallel
/// architecture each nonzero digit is roughly one adder input.
pub fn model_tnzd(qa: &QuantizedAnn) -> u64 {
    let weight_digits: u64 = qa
        .weights
        .iter()
        .flatten()
        .flatten()
        .map(|&w| u64::from(nonzero_digits(w)))
        .sum();
    let bias_digits: u64 = qa
        .biases
        .iter()
        .flatten()
        .map(|&b| u64::from(nonzero_digits(b)))
        .sum();
    weight_digits + bias_digits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, LayerSpec};
    use proptest::prelude::*;

    /// Reference ceiling oracle built on exact rational comparison instead of
    /// floating-point `ceil`.
    fn ceil_oracle(w: f64, frac_bits: u32) -> i64 {
        let scaled = w * (1u64 << frac_bits) as f64;
        let mut c = scaled as i64;
        while (c as f64) < scaled {
            c += 1;
        }
        while (c as f64) - 1.0 >= scaled {
            c -= 1;
        }
        c
    }

    /// Minimum nonzero-digit count over every signed-digit representation of
    /// every value reachable with `len` digits, by full enumeration.
    fn exhaustive_min_digits(len: u32) -> std::collections::HashMap<i64, u32> {
        let mut best = std::collections::HashMap::new();
        let total = 3u64.pow(len);
        for code in 0..total {
            let mut c = code;
            let mut value = 0i64;
            let mut nz = 0u32;
            for pos in 0..len {
                let d = (c % 3) as i64 - 1;
                c /= 3;
                value += d << pos;
                if d != 0 {
                    nz += 1;
                }
            }
            best.entry(value)
                .and_modify(|b: &mut u32| *b = (*b).min(nz))
                .or_insert(nz);
        }
        best
    }

    #[test]
    fn quantize_rounds_toward_positive_infinity() {
        assert_eq!(quantize_value(0.75, 2), 3);
        assert_eq!(quantize_value(0.3, 3), 3); // 2.4 -> 3
        assert_eq!(quantize_value(-0.3, 3), -2); // -2.4 -> -2
        assert_eq!(quantize_value(0.0, 8), 0);
        assert_eq!(quantize_value(1.0, 4), 16);
    }

    #[test]
    fn bias_quantization_uses_accumulator_scale() {
        // q = 4 with 8 input fractional bits puts biases at 12 fractional
        // bits: 0.5 becomes 2048.
        assert_eq!(quantize_value(0.5, 8 + 4), 2048);
    }

    proptest! {
        #[test]
        fn quantize_matches_ceiling_oracle(w in -1000.0f64..1000.0, frac in 0u32..16) {
            prop_assert_eq!(quantize_value(w, frac), ceil_oracle(w, frac));
        }

        #[test]
        fn ceiling_residual_is_in_unit_interval(w in -1000.0f64..1000.0, frac in 0u32..16) {
            let residual = quantize_value(w, frac) as f64 - w * (1u64 << frac) as f64;
            prop_assert!((0.0..1.0).contains(&residual));
        }
    }

    #[test]
    fn csd_of_zero_is_empty() {
        let form = to_csd(0);
        assert!(form.digits.is_empty());
        assert_eq!(from_csd(&form), 0);
        assert_eq!(nonzero_digits(0), 0);
    }

    #[test]
    fn csd_examples() {
        // 11 = 16 - 4 - 1.
        let form = to_csd(11);
        assert_eq!(form.digits, vec![-1, 0, -1, 0, 1]);
        assert_eq!(nonzero_digits(11), 3);
        // 3 = 4 - 1.
        assert_eq!(to_csd(3).digits, vec![-1, 0, 1]);
        assert_eq!(nonzero_digits(3), 2);
        // Powers of two keep a single digit.
        assert_eq!(nonzero_digits(8), 1);
    }

    #[test]
    fn csd_of_negative_is_digitwise_negation() {
        for v in 1..=512i64 {
            let pos = to_csd(v);
            let neg = to_csd(-v);
            let negated: Vec<i8> = pos.digits.iter().map(|&d| -d).collect();
            assert_eq!(neg.digits, negated, "CSD(-{v})");
        }
    }

    #[test]
    fn csd_round_trips_and_has_no_adjacent_nonzeros() {
        for v in -(1i64 << 15)..=(1i64 << 15) {
            let form = to_csd(v);
            assert_eq!(from_csd(&form), v, "round trip of {v}");
            for pair in form.digits.windows(2) {
                assert!(
                    pair[0] == 0 || pair[1] == 0,
                    "adjacent nonzero digits in CSD({v})"
                );
            }
        }
    }

    #[test]
    fn csd_digit_count_is_minimal() {
        // Compare against a full enumeration of signed-digit strings. 11
        // digits cover every |v| < 1024 with room for the +1 digit CSD may
        // spill into.
        let oracle = exhaustive_min_digits(11);
        for v in -1023..=1023i64 {
            assert_eq!(
                nonzero_digits(v),
                oracle[&v],
                "digit count of {v} is not minimal"
            );
        }
    }

    #[test]
    fn left_shift_examples() {
        assert_eq!(largest_left_shift(24), 3);
        assert_eq!(largest_left_shift(26), 1);
        assert_eq!(largest_left_shift(-20), 2);
        assert_eq!(smallest_left_shift(&[20, 24, 26]), Some(1));
        assert_eq!(smallest_left_shift(&[8, 16]), Some(3));
        assert_eq!(smallest_left_shift(&[0, 12]), Some(2));
        assert_eq!(smallest_left_shift(&[0, 0]), None);
    }

    #[test]
    fn largest_left_shift_factors_out_exactly() {
        for v in 1..=4096i64 {
            for v in [v, -v] {
                let k = largest_left_shift(v);
                let odd = v >> k;
                assert_eq!(odd << k, v);
                assert_eq!(odd & 1, 1, "quotient of {v} by 2^{k} must be odd");
            }
        }
    }

    #[test]
    fn signed_width_covers_two_complement_edges() {
        assert_eq!(signed_width(0), 1);
        assert_eq!(signed_width(1), 2);
        assert_eq!(signed_width(-1), 1);
        assert_eq!(signed_width(-4), 3);
        assert_eq!(signed_width(4), 4);
        assert_eq!(signed_width(127), 8);
        assert_eq!(signed_width(-128), 8);
    }

    fn single_neuron_qa(weights: Vec<i64>, bias: i64) -> QuantizedAnn {
        QuantizedAnn {
            structure: AnnStructure {
                num_inputs: weights.len(),
                layers: vec![LayerSpec {
                    neurons: 1,
                    activation: Activation::Lin,
                }],
            },
            format: FixedFormat::with_q(4),
            weights: vec![vec![weights]],
            biases: vec![vec![bias]],
        }
    }

    #[test]
    fn tnzd_counts_weights_and_biases() {
        // 11 has 3 digits, 3 has 2: a weight of 11 and bias of 3 total 5.
        assert_eq!(model_tnzd(&single_neuron_qa(vec![11], 3)), 5);
        // Weights {5, 13} with a zero bias: 2 + 3 + 0.
        assert_eq!(model_tnzd(&single_neuron_qa(vec![5, 13], 0)), 5);
    }

    #[test]
    fn weight_width_tracks_largest_magnitude() {
        let qa = single_neuron_qa(vec![20, -24, 26], 0);
        assert_eq!(qa.weight_width(0), 6); // 26 needs 6 signed bits
    }
}
