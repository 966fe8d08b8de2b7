//! Fixed-point hardware synthesis for feedforward neural networks.
//!
//! This crate turns a trained fully-connected network (floating-point weights)
//! into synthesizable Verilog with integer-only arithmetic. The flow is:
//!
//! 1. [`model`] — ingest the network description and the labeled dataset.
//! 2. [`quantsearch`] — find the smallest weight quantization (fractional bits
//!    `q`) that preserves classification accuracy on a validation split.
//! 3. [`tuner`] — nudge the integer weights to cheaper values while the
//!    bit-exact hardware accuracy oracle ([`inference`]) allows it. The
//!    parallel tuner strips signed digits; the time-multiplexed tuner raises
//!    the group-wide shiftability of the weights.
//! 4. [`shiftadds`] — replace constant multiplications by shift-add networks:
//!    a digit-recoding baseline and a sharing optimizer over one or more
//!    constant-by-variable blocks.
//! 5. [`hdlgen`] — emit RTL, a self-checking testbench, and a synthesis
//!    script for one of three architectures: fully parallel, one
//!    multiply-accumulate unit per neuron, or a single unit for the whole
//!    network.
//!
//! [`inference`] doubles as the cost model: exact cycle counts and datapath
//! sizes per architecture. The [`cli`] module wires all stages into the
//! `annsynth` binary.
//!
//! Everything here is deterministic: identical inputs (including the RNG seed
//! used for dataset splits) produce byte-identical artifacts.

pub mod cli;
pub mod fixedpoint;
pub mod hdlgen;
pub mod inference;
pub mod model;
pub mod quantsearch;
pub mod shiftadds;
pub mod tuner;

pub use fixedpoint::{FixedFormat, QuantizedAnn};
pub use inference::Architecture;
pub use model::{Activation, AnnModel, AnnStructure, Dataset};
pub use shiftadds::MultStyle;
