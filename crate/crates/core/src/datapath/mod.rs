//! Per-bank digital datapath: adder tree, accumulators, SFUs, transpose unit
//! and the bank-level execution that ties them to the subarrays.

pub mod accumulator;
pub mod adder_tree;
pub mod bank;
pub mod sfu;
pub mod transpose;

pub use accumulator::AccumulatorState;
pub use adder_tree::{AdderTreeConfig, NodeMode};
pub use bank::{bank_execute, BankCost, BankOutput, LayerTensors};
pub use sfu::{BatchNormParams, MaxPoolUnit, QuantizeParams, SfuParams};
pub use transpose::TransposeBuffer;
