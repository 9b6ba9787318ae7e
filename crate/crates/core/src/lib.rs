//! Bit-serial multiply/accumulate inside DRAM subarrays: a bit-exact
//! subarray model, the per-bank adder tree and SFU datapath, a layer mapper
//! and an analytical pipeline timing model.

pub mod area;
pub mod cost;
pub mod datapath;
pub mod error;
pub mod mapper;
pub mod network;
pub mod reference;
pub mod report;
pub mod runner;
pub mod subarray;
pub mod timing;
pub mod trace;

pub use error::{Error, Result};
pub use mapper::{map_network, validate_plan, MapperConfig, MappingPlan};
pub use network::{LayerSpec, NetworkDescription, Preset};
pub use subarray::{ComputeRow, Precision, RowLayout, SubarrayState};
pub use trace::{AapEvent, AapKind, AapTrace, TraceSummary};
