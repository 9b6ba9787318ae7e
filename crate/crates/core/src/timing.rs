//! Latency model. Every duration is kept as an integer number of
//! femtoseconds so sums and pipeline differences are exact; reports convert
//! to nanoseconds at the edge.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cost::{add_aap_count, mul_aap_count};
use crate::error::{Error, Result};
use crate::mapper::{footprint_bits, LayerPlan, ReservedAssignment};
use crate::network::{LayerKind, LayerSpec};
use crate::subarray::{Precision, SubarrayState};
use crate::trace::TraceSummary;

pub type Femtos = u64;

pub fn fs(ns: f64) -> Femtos {
    (ns * 1e6).round() as Femtos
}

pub fn ns(t: Femtos) -> f64 {
    t as f64 / 1e6
}

/// Cycles per element for each logic unit after the accumulators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SfuCycles {
    pub relu: u32,
    pub batchnorm: u32,
    pub quantize: u32,
    pub pool: u32,
    pub transpose: u32,
}

impl Default for SfuCycles {
    fn default() -> Self {
        SfuCycles { relu: 1, batchnorm: 1, quantize: 1, pool: 1, transpose: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingParams {
    /// ns per ACTIVATE-ACTIVATE-PRECHARGE.
    pub t_aap: f64,
    /// ns to read one product bit-plane row into the adder tree.
    pub t_row_read: f64,
    /// ns per synthesized-logic cycle, before the DRAM process penalty.
    pub logic_clock: f64,
    pub tree_levels: u32,
    pub sfu_cycles: SfuCycles,
    /// ns per row moved between banks.
    pub t_rowclone_interbank: f64,
    /// Multiplier on every logic delay.
    pub dram_logic_penalty: f64,
}

impl Default for TimingParams {
    /// DDR3-1600: tRAS 35 ns + tRP 13.75 ns per AAP; an inter-bank row copy
    /// costs two of those.
    fn default() -> Self {
        TimingParams {
            t_aap: 48.75,
            t_row_read: 48.75,
            logic_clock: 1.25,
            tree_levels: 12,
            sfu_cycles: SfuCycles::default(),
            t_rowclone_interbank: 97.5,
            dram_logic_penalty: 1.215,
        }
    }
}

impl TimingParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("t_aap", self.t_aap),
            ("t_row_read", self.t_row_read),
            ("logic_clock", self.logic_clock),
            ("t_rowclone_interbank", self.t_rowclone_interbank),
            ("dram_logic_penalty", self.dram_logic_penalty),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let c = &self.sfu_cycles;
        if self.tree_levels == 0 || [c.relu, c.batchnorm, c.quantize, c.pool, c.transpose].contains(&0) {
            return Err(Error::Config("tree_levels and sfu_cycles must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let p: TimingParams = toml::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("timing parameters serialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Same parameters with the logic penalty switched off.
    pub fn without_penalty(self) -> Self {
        TimingParams { dram_logic_penalty: 1.0, ..self }
    }

    pub fn logic_cycle(&self) -> Femtos {
        fs(self.logic_clock * self.dram_logic_penalty)
    }

    pub fn aap(&self) -> Femtos {
        fs(self.t_aap)
    }
}

/// Trace of one multiply at precision `n`, produced by running it.
pub fn multiply_trace(n: Precision) -> Result<TraceSummary> {
    let mut sa = SubarrayState::new(crate::subarray::RowLayout::min_rows(n), 1, n)?;
    sa.multiply(0..1)
}

/// Phase breakdown of one layer in its bank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTiming {
    pub layer: usize,
    pub name: String,
    pub passes: u64,
    pub aap_per_pass: u64,
    pub aap_count: u64,
    pub multiply: Femtos,
    /// Activation reloads between stacked passes.
    pub load: Femtos,
    pub reduce: Femtos,
    pub sfu: Femtos,
    pub transpose: Femtos,
    pub transfer: Femtos,
    pub plane_reads: u64,
    pub tree_passes: u64,
    pub outputs: u64,
    pub footprint_bits: u64,
    pub occupied_bits: u64,
    pub padding_columns: u64,
}

impl LayerTiming {
    /// Time the bank is busy before its outbound transfer.
    pub fn compute(&self) -> Femtos {
        self.multiply + self.load + self.reduce + self.sfu + self.transpose
    }

    pub fn total(&self) -> Femtos {
        self.compute() + self.transfer
    }
}

/// Rows needed to hold `elements` values of `bits` bits in transposed layout.
pub fn transposed_rows(elements: u64, bits: u32, column_size: usize) -> u64 {
    elements.div_ceil(column_size as u64) * u64::from(bits)
}

/// Latency of one layer from its plan and the multiply trace.
pub fn layer_latency(
    plan: &LayerPlan,
    layer: &LayerSpec,
    n: Precision,
    column_size: usize,
    trace: &TraceSummary,
    params: &TimingParams,
) -> Result<LayerTiming> {
    params.validate()?;
    if plan.mac_size != layer.mac_size() {
        return Err(Error::Validation(format!(
            "plan for layer {} does not belong to `{}`",
            plan.layer, layer.name
        )));
    }
    let passes = plan.max_pair_depth() as u64;
    if passes > 0 && trace.total_aap == 0 {
        return Err(Error::Validation(format!("no multiply trace for layer `{}`", layer.name)));
    }
    let bits = n.bits();
    let logic = params.logic_cycle();
    let c = &params.sfu_cycles;

    let tree_passes: u64 = plan.tree_passes().iter().map(|&(_, p)| p as u64).sum();
    let plane_reads = tree_passes * u64::from(n.product_bits());
    let per_plane = fs(params.t_row_read).max(logic);
    let reduce = plane_reads * per_plane + tree_passes * u64::from(params.tree_levels) * logic;

    let macs = plan.total_macs;
    let (outputs, pool_inputs) = match &layer.kind {
        LayerKind::Conv(conv) => match conv.pool {
            Some(p) => (
                layer.output_elements() as u64,
                layer.output_elements() as u64 * (p.window * p.window) as u64,
            ),
            None => (macs, macs),
        },
        LayerKind::Linear(_) => (macs, macs),
    };
    let outputs = if macs == 0 { 0 } else { outputs };
    let pointwise = c.relu.max(c.batchnorm).max(c.quantize);
    let sfu_cycles = if macs == 0 {
        0
    } else {
        macs * u64::from(pointwise)
            + pool_inputs * u64::from(c.pool)
            + u64::from(c.relu + c.batchnorm + c.quantize)
    };
    let batches = outputs.div_ceil(crate::datapath::transpose::DEFAULT_ROWS as u64);
    let transpose_cycles = (outputs + batches * u64::from(bits)) * u64::from(c.transpose);
    let aap = params.aap();

    Ok(LayerTiming {
        layer: plan.layer,
        name: layer.name.clone(),
        passes,
        aap_per_pass: trace.total_aap,
        aap_count: passes * trace.total_aap,
        multiply: passes * trace.total_aap * aap,
        load: passes.saturating_sub(1) * u64::from(bits) * aap,
        reduce,
        sfu: sfu_cycles * logic,
        transpose: transpose_cycles * logic,
        transfer: transposed_rows(outputs, bits, column_size) * fs(params.t_rowclone_interbank),
        plane_reads,
        tree_passes,
        outputs,
        footprint_bits: footprint_bits(layer, bits),
        occupied_bits: plan.occupied_bits(bits),
        padding_columns: plan.padding_columns,
    })
}

/// Time spent on every skip connection: shortcut and branch output copied
/// into the reserved bank, added there, and the sum copied out.
pub fn residual_overhead(reserved: &[ReservedAssignment], n: Precision, column_size: usize, params: &TimingParams) -> Femtos {
    let t_rc = fs(params.t_rowclone_interbank);
    reserved
        .iter()
        .map(|r| {
            let rows = transposed_rows(r.elements as u64, n.bits(), column_size);
            3 * rows * t_rc + add_aap_count(n.bits()) * params.aap()
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occupancy {
    pub image: u64,
    pub bank: usize,
    pub start: Femtos,
    pub end: Femtos,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineSchedule {
    pub compute: Vec<Femtos>,
    pub transfer: Vec<Femtos>,
    pub residual: Femtos,
    pub images: u64,
    /// First image from entry to leaving the last bank.
    pub fill: Femtos,
    /// Interval between consecutive images.
    pub steady_state: Femtos,
    pub total: Femtos,
    pub occupancy: Vec<Occupancy>,
}

impl PipelineSchedule {
    /// Start of `image` in bank `bank`.
    pub fn start(&self, image: u64, bank: usize) -> Femtos {
        let prefix: Femtos = (0..bank).map(|b| self.compute[b] + self.transfer[b]).sum();
        image * self.steady_state + prefix
    }
}

/// Layer-per-bank pipeline. Each period every bank computes, then the banks
/// hand their outputs on one after another over the shared bus, so a new
/// image enters every `max(compute) + sum(transfer) + residual`.
pub fn pipeline_schedule(compute: &[Femtos], transfer: &[Femtos], residual: Femtos, images: u64) -> Result<PipelineSchedule> {
    if images < 1 {
        return Err(Error::Validation("at least one image is needed".into()));
    }
    if compute.len() != transfer.len() {
        return Err(Error::Shape { expected: compute.len(), actual: transfer.len() });
    }
    let bus: Femtos = transfer.iter().sum::<Femtos>() + residual;
    let steady_state = compute.iter().copied().max().unwrap_or(0) + bus;
    let fill = compute.iter().sum::<Femtos>() + bus;
    let mut sched = PipelineSchedule {
        compute: compute.to_vec(),
        transfer: transfer.to_vec(),
        residual,
        images,
        fill,
        steady_state,
        total: fill + (images - 1) * steady_state,
        occupancy: Vec::new(),
    };
    for i in 0..images {
        for (b, &c) in compute.iter().enumerate() {
            let start = sched.start(i, b);
            sched.occupancy.push(Occupancy { image: i, bank: b, start, end: start + c });
        }
    }
    Ok(sched)
}

/// Multiply-phase latency of one multiply pass at precision `n`.
pub fn multiply_phase(n: u32, params: &TimingParams) -> Femtos {
    mul_aap_count(n) * params.aap()
}
