//! End-to-end driver: map, optionally execute every layer bit-exactly against
//! the reference, and model latency.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::area::{area_power_report, energy_estimate};
use crate::datapath::bank::{bank_execute, LayerTensors};
use crate::datapath::sfu::{QuantizeParams, SfuParams};
use crate::error::{Error, Result};
use crate::mapper::{map_network, validate_plan, MapperConfig, MappingPlan};
use crate::network::NetworkDescription;
use crate::reference::reference_layer;
use crate::report::{FunctionalLayer, FunctionalReport, LatencyReport, LayerLatencyRow, PlanLayerSummary, RunReport};
use crate::subarray::{Precision, RowLayout, SubarrayState};
use crate::timing::{layer_latency, multiply_trace, ns, pipeline_schedule, residual_overhead, LayerTiming, PipelineSchedule, TimingParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Functional,
    Timing,
    Both,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Functional => "functional",
            Mode::Timing => "timing",
            Mode::Both => "both",
        }
    }

    fn functional(self) -> bool {
        self != Mode::Timing
    }

    fn timing(self) -> bool {
        self != Mode::Functional
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "functional" => Ok(Mode::Functional),
            "timing" => Ok(Mode::Timing),
            "both" => Ok(Mode::Both),
            other => Err(Error::Parse(format!("unknown mode `{other}` (functional, timing, both)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subarray_rows: usize,
    /// Columns per subarray; also the mapper's column_size.
    pub subarray_cols: usize,
    pub subarrays_per_bank: usize,
    pub banks: usize,
    pub timing: TimingParams,
    pub mode: Mode,
    pub seed: u64,
    pub images: u64,
}

impl Default for RunConfig {
    /// Desk scale: 256x256 subarrays.
    fn default() -> Self {
        RunConfig {
            subarray_rows: 256,
            subarray_cols: 256,
            subarrays_per_bank: 1 << 20,
            banks: 32,
            timing: TimingParams::default(),
            mode: Mode::Both,
            seed: 1,
            images: 1,
        }
    }
}

impl RunConfig {
    /// Full-size 4096x4096 subarrays.
    pub fn full_scale() -> Self {
        RunConfig { subarray_rows: 4096, subarray_cols: 4096, ..RunConfig::default() }
    }

    pub fn mapper_config(&self, n: Precision) -> Result<MapperConfig> {
        if self.subarray_rows == 0 || self.subarray_cols == 0 || self.subarrays_per_bank == 0 || self.banks == 0 {
            return Err(Error::Config("subarray and bank dimensions must be positive".into()));
        }
        let probe = SubarrayState::new(self.subarray_rows, 1, n)?;
        Ok(MapperConfig {
            column_size: self.subarray_cols,
            subarrays_per_bank: self.subarrays_per_bank,
            banks: self.banks,
            pair_slots: probe.layout().pair_slots(),
        })
    }
}

/// Seeded synthetic activations and weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    pub input: Vec<u64>,
    pub layers: Vec<LayerTensors>,
}

fn bit_len(v: u128) -> u32 {
    128 - v.leading_zeros()
}

/// Uniform `n`-bit tensors; each layer's quantize shift brings a typical
/// MAC to the middle of the `n`-bit range.
pub fn synthetic_workload(net: &NetworkDescription, seed: u64) -> Workload {
    let n = net.precision;
    let max = n.max_operand();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input_len = net.layers.first().map_or(0, |l| l.input_elements());
    let input = (0..input_len).map(|_| rng.gen_range(0..=max)).collect();
    let layers = net
        .layers
        .iter()
        .map(|l| {
            let count = l.outputs_per_position() * l.mac_size();
            let weights = (0..count).map(|_| rng.gen_range(0..=max)).collect();
            let typical = l.mac_size() as u128 * u128::from(max) * u128::from(max) / 4;
            let shift = (bit_len(typical) + 1).saturating_sub(n.bits());
            LayerTensors {
                weights,
                sfu: SfuParams { batchnorm: Vec::new(), quantize: QuantizeParams { shift, bits: n.bits() } },
            }
        })
        .collect();
    Workload { input, layers }
}

/// Element-wise `a + b` in a reserved-bank subarray with the majority adder,
/// saturated back to `n` bits. Returns the sums and the add's AAP count per
/// subarray chunk.
pub fn residual_add(a: &[u64], b: &[u64], n: Precision, cols: usize) -> Result<(Vec<u64>, u64)> {
    if a.len() != b.len() {
        return Err(Error::Shape { expected: a.len(), actual: b.len() });
    }
    let bits = n.bits() as usize;
    let rows = RowLayout::min_rows(n) + 3 * bits + 1;
    let mut out = Vec::with_capacity(a.len());
    let mut aap = 0;
    for (ca, cb) in a.chunks(cols).zip(b.chunks(cols)) {
        let mut sa = SubarrayState::new(rows, ca.len(), n)?;
        let base = sa.layout().data_start;
        let a_rows: Vec<usize> = (base..base + bits).collect();
        let b_rows: Vec<usize> = (base + bits..base + 2 * bits).collect();
        let s_rows: Vec<usize> = (base + 2 * bits..base + 3 * bits + 1).collect();
        for (col, (&x, &y)) in ca.iter().zip(cb).enumerate() {
            for j in 0..bits {
                sa.set_cell(a_rows[j], col, (x >> j) & 1 == 1);
                sa.set_cell(b_rows[j], col, (y >> j) & 1 == 1);
            }
        }
        aap = sa.add_bitserial(&a_rows, &b_rows, &s_rows)?.total_aap;
        for col in 0..ca.len() {
            let sum = s_rows.iter().enumerate().fold(0u64, |acc, (j, &r)| acc | (u64::from(sa.cell(r, col)) << j));
            out.push(sum.min(n.max_operand()));
        }
    }
    Ok((out, aap))
}

fn plan_summary(net: &NetworkDescription, plan: &MappingPlan) -> Vec<PlanLayerSummary> {
    plan.layers
        .iter()
        .zip(&net.layers)
        .map(|(p, l)| PlanLayerSummary {
            layer: p.layer,
            name: l.name.clone(),
            bank: p.bank,
            k: p.k,
            mac_size: p.mac_size,
            total_macs: p.total_macs,
            subarrays: p.subarrays_used(),
            max_pair_depth: p.max_pair_depth(),
            padding_columns: p.padding_columns,
        })
        .collect()
}

/// Executes every layer in its bank and checks it against the reference.
pub fn run_functional(net: &NetworkDescription, plan: &MappingPlan, cfg: &RunConfig, work: &Workload) -> Result<FunctionalReport> {
    net.validate_chaining()?;
    let n = net.precision;
    let mut x = work.input.clone();
    let mut inputs: Vec<Vec<u64>> = Vec::with_capacity(net.layers.len());
    let mut layers = Vec::with_capacity(net.layers.len());
    let mut residual_adds = 0;
    for (i, ((layer, lp), tensors)) in net.layers.iter().zip(&plan.layers).zip(&work.layers).enumerate() {
        inputs.push(x.clone());
        let out = bank_execute(layer, lp, n, cfg.subarray_rows, cfg.subarray_cols, &x, tensors)?;
        let expected = reference_layer(layer, &x, &tensors.weights, &tensors.sfu)?;
        check(i, &out.outputs, &expected)?;
        let mut y = out.outputs;
        for edge in net.residuals.iter().filter(|e| e.to_layer == i) {
            let shortcut = &inputs[edge.from_layer];
            let (sum, _) = residual_add(shortcut, &y, n, cfg.subarray_cols)?;
            let expected: Vec<u64> = shortcut.iter().zip(&y).map(|(a, b)| (a + b).min(n.max_operand())).collect();
            check(i, &sum, &expected)?;
            y = sum;
            residual_adds += 1;
        }
        layers.push(FunctionalLayer {
            layer: i,
            name: layer.name.clone(),
            outputs: y.len(),
            multiply_aap: out.cost.multiply_aap,
            subarray_aap: out.cost.total_subarray_aap,
            plane_reads: out.cost.plane_reads,
            tree_passes: out.cost.tree_passes,
            matches_oracle: true,
        });
        x = y;
    }
    Ok(FunctionalReport { layers, residual_adds, final_output: x, status: "PASS".into() })
}

fn check(layer: usize, got: &[u64], expected: &[u64]) -> Result<()> {
    if got.len() != expected.len() {
        return Err(Error::Shape { expected: expected.len(), actual: got.len() });
    }
    match got.iter().zip(expected).position(|(a, b)| a != b) {
        Some(index) => Err(Error::OracleMismatch {
            layer,
            index,
            simulated: got[index] as i64,
            expected: expected[index] as i64,
        }),
        None => Ok(()),
    }
}

/// Per-layer timings and the pipeline schedule.
pub fn network_timing(net: &NetworkDescription, plan: &MappingPlan, params: &TimingParams, images: u64) -> Result<(Vec<LayerTiming>, u64, PipelineSchedule)> {
    let n = net.precision;
    let trace = multiply_trace(n)?;
    let column_size = plan.config.column_size;
    let timings = plan
        .layers
        .iter()
        .zip(&net.layers)
        .map(|(p, l)| layer_latency(p, l, n, column_size, &trace, params))
        .collect::<Result<Vec<_>>>()?;
    let residual = residual_overhead(&plan.reserved, n, column_size, params);
    let compute: Vec<u64> = timings.iter().map(LayerTiming::compute).collect();
    let transfer: Vec<u64> = timings.iter().map(|t| t.transfer).collect();
    let sched = pipeline_schedule(&compute, &transfer, residual, images)?;
    Ok((timings, residual, sched))
}

pub fn latency_report(net: &NetworkDescription, plan: &MappingPlan, params: &TimingParams, images: u64) -> Result<LatencyReport> {
    let (timings, residual, sched) = network_timing(net, plan, params, images)?;
    let reduce: u64 = timings.iter().map(|t| t.reduce).sum();
    let sfu: u64 = timings.iter().map(|t| t.sfu).sum();
    Ok(LatencyReport {
        layers: timings.iter().map(LayerLatencyRow::from).collect(),
        residual_ns: ns(residual),
        pipeline: (&sched).into(),
        total_aap: timings.iter().map(|t| t.aap_count).sum(),
        footprint_bits: timings.iter().map(|t| t.footprint_bits).sum(),
        occupied_bits: timings.iter().map(|t| t.occupied_bits).sum(),
        padding_columns: timings.iter().map(|t| t.padding_columns).sum(),
        energy: energy_estimate(&area_power_report(), ns(reduce), ns(sfu)),
    })
}

pub fn map_and_validate(net: &NetworkDescription, cfg: &RunConfig) -> Result<MappingPlan> {
    let plan = map_network(net, &cfg.mapper_config(net.precision)?)?;
    if let Some(v) = validate_plan(&plan, net).first() {
        return Err(Error::Validation(v.to_string()));
    }
    Ok(plan)
}

pub fn run(net: &NetworkDescription, cfg: &RunConfig) -> Result<RunReport> {
    cfg.timing.validate()?;
    let plan = map_and_validate(net, cfg)?;
    let functional = if cfg.mode.functional() {
        let work = synthetic_workload(net, cfg.seed);
        Some(run_functional(net, &plan, cfg, &work)?)
    } else {
        None
    };
    let latency = if cfg.mode.timing() {
        Some(latency_report(net, &plan, &cfg.timing, cfg.images)?)
    } else {
        None
    };
    if let (Some(f), Some(l)) = (&functional, &latency) {
        for (fl, tl) in f.layers.iter().zip(&l.layers) {
            if fl.multiply_aap != tl.aap_count || fl.plane_reads != tl.plane_reads || fl.tree_passes != tl.tree_passes {
                return Err(Error::Validation(format!(
                    "layer `{}`: functional run ({} AAP, {} plane reads) disagrees with timing model ({} AAP, {} plane reads)",
                    fl.name, fl.multiply_aap, fl.plane_reads, tl.aap_count, tl.plane_reads
                )));
            }
        }
    }
    Ok(RunReport {
        network: net.name.clone(),
        precision: net.precision.bits(),
        mode: cfg.mode.as_str().into(),
        seed: cfg.seed,
        plan: plan_summary(net, &plan),
        reserved_banks: plan.reserved.iter().map(|r| r.reserved_bank).collect(),
        functional,
        latency,
        area_power: area_power_report(),
        status: "PASS".into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: u32,
    pub multiply_ns: f64,
    pub total_ns: f64,
}

/// Full-pipeline latency at each precision, everything else fixed.
pub fn precision_sweep(net: &NetworkDescription, n_values: &[u32], cfg: &RunConfig) -> Result<Vec<SweepPoint>> {
    n_values
        .iter()
        .map(|&bits| {
            let net = net.clone().with_precision(Precision::new(bits)?);
            let plan = map_and_validate(&net, cfg)?;
            let (timings, _, sched) = network_timing(&net, &plan, &cfg.timing, cfg.images)?;
            Ok(SweepPoint {
                n: bits,
                multiply_ns: ns(timings.iter().map(|t| t.multiply).sum()),
                total_ns: ns(sched.total),
            })
        })
        .collect()
}
