//! One bank running one layer: operands are written into subarrays per the
//! plan, multiplied in place, reduced plane by plane through the adder tree,
//! accumulated, and passed through the SFU chain and the transpose unit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cost::mul_aap_count;
use crate::datapath::accumulator::AccumulatorState;
use crate::datapath::adder_tree::{assign_tree_passes, AdderTreeConfig};
use crate::datapath::sfu::{MaxPoolUnit, SfuParams};
use crate::datapath::transpose::{transpose_values, DEFAULT_ROWS};
use crate::error::{Error, Result};
use crate::mapper::{LayerPlan, Segment};
use crate::network::{LayerKind, LayerSpec};
use crate::reference::check_shapes;
use crate::subarray::{Precision, SubarrayState};

/// Weights and SFU constants of one layer. Weights are `[output][j]` with
/// `j` running over `(channel, ky, kx)` for conv and input neurons for linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTensors {
    pub weights: Vec<u64>,
    pub sfu: SfuParams,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankCost {
    /// Sequential multiply passes (stacked pair depths).
    pub passes: u64,
    /// AAPs on the critical path: one multiply per pass.
    pub multiply_aap: u64,
    /// AAPs summed over every subarray and pass.
    pub total_subarray_aap: u64,
    pub subarrays: u64,
    pub tree_passes: u64,
    pub plane_reads: u64,
    pub sfu_elements: u64,
    pub pool_inputs: u64,
    pub outputs: u64,
    pub transpose_batches: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankOutput {
    /// Accumulator results, `[output][position]`.
    pub macs: Vec<i64>,
    /// Activations after the SFU chain, rebuilt from the transposed planes.
    pub outputs: Vec<u64>,
    /// Bit-planes leaving the transpose unit; plane `j` holds bit `j`.
    pub planes: Vec<Vec<bool>>,
    pub cost: BankCost,
}

/// Activation and weight of multiplication `j` of MAC `mac_id` (1-based).
fn operands(layer: &LayerSpec, input: &[u64], weights: &[u64], mac_id: u64, j: usize) -> (u64, u64) {
    let per = layer.macs_per_output();
    let m = (mac_id - 1) as usize;
    let (o, pos) = (m / per, m % per);
    let w = weights[o * layer.mac_size() + j];
    let a = match &layer.kind {
        LayerKind::Linear(_) => input[j],
        LayerKind::Conv(c) => {
            let (oy, ox) = (pos / c.out_width(), pos % c.out_width());
            let ch = j / (c.kernel_h * c.kernel_w);
            let (ky, kx) = ((j / c.kernel_w) % c.kernel_h, j % c.kernel_w);
            let y = (oy * c.stride + ky) as isize - c.padding as isize;
            let x = (ox * c.stride + kx) as isize - c.padding as isize;
            if y < 0 || x < 0 || y >= c.height as isize || x >= c.width as isize {
                0
            } else {
                input[(ch * c.height + y as usize) * c.width + x as usize]
            }
        }
    };
    (a, w)
}

/// `(mac_id, first multiplication index)` of every tree group in a segment.
fn group_macs(s: &Segment, mac_size: usize) -> Vec<u64> {
    if s.is_piece(mac_size) {
        vec![s.mac_first]
    } else {
        (0..s.mac_count).map(|m| s.mac_first + m).collect()
    }
}

/// Executes `layer` in one bank made of `rows x cols` subarrays.
pub fn bank_execute(
    layer: &LayerSpec,
    plan: &LayerPlan,
    n: Precision,
    rows: usize,
    cols: usize,
    input: &[u64],
    tensors: &LayerTensors,
) -> Result<BankOutput> {
    check_shapes(layer, input, &tensors.weights)?;
    if plan.mac_size != layer.mac_size() || plan.total_macs != layer.total_macs() {
        return Err(Error::Validation(format!(
            "plan for layer {} has {} MACs of {} but `{}` needs {} of {}",
            plan.layer,
            plan.total_macs,
            plan.mac_size,
            layer.name,
            layer.total_macs(),
            layer.mac_size()
        )));
    }
    for v in input.iter().chain(&tensors.weights) {
        if *v > n.max_operand() {
            return Err(Error::Range { value: *v, bits: n.bits() });
        }
    }
    let bits = n.product_bits();
    let tree_width = cols.next_power_of_two().max(2);

    let mut by_sub: BTreeMap<usize, Vec<&Segment>> = BTreeMap::new();
    for s in &plan.segments {
        if s.last_col() > cols {
            return Err(Error::Validation(format!(
                "segment in subarray {} reaches column {} of a {cols}-column subarray",
                s.sub_no,
                s.last_col()
            )));
        }
        by_sub.entry(s.sub_no).or_default().push(s);
    }

    let mut cost = BankCost { subarrays: by_sub.len() as u64, ..BankCost::default() };
    let depth = plan.max_pair_depth();
    cost.passes = depth as u64;
    cost.multiply_aap = depth as u64 * mul_aap_count(n.bits());

    let mut mac_values = vec![0u128; plan.total_macs as usize];
    for segs in by_sub.values() {
        let mut sa = SubarrayState::new(rows, cols, n)?;
        if depth > sa.layout().pair_slots() {
            return Err(Error::Capacity(format!(
                "pair depth {depth} exceeds the {} operand slots of a {rows}-row subarray",
                sa.layout().pair_slots()
            )));
        }
        for s in segs {
            for c in 0..s.columns {
                let (mac, j) = if s.is_piece(plan.mac_size) {
                    (s.mac_first, s.first_mult + c)
                } else {
                    (s.mac_first + (c / plan.mac_size) as u64, c % plan.mac_size)
                };
                let (a, w) = operands(layer, input, &tensors.weights, mac, j);
                sa.write_operands(s.pair_depth - 1, s.col_no - 1 + c, a, w)?;
            }
        }
        for d in 1..=depth {
            let at: Vec<&Segment> = segs.iter().copied().filter(|s| s.pair_depth == d).collect();
            if at.is_empty() {
                continue;
            }
            let lo = at.iter().map(|s| s.col_no - 1).min().unwrap_or(0);
            let hi = at.iter().map(|s| s.last_col()).max().unwrap_or(0);
            let summary = sa.multiply_slot(d - 1, lo..hi)?;
            cost.total_subarray_aap += summary.total_aap;

            let planes: Vec<Vec<bool>> = (0..bits as usize).map(|j| sa.product_plane(j)).collect();
            let mut groups: Vec<(usize, usize)> = Vec::new();
            let mut owners: Vec<u64> = Vec::new();
            for s in &at {
                groups.extend(s.groups(plan.mac_size));
                owners.extend(group_macs(s, plan.mac_size));
            }
            let pass_of = assign_tree_passes(&groups);
            let n_passes = pass_of.iter().max().map_or(0, |p| p + 1);
            for p in 0..n_passes {
                let members: Vec<usize> = (0..groups.len()).filter(|&g| pass_of[g] == p).collect();
                let bounds: Vec<(usize, usize)> = members.iter().map(|&g| groups[g]).collect();
                let tree = AdderTreeConfig::with_groups(tree_width, &bounds)?;
                let mut accs = vec![AccumulatorState::new(); members.len()];
                for (j, plane) in planes.iter().enumerate() {
                    let mut gated = vec![false; tree_width];
                    for &(start, size) in &bounds {
                        gated[start..start + size].copy_from_slice(&plane[start..start + size]);
                    }
                    let sums = tree.reduce(&gated)?;
                    for (acc, s) in accs.iter_mut().zip(sums) {
                        acc.accumulate_bitplane(s, j as u32)?;
                    }
                    cost.plane_reads += 1;
                }
                for (acc, &g) in accs.iter_mut().zip(&members) {
                    mac_values[(owners[g] - 1) as usize] += acc.finish();
                }
                cost.tree_passes += 1;
            }
        }
    }

    let macs: Vec<i64> = mac_values
        .iter()
        .map(|&v| i64::try_from(v).map_err(|_| Error::Capacity(format!("MAC value {v} overflows i64"))))
        .collect::<Result<_>>()?;
    let per_channel = layer.macs_per_output();
    let activated: Vec<u64> = macs
        .iter()
        .enumerate()
        .map(|(i, &m)| tensors.sfu.apply(m, i / per_channel))
        .collect();
    cost.sfu_elements = activated.len() as u64;

    let pooled = match &layer.kind {
        LayerKind::Conv(c) if c.pool.is_some() => {
            let pool = c.pool.expect("checked");
            let (oh, ow) = (c.out_height(), c.out_width());
            let (ph, pw) = (pool.output_dim(oh), pool.output_dim(ow));
            let mut unit = MaxPoolUnit::new(pool.window * pool.window)?;
            let mut out = Vec::with_capacity(c.out_channels * ph * pw);
            for ch in 0..c.out_channels {
                for py in 0..ph {
                    for px in 0..pw {
                        for wy in 0..pool.window {
                            for wx in 0..pool.window {
                                let idx = (ch * oh + py * pool.stride + wy) * ow + px * pool.stride + wx;
                                cost.pool_inputs += 1;
                                if let Some(m) = unit.step(activated[idx]) {
                                    out.push(m);
                                }
                            }
                        }
                    }
                }
            }
            out
        }
        _ => {
            let mut unit = MaxPoolUnit::pass_through();
            cost.pool_inputs = activated.len() as u64;
            activated.iter().filter_map(|&x| unit.step(x)).collect()
        }
    };
    let out_bits = tensors.sfu.quantize.bits;
    let (planes, batches) = transpose_values(&pooled, out_bits, DEFAULT_ROWS)?;
    cost.transpose_batches = batches as u64;
    cost.outputs = pooled.len() as u64;
    let outputs: Vec<u64> = (0..pooled.len())
        .map(|i| (0..out_bits as usize).fold(0u64, |acc, j| acc | (u64::from(planes[j][i]) << j)))
        .collect();
    Ok(BankOutput { macs, outputs, planes, cost })
}
