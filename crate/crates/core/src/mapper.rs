//! Placement of every multiplication onto (bank, subarray, column, pair
//! depth), following the layer-by-layer mapping algorithm. Placement is
//! stored as runs of consecutive MACs sharing one subarray and depth.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::datapath::adder_tree::{assign_tree_passes, contiguous_tree_passes};
use crate::error::{Error, Result};
use crate::network::{LayerKind, LayerSpec, NetworkDescription};

pub fn num_macs(layer: &LayerSpec) -> usize {
    layer.macs_per_output()
}

pub fn mac_size(layer: &LayerSpec) -> usize {
    layer.mac_size()
}

/// Worst-case footprint (k = 1): every multiplication holds its own `2n`
/// operand bits.
pub fn footprint_bits(layer: &LayerSpec, n: u32) -> u64 {
    let per_mult = 2 * u64::from(n);
    match &layer.kind {
        LayerKind::Conv(_) => {
            layer.outputs_per_position() as u64
                * num_macs(layer) as u64
                * mac_size(layer) as u64
                * per_mult
        }
        LayerKind::Linear(l) => (l.inputs * l.outputs) as u64 * per_mult,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapperConfig {
    /// Columns per subarray.
    pub column_size: usize,
    pub subarrays_per_bank: usize,
    pub banks: usize,
    /// Operand pairs that fit in one column (rows permitting).
    pub pair_slots: usize,
}

impl Default for MapperConfig {
    /// Capacity is effectively unbounded except for the column width, so
    /// the listed parallelism vectors map for every preset.
    fn default() -> Self {
        MapperConfig { column_size: 4096, subarrays_per_bank: 1 << 20, banks: 32, pair_slots: 512 }
    }
}

/// A run of MACs `mac_first .. mac_first + mac_count` placed back to back in
/// one subarray at one pair depth, starting at column `col_no` (1-based).
///
/// A MAC with more multiplications than a subarray has columns is split
/// into pieces that fill consecutive subarrays from column 1; each piece is
/// a segment with `mac_count == 1` covering multiplications
/// `first_mult .. first_mult + columns` of that MAC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub sub_no: usize,
    pub col_no: usize,
    pub pair_depth: usize,
    pub mac_first: u64,
    pub mac_count: u64,
    pub first_mult: usize,
    pub columns: usize,
}

impl Segment {
    pub fn last_col(&self) -> usize {
        self.col_no + self.columns - 1
    }

    /// True when this segment holds only part of one MAC.
    pub fn is_piece(&self, mac_size: usize) -> bool {
        self.columns != self.mac_count as usize * mac_size
    }

    /// `(first column, columns)` of every adder-tree group, 0-based.
    pub fn groups(&self, mac_size: usize) -> Vec<(usize, usize)> {
        if self.is_piece(mac_size) {
            vec![(self.col_no - 1, self.columns)]
        } else {
            (0..self.mac_count as usize).map(|m| (self.col_no - 1 + m * mac_size, mac_size)).collect()
        }
    }
}

/// One multiplication's position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub sub_no: usize,
    pub col_no: usize,
    pub mac_id: u64,
    pub pair_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub layer: usize,
    pub bank: usize,
    pub k: usize,
    pub mac_size: usize,
    pub total_macs: u64,
    pub segments: Vec<Segment>,
    /// Columns left empty because a MAC could not straddle into the next
    /// subarray, summed over subarrays and depths.
    pub padding_columns: u64,
}

impl LayerPlan {
    /// Every placed multiplication, segment by segment.
    pub fn entries(&self) -> impl Iterator<Item = PlanEntry> + '_ {
        let size = self.mac_size;
        self.segments.iter().flat_map(move |s| {
            let piece = s.is_piece(size);
            (0..s.columns).map(move |c| PlanEntry {
                sub_no: s.sub_no,
                col_no: s.col_no + c,
                mac_id: if piece { s.mac_first } else { s.mac_first + (c / size) as u64 },
                pair_depth: s.pair_depth,
            })
        })
    }

    pub fn subarrays_used(&self) -> usize {
        self.segments.iter().map(|s| s.sub_no).max().unwrap_or(0)
    }

    pub fn max_pair_depth(&self) -> usize {
        self.segments.iter().map(|s| s.pair_depth).max().unwrap_or(0)
    }

    pub fn placed_multiplications(&self) -> u64 {
        self.segments.iter().map(|s| s.columns as u64).sum()
    }

    /// Distinct (subarray, column) cells occupied at any depth.
    pub fn occupied_columns(&self) -> u64 {
        let mut per_sub: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
        for s in &self.segments {
            per_sub.entry(s.sub_no).or_default().push((s.col_no, s.last_col()));
        }
        per_sub
            .into_values()
            .map(|mut spans| {
                spans.sort_unstable();
                let mut total = 0u64;
                let mut reach = 0usize;
                for (a, b) in spans {
                    let a = a.max(reach + 1);
                    if b >= a {
                        total += (b - a + 1) as u64;
                    }
                    reach = reach.max(b);
                }
                total
            })
            .sum()
    }

    /// Operand bits held by placed multiplications.
    pub fn occupied_bits(&self, n: u32) -> u64 {
        self.placed_multiplications() * 2 * u64::from(n)
    }

    /// Segments at pair depth `depth`, grouped by subarray.
    pub fn segments_at(&self, sub_no: usize, depth: usize) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(move |s| s.sub_no == sub_no && s.pair_depth == depth)
    }

    /// Adder-tree passes per (subarray, depth), using the column positions of
    /// the plan. MACs that cannot be isolated in one tree configuration are
    /// reduced in extra passes.
    pub fn tree_passes(&self) -> Vec<((usize, usize), usize)> {
        let mut per: HashMap<(usize, usize), Vec<&Segment>> = HashMap::new();
        for s in &self.segments {
            per.entry((s.sub_no, s.pair_depth)).or_default().push(s);
        }
        let mut cache: HashMap<(usize, u64, usize), usize> = HashMap::new();
        let mut out: Vec<((usize, usize), usize)> = per
            .into_iter()
            .map(|(key, segs)| {
                let passes = match segs.as_slice() {
                    [s] if !s.is_piece(self.mac_size) => *cache
                        .entry((s.col_no, s.mac_count, self.mac_size))
                        .or_insert_with(|| contiguous_tree_passes(s.col_no - 1, s.mac_count as usize, self.mac_size)),
                    _ => {
                        let groups: Vec<(usize, usize)> =
                            segs.iter().flat_map(|s| s.groups(self.mac_size)).collect();
                        assign_tree_passes(&groups).into_iter().max().map_or(0, |p| p + 1)
                    }
                };
                (key, passes)
            })
            .collect();
        out.sort_unstable();
        out
    }
}

/// One step of a residual addition routed through a reserved bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum ResidualStep {
    CopyShortcut { from_bank: usize, to_bank: usize },
    CopyBranchOutput { from_bank: usize, to_bank: usize },
    InDramAdd { bank: usize },
    TransferToDestination { from_bank: usize, to_bank: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReservedAssignment {
    pub edge: usize,
    pub reserved_bank: usize,
    pub elements: usize,
    pub schedule: Vec<ResidualStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingPlan {
    pub network: String,
    pub precision: u32,
    pub config: MapperConfig,
    pub layers: Vec<LayerPlan>,
    pub reserved: Vec<ReservedAssignment>,
}

impl MappingPlan {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn total_padding_columns(&self) -> u64 {
        self.layers.iter().map(|l| l.padding_columns).sum()
    }
}

/// Maps one layer. Filters (or neurons) are taken in groups of `O / k`; each
/// group restarts at subarray 1, column 1 one pair depth deeper.
pub fn map_layer(layer: &LayerSpec, index: usize, bank: usize, k: usize, cfg: &MapperConfig) -> Result<LayerPlan> {
    let outputs = layer.outputs_per_position();
    if k == 0 || !outputs.is_multiple_of(k) {
        return Err(Error::Validation(format!(
            "layer `{}`: parallelism {k} does not divide {outputs} outputs",
            layer.name
        )));
    }
    let size = mac_size(layer);
    if k > cfg.pair_slots {
        return Err(Error::MappingInfeasible(format!(
            "layer `{}`: parallelism {k} needs {k} stacked operand pairs but a column holds {} ({} short)",
            layer.name,
            cfg.pair_slots,
            k - cfg.pair_slots
        )));
    }
    let per_group = outputs / k;
    let macs_per_filter = num_macs(layer) as u64;
    let cols = cfg.column_size;

    let mut segments: Vec<Segment> = Vec::new();
    let mut padding = 0u64;
    let mut mac_no = 1u64;
    let (mut sub_no, mut col_no, mut depth) = (1usize, 1usize, 0usize);
    let next_subarray = |sub_no: &mut usize, col_no: &mut usize, padding: &mut u64| {
        *padding += (cols + 1).saturating_sub(*col_no) as u64;
        *sub_no += 1;
        *col_no = 1;
    };
    for i in 0..outputs {
        if i % per_group == 0 {
            sub_no = 1;
            col_no = 1;
            depth += 1;
        }
        if size > cols {
            // Oversized MACs: whole subarrays from column 1.
            for _ in 0..macs_per_filter {
                if col_no > 1 {
                    next_subarray(&mut sub_no, &mut col_no, &mut padding);
                }
                let mut first_mult = 0;
                while first_mult < size {
                    if col_no > cols {
                        sub_no += 1;
                        col_no = 1;
                    }
                    let columns = (size - first_mult).min(cols);
                    segments.push(Segment { sub_no, col_no, pair_depth: depth, mac_first: mac_no, mac_count: 1, first_mult, columns });
                    first_mult += columns;
                    col_no += columns;
                }
                mac_no += 1;
            }
            continue;
        }
        let mut remaining = macs_per_filter;
        while remaining > 0 {
            if col_no + size - 1 > cols {
                next_subarray(&mut sub_no, &mut col_no, &mut padding);
            }
            let run = (((cols - col_no + 1) / size) as u64).min(remaining);
            match segments.last_mut() {
                Some(s) if s.sub_no == sub_no && s.pair_depth == depth && !s.is_piece(size) && s.col_no + s.columns == col_no => {
                    s.mac_count += run;
                    s.columns += run as usize * size;
                }
                _ => segments.push(Segment {
                    sub_no,
                    col_no,
                    pair_depth: depth,
                    mac_first: mac_no,
                    mac_count: run,
                    first_mult: 0,
                    columns: run as usize * size,
                }),
            }
            mac_no += run;
            col_no += run as usize * size;
            remaining -= run;
        }
    }
    let plan = LayerPlan {
        layer: index,
        bank,
        k,
        mac_size: size,
        total_macs: mac_no - 1,
        segments,
        padding_columns: padding,
    };
    if plan.subarrays_used() > cfg.subarrays_per_bank {
        return Err(Error::MappingInfeasible(format!(
            "layer `{}`: needs {} subarrays at parallelism {k} but a bank has {} ({} short)",
            layer.name,
            plan.subarrays_used(),
            cfg.subarrays_per_bank,
            plan.subarrays_used() - cfg.subarrays_per_bank
        )));
    }
    Ok(plan)
}

/// Assigns reserved banks for skip connections from the highest bank down.
pub fn plan_residual(net: &NetworkDescription, banks: usize) -> Result<Vec<ReservedAssignment>> {
    let layers = net.layers.len();
    let mut out = Vec::with_capacity(net.residuals.len());
    for (e, edge) in net.residuals.iter().enumerate() {
        let reserved = banks
            .checked_sub(1 + e)
            .filter(|&b| b >= layers)
            .ok_or_else(|| {
                Error::MappingInfeasible(format!(
                    "{layers} layers and {} residual edges need {} banks, have {banks}",
                    net.residuals.len(),
                    layers + net.residuals.len()
                ))
            })?;
        let dest = (edge.to_layer + 1).min(layers - 1);
        out.push(ReservedAssignment {
            edge: e,
            reserved_bank: reserved,
            elements: net.residual_elements(edge),
            schedule: vec![
                ResidualStep::CopyShortcut { from_bank: edge.from_layer, to_bank: reserved },
                ResidualStep::CopyBranchOutput { from_bank: edge.to_layer, to_bank: reserved },
                ResidualStep::InDramAdd { bank: reserved },
                ResidualStep::TransferToDestination { from_bank: reserved, to_bank: dest },
            ],
        });
    }
    Ok(out)
}

/// Maps every layer to its own bank (layer `i` to bank `i`).
pub fn map_network(net: &NetworkDescription, cfg: &MapperConfig) -> Result<MappingPlan> {
    net.validate()?;
    let needed = net.layers.len() + net.residuals.len();
    if needed > cfg.banks {
        return Err(Error::MappingInfeasible(format!(
            "{needed} banks needed ({} layers + {} reserved), {} available",
            net.layers.len(),
            net.residuals.len(),
            cfg.banks
        )));
    }
    let layers = net
        .layers
        .iter()
        .zip(&net.parallelism)
        .enumerate()
        .map(|(i, (layer, &k))| map_layer(layer, i, i, k, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(MappingPlan {
        network: net.name.clone(),
        precision: net.precision.bits(),
        config: *cfg,
        layers,
        reserved: plan_residual(net, cfg.banks)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MacSpansSubarrays,
    Capacity,
    DoubleAssignment,
    Completeness,
    Footprint,
    Mismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub layer: usize,
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layer {}: {}", self.layer, self.message)
    }
}

/// Checks a plan against the placement rules. Returns every violation found.
pub fn validate_plan(plan: &MappingPlan, net: &NetworkDescription) -> Vec<Violation> {
    let mut out = Vec::new();
    if plan.layers.len() != net.layers.len() {
        out.push(Violation {
            layer: 0,
            kind: ViolationKind::Mismatch,
            message: format!("plan has {} layers, network has {}", plan.layers.len(), net.layers.len()),
        });
        return out;
    }
    let cfg = &plan.config;
    for (lp, layer) in plan.layers.iter().zip(&net.layers) {
        let mut push = |kind, message: String| out.push(Violation { layer: lp.layer, kind, message });
        if lp.mac_size != mac_size(layer) {
            push(ViolationKind::Mismatch, format!("MAC size {} but layer needs {}", lp.mac_size, mac_size(layer)));
            continue;
        }
        let size = lp.mac_size;
        for s in &lp.segments {
            if s.col_no == 0 || s.columns == 0 || s.last_col() > cfg.column_size {
                push(
                    ViolationKind::Capacity,
                    format!(
                        "MACs {}..{} in subarray {} end at column {} beyond column_size {}",
                        s.mac_first,
                        s.mac_first + s.mac_count - 1,
                        s.sub_no,
                        s.last_col(),
                        cfg.column_size
                    ),
                );
            }
            if s.sub_no == 0 || s.sub_no > cfg.subarrays_per_bank {
                push(ViolationKind::Capacity, format!("subarray {} outside the bank", s.sub_no));
            }
            if s.pair_depth == 0 || s.pair_depth > cfg.pair_slots {
                push(ViolationKind::Capacity, format!("pair depth {} exceeds {} slots", s.pair_depth, cfg.pair_slots));
            }
            if s.is_piece(size) && (s.mac_count != 1 || s.first_mult + s.columns > size) {
                push(ViolationKind::Mismatch, format!("malformed piece of MAC {}", s.mac_first));
            }
        }

        // Walk MACs in id order: every multiplication placed once, and a MAC
        // only leaves its subarray when it is larger than one.
        let mut order: Vec<&Segment> = lp.segments.iter().collect();
        order.sort_by_key(|s| (s.mac_first, s.first_mult));
        let (mut next_mac, mut next_mult) = (1u64, 0usize);
        let mut prev: Option<&Segment> = None;
        for s in order {
            let id = s.mac_first;
            if (id, s.first_mult) < (next_mac, next_mult) {
                match prev {
                    Some(p) if p.sub_no != s.sub_no => push(
                        ViolationKind::MacSpansSubarrays,
                        format!("MAC {id} spans subarrays {} and {}", p.sub_no, s.sub_no),
                    ),
                    _ => push(ViolationKind::DoubleAssignment, format!("MAC {id} placed twice")),
                }
            } else if (id, s.first_mult) > (next_mac, next_mult) {
                push(ViolationKind::Completeness, format!("MAC {next_mac} is not fully placed"));
            } else if s.first_mult > 0 {
                let p = prev.expect("a continuing piece has a predecessor");
                if size <= cfg.column_size {
                    push(
                        ViolationKind::MacSpansSubarrays,
                        format!("MAC {id} spans subarrays {} and {}", p.sub_no, s.sub_no),
                    );
                } else if s.sub_no != p.sub_no + 1 || s.col_no != 1 {
                    push(
                        ViolationKind::MacSpansSubarrays,
                        format!("oversized MAC {id} continues in subarray {} column {} after subarray {}", s.sub_no, s.col_no, p.sub_no),
                    );
                }
            }
            if s.is_piece(size) {
                if s.first_mult + s.columns >= size {
                    (next_mac, next_mult) = (id + 1, 0);
                } else {
                    (next_mac, next_mult) = (id, s.first_mult + s.columns);
                }
            } else {
                (next_mac, next_mult) = (next_mac.max(id + s.mac_count), 0);
            }
            prev = Some(s);
        }
        if next_mult != 0 || next_mac - 1 != layer.total_macs() {
            push(
                ViolationKind::Completeness,
                format!("{} MACs placed, layer has {}", next_mac - 1, layer.total_macs()),
            );
        }

        // No (subarray, column, depth) cell used twice.
        let mut spans: Vec<(usize, usize, usize, usize)> = lp
            .segments
            .iter()
            .map(|s| (s.sub_no, s.pair_depth, s.col_no, s.last_col()))
            .collect();
        spans.sort_unstable();
        for w in spans.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 && w[1].2 <= w[0].3 {
                push(
                    ViolationKind::DoubleAssignment,
                    format!("subarray {} depth {} column {} assigned twice", w[1].0, w[1].1, w[1].2),
                );
            }
        }

        let bits = lp.occupied_bits(net.precision.bits());
        let bound = footprint_bits(layer, net.precision.bits());
        if bits > bound {
            push(ViolationKind::Footprint, format!("{bits} occupied bits exceed the {bound}-bit footprint"));
        }
    }
    out
}
