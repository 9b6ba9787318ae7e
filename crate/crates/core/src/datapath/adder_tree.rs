//! Reconfigurable binary adder tree fed by one row-buffer bit-plane.
//!
//! Level 0 is the raw input. Level `l >= 1` has `num_inputs >> l` nodes and
//! node `i` of level `l` covers inputs `[i << l, (i + 1) << l)`. A node either
//! adds its two children or forwards the left one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeMode {
    Add,
    Forward,
}

/// One MAC group and the tree node its sum is tapped from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTap {
    pub start: usize,
    pub size: usize,
    /// Tap level; the group's aligned block spans `1 << level` inputs.
    pub level: u32,
}

impl GroupTap {
    pub fn block_start(&self) -> usize {
        self.start >> self.level << self.level
    }

    pub fn block_len(&self) -> usize {
        1 << self.level
    }

    fn block(&self) -> std::ops::Range<usize> {
        self.block_start()..self.block_start() + self.block_len()
    }
}

/// Smallest aligned power-of-two block level containing `[start, start + size)`.
pub fn tap_level(start: usize, size: usize) -> u32 {
    debug_assert!(size > 0);
    let last = start + size - 1;
    let mut level = 0;
    while start >> level != last >> level {
        level += 1;
    }
    level
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdderTreeConfig {
    num_inputs: usize,
    levels: u32,
    /// `node_modes[l - 1][i]` is the mode of node `i` at level `l`.
    node_modes: Vec<Vec<NodeMode>>,
    groups: Vec<GroupTap>,
}

impl AdderTreeConfig {
    /// Packs groups of the given sizes left to right, each in its own
    /// aligned block (sizes rounded up to a power of two).
    pub fn build(num_inputs: usize, mac_sizes: &[usize]) -> Result<Self> {
        let mut cursor = 0usize;
        let mut bounds = Vec::with_capacity(mac_sizes.len());
        for &size in mac_sizes {
            if size == 0 {
                return Err(Error::Config("empty MAC group".into()));
            }
            let padded = size.next_power_of_two();
            let start = cursor.div_ceil(padded) * padded;
            bounds.push((start, size));
            cursor = start + padded;
        }
        if cursor > num_inputs {
            return Err(Error::Config(format!(
                "MAC groups need {cursor} padded tree inputs but the tree has {num_inputs}"
            )));
        }
        Self::with_groups(num_inputs, &bounds)
    }

    /// Configures the tree for groups at fixed input positions `(start, size)`.
    /// Fails when a group's aligned block would also cover another group.
    pub fn with_groups(num_inputs: usize, groups: &[(usize, usize)]) -> Result<Self> {
        if !num_inputs.is_power_of_two() || num_inputs < 2 {
            return Err(Error::Config(format!(
                "adder tree width {num_inputs} is not a power of two >= 2"
            )));
        }
        let levels = num_inputs.trailing_zeros();
        let mut taps: Vec<GroupTap> = Vec::with_capacity(groups.len());
        for &(start, size) in groups {
            if size == 0 || start + size > num_inputs {
                return Err(Error::Config(format!(
                    "group at {start} of size {size} does not fit a {num_inputs}-input tree"
                )));
            }
            taps.push(GroupTap { start, size, level: tap_level(start, size) });
        }
        let mut order: Vec<usize> = (0..taps.len()).collect();
        order.sort_by_key(|&g| taps[g].block_start());
        // Aligned blocks either nest or are disjoint; isolation needs disjoint.
        for w in order.windows(2) {
            let (a, b) = (taps[w[0]], taps[w[1]]);
            if a.block().end > b.block_start() {
                return Err(Error::Config(format!(
                    "group at {} (size {}) cannot be isolated from group at {} (size {}); pad the mapping",
                    a.start, a.size, b.start, b.size
                )));
            }
        }

        let mut node_modes: Vec<Vec<NodeMode>> = (1..=levels)
            .map(|l| vec![NodeMode::Forward; num_inputs >> l])
            .collect();
        for t in &taps {
            for l in 1..=t.level {
                let first = t.block_start() >> l;
                let count = t.block_len() >> l;
                for mode in &mut node_modes[l as usize - 1][first..first + count] {
                    *mode = NodeMode::Add;
                }
            }
        }
        Ok(AdderTreeConfig { num_inputs, levels, node_modes, groups: taps })
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn units_at_level(&self, level: u32) -> usize {
        self.node_modes[level as usize - 1].len()
    }

    pub fn node_mode(&self, level: u32, node: usize) -> NodeMode {
        self.node_modes[level as usize - 1][node]
    }

    pub fn groups(&self) -> &[GroupTap] {
        &self.groups
    }

    /// Output width in bits at a level: one more than the level below.
    pub fn bit_width(level: u32) -> u32 {
        1 + level
    }

    /// Runs one bit-plane through the tree and returns one sum per group.
    pub fn reduce(&self, plane: &[bool]) -> Result<Vec<u64>> {
        if plane.len() != self.num_inputs {
            return Err(Error::Shape { expected: self.num_inputs, actual: plane.len() });
        }
        for t in &self.groups {
            let block = t.block();
            let pad = block.start..t.start;
            let tail = t.start + t.size..block.end;
            if pad.chain(tail).any(|i| plane[i]) {
                return Err(Error::Validation(format!(
                    "non-zero input inside the padding of group at {}",
                    t.start
                )));
            }
        }
        let mut values: Vec<Vec<u64>> = Vec::with_capacity(self.levels as usize + 1);
        values.push(plane.iter().map(|&b| u64::from(b)).collect());
        for l in 1..=self.levels {
            let below = &values[l as usize - 1];
            let level: Vec<u64> = self.node_modes[l as usize - 1]
                .iter()
                .enumerate()
                .map(|(i, mode)| match mode {
                    NodeMode::Add => below[2 * i] + below[2 * i + 1],
                    NodeMode::Forward => below[2 * i],
                })
                .collect();
            values.push(level);
        }
        Ok(self
            .groups
            .iter()
            .map(|t| values[t.level as usize][t.block_start() >> t.level])
            .collect())
    }
}

pub fn build_adder_tree(num_inputs: usize, mac_sizes: &[usize]) -> Result<AdderTreeConfig> {
    AdderTreeConfig::build(num_inputs, mac_sizes)
}

pub fn tree_reduce(config: &AdderTreeConfig, plane: &[bool]) -> Result<Vec<u64>> {
    config.reduce(plane)
}

/// Splits groups placed at fixed positions into tree passes so that the
/// groups within one pass can be isolated. Greedy, in input order. Returns
/// the pass index of every group.
pub fn assign_tree_passes(groups: &[(usize, usize)]) -> Vec<usize> {
    let mut passes: Vec<Vec<std::ops::Range<usize>>> = Vec::new();
    let mut out = Vec::with_capacity(groups.len());
    for &(start, size) in groups {
        let block = GroupTap { start, size, level: tap_level(start, size) }.block();
        let fits = |used: &Vec<std::ops::Range<usize>>| {
            used.iter().all(|b| b.end <= block.start || block.end <= b.start)
        };
        match passes.iter().position(fits) {
            Some(p) => {
                passes[p].push(block);
                out.push(p);
            }
            None => {
                passes.push(vec![block]);
                out.push(passes.len() - 1);
            }
        }
    }
    out
}

/// Number of tree passes for `count` equal-size groups laid out contiguously
/// from input `first`.
pub fn contiguous_tree_passes(first: usize, count: usize, size: usize) -> usize {
    if count == 0 {
        return 0;
    }
    let groups: Vec<(usize, usize)> = (0..count).map(|i| (first + i * size, size)).collect();
    assign_tree_passes(&groups).into_iter().max().map_or(0, |p| p + 1)
}
