//! Shift-add accumulator fed by the adder tree, one bit-plane at a time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccumulatorState {
    pub value: u128,
    pub bit_counter: u32,
}

impl AccumulatorState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `group_sum << bit_idx`. Planes must arrive in order, LSB first.
    pub fn accumulate_bitplane(&mut self, group_sum: u64, bit_idx: u32) -> Result<()> {
        if bit_idx != self.bit_counter {
            return Err(Error::Sequencing { expected: self.bit_counter, got: bit_idx });
        }
        self.value += u128::from(group_sum) << bit_idx;
        self.bit_counter += 1;
        Ok(())
    }

    /// Returns the accumulated MAC value and clears the state for the next MAC.
    pub fn finish(&mut self) -> u128 {
        std::mem::take(self).value
    }
}

pub fn accumulate_bitplane(mut acc: AccumulatorState, group_sum: u64, bit_idx: u32) -> Result<AccumulatorState> {
    acc.accumulate_bitplane(group_sum, bit_idx)?;
    Ok(acc)
}
