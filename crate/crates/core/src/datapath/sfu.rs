//! Special function units: ReLU, BatchNorm, Quantize and max pooling.
//! Values travel between units as `i64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fractional bits of the BatchNorm scale.
pub const BN_FRAC_BITS: u32 = 16;

pub fn relu(x: i64) -> i64 {
    x.max(0)
}

/// Divides by `2^shift`, rounding to nearest with ties to even.
pub fn round_shift(x: i128, shift: u32) -> i128 {
    if shift == 0 {
        return x;
    }
    let q = x >> shift; // floor
    let rem = x - (q << shift);
    let half = 1i128 << (shift - 1);
    if rem > half || (rem == half && q & 1 == 1) {
        q + 1
    } else {
        q
    }
}

fn saturate(x: i128) -> i64 {
    x.clamp(i64::MIN as i128, i64::MAX as i128) as i64
}

/// Per-channel BatchNorm constants: `y = (x - mean) * scale + offset`, with
/// `scale` in Q16 fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchNormParams {
    pub mean: i64,
    pub scale_q16: i64,
    pub offset: i64,
}

impl Default for BatchNormParams {
    fn default() -> Self {
        BatchNormParams { mean: 0, scale_q16: 1 << BN_FRAC_BITS, offset: 0 }
    }
}

impl BatchNormParams {
    pub fn new(mean: i64, scale: f64, offset: i64) -> Self {
        let scale_q16 = (scale * f64::from(1u32 << BN_FRAC_BITS)).round_ties_even() as i64;
        BatchNormParams { mean, scale_q16, offset }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }
}

pub fn batchnorm(x: i64, p: &BatchNormParams) -> i64 {
    let centered = i128::from(x) - i128::from(p.mean);
    let scaled = round_shift(centered * i128::from(p.scale_q16), BN_FRAC_BITS);
    saturate(scaled + i128::from(p.offset))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizeParams {
    /// Right shift applied before clamping.
    pub shift: u32,
    /// Output width.
    pub bits: u32,
}

pub fn quantize(x: i64, q: &QuantizeParams) -> u64 {
    let max = (1i128 << q.bits) - 1;
    round_shift(i128::from(x), q.shift).clamp(0, max) as u64
}

/// Streaming max-pool unit. A window size of 1 is a pass-through.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaxPoolUnit {
    window: usize,
    count: usize,
    max: u64,
}

impl MaxPoolUnit {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("pool window must be positive".into()));
        }
        Ok(MaxPoolUnit { window, count: 0, max: 0 })
    }

    pub fn pass_through() -> Self {
        MaxPoolUnit { window: 1, count: 0, max: 0 }
    }

    /// Feeds one element; returns the window maximum after the last element.
    pub fn step(&mut self, x: u64) -> Option<u64> {
        self.max = if self.count == 0 { x } else { self.max.max(x) };
        self.count += 1;
        if self.count == self.window {
            self.count = 0;
            Some(self.max)
        } else {
            None
        }
    }
}

pub fn maxpool_step(pool: &mut MaxPoolUnit, x: u64) -> Option<u64> {
    pool.step(x)
}

/// SFU configuration for one layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SfuParams {
    /// One entry per output channel; empty means identity.
    #[serde(default)]
    pub batchnorm: Vec<BatchNormParams>,
    pub quantize: QuantizeParams,
}

impl SfuParams {
    pub fn identity(bits: u32) -> Self {
        SfuParams { batchnorm: Vec::new(), quantize: QuantizeParams { shift: 0, bits } }
    }

    pub fn bn(&self, channel: usize) -> BatchNormParams {
        self.batchnorm.get(channel).copied().unwrap_or_default()
    }

    /// Accumulator output through ReLU, BatchNorm and Quantize.
    pub fn apply(&self, mac: i64, channel: usize) -> u64 {
        quantize(batchnorm(relu(mac), &self.bn(channel)), &self.quantize)
    }
}
