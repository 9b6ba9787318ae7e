//! Direct fixed-point inference used as the functional oracle: dense
//! integer MACs, then ReLU, BatchNorm, Quantize and max pooling.

use crate::datapath::sfu::{batchnorm, quantize, relu, SfuParams};
use crate::error::{Error, Result};
use crate::network::{LayerKind, LayerSpec};

/// Raw dot products, `[output][position]` flattened.
pub fn reference_macs(layer: &LayerSpec, input: &[u64], weights: &[u64]) -> Result<Vec<i64>> {
    check_shapes(layer, input, weights)?;
    let size = layer.mac_size();
    Ok(match &layer.kind {
        LayerKind::Linear(l) => (0..l.outputs)
            .map(|o| (0..l.inputs).map(|i| (input[i] * weights[o * size + i]) as i64).sum())
            .collect(),
        LayerKind::Conv(c) => {
            let (oh, ow) = (c.out_height(), c.out_width());
            let mut out = Vec::with_capacity(c.out_channels * oh * ow);
            for o in 0..c.out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0i64;
                        for ch in 0..c.in_channels {
                            for ky in 0..c.kernel_h {
                                for kx in 0..c.kernel_w {
                                    let y = (oy * c.stride + ky) as isize - c.padding as isize;
                                    let x = (ox * c.stride + kx) as isize - c.padding as isize;
                                    if y < 0 || x < 0 || y >= c.height as isize || x >= c.width as isize {
                                        continue;
                                    }
                                    let a = input[(ch * c.height + y as usize) * c.width + x as usize];
                                    let w = weights[o * size + (ch * c.kernel_h + ky) * c.kernel_w + kx];
                                    acc += (a * w) as i64;
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
            out
        }
    })
}

/// Full layer output after the SFU chain, `[channel][y][x]` for conv.
pub fn reference_layer(layer: &LayerSpec, input: &[u64], weights: &[u64], sfu: &SfuParams) -> Result<Vec<u64>> {
    let macs = reference_macs(layer, input, weights)?;
    let per_channel = layer.macs_per_output();
    let activated: Vec<u64> = macs
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let bn = sfu.bn(i / per_channel);
            quantize(batchnorm(relu(m), &bn), &sfu.quantize)
        })
        .collect();
    let LayerKind::Conv(c) = &layer.kind else {
        return Ok(activated);
    };
    let Some(pool) = c.pool else {
        return Ok(activated);
    };
    let (oh, ow) = (c.out_height(), c.out_width());
    let (ph, pw) = (pool.output_dim(oh), pool.output_dim(ow));
    let mut out = Vec::with_capacity(c.out_channels * ph * pw);
    for ch in 0..c.out_channels {
        for py in 0..ph {
            for px in 0..pw {
                let mut m = 0;
                for wy in 0..pool.window {
                    for wx in 0..pool.window {
                        let y = py * pool.stride + wy;
                        let x = px * pool.stride + wx;
                        m = m.max(activated[(ch * oh + y) * ow + x]);
                    }
                }
                out.push(m);
            }
        }
    }
    Ok(out)
}

pub(crate) fn check_shapes(layer: &LayerSpec, input: &[u64], weights: &[u64]) -> Result<()> {
    if input.len() != layer.input_elements() {
        return Err(Error::Shape { expected: layer.input_elements(), actual: input.len() });
    }
    let w = layer.outputs_per_position() * layer.mac_size();
    if weights.len() != w {
        return Err(Error::Shape { expected: w, actual: weights.len() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ConvSpec, PoolSpec};

    #[test]
    fn linear_matches_hand_mvm() {
        let fc = LayerSpec::linear("fc", 3, 4);
        let w = [1, 0, 2, 3, 1, 0, 0, 0, 0, 1, 1, 1];
        let out = reference_macs(&fc, &[2, 5, 1], &w).unwrap();
        assert_eq!(out, vec![4, 11, 0, 8]);
    }

    #[test]
    fn conv_with_padding_and_pool() {
        let layer = LayerSpec::conv(
            "c",
            ConvSpec {
                height: 2,
                width: 2,
                in_channels: 1,
                out_channels: 1,
                kernel_h: 1,
                kernel_w: 1,
                padding: 1,
                stride: 1,
                pool: Some(PoolSpec { window: 2, stride: 2 }),
            },
        );
        let macs = reference_macs(&layer, &[1, 2, 3, 4], &[2]).unwrap();
        assert_eq!(macs, vec![0, 0, 0, 0, 0, 2, 4, 0, 0, 6, 8, 0, 0, 0, 0, 0]);
        let out = reference_layer(&layer, &[1, 2, 3, 4], &[2], &SfuParams::identity(4)).unwrap();
        assert_eq!(out, vec![2, 4, 6, 8]);
    }
}
