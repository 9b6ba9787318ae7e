//! wasm-bindgen entry points for the static demo page in `www/`. Every
//! function returns JSON, or an error message.

use pim_dram::mapper::{map_layer, MapperConfig};
use pim_dram::runner::{precision_sweep, RunConfig};
use pim_dram::{LayerSpec, Precision, Preset, RowLayout, SubarrayState};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Step {
    kind: &'static str,
    activated: Vec<usize>,
    written: Vec<usize>,
}

#[derive(Serialize)]
struct MultiplyView {
    product: u64,
    product_bits: Vec<u8>,
    total_aap: u64,
    and_ops: u64,
    add_ops: u64,
    steps: Vec<Step>,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// One `n`-bit multiply in a single-column subarray, with its AAP trace.
#[wasm_bindgen]
pub fn multiply(n: u32, a: u64, b: u64) -> Result<String, String> {
    let p = Precision::new(n).map_err(err)?;
    if n > 8 {
        return Err("the explorer stops at 8 bits".into());
    }
    let mut sa = SubarrayState::new(RowLayout::min_rows(p), 1, p).map_err(err)?;
    sa.write_operand_column(0, a, b).map_err(err)?;
    let summary = sa.multiply(0..1).map_err(err)?;
    let product = sa.read_product_column(0).map_err(err)?;
    let steps = sa
        .trace()
        .events()
        .iter()
        .map(|e| Step { kind: e.kind.as_str(), activated: e.activated.iter().map(|r| r.row()).collect(), written: e.written.clone() })
        .collect();
    let view = MultiplyView {
        product,
        product_bits: (0..2 * n).map(|j| ((product >> j) & 1) as u8).collect(),
        total_aap: summary.total_aap,
        and_ops: summary.and_ops,
        add_ops: summary.add_ops,
        steps,
    };
    serde_json::to_string(&view).map_err(err)
}

fn preset(name: &str) -> Result<Preset, String> {
    Preset::ALL
        .into_iter()
        .find(|p| p.name().eq_ignore_ascii_case(name))
        .ok_or_else(|| format!("unknown preset `{name}`"))
}

/// Full-pipeline latency of a preset for n = 1..=max_bits at 4096-column scale.
#[wasm_bindgen]
pub fn sweep(preset_name: &str, parallelism: &str, max_bits: u32) -> Result<String, String> {
    let p = preset(preset_name)?;
    let net = p.network(Precision::new(1).map_err(err)?, parallelism).map_err(err)?;
    let bits: Vec<u32> = (1..=max_bits.clamp(1, 8)).collect();
    let points = precision_sweep(&net, &bits, &RunConfig::full_scale()).map_err(err)?;
    serde_json::to_string(&points).map_err(err)
}

#[derive(Serialize)]
struct Run {
    sub: usize,
    depth: usize,
    col: usize,
    columns: usize,
    mac_first: u64,
    mac_count: u64,
}

#[derive(Serialize)]
struct OccupancyView {
    subarrays: usize,
    depth: usize,
    occupied_columns: u64,
    padding_columns: u64,
    footprint_bits: u64,
    occupied_bits: u64,
    runs: Vec<Run>,
}

/// Placement of a fully connected layer with `k` stacked operand pairs.
/// Only runs in the first `show` subarrays are listed.
#[wasm_bindgen]
pub fn occupancy(inputs: usize, outputs: usize, k: usize, columns: usize, n: u32, show: usize) -> Result<String, String> {
    let layer = LayerSpec::linear("fc", inputs, outputs);
    layer.validate().map_err(err)?;
    let cfg = MapperConfig { column_size: columns, ..MapperConfig::default() };
    let plan = map_layer(&layer, 0, 0, k, &cfg).map_err(err)?;
    let runs = plan
        .segments
        .iter()
        .filter(|s| s.sub_no <= show)
        .map(|s| Run { sub: s.sub_no, depth: s.pair_depth, col: s.col_no, columns: s.columns, mac_first: s.mac_first, mac_count: s.mac_count })
        .collect();
    let view = OccupancyView {
        subarrays: plan.subarrays_used(),
        depth: plan.max_pair_depth(),
        occupied_columns: plan.occupied_columns(),
        padding_columns: plan.padding_columns,
        footprint_bits: pim_dram::mapper::footprint_bits(&layer, n),
        occupied_bits: plan.occupied_bits(n),
        runs,
    };
    serde_json::to_string(&view).map_err(err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiply_view() {
        let v: serde_json::Value = serde_json::from_str(&multiply(2, 3, 2).unwrap()).unwrap();
        assert_eq!(v["product"], 6);
        assert_eq!(v["total_aap"], 19);
        assert_eq!(v["steps"].as_array().unwrap().len(), 19);
        assert!(multiply(9, 1, 1).is_err());
    }

    #[test]
    fn sweep_view() {
        let v: serde_json::Value = serde_json::from_str(&sweep("alexnet", "P3", 3).unwrap()).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 3);
        assert!(sweep("lenet", "P1", 2).is_err());
    }

    #[test]
    fn occupancy_view() {
        let v: serde_json::Value = serde_json::from_str(&occupancy(100, 8, 2, 256, 4, 4).unwrap()).unwrap();
        assert_eq!(v["depth"], 2);
        // 800 multiplications stacked two deep
        assert_eq!(v["occupied_columns"], 400);
        assert_eq!(v["occupied_bits"], v["footprint_bits"]);
        assert!(occupancy(100, 8, 3, 256, 4, 4).is_err());
    }
}
