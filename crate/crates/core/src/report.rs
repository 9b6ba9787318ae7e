//! Run and latency reports, as JSON and as a plain-text table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::area::{AreaPowerReport, EnergyEstimate};
use crate::error::Result;
use crate::timing::{ns, LayerTiming, PipelineSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerLatencyRow {
    pub layer: usize,
    pub name: String,
    pub multiply_ns: f64,
    pub load_ns: f64,
    pub reduce_ns: f64,
    pub sfu_ns: f64,
    pub transpose_ns: f64,
    pub transfer_ns: f64,
    pub total_ns: f64,
    pub aap_count: u64,
    pub passes: u64,
    pub plane_reads: u64,
    pub tree_passes: u64,
    pub footprint_bits: u64,
    pub occupied_bits: u64,
    pub padding_columns: u64,
}

impl From<&LayerTiming> for LayerLatencyRow {
    fn from(t: &LayerTiming) -> Self {
        LayerLatencyRow {
            layer: t.layer,
            name: t.name.clone(),
            multiply_ns: ns(t.multiply),
            load_ns: ns(t.load),
            reduce_ns: ns(t.reduce),
            sfu_ns: ns(t.sfu),
            transpose_ns: ns(t.transpose),
            transfer_ns: ns(t.transfer),
            total_ns: ns(t.total()),
            aap_count: t.aap_count,
            passes: t.passes,
            plane_reads: t.plane_reads,
            tree_passes: t.tree_passes,
            footprint_bits: t.footprint_bits,
            occupied_bits: t.occupied_bits,
            padding_columns: t.padding_columns,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub images: u64,
    pub fill_ns: f64,
    pub steady_state_per_image_ns: f64,
    pub total_ns: f64,
}

impl From<&PipelineSchedule> for PipelineSummary {
    fn from(s: &PipelineSchedule) -> Self {
        PipelineSummary {
            images: s.images,
            fill_ns: ns(s.fill),
            steady_state_per_image_ns: ns(s.steady_state),
            total_ns: ns(s.total),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub layers: Vec<LayerLatencyRow>,
    pub residual_ns: f64,
    pub pipeline: PipelineSummary,
    pub total_aap: u64,
    pub footprint_bits: u64,
    pub occupied_bits: u64,
    pub padding_columns: u64,
    /// Per image, from the power table.
    pub energy: EnergyEstimate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanLayerSummary {
    pub layer: usize,
    pub name: String,
    pub bank: usize,
    pub k: usize,
    pub mac_size: usize,
    pub total_macs: u64,
    pub subarrays: usize,
    pub max_pair_depth: usize,
    pub padding_columns: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalLayer {
    pub layer: usize,
    pub name: String,
    pub outputs: usize,
    pub multiply_aap: u64,
    pub subarray_aap: u64,
    pub plane_reads: u64,
    pub tree_passes: u64,
    pub matches_oracle: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub layers: Vec<FunctionalLayer>,
    pub residual_adds: usize,
    pub final_output: Vec<u64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub network: String,
    pub precision: u32,
    pub mode: String,
    pub seed: u64,
    pub plan: Vec<PlanLayerSummary>,
    pub reserved_banks: Vec<usize>,
    pub functional: Option<FunctionalReport>,
    pub latency: Option<LatencyReport>,
    pub area_power: AreaPowerReport,
    pub status: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "json" => Ok(ReportFormat::Json),
            other => Err(crate::Error::Parse(format!("unknown report format `{other}`"))),
        }
    }
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn emit(&self, format: ReportFormat) -> Result<String> {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Table => Ok(self.to_table()),
        }
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "network {}  n={}  mode={}  seed={}  status={}", self.network, self.precision, self.mode, self.seed, self.status);
        if !self.plan.is_empty() {
            let _ = writeln!(s, "\n{:<5} {:<20} {:>4} {:>3} {:>8} {:>10} {:>9} {:>5} {:>9}", "layer", "name", "bank", "k", "mac_size", "macs", "subarrays", "depth", "padding");
            for p in &self.plan {
                let _ = writeln!(
                    s,
                    "{:<5} {:<20} {:>4} {:>3} {:>8} {:>10} {:>9} {:>5} {:>9}",
                    p.layer, p.name, p.bank, p.k, p.mac_size, p.total_macs, p.subarrays, p.max_pair_depth, p.padding_columns
                );
            }
        }
        if !self.reserved_banks.is_empty() {
            let _ = writeln!(s, "reserved banks: {:?}", self.reserved_banks);
        }
        if let Some(f) = &self.functional {
            if !f.layers.is_empty() {
                let _ = writeln!(s, "\nfunctional: {} ({} residual adds)", f.status, f.residual_adds);
                for l in &f.layers {
                    let _ = writeln!(
                        s,
                        "  {:<20} outputs={:<8} multiply_aap={:<6} plane_reads={:<8} oracle={}",
                        l.name,
                        l.outputs,
                        l.multiply_aap,
                        l.plane_reads,
                        if l.matches_oracle { "match" } else { "MISMATCH" }
                    );
                }
            }
        }
        if let Some(lat) = &self.latency {
            if !lat.layers.is_empty() {
                let _ = writeln!(
                    s,
                    "\n{:<20} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>14} {:>8}",
                    "layer", "multiply_ns", "load_ns", "reduce_ns", "sfu_ns", "transpose_ns", "transfer_ns", "total_ns", "aap"
                );
                for l in &lat.layers {
                    let _ = writeln!(
                        s,
                        "{:<20} {:>12.2} {:>12.2} {:>12.2} {:>12.2} {:>12.2} {:>12.2} {:>14.2} {:>8}",
                        l.name, l.multiply_ns, l.load_ns, l.reduce_ns, l.sfu_ns, l.transpose_ns, l.transfer_ns, l.total_ns, l.aap_count
                    );
                }
                let p = &lat.pipeline;
                let _ = writeln!(s, "\nresidual_ns {:.2}", lat.residual_ns);
                let _ = writeln!(
                    s,
                    "pipeline: images={} fill_ns={:.2} steady_state_per_image_ns={:.2} total_ns={:.2}",
                    p.images, p.fill_ns, p.steady_state_per_image_ns, p.total_ns
                );
                let _ = writeln!(
                    s,
                    "total_aap={} footprint_bits={} occupied_bits={} padding_columns={}",
                    lat.total_aap, lat.footprint_bits, lat.occupied_bits, lat.padding_columns
                );
                let _ = writeln!(s, "energy per image (from power table): {:.6} nJ", lat.energy.total_nj);
            }
        }
        let _ = writeln!(s, "\n{:<12} {:>12} {:>10} {:>16} {:>10}", "component", "area_um2", "share%", "power_nw", "share%");
        for (a, p) in self.area_power.area_um2.iter().zip(&self.area_power.power_nw) {
            let _ = writeln!(
                s,
                "{:<12} {:>12} {:>10} {:>16} {:>10}",
                a.component, a.value, a.listed_percentage, p.value, p.listed_percentage
            );
        }
        s
    }
}
