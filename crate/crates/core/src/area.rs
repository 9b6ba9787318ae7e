//! Area and power of the bank periphery, from the synthesized component
//! tables. Values are kept as the listed strings and as numbers; relative
//! shares are both the listed ones and recomputed from the values.

use serde::{Deserialize, Serialize};

/// `(component, area um^2, listed %)`.
const AREA: [(&str, &str, &str); 6] = [
    ("4096 Adder", "514877", "99.47373"),
    ("Accumulator", "804", "0.15532"),
    ("Relu", "431", "0.083269"),
    ("Maxpool", "983", "0.189915"),
    ("Batchnorm", "506", "0.097759"),
    ("Quantize", "91", "0.017581"),
];

/// `(component, power nW, listed %)`.
const POWER: [(&str, &str, &str); 6] = [
    ("4096 Adder", "13200190.9", "95.9014"),
    ("Accumulator", "177765.864", "1.2915"),
    ("Relu", "109913.671", "0.7985"),
    ("Maxpool", "127562.373", "0.9268"),
    ("Batchnorm", "120541.29", "0.8758"),
    ("Quantize", "28366.738", "0.2061"),
];

/// Example 256x8 transpose SRAM area, um^2.
pub const TRANSPOSE_SRAM_AREA_UM2: &str = "30534.894";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRow {
    pub component: String,
    pub value: String,
    pub listed_percentage: String,
    pub computed_percentage: f64,
}

impl ComponentRow {
    pub fn number(&self) -> f64 {
        self.value.parse().expect("table values are numeric")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaPowerReport {
    pub area_um2: Vec<ComponentRow>,
    pub area_total_um2: f64,
    pub power_nw: Vec<ComponentRow>,
    pub power_total_nw: f64,
    pub transpose_sram_area_um2: String,
}

fn rows(table: &[(&str, &str, &str)]) -> (Vec<ComponentRow>, f64) {
    let total: f64 = table.iter().map(|(_, v, _)| v.parse::<f64>().expect("numeric")).sum();
    let rows = table
        .iter()
        .map(|(c, v, p)| ComponentRow {
            component: c.to_string(),
            value: v.to_string(),
            listed_percentage: p.to_string(),
            computed_percentage: v.parse::<f64>().expect("numeric") / total * 100.0,
        })
        .collect();
    (rows, total)
}

pub fn area_power_report() -> AreaPowerReport {
    let (area_um2, area_total_um2) = rows(&AREA);
    let (power_nw, power_total_nw) = rows(&POWER);
    AreaPowerReport {
        area_um2,
        area_total_um2,
        power_nw,
        power_total_nw,
        transpose_sram_area_um2: TRANSPOSE_SRAM_AREA_UM2.to_string(),
    }
}

impl AreaPowerReport {
    pub fn power_of(&self, component: &str) -> Option<f64> {
        self.power_nw.iter().find(|r| r.component == component).map(ComponentRow::number)
    }
}

/// Coarse energy per image: listed power times the time each unit is busy.
/// Derived from the power table, not a measured figure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub adder_nj: f64,
    pub accumulator_nj: f64,
    pub sfu_nj: f64,
    pub total_nj: f64,
}

/// `reduce_ns` keeps the adder tree and accumulators busy, `sfu_ns` the
/// ReLU/BatchNorm/Quantize/Maxpool units.
pub fn energy_estimate(report: &AreaPowerReport, reduce_ns: f64, sfu_ns: f64) -> EnergyEstimate {
    // nW * ns = 1e-18 J = 1e-9 nJ
    let e = |c: &str, t: f64| report.power_of(c).unwrap_or(0.0) * t * 1e-9;
    let adder_nj = e("4096 Adder", reduce_ns);
    let accumulator_nj = e("Accumulator", reduce_ns);
    let sfu_nj = ["Relu", "Batchnorm", "Quantize", "Maxpool"].iter().map(|c| e(c, sfu_ns)).sum();
    EnergyEstimate { adder_nj, accumulator_nj, sfu_nj, total_nj: adder_nj + accumulator_nj + sfu_nj }
}
