//! Acceptance suite. Prints one line per criterion and fails the process if
//! any criterion fails.
//!
//! | # | Criterion | Tolerance |
//! |---|-----------|-----------|
//! | 1 | multiply == integer product, n = 1..6 exhaustive, 10^4 random at n = 8 | exact |
//! | 2 | multiply AAPs == closed form, AND events == n^2, ADD == 4n+1, n = 1..8 | exact |
//! | 3 | multiply -> tree -> accumulate == sum a_i b_i, >= 100 random MACs | exact |
//! | 4 | presets x parallelism vectors: no violations, counts and footprint | exact |
//! | 5 | pipeline: total(B) - total(B-1) == steady state, overlap pattern | exact |
//! | 6 | latency strictly increasing in n; multiply ratio 19:168:1592 | exact |
//! | 7 | area/power tables verbatim | exact string |
//! | 8 | conv + linear toy network, functional, vs oracle, < 10 s | exact |

use std::collections::BinaryHeap;
use std::cmp::Reverse;
use std::time::{Duration, Instant};

use pim_dram::datapath::accumulator::AccumulatorState;
use pim_dram::datapath::adder_tree::AdderTreeConfig;
use pim_dram::mapper::{footprint_bits, map_network, validate_plan, MapperConfig};
use pim_dram::network::{ConvSpec, LayerKind, LayerSpec, NetworkDescription, Preset};
use pim_dram::runner::{network_timing, run, synthetic_workload, Mode, RunConfig};
use pim_dram::timing::{pipeline_schedule, Femtos, TimingParams};
use pim_dram::{AapKind, Precision, RowLayout, SubarrayState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn p(n: u32) -> Precision {
    Precision::new(n).unwrap()
}

/// Multiplies every `(a, b)` in one SIMD pass and returns the products.
fn simd_products(n: u32, pairs: &[(u64, u64)]) -> Result<(Vec<u64>, pim_dram::AapTrace), String> {
    let mut sa = SubarrayState::new(RowLayout::min_rows(p(n)), pairs.len(), p(n)).map_err(|e| e.to_string())?;
    for (c, &(a, b)) in pairs.iter().enumerate() {
        sa.write_operand_column(c, a, b).map_err(|e| e.to_string())?;
    }
    sa.multiply(0..pairs.len()).map_err(|e| e.to_string())?;
    let out = (0..pairs.len()).map(|c| sa.read_product_column(c).unwrap()).collect();
    Ok((out, sa.take_trace()))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut checked = 0usize;
    for n in 1..=6u32 {
        let max = 1u64 << n;
        let pairs: Vec<(u64, u64)> = (0..max).flat_map(|a| (0..max).map(move |b| (a, b))).collect();
        let (got, _) = simd_products(n, &pairs)?;
        for (&(a, b), &g) in pairs.iter().zip(&got) {
            ensure(g == a * b, || format!("n={n}: {a}*{b} gave {g}"))?;
        }
        checked += pairs.len();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce97);
    let pairs: Vec<(u64, u64)> = (0..10_000).map(|_| (rng.gen_range(0..256), rng.gen_range(0..256))).collect();
    let (got, _) = simd_products(8, &pairs)?;
    for (&(a, b), &g) in pairs.iter().zip(&got) {
        ensure(g == a * b, || format!("n=8: {a}*{b} gave {g}"))?;
    }
    checked += pairs.len();
    let took = start.elapsed();
    ensure(took < Duration::from_secs(120), || format!("took {took:?}"))?;
    Ok(format!("{checked} products exact in {took:.2?}"))
}

/// Closed-form AAP count, written out independently of the library.
fn expected_mul_aap(n: u64) -> u64 {
    if n <= 2 {
        3 * n * n + 3 * (n - 1) * (n - 1) + 4
    } else {
        3 * n * n + 4 * (n - 1).pow(3) + 4 * (n - 1)
    }
}

fn criterion_2() -> Outcome {
    ensure(expected_mul_aap(2) == 19 && expected_mul_aap(4) == 168, || "closed form".into())?;
    let mut totals = Vec::new();
    for n in 1..=8u32 {
        let pairs = [(0, 0), (1u64 << (n - 1), (1u64 << n) - 1), ((1u64 << n) - 1, (1u64 << n) - 1)];
        let (_, trace) = simd_products(n, &pairs)?;
        let nn = u64::from(n);
        ensure(trace.total_aap() == expected_mul_aap(nn), || {
            format!("n={n}: {} AAPs, expected {}", trace.total_aap(), expected_mul_aap(nn))
        })?;
        ensure(trace.total_aap() == trace.events().len() as u64, || format!("n={n}: event count"))?;
        ensure(trace.count_kind(AapKind::AndStage) == nn * nn && trace.and_ops() == nn * nn, || {
            format!("n={n}: {} AND events", trace.count_kind(AapKind::AndStage))
        })?;

        let mut sa = SubarrayState::new(RowLayout::min_rows(p(n)) + 3 * n as usize + 1, 4, p(n)).map_err(|e| e.to_string())?;
        let base = sa.layout().data_start;
        let bits = n as usize;
        let a: Vec<usize> = (base..base + bits).collect();
        let b: Vec<usize> = (base + bits..base + 2 * bits).collect();
        let s: Vec<usize> = (base + 2 * bits..base + 3 * bits + 1).collect();
        let add = sa.add_bitserial(&a, &b, &s).map_err(|e| e.to_string())?;
        ensure(add.total_aap == 4 * nn + 1, || format!("n={n}: ADD took {} AAPs", add.total_aap))?;
        totals.push(trace.total_aap());
    }
    Ok(format!("multiply AAPs n=1..8: {totals:?}"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3ac);
    let configs = 150;
    for cfg in 0..configs {
        let n = rng.gen_range(1..=4u32);
        let max = (1u64 << n) - 1;
        // one to four MAC groups packed into a 256-input tree
        let sizes: Vec<usize> = (0..rng.gen_range(1..=4)).map(|_| rng.gen_range(1..=64)).collect();
        let tree = AdderTreeConfig::build(256, &sizes).map_err(|e| e.to_string())?;
        let mut sa = SubarrayState::new(RowLayout::min_rows(p(n)), 256, p(n)).map_err(|e| e.to_string())?;
        let mut expected = Vec::new();
        for g in tree.groups() {
            let mut sum = 0u128;
            for c in g.start..g.start + g.size {
                let (a, b) = (rng.gen_range(0..=max), rng.gen_range(0..=max));
                sa.write_operand_column(c, a, b).map_err(|e| e.to_string())?;
                sum += u128::from(a * b);
            }
            expected.push(sum);
        }
        sa.multiply(0..256).map_err(|e| e.to_string())?;
        let mut accs = vec![AccumulatorState::new(); sizes.len()];
        for j in 0..2 * n {
            let sums = tree.reduce(&sa.product_plane(j as usize)).map_err(|e| e.to_string())?;
            for (acc, s) in accs.iter_mut().zip(sums) {
                acc.accumulate_bitplane(s, j).map_err(|e| e.to_string())?;
            }
        }
        let got: Vec<u128> = accs.iter_mut().map(AccumulatorState::finish).collect();
        ensure(got == expected, || format!("config {cfg} (n={n}, sizes {sizes:?}): {got:?} vs {expected:?}"))?;
    }
    Ok(format!("{configs} random MAC configurations exact"))
}

/// Multiplications per layer from the layer geometry.
fn analytic_multiplications(layer: &LayerSpec) -> u64 {
    match &layer.kind {
        LayerKind::Conv(c) => {
            let oh = (c.height - c.kernel_h + 2 * c.padding) / c.stride + 1;
            let ow = (c.width - c.kernel_w + 2 * c.padding) / c.stride + 1;
            (c.out_channels * oh * ow * c.kernel_h * c.kernel_w * c.in_channels) as u64
        }
        LayerKind::Linear(l) => (l.inputs * l.outputs) as u64,
    }
}

fn criterion_4() -> Outcome {
    let n = p(4);
    let cfg = MapperConfig::default();
    let mut plans = 0;
    let mut padding = 0u64;
    for preset in Preset::ALL {
        for vector in preset.parallelism_names() {
            let net = preset.network(n, vector).map_err(|e| e.to_string())?;
            let plan = map_network(&net, &cfg).map_err(|e| format!("{} {vector}: {e}", preset.name()))?;
            let violations = validate_plan(&plan, &net);
            ensure(violations.is_empty(), || format!("{} {vector}: {}", preset.name(), violations[0]))?;
            for (lp, layer) in plan.layers.iter().zip(&net.layers) {
                let expected = analytic_multiplications(layer);
                ensure(lp.placed_multiplications() == expected, || {
                    format!("{} {vector} {}: {} placed vs {expected}", preset.name(), layer.name, lp.placed_multiplications())
                })?;
                if lp.k == 1 {
                    let bound = footprint_bits(layer, 4);
                    ensure(bound == expected * 8, || format!("{}: footprint formula", layer.name))?;
                    ensure(lp.occupied_bits(4) == bound, || {
                        format!("{}: occupied {} vs footprint {bound}", layer.name, lp.occupied_bits(4))
                    })?;
                    padding += lp.padding_columns;
                }
            }
            plans += 1;
        }
    }
    Ok(format!("{plans} plans valid; k=1 occupancy equals footprint, straddle padding {padding} columns reported separately"))
}

/// Event-driven run of the pipeline: image `i` is released at `i * period`,
/// each bank serves images first come first served, and a bank's output
/// reaches the next bank after its transfer. Returns `(start, end)` per
/// `(image, bank)` and the time the last output leaves the last bank.
fn simulate(compute: &[Femtos], transfer: &[Femtos], period: Femtos, images: u64) -> (Vec<Vec<(Femtos, Femtos)>>, Femtos) {
    let banks = compute.len();
    let mut slots = vec![vec![(0, 0); banks]; images as usize];
    let mut free = vec![0 as Femtos; banks];
    let mut queue: BinaryHeap<Reverse<(Femtos, usize, u64)>> = (0..images).map(|i| Reverse((i * period, 0, i))).collect();
    let mut done = 0;
    while let Some(Reverse((ready, b, i))) = queue.pop() {
        let start = ready.max(free[b]);
        let end = start + compute[b];
        free[b] = end;
        slots[i as usize][b] = (start, end);
        if b + 1 < banks {
            queue.push(Reverse((end + transfer[b], b + 1, i)));
        } else {
            done = done.max(end + transfer[b]);
        }
    }
    (slots, done)
}

fn criterion_5() -> Outcome {
    // a real three-layer network's stage times, plus a hand-made unequal one
    let net = NetworkDescription {
        name: "three".into(),
        precision: p(4),
        layers: vec![LayerSpec::linear("fc1", 64, 32), LayerSpec::linear("fc2", 32, 32), LayerSpec::linear("fc3", 32, 10)],
        parallelism: vec![1, 2, 1],
        residuals: vec![],
    };
    let plan = map_network(&net, &MapperConfig::default()).map_err(|e| e.to_string())?;
    let (timings, _, _) = network_timing(&net, &plan, &TimingParams::default(), 1).map_err(|e| e.to_string())?;
    let real: (Vec<Femtos>, Vec<Femtos>) = (timings.iter().map(|t| t.compute()).collect(), timings.iter().map(|t| t.transfer).collect());
    let cases = [real, (vec![1000, 2000, 1000], vec![10, 20, 30]), (vec![1000, 1000, 1000], vec![10, 20, 30])];
    for (compute, transfer) in &cases {
        let mut prev: Option<Femtos> = None;
        for b in 1..=10u64 {
            let s = pipeline_schedule(compute, transfer, 0, b).map_err(|e| e.to_string())?;
            let (slots, done) = simulate(compute, transfer, s.steady_state, b);
            ensure(done == s.total, || format!("B={b}: schedule total {} vs simulated {done}", s.total))?;
            for o in &s.occupancy {
                ensure(slots[o.image as usize][o.bank] == (o.start, o.end), || format!("B={b}: slot {o:?}"))?;
            }
            ensure(s.occupancy.len() as u64 == b * compute.len() as u64, || "occupancy size".into())?;
            let mut by_bank: Vec<Vec<(Femtos, Femtos)>> = vec![Vec::new(); compute.len()];
            for o in &s.occupancy {
                by_bank[o.bank].push((o.start, o.end));
            }
            for (bank, mut v) in by_bank.into_iter().enumerate() {
                v.sort_unstable();
                ensure(v.windows(2).all(|w| w[0].1 <= w[1].0), || format!("B={b}: bank {bank} double booked"))?;
            }
            if let Some(p) = prev {
                ensure(s.total - p == s.steady_state, || format!("B={b}: delta {} vs {}", s.total - p, s.steady_state))?;
            }
            prev = Some(s.total);
        }
        // bank b on image i while bank b-1 is on image i+1
        let s = pipeline_schedule(compute, transfer, 0, 4).map_err(|e| e.to_string())?;
        let at = |i: u64, b: usize| s.occupancy.iter().find(|o| o.image == i && o.bank == b).copied().unwrap();
        for i in 0..3 {
            for b in 1..compute.len() {
                let (x, y) = (at(i, b), at(i + 1, b - 1));
                ensure(x.start.max(y.start) < x.end.min(y.end), || format!("image {i} bank {b}: {x:?} vs {y:?}"))?;
            }
        }
    }
    // equal stages: all three banks busy at once on images k, k+1, k+2
    let s = pipeline_schedule(&[1000; 3], &[10, 20, 30], 0, 3).map_err(|e| e.to_string())?;
    let at = |i: u64, b: usize| s.occupancy.iter().find(|o| o.image == i && o.bank == b).copied().unwrap();
    let (x, y, z) = (at(0, 2), at(1, 1), at(2, 0));
    ensure(x.start.max(y.start).max(z.start) < x.end.min(y.end).min(z.end), || {
        format!("no common window: {x:?} {y:?} {z:?}")
    })?;
    Ok("totals match event simulation, deltas equal steady state for B=2..10, staggered overlap holds".into())
}

fn criterion_6() -> Outcome {
    let cfg = RunConfig::full_scale();
    let net = Preset::AlexNet.network(p(1), "P3").map_err(|e| e.to_string())?;
    let mut totals: Vec<(u32, Femtos, Femtos)> = Vec::new();
    for n in 1..=8 {
        let net = net.clone().with_precision(p(n));
        let plan = map_network(&net, &cfg.mapper_config(p(n)).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let (t, _, sched) = network_timing(&net, &plan, &cfg.timing, 1).map_err(|e| e.to_string())?;
        totals.push((n, t.iter().map(|l| l.multiply).sum(), sched.total));
    }
    for w in totals.windows(2) {
        ensure(w[1].2 > w[0].2, || format!("latency at n={} not above n={}", w[1].0, w[0].0))?;
    }
    let m = |n: u32| totals[n as usize - 1].1;
    ensure(m(2) * 168 == m(4) * 19 && m(4) * 1592 == m(8) * 168, || {
        format!("multiply phases {} : {} : {}", m(2), m(4), m(8))
    })?;
    Ok(format!("AlexNet P3 total ns n=1..8: {:?}", totals.iter().map(|t| t.2 as f64 / 1e6).collect::<Vec<_>>()))
}

fn criterion_7() -> Outcome {
    let r = pim_dram::area::area_power_report();
    let area = [
        ("4096 Adder", "514877", "99.47373"),
        ("Accumulator", "804", "0.15532"),
        ("Relu", "431", "0.083269"),
        ("Maxpool", "983", "0.189915"),
        ("Batchnorm", "506", "0.097759"),
        ("Quantize", "91", "0.017581"),
    ];
    let power = [
        ("4096 Adder", "13200190.9", "95.9014"),
        ("Accumulator", "177765.864", "1.2915"),
        ("Relu", "109913.671", "0.7985"),
        ("Maxpool", "127562.373", "0.9268"),
        ("Batchnorm", "120541.29", "0.8758"),
        ("Quantize", "28366.738", "0.2061"),
    ];
    for (rows, table) in [(&r.area_um2, &area), (&r.power_nw, &power)] {
        ensure(rows.len() == table.len(), || "row count".into())?;
        for (row, (c, v, pct)) in rows.iter().zip(table.iter()) {
            ensure(row.component == *c && row.value == *v && row.listed_percentage == *pct, || {
                format!("{} {} {} vs {c} {v} {pct}", row.component, row.value, row.listed_percentage)
            })?;
            ensure(row.number() == v.parse::<f64>().unwrap(), || format!("{c} numeric value"))?;
        }
    }
    ensure(r.transpose_sram_area_um2 == "30534.894", || r.transpose_sram_area_um2.clone())?;
    ensure(r.area_total_um2 == 517692.0, || format!("area total {}", r.area_total_um2))?;
    Ok("12 table entries and transpose SRAM area verbatim".into())
}

fn toy_network() -> NetworkDescription {
    let conv = ConvSpec {
        height: 4,
        width: 4,
        in_channels: 1,
        out_channels: 2,
        kernel_h: 2,
        kernel_w: 2,
        padding: 0,
        stride: 1,
        pool: None,
    };
    NetworkDescription {
        name: "toy".into(),
        precision: p(4),
        layers: vec![LayerSpec::conv("conv", conv), LayerSpec::linear("fc", 18, 4)],
        parallelism: vec![1, 1],
        residuals: vec![],
    }
}

/// Plain integer inference with round-half-even requantization.
fn toy_oracle(input: &[u64], w_conv: &[u64], w_fc: &[u64], shifts: (u32, u32)) -> Vec<u64> {
    let requant = |x: u64, shift: u32| -> u64 {
        let q = if shift == 0 {
            x
        } else {
            let (q, r, half) = (x >> shift, x & ((1 << shift) - 1), 1u64 << (shift - 1));
            if r > half || (r == half && q % 2 == 1) { q + 1 } else { q }
        };
        q.min(15)
    };
    let mut hidden = Vec::new();
    for o in 0..2 {
        for y in 0..3 {
            for x in 0..3 {
                let mut acc = 0;
                for ky in 0..2 {
                    for kx in 0..2 {
                        acc += input[(y + ky) * 4 + x + kx] * w_conv[o * 4 + ky * 2 + kx];
                    }
                }
                hidden.push(requant(acc, shifts.0));
            }
        }
    }
    (0..4)
        .map(|o| requant((0..18).map(|i| hidden[i] * w_fc[o * 18 + i]).sum(), shifts.1))
        .collect()
}

fn criterion_8() -> Outcome {
    let net = toy_network();
    let cfg = RunConfig { mode: Mode::Functional, seed: 8, ..RunConfig::default() };
    let start = Instant::now();
    let report = run(&net, &cfg).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let work = synthetic_workload(&net, cfg.seed);
    let shifts = (work.layers[0].sfu.quantize.shift, work.layers[1].sfu.quantize.shift);
    let expected = toy_oracle(&work.input, &work.layers[0].weights, &work.layers[1].weights, shifts);
    let got = &report.functional.as_ref().ok_or("no functional report")?.final_output;
    ensure(*got == expected, || format!("outputs {got:?} vs oracle {expected:?}"))?;
    ensure(got.iter().any(|&v| v != 0 && v != 15), || "degenerate output, all zero or saturated".into())?;
    ensure(took < Duration::from_secs(10), || format!("took {took:?}"))?;
    Ok(format!("outputs {got:?} match in {took:.2?}"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("multiplication correctness", criterion_1),
        ("AAP cost exactness", criterion_2),
        ("MAC pipeline identity", criterion_3),
        ("mapping invariants", criterion_4),
        ("pipeline schedule", criterion_5),
        ("precision scaling", criterion_6),
        ("area/power table fidelity", criterion_7),
        ("end-to-end toy inference", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
