use pim_dram::cost::{add_count, and_count, intermediate_add_aap_count, mul_aap_count};
use pim_dram::trace::{AapKind, AapTrace, OpKind};
use pim_dram::{Precision, RowLayout, SubarrayState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn precision(n: u32) -> Precision {
    Precision::new(n).unwrap()
}

/// Multiplies every pair in one SIMD pass and returns the products and the trace.
fn run_pairs(n: u32, pairs: &[(u64, u64)]) -> (Vec<u64>, AapTrace) {
    let p = precision(n);
    let mut s = SubarrayState::new(RowLayout::min_rows(p), pairs.len(), p).unwrap();
    for (c, &(a, b)) in pairs.iter().enumerate() {
        s.write_operand_column(c, a, b).unwrap();
    }
    s.multiply(0..pairs.len()).unwrap();
    let products = (0..pairs.len()).map(|c| s.read_product_column(c).unwrap()).collect();
    (products, s.take_trace())
}

fn all_pairs(n: u32) -> Vec<(u64, u64)> {
    let m = 1u64 << n;
    (0..m).flat_map(|a| (0..m).map(move |b| (a, b))).collect()
}

#[test]
fn exhaustive_products_up_to_6_bits() {
    for n in 1..=6 {
        let pairs = all_pairs(n);
        let (products, trace) = run_pairs(n, &pairs);
        for (&(a, b), &p) in pairs.iter().zip(&products) {
            assert_eq!(p, a * b, "n={n}: {a} x {b}");
        }
        assert_eq!(trace.total_aap(), mul_aap_count(n));
        assert_eq!(trace.and_ops(), and_count(n));
        assert_eq!(trace.add_ops(), add_count(n));
    }
}

#[test]
fn random_8_bit_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let pairs: Vec<(u64, u64)> = (0..10_000).map(|_| (rng.gen_range(0..256), rng.gen_range(0..256))).collect();
    let (products, trace) = run_pairs(8, &pairs);
    for (&(a, b), &p) in pairs.iter().zip(&products) {
        assert_eq!(p, a * b);
    }
    assert_eq!(trace.total_aap(), 1592);
}

#[test]
fn op_spans_cost_exactly() {
    for n in 1..=8 {
        let (_, trace) = run_pairs(n, &[(1, 1)]);
        for span in trace.spans() {
            match span.kind {
                OpKind::And => {
                    assert_eq!(span.len(), 3);
                    assert_eq!(trace.events()[span.end - 1].kind, AapKind::AndStage);
                }
                OpKind::Add if n > 2 => assert_eq!(span.len() as u64, intermediate_add_aap_count(n)),
                OpKind::Add => assert_eq!(span.len(), 3),
            }
        }
        assert_eq!(trace.count_kind(AapKind::AndStage), and_count(n));
    }
}

#[test]
fn trace_is_data_independent_and_simd() {
    for n in 1..=6 {
        let (_, zero) = run_pairs(n, &[(0, 0)]);
        let (_, max) = run_pairs(n, &[((1 << n) - 1, (1 << n) - 1)]);
        let (_, wide) = run_pairs(n, &all_pairs(n.min(4)).into_iter().map(|(a, b)| (a % (1 << n), b % (1 << n))).collect::<Vec<_>>());
        assert_eq!(zero.events(), max.events());
        assert_eq!(zero.events(), wide.events());
    }
}

#[test]
fn operands_survive_multiply() {
    let p = precision(5);
    let mut s = SubarrayState::new(RowLayout::min_rows(p) + 10, 32, p).unwrap();
    for c in 0..32 {
        s.write_operand_column(c, c as u64, 31 - c as u64).unwrap();
    }
    s.multiply(0..32).unwrap();
    for c in 0..32 {
        assert_eq!(s.read_operands(0, c).unwrap(), (c as u64, 31 - c as u64));
        assert_eq!(s.read_product_column(c).unwrap(), c as u64 * (31 - c as u64));
    }
    // row0 still reads zero, ready for the next multiply
    assert!(s.row_bits(8).iter().all(|&b| !b));
}

#[test]
fn stacked_slots_multiply_independently() {
    let p = precision(4);
    let mut s = SubarrayState::new(RowLayout::min_rows(p) + 16, 4, p).unwrap();
    assert_eq!(s.layout().pair_slots(), 3);
    for slot in 0..3 {
        for c in 0..4 {
            s.write_operands(slot, c, (slot * 4 + c) as u64, 3).unwrap();
        }
    }
    for slot in 0..3 {
        s.multiply_slot(slot, 0..4).unwrap();
        for c in 0..4 {
            assert_eq!(s.read_product_column(c).unwrap(), 3 * (slot * 4 + c) as u64);
        }
    }
}

#[test]
fn golden_two_bit_trace() {
    let (_, trace) = run_pairs(2, &[(3, 2)]);
    let golden = include_str!("golden/mul_n2.trace");
    assert_eq!(trace.to_text(), golden);
    let (events, summary) = AapTrace::from_text(golden).unwrap();
    assert_eq!(events, trace.events());
    assert_eq!(summary.total_aap, 19);
    assert_eq!(summary.and_ops, 4);
    assert_eq!(summary.add_ops, 2);
}

proptest! {
    #[test]
    fn random_products_n7_n8(n in 7u32..=8, a in 0u64..256, b in 0u64..256) {
        let m = (1u64 << n) - 1;
        let (products, trace) = run_pairs(n, &[(a & m, b & m)]);
        prop_assert_eq!(products[0], (a & m) * (b & m));
        prop_assert_eq!(trace.total_aap(), mul_aap_count(n));
    }
}
