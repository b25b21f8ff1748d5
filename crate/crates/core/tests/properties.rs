mod common;

use common::{Fixture, JoinKind, Relation, Shape};
use ppa_core::cost::{batch_ndv, should_push_compute, BatchModel};
use ppa_core::exec::{op_compute, Accumulator, AggSpec};
use ppa_core::plan::{AggFunc, AggInput};
use ppa_core::{FlushMode, Value};
use proptest::prelude::*;

fn accumulator() -> impl Strategy<Value = (Accumulator, Accumulator, Accumulator)> {
    let v = -1_000_000_000i64..1_000_000_000;
    prop_oneof![
        (v.clone(), v.clone(), v.clone()).prop_map(|(a, b, c)| (Accumulator::Sum(a), Accumulator::Sum(b), Accumulator::Sum(c))),
        (0i64..1 << 40, 0i64..1 << 40, 0i64..1 << 40)
            .prop_map(|(a, b, c)| (Accumulator::Count(a), Accumulator::Count(b), Accumulator::Count(c))),
        (v.clone(), v.clone(), v.clone()).prop_map(|(a, b, c)| (Accumulator::Min(a), Accumulator::Min(b), Accumulator::Min(c))),
        (v.clone(), v.clone(), v).prop_map(|(a, b, c)| (Accumulator::Max(a), Accumulator::Max(b), Accumulator::Max(c))),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn merge_is_associative_and_commutative((a, b, c) in accumulator()) {
        prop_assert_eq!(a.merged(&b).merged(&c), a.merged(&b.merged(&c)));
        prop_assert_eq!(a.merged(&b), b.merged(&a));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Splitting the input anywhere and merging the two partial results
    /// equals aggregating it whole.
    #[test]
    fn split_then_merge_equals_whole(
        rows in prop::collection::vec((0i64..6, -50i64..50), 0..200),
        cut in 0usize..200,
    ) {
        let rows: Vec<Vec<Value>> = rows.into_iter().map(|(k, v)| vec![Value::Int(k), Value::Int(v)]).collect();
        let cut = cut.min(rows.len());
        let funcs = [AggFunc::Sum, AggFunc::Count, AggFunc::Min, AggFunc::Max];
        let raw: Vec<AggSpec> = funcs.iter().map(|&f| AggSpec { func: f, input: Some(1) }).collect();
        let partial: Vec<AggSpec> = (0..funcs.len()).map(|i| AggSpec { func: funcs[i], input: Some(i + 1) }).collect();
        let whole = op_compute(&rows, &[0], &raw, AggInput::Raw, FlushMode::Partition, 0).unwrap();
        let mut parts = op_compute(&rows[..cut], &[0], &raw, AggInput::Raw, FlushMode::Batch, 7).unwrap();
        parts.extend(op_compute(&rows[cut..], &[0], &raw, AggInput::Raw, FlushMode::Partition, 0).unwrap());
        let mut merged = op_compute(&parts, &[0], &partial, AggInput::Partial, FlushMode::Partition, 0).unwrap();
        let mut whole = whole;
        merged.sort();
        whole.sort();
        prop_assert_eq!(merged, whole);
    }
}

#[test]
fn batch_ndv_monotone_and_bounded() {
    let ndvs = [1u64, 2, 10, 100, 1_000, 10_000, 1_000_000, 1_000_000_000];
    let batches = [1u64, 2, 16, 100, 1_000, 1_024, 10_000, 100_000];
    for &n in &ndvs {
        let mut prev = 0.0f64;
        for &b in &batches {
            let v: f64 = batch_ndv(n, b, false);
            assert!(v <= n as f64 + 1e-9 && v <= b as f64 + 1e-9, "bound at ({n}, {b}): {v}");
            assert!(v >= prev, "not monotone in B at ({n}, {b})");
            prev = v;
        }
    }
    for &b in &batches {
        let mut prev = 0.0f64;
        for &n in &ndvs {
            let v: f64 = batch_ndv(n, b, false);
            assert!(v >= prev - 1e-9, "not monotone in ndv at ({n}, {b})");
            prev = v;
        }
    }
    // f32 follows f64 closely
    for &n in &ndvs[..6] {
        for &b in &batches[..6] {
            let a: f64 = batch_ndv(n, b, false);
            let s: f32 = batch_ndv(n, b, false);
            assert!(((s as f64) - a).abs() <= 1e-5 * a.max(1.0));
        }
    }
}

#[test]
fn batch_model_aliases() {
    let m = ppa_core::BatchModelF64::new(100, 1000, false);
    assert!((m.ndv_batch - 99.99546000702375).abs() < 1e-9);
    let m = BatchModel::<f32>::new(1_000, 1_000, true);
    assert_eq!(m.ndv_batch, 1_000.0);
    assert!(should_push_compute(10_000, 1_000_000, 0.5));
    assert!(!should_push_compute(600_000, 1_000_000, 0.5f32));
}

#[test]
fn generation_is_seed_stable() {
    let fx = Fixture {
        fact_rows: 2_000,
        dim_rows: 60,
        key_ndv: 60,
        kind: JoinKind::FkPk,
        relation: Relation::Equal,
        shape: Shape::Zipf,
        dim_grouping: false,
        seed: 77,
    };
    let dump = |fx: &Fixture| {
        let built = fx.build();
        let mut bytes = Vec::new();
        for d in built.datasets.values() {
            d.write_delimited(&mut bytes).unwrap();
        }
        bytes
    };
    assert_eq!(dump(&fx), dump(&fx));
    assert_ne!(dump(&fx), dump(&Fixture { seed: 78, ..fx.clone() }));
}
