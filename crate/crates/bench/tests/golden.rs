use proptest::prelude::*;

use rnsckks_bench::stats::{mann_whitney_greater, summarize};
use rnsckks_bench::vectors::{default_params, dump_test_vectors, replay, VectorFile};

const GOLDEN: &[u8] = include_bytes!("data/golden_vectors.bin");

#[test]
fn golden_file_replays() {
    let report = replay(GOLDEN).unwrap();
    assert!(report.ok(), "{:?}", report.mismatched);
}

#[test]
fn golden_file_matches_fresh_dump() {
    assert_eq!(dump_test_vectors(&default_params(), 1).unwrap(), GOLDEN);
}

#[test]
fn flipped_payload_byte_is_reported() {
    let file = VectorFile::parse(GOLDEN).unwrap();
    let mut bytes = GOLDEN.to_vec();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    let report = replay(&bytes).unwrap();
    assert!(!report.ok());
    assert_eq!(report.mismatched, vec![file.sections.last().unwrap().0.clone()]);
}

proptest! {
    #[test]
    fn summary_is_ordered(v in prop::collection::vec(0.0..1e3f64, 1..200)) {
        let s = summarize(&v);
        prop_assert!(s.p10 <= s.median && s.median <= s.p90);
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= s.p10 && s.p90 <= hi);
    }

    #[test]
    fn shifted_samples_test_greater(v in prop::collection::vec(0.0..1.0f64, 30..60)) {
        let shifted: Vec<f64> = v.iter().map(|x| x + 2.0).collect();
        prop_assert!(mann_whitney_greater(&shifted, &v) < 1e-6);
        prop_assert!(mann_whitney_greater(&v, &shifted) > 0.99);
    }
}
