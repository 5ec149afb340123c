mod support;

use proptest::prelude::*;
use support::records::Record;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn composed_records_match_finite_differences(seed in any::<u64>()) {
        let record = Record::random(seed);
        let worst = record.worst_violation();
        prop_assert!(worst <= 1.0, "{record:?}: {worst}");
    }
}

#[test]
fn replay_is_bitwise_identical() {
    for seed in 0..20 {
        let record = Record::random(seed);
        let (a, _, oa) = record.build(&record.leaves).unwrap();
        let (b, _, ob) = record.build(&record.leaves).unwrap();
        assert_eq!(a.value(oa).data(), b.value(ob).data());
    }
}
