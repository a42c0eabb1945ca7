mod support;

use agritwin::geo;
use agritwin::hub::{Comparator, Scalar, TwinQuery};
use agritwin::twin::TwinKind;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn query_equals_brute_force(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bad = registry_mismatches(&mut rng, 1, 20);
        prop_assert!(bad.is_empty(), "{bad:#?}");
    }

    #[test]
    fn library_centroid_matches_fan_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ring = random_ring(&mut rng, [7.5, 49.5]);
        let [ax, ay] = geo::centroid(&ring);
        let [bx, by] = fan_centroid(&ring);
        prop_assert!((ax - bx).abs() < 1e-9 && (ay - by).abs() < 1e-9);
    }

    #[test]
    fn empty_query_returns_everything(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = random_registry(&mut rng, 30);
        prop_assert_eq!(case.hub.query(&TwinQuery::all()).unwrap().len(), case.oracle.len());
    }
}

#[test]
fn mixed_kinds_never_match() {
    assert!(!Comparator::Eq.holds(&Scalar::Number(1.0), &Scalar::Text("1".into())));
    assert!(!Comparator::Lt.holds(&Scalar::Boolean(false), &Scalar::Boolean(true)));
    assert!(Comparator::Eq.holds(&Scalar::Boolean(true), &Scalar::Boolean(true)));
}

#[test]
fn kind_and_text_predicate() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let case = random_registry(&mut rng, 60);
    let q = TwinQuery {
        kind: Some(TwinKind::FieldTwin),
        ..TwinQuery::all()
    }
    .with_predicate(sid("crop.type"), Comparator::Eq, "sugar beet");
    let got = case.hub.query(&q).unwrap();
    assert_eq!(got, brute_force(&case.oracle, &q));
    assert!(!got.is_empty());
}
