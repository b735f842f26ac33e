use std::collections::BTreeMap;

use proptest::prelude::*;
use ptseg::metrics::{aggregate, contour_f, region_j, score_sequence, ObjectGt, VisibilityBucket};
use ptseg::{BinaryMask, ObjectId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::metric_oracle::{oracle_f, oracle_j, random_mask, rect};

#[test]
fn contour_f_matches_bipartite_oracle_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..240 {
        let w = rng.gen_range(4..=32);
        let h = rng.gen_range(4..=32);
        let a = random_mask(&mut rng, w, h);
        let b = random_mask(&mut rng, w, h);
        let tol = rng.gen_range(0..=4);
        let got = contour_f(&a, &b, tol).unwrap();
        worst = worst.max((got - oracle_f(&a, &b, tol)).abs());
        assert_eq!(region_j(&a, &b).unwrap(), oracle_j(&a, &b));
    }
    assert!(worst <= 1e-6, "max deviation {worst}");
}

#[test]
fn shifted_square_examples() {
    let a = rect(32, 32, 8, 8, 12, 12);
    let one = rect(32, 32, 9, 8, 12, 12);
    assert_eq!(contour_f(&a, &one, 1).unwrap(), 1.0);
    assert_eq!(oracle_f(&a, &one, 1), 1.0);
    let five = rect(32, 32, 13, 8, 12, 12);
    let got = contour_f(&a, &five, 1).unwrap();
    assert!((got - oracle_f(&a, &five, 1)).abs() < 1e-12);
    assert!(got > 0.0 && got < 1.0);
}

#[test]
fn many_to_one_is_not_double_counted() {
    // A thick pred boundary near a thin GT line: several pred pixels compete
    // for the same GT pixels, so precision stays below 1.
    let gt = rect(16, 16, 4, 4, 1, 8);
    let pred = rect(16, 16, 3, 4, 3, 8);
    let got = contour_f(&pred, &gt, 1).unwrap();
    assert!((got - oracle_f(&pred, &gt, 1)).abs() < 1e-12);
    assert!(got < 1.0);
}

#[test]
fn region_j_examples() {
    let a = rect(32, 32, 0, 0, 10, 10);
    let b = rect(32, 32, 5, 0, 10, 10);
    assert_eq!(region_j(&a, &b).unwrap(), 50.0 / 150.0);
    assert_eq!(region_j(&a, &a).unwrap(), 1.0);
    assert!(region_j(&a, &BinaryMask::new(31, 32)).is_err());
    assert!(contour_f(&a, &BinaryMask::new(31, 32), 1).is_err());
}

#[test]
fn sequence_aggregation() {
    let g = rect(16, 16, 2, 2, 6, 6);
    let n = 8;
    let mut gt = BTreeMap::new();
    // Object 1 visible on 4 frames, object 2 on all 8.
    gt.insert(
        ObjectId(1),
        ObjectGt {
            first_frame: 0,
            masks: (0..n)
                .map(|t| Some(if t < 4 { g.clone() } else { BinaryMask::new(16, 16) }))
                .collect(),
        },
    );
    gt.insert(
        ObjectId(2),
        ObjectGt {
            first_frame: 0,
            masks: vec![Some(g.clone()); n],
        },
    );
    let pred: BTreeMap<_, _> = gt
        .iter()
        .map(|(&id, o)| (id, o.masks.clone()))
        .collect();
    let s = score_sequence("toy", &gt, &pred, None).unwrap();
    assert_eq!(s.jf, 1.0);
    assert_eq!(s.objects[0].bucket, Some(VisibilityBucket::Short));
    assert_eq!(s.objects[1].bucket, Some(VisibilityBucket::Medium));
    let d = aggregate(vec![s]);
    assert_eq!(d.jf, 1.0);
    assert_eq!(d.missing_predictions, 0);
}

fn arb_mask() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    (2u32..=16, 2u32..=16).prop_flat_map(|(w, h)| {
        let n = (w * h) as usize;
        (
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(a, b)| {
                let to = |v: Vec<bool>| {
                    let bytes: Vec<u8> = v.into_iter().map(u8::from).collect();
                    BinaryMask::from_bytes(w, h, &bytes).unwrap()
                };
                (to(a), to(b))
            })
    })
}

proptest! {
    #[test]
    fn scores_are_symmetric_and_bounded((a, b) in arb_mask(), tol in 0u32..4) {
        let j = region_j(&a, &b).unwrap();
        let f = contour_f(&a, &b, tol).unwrap();
        prop_assert_eq!(j, region_j(&b, &a).unwrap());
        prop_assert!((f - contour_f(&b, &a, tol).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn eroding_a_correct_prediction_never_raises_j((a, _b) in arb_mask(), r in 1u32..3) {
        let eroded = a.erode(r);
        prop_assert!(region_j(&eroded, &a).unwrap() <= region_j(&a, &a).unwrap());
    }

    #[test]
    fn contour_f_agrees_with_oracle((a, b) in arb_mask(), tol in 0u32..4) {
        let got = contour_f(&a, &b, tol).unwrap();
        prop_assert!((got - oracle_f(&a, &b, tol)).abs() <= 1e-6);
    }
}
