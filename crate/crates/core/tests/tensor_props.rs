//! Property tests for the multipartite state core.

use proptest::prelude::*;
use qrdw::layout::SystemLayout;
use qrdw::linalg::{self, c, CVec};
use qrdw::state::{haar_pure, random_mixed, rng_stream, QuantumState};

#[test]
fn partial_trace_preserves_trace_bulk() {
    // 1000 random states, mixed and pure, across a few layouts
    let mut rng = rng_stream(101, 0);
    for k in 0..1000 {
        let layout = match k % 3 {
            0 => SystemLayout::of(&[("A", 2), ("B", 2)]),
            1 => SystemLayout::of(&[("A", 2), ("B", 3), ("C", 2)]),
            _ => SystemLayout::of(&[("A", 3), ("B", 2)]),
        };
        let s = if k % 2 == 0 {
            haar_pure(layout, &mut rng)
        } else {
            random_mixed(layout, 2, &mut rng)
        };
        let reduced = s.partial_trace(&["A"]).unwrap();
        let tr = linalg::trace(&reduced.density()).re;
        assert!((tr - 1.0).abs() < 1e-10, "trace drifted to {tr}");
    }
}

#[test]
fn disjoint_traces_commute_tightly() {
    let mut rng = rng_stream(102, 0);
    for _ in 0..100 {
        let layout = SystemLayout::of(&[("A", 2), ("B", 2), ("C", 3)]);
        let s = haar_pure(layout, &mut rng);
        let ab = s.partial_trace(&["A", "B"]).unwrap();
        let a_via_b = ab.partial_trace(&["A"]).unwrap();
        let joint = s.partial_trace(&["A"]).unwrap();
        let diff = (a_via_b.density() - joint.density()).map(|z| z.norm()).max();
        assert!(diff < 1e-12, "sequential vs joint trace differ by {diff}");
    }
}

#[test]
fn purify_round_trips_random_mixed_states() {
    let mut rng = rng_stream(103, 0);
    for _ in 0..200 {
        let layout = SystemLayout::of(&[("Q", 3)]);
        let s = random_mixed(layout, 3, &mut rng);
        let p = s.purify("E").unwrap();
        assert!(p.is_pure_form());
        let back = p.partial_trace(&["Q"]).unwrap();
        let diff = (back.density() - s.density()).map(|z| z.norm()).max();
        assert!(diff < 1e-9, "round trip residual {diff}");
    }
}

#[test]
fn tensor_is_associative_entrywise() {
    let mut rng = rng_stream(104, 0);
    for _ in 0..50 {
        let a = haar_pure(SystemLayout::of(&[("A", 2)]), &mut rng);
        let b = haar_pure(SystemLayout::of(&[("B", 3)]), &mut rng);
        let cs = haar_pure(SystemLayout::of(&[("C", 2)]), &mut rng);
        let left = a.tensor(&b).unwrap().tensor(&cs).unwrap();
        let right = a.tensor(&b.tensor(&cs).unwrap()).unwrap();
        assert_eq!(left.layout(), right.layout());
        let (lv, rv) = (left.amplitudes().unwrap(), right.amplitudes().unwrap());
        for (x, y) in lv.iter().zip(rv.iter()) {
            assert!((x - y).norm() < 1e-14);
        }
        // commuted product agrees after explicit reindexing
        let swapped = b.tensor(&a).unwrap().permute(&["A", "B"]).unwrap();
        let direct = a.tensor(&b).unwrap();
        let diff = (swapped.density() - direct.density()).map(|z| z.norm()).max();
        assert!(diff < 1e-14);
    }
}

fn arb_amplitudes(dim: usize) -> impl Strategy<Value = CVec> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim).prop_filter_map(
        "norm too small",
        move |pairs| {
            let mut v = CVec::from_iterator(dim, pairs.iter().map(|(re, im)| c(*re, *im)));
            let n = v.norm();
            if n < 1e-3 {
                return None;
            }
            v /= c(n, 0.0);
            Some(v)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schmidt_spectra_match_between_sides(amp in arb_amplitudes(12)) {
        // for any pure state on A(3) ⊗ B(4), the marginal spectra agree
        let layout = SystemLayout::of(&[("A", 3), ("B", 4)]);
        let s = QuantumState::pure(layout, amp).unwrap();
        let ea = linalg::eigh_values(&s.partial_trace(&["A"]).unwrap().density());
        let eb = linalg::eigh_values(&s.partial_trace(&["B"]).unwrap().density());
        // compare the top three (B has one extra zero)
        for k in 0..3 {
            let a = ea[2 - k];
            let b = eb[3 - k];
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn permute_is_its_own_inverse(amp in arb_amplitudes(12)) {
        let layout = SystemLayout::of(&[("A", 3), ("B", 2), ("C", 2)]);
        let s = QuantumState::pure(layout, amp).unwrap();
        let round = s
            .permute(&["C", "A", "B"]).unwrap()
            .permute(&["A", "B", "C"]).unwrap();
        let (sv, rv) = (s.amplitudes().unwrap(), round.amplitudes().unwrap());
        for (x, y) in sv.iter().zip(rv.iter()) {
            prop_assert!((x - y).norm() < 1e-14);
        }
    }
}
