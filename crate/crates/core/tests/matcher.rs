//! The coincidence matcher against brute-force oracles and closed-form counts.

use std::collections::BTreeSet;

use proptest::prelude::*;

use dcqe_core::analysis::oracle::independent_poisson_streams;
use dcqe_core::{
    match_coincidences, nominal_offsets, run_pipeline, run_simulation, Apparatus, ApparatusConfig, D0Click, DetectorId,
    EventStreams, IdlerClick, NominalOffsets, SimOptions,
};

/// Every (D0, idler) index pair inside the window.
fn candidates(s: &EventStreams, w: f64, off: &NominalOffsets) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for (i, a) in s.d0.iter().enumerate() {
        for (j, b) in s.idler.iter().enumerate() {
            if (b.t - a.t - off.get(b.detector)).abs() <= w {
                v.push((i, j));
            }
        }
    }
    v
}

fn unambiguous(c: &[(usize, usize)]) -> bool {
    let is: BTreeSet<_> = c.iter().map(|p| p.0).collect();
    let js: BTreeSet<_> = c.iter().map(|p| p.1).collect();
    is.len() == c.len() && js.len() == c.len()
}

/// Quadratic restatement of the greedy rule.
fn greedy_reference(s: &EventStreams, w: f64, off: &NominalOffsets) -> Vec<(usize, usize)> {
    let mut used = vec![false; s.idler.len()];
    let mut out = Vec::new();
    for (i, a) in s.d0.iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for (j, b) in s.idler.iter().enumerate() {
            let cost = (b.t - a.t - off.get(b.detector)).abs();
            if used[j] || cost > w {
                continue;
            }
            if best.is_none_or(|(c, _)| cost < c) {
                best = Some((cost, j));
            }
        }
        if let Some((_, j)) = best {
            used[j] = true;
            out.push((i, j));
        }
    }
    out
}

fn pairs(s: &EventStreams, w: f64, off: &NominalOffsets) -> Vec<(usize, usize)> {
    match_coincidences(s, w, off).unwrap().iter().map(|r| (r.d0_index, r.idler_index)).collect()
}

fn det(k: u8) -> DetectorId {
    DetectorId::from_idler_index(k as usize % 4)
}

prop_compose! {
    /// Up to 20 clicks in well-separated slots: each slot holds a true pair
    /// inside the window, a lone D0 click, or a lone idler click.
    fn separated_fixture()(slots in prop::collection::vec((0u8..3, 0u8..4, -0.9f64..0.9), 1..=10),
                           offs in prop::array::uniform4(0.0f64..20.0)) -> (EventStreams, NominalOffsets) {
        let w = 1.0;
        let (mut d0, mut idler) = (Vec::new(), Vec::new());
        for (s, &(kind, k, frac)) in slots.iter().enumerate() {
            let t = 100.0 * s as f64;
            let id = s as u64;
            let d = det(k);
            match kind {
                0 => {
                    d0.push(D0Click { pair_id: id, x: 0.0, t });
                    idler.push(IdlerClick { pair_id: id, detector: d, t: t + offs[k as usize] + frac * w });
                }
                1 => d0.push(D0Click { pair_id: id, x: 0.0, t }),
                _ => idler.push(IdlerClick { pair_id: id, detector: d, t: t + 50.0 }),
            }
        }
        (EventStreams::from_clicks(d0, idler), NominalOffsets(offs))
    }
}

proptest! {
    #[test]
    fn greedy_equals_brute_force_on_unambiguous_fixtures((s, off) in separated_fixture()) {
        let c = candidates(&s, 1.0, &off);
        prop_assert!(unambiguous(&c));
        prop_assert_eq!(pairs(&s, 1.0, &off), c);
    }

    #[test]
    fn greedy_equals_quadratic_reference(d0t in prop::collection::vec(0.0f64..50.0, 0..10),
                                         idl in prop::collection::vec((0.0f64..60.0, 0u8..4), 0..10),
                                         w in 0.5f64..8.0) {
        let d0 = d0t.iter().enumerate().map(|(i, &t)| D0Click { pair_id: i as u64, x: 0.0, t }).collect();
        let idler = idl.iter().enumerate().map(|(i, &(t, k))| IdlerClick { pair_id: 100 + i as u64, detector: det(k), t }).collect();
        let s = EventStreams::from_clicks(d0, idler);
        let off = NominalOffsets([1.0, 2.0, 3.0, 4.0]);
        let got = pairs(&s, w, &off);
        prop_assert_eq!(&got, &greedy_reference(&s, w, &off));
        if unambiguous(&candidates(&s, w, &off)) {
            prop_assert_eq!(got, candidates(&s, w, &off));
        }
    }
}

#[test]
fn accidentals_follow_closed_form() {
    let rate = 2e3;
    let duration = 500.0;
    for (k, w) in [2e-7, 1e-6, 5e-6].into_iter().enumerate() {
        let s = independent_poisson_streams(rate, duration, 40 + k as u64);
        let expected = 2.0 * rate * rate * w * duration;
        let got = match_coincidences(&s, w, &NominalOffsets::uniform(0.0)).unwrap().len() as f64;
        assert!((got - expected).abs() < 5.0 * expected.sqrt(), "W = {w}: {got} vs {expected}");
    }
}

#[test]
fn low_rate_purity() {
    let mut cfg = ApparatusConfig::default();
    cfg.pair_rate = 1e3;
    let a = Apparatus::validate(cfg).unwrap();
    let out = run_pipeline(&a, 200_000, 3, &SimOptions::default()).unwrap();
    let truth = out.records.iter().filter(|r| r.true_pair).count();
    assert!(truth as f64 / out.records.len() as f64 >= 0.999);
    assert!(out.records.len() as f64 > 0.999 * 200_000.0);
}

#[test]
fn true_matches_grow_with_window() {
    let a = Apparatus::validate(ApparatusConfig::default()).unwrap();
    let s = run_simulation(&a, 50_000, 6, &SimOptions::default()).unwrap();
    let off = nominal_offsets(&a);
    let sigma = a.config().effective_timing_width();
    let mut prev = 0;
    for w in [0.1, 0.3, 1.0, 2.0, 4.0, 10.0].map(|m| m * sigma) {
        let n = match_coincidences(&s, w, &off).unwrap().iter().filter(|r| r.true_pair).count();
        assert!(n >= prev, "W = {w}: {n} < {prev}");
        prev = n;
    }
    assert_eq!(prev, 50_000);
}
