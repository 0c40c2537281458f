use leafdyn::flow::{FlowParams, Letter, Word};
use leafdyn::foliated::{circle_diff, foliated_flow, h0, FiberMap, FoliatedState, SuspensionFoliation, TransverseMeasure};
use leafdyn::linearization::LinearizationParams;
use leafdyn::{ChartPoint, Error, MetricModel, UnitTangentVector};
use proptest::prelude::*;

fn letters(signed: &[i64]) -> Word {
    Word(signed.iter().map(|&k| Letter::from_signed(k).unwrap()).collect())
}

#[test]
fn holonomy_words() {
    let rot = SuspensionFoliation::rotations([0.3, 0.1, 0.0, 0.7]).unwrap();
    assert_eq!(rot.holonomy_apply(&Word::new(), 0.42).unwrap(), 0.42);
    assert!((rot.holonomy_apply(&letters(&[1, 1]), 0.5).unwrap() - 0.1).abs() < 1e-12);
    let mob = SuspensionFoliation::boundary_action();
    for k in 1..=4 {
        for x in [0.0, 0.13, 0.77] {
            let y = mob.holonomy_apply(&letters(&[k, -k]), x).unwrap();
            assert!(circle_diff(y, x).abs() < 1e-12);
        }
    }
    assert!(matches!(rot.holonomy_apply(&Word(vec![Letter::gen(6)]), 0.1), Err(Error::UnknownGenerator(6))));
}

#[test]
fn shipped_holonomies_satisfy_the_relation() {
    for s in [SuspensionFoliation::trivial(), SuspensionFoliation::irrational_rotations(), SuspensionFoliation::boundary_action()] {
        assert!(s.relation_defect(2048).unwrap() < 1e-6);
    }
    // translations along distinct axes do not commute
    let bad = (0..4).map(|k| FiberMap::Mobius { c: [0.5 * (0.6 * k as f64).cos(), 0.5 * (0.6 * k as f64).sin()], turn: 0.0 }).collect();
    assert!(matches!(SuspensionFoliation::new(bad), Err(Error::Invalid(_))));
    assert!(SuspensionFoliation::new(vec![FiberMap::Identity; 3]).is_err());
}

#[test]
fn fiber_follows_the_fold_word() {
    let fp = FlowParams::default();
    let s0 = FoliatedState { v: UnitTangentVector::new(0.1, -0.2, 0.9), fiber: 0.35 };
    let triv = SuspensionFoliation::trivial();
    assert_eq!(foliated_flow(&triv, &s0, 6.0, &fp).unwrap().fiber, 0.35);
    let mob = SuspensionFoliation::boundary_action();
    let same = foliated_flow(&mob, &s0, 0.0, &fp).unwrap();
    assert_eq!((same.v.base, same.fiber), (s0.v.base, s0.fiber));
    assert!((same.v.theta - s0.v.theta).abs() < 1e-14);
    let there = foliated_flow(&mob, &s0, 3.0, &fp).unwrap();
    let back = foliated_flow(&mob, &there, -3.0, &fp).unwrap();
    assert!(circle_diff(back.fiber, s0.fiber).abs() < 1e-9);
    // the fiber moved by the holonomy of the base fold word
    let (_, word) = mob.base.advance(&s0.v, 3.0, &fp).unwrap();
    assert!(!word.is_empty());
    assert!(circle_diff(mob.holonomy_apply(&word, s0.fiber).unwrap(), there.fiber).abs() < 1e-12);
}

#[test]
fn rotations_preserve_lebesgue() {
    let s = SuspensionFoliation::irrational_rotations();
    let bins = 256;
    let nu = TransverseMeasure::uniform(bins);
    assert!(s.invariance_defect(&nu) < 1.0 / bins as f64);
    let rn = s.radon_nikodym_estimate(&nu, Letter::gen(1)).unwrap();
    assert!(rn.flagged.is_empty());
    assert!(rn.ratio.iter().all(|r| (r.unwrap() - 1.0).abs() < 1e-9));
}

#[test]
fn north_south_maps_do_not() {
    let s = SuspensionFoliation::boundary_action();
    let nu = TransverseMeasure::uniform(256);
    assert!(s.invariance_defect(&nu) > 0.1);
}

#[test]
fn radon_nikodym_is_the_inverse_derivative() {
    // density of g_*Leb is (g⁻¹)'; linear rebinning is first order in the bin width
    let s = SuspensionFoliation::boundary_action();
    for bins in [256usize, 1024] {
        let nu = TransverseMeasure::uniform(bins);
        for k in 0..4 {
            let inv = s.holonomy[k].inverse();
            let rn = s.radon_nikodym_estimate(&nu, Letter::gen(k)).unwrap();
            let mut l1 = 0.0;
            for (i, r) in rn.ratio.iter().enumerate() {
                let exact = inv.derivative(0.5 * (rn.edges[i] + rn.edges[i + 1]));
                let r = r.unwrap();
                assert!((r - exact).abs() < 32.0 / bins as f64 * exact, "bins {bins} gen {k} bin {i}: {r} vs {exact}");
                l1 += (r - exact).abs() / bins as f64;
            }
            assert!(l1 < 3.0 / bins as f64, "{l1}");
        }
    }
    let nu = TransverseMeasure::uniform(64);
    let triv = SuspensionFoliation::trivial();
    let rn = triv.radon_nikodym_estimate(&nu, Letter::inv(2)).unwrap();
    assert!(rn.ratio.iter().all(|r| *r == Some(1.0)));
}

#[test]
fn empty_bins_are_flagged() {
    let s = SuspensionFoliation::irrational_rotations();
    let nu = TransverseMeasure::from_samples([(0.1, 1.0), (0.6, 2.0)], 16);
    let rn = s.radon_nikodym_estimate(&nu, Letter::gen(0)).unwrap();
    assert_eq!(rn.flagged.len(), 14);
    assert!(rn.flagged.iter().all(|&i| rn.ratio[i].is_none()));
}

#[test]
fn point_mass_at_a_common_fixed_bin_is_invariant() {
    let bins = 64;
    let w = 1.0 / bins as f64;
    let h = FiberMap::Tabulated { x: vec![0.0, w, 0.5], y: vec![0.0, w, 0.3] };
    let s = SuspensionFoliation::new(vec![h.clone(), h, FiberMap::Identity, FiberMap::Identity]).unwrap();
    let nu = TransverseMeasure::from_samples([(0.5 * w, 1.0)], bins);
    assert!(s.invariance_defect(&nu) < 1e-15);
    assert!(s.invariance_defect(&TransverseMeasure::uniform(bins)) > 0.01);
}

#[test]
fn transverse_csv() {
    let csv = TransverseMeasure::uniform(4).to_csv();
    assert_eq!(csv, "bin_left,mass\n0,0.25\n0.25,0.25\n0.5,0.25\n0.75,0.25\n");
}

#[test]
fn h0_is_constant_in_constant_curvature() {
    let m = MetricModel::upper_half_plane();
    let p = LinearizationParams { burn_in: Some(5.0), ..LinearizationParams::with_dt(1e-2) };
    for x in [ChartPoint::new(0.0, 1.0), ChartPoint::new(-2.0, 0.3), ChartPoint::new(1.5, 4.0)] {
        assert!((h0(&m, x, 32, &p).unwrap() - 0.5f64.sqrt()).abs() < 1e-4);
    }
}

#[test]
fn h0_on_pinched_model() {
    let m = MetricModel::pinched_blend();
    let p = LinearizationParams { burn_in: Some(12.0), ..LinearizationParams::with_dt(2e-3) };
    let (a, b) = (m.a(), m.b());
    let x = ChartPoint::new(0.4, -0.3);
    let coarse = h0(&m, x, 256, &p).unwrap();
    let fine = h0(&m, x, 512, &p).unwrap();
    assert!(coarse >= 1.0 / (1.0 + b * b).sqrt() && coarse <= 1.0 / (1.0 + a * a).sqrt());
    assert!((coarse - fine).abs() < 1e-4);
}

proptest! {
    #[test]
    fn pushforward_preserves_mass(c0 in -0.9..0.9f64, c1 in -0.4..0.4f64, turn in -3.0..3.0f64, seed in 0u64..1000) {
        let g = FiberMap::Mobius { c: [c0, c1], turn };
        let masses: Vec<f64> = (0..64).map(|i| ((i as u64 * 2654435761 + seed) % 97) as f64).collect();
        let nu = TransverseMeasure { edges: (0..=64).map(|k| k as f64 / 64.0).collect(), masses };
        let push = nu.pushforward(&g);
        prop_assert!((push.total() - nu.total()).abs() < 1e-9 * nu.total());
        prop_assert!(push.masses.iter().all(|m| *m >= 0.0));
    }

    #[test]
    fn mobius_maps_are_circle_homeomorphisms(c0 in -0.95..0.95f64, c1 in -0.3..0.3f64, turn in -3.0..3.0f64) {
        let g = FiberMap::Mobius { c: [c0, c1], turn };
        prop_assume!(c0.hypot(c1) < 0.97);
        prop_assert!(g.check_bijection(512).is_ok());
    }
}
