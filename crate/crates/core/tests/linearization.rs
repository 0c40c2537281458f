use leafdyn::flow::flow;
use leafdyn::linearization::{
    angle_alpha, angle_theta, distortion, liouville_identity_residual, log_center_stable_jacobian, log_unstable_jacobian, potential_phi_u,
    riccati_csv, riccati_trace, splitting, stable_slope, unstable_jacobian, unstable_slope, unstable_slope_seeded, LinearizationParams,
    TangentSplitting,
};
use leafdyn::{MetricModel, UnitTangentVector};
use proptest::prelude::*;

fn blend() -> MetricModel {
    MetricModel::pinched_blend()
}

fn params() -> LinearizationParams {
    LinearizationParams::with_dt(2e-3)
}

/// Riccati comparison: with K frozen at −a² or −b² the attracting slopes are a and b.
fn comparison_bracket(model: &MetricModel) -> (f64, f64) {
    (model.a(), model.b())
}

#[test]
fn slopes_are_bracketed_by_comparison_solutions() {
    let m = blend();
    let (lo, hi) = comparison_bracket(&m);
    for k in 0..12 {
        let t = k as f64;
        let v = UnitTangentVector::new(2.0 * (0.7 * t).cos(), 1.5 * (1.1 * t).sin(), 0.5 * t);
        let s = splitting(&m, &v, &params()).unwrap();
        assert!(s.unstable >= lo - 1e-6 && s.unstable <= hi + 1e-6, "{s:?}");
        assert!(s.stable >= -hi - 1e-6 && s.stable <= -lo + 1e-6, "{s:?}");
    }
}

#[test]
fn seeds_converge_to_the_same_slope() {
    let m = blend();
    let v = UnitTangentVector::new(0.5, 0.2, 1.0);
    let a = unstable_slope_seeded(&m, &v, 20.0, m.a(), &params()).unwrap();
    let b = unstable_slope_seeded(&m, &v, 20.0, m.b(), &params()).unwrap();
    assert!((a - b).abs() < 1e-8);
}

#[test]
fn flip_exchanges_stable_and_unstable() {
    let m = blend();
    for v in [UnitTangentVector::new(0.3, -0.4, 2.0), UnitTangentVector::new(-1.0, 0.2, 5.0)] {
        let s = stable_slope(&m, &v, 25.0, &params()).unwrap();
        let u = unstable_slope(&m, &v.flip(), 25.0, &params()).unwrap();
        assert!((s + u).abs() < 1e-6);
    }
    let h = MetricModel::upper_half_plane();
    let v = UnitTangentVector::new(0.1, 1.0, 0.3);
    let s = stable_slope(&h, &v, 20.0, &params()).unwrap();
    assert!((s + 1.0).abs() < 1e-8);
}

#[test]
fn jacobian_bounds_from_pinching() {
    let m = blend();
    let (a, b) = (m.a(), m.b());
    let v = UnitTangentVector::new(0.4, 0.4, 0.4);
    for t in [0.5, 2.0, 6.0] {
        let j = unstable_jacobian(&m, &v, t, &params()).unwrap();
        assert!(j >= a / b * (a * t).exp() && j <= b / a * (b * t).exp(), "t={t}: {j}");
    }
    assert_eq!(unstable_jacobian(&m, &v, 0.0, &params()).unwrap(), 1.0);
}

#[test]
fn potential_matches_finite_difference_and_bounds() {
    let m = blend();
    let p = LinearizationParams::default();
    for v in [UnitTangentVector::new(0.5, 0.2, 1.0), UnitTangentVector::new(-1.5, 0.7, 4.0)] {
        let phi = potential_phi_u(&m, &v, &p).unwrap();
        let h = 1e-4;
        let fd = -log_unstable_jacobian(&m, &v, h, &p).unwrap() / h;
        assert!((phi - fd).abs() < 1e-3, "{phi} vs {fd}");
        assert!(phi >= -m.b() && phi <= -m.a());
    }
    let c = MetricModel::poincare_disc();
    let phi = potential_phi_u(&c, &UnitTangentVector::new(0.2, 0.1, 0.0), &p).unwrap();
    assert!((phi + 1.0).abs() < 1e-8);
}

#[test]
fn jacobians_in_constant_curvature() {
    let m = MetricModel::upper_half_plane();
    let v = UnitTangentVector::new(0.0, 1.0, 1.0);
    let lu = log_unstable_jacobian(&m, &v, 2.0, &params()).unwrap();
    let ls = log_center_stable_jacobian(&m, &v, 2.0, &params()).unwrap();
    assert!((lu - 2.0).abs() < 1e-8 && (ls + 2.0).abs() < 1e-8);
    assert!(liouville_identity_residual(&m, &v, 3.0, &params()).unwrap() < 1e-8);
}

#[test]
fn liouville_identity_on_pinched_model() {
    let m = blend();
    let p = LinearizationParams::default();
    for k in 0..5 {
        let t = k as f64;
        let v = UnitTangentVector::new(1.2 * t.sin(), 0.8 * t.cos(), 1.7 * t);
        assert!(liouville_identity_residual(&m, &v, 5.0, &p).unwrap() < 1e-4);
    }
}

#[test]
fn distortion_ratio_converges() {
    let m = blend();
    let v = UnitTangentVector::new(0.5, 0.2, 1.0);
    let rep = distortion(&m, &v, &[0.05, -0.05, 0.2], &[20.0, 40.0], &params()).unwrap();
    assert!(rep.cauchy < 1e-5);
    assert!(rep.constant.is_finite() && rep.constant > 0.0);
    let flat =
        distortion(&MetricModel::upper_half_plane(), &UnitTangentVector::new(0.0, 1.0, 0.5), &[0.1], &[10.0, 20.0], &params()).unwrap();
    assert!(flat.log_ratios.iter().flatten().all(|l| l.abs() < 1e-8));
}

#[test]
fn riccati_trace_csv() {
    let m = MetricModel::upper_half_plane();
    let rows = riccati_trace(&m, &UnitTangentVector::new(0.0, 1.0, 0.0), 1.0, 0.2, &params(), 100).unwrap();
    let csv = riccati_csv(&rows);
    assert!(csv.starts_with("t,u,logJ\n"));
    assert_eq!(csv.lines().count(), rows.len() + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn unstable_jacobian_chain_rule(x in -1.0..1.0f64, y in -1.0..1.0f64, th in 0.0..std::f64::consts::TAU, s in 0.0..3.0f64, t in 0.0..3.0f64) {
        let m = blend();
        let p = params();
        let v = UnitTangentVector::new(x, y, th);
        let full = log_unstable_jacobian(&m, &v, s + t, &p).unwrap();
        let w = flow(&m, &v, s, &p.flow).unwrap();
        let parts = log_unstable_jacobian(&m, &v, s, &p).unwrap() + log_unstable_jacobian(&m, &w, t, &p).unwrap();
        prop_assert!((full.exp() / parts.exp() - 1.0).abs() < 1e-6);
    }
}

proptest! {
    #[test]
    fn angle_functions_are_in_unit_interval(u in 0.01..5.0f64, s in -5.0..-0.01f64) {
        let sp = TangentSplitting { unstable: u, stable: s };
        let a = angle_alpha(&sp).unwrap();
        prop_assert!(a > 0.0 && a <= 1.0 + 1e-15);
        let t = angle_theta(&sp);
        prop_assert!(t > 0.0 && t <= 1.0);
    }
}
