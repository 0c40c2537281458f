use std::f64::consts::TAU;

use leafdyn::boundary::{
    aim, busemann, gibbs_kernel_jacobian_form, gibbs_kernel_potential_form, kernel_csv, ray_endpoint, visibility_measure, BoundaryMeasure,
    BoundaryParams, BoundaryPoint, KernelRow,
};
use leafdyn::flow::{angle_diff, FuchsianDomain, Letter};
use leafdyn::geometry::ConformalGrid;
use leafdyn::{ChartPoint, Error, MetricModel, UnitTangentVector};
use num_complex::Complex64;
use proptest::prelude::*;

const T: f64 = 20.0;

fn params() -> BoundaryParams {
    BoundaryParams::default()
}

/// Half-plane Poisson kernel `Im z / |z − x|²`, or `Im z` at `∞`.
fn half_plane_poisson(z: ChartPoint, xi: BoundaryPoint) -> f64 {
    match xi.to_half_plane() {
        None => z.y,
        Some(x) => z.y / ((z.x - x).powi(2) + z.y * z.y),
    }
}

fn disc_poisson(z: ChartPoint, xi: BoundaryPoint) -> f64 {
    let zc = Complex64::new(z.x, z.y);
    (1.0 - zc.norm_sqr()) / (zc - xi.disc_point()).norm_sqr()
}

#[test]
fn endpoints_converge_with_the_horizon() {
    let cases = [
        (MetricModel::upper_half_plane(), UnitTangentVector::new(0.3, 0.8, 2.0)),
        (MetricModel::poincare_disc(), UnitTangentVector::new(0.2, -0.4, 1.0)),
        (MetricModel::pinched_blend(), UnitTangentVector::new(1.0, 0.5, 4.0)),
    ];
    for (m, v) in cases {
        let a = ray_endpoint(&m, &v, 20.0).unwrap();
        let b = ray_endpoint(&m, &v, 40.0).unwrap();
        assert!(angle_diff(a.xi, b.xi).abs() < 1e-6, "{}: {} vs {}", m.name(), a.xi, b.xi);
    }
}

#[test]
fn vertical_half_plane_ray_ends_at_infinity() {
    let m = MetricModel::upper_half_plane();
    for x in [-2.0, 0.0, 5.0] {
        let e = ray_endpoint(&m, &UnitTangentVector::new(x, 0.5, TAU / 4.0), T).unwrap();
        assert!(angle_diff(e.xi, 0.0).abs() < 1e-8);
    }
    let down = ray_endpoint(&m, &UnitTangentVector::new(1.5, 0.5, -TAU / 4.0), T).unwrap();
    assert!((down.to_half_plane().unwrap() - 1.5).abs() < 1e-8);
}

#[test]
fn aim_hits_the_requested_point() {
    let p = params();
    for m in [MetricModel::upper_half_plane(), MetricModel::pinched_blend()] {
        for xi in [0.3, 2.0, 5.9] {
            let v = aim(&m, ChartPoint::new(0.4, 1.1), BoundaryPoint::new(xi), &p).unwrap();
            let e = ray_endpoint(&m, &v, T).unwrap();
            assert!(angle_diff(e.xi, xi).abs() < 1e-8);
        }
    }
}

#[test]
fn busemann_matches_half_plane_closed_form() {
    let m = MetricModel::upper_half_plane();
    let p = params();
    let y = ChartPoint::new(0.0, 1.0);
    let z = ChartPoint::new(0.0, 2.0);
    let b = busemann(&m, BoundaryPoint::from_half_plane(None), y, z, T, &p).unwrap();
    assert!((b.value + 2f64.ln()).abs() < 1e-5);
    assert!(b.diagnostic < 1e-4);
    for (y, z, xi) in [((0.5, 0.3), (-1.0, 2.0), Some(0.2)), ((2.0, 1.0), (1.0, 0.1), None), ((0.0, 1.0), (0.7, 0.7), Some(-3.0))] {
        let (y, z) = (ChartPoint::new(y.0, y.1), ChartPoint::new(z.0, z.1));
        let xi = BoundaryPoint::from_half_plane(xi);
        let exact = (half_plane_poisson(y, xi) / half_plane_poisson(z, xi)).ln();
        let b = busemann(&m, xi, y, z, T, &p).unwrap();
        assert!((b.value - exact).abs() < 1e-5, "{} vs {exact}", b.value);
    }
    assert_eq!(busemann(&m, BoundaryPoint::new(1.0), y, y, T, &p).unwrap().value, 0.0);
}

#[test]
fn busemann_cocycle_on_pinched_model() {
    let m = MetricModel::pinched_blend();
    let p = params();
    let xi = BoundaryPoint::new(2.5);
    let (y, z, w) = (ChartPoint::new(0.2, 0.1), ChartPoint::new(-0.6, 0.9), ChartPoint::new(1.1, -0.3));
    let b = |a, c| busemann(&m, xi, a, c, T, &p).unwrap().value;
    assert!((b(y, z) + b(z, w) - b(y, w)).abs() < 1e-6);
}

#[test]
fn potential_form_is_the_poisson_kernel_in_constant_curvature() {
    let p = params();
    let d = MetricModel::poincare_disc();
    let o = ChartPoint::new(0.0, 0.0);
    for (z, xi) in [((0.3, 0.2), 1.0), ((-0.5, 0.1), 4.0), ((0.1, -0.6), 5.0)] {
        let z = ChartPoint::new(z.0, z.1);
        let xi = BoundaryPoint::new(xi);
        let k = gibbs_kernel_potential_form(&d, o, z, xi, T, &p).unwrap();
        assert!((k.value / disc_poisson(z, xi) - 1.0).abs() < 1e-5);
        assert!(k.diagnostic < 1e-4);
    }
    let h = MetricModel::upper_half_plane();
    let (o, z) = (ChartPoint::new(0.2, 1.0), ChartPoint::new(-0.4, 0.6));
    for xi in [BoundaryPoint::from_half_plane(None), BoundaryPoint::from_half_plane(Some(0.5))] {
        let k = gibbs_kernel_potential_form(&h, o, z, xi, T, &p).unwrap().value;
        let beta = busemann(&h, xi, o, z, T, &p).unwrap().value;
        assert!((k / (-beta).exp() - 1.0).abs() < 1e-5);
    }
    assert_eq!(gibbs_kernel_potential_form(&h, o, o, BoundaryPoint::new(1.0), T, &p).unwrap().value, 1.0);
    assert_eq!(gibbs_kernel_jacobian_form(&h, o, o, BoundaryPoint::new(1.0), T, &p).unwrap().value, 1.0);
}

#[test]
fn kernel_forms_agree_on_pinched_model() {
    let m = MetricModel::pinched_blend();
    let p = params();
    let rows: Vec<KernelRow> = [((0.0, 0.0), (0.5, 0.3), 1.0), ((0.3, 0.3), (2.0, 1.0), 0.2), ((-1.5, 0.3), (1.2, -1.4), 4.5)]
        .into_iter()
        .map(|(o, z, xi)| {
            KernelRow::evaluate(&m, ChartPoint::new(o.0, o.1), ChartPoint::new(z.0, z.1), BoundaryPoint::new(xi), T, &p).unwrap()
        })
        .collect();
    for r in &rows {
        assert!(r.relative_gap() < 1e-4, "{r:?}");
        assert!(r.diagnostic() < 1e-4);
    }
    let csv = kernel_csv(&rows);
    assert!(csv.starts_with("o_x,o_y,z_x,z_y,xi,k_potential,k_jacobian,diagnostic\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn kernel_cocycle_on_pinched_model() {
    let m = MetricModel::pinched_blend();
    let p = params();
    let xi = BoundaryPoint::new(0.8);
    let (x, y, z) = (ChartPoint::new(0.1, -0.2), ChartPoint::new(0.9, 0.4), ChartPoint::new(-0.5, 0.6));
    let k = |a, b| gibbs_kernel_potential_form(&m, a, b, xi, T, &p).unwrap().value;
    assert!((k(x, y) * k(y, z) / k(x, z) - 1.0).abs() < 1e-4);
}

#[test]
fn kernel_is_mobius_equivariant() {
    let d = MetricModel::poincare_disc();
    let p = params();
    let dom = FuchsianDomain::octagon();
    let g = dom.letter_map(Letter::gen(1)).unwrap();
    let (o, z, xi) = (ChartPoint::new(0.1, 0.2), ChartPoint::new(-0.3, 0.1), BoundaryPoint::new(2.2));
    let push = |q: ChartPoint| {
        let w = g.apply(Complex64::new(q.x, q.y));
        ChartPoint::new(w.re, w.im)
    };
    let k0 = gibbs_kernel_jacobian_form(&d, o, z, xi, T, &p).unwrap().value;
    let k1 = gibbs_kernel_jacobian_form(&d, push(o), push(z), xi.mobius(&g), T, &p).unwrap().value;
    assert!((k1 / k0 - 1.0).abs() < 1e-5);
}

#[test]
fn visibility_from_the_centre_is_uniform() {
    let d = MetricModel::poincare_disc();
    let n = 12_800;
    let v = visibility_measure(&d, ChartPoint::new(0.0, 0.0), n, 64, &params()).unwrap();
    assert!((v.total_mass() - 1.0).abs() < 1e-12);
    let BoundaryMeasure::Histogram { masses, .. } = &v else { panic!("histogram expected") };
    let e = 1.0 / 64.0;
    let chi2: f64 = masses.iter().map(|m| (m - e).powi(2) / e).sum::<f64>() * n as f64;
    // 63 degrees of freedom; the 0.999 quantile is about 104
    assert!(chi2 < 104.0, "chi2 {chi2}");
}

#[test]
fn visibility_density_is_the_poisson_kernel() {
    let d = MetricModel::poincare_disc();
    let z = ChartPoint::new(0.4, -0.2);
    let (n, bins) = (20_000, 64);
    let v = visibility_measure(&d, z, n, bins, &params()).unwrap();
    let BoundaryMeasure::Histogram { edges, masses } = &v else { panic!("histogram expected") };
    for (e, m) in edges.windows(2).zip(masses) {
        let steps = 200;
        let h = (e[1] - e[0]) / steps as f64;
        let exact: f64 = (0..steps).map(|i| disc_poisson(z, BoundaryPoint::new(e[0] + (i as f64 + 0.5) * h)) * h).sum::<f64>() / TAU;
        assert!((m - exact).abs() < 3.0 / n as f64, "{m} vs {exact}");
    }
}

#[test]
fn conformal_grid_has_no_boundary_chart() {
    let g = MetricModel::conformal(ConformalGrid::shipped(), 0.8, 1.25).unwrap();
    let r = ray_endpoint(&g, &UnitTangentVector::new(0.0, 1.0, 0.0), 1.0);
    assert!(matches!(r, Err(Error::Unsupported(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn busemann_is_one_lipschitz(yx in -1.0..1.0f64, yy in 0.2..2.0f64, zx in -1.0..1.0f64, zy in 0.2..2.0f64, xi in 0.0..TAU) {
        let m = MetricModel::upper_half_plane();
        let (y, z) = (ChartPoint::new(yx, yy), ChartPoint::new(zx, zy));
        let b = busemann(&m, BoundaryPoint::new(xi), y, z, T, &params()).unwrap();
        prop_assert!(b.value.abs() <= m.distance(y, z).unwrap() + 1e-6);
    }

    #[test]
    fn half_plane_boundary_round_trip(x in -50.0..50.0f64) {
        let b = BoundaryPoint::from_half_plane(Some(x));
        prop_assert!((b.to_half_plane().unwrap() - x).abs() < 1e-9 * (1.0 + x * x));
    }
}
