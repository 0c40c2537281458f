//! Geodesic flow on the unit tangent bundle, two-point shooting and the
//! Sasaki proximity proxy.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ChartPoint, MetricModel, Variant};

pub use crate::fuchsian::{FuchsianDomain, Letter, Mobius, QuotientSurface, Word};

/// A unit tangent vector: base point plus direction angle in the model's orthonormal frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UnitTangentVector {
    pub base: ChartPoint,
    pub theta: f64,
}

impl UnitTangentVector {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { base: ChartPoint::new(x, y), theta }
    }

    /// The flip `v ↦ −v`.
    pub fn flip(self) -> Self {
        Self { base: self.base, theta: wrap_angle(self.theta + PI) }
    }
}

/// Reduces an angle to `[0, 2π)`.
pub fn wrap_angle(t: f64) -> f64 {
    let w = t.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

/// Reduces an angle difference to `(−π, π]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    if d > PI {
        d - 2.0 * PI
    } else {
        d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowParams {
    pub dt: f64,
    pub renormalize_every: usize,
    pub tolerance: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self { dt: 1e-3, renormalize_every: 16, tolerance: 1e-6 }
    }
}

impl FlowParams {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dt > 0.0 && self.dt.is_finite() && self.renormalize_every > 0 {
            Ok(())
        } else {
            Err(Error::invalid(format!("flow params need dt > 0 and renormalize_every > 0: {self:?}")))
        }
    }

    /// Number of equal steps covering `|t|` with step at most `dt`.
    pub fn steps_for(&self, t: f64) -> usize {
        if t == 0.0 {
            0
        } else {
            ((t.abs() / self.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
        }
    }
}

/// Position and velocity. The velocity holds chart components, except for rotational
/// models away from the pole where it holds orthonormal radial/tangential components
/// `(v_r, w)`; the Cartesian chart cannot resolve tangential velocity far out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Phase {
    pub p: ChartPoint,
    pub v: [f64; 2],
    pub polar: bool,
}

const POLAR_ENTER: f64 = 1.5;
const POLAR_LEAVE: f64 = 0.75;

impl Phase {
    pub(crate) fn chart(p: ChartPoint, v: [f64; 2]) -> Self {
        Self { p, v, polar: false }
    }
}

fn radial_frame(p: ChartPoint) -> (f64, [f64; 2]) {
    let r = p.norm();
    (r, [p.x / r, p.y / r])
}

impl MetricModel {
    /// Angle of the Gram-Schmidt frame vector `e1` in the orthonormal polar frame.
    fn frame_offset(&self, p: ChartPoint) -> f64 {
        let (r, n) = radial_frame(p);
        let f = self.profile().expect("rotational").eval(r)[0];
        (-n[1] * f / r).atan2(n[0])
    }

    pub(crate) fn to_phase(&self, v: &UnitTangentVector) -> Result<Phase> {
        if self.profile().is_some() && v.base.norm() > POLAR_LEAVE {
            self.check(v.base)?;
            let a = v.theta + self.frame_offset(v.base);
            return Ok(Phase { p: v.base, v: [a.cos(), a.sin()], polar: true });
        }
        Ok(Phase::chart(v.base, self.unit_vector(v.base, v.theta)?))
    }

    pub(crate) fn tangent_of(&self, s: &Phase) -> Result<UnitTangentVector> {
        if s.polar {
            self.check(s.p)?;
            let theta = s.v[1].atan2(s.v[0]) - self.frame_offset(s.p);
            return Ok(UnitTangentVector { base: s.p, theta: wrap_angle(theta) });
        }
        Ok(UnitTangentVector { base: s.p, theta: wrap_angle(self.angle_of(s.p, s.v)?) })
    }

    pub(crate) fn phase_speed(&self, s: &Phase) -> Result<f64> {
        if s.polar {
            Ok(s.v[0].hypot(s.v[1]))
        } else {
            self.norm(s.p, s.v)
        }
    }

    fn renormalize(&self, s: &mut Phase) -> Result<()> {
        let n = self.phase_speed(s)?;
        s.v = [s.v[0] / n, s.v[1] / n];
        Ok(())
    }

    /// Chart components of the velocity.
    pub(crate) fn chart_velocity(&self, s: &Phase) -> [f64; 2] {
        if !s.polar {
            return s.v;
        }
        let (r, n) = radial_frame(s.p);
        let f = self.profile().expect("rotational").eval(r)[0];
        let t = r / f * s.v[1];
        [s.v[0] * n[0] - t * n[1], s.v[0] * n[1] + t * n[0]]
    }

    /// Switches between chart and polar velocity with hysteresis.
    pub(crate) fn rebase(&self, s: &mut Phase) {
        let Some(profile) = self.profile() else { return };
        let r = s.p.norm();
        if s.polar && r < POLAR_LEAVE {
            *s = Phase::chart(s.p, self.chart_velocity(s));
        } else if !s.polar && r > POLAR_ENTER {
            let n = [s.p.x / r, s.p.y / r];
            let f = profile.eval(r)[0];
            let vr = s.v[0] * n[0] + s.v[1] * n[1];
            let vt = s.v[1] * n[0] - s.v[0] * n[1];
            *s = Phase { p: s.p, v: [vr, f / r * vt], polar: true };
        }
    }

    fn rhs(&self, s: &Phase) -> Result<Phase> {
        if s.polar {
            self.check(s.p)?;
            let (r, n) = radial_frame(s.p);
            let [f, fp, _] = self.profile().expect("rotational").eval(r);
            let g = fp / f;
            let t = r / f * s.v[1];
            let (vr, w) = (s.v[0], s.v[1]);
            return Ok(Phase { p: ChartPoint::new(vr * n[0] - t * n[1], vr * n[1] + t * n[0]), v: [g * w * w, -g * vr * w], polar: true });
        }
        let a = self.acceleration(s.p, s.v)?;
        Ok(Phase::chart(ChartPoint::new(s.v[0], s.v[1]), a))
    }
}

fn axpy(s: &Phase, h: f64, d: &Phase) -> Phase {
    Phase { p: ChartPoint::new(s.p.x + h * d.p.x, s.p.y + h * d.p.y), v: [s.v[0] + h * d.v[0], s.v[1] + h * d.v[1]], polar: s.polar }
}

pub(crate) fn rk4(model: &MetricModel, s: &Phase, h: f64) -> Result<Phase> {
    let k1 = model.rhs(s)?;
    let k2 = model.rhs(&axpy(s, 0.5 * h, &k1))?;
    let k3 = model.rhs(&axpy(s, 0.5 * h, &k2))?;
    let k4 = model.rhs(&axpy(s, h, &k3))?;
    let w = h / 6.0;
    let out = Phase {
        p: ChartPoint::new(
            s.p.x + w * (k1.p.x + 2.0 * k2.p.x + 2.0 * k3.p.x + k4.p.x),
            s.p.y + w * (k1.p.y + 2.0 * k2.p.y + 2.0 * k3.p.y + k4.p.y),
        ),
        v: [
            s.v[0] + w * (k1.v[0] + 2.0 * k2.v[0] + 2.0 * k3.v[0] + k4.v[0]),
            s.v[1] + w * (k1.v[1] + 2.0 * k2.v[1] + 2.0 * k3.v[1] + k4.v[1]),
        ],
        polar: s.polar,
    };
    model.check(out.p)?;
    Ok(out)
}

/// Fixed-step integrator holding a chart state between steps.
pub struct GeodesicStepper<'a> {
    model: &'a MetricModel,
    phase: Phase,
    time: f64,
    since_renorm: usize,
    renormalize_every: usize,
}

impl<'a> GeodesicStepper<'a> {
    pub fn new(model: &'a MetricModel, v: &UnitTangentVector, params: &FlowParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { model, phase: model.to_phase(v)?, time: 0.0, since_renorm: 0, renormalize_every: params.renormalize_every })
    }

    pub(crate) fn from_phase(model: &'a MetricModel, mut phase: Phase, renormalize_every: usize) -> Self {
        model.rebase(&mut phase);
        Self { model, phase, time: 0.0, since_renorm: 0, renormalize_every }
    }

    pub fn model(&self) -> &'a MetricModel {
        self.model
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn position(&self) -> ChartPoint {
        self.phase.p
    }

    pub(crate) fn phase(&self) -> Phase {
        self.phase
    }

    pub(crate) fn set_phase(&mut self, mut phase: Phase) {
        self.model.rebase(&mut phase);
        self.phase = phase;
    }

    pub fn state(&self) -> Result<UnitTangentVector> {
        self.model.tangent_of(&self.phase)
    }

    fn excursion(&self) -> Error {
        let last = self.model.tangent_of(&self.phase).unwrap_or(UnitTangentVector { base: self.phase.p, theta: f64::NAN });
        Error::Excursion { last, time: self.time }
    }

    pub fn step(&mut self, h: f64) -> Result<()> {
        if h == 0.0 {
            return Ok(());
        }
        self.phase = match rk4(self.model, &self.phase, h) {
            Ok(s) => s,
            Err(Error::Domain { .. }) => return Err(self.excursion()),
            Err(e) => return Err(e),
        };
        self.model.rebase(&mut self.phase);
        self.time += h;
        self.since_renorm += 1;
        if self.since_renorm >= self.renormalize_every {
            self.renormalize()?;
        }
        Ok(())
    }

    /// Current metric speed (1 right after a renormalization).
    pub fn speed(&self) -> Result<f64> {
        self.model.phase_speed(&self.phase)
    }

    pub fn renormalize(&mut self) -> Result<()> {
        self.since_renorm = 0;
        self.model.renormalize(&mut self.phase)
    }
}

/// One RK4 step of size `dt`, returned as a unit vector.
pub fn geodesic_step(model: &MetricModel, v: &UnitTangentVector, dt: f64) -> Result<UnitTangentVector> {
    if dt == 0.0 {
        model.check(v.base)?;
        return Ok(*v);
    }
    let mut s = GeodesicStepper::new(model, v, &FlowParams::default())?;
    s.step(dt)?;
    s.state()
}

/// `G_t(v)`; negative `t` flows backward.
pub fn flow(model: &MetricModel, v: &UnitTangentVector, t: f64, params: &FlowParams) -> Result<UnitTangentVector> {
    let mut s = GeodesicStepper::new(model, v, params)?;
    let n = params.steps_for(t);
    for _ in 0..n {
        s.step(t / n as f64)?;
    }
    s.renormalize()?;
    s.state()
}

/// `G_t(v)` sampled every `every` steps (and at the end).
pub fn flow_trajectory(
    model: &MetricModel,
    v: &UnitTangentVector,
    t: f64,
    params: &FlowParams,
    every: usize,
) -> Result<Vec<(f64, UnitTangentVector)>> {
    let mut s = GeodesicStepper::new(model, v, params)?;
    let n = params.steps_for(t);
    let every = every.max(1);
    let mut out = vec![(0.0, s.state()?)];
    for k in 1..=n {
        s.step(t / n as f64)?;
        if k % every == 0 || k == n {
            out.push((s.time(), s.state()?));
        }
    }
    Ok(out)
}

/// CSV dump `(t, x, y, theta, word_so_far)` with a comment header naming the model and parameters.
pub fn trajectory_csv(model_name: &str, params: &FlowParams, rows: &[(f64, UnitTangentVector, Word)]) -> String {
    let mut out = format!(
        "# model={model_name} dt={} renormalize_every={} tolerance={}\nt,x,y,theta,word_so_far\n",
        params.dt, params.renormalize_every, params.tolerance
    );
    for (t, v, w) in rows {
        let _ = writeln!(out, "{t},{},{},{},{}", v.base.x, v.base.y, v.theta, w);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShootParams {
    pub dt: f64,
    pub max_iterations: usize,
    /// Residual tolerance in chart norm, relative to `1 + |q|`.
    pub tolerance: f64,
    pub max_length: f64,
}

impl Default for ShootParams {
    fn default() -> Self {
        Self { dt: 5e-3, max_iterations: 60, tolerance: 1e-8, max_length: 200.0 }
    }
}

/// Result of a two-point shooting: the initial unit vector at `p` and the arc length to `q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shot {
    pub initial: UnitTangentVector,
    pub length: f64,
    pub residual: f64,
}

struct Approach {
    side: f64,
    time: f64,
    residual: f64,
}

/// Flows from `p` in chart direction `psi` until the chart distance to `q` stops decreasing.
fn closest_approach(model: &MetricModel, p: ChartPoint, q: ChartPoint, psi: f64, params: &ShootParams) -> Result<Approach> {
    let dir = [psi.cos(), psi.sin()];
    let n = model.norm(p, dir)?;
    let mut s = GeodesicStepper::from_phase(model, Phase::chart(p, [dir[0] / n, dir[1] / n]), 16);
    let d2 = |ph: &Phase| (ph.p.x - q.x).powi(2) + (ph.p.y - q.y).powi(2);
    let mut best = s.phase();
    let mut best_d = d2(&best);
    let mut best_t = 0.0;
    // On exp-charts |p| is the distance to the pole, convex along geodesics, so once the
    // orbit moves outward with |p| − |q| beyond the best distance nothing closer follows.
    // Elsewhere the first local minimum of the chart distance is taken.
    let exp_chart = matches!(model.variant(), Variant::Rotational(_));
    let mut prev_r = p.norm();
    while s.time() < params.max_length {
        s.step(params.dt)?;
        let ph = s.phase();
        let d = d2(&ph);
        if d <= best_d {
            best = ph;
            best_d = d;
            best_t = s.time();
        } else if !exp_chart {
            break;
        }
        let r = ph.p.norm();
        if exp_chart && r > prev_r && (r - q.norm()).max(0.0).powi(2) > best_d {
            break;
        }
        prev_r = r;
    }
    // polish the closest approach with sub-step corrections from the best sample
    let mut tau = 0.0;
    let mut ph = best;
    for _ in 0..4 {
        let dx = [q.x - ph.p.x, q.y - ph.p.y];
        let cv = model.chart_velocity(&ph);
        let corr = (dx[0] * cv[0] + dx[1] * cv[1]) / (cv[0] * cv[0] + cv[1] * cv[1]);
        tau = (tau + corr).clamp(-params.dt, params.dt);
        ph = rk4(model, &best, tau)?;
    }
    let rel = [q.x - ph.p.x, q.y - ph.p.y];
    let cv = model.chart_velocity(&ph);
    let side = cv[0] * rel[1] - cv[1] * rel[0];
    let residual = rel[0].hypot(rel[1]) / (1.0 + q.norm());
    Ok(Approach { side, time: best_t + tau, residual })
}

const SHOOT_FAN: usize = 16;

/// Initial angle of the geodesic from `p` to `q` where a Möbius map centres `p`.
fn closed_form_direction(model: &MetricModel, p: ChartPoint, q: ChartPoint) -> Option<f64> {
    let (zp, zq) = (Complex64::new(p.x, p.y), Complex64::new(q.x, q.y));
    match model.variant() {
        Variant::PoincareDisc => Some(((zq - zp) / (1.0 - zp.conj() * zq)).arg()),
        Variant::UpperHalfPlane => Some(((zq - zp) / (zq - zp.conj())).arg() + FRAC_PI_2),
        _ => None,
    }
}

/// Finds the geodesic from `p` to `q`: closed form on the half-plane and disc,
/// a bracketed root search on the launch angle otherwise.
pub fn shoot(model: &MetricModel, p: ChartPoint, q: ChartPoint, params: &ShootParams) -> Result<Shot> {
    model.check(p)?;
    model.check(q)?;
    if p == q {
        return Ok(Shot { initial: UnitTangentVector { base: p, theta: 0.0 }, length: 0.0, residual: 0.0 });
    }
    if let Some(theta) = closed_form_direction(model, p, q) {
        let length = model.distance_with(p, q, params)?;
        return Ok(Shot { initial: UnitTangentVector { base: p, theta: wrap_angle(theta) }, length, residual: 0.0 });
    }
    // scan the full circle: far targets can need launch angles well away from the chord
    let psi0 = (q.y - p.y).atan2(q.x - p.x);
    let fan: Vec<(f64, Approach)> = (0..SHOOT_FAN)
        .map(|k| {
            let psi = psi0 - PI + TAU * k as f64 / SHOOT_FAN as f64;
            Ok((psi, closest_approach(model, p, q, psi, params)?))
        })
        .collect::<Result<_>>()?;
    let k = (0..SHOOT_FAN)
        .filter(|&k| fan[k].1.side > 0.0 && fan[(k + 1) % SHOOT_FAN].1.side <= 0.0)
        .min_by(|&i, &j| {
            let r = |k: usize| fan[k].1.residual.min(fan[(k + 1) % SHOOT_FAN].1.residual);
            r(i).total_cmp(&r(j))
        })
        .ok_or(Error::Convergence { what: "two-point shooting bracket", residual: f64::INFINITY })?;
    let (mut lo, mut hi) = (fan[k].0, fan[k].0 + TAU / SHOOT_FAN as f64);
    let (mut f_lo, mut f_hi) = (fan[k].1.side, fan[(k + 1) % SHOOT_FAN].1.side);
    // Illinois regula falsi on the signed side; `lo` keeps side > 0
    let mut best: Option<(f64, Approach)> = None;
    let mut last = 0i8;
    for _ in 0..params.max_iterations {
        let mut mid = hi - f_hi * (hi - lo) / (f_hi - f_lo);
        if !(mid > lo && mid < hi) {
            mid = 0.5 * (lo + hi);
        }
        let a = closest_approach(model, p, q, mid, params)?;
        let side = a.side;
        if best.as_ref().is_none_or(|(_, b)| a.residual < b.residual) {
            best = Some((mid, a));
        }
        if best.as_ref().is_some_and(|(_, b)| b.residual < 1e-4 * params.tolerance) || hi - lo < 1e-15 {
            break;
        }
        if side > 0.0 {
            lo = mid;
            f_lo = side;
            if last == 1 {
                f_hi *= 0.5;
            }
            last = 1;
        } else {
            hi = mid;
            f_hi = side;
            if last == -1 {
                f_lo *= 0.5;
            }
            last = -1;
        }
    }
    let (psi, a) = best.expect("at least one iteration");
    if !(a.residual <= params.tolerance) {
        return Err(Error::Convergence { what: "two-point shooting", residual: a.residual });
    }
    let theta = wrap_angle(model.angle_of(p, [psi.cos(), psi.sin()])?);
    Ok(Shot { initial: UnitTangentVector { base: p, theta }, length: a.time, residual: a.residual })
}

/// Largest base distance at which the first-order Sasaki proxy is accepted.
pub const SASAKI_SCALE: f64 = 1.0;

/// Angle defect after transporting `v` to the base of `w` along the chart
/// segment, with the connection frozen at the midpoint.
fn transport_defect(model: &MetricModel, v: &UnitTangentVector, w: &UnitTangentVector) -> Result<f64> {
    let (p, q) = (v.base, w.base);
    let mid = ChartPoint::new(0.5 * (p.x + q.x), 0.5 * (p.y + q.y));
    let gamma = model.christoffel(mid)?;
    let vp = model.unit_vector(p, v.theta)?;
    let c = gamma.contract([q.x - p.x, q.y - p.y], vp);
    let vq = [vp[0] - c[0], vp[1] - c[1]];
    Ok(angle_diff(w.theta, model.angle_of(q, vq)?))
}

/// First-order Sasaki distance proxy `sqrt(d(base)² + δ²)`, valid at small scales.
pub fn sasaki_proximity(model: &MetricModel, v: &UnitTangentVector, w: &UnitTangentVector) -> Result<f64> {
    let d = model.distance(v.base, w.base)?;
    if d > SASAKI_SCALE {
        return Err(Error::Scale { distance: d, scale: SASAKI_SCALE });
    }
    let defect = 0.5 * (transport_defect(model, v, w)? - transport_defect(model, w, v)?);
    Ok(d.hypot(defect))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn vertical_half_plane_step() {
        let m = MetricModel::upper_half_plane();
        let v = UnitTangentVector::new(0.0, 1.0, FRAC_PI_2);
        let w = geodesic_step(&m, &v, 0.1).unwrap();
        assert!(w.base.x.abs() < 1e-12);
        // one RK4 step of 0.1 carries a local error near 8.5e-8
        assert!((w.base.y - 0.1f64.exp()).abs() < 1e-7);
        let fine = flow(&m, &v, 0.1, &FlowParams::default()).unwrap();
        assert!((fine.base.y - 0.1f64.exp()).abs() < 1e-8);
        assert!((w.theta - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn zero_step_is_identity() {
        let m = MetricModel::pinched_blend();
        let v = UnitTangentVector::new(0.3, -0.2, 1.0);
        assert_eq!(geodesic_step(&m, &v, 0.0).unwrap(), v);
        assert_eq!(flow(&m, &v, 0.0, &FlowParams::default()).unwrap(), v);
    }

    #[test]
    fn horizontal_launch_follows_unit_semicircle() {
        let m = MetricModel::upper_half_plane();
        let v = UnitTangentVector::new(0.0, 1.0, 0.0);
        let w = flow(&m, &v, 2.0, &FlowParams::default()).unwrap();
        assert!((w.base.norm() - 1.0).abs() < 1e-6);
        // closed form: x = tanh t, y = sech t
        assert_relative_eq!(w.base.x, 2f64.tanh(), epsilon = 1e-9);
        assert_relative_eq!(w.base.y, 1.0 / 2f64.cosh(), epsilon = 1e-9);
    }

    #[test]
    fn excursion_carries_last_state() {
        let m = MetricModel::poincare_disc();
        let v = UnitTangentVector::new(0.0, 0.0, 0.0);
        match flow(&m, &v, 100.0, &FlowParams::with_dt(0.05)) {
            Err(Error::Excursion { last, time }) => {
                assert!(last.base.x > 0.99 && time > 10.0);
            }
            other => panic!("expected excursion, got {other:?}"),
        }
    }

    #[test]
    fn shooting_matches_closed_form() {
        let m = MetricModel::upper_half_plane();
        let (p, q) = (ChartPoint::new(-0.4, 0.7), ChartPoint::new(1.1, 2.3));
        let s = shoot(&m, p, q, &ShootParams::default()).unwrap();
        assert_relative_eq!(s.length, m.distance(p, q).unwrap(), max_relative = 1e-8);
        let end = flow(&m, &s.initial, s.length, &FlowParams::with_dt(5e-3)).unwrap();
        assert!(end.base.dist(q) < 1e-7);
    }

    #[test]
    fn proximity_of_fiber_offset() {
        let m = MetricModel::poincare_disc();
        let v = UnitTangentVector::new(0.2, 0.1, 0.5);
        assert_eq!(sasaki_proximity(&m, &v, &v).unwrap(), 0.0);
        let w = UnitTangentVector { theta: 0.5 + 1e-3, ..v };
        assert_relative_eq!(sasaki_proximity(&m, &v, &w).unwrap(), 1e-3, max_relative = 1e-9);
        let far = UnitTangentVector::new(0.9, 0.0, 0.0);
        assert!(matches!(sasaki_proximity(&m, &v, &far), Err(Error::Scale { .. })));
    }
}
