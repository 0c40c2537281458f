//! Riccati slopes of the invariant line fields, unstable/stable Jacobians,
//! the potential φ^u, the angle functions and the Liouville identity.
//!
//! In orthonormal Jacobi coordinates `(j, j')` along a unit-speed geodesic the
//! linearized flow preserves `dj ∧ dj'`, and an invariant line `j' = u j`
//! evolves by `u' = −K − u²`. Jacobians are measured in the Sasaki metric, so
//! the unit vector `(1, u)/√(1+u²)` of the line enters through
//! `log J_t = ∫₀ᵗ u + ½ ln((1 + u_t²)/(1 + u_0²))`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{flow, FlowParams, GeodesicStepper, Phase, UnitTangentVector};
use crate::geometry::{ChartPoint, MetricModel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiccatiState {
    pub u: f64,
    /// Signed `∫₀ᵗ u ds`.
    pub log_j: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentSplitting {
    pub unstable: f64,
    pub stable: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearizationParams {
    pub flow: FlowParams,
    /// Defaults to `20/a`.
    pub burn_in: Option<f64>,
    /// Blow-up threshold as a multiple of `b`.
    pub u_max_factor: f64,
}

impl Default for LinearizationParams {
    fn default() -> Self {
        Self { flow: FlowParams::default(), burn_in: None, u_max_factor: 10.0 }
    }
}

impl LinearizationParams {
    pub fn with_dt(dt: f64) -> Self {
        Self { flow: FlowParams::with_dt(dt), ..Self::default() }
    }

    pub fn burn(&self, model: &MetricModel) -> f64 {
        self.burn_in.unwrap_or(20.0 / model.a())
    }

    fn u_max(&self, model: &MetricModel) -> f64 {
        self.u_max_factor * model.b()
    }
}

/// Sasaki correction `½ ln((1 + u1²)/(1 + u0²))`.
pub fn sasaki_correction(u0: f64, u1: f64) -> f64 {
    0.5 * ((1.0 + u1 * u1) / (1.0 + u0 * u0)).ln()
}

fn riccati_rhs(k: f64, u: f64) -> f64 {
    -k - u * u
}

/// Integrates `u' = −K − u²` jointly with the geodesic through `v`.
pub fn riccati_flow(model: &MetricModel, v: &UnitTangentVector, t: f64, u0: f64, params: &LinearizationParams) -> Result<RiccatiState> {
    Ok(riccati_trace(model, v, t, u0, params, usize::MAX)?.pop().expect("final row").1)
}

/// As `riccati_flow`, recording `(t, state)` every `every` steps and at the end.
pub fn riccati_trace(
    model: &MetricModel,
    v: &UnitTangentVector,
    t: f64,
    u0: f64,
    params: &LinearizationParams,
    every: usize,
) -> Result<Vec<(f64, RiccatiState)>> {
    if !u0.is_finite() {
        return Err(Error::invalid("Riccati seed must be finite"));
    }
    let u_max = params.u_max(model);
    let n = params.flow.steps_for(t);
    let h = if n == 0 { 0.0 } else { t / n as f64 };
    let mut s = GeodesicStepper::new(model, v, &params.flow)?;
    let mut st = RiccatiState { u: u0, log_j: 0.0 };
    let mut out = vec![(0.0, st)];
    // curvature at the stage points comes from a parallel RK4 on the geodesic
    let mut k_here = model.curvature(v.base)?;
    for step in 1..=n {
        let start = s.phase();
        let mid = stage_curvature(model, &start, 0.5 * h)?;
        s.step(h)?;
        let k_end = model.curvature(s.position())?;
        let (u, dj) = rk4_pair(k_here, mid, k_end, st.u, h);
        st = RiccatiState { u, log_j: st.log_j + dj };
        k_here = k_end;
        if !(st.u.abs() <= u_max) {
            return Err(Error::BlowUp { time: s.time(), slope: st.u.abs() });
        }
        if step % every.max(1) == 0 || step == n {
            out.push((s.time(), st));
        }
    }
    Ok(out)
}

fn stage_curvature(model: &MetricModel, s: &Phase, h: f64) -> Result<f64> {
    let p = crate::flow::rk4(model, s, h)?.p;
    model.curvature(p)
}

/// One RK4 step of the Riccati equation with curvature at start, midpoint and end.
/// Returns the new slope and the increment of `∫u`.
fn rk4_pair(k0: f64, km: f64, k1: f64, u: f64, h: f64) -> (f64, f64) {
    let a1 = riccati_rhs(k0, u);
    let u2 = u + 0.5 * h * a1;
    let a2 = riccati_rhs(km, u2);
    let u3 = u + 0.5 * h * a2;
    let a3 = riccati_rhs(km, u3);
    let u4 = u + h * a3;
    let a4 = riccati_rhs(k1, u4);
    let un = u + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
    let dj = h / 6.0 * (u + 2.0 * u2 + 2.0 * u3 + u4);
    (un, dj)
}

/// Curvature at `n + 1` equally spaced points of the orbit `s ↦ G_s v`, `s` from 0 to `t`.
/// `n` is even and the spacing at most `dt`. Returns the samples and `G_t v`.
pub fn sample_curvature(model: &MetricModel, v: &UnitTangentVector, t: f64, params: &FlowParams) -> Result<(Vec<f64>, UnitTangentVector)> {
    let n = params.steps_for(t).div_ceil(2) * 2;
    let mut ks = Vec::with_capacity(n + 1);
    let mut s = GeodesicStepper::new(model, v, params)?;
    ks.push(model.curvature(v.base)?);
    for _ in 0..n {
        s.step(t / n.max(1) as f64)?;
        ks.push(model.curvature(s.position())?);
    }
    s.renormalize()?;
    Ok((ks, s.state()?))
}

/// Riccati slopes at even samples of `ks` (spacing `h`, signed), with `∫u` accumulated
/// in the same direction.
fn sweep(ks: &[f64], h: f64, u0: f64, u_max: f64, t0: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = (ks.len() - 1) / 2;
    let mut us = Vec::with_capacity(m + 1);
    let mut js = Vec::with_capacity(m + 1);
    let (mut u, mut j) = (u0, 0.0);
    us.push(u);
    js.push(j);
    for i in 0..m {
        let (un, dj) = rk4_pair(ks[2 * i], ks[2 * i + 1], ks[2 * i + 2], u, 2.0 * h);
        u = un;
        j += dj;
        if !(u.abs() <= u_max) {
            return Err(Error::BlowUp { time: t0 + 2.0 * h * (i + 1) as f64, slope: u.abs() });
        }
        us.push(u);
        js.push(j);
    }
    Ok((us, js))
}

/// A slope solution sampled on a uniform time grid, with `∫u` from the first sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeTrack {
    t0: f64,
    step: f64,
    slope: Vec<f64>,
    cum: Vec<f64>,
    curvature: Vec<f64>,
}

impl SlopeTrack {
    pub fn start(&self) -> f64 {
        self.t0
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.step * (self.slope.len() - 1) as f64
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let x = (s - self.t0) / self.step;
        let j = (x.floor().max(0.0) as usize).min(self.slope.len() - 2);
        (j, x - j as f64)
    }

    /// Slope and `∫u` (from the track start) at time `s`, by cubic Hermite interpolation.
    pub fn at(&self, s: f64) -> (f64, f64) {
        let (j, t) = self.locate(s);
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let (u0, u1) = (self.slope[j], self.slope[j + 1]);
        let d0 = riccati_rhs(self.curvature[j], u0);
        let d1 = riccati_rhs(self.curvature[j + 1], u1);
        let u = h00 * u0 + h10 * self.step * d0 + h01 * u1 + h11 * self.step * d1;
        let c = h00 * self.cum[j] + h10 * self.step * u0 + h01 * self.cum[j + 1] + h11 * self.step * u1;
        (u, c)
    }

    pub fn slope_at(&self, s: f64) -> f64 {
        self.at(s).0
    }

    /// `∫_{s0}^{s1} u`.
    pub fn integral(&self, s0: f64, s1: f64) -> f64 {
        self.at(s1).1 - self.at(s0).1
    }

    /// Sasaki log-Jacobian of the line field over `[s0, s1]`.
    pub fn log_jacobian(&self, s0: f64, s1: f64) -> f64 {
        let (u0, c0) = self.at(s0);
        let (u1, c1) = self.at(s1);
        c1 - c0 + sasaki_correction(u0, u1)
    }

    /// `∫_{s0}^{s1} f(u, K)` by the trapezoid rule on the grid, with interpolated
    /// partial steps at the ends.
    pub fn integrate_with(&self, s0: f64, s1: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
        if s1 < s0 {
            return -self.integrate_with(s1, s0, f);
        }
        let point = |s: f64| {
            let (j, t) = self.locate(s);
            let k = self.curvature[j] * (1.0 - t) + self.curvature[j + 1] * t;
            f(self.slope_at(s), k)
        };
        let node = |j: usize| f(self.slope[j], self.curvature[j]);
        let last_index = self.slope.len() - 1;
        let x0 = (s0 - self.t0) / self.step;
        let x1 = (s1 - self.t0) / self.step;
        let first = ((x0 - 1e-9).ceil().max(0.0) as usize).min(last_index);
        let last = ((x1 + 1e-9).floor().max(0.0) as usize).min(last_index);
        if first >= last {
            return 0.5 * (s1 - s0) * (point(s0) + point(s1));
        }
        let grid = |j: usize| self.t0 + self.step * j as f64;
        let mut sum = 0.5 * (grid(first) - s0) * (point(s0) + node(first));
        for j in first..last {
            sum += 0.5 * self.step * (node(j) + node(j + 1));
        }
        sum + 0.5 * (s1 - grid(last)) * (node(last) + point(s1))
    }

    /// `(t, u, ∫u)` at the grid samples.
    pub fn samples(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.slope.len()).map(move |j| (self.t0 + self.step * j as f64, self.slope[j], self.cum[j]))
    }
}

/// Unstable and stable slopes along one stored orbit window `[−before, after]` of `v`.
///
/// The unstable solution is seeded at the window start and run forward, the stable one
/// is seeded at the window end and run backward; both only ever integrate in their
/// contracting direction.
#[derive(Clone, Debug)]
pub struct OrbitSlopes {
    pub unstable: SlopeTrack,
    pub stable: SlopeTrack,
}

impl OrbitSlopes {
    pub fn compute(model: &MetricModel, v: &UnitTangentVector, before: f64, after: f64, params: &LinearizationParams) -> Result<Self> {
        Self::compute_seeded(model, v, before, after, model.a(), -model.a(), params)
    }

    pub fn compute_seeded(
        model: &MetricModel,
        v: &UnitTangentVector,
        before: f64,
        after: f64,
        seed_u: f64,
        seed_s: f64,
        params: &LinearizationParams,
    ) -> Result<Self> {
        if !(before >= 0.0 && after >= 0.0) {
            return Err(Error::invalid("orbit window bounds must be nonnegative"));
        }
        let h = params.flow.dt;
        let nb = (before / (2.0 * h) * (1.0 - 1e-12)).ceil() as usize * 2;
        let na = (after / (2.0 * h) * (1.0 - 1e-12)).ceil() as usize * 2;
        let ks = match model.constant_curvature() {
            // the orbit itself is not needed, and far rays leave the representable disc
            Some(k) => {
                model.check(v.base)?;
                vec![k; nb + na + 1]
            }
            None => {
                let fp = FlowParams { dt: h * (1.0 + 1e-9), ..params.flow };
                let (mut back, _) = sample_curvature(model, v, -(nb as f64) * h, &fp)?;
                let (fwd, _) = sample_curvature(model, v, na as f64 * h, &fp)?;
                if nb == 0 {
                    back = vec![fwd[0]];
                }
                if back.len() != nb + 1 || fwd.len() != na + 1 {
                    return Err(Error::invalid("orbit sampling grid mismatch"));
                }
                back.reverse();
                let mut ks = back;
                ks.extend_from_slice(&fwd[1..]);
                ks
            }
        };
        let t0 = -(nb as f64) * h;
        let u_max = params.u_max(model);
        let coarse: Vec<f64> = ks.iter().step_by(2).copied().collect();

        let (us, ucum) = sweep(&ks, h, seed_u, u_max, t0)?;
        let rev: Vec<f64> = ks.iter().rev().copied().collect();
        let (mut ss, back_int) = sweep(&rev, -h, seed_s, u_max, na as f64 * h)?;
        ss.reverse();
        // back_int[i] = ∫ from t_end − 2hi to t_end of S, accumulated with negative sign
        let total = -back_int[back_int.len() - 1];
        let scum: Vec<f64> = back_int.iter().rev().map(|b| total + b).collect();

        let track = |slope, cum| SlopeTrack { t0, step: 2.0 * h, slope, cum, curvature: coarse.clone() };
        Ok(Self { unstable: track(us, ucum), stable: track(ss, scum) })
    }

    pub fn splitting_at(&self, s: f64) -> TangentSplitting {
        TangentSplitting { unstable: self.unstable.slope_at(s), stable: self.stable.slope_at(s) }
    }
}

/// `U(v)`: attracting forward Riccati solution seeded with `a` at `G_{−burn} v`.
pub fn unstable_slope(model: &MetricModel, v: &UnitTangentVector, burn_in: f64, params: &LinearizationParams) -> Result<f64> {
    unstable_slope_seeded(model, v, burn_in, model.a(), params)
}

pub fn unstable_slope_seeded(
    model: &MetricModel,
    v: &UnitTangentVector,
    burn_in: f64,
    seed: f64,
    params: &LinearizationParams,
) -> Result<f64> {
    if !(burn_in > 0.0) {
        return Err(Error::invalid("burn_in must be positive"));
    }
    Ok(OrbitSlopes::compute_seeded(model, v, burn_in, 0.0, seed, -model.a(), params)?.unstable.slope_at(0.0))
}

/// `S(v)`: attracting backward Riccati solution seeded with `−a` at `G_{burn} v`.
pub fn stable_slope(model: &MetricModel, v: &UnitTangentVector, burn_in: f64, params: &LinearizationParams) -> Result<f64> {
    stable_slope_seeded(model, v, burn_in, -model.a(), params)
}

pub fn stable_slope_seeded(
    model: &MetricModel,
    v: &UnitTangentVector,
    burn_in: f64,
    seed: f64,
    params: &LinearizationParams,
) -> Result<f64> {
    if !(burn_in > 0.0) {
        return Err(Error::invalid("burn_in must be positive"));
    }
    Ok(OrbitSlopes::compute_seeded(model, v, 0.0, burn_in, model.a(), seed, params)?.stable.slope_at(0.0))
}

pub fn splitting(model: &MetricModel, v: &UnitTangentVector, params: &LinearizationParams) -> Result<TangentSplitting> {
    let burn = params.burn(model);
    Ok(OrbitSlopes::compute(model, v, burn, burn, params)?.splitting_at(0.0))
}

/// `log J^u G_t(v)`, Sasaki norm on `E^u`.
pub fn log_unstable_jacobian(model: &MetricModel, v: &UnitTangentVector, t: f64, params: &LinearizationParams) -> Result<f64> {
    let burn = params.burn(model);
    let o = OrbitSlopes::compute(model, v, burn + (-t).max(0.0), t.max(0.0), params)?;
    Ok(o.unstable.log_jacobian(0.0, t))
}

pub fn unstable_jacobian(model: &MetricModel, v: &UnitTangentVector, t: f64, params: &LinearizationParams) -> Result<f64> {
    Ok(log_unstable_jacobian(model, v, t, params)?.exp())
}

/// `log J^{cs} G_t(v)`; the flow direction contributes a factor 1.
pub fn log_center_stable_jacobian(model: &MetricModel, v: &UnitTangentVector, t: f64, params: &LinearizationParams) -> Result<f64> {
    let burn = params.burn(model);
    let o = OrbitSlopes::compute(model, v, (-t).max(0.0), burn + t.max(0.0), params)?;
    Ok(o.stable.log_jacobian(0.0, t))
}

/// `−d/dt log J^u G_t(v)` at `t = 0`: `−U + U(K + U²)/(1 + U²)`.
pub fn potential_phi_u(model: &MetricModel, v: &UnitTangentVector, params: &LinearizationParams) -> Result<f64> {
    let u = unstable_slope(model, v, params.burn(model), params)?;
    let k = model.curvature(v.base)?;
    Ok(phi_u_from(u, k))
}

pub fn phi_u_from(u: f64, k: f64) -> f64 {
    -u + u * (k + u * u) / (1.0 + u * u)
}

/// Sine of the angle between `E^u` and `E^{cs}`.
pub fn angle_alpha(s: &TangentSplitting) -> Result<f64> {
    let (u, v) = (s.unstable, s.stable);
    if u == v {
        return Err(Error::DegenerateSplitting);
    }
    Ok((u - v).abs() / ((1.0 + u * u) * (1.0 + v * v)).sqrt())
}

/// Angle function between `W^{cu}` and the unit tangent fiber.
pub fn angle_theta(s: &TangentSplitting) -> f64 {
    1.0 / (1.0 + s.unstable * s.unstable).sqrt()
}

/// `|α(G_t v)/α(v) · J^u G_t(v) · J^{cs} G_t(v) − 1|`.
pub fn liouville_identity_residual(model: &MetricModel, v: &UnitTangentVector, t: f64, params: &LinearizationParams) -> Result<f64> {
    let burn = params.burn(model);
    let o = OrbitSlopes::compute(model, v, burn + (-t).max(0.0), burn + t.max(0.0), params)?;
    let a0 = angle_alpha(&o.splitting_at(0.0))?;
    let a1 = angle_alpha(&o.splitting_at(t))?;
    let log = (a1 / a0).ln() + o.unstable.log_jacobian(0.0, t) + o.stable.log_jacobian(0.0, t);
    Ok(log.exp_m1().abs())
}

/// Points of an approximate unstable horocycle through (a vector near) `v`.
///
/// The horocycle is replaced by the geodesic circle of radius `radius` centred at the
/// base of `G_{−radius} v`; each entry of `offsets` is a signed arclength along it.
pub fn horocycle_points(
    model: &MetricModel,
    v: &UnitTangentVector,
    radius: f64,
    offsets: &[f64],
    params: &FlowParams,
) -> Result<Vec<UnitTangentVector>> {
    let h = Horocycle::new(model, v, radius, params)?;
    offsets.iter().map(|&s| h.point(model, s, params)).collect()
}

/// The large circle behind `horocycle_points`, computed once.
#[derive(Clone, Copy, Debug)]
pub struct Horocycle {
    pub centre: UnitTangentVector,
    pub radius: f64,
    /// Arclength per radian at the far end.
    pub spread: f64,
}

impl Horocycle {
    pub fn new(model: &MetricModel, v: &UnitTangentVector, radius: f64, params: &FlowParams) -> Result<Self> {
        let centre = flow(model, v, -radius, params)?;
        let spread = circle_spread(model, &centre, radius, params)?;
        Ok(Self { centre, radius, spread })
    }

    /// Outward normal at signed arclength `s` from the base point.
    pub fn point(&self, model: &MetricModel, s: f64, params: &FlowParams) -> Result<UnitTangentVector> {
        let w = UnitTangentVector { base: self.centre.base, theta: self.centre.theta + s / self.spread };
        flow(model, &w, self.radius, params)
    }
}

/// `j(R)` for the Jacobi field `j'' = −K j`, `j(0) = 0`, `j'(0) = 1` along the orbit of `w`.
fn circle_spread(model: &MetricModel, w: &UnitTangentVector, radius: f64, params: &FlowParams) -> Result<f64> {
    let (ks, _) = sample_curvature(model, w, radius, params)?;
    let n = ks.len() - 1;
    let h = 2.0 * radius / n as f64;
    let (mut j, mut jp) = (0.0f64, 1.0f64);
    for i in 0..n / 2 {
        let (k0, km, k1) = (ks[2 * i], ks[2 * i + 1], ks[2 * i + 2]);
        let f = |k: f64, j: f64, jp: f64| (jp, -k * j);
        let (a1, b1) = f(k0, j, jp);
        let (a2, b2) = f(km, j + 0.5 * h * a1, jp + 0.5 * h * b1);
        let (a3, b3) = f(km, j + 0.5 * h * a2, jp + 0.5 * h * b2);
        let (a4, b4) = f(k1, j + h * a3, jp + h * b3);
        j += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        jp += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
    }
    Ok(j)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistortionReport {
    pub offsets: Vec<f64>,
    /// `log(J^u G_{−T}(w_i)/J^u G_{−T}(w_0))` at each horizon, `w_0` the arc centre.
    pub log_ratios: Vec<Vec<f64>>,
    pub horizons: Vec<f64>,
    /// Largest change of a log ratio between consecutive horizons.
    pub cauchy: f64,
    /// `max_i ratio_i · e^{−|s_i|}` at the longest horizon.
    pub constant: f64,
}

/// Distortion of the backward unstable Jacobian along an unstable arc.
pub fn distortion(
    model: &MetricModel,
    v: &UnitTangentVector,
    offsets: &[f64],
    horizons: &[f64],
    params: &LinearizationParams,
) -> Result<DistortionReport> {
    let mut all = vec![0.0];
    all.extend_from_slice(offsets);
    let pts = horocycle_points(model, v, 15.0, &all, &params.flow)?;
    let t_max = horizons.iter().cloned().fold(0.0, f64::max);
    let burn = params.burn(model);
    let tracks: Vec<SlopeTrack> =
        pts.iter().map(|w| Ok(OrbitSlopes::compute(model, w, t_max + burn, 0.0, params)?.unstable)).collect::<Result<_>>()?;
    let log_ratios: Vec<Vec<f64>> = horizons
        .iter()
        .map(|&t| {
            let base = tracks[0].log_jacobian(0.0, -t);
            tracks[1..].iter().map(|tr| tr.log_jacobian(0.0, -t) - base).collect()
        })
        .collect();
    let mut cauchy: f64 = 0.0;
    for pair in log_ratios.windows(2) {
        for (a, b) in pair[0].iter().zip(pair[1].iter()) {
            cauchy = cauchy.max((a - b).abs());
        }
    }
    let last = log_ratios.last().cloned().unwrap_or_default();
    let constant = last.iter().zip(offsets).map(|(l, s)| (l - s.abs()).exp()).fold(0.0, f64::max);
    Ok(DistortionReport { offsets: offsets.to_vec(), log_ratios, horizons: horizons.to_vec(), cauchy, constant })
}

/// Diagnostic CSV `(t, u, logJ)`.
pub fn riccati_csv(rows: &[(f64, RiccatiState)]) -> String {
    let mut out = String::from("t,u,logJ\n");
    for (t, s) in rows {
        let _ = writeln!(out, "{t},{},{}", s.u, s.log_j);
    }
    out
}

/// Base point of a vector, kept for call sites that only need positions.
pub fn base_of(v: &UnitTangentVector) -> ChartPoint {
    v.base
}
