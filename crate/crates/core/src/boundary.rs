//! The circle at infinity, Busemann cocycle, Gibbs kernel and visibility measure.
//!
//! Boundary points are angles in the disc chart. The half-plane is mapped there by
//! `w = (z − i)/(z + i)`, so `∞` sits at angle 0. On rotational models the angle is
//! the asymptotic polar angle of the exp-chart.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{flow, shoot, wrap_angle, FlowParams, GeodesicStepper, Mobius, ShootParams, UnitTangentVector};
use crate::geometry::{ChartPoint, MetricModel, Variant};
use crate::linearization::{phi_u_from, LinearizationParams, OrbitSlopes};

/// Rays stop once the disc-chart gap `1 − |w|` falls below this; the angle has converged.
const GAP_STOP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub xi: f64,
}

impl BoundaryPoint {
    pub fn new(xi: f64) -> Self {
        Self { xi: wrap_angle(xi) }
    }

    /// Half-plane endpoint; `None` is `∞`.
    pub fn from_half_plane(x: Option<f64>) -> Self {
        match x {
            None => Self { xi: 0.0 },
            Some(x) => Self::new(cayley(Complex64::new(x, 0.0)).arg()),
        }
    }

    pub fn to_half_plane(&self) -> Option<f64> {
        if self.xi == 0.0 {
            None
        } else {
            Some(-1.0 / (0.5 * self.xi).tan())
        }
    }

    pub fn disc_point(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.xi)
    }

    /// Image under a disc Möbius map.
    pub fn mobius(&self, g: &Mobius) -> Self {
        Self::new(g.apply(self.disc_point()).arg())
    }
}

fn equal_edges(bins: usize) -> Vec<f64> {
    (0..=bins).map(|k| TAU * k as f64 / bins as f64).collect()
}

fn cayley(z: Complex64) -> Complex64 {
    (z - Complex64::i()) / (z + Complex64::i())
}

/// A finite measure on the boundary circle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryMeasure {
    Atoms { atoms: Vec<(BoundaryPoint, f64)> },
    Histogram { edges: Vec<f64>, masses: Vec<f64> },
}

impl BoundaryMeasure {
    pub fn point(xi: BoundaryPoint) -> Self {
        Self::Atoms { atoms: vec![(xi, 1.0)] }
    }

    /// Normalized Lebesgue measure as a histogram.
    pub fn uniform(bins: usize) -> Self {
        Self::Histogram { edges: equal_edges(bins), masses: vec![1.0 / bins as f64; bins] }
    }

    /// Histogram of weighted angles on `bins` equal bins of `[0, 2π)`.
    pub fn from_angles(angles: impl IntoIterator<Item = (f64, f64)>, bins: usize) -> Self {
        let mut masses = vec![0.0; bins];
        for (xi, w) in angles {
            let k = ((wrap_angle(xi) / TAU * bins as f64) as usize).min(bins - 1);
            masses[k] += w;
        }
        Self::Histogram { edges: equal_edges(bins), masses }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Atoms { atoms } => atoms.iter().all(|(_, w)| *w >= 0.0 && w.is_finite()),
            Self::Histogram { edges, masses } => {
                edges.len() == masses.len() + 1
                    && edges.windows(2).all(|e| e[1] > e[0])
                    && masses.iter().all(|m| *m >= 0.0 && m.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("boundary measure needs nonnegative finite masses and increasing edges"))
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            Self::Atoms { atoms } => atoms.iter().map(|(_, w)| w).sum(),
            Self::Histogram { masses, .. } => masses.iter().sum(),
        }
    }

    pub fn normalized(&self) -> Result<Self> {
        let m = self.total_mass();
        if !(m > 0.0) {
            return Err(Error::invalid("cannot normalize a zero measure"));
        }
        Ok(match self {
            Self::Atoms { atoms } => Self::Atoms { atoms: atoms.iter().map(|(x, w)| (*x, w / m)).collect() },
            Self::Histogram { edges, masses } => Self::Histogram { edges: edges.clone(), masses: masses.iter().map(|w| w / m).collect() },
        })
    }

    /// Quadrature nodes: atoms themselves, or bin midpoints carrying the bin mass.
    pub fn nodes(&self) -> Vec<(BoundaryPoint, f64)> {
        match self {
            Self::Atoms { atoms } => atoms.clone(),
            Self::Histogram { edges, masses } => {
                edges.windows(2).zip(masses).map(|(e, m)| (BoundaryPoint::new(0.5 * (e[0] + e[1])), *m)).collect()
            }
        }
    }

    /// Mass per unit angle in each bin (histograms only).
    pub fn densities(&self) -> Option<Vec<f64>> {
        match self {
            Self::Atoms { .. } => None,
            Self::Histogram { edges, masses } => Some(edges.windows(2).zip(masses).map(|(e, m)| m / (e[1] - e[0])).collect()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundaryParams {
    /// Flow time used to read off ray endpoints.
    pub ray_horizon: f64,
    pub ray_dt: f64,
    /// Launch angles sampled before bracketing an aim.
    pub aim_samples: usize,
    /// Endpoint tolerance of an aim, in radians.
    pub aim_tolerance: f64,
    pub aim_iterations: usize,
    pub linearization: LinearizationParams,
    pub shoot: ShootParams,
}

impl Default for BoundaryParams {
    fn default() -> Self {
        Self {
            ray_horizon: 20.0,
            ray_dt: 1e-2,
            aim_samples: 24,
            aim_tolerance: 1e-10,
            aim_iterations: 100,
            linearization: LinearizationParams::default(),
            shoot: ShootParams::default(),
        }
    }
}

/// A truncated limit with its Cauchy diagnostic between horizons `T` and `T/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncated {
    pub value: f64,
    pub diagnostic: f64,
}

fn global_chart(model: &MetricModel) -> Result<()> {
    match model.variant() {
        Variant::Conformal(_) => Err(Error::Unsupported(format!("{} is not a global chart of the universal cover", model.name()))),
        _ => Ok(()),
    }
}

/// Boundary angle of a chart point seen from infinity, and its disc-chart gap.
fn boundary_angle(model: &MetricModel, p: ChartPoint) -> (f64, f64) {
    let z = Complex64::new(p.x, p.y);
    match model.variant() {
        Variant::UpperHalfPlane => {
            let w = cayley(z);
            (w.arg(), 1.0 - w.norm())
        }
        Variant::PoincareDisc => (z.arg(), 1.0 - z.norm()),
        _ => (z.arg(), f64::INFINITY),
    }
}

/// Endpoint of the ray of `v`, read off after flowing for `t` at the default ray step.
pub fn ray_endpoint(model: &MetricModel, v: &UnitTangentVector, t: f64) -> Result<BoundaryPoint> {
    ray_endpoint_with(model, v, t, BoundaryParams::default().ray_dt)
}

pub fn ray_endpoint_with(model: &MetricModel, v: &UnitTangentVector, t: f64, dt: f64) -> Result<BoundaryPoint> {
    global_chart(model)?;
    if !(t >= 0.0) {
        return Err(Error::invalid("ray horizon must be nonnegative"));
    }
    let params = FlowParams::with_dt(dt);
    let n = params.steps_for(t);
    let h = if n == 0 { 0.0 } else { t / n as f64 };
    let mut s = GeodesicStepper::new(model, v, &params)?;
    for _ in 0..n {
        if boundary_angle(model, s.position()).1 < GAP_STOP {
            break;
        }
        s.step(h)?;
    }
    Ok(BoundaryPoint::new(boundary_angle(model, s.position()).0))
}

/// Ray endpoints of a fan of equally spaced directions at one point, used to aim at
/// boundary points. The endpoint map is an increasing degree-one circle map.
#[derive(Clone, Debug)]
pub struct RayFan<'a> {
    model: &'a MetricModel,
    base: ChartPoint,
    params: BoundaryParams,
    ends: Vec<f64>,
}

impl<'a> RayFan<'a> {
    pub fn new(model: &'a MetricModel, base: ChartPoint, params: &BoundaryParams) -> Result<Self> {
        global_chart(model)?;
        model.check(base)?;
        let n = params.aim_samples.max(3);
        let ends = (0..n)
            .map(|k| {
                Ok(ray_endpoint_with(
                    model,
                    &UnitTangentVector { base, theta: TAU * k as f64 / n as f64 },
                    params.ray_horizon,
                    params.ray_dt,
                )?
                .xi)
            })
            .collect::<Result<_>>()?;
        Ok(Self { model, base, params: *params, ends })
    }

    fn endpoint(&self, theta: f64) -> Result<f64> {
        let v = UnitTangentVector { base: self.base, theta };
        Ok(ray_endpoint_with(self.model, &v, self.params.ray_horizon, self.params.ray_dt)?.xi)
    }

    /// Unit vector at the fan's base whose ray ends at `xi`.
    pub fn aim(&self, xi: BoundaryPoint) -> Result<UnitTangentVector> {
        let n = self.ends.len();
        let step = TAU / n as f64;
        let k = (0..n)
            .find(|&k| wrap_angle(xi.xi - self.ends[k]) <= wrap_angle(self.ends[(k + 1) % n] - self.ends[k]))
            .ok_or(Error::Convergence { what: "ray aim bracketing", residual: PI })?;
        let e0 = self.ends[k];
        let target = wrap_angle(xi.xi - e0);
        let span = wrap_angle(self.ends[(k + 1) % n] - e0);
        // bracketed regula falsi (Illinois) on g(θ) = unwrapped endpoint offset − target
        let offset = |e: f64| {
            let d = wrap_angle(e - e0);
            if d > 0.5 * (span + TAU) {
                d - TAU
            } else {
                d
            }
        };
        let (mut lo, mut hi) = (step * k as f64, step * (k + 1) as f64);
        let (mut glo, mut ghi) = (-target, span - target);
        if glo.abs() <= self.params.aim_tolerance {
            return Ok(UnitTangentVector { base: self.base, theta: wrap_angle(lo) });
        }
        if ghi.abs() <= self.params.aim_tolerance {
            return Ok(UnitTangentVector { base: self.base, theta: wrap_angle(hi) });
        }
        let mut side = 0i8;
        let mut best = (f64::INFINITY, lo);
        for _ in 0..self.params.aim_iterations {
            let mut mid = (lo * ghi - hi * glo) / (ghi - glo);
            if !(mid > lo && mid < hi) {
                mid = 0.5 * (lo + hi);
            }
            let g = offset(self.endpoint(mid)?) - target;
            if g.abs() < best.0 {
                best = (g.abs(), mid);
            }
            if g.abs() <= self.params.aim_tolerance || hi - lo < 1e-15 {
                break;
            }
            if g < 0.0 {
                lo = mid;
                glo = g;
                if side == -1 {
                    ghi *= 0.5;
                }
                side = -1;
            } else {
                hi = mid;
                ghi = g;
                if side == 1 {
                    glo *= 0.5;
                }
                side = 1;
            }
        }
        if best.0 > self.params.aim_tolerance.max(1e-8) {
            return Err(Error::Convergence { what: "ray aim", residual: best.0 });
        }
        Ok(UnitTangentVector { base: self.base, theta: wrap_angle(best.1) })
    }
}

/// Unit vector at `z` whose geodesic ray ends at `xi`.
pub fn aim(model: &MetricModel, z: ChartPoint, xi: BoundaryPoint, params: &BoundaryParams) -> Result<UnitTangentVector> {
    RayFan::new(model, z, params)?.aim(xi)
}

fn flow_params(params: &BoundaryParams) -> FlowParams {
    params.linearization.flow
}

/// Points at distance `t` and `t/2` along the ray `w`.
fn ray_points(model: &MetricModel, w: &UnitTangentVector, t: f64, params: &BoundaryParams) -> Result<[ChartPoint; 2]> {
    let fp = flow_params(params);
    let half = flow(model, w, 0.5 * t, &fp)?;
    let full = flow(model, &half, 0.5 * t, &fp)?;
    Ok([full.base, half.base])
}

fn busemann_pair(
    model: &MetricModel,
    ray: &UnitTangentVector,
    y: ChartPoint,
    z: ChartPoint,
    t: f64,
    params: &BoundaryParams,
) -> Result<[f64; 2]> {
    let pts = ray_points(model, ray, t, params)?;
    let mut out = [0.0; 2];
    for (o, c) in out.iter_mut().zip(pts) {
        *o = model.distance_with(c, z, &params.shoot)? - model.distance_with(c, y, &params.shoot)?;
    }
    Ok(out)
}

/// `β_ξ(y, z) ≈ d(c(T), z) − d(c(T), y)` along the ray `c` from `y` to `ξ`.
pub fn busemann(
    model: &MetricModel,
    xi: BoundaryPoint,
    y: ChartPoint,
    z: ChartPoint,
    t: f64,
    params: &BoundaryParams,
) -> Result<Truncated> {
    global_chart(model)?;
    model.check(z)?;
    if y == z {
        model.check(y)?;
        return Ok(Truncated { value: 0.0, diagnostic: 0.0 });
    }
    let ray = aim(model, y, xi, params)?;
    let [full, half] = busemann_pair(model, &ray, y, z, t, params)?;
    Ok(Truncated { value: full, diagnostic: (full - half).abs() })
}

/// `∫ φ^u` along the segment from `c` to `y`, oriented towards `y`. The vector field
/// along the segment is the reverse of the orbit of `v` (at `y`, pointing to `c`), so
/// its unstable slope is minus the stable slope of that orbit.
fn potential_integral(model: &MetricModel, v: &UnitTangentVector, length: f64, params: &BoundaryParams) -> Result<f64> {
    let lp = &params.linearization;
    let o = OrbitSlopes::compute(model, v, 0.0, length + lp.burn(model), lp)?;
    Ok(o.stable.integrate_with(0.0, length, |s, k| phi_u_from(-s, k)))
}

/// The potential-form kernel `k^u(o, ·; ξ)` with `o` and the horizon fixed. The aims from
/// `o` and the `o`-side integrals depend only on `ξ` and are kept in a `KernelAnchor`.
pub struct GibbsKernel<'a> {
    model: &'a MetricModel,
    o: ChartPoint,
    t: f64,
    params: BoundaryParams,
    fan: RayFan<'a>,
}

/// Truncation points `c(T)`, `c(T/2)` on the ray from `o` to `ξ` and the potential
/// integrals from them back to `o`.
#[derive(Clone, Copy, Debug)]
pub struct KernelAnchor {
    points: [ChartPoint; 2],
    io: [f64; 2],
}

impl<'a> GibbsKernel<'a> {
    pub fn new(model: &'a MetricModel, o: ChartPoint, t: f64, params: &BoundaryParams) -> Result<Self> {
        global_chart(model)?;
        Ok(Self { model, o, t, params: *params, fan: RayFan::new(model, o, params)? })
    }

    pub fn anchor(&self, xi: BoundaryPoint) -> Result<KernelAnchor> {
        let ray = self.fan.aim(xi)?;
        let points = ray_points(self.model, &ray, self.t, &self.params)?;
        // the points sit at flow times T and T/2 along a minimizing ray; closed-form
        // distances absorb the integration error of the ray where they exist
        let mut io = [0.0; 2];
        for ((i, c), lo) in io.iter_mut().zip(points).zip([self.t, 0.5 * self.t]) {
            let lo = match self.model.variant() {
                Variant::UpperHalfPlane | Variant::PoincareDisc => self.model.distance_with(self.o, c, &self.params.shoot)?,
                _ => lo,
            };
            *i = potential_integral(self.model, &ray, lo, &self.params)?;
        }
        Ok(KernelAnchor { points, io })
    }

    pub fn evaluate(&self, anchor: &KernelAnchor, z: ChartPoint) -> Result<Truncated> {
        self.model.check(z)?;
        if z == self.o {
            return Ok(Truncated { value: 1.0, diagnostic: 0.0 });
        }
        let mut log_k = [0.0; 2];
        for ((l, c), io) in log_k.iter_mut().zip(anchor.points).zip(anchor.io) {
            let shot = shoot(self.model, z, c, &self.params.shoot)?;
            *l = potential_integral(self.model, &shot.initial, shot.length, &self.params)? - io;
        }
        Ok(Truncated { value: log_k[0].exp(), diagnostic: (log_k[0] - log_k[1]).abs() })
    }
}

/// `k^u(o, z; ξ) = exp(∫_ξ^z φ^u − ∫_ξ^o φ^u)`, both integrals started at the point
/// `c(T)` of the ray from `o` to `ξ`. The diagnostic is `|log k(T) − log k(T/2)|`.
pub fn gibbs_kernel_potential_form(
    model: &MetricModel,
    o: ChartPoint,
    z: ChartPoint,
    xi: BoundaryPoint,
    t: f64,
    params: &BoundaryParams,
) -> Result<Truncated> {
    global_chart(model)?;
    model.check(z)?;
    if o == z {
        model.check(o)?;
        return Ok(Truncated { value: 1.0, diagnostic: 0.0 });
    }
    let k = GibbsKernel::new(model, o, t, params)?;
    k.evaluate(&k.anchor(xi)?, z)
}

/// `k^u(o, z; ξ) ≈ 𝒥^u G_{−T−β}(v_{ξ,z}) / 𝒥^u G_{−T}(v_{ξ,o})` with `β = β_ξ(o, z)` truncated
/// at the same horizon. The diagnostic is `|log k(T) − log k(T/2)|`.
pub fn gibbs_kernel_jacobian_form(
    model: &MetricModel,
    o: ChartPoint,
    z: ChartPoint,
    xi: BoundaryPoint,
    t: f64,
    params: &BoundaryParams,
) -> Result<Truncated> {
    global_chart(model)?;
    model.check(z)?;
    if o == z {
        model.check(o)?;
        return Ok(Truncated { value: 1.0, diagnostic: 0.0 });
    }
    let ray_o = aim(model, o, xi, params)?;
    let ray_z = aim(model, z, xi, params)?;
    let beta = busemann_pair(model, &ray_o, o, z, t, params)?;
    let depth = t + beta[0];
    if !(depth > 0.0 && t + beta[1] > 0.0) {
        return Err(Error::invalid("horizon too short for the Busemann offset of z"));
    }
    let lp = &params.linearization;
    let burn = lp.burn(model);
    let to = OrbitSlopes::compute(model, &ray_o.flip(), t + burn, 0.0, lp)?.unstable;
    let tz = OrbitSlopes::compute(model, &ray_z.flip(), depth + burn, 0.0, lp)?.unstable;
    let log_at = |s: f64, b: f64| tz.log_jacobian(0.0, -s - b) - to.log_jacobian(0.0, -s);
    let lf = log_at(t, beta[0]);
    let lh = log_at(0.5 * t, beta[1]);
    Ok(Truncated { value: lf.exp(), diagnostic: (lf - lh).abs() })
}

/// Boundary histogram of `n` equally spaced directions at `z`, normalized to mass 1.
pub fn visibility_measure(model: &MetricModel, z: ChartPoint, n: usize, bins: usize, params: &BoundaryParams) -> Result<BoundaryMeasure> {
    global_chart(model)?;
    model.check(z)?;
    if n == 0 || bins == 0 {
        return Err(Error::invalid("visibility needs at least one direction and one bin"));
    }
    let ends: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|k| {
            let v = UnitTangentVector { base: z, theta: TAU * k as f64 / n as f64 };
            Ok(ray_endpoint_with(model, &v, params.ray_horizon, params.ray_dt)?.xi)
        })
        .collect::<Result<_>>()?;
    let w = 1.0 / n as f64;
    Ok(BoundaryMeasure::from_angles(ends.into_iter().map(|e| (e, w)), bins))
}

/// One evaluated kernel triple.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelRow {
    pub o: ChartPoint,
    pub z: ChartPoint,
    pub xi: BoundaryPoint,
    pub potential: Truncated,
    pub jacobian: Truncated,
}

impl KernelRow {
    pub fn evaluate(model: &MetricModel, o: ChartPoint, z: ChartPoint, xi: BoundaryPoint, t: f64, params: &BoundaryParams) -> Result<Self> {
        Ok(Self {
            o,
            z,
            xi,
            potential: gibbs_kernel_potential_form(model, o, z, xi, t, params)?,
            jacobian: gibbs_kernel_jacobian_form(model, o, z, xi, t, params)?,
        })
    }

    pub fn relative_gap(&self) -> f64 {
        (self.potential.value / self.jacobian.value - 1.0).abs()
    }

    pub fn diagnostic(&self) -> f64 {
        self.potential.diagnostic.max(self.jacobian.diagnostic)
    }
}

pub fn kernel_csv(rows: &[KernelRow]) -> String {
    let mut out = String::from("o_x,o_y,z_x,z_y,xi,k_potential,k_jacobian,diagnostic\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.o.x,
            r.o.y,
            r.z.x,
            r.z.y,
            r.xi.xi,
            r.potential.value,
            r.jacobian.value,
            r.diagnostic()
        );
    }
    out
}
