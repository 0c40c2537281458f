//! Empirical measures on phase space: Gibbs u-states by averaging, diffusion of Dirac
//! masses, Birkhoff averages of the diffusion operator, φ^u-harmonic densities and
//! characteristic versus visibility classes.
//!
//! Every sample `i` draws from its own ChaCha8 stream `i` of the run seed and samples are
//! collected in index order, so results do not depend on the number of workers.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{BoundaryMeasure, BoundaryParams, GibbsKernel, Truncated};
use crate::error::{Error, Result};
use crate::flow::{flow, FlowParams, FuchsianDomain, QuotientSurface, UnitTangentVector};
use crate::foliated::{circle_diff, FoliatedState, SuspensionFoliation, TransverseMeasure};
use crate::geometry::{ChartPoint, MetricModel, Region};
use crate::linearization::{Horocycle, LinearizationParams, OrbitSlopes};

/// Step used for ensembles. Single orbits decorrelate long before the integration error
/// matters, so ensembles run coarser than the default flow step.
pub const ENSEMBLE_DT: f64 = 2e-2;

/// Radius of the circle standing in for an unstable horocycle.
pub const HOROCYCLE_RADIUS: f64 = 15.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleParams {
    pub flow: FlowParams,
    pub horocycle_radius: f64,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        Self { flow: FlowParams::with_dt(ENSEMBLE_DT), horocycle_radius: HOROCYCLE_RADIUS }
    }
}

/// Random stream `index` of `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn par_samples<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..n).into_par_iter().map(f).collect()
}

/// A space carrying a (foliated) geodesic flow. Fiber coordinates are ignored where
/// there is no fiber.
pub trait PhaseFlow: Sync {
    /// The model of the universal cover.
    fn cover(&self) -> &MetricModel;
    fn advance(&self, s: &FoliatedState, t: f64, params: &FlowParams) -> Result<FoliatedState>;
}

impl PhaseFlow for MetricModel {
    fn cover(&self) -> &MetricModel {
        self
    }

    fn advance(&self, s: &FoliatedState, t: f64, params: &FlowParams) -> Result<FoliatedState> {
        Ok(FoliatedState { v: flow(self, &s.v, t, params)?, fiber: s.fiber })
    }
}

impl PhaseFlow for QuotientSurface {
    fn cover(&self) -> &MetricModel {
        &self.model
    }

    fn advance(&self, s: &FoliatedState, t: f64, params: &FlowParams) -> Result<FoliatedState> {
        Ok(FoliatedState { v: QuotientSurface::advance(self, &s.v, t, params)?.0, fiber: s.fiber })
    }
}

impl PhaseFlow for SuspensionFoliation {
    fn cover(&self) -> &MetricModel {
        &self.base.model
    }

    fn advance(&self, s: &FoliatedState, t: f64, params: &FlowParams) -> Result<FoliatedState> {
        self.flow(s, t, params)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: FoliatedState,
    pub weight: f64,
    /// Flow time that produced the sample.
    pub time: f64,
}

/// Weighted samples on phase space.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub samples: Vec<Sample>,
}

impl EmpiricalMeasure {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| !(s.weight >= 0.0 && s.weight.is_finite())) {
            return Err(Error::invalid(format!("sample weight {} is not a finite nonnegative number", s.weight)));
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.samples.iter().map(|s| s.weight).sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        let total = self.total_weight();
        if !(total > 0.0) {
            return Err(Error::invalid("cannot normalize a measure of zero mass"));
        }
        Ok(Self { samples: self.samples.iter().map(|s| Sample { weight: s.weight / total, ..*s }).collect() })
    }

    /// Image under the flow for time `t`.
    pub fn flowed<S: PhaseFlow + ?Sized>(&self, space: &S, t: f64, params: &FlowParams) -> Result<Self> {
        let samples = par_samples(self.len(), |i| {
            let s = &self.samples[i];
            Ok(Sample { state: space.advance(&s.state, t, params)?, weight: s.weight, time: s.time + t })
        })?;
        Ok(Self { samples })
    }

    pub fn histogram<B: Binning + ?Sized>(&self, binning: &B) -> Histogram {
        let mut h = Histogram::zeros(binning.cells());
        for s in &self.samples {
            match binning.cell_of(&s.state) {
                Some(c) => {
                    h.masses[c] += s.weight;
                    h.counts[c] += 1;
                }
                None => h.outside += s.weight,
            }
        }
        h
    }

    pub fn fiber_marginal(&self, bins: usize) -> TransverseMeasure {
        TransverseMeasure::from_samples(self.samples.iter().map(|s| (s.state.fiber, s.weight)), bins)
    }

    /// Weighted mean of `f`, with the standard error for equal weights.
    pub fn mean(&self, f: impl Fn(&FoliatedState) -> f64) -> (f64, f64) {
        let total = self.total_weight();
        let (mut m, mut m2) = (0.0, 0.0);
        for s in &self.samples {
            let y = f(&s.state);
            m += s.weight * y;
            m2 += s.weight * y * y;
        }
        let (m, m2) = (m / total, m2 / total);
        (m, ((m2 - m * m).max(0.0) / self.len().max(1) as f64).sqrt())
    }

    /// `x,y,theta,fiber,weight`, one row per sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,theta,fiber,weight\n");
        for s in &self.samples {
            let v = &s.state.v;
            let _ = writeln!(out, "{},{},{},{},{}", v.base.x, v.base.y, v.theta, s.state.fiber, s.weight);
        }
        out
    }
}

/// A finite partition of (part of) phase space.
pub trait Binning {
    fn cells(&self) -> usize;
    fn cell_of(&self, s: &FoliatedState) -> Option<usize>;
}

/// Cells of the octagon's unit tangent bundle: equal disc-radius shells up to the vertex
/// radius, equal polar sectors and equal direction sectors, indexed row-major in
/// (shell, sector, direction).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OctagonCells {
    pub shells: usize,
    pub sectors: usize,
    pub directions: usize,
}

/// Disc radius of the vertices of the regular octagon with angles `π/4`.
pub fn octagon_vertex_radius() -> f64 {
    // cosh of the vertex distance is cot²(π/8)
    let cot = 1.0 / (PI / 8.0).tan();
    (0.5 * (cot * cot).acosh()).tanh()
}

impl OctagonCells {
    pub fn new(shells: usize, sectors: usize, directions: usize) -> Result<Self> {
        if shells == 0 || sectors == 0 || directions == 0 {
            return Err(Error::invalid("octagon cells need at least one shell, sector and direction"));
        }
        Ok(Self { shells, sectors, directions })
    }

    /// The 4 × 4 × 4 partition used for coarse comparisons.
    pub fn coarse() -> Self {
        Self { shells: 4, sectors: 4, directions: 4 }
    }

    /// Base cells only.
    pub fn base(shells: usize, sectors: usize) -> Result<Self> {
        Self::new(shells, sectors, 1)
    }

    pub fn cell_at(&self, p: ChartPoint, theta: f64) -> Option<usize> {
        let r = p.norm() / octagon_vertex_radius();
        if !(r < 1.0) {
            return None;
        }
        let idx = |x: f64, n: usize| ((x * n as f64) as usize).min(n - 1);
        let shell = idx(r, self.shells);
        let sector = idx(p.y.atan2(p.x).rem_euclid(TAU) / TAU, self.sectors);
        let dir = idx(theta.rem_euclid(TAU) / TAU, self.directions);
        Some((shell * self.sectors + sector) * self.directions + dir)
    }

    /// Normalized Liouville mass of every cell, by midpoint quadrature of the hyperbolic
    /// area element on a `q × q` grid per base cell.
    pub fn liouville(&self, domain: &FuchsianDomain, q: usize) -> Vec<f64> {
        let rv = octagon_vertex_radius();
        let mut areas = vec![0.0; self.shells * self.sectors];
        for (i, a) in areas.iter_mut().enumerate() {
            let (shell, sector) = (i / self.sectors, i % self.sectors);
            let dr = rv / (self.shells * q) as f64;
            let dphi = TAU / (self.sectors * q) as f64;
            for j in 0..q {
                let r = (shell * q + j) as f64 * dr + 0.5 * dr;
                let w = 4.0 * r / (1.0 - r * r).powi(2) * dr * dphi;
                for k in 0..q {
                    let phi = (sector * q + k) as f64 * dphi + 0.5 * dphi;
                    if domain.contains(ChartPoint::new(r * phi.cos(), r * phi.sin())) {
                        *a += w;
                    }
                }
            }
        }
        let total: f64 = areas.iter().sum();
        areas.iter().flat_map(|a| std::iter::repeat_n(a / total / self.directions as f64, self.directions)).collect()
    }

    /// Index of the cell of `coarse` containing fine cell `cell`; the counts must divide.
    pub fn parent(&self, coarse: &OctagonCells, cell: usize) -> Result<usize> {
        if !self.shells.is_multiple_of(coarse.shells)
            || !self.sectors.is_multiple_of(coarse.sectors)
            || !self.directions.is_multiple_of(coarse.directions)
        {
            return Err(Error::invalid("coarse cells must divide the fine cells"));
        }
        let dir = cell % self.directions;
        let sector = (cell / self.directions) % self.sectors;
        let shell = cell / (self.directions * self.sectors);
        let (s, a, d) =
            (shell / (self.shells / coarse.shells), sector / (self.sectors / coarse.sectors), dir / (self.directions / coarse.directions));
        Ok((s * coarse.sectors + a) * coarse.directions + d)
    }
}

impl Binning for OctagonCells {
    fn cells(&self) -> usize {
        self.shells * self.sectors * self.directions
    }

    fn cell_of(&self, s: &FoliatedState) -> Option<usize> {
        self.cell_at(s.v.base, s.v.theta)
    }
}

/// Equal bins of the fiber circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberBins(pub usize);

impl Binning for FiberBins {
    fn cells(&self) -> usize {
        self.0
    }

    fn cell_of(&self, s: &FoliatedState) -> Option<usize> {
        Some(((s.fiber.rem_euclid(1.0) * self.0 as f64) as usize).min(self.0 - 1))
    }
}

/// Products of octagon cells and fiber bins, fiber index fastest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductCells {
    pub base: OctagonCells,
    pub fiber: usize,
}

impl Binning for ProductCells {
    fn cells(&self) -> usize {
        self.base.cells() * self.fiber
    }

    fn cell_of(&self, s: &FoliatedState) -> Option<usize> {
        Some(self.base.cell_of(s)? * self.fiber + FiberBins(self.fiber).cell_of(s)?)
    }
}

/// Binned masses with raw counts; mass falling outside every cell is kept apart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub masses: Vec<f64>,
    pub counts: Vec<u64>,
    pub outside: f64,
}

impl Histogram {
    pub fn zeros(cells: usize) -> Self {
        Self { masses: vec![0.0; cells], counts: vec![0; cells], outside: 0.0 }
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Cell masses divided by their sum.
    pub fn probabilities(&self) -> Vec<f64> {
        let t = self.total();
        self.masses.iter().map(|m| if t > 0.0 { m / t } else { 0.0 }).collect()
    }

    /// Total variation distance to a reference over the same cells; both sides are normalized.
    pub fn tv_distance(&self, reference: &[f64]) -> f64 {
        tv_distance(&self.probabilities(), reference)
    }

    /// Wilson score intervals for the cell probabilities at `z` standard deviations.
    pub fn intervals(&self, z: f64) -> Vec<(f64, f64)> {
        let n: u64 = self.counts.iter().sum();
        self.counts.iter().map(|&k| binomial_interval(k, n, z)).collect()
    }

    /// Sums the cells sharing a parent; `parent` maps a cell to its coarse cell.
    pub fn coarsen(&self, cells: usize, parent: impl Fn(usize) -> Result<usize>) -> Result<Self> {
        let mut out = Self::zeros(cells);
        out.outside = self.outside;
        for (i, (m, c)) in self.masses.iter().zip(&self.counts).enumerate() {
            let p = parent(i)?;
            if p >= cells {
                return Err(Error::invalid(format!("parent cell {p} out of range")));
            }
            out.masses[p] += m;
            out.counts[p] += c;
        }
        Ok(out)
    }
}

/// `½ Σ |p/Σp − q/Σq|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    let norm = |x: f64, s: f64| if s > 0.0 { x / s } else { 0.0 };
    0.5 * p.iter().zip(q).map(|(a, b)| (norm(*a, sp) - norm(*b, sq)).abs()).sum::<f64>()
}

/// Wilson score interval for `k` successes out of `n`.
pub fn binomial_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Base-point density on a chart rectangle: weight per unit chart area.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub region: Region,
    pub nx: usize,
    pub ny: usize,
    /// Bin widths in x and y.
    pub bandwidth: [f64; 2],
    pub counts: Vec<u64>,
    pub density: Vec<f64>,
}

impl DensityEstimate {
    pub fn from_measure(mu: &EmpiricalMeasure, region: Region, nx: usize, ny: usize) -> Result<Self> {
        let (w, h) = (region.x_max - region.x_min, region.y_max - region.y_min);
        if nx == 0 || ny == 0 || !(w > 0.0 && h > 0.0) {
            return Err(Error::invalid("density estimate needs a nondegenerate region and bins"));
        }
        let bandwidth = [w / nx as f64, h / ny as f64];
        let mut counts = vec![0; nx * ny];
        let mut density = vec![0.0; nx * ny];
        for s in &mu.samples {
            let p = s.state.v.base;
            if !region.contains(p) {
                continue;
            }
            let i = (((p.x - region.x_min) / bandwidth[0]) as usize).min(nx - 1);
            let j = (((p.y - region.y_min) / bandwidth[1]) as usize).min(ny - 1);
            counts[j * nx + i] += 1;
            density[j * nx + i] += s.weight / (bandwidth[0] * bandwidth[1]);
        }
        Ok(Self { region, nx, ny, bandwidth, counts, density })
    }

    /// `∫ density`, the weight inside the region.
    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bandwidth[0] * self.bandwidth[1]
    }
}

/// A Liouville-distributed unit vector over the octagon: hyperbolic-area rejection
/// sampling in the disc of the vertex radius, uniform direction.
pub fn sample_liouville(domain: &FuchsianDomain, rng: &mut impl Rng) -> UnitTangentVector {
    let rho_max = 2.0 * octagon_vertex_radius().atanh();
    loop {
        let rho = (1.0 + rng.random::<f64>() * (rho_max.cosh() - 1.0)).acosh();
        let r = (0.5 * rho).tanh();
        let phi = TAU * rng.random::<f64>();
        let p = ChartPoint::new(r * phi.cos(), r * phi.sin());
        if domain.contains(p) {
            return UnitTangentVector { base: p, theta: TAU * rng.random::<f64>() };
        }
    }
}

/// Liouville on the octagon's unit tangent bundle times Lebesgue on the fiber, `n`
/// samples of weight `1/n`.
pub fn liouville_product(domain: &FuchsianDomain, n: usize, seed: u64) -> Result<EmpiricalMeasure> {
    let w = 1.0 / n as f64;
    let samples = par_samples(n, |i| {
        let mut rng = sample_rng(seed, i as u64);
        let v = sample_liouville(domain, &mut rng);
        Ok(Sample { state: FoliatedState { v, fiber: rng.random::<f64>() }, weight: w, time: 0.0 })
    })?;
    EmpiricalMeasure::new(samples)
}

fn check_count(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    Ok(1.0 / n as f64)
}

fn check_horizon(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("time horizon {t} must be finite and nonnegative")));
    }
    Ok(())
}

/// `μ_T = (1/T)∫₀^T G_t*(Leb on an unstable arc) dt`: `n` points uniform on the arc of
/// length `arc` centred at `start`, each flowed for a uniform time in `[0, T]`.
pub fn ugibbs_estimate<S: PhaseFlow + ?Sized>(
    space: &S,
    start: &FoliatedState,
    arc: f64,
    t: f64,
    n: usize,
    seed: u64,
    params: &EnsembleParams,
) -> Result<EmpiricalMeasure> {
    let w = check_count(n)?;
    check_horizon(t)?;
    if !(arc >= 0.0 && arc.is_finite()) {
        return Err(Error::invalid("arc length must be finite and nonnegative"));
    }
    let model = space.cover();
    let horo = Horocycle::new(model, &start.v, params.horocycle_radius, &params.flow)?;
    let samples = par_samples(n, |i| {
        let mut rng = sample_rng(seed, i as u64);
        let s = arc * (rng.random::<f64>() - 0.5);
        let time = t * rng.random::<f64>();
        let v = horo.point(model, s, &params.flow)?;
        let state = space.advance(&FoliatedState { v, fiber: start.fiber }, time, &params.flow)?;
        Ok(Sample { state, weight: w, time })
    })?;
    EmpiricalMeasure::new(samples)
}

/// Truncated `ψ^u(z₂)/ψ^u(z₁) = lim 𝒥^u G_{−t}(z₂)/𝒥^u G_{−t}(z₁)` for the points at
/// arclengths `s1`, `s2` of the unstable arc through `w`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DensityRatio {
    pub z1: UnitTangentVector,
    pub z2: UnitTangentVector,
    pub ratio: f64,
    /// `|log ratio(T) − log ratio(T/2)|`.
    pub diagnostic: f64,
}

pub fn gibbs_density_ratio_check(
    model: &MetricModel,
    w: &UnitTangentVector,
    s1: f64,
    s2: f64,
    t: f64,
    radius: f64,
    params: &LinearizationParams,
) -> Result<DensityRatio> {
    check_horizon(t)?;
    let horo = Horocycle::new(model, w, radius, &params.flow)?;
    let z1 = horo.point(model, s1, &params.flow)?;
    let z2 = horo.point(model, s2, &params.flow)?;
    let burn = params.burn(model);
    let log_back = |z: &UnitTangentVector| -> Result<[f64; 2]> {
        let track = OrbitSlopes::compute(model, z, t + burn, 0.0, params)?.unstable;
        Ok([track.log_jacobian(0.0, -t), track.log_jacobian(0.0, -0.5 * t)])
    };
    let (a, b) = (log_back(&z1)?, log_back(&z2)?);
    let (full, half) = (b[0] - a[0], b[1] - a[1]);
    Ok(DensityRatio { z1, z2, ratio: full.exp(), diagnostic: (full - half).abs() })
}

/// `m_{t,x}`: `n` uniformly random directions at `x` flowed for time `t`.
pub fn diffuse_dirac<S: PhaseFlow + ?Sized>(
    space: &S,
    x: ChartPoint,
    fiber: f64,
    t: f64,
    n: usize,
    seed: u64,
    params: &EnsembleParams,
) -> Result<EmpiricalMeasure> {
    let w = check_count(n)?;
    check_horizon(t)?;
    space.cover().check(x)?;
    let samples = par_samples(n, |i| {
        let mut rng = sample_rng(seed, i as u64);
        let v = UnitTangentVector { base: x, theta: TAU * rng.random::<f64>() };
        Ok(Sample { state: space.advance(&FoliatedState { v, fiber }, t, &params.flow)?, weight: w, time: t })
    })?;
    EmpiricalMeasure::new(samples)
}

/// `m_T = (1/T)∫₀^T m_{t,x} dt`: each sample has its own uniform time in `[0, T]`.
pub fn cesaro_diffusion<S: PhaseFlow + ?Sized>(
    space: &S,
    x: ChartPoint,
    fiber: f64,
    t: f64,
    n: usize,
    seed: u64,
    params: &EnsembleParams,
) -> Result<EmpiricalMeasure> {
    let w = check_count(n)?;
    check_horizon(t)?;
    space.cover().check(x)?;
    let samples = par_samples(n, |i| {
        let mut rng = sample_rng(seed, i as u64);
        let v = UnitTangentVector { base: x, theta: TAU * rng.random::<f64>() };
        let time = t * rng.random::<f64>();
        Ok(Sample { state: space.advance(&FoliatedState { v, fiber }, time, &params.flow)?, weight: w, time })
    })?;
    EmpiricalMeasure::new(samples)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BirkhoffEstimate {
    /// Estimate of `(1/T)∫₀^T D_t f(x) dt`.
    pub value: f64,
    pub stderr: f64,
    /// `(horizon, running average, samples used)` at `T/4`, `T/2` and `T`.
    pub running: Vec<(f64, f64, usize)>,
}

/// Cesàro average of `D_t f(x) = ∫ f dm_{t,x}`. Running averages at shorter horizons
/// reuse the samples whose time falls below them.
pub fn birkhoff_dt<S: PhaseFlow + ?Sized>(
    space: &S,
    f: impl Fn(&FoliatedState) -> f64,
    x: ChartPoint,
    fiber: f64,
    t: f64,
    n: usize,
    seed: u64,
    params: &EnsembleParams,
) -> Result<BirkhoffEstimate> {
    let mu = cesaro_diffusion(space, x, fiber, t, n, seed, params)?;
    Ok(birkhoff_from(&mu, f, t))
}

/// `birkhoff_dt` on an existing Cesàro ensemble of horizon `t`.
pub fn birkhoff_from(mu: &EmpiricalMeasure, f: impl Fn(&FoliatedState) -> f64, t: f64) -> BirkhoffEstimate {
    let values: Vec<(f64, f64)> = mu.samples.iter().map(|s| (s.time, f(&s.state))).collect();
    let running = [0.25, 0.5, 1.0]
        .iter()
        .map(|q| {
            let h = q * t;
            let (sum, count) = values.iter().filter(|(s, _)| *s <= h).fold((0.0, 0usize), |(a, c), (_, y)| (a + y, c + 1));
            (h, if count > 0 { sum / count as f64 } else { f64::NAN }, count)
        })
        .collect();
    let (value, stderr) = mu.mean(f);
    BirkhoffEstimate { value, stderr, running }
}

/// A point of the leaf of `(x, fiber)`: flow leafwise from `x` in direction `theta` for
/// `distance`. The path must fold to a trivial net holonomy word, so the fiber
/// coordinate is unchanged; otherwise the move is rejected.
pub fn same_leaf_point(
    susp: &SuspensionFoliation,
    x: ChartPoint,
    fiber: f64,
    theta: f64,
    distance: f64,
    params: &FlowParams,
) -> Result<FoliatedState> {
    let (v, word) = susp.base.advance(&UnitTangentVector { base: x, theta }, distance, params)?;
    if !word.reduced().is_empty() {
        return Err(Error::invalid(format!("leafwise path folds to the nontrivial word {:?}", word.reduced().0)));
    }
    Ok(FoliatedState { v, fiber })
}

/// `h(z) = ∫ k^u(o, z; ξ) dη(ξ)` with the Gibbs kernels anchored once per node of `η`:
/// atoms are summed exactly, histograms by the midpoint rule.
pub struct HarmonicDensity<'a> {
    kernel: GibbsKernel<'a>,
    nodes: Vec<(f64, crate::boundary::KernelAnchor)>,
}

impl<'a> HarmonicDensity<'a> {
    pub fn new(model: &'a MetricModel, eta: &BoundaryMeasure, o: ChartPoint, t: f64, params: &BoundaryParams) -> Result<Self> {
        eta.validate()?;
        let kernel = GibbsKernel::new(model, o, t, params)?;
        let nodes: Vec<_> = eta.nodes().into_iter().filter(|(_, w)| *w > 0.0).collect();
        let nodes = par_samples(nodes.len(), |i| Ok((nodes[i].1, kernel.anchor(nodes[i].0)?)))?;
        Ok(Self { kernel, nodes })
    }

    /// Value with the largest kernel diagnostic among the nodes.
    pub fn at(&self, z: ChartPoint) -> Result<Truncated> {
        let ks = par_samples(self.nodes.len(), |i| self.kernel.evaluate(&self.nodes[i].1, z))?;
        let mut out = Truncated { value: 0.0, diagnostic: 0.0 };
        for (k, (w, _)) in ks.iter().zip(&self.nodes) {
            out.value += w * k.value;
            out.diagnostic = out.diagnostic.max(k.diagnostic);
        }
        Ok(out)
    }
}

pub fn phiu_harmonic_density(
    model: &MetricModel,
    eta: &BoundaryMeasure,
    o: ChartPoint,
    z: ChartPoint,
    t: f64,
    params: &BoundaryParams,
) -> Result<Truncated> {
    HarmonicDensity::new(model, eta, o, t, params)?.at(z)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CharacteristicParams {
    /// Hyperbolic radius of the neighbourhood of the basepoint.
    pub radius: f64,
    /// Half-width of the fiber window around the leaf's coordinate.
    pub fiber_window: f64,
    /// Reference directions drawn per accepted sample.
    pub reference_draws: usize,
    /// Bins whose expected reference count falls below this are flagged.
    pub min_expected: f64,
}

impl Default for CharacteristicParams {
    fn default() -> Self {
        Self { radius: 0.5, fiber_window: 0.125, reference_draws: 8, min_expected: 5.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CharacteristicLevel {
    pub n: usize,
    pub accepted: usize,
    pub tv: f64,
    pub low_confidence_bins: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CharacteristicReport {
    pub bins: usize,
    pub levels: Vec<CharacteristicLevel>,
}

impl CharacteristicReport {
    /// `TV(last level) − TV(first level)`.
    pub fn trend(&self) -> f64 {
        match (self.levels.first(), self.levels.last()) {
            (Some(a), Some(b)) => b.tv - a.tv,
            _ => 0.0,
        }
    }
}

fn disc_distance(p: ChartPoint, q: ChartPoint) -> f64 {
    let (p, q) = (Complex64::new(p.x, p.y), Complex64::new(q.x, q.y));
    2.0 * ((q - p) / (1.0 - p.conj() * q)).norm().min(1.0 - 1e-16).atanh()
}

/// Backward endpoint `c_v(−∞)` of a disc vector, as an angle.
fn disc_backward_endpoint(v: &UnitTangentVector) -> f64 {
    let p = Complex64::new(v.base.x, v.base.y);
    let e = -Complex64::from_polar(1.0, v.theta);
    ((e + p) / (1.0 + p.conj() * e)).arg().rem_euclid(TAU)
}

/// Boundary law of the Cesàro diffusion ensemble conditioned on a thin neighbourhood
/// of `(x, fiber)`, its directions pushed to backward endpoints, against the visibility
/// law drawn at the same base points. One level per entry of `counts`.
pub fn characteristic_vs_visibility(
    susp: &SuspensionFoliation,
    x: ChartPoint,
    fiber: f64,
    t: f64,
    counts: &[usize],
    bins: usize,
    seed: u64,
    params: &EnsembleParams,
    cp: &CharacteristicParams,
) -> Result<CharacteristicReport> {
    if bins == 0 || cp.reference_draws == 0 {
        return Err(Error::invalid("characteristic comparison needs bins and reference draws"));
    }
    let bin = |a: f64| ((a / TAU * bins as f64) as usize).min(bins - 1);
    let mut levels = Vec::with_capacity(counts.len());
    for (level, &n) in counts.iter().enumerate() {
        let level_seed = seed ^ (level as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mu = cesaro_diffusion(susp, x, fiber, t, n, level_seed, params)?;
        let mut observed = vec![0.0; bins];
        let mut reference = vec![0.0; bins];
        let mut accepted = 0;
        for (i, s) in mu.samples.iter().enumerate() {
            let v = &s.state.v;
            if disc_distance(x, v.base) >= cp.radius || circle_diff(s.state.fiber, fiber).abs() >= cp.fiber_window {
                continue;
            }
            accepted += 1;
            observed[bin(disc_backward_endpoint(v))] += 1.0;
            let mut rng = sample_rng(level_seed, (n + i) as u64);
            for _ in 0..cp.reference_draws {
                let r = UnitTangentVector { base: v.base, theta: TAU * rng.random::<f64>() };
                reference[bin(disc_backward_endpoint(&r))] += 1.0;
            }
        }
        let total_ref: f64 = reference.iter().sum();
        let low_confidence_bins = reference
            .iter()
            .enumerate()
            .filter(|(_, r)| total_ref == 0.0 || *r / total_ref * (accepted as f64) < cp.min_expected)
            .map(|(k, _)| k)
            .collect();
        let tv = if accepted == 0 { 1.0 } else { tv_distance(&observed, &reference) };
        levels.push(CharacteristicLevel { n, accepted, tv, low_confidence_bins });
    }
    Ok(CharacteristicReport { bins, levels })
}
