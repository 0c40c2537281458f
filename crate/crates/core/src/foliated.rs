//! Suspension foliations over the octagon surface: fiber holonomy, the foliated
//! geodesic flow, transverse measures and their Radon–Nikodym cocycle, and `h₀`.
//!
//! The fiber is the circle `[0, 1)`. A fold of the base by a letter applies that
//! letter's fiber map, so states are identified under the diagonal action
//! `γ·(v, x) = (γv, ρ(γ)x)`.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowParams, FuchsianDomain, Letter, QuotientSurface, UnitTangentVector, Word};
use crate::geometry::{ChartPoint, MetricModel};
use crate::linearization::{angle_theta, splitting, LinearizationParams};

/// Tolerance on the fiber action of the surface relator.
pub const RELATION_TOLERANCE: f64 = 1e-6;

fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Signed circular difference `a − b` in `[−1/2, 1/2)`.
pub fn circle_diff(a: f64, b: f64) -> f64 {
    (a - b + 0.5).rem_euclid(1.0) - 0.5
}

/// An orientation-preserving circle homeomorphism of `[0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FiberMap {
    Identity,
    Rotation {
        rho: f64,
    },
    /// `w ↦ e^{i·turn}(w + c)/(1 + c̄w)` on `w = e^{2πix}`, `|c| < 1`.
    Mobius {
        c: [f64; 2],
        #[serde(default)]
        turn: f64,
    },
    /// Piecewise-linear map through `(x_i, y_i)`, with `x` increasing in `[0, 1)` and the
    /// lift `y` increasing with `y_last < y_0 + 1`.
    Tabulated {
        x: Vec<f64>,
        y: Vec<f64>,
    },
}

impl FiberMap {
    /// The boundary action of a disc Möbius map.
    pub fn from_disc(g: &crate::flow::Mobius) -> Self {
        // normalize to SU(1,1): (a w + b)/(b̄ w + ā)
        let s = g.det().sqrt();
        let (a, b) = (g.a / s, g.b / s);
        let c = b / a;
        Self::Mobius { c: [c.re, c.im], turn: (a / a.conj()).arg() }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Identity => Ok(()),
            Self::Rotation { rho } if rho.is_finite() => Ok(()),
            Self::Rotation { .. } => Err(Error::invalid("rotation number must be finite")),
            Self::Mobius { c, turn } => {
                if c[0].hypot(c[1]) < 1.0 && turn.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("Möbius fiber map needs |c| < 1"))
                }
            }
            Self::Tabulated { x, y } => {
                let ok = x.len() >= 2
                    && x.len() == y.len()
                    && x[0] >= 0.0
                    && x[x.len() - 1] < 1.0
                    && x.windows(2).all(|w| w[1] > w[0])
                    && y.windows(2).all(|w| w[1] > w[0])
                    && y[y.len() - 1] < y[0] + 1.0;
                if ok {
                    Ok(())
                } else {
                    Err(Error::invalid("tabulated fiber map must be a monotone degree-one lift"))
                }
            }
        }
    }

    /// Lift of the map: increasing real function with `F(x + 1) = F(x) + 1`.
    fn lift(&self, x: f64) -> f64 {
        match self {
            Self::Identity => x,
            Self::Rotation { rho } => x + rho,
            Self::Mobius { c, turn } => {
                // arg(w + c) − arg(1 + c̄w) = θ + 2 arg(1 + c e^{−iθ}), and 1 + c e^{−iθ}
                // stays in the right half-plane, so this branch is continuous
                let q = 1.0 + Complex64::new(c[0], c[1]) * Complex64::from_polar(1.0, -TAU * x);
                x + (turn + 2.0 * q.arg()) / TAU
            }
            Self::Tabulated { x: xs, y: ys } => {
                let n = xs.len();
                let k = x.floor();
                let f = x - k;
                // periodic extension of the knots
                let knot = |i: isize| -> (f64, f64) {
                    let m = i.rem_euclid(n as isize) as usize;
                    let shift = i.div_euclid(n as isize) as f64;
                    (xs[m] + shift, ys[m] + shift)
                };
                let mut i = xs.partition_point(|&v| v <= f) as isize - 1;
                if i < 0 {
                    i = -1;
                }
                let (x0, y0) = knot(i);
                let (x1, y1) = knot(i + 1);
                k + y0 + (y1 - y0) * (f - x0) / (x1 - x0)
            }
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        wrap_unit(self.lift(x))
    }

    pub fn inverse(&self) -> FiberMap {
        match self {
            Self::Identity => Self::Identity,
            Self::Rotation { rho } => Self::Rotation { rho: -rho },
            Self::Mobius { c, turn } => {
                // inverse of e^{iτ}(w + c)/(1 + c̄w) is (e^{−iτ}w − c)/(1 − c̄e^{−iτ}w)
                let cc = Complex64::new(c[0], c[1]);
                let ci = -cc * Complex64::from_polar(1.0, *turn);
                Self::Mobius { c: [ci.re, ci.im], turn: -turn }
            }
            Self::Tabulated { x, y } => {
                // the inverse lift sends y_i − ⌊y_i⌋ to x_i − ⌊y_i⌋
                let mut pts: Vec<(f64, f64)> = x
                    .iter()
                    .zip(y)
                    .map(|(a, b)| {
                        let k = b.floor();
                        (b - k, a - k)
                    })
                    .collect();
                pts.sort_by(|p, q| p.0.total_cmp(&q.0));
                Self::Tabulated { x: pts.iter().map(|p| p.0).collect(), y: pts.iter().map(|p| p.1).collect() }
            }
        }
    }

    /// Derivative of the map (one-sided from the right for tabulated maps).
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Self::Identity | Self::Rotation { .. } => 1.0,
            Self::Mobius { c, .. } => {
                let w = Complex64::from_polar(1.0, TAU * x);
                let c = Complex64::new(c[0], c[1]);
                (1.0 - c.norm_sqr()) / (1.0 + c.conj() * w).norm_sqr()
            }
            Self::Tabulated { .. } => {
                let h = 1e-9;
                (self.lift(x + h) - self.lift(x)) / h
            }
        }
    }

    /// Checks monotonicity and degree one of the lift on a uniform grid.
    pub fn check_bijection(&self, grid: usize) -> Result<()> {
        self.validate()?;
        let vals: Vec<f64> = (0..=grid).map(|i| self.lift(i as f64 / grid as f64)).collect();
        let monotone = vals.windows(2).all(|w| w[1] > w[0]);
        let degree = ((vals[grid] - vals[0]) - 1.0).abs() < 1e-9;
        if monotone && degree {
            Ok(())
        } else {
            Err(Error::invalid("fiber map is not a degree-one circle homeomorphism"))
        }
    }
}

/// Suspension of a representation of the octagon group into circle homeomorphisms.
#[derive(Clone, Debug)]
pub struct SuspensionFoliation {
    pub base: QuotientSurface,
    /// One map per generator.
    pub holonomy: Vec<FiberMap>,
    inverses: Vec<FiberMap>,
}

impl SuspensionFoliation {
    pub fn new(holonomy: Vec<FiberMap>) -> Result<Self> {
        let base = QuotientSurface::octagon();
        if holonomy.len() != base.domain.generator_count() {
            return Err(Error::invalid(format!("{} fiber maps given for {} generators", holonomy.len(), base.domain.generator_count())));
        }
        for h in &holonomy {
            h.check_bijection(1024)?;
        }
        let inverses = holonomy.iter().map(FiberMap::inverse).collect();
        let s = Self { base, holonomy, inverses };
        let defect = s.relation_defect(512)?;
        if !(defect <= RELATION_TOLERANCE) {
            return Err(Error::invalid(format!("fiber maps violate the surface relation (defect {defect:.3e})")));
        }
        Ok(s)
    }

    pub fn trivial() -> Self {
        Self::new(vec![FiberMap::Identity; 4]).expect("identity holonomy is a representation")
    }

    /// Rotation holonomy; any rotation vector satisfies the relation.
    pub fn rotations(rho: [f64; 4]) -> Result<Self> {
        Self::new(rho.iter().map(|&rho| FiberMap::Rotation { rho }).collect())
    }

    /// Rotation numbers `√2 − 1, (√5 − 1)/2, √3 − 1, π − 3`.
    pub fn irrational_rotations() -> Self {
        Self::rotations([2f64.sqrt() - 1.0, 0.5 * (5f64.sqrt() - 1.0), 3f64.sqrt() - 1.0, PI - 3.0])
            .expect("rotations are a representation")
    }

    /// The boundary action of the octagon group itself: strongly contracting north-south maps.
    pub fn boundary_action() -> Self {
        let dom = FuchsianDomain::octagon();
        let maps =
            (0..dom.generator_count()).map(|k| FiberMap::from_disc(&dom.letter_map(Letter::gen(k)).expect("generator exists"))).collect();
        Self::new(maps).expect("the boundary action is a representation")
    }

    pub fn letter_map(&self, l: Letter) -> Result<&FiberMap> {
        let maps = if l.inverse { &self.inverses } else { &self.holonomy };
        maps.get(l.generator).ok_or(Error::UnknownGenerator(l.generator))
    }

    /// Applies the fiber maps of `word`, first letter first.
    pub fn holonomy_apply(&self, word: &Word, x: f64) -> Result<f64> {
        word.0.iter().try_fold(wrap_unit(x), |x, &l| Ok(self.letter_map(l)?.apply(x)))
    }

    /// Largest circular displacement of the relator's fiber action on a grid.
    pub fn relation_defect(&self, grid: usize) -> Result<f64> {
        let w = Word(self.base.domain.relator.clone());
        (0..grid).try_fold(0.0f64, |m, i| {
            let x = i as f64 / grid as f64;
            Ok(m.max(circle_diff(self.holonomy_apply(&w, x)?, x).abs()))
        })
    }

    /// Flows the base on the surface and carries the fiber along the fold word.
    pub fn flow(&self, s: &FoliatedState, t: f64, params: &FlowParams) -> Result<FoliatedState> {
        let mut x = wrap_unit(s.fiber);
        let mut err = None;
        let v = self.base.advance_with(&s.v, t, params, |_, _, l| match self.letter_map(l) {
            Ok(m) => x = m.apply(x),
            Err(e) => err = Some(e),
        })?;
        if let Some(e) = err {
            return Err(e);
        }
        Ok(FoliatedState { v, fiber: x })
    }

    /// Largest L¹ distance between `nu` and its pushforward by a generator's fiber map.
    pub fn invariance_defect(&self, nu: &TransverseMeasure) -> f64 {
        self.holonomy.iter().map(|g| nu.l1_distance(&nu.pushforward(g))).fold(0.0, f64::max)
    }

    /// Binwise `d(g_*ν)/dν`.
    pub fn radon_nikodym_estimate(&self, nu: &TransverseMeasure, g: Letter) -> Result<RadonNikodym> {
        let push = nu.pushforward(self.letter_map(g)?);
        let mut ratio = Vec::with_capacity(nu.masses.len());
        let mut flagged = Vec::new();
        for (i, (p, m)) in push.masses.iter().zip(&nu.masses).enumerate() {
            if *m > 0.0 {
                ratio.push(Some(p / m));
            } else {
                ratio.push(None);
                flagged.push(i);
            }
        }
        Ok(RadonNikodym { edges: nu.edges.clone(), ratio, flagged })
    }
}

/// `foliated_flow` as a free function.
pub fn foliated_flow(susp: &SuspensionFoliation, s: &FoliatedState, t: f64, params: &FlowParams) -> Result<FoliatedState> {
    susp.flow(s, t, params)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoliatedState {
    pub v: UnitTangentVector,
    pub fiber: f64,
}

/// A histogram on the fiber circle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransverseMeasure {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
}

impl TransverseMeasure {
    fn edges(bins: usize) -> Vec<f64> {
        (0..=bins).map(|k| k as f64 / bins as f64).collect()
    }

    pub fn zeros(bins: usize) -> Self {
        Self { edges: Self::edges(bins), masses: vec![0.0; bins] }
    }

    pub fn uniform(bins: usize) -> Self {
        Self { edges: Self::edges(bins), masses: vec![1.0 / bins as f64; bins] }
    }

    pub fn from_samples(samples: impl IntoIterator<Item = (f64, f64)>, bins: usize) -> Self {
        let mut m = Self::zeros(bins);
        for (x, w) in samples {
            m.add(x, w);
        }
        m
    }

    pub fn bins(&self) -> usize {
        self.masses.len()
    }

    pub fn bin_of(&self, x: f64) -> usize {
        ((wrap_unit(x) * self.bins() as f64) as usize).min(self.bins() - 1)
    }

    pub fn add(&mut self, x: f64, w: f64) {
        let k = self.bin_of(x);
        self.masses[k] += w;
    }

    /// Adds another histogram on the same bins.
    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.masses.iter_mut().zip(&other.masses) {
            *a += b;
        }
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn normalized(&self) -> Self {
        let t = self.total();
        Self { edges: self.edges.clone(), masses: self.masses.iter().map(|m| m / t).collect() }
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.masses.iter().zip(&other.masses).map(|(a, b)| (a - b).abs()).sum()
    }

    /// Total variation distance of the normalized histograms.
    pub fn tv_distance(&self, other: &Self) -> f64 {
        0.5 * self.normalized().l1_distance(&other.normalized())
    }

    /// Pushforward by `g`, spreading each bin's mass uniformly over its image interval.
    pub fn pushforward(&self, g: &FiberMap) -> Self {
        let n = self.bins();
        let mut out = Self::zeros(n);
        for (i, &m) in self.masses.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let a = g.lift(self.edges[i]);
            let b = g.lift(self.edges[i + 1]);
            let len = b - a;
            // walk the target bins covered by [a, b] on the real line
            let mut lo = a;
            while lo < b {
                let cell = (lo * n as f64).floor();
                let hi = ((cell + 1.0) / n as f64).min(b);
                let k = (cell as i64).rem_euclid(n as i64) as usize;
                out.masses[k] += m * (hi - lo) / len;
                if hi <= lo {
                    break;
                }
                lo = hi;
            }
        }
        out
    }

    /// `bin_left,mass` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,mass\n");
        for (e, m) in self.edges.iter().zip(&self.masses) {
            let _ = writeln!(out, "{e},{m}");
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadonNikodym {
    pub edges: Vec<f64>,
    /// `None` where the reference measure has an empty bin.
    pub ratio: Vec<Option<f64>>,
    pub flagged: Vec<usize>,
}

/// `h₀(x)`: mean of the angle function `θ` over `n` equally spaced directions at `x`.
pub fn h0(model: &MetricModel, x: ChartPoint, n: usize, params: &LinearizationParams) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("h0 needs at least one direction"));
    }
    model.check(x)?;
    let thetas: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|k| {
            let v = UnitTangentVector { base: x, theta: TAU * k as f64 / n as f64 };
            Ok(angle_theta(&splitting(model, &v, params)?))
        })
        .collect::<Result<_>>()?;
    Ok(thetas.iter().sum::<f64>() / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_composition() {
        let s = SuspensionFoliation::rotations([0.3, 0.0, 0.0, 0.0]).unwrap();
        let w = Word(vec![Letter::gen(0), Letter::gen(0)]);
        assert!((s.holonomy_apply(&w, 0.5).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(s.holonomy_apply(&Word::new(), 0.25).unwrap(), 0.25);
    }

    #[test]
    fn mobius_inverse_round_trip() {
        let g = FiberMap::Mobius { c: [0.5, -0.3], turn: 0.7 };
        let gi = g.inverse();
        for i in 0..20 {
            let x = i as f64 / 20.0;
            assert!(circle_diff(gi.apply(g.apply(x)), x).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_action_is_a_representation() {
        let s = SuspensionFoliation::boundary_action();
        assert!(s.relation_defect(1000).unwrap() < 1e-9);
        let dom = FuchsianDomain::octagon();
        let g = dom.letter_map(Letter::gen(2)).unwrap();
        for i in 0..16 {
            let x = i as f64 / 16.0;
            let w = g.apply(Complex64::from_polar(1.0, TAU * x));
            assert!(circle_diff(s.holonomy[2].apply(x), w.arg() / TAU).abs() < 1e-12);
        }
    }

    #[test]
    fn tabulated_inverse_round_trip() {
        let g = FiberMap::Tabulated { x: vec![0.0, 0.3, 0.6], y: vec![0.2, 0.3, 0.9] };
        g.check_bijection(256).unwrap();
        let gi = g.inverse();
        gi.check_bijection(256).unwrap();
        for i in 0..50 {
            let x = i as f64 / 50.0;
            assert!(circle_diff(gi.apply(g.apply(x)), x).abs() < 1e-12, "{x}");
        }
    }
}
