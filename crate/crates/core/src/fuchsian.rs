//! The genus-2 octagon group acting on the disc, side-pairing folds and the
//! quotient-surface geodesic flow.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{wrap_angle, FlowParams, GeodesicStepper, Phase, UnitTangentVector};
use crate::geometry::{ChartPoint, MetricModel, Variant};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// A Möbius map `z ↦ (az + b)/(cz + d)` with `ad − bc = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mobius {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl Mobius {
    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Self { a, b, c, d }
    }

    pub fn real(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self::new(a.into(), b.into(), c.into(), d.into())
    }

    pub fn identity() -> Self {
        Self::real(1.0, 0.0, 0.0, 1.0)
    }

    pub fn det(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    pub fn apply(&self, z: Complex64) -> Complex64 {
        (self.a * z + self.b) / (self.c * z + self.d)
    }

    pub fn derivative(&self, z: Complex64) -> Complex64 {
        let w = self.c * z + self.d;
        self.det() / (w * w)
    }

    pub fn inverse(&self) -> Self {
        Self::new(self.d, -self.b, -self.c, self.a)
    }

    /// `self ∘ other`.
    pub fn compose(&self, o: &Mobius) -> Self {
        Self::new(self.a * o.a + self.b * o.c, self.a * o.b + self.b * o.d, self.c * o.a + self.d * o.c, self.c * o.b + self.d * o.d)
    }

    /// Conjugates a half-plane map to the disc through `w = (z − i)/(z + i)`.
    pub fn half_plane_to_disc(&self) -> Self {
        // C = [[1, -i], [1, i]], C⁻¹ = [[i, i], [-1, 1]] / (2i)
        let c = Mobius::new(1.0.into(), -I, 1.0.into(), I);
        let ci = Mobius::new(I / (2.0 * I), I / (2.0 * I), -1.0 / (2.0 * I), 1.0 / (2.0 * I));
        c.compose(self).compose(&ci)
    }

    /// Pushes a unit tangent vector of a conformal-type model forward.
    /// Only meaningful when the map is an isometry of `model`.
    pub fn push(&self, model: &MetricModel, v: &UnitTangentVector) -> Result<UnitTangentVector> {
        let z = Complex64::new(v.base.x, v.base.y);
        let w = self.apply(z);
        let base = ChartPoint::new(w.re, w.im);
        model.check(base)?;
        Ok(UnitTangentVector { base, theta: wrap_angle(v.theta + self.derivative(z).arg()) })
    }

    fn push_phase(&self, s: &Phase) -> Phase {
        let z = Complex64::new(s.p.x, s.p.y);
        let w = self.apply(z);
        let dv = self.derivative(z) * Complex64::new(s.v[0], s.v[1]);
        Phase::chart(ChartPoint::new(w.re, w.im), [dv.re, dv.im])
    }
}

/// A generator or its inverse. Displayed as a signed 1-based index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Letter {
    pub generator: usize,
    pub inverse: bool,
}

impl Letter {
    pub const fn gen(generator: usize) -> Self {
        Self { generator, inverse: false }
    }

    pub const fn inv(generator: usize) -> Self {
        Self { generator, inverse: true }
    }

    pub fn inverted(self) -> Self {
        Self { generator: self.generator, inverse: !self.inverse }
    }

    pub fn signed(self) -> i64 {
        let k = self.generator as i64 + 1;
        if self.inverse {
            -k
        } else {
            k
        }
    }

    pub fn from_signed(k: i64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("letter index 0 is not a generator"));
        }
        Ok(Self { generator: (k.unsigned_abs() - 1) as usize, inverse: k < 0 })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Word(pub Vec<Letter>);

impl Word {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn push(&mut self, l: Letter) {
        self.0.push(l);
    }

    pub fn extend(&mut self, other: &Word) {
        self.0.extend_from_slice(&other.0);
    }

    /// The word undoing this one, letters applied in reverse.
    pub fn inverse(&self) -> Word {
        Word(self.0.iter().rev().map(|l| l.inverted()).collect())
    }

    /// Free reduction: cancels adjacent `g g⁻¹` pairs.
    pub fn reduced(&self) -> Word {
        let mut out: Vec<Letter> = Vec::with_capacity(self.0.len());
        for &l in &self.0 {
            if out.last().is_some_and(|&p| p == l.inverted()) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word(out)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|l| l.signed().to_string()).collect();
        f.write_str(&parts.join(" "))
    }
}

/// Half-plane matrices of the regular octagon side pairings, 15 significant digits.
/// Generator `j` translates the disc toward angle `jπ/4`, carrying side `j + 4` onto side `j`.
const OCTAGON_GENERATORS: [[f64; 4]; 4] = [
    [4.61158178930872, 0.0, 0.0, 0.216845335437475],
    [3.96798753640313, -1.55377397403004, -1.55377397403004, 0.860439588343058],
    [2.41421356237310, -2.19736822693562, -2.19736822693562, 2.41421356237310],
    [0.860439588343058, -1.55377397403004, -1.55377397403004, 3.96798753640313],
];

/// Defining relation, in application order (first letter applied first).
pub const OCTAGON_RELATOR: [Letter; 8] =
    [Letter::gen(0), Letter::inv(1), Letter::gen(2), Letter::inv(3), Letter::inv(0), Letter::gen(1), Letter::inv(2), Letter::gen(3)];

/// A side of the polygon: the geodesic arc carried by a circle orthogonal to the unit circle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Side {
    pub center: Complex64,
    pub radius: f64,
    /// Generator letter applied when a point crosses this side outward.
    pub fold: Letter,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FuchsianDomain {
    /// Half-plane matrices, determinant 1.
    pub generators: Vec<[f64; 4]>,
    disc: Vec<Mobius>,
    pub sides: Vec<Side>,
    pub relator: Vec<Letter>,
    pub max_folds: usize,
}

impl FuchsianDomain {
    /// Regular octagon with interior angles π/4 and the standard genus-2 pairings.
    pub fn octagon() -> Self {
        let dm = (1.0 + 2f64.sqrt()).acosh();
        let m = (0.5 * dm).tanh();
        let sides = (0..8)
            .map(|k| {
                let phi = k as f64 * PI / 4.0;
                let fold = if k < 4 { Letter::inv(k) } else { Letter::gen(k - 4) };
                Side { center: Complex64::from_polar((1.0 + m * m) / (2.0 * m), phi), radius: (1.0 - m * m) / (2.0 * m), fold }
            })
            .collect();
        let generators: Vec<[f64; 4]> = OCTAGON_GENERATORS.to_vec();
        let disc = generators.iter().map(|g| Mobius::real(g[0], g[1], g[2], g[3]).half_plane_to_disc()).collect();
        Self { generators, disc, sides, relator: OCTAGON_RELATOR.to_vec(), max_folds: 64 }
    }

    pub fn generator_count(&self) -> usize {
        self.generators.len()
    }

    /// Disc action of a letter.
    pub fn letter_map(&self, l: Letter) -> Result<Mobius> {
        let g = self.disc.get(l.generator).ok_or(Error::UnknownGenerator(l.generator))?;
        Ok(if l.inverse { g.inverse() } else { *g })
    }

    /// Disc action of a word (first letter applied first).
    pub fn word_map(&self, w: &Word) -> Result<Mobius> {
        w.0.iter().try_fold(Mobius::identity(), |acc, &l| Ok(self.letter_map(l)?.compose(&acc)))
    }

    pub fn half_plane_map(&self, l: Letter) -> Result<Mobius> {
        let g = self.generators.get(l.generator).ok_or(Error::UnknownGenerator(l.generator))?;
        let m = Mobius::real(g[0], g[1], g[2], g[3]);
        Ok(if l.inverse { m.inverse() } else { m })
    }

    fn crossed_side(&self, p: ChartPoint) -> Option<&Side> {
        let z = Complex64::new(p.x, p.y);
        self.sides.iter().find(|s| (z - s.center).norm() < s.radius)
    }

    pub fn contains(&self, p: ChartPoint) -> bool {
        p.norm() < 1.0 && self.crossed_side(p).is_none()
    }

    /// Applies side pairings until the base lies in the polygon.
    pub fn fold(&self, v: &UnitTangentVector) -> Result<(UnitTangentVector, Word)> {
        let model = MetricModel::poincare_disc();
        let mut cur = *v;
        let mut word = Word::new();
        while let Some(side) = self.crossed_side(cur.base) {
            if word.len() >= self.max_folds {
                return Err(Error::Folding(self.max_folds));
            }
            cur = self.letter_map(side.fold)?.push(&model, &cur)?;
            word.push(side.fold);
        }
        Ok((cur, word))
    }

    pub(crate) fn fold_phase(&self, s: &mut Phase, word: &mut Word) -> Result<()> {
        let mut count = 0;
        while let Some(side) = self.crossed_side(s.p) {
            if count >= self.max_folds {
                return Err(Error::Folding(self.max_folds));
            }
            *s = self.letter_map(side.fold)?.push_phase(s);
            word.push(side.fold);
            count += 1;
        }
        Ok(())
    }

    /// Largest deviation of the relator's disc action from the identity on a few test points.
    pub fn relator_defect(&self) -> Result<f64> {
        let m = self.word_map(&Word(self.relator.clone()))?;
        let mut worst: f64 = 0.0;
        for z in [Complex64::new(0.0, 0.0), Complex64::new(0.3, -0.2), Complex64::new(-0.5, 0.4)] {
            worst = worst.max((m.apply(z) - z).norm());
        }
        Ok(worst)
    }

    /// Largest distance between a side's endpoints mapped by its pairing and the partner side's endpoints.
    pub fn pairing_defect(&self) -> Result<f64> {
        let vertex = |k: usize, s: f64| {
            // vertices sit at angle (k ± 1/2)π/4 on the circle of side k
            let side = &self.sides[k];
            let phi = (k as f64 + 0.5 * s) * PI / 4.0;
            let dir = Complex64::from_polar(1.0, phi);
            // intersection of the ray at angle phi with the side circle, nearer root
            let b = (dir.conj() * side.center).re;
            let c = side.center.norm_sqr() - side.radius * side.radius;
            dir * (b - (b * b - c).sqrt())
        };
        let mut worst: f64 = 0.0;
        for k in 0..4 {
            let g = self.letter_map(Letter::gen(k))?;
            let src = [vertex(k + 4, -1.0), vertex(k + 4, 1.0)];
            let dst = [vertex(k, 1.0), vertex(k, -1.0)];
            for (s, d) in src.iter().zip(dst.iter()) {
                worst = worst.max((g.apply(*s) - d).norm());
            }
        }
        Ok(worst)
    }
}

/// Geodesic flow on the compact quotient of the disc by a Fuchsian group.
#[derive(Clone, Debug)]
pub struct QuotientSurface {
    pub model: MetricModel,
    pub domain: FuchsianDomain,
}

impl Default for QuotientSurface {
    fn default() -> Self {
        Self::octagon()
    }
}

impl QuotientSurface {
    pub fn octagon() -> Self {
        Self { model: MetricModel::poincare_disc(), domain: FuchsianDomain::octagon() }
    }

    pub fn new(model: MetricModel, domain: FuchsianDomain) -> Result<Self> {
        if !matches!(model.variant(), Variant::PoincareDisc) {
            return Err(Error::Unsupported("quotient surfaces live on the disc model".into()));
        }
        Ok(Self { model, domain })
    }

    /// Flows for time `t`, folding after every step; returns the folded state and the word applied.
    pub fn advance(&self, v: &UnitTangentVector, t: f64, params: &FlowParams) -> Result<(UnitTangentVector, Word)> {
        let mut word = Word::new();
        let out = self.advance_with(v, t, params, |_, _, l| word.push(l))?;
        Ok((out, word))
    }

    /// As `advance`, calling `on_fold(step, time, letter)` for every applied letter.
    pub fn advance_with(
        &self,
        v: &UnitTangentVector,
        t: f64,
        params: &FlowParams,
        mut on_fold: impl FnMut(usize, f64, Letter),
    ) -> Result<UnitTangentVector> {
        let (start, pre) = self.domain.fold(v)?;
        for &l in &pre.0 {
            on_fold(0, 0.0, l);
        }
        let mut s = GeodesicStepper::new(&self.model, &start, params)?;
        let n = params.steps_for(t);
        let mut scratch = Word::new();
        for k in 1..=n {
            s.step(t / n as f64)?;
            let mut ph = s.phase();
            scratch.0.clear();
            self.domain.fold_phase(&mut ph, &mut scratch)?;
            if !scratch.is_empty() {
                s.set_phase(ph);
                for &l in &scratch.0 {
                    on_fold(k, s.time(), l);
                }
            }
        }
        s.renormalize()?;
        s.state()
    }
}
