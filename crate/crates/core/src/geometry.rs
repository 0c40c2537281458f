//! Surface models: metric tensor, connection, curvature and distance.
//!
//! Every model is a single global chart. Conformal-type models (half-plane,
//! disc, gridded factor) carry `g = e^{2λ}(dx² + dy²)`; rotational models use
//! Cartesian coordinates of the exponential chart at the pole, so that
//! `g = dr² + f(r)² dφ²`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{shoot, ShootParams};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub x: f64,
    pub y: f64,
}

impl ChartPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: ChartPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl fmt::Display for ChartPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Symmetric 2x2 metric tensor in chart coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricTensor {
    pub g11: f64,
    pub g12: f64,
    pub g22: f64,
}

impl MetricTensor {
    pub fn det(&self) -> f64 {
        self.g11 * self.g22 - self.g12 * self.g12
    }

    pub fn inner(&self, u: [f64; 2], v: [f64; 2]) -> f64 {
        self.g11 * u[0] * v[0] + self.g12 * (u[0] * v[1] + u[1] * v[0]) + self.g22 * u[1] * v[1]
    }

    pub fn norm(&self, v: [f64; 2]) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let m = 0.5 * (self.g11 + self.g22);
        let d = (0.5 * (self.g11 - self.g22)).hypot(self.g12);
        [m - d, m + d]
    }

    pub fn inverse(&self) -> [[f64; 2]; 2] {
        let det = self.det();
        [[self.g22 / det, -self.g12 / det], [-self.g12 / det, self.g11 / det]]
    }
}

/// Levi-Civita connection coefficients, indexed `[k][i][j]` for `Γ^k_{ij}`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Christoffel(pub [[[f64; 2]; 2]; 2]);

impl Christoffel {
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.0[k][i][j]
    }

    /// `Γ^k_{ij} u^i w^j` for both k.
    pub fn contract(&self, u: [f64; 2], w: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (k, slot) in out.iter_mut().enumerate() {
            for (row, ui) in self.0[k].iter().zip(u) {
                for (g, wj) in row.iter().zip(w) {
                    *slot += g * ui * wj;
                }
            }
        }
        out
    }

    fn conformal(lx: f64, ly: f64) -> Self {
        Christoffel([[[lx, ly], [ly, -lx]], [[-ly, lx], [lx, ly]]])
    }

    /// Γ from the metric and its first derivatives `dg[k] = ∂_k g`.
    fn from_jet(g: &MetricTensor, dg: &[[[f64; 2]; 2]; 2]) -> Self {
        let inv = g.inverse();
        let mut out = [[[0.0; 2]; 2]; 2];
        for (k, row) in out.iter_mut().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    let mut s = 0.0;
                    for l in 0..2 {
                        s += inv[k][l] * (dg[i][l][j] + dg[j][l][i] - dg[l][i][j]);
                    }
                    row[i][j] = 0.5 * s;
                }
            }
        }
        Christoffel(out)
    }
}

/// Closed-form warping functions for rotational models, `g = dr² + f(r)² dφ²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// `f = sinh(c r)/c`, constant curvature `−c²`.
    Sinh { scale: f64 },
    /// `f = (sinh(a r)/a + sinh(b r)/b)/2`; curvature is a weighted mean of `−a²` and `−b²`.
    SinhBlend { slow: f64, fast: f64 },
}

const SERIES_TERMS: usize = 12;

impl Profile {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Profile::Sinh { scale } => scale.is_finite() && scale > 0.0,
            Profile::SinhBlend { slow, fast } => slow.is_finite() && fast.is_finite() && slow > 0.0 && fast >= slow,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("bad rotational profile {self:?}")))
        }
    }

    /// `(f, f', f'')` at radius r.
    pub fn eval(&self, r: f64) -> [f64; 3] {
        match *self {
            Profile::Sinh { scale: c } => {
                let (s, ch) = ((c * r).sinh(), (c * r).cosh());
                [s / c, ch, c * s]
            }
            Profile::SinhBlend { slow: a, fast: b } => {
                let (sa, ca) = ((a * r).sinh(), (a * r).cosh());
                let (sb, cb) = ((b * r).sinh(), (b * r).cosh());
                [0.5 * (sa / a + sb / b), 0.5 * (ca + cb), 0.5 * (a * sa + b * sb)]
            }
        }
    }

    /// Taylor coefficient of `r^{2k}` in `f(r)/r`.
    fn odd_coeff(&self, k: usize) -> f64 {
        let fact: f64 = (1..=(2 * k + 1)).map(|m| m as f64).product();
        let deriv = match *self {
            Profile::Sinh { scale } => scale.powi(2 * k as i32),
            Profile::SinhBlend { slow, fast } => 0.5 * (slow.powi(2 * k as i32) + fast.powi(2 * k as i32)),
        };
        deriv / fact
    }

    pub fn curvature(&self, r: f64) -> f64 {
        if r < 1e-8 {
            return -6.0 * self.odd_coeff(1);
        }
        let [f, _, f2] = self.eval(r);
        -f2 / f
    }

    /// Largest radius at which `f²` stays comfortably finite.
    pub fn max_radius(&self) -> f64 {
        let rate = match *self {
            Profile::Sinh { scale } => scale,
            Profile::SinhBlend { fast, .. } => fast,
        };
        300.0 / rate
    }

    /// `(h, dh/du, q, dq/du)` with `u = r²`, `h = (f/r)²`, `q = (1 − h)/u`.
    fn radial_terms(&self, u: f64) -> [f64; 4] {
        if u < 1e-2 {
            let c: [f64; SERIES_TERMS] = std::array::from_fn(|k| self.odd_coeff(k));
            let mut p = [0.0; SERIES_TERMS];
            for (i, ci) in c.iter().enumerate() {
                for (j, cj) in c.iter().enumerate().take(SERIES_TERMS - i) {
                    p[i + j] += ci * cj;
                }
            }
            let (mut h, mut h_u, mut q, mut q_u) = (0.0, 0.0, 0.0, 0.0);
            for m in (0..SERIES_TERMS).rev() {
                h = h * u + p[m];
                if m >= 1 {
                    h_u = h_u * u + m as f64 * p[m];
                    q = q * u - p[m];
                }
                if m >= 2 {
                    q_u = q_u * u - (m - 1) as f64 * p[m];
                }
            }
            return [h, h_u, q, q_u];
        }
        let r = u.sqrt();
        let [f, fp, _] = self.eval(r);
        let s = f / r;
        let s_r = (fp * r - f) / u;
        let h = s * s;
        let h_u = s * s_r / r;
        let q = (1.0 - h) / u;
        let q_u = -h_u / u - (1.0 - h) / (u * u);
        [h, h_u, q, q_u]
    }
}

/// Conformal factor λ sampled on a rectangular grid, interpolated by
/// Catmull-Rom bicubics. Row `j` holds `y = y0 + j·dy`, column `i` holds `x = x0 + i·dx`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConformalGrid {
    pub rows: usize,
    pub cols: usize,
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    values: Vec<f64>,
}

const SHIPPED_GRID: &str = include_str!("../data/perturbed_hyperbolic.grid");

fn catmull_rom(t: f64) -> ([f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        [0.5 * (-t3 + 2.0 * t2 - t), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0), 0.5 * (-3.0 * t3 + 4.0 * t2 + t), 0.5 * (t3 - t2)],
        [0.5 * (-3.0 * t2 + 4.0 * t - 1.0), 0.5 * (9.0 * t2 - 10.0 * t), 0.5 * (-9.0 * t2 + 8.0 * t + 1.0), 0.5 * (3.0 * t2 - 2.0 * t)],
    )
}

impl ConformalGrid {
    pub fn new(rows: usize, cols: usize, origin: ChartPoint, dx: f64, dy: f64, values: Vec<f64>) -> Result<Self> {
        if rows < 6 || cols < 6 {
            return Err(Error::invalid("conformal grid needs at least 6x6 nodes"));
        }
        if values.len() != rows * cols {
            return Err(Error::invalid(format!("grid payload has {} values, header says {rows}x{cols}", values.len())));
        }
        if !(dx > 0.0 && dy > 0.0) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid spacing must be positive and values finite"));
        }
        Ok(Self { rows, cols, x0: origin.x, y0: origin.y, dx, dy, values })
    }

    /// Samples `lambda` on a grid covering `[x_min, x_max] × [y_min, y_max]`.
    pub fn from_fn(region: &Region, dx: f64, dy: f64, lambda: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let cols = ((region.x_max - region.x_min) / dx).round() as usize + 1;
        let rows = ((region.y_max - region.y_min) / dy).round() as usize + 1;
        let mut values = Vec::with_capacity(rows * cols);
        for j in 0..rows {
            for i in 0..cols {
                values.push(lambda(region.x_min + i as f64 * dx, region.y_min + j as f64 * dy));
            }
        }
        Self::new(rows, cols, ChartPoint::new(region.x_min, region.y_min), dx, dy, values)
    }

    /// Header line `rows cols x0 y0 dx dy`, then one whitespace-separated row per line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::invalid("empty grid file"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 6 {
            return Err(Error::invalid("grid header must be: rows cols x0 y0 dx dy"));
        }
        let bad = |_| Error::invalid("unparsable grid header");
        let rows: usize = h[0].parse().map_err(|_| Error::invalid("bad rows"))?;
        let cols: usize = h[1].parse().map_err(|_| Error::invalid("bad cols"))?;
        let nums: Vec<f64> = h[2..].iter().map(|s| s.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(bad)?;
        let mut values = Vec::with_capacity(rows * cols);
        for line in lines {
            for tok in line.split_whitespace() {
                values.push(tok.parse::<f64>().map_err(|_| Error::invalid(format!("bad grid value {tok:?}")))?);
            }
        }
        Self::new(rows, cols, ChartPoint::new(nums[0], nums[1]), nums[2], nums[3], values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {:e} {:e} {:e} {:e}\n", self.rows, self.cols, self.x0, self.y0, self.dx, self.dy);
        for j in 0..self.rows {
            let row: Vec<String> = self.values[j * self.cols..(j + 1) * self.cols].iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// The shipped perturbed-hyperbolic example: `λ = −ln y + 0.01·exp(−(x² + (y−1)²)/0.18)`.
    pub fn shipped() -> Self {
        Self::parse(SHIPPED_GRID).expect("shipped grid is well formed")
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.cols + i]
    }

    /// Interior region where the interpolant and its curvature stencil are defined.
    pub fn interior(&self) -> Region {
        Region {
            x_min: self.x0 + 2.0 * self.dx,
            x_max: self.x0 + (self.cols - 3) as f64 * self.dx,
            y_min: self.y0 + 2.0 * self.dy,
            y_max: self.y0 + (self.rows - 3) as f64 * self.dy,
        }
    }

    fn cell(coord: f64, n: usize) -> (usize, f64) {
        let i = coord.floor().clamp(1.0, (n - 3) as f64);
        (i as usize, coord - i)
    }

    /// `(λ, ∂xλ, ∂yλ)`; caller guarantees the point lies inside `interior()` or one cell beyond.
    pub fn eval(&self, x: f64, y: f64) -> [f64; 3] {
        let (i, tx) = Self::cell((x - self.x0) / self.dx, self.cols);
        let (j, ty) = Self::cell((y - self.y0) / self.dy, self.rows);
        let (wx, dwx) = catmull_rom(tx);
        let (wy, dwy) = catmull_rom(ty);
        let (mut l, mut lx, mut ly) = (0.0, 0.0, 0.0);
        for (b, (wyb, dwyb)) in wy.iter().zip(dwy.iter()).enumerate() {
            let row = (j + b - 1) * self.cols + i - 1;
            let (mut s, mut sd) = (0.0, 0.0);
            for a in 0..4 {
                let v = self.values[row + a];
                s += wx[a] * v;
                sd += dwx[a] * v;
            }
            l += wyb * s;
            lx += wyb * sd;
            ly += dwyb * s;
        }
        [l, lx / self.dx, ly / self.dy]
    }

    fn curvature(&self, x: f64, y: f64) -> f64 {
        let l = self.eval(x, y)[0];
        let lap = (self.eval(x + self.dx, y)[0] + self.eval(x - self.dx, y)[0] - 2.0 * l) / (self.dx * self.dx)
            + (self.eval(x, y + self.dy)[0] + self.eval(x, y - self.dy)[0] - 2.0 * l) / (self.dy * self.dy);
        -lap * (-2.0 * l).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn contains(&self, p: ChartPoint) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn grid(&self, nx: usize, ny: usize) -> Vec<ChartPoint> {
        let step = |lo: f64, hi: f64, n: usize, k: usize| {
            if n <= 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            }
        };
        (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .map(|(i, j)| ChartPoint::new(step(self.x_min, self.x_max, nx, i), step(self.y_min, self.y_max, ny, j)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Variant {
    UpperHalfPlane,
    PoincareDisc,
    Rotational(Profile),
    Conformal(Arc<ConformalGrid>),
}

/// A pinched negatively curved surface, `−b² ≤ K ≤ −a²`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricModel {
    variant: Variant,
    a: f64,
    b: f64,
}

const DISC_MARGIN: f64 = 1e-14;

impl MetricModel {
    pub fn upper_half_plane() -> Self {
        Self { variant: Variant::UpperHalfPlane, a: 1.0, b: 1.0 }
    }

    pub fn poincare_disc() -> Self {
        Self { variant: Variant::PoincareDisc, a: 1.0, b: 1.0 }
    }

    pub fn rotational(profile: Profile, a: f64, b: f64) -> Result<Self> {
        profile.validate()?;
        Self::with_bounds(Variant::Rotational(profile), a, b)
    }

    pub fn conformal(grid: ConformalGrid, a: f64, b: f64) -> Result<Self> {
        Self::with_bounds(Variant::Conformal(Arc::new(grid)), a, b)
    }

    /// The pinched rotational model used throughout the experiments (a = 0.8, b = 1.25).
    pub fn pinched_blend() -> Self {
        Self::rotational(Profile::SinhBlend { slow: 0.8, fast: 1.25 }, 0.8, 1.25).expect("valid")
    }

    fn with_bounds(variant: Variant, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a <= b && b.is_finite()) {
            return Err(Error::invalid(format!("curvature bounds need 0 < a <= b, got a={a}, b={b}")));
        }
        Ok(Self { variant, a, b })
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    pub(crate) fn profile(&self) -> Option<&Profile> {
        match &self.variant {
            Variant::Rotational(f) => Some(f),
            _ => None,
        }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn name(&self) -> &'static str {
        match self.variant {
            Variant::UpperHalfPlane => "upper-half-plane",
            Variant::PoincareDisc => "poincare-disc",
            Variant::Rotational(_) => "rotational",
            Variant::Conformal(_) => "conformal",
        }
    }

    /// Constant curvature value if the model is known to have one.
    pub fn constant_curvature(&self) -> Option<f64> {
        match &self.variant {
            Variant::UpperHalfPlane | Variant::PoincareDisc => Some(-1.0),
            Variant::Rotational(Profile::Sinh { scale }) => Some(-scale * scale),
            _ => None,
        }
    }

    pub fn contains(&self, p: ChartPoint) -> bool {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return false;
        }
        match &self.variant {
            Variant::UpperHalfPlane => p.y > 0.0,
            Variant::PoincareDisc => 1.0 - (p.x * p.x + p.y * p.y) > DISC_MARGIN,
            Variant::Rotational(f) => p.norm() < f.max_radius(),
            Variant::Conformal(g) => g.interior().contains(p),
        }
    }

    pub fn check(&self, p: ChartPoint) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::Domain { model: self.name(), point: p })
        }
    }

    /// `(λ, ∂xλ, ∂yλ)` for conformal-type models.
    pub(crate) fn log_factor(&self, p: ChartPoint) -> Option<[f64; 3]> {
        match &self.variant {
            Variant::UpperHalfPlane => Some([-p.y.ln(), 0.0, -1.0 / p.y]),
            Variant::PoincareDisc => {
                let w = 1.0 - p.x * p.x - p.y * p.y;
                Some([(2.0 / w).ln(), 2.0 * p.x / w, 2.0 * p.y / w])
            }
            Variant::Conformal(g) => Some(g.eval(p.x, p.y)),
            Variant::Rotational(_) => None,
        }
    }

    /// Unit radial direction (arbitrary at the pole) and the radial terms.
    fn polar(f: &Profile, p: ChartPoint) -> ([f64; 2], [f64; 4]) {
        let r = p.norm();
        let n = if r > 0.0 { [p.x / r, p.y / r] } else { [1.0, 0.0] };
        (n, f.radial_terms(r * r))
    }

    fn rotational_jet(&self, f: &Profile, p: ChartPoint) -> (MetricTensor, [[[f64; 2]; 2]; 2]) {
        let x = [p.x, p.y];
        let [_, h_u, q, q_u] = f.radial_terms(p.x * p.x + p.y * p.y);
        let g = self.metric(p).expect("checked by caller");
        let mut dg = [[[0.0; 2]; 2]; 2];
        for (k, dgk) in dg.iter_mut().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                    dgk[i][j] =
                        2.0 * h_u * x[k] * delta(i, j) + 2.0 * q_u * x[k] * x[i] * x[j] + q * (delta(i, k) * x[j] + delta(j, k) * x[i]);
                }
            }
        }
        (g, dg)
    }

    pub fn metric(&self, p: ChartPoint) -> Result<MetricTensor> {
        self.check(p)?;
        Ok(match &self.variant {
            Variant::Rotational(f) => {
                let (n, [h, ..]) = Self::polar(f, p);
                let c = 1.0 - h;
                MetricTensor { g11: n[0] * n[0] + h * n[1] * n[1], g12: c * n[0] * n[1], g22: n[1] * n[1] + h * n[0] * n[0] }
            }
            _ => {
                let e = (2.0 * self.log_factor(p).expect("conformal")[0]).exp();
                MetricTensor { g11: e, g12: 0.0, g22: e }
            }
        })
    }

    /// Eigenvalues of the metric at p, ascending. Exact for rotational models, where the
    /// Cartesian tensor itself is badly conditioned far from the pole.
    pub fn metric_eigenvalues(&self, p: ChartPoint) -> Result<[f64; 2]> {
        match &self.variant {
            Variant::Rotational(f) => {
                self.check(p)?;
                let h = Self::polar(f, p).1[0];
                Ok([h.min(1.0), h.max(1.0)])
            }
            _ => Ok(self.metric(p)?.eigenvalues()),
        }
    }

    pub fn christoffel(&self, p: ChartPoint) -> Result<Christoffel> {
        self.check(p)?;
        Ok(match &self.variant {
            Variant::Rotational(f) => {
                let (g, dg) = self.rotational_jet(f, p);
                Christoffel::from_jet(&g, &dg)
            }
            _ => {
                let [_, lx, ly] = self.log_factor(p).expect("conformal");
                Christoffel::conformal(lx, ly)
            }
        })
    }

    /// Geodesic acceleration `−Γ(v, v)` at p.
    pub(crate) fn acceleration(&self, p: ChartPoint, v: [f64; 2]) -> Result<[f64; 2]> {
        if !self.contains(p) {
            return Err(Error::Domain { model: self.name(), point: p });
        }
        if let Some([_, lx, ly]) = self.log_factor(p) {
            let (vx, vy) = (v[0], v[1]);
            let ax = -(lx * (vx * vx - vy * vy) + 2.0 * ly * vx * vy);
            let ay = -(ly * (vy * vy - vx * vx) + 2.0 * lx * vx * vy);
            return Ok([ax, ay]);
        }
        let Variant::Rotational(f) = &self.variant else { unreachable!("conformal handled above") };
        // radial/tangential split avoids the cancellation of the Cartesian tensor far from the pole
        let [h, h_u, q, _] = f.radial_terms(p.x * p.x + p.y * p.y);
        let u2 = p.x * p.x + p.y * p.y;
        if u2 == 0.0 {
            return Ok([0.0, 0.0]);
        }
        let vx = v[0] * p.x + v[1] * p.y;
        let cross = p.x * v[1] - p.y * v[0];
        let vt2 = cross * cross / u2;
        let radial = (h_u - q) * vt2;
        let swirl = -2.0 * vx * h_u / h * cross / u2;
        Ok([radial * p.x - swirl * p.y, radial * p.y + swirl * p.x])
    }

    /// Metric inner product of two chart vectors at p.
    pub fn inner(&self, p: ChartPoint, u: [f64; 2], w: [f64; 2]) -> Result<f64> {
        self.check(p)?;
        Ok(match &self.variant {
            Variant::Rotational(f) => {
                let (n, [h, ..]) = Self::polar(f, p);
                let (ur, ut) = (u[0] * n[0] + u[1] * n[1], u[1] * n[0] - u[0] * n[1]);
                let (wr, wt) = (w[0] * n[0] + w[1] * n[1], w[1] * n[0] - w[0] * n[1]);
                ur * wr + h * ut * wt
            }
            _ => {
                let e = (2.0 * self.log_factor(p).expect("conformal")[0]).exp();
                e * (u[0] * w[0] + u[1] * w[1])
            }
        })
    }

    pub fn norm(&self, p: ChartPoint, v: [f64; 2]) -> Result<f64> {
        Ok(self.inner(p, v, v)?.max(0.0).sqrt())
    }

    pub fn curvature(&self, p: ChartPoint) -> Result<f64> {
        self.check(p)?;
        Ok(match &self.variant {
            Variant::UpperHalfPlane | Variant::PoincareDisc => -1.0,
            Variant::Rotational(f) => f.curvature(p.norm()),
            Variant::Conformal(g) => g.curvature(p.x, p.y),
        })
    }

    /// Positively oriented orthonormal frame `[e1, e2]` (chart components), Gram-Schmidt from `∂x`.
    pub fn frame(&self, p: ChartPoint) -> Result<[[f64; 2]; 2]> {
        if let Some([l, _, _]) = self.log_factor(p) {
            self.check(p)?;
            let s = (-l).exp();
            return Ok([[s, 0.0], [0.0, s]]);
        }
        let Variant::Rotational(f) = &self.variant else { unreachable!("conformal handled above") };
        self.check(p)?;
        let (_, [h, ..]) = Self::polar(f, p);
        let g = self.metric(p)?;
        // det g = h exactly
        let n1 = g.g11.sqrt();
        let n2 = (h / g.g11).sqrt();
        Ok([[1.0 / n1, 0.0], [-g.g12 / g.g11 / n2, 1.0 / n2]])
    }

    /// Chart components of the unit vector at angle `theta` in the orthonormal frame.
    pub fn unit_vector(&self, p: ChartPoint, theta: f64) -> Result<[f64; 2]> {
        let [e1, e2] = self.frame(p)?;
        let (s, c) = theta.sin_cos();
        Ok([c * e1[0] + s * e2[0], c * e1[1] + s * e2[1]])
    }

    /// Frame angle of a chart vector (its length is ignored).
    pub fn angle_of(&self, p: ChartPoint, v: [f64; 2]) -> Result<f64> {
        if self.log_factor(p).is_some() {
            self.check(p)?;
            return Ok(v[1].atan2(v[0]));
        }
        let [e1, e2] = self.frame(p)?;
        Ok(self.inner(p, v, e2)?.atan2(self.inner(p, v, e1)?))
    }

    /// Geodesic distance: closed form on the half-plane and disc, shooting otherwise.
    pub fn distance(&self, p: ChartPoint, q: ChartPoint) -> Result<f64> {
        self.distance_with(p, q, &ShootParams::default())
    }

    pub fn distance_with(&self, p: ChartPoint, q: ChartPoint, params: &ShootParams) -> Result<f64> {
        self.check(p)?;
        self.check(q)?;
        match &self.variant {
            Variant::UpperHalfPlane => Ok(2.0 * (p.dist(q) / (2.0 * (p.y * q.y).sqrt())).asinh()),
            Variant::PoincareDisc => {
                let wp = 1.0 - p.x * p.x - p.y * p.y;
                let wq = 1.0 - q.x * q.x - q.y * q.y;
                Ok(2.0 * (p.dist(q) / (wp * wq).sqrt()).asinh())
            }
            _ => {
                if p == q {
                    return Ok(0.0);
                }
                // canonical order keeps the numerical distance exactly symmetric; shooting
                // outward from the chart origin is the well-conditioned direction
                let (s, e) = if (p.norm(), p.x, p.y) <= (q.norm(), q.x, q.y) { (p, q) } else { (q, p) };
                Ok(shoot(self, s, e, params)?.length)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PinchingReport {
    pub k_min: f64,
    pub k_max: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Samples curvature on an `nx × ny` grid of `region`; passes iff
/// `−b² − tol ≤ K ≤ −a² + tol` at every node.
pub fn verify_pinching(model: &MetricModel, region: &Region, nx: usize, ny: usize, tol: f64) -> Result<PinchingReport> {
    let (mut k_min, mut k_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let pts = region.grid(nx, ny);
    for p in &pts {
        let k = model.curvature(*p)?;
        k_min = k_min.min(k);
        k_max = k_max.max(k);
    }
    let pass = k_min >= -model.b * model.b - tol && k_max <= -model.a * model.a + tol;
    Ok(PinchingReport { k_min, k_max, samples: pts.len(), pass })
}
