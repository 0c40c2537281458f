//! The experiment runner behind the command line: one function per experiment, each
//! producing a JSON report and a CSV table.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::boundary::{busemann, kernel_csv, BoundaryMeasure, BoundaryParams, BoundaryPoint, KernelRow};
use crate::config::{ExperimentConfig, ExperimentKind, RunParams};
use crate::error::{Error, Result};
use crate::flow::{flow_trajectory, FlowParams, FuchsianDomain, Letter, QuotientSurface, UnitTangentVector};
use crate::foliated::{FoliatedState, SuspensionFoliation, TransverseMeasure};
use crate::geometry::{verify_pinching, ChartPoint, MetricModel, Region, Variant};
use crate::linearization::{riccati_csv, riccati_trace, stable_slope, unstable_slope, LinearizationParams};
use crate::measures::{
    birkhoff_from, cesaro_diffusion, characteristic_vs_visibility, same_leaf_point, sample_rng, tv_distance, ugibbs_estimate, Binning,
    CharacteristicParams, EnsembleParams, HarmonicDensity, OctagonCells, ProductCells,
};

/// Largest kernel or Busemann truncation diagnostic accepted without flagging.
pub const DIAGNOSTIC_LIMIT: f64 = 1e-4;

/// `(name, description)` of every experiment, in listing order.
pub fn list_experiments() -> Vec<(&'static str, &'static str)> {
    ExperimentKind::ALL.iter().map(|k| (k.name(), k.describe())).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub experiment: &'static str,
    /// The full resolved configuration.
    pub config: ExperimentConfig,
    pub seed: u64,
    pub statistics: Value,
    pub diagnostics: Value,
    /// Diagnostics that exceeded their limits.
    pub flagged: Vec<String>,
    pub summary: String,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: Report,
    pub csv: String,
}

impl RunOutput {
    pub fn flagged(&self) -> bool {
        !self.report.flagged.is_empty()
    }

    /// Writes `report.json` and `data.csv` into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&self.report).map_err(|e| Error::invalid(e.to_string()))?;
        std::fs::write(dir.join("report.json"), json + "\n")?;
        std::fs::write(dir.join("data.csv"), &self.csv)?;
        Ok(())
    }
}

/// Stable process exit status for an error: 2 configuration, 3 numerical convergence,
/// 4 domain excursion, 1 anything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Invalid(_) | Error::Unsupported(_) | Error::UnknownGenerator(_) => 2,
        Error::Convergence { .. } | Error::BlowUp { .. } | Error::DegenerateSplitting | Error::Scale { .. } => 3,
        Error::Domain { .. } | Error::Excursion { .. } | Error::Folding(_) => 4,
        Error::Io(_) => 1,
    }
}

/// Exit status of a finished run: 3 when a diagnostic was flagged.
pub fn run_status(out: &RunOutput) -> i32 {
    if out.flagged() {
        3
    } else {
        0
    }
}

pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let model = config.model.build()?;
    let p = &config.params;
    let seed = config.seed;
    let r = match config.experiment {
        ExperimentKind::Pinching => pinching(&model, p, seed)?,
        ExperimentKind::FlowOracle => flow_oracle(&model, p, seed)?,
        ExperimentKind::Riccati => riccati(&model, p)?,
        ExperimentKind::Kernel => kernel(&model, p, seed)?,
        ExperimentKind::Busemann => busemann_check(&model, p, seed)?,
        ExperimentKind::SuspensionInvariance => suspension_invariance(&config.suspension.build()?, p)?,
        ExperimentKind::Ugibbs => ugibbs(&quotient(&model)?, p, seed)?,
        ExperimentKind::Diffusion => diffusion(&suspension(config, &model)?, p, seed)?,
        ExperimentKind::Birkhoff => birkhoff(&suspension(config, &model)?, p, seed)?,
        ExperimentKind::HarmonicDensity => harmonic_density(&model, p)?,
        ExperimentKind::Matsumoto => matsumoto(&suspension(config, &model)?, p, seed)?,
    };
    let report = Report {
        experiment: config.experiment.name(),
        config: config.clone(),
        seed,
        statistics: r.statistics,
        diagnostics: r.diagnostics,
        flagged: r.flagged,
        summary: format!("{}: {}", config.experiment.name(), r.summary),
    };
    Ok(RunOutput { report, csv: r.csv })
}

struct Outcome {
    statistics: Value,
    diagnostics: Value,
    flagged: Vec<String>,
    summary: String,
    csv: String,
}

fn quotient(model: &MetricModel) -> Result<QuotientSurface> {
    QuotientSurface::new(model.clone(), FuchsianDomain::octagon())
        .map_err(|_| Error::config("this experiment runs on the octagon surface; use the poincare_disc model"))
}

fn suspension(config: &ExperimentConfig, model: &MetricModel) -> Result<SuspensionFoliation> {
    quotient(model)?;
    config.suspension.build()
}

fn lin_params(p: &RunParams) -> LinearizationParams {
    LinearizationParams { burn_in: p.burn_in, ..LinearizationParams::with_dt(p.dt) }
}

fn boundary_params(p: &RunParams) -> BoundaryParams {
    BoundaryParams { linearization: lin_params(p), ..BoundaryParams::default() }
}

fn ensemble_params(p: &RunParams) -> EnsembleParams {
    EnsembleParams { flow: FlowParams::with_dt(p.dt), ..EnsembleParams::default() }
}

fn basepoint(model: &MetricModel, p: &RunParams) -> Result<ChartPoint> {
    let x = ChartPoint::new(p.x[0], p.x[1]);
    model.check(x)?;
    Ok(x)
}

/// Chart rectangle sampled by the random experiments.
fn working_region(model: &MetricModel) -> Region {
    match model.variant() {
        Variant::UpperHalfPlane => Region { x_min: -1.0, x_max: 1.0, y_min: 0.5, y_max: 2.0 },
        Variant::PoincareDisc => Region { x_min: -0.6, x_max: 0.6, y_min: -0.6, y_max: 0.6 },
        Variant::Rotational(_) => Region { x_min: -1.5, x_max: 1.5, y_min: -1.5, y_max: 1.5 },
        Variant::Conformal(g) => g.interior(),
    }
}

fn random_point(model: &MetricModel, rng: &mut impl Rng) -> ChartPoint {
    let r = working_region(model);
    loop {
        let p = ChartPoint::new(r.x_min + (r.x_max - r.x_min) * rng.random::<f64>(), r.y_min + (r.y_max - r.y_min) * rng.random::<f64>());
        if model.contains(p) {
            return p;
        }
    }
}

fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, f64::max)
}

fn pinching(model: &MetricModel, p: &RunParams, seed: u64) -> Result<Outcome> {
    let tol = 1e-6;
    let region = working_region(model);
    let curv = verify_pinching(model, &region, p.bins, p.bins, tol)?;
    let lp = lin_params(p);
    let burn = lp.burn(model);
    let rows: Vec<(UnitTangentVector, f64, f64, f64)> = (0..p.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            let v = UnitTangentVector { base: random_point(model, &mut rng), theta: TAU * rng.random::<f64>() };
            let k = model.curvature(v.base)?;
            Ok((v, k, unstable_slope(model, &v, burn, &lp)?, stable_slope(model, &v, burn, &lp)?))
        })
        .collect::<Result<_>>()?;
    let (a, b) = (model.a(), model.b());
    let u_range = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.2), hi.max(r.2)));
    let s_range = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.3), hi.max(r.3)));
    let slopes_ok = u_range.0 >= a - tol && u_range.1 <= b + tol && s_range.0 >= -b - tol && s_range.1 <= -a + tol;
    let mut flagged = Vec::new();
    if !curv.pass {
        flagged.push("curvature outside [-b², -a²]".into());
    }
    if !slopes_ok {
        flagged.push("Riccati slopes outside [a, b]".into());
    }
    let mut csv = String::from("x,y,theta,K,U,S\n");
    for (v, k, u, s) in &rows {
        let _ = writeln!(csv, "{},{},{},{k},{u},{s}", v.base.x, v.base.y, v.theta);
    }
    Ok(Outcome {
        statistics: json!({
            "a": a, "b": b,
            "k_min": curv.k_min, "k_max": curv.k_max, "curvature_samples": curv.samples,
            "u_min": u_range.0, "u_max": u_range.1, "s_min": s_range.0, "s_max": s_range.1, "orbits": p.n,
        }),
        diagnostics: json!({ "tolerance": tol, "burn_in": burn }),
        summary: format!(
            "K in [{:.4}, {:.4}], U in [{:.4}, {:.4}], S in [{:.4}, {:.4}]",
            curv.k_min, curv.k_max, u_range.0, u_range.1, s_range.0, s_range.1
        ),
        flagged,
        csv,
    })
}

/// Closed-form geodesic of the disc or half-plane, through the disc picture.
fn exact_geodesic(model: &MetricModel, v: &UnitTangentVector, t: f64) -> Result<ChartPoint> {
    let i = Complex64::i();
    let z = Complex64::new(v.base.x, v.base.y);
    let (p, theta) = match model.variant() {
        Variant::PoincareDisc => (z, v.theta),
        Variant::UpperHalfPlane => ((z - i) / (z + i), v.theta + (2.0 * i / ((z + i) * (z + i))).arg()),
        _ => return Err(Error::config("flow-oracle needs the upper_half_plane or poincare_disc model")),
    };
    let w0 = Complex64::from_polar((0.5 * t).tanh(), theta);
    let w = (w0 + p) / (1.0 + p.conj() * w0);
    let out = match model.variant() {
        Variant::PoincareDisc => w,
        _ => i * (1.0 + w) / (1.0 - w),
    };
    Ok(ChartPoint::new(out.re, out.im))
}

fn constant_distance(model: &MetricModel, p: ChartPoint, q: ChartPoint) -> f64 {
    match model.variant() {
        Variant::UpperHalfPlane => 2.0 * ((p.x - q.x).hypot(p.y - q.y) / (2.0 * (p.y * q.y).sqrt())).asinh(),
        _ => {
            let (p, q) = (Complex64::new(p.x, p.y), Complex64::new(q.x, q.y));
            2.0 * ((q - p) / (1.0 - p.conj() * q)).norm().atanh()
        }
    }
}

fn flow_oracle(model: &MetricModel, p: &RunParams, seed: u64) -> Result<Outcome> {
    exact_geodesic(model, &UnitTangentVector::default(), 0.0)?;
    let fp = FlowParams::with_dt(p.dt);
    let every = (fp.steps_for(p.t) / 10).max(1);
    let orbits: Vec<Vec<(f64, ChartPoint, ChartPoint)>> = (0..p.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            let v = UnitTangentVector { base: random_point(model, &mut rng), theta: TAU * rng.random::<f64>() };
            flow_trajectory(model, &v, p.t, &fp, every)?.into_iter().map(|(t, w)| Ok((t, w.base, exact_geodesic(model, &v, t)?))).collect()
        })
        .collect::<Result<_>>()?;
    let mut csv = String::from("orbit,t,x,y,x_exact,y_exact,error\n");
    let mut worst: f64 = 0.0;
    for (k, orbit) in orbits.iter().enumerate() {
        for (t, q, e) in orbit {
            let err = constant_distance(model, *q, *e);
            worst = worst.max(err);
            let _ = writeln!(csv, "{k},{t},{},{},{},{},{err}", q.x, q.y, e.x, e.y);
        }
    }
    let limit = 1e-6;
    Ok(Outcome {
        statistics: json!({ "max_distance_error": worst, "orbits": p.n, "horizon": p.t }),
        diagnostics: json!({ "limit": limit }),
        flagged: if worst < limit { vec![] } else { vec![format!("geodesic error {worst:.3e} above {limit:e}")] },
        summary: format!("max distance to closed form {worst:.3e} over t in [0, {}]", p.t),
        csv,
    })
}

fn riccati(model: &MetricModel, p: &RunParams) -> Result<Outcome> {
    let lp = lin_params(p);
    let v = UnitTangentVector { base: basepoint(model, p)?, theta: p.theta };
    let every = (lp.flow.steps_for(p.t) / 2000).max(1);
    let rows = riccati_trace(model, &v, p.t, model.a(), &lp, every)?;
    let (a, b) = (model.a(), model.b());
    let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, s)| (lo.min(s.u), hi.max(s.u)));
    let last = rows.last().expect("trace has a final row").1;
    let tol = 1e-6;
    let flagged = if lo >= a - tol && hi <= b + tol { vec![] } else { vec!["slope left [a, b]".into()] };
    Ok(Outcome {
        statistics: json!({ "u_final": last.u, "log_jacobian": last.log_j, "u_min": lo, "u_max": hi, "a": a, "b": b }),
        diagnostics: json!({ "rows": rows.len(), "tolerance": tol }),
        flagged,
        summary: format!("u(T) = {:.6}, log J = {:.4}, u stayed in [{lo:.4}, {hi:.4}]", last.u, last.log_j),
        csv: riccati_csv(&rows),
    })
}

fn random_triple(model: &MetricModel, seed: u64, i: usize) -> (ChartPoint, ChartPoint, BoundaryPoint) {
    let mut rng = sample_rng(seed, i as u64);
    let o = random_point(model, &mut rng);
    let z = random_point(model, &mut rng);
    (o, z, BoundaryPoint::new(TAU * rng.random::<f64>()))
}

fn kernel(model: &MetricModel, p: &RunParams, seed: u64) -> Result<Outcome> {
    let bp = boundary_params(p);
    let rows: Vec<KernelRow> = (0..p.n)
        .into_par_iter()
        .map(|i| {
            let (o, z, xi) = random_triple(model, seed, i);
            KernelRow::evaluate(model, o, z, xi, p.t, &bp)
        })
        .collect::<Result<_>>()?;
    let gap = max_of(rows.iter().map(KernelRow::relative_gap));
    let abs_gap = max_of(rows.iter().map(|r| (r.potential.value - r.jacobian.value).abs()));
    let diag = max_of(rows.iter().map(KernelRow::diagnostic));
    let mut flagged = Vec::new();
    if diag > DIAGNOSTIC_LIMIT {
        flagged.push(format!("kernel truncation diagnostic {diag:.3e}"));
    }
    if gap > DIAGNOSTIC_LIMIT {
        flagged.push(format!("kernel forms disagree by {gap:.3e}"));
    }
    Ok(Outcome {
        statistics: json!({ "max_relative_gap": gap, "max_abs_gap": abs_gap, "triples": p.n }),
        diagnostics: json!({ "max_diagnostic": diag, "limit": DIAGNOSTIC_LIMIT, "horizon": p.t }),
        flagged,
        summary: format!("max |k_potential - k_jacobian| = {abs_gap:.3e} (relative {gap:.3e}), diagnostic {diag:.3e}"),
        csv: kernel_csv(&rows),
    })
}

/// Disc Poisson kernel of the disc image of `z`.
fn poisson(model: &MetricModel, z: ChartPoint, xi: BoundaryPoint) -> Option<f64> {
    let c = Complex64::new(z.x, z.y);
    let w = match model.variant() {
        Variant::PoincareDisc => c,
        Variant::UpperHalfPlane => (c - Complex64::i()) / (c + Complex64::i()),
        _ => return None,
    };
    Some((1.0 - w.norm_sqr()) / (w - xi.disc_point()).norm_sqr())
}

fn busemann_check(model: &MetricModel, p: &RunParams, seed: u64) -> Result<Outcome> {
    let bp = boundary_params(p);
    let rows: Vec<[f64; 10]> = (0..p.n)
        .into_par_iter()
        .map(|i| {
            let (y, z, xi) = random_triple(model, seed, i);
            let w = random_point(model, &mut sample_rng(seed, (p.n + i) as u64));
            let b = busemann(model, xi, y, z, p.t, &bp)?;
            let cocycle = (b.value + busemann(model, xi, z, w, p.t, &bp)?.value - busemann(model, xi, y, w, p.t, &bp)?.value).abs();
            let exact = match (poisson(model, y, xi), poisson(model, z, xi)) {
                (Some(py), Some(pz)) => (py / pz).ln(),
                _ => f64::NAN,
            };
            Ok([y.x, y.y, z.x, z.y, xi.xi, b.value, exact, b.diagnostic, cocycle, (b.value - exact).abs()])
        })
        .collect::<Result<_>>()?;
    let err = max_of(rows.iter().map(|r| r[9]).filter(|e| !e.is_nan()));
    let diag = max_of(rows.iter().map(|r| r[7]));
    let cocycle = max_of(rows.iter().map(|r| r[8]));
    let closed = model.constant_curvature().is_some() && poisson(model, ChartPoint::new(0.0, 0.5), BoundaryPoint::new(0.0)).is_some();
    let mut flagged = Vec::new();
    if diag > DIAGNOSTIC_LIMIT {
        flagged.push(format!("Busemann truncation diagnostic {diag:.3e}"));
    }
    if closed && err > 1e-5 {
        flagged.push(format!("Busemann closed-form error {err:.3e}"));
    }
    let mut csv = String::from("y_x,y_y,z_x,z_y,xi,beta,exact,diagnostic,cocycle\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{},{},{},{},{},{}", r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8]);
    }
    Ok(Outcome {
        statistics: json!({ "max_closed_form_error": if closed { json!(err) } else { Value::Null }, "max_cocycle_residual": cocycle, "pairs": p.n }),
        diagnostics: json!({ "max_diagnostic": diag, "limit": DIAGNOSTIC_LIMIT, "horizon": p.t }),
        flagged,
        summary: if closed {
            format!("max closed-form error {err:.3e}, cocycle residual {cocycle:.3e}")
        } else {
            format!("cocycle residual {cocycle:.3e}, diagnostic {diag:.3e}")
        },
        csv,
    })
}

fn suspension_invariance(susp: &SuspensionFoliation, p: &RunParams) -> Result<Outcome> {
    let nu = TransverseMeasure::uniform(p.bins);
    let relation = susp.relation_defect(4 * p.bins)?;
    let defect = susp.invariance_defect(&nu);
    let mut csv = String::from("generator,bin_left,ratio\n");
    let mut ranges = Vec::new();
    for k in 0..susp.holonomy.len() {
        let rn = susp.radon_nikodym_estimate(&nu, Letter::gen(k))?;
        let vals: Vec<f64> = rn.ratio.iter().flatten().copied().collect();
        ranges.push(json!({
            "generator": k,
            "min": vals.iter().copied().fold(f64::INFINITY, f64::min),
            "max": vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            "flagged_bins": rn.flagged.len(),
        }));
        for (i, r) in rn.ratio.iter().enumerate() {
            let _ = writeln!(csv, "{k},{},{}", rn.edges[i], r.map(|r| r.to_string()).unwrap_or_default());
        }
    }
    Ok(Outcome {
        statistics: json!({ "relation_defect": relation, "invariance_defect": defect, "radon_nikodym": ranges }),
        diagnostics: json!({ "bins": p.bins, "rebinning_scale": 1.0 / p.bins as f64 }),
        flagged: vec![],
        summary: format!("relation defect {relation:.3e}, invariance defect of Lebesgue {defect:.4}"),
        csv,
    })
}

fn ugibbs(surface: &QuotientSurface, p: &RunParams, seed: u64) -> Result<Outcome> {
    let ep = ensemble_params(p);
    let start = FoliatedState { v: UnitTangentVector { base: basepoint(&surface.model, p)?, theta: p.theta }, fiber: p.fiber };
    let mu = ugibbs_estimate(surface, &start, p.arc, p.t, p.n, seed, &ep)?;
    let cells = OctagonCells::coarse();
    let reference = cells.liouville(&surface.domain, 400);
    let h = mu.histogram(&cells);
    let tv = h.tv_distance(&reference);
    let image = mu.flowed(surface, 1.0, &ep.flow)?.histogram(&cells);
    let tv1 = tv_distance(&image.masses, &h.masses);
    let widest = max_of(h.intervals(1.96).iter().map(|(lo, hi)| hi - lo));
    Ok(Outcome {
        statistics: json!({ "tv_liouville": tv, "tv_time_one": tv1, "cells": cells.cells(), "samples": p.n }),
        diagnostics: json!({ "widest_binomial_interval": widest, "mass_outside_cells": h.outside }),
        flagged: vec![],
        summary: format!("TV to Liouville {tv:.4}, TV to time-1 image {tv1:.4} on {} cells", cells.cells()),
        csv: mu.to_csv(),
    })
}

fn diffusion(susp: &SuspensionFoliation, p: &RunParams, seed: u64) -> Result<Outcome> {
    let x = basepoint(&susp.base.model, p)?;
    let mu = cesaro_diffusion(susp, x, p.fiber, p.t, p.n, seed, &ensemble_params(p))?;
    let fiber = mu.fiber_marginal(p.bins).normalized();
    let tv_fiber = fiber.tv_distance(&TransverseMeasure::uniform(p.bins));
    let defect = susp.invariance_defect(&fiber);
    let base = OctagonCells::base(4, 4)?;
    let tv_base = mu.histogram(&base).tv_distance(&base.liouville(&susp.base.domain, 400));
    Ok(Outcome {
        statistics: json!({ "tv_fiber_uniform": tv_fiber, "invariance_defect": defect, "tv_base_area": tv_base, "samples": p.n }),
        diagnostics: json!({ "fiber_bins": p.bins, "defect_scale": 2.0 / p.bins as f64 }),
        flagged: vec![],
        summary: format!("fiber TV to uniform {tv_fiber:.4}, invariance defect {defect:.4}, base TV to area {tv_base:.4}"),
        csv: mu.to_csv(),
    })
}

/// Indicator cells of `birkhoff`: 2 shells × 2 sectors × 2 fiber halves.
pub fn birkhoff_cells() -> ProductCells {
    ProductCells { base: OctagonCells { shells: 2, sectors: 2, directions: 1 }, fiber: 2 }
}

fn birkhoff(susp: &SuspensionFoliation, p: &RunParams, seed: u64) -> Result<Outcome> {
    let ep = ensemble_params(p);
    let x = basepoint(&susp.base.model, p)?;
    let other = same_leaf_point(susp, x, p.fiber, p.leaf_step[0], p.leaf_step[1], &ep.flow)?;
    let cells = birkhoff_cells();
    let count = p.observables.min(cells.cells());
    let ensembles = [
        cesaro_diffusion(susp, x, p.fiber, p.t, p.n, seed, &ep)?,
        cesaro_diffusion(susp, other.v.base, other.fiber, p.t, p.n, seed ^ 0x5bd1_e995, &ep)?,
    ];
    let mut csv = String::from("observable,basepoint,horizon,average,samples\n");
    let mut values = Vec::new();
    let mut worst: f64 = 0.0;
    for k in 0..count {
        let f = |s: &FoliatedState| if cells.cell_of(s) == Some(k) { 1.0 } else { 0.0 };
        let est: Vec<_> = ensembles.iter().map(|mu| birkhoff_from(mu, f, p.t)).collect();
        for (b, e) in est.iter().enumerate() {
            for (h, avg, used) in &e.running {
                let _ = writeln!(csv, "{k},{b},{h},{avg},{used}");
            }
        }
        worst = worst.max((est[0].value - est[1].value).abs());
        values.push(json!({ "cell": k, "x": est[0].value, "x_prime": est[1].value, "stderr": [est[0].stderr, est[1].stderr] }));
    }
    Ok(Outcome {
        statistics: json!({ "observables": values, "max_difference": worst, "x_prime": [other.v.base.x, other.v.base.y] }),
        diagnostics: json!({ "samples_per_basepoint": p.n }),
        flagged: vec![],
        summary: format!("max same-leaf difference {worst:.4} over {count} indicators"),
        csv,
    })
}

/// The `k`-th of `n` points of a sunflower spiral in the disc of radius 0.6, carried to
/// the model's chart.
fn grid_point(model: &MetricModel, k: usize, n: usize) -> Result<ChartPoint> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let w = Complex64::from_polar(0.6 * ((k as f64 + 0.5) / n as f64).sqrt(), golden * k as f64);
    let z = match model.variant() {
        Variant::PoincareDisc => w,
        Variant::UpperHalfPlane => Complex64::i() * (1.0 + w) / (1.0 - w),
        Variant::Rotational(_) => 2.0 * w,
        Variant::Conformal(_) => return Err(Error::Unsupported("the conformal chart has no boundary at infinity".into())),
    };
    Ok(ChartPoint::new(z.re, z.im))
}

fn harmonic_density(model: &MetricModel, p: &RunParams) -> Result<Outcome> {
    let o = match model.variant() {
        Variant::UpperHalfPlane => ChartPoint::new(0.0, 1.0),
        _ => ChartPoint::new(0.0, 0.0),
    };
    let bp = boundary_params(p);
    let h = HarmonicDensity::new(model, &BoundaryMeasure::uniform(p.bins), o, p.t, &bp)?;
    let mut csv = String::from("z_x,z_y,h,diagnostic\n");
    let (mut dev, mut diag): (f64, f64) = (0.0, 0.0);
    for k in 0..p.n {
        let z = grid_point(model, k, p.n)?;
        let v = h.at(z)?;
        dev = dev.max((v.value - 1.0).abs());
        diag = diag.max(v.diagnostic);
        let _ = writeln!(csv, "{},{},{},{}", z.x, z.y, v.value, v.diagnostic);
    }
    let flagged = if diag > DIAGNOSTIC_LIMIT { vec![format!("kernel truncation diagnostic {diag:.3e}")] } else { vec![] };
    Ok(Outcome {
        statistics: json!({ "max_abs_deviation_from_one": dev, "points": p.n, "boundary_bins": p.bins }),
        diagnostics: json!({ "max_diagnostic": diag, "limit": DIAGNOSTIC_LIMIT }),
        flagged,
        summary: format!("max |h - 1| = {dev:.3e} on {} points, diagnostic {diag:.3e}", p.n),
        csv,
    })
}

fn matsumoto(susp: &SuspensionFoliation, p: &RunParams, seed: u64) -> Result<Outcome> {
    let x = basepoint(&susp.base.model, p)?;
    let r = characteristic_vs_visibility(
        susp,
        x,
        p.fiber,
        p.t,
        &p.levels,
        p.bins,
        seed,
        &ensemble_params(p),
        &CharacteristicParams::default(),
    )?;
    let mut csv = String::from("level,n,accepted,tv,low_confidence_bins\n");
    for (k, l) in r.levels.iter().enumerate() {
        let _ = writeln!(csv, "{k},{},{},{},{}", l.n, l.accepted, l.tv, l.low_confidence_bins.len());
    }
    let tvs: Vec<f64> = r.levels.iter().map(|l| l.tv).collect();
    Ok(Outcome {
        statistics: json!({ "tv": tvs, "trend": r.trend(), "levels": r.levels }),
        diagnostics: json!({ "bins": p.bins, "params": CharacteristicParams::default() }),
        flagged: vec![],
        summary: format!("TV by level {:?}, trend {:+.4}", tvs.iter().map(|t| (t * 1e4).round() / 1e4).collect::<Vec<_>>(), r.trend()),
        csv,
    })
}
