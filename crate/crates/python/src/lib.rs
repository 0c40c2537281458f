//! Python bindings: metric models, the geodesic flow, kernels, suspensions and the
//! experiment runner.

use leafdyn::boundary::{busemann as busemann_rs, gibbs_kernel_jacobian_form, gibbs_kernel_potential_form, BoundaryParams, BoundaryPoint};
use leafdyn::config::{ExperimentConfig, ModelSpec};
use leafdyn::experiments;
use leafdyn::flow::{flow as flow_rs, FlowParams, Letter, Word};
use leafdyn::foliated::{FoliatedState, SuspensionFoliation, TransverseMeasure};
use leafdyn::linearization::{stable_slope, unstable_slope, LinearizationParams};
use leafdyn::{ChartPoint, Error, MetricModel, UnitTangentVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match experiments::exit_code(&e) {
        2 | 4 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn tangent(v: (f64, f64, f64)) -> UnitTangentVector {
    UnitTangentVector { base: ChartPoint::new(v.0, v.1), theta: v.2 }
}

fn point(p: (f64, f64)) -> ChartPoint {
    ChartPoint::new(p.0, p.1)
}

/// A Riemannian metric on a chart of the plane with curvature pinched in `[-b², -a²]`.
#[pyclass(name = "Model", module = "leafdyn_py", frozen)]
struct PyModel(MetricModel);

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn upper_half_plane() -> Self {
        Self(MetricModel::upper_half_plane())
    }

    #[staticmethod]
    fn poincare_disc() -> Self {
        Self(MetricModel::poincare_disc())
    }

    #[staticmethod]
    fn pinched() -> Self {
        Self(MetricModel::pinched_blend())
    }

    /// Builds a model from its config-file form, e.g. `{"kind": "pinched"}` as TOML text
    /// `kind = "pinched"`.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let spec: ModelSpec = toml_spec(text)?;
        spec.build().map(Self).map_err(py_err)
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.0.name()
    }

    #[getter]
    fn a(&self) -> f64 {
        self.0.a()
    }

    #[getter]
    fn b(&self) -> f64 {
        self.0.b()
    }

    fn curvature(&self, x: f64, y: f64) -> PyResult<f64> {
        self.0.curvature(ChartPoint::new(x, y)).map_err(py_err)
    }

    fn metric(&self, x: f64, y: f64) -> PyResult<[[f64; 2]; 2]> {
        self.0.metric(ChartPoint::new(x, y)).map(|g| [[g.g11, g.g12], [g.g12, g.g22]]).map_err(py_err)
    }

    fn distance(&self, p: (f64, f64), q: (f64, f64)) -> PyResult<f64> {
        self.0.distance(point(p), point(q)).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Model({}, a={}, b={})", self.0.name(), self.0.a(), self.0.b())
    }
}

fn toml_spec<T: serde::de::DeserializeOwned>(text: &str) -> PyResult<T> {
    toml::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Flows the unit vector `(x, y, theta)` for time `t`; negative `t` flows backwards.
#[pyfunction]
#[pyo3(signature = (model, v, t, dt = 1e-3))]
fn flow(py: Python<'_>, model: &PyModel, v: (f64, f64, f64), t: f64, dt: f64) -> PyResult<(f64, f64, f64)> {
    let w = py.detach(|| flow_rs(&model.0, &tangent(v), t, &FlowParams::with_dt(dt))).map_err(py_err)?;
    Ok((w.base.x, w.base.y, w.theta))
}

/// Unstable and stable Riccati slopes `(U, S)` at `(x, y, theta)`.
#[pyfunction]
#[pyo3(signature = (model, v, dt = 1e-3, burn_in = None))]
fn slopes(py: Python<'_>, model: &PyModel, v: (f64, f64, f64), dt: f64, burn_in: Option<f64>) -> PyResult<(f64, f64)> {
    let lp = LinearizationParams { burn_in, ..LinearizationParams::with_dt(dt) };
    let burn = lp.burn(&model.0);
    let v = tangent(v);
    py.detach(|| Ok((unstable_slope(&model.0, &v, burn, &lp)?, stable_slope(&model.0, &v, burn, &lp)?))).map_err(py_err)
}

/// Gibbs kernel `k(o, z; xi)` in both forms: `(potential, jacobian, diagnostic)`. The
/// boundary point is an angle in the disc picture.
#[pyfunction]
#[pyo3(signature = (model, o, z, xi, t = 20.0))]
fn gibbs_kernel(py: Python<'_>, model: &PyModel, o: (f64, f64), z: (f64, f64), xi: f64, t: f64) -> PyResult<(f64, f64, f64)> {
    let bp = BoundaryParams::default();
    let xi = BoundaryPoint::new(xi);
    py.detach(|| {
        let p = gibbs_kernel_potential_form(&model.0, point(o), point(z), xi, t, &bp)?;
        let j = gibbs_kernel_jacobian_form(&model.0, point(o), point(z), xi, t, &bp)?;
        Ok((p.value, j.value, p.diagnostic.max(j.diagnostic)))
    })
    .map_err(py_err)
}

/// Busemann function `beta_xi(y, z)` truncated at horizon `t`: `(value, diagnostic)`.
#[pyfunction]
#[pyo3(signature = (model, xi, y, z, t = 20.0))]
fn busemann(py: Python<'_>, model: &PyModel, xi: f64, y: (f64, f64), z: (f64, f64), t: f64) -> PyResult<(f64, f64)> {
    let r =
        py.detach(|| busemann_rs(&model.0, BoundaryPoint::new(xi), point(y), point(z), t, &BoundaryParams::default())).map_err(py_err)?;
    Ok((r.value, r.diagnostic))
}

/// A circle bundle over the octagon surface with holonomy on the four generators.
#[pyclass(name = "Suspension", module = "leafdyn_py", frozen)]
struct PySuspension(SuspensionFoliation);

#[pymethods]
impl PySuspension {
    #[staticmethod]
    fn trivial() -> Self {
        Self(SuspensionFoliation::trivial())
    }

    #[staticmethod]
    fn irrational_rotations() -> Self {
        Self(SuspensionFoliation::irrational_rotations())
    }

    #[staticmethod]
    fn boundary_action() -> Self {
        Self(SuspensionFoliation::boundary_action())
    }

    #[staticmethod]
    fn rotations(rho: [f64; 4]) -> PyResult<Self> {
        SuspensionFoliation::rotations(rho).map(Self).map_err(py_err)
    }

    /// Applies the holonomy of a word given as signed generator indices, `+k` for `g_k` and
    /// `-k` for its inverse, `k` in `1..=4`.
    fn holonomy(&self, word: Vec<i64>, x: f64) -> PyResult<f64> {
        let letters = word.iter().map(|&k| Letter::from_signed(k)).collect::<leafdyn::Result<Vec<_>>>().map_err(py_err)?;
        self.0.holonomy_apply(&Word(letters), x).map_err(py_err)
    }

    fn relation_defect(&self, grid: usize) -> PyResult<f64> {
        self.0.relation_defect(grid).map_err(py_err)
    }

    /// L¹ invariance defect of Lebesgue measure on `bins` fiber bins.
    fn invariance_defect(&self, bins: usize) -> f64 {
        self.0.invariance_defect(&TransverseMeasure::uniform(bins))
    }

    /// Flows a state `(x, y, theta, fiber)` on the disc model of the surface.
    #[pyo3(signature = (state, t, dt = 2e-2))]
    fn flow(&self, py: Python<'_>, state: (f64, f64, f64, f64), t: f64, dt: f64) -> PyResult<(f64, f64, f64, f64)> {
        let s = FoliatedState { v: tangent((state.0, state.1, state.2)), fiber: state.3 };
        let r = py.detach(|| self.0.flow(&s, t, &FlowParams::with_dt(dt))).map_err(py_err)?;
        Ok((r.v.base.x, r.v.base.y, r.v.theta, r.fiber))
    }
}

/// `(name, description)` for each experiment, in listing order.
#[pyfunction]
fn list_experiments() -> Vec<(&'static str, &'static str)> {
    experiments::list_experiments()
}

/// Runs an experiment from config text and `key=value` overrides without writing files.
/// Returns `(report_json, csv, exit_status)`.
#[pyfunction]
#[pyo3(signature = (config, overrides = Vec::new()))]
fn run_experiment(py: Python<'_>, config: &str, overrides: Vec<String>) -> PyResult<(String, String, i32)> {
    let cfg = ExperimentConfig::parse(config, &overrides).map_err(py_err)?;
    let out = py.detach(|| experiments::run(&cfg)).map_err(py_err)?;
    let report = serde_json::to_string(&out.report).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let status = experiments::run_status(&out);
    Ok((report, out.csv, status))
}

#[pymodule]
fn leafdyn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PySuspension>()?;
    m.add_function(wrap_pyfunction!(flow, m)?)?;
    m.add_function(wrap_pyfunction!(slopes, m)?)?;
    m.add_function(wrap_pyfunction!(gibbs_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(busemann, m)?)?;
    m.add_function(wrap_pyfunction!(list_experiments, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
