//! Experiment configuration: TOML files with `key = value` overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foliated::{FiberMap, SuspensionFoliation};
use crate::geometry::{ConformalGrid, MetricModel, Profile};

/// A metric model as written in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    UpperHalfPlane,
    PoincareDisc,
    /// The pinched rotational blend with `a = 0.8`, `b = 1.25`.
    Pinched,
    Rotational {
        profile: Profile,
        a: f64,
        b: f64,
    },
    /// Conformal factor on a grid file; the shipped grid when `grid` is absent.
    Conformal {
        #[serde(default)]
        grid: Option<PathBuf>,
        a: f64,
        b: f64,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<MetricModel> {
        match self {
            ModelSpec::UpperHalfPlane => Ok(MetricModel::upper_half_plane()),
            ModelSpec::PoincareDisc => Ok(MetricModel::poincare_disc()),
            ModelSpec::Pinched => Ok(MetricModel::pinched_blend()),
            ModelSpec::Rotational { profile, a, b } => MetricModel::rotational(profile.clone(), *a, *b),
            ModelSpec::Conformal { grid, a, b } => {
                let g = match grid {
                    Some(path) => ConformalGrid::load(path)?,
                    None => ConformalGrid::shipped(),
                };
                MetricModel::conformal(g, *a, *b)
            }
        }
    }
}

/// Fiber holonomy of a suspension over the octagon surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HolonomySpec {
    Trivial,
    IrrationalRotations,
    BoundaryAction,
    Rotations {
        rho: [f64; 4],
    },
    /// One fiber map per generator.
    Maps {
        maps: Vec<FiberMap>,
    },
}

impl HolonomySpec {
    pub fn build(&self) -> Result<SuspensionFoliation> {
        match self {
            HolonomySpec::Trivial => Ok(SuspensionFoliation::trivial()),
            HolonomySpec::IrrationalRotations => Ok(SuspensionFoliation::irrational_rotations()),
            HolonomySpec::BoundaryAction => Ok(SuspensionFoliation::boundary_action()),
            HolonomySpec::Rotations { rho } => SuspensionFoliation::rotations(*rho),
            HolonomySpec::Maps { maps } => SuspensionFoliation::new(maps.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Pinching,
    FlowOracle,
    Riccati,
    Kernel,
    Busemann,
    SuspensionInvariance,
    Ugibbs,
    Diffusion,
    Birkhoff,
    HarmonicDensity,
    Matsumoto,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 11] = [
        ExperimentKind::Pinching,
        ExperimentKind::FlowOracle,
        ExperimentKind::Riccati,
        ExperimentKind::Kernel,
        ExperimentKind::Busemann,
        ExperimentKind::SuspensionInvariance,
        ExperimentKind::Ugibbs,
        ExperimentKind::Diffusion,
        ExperimentKind::Birkhoff,
        ExperimentKind::HarmonicDensity,
        ExperimentKind::Matsumoto,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Pinching => "pinching",
            ExperimentKind::FlowOracle => "flow-oracle",
            ExperimentKind::Riccati => "riccati",
            ExperimentKind::Kernel => "kernel",
            ExperimentKind::Busemann => "busemann",
            ExperimentKind::SuspensionInvariance => "suspension-invariance",
            ExperimentKind::Ugibbs => "ugibbs",
            ExperimentKind::Diffusion => "diffusion",
            ExperimentKind::Birkhoff => "birkhoff",
            ExperimentKind::HarmonicDensity => "harmonic-density",
            ExperimentKind::Matsumoto => "matsumoto",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            ExperimentKind::Pinching => "curvature and Riccati slopes stay in the pinching bounds [a, b]",
            ExperimentKind::FlowOracle => "integrated geodesics against closed-form constant-curvature geodesics",
            ExperimentKind::Riccati => "trace of the unstable Riccati slope u' = -K - u^2 and its Jacobian",
            ExperimentKind::Kernel => "potential-form versus Jacobian-form Gibbs kernel on random triples",
            ExperimentKind::Busemann => "Busemann cocycle against the Poisson-kernel closed form",
            ExperimentKind::SuspensionInvariance => "holonomy relation, transverse invariance defect and Radon-Nikodym cocycle",
            ExperimentKind::Ugibbs => "Gibbs u-state by averaging pushforwards of an unstable arc",
            ExperimentKind::Diffusion => "Cesaro average of the diffusion of a Dirac mass on a suspension",
            ExperimentKind::Birkhoff => "diffusion-operator Birkhoff averages from two points of one leaf",
            ExperimentKind::HarmonicDensity => "Gibbs-kernel integral of a boundary measure on a grid of points",
            ExperimentKind::Matsumoto => "characteristic boundary class against the visibility class",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name).ok_or_else(|| Error::config(format!("unknown experiment `{name}`")))
    }

    fn default_model(self) -> ModelSpec {
        match self {
            ExperimentKind::Pinching | ExperimentKind::Riccati => ModelSpec::Pinched,
            ExperimentKind::FlowOracle | ExperimentKind::Kernel | ExperimentKind::Busemann => ModelSpec::UpperHalfPlane,
            _ => ModelSpec::PoincareDisc,
        }
    }

    fn default_params(self) -> RunParams {
        let base = RunParams::default();
        match self {
            ExperimentKind::Pinching => RunParams { n: 1000, bins: 32, ..base },
            ExperimentKind::FlowOracle => RunParams { t: 5.0, n: 20, ..base },
            ExperimentKind::Riccati => RunParams { t: 30.0, ..base },
            ExperimentKind::Kernel => RunParams { t: 20.0, n: 10, ..base },
            ExperimentKind::Busemann => RunParams { t: 20.0, n: 20, ..base },
            ExperimentKind::SuspensionInvariance => RunParams { bins: 256, ..base },
            ExperimentKind::Ugibbs => RunParams { dt: 2e-2, t: 50.0, n: 100_000, arc: 1.0, ..base },
            ExperimentKind::Diffusion => RunParams { dt: 2e-2, t: 50.0, n: 100_000, bins: 64, ..base },
            ExperimentKind::Birkhoff => RunParams { dt: 2e-2, t: 50.0, n: 100_000, ..base },
            ExperimentKind::HarmonicDensity => RunParams { t: 20.0, n: 20, bins: 64, ..base },
            ExperimentKind::Matsumoto => RunParams { dt: 2e-2, t: 30.0, bins: 16, ..base },
        }
    }
}

/// Numeric parameters; each experiment reads the ones it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunParams {
    /// Integration step.
    pub dt: f64,
    /// Time horizon.
    pub t: f64,
    /// Sample, orbit or point count.
    pub n: usize,
    pub bins: usize,
    /// Riccati burn-in; `20/a` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    /// Basepoint in the chart.
    pub x: [f64; 2],
    pub theta: f64,
    pub fiber: f64,
    /// Unstable arc length.
    pub arc: f64,
    /// Sample counts of successive resolution levels.
    pub levels: Vec<usize>,
    /// Number of indicator observables.
    pub observables: usize,
    /// Direction and length of the leafwise move to the second basepoint.
    pub leaf_step: [f64; 2],
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t: 20.0,
            n: 100,
            bins: 64,
            burn_in: None,
            x: [0.1, 0.2],
            theta: 0.7,
            fiber: 0.3,
            arc: 1.0,
            levels: vec![25_000, 50_000, 100_000],
            observables: 5,
            leaf_step: [2.5, 0.8],
        }
    }
}

/// A fully resolved experiment configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// Run directory for `report.json` and `data.csv`.
    pub output: PathBuf,
    pub model: ModelSpec,
    pub suspension: HolonomySpec,
    pub params: RunParams,
}

impl ExperimentConfig {
    /// Parses TOML text, applies `key=value` overrides (dotted keys reach into tables)
    /// and fills unspecified fields with the experiment's defaults.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut user: toml::Table = text.parse().map_err(|e| Error::config(format!("{e}")))?;
        for o in overrides {
            let (key, value) = o.split_once('=').ok_or_else(|| Error::config(format!("override `{o}` is not key=value")))?;
            set_path(&mut user, key.trim(), parse_value(value.trim()))?;
        }
        let name = match user.get("experiment") {
            Some(toml::Value::String(s)) => s.clone(),
            Some(_) => return Err(Error::config("`experiment` must be a string")),
            None => return Err(Error::config("missing `experiment`")),
        };
        let kind = ExperimentKind::parse(&name)?;
        if !user.contains_key("seed") {
            return Err(Error::config("missing `seed`"));
        }
        let defaults = Self {
            experiment: kind,
            seed: 0,
            output: PathBuf::from("runs").join(kind.name()),
            model: kind.default_model(),
            suspension: HolonomySpec::IrrationalRotations,
            params: kind.default_params(),
        };
        let mut merged = toml::Table::try_from(&defaults).map_err(|e| Error::config(e.to_string()))?;
        // tagged tables are replaced whole, parameter tables merged key by key
        for (k, v) in user {
            match (k.as_str(), v, merged.get_mut("params")) {
                ("params", toml::Value::Table(t), Some(toml::Value::Table(p))) => p.extend(t),
                (_, v, _) => {
                    merged.insert(k, v);
                }
            }
        }
        let cfg: Self = toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::config(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let bad = |what: &str| Err(Error::config(format!("{what} (experiment {})", self.experiment.name())));
        if !(p.dt > 0.0 && p.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(p.t >= 0.0 && p.t.is_finite()) {
            return bad("t must be finite and nonnegative");
        }
        if p.n == 0 || p.bins == 0 {
            return bad("n and bins must be positive");
        }
        if p.burn_in.is_some_and(|b| !(b >= 0.0)) {
            return bad("burn_in must be nonnegative");
        }
        if self.experiment == ExperimentKind::Matsumoto && p.levels.is_empty() {
            return bad("levels must list at least one sample count");
        }
        if self.experiment == ExperimentKind::Birkhoff && p.observables == 0 {
            return bad("observables must be positive");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}").parse::<toml::Table>().ok().and_then(|mut t| t.remove("v")).unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::config(format!("empty override key `{key}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::config(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
