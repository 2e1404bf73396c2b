//! Experiment configuration (JSON).

use std::path::{Path, PathBuf};

use mkbo_core::bo::{AcquisitionKind, AcquisitionSpec, Goal};
use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    PlainSe,
    Mixture,
    Reweighted,
    ReweightedComposite,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::PlainSe => "plain-se",
            Strategy::Mixture => "mixture",
            Strategy::Reweighted => "reweighted",
            Strategy::ReweightedComposite => "reweighted-composite",
        }
    }

    pub fn needs_aux(self) -> bool {
        !matches!(self, Strategy::PlainSe)
    }

    pub fn all() -> [Strategy; 4] {
        [
            Strategy::PlainSe,
            Strategy::Mixture,
            Strategy::Reweighted,
            Strategy::ReweightedComposite,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub strategy: Strategy,
    pub acquisition: AcquisitionKind,
}

impl MethodConfig {
    /// Directory and summary label, e.g. `reweighted+UCB`.
    pub fn label(&self) -> String {
        format!("{}+{}", self.strategy.name(), self.acquisition.name())
    }

    pub fn acquisition_spec(&self) -> AcquisitionSpec {
        AcquisitionSpec::new(self.acquisition, mkbo_core::bo::acquisition::DEFAULT_DELTA)
            .expect("default delta is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Transform {
    /// `(y - target)^2`
    SquaredDistanceToTarget { target: f64 },
}

impl Transform {
    pub fn apply(&self, y: f64) -> f64 {
        match self {
            Transform::SquaredDistanceToTarget { target } => (y - target) * (y - target),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObjectiveConfig {
    /// The ring-shaped benchmark on `[-1, 1]^2`.
    Simulated,
    /// Lookup table; its rows are the candidates.
    Table {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        transform: Option<Transform>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub bounds: Vec<[f64; 2]>,
    pub resolution: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuxSource {
    Generator { count: usize, seed: u64 },
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainGrids {
    pub c_grid: Vec<f64>,
    pub epsilon: f64,
    pub normalize: bool,
}

impl Default for PretrainGrids {
    fn default() -> Self {
        Self {
            c_grid: vec![0.1, 1.0, 10.0, 100.0, 1000.0],
            epsilon: 0.01,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixtureGrids {
    pub levels: Vec<f64>,
    pub noise_grid: Vec<f64>,
}

impl Default for MixtureGrids {
    fn default() -> Self {
        Self {
            levels: vec![0.0, 0.5, 1.0],
            noise_grid: vec![1e-6, 1e-4, 1e-2],
        }
    }
}

/// Grids shared by every strategy: `sigma_grid` drives SVM selection,
/// GP selection for plain SE, and the mixture length scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperGrids {
    pub sigma_grid: Vec<f64>,
    pub noise_grid: Vec<f64>,
}

impl Default for HyperGrids {
    fn default() -> Self {
        Self {
            sigma_grid: logspace(0.05, 2.0, 8),
            noise_grid: logspace(1e-6, 1e-1, 6),
        }
    }
}

fn default_initial() -> usize {
    3
}

fn default_goal() -> Goal {
    Goal::Minimize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objective: ObjectiveConfig,
    /// Required for the simulated objective; tables supply their own rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    pub methods: Vec<MethodConfig>,
    pub iterations: usize,
    pub repetitions: usize,
    pub seed: u64,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default = "default_goal")]
    pub goal: Goal,
    #[serde(default = "default_initial")]
    pub initial_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux: Option<AuxSource>,
    #[serde(default)]
    pub hypers: HyperGrids,
    #[serde(default)]
    pub pretrain: PretrainGrids,
    #[serde(default)]
    pub mixture: MixtureGrids,
}

impl ExperimentConfig {
    /// The ring benchmark: 41 x 41 grid, 40 iterations, 10 repetitions,
    /// every strategy with EI and UCB.
    pub fn simulated() -> Self {
        let methods = Strategy::all()
            .into_iter()
            .flat_map(|s| {
                [AcquisitionKind::Ei, AcquisitionKind::Ucb].map(|a| MethodConfig {
                    strategy: s,
                    acquisition: a,
                })
            })
            .collect();
        Self {
            objective: ObjectiveConfig::Simulated,
            grid: Some(GridConfig {
                bounds: vec![[-1.0, 1.0], [-1.0, 1.0]],
                resolution: vec![41, 41],
            }),
            methods,
            iterations: 40,
            repetitions: 10,
            seed: 7,
            noise_sd: 0.0,
            goal: Goal::Minimize,
            initial_points: 3,
            aux: Some(AuxSource::Generator {
                count: mkbo_core::sim::AUX_COUNT,
                seed: 1000,
            }),
            hypers: HyperGrids::default(),
            pretrain: PretrainGrids::default(),
            mixture: MixtureGrids::default(),
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self =
            serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative CSV paths are taken relative to the config file.
    fn resolve_paths(&mut self, base: &Path) {
        if let ObjectiveConfig::Table { path, .. } = &mut self.objective {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if let Some(AuxSource::Csv(path)) = &mut self.aux {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Config(m));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd must be finite and non-negative".into());
        }
        match (&self.objective, &self.grid) {
            (ObjectiveConfig::Simulated, None) => return bad("the simulated objective needs a grid".into()),
            (ObjectiveConfig::Table { .. }, Some(_)) => {
                return bad("table objectives take their candidates from the table; drop `grid`".into())
            }
            _ => {}
        }
        if let Some(g) = &self.grid {
            validate_grid(&g.bounds, &g.resolution).map_err(|(_, m)| Error::Config(m))?;
            if matches!(self.objective, ObjectiveConfig::Simulated)
                && (g.bounds.len() != 2 || g.bounds.iter().flatten().any(|v| v.abs() > 1.0))
            {
                return bad("the simulated objective is defined on [-1, 1]^2".into());
            }
        }
        if self.aux.is_none() {
            if let Some(m) = self.methods.iter().find(|m| m.strategy.needs_aux()) {
                return bad(format!("strategy {} needs an aux dataset", m.strategy.name()));
            }
        }
        for (name, g, floor_ok) in [
            ("hypers.sigma_grid", &self.hypers.sigma_grid, false),
            ("hypers.noise_grid", &self.hypers.noise_grid, true),
            ("pretrain.c_grid", &self.pretrain.c_grid, false),
            ("mixture.noise_grid", &self.mixture.noise_grid, true),
        ] {
            let ok = |v: f64| v.is_finite() && (v > 0.0 || (floor_ok && v == 0.0));
            if g.is_empty() || !g.iter().all(|v| ok(*v)) {
                return bad(format!("{name} must be a non-empty list of positive values"));
            }
        }
        if !(self.pretrain.epsilon >= 0.0 && self.pretrain.epsilon.is_finite()) {
            return bad("pretrain.epsilon must be non-negative".into());
        }
        if self.mixture.levels.is_empty() || self.mixture.levels.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return bad("mixture.levels must be non-negative".into());
        }
        Ok(())
    }
}

/// Check bounds and resolution; on failure returns the offending field path
/// and a message.
pub fn validate_grid(bounds: &[[f64; 2]], resolution: &[usize]) -> Result<(), (String, String)> {
    if bounds.is_empty() {
        return Err(("bounds".into(), "at least one dimension is required".into()));
    }
    for (i, [lo, hi]) in bounds.iter().enumerate() {
        if !lo.is_finite() || !hi.is_finite() {
            return Err((format!("bounds[{i}]"), "bounds must be finite".into()));
        }
        if lo > hi {
            return Err((format!("bounds[{i}]"), format!("min {lo} exceeds max {hi}")));
        }
    }
    if resolution.len() != bounds.len() {
        return Err((
            "resolution".into(),
            format!("expected {} entries, found {}", bounds.len(), resolution.len()),
        ));
    }
    for (i, r) in resolution.iter().enumerate() {
        if *r == 0 {
            return Err((format!("resolution[{i}]"), "resolution must be at least 1".into()));
        }
    }
    let total = resolution.iter().try_fold(1usize, |a, r| a.checked_mul(*r));
    if total.is_none_or(|t| t > 1_000_000) {
        return Err(("resolution".into(), "grid exceeds 1e6 candidates".into()));
    }
    Ok(())
}

/// `n` points spaced evenly in log scale from `a` to `b` inclusive.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| match i {
            0 => a,
            i if i == n - 1 => b,
            i => (la + (lb - la) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}
