//! Repetition harness: methods x repetitions, traces, summary, manifest.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use mkbo_core::bo::{run_bo, BoSession, SessionConfig, TraceRecord};
use mkbo_core::dataset::{normalize_unit_box, uniform_grid};
use mkbo_core::sim::{make_aux_dataset, simulated_objective};
use mkbo_core::{BoError, LabeledDataset, UnitBoxMap};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AuxSource, ExperimentConfig, MethodConfig, ObjectiveConfig, Transform};
use crate::data::load_dataset_csv;
use crate::error::Error;
use crate::strategy::{prepare_aux, BuiltKernel, KernelFactory, KernelProvenance};

/// Search space and objective, with candidates in both coordinate systems.
pub struct Problem {
    /// Candidates in the caller's units.
    pub raw: Vec<Vec<f64>>,
    /// The same candidates mapped into the unit box.
    pub unit: Vec<Vec<f64>>,
    pub map: UnitBoxMap,
    index: HashMap<Vec<u64>, usize>,
    raw_index: HashMap<Vec<u64>, usize>,
    values: Option<Vec<f64>>,
}

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

impl Problem {
    fn new(raw: Vec<Vec<f64>>, map: UnitBoxMap, values: Option<Vec<f64>>) -> Self {
        let unit: Vec<Vec<f64>> = raw.iter().map(|x| map.forward_x(x)).collect();
        let mut index = HashMap::with_capacity(unit.len());
        let mut raw_index = HashMap::with_capacity(unit.len());
        for (i, (r, u)) in raw.iter().zip(&unit).enumerate() {
            index.entry(key(u)).or_insert(i);
            raw_index.entry(key(r)).or_insert(i);
        }
        Self {
            raw,
            unit,
            map,
            index,
            raw_index,
            values,
        }
    }

    /// Tensor grid over `bounds`; the objective is the simulated one.
    pub fn from_grid(bounds: &[(f64, f64)], resolution: &[usize]) -> Self {
        Self::new(uniform_grid(bounds, resolution), UnitBoxMap::from_bounds(bounds), None)
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, Error> {
        match &cfg.objective {
            ObjectiveConfig::Simulated => {
                let g = cfg.grid.as_ref().ok_or_else(|| Error::Config("missing grid".into()))?;
                let bounds: Vec<(f64, f64)> = g.bounds.iter().map(|b| (b[0], b[1])).collect();
                Ok(Self::from_grid(&bounds, &g.resolution))
            }
            ObjectiveConfig::Table { path, transform } => {
                let table = load_dataset_csv(path)?;
                let (_, map) = normalize_unit_box(&table)?;
                let values = table
                    .ys()
                    .iter()
                    .map(|&y| transform.as_ref().map_or(y, |t: &Transform| t.apply(y)))
                    .collect();
                Ok(Self::new(table.xs().to_vec(), map, Some(values)))
            }
        }
    }

    pub fn candidate_index(&self, unit: &[f64]) -> Option<usize> {
        self.index.get(&key(unit)).copied()
    }

    /// Unit-box image of a point in the caller's units; exact for candidates.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        match self.raw_index.get(&key(x)) {
            Some(&i) => self.unit[i].clone(),
            None => self.map.forward_x(x),
        }
    }

    /// Inverse of [`Problem::to_unit`]; exact for candidates.
    pub fn to_raw(&self, unit: &[f64]) -> Vec<f64> {
        match self.candidate_index(unit) {
            Some(i) => self.raw[i].clone(),
            None => self.map.inverse_x(unit),
        }
    }

    /// Objective value at candidate `i`.
    pub fn value(&self, i: usize) -> Result<f64, BoError> {
        match &self.values {
            Some(v) => Ok(v[i]),
            None => Ok(simulated_objective(&self.raw[i])?),
        }
    }

    /// Objective at a unit-box point, which must be a candidate.
    pub fn evaluate(&self, unit: &[f64]) -> Result<f64, BoError> {
        let i = self
            .candidate_index(unit)
            .ok_or_else(|| BoError::Config(format!("{unit:?} is not a candidate")))?;
        self.value(i)
    }

    /// `count` distinct candidates drawn with a ChaCha8 stream seeded by
    /// `seed`, with their objective values.
    pub fn initial_design(&self, count: usize, seed: u64) -> Result<LabeledDataset, Error> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = count.min(self.unit.len());
        let mut rows = Vec::with_capacity(count);
        for i in sample(&mut rng, self.unit.len(), count) {
            rows.push((self.unit[i].clone(), self.value(i)?));
        }
        Ok(LabeledDataset::from_rows(rows)?)
    }
}

pub fn load_aux(cfg: &ExperimentConfig, problem: &Problem) -> Result<Option<LabeledDataset>, Error> {
    let raw = match &cfg.aux {
        None => return Ok(None),
        Some(AuxSource::Generator { count, seed }) => {
            if problem.map.x.len() != 2 {
                return Err(Error::Config("the aux generator produces 2-D data".into()));
            }
            make_aux_dataset(*count, *seed)
        }
        Some(AuxSource::Csv(path)) => load_dataset_csv(path)?,
    };
    prepare_aux(&raw, &problem.map).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub t: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repetition: Option<usize>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEntry {
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelProvenance>,
    pub completed: usize,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub ok: bool,
    pub config: ExperimentConfig,
    pub candidates: usize,
    pub methods: Vec<MethodEntry>,
}

pub struct MethodRun {
    pub method: MethodConfig,
    pub kernel: Option<BuiltKernel>,
    /// One entry per repetition; traces are in the caller's units.
    pub reps: Vec<Result<Vec<TraceRecord>, String>>,
}

impl MethodRun {
    pub fn label(&self) -> String {
        self.method.label()
    }

    /// Best-so-far at the last iteration of each successful repetition.
    pub fn final_bests(&self) -> Vec<f64> {
        self.reps
            .iter()
            .filter_map(|r| r.as_ref().ok()?.last().map(|t| t.best))
            .collect()
    }
}

pub struct SuiteResult {
    pub runs: Vec<MethodRun>,
    pub summary: Vec<SummaryRow>,
    pub manifest: Manifest,
}

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(run: &MethodRun, iterations: usize) -> Vec<SummaryRow> {
    let traces: Vec<&Vec<TraceRecord>> = run.reps.iter().filter_map(|r| r.as_ref().ok()).collect();
    if traces.is_empty() {
        return Vec::new();
    }
    (1..=iterations)
        .map(|t| {
            let mut v: Vec<f64> = traces.iter().map(|tr| tr[t - 1].best).collect();
            v.sort_by(f64::total_cmp);
            SummaryRow {
                method: run.label(),
                t,
                median: quantile(&v, 0.5),
                q25: quantile(&v, 0.25),
                q75: quantile(&v, 0.75),
            }
        })
        .collect()
}

fn run_rep(
    cfg: &ExperimentConfig,
    problem: &Problem,
    method: &MethodConfig,
    kernel: &BuiltKernel,
    noise_grid: &[f64],
    rep: usize,
) -> Result<Vec<TraceRecord>, Error> {
    let seed = cfg.seed.wrapping_add(rep as u64);
    let initial = problem.initial_design(cfg.initial_points, seed)?;
    let session_cfg = SessionConfig {
        candidates: problem.unit.clone(),
        kernel: kernel.spec.clone(),
        acquisition: method.acquisition_spec(),
        goal: cfg.goal,
        noise_grid: noise_grid.to_vec(),
        scale_grid: kernel.scale_grid.clone(),
    };
    let mut session = BoSession::with_initial(session_cfg, &initial)?;
    let mut trace = run_bo(
        &mut session,
        |u| problem.evaluate(u),
        cfg.iterations,
        cfg.noise_sd,
        seed,
    )?;
    for r in &mut trace {
        r.x = problem.to_raw(&r.x);
    }
    Ok(trace)
}

/// Build every method's kernel, run all repetitions in parallel and
/// aggregate. Failures are recorded in the manifest, not returned.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<SuiteResult, Error> {
    cfg.validate()?;
    let problem = Problem::from_config(cfg)?;
    let aux = load_aux(cfg, &problem)?;
    let factory = KernelFactory::new(aux, cfg.hypers.clone(), cfg.pretrain.clone(), cfg.mixture.clone());

    let mut unique = Vec::new();
    for m in &cfg.methods {
        if !unique.contains(&m.strategy) {
            unique.push(m.strategy);
        }
    }
    let built: Vec<_> = unique
        .par_iter()
        .map(|&s| (s, factory.build(s, &problem.unit).map_err(|e| e.to_string())))
        .collect();
    let kernel_for = |m: &MethodConfig| {
        built
            .iter()
            .find(|(s, _)| *s == m.strategy)
            .map(|(_, b)| b)
            .expect("built")
    };

    let jobs: Vec<(usize, usize)> = (0..cfg.methods.len())
        .flat_map(|m| (0..cfg.repetitions).map(move |r| (m, r)))
        .collect();
    let results: Vec<Result<Vec<TraceRecord>, String>> = jobs
        .par_iter()
        .map(|&(m, rep)| {
            let method = &cfg.methods[m];
            match kernel_for(method) {
                Ok(k) => run_rep(cfg, &problem, method, k, &cfg.hypers.noise_grid, rep).map_err(|e| e.to_string()),
                Err(e) => Err(e.clone()),
            }
        })
        .collect();

    let mut results = results.into_iter();
    let mut runs = Vec::with_capacity(cfg.methods.len());
    for method in &cfg.methods {
        let reps: Vec<_> = results.by_ref().take(cfg.repetitions).collect();
        runs.push(MethodRun {
            method: *method,
            kernel: kernel_for(method).as_ref().ok().cloned(),
            reps,
        });
    }

    let summary = runs.iter().flat_map(|r| summarize(r, cfg.iterations)).collect();
    let methods: Vec<MethodEntry> = runs
        .iter()
        .map(|run| {
            let build_error = kernel_for(&run.method).as_ref().err();
            let failures = match build_error {
                Some(e) => vec![Failure {
                    repetition: None,
                    error: e.clone(),
                }],
                None => run
                    .reps
                    .iter()
                    .enumerate()
                    .filter_map(|(i, r)| {
                        r.as_ref().err().map(|e| Failure {
                            repetition: Some(i),
                            error: e.clone(),
                        })
                    })
                    .collect(),
            };
            MethodEntry {
                method: run.label(),
                kernel: run.kernel.as_ref().map(|k| k.provenance.clone()),
                completed: run.reps.iter().filter(|r| r.is_ok()).count(),
                failures,
            }
        })
        .collect();
    let manifest = Manifest {
        ok: methods.iter().all(|m| m.failures.is_empty()),
        config: cfg.clone(),
        candidates: problem.unit.len(),
        methods,
    };
    Ok(SuiteResult {
        runs,
        summary,
        manifest,
    })
}

pub fn trace_jsonl(trace: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in trace {
        out.push_str(&serde_json::to_string(r).expect("trace rows serialize"));
        out.push('\n');
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "t", "median", "q25", "q75"])
        .expect("in-memory write");
    for r in rows {
        w.serialize((&r.method, r.t, r.median, r.q25, r.q75))
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Error> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents).map_err(|e| Error::io(path, e))
}

/// `traces/{method}/rep{r}.jsonl`, `summary.csv`, `manifest.json`.
pub fn write_outputs(result: &SuiteResult, dir: &Path) -> Result<(), Error> {
    for run in &result.runs {
        let d = dir.join("traces").join(run.label());
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        for (r, trace) in run.reps.iter().enumerate() {
            if let Ok(trace) = trace {
                write_file(&d.join(format!("rep{r}.jsonl")), trace_jsonl(trace).as_bytes())?;
            }
        }
    }
    write_file(&dir.join("summary.csv"), summary_csv(&result.summary).as_bytes())?;
    let mut manifest = serde_json::to_vec_pretty(&result.manifest)?;
    manifest.push(b'\n');
    write_file(&dir.join("manifest.json"), &manifest)
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>, Error> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Config(format!("{}: {e}", path.display()))))
        .collect()
}
