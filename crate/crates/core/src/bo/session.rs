//! Ask/tell Bayesian optimisation over a finite candidate set.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::acquisition::{acquisition_value, beta_schedule, AcquisitionKind, AcquisitionSpec};
use super::cache::{KernelCache, KernelView};
use crate::dataset::LabeledDataset;
use crate::error::{BoError, GpError};
use crate::gp::{select_hypers_with, GpSolve};
use crate::kernel::KernelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Goal {
    #[default]
    Maximize,
    Minimize,
}

impl Goal {
    fn sign(self) -> f64 {
        match self {
            Goal::Maximize => 1.0,
            Goal::Minimize => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub candidates: Vec<Vec<f64>>,
    pub kernel: KernelSpec,
    pub acquisition: AcquisitionSpec,
    pub goal: Goal,
    pub noise_grid: Vec<f64>,
    /// Scale grid for marginal-likelihood selection; `None` keeps the
    /// kernel's own scale.
    pub scale_grid: Option<Vec<f64>>,
}

/// A scored candidate awaiting its observation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Suggestion {
    pub t: usize,
    pub index: usize,
    pub x: Vec<f64>,
    pub acq: f64,
    /// Posterior mean and standard deviation in the caller's sign.
    pub mu: f64,
    pub sigma_post: f64,
    pub nu2: f64,
    pub sigma: Option<f64>,
    pub jitter_escalations: u32,
}

/// One line of the optimisation trace.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRecord {
    pub t: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub best: f64,
    pub nu2: f64,
    pub sigma: Option<f64>,
    pub acq: f64,
    pub jitter_escalations: u32,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub warning: Option<String>,
}

struct Fitted {
    nu2: f64,
    sigma: Option<f64>,
    escalations: u32,
    solve: Option<GpSolve>,
}

struct Scorer {
    /// `None` scores by `mu + sd` (empty history).
    kind: Option<AcquisitionKind>,
    y_best: f64,
    beta: f64,
}

impl Scorer {
    fn score(&self, fitted: &Fitted, k: &[f64], kxx: f64) -> Result<(f64, f64, f64), BoError> {
        let (mu, sd) = match &fitted.solve {
            Some(s) => {
                let p = s.posterior(k, kxx);
                (p.mean, p.std_dev())
            }
            None => (0.0, libm::sqrt(kxx.max(0.0))),
        };
        let acq = match self.kind {
            None => mu + sd,
            Some(kind) => acquisition_value(kind, mu, sd, self.y_best, self.beta)?,
        };
        Ok((acq, mu, sd))
    }
}

pub struct BoSession {
    config: SessionConfig,
    /// Observations in maximisation sign.
    history: LabeledDataset,
    indices: Vec<Option<usize>>,
    initial: usize,
    trace: Vec<TraceRecord>,
    pending: Option<Suggestion>,
    cache: KernelCache,
}

impl BoSession {
    pub fn new(config: SessionConfig) -> Result<Self, BoError> {
        if config.candidates.is_empty() {
            return Err(BoError::NoCandidates);
        }
        if config.noise_grid.is_empty() {
            return Err(BoError::Gp(GpError::EmptyGrid("noise")));
        }
        if let Some(g) = &config.scale_grid {
            if g.is_empty() {
                return Err(BoError::Gp(GpError::EmptyGrid("sigma")));
            }
            config.kernel.with_scale(g[0])?;
        }
        AcquisitionSpec::new(config.acquisition.kind, config.acquisition.delta)?;
        let cache = KernelCache::new(config.kernel.clone(), config.candidates.clone());
        Ok(Self {
            config,
            history: LabeledDataset::default(),
            indices: Vec::new(),
            initial: 0,
            trace: Vec::new(),
            pending: None,
            cache,
        })
    }

    /// Session seeded with initial observations that are not traced.
    pub fn with_initial(config: SessionConfig, initial: &LabeledDataset) -> Result<Self, BoError> {
        let mut s = Self::new(config)?;
        for (x, y) in initial.rows() {
            s.record(x, y)?;
        }
        s.initial = s.history.len();
        Ok(s)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn candidates(&self) -> &[Vec<f64>] {
        &self.config.candidates
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn pending(&self) -> Option<&Suggestion> {
        self.pending.as_ref()
    }

    pub fn initial_len(&self) -> usize {
        self.initial
    }

    /// History in the caller's sign.
    pub fn history(&self) -> LabeledDataset {
        let s = self.config.goal.sign();
        self.history.map_targets(|y| s * y)
    }

    /// Best observation so far in the caller's sign.
    pub fn best(&self) -> Option<f64> {
        let m = self.history.ys().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (!self.history.is_empty()).then(|| self.config.goal.sign() * m)
    }

    fn candidate_index(&self, x: &[f64]) -> Option<usize> {
        self.config.candidates.iter().position(|c| c.as_slice() == x)
    }

    fn record(&mut self, x: &[f64], y: f64) -> Result<(), BoError> {
        if !y.is_finite() {
            return Err(BoError::NonFiniteObservation(y));
        }
        let idx = self.candidate_index(x);
        self.history.push(x.to_vec(), self.config.goal.sign() * y)?;
        self.indices.push(idx);
        Ok(())
    }

    fn fit(&mut self) -> Result<Fitted, BoError> {
        let noise = &self.config.noise_grid;
        let scales = self.config.scale_grid.as_deref();
        if self.history.is_empty() {
            return Ok(Fitted {
                nu2: noise[0],
                sigma: scales.map(|s| s[0]).or(self.config.kernel.scale()),
                escalations: 0,
                solve: None,
            });
        }
        let ys = self.history.ys().to_vec();
        let xs = self.history.xs();
        let idx = &self.indices;
        let cache = &mut self.cache;
        let (sel, solve) = select_hypers_with(&ys, noise, scales, |s| Ok(cache.view(s, xs, idx)?.gram()))?;
        Ok(Fitted {
            nu2: sel.noise,
            sigma: sel.sigma.or(self.config.kernel.scale()),
            escalations: sel.escalations,
            solve: Some(solve),
        })
    }

    fn view_for(&mut self, fitted: &Fitted) -> Result<KernelView<'_>, BoError> {
        let scale = self.config.scale_grid.as_ref().and(fitted.sigma);
        Ok(self.cache.view(scale, self.history.xs(), &self.indices)?)
    }

    fn scorer(&self, t: usize) -> Scorer {
        let empty = self.history.is_empty();
        Scorer {
            kind: (!empty).then_some(self.config.acquisition.kind),
            y_best: self.history.ys().iter().copied().fold(f64::NEG_INFINITY, f64::max),
            beta: match self.config.acquisition.kind {
                AcquisitionKind::Ucb => beta_schedule(t, self.config.candidates.len(), self.config.acquisition.delta),
                _ => 0.0,
            },
        }
    }

    /// Next point to evaluate. Repeated calls before `tell` return the same
    /// suggestion.
    pub fn suggest(&mut self) -> Result<Suggestion, BoError> {
        if let Some(p) = &self.pending {
            return Ok(p.clone());
        }
        let t = self.trace.len() + 1;
        let fitted = self.fit()?;
        let scorer = self.scorer(t);
        let n = self.config.candidates.len();
        let view = self.view_for(&fitted)?;
        let mut k = Vec::new();
        let mut best: Option<(usize, f64, f64, f64)> = None;
        for c in 0..n {
            let kxx = view.candidate(c, &mut k);
            let (acq, mu, sd) = scorer.score(&fitted, &k, kxx)?;
            if best.is_none_or(|(_, b, _, _)| acq > b) {
                best = Some((c, acq, mu, sd));
            }
        }
        let (index, acq, mu, sd) = best.expect("candidates are non-empty");
        let s = Suggestion {
            t,
            index,
            x: self.config.candidates[index].clone(),
            acq,
            mu: self.config.goal.sign() * mu,
            sigma_post: sd,
            nu2: fitted.nu2,
            sigma: fitted.sigma,
            jitter_escalations: fitted.escalations,
        };
        self.pending = Some(s.clone());
        Ok(s)
    }

    /// Record an observation and append a trace row.
    pub fn tell(&mut self, x: &[f64], y: f64) -> Result<&TraceRecord, BoError> {
        if !y.is_finite() {
            return Err(BoError::NonFiniteObservation(y));
        }
        if let Some(n) = self.history.dimension() {
            if x.len() != n {
                return Err(crate::error::DatasetError::DimensionMismatch {
                    row: self.history.len(),
                    expected: n,
                    found: x.len(),
                }
                .into());
            }
        }
        let t = self.trace.len() + 1;
        let mut warnings: Vec<&str> = Vec::new();
        if self.candidate_index(x).is_none() {
            log::warn!("observation at {x:?} is not a candidate");
            warnings.push("off-grid observation");
        }
        let (acq, nu2, sigma, esc) = match self.pending.take() {
            Some(p) if p.x.as_slice() == x => (p.acq, p.nu2, p.sigma, p.jitter_escalations),
            pending => {
                if pending.is_some() {
                    warnings.push("observation differs from the pending suggestion");
                }
                let fitted = self.fit()?;
                let scorer = self.scorer(t);
                let (k, kxx) = self.view_for(&fitted)?.point(x)?;
                let (acq, _, _) = scorer.score(&fitted, &k, kxx)?;
                (acq, fitted.nu2, fitted.sigma, fitted.escalations)
            }
        };
        self.record(x, y)?;
        let warning = (!warnings.is_empty()).then(|| warnings.join("; "));
        self.trace.push(TraceRecord {
            t,
            x: x.to_vec(),
            y,
            best: self.best().expect("just recorded"),
            nu2,
            sigma,
            acq,
            jitter_escalations: esc,
            warning,
        });
        Ok(self.trace.last().expect("just pushed"))
    }
}

/// Run `iterations` suggest/evaluate/tell rounds. Observations are
/// `f(x) + N(0, noise_sd^2)` with noise drawn from a ChaCha8 stream
/// seeded by `seed`.
pub fn run_bo<F>(
    session: &mut BoSession,
    mut objective: F,
    iterations: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<Vec<TraceRecord>, BoError>
where
    F: FnMut(&[f64]) -> Result<f64, BoError>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if noise_sd > 0.0 {
        Some(Normal::new(0.0, noise_sd).map_err(|_| BoError::Config("invalid noise".into()))?)
    } else {
        None
    };
    for _ in 0..iterations {
        let s = session.suggest()?;
        let mut y = objective(&s.x)?;
        if let Some(n) = &noise {
            y += n.sample(&mut rng);
        }
        session.tell(&s.x, y)?;
    }
    Ok(session.trace().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn config(candidates: Vec<Vec<f64>>, acquisition: AcquisitionSpec) -> SessionConfig {
        SessionConfig {
            candidates,
            kernel: KernelSpec::se(0.1).unwrap(),
            acquisition,
            goal: Goal::Maximize,
            noise_grid: vec![1e-6],
            scale_grid: None,
        }
    }

    #[test]
    fn single_candidate() {
        let mut s = BoSession::new(config(vec![vec![0.3]], AcquisitionSpec::ucb())).unwrap();
        let trace = run_bo(&mut s, |x| Ok(x[0] * 2.0), 3, 0.0, 1).unwrap();
        assert_eq!(trace.len(), 3);
        assert!(trace.iter().all(|r| r.x == vec![0.3]));
        assert_eq!(trace.iter().map(|r| r.t).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn zero_iterations() {
        let mut s = BoSession::new(config(vec![vec![0.3]], AcquisitionSpec::ucb())).unwrap();
        assert!(run_bo(&mut s, |_| Ok(0.0), 0, 0.0, 1).unwrap().is_empty());
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let mut s = BoSession::new(config(vec![vec![0.0], vec![1.0]], AcquisitionSpec::ucb())).unwrap();
        assert_eq!(s.suggest().unwrap().index, 0);
    }

    #[test]
    fn scripted_three_candidates() {
        let cfg = config(vec![vec![0.0], vec![0.5], vec![1.0]], AcquisitionSpec::ucb());
        let init = LabeledDataset::new(vec![vec![0.0], vec![1.0]], vec![0.0, 1.0]).unwrap();
        let mut s = BoSession::with_initial(cfg, &init).unwrap();
        let sug = s.suggest().unwrap();
        assert_eq!(sug.x, vec![0.5]);
        // direct check of the UCB scores with beta = 4
        let k = |a: f64, b: f64| libm::exp(-(a - b) * (a - b) / 0.2);
        let nu = 1e-6 + 1e-8;
        let m = [[1.0 + nu, k(0.0, 1.0)], [k(0.0, 1.0), 1.0 + nu]];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
        let mut scores = vec![];
        for x in [0.0, 0.5, 1.0] {
            let kv = [k(x, 0.0), k(x, 1.0)];
            let mu = (0..2)
                .map(|i| (0..2).map(|j| kv[i] * inv[i][j] * [0.0, 1.0][j]).sum::<f64>())
                .sum::<f64>();
            let var = 1.0
                - (0..2)
                    .map(|i| (0..2).map(|j| kv[i] * inv[i][j] * kv[j]).sum::<f64>())
                    .sum::<f64>();
            scores.push(mu + 2.0 * var.max(0.0).sqrt());
        }
        assert!(scores[1] > scores[0] && scores[1] > scores[2]);
    }

    #[test]
    fn suggest_is_idempotent_and_tell_grows_history() {
        let cands: Vec<Vec<f64>> = (0..11).map(|i| vec![i as f64 / 10.0]).collect();
        let mut s = BoSession::new(config(cands, AcquisitionSpec::ei())).unwrap();
        let a = s.suggest().unwrap();
        let b = s.suggest().unwrap();
        assert_eq!(a, b);
        s.tell(&a.x, 0.4).unwrap();
        assert_eq!(s.history().len(), 1);
        assert!(s.pending().is_none());
    }

    #[test]
    fn duplicate_observations_and_monotone_best() {
        let cands: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 / 4.0]).collect();
        let mut s = BoSession::new(config(cands, AcquisitionSpec::pi())).unwrap();
        for y in [0.2, 0.1, 0.5, 0.3] {
            s.tell(&[0.25], y).unwrap();
        }
        let bests: Vec<f64> = s.trace().iter().map(|r| r.best).collect();
        assert_eq!(bests, vec![0.2, 0.2, 0.5, 0.5]);
        s.suggest().unwrap();
    }

    #[test]
    fn rejects_bad_observations_and_warns_off_grid() {
        let mut s = BoSession::new(config(vec![vec![0.0], vec![1.0]], AcquisitionSpec::ucb())).unwrap();
        assert!(matches!(
            s.tell(&[0.0], f64::NAN),
            Err(BoError::NonFiniteObservation(_))
        ));
        let r = s.tell(&[0.4], 1.0).unwrap();
        assert!(r.warning.as_deref().unwrap().contains("off-grid"));
        assert_eq!(s.history().len(), 1);
    }

    #[test]
    fn minimisation_flips_sign() {
        let cands: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 / 4.0]).collect();
        let mut cfg = config(cands, AcquisitionSpec::ucb());
        cfg.goal = Goal::Minimize;
        let mut s = BoSession::new(cfg).unwrap();
        s.tell(&[0.0], 3.0).unwrap();
        s.tell(&[1.0], -2.0).unwrap();
        assert_eq!(s.best(), Some(-2.0));
        assert_eq!(s.history().ys(), &[3.0, -2.0]);
        let sug = s.suggest().unwrap();
        assert!(sug.mu.is_finite());
    }

    #[test]
    fn empty_candidates_rejected() {
        assert!(matches!(
            BoSession::new(config(vec![], AcquisitionSpec::ucb())),
            Err(BoError::NoCandidates)
        ));
    }

    #[test]
    fn identical_runs_are_identical() {
        let cands = crate::dataset::uniform_grid(&[(0.0, 1.0), (0.0, 1.0)], &[7, 7]);
        let run = || {
            let mut cfg = config(cands.clone(), AcquisitionSpec::ucb());
            cfg.scale_grid = Some(vec![0.05, 0.2]);
            cfg.noise_grid = vec![1e-6, 1e-3];
            let init = LabeledDataset::new(vec![cands[3].clone()], vec![0.1]).unwrap();
            let mut s = BoSession::with_initial(cfg, &init).unwrap();
            run_bo(&mut s, |x| Ok(libm::sin(6.0 * x[0]) * x[1]), 6, 0.01, 42).unwrap()
        };
        assert_eq!(run(), run());
    }
}
