//! Session state machine. Every command either fails without touching the
//! state or mutates it and yields the event that replays the mutation.

use std::collections::HashMap;
use std::path::Path;

use mkbo_core::bo::{AcquisitionSpec, BoSession, Goal, SessionConfig};
use mkbo_core::sim::make_aux_dataset;
use mkbo_core::{BoError, KernelSpec, LabeledDataset};

use super::api::{
    ApiError, AuxRequest, CloseSummary, CreateRequest, ModelAt, Observation, ObservationResponse, Status,
    SuggestionResponse,
};
use super::store::Event;
use crate::config::validate_grid;
use crate::data::load_dataset_csv;
use crate::strategy::{prepare_aux, KernelFactory, KernelProvenance};
use crate::suite::Problem;

pub struct SessionRecord {
    pub id: String,
    pub created_at_ms: u64,
    pub request: CreateRequest,
    pub provenance: KernelProvenance,
    pub status: Status,
    problem: Problem,
    session: BoSession,
    /// Inputs of every observation in the caller's units, initial ones first.
    raw_xs: Vec<Vec<f64>>,
    pending: Option<SuggestionResponse>,
    idempotency: HashMap<String, (Observation, ObservationResponse)>,
    summary: Option<CloseSummary>,
}

fn check_grid(field: &str, values: &[f64], zero_ok: bool) -> Result<(), ApiError> {
    let ok = |v: f64| v.is_finite() && (v > 0.0 || (zero_ok && v == 0.0));
    if values.is_empty() || !values.iter().all(|v| ok(*v)) {
        return Err(ApiError::invalid(field, "must be a non-empty list of positive numbers"));
    }
    Ok(())
}

fn check_point(field: &str, x: &[f64], dimension: usize) -> Result<(), ApiError> {
    if x.len() != dimension {
        return Err(ApiError::invalid(
            field,
            format!("expected {dimension} values, found {}", x.len()),
        ));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(ApiError::invalid(field, "values must be finite"));
    }
    Ok(())
}

fn validate(r: &CreateRequest) -> Result<(), ApiError> {
    if r.dimension == 0 {
        return Err(ApiError::invalid("dimension", "must be at least 1"));
    }
    if r.bounds.len() != r.dimension {
        return Err(ApiError::invalid(
            "bounds",
            format!("expected {} entries, found {}", r.dimension, r.bounds.len()),
        ));
    }
    validate_grid(&r.bounds, &r.resolution).map_err(|(f, m)| ApiError::invalid(f, m))?;
    if !(r.delta > 0.0 && r.delta < 1.0) {
        return Err(ApiError::invalid("delta", "must lie in (0, 1)"));
    }
    check_grid("hypers.sigma_grid", &r.hypers.sigma_grid, false)?;
    check_grid("hypers.noise_grid", &r.hypers.noise_grid, true)?;
    check_grid("pretrain.c_grid", &r.pretrain.c_grid, false)?;
    check_grid("mixture.noise_grid", &r.mixture.noise_grid, true)?;
    if !(r.pretrain.epsilon >= 0.0 && r.pretrain.epsilon.is_finite()) {
        return Err(ApiError::invalid("pretrain.epsilon", "must be non-negative"));
    }
    if r.mixture.levels.is_empty() || !r.mixture.levels.iter().all(|v| *v >= 0.0 && v.is_finite()) {
        return Err(ApiError::invalid("mixture.levels", "must be non-negative numbers"));
    }
    for (i, o) in r.initial.iter().enumerate() {
        check_point(&format!("initial[{i}].x"), &o.x, r.dimension)?;
        if !o.y.is_finite() {
            return Err(ApiError::invalid(format!("initial[{i}].y"), "must be finite"));
        }
    }
    match (&r.aux, r.strategy.needs_aux()) {
        (None, true) => Err(ApiError::invalid(
            "aux",
            format!("strategy {} needs an aux dataset", r.strategy.name()),
        )),
        (Some(AuxRequest::Generator { count, .. }), _) if r.dimension != 2 || *count < 3 => Err(ApiError::invalid(
            "aux.generator",
            "the generator produces at least 3 rows of 2-D data",
        )),
        (Some(AuxRequest::Inline { x, y }), _) if x.len() != y.len() => {
            Err(ApiError::invalid("aux.inline", "x and y differ in length"))
        }
        _ => Ok(()),
    }
}

fn bounds(r: &CreateRequest) -> Vec<(f64, f64)> {
    r.bounds.iter().map(|b| (b[0], b[1])).collect()
}

fn load_aux(r: &CreateRequest, datasets: &Path) -> Result<Option<LabeledDataset>, ApiError> {
    Ok(Some(match &r.aux {
        None => return Ok(None),
        Some(AuxRequest::Generator { count, seed }) => make_aux_dataset(*count, *seed),
        Some(AuxRequest::Inline { x, y }) => {
            LabeledDataset::new(x.clone(), y.clone()).map_err(|e| ApiError::invalid("aux.inline", e.to_string()))?
        }
        Some(AuxRequest::Upload(id)) => {
            if !super::store::valid_id(id) {
                return Err(ApiError::invalid("aux.upload", "unknown dataset id"));
            }
            let path = datasets.join(format!("{id}.csv"));
            if !path.exists() {
                return Err(ApiError::invalid("aux.upload", "unknown dataset id"));
            }
            load_dataset_csv(&path).map_err(|e| ApiError::invalid("aux.upload", e.to_string()))?
        }
    }))
}

fn model_error(e: BoError) -> ApiError {
    match e {
        BoError::NonFiniteObservation(_) => ApiError::invalid("y", e.to_string()),
        other => ApiError::unprocessable("model-failure", other.to_string()),
    }
}

impl SessionRecord {
    fn build(
        id: String,
        created_at_ms: u64,
        request: CreateRequest,
        kernel: KernelSpec,
        scale_grid: Option<Vec<f64>>,
        provenance: KernelProvenance,
    ) -> Result<Self, ApiError> {
        let problem = Problem::from_grid(&bounds(&request), &request.resolution);
        let initial = LabeledDataset::from_rows(request.initial.iter().map(|o| (problem.to_unit(&o.x), o.y)))
            .map_err(|e| ApiError::invalid("initial", e.to_string()))?;
        let config = SessionConfig {
            candidates: problem.unit.clone(),
            kernel,
            acquisition: AcquisitionSpec::new(request.acquisition, request.delta)
                .map_err(|e| ApiError::invalid("delta", e.to_string()))?,
            goal: request.goal,
            noise_grid: request.hypers.noise_grid.clone(),
            scale_grid,
        };
        let session = BoSession::with_initial(config, &initial).map_err(model_error)?;
        Ok(Self {
            id,
            created_at_ms,
            raw_xs: request.initial.iter().map(|o| o.x.clone()).collect(),
            request,
            provenance,
            status: Status::ReadyToSuggest,
            problem,
            session,
            pending: None,
            idempotency: HashMap::new(),
            summary: None,
        })
    }

    /// Validate, pre-train if asked, and build a fresh session.
    pub fn create(
        id: String,
        created_at_ms: u64,
        request: CreateRequest,
        datasets: &Path,
    ) -> Result<(Self, Event), ApiError> {
        validate(&request)?;
        let problem = Problem::from_grid(&bounds(&request), &request.resolution);
        let aux = match load_aux(&request, datasets)? {
            Some(raw) => Some(prepare_aux(&raw, &problem.map).map_err(|e| ApiError::invalid("aux", e.to_string()))?),
            None => None,
        };
        let factory = KernelFactory::new(
            aux,
            request.hypers.clone(),
            request.pretrain.clone(),
            request.mixture.clone(),
        );
        let built = factory
            .build(request.strategy, &problem.unit)
            .map_err(|e| ApiError::unprocessable("pretrain-failed", e.to_string()))?;
        let event = Event::Created {
            id: id.clone(),
            created_at_ms,
            request: request.clone(),
            kernel: built.spec.clone(),
            scale_grid: built.scale_grid.clone(),
            provenance: built.provenance.clone(),
        };
        let record = Self::build(
            id,
            created_at_ms,
            request,
            built.spec,
            built.scale_grid,
            built.provenance,
        )?;
        Ok((record, event))
    }

    /// Rebuild a session from its event log.
    pub fn replay(events: &[Event]) -> Result<Self, String> {
        let mut it = events.iter();
        let mut record = match it.next() {
            Some(Event::Created {
                id,
                created_at_ms,
                request,
                kernel,
                scale_grid,
                provenance,
            }) => Self::build(
                id.clone(),
                *created_at_ms,
                request.clone(),
                kernel.clone(),
                scale_grid.clone(),
                provenance.clone(),
            )
            .map_err(|e| e.body.message)?,
            _ => return Err("event log does not start with a created event".into()),
        };
        for (i, event) in it.enumerate() {
            record
                .apply(event)
                .map_err(|e| format!("event {}: {}", i + 2, e.body.message))?;
        }
        Ok(record)
    }

    fn apply(&mut self, event: &Event) -> Result<(), ApiError> {
        match event {
            Event::Created { .. } => return Err(ApiError::internal("duplicate created event")),
            Event::Suggested { response } => {
                let (again, _) = self.suggest()?;
                if &again != response {
                    log::warn!("session {}: replayed suggestion differs from the logged one", self.id);
                }
                self.pending = Some(response.clone());
            }
            Event::Observed { x, y, key, response } => {
                let obs = Observation { x: x.clone(), y: *y };
                self.observe(obs, key.clone())?;
                if let Some(k) = key {
                    self.idempotency.get_mut(k).expect("just inserted").1 = response.clone();
                }
            }
            Event::Closed { summary } => {
                self.close();
                self.summary = Some(summary.clone());
            }
        }
        Ok(())
    }

    pub fn suggest(&mut self) -> Result<(SuggestionResponse, Option<Event>), ApiError> {
        match self.status {
            Status::Closed => return Err(ApiError::conflict("session-closed", "session is closed")),
            Status::AwaitingObservation => {
                let p = self.pending.clone().expect("pending while awaiting");
                return Ok((p, None));
            }
            Status::ReadyToSuggest => {}
        }
        let s = self.session.suggest().map_err(model_error)?;
        let response = SuggestionResponse {
            t: s.t,
            x: self.problem.raw[s.index].clone(),
            acquisition_value: s.acq,
            model: ModelAt {
                mu: s.mu,
                sigma: s.sigma_post,
            },
        };
        self.pending = Some(response.clone());
        self.status = Status::AwaitingObservation;
        Ok((response.clone(), Some(Event::Suggested { response })))
    }

    pub fn observe(
        &mut self,
        obs: Observation,
        key: Option<String>,
    ) -> Result<(ObservationResponse, Option<Event>), ApiError> {
        if let Some(k) = &key {
            if let Some((prev, resp)) = self.idempotency.get(k) {
                let same = prev.y.to_bits() == obs.y.to_bits()
                    && prev.x.iter().map(|v| v.to_bits()).eq(obs.x.iter().map(|v| v.to_bits()));
                if same {
                    return Ok((resp.clone(), None));
                }
                return Err(ApiError::conflict(
                    "idempotency-key-reused",
                    "Idempotency-Key was already used with a different body",
                ));
            }
        }
        match self.status {
            Status::Closed => return Err(ApiError::conflict("session-closed", "session is closed")),
            Status::ReadyToSuggest => {
                return Err(ApiError::conflict(
                    "no-pending-suggestion",
                    "request a suggestion before posting an observation",
                ))
            }
            Status::AwaitingObservation => {}
        }
        check_point("x", &obs.x, self.request.dimension)?;
        if !obs.y.is_finite() {
            return Err(ApiError::invalid("y", "must be finite"));
        }
        let unit = self.problem.to_unit(&obs.x);
        let row = self.session.tell(&unit, obs.y).map_err(model_error)?;
        let response = ObservationResponse {
            t: row.t,
            best_so_far: row.best,
            warning: row.warning.clone(),
        };
        self.raw_xs.push(obs.x.clone());
        self.pending = None;
        self.status = Status::ReadyToSuggest;
        if let Some(k) = &key {
            self.idempotency.insert(k.clone(), (obs.clone(), response.clone()));
        }
        let event = Event::Observed {
            x: obs.x,
            y: obs.y,
            key,
            response: response.clone(),
        };
        Ok((response, Some(event)))
    }

    pub fn close(&mut self) -> (CloseSummary, Option<Event>) {
        if let Some(s) = &self.summary {
            return (s.clone(), None);
        }
        let history = self.session.history();
        let better = |a: f64, b: f64| match self.request.goal {
            Goal::Maximize => a > b,
            Goal::Minimize => a < b,
        };
        let mut best: Option<(usize, f64)> = None;
        for (i, &y) in history.ys().iter().enumerate() {
            if best.is_none_or(|(_, b)| better(y, b)) {
                best = Some((i, y));
            }
        }
        let summary = CloseSummary {
            status: Status::Closed,
            iterations: self.session.trace().len(),
            observations: history.len(),
            best_so_far: best.map(|b| b.1),
            best_x: best.map(|(i, _)| self.raw_xs[i].clone()),
        };
        self.status = Status::Closed;
        self.pending = None;
        self.summary = Some(summary.clone());
        (summary.clone(), Some(Event::Closed { summary }))
    }

    pub fn view(&self) -> super::api::SessionView {
        super::api::SessionView {
            id: self.id.clone(),
            created_at_ms: self.created_at_ms,
            status: self.status,
            t: self.session.trace().len(),
            observations: self.raw_xs.len(),
            candidates: self.problem.unit.len(),
            best_so_far: self.session.best(),
            pending: self.pending.clone(),
            kernel: self.provenance.clone(),
            request: self.request.clone(),
            summary: self.summary.clone(),
        }
    }

    /// Trace rows as JSONL, inputs in the caller's units.
    pub fn trace_jsonl(&self) -> String {
        let offset = self.session.initial_len();
        let mut rows = self.session.trace().to_vec();
        for (i, r) in rows.iter_mut().enumerate() {
            r.x = self.raw_xs[offset + i].clone();
        }
        crate::suite::trace_jsonl(&rows)
    }
}
