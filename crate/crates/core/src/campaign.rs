//! Ask/tell campaign state, suggestion dispatch, recommendation and
//! closed-loop simulation.
//!
//! Every mutating call takes the state by reference and returns a new state
//! with its revision bumped and one event appended to the history, so the
//! history alone is enough to rebuild the state.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::acqopt::{suggest_batch, BaseCriterion, BatchProblem, BatchStrategy, OptBudget};
use crate::acquisition::{
    augmented_chebyshev, feasibility_from_posterior, pareto_front, sample_simplex, AcquisitionKind, AcquisitionSpec,
    ConstraintSpec, Incumbent, McConfig,
};
use crate::data::{Dataset, Direction, Observation, OutputColumn, OutputRole, Sense};
use crate::error::{Error, Result};
use crate::lowdisc::{mix_seed, rng_from, ScrambledHalton};
use crate::space::{unit_distance, DesignSpace};
use crate::surrogate::{fit_targets, FitConfig, GpModel, OutputMap};

pub const SCHEMA_VERSION: u32 = 1;

/// Distance (normalized, max-norm) under which a told row settles a pending point.
pub const PENDING_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColdStart {
    /// Continue one scrambled Halton sequence across asks.
    #[default]
    Halton,
    /// Independent uniform draws.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub fit: FitConfig,
    pub acquisition: AcquisitionSpec,
    pub budget: OptBudget,
    pub cold_start: ColdStart,
    /// Observations needed before the surrogate takes over from the space-filling design.
    pub min_model_points: usize,
    /// Suggest space-filling points while data is short; otherwise asking fails.
    pub cold_start_fallback: bool,
    /// Most objectives a campaign accepts.
    pub max_objectives: usize,
    /// Feasibility a recommended point must reach.
    pub feasibility_target: f64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            fit: FitConfig::default(),
            acquisition: AcquisitionSpec::default(),
            budget: OptBudget::default(),
            cold_start: ColdStart::Halton,
            min_model_points: 2,
            cold_start_fallback: true,
            max_objectives: 4,
            feasibility_target: 0.95,
        }
    }
}

/// One column's fit summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub column: String,
    pub log_marginal_likelihood: Option<f64>,
    pub length_scales: Vec<f64>,
    pub amplitude_sq: f64,
    pub noise_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Init {
        id: String,
        space: DesignSpace,
        columns: Vec<OutputColumn>,
        config: CampaignConfig,
        seed: u64,
    },
    Ask {
        points: Vec<Vec<f64>>,
        strategy: BatchStrategy,
        cold_start: bool,
    },
    Tell {
        rows: Vec<Observation>,
    },
    Fit {
        summaries: Vec<FitSummary>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub revision: u64,
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub event: Event,
}

/// Everything a campaign knows. Serialized as the campaign file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignState {
    pub schema_version: u32,
    pub id: String,
    pub space: DesignSpace,
    pub data: Dataset,
    /// Suggested but not yet measured points, user units.
    pub pending: Vec<Vec<f64>>,
    pub config: CampaignConfig,
    pub seed: u64,
    pub revision: u64,
    pub history: Vec<HistoryEntry>,
    /// Trace of the most recent closed-loop simulation, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_simulation: Option<SimulationTrace>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// FNV-1a over the problem definition, so equal problems and seeds share an id.
fn content_hash(space: &DesignSpace, columns: &[OutputColumn]) -> u64 {
    let text = serde_json::to_string(&(space, columns)).unwrap_or_default();
    text.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Starts a campaign at revision 0. The id is derived from the problem and seed.
pub fn init_campaign(space: DesignSpace, columns: Vec<OutputColumn>, config: CampaignConfig, seed: u64) -> Result<CampaignState> {
    let id = format!("{:016x}", mix_seed(content_hash(&space, &columns), seed));
    init_campaign_with_id(id, space, columns, config, seed)
}

pub fn init_campaign_with_id(
    id: String,
    space: DesignSpace,
    columns: Vec<OutputColumn>,
    config: CampaignConfig,
    seed: u64,
) -> Result<CampaignState> {
    if id.trim().is_empty() {
        return Err(Error::arg("campaign id must not be empty"));
    }
    config.acquisition.validate()?;
    let n_obj = columns
        .iter()
        .filter(|c| matches!(c.role, OutputRole::Objective { .. }))
        .count();
    if n_obj == 0 {
        return Err(Error::arg("a campaign needs at least one objective column"));
    }
    if n_obj > config.max_objectives {
        return Err(Error::Unsupported(format!(
            "{n_obj} objectives requested, at most {} supported",
            config.max_objectives
        )));
    }
    if !(0.0..=1.0).contains(&config.feasibility_target) {
        return Err(Error::arg("feasibility target must lie in [0, 1]"));
    }
    if let Some(c) = columns.iter().find(|c| space.names().contains(&c.name.as_str())) {
        return Err(Error::arg(format!("output '{}' clashes with a design variable", c.name)));
    }
    let data = Dataset::new(columns.clone())?;
    let event = Event::Init {
        id: id.clone(),
        space: space.clone(),
        columns,
        config: config.clone(),
        seed,
    };
    Ok(CampaignState {
        schema_version: SCHEMA_VERSION,
        id,
        space,
        data,
        pending: Vec::new(),
        config,
        seed,
        revision: 0,
        history: vec![HistoryEntry {
            revision: 0,
            timestamp_ms: now_ms(),
            event,
        }],
        last_simulation: None,
    })
}

impl CampaignState {
    fn bump(&self, event: Event) -> CampaignState {
        let mut next = self.clone();
        next.revision += 1;
        next.history.push(HistoryEntry {
            revision: next.revision,
            timestamp_ms: now_ms(),
            event,
        });
        next
    }

    /// Indices and senses of objective columns.
    pub fn objectives(&self) -> Vec<(usize, Sense)> {
        self.data
            .columns()
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match c.role {
                OutputRole::Objective { sense } => Some((i, sense)),
                _ => None,
            })
            .collect()
    }

    pub fn constraints(&self) -> Vec<ConstraintSpec> {
        self.data
            .columns()
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match c.role {
                OutputRole::Constraint { threshold, direction } => Some(ConstraintSpec {
                    output_index: i,
                    threshold,
                    direction,
                }),
                _ => None,
            })
            .collect()
    }

    /// Whether observed row `i` satisfies every constraint.
    pub fn row_feasible(&self, i: usize) -> bool {
        let row = &self.data.outputs()[i];
        self.constraints().iter().all(|c| match c.direction {
            Direction::Le => row[c.output_index] <= c.threshold,
            Direction::Ge => row[c.output_index] >= c.threshold,
        })
    }

    pub fn feasible_rows(&self) -> Vec<usize> {
        (0..self.data.len()).filter(|&i| self.row_feasible(i)).collect()
    }

    /// Seed for the next stochastic step, derived from the campaign seed and revision.
    pub fn step_seed(&self) -> u64 {
        mix_seed(self.seed, self.revision)
    }
}

/// Outcome of an ask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResult {
    /// Suggested points, user units.
    pub points: Vec<Vec<f64>>,
    /// Acquisition value per point (empty for space-filling suggestions).
    pub values: Vec<f64>,
    pub strategy: BatchStrategy,
    pub cold_start: bool,
    pub feasibility_only: bool,
    /// Revision of the state the suggestion was computed from.
    pub revision: u64,
}

/// Surrogates for every modeled column, fitted on the current data.
#[derive(Debug, Clone)]
pub struct FittedModels {
    /// Objective models on canonical (maximized) values.
    pub objectives: Vec<(usize, Sense, GpModel)>,
    /// Constraint models on raw values.
    pub constraints: Vec<(ConstraintSpec, GpModel)>,
}

impl FittedModels {
    pub fn summaries(&self, state: &CampaignState) -> Vec<FitSummary> {
        let cols = state.data.columns();
        let one = |i: usize, m: &GpModel| FitSummary {
            column: cols[i].name.clone(),
            log_marginal_likelihood: m.fit_info().map(|f| f.log_marginal_likelihood),
            length_scales: m.kernel().length_scales.clone(),
            amplitude_sq: m.kernel().amplitude_sq,
            noise_var: m.noise_var(),
        };
        self.objectives
            .iter()
            .map(|(i, _, m)| one(*i, m))
            .chain(self.constraints.iter().map(|(c, m)| one(c.output_index, m)))
            .collect()
    }
}

fn canonical(state: &CampaignState, column: usize, sense: Sense) -> Vec<f64> {
    state.data.output_column(column).iter().map(|v| v * sense.sign()).collect()
}

fn fit_config(state: &CampaignState) -> FitConfig {
    FitConfig {
        seed: state.step_seed(),
        ..state.config.fit.clone()
    }
}

/// Row order used for fitting: lexicographic by point, then outputs, so the
/// order in which rows were told does not change any fit.
fn canonical_order(data: &Dataset) -> Vec<usize> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    let key = |i: usize| data.points()[i].iter().chain(&data.outputs()[i]).copied().collect::<Vec<f64>>();
    order.sort_by(|&a, &b| {
        key(a)
            .iter()
            .zip(&key(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// The state with its rows in canonical order, and the map back to told order.
fn sorted_view(state: &CampaignState) -> (CampaignState, Vec<usize>) {
    let order = canonical_order(&state.data);
    let mut view = state.clone();
    view.data = state.data.select(&order);
    view.history.clear();
    (view, order)
}

/// Fits every objective and constraint column.
pub fn fit_models(state: &CampaignState) -> Result<FittedModels> {
    let cfg = fit_config(state);
    let pts = state.data.points();
    let objectives = state
        .objectives()
        .into_iter()
        .map(|(i, s)| fit_targets(&state.space, pts, &canonical(state, i, s), &cfg).map(|m| (i, s, m)))
        .collect::<Result<Vec<_>>>()?;
    let constraints = state
        .constraints()
        .into_iter()
        .map(|c| fit_targets(&state.space, pts, &state.data.output_column(c.output_index), &cfg).map(|m| (c, m)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FittedModels {
        objectives,
        constraints,
    })
}

/// Fits the surrogates and records their hyperparameters in the history.
pub fn fit(state: &CampaignState) -> Result<(CampaignState, FittedModels)> {
    let models = fit_models(state)?;
    let next = state.bump(Event::Fit {
        summaries: models.summaries(state),
    });
    Ok((next, models))
}

fn cold_start_points(state: &CampaignState, q: usize) -> Vec<Vec<f64>> {
    let d = state.space.dim();
    let taken = |u: &[f64], chosen: &[Vec<f64>]| {
        state
            .data
            .points()
            .iter()
            .chain(&state.pending)
            .map(|p| state.space.to_unit(p))
            .chain(chosen.iter().cloned())
            .any(|p| unit_distance(&p, u) < PENDING_TOL)
    };
    let mut chosen: Vec<Vec<f64>> = Vec::with_capacity(q);
    match state.config.cold_start {
        ColdStart::Halton => {
            let h = ScrambledHalton::new(d, state.seed);
            let mut index = (state.data.len() + state.pending.len()) as u64;
            while chosen.len() < q {
                let u = h.point(index);
                index += 1;
                if !taken(&u, &chosen) {
                    chosen.push(u);
                }
            }
        }
        ColdStart::Random => {
            use rand::Rng;
            let mut rng = rng_from(state.seed, state.revision);
            while chosen.len() < q {
                let u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                if !taken(&u, &chosen) {
                    chosen.push(u);
                }
            }
        }
    }
    chosen.iter().map(|u| state.space.from_unit(u)).collect()
}

fn criterion(spec: &AcquisitionSpec) -> BaseCriterion {
    match spec.kind {
        AcquisitionKind::Ucb => BaseCriterion::Ucb { beta: spec.beta },
        _ => BaseCriterion::Ei,
    }
}

/// Conditions `model` on lies at `points` (user units).
fn condition_on_lies(model: &GpModel, points: &[Vec<f64>], lie: f64) -> Result<GpModel> {
    let mut m = model.clone();
    for p in points {
        m = m.condition_on(&m.transform().input_map.apply(p), lie)?;
    }
    Ok(m)
}

/// Suggests `q` points with the campaign's configured strategy.
pub fn ask(state: &CampaignState, q: usize) -> Result<(CampaignState, AskResult)> {
    ask_with(state, q, state.config.acquisition.strategy)
}

/// Suggests `q` points and records them as pending.
pub fn ask_with(state: &CampaignState, q: usize, strategy: BatchStrategy) -> Result<(CampaignState, AskResult)> {
    let result = suggest(state, q, strategy)?;
    let mut next = state.bump(Event::Ask {
        points: result.points.clone(),
        strategy: result.strategy,
        cold_start: result.cold_start,
    });
    next.pending.extend(result.points.iter().cloned());
    Ok((next, result))
}

/// Computes a suggestion without changing any state (a dry run).
pub fn suggest(state: &CampaignState, q: usize, strategy: BatchStrategy) -> Result<AskResult> {
    if q == 0 || q > crate::acqopt::MAX_BATCH {
        return Err(Error::arg(format!(
            "batch size must be between 1 and {}, got {q}",
            crate::acqopt::MAX_BATCH
        )));
    }
    if state.data.len() < state.config.min_model_points.max(2) {
        if !state.config.cold_start_fallback {
            return Err(Error::InsufficientData {
                needed: state.config.min_model_points.max(2),
                got: state.data.len(),
            });
        }
        return Ok(AskResult {
            points: cold_start_points(state, q),
            values: Vec::new(),
            strategy,
            cold_start: true,
            feasibility_only: false,
            revision: state.revision,
        });
    }
    let (view, _) = sorted_view(state);
    let state = &view;
    let models = fit_models(state)?;
    let seed = state.step_seed();
    let spec = &state.config.acquisition;
    let mc = McConfig {
        samples: spec.mc_samples,
        seed,
    };
    let budget = OptBudget {
        seed,
        ..state.config.budget
    };
    let feasible = state.feasible_rows();
    let constrained = !models.constraints.is_empty();
    let incumbent_rows = constrained.then_some(feasible.as_slice());
    let constraint_refs: Vec<(&GpModel, ConstraintSpec)> = models.constraints.iter().map(|(c, m)| (m, *c)).collect();

    if models.objectives.len() == 1 {
        let (_, _, model) = &models.objectives[0];
        let incumbent = if constrained && feasible.is_empty() {
            None
        } else {
            Some(Incumbent::from_model(model, spec.incumbent, incumbent_rows)?)
        };
        let model = match incumbent {
            Some(inc) => condition_on_lies(model, &state.pending, inc.value)?,
            None => model.clone(),
        };
        let problem = BatchProblem {
            space: &state.space,
            model: &model,
            incumbent,
            criterion: criterion(spec),
            constraints: constraint_refs,
            mc,
            budget,
        };
        let batch = suggest_batch(&problem, q, strategy)?;
        return Ok(AskResult {
            points: batch.points,
            values: batch.values,
            strategy: batch.strategy,
            cold_start: false,
            feasibility_only: batch.feasibility_only,
            revision: state.revision,
        });
    }

    // Several objectives: one random scalarization per batch slot.
    let scaled: Vec<Vec<f64>> = models
        .objectives
        .iter()
        .map(|(i, s, _)| {
            let c = canonical(state, *i, *s);
            let map = OutputMap::fit(&c);
            c.iter().map(|v| map.apply(*v)).collect()
        })
        .collect();
    let mut rng = rng_from(seed, 1);
    let cfg = fit_config(state);
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(q);
    let mut values = Vec::with_capacity(q);
    let mut feasibility_only = false;
    for slot in 0..q {
        let m = scaled.len();
        let weights = match &spec.weights {
            Some(w) if w.len() == m => w.clone(),
            Some(w) => {
                return Err(Error::arg(format!("{} weights given for {m} objectives", w.len())));
            }
            None => sample_simplex(m, &mut rng),
        };
        let targets = (0..state.data.len())
            .map(|r| {
                let y: Vec<f64> = scaled.iter().map(|col| col[r]).collect();
                augmented_chebyshev(&y, &weights, spec.rho)
            })
            .collect::<Result<Vec<f64>>>()?;
        let model = fit_targets(&state.space, state.data.points(), &targets, &cfg)?;
        let incumbent = if constrained && feasible.is_empty() {
            None
        } else {
            Some(Incumbent::from_model(&model, spec.incumbent, incumbent_rows)?)
        };
        let model = match incumbent {
            Some(inc) => {
                let busy: Vec<Vec<f64>> = state.pending.iter().chain(&points).cloned().collect();
                condition_on_lies(&model, &busy, inc.value)?
            }
            None => model,
        };
        let problem = BatchProblem {
            space: &state.space,
            model: &model,
            incumbent,
            criterion: criterion(spec),
            constraints: constraint_refs.clone(),
            mc,
            budget: OptBudget {
                seed: mix_seed(seed, slot as u64),
                ..budget
            },
        };
        let one = suggest_batch(&problem, 1, strategy)?;
        feasibility_only |= one.feasibility_only;
        points.push(one.points[0].clone());
        values.push(one.values[0]);
    }
    Ok(AskResult {
        points,
        values,
        strategy,
        cold_start: false,
        feasibility_only,
        revision: state.revision,
    })
}

/// Appends measured rows (all or none) and settles matching pending points.
/// An empty tell still advances the revision.
pub fn tell(state: &CampaignState, rows: Vec<Observation>) -> Result<CampaignState> {
    let mut data = state.data.clone();
    data.extend(&state.space, &rows)?;
    let mut next = state.bump(Event::Tell { rows: rows.clone() });
    next.data = data;
    settle_pending(&mut next, &rows);
    Ok(next)
}

fn settle_pending(state: &mut CampaignState, rows: &[Observation]) {
    for r in rows {
        let u = state.space.to_unit(&r.point);
        if let Some(k) = state
            .pending
            .iter()
            .position(|p| unit_distance(&state.space.to_unit(p), &u) < PENDING_TOL)
        {
            state.pending.remove(k);
        }
    }
}

/// Rebuilds a campaign from its history.
pub fn replay(history: &[HistoryEntry]) -> Result<CampaignState> {
    let first = history.first().ok_or_else(|| Error::arg("history is empty"))?;
    let Event::Init {
        id,
        space,
        columns,
        config,
        seed,
    } = &first.event
    else {
        return Err(Error::Schema("history must start with an init event".into()));
    };
    let mut state = init_campaign_with_id(id.clone(), space.clone(), columns.clone(), config.clone(), *seed)?;
    state.history = vec![first.clone()];
    state.revision = first.revision;
    for entry in &history[1..] {
        match &entry.event {
            Event::Init { .. } => return Err(Error::Schema("init event after the first entry".into())),
            Event::Ask { points, .. } => state.pending.extend(points.iter().cloned()),
            Event::Tell { rows } => {
                state.data.extend(&state.space, rows)?;
                let rows = rows.clone();
                settle_pending(&mut state, &rows);
            }
            Event::Fit { .. } => {}
        }
        if entry.revision != state.revision + 1 {
            return Err(Error::Schema(format!(
                "history revision {} follows {}",
                entry.revision, state.revision
            )));
        }
        state.revision = entry.revision;
        state.history.push(entry.clone());
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rationale {
    /// Best posterior mean among observed points meeting the feasibility target.
    BestFeasibleObserved,
    /// No observed point met the feasibility target; the most feasible one is returned.
    BestPosterior,
}

/// Posterior of one output column at the recommended point, user units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedOutput {
    pub column: String,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    /// Row of the recommended observation.
    pub index: usize,
    pub point: Vec<f64>,
    /// Objectives first, then constraints, in column order within each group.
    pub predicted: Vec<PredictedOutput>,
    /// Product of constraint feasibilities; 1 without constraints.
    pub feasibility: f64,
    pub rationale: Rationale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecommendOutcome {
    Single(Recommendation),
    /// Indices of the non-dominated feasible observations.
    Pareto { indices: Vec<usize> },
}

/// Indices of the observed Pareto set (feasible rows only when constrained).
pub fn observed_pareto(state: &CampaignState) -> Vec<usize> {
    let objectives = state.objectives();
    let rows = state.feasible_rows();
    let outputs: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| objectives.iter().map(|(i, _)| state.data.outputs()[r][*i]).collect())
        .collect();
    let senses: Vec<Sense> = objectives.iter().map(|(_, s)| *s).collect();
    pareto_front(&outputs, &senses).into_iter().map(|k| rows[k]).collect()
}

/// Best observed design according to the surrogate.
pub fn recommend(state: &CampaignState) -> Result<RecommendOutcome> {
    let n = state.data.len();
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let objectives = state.objectives();
    if objectives.len() > 1 {
        return Ok(RecommendOutcome::Pareto {
            indices: observed_pareto(state),
        });
    }
    let cols = state.data.columns();
    if n == 1 {
        let row = &state.data.outputs()[0];
        let feasible = state.row_feasible(0);
        let predicted = objectives
            .iter()
            .map(|(i, _)| *i)
            .chain(state.constraints().iter().map(|c| c.output_index))
            .map(|i| PredictedOutput {
                column: cols[i].name.clone(),
                mean: row[i],
                variance: 0.0,
            })
            .collect();
        return Ok(RecommendOutcome::Single(Recommendation {
            index: 0,
            point: state.data.points()[0].clone(),
            predicted,
            feasibility: if feasible { 1.0 } else { 0.0 },
            rationale: if feasible {
                Rationale::BestFeasibleObserved
            } else {
                Rationale::BestPosterior
            },
        }));
    }
    let (view, order) = sorted_view(state);
    let models = fit_models(&view)?;
    let (_, sense, model) = &models.objectives[0];
    let mut scored = Vec::with_capacity(n);
    for (i, p) in view.data.points().iter().enumerate() {
        let post = model.posterior(p)?;
        let mut pof = 1.0;
        for (c, m) in &models.constraints {
            pof *= feasibility_from_posterior(&m.posterior(p)?, c.threshold, c.direction);
        }
        scored.push((order[i], i, post.mean, pof));
    }
    // ties resolve to the earliest told row
    let target = state.config.feasibility_target;
    let eligible: Vec<_> = scored.iter().filter(|s| s.3 >= target).collect();
    let (best, rationale) = if eligible.is_empty() {
        let b = scored
            .iter()
            .max_by(|a, b| a.3.total_cmp(&b.3).then(b.0.cmp(&a.0)))
            .expect("n >= 2");
        (b, Rationale::BestPosterior)
    } else {
        let b = eligible
            .into_iter()
            .max_by(|a, b| a.2.total_cmp(&b.2).then(b.0.cmp(&a.0)))
            .expect("non-empty");
        (b, Rationale::BestFeasibleObserved)
    };
    let &(index, view_row, _, pof) = best;
    let point = view.data.points()[view_row].clone();
    let mut predicted = Vec::new();
    let post = model.posterior(&point)?;
    predicted.push(PredictedOutput {
        column: cols[objectives[0].0].name.clone(),
        mean: post.mean * sense.sign(),
        variance: post.variance,
    });
    for (c, m) in &models.constraints {
        let post = m.posterior(&point)?;
        predicted.push(PredictedOutput {
            column: cols[c.output_index].name.clone(),
            mean: post.mean,
            variance: post.variance,
        });
    }
    Ok(RecommendOutcome::Single(Recommendation {
        index,
        point,
        predicted,
        feasibility: pof,
        rationale,
    }))
}

/// One closed-loop iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub iteration: usize,
    pub points: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    /// Best first-objective value (canonical, maximized) among feasible
    /// responses so far in this trace.
    pub best_so_far: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub steps: Vec<TraceStep>,
    pub strategy: BatchStrategy,
    pub q: usize,
    pub aborted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
}

/// Runs `iterations` ask/tell rounds against `oracle`, which maps a design
/// point to every output column. A non-finite oracle output stops the loop
/// and returns the partial trace with `aborted` set.
pub fn simulate_loop<F>(
    state: &CampaignState,
    mut oracle: F,
    iterations: usize,
    q: usize,
    strategy: BatchStrategy,
) -> Result<(CampaignState, SimulationTrace)>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let objectives = state.objectives();
    let (obj_col, sense) = objectives[0];
    let constraints = state.constraints();
    let mut trace = SimulationTrace {
        steps: Vec::with_capacity(iterations),
        strategy,
        q,
        aborted: false,
        abort_reason: None,
    };
    let mut current = state.clone();
    let mut best: Option<f64> = None;
    for iteration in 0..iterations {
        let (asked, result) = ask_with(&current, q, strategy)?;
        let mut outputs = Vec::with_capacity(q);
        for p in &result.points {
            let y = oracle(p)?;
            if y.len() != current.data.n_outputs() {
                return Err(Error::arg(format!(
                    "oracle returned {} outputs, campaign has {}",
                    y.len(),
                    current.data.n_outputs()
                )));
            }
            if let Some(k) = y.iter().position(|v| !v.is_finite()) {
                trace.aborted = true;
                trace.abort_reason = Some(format!(
                    "oracle returned a non-finite '{}' at iteration {iteration}",
                    current.data.columns()[k].name
                ));
                current.last_simulation = Some(trace.clone());
                return Ok((current, trace));
            }
            outputs.push(y);
        }
        for y in &outputs {
            let feasible = constraints.iter().all(|c| match c.direction {
                Direction::Le => y[c.output_index] <= c.threshold,
                Direction::Ge => y[c.output_index] >= c.threshold,
            });
            if feasible {
                let v = y[obj_col] * sense.sign();
                best = Some(best.map_or(v, |b| b.max(v)));
            }
        }
        let rows: Vec<Observation> = result
            .points
            .iter()
            .zip(&outputs)
            .map(|(p, y)| Observation::new(p.clone(), y.clone()))
            .collect();
        current = tell(&asked, rows)?;
        trace.steps.push(TraceStep {
            iteration,
            points: result.points,
            outputs,
            best_so_far: best,
        });
    }
    current.last_simulation = Some(trace.clone());
    Ok((current, trace))
}
