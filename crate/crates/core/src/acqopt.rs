//! Maximizing acquisition functions over the design box and building batches.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::acquisition::{ei_raw, feasibility_from_posterior, norm_cdf, qei_unit, ConstraintSpec, Incumbent, McConfig, NormalDraws};
use crate::error::{Error, Result};
use crate::lowdisc::ScrambledHalton;
use crate::space::{unit_distance, DesignSpace};
use crate::surrogate::{GpModel, Posterior};

/// Largest batch `suggest_batch` will build.
pub const MAX_BATCH: usize = 16;

/// Normalized distance under which two suggestions count as the same point.
pub const DUPLICATE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptBudget {
    /// Quasi-random probes of the unit cube.
    pub candidates: usize,
    /// Best probes handed to the local search.
    pub refinements: usize,
    /// Pattern-search sweeps per refinement.
    pub max_local_steps: usize,
    pub seed: u64,
}

impl Default for OptBudget {
    fn default() -> Self {
        OptBudget {
            candidates: 512,
            refinements: 10,
            max_local_steps: 60,
            seed: 0,
        }
    }
}

impl OptBudget {
    fn validate(&self) -> Result<()> {
        if self.candidates == 0 {
            return Err(Error::arg("optimizer needs at least one candidate"));
        }
        Ok(())
    }
}

/// Location (user units) and value of an acquisition maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Maximum {
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone)]
struct Ranked {
    unit: Vec<f64>,
    value: f64,
    index: usize,
}

fn by_value_then_index(a: &Ranked, b: &Ranked) -> Ordering {
    b.value.total_cmp(&a.value).then(a.index.cmp(&b.index))
}

fn finite_or_worst(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Coordinate pattern search inside the unit cube; only strict improvements
/// are accepted, so the result is never worse than the start.
fn pattern_search(acq: &dyn Fn(&[f64]) -> f64, start: &[f64], f0: f64, sweeps: usize) -> (Vec<f64>, f64) {
    let mut x = start.to_vec();
    let mut fx = f0;
    let mut step = 0.05;
    for _ in 0..sweeps {
        let mut moved = false;
        for k in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut y = x.clone();
                y[k] = (y[k] + sign * step).clamp(0.0, 1.0);
                if y[k] == x[k] {
                    continue;
                }
                let fy = finite_or_worst(acq(&y));
                if fy > fx {
                    x = y;
                    fx = fy;
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            step *= 0.5;
            if step < 1e-9 {
                break;
            }
        }
    }
    (x, fx)
}

/// Polished maxima first (best to worst), then the remaining raw probes.
fn search_unit(acq: &dyn Fn(&[f64]) -> f64, dim: usize, budget: &OptBudget) -> Result<Vec<Ranked>> {
    budget.validate()?;
    let probes = ScrambledHalton::new(dim, budget.seed).points(budget.candidates);
    let mut raw: Vec<Ranked> = probes
        .into_iter()
        .enumerate()
        .map(|(index, unit)| {
            let value = finite_or_worst(acq(&unit));
            Ranked { unit, value, index }
        })
        .collect();
    raw.sort_by(by_value_then_index);
    if raw[0].value == f64::NEG_INFINITY {
        return Err(Error::Optimization("acquisition is not finite at any candidate".into()));
    }
    let k = budget.refinements.min(raw.len());
    let rest = raw.split_off(k);
    let mut polished: Vec<Ranked> = raw
        .into_iter()
        .map(|r| {
            let (unit, value) = pattern_search(acq, &r.unit, r.value, budget.max_local_steps);
            Ranked { unit, value, index: r.index }
        })
        .collect();
    polished.sort_by(by_value_then_index);
    polished.extend(rest);
    Ok(polished)
}

/// Maximizes `acq` (a function of user-unit points) over `space`.
pub fn maximize_acquisition<F>(acq: F, space: &DesignSpace, budget: &OptBudget) -> Result<Maximum>
where
    F: Fn(&[f64]) -> f64,
{
    let wrapped = |u: &[f64]| acq(&space.from_unit(u));
    let ranked = search_unit(&wrapped, space.dim(), budget)?;
    let best = &ranked[0];
    Ok(Maximum {
        point: space.from_unit(&best.unit),
        value: best.value,
    })
}

/// Best entry of `ranked` that is not a duplicate of anything in `chosen`.
fn first_distinct(ranked: Vec<Ranked>, chosen: &[Vec<f64>]) -> Result<Ranked> {
    ranked
        .into_iter()
        .find(|r| r.value > f64::NEG_INFINITY && chosen.iter().all(|c| unit_distance(c, &r.unit) >= DUPLICATE_TOL))
        .ok_or_else(|| Error::Optimization("no candidate distinct from the points already chosen".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchStrategy {
    /// Greedy maximization of Monte-Carlo batch EI.
    JointQei,
    /// Condition on a fixed lie (the incumbent) after each pick.
    #[default]
    ConstantLiar,
    /// Multiply the criterion by Lipschitz exclusion zones around picks.
    LocalPenalization,
}

impl std::str::FromStr for BatchStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "qei" | "joint_qei" => Ok(BatchStrategy::JointQei),
            "constant_liar" | "cl" => Ok(BatchStrategy::ConstantLiar),
            "local_penalization" | "lp" => Ok(BatchStrategy::LocalPenalization),
            other => Err(Error::arg(format!("unknown batch strategy '{other}'"))),
        }
    }
}

impl std::fmt::Display for BatchStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BatchStrategy::JointQei => "joint_qei",
            BatchStrategy::ConstantLiar => "constant_liar",
            BatchStrategy::LocalPenalization => "local_penalization",
        })
    }
}

/// Single-point criterion the batch is built around.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseCriterion {
    Ei,
    Ucb { beta: f64 },
}

/// Everything needed to build a batch: the objective model (canonical,
/// maximized), its incumbent, optional constraint models, and budgets.
#[derive(Debug, Clone)]
pub struct BatchProblem<'a> {
    pub space: &'a DesignSpace,
    pub model: &'a GpModel,
    /// `None` when constraints are present and no observation is feasible;
    /// the criterion then reduces to the probability of feasibility.
    pub incumbent: Option<Incumbent>,
    pub criterion: BaseCriterion,
    pub constraints: Vec<(&'a GpModel, ConstraintSpec)>,
    pub mc: McConfig,
    pub budget: OptBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSuggestion {
    /// Suggested points in user units, in selection order.
    pub points: Vec<Vec<f64>>,
    /// Criterion value at each point when it was selected.
    pub values: Vec<f64>,
    pub strategy: BatchStrategy,
    pub feasibility_only: bool,
}

fn feasibility_unit(model: &GpModel, u: &[f64], spec: &ConstraintSpec) -> f64 {
    let (m, v) = model.predict_unit(u);
    let out = &model.transform().output_map;
    let post = Posterior::new(out.invert(m), out.invert_variance(v));
    feasibility_from_posterior(&post, spec.threshold, spec.direction)
}

struct State<'p, 'a> {
    problem: &'p BatchProblem<'a>,
    model: GpModel,
    constraints: Vec<GpModel>,
}

impl State<'_, '_> {
    fn pof(&self, u: &[f64]) -> f64 {
        self.constraints
            .iter()
            .zip(&self.problem.constraints)
            .map(|(m, (_, spec))| feasibility_unit(m, u, spec))
            .product()
    }

    fn value(&self, u: &[f64]) -> f64 {
        let pof = if self.constraints.is_empty() { 1.0 } else { self.pof(u) };
        let Some(inc) = self.problem.incumbent else {
            return pof;
        };
        let (m, v) = self.model.predict_unit(u);
        let base = match self.problem.criterion {
            BaseCriterion::Ei => ei_raw(m, v.sqrt(), inc.value),
            BaseCriterion::Ucb { beta } => m + beta * v.sqrt(),
        };
        base * pof
    }

    fn is_ucb(&self) -> bool {
        matches!(self.problem.criterion, BaseCriterion::Ucb { .. }) && self.problem.incumbent.is_some()
    }

    /// Conditions on the lie at `u`: the incumbent for the objective, or the
    /// threshold for each constraint when only feasibility is being searched.
    fn lie(&mut self, u: &[f64]) -> Result<()> {
        match self.problem.incumbent {
            Some(inc) => self.model = self.model.condition_on(u, inc.value)?,
            None => {
                for (m, (_, spec)) in self.constraints.iter_mut().zip(&self.problem.constraints) {
                    let t = m.transform().output_map.apply(spec.threshold);
                    *m = m.condition_on(u, t)?;
                }
            }
        }
        Ok(())
    }
}

/// Largest finite-difference gradient norm of the posterior mean over `probes`.
fn lipschitz_estimate(model: &GpModel, probes: &[Vec<f64>]) -> f64 {
    let h = 1e-5;
    let mut best = 0.0f64;
    for p in probes {
        let mut sq = 0.0;
        for k in 0..p.len() {
            let mut up = p.clone();
            let mut dn = p.clone();
            up[k] = (p[k] + h).min(1.0);
            dn[k] = (p[k] - h).max(0.0);
            let g = (model.predict_unit(&up).0 - model.predict_unit(&dn).0) / (up[k] - dn[k]);
            sq += g * g;
        }
        best = best.max(sq.sqrt());
    }
    if best < 1e-7 {
        10.0
    } else {
        best
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

/// Builds a batch of `q` distinct points.
///
/// With `q == 1` every strategy maximizes the single-point criterion.
pub fn suggest_batch(problem: &BatchProblem, q: usize, strategy: BatchStrategy) -> Result<BatchSuggestion> {
    if q == 0 || q > MAX_BATCH {
        return Err(Error::arg(format!("batch size must be between 1 and {MAX_BATCH}, got {q}")));
    }
    if problem.incumbent.is_none() && problem.constraints.is_empty() {
        return Err(Error::arg("an incumbent is required without constraints"));
    }
    if problem.model.dim() != problem.space.dim() {
        return Err(Error::arg("model and design space differ in dimension"));
    }
    let mut state = State {
        problem,
        model: problem.model.clone(),
        constraints: problem.constraints.iter().map(|(m, _)| (*m).clone()).collect(),
    };
    let dim = problem.space.dim();
    let budget = &problem.budget;
    let mut chosen: Vec<Vec<f64>> = Vec::with_capacity(q);
    let mut values = Vec::with_capacity(q);

    let first = first_distinct(search_unit(&|u| state.value(u), dim, budget)?, &chosen)?;
    chosen.push(first.unit);
    values.push(first.value);

    // joint batch EI needs an incumbent; pure feasibility search falls back to lies
    let strategy = match (strategy, problem.incumbent) {
        (BatchStrategy::JointQei, None) => BatchStrategy::ConstantLiar,
        (s, _) => s,
    };

    match strategy {
        BatchStrategy::ConstantLiar => {
            while chosen.len() < q {
                state.lie(chosen.last().expect("batch is non-empty"))?;
                let next = first_distinct(search_unit(&|u| state.value(u), dim, budget)?, &chosen)?;
                chosen.push(next.unit);
                values.push(next.value);
            }
        }
        BatchStrategy::LocalPenalization => {
            let probes = ScrambledHalton::new(dim, budget.seed).points(budget.candidates);
            let lip = lipschitz_estimate(&state.model, &probes);
            let m_best = state.model.train_targets().max();
            let ucb = state.is_ucb();
            while chosen.len() < q {
                let centers: Vec<(Vec<f64>, f64, f64)> = chosen
                    .iter()
                    .map(|c| {
                        let (m, v) = state.model.predict_unit(c);
                        (c.clone(), m, v.sqrt())
                    })
                    .collect();
                let penalized = |u: &[f64]| {
                    let raw = state.value(u);
                    let mut v = if ucb { softplus(raw) } else { raw };
                    for (c, mu, sd) in &centers {
                        let z = lip * euclid(u, c) - m_best + mu;
                        v *= if *sd > 1e-12 {
                            norm_cdf(z / sd)
                        } else if z >= 0.0 {
                            1.0
                        } else {
                            0.0
                        };
                    }
                    v
                };
                let next = first_distinct(search_unit(&penalized, dim, budget)?, &chosen)?;
                chosen.push(next.unit);
                values.push(next.value);
            }
        }
        BatchStrategy::JointQei => {
            let inc = problem.incumbent.expect("checked above").value;
            let draws = NormalDraws::new(problem.mc.samples, q, problem.mc.seed);
            while chosen.len() < q {
                let joint = |u: &[f64]| {
                    let mut batch = chosen.clone();
                    batch.push(u.to_vec());
                    let weights: Option<Vec<f64>> = (!state.constraints.is_empty())
                        .then(|| batch.iter().map(|b| state.pof(b)).collect());
                    qei_unit(&state.model, &batch, inc, &draws, weights.as_deref())
                        .map(|e| e.value)
                        .unwrap_or(f64::NEG_INFINITY)
                };
                let next = first_distinct(search_unit(&joint, dim, budget)?, &chosen)?;
                chosen.push(next.unit);
                values.push(next.value);
            }
        }
    }

    Ok(BatchSuggestion {
        points: chosen.iter().map(|u| problem.space.from_unit(u)).collect(),
        values,
        strategy,
        feasibility_only: problem.incumbent.is_none(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::IncumbentSource;
    use crate::space::Variable;
    use crate::surrogate::{KernelParams, Smoothness};

    fn line() -> DesignSpace {
        DesignSpace::new(vec![Variable::new("x", 0.0, 1.0)]).unwrap()
    }

    #[test]
    fn finds_smooth_interior_maximum() {
        let m = maximize_acquisition(|x| -(x[0] - 0.3).powi(2), &line(), &OptBudget::default()).unwrap();
        assert!((m.point[0] - 0.3).abs() < 1e-3);
    }

    #[test]
    fn boundary_maximum_lands_exactly_on_bound() {
        let space = DesignSpace::new(vec![Variable::new("a", 2.0, 5.0), Variable::new("b", -1.0, 1.0)]).unwrap();
        let m = maximize_acquisition(|x| x[0] - x[1], &space, &OptBudget::default()).unwrap();
        assert_eq!(m.point, vec![5.0, -1.0]);
    }

    #[test]
    fn nan_everywhere_is_an_error() {
        let r = maximize_acquisition(|_| f64::NAN, &line(), &OptBudget::default());
        assert!(matches!(r, Err(Error::Optimization(_))));
    }

    #[test]
    fn polishing_never_worsens() {
        let acq = |u: &[f64]| (7.0 * u[0]).sin() * (3.0 * u[1]).cos();
        for (i, start) in ScrambledHalton::new(2, 3).points(30).into_iter().enumerate() {
            let f0 = acq(&start);
            let (x, f) = pattern_search(&acq, &start, f0, 60);
            assert!(f >= f0, "start {i}");
            assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn strategy_names_parse() {
        assert_eq!("qei".parse::<BatchStrategy>().unwrap(), BatchStrategy::JointQei);
        assert_eq!("constant-liar".parse::<BatchStrategy>().unwrap(), BatchStrategy::ConstantLiar);
        assert_eq!("local_penalization".parse::<BatchStrategy>().unwrap(), BatchStrategy::LocalPenalization);
        assert!("random".parse::<BatchStrategy>().is_err());
    }

    fn toy() -> (DesignSpace, GpModel) {
        let space = DesignSpace::new(vec![Variable::new("a", 0.0, 1.0), Variable::new("b", 0.0, 1.0)]).unwrap();
        let pts = vec![vec![0.2, 0.2], vec![0.8, 0.3], vec![0.5, 0.9], vec![0.3, 0.6], vec![0.7, 0.7]];
        let ys: Vec<f64> = pts.iter().map(|p| -(p[0] - 0.6f64).powi(2) - (p[1] - 0.4f64).powi(2)).collect();
        let k = KernelParams::new(1.0, vec![0.4, 0.4], Smoothness::FiveHalves).unwrap();
        let m = GpModel::from_params(&space, &pts, &ys, k, 1e-6).unwrap();
        (space, m)
    }

    #[test]
    fn batches_have_distinct_points() {
        let (space, model) = toy();
        let inc = Incumbent::from_model(&model, IncumbentSource::BestObserved, None).unwrap();
        let problem = BatchProblem {
            space: &space,
            model: &model,
            incumbent: Some(inc),
            criterion: BaseCriterion::Ei,
            constraints: vec![],
            mc: McConfig { samples: 256, seed: 2 },
            budget: OptBudget {
                candidates: 128,
                ..OptBudget::default()
            },
        };
        for strategy in [BatchStrategy::ConstantLiar, BatchStrategy::LocalPenalization, BatchStrategy::JointQei] {
            let b = suggest_batch(&problem, 3, strategy).unwrap();
            assert_eq!(b.points.len(), 3);
            for i in 0..3 {
                assert!(space.contains(&b.points[i]));
                for j in 0..i {
                    let d = unit_distance(&space.to_unit(&b.points[i]), &space.to_unit(&b.points[j]));
                    assert!(d >= DUPLICATE_TOL, "{strategy:?}");
                }
            }
        }
        assert!(suggest_batch(&problem, 0, BatchStrategy::ConstantLiar).is_err());
        assert!(suggest_batch(&problem, MAX_BATCH + 1, BatchStrategy::ConstantLiar).is_err());
    }
}
