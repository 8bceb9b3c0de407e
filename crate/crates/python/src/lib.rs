//! Python bindings: campaigns, a standalone GP and closed-form EI.
//!
//! Structured values (problem definitions, configs, recommendations) cross
//! the boundary as JSON text; points and outputs as lists of floats.

use bayesdoe::io::{campaign_from_json, campaign_to_json, load_campaign, save_campaign, ProblemSpec};
use bayesdoe::{
    ask_with, fit_targets, init_campaign, observed_pareto, recommend, suggest, tell, BatchStrategy, CampaignConfig, CampaignState,
    DesignSpace, Error, FitConfig, GpModel, Incumbent, IncumbentSource, Observation, OutputColumn, Posterior, Sense, Variable,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn strategy_or(state: &CampaignState, strategy: Option<&str>) -> PyResult<BatchStrategy> {
    match strategy {
        Some(s) => s.parse().map_err(to_py),
        None => Ok(state.config.acquisition.strategy),
    }
}

/// An ask-tell campaign held in memory.
#[pyclass(module = "bayesdoe_py")]
pub struct Campaign {
    state: CampaignState,
}

#[pymethods]
impl Campaign {
    /// `problem_json` holds `{"variables": [...], "outputs": [...]}`; with no
    /// outputs a single maximized column `y` is used.
    #[new]
    #[pyo3(signature = (problem_json, seed=0, config_json=None))]
    fn new(problem_json: &str, seed: u64, config_json: Option<&str>) -> PyResult<Self> {
        let spec: ProblemSpec = serde_json::from_str(problem_json).map_err(json_err)?;
        let space = spec.space().map_err(to_py)?;
        let outputs = if spec.outputs.is_empty() {
            vec![OutputColumn::objective("y", Sense::Maximize)]
        } else {
            spec.outputs
        };
        let config: CampaignConfig = match config_json {
            Some(text) => serde_json::from_str(text).map_err(json_err)?,
            None => CampaignConfig::default(),
        };
        let state = init_campaign(space, outputs, config, seed).map_err(to_py)?;
        Ok(Campaign { state })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Campaign {
            state: campaign_from_json(text).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Campaign {
            state: load_campaign(path).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        campaign_to_json(&self.state).map_err(to_py)
    }

    /// Writes the file only if it still holds `expected_revision` (or does
    /// not exist yet when that is `None`).
    #[pyo3(signature = (path, expected_revision=None))]
    fn save(&self, path: &str, expected_revision: Option<u64>) -> PyResult<()> {
        save_campaign(path, &self.state, expected_revision).map_err(to_py)
    }

    #[getter]
    fn id(&self) -> String {
        self.state.id.clone()
    }

    #[getter]
    fn revision(&self) -> u64 {
        self.state.revision
    }

    #[getter]
    fn variables(&self) -> Vec<String> {
        self.state.space.names().iter().map(|s| s.to_string()).collect()
    }

    #[getter]
    fn outputs(&self) -> Vec<String> {
        self.state.data.columns().iter().map(|c| c.name.clone()).collect()
    }

    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.state.data.points().to_vec()
    }

    #[getter]
    fn observations(&self) -> Vec<Vec<f64>> {
        self.state.data.outputs().to_vec()
    }

    #[getter]
    fn pending(&self) -> Vec<Vec<f64>> {
        self.state.pending.clone()
    }

    fn __len__(&self) -> usize {
        self.state.data.len()
    }

    /// Suggests `q` points and records them as pending.
    #[pyo3(signature = (q=1, strategy=None))]
    fn ask(&mut self, py: Python<'_>, q: usize, strategy: Option<&str>) -> PyResult<Vec<Vec<f64>>> {
        let strategy = strategy_or(&self.state, strategy)?;
        let state = &self.state;
        let (next, result) = py.detach(|| ask_with(state, q, strategy)).map_err(to_py)?;
        self.state = next;
        Ok(result.points)
    }

    /// Like `ask` but leaves the campaign unchanged.
    #[pyo3(signature = (q=1, strategy=None))]
    fn suggest(&self, py: Python<'_>, q: usize, strategy: Option<&str>) -> PyResult<Vec<Vec<f64>>> {
        let strategy = strategy_or(&self.state, strategy)?;
        let state = &self.state;
        Ok(py.detach(|| suggest(state, q, strategy)).map_err(to_py)?.points)
    }

    /// Appends measured rows; all are accepted or none.
    fn tell(&mut self, points: Vec<Vec<f64>>, outputs: Vec<Vec<f64>>) -> PyResult<()> {
        if points.len() != outputs.len() {
            return Err(PyValueError::new_err(format!(
                "{} points but {} output rows",
                points.len(),
                outputs.len()
            )));
        }
        let rows = points.into_iter().zip(outputs).map(|(p, y)| Observation::new(p, y)).collect();
        self.state = tell(&self.state, rows).map_err(to_py)?;
        Ok(())
    }

    /// Recommendation as JSON text.
    fn recommend(&self, py: Python<'_>) -> PyResult<String> {
        let state = &self.state;
        let outcome = py.detach(|| recommend(state)).map_err(to_py)?;
        serde_json::to_string(&outcome).map_err(json_err)
    }

    /// Row indices of the observed non-dominated set.
    fn pareto(&self) -> Vec<usize> {
        observed_pareto(&self.state)
    }

    fn __repr__(&self) -> String {
        format!(
            "Campaign(id='{}', revision={}, observations={})",
            self.state.id,
            self.state.revision,
            self.state.data.len()
        )
    }
}

/// A Gaussian process fitted by maximizing the marginal likelihood.
#[pyclass(module = "bayesdoe_py")]
pub struct GaussianProcess {
    model: GpModel,
}

#[pymethods]
impl GaussianProcess {
    /// Posterior `(mean, variance)` at each point.
    fn predict(&self, points: Vec<Vec<f64>>) -> PyResult<Vec<(f64, f64)>> {
        points
            .iter()
            .map(|p| self.model.posterior(p).map(|post| (post.mean, post.variance)).map_err(to_py))
            .collect()
    }

    #[getter]
    fn length_scales(&self) -> Vec<f64> {
        self.model.kernel().length_scales.clone()
    }

    #[getter]
    fn amplitude_sq(&self) -> f64 {
        self.model.kernel().amplitude_sq
    }

    #[getter]
    fn noise_var(&self) -> f64 {
        self.model.noise_var()
    }

    #[getter]
    fn log_marginal_likelihood(&self) -> Option<f64> {
        self.model.fit_info().map(|f| f.log_marginal_likelihood)
    }
}

/// Fits a GP to `targets` observed at `points` inside the box `lower..upper`.
#[pyfunction]
#[pyo3(signature = (points, targets, lower, upper, seed=0))]
fn fit_gp(
    py: Python<'_>,
    points: Vec<Vec<f64>>,
    targets: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    seed: u64,
) -> PyResult<GaussianProcess> {
    if lower.len() != upper.len() {
        return Err(PyValueError::new_err("lower and upper differ in length"));
    }
    let vars = lower
        .iter()
        .zip(&upper)
        .enumerate()
        .map(|(i, (&lo, &hi))| Variable::new(format!("x{i}"), lo, hi))
        .collect();
    let space = DesignSpace::new(vars).map_err(to_py)?;
    let config = FitConfig {
        seed,
        ..FitConfig::default()
    };
    let model = py
        .detach(|| fit_targets(&space, &points, &targets, &config))
        .map_err(to_py)?;
    Ok(GaussianProcess { model })
}

/// Closed-form expected improvement over `best` for a normal posterior.
#[pyfunction]
fn expected_improvement(mean: f64, variance: f64, best: f64) -> PyResult<f64> {
    let post = Posterior {
        mean,
        variance,
        extrapolated: false,
    };
    let inc = Incumbent::new(best, IncumbentSource::BestObserved).map_err(to_py)?;
    bayesdoe::expected_improvement(&post, &inc).map_err(to_py)
}

#[pymodule]
fn bayesdoe_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Campaign>()?;
    m.add_class::<GaussianProcess>()?;
    m.add_function(wrap_pyfunction!(fit_gp, m)?)?;
    m.add_function(wrap_pyfunction!(expected_improvement, m)?)?;
    Ok(())
}
