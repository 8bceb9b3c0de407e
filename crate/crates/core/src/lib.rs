//! Ask-tell Bayesian optimization for experiment design.
//!
//! A Gaussian-process surrogate over a bounded box of design variables,
//! single-point and batch acquisition criteria, constraint and multi-objective
//! handling, a preference-learning surrogate, and a persistent campaign that
//! records every suggestion and measurement.

pub mod acqopt;
pub mod acquisition;
pub mod campaign;
pub mod data;
pub mod error;
pub mod io;
pub mod lowdisc;
pub mod oracle;
pub mod preference;
pub mod space;
pub mod surrogate;

pub use acqopt::{maximize_acquisition, suggest_batch, BaseCriterion, BatchProblem, BatchStrategy, BatchSuggestion, Maximum, OptBudget};
pub use acquisition::{
    augmented_chebyshev, expected_feasible_improvement, expected_improvement, pareto_front, probability_of_feasibility,
    q_expected_improvement, ucb, AcquisitionKind, AcquisitionSpec, ConstraintSpec, EfiValue, Incumbent, IncumbentSource,
    McConfig, McEstimate,
};
pub use campaign::{
    ask, ask_with, fit, fit_models, init_campaign, init_campaign_with_id, observed_pareto, recommend, replay, simulate_loop,
    suggest, tell, AskResult, CampaignConfig, CampaignState, Rationale, RecommendOutcome, Recommendation, SimulationTrace,
};
pub use data::{Dataset, Direction, Observation, OutputColumn, OutputRole, Sense};
pub use error::{Error, Result, RowRejection};
pub use oracle::{fit_quadratic_oracle, fit_quadratic_to_dataset, QuadraticOracle};
pub use preference::{
    build_preferences, build_preferences_with_validity, fit_preference_gp, suggest_preferential, Comparison, PreferenceConfig,
    PreferenceModel, PreferenceSet,
};
pub use space::{DesignSpace, Variable};
pub use surrogate::{fit_gp, fit_targets, kernel_matrix, matern_kernel, FitConfig, GpModel, KernelParams, Posterior, Smoothness};
