//! Acquisition criteria: expected improvement, upper confidence bound,
//! Monte-Carlo batch EI, probability of feasibility, expected feasible
//! improvement, Chebyshev scalarization and Pareto filtering.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::acqopt::BatchStrategy;
use crate::data::{Direction, Sense};
use crate::error::{Error, Result};
use crate::lowdisc::ScrambledHalton;
use crate::surrogate::{factorize, GpModel, Posterior};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

pub(crate) fn norm_inv_cdf(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncumbentSource {
    BestObserved,
    #[default]
    BestPosteriorMean,
}

/// Reference value for improvement, in standardized objective units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub value: f64,
    pub source: IncumbentSource,
}

impl Incumbent {
    pub fn new(value: f64, source: IncumbentSource) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::arg("incumbent must be finite"));
        }
        Ok(Incumbent { value, source })
    }

    /// Incumbent over the model's training points, or over the subset `rows`.
    pub fn from_model(model: &GpModel, source: IncumbentSource, rows: Option<&[usize]>) -> Result<Self> {
        let all: Vec<usize> = (0..model.n_train()).collect();
        let rows = rows.unwrap_or(&all);
        let value = rows
            .iter()
            .map(|&i| match source {
                IncumbentSource::BestObserved => model.train_targets()[i],
                IncumbentSource::BestPosteriorMean => model.predict_unit(&model.train_inputs()[i]).0,
            })
            .fold(f64::NEG_INFINITY, f64::max);
        Self::new(value, source)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    #[default]
    Ei,
    Ucb,
    Qei,
    Efi,
    ScalarizedEi,
}

impl std::str::FromStr for AcquisitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ei" => Ok(AcquisitionKind::Ei),
            "ucb" => Ok(AcquisitionKind::Ucb),
            "qei" => Ok(AcquisitionKind::Qei),
            "efi" => Ok(AcquisitionKind::Efi),
            "scalarized_ei" | "parego" => Ok(AcquisitionKind::ScalarizedEi),
            other => Err(Error::arg(format!("unknown acquisition kind '{other}'"))),
        }
    }
}

/// Which criterion to use and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    pub beta: f64,
    pub mc_samples: usize,
    pub seed: u64,
    /// Fixed scalarization weights; drawn afresh per candidate when absent.
    pub weights: Option<Vec<f64>>,
    pub rho: f64,
    pub strategy: BatchStrategy,
    pub incumbent: IncumbentSource,
}

impl Default for AcquisitionSpec {
    fn default() -> Self {
        AcquisitionSpec {
            kind: AcquisitionKind::Ei,
            beta: 2.0,
            mc_samples: 512,
            seed: 0,
            weights: None,
            rho: 0.05,
            strategy: BatchStrategy::ConstantLiar,
            incumbent: IncumbentSource::BestPosteriorMean,
        }
    }
}

impl AcquisitionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::arg(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.mc_samples == 0 {
            return Err(Error::arg("mc_samples must be at least 1"));
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(Error::arg(format!("rho must be >= 0, got {}", self.rho)));
        }
        if let Some(w) = &self.weights {
            check_weights(w)?;
        }
        Ok(())
    }
}

/// A black-box constraint on one output column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub output_index: usize,
    pub threshold: f64,
    pub direction: Direction,
}

fn check_posterior(post: &Posterior) -> Result<()> {
    if !post.mean.is_finite() || !post.variance.is_finite() {
        return Err(Error::arg("posterior is not finite"));
    }
    if post.variance < 0.0 {
        return Err(Error::arg(format!("negative posterior variance {}", post.variance)));
    }
    Ok(())
}

/// `E[max(0, f - incumbent)]` for `f ~ N(mean, variance)`.
pub fn expected_improvement(post: &Posterior, incumbent: &Incumbent) -> Result<f64> {
    check_posterior(post)?;
    if !incumbent.value.is_finite() {
        return Err(Error::arg("incumbent must be finite"));
    }
    Ok(ei_raw(post.mean, post.std(), incumbent.value))
}

pub(crate) fn ei_raw(mean: f64, std: f64, best: f64) -> f64 {
    let diff = mean - best;
    if std <= 0.0 {
        return diff.max(0.0);
    }
    let z = diff / std;
    (diff * norm_cdf(z) + std * norm_pdf(z)).max(0.0)
}

/// `mean + beta * std`.
pub fn ucb(post: &Posterior, beta: f64) -> Result<f64> {
    check_posterior(post)?;
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::arg(format!("beta must be >= 0, got {beta}")));
    }
    Ok(post.mean + beta * post.std())
}

/// Monte-Carlo budget for batch criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
}

/// Quasi-random standard-normal base draws, one column per batch slot.
///
/// Column `j` depends only on `(seed, j)`, so a batch and any extension of it
/// see the same draws for their shared slots.
#[derive(Debug, Clone)]
pub struct NormalDraws {
    draws: DMatrix<f64>,
}

impl NormalDraws {
    pub fn new(samples: usize, columns: usize, seed: u64) -> Self {
        let h = ScrambledHalton::new(columns, seed);
        let mut draws = DMatrix::zeros(samples, columns);
        for i in 0..samples {
            for (j, u) in h.point(i as u64).into_iter().enumerate() {
                draws[(i, j)] = norm_inv_cdf(u.clamp(1e-12, 1.0 - 1e-12));
            }
        }
        NormalDraws { draws }
    }

    pub fn samples(&self) -> usize {
        self.draws.nrows()
    }

    pub fn columns(&self) -> usize {
        self.draws.ncols()
    }
}

/// Estimate of a batch criterion with its Monte-Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Batch EI over unit-cube points, standardized units. `weights`, when
/// given, scales each slot's improvement (feasibility weighting).
pub(crate) fn qei_unit(
    model: &GpModel,
    batch: &[Vec<f64>],
    best: f64,
    draws: &NormalDraws,
    weights: Option<&[f64]>,
) -> Result<McEstimate> {
    // Exact duplicates add nothing; keep the first occurrence.
    let mut slots: Vec<usize> = Vec::new();
    for (i, b) in batch.iter().enumerate() {
        if !slots.iter().any(|&j| batch[j] == *b) {
            slots.push(i);
        }
    }
    if slots.len() > draws.columns() {
        return Err(Error::arg(format!(
            "batch of {} needs more draw columns than the {} available",
            slots.len(),
            draws.columns()
        )));
    }
    let pts: Vec<Vec<f64>> = slots.iter().map(|&i| batch[i].clone()).collect();
    let (mean, cov) = model.joint_unit(&pts);
    let (chol, _) = factorize(&cov, 0.0, model.kernel().amplitude_sq)?;
    let l = chol.l();
    let q = pts.len();
    let s = draws.samples();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for i in 0..s {
        let mut best_gain = 0.0f64;
        for a in 0..q {
            let mut f = mean[a];
            for b in 0..=a {
                f += l[(a, b)] * draws.draws[(i, b)];
            }
            let mut gain = (f - best).max(0.0);
            if let Some(w) = weights {
                gain *= w[slots[a]];
            }
            best_gain = best_gain.max(gain);
        }
        sum += best_gain;
        sum_sq += best_gain * best_gain;
    }
    let n = s as f64;
    let value = sum / n;
    let var = if s > 1 { ((sum_sq - n * value * value) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(McEstimate {
        value,
        std_error: (var / n).sqrt(),
    })
}

/// Monte-Carlo batch expected improvement `E[max(0, max_j f(x_j) - incumbent)]`
/// using joint posterior samples; `batch` rows are in user units.
pub fn q_expected_improvement(model: &GpModel, batch: &[Vec<f64>], incumbent: &Incumbent, mc: McConfig) -> Result<McEstimate> {
    if batch.is_empty() {
        return Err(Error::arg("batch must contain at least one point"));
    }
    if mc.samples == 0 {
        return Err(Error::arg("need at least one Monte-Carlo sample"));
    }
    for p in batch {
        if p.len() != model.dim() || p.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("batch point has the wrong dimension or is not finite"));
        }
    }
    let unit: Vec<Vec<f64>> = batch.iter().map(|p| model.transform().input_map.apply(p)).collect();
    let draws = NormalDraws::new(mc.samples, batch.len(), mc.seed);
    qei_unit(model, &unit, incumbent.value, &draws, None)
}

/// Probability that a posterior satisfies `threshold` in `direction`.
pub fn feasibility_from_posterior(post: &Posterior, threshold: f64, direction: Direction) -> f64 {
    let std = post.std();
    let margin = match direction {
        Direction::Le => threshold - post.mean,
        Direction::Ge => post.mean - threshold,
    };
    if std <= 0.0 {
        return if margin >= 0.0 { 1.0 } else { 0.0 };
    }
    norm_cdf(margin / std).clamp(0.0, 1.0)
}

/// Posterior probability that the constraint holds at `query` (user units).
pub fn probability_of_feasibility(constraint_model: &GpModel, query: &[f64], spec: &ConstraintSpec) -> Result<f64> {
    if !spec.threshold.is_finite() {
        return Err(Error::arg("constraint threshold must be finite"));
    }
    let post = constraint_model.posterior(query)?;
    Ok(feasibility_from_posterior(&post, spec.threshold, spec.direction))
}

/// EFI value with a flag telling whether it degenerated to pure feasibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfiValue {
    pub value: f64,
    pub feasibility_only: bool,
}

/// `EI(query) * prod_j PoF_j(query)`, EI taken in the objective model's
/// standardized units; with no feasible incumbent yet the
/// product of feasibilities alone is returned and flagged.
pub fn expected_feasible_improvement(
    obj_model: &GpModel,
    constraint_models: &[&GpModel],
    query: &[f64],
    incumbent: Option<&Incumbent>,
    specs: &[ConstraintSpec],
) -> Result<EfiValue> {
    if specs.is_empty() {
        return Err(Error::arg("expected feasible improvement needs at least one constraint"));
    }
    if specs.len() != constraint_models.len() {
        return Err(Error::arg("one constraint model per constraint spec is required"));
    }
    let mut pof = 1.0;
    for (m, spec) in constraint_models.iter().zip(specs) {
        pof *= probability_of_feasibility(m, query, spec)?;
    }
    match incumbent {
        None => Ok(EfiValue {
            value: pof,
            feasibility_only: true,
        }),
        Some(inc) => {
            if query.len() != obj_model.dim() {
                return Err(Error::arg("query dimension does not match the objective model"));
            }
            let u = obj_model.transform().input_map.apply(query);
            let (m, v) = obj_model.predict_unit(&u);
            let ei = ei_raw(m, v.sqrt(), inc.value);
            Ok(EfiValue {
                value: ei * pof,
                feasibility_only: false,
            })
        }
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::arg("weights must not be empty"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::arg("weights must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::arg(format!("weights must sum to 1, got {total}")));
    }
    Ok(())
}

/// Augmented Chebyshev scalarization in maximization form:
/// `min_i(w_i y_i) + rho * sum_i(w_i y_i)`.
pub fn augmented_chebyshev(outputs: &[f64], weights: &[f64], rho: f64) -> Result<f64> {
    check_weights(weights)?;
    if outputs.len() != weights.len() {
        return Err(Error::arg("outputs and weights differ in length"));
    }
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::arg(format!("rho must be >= 0, got {rho}")));
    }
    if outputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("outputs must be finite"));
    }
    let weighted = outputs.iter().zip(weights).map(|(y, w)| y * w);
    let (min, sum) = weighted.fold((f64::INFINITY, 0.0), |(m, s), v| (m.min(v), s + v));
    Ok(min + rho * sum)
}

/// Uniform draw from the probability simplex.
pub fn sample_simplex<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..m).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = e.iter().sum();
    let mut w: Vec<f64> = e.iter().map(|v| v / total).collect();
    // absorb rounding so the weights sum to one
    let drift = 1.0 - w.iter().sum::<f64>();
    if let Some(last) = w.last_mut() {
        *last += drift;
    }
    w
}

/// Indices (ascending) of the non-dominated rows of `outputs`.
pub fn pareto_front(outputs: &[Vec<f64>], senses: &[Sense]) -> Vec<usize> {
    let canon: Vec<Vec<f64>> = outputs
        .iter()
        .map(|row| row.iter().zip(senses).map(|(v, s)| v * s.sign()).collect())
        .collect();
    // Lexicographically descending: a dominating row always precedes the rows it dominates.
    let mut order: Vec<usize> = (0..canon.len()).collect();
    order.sort_by(|&a, &b| {
        canon[b]
            .iter()
            .zip(&canon[a])
            .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        if !front.iter().any(|&f| dominates(&canon[f], &canon[i])) {
            front.push(i);
        }
    }
    front.sort_unstable();
    front
}

/// `a` dominates `b` when it is no worse everywhere and strictly better somewhere (maximization).
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{KernelParams, Smoothness};
    use crate::space::{DesignSpace, Variable};
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn inc(v: f64) -> Incumbent {
        Incumbent::new(v, IncumbentSource::BestObserved).unwrap()
    }

    #[test]
    fn ei_edge_cases() {
        assert_eq!(expected_improvement(&Posterior::new(0.5, 0.0), &inc(1.0)).unwrap(), 0.0);
        assert_eq!(expected_improvement(&Posterior::new(1.5, 0.0), &inc(1.0)).unwrap(), 0.5);
        let at_best = expected_improvement(&Posterior::new(2.0, 1.0), &inc(2.0)).unwrap();
        assert!((at_best - INV_SQRT_2PI).abs() < 1e-15);
        assert!((at_best - 0.398942).abs() < 1e-6);
        assert!(expected_improvement(&Posterior::new(f64::NAN, 1.0), &inc(0.0)).is_err());
        assert!(expected_improvement(&Posterior::new(0.0, -1.0), &inc(0.0)).is_err());
    }

    #[test]
    fn ucb_examples() {
        let p = Posterior::new(1.0, 4.0);
        assert_eq!(ucb(&p, 0.0).unwrap(), 1.0);
        assert_eq!(ucb(&p, 1.5).unwrap(), 4.0);
        assert!(ucb(&p, 0.5).unwrap() < ucb(&p, 0.7).unwrap());
        assert!(ucb(&p, -1.0).is_err());
    }

    #[test]
    fn feasibility_edges() {
        let p = Posterior::new(3.0, 2.0);
        assert_eq!(feasibility_from_posterior(&p, 3.0, Direction::Le), 0.5);
        let sure = Posterior::new(-100.0, 1e-20);
        assert_eq!(feasibility_from_posterior(&sure, 0.0, Direction::Le), 1.0);
        assert_eq!(feasibility_from_posterior(&Posterior::new(1.0, 0.0), 0.0, Direction::Le), 0.0);
    }

    #[test]
    fn chebyshev_one_hot() {
        let y = [0.3, -1.2, 2.0];
        assert_eq!(augmented_chebyshev(&y, &[0.0, 1.0, 0.0], 0.0).unwrap(), -1.2);
        assert!(augmented_chebyshev(&y, &[0.5, 0.6, 0.0], 0.0).is_err());
        assert!(augmented_chebyshev(&y, &[0.5, 0.5], 0.0).is_err());
    }

    #[test]
    fn pareto_small_cases() {
        let s = [Sense::Maximize, Sense::Maximize];
        assert_eq!(pareto_front(&[vec![1.0, 5.0]], &s), vec![0]);
        let rows = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![2.0, 2.0]];
        assert_eq!(pareto_front(&rows, &s), vec![2]);
        let mixed = [Sense::Maximize, Sense::Minimize];
        assert_eq!(pareto_front(&rows, &mixed), vec![1]);
        // identical rows do not dominate each other
        assert_eq!(pareto_front(&[vec![1.0, 1.0], vec![1.0, 1.0]], &s), vec![0, 1]);
    }

    #[test]
    fn simplex_weights_sum_to_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for m in 1..6 {
            let w = sample_simplex(m, &mut rng);
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(w.iter().all(|v| *v >= 0.0));
        }
    }

    fn toy_model() -> GpModel {
        let space = DesignSpace::new(vec![Variable::new("x", 0.0, 1.0), Variable::new("y", 0.0, 1.0)]).unwrap();
        let pts = vec![vec![0.1, 0.1], vec![0.4, 0.8], vec![0.9, 0.3], vec![0.6, 0.6]];
        let ys = [0.2, 1.0, -0.4, 0.7];
        let k = KernelParams::new(1.0, vec![0.3, 0.4], Smoothness::FiveHalves).unwrap();
        GpModel::from_params(&space, &pts, &ys, k, 1e-4).unwrap()
    }

    #[test]
    fn qei_duplicate_rows_match_single() {
        let m = toy_model();
        let incumbent = Incumbent::from_model(&m, IncumbentSource::BestObserved, None).unwrap();
        let mc = McConfig { samples: 1024, seed: 9 };
        let x = vec![0.3, 0.5];
        let one = q_expected_improvement(&m, std::slice::from_ref(&x), &incumbent, mc).unwrap();
        let two = q_expected_improvement(&m, &[x.clone(), x], &incumbent, mc).unwrap();
        assert_eq!(one.value, two.value);
    }

    #[test]
    fn qei_monotone_under_inclusion() {
        let m = toy_model();
        let incumbent = Incumbent::from_model(&m, IncumbentSource::BestObserved, None).unwrap();
        let mc = McConfig { samples: 512, seed: 1 };
        let a = vec![0.3, 0.5];
        let b = vec![0.8, 0.9];
        let one = q_expected_improvement(&m, std::slice::from_ref(&a), &incumbent, mc).unwrap();
        let two = q_expected_improvement(&m, &[a, b], &incumbent, mc).unwrap();
        assert!(two.value >= one.value - 3.0 * two.std_error.max(one.std_error));
    }

    proptest! {
        #[test]
        fn ei_nonnegative_and_increasing(m in -5f64..5.0, s in 1e-3f64..3.0, best in -5f64..5.0, dm in 1e-3f64..1.0) {
            let lo = expected_improvement(&Posterior::new(m, s * s), &inc(best)).unwrap();
            let hi = expected_improvement(&Posterior::new(m + dm, s * s), &inc(best)).unwrap();
            prop_assert!(lo >= 0.0);
            prop_assert!(hi > lo || (hi - lo).abs() < 1e-300);
        }

        #[test]
        fn feasibility_complement(m in -5f64..5.0, s in 1e-3f64..3.0, t in -5f64..5.0) {
            let p = Posterior::new(m, s * s);
            let le = feasibility_from_posterior(&p, t, Direction::Le);
            let ge = feasibility_from_posterior(&p, t, Direction::Ge);
            prop_assert!((0.0..=1.0).contains(&le));
            prop_assert!((le + ge - 1.0).abs() < 1e-12);
        }

        #[test]
        fn chebyshev_permutation_symmetric(y in prop::collection::vec(-3f64..3.0, 4), raw in prop::collection::vec(0.01f64..1.0, 4), rho in 0f64..0.2) {
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let base = augmented_chebyshev(&y, &w, rho);
            prop_assume!(base.is_ok());
            let perm = [2usize, 0, 3, 1];
            let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
            let wp: Vec<f64> = perm.iter().map(|&i| w[i]).collect();
            let permuted = augmented_chebyshev(&yp, &wp, rho);
            prop_assume!(permuted.is_ok());
            prop_assert!((base.unwrap() - permuted.unwrap()).abs() < 1e-12);
        }

        #[test]
        fn pareto_front_properties(rows in prop::collection::vec(prop::collection::vec(0u8..6, 3), 1..40)) {
            let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect();
            let senses = [Sense::Maximize, Sense::Minimize, Sense::Maximize];
            let front = pareto_front(&rows, &senses);
            let canon = |r: &Vec<f64>| -> Vec<f64> { r.iter().zip(&senses).map(|(v, s)| v * s.sign()).collect() };
            for &a in &front {
                for &b in &front {
                    prop_assert!(!dominates(&canon(&rows[a]), &canon(&rows[b])));
                }
            }
            for i in 0..rows.len() {
                if !front.contains(&i) {
                    prop_assert!(front.iter().any(|&f| dominates(&canon(&rows[f]), &canon(&rows[i]))));
                }
            }
        }
    }
}
