//! Gaussian-process preference learning from pairwise comparisons, with a
//! Laplace approximation of the latent posterior.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::acqopt::{maximize_acquisition, Maximum, OptBudget};
use crate::acquisition::{ei_raw, norm_cdf, norm_pdf};
use crate::data::Sense;
use crate::error::{Error, Result};
use crate::space::DesignSpace;
use crate::surrogate::{cross, factorize, gram, InputMap, KernelParams, Posterior, Smoothness};

/// `winner` was preferred to `loser`; both index the model's points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub winner: usize,
    pub loser: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreferenceConfig {
    /// Noise of the latent utility in the probit likelihood.
    pub sigma_pref: f64,
    pub amplitude_sq: f64,
    pub smoothness: Smoothness,
    /// Fixed isotropic length scale (unit-cube units); chosen from
    /// `length_scale_grid` by Laplace evidence when absent.
    pub length_scale: Option<f64>,
    pub length_scale_grid: Vec<f64>,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for PreferenceConfig {
    fn default() -> Self {
        PreferenceConfig {
            sigma_pref: 0.1,
            amplitude_sq: 1.0,
            smoothness: Smoothness::FiveHalves,
            length_scale: None,
            length_scale_grid: vec![0.05, 0.1, 0.2, 0.3, 0.5, 1.0, 2.0],
            max_iters: 200,
            tolerance: 1e-6,
        }
    }
}

/// Pairwise preferences among `validity.len()` designs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceSet {
    pub pairs: Vec<Comparison>,
    /// `false` marks a design that takes part in no comparison and is left
    /// out of the latent model.
    pub validity: Vec<bool>,
}

impl PreferenceSet {
    pub fn new(pairs: Vec<Comparison>, validity: Vec<bool>) -> Result<Self> {
        let n = validity.len();
        for c in &pairs {
            if c.winner >= n || c.loser >= n {
                return Err(Error::arg(format!(
                    "pair ({}, {}) references a design outside 0..{n}",
                    c.winner, c.loser
                )));
            }
            if c.winner == c.loser {
                return Err(Error::arg(format!("pair ({0}, {0}) compares a design with itself", c.winner)));
            }
            if pairs.iter().any(|o| o.winner == c.loser && o.loser == c.winner) {
                return Err(Error::arg(format!("pairs ({0}, {1}) and ({1}, {0}) contradict", c.winner, c.loser)));
            }
        }
        Ok(PreferenceSet { pairs, validity })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Preferences from measurements known to within `error_bound`: design `i`
/// beats `j` only when their intervals `[y - e, y + e]` are disjoint.
pub fn build_preferences(outputs: &[f64], error_bound: f64, sense: Sense) -> Result<PreferenceSet> {
    build_preferences_with_validity(outputs, error_bound, sense, &vec![true; outputs.len()])
}

/// As [`build_preferences`], with invalid designs excluded from every pair.
pub fn build_preferences_with_validity(outputs: &[f64], error_bound: f64, sense: Sense, validity: &[bool]) -> Result<PreferenceSet> {
    if !(error_bound.is_finite() && error_bound >= 0.0) {
        return Err(Error::arg(format!("error bound must be finite and >= 0, got {error_bound}")));
    }
    if validity.len() != outputs.len() {
        return Err(Error::arg("outputs and validity flags differ in length"));
    }
    if outputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("outputs must be finite"));
    }
    let e = error_bound;
    let mut pairs = Vec::new();
    for i in 0..outputs.len() {
        for j in 0..outputs.len() {
            if i == j || !validity[i] || !validity[j] {
                continue;
            }
            let better = match sense {
                Sense::Minimize => outputs[i] + e < outputs[j] - e,
                Sense::Maximize => outputs[i] - e > outputs[j] + e,
            };
            if better {
                pairs.push(Comparison { winner: i, loser: j });
            }
        }
    }
    PreferenceSet::new(pairs, validity.to_vec())
}

/// `phi(z) / Phi(z)`, stable far into the lower tail.
fn inverse_mills(z: f64) -> f64 {
    if z < -30.0 {
        let z2 = z * z;
        -z + 1.0 / -z * (1.0 - 2.0 / z2)
    } else {
        norm_pdf(z) / norm_cdf(z)
    }
}

fn log_norm_cdf(z: f64) -> f64 {
    if z < -30.0 {
        -0.5 * z * z - (-z).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 1.0 / (z * z)
    } else {
        norm_cdf(z).ln()
    }
}

/// Laplace-approximated latent utility over observed points.
#[derive(Debug, Clone)]
pub struct PreferenceModel {
    input_map: InputMap,
    train_x: Vec<Vec<f64>>,
    kernel: KernelParams,
    sigma_pref: f64,
    comparisons: Vec<Comparison>,
    /// Row of each modeled design in the caller's point list.
    rows: Vec<usize>,
    mode: DVector<f64>,
    /// `K^-1 f` at the mode, equal to the likelihood gradient there.
    alpha: DVector<f64>,
    /// `L^-1 W^(1/2)` with `L L' = I + W^(1/2) K W^(1/2)`; the latent variance
    /// is `k** - |R k*|^2`.
    var_root: DMatrix<f64>,
    mode_cov: DMatrix<f64>,
    log_evidence: f64,
    iterations: usize,
}

struct Laplace {
    alpha: DVector<f64>,
    mode: DVector<f64>,
    w: DMatrix<f64>,
    psi: f64,
    iterations: usize,
}

fn likelihood_terms(f: &DVector<f64>, comps: &[Comparison], sigma: f64) -> (f64, DVector<f64>, DMatrix<f64>) {
    let n = f.len();
    let s = std::f64::consts::SQRT_2 * sigma;
    let mut ll = 0.0;
    let mut grad = DVector::zeros(n);
    let mut w = DMatrix::zeros(n, n);
    for c in comps {
        let z = (f[c.winner] - f[c.loser]) / s;
        ll += log_norm_cdf(z);
        let r = inverse_mills(z);
        grad[c.winner] += r / s;
        grad[c.loser] -= r / s;
        let h = r * (z + r) / (s * s);
        w[(c.winner, c.winner)] += h;
        w[(c.loser, c.loser)] += h;
        w[(c.winner, c.loser)] -= h;
        w[(c.loser, c.winner)] -= h;
    }
    (ll, grad, w)
}

/// Damped Newton iterations for the posterior mode, parameterized by
/// `a = K^-1 f` so that `K` is never inverted.
fn find_mode(k: &DMatrix<f64>, comps: &[Comparison], sigma: f64, max_iters: usize, tol: f64) -> Result<Laplace> {
    let n = k.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut a = DVector::zeros(n);
    let mut f = DVector::zeros(n);
    let (mut psi, mut grad, mut w) = likelihood_terms(&f, comps, sigma);
    for it in 0..=max_iters {
        let gnorm = (&grad - &a).norm();
        if gnorm < tol {
            return Ok(Laplace {
                alpha: a,
                mode: f,
                w,
                psi,
                iterations: it,
            });
        }
        if it == max_iters {
            return Err(Error::Convergence {
                iterations: max_iters,
                grad_norm: gnorm,
            });
        }
        let b_mat = &eye + &w * k;
        let rhs = &w * &f + &grad;
        let b = b_mat
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("singular Newton system".into()))?;
        let step = &b - &a;
        let mut t = 1.0;
        loop {
            let a_try = &a + &step * t;
            let f_try = k * &a_try;
            let (ll_try, g_try, w_try) = likelihood_terms(&f_try, comps, sigma);
            let psi_try = ll_try - 0.5 * a_try.dot(&f_try);
            if psi_try >= psi || t < 1e-10 {
                a = a_try;
                f = f_try;
                grad = g_try;
                w = w_try;
                psi = psi_try;
                break;
            }
            t *= 0.5;
        }
    }
    unreachable!("loop returns on convergence or on the last iteration")
}

fn build(
    input_map: InputMap,
    train_x: Vec<Vec<f64>>,
    rows: Vec<usize>,
    comparisons: Vec<Comparison>,
    kernel: KernelParams,
    config: &PreferenceConfig,
) -> Result<PreferenceModel> {
    let n = train_x.len();
    let mut k = gram(&train_x, &kernel);
    let jitter = 1e-8 * kernel.amplitude_sq;
    for i in 0..n {
        k[(i, i)] += jitter;
    }
    let lap = find_mode(&k, &comparisons, config.sigma_pref, config.max_iters, config.tolerance)?;
    let eye = DMatrix::<f64>::identity(n, n);
    let sym_sqrt = |m: &DMatrix<f64>| {
        let e = m.clone().symmetric_eigen();
        let root = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
        &e.eigenvectors * root * e.eigenvectors.transpose()
    };
    let w_half = sym_sqrt(&lap.w);
    let b = &eye + &w_half * &k * &w_half;
    let l = nalgebra::Cholesky::new((&b + b.transpose()) * 0.5)
        .ok_or_else(|| Error::Numerical("Laplace system is not positive definite".into()))?
        .l();
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let var_root = l
        .solve_lower_triangular(&w_half)
        .ok_or_else(|| Error::Numerical("singular Laplace factor".into()))?;
    // Covariance as S (I + S W S)^-1 S with S = K^(1/2), positive semidefinite
    // by construction unlike K - K M K.
    let s = sym_sqrt(&k);
    let c = &eye + &s * &lap.w * &s;
    let c = nalgebra::Cholesky::new((&c + c.transpose()) * 0.5)
        .ok_or_else(|| Error::Numerical("Laplace system is not positive definite".into()))?;
    let mut mode_cov = &s * c.solve(&s);
    mode_cov = (&mode_cov + mode_cov.transpose()) * 0.5;
    Ok(PreferenceModel {
        input_map,
        train_x,
        kernel,
        sigma_pref: config.sigma_pref,
        comparisons,
        rows,
        mode: lap.mode,
        alpha: lap.alpha,
        var_root,
        mode_cov,
        log_evidence: lap.psi - 0.5 * log_det,
        iterations: lap.iterations,
    })
}

/// Fits a preference GP to `points` (user units) and the valid designs of `prefs`.
///
/// Comparisons in the fitted model are re-indexed over the valid designs;
/// [`PreferenceModel::rows`] maps them back to `points`.
pub fn fit_preference_gp(
    space: &DesignSpace,
    points: &[Vec<f64>],
    prefs: &PreferenceSet,
    config: &PreferenceConfig,
) -> Result<PreferenceModel> {
    if !(config.sigma_pref.is_finite() && config.sigma_pref > 0.0) {
        return Err(Error::arg(format!("sigma_pref must be positive, got {}", config.sigma_pref)));
    }
    if prefs.validity.len() != points.len() {
        return Err(Error::arg(format!(
            "{} validity flags for {} points",
            prefs.validity.len(),
            points.len()
        )));
    }
    let prefs = PreferenceSet::new(prefs.pairs.clone(), prefs.validity.clone())?;
    let rows: Vec<usize> = (0..points.len()).filter(|&i| prefs.validity[i]).collect();
    let mut slot = vec![usize::MAX; points.len()];
    for (k, &r) in rows.iter().enumerate() {
        slot[r] = k;
    }
    let comparisons: Vec<Comparison> = prefs
        .pairs
        .iter()
        .filter(|c| prefs.validity[c.winner] && prefs.validity[c.loser])
        .map(|c| Comparison {
            winner: slot[c.winner],
            loser: slot[c.loser],
        })
        .collect();
    if comparisons.is_empty() {
        return Err(Error::arg("at least one comparison between valid designs is required"));
    }
    for &r in &rows {
        if let Some(msg) = space.violation(&points[r]) {
            return Err(Error::arg(format!("point {r}: {msg}")));
        }
    }
    let input_map = InputMap::from_space(space);
    let unit: Vec<Vec<f64>> = rows.iter().map(|&r| input_map.apply(&points[r])).collect();
    let d = space.dim();
    let grid: Vec<f64> = match config.length_scale {
        Some(l) => vec![l],
        None => config.length_scale_grid.clone(),
    };
    if grid.is_empty() {
        return Err(Error::arg("length-scale grid is empty"));
    }
    let mut best: Option<PreferenceModel> = None;
    let mut last_err = None;
    for l in grid {
        let kernel = KernelParams::isotropic(d, config.amplitude_sq, l, config.smoothness)?;
        match build(input_map.clone(), unit.clone(), rows.clone(), comparisons.clone(), kernel, config) {
            Ok(m) => {
                if best.as_ref().is_none_or(|b| m.log_evidence > b.log_evidence) {
                    best = Some(m);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.expect("grid is non-empty"))
}

impl PreferenceModel {
    /// Latent utilities at the training points (posterior mode).
    pub fn mode(&self) -> &DVector<f64> {
        &self.mode
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn sigma_pref(&self) -> f64 {
        self.sigma_pref
    }

    pub fn comparisons(&self) -> &[Comparison] {
        &self.comparisons
    }

    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Row in the original point list of each modeled design.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn n_train(&self) -> usize {
        self.train_x.len()
    }

    /// Laplace covariance of the latent values at the training points.
    pub fn mode_covariance(&self) -> &DMatrix<f64> {
        &self.mode_cov
    }

    /// Lower Cholesky factor of [`PreferenceModel::mode_covariance`].
    pub fn mode_covariance_factor(&self) -> Result<DMatrix<f64>> {
        let (ch, _) = factorize(&self.mode_cov, 0.0, self.kernel.amplitude_sq)?;
        Ok(ch.l())
    }

    fn predict_unit(&self, u: &[f64]) -> (f64, f64) {
        let ks = cross(&self.train_x, u, &self.kernel);
        let mean = ks.dot(&self.alpha);
        let var = (self.kernel.amplitude_sq - (&self.var_root * &ks).norm_squared()).max(0.0);
        (mean, var)
    }

    /// Latent utility posterior at `query` (user units).
    pub fn posterior(&self, query: &[f64]) -> Result<Posterior> {
        if query.len() != self.kernel.dim() || query.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("query has the wrong dimension or is not finite"));
        }
        let u = self.input_map.apply(query);
        let (mean, variance) = self.predict_unit(&u);
        let mut post = Posterior::new(mean, variance);
        post.extrapolated = u.iter().any(|x| !(-1e-12..=1.0 + 1e-12).contains(x));
        Ok(post)
    }

    /// Next point to test: maximizer of expected improvement of the latent
    /// utility over the best mode value.
    pub fn suggest(&self, space: &DesignSpace, budget: &OptBudget) -> Result<Maximum> {
        if space.dim() != self.kernel.dim() {
            return Err(Error::arg("space and model differ in dimension"));
        }
        let best = self.mode.max();
        maximize_acquisition(
            |x| {
                let (m, v) = self.predict_unit(&self.input_map.apply(x));
                ei_raw(m, v.sqrt(), best)
            },
            space,
            budget,
        )
    }
}

/// Convenience wrapper for [`PreferenceModel::suggest`].
pub fn suggest_preferential(model: &PreferenceModel, space: &DesignSpace, budget: &OptBudget) -> Result<Maximum> {
    model.suggest(space, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Variable;

    #[test]
    fn interval_rule() {
        let y = [1.0, 2.0, 1.5];
        let p = build_preferences(&y, 0.3, Sense::Minimize).unwrap();
        assert_eq!(p.pairs, vec![Comparison { winner: 0, loser: 1 }]);
        let p = build_preferences_with_validity(&y, 0.3, Sense::Minimize, &[true, false, true]).unwrap();
        assert!(p.is_empty());
        let p = build_preferences(&y, 0.3, Sense::Maximize).unwrap();
        assert_eq!(p.pairs, vec![Comparison { winner: 1, loser: 0 }]);
        assert!(build_preferences(&y, -1.0, Sense::Maximize).is_err());
    }

    #[test]
    fn set_invariants() {
        let c = |w, l| Comparison { winner: w, loser: l };
        assert!(PreferenceSet::new(vec![c(0, 0)], vec![true; 2]).is_err());
        assert!(PreferenceSet::new(vec![c(0, 1), c(1, 0)], vec![true; 2]).is_err());
        assert!(PreferenceSet::new(vec![c(0, 2)], vec![true; 2]).is_err());
    }

    #[test]
    fn mills_ratio_is_continuous_at_switch() {
        let a = inverse_mills(-30.0 - 1e-9);
        let b = inverse_mills(-30.0 + 1e-9);
        assert!((a - b).abs() / b < 1e-6);
        let la = log_norm_cdf(-30.0 - 1e-9);
        let lb = log_norm_cdf(-30.0 + 1e-9);
        assert!((la - lb).abs() / lb.abs() < 1e-6);
    }

    #[test]
    fn winners_get_higher_utility() {
        let space = DesignSpace::new(vec![Variable::new("x", 0.0, 1.0)]).unwrap();
        let pts = vec![vec![0.1], vec![0.5], vec![0.9]];
        let comps = vec![Comparison { winner: 1, loser: 0 }, Comparison { winner: 1, loser: 2 }];
        let prefs = PreferenceSet::new(comps, vec![true; 3]).unwrap();
        let m = fit_preference_gp(&space, &pts, &prefs, &PreferenceConfig::default()).unwrap();
        assert!(m.mode()[1] > m.mode()[0]);
        assert!(m.mode()[1] > m.mode()[2]);
        let s = m.suggest(&space, &OptBudget::default()).unwrap();
        assert!(space.contains(&s.point));
    }

    #[test]
    fn rejects_bad_input() {
        let space = DesignSpace::new(vec![Variable::new("x", 0.0, 1.0)]).unwrap();
        let pts = vec![vec![0.1], vec![0.5]];
        let cfg = PreferenceConfig::default();
        let set = |pairs| PreferenceSet {
            pairs,
            validity: vec![true; 2],
        };
        assert!(fit_preference_gp(&space, &pts, &set(vec![]), &cfg).is_err());
        assert!(fit_preference_gp(&space, &pts, &set(vec![Comparison { winner: 0, loser: 0 }]), &cfg).is_err());
        assert!(fit_preference_gp(&space, &pts, &set(vec![Comparison { winner: 0, loser: 5 }]), &cfg).is_err());
        let invalid = PreferenceSet {
            pairs: vec![Comparison { winner: 0, loser: 1 }],
            validity: vec![true, false],
        };
        assert!(fit_preference_gp(&space, &pts, &invalid, &cfg).is_err());
    }
}
