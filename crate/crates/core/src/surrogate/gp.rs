use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::kernel::{self, KernelParams, Smoothness};
use super::transform::{OutputMap, Transform};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lowdisc::ScrambledHalton;
use crate::space::DesignSpace;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative jitter schedule: multiples of `amplitude_sq` added to the diagonal.
const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-4;

/// Hyperparameter search settings. All bounds apply in normalized space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub restarts: usize,
    pub seed: u64,
    pub smoothness: Smoothness,
    pub ard: bool,
    pub length_scale_bounds: (f64, f64),
    pub amplitude_bounds: (f64, f64),
    pub noise_bounds: (f64, f64),
    pub max_iters: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            restarts: 10,
            seed: 0,
            smoothness: Smoothness::FiveHalves,
            ard: true,
            length_scale_bounds: (1e-3, 10.0),
            amplitude_bounds: (1e-3, 1e3),
            noise_bounds: (1e-8, 1.0),
            max_iters: 200,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi;
        if self.restarts == 0 {
            return Err(Error::arg("fit needs at least one restart"));
        }
        if !(ok(self.length_scale_bounds) && ok(self.amplitude_bounds) && ok(self.noise_bounds)) {
            return Err(Error::arg("hyperparameter bounds must be positive with lower <= upper"));
        }
        Ok(())
    }
}

/// Mean and variance of the latent function at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
    /// Set when the query lies outside the design box.
    #[serde(default)]
    pub extrapolated: bool,
}

impl Posterior {
    pub fn new(mean: f64, variance: f64) -> Self {
        Posterior {
            mean,
            variance,
            extrapolated: false,
        }
    }

    pub fn std(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// Outcome of the hyperparameter search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub log_marginal_likelihood: f64,
    pub restarts_succeeded: usize,
    pub best_restart: usize,
    pub constant_output: bool,
}

/// A GP conditioned on training data, in normalized inputs and standardized outputs.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: KernelParams,
    noise_var: f64,
    prior_mean: f64,
    transform: Transform,
    train_x: Vec<Vec<f64>>,
    train_y: DVector<f64>,
    factor: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
    fit_info: Option<FitInfo>,
}

/// Cholesky of `k + (noise + jitter) I`, escalating jitter until it succeeds.
pub(crate) fn factorize(k: &DMatrix<f64>, noise_var: f64, amplitude_sq: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut rel = JITTER_START;
    loop {
        let jitter = rel * amplitude_sq;
        let mut m = k.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += noise_var + jitter;
        }
        if let Some(ch) = Cholesky::new(m) {
            if ch.l_dirty().diagonal().iter().all(|v| v.is_finite() && *v > 0.0) {
                return Ok((ch, jitter));
            }
        }
        if rel >= JITTER_MAX * (1.0 - 1e-12) {
            return Err(Error::Numerical(format!(
                "covariance not positive definite with jitter up to {:.0e} x amplitude",
                JITTER_MAX
            )));
        }
        rel *= 10.0;
    }
}

impl GpModel {
    /// Conditions a GP with fixed hyperparameters on unit-cube inputs and
    /// standardized targets.
    pub(crate) fn assemble(
        transform: Transform,
        train_x: Vec<Vec<f64>>,
        train_y: DVector<f64>,
        kernel: KernelParams,
        noise_var: f64,
    ) -> Result<Self> {
        kernel.validate()?;
        if !(noise_var.is_finite() && noise_var >= 0.0) {
            return Err(Error::arg(format!("noise variance must be >= 0, got {noise_var}")));
        }
        if train_x.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if let Some(p) = train_x.iter().find(|p| p.len() != kernel.dim()) {
            return Err(Error::arg(format!(
                "dimension mismatch: kernel has {} length scales, point has {}",
                kernel.dim(),
                p.len()
            )));
        }
        let k = kernel::gram(&train_x, &kernel);
        let (factor, jitter) = factorize(&k, noise_var, kernel.amplitude_sq)?;
        let prior_mean = 0.0;
        let centered = train_y.add_scalar(-prior_mean);
        let alpha = factor.solve(&centered);
        Ok(GpModel {
            kernel,
            noise_var,
            prior_mean,
            transform,
            train_x,
            train_y,
            factor,
            alpha,
            jitter,
            fit_info: None,
        })
    }

    /// Builds a model with the given hyperparameters; the output transform is
    /// fitted from `targets`.
    pub fn from_params(
        space: &DesignSpace,
        points: &[Vec<f64>],
        targets: &[f64],
        kernel: KernelParams,
        noise_var: f64,
    ) -> Result<Self> {
        check_training(space, points, targets)?;
        let transform = Transform::new(space, targets);
        Self::from_params_with_transform(transform, points, targets, kernel, noise_var)
    }

    /// Like [`GpModel::from_params`] but with a caller-supplied transform.
    pub fn from_params_with_transform(
        transform: Transform,
        points: &[Vec<f64>],
        targets: &[f64],
        kernel: KernelParams,
        noise_var: f64,
    ) -> Result<Self> {
        if points.len() != targets.len() {
            return Err(Error::arg("points and targets differ in length"));
        }
        let x: Vec<Vec<f64>> = points.iter().map(|p| transform.input_map.apply(p)).collect();
        let y = DVector::from_iterator(
            targets.len(),
            targets.iter().map(|&t| transform.output_map.apply(t)),
        );
        Self::assemble(transform, x, y, kernel, noise_var)
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn fit_info(&self) -> Option<&FitInfo> {
        self.fit_info.as_ref()
    }

    pub fn n_train(&self) -> usize {
        self.train_x.len()
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// Training inputs in the unit cube.
    pub fn train_inputs(&self) -> &[Vec<f64>] {
        &self.train_x
    }

    /// Training targets in standardized units.
    pub fn train_targets(&self) -> &DVector<f64> {
        &self.train_y
    }

    /// Lower-triangular factor of `K + (noise + jitter) I`.
    pub fn factor_l(&self) -> DMatrix<f64> {
        self.factor.l()
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Log hyperparameters: `[log l_1..log l_d, log amplitude_sq, log noise_var]`.
    pub fn log_params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.kernel.length_scales.iter().map(|l| l.ln()).collect();
        v.push(self.kernel.amplitude_sq.ln());
        v.push(self.noise_var.ln());
        v
    }

    /// Same data and transform, new log hyperparameters (layout of [`GpModel::log_params`]).
    pub fn with_log_params(&self, theta: &[f64]) -> Result<Self> {
        let d = self.dim();
        if theta.len() != d + 2 {
            return Err(Error::arg(format!("expected {} log parameters, got {}", d + 2, theta.len())));
        }
        let kernel = KernelParams::new(
            theta[d].exp(),
            theta[..d].iter().map(|t| t.exp()).collect(),
            self.kernel.smoothness,
        )?;
        Self::assemble(
            self.transform.clone(),
            self.train_x.clone(),
            self.train_y.clone(),
            kernel,
            theta[d + 1].exp(),
        )
    }

    /// Log marginal likelihood of the standardized training targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.train_y.len() as f64;
        let centered = self.train_y.add_scalar(-self.prior_mean);
        let fit = centered.dot(&self.alpha);
        let log_det: f64 = self.factor.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
        -0.5 * fit - log_det - 0.5 * n * LN_2PI
    }

    /// Gradient of [`GpModel::log_marginal_likelihood`] in the layout of
    /// [`GpModel::log_params`]. The jitter scales with the amplitude and is
    /// differentiated accordingly.
    pub fn lml_gradient(&self) -> Vec<f64> {
        let grads = kernel::gram_log_length_grads(&self.train_x, &self.kernel);
        let k = kernel::gram(&self.train_x, &self.kernel);
        let w = &self.alpha * self.alpha.transpose() - self.factor.inverse();
        let half_trace = |dk: &DMatrix<f64>| 0.5 * w.component_mul(dk).sum();
        let mut out: Vec<f64> = grads.iter().map(half_trace).collect();
        let mut amp = k;
        for i in 0..amp.nrows() {
            amp[(i, i)] += self.jitter;
        }
        out.push(half_trace(&amp));
        out.push(0.5 * self.noise_var * w.trace());
        out
    }

    /// Mean and variance in standardized units at a unit-cube point.
    pub fn predict_unit(&self, u: &[f64]) -> (f64, f64) {
        let ks = kernel::cross(&self.train_x, u, &self.kernel);
        let mean = self.prior_mean + ks.dot(&self.alpha);
        let v = self
            .factor
            .l_dirty()
            .solve_lower_triangular(&ks)
            .expect("factor has a positive diagonal");
        let var = (self.kernel.amplitude_sq - v.norm_squared()).max(0.0);
        (mean, var)
    }

    /// Joint posterior over a batch of unit-cube points, standardized units.
    pub fn joint_unit(&self, batch: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let q = batch.len();
        let n = self.train_x.len();
        let mut kxb = DMatrix::zeros(n, q);
        for (j, b) in batch.iter().enumerate() {
            kxb.set_column(j, &kernel::cross(&self.train_x, b, &self.kernel));
        }
        let mean = (kxb.transpose() * &self.alpha).add_scalar(self.prior_mean);
        let v = self
            .factor
            .l_dirty()
            .solve_lower_triangular(&kxb)
            .expect("factor has a positive diagonal");
        let mut cov = kernel::gram(batch, &self.kernel) - v.transpose() * v;
        for i in 0..q {
            for j in 0..i {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
            cov[(i, i)] = cov[(i, i)].max(0.0);
        }
        (mean, cov)
    }

    /// Posterior of the latent function at `query`, in user units.
    pub fn posterior(&self, query: &[f64]) -> Result<Posterior> {
        if query.len() != self.dim() {
            return Err(Error::arg(format!(
                "query has {} values, model expects {}",
                query.len(),
                self.dim()
            )));
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("query is not finite"));
        }
        let u = self.transform.input_map.apply(query);
        let (m, v) = self.predict_unit(&u);
        let out = &self.transform.output_map;
        Ok(Posterior {
            mean: out.invert(m),
            variance: out.invert_variance(v),
            extrapolated: u.iter().any(|x| !(-1e-12..=1.0 + 1e-12).contains(x)),
        })
    }

    /// Adds a pseudo-observation (standardized units) without refitting hyperparameters.
    pub fn condition_on(&self, u: &[f64], y_std: f64) -> Result<Self> {
        let mut x = self.train_x.clone();
        x.push(u.to_vec());
        let mut y = self.train_y.clone().insert_row(self.train_y.len(), 0.0);
        y[self.train_y.len()] = y_std;
        let mut m = Self::assemble(self.transform.clone(), x, y, self.kernel.clone(), self.noise_var)?;
        m.fit_info = self.fit_info.clone();
        Ok(m)
    }
}

fn check_training(space: &DesignSpace, points: &[Vec<f64>], targets: &[f64]) -> Result<()> {
    if points.len() != targets.len() {
        return Err(Error::arg("points and targets differ in length"));
    }
    if let Some(p) = points.iter().find(|p| p.len() != space.dim()) {
        return Err(Error::arg(format!(
            "point has {} values, space has {} variables",
            p.len(),
            space.dim()
        )));
    }
    if points.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::arg("training data contains non-finite values"));
    }
    Ok(())
}

/// Log marginal likelihood of output column `output_index` of `data` under
/// `model`'s hyperparameters and transform.
pub fn log_marginal_likelihood(model: &GpModel, data: &Dataset, output_index: usize) -> Result<f64> {
    if output_index >= data.n_outputs() {
        return Err(Error::arg(format!("no output column {output_index}")));
    }
    let targets = data.output_column(output_index);
    let m = GpModel::from_params_with_transform(
        model.transform.clone(),
        data.points(),
        &targets,
        model.kernel.clone(),
        model.noise_var,
    )?;
    Ok(m.log_marginal_likelihood())
}

/// Fits a GP to output column `output_index` of `data`.
pub fn fit_gp(space: &DesignSpace, data: &Dataset, output_index: usize, config: &FitConfig) -> Result<GpModel> {
    if output_index >= data.n_outputs() {
        return Err(Error::arg(format!("no output column {output_index}")));
    }
    fit_targets(space, data.points(), &data.output_column(output_index), config)
}

/// Fits a GP to arbitrary targets (already in the canonical sign convention).
///
/// Hyperparameters maximize the log marginal likelihood over the log-box of
/// `config`, by spectral projected gradient from `config.restarts` scrambled
/// Halton starts. Ties between restarts resolve to the lowest restart index.
pub fn fit_targets(space: &DesignSpace, points: &[Vec<f64>], targets: &[f64], config: &FitConfig) -> Result<GpModel> {
    config.validate()?;
    if points.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: points.len(),
        });
    }
    check_training(space, points, targets)?;
    let d = space.dim();
    let transform = Transform::new(space, targets);
    let x: Vec<Vec<f64>> = points.iter().map(|p| transform.input_map.apply(p)).collect();
    let y = DVector::from_iterator(targets.len(), targets.iter().map(|&t| transform.output_map.apply(t)));

    if OutputMap::is_degenerate(targets) {
        let kernel = KernelParams::isotropic(d, 1.0, 1.0_f64.clamp(config.length_scale_bounds.0, config.length_scale_bounds.1), config.smoothness)?;
        let mut m = GpModel::assemble(transform, x, y, kernel, config.noise_bounds.0)?;
        m.fit_info = Some(FitInfo {
            log_marginal_likelihood: m.log_marginal_likelihood(),
            restarts_succeeded: 0,
            best_restart: 0,
            constant_output: true,
        });
        return Ok(m);
    }

    let n_ls = if config.ard { d } else { 1 };
    let (mut lo, mut hi) = (Vec::new(), Vec::new());
    for _ in 0..n_ls {
        lo.push(config.length_scale_bounds.0.ln());
        hi.push(config.length_scale_bounds.1.ln());
    }
    lo.push(config.amplitude_bounds.0.ln());
    hi.push(config.amplitude_bounds.1.ln());
    lo.push(config.noise_bounds.0.ln());
    hi.push(config.noise_bounds.1.ln());

    let unpack = |theta: &[f64]| -> Result<(KernelParams, f64)> {
        let ls: Vec<f64> = if config.ard {
            theta[..d].iter().map(|t| t.exp()).collect()
        } else {
            vec![theta[0].exp(); d]
        };
        let kernel = KernelParams::new(theta[n_ls].exp(), ls, config.smoothness)?;
        Ok((kernel, theta[n_ls + 1].exp()))
    };

    // Negated LML and gradient in the packed layout.
    let objective = |theta: &[f64]| -> Option<(f64, Vec<f64>)> {
        let (kernel, noise) = unpack(theta).ok()?;
        let m = GpModel::assemble(transform.clone(), x.clone(), y.clone(), kernel, noise).ok()?;
        let lml = m.log_marginal_likelihood();
        if !lml.is_finite() {
            return None;
        }
        let full = m.lml_gradient();
        let mut g: Vec<f64> = if config.ard {
            full[..d].to_vec()
        } else {
            vec![full[..d].iter().sum()]
        };
        g.push(full[d]);
        g.push(full[d + 1]);
        Some((-lml, g.into_iter().map(|v| -v).collect()))
    };

    let starts = ScrambledHalton::new(lo.len(), config.seed).points(config.restarts);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut succeeded = 0;
    for (idx, u) in starts.iter().enumerate() {
        let x0: Vec<f64> = u.iter().zip(lo.iter().zip(&hi)).map(|(t, (a, b))| a + t * (b - a)).collect();
        let Some((theta, val)) = spg_minimize(&objective, &x0, &lo, &hi, config.max_iters) else {
            continue;
        };
        succeeded += 1;
        let lml = -val;
        if best.as_ref().is_none_or(|(b, _, _)| lml > *b) {
            best = Some((lml, idx, theta));
        }
    }
    let Some((lml, best_restart, theta)) = best else {
        return Err(Error::Numerical(format!(
            "all {} restarts failed to factorize the covariance (n = {}, d = {})",
            config.restarts,
            points.len(),
            d
        )));
    };
    let (kernel, noise) = unpack(&theta)?;
    let mut m = GpModel::assemble(transform, x, y, kernel, noise)?;
    m.fit_info = Some(FitInfo {
        log_marginal_likelihood: lml,
        restarts_succeeded: succeeded,
        best_restart,
        constant_output: false,
    });
    Ok(m)
}

fn project(x: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    x.iter().zip(lo.iter().zip(hi)).map(|(v, (a, b))| v.clamp(*a, *b)).collect()
}

/// Spectral projected gradient with a non-monotone Armijo line search.
/// Returns `None` when the starting point cannot be evaluated.
fn spg_minimize<F>(f: &F, x0: &[f64], lo: &[f64], hi: &[f64], max_iters: usize) -> Option<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    const MEMORY: usize = 10;
    const TOL: f64 = 1e-6;
    const LAMBDA_MIN: f64 = 1e-10;
    const LAMBDA_MAX: f64 = 1e10;

    let mut x = project(x0, lo, hi);
    let (mut fx, mut g) = f(&x)?;
    let mut history = vec![fx];
    let pg = |x: &[f64], g: &[f64], step: f64| -> Vec<f64> {
        let moved: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - step * b).collect();
        project(&moved, lo, hi).iter().zip(x).map(|(p, a)| p - a).collect()
    };
    let inf_norm = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let first = inf_norm(&pg(&x, &g, 1.0));
    let mut lambda = if first > 0.0 { (1.0 / first).clamp(LAMBDA_MIN, LAMBDA_MAX) } else { 1.0 };

    for _ in 0..max_iters {
        if inf_norm(&pg(&x, &g, 1.0)) < TOL {
            break;
        }
        let dir = pg(&x, &g, lambda);
        let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        let ref_val = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-12 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            if let Some((ft, gt)) = f(&trial) {
                if ft <= ref_val + 1e-4 * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fxn, gn)) = accepted else { break };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sty: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let sts: f64 = s.iter().map(|a| a * a).sum();
        lambda = if sty > 0.0 { (sts / sty).clamp(LAMBDA_MIN, LAMBDA_MAX) } else { LAMBDA_MAX.min(1e4) };
        x = xn;
        fx = fxn;
        g = gn;
        history.push(fx);
        if history.len() > MEMORY {
            history.remove(0);
        }
        if sts.sqrt() < 1e-12 {
            break;
        }
    }
    Some((x, fx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Variable;
    use crate::surrogate::transform::InputMap;

    fn unit_space(d: usize) -> DesignSpace {
        DesignSpace::new((0..d).map(|i| Variable::new(format!("x{i}"), 0.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn single_point_lml_is_standard_normal_log_density() {
        // n = 1, standardized target 0, k(x,x) + noise = 1.
        let transform = Transform {
            input_map: InputMap::from_space(&unit_space(1)),
            output_map: OutputMap::IDENTITY,
        };
        let kernel = KernelParams::isotropic(1, 1.0 - 1e-6, 0.5, Smoothness::FiveHalves).unwrap();
        // jitter = 1e-8 * amp, so choose noise to make the total diagonal exactly 1
        let noise = 1e-6 - 1e-8 * (1.0 - 1e-6);
        let m = GpModel::assemble(transform, vec![vec![0.3]], DVector::from_element(1, 0.0), kernel, noise).unwrap();
        assert!((m.log_marginal_likelihood() - (-0.5 * LN_2PI)).abs() < 1e-12);
        assert!((m.log_marginal_likelihood() + 0.918939).abs() < 1e-6);
    }

    #[test]
    fn noise_free_interpolation() {
        let space = unit_space(2);
        let pts = vec![vec![0.1, 0.2], vec![0.5, 0.9], vec![0.8, 0.4]];
        let ys = [1.0, -2.0, 0.5];
        let kernel = KernelParams::isotropic(2, 1.0, 0.3, Smoothness::FiveHalves).unwrap();
        let m = GpModel::from_params(&space, &pts, &ys, kernel, 0.0).unwrap();
        for (p, y) in pts.iter().zip(ys) {
            let post = m.posterior(p).unwrap();
            assert!((post.mean - y).abs() < 1e-6, "{} vs {}", post.mean, y);
            assert!(post.variance.abs() < 1e-6);
        }
    }

    #[test]
    fn far_queries_revert_to_prior() {
        let space = unit_space(1);
        let pts = vec![vec![0.0], vec![0.05], vec![0.1]];
        let ys = [3.0, 5.0, 4.0];
        let kernel = KernelParams::isotropic(1, 1.3, 0.01, Smoothness::ThreeHalves).unwrap();
        let m = GpModel::from_params(&space, &pts, &ys, kernel, 1e-4).unwrap();
        let post = m.posterior(&[1.0]).unwrap();
        let map = m.transform().output_map;
        assert!((post.mean - map.mean).abs() < 1e-9);
        assert!((post.variance - 1.3 * map.scale * map.scale).abs() < 1e-9);
        assert!(m.posterior(&[5.0]).unwrap().extrapolated);
        assert!(m.posterior(&[f64::NAN]).is_err());
    }

    #[test]
    fn fit_requires_two_points() {
        let space = unit_space(1);
        let err = fit_targets(&space, &[vec![0.5]], &[1.0], &FitConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientData { needed: 2, got: 1 }));
    }

    #[test]
    fn constant_outputs_predict_the_constant() {
        let space = unit_space(2);
        let pts = vec![vec![0.1, 0.2], vec![0.5, 0.9], vec![0.8, 0.4], vec![0.3, 0.3]];
        let ys = [7.25; 4];
        let m = fit_targets(&space, &pts, &ys, &FitConfig::default()).unwrap();
        assert_eq!(m.transform().output_map.scale, 1.0);
        assert_eq!(m.noise_var(), FitConfig::default().noise_bounds.0);
        assert!(m.fit_info().unwrap().constant_output);
        for q in [[0.0, 0.0], [0.5, 0.5], [0.9, 0.1]] {
            assert_eq!(m.posterior(&q).unwrap().mean, 7.25);
        }
    }

    #[test]
    fn conditioning_reduces_variance_at_the_new_point() {
        let space = unit_space(1);
        let pts = vec![vec![0.1], vec![0.9]];
        let kernel = KernelParams::isotropic(1, 1.0, 0.3, Smoothness::FiveHalves).unwrap();
        let m = GpModel::from_params(&space, &pts, &[0.0, 1.0], kernel, 0.0).unwrap();
        let u = [0.5];
        let (_, before) = m.predict_unit(&u);
        let m2 = m.condition_on(&u, 0.3).unwrap();
        let (mean, after) = m2.predict_unit(&u);
        assert!(after <= before + 1e-9);
        assert!(after < 1e-6);
        assert!((mean - 0.3).abs() < 1e-5);
    }
}
