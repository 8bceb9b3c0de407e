//! ARD Matern covariance functions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT5: f64 = 2.236_067_977_499_79;

/// Matern smoothness parameter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    /// nu = 1/2 (exponential kernel)
    Half,
    /// nu = 3/2
    ThreeHalves,
    /// nu = 5/2
    #[default]
    FiveHalves,
}

impl Smoothness {
    pub const ALL: [Smoothness; 3] = [
        Smoothness::Half,
        Smoothness::ThreeHalves,
        Smoothness::FiveHalves,
    ];

    /// Correlation as a function of scaled distance; equals 1 at r = 0.
    pub fn correlation(self, r: f64) -> f64 {
        match self {
            Smoothness::Half => (-r).exp(),
            Smoothness::ThreeHalves => {
                let s = SQRT3 * r;
                (1.0 + s) * (-s).exp()
            }
            Smoothness::FiveHalves => {
                let s = SQRT5 * r;
                (1.0 + s + 5.0 / 3.0 * r * r) * (-s).exp()
            }
        }
    }

    /// `g'(r) / r`, finite at r = 0 except for nu = 1/2 where the caller's
    /// factor of r^2 makes the product vanish.
    fn slope_over_r(self, r: f64) -> f64 {
        match self {
            Smoothness::Half => {
                if r > 0.0 {
                    -(-r).exp() / r
                } else {
                    0.0
                }
            }
            Smoothness::ThreeHalves => -3.0 * (-SQRT3 * r).exp(),
            Smoothness::FiveHalves => -5.0 / 3.0 * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp(),
        }
    }
}

impl std::str::FromStr for Smoothness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half" | "0.5" | "1/2" => Ok(Smoothness::Half),
            "three_halves" | "1.5" | "3/2" => Ok(Smoothness::ThreeHalves),
            "five_halves" | "2.5" | "5/2" => Ok(Smoothness::FiveHalves),
            other => Err(Error::arg(format!("unknown smoothness '{other}'"))),
        }
    }
}

/// Signal variance, per-dimension length scales and smoothness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub amplitude_sq: f64,
    pub length_scales: Vec<f64>,
    #[serde(default)]
    pub smoothness: Smoothness,
}

impl KernelParams {
    pub fn new(amplitude_sq: f64, length_scales: Vec<f64>, smoothness: Smoothness) -> Result<Self> {
        let p = KernelParams {
            amplitude_sq,
            length_scales,
            smoothness,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn isotropic(dim: usize, amplitude_sq: f64, length_scale: f64, smoothness: Smoothness) -> Result<Self> {
        Self::new(amplitude_sq, vec![length_scale; dim], smoothness)
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.amplitude_sq) {
            return Err(Error::arg(format!(
                "amplitude_sq must be positive and finite, got {}",
                self.amplitude_sq
            )));
        }
        if self.length_scales.is_empty() {
            return Err(Error::arg("kernel needs at least one length scale"));
        }
        if let Some(bad) = self.length_scales.iter().find(|&&l| !ok(l)) {
            return Err(Error::arg(format!(
                "length scales must be positive and finite, got {bad}"
            )));
        }
        Ok(())
    }

    fn scaled_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.length_scales)
            .map(|((x, y), l)| {
                let t = (x - y) / l;
                t * t
            })
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.amplitude_sq * self.smoothness.correlation(self.scaled_distance(a, b))
    }
}

/// Matern covariance between two points.
pub fn matern_kernel(a: &[f64], b: &[f64], params: &KernelParams) -> Result<f64> {
    if a.len() != params.dim() || b.len() != params.dim() {
        return Err(Error::arg(format!(
            "dimension mismatch: kernel has {} length scales, points have {} and {}",
            params.dim(),
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::arg("kernel input is not finite"));
    }
    Ok(params.eval(a, b))
}

/// Gram matrix over `points`, filled symmetrically with the amplitude on the diagonal.
pub fn kernel_matrix(points: &[Vec<f64>], params: &KernelParams) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::arg("kernel matrix needs at least one point"));
    }
    for p in points {
        if p.len() != params.dim() {
            return Err(Error::arg(format!(
                "dimension mismatch: kernel has {} length scales, point has {}",
                params.dim(),
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("kernel input is not finite"));
        }
    }
    Ok(gram(points, params))
}

pub(crate) fn gram(points: &[Vec<f64>], params: &KernelParams) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = params.amplitude_sq;
        for j in (i + 1)..n {
            let v = params.eval(&points[i], &points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

pub(crate) fn cross(points: &[Vec<f64>], query: &[f64], params: &KernelParams) -> DVector<f64> {
    DVector::from_iterator(points.len(), points.iter().map(|p| params.eval(p, query)))
}

/// Derivatives of the Gram matrix with respect to each log length scale.
pub(crate) fn gram_log_length_grads(points: &[Vec<f64>], params: &KernelParams) -> Vec<DMatrix<f64>> {
    let n = points.len();
    let d = params.dim();
    let mut grads = vec![DMatrix::zeros(n, n); d];
    for i in 0..n {
        for j in (i + 1)..n {
            let r = params.scaled_distance(&points[i], &points[j]);
            let s = params.amplitude_sq * params.smoothness.slope_over_r(r);
            for (m, g) in grads.iter_mut().enumerate() {
                let t = (points[i][m] - points[j][m]) / params.length_scales[m];
                // dk/dlog(l_m) = a * g'(r) * dr/dlog(l_m),  dr/dlog(l_m) = -t^2 / r
                let v = -s * t * t;
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_equals_amplitude() {
        for nu in Smoothness::ALL {
            let p = KernelParams::isotropic(3, 2.5, 0.7, nu).unwrap();
            let a = [0.1, -2.0, 3.3];
            assert_eq!(matern_kernel(&a, &a, &p).unwrap(), 2.5);
        }
    }

    #[test]
    fn exponential_at_unit_distance() {
        let p = KernelParams::isotropic(1, 1.0, 1.0, Smoothness::Half).unwrap();
        let v = matern_kernel(&[0.0], &[1.0], &p).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn argument_errors() {
        let p = KernelParams::isotropic(2, 1.0, 1.0, Smoothness::FiveHalves).unwrap();
        assert!(matern_kernel(&[0.0], &[1.0, 2.0], &p).is_err());
        assert!(matern_kernel(&[0.0, f64::NAN], &[1.0, 2.0], &p).is_err());
        assert!(KernelParams::new(0.0, vec![1.0], Smoothness::Half).is_err());
        assert!(KernelParams::new(1.0, vec![1.0, -1.0], Smoothness::Half).is_err());
        assert!(kernel_matrix(&[], &p).is_err());
    }

    #[test]
    fn single_point_gram() {
        let p = KernelParams::isotropic(2, 3.0, 0.4, Smoothness::ThreeHalves).unwrap();
        let k = kernel_matrix(&[vec![0.3, 0.9]], &p).unwrap();
        assert_eq!(k.shape(), (1, 1));
        assert_eq!(k[(0, 0)], 3.0);
    }

    #[test]
    fn length_scale_gradient_matches_finite_difference() {
        let pts = vec![vec![0.1, 0.5], vec![0.4, 0.2], vec![0.9, 0.7]];
        for nu in Smoothness::ALL {
            let p = KernelParams::new(1.7, vec![0.3, 0.8], nu).unwrap();
            let grads = gram_log_length_grads(&pts, &p);
            for m in 0..2 {
                let h: f64 = 1e-6;
                let mut up = p.clone();
                up.length_scales[m] *= h.exp();
                let mut dn = p.clone();
                dn.length_scales[m] *= (-h).exp();
                let fd = (gram(&pts, &up) - gram(&pts, &dn)) / (2.0 * h);
                assert!((fd - &grads[m]).abs().max() < 1e-7, "nu={nu:?} m={m}");
            }
        }
    }
}
