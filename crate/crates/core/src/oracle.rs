//! Full second-order polynomial response surfaces used as simulation oracles.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::space::DesignSpace;

/// Monomial exponent pairs in canonical order: the constant, the linear
/// terms, then `x_i * x_j` for `i <= j` row by row.
fn monomials(d: usize) -> Vec<(Option<usize>, Option<usize>)> {
    let mut out = vec![(None, None)];
    out.extend((0..d).map(|i| (Some(i), None)));
    for i in 0..d {
        for j in i..d {
            out.push((Some(i), Some(j)));
        }
    }
    out
}

fn monomial_name(m: (Option<usize>, Option<usize>), names: &[String]) -> String {
    match m {
        (None, _) => "1".to_string(),
        (Some(i), None) => names[i].clone(),
        (Some(i), Some(j)) if i == j => format!("{}^2", names[i]),
        (Some(i), Some(j)) => format!("{}*{}", names[i], names[j]),
    }
}

fn features(x: &[f64], terms: &[(Option<usize>, Option<usize>)]) -> Vec<f64> {
    terms
        .iter()
        .map(|t| match *t {
            (None, _) => 1.0,
            (Some(i), None) => x[i],
            (Some(i), Some(j)) => x[i] * x[j],
        })
        .collect()
}

/// Least-squares quadratic `y = sum_k c_k m_k(x)`.
///
/// The fit is carried out in centered, scaled coordinates `z = (x - center) / scale`
/// and evaluated there; `coefficients` are the same polynomial expanded in user units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticOracle {
    pub variables: Vec<String>,
    pub coefficients: Vec<f64>,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub centered_coefficients: Vec<f64>,
    /// Root mean squared residual of the fit.
    pub rmse: f64,
}

impl QuadraticOracle {
    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    /// Monomial labels aligned with `coefficients`.
    pub fn monomial_names(&self) -> Vec<String> {
        monomials(self.dim())
            .into_iter()
            .map(|m| monomial_name(m, &self.variables))
            .collect()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("oracle input has the wrong dimension or is not finite"));
        }
        let z: Vec<f64> = x
            .iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(v, (c, s))| (v - c) / s)
            .collect();
        let f = features(&z, &monomials(self.dim()));
        Ok(f.iter().zip(&self.centered_coefficients).map(|(a, b)| a * b).sum())
    }
}

/// Number of coefficients of a full quadratic in `d` variables.
pub fn quadratic_terms(d: usize) -> usize {
    1 + d + d * (d + 1) / 2
}

/// Fits a full quadratic by column-scaled least squares.
///
/// Fails with [`Error::RankDeficient`] naming the monomials the design cannot
/// separate (those carrying weight in the null space of the scaled design).
pub fn fit_quadratic_oracle(variables: &[String], points: &[Vec<f64>], targets: &[f64]) -> Result<QuadraticOracle> {
    let d = variables.len();
    if d == 0 {
        return Err(Error::arg("need at least one variable"));
    }
    if points.len() != targets.len() {
        return Err(Error::arg("points and targets differ in length"));
    }
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::arg("point dimension does not match the variable list"));
    }
    if points.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::arg("training data contains non-finite values"));
    }
    let terms = monomials(d);
    let p = terms.len();
    let n = points.len();
    let (center, scale): (Vec<f64>, Vec<f64>) = (0..d)
        .map(|k| {
            let lo = points.iter().map(|q| q[k]).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|q| q[k]).fold(f64::NEG_INFINITY, f64::max);
            let half = 0.5 * (hi - lo);
            if n == 0 {
                (0.0, 1.0)
            } else {
                (0.5 * (hi + lo), if half > 0.0 { half } else { 1.0 })
            }
        })
        .unzip();
    let mut x = DMatrix::zeros(n, p);
    for (r, pt) in points.iter().enumerate() {
        let z: Vec<f64> = pt.iter().zip(center.iter().zip(&scale)).map(|(v, (c, s))| (v - c) / s).collect();
        for (c, v) in features(&z, &terms).into_iter().enumerate() {
            x[(r, c)] = v;
        }
    }
    let norms: Vec<f64> = (0..p).map(|c| x.column(c).norm()).collect();
    for (c, &s) in norms.iter().enumerate() {
        if s > 0.0 {
            x.column_mut(c).scale_mut(1.0 / s);
        }
    }
    let gram = x.transpose() * &x;
    let eig = gram.symmetric_eigen();
    let top = eig.eigenvalues.max().max(0.0);
    let mut flagged = vec![false; p];
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= 1e-10 * top {
            for (c, f) in flagged.iter_mut().enumerate() {
                if eig.eigenvectors[(c, k)].abs() > 1e-6 {
                    *f = true;
                }
            }
        }
    }
    if let Some(first) = norms.iter().position(|&s| s == 0.0) {
        flagged[first] = true;
    }
    if flagged.iter().any(|&f| f) {
        return Err(Error::RankDeficient(
            terms
                .iter()
                .zip(&flagged)
                .filter(|(_, &f)| f)
                .map(|(&t, _)| monomial_name(t, variables))
                .collect(),
        ));
    }
    let y = DVector::from_column_slice(targets);
    let scaled = x
        .clone()
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let centered: Vec<f64> = scaled.iter().zip(&norms).map(|(c, s)| c / s).collect();
    let resid = &x * &scaled - &y;
    Ok(QuadraticOracle {
        variables: variables.to_vec(),
        coefficients: expand(&centered, &terms, &center, &scale),
        center,
        scale,
        centered_coefficients: centered,
        rmse: (resid.norm_squared() / n as f64).sqrt(),
    })
}

/// Fits output column `output_index` of `data`, labeling monomials by variable name.
pub fn fit_quadratic_to_dataset(space: &DesignSpace, data: &Dataset, output_index: usize) -> Result<QuadraticOracle> {
    if output_index >= data.n_outputs() {
        return Err(Error::arg(format!("no output column {output_index}")));
    }
    let names: Vec<String> = space.names().into_iter().map(str::to_string).collect();
    fit_quadratic_oracle(&names, data.points(), &data.output_column(output_index))
}

/// Rewrites a polynomial in `z = (x - c) / s` as one in `x`.
fn expand(coefs: &[f64], terms: &[(Option<usize>, Option<usize>)], c: &[f64], s: &[f64]) -> Vec<f64> {
    let pos = |t: (Option<usize>, Option<usize>)| terms.iter().position(|&u| u == t).expect("term exists");
    let mut out = vec![0.0; terms.len()];
    for (&t, &b) in terms.iter().zip(coefs) {
        match t {
            (None, _) => out[0] += b,
            (Some(i), None) => {
                out[pos((Some(i), None))] += b / s[i];
                out[0] -= b * c[i] / s[i];
            }
            (Some(i), Some(j)) => {
                let k = b / (s[i] * s[j]);
                out[pos((Some(i), Some(j)))] += k;
                out[pos((Some(i), None))] -= k * c[j];
                out[pos((Some(j), None))] -= k * c[i];
                out[0] += k * c[i] * c[j];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(d: usize) -> Vec<String> {
        (1..=d).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn term_order_for_four_variables() {
        let o = QuadraticOracle {
            variables: names(4),
            coefficients: vec![0.0; 15],
            center: vec![0.0; 4],
            scale: vec![1.0; 4],
            centered_coefficients: vec![0.0; 15],
            rmse: 0.0,
        };
        let n = o.monomial_names();
        assert_eq!(n.len(), 15);
        assert_eq!(quadratic_terms(4), 15);
        assert_eq!(&n[..6], &["1", "x1", "x2", "x3", "x4", "x1^2"]);
        assert_eq!(&n[6..9], &["x1*x2", "x1*x3", "x1*x4"]);
        assert_eq!(n[9], "x2^2");
        assert_eq!(n[14], "x4^2");
    }

    #[test]
    fn recovers_exact_quadratic() {
        let truth = |x: &[f64]| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[0] - 3.0 * x[0] * x[1] + 4.0 * x[1] * x[1];
        let mut pts = Vec::new();
        for a in [-1.0, 0.0, 1.0] {
            for b in [-1.0, 0.0, 1.0] {
                pts.push(vec![a * 10.0, b + 100.0]);
            }
        }
        let ys: Vec<f64> = pts.iter().map(|p| truth(p)).collect();
        let o = fit_quadratic_oracle(&names(2), &pts, &ys).unwrap();
        for p in &pts {
            let v = o.evaluate(p).unwrap();
            assert!((v - truth(p)).abs() < 1e-6 * truth(p).abs().max(1.0));
        }
        let expect = [1.0, 2.0, -1.0, 0.5, -3.0, 4.0];
        for (c, e) in o.coefficients.iter().zip(expect) {
            assert!((c - e).abs() < 1e-6 * e.abs().max(1.0), "{c} vs {e}");
        }
    }

    #[test]
    fn two_level_design_cannot_fit_squares() {
        let mut pts = Vec::new();
        for a in [0.0, 1.0] {
            for b in [0.0, 1.0] {
                for c in [0.0, 1.0] {
                    pts.push(vec![a, b, c]);
                }
            }
        }
        let ys = vec![1.0; pts.len()];
        match fit_quadratic_oracle(&names(3), &pts, &ys) {
            Err(Error::RankDeficient(m)) => {
                assert!(m.contains(&"x1^2".to_string()));
                assert!(m.contains(&"1".to_string()));
                assert!(!m.contains(&"x1".to_string()));
                assert!(!m.contains(&"x1*x2".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
