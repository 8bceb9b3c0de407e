//! Bounded continuous design spaces and the unit-cube mapping used by the models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One continuous design variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    /// Informational only.
    #[serde(default)]
    pub unit: String,
}

impl Variable {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Variable {
            name: name.into(),
            lower,
            upper,
            unit: String::new(),
        }
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = unit.into();
        self
    }

    pub fn span(&self) -> f64 {
        self.upper - self.lower
    }
}

/// A box of named, bounded variables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignSpace {
    variables: Vec<Variable>,
}

impl DesignSpace {
    pub fn new(variables: Vec<Variable>) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::arg("design space needs at least one variable"));
        }
        for (i, v) in variables.iter().enumerate() {
            if v.name.trim().is_empty() {
                return Err(Error::arg(format!("variable {i} has an empty name")));
            }
            if !(v.lower.is_finite() && v.upper.is_finite()) {
                return Err(Error::arg(format!("variable '{}' has non-finite bounds", v.name)));
            }
            if v.lower >= v.upper {
                return Err(Error::arg(format!(
                    "variable '{}' needs lower < upper (got {} >= {})",
                    v.name, v.lower, v.upper
                )));
            }
            if variables[..i].iter().any(|w| w.name == v.name) {
                return Err(Error::arg(format!("duplicate variable name '{}'", v.name)));
            }
        }
        Ok(DesignSpace { variables })
    }

    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn names(&self) -> Vec<&str> {
        self.variables.iter().map(|v| v.name.as_str()).collect()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.lower).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.upper).collect()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(&self.variables)
                .all(|(x, v)| x.is_finite() && *x >= v.lower && *x <= v.upper)
    }

    /// Describes why `point` is not a valid member of the space, if it isn't.
    pub fn violation(&self, point: &[f64]) -> Option<String> {
        if point.len() != self.dim() {
            return Some(format!("expected {} values, got {}", self.dim(), point.len()));
        }
        for (x, v) in point.iter().zip(&self.variables) {
            if !x.is_finite() {
                return Some(format!("'{}' is not finite", v.name));
            }
            if *x < v.lower || *x > v.upper {
                return Some(format!(
                    "'{}' = {} outside [{}, {}]",
                    v.name, x, v.lower, v.upper
                ));
            }
        }
        None
    }

    /// Affine map into the unit cube.
    pub fn to_unit(&self, point: &[f64]) -> Vec<f64> {
        point
            .iter()
            .zip(&self.variables)
            .map(|(x, v)| (x - v.lower) / v.span())
            .collect()
    }

    /// Inverse of [`DesignSpace::to_unit`], clamped so the result is always in bounds.
    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(&self.variables)
            .map(|(u, v)| (v.lower + u.clamp(0.0, 1.0) * v.span()).clamp(v.lower, v.upper))
            .collect()
    }

    pub fn clamp(&self, point: &[f64]) -> Vec<f64> {
        point
            .iter()
            .zip(&self.variables)
            .map(|(x, v)| x.clamp(v.lower, v.upper))
            .collect()
    }
}

impl<'de> Deserialize<'de> for DesignSpace {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            variables: Vec<Variable>,
        }
        let raw = Raw::deserialize(de)?;
        DesignSpace::new(raw.variables).map_err(serde::de::Error::custom)
    }
}

/// Maximum-norm distance between two unit-cube points.
pub(crate) fn unit_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
