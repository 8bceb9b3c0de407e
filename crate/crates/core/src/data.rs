//! Observed designs and their measured responses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowRejection};
use crate::space::DesignSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Maximize,
    Minimize,
}

impl Sense {
    /// Multiplier mapping user units onto the canonical maximization scale.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        }
    }
}

impl std::str::FromStr for Sense {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "max" | "maximize" => Ok(Sense::Maximize),
            "min" | "minimize" => Ok(Sense::Minimize),
            other => Err(Error::arg(format!("unknown sense '{other}'"))),
        }
    }
}

/// Feasible side of a constraint threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Feasible when the output is at most the threshold.
    Le,
    /// Feasible when the output is at least the threshold.
    Ge,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "le" | "<=" => Ok(Direction::Le),
            "ge" | ">=" => Ok(Direction::Ge),
            other => Err(Error::arg(format!("unknown constraint direction '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum OutputRole {
    Objective { sense: Sense },
    Constraint { threshold: f64, direction: Direction },
    /// Carried along but never modeled (e.g. a validity flag).
    Auxiliary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputColumn {
    pub name: String,
    #[serde(flatten)]
    pub role: OutputRole,
}

impl OutputColumn {
    pub fn objective(name: impl Into<String>, sense: Sense) -> Self {
        OutputColumn {
            name: name.into(),
            role: OutputRole::Objective { sense },
        }
    }

    pub fn constraint(name: impl Into<String>, threshold: f64, direction: Direction) -> Self {
        OutputColumn {
            name: name.into(),
            role: OutputRole::Constraint {
                threshold,
                direction,
            },
        }
    }
}

/// A design point together with every measured output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub point: Vec<f64>,
    pub outputs: Vec<f64>,
}

impl Observation {
    pub fn new(point: Vec<f64>, outputs: Vec<f64>) -> Self {
        Observation { point, outputs }
    }
}

/// Observed designs (user units, row-major) and outputs with per-column roles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    columns: Vec<OutputColumn>,
    points: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(columns: Vec<OutputColumn>) -> Result<Self> {
        for (i, c) in columns.iter().enumerate() {
            if c.name.trim().is_empty() {
                return Err(Error::arg(format!("output column {i} has an empty name")));
            }
            if columns[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::arg(format!("duplicate output column '{}'", c.name)));
            }
            if let OutputRole::Constraint { threshold, .. } = c.role {
                if !threshold.is_finite() {
                    return Err(Error::arg(format!(
                        "constraint '{}' has a non-finite threshold",
                        c.name
                    )));
                }
            }
        }
        Ok(Dataset {
            columns,
            points: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn columns(&self) -> &[OutputColumn] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_outputs(&self) -> usize {
        self.columns.len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    pub fn output_column(&self, index: usize) -> Vec<f64> {
        self.outputs.iter().map(|row| row[index]).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Checks a row against `space` and this dataset's output arity.
    pub fn check_row(&self, space: &DesignSpace, obs: &Observation) -> Option<String> {
        if let Some(msg) = space.violation(&obs.point) {
            return Some(msg);
        }
        if obs.outputs.len() != self.columns.len() {
            return Some(format!(
                "expected {} outputs, got {}",
                self.columns.len(),
                obs.outputs.len()
            ));
        }
        obs.outputs
            .iter()
            .zip(&self.columns)
            .find(|(y, _)| !y.is_finite())
            .map(|(_, c)| format!("output '{}' is missing or not finite", c.name))
    }

    /// Appends every row or none; offending rows are reported together.
    pub fn extend(&mut self, space: &DesignSpace, rows: &[Observation]) -> Result<()> {
        let rejected: Vec<RowRejection> = rows
            .iter()
            .enumerate()
            .filter_map(|(row, obs)| {
                self.check_row(space, obs)
                    .map(|reason| RowRejection { row, reason })
            })
            .collect();
        if !rejected.is_empty() {
            return Err(Error::RejectedRows(rejected));
        }
        for obs in rows {
            self.points.push(obs.point.clone());
            self.outputs.push(obs.outputs.clone());
        }
        Ok(())
    }

    /// Rebuilds a dataset from stored arrays, validating shapes.
    pub fn from_parts(
        columns: Vec<OutputColumn>,
        points: Vec<Vec<f64>>,
        outputs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mut data = Dataset::new(columns)?;
        if points.len() != outputs.len() {
            return Err(Error::Schema(format!(
                "{} points but {} output rows",
                points.len(),
                outputs.len()
            )));
        }
        let dim = points.first().map_or(0, Vec::len);
        for (i, (p, y)) in points.iter().zip(&outputs).enumerate() {
            if p.len() != dim || y.len() != data.columns.len() {
                return Err(Error::Schema(format!("row {i} has the wrong arity")));
            }
        }
        data.points = points;
        data.outputs = outputs;
        Ok(data)
    }

    /// Subset of rows by index, in the given order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            columns: self.columns.clone(),
            points: rows.iter().map(|&i| self.points[i].clone()).collect(),
            outputs: rows.iter().map(|&i| self.outputs[i].clone()).collect(),
        }
    }
}

impl<'de> Deserialize<'de> for Dataset {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            columns: Vec<OutputColumn>,
            points: Vec<Vec<f64>>,
            outputs: Vec<Vec<f64>>,
        }
        let raw = Raw::deserialize(de)?;
        Dataset::from_parts(raw.columns, raw.points, raw.outputs).map_err(serde::de::Error::custom)
    }
}
