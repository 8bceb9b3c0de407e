use serde::{Deserialize, Serialize};

use crate::space::DesignSpace;

/// Per-dimension affine map of the design box onto the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputMap {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputMap {
    pub fn from_space(space: &DesignSpace) -> Self {
        InputMap {
            offset: space.lower(),
            scale: space.variables().iter().map(|v| v.span()).collect(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (o, s))| (v - o) / s)
            .collect()
    }

    pub fn invert(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (o, s))| o + v * s)
            .collect()
    }
}

/// Standardization of one output column to zero mean and unit sample variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputMap {
    pub mean: f64,
    pub scale: f64,
}

impl OutputMap {
    pub const IDENTITY: OutputMap = OutputMap {
        mean: 0.0,
        scale: 1.0,
    };

    /// Fits mean and sample standard deviation (n - 1 denominator). A constant
    /// column, or a single value, keeps unit scale.
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::IDENTITY;
        }
        if Self::is_degenerate(values) {
            return OutputMap {
                mean: values[0],
                scale: 1.0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return OutputMap { mean, scale: 1.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        let tiny = 1e-12 * mean.abs().max(1e-300);
        if !std.is_finite() || std <= tiny {
            OutputMap { mean, scale: 1.0 }
        } else {
            OutputMap { mean, scale: std }
        }
    }

    pub fn is_degenerate(values: &[f64]) -> bool {
        match values.first() {
            Some(first) => values.iter().all(|v| v == first),
            None => true,
        }
    }

    pub fn apply(&self, y: f64) -> f64 {
        (y - self.mean) / self.scale
    }

    pub fn invert(&self, t: f64) -> f64 {
        t * self.scale + self.mean
    }

    pub fn invert_variance(&self, v: f64) -> f64 {
        v * self.scale * self.scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub input_map: InputMap,
    pub output_map: OutputMap,
}

impl Transform {
    pub fn new(space: &DesignSpace, outputs: &[f64]) -> Self {
        Transform {
            input_map: InputMap::from_space(space),
            output_map: OutputMap::fit(outputs),
        }
    }
}
