use serde::{Deserialize, Serialize};

use super::NoiseError;

/// How the nodes of a [`TimeGrid`] are spaced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Grading {
    Uniform,
    /// Nodes `T - T(1 - j/m)^kappa`, clustering toward the horizon.
    TowardHorizon {
        kappa: f64,
    },
}

/// Partition `0 = t_0 < … < t_m = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    grading: Grading,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize, grading: Grading) -> Result<Self, NoiseError> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(NoiseError::InvalidGrid(format!("horizon {horizon} must be positive")));
        }
        if steps == 0 {
            return Err(NoiseError::InvalidGrid("at least one step is required".into()));
        }
        let m = steps as f64;
        let nodes: Vec<f64> = match grading {
            Grading::Uniform => (0..=steps).map(|j| horizon * j as f64 / m).collect(),
            Grading::TowardHorizon { kappa } => {
                if !(kappa >= 1.0) {
                    return Err(NoiseError::InvalidGrid(format!("grading exponent {kappa} below 1")));
                }
                (0..=steps)
                    .map(|j| horizon - horizon * (1.0 - j as f64 / m).powf(kappa))
                    .collect()
            }
        };
        Self::from_nodes_with(nodes, grading)
    }

    pub fn uniform(horizon: f64, steps: usize) -> Result<Self, NoiseError> {
        Self::new(horizon, steps, Grading::Uniform)
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self, NoiseError> {
        Self::from_nodes_with(nodes, Grading::Uniform)
    }

    fn from_nodes_with(nodes: Vec<f64>, grading: Grading) -> Result<Self, NoiseError> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(NoiseError::InvalidGrid("grid must start at 0 with one step".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(NoiseError::InvalidGrid("nodes must be strictly increasing".into()));
        }
        Ok(Self { nodes, grading })
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn grading(&self) -> Grading {
        self.grading
    }

    pub fn step_length(&self, j: usize) -> f64 {
        self.nodes[j + 1] - self.nodes[j]
    }

    /// Index of the node equal to `t` up to `1e-12·T`.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * self.horizon().max(1.0);
        let pos = self.nodes.partition_point(|&s| s < t - tol);
        (pos < self.nodes.len() && (self.nodes[pos] - t).abs() <= tol).then_some(pos)
    }

    /// Cell `j` such that `t ∈ (t_j, t_{j+1}]`.
    pub fn cell_of(&self, t: f64) -> Option<usize> {
        if !(t > 0.0) || t > self.horizon() {
            return None;
        }
        let pos = self.nodes.partition_point(|&s| s < t);
        Some(pos.saturating_sub(1).min(self.steps() - 1))
    }
}
