use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::layout::{Block, DecisionLayout, VarRef};

/// Running cost `sum_k |v^k|^2 h` over a group of node variables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    /// `sum_k |u_i^k|^2 h`.
    #[default]
    InputEffort,
    /// `sum_k |velocity rows of z_i'^k|^2 h`, i.e. base accelerations.
    BaseAccel,
}

impl CostKind {
    /// Flat indices of the penalized variables.
    pub fn indices(&self, layout: &DecisionLayout) -> Vec<usize> {
        let refs: Vec<VarRef> = match self {
            CostKind::InputEffort => (0..layout.n_u).map(|index| VarRef { block: Block::U, index }).collect(),
            CostKind::BaseAccel => (layout.n_z / 2..layout.n_z)
                .map(|index| VarRef { block: Block::ZiDot, index })
                .collect(),
        };
        (0..layout.nodes)
            .flat_map(|node| refs.iter().map(move |r| layout.index(node, *r)))
            .collect()
    }
}

/// Value, gradient and Hessian of a running cost with step `h = T / K`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningCost {
    kind: CostKind,
    indices: Vec<usize>,
    period_index: Option<usize>,
    k: usize,
    fixed_step: f64,
}

impl RunningCost {
    pub fn new(kind: CostKind, layout: &DecisionLayout, k: usize, fixed_step: f64) -> Self {
        RunningCost {
            kind,
            indices: kind.indices(layout),
            period_index: layout.period_index(),
            k,
            fixed_step,
        }
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    fn step(&self, x: &DVector<f64>) -> f64 {
        self.period_index.map_or(self.fixed_step, |i| x[i] / self.k as f64)
    }

    fn sum_sq(&self, x: &DVector<f64>) -> f64 {
        self.indices.iter().map(|&i| x[i] * x[i]).sum()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.sum_sq(x) * self.step(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let h = self.step(x);
        let mut g = DVector::zeros(x.len());
        for &i in &self.indices {
            g[i] = 2.0 * h * x[i];
        }
        if let Some(t) = self.period_index {
            g[t] = self.sum_sq(x) / self.k as f64;
        }
        g
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let h = self.step(x);
        let mut m = DMatrix::zeros(x.len(), x.len());
        for &i in &self.indices {
            m[(i, i)] = 2.0 * h;
        }
        if let Some(t) = self.period_index {
            for &i in &self.indices {
                m[(i, t)] = 2.0 * x[i] / self.k as f64;
                m[(t, i)] = m[(i, t)];
            }
        }
        m
    }
}

/// `sum_k |u_i^k|^2 h`.
pub fn default_cost(layout: &DecisionLayout, x: &DVector<f64>, h: f64) -> f64 {
    RunningCost::new(CostKind::InputEffort, layout, layout.nodes.saturating_sub(1), h).value(x)
}
