use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::reduction::IsolatedModel;

/// Uniform time grid with `k + 1` nodes over one period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub k: usize,
    pub period: f64,
}

impl Grid {
    pub fn new(k: usize, period: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("grid needs K >= 2, got {k}")));
        }
        if !(period > 0.0) {
            return Err(Error::Config(format!("period must be positive, got {period}")));
        }
        Ok(Grid { k, period })
    }

    pub fn nodes(&self) -> usize {
        self.k + 1
    }

    pub fn step(&self) -> f64 {
        self.period / self.k as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.k).map(|i| self.period * i as f64 / self.k as f64).collect()
    }
}

/// The per-node variable groups, in packing order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    X,
    Xdot,
    Zi,
    ZiDot,
    Zj,
    ZjDot,
    U,
    Uz,
}

impl Block {
    pub const ALL: [Block; 8] = [
        Block::X,
        Block::Xdot,
        Block::Zi,
        Block::ZiDot,
        Block::Zj,
        Block::ZjDot,
        Block::U,
        Block::Uz,
    ];
}

/// One scalar decision variable at a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarRef {
    pub block: Block,
    pub index: usize,
}

/// Decision variables of one node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeVars {
    pub x: DVector<f64>,
    pub xdot: DVector<f64>,
    pub z_i: DVector<f64>,
    pub z_i_dot: DVector<f64>,
    pub z_j: DVector<f64>,
    pub z_j_dot: DVector<f64>,
    pub u: DVector<f64>,
    pub uz: DVector<f64>,
}

impl NodeVars {
    /// `(x_i, z_i, z_j)`.
    pub fn chi(&self) -> DVector<f64> {
        linalg::vstack(&[&self.x, &self.z_i, &self.z_j])
    }

    pub fn chi_dot(&self) -> DVector<f64> {
        linalg::vstack(&[&self.xdot, &self.z_i_dot, &self.z_j_dot])
    }

    pub fn get(&self, v: VarRef) -> f64 {
        let b = match v.block {
            Block::X => &self.x,
            Block::Xdot => &self.xdot,
            Block::Zi => &self.z_i,
            Block::ZiDot => &self.z_i_dot,
            Block::Zj => &self.z_j,
            Block::ZjDot => &self.z_j_dot,
            Block::U => &self.u,
            Block::Uz => &self.uz,
        };
        b[v.index]
    }
}

/// Flat packing of all node records, node after node, optionally followed by
/// the period.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DecisionLayout {
    pub n_x: usize,
    pub n_z: usize,
    pub n_u: usize,
    pub n_uz: usize,
    pub nodes: usize,
    pub free_period: bool,
}

impl DecisionLayout {
    pub fn new(iso: &IsolatedModel, grid: &Grid, free_period: bool) -> Self {
        DecisionLayout {
            n_x: iso.n_x(),
            n_z: iso.n_z(),
            n_u: iso.n_u(),
            n_uz: iso.n_uz(),
            nodes: grid.nodes(),
            free_period,
        }
    }

    pub fn block_len(&self, b: Block) -> usize {
        match b {
            Block::X | Block::Xdot => self.n_x,
            Block::Zi | Block::ZiDot | Block::Zj | Block::ZjDot => self.n_z,
            Block::U => self.n_u,
            Block::Uz => self.n_uz,
        }
    }

    pub fn node_width(&self) -> usize {
        Block::ALL.iter().map(|b| self.block_len(*b)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes * self.node_width() + usize::from(self.free_period)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offset of a block within its node record.
    pub fn block_offset(&self, b: Block) -> usize {
        Block::ALL.iter().take_while(|o| **o != b).map(|o| self.block_len(*o)).sum()
    }

    pub fn offset(&self, node: usize, b: Block) -> usize {
        node * self.node_width() + self.block_offset(b)
    }

    pub fn index(&self, node: usize, v: VarRef) -> usize {
        self.offset(node, v.block) + v.index
    }

    pub fn period_index(&self) -> Option<usize> {
        self.free_period.then(|| self.nodes * self.node_width())
    }

    /// Flat indices of one node's record.
    pub fn node_indices(&self, node: usize) -> std::ops::Range<usize> {
        let w = self.node_width();
        node * w..(node + 1) * w
    }

    pub fn node(&self, x: &DVector<f64>, node: usize) -> NodeVars {
        let seg = |b: Block| x.rows(self.offset(node, b), self.block_len(b)).into_owned();
        NodeVars {
            x: seg(Block::X),
            xdot: seg(Block::Xdot),
            z_i: seg(Block::Zi),
            z_i_dot: seg(Block::ZiDot),
            z_j: seg(Block::Zj),
            z_j_dot: seg(Block::ZjDot),
            u: seg(Block::U),
            uz: seg(Block::Uz),
        }
    }

    pub fn set_node(&self, x: &mut DVector<f64>, node: usize, v: &NodeVars) {
        for (b, seg) in [
            (Block::X, &v.x),
            (Block::Xdot, &v.xdot),
            (Block::Zi, &v.z_i),
            (Block::ZiDot, &v.z_i_dot),
            (Block::Zj, &v.z_j),
            (Block::ZjDot, &v.z_j_dot),
            (Block::U, &v.u),
            (Block::Uz, &v.uz),
        ] {
            x.rows_mut(self.offset(node, b), self.block_len(b)).copy_from(seg);
        }
    }

    pub fn pack(&self, nodes: &[NodeVars], period: Option<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.len());
        for (k, n) in nodes.iter().enumerate() {
            self.set_node(&mut x, k, n);
        }
        if let (Some(i), Some(t)) = (self.period_index(), period) {
            x[i] = t;
        }
        x
    }

    pub fn unpack(&self, x: &DVector<f64>) -> (Vec<NodeVars>, Option<f64>) {
        let nodes = (0..self.nodes).map(|k| self.node(x, k)).collect();
        (nodes, self.period_index().map(|i| x[i]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout(free: bool) -> DecisionLayout {
        DecisionLayout {
            n_x: 2,
            n_z: 3,
            n_u: 1,
            n_uz: 2,
            nodes: 4,
            free_period: free,
        }
    }

    #[test]
    fn offsets_are_exhaustive_and_disjoint() {
        for free in [false, true] {
            let l = layout(free);
            let mut seen = vec![0usize; l.len()];
            for node in 0..l.nodes {
                for b in Block::ALL {
                    for k in 0..l.block_len(b) {
                        seen[l.index(node, VarRef { block: b, index: k })] += 1;
                    }
                }
            }
            if let Some(i) = l.period_index() {
                seen[i] += 1;
            }
            assert!(seen.iter().all(|c| *c == 1));
        }
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(1, 1.0).is_err());
        assert!(Grid::new(4, 0.0).is_err());
        let g = Grid::new(4, 2.0).unwrap();
        assert_eq!(g.times(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.step(), 0.5);
    }

    proptest! {
        #[test]
        fn pack_unpack_round_trip(v in proptest::collection::vec(-5.0f64..5.0, 77)) {
            let l = layout(true);
            prop_assert_eq!(l.len(), 77);
            let x = DVector::from_vec(v);
            let (nodes, t) = l.unpack(&x);
            prop_assert_eq!(l.pack(&nodes, t), x);
        }
    }
}
