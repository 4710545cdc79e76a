//! A planar base carrying point-mass pendula, and the bundled split examples.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::output::{to_ccs, OutputSpec, Phase};
use super::LagrangianModel;
use crate::error::Result;
use crate::linalg;
use crate::model::{CcsModel, FullState, PerVertex, Vertex};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Contact {
    None,
    /// Base height pinned to zero (a rail). Needs a two-dimensional base.
    BaseHeight,
    /// Tip of the given pendulum pinned in the plane.
    Tip(usize),
}

/// Base of mass `base_mass` with `base_dim` translational coordinates
/// (`x`, or `x, y`), carrying pendula of point masses `(m, l)` with angles
/// measured from the downward vertical. Configuration is
/// `(base, theta_1, .., theta_k)`; every pendulum is actuated.
#[derive(Clone, Debug, PartialEq)]
pub struct PendulumCarrier {
    pub base_mass: f64,
    pub base_dim: usize,
    pub pendula: Vec<(f64, f64)>,
    pub gravity: f64,
    pub contact: Contact,
}

impl PendulumCarrier {
    fn total_mass(&self) -> f64 {
        self.base_mass + self.pendula.iter().map(|p| p.0).sum::<f64>()
    }

    /// Planar tip position of pendulum `k`.
    pub fn tip(&self, q: &DVector<f64>, k: usize) -> (f64, f64) {
        let (_, l) = self.pendula[k];
        let th = q[self.base_dim + k];
        let by = if self.base_dim == 2 { q[1] } else { 0.0 };
        (q[0] + l * th.sin(), by - l * th.cos())
    }
}

impl LagrangianModel for PendulumCarrier {
    fn n(&self) -> usize {
        self.base_dim + self.pendula.len()
    }

    fn base_dim(&self) -> usize {
        self.base_dim
    }

    fn n_contact(&self) -> usize {
        match self.contact {
            Contact::None => 0,
            Contact::BaseHeight => 1,
            Contact::Tip(_) => 2,
        }
    }

    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let nb = self.base_dim;
        let mut d = DMatrix::zeros(self.n(), self.n());
        for r in 0..nb {
            d[(r, r)] = self.total_mass();
        }
        for (k, &(m, l)) in self.pendula.iter().enumerate() {
            let c = nb + k;
            let th = q[c];
            d[(0, c)] = m * l * th.cos();
            d[(c, 0)] = d[(0, c)];
            if nb == 2 {
                d[(1, c)] = m * l * th.sin();
                d[(c, 1)] = d[(1, c)];
            }
            d[(c, c)] = m * l * l;
        }
        d
    }

    fn drift(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64> {
        let nb = self.base_dim;
        let mut h = DVector::zeros(self.n());
        if nb == 2 {
            h[1] = self.total_mass() * self.gravity;
        }
        for (k, &(m, l)) in self.pendula.iter().enumerate() {
            let c = nb + k;
            let (s, co, w) = (q[c].sin(), q[c].cos(), qdot[c]);
            h[0] -= m * l * s * w * w;
            if nb == 2 {
                h[1] += m * l * co * w * w;
            }
            h[c] = m * self.gravity * l * s;
        }
        h
    }

    fn contact_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.n_contact(), self.n());
        match self.contact {
            Contact::None => {}
            Contact::BaseHeight => j[(0, 1)] = 1.0,
            Contact::Tip(k) => {
                let (_, l) = self.pendula[k];
                let c = self.base_dim + k;
                j[(0, 0)] = 1.0;
                j[(0, c)] = l * q[c].cos();
                if self.base_dim == 2 {
                    j[(1, 1)] = 1.0;
                }
                j[(1, c)] = l * q[c].sin();
            }
        }
        j
    }

    fn contact_bias(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64> {
        match self.contact {
            Contact::None => DVector::zeros(0),
            Contact::BaseHeight => DVector::zeros(1),
            Contact::Tip(k) => {
                let (_, l) = self.pendula[k];
                let c = self.base_dim + k;
                let w2 = qdot[c] * qdot[c];
                DVector::from_vec(vec![-l * q[c].sin() * w2, l * q[c].cos() * w2])
            }
        }
    }

    fn potential(&self, q: &DVector<f64>) -> f64 {
        let base = if self.base_dim == 2 {
            self.total_mass() * self.gravity * q[1]
        } else {
            0.0
        };
        let swing: f64 = self
            .pendula
            .iter()
            .enumerate()
            .map(|(k, &(m, l))| m * self.gravity * l * q[self.base_dim + k].cos())
            .sum();
        base - swing
    }
}

/// An unsplit model, its two halves and the resulting coupled system. Each
/// half owns half of the base mass and one pendulum.
#[derive(Clone, Debug)]
pub struct SplitExample {
    pub name: &'static str,
    pub full: PendulumCarrier,
    pub halves: PerVertex<PendulumCarrier>,
    pub outputs: PerVertex<OutputSpec>,
    pub ccs: CcsModel,
}

impl SplitExample {
    /// Couples two halves through their bases; the rear output mirrors the
    /// front one.
    pub fn new(name: &'static str, full: PendulumCarrier, halves: PerVertex<PendulumCarrier>, front: OutputSpec) -> Result<Self> {
        let rear = front.mirrored()?;
        let ccs = to_ccs(
            Arc::new(halves[Vertex::One].clone()),
            Arc::new(halves[Vertex::Two].clone()),
            front.clone(),
            rear.clone(),
        )?;
        Ok(SplitExample {
            name,
            full,
            halves,
            outputs: PerVertex::new(front, rear),
            ccs,
        })
    }

    fn base_dim(&self) -> usize {
        self.full.base_dim
    }

    /// Full configuration `(base, theta_1, theta_2)` to the coupled state.
    pub fn decompose(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> FullState {
        let nb = self.base_dim();
        let half = |v: &DVector<f64>, k: usize| {
            let mut h = v.rows(0, nb + 1).into_owned();
            h[nb] = v[nb + k];
            h
        };
        let mut x = PerVertex::new(DVector::zeros(0), DVector::zeros(0));
        let mut z = x.clone();
        for (k, v) in [Vertex::One, Vertex::Two].into_iter().enumerate() {
            let (xv, zv) = self.outputs[v].states(nb, &half(q, k), &half(qdot, k));
            x[v] = xv;
            z[v] = zv;
        }
        FullState { x, z }
    }

    /// Inverse of [`SplitExample::decompose`], taking the base from vertex 1.
    pub fn compose(&self, s: &FullState) -> (DVector<f64>, DVector<f64>) {
        let nb = self.base_dim();
        let (q1, qd1) = self.outputs[Vertex::One].coordinates(&s.x[Vertex::One], &s.z[Vertex::One]);
        let (q2, qd2) = self.outputs[Vertex::Two].coordinates(&s.x[Vertex::Two], &s.z[Vertex::Two]);
        let join = |a: &DVector<f64>, b: &DVector<f64>| linalg::vstack(&[a, &b.rows(nb, 1).into_owned()]);
        (join(&q1, &q2), join(&qd1, &qd2))
    }

    /// Sum of the two halves' energies at a coupled state.
    pub fn cds_energy(&self, s: &FullState) -> f64 {
        [Vertex::One, Vertex::Two]
            .into_iter()
            .map(|v| {
                let (q, qd) = self.outputs[v].coordinates(&s.x[v], &s.z[v]);
                self.halves[v].energy(&q, &qd)
            })
            .sum()
    }
}

pub const DEFAULT_ALPHA: [f64; 6] = [0.0, 0.1, 0.2, 0.2, 0.1, 0.0];

/// Single-row Bezier output over the phase `xi in [-1, 1]`, mirrored with
/// `-I` for the rear half.
pub fn front_output(alpha: &[f64]) -> OutputSpec {
    let alpha = DMatrix::from_row_slice(1, alpha.len(), alpha);
    let mut out = OutputSpec::new(alpha, Phase { coord: 0, start: -1.0, end: 1.0 });
    out.mirror = -DMatrix::identity(1, 1);
    out
}

/// Cart (M = 2 kg) carrying two actuated pendula (m = 1 kg, l = 0.5 m),
/// split into two half-carts glued by a horizontal force.
pub fn example_split_cart() -> SplitExample {
    let (big_m, m, l, g) = (2.0, 1.0, 0.5, 9.81);
    let carrier = |mass: f64, pendula: Vec<(f64, f64)>| PendulumCarrier {
        base_mass: mass,
        base_dim: 1,
        pendula,
        gravity: g,
        contact: Contact::None,
    };
    let half = carrier(big_m / 2.0, vec![(m, l)]);
    SplitExample::new(
        "split_cart",
        carrier(big_m, vec![(m, l), (m, l)]),
        PerVertex::new(half.clone(), half),
        front_output(&DEFAULT_ALPHA),
    )
    .expect("bundled example is well formed")
}

/// A free planar pivot (M = 2 kg) carrying two pendula of different sizes,
/// with the front half riding a rail that pins the pivot height.
pub fn double_pendulum_pivot() -> SplitExample {
    let g = 9.81;
    let front = PendulumCarrier {
        base_mass: 1.0,
        base_dim: 2,
        pendula: vec![(1.0, 0.5)],
        gravity: g,
        contact: Contact::BaseHeight,
    };
    let rear = PendulumCarrier {
        pendula: vec![(0.8, 0.4)],
        contact: Contact::None,
        ..front.clone()
    };
    let full = PendulumCarrier {
        base_mass: 2.0,
        pendula: vec![(1.0, 0.5), (0.8, 0.4)],
        ..front.clone()
    };
    SplitExample::new("double_pendulum_pivot", full, PerVertex::new(front, rear), front_output(&DEFAULT_ALPHA))
        .expect("bundled example is well formed")
}

/// Looks up a bundled example by name.
pub fn example_by_name(name: &str) -> Option<SplitExample> {
    match name {
        "split_cart" => Some(example_split_cart()),
        "double_pendulum_pivot" => Some(double_pendulum_pivot()),
        _ => None,
    }
}
