#![allow(dead_code)]

use std::sync::Arc;

use ccs::mechanical::{example_split_cart, SplitExample};
use ccs::simulate::{companion_controllers, io_linearizing_controller, reconstruct_full, simulate_full_cds, simulate_isolated, IsolatedFeedback};
use ccs::{IntegratorConfig, IsolatedModel, PerVertex, Trajectory, Vertex};
use nalgebra::DVector;

pub const EPS: f64 = 5.0;

pub struct EquivalenceRun {
    pub example: SplitExample,
    pub isolated: Trajectory,
    pub reconstructed: Trajectory,
    pub full: Trajectory,
}

/// Isolated and full split-cart runs from the same manifold initial
/// condition under io-linearizing feedback on the front half.
pub fn equivalence_run(step: f64, horizon: f64) -> EquivalenceRun {
    let example = example_split_cart();
    let iso = IsolatedModel::new(&example.ccs, Vertex::One);
    let ctrl: Arc<dyn IsolatedFeedback> = Arc::new(io_linearizing_controller(&iso, EPS).unwrap());
    let x0 = DVector::from_vec(vec![0.15, -0.4]);
    let z = DVector::from_vec(vec![0.1, 0.3]);
    let z0 = PerVertex::new(z.clone(), z);
    let cfg = IntegratorConfig::new(step, horizon);
    let isolated = simulate_isolated(&iso, ctrl.as_ref(), &x0, &z0, &cfg).unwrap();
    let reconstructed = reconstruct_full(&isolated);
    let xs = PerVertex::new(x0, DVector::zeros(2));
    let full = simulate_full_cds(&example.ccs, companion_controllers(&iso, ctrl), &xs, &z0, &cfg).unwrap();
    EquivalenceRun {
        example,
        isolated,
        reconstructed,
        full,
    }
}
