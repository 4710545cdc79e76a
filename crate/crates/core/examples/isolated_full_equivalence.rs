//! Simulate the isolated front half of the split cart, rebuild the full
//! coupled solution from it, and compare with integrating the full system.

use std::sync::Arc;

use ccs::mechanical::example_split_cart;
use ccs::simulate::{
    companion_controllers, io_linearizing_controller, max_coupling_drift, reconstruct_full, simulate_full_cds, simulate_isolated,
    trajectory_error, IsolatedFeedback,
};
use ccs::{IntegratorConfig, IsolatedModel, PerVertex, Vertex};
use nalgebra::DVector;

fn main() -> ccs::Result<()> {
    let example = example_split_cart();
    let iso = IsolatedModel::new(&example.ccs, Vertex::One);
    let ctrl: Arc<dyn IsolatedFeedback> = Arc::new(io_linearizing_controller(&iso, 5.0)?);

    let x0 = DVector::from_vec(vec![0.15, -0.4]);
    let z = DVector::from_vec(vec![0.1, 0.3]);
    let z0 = PerVertex::new(z.clone(), z);
    let cfg = IntegratorConfig::new(1e-3, 2.0);

    let isolated = simulate_isolated(&iso, ctrl.as_ref(), &x0, &z0, &cfg)?;
    let rebuilt = reconstruct_full(&isolated);
    let full = simulate_full_cds(
        &example.ccs,
        companion_controllers(&iso, ctrl),
        &PerVertex::new(x0, DVector::zeros(2)),
        &z0,
        &cfg,
    )?;

    let err = trajectory_error(&rebuilt, &full)?;
    println!("samples: {}", full.len());
    println!("state discrepancy {:.3e}, input {:.3e}, lambda {:.3e}", err.states.max, err.inputs.max, err.lambdas.max);
    println!("coupling drift: isolated {:.2e}, full {:.2e}", max_coupling_drift(&isolated), max_coupling_drift(&full));
    let y_end = isolated.states.last().unwrap()[0];
    println!("front output y(2) = {y_end:.5}");
    Ok(())
}
