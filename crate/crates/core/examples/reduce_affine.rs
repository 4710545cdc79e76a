//! Coupling relation of a random affine coupled system: solve for the
//! zero-dynamics input and `lambda_e`, then check both defining conditions.

use std::sync::Arc;

use ccs::model::AffineSubsystem;
use ccs::reduction::zero_invariance_residual;
use ccs::{CcsModel, Dims, IsolatedModel, PerVertex, Vertex};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ccs::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = Dims {
        n_x: 2,
        n_z: 3,
        n_u: 2,
        n_lambda: 3,
    };
    let model = CcsModel::new(
        Arc::new(AffineSubsystem::random(&mut rng, d)),
        Arc::new(AffineSubsystem::random(&mut rng, d)),
    )?;
    let iso = IsolatedModel::new(&model, Vertex::One);

    let x = DVector::from_vec(vec![0.3, -0.1]);
    let z_i = DVector::from_vec(vec![0.2, 0.0, -0.4]);
    let z = PerVertex::new(z_i.clone(), z_i);
    let u = DVector::from_vec(vec![1.0, -0.5]);

    let pt = iso.relation().at(&x, &z)?;
    println!("lambda_e = A_e u + b_e = {:.5?}", pt.lambda_e(&u).as_slice());
    println!("u^Z_j = {:.5?}", pt.uz_j(&u).as_slice());
    println!("reciprocal condition of the coupling matrix: {:.3e}", pt.rcond);

    let uz = pt.uz_j(&u);
    let r = iso.rhs(&x, &z, &u)?;
    println!("zero-dynamics invariance residual: {:.2e}", zero_invariance_residual(&pt, &u, &uz).amax());
    println!("coupling rate |z_i' - z_j'|: {:.2e}", (r.zdot_i - r.zdot_j).amax());
    Ok(())
}
