//! Contact-force elimination and the plastic impact map on the pivot model,
//! whose base height is pinned to a rail.

use ccs::mechanical::{double_pendulum_pivot, eliminate_contact_force, plastic_impact, LagrangianModel};
use nalgebra::DVector;

fn main() -> ccs::Result<()> {
    let example = double_pendulum_pivot();
    let full = &example.full;
    let q = DVector::from_vec(vec![0.0, 0.0, 0.4, -0.3]);
    let qd = DVector::from_vec(vec![0.5, 0.0, 1.0, -2.0]);

    let sol = eliminate_contact_force(full, &q, &qd, &DVector::zeros(full.n_u()), &DVector::zeros(2))?;
    println!("q'' = {:.5?}", sol.qddot.as_slice());
    println!("rail force = {:.4} N", sol.force[0]);
    let j = full.contact_jacobian(&q);
    println!("constraint acceleration J q'' + J' q' = {:.2e}", (&j * &sol.qddot + full.contact_bias(&q, &qd)).amax());

    // Hitting the rail with a downward base velocity.
    let pre = DVector::from_vec(vec![0.5, -0.8, 1.0, -2.0]);
    let post = plastic_impact(full, &q, &pre)?;
    println!("pre-impact q' = {:.5?}", pre.as_slice());
    println!("post-impact q' = {:.5?}", post.as_slice());
    println!(
        "kinetic energy {:.4} -> {:.4} J, J q'+ = {:.2e}",
        full.kinetic_energy(&q, &pre),
        full.kinetic_energy(&q, &post),
        (&j * &post).amax()
    );
    Ok(())
}
