//! Bezier virtual constraints of the split cart: desired pendulum angles
//! along the cart phase, the mirrored rear output, and the pinned
//! reduction with both outputs held at zero.

use ccs::mechanical::{example_split_cart, pinned_zero_dynamics};
use nalgebra::DVector;

fn main() -> ccs::Result<()> {
    let example = example_split_cart();
    let (front, rear) = (&example.outputs[ccs::Vertex::One], &example.outputs[ccs::Vertex::Two]);
    let phase = front.phase;

    println!("xi      tau     front yd   rear yd");
    for k in 0..=8 {
        let xi = -1.2 + 0.3 * k as f64;
        let (tau, _) = phase.eval(&DVector::from_element(1, xi));
        // y = theta - yd, so the desired angle is -y at theta = 0.
        let q = DVector::from_vec(vec![xi, 0.0]);
        println!("{xi:+.2}  {tau:.3}  {:+.5}   {:+.5}", -front.y(1, &q)[0], -rear.y(1, &q)[0]);
    }

    let half = &example.halves[ccs::Vertex::One];
    let pinned = pinned_zero_dynamics(half, front, &DVector::from_element(1, 0.3), &DVector::from_element(1, 0.5))?;
    println!("pinned configuration {:.5?}", pinned.q.as_slice());
    println!("pinned velocity      {:.5?}", pinned.qdot.as_slice());
    println!("reduced inertia D_Z = {:.4}", pinned.dz[(0, 0)]);
    Ok(())
}
