//! Hermite-Simpson defects of an exactly sampled oscillator shrink with the
//! fourth power of the step.

use std::sync::Arc;

use ccs::model::AffineSubsystem;
use ccs::optimize::constraints::collocation_defect;
use ccs::optimize::{ControlAtCenter, Grid, NodeVars};
use ccs::{CcsModel, Dims, IsolatedModel, Vertex};
use nalgebra::{DMatrix, DVector};

fn main() -> ccs::Result<()> {
    let omega = 2.0 * std::f64::consts::PI;
    let d = Dims {
        n_x: 2,
        n_z: 2,
        n_u: 1,
        n_lambda: 2,
    };
    let mut a = AffineSubsystem::zeros(d);
    a.fx = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -omega * omega, 0.0]);
    a.q_breve = DMatrix::identity(2, 2);
    let mut b = AffineSubsystem::zeros(Dims { n_u: 2, ..d });
    b.g = DMatrix::identity(2, 2);
    b.q_breve = DMatrix::identity(2, 2);
    let iso = IsolatedModel::new(&CcsModel::new(Arc::new(a), Arc::new(b))?, Vertex::One);

    let mut previous: Option<f64> = None;
    println!("K     max defect   ratio");
    for k in [5, 10, 20, 40, 80] {
        let grid = Grid::new(k, 1.0)?;
        let nodes: Vec<NodeVars> = grid
            .times()
            .iter()
            .map(|&t| NodeVars {
                x: DVector::from_vec(vec![(omega * t).sin(), omega * (omega * t).cos()]),
                xdot: DVector::from_vec(vec![omega * (omega * t).cos(), -omega * omega * (omega * t).sin()]),
                z_i: DVector::zeros(2),
                z_i_dot: DVector::zeros(2),
                z_j: DVector::zeros(2),
                z_j_dot: DVector::zeros(2),
                u: DVector::zeros(1),
                uz: DVector::zeros(2),
            })
            .collect();
        let mut worst = 0.0_f64;
        for w in nodes.windows(2) {
            worst = worst.max(collocation_defect(&iso, &w[0], &w[1], grid.step(), ControlAtCenter::default())?.amax());
        }
        match previous {
            Some(p) => println!("{k:<4}  {worst:.4e}   {:.2}", p / worst),
            None => println!("{k:<4}  {worst:.4e}"),
        }
        previous = Some(worst);
    }
    Ok(())
}
