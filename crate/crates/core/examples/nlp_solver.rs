//! The augmented-Lagrangian solver on a small QP with a known KKT point and
//! on a nonlinear problem with a bound.

use ccs::optimize::solver::QuadraticProgram;
use ccs::optimize::{solve, NlpFunctions, SolverConfig};
use ccs::Result;
use nalgebra::{DMatrix, DVector};

/// `min (x - 2)^2 + (y - 1)^2` on the unit circle with `x <= 0.8`.
struct Circle {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl NlpFunctions for Circle {
    fn n(&self) -> usize {
        2
    }
    fn lower(&self) -> &DVector<f64> {
        &self.lower
    }
    fn upper(&self) -> &DVector<f64> {
        &self.upper
    }
    fn cost(&self, x: &DVector<f64>) -> Result<f64> {
        Ok((x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2))
    }
    fn cost_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] - 1.0)]))
    }
    fn eq(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_element(1, x[0] * x[0] + x[1] * x[1] - 1.0))
    }
    fn eq_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]]))
    }
    fn ineq(&self, _x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::zeros(0))
    }
    fn ineq_jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(0, 2))
    }
}

fn main() -> Result<()> {
    let qp = QuadraticProgram::equality(
        DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]),
        DVector::from_vec(vec![-1.0, 2.0, 0.5]),
        DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]),
        DVector::from_element(1, 1.0),
    );
    let (x_star, _) = qp.kkt_solution()?;
    let sol = solve(&qp, &DVector::zeros(3), &SolverConfig::default());
    println!("QP: {:?} in {} iterations, |x - x*| = {:.2e}", sol.status, sol.iterations, (&sol.x - x_star).amax());

    let circle = Circle {
        lower: DVector::from_vec(vec![f64::NEG_INFINITY, f64::NEG_INFINITY]),
        upper: DVector::from_vec(vec![0.8, f64::INFINITY]),
    };
    let sol = solve(&circle, &DVector::from_vec(vec![0.0, -1.0]), &SolverConfig::default());
    println!("circle: {:?}, x = {:.6?}, expected ({:.4}, {:.4})", sol.status, sol.x.as_slice(), 0.8, 0.6);
    for r in sol.log.iter().take(5) {
        println!("  iter {:>3} merit {:+.4e} feasibility {:.2e} step {:.2e}", r.iteration, r.merit, r.feasibility, r.step);
    }
    Ok(())
}
