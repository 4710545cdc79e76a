use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fd;
use crate::model::{eval_rhs, LambdaSolver, PerVertex, Vertex};
use crate::simulate::{rk4_step, DifferentiatedConstraint};

fn tip_model() -> PendulumCarrier {
    PendulumCarrier {
        base_mass: 1.5,
        base_dim: 2,
        pendula: vec![(1.0, 0.5), (0.7, 0.3)],
        gravity: 9.81,
        contact: Contact::Tip(0),
    }
}

fn random_vec(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

fn all_models() -> Vec<PendulumCarrier> {
    let cart = example_split_cart();
    let pivot = double_pendulum_pivot();
    vec![
        cart.full.clone(),
        cart.halves[Vertex::One].clone(),
        pivot.full.clone(),
        pivot.halves[Vertex::One].clone(),
        pivot.halves[Vertex::Two].clone(),
        tip_model(),
    ]
}

/// Drift from the Lagrangian by finite differences:
/// `H = D' q' - d/dq (q'^T D q' / 2) + dV/dq`.
fn drift_oracle(m: &PendulumCarrier, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
    let h = 1e-6;
    let ddot = (m.mass_matrix(&(q + h * qd)) - m.mass_matrix(&(q - h * qd))) / (2.0 * h);
    let grad_t = fd::gradient(|x: &DVector<f64>| Ok(m.kinetic_energy(x, qd)), q, h).unwrap();
    let grad_v = fd::gradient(|x: &DVector<f64>| Ok(m.potential(x)), q, h).unwrap();
    ddot * qd - grad_t + grad_v
}

#[test]
fn mass_matrix_symmetric_positive_definite_and_drift_matches_lagrangian() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for m in all_models() {
        for _ in 0..20 {
            let q = random_vec(&mut rng, m.n(), 1.5);
            let qd = random_vec(&mut rng, m.n(), 2.0);
            let d = m.mass_matrix(&q);
            assert_eq!(d, d.transpose());
            assert!(d.clone().cholesky().is_some());
            let err = (m.drift(&q, &qd) - drift_oracle(&m, &q, &qd)).amax();
            assert!(err < 1e-6, "{err}");
        }
    }
}

#[test]
fn unconstrained_elimination_is_plain_inverse() {
    let m = example_split_cart().halves[Vertex::One].clone();
    let q = DVector::from_vec(vec![0.3, -0.4]);
    let qd = DVector::from_vec(vec![0.5, 1.2]);
    let u = DVector::from_vec(vec![0.7]);
    let l = DVector::from_vec(vec![-1.1]);
    let sol = eliminate_contact_force(&m, &q, &qd, &u, &l).unwrap();
    let rhs = -m.drift(&q, &qd) + m.actuation() * &u + m.couple_jacobian().transpose() * &l;
    let expected = m.mass_matrix(&q).lu().solve(&rhs).unwrap();
    assert!((sol.qddot - expected).amax() < 1e-12);
    assert_eq!(sol.force.len(), 0);
}

#[test]
fn contact_acceleration_residual_vanishes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for m in [tip_model(), double_pendulum_pivot().halves[Vertex::One].clone()] {
        for _ in 0..50 {
            let q = random_vec(&mut rng, m.n(), 1.2);
            let qd = random_vec(&mut rng, m.n(), 2.0);
            let u = random_vec(&mut rng, m.n_u(), 5.0);
            let l = random_vec(&mut rng, m.base_dim(), 5.0);
            let sol = eliminate_contact_force(&m, &q, &qd, &u, &l).unwrap();
            let c = m.contact_jacobian(&q) * &sol.qddot + m.contact_bias(&q, &qd);
            assert!(c.amax() < 1e-10);
            // the dynamics line holds with the returned force
            let dyn_res = m.mass_matrix(&q) * &sol.qddot + m.drift(&q, &qd)
                - m.actuation() * &u
                - m.couple_jacobian().transpose() * &l
                - m.contact_jacobian(&q).transpose() * &sol.force;
            assert!(dyn_res.amax() < 1e-10);
        }
    }
}

#[test]
fn static_equilibrium_on_the_rail() {
    let m = double_pendulum_pivot().halves[Vertex::One].clone();
    let th: f64 = 0.3;
    let q = DVector::from_vec(vec![0.2, 0.0, th]);
    let u = DVector::from_vec(vec![1.0 * 9.81 * 0.5 * th.sin()]);
    let sol = eliminate_contact_force(&m, &q, &DVector::zeros(3), &u, &DVector::zeros(2)).unwrap();
    assert!(sol.qddot.amax() < 1e-12);
    // rail carries half the base plus the pendulum
    assert!((sol.force[0] - (1.0 + 1.0) * 9.81).abs() < 1e-12);
}

#[test]
fn rank_deficient_contact_is_singular() {
    let m = PendulumCarrier {
        base_dim: 1,
        pendula: vec![(1.0, 0.5)],
        ..tip_model()
    };
    // at theta = 0 the tip Jacobian [[1, l], [0, 0]] loses rank
    let err = eliminate_contact_force(&m, &DVector::zeros(2), &DVector::zeros(2), &DVector::zeros(1), &DVector::zeros(1));
    assert!(matches!(err, Err(Error::Singular { .. })));
}

#[test]
fn contact_bias_matches_jacobian_derivative() {
    let m = tip_model();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let q = random_vec(&mut rng, 4, 1.5);
        let qd = random_vec(&mut rng, 4, 2.0);
        let h = 1e-6;
        let jdot = (m.contact_jacobian(&(&q + h * &qd)) - m.contact_jacobian(&(&q - h * &qd))) / (2.0 * h);
        assert!((jdot * &qd - m.contact_bias(&q, &qd)).amax() < 1e-7);
    }
}

#[test]
fn plastic_impact_properties() {
    let m = tip_model();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let q = random_vec(&mut rng, 4, 1.2);
        let pre = random_vec(&mut rng, 4, 3.0);
        let post = plastic_impact(&m, &q, &pre).unwrap();
        assert!((m.contact_jacobian(&q) * &post).amax() < 1e-12);
        assert!(m.kinetic_energy(&q, &post) <= m.kinetic_energy(&q, &pre) + 1e-12);
        // projection fixed point
        let again = plastic_impact(&m, &q, &post).unwrap();
        assert!((again - &post).amax() < 1e-12);
    }
}

#[test]
fn halves_add_up_to_the_full_mass_matrix() {
    for ex in [example_split_cart(), double_pendulum_pivot()] {
        let nb = ex.full.base_dim;
        let q = DVector::from_fn(nb + 2, |i, _| 0.3 * i as f64 - 0.2);
        let mut sum = DMatrix::zeros(nb + 2, nb + 2);
        for (k, v) in [Vertex::One, Vertex::Two].into_iter().enumerate() {
            let mut qh = q.rows(0, nb + 1).into_owned();
            qh[nb] = q[nb + k];
            let dh = ex.halves[v].mass_matrix(&qh);
            let idx: Vec<usize> = (0..nb).chain([nb + k]).collect();
            for (a, &ia) in idx.iter().enumerate() {
                for (b, &ib) in idx.iter().enumerate() {
                    sum[(ia, ib)] += dh[(a, b)];
                }
            }
        }
        assert!((sum - ex.full.mass_matrix(&q)).amax() < 1e-14, "{}", ex.name);
    }
}

#[test]
fn full_split_cart_conserves_energy_without_input() {
    let ex = example_split_cart();
    let m = &ex.full;
    let mut s = DVector::from_vec(vec![0.0, 0.6, -0.3, 0.2, 0.0, 1.0]);
    let energy = |s: &DVector<f64>| m.energy(&s.rows(0, 3).into_owned(), &s.rows(3, 3).into_owned());
    let e0 = energy(&s);
    let (u, l) = (DVector::zeros(2), DVector::zeros(1));
    for _ in 0..2000 {
        s = rk4_step(|y| state_derivative(m, y, &u, &l), &s, 1e-3).unwrap();
        assert!((energy(&s) - e0).abs() < 1e-6);
    }
}

#[test]
fn decompose_and_compose_round_trip() {
    for ex in [example_split_cart(), double_pendulum_pivot()] {
        let n = ex.full.n();
        let q = DVector::from_fn(n, |i, _| 0.1 * (i as f64 + 1.0));
        let qd = DVector::from_fn(n, |i, _| 0.2 - 0.15 * i as f64);
        let s = ex.decompose(&q, &qd);
        assert_eq!(s.z[Vertex::One], s.z[Vertex::Two]);
        let (q2, qd2) = ex.compose(&s);
        assert!((q2 - &q).amax() < 1e-14 && (qd2 - &qd).amax() < 1e-14);
    }
}

/// Coupled field versus the unsplit Lagrangian, through the decomposition.
#[test]
fn ccs_field_equals_unsplit_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for ex in [example_split_cart(), double_pendulum_pivot()] {
        let n = ex.full.n();
        let nb = ex.full.base_dim;
        for _ in 0..100 {
            let mut q = random_vec(&mut rng, n, 0.8);
            let mut qd = random_vec(&mut rng, n, 1.5);
            if ex.full.contact == Contact::BaseHeight {
                q[1] = 0.0;
                qd[1] = 0.0;
            }
            let u = random_vec(&mut rng, 2, 4.0);
            let full = state_derivative(&ex.full, &linalg::vstack(&[&q, &qd]), &u, &DVector::zeros(nb)).unwrap();

            let s = ex.decompose(&q, &qd);
            let uv = PerVertex::new(u.rows(0, 1).into_owned(), u.rows(1, 1).into_owned());
            let lam = DifferentiatedConstraint::default().lambda(&ex.ccs, &s, &uv).unwrap();
            let (one, two) = (Vertex::One, Vertex::Two);
            let (x1d, z1d) = eval_rhs(&ex.ccs, one, &s.x[one], &s.z[one], &s.z[two], &uv[one], &lam).unwrap();
            let (x2d, z2d) = eval_rhs(&ex.ccs, two, &s.x[two], &s.z[two], &s.z[one], &uv[two], &(-&lam)).unwrap();
            assert!((&z1d - &z2d).amax() < 1e-9);
            // top block of z' is xi'
            assert_eq!(z1d.rows(0, nb), s.z[one].rows(nb, nb));
            // map the full derivative through the coordinate change by finite differences
            let h = 1e-6;
            let plus = ex.decompose(&(&q + h * full.rows(0, n)), &(&qd + h * full.rows(n, n)));
            let minus = ex.decompose(&(&q - h * full.rows(0, n)), &(&qd - h * full.rows(n, n)));
            let expect = (plus.to_vector() - minus.to_vector()) / (2.0 * h);
            let got = linalg::vstack(&[&x1d, &z1d, &x2d, &z2d]);
            let err = (expect - got).amax();
            assert!(err < 1e-6, "{}: {err}", ex.name);
        }
    }
}

#[test]
fn relative_degree_failure_names_the_row() {
    let m = PendulumCarrier {
        base_dim: 1,
        pendula: vec![(1.0, 0.5)],
        ..tip_model()
    };
    let sub = MechanicalSubsystem::new(Arc::new(m), OutputSpec::new(DMatrix::zeros(1, 4), Phase { coord: 0, start: -1.0, end: 1.0 })).unwrap();
    let q = DVector::from_vec(vec![0.0, 0.5]);
    assert!(matches!(sub.check_relative_degree(&q, &DVector::zeros(2)), Err(Error::RelativeDegree { row: 0 })));
}

#[test]
fn output_rows_chain_rule() {
    let ex = example_split_cart();
    let out = &ex.outputs[Vertex::One];
    let m = &ex.halves[Vertex::One];
    let q = DVector::from_vec(vec![0.3, 0.1]);
    let qd = DVector::from_vec(vec![0.8, -0.5]);
    let h = 1e-6;
    let ydot = (out.y(1, &(&q + h * &qd)) - out.y(1, &(&q - h * &qd))) / (2.0 * h);
    let (x, z) = out.states(1, &q, &qd);
    assert!((ydot[0] - x[1]).abs() < 1e-8);
    let terms = ex.ccs.terms(Vertex::One, &x, &z, &z).unwrap();
    assert_eq!(terms.f[0], x[1]);
    let jdot = (out.jacobian(1, &(&q + h * &qd)) - out.jacobian(1, &(&q - h * &qd))) / (2.0 * h);
    assert!(((jdot * &qd)[0] - out.jacobian_bias(1, &q, &qd)[0]).abs() < 1e-7);
    assert_eq!(m.n_u(), 1);
}

#[test]
fn pinned_with_constant_desired_is_base_block() {
    let m = tip_model();
    let out = OutputSpec::new(DMatrix::from_element(2, 6, 0.25), Phase { coord: 0, start: -1.0, end: 1.0 });
    let xi = DVector::from_vec(vec![0.1, -0.2]);
    let r = pinned_zero_dynamics(&m, &out, &xi, &DVector::from_vec(vec![0.4, 0.3])).unwrap();
    let mut expect_jz = DMatrix::zeros(4, 2);
    expect_jz.view_mut((0, 0), (2, 2)).fill_with_identity();
    assert_eq!(r.j_z, expect_jz);
    assert_eq!(r.dz, m.mass_matrix(&r.q).view((0, 0), (2, 2)).into_owned());
    assert!((r.q.rows(2, 2).add_scalar(-0.25)).amax() < 1e-12);
}

fn pinned_case() -> (PendulumCarrier, OutputSpec) {
    let alpha = DMatrix::from_row_slice(2, 6, &[0.0, 0.2, 0.4, 0.1, -0.1, 0.3, 0.5, 0.1, -0.2, 0.0, 0.3, 0.2]);
    (tip_model(), OutputSpec::new(alpha, Phase { coord: 0, start: -1.0, end: 1.5 }))
}

#[test]
fn pinned_configuration_zeroes_outputs_and_wz_matches_fd() {
    let (m, out) = pinned_case();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let xi = random_vec(&mut rng, 2, 0.8);
        let xid = random_vec(&mut rng, 2, 1.0);
        let r = pinned_zero_dynamics(&m, &out, &xi, &xid).unwrap();
        assert!(out.y(2, &r.q).amax() < 1e-10);
        let h = 1e-6;
        let jz_at = |x: &DVector<f64>| pinned_zero_dynamics(&m, &out, x, &xid).unwrap().jz;
        let fd_wz = (jz_at(&(&xi + h * &xid)) - jz_at(&(&xi - h * &xid))) / (2.0 * h) * &xid;
        assert!((fd_wz - &r.wz).amax() < 1e-6);
    }
}

#[test]
fn pinned_reduction_reproduces_base_rows() {
    let (m, out) = pinned_case();
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..20 {
        let xi = random_vec(&mut rng, 2, 0.8);
        let xid = random_vec(&mut rng, 2, 1.0);
        let lam = random_vec(&mut rng, 2, 3.0);
        let r = pinned_zero_dynamics(&m, &out, &xi, &xid).unwrap();
        // input that keeps y'' = 0 on the manifold
        let acc = acceleration_affine(&m, &r.q, &r.qdot).unwrap();
        let jy = out.jacobian(2, &r.q);
        let free = out.jacobian_bias(2, &r.q, &r.qdot) + &jy * (&acc.a0 + &acc.cm * &lam);
        let u = (&jy * &acc.bm).lu().solve(&(-free)).unwrap();
        let sol = eliminate_contact_force(&m, &r.q, &r.qdot, &u, &lam).unwrap();
        let xidd = sol.qddot.rows(0, 2).into_owned();
        let res = &r.dz * &xidd + &r.hz - r.j_hat.transpose() * &sol.force - &lam;
        assert!(res.amax() < 1e-8, "{res}");
        assert!((&r.jz * &xidd + &r.wz).amax() < 1e-8);
    }
}

proptest! {
    #[test]
    fn phase_is_clamped(x in -5.0f64..5.0) {
        let p = Phase { coord: 0, start: -1.0, end: 1.0 };
        let (tau, slope) = p.eval(&DVector::from_vec(vec![x]));
        prop_assert!((0.0..=1.0).contains(&tau));
        if x.abs() > 1.0 { prop_assert_eq!(slope, 0.0); }
    }
}
