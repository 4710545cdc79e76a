use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::model::{coupling_velocity_residual, embed, eval_rhs, AffineSubsystem, Dims};

const DIMS: Dims = Dims {
    n_x: 2,
    n_z: 3,
    n_u: 2,
    n_lambda: 3,
};

fn random_model(seed: u64) -> (CcsModel, AffineSubsystem, AffineSubsystem) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = AffineSubsystem::random(&mut rng, DIMS);
    let b = AffineSubsystem::random(&mut rng, DIMS);
    (CcsModel::new(Arc::new(a.clone()), Arc::new(b.clone())).unwrap(), a, b)
}

fn rvec(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Direct solve of the two defining equations with unknowns `(u_j, lambda_e)`:
/// `f_j + g_j u_j - gb_j lambda_e = 0` and `z_i' - z_j' = 0`.
fn dense_oracle(a: &AffineSubsystem, b: &AffineSubsystem, x_i: &DVector<f64>, zi: &DVector<f64>, zj: &DVector<f64>, u_i: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let f_j = &b.f0 + &b.fz * zj;
    let p_j = &b.p0 + &b.pz * zj;
    let p_i = &a.p0 + &a.px * x_i + &a.pz * zi;
    let n = b.g.ncols() + b.g_breve.ncols();
    let mut m = DMatrix::zeros(n, n);
    let mut r = DVector::zeros(n);
    for row in 0..2 {
        for c in 0..2 {
            m[(row, c)] = b.g[(row, c)];
        }
        for c in 0..3 {
            m[(row, 2 + c)] = -b.g_breve[(row, c)];
        }
        r[row] = -f_j[row];
    }
    let qiu = &a.q * u_i;
    for row in 0..3 {
        for c in 0..2 {
            m[(2 + row, c)] = -b.q[(row, c)];
        }
        for c in 0..3 {
            m[(2 + row, 2 + c)] = a.q_breve[(row, c)] + b.q_breve[(row, c)];
        }
        r[2 + row] = -(p_i[row] + qiu[row] - p_j[row]);
    }
    let sol = m.full_piv_lu().solve(&r).unwrap();
    (sol.rows(0, 2).into_owned(), sol.rows(2, 3).into_owned())
}

#[test]
fn qbreve_is_identity_for_unit_blocks() {
    let mut a = AffineSubsystem::zeros(DIMS);
    let mut b = AffineSubsystem::zeros(DIMS);
    b.g = DMatrix::identity(2, 2);
    a.q_breve = DMatrix::identity(3, 3) * 0.25;
    b.q_breve = DMatrix::identity(3, 3) * 0.75;
    let m = CcsModel::new(Arc::new(a), Arc::new(b)).unwrap();
    let z = PerVertex::new(DVector::zeros(3), DVector::zeros(3));
    let q = qbreve_matrix(&m, Vertex::One, &DVector::zeros(2), &z).unwrap();
    assert_eq!(q, DMatrix::identity(5, 5));
}

#[test]
fn qbreve_blocks_equal_direct_evaluations() {
    let (m, a, b) = random_model(21);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rvec(&mut rng, 2);
    let z = PerVertex::new(rvec(&mut rng, 3), rvec(&mut rng, 3));
    let q = qbreve_matrix(&m, Vertex::One, &x, &z).unwrap();
    assert_eq!(q.view((0, 0), (2, 2)).into_owned(), b.g);
    assert_eq!(q.view((0, 2), (2, 3)).into_owned(), b.g_breve);
    assert_eq!(q.view((2, 0), (3, 2)).into_owned(), b.q);
    assert_eq!(q.view((2, 2), (3, 3)).into_owned(), &a.q_breve + &b.q_breve);
}

#[test]
fn non_square_system_is_a_dimension_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = AffineSubsystem::random(&mut rng, DIMS);
    let b = AffineSubsystem::random(&mut rng, Dims { n_u: 1, ..DIMS });
    let m = CcsModel::new(Arc::new(a), Arc::new(b)).unwrap();
    let z = PerVertex::new(DVector::zeros(3), DVector::zeros(3));
    let err = coupling_solve(&m, Vertex::One, &DVector::zeros(2), &z, &DVector::zeros(2)).unwrap_err();
    assert!(matches!(err, Error::Dimension { .. }), "{err}");
}

#[test]
fn singular_coupling_reports_condition() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut a = AffineSubsystem::random(&mut rng, DIMS);
    let mut b = AffineSubsystem::random(&mut rng, DIMS);
    a.q_breve = DMatrix::identity(3, 3);
    b.q_breve = -DMatrix::identity(3, 3);
    b.g_breve.fill(0.0);
    // The lambda columns are zero but a row of g_j survives, so the matrix is square and singular.
    let m = CcsModel::new(Arc::new(a), Arc::new(b)).unwrap();
    let z = PerVertex::new(DVector::zeros(3), DVector::zeros(3));
    let err = coupling_solve(&m, Vertex::One, &DVector::zeros(2), &z, &DVector::zeros(2)).unwrap_err();
    assert!(matches!(err, Error::Singular { .. } | Error::Dimension { .. }), "{err}");
}

#[test]
fn symmetric_zero_rhs_gives_zero_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut a = AffineSubsystem::random(&mut rng, DIMS);
    a.f0.fill(0.0);
    a.fz.fill(0.0);
    let m = CcsModel::new(Arc::new(a.clone()), Arc::new(a)).unwrap();
    let zz = rvec(&mut rng, 3);
    let z = PerVertex::new(zz.clone(), zz);
    let (uz, l) = coupling_solve(&m, Vertex::One, &DVector::zeros(2), &z, &DVector::zeros(2)).unwrap();
    assert!(uz.amax() < 1e-15 && l.amax() < 1e-15);
}

#[test]
fn solve_satisfies_constraints_and_matches_dense_oracle() {
    let (m, a, b) = random_model(5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let x = rvec(&mut rng, 2);
        let z = PerVertex::new(rvec(&mut rng, 3), rvec(&mut rng, 3));
        let u = rvec(&mut rng, 2);
        let (uz, l) = coupling_solve(&m, Vertex::One, &x, &z, &u).unwrap();

        let s = embed(&m, &x, &z, Vertex::One);
        let inputs = PerVertex::new(u.clone(), uz.clone());
        let cdot = coupling_velocity_residual(&m, Vertex::One, &s, &inputs, &l).unwrap();
        assert!(cdot.norm() <= 1e-10, "{}", cdot.norm());
        // Viewed from the reversed edge the residual flips sign and stays zero.
        let cdot_rev = coupling_velocity_residual(&m, Vertex::Two, &s, &inputs, &(-&l)).unwrap();
        assert!((cdot_rev + &cdot).amax() <= 1e-12);

        let pt = build_relation(&m, Vertex::One).at(&x, &z).unwrap();
        let inv = zero_invariance_residual(&pt, &u, &uz);
        assert!(inv.norm() <= 1e-10, "{}", inv.norm());

        let (uz_o, l_o) = dense_oracle(&a, &b, &x, &z[Vertex::One], &z[Vertex::Two], &u);
        let scale = 1.0f64.max(uz_o.amax()).max(l_o.amax());
        assert!((&uz - uz_o).amax() <= 1e-12 * scale);
        assert!((&l - l_o).amax() <= 1e-12 * scale);
    }
}

#[test]
fn relation_reproduces_solve_and_fd_columns() {
    let (m, _, _) = random_model(8);
    let rel = build_relation(&m, Vertex::Two);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let x = rvec(&mut rng, 2);
        let z = PerVertex::new(rvec(&mut rng, 3), rvec(&mut rng, 3));
        let pt = rel.at(&x, &z).unwrap();
        let u = rvec(&mut rng, 2);
        let (uz, l) = coupling_solve(&m, Vertex::Two, &x, &z, &u).unwrap();
        assert!((pt.lambda_e(&u) - &l).amax() < 1e-12);
        assert!((pt.uz_j(&u) - &uz).amax() < 1e-12);

        let fd = crate::fd::jacobian(|uu| Ok(coupling_solve(&m, Vertex::Two, &x, &z, uu)?.1), &u, 1e-6).unwrap();
        assert!((fd - &pt.a_e).amax() <= 1e-8);
    }
}

#[test]
fn invariance_residual_responds_linearly_to_bias() {
    let (m, _, _) = random_model(10);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = rvec(&mut rng, 2);
    let z = PerVertex::new(rvec(&mut rng, 3), rvec(&mut rng, 3));
    let u = rvec(&mut rng, 2);
    let pt = build_relation(&m, Vertex::One).at(&x, &z).unwrap();
    let uz = pt.uz_j(&u);
    let base = zero_invariance_residual(&pt, &u, &uz);
    let delta = rvec(&mut rng, 3) * 1e-3;
    let mut bumped = pt.clone();
    bumped.b_e += &delta;
    let moved = zero_invariance_residual(&bumped, &u, &uz);
    let want = -(&pt.terms_j.g_breve * &delta);
    assert!(((moved - base) - want).amax() < 1e-14);
}

#[test]
fn invariance_residual_of_decoupled_drift_free_vertex() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let a = AffineSubsystem::random(&mut rng, DIMS);
    let mut b = AffineSubsystem::random(&mut rng, DIMS);
    b.f0.fill(0.0);
    b.fz.fill(0.0);
    b.g_breve.fill(0.0);
    let m = CcsModel::new(Arc::new(a), Arc::new(b)).unwrap();
    let z = PerVertex::new(rvec(&mut rng, 3), rvec(&mut rng, 3));
    let pt = build_relation(&m, Vertex::One).at(&DVector::zeros(2), &z).unwrap();
    let u = DVector::zeros(2);
    assert_eq!(zero_invariance_residual(&pt, &u, &u), DVector::zeros(2));
}

#[test]
fn isolated_rhs_on_manifold_keeps_coupled_states_together() {
    let (m, _, _) = random_model(13);
    let iso = IsolatedModel::new(&m, Vertex::One);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let x = rvec(&mut rng, 2);
        let zz = rvec(&mut rng, 3);
        let u = rvec(&mut rng, 2);
        let r = isolated_rhs(&iso, &x, &zz, &zz, &u).unwrap();
        assert!((&r.zdot_i - &r.zdot_j).amax() <= 1e-9);
        let (c, cdot) = manifold_residuals(&iso, &x, &PerVertex::new(zz.clone(), zz.clone()), &u).unwrap();
        assert_eq!(c, DVector::zeros(3));
        assert!(cdot.amax() <= 1e-9);
    }
}

#[test]
fn off_manifold_coupling_residual_is_reported_verbatim() {
    let (m, _, _) = random_model(15);
    let iso = IsolatedModel::new(&m, Vertex::One);
    let z = PerVertex::new(DVector::from_vec(vec![1.0, 2.0, 3.0]), DVector::from_vec(vec![0.5, 2.0, 4.0]));
    let (c, _) = manifold_residuals(&iso, &DVector::zeros(2), &z, &DVector::zeros(2)).unwrap();
    assert_eq!(c, DVector::from_vec(vec![0.5, 0.0, -1.0]));
}

#[test]
fn isolated_rhs_matches_full_ccs_under_substitution() {
    let (m, _, _) = random_model(16);
    let iso = IsolatedModel::new(&m, Vertex::Two);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let x = rvec(&mut rng, 2);
        let z = PerVertex::new(rvec(&mut rng, 3), rvec(&mut rng, 3));
        let u = rvec(&mut rng, 2);
        let r = iso.rhs(&x, &z, &u).unwrap();
        let (i, j) = (Vertex::Two, Vertex::One);
        let (xd_i, zd_i) = eval_rhs(&m, i, &x, &z[i], &z[j], &u, &r.lambda_e).unwrap();
        let (xd_j, zd_j) = eval_rhs(&m, j, &DVector::zeros(2), &z[j], &z[i], &r.uz_j, &(-&r.lambda_e)).unwrap();
        assert!((xd_i - &r.xdot_i).amax() < 1e-12);
        assert!((zd_i - &r.zdot_i).amax() < 1e-12);
        assert!((zd_j - &r.zdot_j).amax() < 1e-12);
        // Zero dynamics of the other vertex are invariant.
        assert!(xd_j.amax() < 1e-12);
    }
}

#[test]
fn decoupled_internal_dynamics_pass_through() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let mut a = AffineSubsystem::random(&mut rng, DIMS);
    let mut b = AffineSubsystem::random(&mut rng, DIMS);
    a.g_breve.fill(0.0);
    b.g_breve.fill(0.0);
    let m = CcsModel::new(Arc::new(a.clone()), Arc::new(b)).unwrap();
    let iso = IsolatedModel::new(&m, Vertex::One);
    let x = rvec(&mut rng, 2);
    let zz = rvec(&mut rng, 3);
    let u = rvec(&mut rng, 2);
    let r = isolated_rhs(&iso, &x, &zz, &zz, &u).unwrap();
    let want = &a.f0 + &a.fx * &x + &a.fz * &zz + &a.g * &u;
    assert!((r.xdot_i - want).amax() < 1e-13);
}

proptest! {
    #[test]
    fn relation_is_affine_in_u(alpha in -2.0..2.0f64, beta in -2.0..2.0f64, seed in 0u64..50) {
        let (m, _, _) = random_model(100 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rvec(&mut rng, 2);
        let z = PerVertex::new(rvec(&mut rng, 3), rvec(&mut rng, 3));
        let (u, v) = (rvec(&mut rng, 2), rvec(&mut rng, 2));
        let pt = build_relation(&m, Vertex::One).at(&x, &z).unwrap();
        let lhs = coupling_solve(&m, Vertex::One, &x, &z, &(alpha * &u + beta * &v)).unwrap().1;
        let rhs = alpha * pt.lambda_e(&u) + beta * pt.lambda_e(&v) + (1.0 - alpha - beta) * &pt.b_e;
        prop_assert!((lhs - rhs).amax() < 1e-11);
    }
}
