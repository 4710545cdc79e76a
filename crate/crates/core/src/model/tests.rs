use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn dims() -> Dims {
    Dims {
        n_x: 2,
        n_z: 3,
        n_u: 2,
        n_lambda: 3,
    }
}

fn random_model(seed: u64) -> (CcsModel, AffineSubsystem, AffineSubsystem) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = AffineSubsystem::random(&mut rng, dims());
    let b = AffineSubsystem::random(&mut rng, dims());
    let m = CcsModel::new(Arc::new(a.clone()), Arc::new(b.clone())).unwrap();
    (m, a, b)
}

fn vec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

// Straight-line evaluation of `base + M v` without matrix products.
fn matvec_loop(m: &DMatrix<f64>, v: &DVector<f64>) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows()];
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out[r] += m[(r, c)] * v[c];
        }
    }
    out
}

#[test]
fn zero_maps_give_zero_rhs() {
    let z = AffineSubsystem::zeros(dims());
    let m = CcsModel::new(Arc::new(z.clone()), Arc::new(z)).unwrap();
    let (xd, zd) = eval_rhs(
        &m,
        Vertex::One,
        &vec(&[1.0, 2.0]),
        &vec(&[1.0, 2.0, 3.0]),
        &vec(&[0.0, 1.0, 0.0]),
        &vec(&[5.0, -5.0]),
        &vec(&[1.0, 1.0, 1.0]),
    )
    .unwrap();
    assert_eq!(xd, DVector::zeros(2));
    assert_eq!(zd, DVector::zeros(3));
}

#[test]
fn affine_rhs_matches_straight_line_oracle() {
    let (m, a, _) = random_model(7);
    let x = vec(&[0.3, -0.7]);
    let zi = vec(&[0.1, 0.2, -0.4]);
    let zj = vec(&[0.5, 0.0, 0.9]);
    let u = vec(&[1.5, -0.25]);
    let l = vec(&[-0.3, 0.8, 0.05]);
    let (xd, zd) = eval_rhs(&m, Vertex::One, &x, &zi, &zj, &u, &l).unwrap();

    let mut want_x = a.f0.iter().copied().collect::<Vec<_>>();
    for part in [matvec_loop(&a.fx, &x), matvec_loop(&a.fz, &zi), matvec_loop(&a.g, &u), matvec_loop(&a.g_breve, &l)] {
        for (w, p) in want_x.iter_mut().zip(part) {
            *w += p;
        }
    }
    let mut want_z = a.p0.iter().copied().collect::<Vec<_>>();
    for part in [matvec_loop(&a.px, &x), matvec_loop(&a.pz, &zi), matvec_loop(&a.q, &u), matvec_loop(&a.q_breve, &l)] {
        for (w, p) in want_z.iter_mut().zip(part) {
            *w += p;
        }
    }
    assert!((xd - vec(&want_x)).amax() < 1e-14);
    assert!((zd - vec(&want_z)).amax() < 1e-14);
}

#[test]
fn eval_rhs_rejects_bad_shapes() {
    let (m, _, _) = random_model(1);
    let err = eval_rhs(
        &m,
        Vertex::Two,
        &vec(&[0.0, 0.0]),
        &vec(&[0.0, 0.0, 0.0]),
        &vec(&[0.0, 0.0, 0.0]),
        &vec(&[0.0]),
        &vec(&[0.0, 0.0, 0.0]),
    )
    .unwrap_err();
    assert!(err.to_string().contains("`u`"), "{err}");
}

struct BadShape;
impl SubsystemDynamics for BadShape {
    fn dims(&self) -> Dims {
        dims()
    }
    fn terms(&self, _: &DVector<f64>, _: &DVector<f64>, _: &DVector<f64>) -> crate::Result<Terms> {
        let mut t = AffineSubsystem::zeros(dims()).terms(&DVector::zeros(2), &DVector::zeros(3), &DVector::zeros(3))?;
        t.q_breve = DMatrix::zeros(3, 2);
        Ok(t)
    }
}

#[test]
fn shape_error_names_the_map() {
    let m = CcsModel::new(Arc::new(BadShape), Arc::new(AffineSubsystem::zeros(dims()))).unwrap();
    let err = m
        .terms(Vertex::One, &DVector::zeros(2), &DVector::zeros(3), &DVector::zeros(3))
        .unwrap_err();
    assert!(err.to_string().contains("q_breve"), "{err}");
}

#[test]
fn model_requires_equal_coupled_dims() {
    let other = Dims { n_z: 2, n_lambda: 2, ..dims() };
    let err = CcsModel::new(Arc::new(AffineSubsystem::zeros(dims())), Arc::new(AffineSubsystem::zeros(other)));
    assert!(err.is_err());
}

#[test]
fn coupling_residual_examples() {
    assert_eq!(coupling_residual(&vec(&[1.0, 2.0]), &vec(&[0.0, 5.0])).unwrap(), vec(&[1.0, -3.0]));
    let z = vec(&[0.4, -1.0]);
    assert_eq!(coupling_residual(&z, &z).unwrap(), DVector::zeros(2));
    assert!(coupling_residual(&vec(&[1.0]), &z).is_err());
}

proptest! {
    #[test]
    fn coupling_residual_is_antisymmetric(a in prop::collection::vec(-1e3..1e3f64, 4), b in prop::collection::vec(-1e3..1e3f64, 4)) {
        let (a, b) = (vec(&a), vec(&b));
        let lhs = coupling_residual(&a, &b).unwrap();
        let rhs = coupling_residual(&b, &a).unwrap();
        prop_assert_eq!(lhs, -rhs);
    }

    #[test]
    fn embedding_round_trips(x in prop::collection::vec(-10.0..10.0f64, 2), z1 in prop::collection::vec(-10.0..10.0f64, 3), z2 in prop::collection::vec(-10.0..10.0f64, 3)) {
        let (m, _, _) = random_model(0);
        let z = PerVertex::new(vec(&z1), vec(&z2));
        let full = embed(&m, &vec(&x), &z, Vertex::Two);
        prop_assert!(full.x[Vertex::One].iter().all(|v| v.to_bits() == 0));
        let (xi, zz) = project(&full, Vertex::Two);
        prop_assert_eq!(xi, vec(&x));
        prop_assert_eq!(zz, z);
    }
}

#[test]
fn rhs_slope_in_u_equals_g() {
    let (m, a, _) = random_model(3);
    let x = vec(&[0.2, 0.1]);
    let zi = vec(&[0.0, 1.0, -1.0]);
    let zj = zi.clone();
    let l = vec(&[0.1, 0.2, 0.3]);
    let u0 = vec(&[0.4, -0.6]);
    let jac = crate::fd::jacobian(
        |u| Ok(eval_rhs(&m, Vertex::One, &x, &zi, &zj, u, &l)?.0),
        &u0,
        crate::fd::DEFAULT_STEP,
    )
    .unwrap();
    let rel = (&jac - &a.g).amax() / a.g.amax();
    assert!(rel <= 1e-6, "{rel}");
}

#[test]
fn velocity_residual_cancels_for_identical_subsystems() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = AffineSubsystem::random(&mut rng, dims());
    let m = CcsModel::new(Arc::new(a.clone()), Arc::new(a)).unwrap();
    let s = FullState {
        x: PerVertex::new(vec(&[0.1, 0.2]), vec(&[0.1, 0.2])),
        z: PerVertex::new(vec(&[1.0, 2.0, 3.0]), vec(&[1.0, 2.0, 3.0])),
    };
    let u = PerVertex::new(vec(&[0.5, 0.5]), vec(&[0.5, 0.5]));
    let r = coupling_velocity_residual(&m, Vertex::One, &s, &u, &DVector::zeros(3)).unwrap();
    assert_eq!(r, DVector::zeros(3));
}

#[test]
fn velocity_residual_of_decoupled_system() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut a = AffineSubsystem::random(&mut rng, dims());
    let mut b = AffineSubsystem::random(&mut rng, dims());
    for s in [&mut a, &mut b] {
        s.g_breve.fill(0.0);
        s.q_breve.fill(0.0);
    }
    let m = CcsModel::new(Arc::new(a.clone()), Arc::new(b.clone())).unwrap();
    let s = FullState {
        x: PerVertex::new(vec(&[0.1, -0.2]), vec(&[0.3, 0.0])),
        z: PerVertex::new(vec(&[1.0, 0.0, -1.0]), vec(&[0.5, 0.5, 0.5])),
    };
    let u = PerVertex::new(vec(&[0.5, 1.0]), vec(&[-0.5, 0.2]));
    let r = coupling_velocity_residual(&m, Vertex::One, &s, &u, &vec(&[9.0, 9.0, 9.0])).unwrap();
    let ti = a.terms(&s.x[Vertex::One], &s.z[Vertex::One], &s.z[Vertex::Two]).unwrap();
    let tj = b.terms(&s.x[Vertex::Two], &s.z[Vertex::Two], &s.z[Vertex::One]).unwrap();
    let want = &ti.p + &ti.q * &u[Vertex::One] - &tj.p - &tj.q * &u[Vertex::Two];
    assert!((r - want).amax() < 1e-14);
}

#[test]
fn embedded_zero_lies_in_both_zero_dynamics_manifolds() {
    let (m, _, _) = random_model(2);
    let z = PerVertex::new(vec(&[1.0, 2.0, 3.0]), vec(&[1.0, 2.0, 3.0]));
    let s = embed(&m, &DVector::zeros(2), &z, Vertex::One);
    assert!(s.x[Vertex::One].iter().all(|v| *v == 0.0));
    assert!(s.x[Vertex::Two].iter().all(|v| *v == 0.0));
}

#[test]
fn closed_loop_with_zero_inputs_reduces_to_drift() {
    let (m, a, b) = random_model(9);
    let zero_u: Arc<dyn StateFeedback> = Arc::new(|_: &FullState| Ok(DVector::zeros(2)));
    let zero_l: Arc<dyn LambdaSolver> = Arc::new(|_: &CcsModel, _: &FullState, _: &PerVertex<DVector<f64>>| Ok(DVector::zeros(3)));
    let cl = closed_loop_rhs(&m, PerVertex::new(zero_u.clone(), zero_u), zero_l);
    let s = FullState {
        x: PerVertex::new(vec(&[0.1, -0.2]), vec(&[0.3, 0.0])),
        z: PerVertex::new(vec(&[1.0, 0.0, -1.0]), vec(&[0.5, 0.5, 0.5])),
    };
    let ev = cl.eval(&s).unwrap();
    let t1 = a.terms(&s.x[Vertex::One], &s.z[Vertex::One], &s.z[Vertex::Two]).unwrap();
    let t2 = b.terms(&s.x[Vertex::Two], &s.z[Vertex::Two], &s.z[Vertex::One]).unwrap();
    assert_eq!(ev.derivative.x[Vertex::One], t1.f);
    assert_eq!(ev.derivative.z[Vertex::One], t1.p);
    assert_eq!(ev.derivative.x[Vertex::Two], t2.f);
    assert_eq!(ev.derivative.z[Vertex::Two], t2.p);
}

#[test]
fn ccs_state_lambda_is_antisymmetric() {
    let (m, _, _) = random_model(4);
    let z = PerVertex::new(DVector::zeros(3), DVector::zeros(3));
    let s = CcsState::new(embed(&m, &DVector::zeros(2), &z, Vertex::One), Vertex::One, vec(&[1.0, -2.0, 0.5]));
    assert!(s.is_antisymmetric());
    assert_eq!(s.lambda[Vertex::Two], vec(&[-1.0, 2.0, -0.5]));
}

#[test]
fn full_state_vector_round_trip() {
    let (m, _, _) = random_model(4);
    let s = FullState {
        x: PerVertex::new(vec(&[1.0, 2.0]), vec(&[3.0, 4.0])),
        z: PerVertex::new(vec(&[5.0, 6.0, 7.0]), vec(&[8.0, 9.0, 10.0])),
    };
    let v = s.to_vector();
    assert_eq!(v.as_slice(), &[1.0, 2.0, 5.0, 6.0, 7.0, 3.0, 4.0, 8.0, 9.0, 10.0]);
    assert_eq!(FullState::from_vector(&m, &v).unwrap(), s);
}
