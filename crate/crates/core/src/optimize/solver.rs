//! Dense augmented-Lagrangian solver for small smooth NLPs
//!
//! ```text
//! min f(x)  s.t.  c(x) = 0,  g(x) >= 0,  lower <= x <= upper
//! ```
//!
//! Inner iterations minimize the augmented Lagrangian over the box with a
//! projected quasi-Newton step (damped BFGS on the Lagrangian plus the
//! Gauss-Newton term of the penalty) and Armijo backtracking. Once the outer
//! loop meets the tolerances, a few active-set Newton steps on the KKT system
//! polish the iterate.

use std::time::Instant;

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Functions of a smooth NLP. Inequalities are `g(x) >= 0`.
pub trait NlpFunctions {
    fn n(&self) -> usize;
    fn lower(&self) -> &DVector<f64>;
    fn upper(&self) -> &DVector<f64>;
    fn cost(&self, x: &DVector<f64>) -> Result<f64>;
    fn cost_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    /// Exact cost Hessian when cheaply available; seeds the quasi-Newton
    /// matrix.
    fn cost_hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
    fn eq(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn eq_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
    fn ineq(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn ineq_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol_eq: f64,
    pub tol_ineq: f64,
    pub tol_stationarity: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Cap on the total number of inner iterations.
    pub max_iterations: usize,
    pub rho_init: f64,
    pub rho_max: f64,
    pub polish_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_eq: 1e-6,
            tol_ineq: 1e-8,
            tol_stationarity: 1e-4,
            max_outer: 60,
            max_inner: 200,
            max_iterations: 3000,
            rho_init: 10.0,
            rho_max: 1e10,
            polish_steps: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    LineSearchFailure,
    /// Some lower bound exceeds its upper bound; nothing was iterated.
    InfeasibleBounds,
    EvaluationError(String),
}

/// One inner iteration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub outer: usize,
    pub merit: f64,
    pub feasibility: f64,
    pub stationarity: f64,
    pub step: f64,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NlpSolution {
    #[serde(skip)]
    pub x: DVector<f64>,
    #[serde(skip)]
    pub multipliers_eq: DVector<f64>,
    #[serde(skip)]
    pub multipliers_ineq: DVector<f64>,
    pub cost: f64,
    pub eq_inf: f64,
    pub ineq_violation: f64,
    pub stationarity: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub wall_time_s: f64,
    pub log: Vec<IterationRecord>,
}

impl NlpSolution {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

struct Eval {
    f: f64,
    gf: DVector<f64>,
    c: DVector<f64>,
    jc: DMatrix<f64>,
    g: DVector<f64>,
    jg: DMatrix<f64>,
}

fn evaluate(p: &dyn NlpFunctions, x: &DVector<f64>) -> Result<Eval> {
    Ok(Eval {
        f: p.cost(x)?,
        gf: p.cost_gradient(x)?,
        c: p.eq(x)?,
        jc: p.eq_jacobian(x)?,
        g: p.ineq(x)?,
        jg: p.ineq_jacobian(x)?,
    })
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn ineq_violation(g: &DVector<f64>) -> f64 {
    g.iter().fold(0.0, |m, v| m.max(-v))
}

fn project(x: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| x[i].clamp(lo[i], hi[i]))
}

/// `|x - P(x - grad)|_inf`.
fn projected_gradient(x: &DVector<f64>, grad: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> f64 {
    (0..x.len()).fold(0.0, |m, i| m.max((x[i] - (x[i] - grad[i]).clamp(lo[i], hi[i])).abs()))
}

fn lagrangian_gradient(ev: &Eval, mu: &DVector<f64>, nu: &DVector<f64>) -> DVector<f64> {
    &ev.gf - ev.jc.transpose() * mu - ev.jg.transpose() * nu
}

/// Augmented-Lagrangian value, gradient, and the multipliers it implies.
fn merit(ev: &Eval, mu: &DVector<f64>, nu: &DVector<f64>, rho: f64) -> (f64, DVector<f64>, DVector<f64>, DVector<f64>) {
    let mu_hat = mu - rho * &ev.c;
    let nu_hat = DVector::from_fn(nu.len(), |i, _| (nu[i] - rho * ev.g[i]).max(0.0));
    let phi = ev.f - mu.dot(&ev.c) + 0.5 * rho * ev.c.norm_squared()
        + (nu_hat.norm_squared() - nu.norm_squared()) / (2.0 * rho);
    let grad = lagrangian_gradient(ev, &mu_hat, &nu_hat);
    (phi, grad, mu_hat, nu_hat)
}

fn at_bound(x: f64, lo: f64, hi: f64) -> bool {
    lo == hi || x <= lo + 1e-12 * (1.0 + lo.abs()) || x >= hi - 1e-12 * (1.0 + hi.abs())
}

/// Solves `h d = rhs` for symmetric positive semidefinite `h`, adding
/// diagonal shifts until Cholesky succeeds.
fn regularized_solve(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = h.diagonal().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut shift = 1e-12 * scale;
    for _ in 0..12 {
        let mut m = h.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += shift;
        }
        if let Some(ch) = m.cholesky() {
            return Some(ch.solve(rhs));
        }
        shift *= 100.0;
    }
    None
}

fn bfgs_update(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) {
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if sbs <= 1e-14 * s.norm_squared().max(1e-300) {
        return;
    }
    let sy = s.dot(y);
    // Powell damping keeps the update positive definite.
    let y = if sy < 0.2 * sbs {
        let theta = 0.8 * sbs / (sbs - sy);
        theta * y + (1.0 - theta) * &bs
    } else {
        y.clone()
    };
    let sy = s.dot(&y);
    *b += &y * y.transpose() / sy - &bs * bs.transpose() / sbs;
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

struct Progress {
    x: DVector<f64>,
    ev: Eval,
    mu: DVector<f64>,
    nu: DVector<f64>,
}

impl Progress {
    fn feasibility(&self) -> f64 {
        inf_norm(&self.ev.c).max(ineq_violation(&self.ev.g))
    }

    fn stationarity(&self, p: &dyn NlpFunctions) -> f64 {
        let grad = lagrangian_gradient(&self.ev, &self.mu, &self.nu);
        projected_gradient(&self.x, &grad, p.lower(), p.upper())
    }

    fn converged(&self, p: &dyn NlpFunctions, cfg: &SolverConfig) -> bool {
        inf_norm(&self.ev.c) <= cfg.tol_eq
            && ineq_violation(&self.ev.g) <= cfg.tol_ineq
            && self.stationarity(p) <= cfg.tol_stationarity
    }
}

/// Active-set Newton step on the KKT system using `b` as the Hessian of the
/// Lagrangian. Returns `None` when the step does not improve the iterate.
fn polish_step(p: &dyn NlpFunctions, st: &Progress, b: &DMatrix<f64>) -> Result<Option<Progress>> {
    let (lo, hi) = (p.lower(), p.upper());
    let free: Vec<usize> = (0..st.x.len()).filter(|&i| !at_bound(st.x[i], lo[i], hi[i])).collect();
    let active: Vec<usize> = (0..st.ev.g.len()).filter(|&i| st.ev.g[i] <= 1e-8 || st.nu[i] > 0.0).collect();
    let m_eq = st.ev.c.len();
    let m = m_eq + active.len();
    let nf = free.len();
    if nf + m == 0 {
        return Ok(None);
    }
    let mut a = DMatrix::zeros(m, nf);
    let mut r = DVector::zeros(m);
    for (k, &i) in free.iter().enumerate() {
        for row in 0..m_eq {
            a[(row, k)] = st.ev.jc[(row, i)];
        }
        for (ar, &gi) in active.iter().enumerate() {
            a[(m_eq + ar, k)] = st.ev.jg[(gi, i)];
        }
    }
    r.rows_mut(0, m_eq).copy_from(&st.ev.c);
    for (ar, &gi) in active.iter().enumerate() {
        r[m_eq + ar] = st.ev.g[gi];
    }
    let bff = submatrix(b, &free, &free);
    let scale = bff.diagonal().iter().fold(1.0_f64, |s, v| s.max(v.abs()));
    let mut kkt = DMatrix::zeros(nf + m, nf + m);
    kkt.view_mut((0, 0), (nf, nf)).copy_from(&bff);
    kkt.view_mut((nf, 0), (m, nf)).copy_from(&a);
    kkt.view_mut((0, nf), (nf, m)).copy_from(&a.transpose());
    for i in 0..nf {
        kkt[(i, i)] += 1e-12 * scale;
    }
    for i in 0..m {
        kkt[(nf + i, nf + i)] -= 1e-14 * scale;
    }
    let mut rhs = DVector::zeros(nf + m);
    for (k, &i) in free.iter().enumerate() {
        rhs[k] = -st.ev.gf[i];
    }
    rhs.rows_mut(nf, m).copy_from(&(-&r));
    let Some(sol) = kkt.lu().solve(&rhs) else {
        return Ok(None);
    };
    // multipliers enter with a minus sign: B d - A^T y = -grad f
    let y = -sol.rows(nf, m).into_owned();
    let mut x = st.x.clone();
    for (k, &i) in free.iter().enumerate() {
        x[i] += sol[k];
    }
    if (0..x.len()).any(|i| x[i] < lo[i] || x[i] > hi[i]) {
        return Ok(None);
    }
    let ev = match evaluate(p, &x) {
        Ok(ev) => ev,
        Err(_) => return Ok(None),
    };
    let mu = y.rows(0, m_eq).into_owned();
    let mut nu = DVector::zeros(st.ev.g.len());
    for (ar, &gi) in active.iter().enumerate() {
        nu[gi] = y[m_eq + ar].max(0.0);
    }
    let next = Progress { x, ev, mu, nu };
    let score = |s: &Progress| s.feasibility() + s.stationarity(p);
    if score(&next) < score(st) {
        Ok(Some(next))
    } else {
        Ok(None)
    }
}

/// Solves the NLP from `x0` (projected onto the box first).
pub fn solve(p: &dyn NlpFunctions, x0: &DVector<f64>, cfg: &SolverConfig) -> NlpSolution {
    let start = Instant::now();
    let mut log = Vec::new();
    let mut iterations = 0;
    let fail = |x: DVector<f64>, e: Error, iterations, log, start: Instant| NlpSolution {
        x,
        multipliers_eq: DVector::zeros(0),
        multipliers_ineq: DVector::zeros(0),
        cost: f64::NAN,
        eq_inf: f64::INFINITY,
        ineq_violation: f64::INFINITY,
        stationarity: f64::INFINITY,
        iterations,
        status: SolveStatus::EvaluationError(e.to_string()),
        wall_time_s: start.elapsed().as_secs_f64(),
        log,
    };
    let (lo, hi) = (p.lower().clone(), p.upper().clone());
    if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
        let mut out = fail(x0.clone(), Error::Config("crossed bounds".into()), 0, log, start);
        out.status = SolveStatus::InfeasibleBounds;
        return out;
    }
    let x = project(x0, &lo, &hi);
    let ev = match evaluate(p, &x) {
        Ok(ev) => ev,
        Err(e) => return fail(x, e, 0, log, start),
    };
    let n = x.len();
    let mut b = p.cost_hessian(&x).unwrap_or_else(|| DMatrix::identity(n, n));
    if b.clone().cholesky().is_none() {
        let shift = 1e-2 * b.diagonal().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            b[(i, i)] += shift;
        }
    }
    let mut st = Progress {
        mu: DVector::zeros(ev.c.len()),
        nu: DVector::zeros(ev.g.len()),
        x,
        ev,
    };
    let mut rho = cfg.rho_init;
    let mut prev_feas = st.feasibility();
    let mut status = SolveStatus::MaxIterations;
    let mut search_failures = 0;

    'outer: for outer in 0..cfg.max_outer {
        let inner_tol = (0.1f64.powi(outer as i32 + 1)).max(0.1 * cfg.tol_stationarity);
        for _ in 0..cfg.max_inner {
            if iterations >= cfg.max_iterations {
                break 'outer;
            }
            iterations += 1;
            let (phi, grad, mu_hat, nu_hat) = merit(&st.ev, &st.mu, &st.nu, rho);
            let pg = projected_gradient(&st.x, &grad, &lo, &hi);
            if pg <= inner_tol {
                break;
            }
            let mut h = b.clone() + rho * st.ev.jc.transpose() * &st.ev.jc;
            let act: Vec<usize> = (0..nu_hat.len()).filter(|&i| nu_hat[i] > 0.0).collect();
            if !act.is_empty() {
                let ga = DMatrix::from_fn(act.len(), n, |r, c| st.ev.jg[(act[r], c)]);
                h += rho * ga.transpose() * ga;
            }
            let free: Vec<usize> = (0..n)
                .filter(|&i| {
                    let at_lo = st.x[i] <= lo[i] && grad[i] > 0.0;
                    let at_hi = st.x[i] >= hi[i] && grad[i] < 0.0;
                    lo[i] != hi[i] && !at_lo && !at_hi
                })
                .collect();
            let mut d = DVector::zeros(n);
            let gfree = DVector::from_fn(free.len(), |k, _| -grad[free[k]]);
            match regularized_solve(&submatrix(&h, &free, &free), &gfree) {
                Some(df) => {
                    for (k, &i) in free.iter().enumerate() {
                        d[i] = df[k];
                    }
                }
                None => {
                    for &i in &free {
                        d[i] = -grad[i];
                    }
                }
            }
            let mut alpha = 1.0;
            let mut accepted = None;
            while alpha > 1e-12 {
                let xn = project(&(&st.x + alpha * &d), &lo, &hi);
                if let Ok(evn) = evaluate(p, &xn) {
                    let (phin, ..) = merit(&evn, &st.mu, &st.nu, rho);
                    if phin <= phi + 1e-4 * grad.dot(&(&xn - &st.x)) {
                        accepted = Some((xn, evn));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((xn, evn)) = accepted else {
                search_failures += 1;
                debug!("line search failed at outer {outer}");
                break;
            };
            search_failures = 0;
            let s = &xn - &st.x;
            let yv = lagrangian_gradient(&evn, &mu_hat, &nu_hat) - lagrangian_gradient(&st.ev, &mu_hat, &nu_hat);
            bfgs_update(&mut b, &s, &yv);
            st.x = xn;
            st.ev = evn;
            log.push(IterationRecord {
                iteration: iterations,
                outer,
                merit: phi,
                feasibility: st.feasibility(),
                stationarity: pg,
                step: inf_norm(&s),
                rho,
            });
        }
        if search_failures >= 5 {
            status = SolveStatus::LineSearchFailure;
            break;
        }
        // first-order multiplier update
        let mu_new = &st.mu - rho * &st.ev.c;
        let nu_new = DVector::from_fn(st.nu.len(), |i, _| (st.nu[i] - rho * st.ev.g[i]).max(0.0));
        st.mu = mu_new;
        st.nu = nu_new;
        let feas = st.feasibility();
        debug!(
            "outer {outer}: feasibility {feas:.3e}, stationarity {:.3e}, rho {rho:.1e}",
            st.stationarity(p)
        );
        if feas <= 100.0 * cfg.tol_eq.max(cfg.tol_ineq) || st.converged(p, cfg) {
            for _ in 0..cfg.polish_steps {
                match polish_step(p, &st, &b) {
                    Ok(Some(next)) => st = next,
                    Ok(None) => break,
                    Err(e) => return fail(st.x, e, iterations, log, start),
                }
            }
        }
        if st.converged(p, cfg) {
            status = SolveStatus::Converged;
            break;
        }
        if feas > 0.25 * prev_feas {
            rho = (rho * 10.0).min(cfg.rho_max);
        }
        prev_feas = feas;
    }
    if status != SolveStatus::Converged && st.converged(p, cfg) {
        status = SolveStatus::Converged;
    }
    NlpSolution {
        cost: st.ev.f,
        eq_inf: inf_norm(&st.ev.c),
        ineq_violation: ineq_violation(&st.ev.g),
        stationarity: st.stationarity(p),
        iterations,
        status,
        wall_time_s: start.elapsed().as_secs_f64(),
        log,
        multipliers_eq: st.mu,
        multipliers_ineq: st.nu,
        x: st.x,
    }
}

/// `min 1/2 x^T Q x + c^T x` subject to affine constraints and a box.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticProgram {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    /// `A x = b`.
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    /// `G x >= h`.
    pub g_ineq: DMatrix<f64>,
    pub h_ineq: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QuadraticProgram {
    /// Equality-constrained QP with an unbounded box.
    pub fn equality(q: DMatrix<f64>, c: DVector<f64>, a_eq: DMatrix<f64>, b_eq: DVector<f64>) -> Self {
        let n = c.len();
        QuadraticProgram {
            q,
            c,
            a_eq,
            b_eq,
            g_ineq: DMatrix::zeros(0, n),
            h_ineq: DVector::zeros(0),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    /// Minimizer and multipliers from the dense KKT system (equalities only).
    pub fn kkt_solution(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let (n, m) = (self.c.len(), self.b_eq.len());
        let mut k = DMatrix::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n)).copy_from(&self.q);
        k.view_mut((0, n), (n, m)).copy_from(&self.a_eq.transpose());
        k.view_mut((n, 0), (m, n)).copy_from(&self.a_eq);
        let rhs = crate::linalg::vstack(&[&(-&self.c), &self.b_eq]);
        let sol = crate::linalg::solve_square_vec(&k, &rhs, "KKT matrix", 1e-14)?;
        Ok((sol.rows(0, n).into_owned(), -sol.rows(n, m).into_owned()))
    }
}

impl NlpFunctions for QuadraticProgram {
    fn n(&self) -> usize {
        self.c.len()
    }
    fn lower(&self) -> &DVector<f64> {
        &self.lower
    }
    fn upper(&self) -> &DVector<f64> {
        &self.upper
    }
    fn cost(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * x.dot(&(&self.q * x)) + self.c.dot(x))
    }
    fn cost_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.q * x + &self.c)
    }
    fn cost_hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.q.clone())
    }
    fn eq(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.a_eq * x - &self.b_eq)
    }
    fn eq_jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.a_eq.clone())
    }
    fn ineq(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.g_ineq * x - &self.h_ineq)
    }
    fn ineq_jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.g_ineq.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_qp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> QuadraticProgram {
        let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = &l * l.transpose() + DMatrix::identity(n, n);
        let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        QuadraticProgram::equality(q, c, a, b)
    }

    #[test]
    fn equality_qp_matches_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (n, m) in [(2, 1), (5, 2), (10, 4), (20, 7)] {
            let qp = random_qp(&mut rng, n, m);
            let (x_star, _) = qp.kkt_solution().unwrap();
            let sol = solve(&qp, &DVector::zeros(n), &SolverConfig::default());
            assert!(sol.converged(), "{:?}", sol.status);
            assert!((&sol.x - &x_star).amax() <= 1e-8, "{}", (&sol.x - &x_star).amax());
        }
    }

    #[test]
    fn infeasible_pair_reports_non_convergence() {
        let qp = QuadraticProgram::equality(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::from_element(2, 1, 1.0),
            DVector::from_vec(vec![0.0, 1.0]),
        );
        let sol = solve(&qp, &DVector::zeros(1), &SolverConfig::default());
        assert!(!sol.converged());
        assert!(sol.eq_inf >= 0.49);
    }

    #[test]
    fn bounds_and_inequalities_are_respected() {
        // min (x - 2)^2 + (y - 2)^2  s.t. x + y >= 1, x <= 1, y <= 0.5
        let mut qp = QuadraticProgram::equality(
            2.0 * DMatrix::identity(2, 2),
            DVector::from_vec(vec![-4.0, -4.0]),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        );
        qp.upper = DVector::from_vec(vec![1.0, 0.5]);
        qp.g_ineq = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        qp.h_ineq = DVector::from_vec(vec![1.0]);
        let sol = solve(&qp, &DVector::from_vec(vec![-3.0, 5.0]), &SolverConfig::default());
        assert!(sol.converged());
        assert!((sol.x[0] - 1.0).abs() < 1e-9 && (sol.x[1] - 0.5).abs() < 1e-9);

        // an active inequality: min x^2 + y^2 s.t. x + y >= 1
        qp.upper = DVector::from_element(2, f64::INFINITY);
        qp.c = DVector::zeros(2);
        let sol = solve(&qp, &DVector::zeros(2), &SolverConfig::default());
        assert!(sol.converged());
        assert!((sol.x[0] - 0.5).abs() < 1e-8 && (sol.x[1] - 0.5).abs() < 1e-8);
        assert!((sol.multipliers_ineq[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn nonlinear_equality() {
        // min x + y on the unit circle: optimum at -(1, 1)/sqrt 2
        struct Circle(DVector<f64>, DVector<f64>);
        impl NlpFunctions for Circle {
            fn n(&self) -> usize {
                2
            }
            fn lower(&self) -> &DVector<f64> {
                &self.0
            }
            fn upper(&self) -> &DVector<f64> {
                &self.1
            }
            fn cost(&self, x: &DVector<f64>) -> Result<f64> {
                Ok(x[0] + x[1])
            }
            fn cost_gradient(&self, _x: &DVector<f64>) -> Result<DVector<f64>> {
                Ok(DVector::from_element(2, 1.0))
            }
            fn eq(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
                Ok(DVector::from_element(1, x.norm_squared() - 1.0))
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
        let p = Circle(DVector::from_element(2, -10.0), DVector::from_element(2, 10.0));
        let sol = solve(&p, &DVector::from_vec(vec![0.3, -0.8]), &SolverConfig::default());
        assert!(sol.converged(), "{:?}", sol.status);
        let r = -std::f64::consts::FRAC_1_SQRT_2;
        assert!((sol.x[0] - r).abs() < 1e-6 && (sol.x[1] - r).abs() < 1e-6, "{}", sol.x);
    }
}
