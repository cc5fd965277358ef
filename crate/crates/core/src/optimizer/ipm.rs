//! Primal-dual interior-point iteration.
//!
//! The barrier parameter `μ` grows geometrically; for each `μ` the
//! perturbed KKT system is driven to a tolerance with Newton steps on the
//! block system
//!
//! ```text
//! [ H            Dfᵀ      ] [Δv]     [ ∇f0 + Dfᵀλ     ]
//! [ -diag(λ)Df  -diag(f)  ] [Δλ] = - [ -λ∘f - (1/μ)1  ]
//! ```
//!
//! where `H` combines a symmetric-rank-one model of the rate terms with the
//! exact curvature of the power and PAPR constraints. The rate curvature is
//! genuinely indefinite near constrained optima, which a positive-definite
//! update cannot represent; definiteness is instead enforced on the reduced
//! matrix `H + Dfᵀ diag(λ/-f) Df` by an inertia correction.

use nalgebra::{DMatrix, DVector};

use super::problem::{Eval, Problem, PAPR_SHARPNESS, PAPR_SHARPNESS_MAX};
use super::SolverConfig;
use crate::error::{Error, Result};

const MU_INIT: f64 = 10.0;
const BOUNDARY_FRACTION: f64 = 0.99;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;
const MIN_STEP: f64 = 1e-10;
const MAX_SEARCH_FAILURES: usize = 3;
/// Smallest eigenvalue demanded of the reduced matrix, relative to its
/// largest diagonal entry.
const INERTIA_MARGIN: f64 = 1e-8;
/// A barrier subproblem is abandoned when its merit improved by less than
/// `STALL_PROGRESS` over the last `STALL_WINDOW` iterations.
const STALL_WINDOW: usize = 10;
const STALL_PROGRESS: f64 = 1e-8;

/// Primal-dual iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct IpState {
    pub v: DVector<f64>,
    pub lambda: DVector<f64>,
    pub mu: f64,
}

/// Local model at a point: values, first derivatives and the Lagrangian
/// Hessian estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub f0: f64,
    pub f: Vec<f64>,
    pub grad_f0: DVector<f64>,
    pub grads_f: Vec<DVector<f64>>,
    pub hess_lagrangian: DMatrix<f64>,
}

impl Derivatives {
    fn jacobian(&self) -> DMatrix<f64> {
        let n = self.grad_f0.len();
        DMatrix::from_fn(self.f.len(), n, |i, j| self.grads_f[i][j])
    }

    /// Dual and centrality residuals.
    pub fn residuals(&self, state: &IpState) -> (DVector<f64>, DVector<f64>) {
        let jac = self.jacobian();
        let dual = &self.grad_f0 + jac.transpose() * &state.lambda;
        let cent = DVector::from_fn(self.f.len(), |i, _| {
            -state.lambda[i] * self.f[i] - 1.0 / state.mu
        });
        (dual, cent)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonStep {
    pub dv: DVector<f64>,
    pub dlambda: DVector<f64>,
    /// The block matrix was numerically singular and was pseudo-inverted.
    pub pseudo_inverse: bool,
}

/// Solves the block Newton system at `state`.
pub fn ip_newton_step(state: &IpState, d: &Derivatives, pinv_threshold: f64) -> Result<NewtonStep> {
    let n = state.v.len();
    let k = d.f.len();
    if d.grad_f0.len() != n || d.hess_lagrangian.shape() != (n, n) {
        return Err(Error::SizeMismatch {
            expected: n,
            found: d.grad_f0.len(),
        });
    }
    if state.lambda.len() != k || d.grads_f.len() != k {
        return Err(Error::SizeMismatch {
            expected: k,
            found: state.lambda.len(),
        });
    }
    let jac = d.jacobian();
    let mut m = DMatrix::zeros(n + k, n + k);
    m.view_mut((0, 0), (n, n)).copy_from(&d.hess_lagrangian);
    m.view_mut((0, n), (n, k)).copy_from(&jac.transpose());
    for i in 0..k {
        for j in 0..n {
            m[(n + i, j)] = -state.lambda[i] * jac[(i, j)];
        }
        m[(n + i, n + i)] = -d.f[i];
    }
    let (dual, cent) = d.residuals(state);
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(-dual));
    rhs.rows_mut(n, k).copy_from(&(-cent));

    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let singular = !(smin >= pinv_threshold * smax);
    let sol = if singular {
        svd.solve(&rhs, pinv_threshold * smax)
            .map_err(|e| Error::LinearSolveFailure(e.to_string()))?
    } else {
        match m.lu().solve(&rhs) {
            Some(x) => x,
            None => svd
                .solve(&rhs, pinv_threshold * smax)
                .map_err(|e| Error::LinearSolveFailure(e.to_string()))?,
        }
    };
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(Error::LinearSolveFailure("non-finite Newton step".into()));
    }
    Ok(NewtonStep {
        dv: sol.rows(0, n).into_owned(),
        dlambda: sol.rows(n, k).into_owned(),
        pseudo_inverse: singular,
    })
}

#[derive(Debug, Clone)]
pub(crate) struct LocalOutcome {
    pub v: Vec<f64>,
    pub converged: bool,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub message: Option<String>,
}

fn derivs(ev: &Eval, hess: DMatrix<f64>) -> Derivatives {
    Derivatives {
        f0: ev.f0,
        f: ev.f.clone(),
        grad_f0: ev.grad_f0.clone(),
        grads_f: ev.grads_f.clone(),
        hess_lagrangian: hess,
    }
}

fn residual_norms(ev: &Eval, lambda: &DVector<f64>, mu: f64) -> (f64, f64, f64) {
    let mut dual = ev.grad_f0.clone();
    for (g, l) in ev.grads_f.iter().zip(lambda.iter()) {
        dual += g * *l;
    }
    let cent = ev
        .f
        .iter()
        .zip(lambda.iter())
        .map(|(f, l)| (-l * f - 1.0 / mu).abs())
        .fold(0.0, f64::max);
    let two = (dual.norm_squared()
        + ev.f.iter().zip(lambda.iter()).map(|(f, l)| (-l * f - 1.0 / mu).powi(2)).sum::<f64>())
    .sqrt();
    (dual.amax(), cent, two)
}

fn merit(ev: &Eval, mu: f64) -> f64 {
    ev.f0 - ev.f.iter().map(|f| (-f).ln()).sum::<f64>() / mu
}

/// Gradient of the rate part `f0 + λ₁ f1` of the Lagrangian, which the
/// quasi-Newton model approximates.
fn rate_gradient(ev: &Eval, l1: f64) -> DVector<f64> {
    &ev.grad_f0 + &ev.grads_f[0] * l1
}

/// Symmetric rank-one update, skipped when the denominator is unreliable.
/// The first update also rescales the initial identity.
fn sr1_update(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>, first: &mut bool) {
    let sy = s.dot(y);
    if *first && sy > 0.0 {
        *b = DMatrix::identity(s.len(), s.len()) * (y.norm_squared() / sy);
        *first = false;
    }
    let r = y - &*b * s;
    let sr = s.dot(&r);
    if sr.abs() > 1e-8 * s.norm() * r.norm() {
        *b += &r * r.transpose() / sr;
    }
}

/// Adds the smallest tried multiple of the identity that makes the reduced
/// (Schur) matrix safely positive definite, so the step is a descent
/// direction for the barrier merit.
fn regularize(h: &mut DMatrix<f64>, ev: &Eval, lambda: &DVector<f64>) {
    let n = h.nrows();
    let mut reduced = h.clone();
    for (g, (l, f)) in ev.grads_f.iter().zip(lambda.iter().zip(&ev.f)) {
        reduced += g * g.transpose() * (l / -f);
    }
    let scale = (0..n).map(|i| reduced[(i, i)].abs()).fold(1e-12, f64::max);
    let margin = INERTIA_MARGIN * scale;
    let identity = DMatrix::<f64>::identity(n, n);
    let mut delta = 0.0;
    for _ in 0..40 {
        if (&reduced + &identity * (delta - margin)).cholesky().is_some() {
            break;
        }
        delta = if delta == 0.0 { margin.max(1e-12) * 10.0 } else { delta * 10.0 };
    }
    if delta > 0.0 {
        *h += identity * delta;
    }
}

pub(crate) fn local_solve(problem: &Problem, v0: Vec<f64>, cfg: &SolverConfig) -> Result<LocalOutcome> {
    let n = problem.dim();
    let mut beta = PAPR_SHARPNESS;
    let mut mu = MU_INIT;
    let mut v = DVector::from_vec(v0);
    let mut ev = problem.evaluate(v.as_slice(), beta, cfg)?;
    if !ev.strictly_feasible() {
        return Err(Error::InvalidParameter("start point is not strictly feasible".into()));
    }
    let mut lambda = DVector::from_iterator(ev.f.len(), ev.f.iter().map(|f| 1.0 / (mu * -f)));
    let mut model = DMatrix::identity(n, n);
    let mut first_update = true;
    let mut iterations = 0;
    let mut message = None;
    let mut converged = false;
    let mut kkt = f64::INFINITY;
    let mut failures = 0;

    for outer in 0..cfg.max_outer {
        model = (&model + model.transpose()) * 0.5;
        let tol = cfg.kkt_tol.max(1.0 / mu);
        let mut centered = false;
        let mut search_failed = false;
        let mut history: Vec<f64> = Vec::new();
        for _ in 0..cfg.max_inner {
            history.push(merit(&ev, mu));
            if history.len() > STALL_WINDOW
                && history[history.len() - 1 - STALL_WINDOW] - history[history.len() - 1] < STALL_PROGRESS
            {
                break;
            }
            let (dual, cent, res) = residual_norms(&ev, &lambda, mu);
            if dual <= tol && cent <= 0.5 * tol {
                centered = true;
                break;
            }
            iterations += 1;
            let mut hess = &model + problem.constraint_hessian(v.as_slice(), lambda.as_slice(), beta);
            regularize(&mut hess, &ev, &lambda);
            let state = IpState {
                v: v.clone(),
                lambda: lambda.clone(),
                mu,
            };
            let step = ip_newton_step(&state, &derivs(&ev, hess), cfg.pinv_threshold)?;

            let mut s = 1.0f64;
            for (l, dl) in lambda.iter().zip(step.dlambda.iter()) {
                if *dl < 0.0 {
                    s = s.min(-BOUNDARY_FRACTION * l / dl);
                }
            }
            let phi = merit(&ev, mu);
            let mut barrier_grad = ev.grad_f0.clone();
            for (g, f) in ev.grads_f.iter().zip(&ev.f) {
                barrier_grad += g / (mu * -f);
            }
            let slope = barrier_grad.dot(&step.dv);

            let mut accepted = None;
            for _ in 0..MAX_BACKTRACK {
                let v_new = &v + &step.dv * s;
                let trial = problem.evaluate(v_new.as_slice(), beta, cfg)?;
                if trial.strictly_feasible() {
                    let l_new = &lambda + &step.dlambda * s;
                    let armijo = slope < 0.0 && merit(&trial, mu) <= phi + ARMIJO * s * slope;
                    let (_, _, res_new) = residual_norms(&trial, &l_new, mu);
                    if armijo || res_new <= (1.0 - 0.01 * s) * res {
                        accepted = Some((v_new, l_new, trial));
                        break;
                    }
                }
                s *= 0.5;
                if s < MIN_STEP {
                    break;
                }
            }
            let Some((v_new, l_new, trial)) = accepted else {
                search_failed = true;
                break;
            };
            let sv = &v_new - &v;
            let y = rate_gradient(&trial, l_new[0]) - rate_gradient(&ev, l_new[0]);
            sr1_update(&mut model, &sv, &y, &mut first_update);
            v = v_new;
            lambda = l_new;
            ev = trial;
        }
        let (dual, _, _) = residual_norms(&ev, &lambda, mu);
        let gap: f64 = ev.f.iter().zip(lambda.iter()).map(|(f, l)| -f * l).sum();
        kkt = dual.max(gap);
        failures = if search_failed { failures + 1 } else { 0 };
        if failures >= MAX_SEARCH_FAILURES {
            message = Some(format!("line search failed at outer iteration {outer}"));
            break;
        }
        if gap <= cfg.kkt_tol {
            converged = centered;
            if !centered {
                message = Some(format!("dual residual {dual:.2e} above tolerance"));
            }
            break;
        }
        mu *= cfg.mu_factor;
        if problem.spec.papr_limit.is_some() && beta < PAPR_SHARPNESS_MAX {
            beta = (beta * 2.0).min(PAPR_SHARPNESS_MAX);
            ev = problem.evaluate(v.as_slice(), beta, cfg)?;
        }
    }
    if !converged && message.is_none() {
        message = Some("iteration limit reached".into());
    }
    Ok(LocalOutcome {
        v: v.as_slice().to_vec(),
        converged,
        kkt_residual: kkt,
        iterations,
        message,
    })
}
