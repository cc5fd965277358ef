//! Objective and constraint functions of the design problem in the real
//! variable `v`, with first derivatives and the closed-form curvature of the
//! power and PAPR constraints.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::layout::LinearMap;
use super::{GradientMode, ProblemSpec, SolverConfig};
use crate::capacity::{lp_bits_with_grad, rate_hp_with_grad, ChannelSpec, QuadratureSpec};
use crate::error::{Error, Result};
use crate::quadrature::ProductRule;

/// Initial log-sum-exp sharpness of the smoothed peak, applied to `|z|²/p`.
pub(crate) const PAPR_SHARPNESS: f64 = 50.0;
/// Upper bound for the annealed sharpness.
pub(crate) const PAPR_SHARPNESS_MAX: f64 = 1e7;

#[derive(Debug, Clone)]
pub(crate) struct Eval {
    pub f0: f64,
    pub f: Vec<f64>,
    pub grad_f0: DVector<f64>,
    pub grads_f: Vec<DVector<f64>>,
}

impl Eval {
    pub fn strictly_feasible(&self) -> bool {
        self.f.iter().all(|&fi| fi < 0.0) && self.f0.is_finite()
    }
}

#[derive(Debug)]
pub(crate) struct Problem {
    pub spec: ProblemSpec,
    pub map: LinearMap,
    rule: Arc<ProductRule>,
    sigma_h: f64,
    sigma_l: f64,
    power_mat: DMatrix<f64>,
}

impl Problem {
    pub fn new(spec: &ProblemSpec, map: LinearMap, q: &QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        q.validate()?;
        let sigma_h = ChannelSpec::new(spec.snr_h_db, spec.power)?.sigma();
        let sigma_l = ChannelSpec::new(spec.snr_l_db, spec.power)?.sigma();
        let power_mat = map.power_matrix();
        Ok(Self {
            spec: spec.clone(),
            map,
            rule: ProductRule::shared(q.nodes_per_dim),
            sigma_h,
            sigma_l,
            power_mat,
        })
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn power(&self, v: &[f64]) -> f64 {
        let v = DVector::from_column_slice(v);
        v.dot(&(&self.power_mat * &v))
    }

    pub fn rate_hp(&self, v: &[f64]) -> f64 {
        let points = self.map.points(v);
        rate_hp_with_grad(&points, self.map.m_h, self.map.m_l, self.sigma_h, &self.rule, false).0
    }

    /// Strict feasibility of `v` (HP rate, power and smoothed PAPR), with
    /// the HP rate for diagnostics.
    pub fn strictly_feasible(&self, v: &[f64], beta: f64) -> (bool, f64) {
        let power = self.power(v);
        if !(power < self.spec.power) {
            return (false, f64::NEG_INFINITY);
        }
        if let Some(xi) = self.spec.papr_limit {
            if !(self.smooth_peak(v, beta).0 < xi * power) {
                return (false, f64::NEG_INFINITY);
            }
        }
        let r_h = self.rate_hp(v);
        (r_h > self.spec.r_star, r_h)
    }

    /// Exact peak `max_k |z_k|²`.
    pub fn peak(&self, v: &[f64]) -> f64 {
        self.map.points(v).iter().map(|z| z.norm_sqr()).fold(0.0, f64::max)
    }

    /// `(r_H, r_L)` and, on request, their gradients in `v`.
    #[allow(clippy::type_complexity)]
    pub fn rates(&self, v: &[f64], with_grad: bool) -> (f64, f64, Option<(DVector<f64>, DVector<f64>)>) {
        let points = self.map.points(v);
        let (m_h, m_l) = (self.map.m_h, self.map.m_l);
        let (r_h, gh) = rate_hp_with_grad(&points, m_h, m_l, self.sigma_h, &self.rule, with_grad);
        let (bits, gl) = lp_bits_with_grad(&points, m_h, m_l, self.sigma_l, &self.rule, with_grad);
        let r_l = bits.iter().sum();
        let grads = match (gh, gl) {
            (Some(gh), Some(gl)) => Some((self.map.pullback(&gh), self.map.pullback(&gl))),
            _ => None,
        };
        (r_h, r_l, grads)
    }

    fn rates_fd(&self, v: &[f64], step: f64) -> (DVector<f64>, DVector<f64>) {
        let n = v.len();
        let mut gh = DVector::zeros(n);
        let mut gl = DVector::zeros(n);
        let mut w = v.to_vec();
        for j in 0..n {
            w[j] = v[j] + step;
            let (hp, lp, _) = self.rates(&w, false);
            w[j] = v[j] - step;
            let (hm, lm, _) = self.rates(&w, false);
            w[j] = v[j];
            gh[j] = (hp - hm) / (2.0 * step);
            gl[j] = (lp - lm) / (2.0 * step);
        }
        (gh, gl)
    }

    /// Smoothed peak `max_k |z_k|²` and its gradient.
    fn smooth_peak(&self, v: &[f64], beta: f64) -> (f64, DVector<f64>, Vec<f64>) {
        let points = self.map.points(v);
        let b = beta / self.spec.power;
        let energy: Vec<f64> = points.iter().map(|z| z.norm_sqr()).collect();
        let top = energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = energy.iter().map(|&a| (b * (a - top)).exp()).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let value = top + total.ln() / b;
        let mut grad = DVector::zeros(self.dim());
        for (k, (&z, &pi)) in points.iter().zip(&weights).enumerate() {
            for (j, g) in self.map.point_energy_grad(k, z) {
                grad[j] += pi * g;
            }
        }
        (value, grad, weights)
    }

    /// Function values and first derivatives at `v` for the given PAPR
    /// sharpness.
    pub fn evaluate(&self, v: &[f64], beta: f64, cfg: &SolverConfig) -> Result<Eval> {
        if v.len() != self.dim() {
            return Err(Error::SizeMismatch {
                expected: self.dim(),
                found: v.len(),
            });
        }
        let (r_h, r_l, grads) = self.rates(v, cfg.gradient == GradientMode::Analytic);
        let (gh, gl) = match grads {
            Some(g) => g,
            None => self.rates_fd(v, cfg.fd_step),
        };
        let vv = DVector::from_column_slice(v);
        let pv = &self.power_mat * &vv;
        let power = vv.dot(&pv);
        let grad_power = pv * 2.0;

        let mut f = vec![self.spec.r_star - r_h, power - self.spec.power];
        let mut grads_f = vec![-gh, grad_power.clone()];
        if let Some(xi) = self.spec.papr_limit {
            let (peak, grad_peak, _) = self.smooth_peak(v, beta);
            f.push(peak - xi * power);
            grads_f.push(grad_peak - grad_power * xi);
        }
        Ok(Eval {
            f0: -r_l,
            f,
            grad_f0: -gl,
            grads_f,
        })
    }

    /// `Σ λ_i ∇²f_i` over the constraints with closed-form curvature.
    pub fn constraint_hessian(&self, v: &[f64], lambda: &[f64], beta: f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut h = &self.power_mat * (2.0 * lambda[1]);
        if let (Some(xi), Some(&l3)) = (self.spec.papr_limit, lambda.get(2)) {
            let (_, grad_peak, weights) = self.smooth_peak(v, beta);
            let points = self.map.points(v);
            let b = beta / self.spec.power;
            let mut hp = DMatrix::zeros(n, n);
            for (k, (&z, &pi)) in points.iter().zip(&weights).enumerate() {
                if pi < 1e-300 {
                    continue;
                }
                for (i, j, e) in self.map.point_energy_hessian(k) {
                    hp[(i, j)] += pi * e;
                }
                let g = self.map.point_energy_grad(k, z);
                for &(i, gi) in &g {
                    for &(j, gj) in &g {
                        hp[(i, j)] += b * pi * gi * gj;
                    }
                }
            }
            hp -= &grad_peak * grad_peak.transpose() * b;
            hp -= &self.power_mat * (2.0 * xi);
            h += hp * l3;
        }
        h
    }
}
