//! Strictly feasible starting points.
//!
//! A random base shape is pulled toward the collapsed (`d2 = 0`) layout,
//! which carries the most HP information at a given power, until the HP
//! threshold is met with slack.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::layout::{realify, LinearMap, Symmetry};
use super::problem::{Problem, PAPR_SHARPNESS};
use super::ProblemSpec;
use crate::capacity::QuadratureSpec;
use crate::constellation::{expand_central_symmetric, hqam_base, Constellation};
use crate::error::{Error, Result};

/// Attempts made by [`feasible_start`] before giving up.
pub const MAX_START_ATTEMPTS: usize = 20;
/// Starting points are normalized to this fraction of the power budget.
pub const START_POWER_FRACTION: f64 = 0.995;
/// Interpolation weights toward the collapsed layout tried per attempt.
const PULL: [f64; 14] = [
    0.0, 0.01, 0.03, 0.1, 0.25, 0.5, 0.75, 0.875, 0.94, 0.97, 0.985, 0.993, 0.997, 1.0,
];
const JITTER: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    /// Optimized H-QAM of the same problem.
    HqamWarm,
    /// Layered shape with random cluster scale plus point jitter.
    HqamSeeded,
    /// I.i.d. complex Gaussian points.
    GaussianCloud,
}

/// Cluster offsets used for layered shapes.
fn cluster_base(m_l: u32) -> Vec<Complex64> {
    match hqam_base(m_l) {
        Ok(base) => base,
        Err(_) => {
            let n = 1usize << m_l;
            (0..n)
                .map(|l| {
                    let phase = std::f64::consts::TAU * l as f64 / n as f64 + std::f64::consts::FRAC_PI_4;
                    Complex64::from_polar(std::f64::consts::SQRT_2, phase)
                })
                .collect()
        }
    }
}

/// Layered constellation with unit-scale centers and cluster scale `rho`.
pub(crate) fn layered(m_h: u32, m_l: u32, rho: f64) -> Result<Constellation> {
    let base = cluster_base(m_l);
    let center = Complex64::new(1.0, 1.0);
    if m_h == 2 {
        let cluster: Vec<Complex64> = base.iter().map(|s| center + s * rho).collect();
        return expand_central_symmetric(&cluster, m_l);
    }
    let groups = 1usize << m_h;
    let mut points = Vec::with_capacity(groups * base.len());
    for g in 0..groups {
        let phase = std::f64::consts::TAU * g as f64 / groups as f64;
        let c = center * Complex64::from_polar(1.0, phase);
        points.extend(base.iter().map(|s| c + s * rho));
    }
    Constellation::new_natural(m_h, m_l, points)
}

pub(crate) fn layered_vector(map: &LinearMap, symmetry: Symmetry, rho: f64) -> Result<Vec<f64>> {
    if map.dim() == 2 {
        return Ok(vec![1.0, rho]);
    }
    realify(&layered(map.m_h, map.m_l, rho)?, symmetry)
}

fn scale_to(problem: &Problem, v: &mut [f64], power: f64) {
    let current = problem.power(v);
    if current > 0.0 {
        let rho = (power / current).sqrt();
        v.iter_mut().for_each(|x| *x *= rho);
    }
}

fn sample_base<R: Rng + ?Sized>(problem: &Problem, kind: StartKind, rng: &mut R) -> Result<Vec<f64>> {
    let dim = problem.dim();
    if dim == 2 {
        let rho: f64 = Uniform::new(0.0, 0.8).map_err(|e| Error::InvalidParameter(e.to_string()))?.sample(rng);
        return Ok(vec![1.0, rho]);
    }
    match kind {
        StartKind::GaussianCloud => Ok((0..dim).map(|_| StandardNormal.sample(rng)).collect()),
        _ => {
            let rho = Uniform::new(0.05, 0.7).map_err(|e| Error::InvalidParameter(e.to_string()))?.sample(rng);
            let mut v = layered_vector(&problem.map, problem.spec.symmetry, rho)?;
            for x in v.iter_mut() {
                let n: f64 = StandardNormal.sample(rng);
                *x += JITTER * n;
            }
            Ok(v)
        }
    }
}

/// Power fractions tried after [`START_POWER_FRACTION`] when the threshold
/// sits so close to the maximal HP rate that the power slack itself costs
/// too much rate.
const FALLBACK_POWER_FRACTIONS: [f64; 2] = [1.0 - 1e-5, 1.0 - 1e-9];

/// Pulls `base` toward the collapsed layout until it is strictly feasible.
/// Returns the point, or the best HP rate seen.
pub(crate) fn pull_to_feasible(problem: &Problem, base: &[f64]) -> Result<std::result::Result<Vec<f64>, f64>> {
    let mut best = f64::NEG_INFINITY;
    for fraction in std::iter::once(START_POWER_FRACTION).chain(FALLBACK_POWER_FRACTIONS) {
        let target = fraction * problem.spec.power;
        let mut anchor = layered_vector(&problem.map, problem.spec.symmetry, 0.0)?;
        scale_to(problem, &mut anchor, target);
        let mut base = base.to_vec();
        scale_to(problem, &mut base, target);
        for t in PULL {
            let mut v: Vec<f64> = base.iter().zip(&anchor).map(|(b, a)| (1.0 - t) * b + t * a).collect();
            scale_to(problem, &mut v, target);
            let (ok, r_h) = problem.strictly_feasible(&v, PAPR_SHARPNESS);
            if ok {
                return Ok(Ok(v));
            }
            best = best.max(r_h);
        }
        // Only the collapsed end of the path can meet thresholds this close
        // to the maximum, and it already failed at this power.
        if best < problem.spec.r_star - 0.05 {
            break;
        }
    }
    Ok(Err(best))
}

pub(crate) fn feasible_start_for<R: Rng + ?Sized>(problem: &Problem, kind: StartKind, rng: &mut R) -> Result<Vec<f64>> {
    let mut best = f64::NEG_INFINITY;
    if problem.spec.r_star >= problem.spec.m_h as f64 {
        let mut anchor = layered_vector(&problem.map, problem.spec.symmetry, 0.0)?;
        scale_to(problem, &mut anchor, problem.spec.power);
        return Err(Error::NoFeasibleStart {
            best_r_h: problem.rate_hp(&anchor),
        });
    }
    for _ in 0..MAX_START_ATTEMPTS {
        let base = sample_base(problem, kind, rng)?;
        match pull_to_feasible(problem, &base)? {
            Ok(v) => return Ok(v),
            Err(r_h) => best = best.max(r_h),
        }
    }
    Err(Error::NoFeasibleStart { best_r_h: best })
}

/// Draws a strictly feasible real vector for `spec` (layout per
/// `spec.symmetry`).
pub fn feasible_start<R: Rng + ?Sized>(
    spec: &ProblemSpec,
    q: &QuadratureSpec,
    kind: StartKind,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let map = LinearMap::free(spec.m_h, spec.m_l, spec.symmetry)?;
    let problem = Problem::new(spec, map, q)?;
    feasible_start_for(&problem, kind, rng)
}
