//! Constellation design: maximize the LP rate subject to an HP rate
//! threshold, an average-power budget and an optional PAPR cap.
//!
//! Each local solve is a primal-dual interior-point iteration started from
//! a strictly feasible random point; [`solve`] keeps the best of several
//! such starts. [`optimize_hqam`] runs the same machinery over the two
//! H-QAM scale factors.

mod ipm;
mod layout;
mod problem;
mod start;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ipm::{ip_newton_step, Derivatives, IpState, NewtonStep};
pub use layout::{complexify, realify, Symmetry};
pub use start::{feasible_start, StartKind, MAX_START_ATTEMPTS, START_POWER_FRACTION};

use crate::capacity::QuadratureSpec;
use crate::constellation::{hqam, Constellation, HqamParams};
use crate::error::{Error, Result};
use layout::LinearMap;
use problem::{Problem, PAPR_SHARPNESS};

/// One design problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub m_h: u32,
    pub m_l: u32,
    /// Design SNR of the HP receiver, relative to `power`.
    pub snr_h_db: f64,
    /// Design SNR of the LP receiver, relative to `power`.
    pub snr_l_db: f64,
    /// HP rate threshold `r*`.
    pub r_star: f64,
    pub power: f64,
    /// PAPR cap `ξ`; `None` leaves the peak free.
    pub papr_limit: Option<f64>,
    #[serde(default)]
    pub symmetry: Symmetry,
}

impl ProblemSpec {
    /// Thresholds at or above `m_h` are accepted here and reported as
    /// infeasible by the solver.
    pub fn validate(&self) -> Result<()> {
        if self.m_h == 0 {
            return Err(Error::InvalidParameter("m_h must be at least 1".into()));
        }
        if self.m_l == 0 {
            return Err(Error::NoLpBits);
        }
        if self.m_h + self.m_l > crate::constellation::MAX_BITS {
            return Err(Error::InvalidParameter(format!(
                "m_h + m_l must not exceed {}",
                crate::constellation::MAX_BITS
            )));
        }
        if !self.snr_h_db.is_finite() || !self.snr_l_db.is_finite() {
            return Err(Error::InvalidParameter("SNRs must be finite".into()));
        }
        if self.snr_l_db < self.snr_h_db {
            return Err(Error::InvalidParameter(format!(
                "snr_l_db ({}) must not be below snr_h_db ({})",
                self.snr_l_db, self.snr_h_db
            )));
        }
        if !(self.r_star >= 0.0) || !self.r_star.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "r_star must be a non-negative number, got {}",
                self.r_star
            )));
        }
        if !(self.power > 0.0) || !self.power.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "power must be positive, got {}",
                self.power
            )));
        }
        if let Some(xi) = self.papr_limit {
            if !(xi >= 1.0) || !xi.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "papr_limit must be at least 1, got {xi}"
                )));
            }
        }
        if self.symmetry == Symmetry::Central && self.m_h != 2 {
            return Err(Error::InvalidParameter("central symmetry needs m_h = 2".into()));
        }
        Ok(())
    }
}

/// How rate gradients are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Exact derivative of the quadrature rule.
    #[default]
    Analytic,
    /// Central differences with step `fd_step`.
    CentralDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub starts: usize,
    pub seed: u64,
    /// Multiplier applied to `μ` after each outer iteration.
    pub mu_factor: f64,
    pub kkt_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub fd_step: f64,
    /// Relative singular-value cutoff that switches the Newton solve to a
    /// pseudo-inverse.
    pub pinv_threshold: f64,
    pub gradient: GradientMode,
    /// Use the optimized H-QAM as the first start when the orders allow it.
    pub hqam_warm_start: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            starts: 20,
            seed: 0,
            mu_factor: 10.0,
            kkt_tol: 1e-6,
            max_outer: 50,
            max_inner: 100,
            fd_step: 1e-5,
            pinv_threshold: 1e-10,
            gradient: GradientMode::Analytic,
            hqam_warm_start: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if self.starts == 0 {
            return bad("starts must be at least 1");
        }
        if !(self.mu_factor > 1.0) {
            return bad("mu_factor must exceed 1");
        }
        if !(self.kkt_tol > 0.0 && self.kkt_tol < 1.0) {
            return bad("kkt_tol must lie in (0, 1)");
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return bad("iteration limits must be positive");
        }
        if !(self.fd_step > 0.0) || !(self.pinv_threshold > 0.0) {
            return bad("fd_step and pinv_threshold must be positive");
        }
        Ok(())
    }
}

/// Summary of one local solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartLog {
    pub start: usize,
    pub kind: StartKind,
    pub converged: bool,
    /// Final `(r_H, r_L)`, absent when no start point was found or the
    /// iteration failed.
    pub r_h: Option<f64>,
    pub r_l: Option<f64>,
    pub iterations: usize,
    pub kkt_residual: Option<f64>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub constellation: Constellation,
    pub r_h_achieved: f64,
    pub r_l_achieved: f64,
    pub power_used: f64,
    pub papr_used: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub best_start: usize,
    pub start_logs: Vec<StartLog>,
}

/// `f0 = -r_L`, `f = (r* - r_H, power - p[, peak - ξ·power])` with the exact
/// peak.
pub fn eval_problem(v: &[f64], spec: &ProblemSpec, q: &QuadratureSpec) -> Result<(f64, Vec<f64>)> {
    let problem = Problem::new(spec, LinearMap::free(spec.m_h, spec.m_l, spec.symmetry)?, q)?;
    if v.len() != problem.dim() {
        return Err(Error::SizeMismatch {
            expected: problem.dim(),
            found: v.len(),
        });
    }
    let (r_h, r_l, _) = problem.rates(v, false);
    let power = problem.power(v);
    let mut f = vec![spec.r_star - r_h, power - spec.power];
    if let Some(xi) = spec.papr_limit {
        f.push(problem.peak(v) - xi * power);
    }
    Ok((-r_l, f))
}

/// First derivatives at `v` and the initial Lagrangian Hessian model: unit
/// curvature for the rate terms plus the exact curvature of the power and
/// (smoothed) PAPR constraints weighted by `lambda`. The solver refines the
/// rate part with symmetric-rank-one updates as it iterates.
pub fn derivatives(
    v: &[f64],
    lambda: &[f64],
    spec: &ProblemSpec,
    q: &QuadratureSpec,
    cfg: &SolverConfig,
) -> Result<Derivatives> {
    cfg.validate()?;
    let problem = Problem::new(spec, LinearMap::free(spec.m_h, spec.m_l, spec.symmetry)?, q)?;
    let ev = problem.evaluate(v, PAPR_SHARPNESS, cfg)?;
    if lambda.len() != ev.f.len() {
        return Err(Error::SizeMismatch {
            expected: ev.f.len(),
            found: lambda.len(),
        });
    }
    let n = problem.dim();
    let hess = nalgebra::DMatrix::identity(n, n) + problem.constraint_hessian(v, lambda, PAPR_SHARPNESS);
    Ok(Derivatives {
        f0: ev.f0,
        f: ev.f,
        grad_f0: ev.grad_f0,
        grads_f: ev.grads_f,
        hess_lagrangian: hess,
    })
}

struct Candidate {
    v: Vec<f64>,
    r_h: f64,
    r_l: f64,
    power: f64,
    papr: f64,
    kkt: f64,
    converged: bool,
}

fn papr_of(problem: &Problem, v: &[f64], power: f64) -> f64 {
    problem.peak(v) / power
}

/// Rescales to the full budget when that does not cost HP rate.
fn finish(problem: &Problem, v: Vec<f64>, kkt: f64, converged: bool) -> Candidate {
    let power = problem.power(&v);
    let (r_h, r_l, _) = problem.rates(&v, false);
    let rho = (problem.spec.power / power).sqrt();
    let scaled: Vec<f64> = v.iter().map(|x| x * rho).collect();
    let (sr_h, sr_l, _) = problem.rates(&scaled, false);
    let (v, r_h, r_l) = if sr_h >= r_h && sr_l >= r_l - 1e-12 {
        (scaled, sr_h, sr_l)
    } else {
        (v, r_h, r_l)
    };
    let power = problem.power(&v);
    let papr = papr_of(problem, &v, power);
    Candidate {
        v,
        r_h,
        r_l,
        power,
        papr,
        kkt,
        converged,
    }
}

fn acceptable(spec: &ProblemSpec, cfg: &SolverConfig, c: &Candidate) -> bool {
    c.r_h >= spec.r_star - 10.0 * cfg.kkt_tol
        && c.power <= spec.power * (1.0 + 1e-8)
        && spec.papr_limit.is_none_or(|xi| c.papr <= xi * (1.0 + 1e-8))
        && c.r_l.is_finite()
}

/// Greatest `r_L`; near-ties go to the smaller PAPR, then the lower index.
fn better(a: &Candidate, b: &Candidate) -> bool {
    if (a.r_l - b.r_l).abs() >= 1e-9 {
        return a.r_l > b.r_l;
    }
    a.papr < b.papr
}

fn run_starts(
    problem: &Problem,
    cfg: &SolverConfig,
    warm: Option<&[f64]>,
) -> Result<(usize, Candidate, Vec<StartLog>)> {
    cfg.validate()?;
    if problem.spec.r_star >= problem.spec.m_h as f64 {
        return Err(Error::Infeasible {
            r_star: problem.spec.r_star,
            best_r_h: best_hp_rate(problem)?,
        });
    }
    let outcomes: Vec<(StartLog, Option<Candidate>)> = (0..cfg.starts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let kind = match (i, warm) {
                (0, Some(_)) => StartKind::HqamWarm,
                _ if i % 2 == 0 => StartKind::HqamSeeded,
                _ => StartKind::GaussianCloud,
            };
            let mut log = StartLog {
                start: i,
                kind,
                converged: false,
                r_h: None,
                r_l: None,
                iterations: 0,
                kkt_residual: None,
                message: None,
            };
            let v0 = match (kind, warm) {
                (StartKind::HqamWarm, Some(w)) => match start::pull_to_feasible(problem, w) {
                    Ok(Ok(v)) => Ok(v),
                    Ok(Err(best_r_h)) => Err(Error::NoFeasibleStart { best_r_h }),
                    Err(e) => Err(e),
                },
                _ => start::feasible_start_for(problem, kind, &mut rng),
            };
            let outcome = v0.and_then(|v0| ipm::local_solve(problem, v0, cfg));
            match outcome {
                Ok(out) => {
                    let cand = finish(problem, out.v, out.kkt_residual, out.converged);
                    log.converged = out.converged;
                    log.r_h = Some(cand.r_h);
                    log.r_l = Some(cand.r_l);
                    log.iterations = out.iterations;
                    log.kkt_residual = Some(out.kkt_residual);
                    log.message = out.message;
                    (log, Some(cand))
                }
                Err(e) => {
                    log.message = Some(e.to_string());
                    (log, None)
                }
            }
        })
        .collect();

    let mut best: Option<(usize, Candidate)> = None;
    let mut logs = Vec::with_capacity(outcomes.len());
    for (i, (mut log, cand)) in outcomes.into_iter().enumerate() {
        if let Some(c) = cand {
            if acceptable(&problem.spec, cfg, &c) {
                if best.as_ref().is_none_or(|(_, b)| better(&c, b)) {
                    best = Some((i, c));
                }
            } else if log.message.is_none() {
                log.message = Some("final point violates a constraint".into());
            }
        }
        logs.push(log);
    }
    match best {
        Some((i, c)) => Ok((i, c, logs)),
        None => Err(Error::Infeasible {
            r_star: problem.spec.r_star,
            best_r_h: best_hp_rate(problem)?,
        }),
    }
}

/// HP rate of the collapsed layout at full power, the reference reported
/// with infeasibility.
fn best_hp_rate(problem: &Problem) -> Result<f64> {
    let mut v = start::layered_vector(&problem.map, problem.spec.symmetry, 0.0)?;
    let rho = (problem.spec.power / problem.power(&v)).sqrt();
    v.iter_mut().for_each(|x| *x *= rho);
    Ok(problem.rate_hp(&v))
}

fn into_result(problem: &Problem, best: usize, c: Candidate, logs: Vec<StartLog>) -> Result<SolveResult> {
    Ok(SolveResult {
        constellation: problem.map.constellation(&c.v)?,
        r_h_achieved: c.r_h,
        r_l_achieved: c.r_l,
        power_used: c.power,
        papr_used: c.papr,
        kkt_residual: c.kkt,
        converged: c.converged,
        best_start: best,
        start_logs: logs,
    })
}

fn hqam_orders(spec: &ProblemSpec) -> bool {
    spec.m_h == 2 && (2..=3).contains(&spec.m_l)
}

/// HP rate of the full-power collapsed layout (every cluster shrunk to its
/// center), an upper reference for feasible thresholds.
pub fn max_hp_rate(spec: &ProblemSpec, q: &QuadratureSpec) -> Result<f64> {
    let problem = Problem::new(spec, LinearMap::free(spec.m_h, spec.m_l, spec.symmetry)?, q)?;
    best_hp_rate(&problem)
}

/// Multi-start design of a free constellation. When
/// `cfg.hqam_warm_start` is set and the orders allow it, the optimized
/// H-QAM is computed first and used as start 0.
pub fn solve(spec: &ProblemSpec, cfg: &SolverConfig, q: &QuadratureSpec) -> Result<SolveResult> {
    spec.validate()?;
    let warm = if cfg.hqam_warm_start && hqam_orders(spec) && spec.r_star < spec.m_h as f64 {
        match optimize_hqam(spec, cfg, q) {
            Ok((_, r)) => Some(r.constellation),
            Err(Error::Infeasible { .. }) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    solve_from(spec, cfg, q, warm.as_ref())
}

/// As [`solve`], with an explicit constellation for start 0 (which is
/// pulled into the strict interior first).
pub fn solve_from(
    spec: &ProblemSpec,
    cfg: &SolverConfig,
    q: &QuadratureSpec,
    warm: Option<&Constellation>,
) -> Result<SolveResult> {
    let problem = Problem::new(spec, LinearMap::free(spec.m_h, spec.m_l, spec.symmetry)?, q)?;
    let warm = match warm {
        Some(c) => {
            if c.m_h() != spec.m_h || c.m_l() != spec.m_l {
                return Err(Error::InvalidParameter("warm start has the wrong orders".into()));
            }
            Some(realify(c, spec.symmetry)?)
        }
        None => None,
    };
    let (best, cand, logs) = run_starts(&problem, cfg, warm.as_deref())?;
    into_result(&problem, best, cand, logs)
}

/// Optimizes the H-QAM scale pair `(d1, d2)` under the constraints of
/// `spec` (whose `symmetry` is ignored).
pub fn optimize_hqam(
    spec: &ProblemSpec,
    cfg: &SolverConfig,
    q: &QuadratureSpec,
) -> Result<(HqamParams, SolveResult)> {
    if spec.m_h != 2 {
        return Err(Error::InvalidParameter("H-QAM needs m_h = 2".into()));
    }
    let map = LinearMap::hqam(spec.m_l)?;
    let spec = ProblemSpec {
        symmetry: Symmetry::None,
        ..spec.clone()
    };
    let problem = Problem::new(&spec, map, q)?;
    let (best, cand, logs) = run_starts(&problem, cfg, None)?;
    // (d1, d2) and (|d1|, |d2|) describe the same point set up to a
    // relabeling that leaves every bit information unchanged.
    let params = HqamParams::new(cand.v[0].abs(), cand.v[1].abs(), spec.m_l)?;
    let mut result = into_result(&problem, best, cand, logs)?;
    result.constellation = hqam(&params)?;
    Ok((params, result))
}
