//! Achievable `(r_H, r_L)` frontiers: optimized HM, optimized H-QAM and the
//! orthogonal time-division baseline with Gaussian inputs.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{ChannelSpec, QuadratureSpec};
use crate::error::{Error, Result};
use crate::optimizer::{self, ProblemSpec, SolveResult, SolverConfig};

/// Points of the default threshold grid.
pub const DEFAULT_GRID_POINTS: usize = 25;
/// The default grid stops at this fraction of the maximal HP rate.
pub const DEFAULT_GRID_REACH: f64 = 0.98;
/// Allowed increase of `r_L` along a frontier (solver noise).
pub const MONOTONE_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    HmOptimized,
    HqamOptimized,
    TdGaussian,
    Hull,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::HmOptimized => "hm_optimized",
            Scheme::HqamOptimized => "hqam_optimized",
            Scheme::TdGaussian => "td_gaussian",
            Scheme::Hull => "hull",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub r_h: f64,
    pub r_l: f64,
    /// Threshold that produced the point, for solver frontiers.
    pub r_star: Option<f64>,
    pub power: f64,
    /// PAPR of the designed constellation; absent for Gaussian signalling.
    pub papr: Option<f64>,
}

impl FrontierPoint {
    pub fn new(r_h: f64, r_l: f64, power: f64) -> Self {
        Self {
            r_h,
            r_l,
            r_star: None,
            power,
            papr: None,
        }
    }
}

/// Result of one threshold of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub r_star: f64,
    pub point: Option<FrontierPoint>,
    /// Why the threshold produced no point.
    pub error: Option<String>,
    /// Best HP rate reported for an infeasible threshold.
    pub best_r_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierMeta {
    pub snr_h_db: f64,
    pub snr_l_db: f64,
    pub power: f64,
    pub m_h: Option<u32>,
    pub m_l: Option<u32>,
    /// Thresholds for solver sweeps, or the `r_H` grid of the TD baseline.
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFrontier {
    pub scheme: Scheme,
    /// Pareto points in strictly increasing `r_h`.
    pub points: Vec<FrontierPoint>,
    pub meta: FrontierMeta,
    /// Per-threshold outcomes in grid order (empty for TD and hulls).
    #[serde(default)]
    pub sweep: Vec<SweepEntry>,
}

impl RegionFrontier {
    /// Checks ordering, non-negativity and near-monotone `r_L`.
    pub fn validate(&self) -> Result<()> {
        for (k, p) in self.points.iter().enumerate() {
            if !(p.r_h >= 0.0 && p.r_l >= 0.0) || !p.r_h.is_finite() || !p.r_l.is_finite() {
                return Err(Error::InvalidParameter(format!("frontier point {k} has a negative or non-finite rate")));
            }
        }
        for (k, w) in self.points.windows(2).enumerate() {
            if !(w[1].r_h > w[0].r_h) {
                return Err(Error::InvalidParameter(format!("r_h not increasing at point {}", k + 1)));
            }
            if w[1].r_l > w[0].r_l + MONOTONE_TOL {
                return Err(Error::InvalidParameter(format!("r_l increases at point {}", k + 1)));
            }
        }
        Ok(())
    }

    /// `r_L` of the piecewise-linear frontier at `r_h`: flat left of the
    /// first point, `None` right of the last.
    pub fn interpolate(&self, r_h: f64) -> Option<f64> {
        let first = self.points.first()?;
        if r_h <= first.r_h {
            return Some(first.r_l);
        }
        for w in self.points.windows(2) {
            if r_h <= w[1].r_h {
                let t = (r_h - w[0].r_h) / (w[1].r_h - w[0].r_h);
                return Some(w[0].r_l + t * (w[1].r_l - w[0].r_l));
            }
        }
        None
    }

    /// Rows in the `scheme,r_star,r_h,r_l,power,papr` format, without header.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let opt = |x: Option<f64>| x.map(sig9).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                self.scheme.as_str(),
                opt(p.r_star),
                sig9(p.r_h),
                sig9(p.r_l),
                sig9(p.power),
                opt(p.papr)
            );
        }
        out
    }

    /// Header plus [`RegionFrontier::csv_rows`].
    pub fn to_csv(&self) -> String {
        format!("{CSV_HEADER}\n{}", self.csv_rows())
    }
}

pub const CSV_HEADER: &str = "scheme,r_star,r_h,r_l,power,papr";

/// Nine significant digits, locale independent.
pub fn sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.8e}")
    }
}

/// Sorts by `r_h` and keeps the Pareto-maximal points.
fn pareto(mut pts: Vec<FrontierPoint>) -> Vec<FrontierPoint> {
    pts.sort_by(|a, b| b.r_h.total_cmp(&a.r_h).then(b.r_l.total_cmp(&a.r_l)));
    let mut kept: Vec<FrontierPoint> = Vec::with_capacity(pts.len());
    let mut best_l = f64::NEG_INFINITY;
    for p in pts {
        if p.r_l > best_l {
            if kept.last().is_some_and(|q| q.r_h == p.r_h) {
                continue;
            }
            best_l = p.r_l;
            kept.push(p);
        }
    }
    kept.reverse();
    kept
}

/// `count` thresholds evenly spaced over `[0, 0.98 · r_H^max]`, with
/// `r_H^max` the HP rate of the full-power collapsed layout.
pub fn default_thresholds(base: &ProblemSpec, q: &QuadratureSpec, count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::InvalidParameter("a threshold grid needs at least 2 points".into()));
    }
    let top = DEFAULT_GRID_REACH * optimizer::max_hp_rate(base, q)?;
    Ok((0..count).map(|k| top * k as f64 / (count - 1) as f64).collect())
}

fn check_thresholds(base: &ProblemSpec, thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::EmptyInput);
    }
    for &t in thresholds {
        if !(t >= 0.0 && t < base.m_h as f64) {
            return Err(Error::InvalidParameter(format!(
                "threshold {t} outside [0, {})",
                base.m_h
            )));
        }
    }
    Ok(())
}

fn sweep<F>(base: &ProblemSpec, thresholds: &[f64], scheme: Scheme, solve: F) -> Result<RegionFrontier>
where
    F: Fn(&ProblemSpec) -> Result<SolveResult> + Sync,
{
    base.validate()?;
    check_thresholds(base, thresholds)?;
    let entries: Vec<SweepEntry> = thresholds
        .par_iter()
        .map(|&r_star| {
            let spec = ProblemSpec {
                r_star,
                ..base.clone()
            };
            match solve(&spec) {
                Ok(r) => SweepEntry {
                    r_star,
                    point: Some(FrontierPoint {
                        r_h: r.r_h_achieved,
                        r_l: r.r_l_achieved,
                        r_star: Some(r_star),
                        power: r.power_used,
                        papr: Some(r.papr_used),
                    }),
                    error: None,
                    best_r_h: None,
                },
                Err(e) => SweepEntry {
                    r_star,
                    point: None,
                    best_r_h: match e {
                        Error::Infeasible { best_r_h, .. } | Error::NoFeasibleStart { best_r_h } => Some(best_r_h),
                        _ => None,
                    },
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let points = pareto(entries.iter().filter_map(|e| e.point).collect());
    Ok(RegionFrontier {
        scheme,
        points,
        meta: FrontierMeta {
            snr_h_db: base.snr_h_db,
            snr_l_db: base.snr_l_db,
            power: base.power,
            m_h: Some(base.m_h),
            m_l: Some(base.m_l),
            grid: thresholds.to_vec(),
        },
        sweep: entries,
    })
}

/// One free-constellation design per threshold. Failed thresholds are
/// recorded in `sweep` and never abort the sweep.
pub fn hm_frontier(
    base: &ProblemSpec,
    thresholds: &[f64],
    cfg: &SolverConfig,
    q: &QuadratureSpec,
) -> Result<RegionFrontier> {
    sweep(base, thresholds, Scheme::HmOptimized, |spec| optimizer::solve(spec, cfg, q))
}

/// As [`hm_frontier`] over H-QAM scale pairs.
pub fn hqam_frontier(
    base: &ProblemSpec,
    thresholds: &[f64],
    cfg: &SolverConfig,
    q: &QuadratureSpec,
) -> Result<RegionFrontier> {
    sweep(base, thresholds, Scheme::HqamOptimized, |spec| {
        optimizer::optimize_hqam(spec, cfg, q).map(|(_, r)| r)
    })
}

/// Shannon rate of a Gaussian input at signal power `p` over noise `n`.
fn shannon(p: f64, n: f64) -> f64 {
    (p / n).ln_1p() / std::f64::consts::LN_2
}

/// Time-division Pareto frontier with per-slot power control under the
/// average budget `α·p1 + (1-α)·p2 = power`, on `grid_size` evenly spaced
/// HP rates.
///
/// For a fixed `r_H` the LP rate is concave in the time share `α`, so each
/// point is an exact one-dimensional maximization.
pub fn td_frontier(snr_h_db: f64, snr_l_db: f64, power: f64, grid_size: usize) -> Result<RegionFrontier> {
    if grid_size < 2 {
        return Err(Error::InvalidParameter("grid_size must be at least 2".into()));
    }
    let n_h = ChannelSpec::new(snr_h_db, power)?.noise_power();
    let n_l = ChannelSpec::new(snr_l_db, power)?.noise_power();
    let c_h = shannon(power, n_h);
    let c_l = shannon(power, n_l);
    // Energy needed by the HP slot to carry `r` with time share `a`.
    let hp_energy = |r: f64, a: f64| a * n_h * ((r / a) * std::f64::consts::LN_2).exp_m1();
    let lp_rate = |r: f64, a: f64| {
        let rest = power - hp_energy(r, a);
        if a >= 1.0 {
            return 0.0;
        }
        (1.0 - a) * shannon(rest.max(0.0) / (1.0 - a), n_l)
    };

    let mut grid = Vec::with_capacity(grid_size);
    let mut points = Vec::with_capacity(grid_size);
    for k in 0..grid_size {
        let r = c_h * k as f64 / (grid_size - 1) as f64;
        grid.push(r);
        let r_l = if k == 0 {
            c_l
        } else if k == grid_size - 1 {
            0.0
        } else {
            // Smallest share that can carry `r` within the budget; the HP
            // energy decreases in the share.
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid > 0.0 && hp_energy(r, mid) <= power {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            golden_max(|a| lp_rate(r, a), hi, 1.0)
        };
        points.push(FrontierPoint::new(r, r_l, power));
    }
    Ok(RegionFrontier {
        scheme: Scheme::TdGaussian,
        points,
        meta: FrontierMeta {
            snr_h_db,
            snr_l_db,
            power,
            m_h: None,
            m_l: None,
            grid,
        },
        sweep: Vec::new(),
    })
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > 1e-13 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    f(a).max(f(b)).max(f1).max(f2)
}

/// Upper concave envelope of the union of all frontier points together with
/// the axis endpoints `(0, max r_l)` and `(max r_h, 0)`.
pub fn convex_hull(frontiers: &[RegionFrontier]) -> Result<RegionFrontier> {
    let all: Vec<FrontierPoint> = frontiers.iter().flat_map(|f| f.points.iter().copied()).collect();
    if all.is_empty() {
        return Err(Error::EmptyInput);
    }
    let max_h = all.iter().map(|p| p.r_h).fold(0.0, f64::max);
    let max_l = all.iter().map(|p| p.r_l).fold(0.0, f64::max);
    let power = frontiers[0].meta.power;
    let mut pts: Vec<FrontierPoint> = all.into_iter().map(|p| FrontierPoint::new(p.r_h, p.r_l, p.power)).collect();
    pts.push(FrontierPoint::new(0.0, max_l, power));
    pts.push(FrontierPoint::new(max_h, 0.0, power));
    pts.sort_by(|a, b| a.r_h.total_cmp(&b.r_h).then(b.r_l.total_cmp(&a.r_l)));
    pts.dedup_by(|b, a| a.r_h == b.r_h);

    let mut hull: Vec<FrontierPoint> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.r_h - a.r_h) * (p.r_l - a.r_l) - (b.r_l - a.r_l) * (p.r_h - a.r_h);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let first = &frontiers[0].meta;
    Ok(RegionFrontier {
        scheme: Scheme::Hull,
        points: hull,
        meta: FrontierMeta {
            snr_h_db: first.snr_h_db,
            snr_l_db: first.snr_l_db,
            power,
            m_h: first.m_h,
            m_l: first.m_l,
            grid: Vec::new(),
        },
        sweep: Vec::new(),
    })
}

/// Whether `point` lies above `frontier` by more than `margin` in `r_L`.
/// Left of the frontier the first point's `r_L` applies; right of its last
/// point nothing is achievable, so any `r_L > margin` dominates.
pub fn dominates(point: (f64, f64), frontier: &RegionFrontier, margin: f64) -> bool {
    let (r_h, r_l) = point;
    match frontier.interpolate(r_h) {
        Some(level) => r_l > level + margin,
        None => !frontier.points.is_empty() && r_l > margin,
    }
}
