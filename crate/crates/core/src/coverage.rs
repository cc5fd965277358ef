//! Path-loss plus log-normal shadowing link budget for users spread
//! uniformly over a disc around the transmitter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Intervals of the composite Simpson rule over the cell radius.
pub const RADIAL_INTERVALS: usize = 4000;
/// Bisection stops once the bracket is narrower than this (dB).
pub const SNR_TOLERANCE_DB: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageParams {
    pub ps_dbm: f64,
    pub pn_dbm: f64,
    pub radius_km: f64,
    pub shadow_sigma_db: f64,
    pub pl_a: f64,
    pub pl_b: f64,
}

impl CoverageParams {
    /// Link budget with the default urban path-loss law `130.19 + 37.6 log10(r)`.
    pub fn new(ps_dbm: f64, pn_dbm: f64, radius_km: f64, shadow_sigma_db: f64) -> Result<Self> {
        let p = Self {
            ps_dbm,
            pn_dbm,
            radius_km,
            shadow_sigma_db,
            pl_a: 130.19,
            pl_b: 37.6,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("ps_dbm", self.ps_dbm),
            ("pn_dbm", self.pn_dbm),
            ("pl_a", self.pl_a),
            ("pl_b", self.pl_b),
        ] {
            if !x.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite, got {x}")));
            }
        }
        if !(self.radius_km > 0.0) || !self.radius_km.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "radius must be positive, got {}",
                self.radius_km
            )));
        }
        if !(self.shadow_sigma_db > 0.0) || !self.shadow_sigma_db.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "shadowing sigma must be positive, got {}",
                self.shadow_sigma_db
            )));
        }
        Ok(())
    }
}

impl Default for CoverageParams {
    fn default() -> Self {
        Self {
            ps_dbm: 66.0,
            pn_dbm: -95.0,
            radius_km: 4.0,
            shadow_sigma_db: 8.0,
            pl_a: 130.19,
            pl_b: 37.6,
        }
    }
}

/// Deterministic path loss at distance `r_km`.
pub fn pathloss_db(r_km: f64, params: &CoverageParams) -> Result<f64> {
    if !(r_km > 0.0) || !r_km.is_finite() {
        return Err(Error::NonPositiveDistance(r_km));
    }
    Ok(params.pl_a + params.pl_b * r_km.log10())
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Fraction of users whose received SNR is at least `s_db`.
pub fn snr_exceed_prob(s_db: f64, params: &CoverageParams) -> f64 {
    let r_max = params.radius_km;
    let margin = params.ps_dbm - params.pn_dbm - s_db;
    let integrand = |r: f64| {
        if r <= 0.0 {
            return 0.0;
        }
        let loss = params.pl_a + params.pl_b * r.log10();
        2.0 * r / (r_max * r_max) * normal_cdf((margin - loss) / params.shadow_sigma_db)
    };
    let n = RADIAL_INTERVALS;
    let h = r_max / n as f64;
    let mut sum = integrand(0.0) + integrand(r_max);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * integrand(i as f64 * h);
    }
    (sum * h / 3.0).clamp(0.0, 1.0)
}

/// Lowest SNR (dB) exceeded by `fraction` of the users.
pub fn snr_at_coverage(fraction: f64, params: &CoverageParams) -> Result<f64> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "fraction must be in (0,1), got {fraction}"
        )));
    }
    params.validate()?;
    let center = params.ps_dbm - params.pn_dbm - params.pl_a;
    let mut span = 10.0 * params.shadow_sigma_db + params.pl_b;
    let (mut lo, mut hi);
    loop {
        lo = center - span;
        hi = center + span;
        if snr_exceed_prob(lo, params) >= fraction && snr_exceed_prob(hi, params) <= fraction {
            break;
        }
        span *= 2.0;
        if span > 1e6 {
            return Err(Error::NotBracketed(fraction));
        }
    }
    while hi - lo > SNR_TOLERANCE_DB {
        let mid = 0.5 * (lo + hi);
        if snr_exceed_prob(mid, params) >= fraction {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pathloss_values() {
        let p = CoverageParams::default();
        assert_abs_diff_eq!(pathloss_db(1.0, &p).unwrap(), 130.19, epsilon = 1e-12);
        assert_abs_diff_eq!(pathloss_db(10.0, &p).unwrap(), 167.79, epsilon = 1e-12);
        assert_abs_diff_eq!(pathloss_db(4.0, &p).unwrap(), 152.827, epsilon = 1e-3);
        assert_eq!(pathloss_db(0.0, &p), Err(Error::NonPositiveDistance(0.0)));
    }

    #[test]
    fn extreme_thresholds() {
        let p = CoverageParams::default();
        assert_abs_diff_eq!(snr_exceed_prob(-400.0, &p), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(snr_exceed_prob(400.0, &p), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn rejects_bad_fraction() {
        let p = CoverageParams::default();
        for f in [0.0, 1.0, 1.5, -0.2, f64::NAN] {
            assert!(matches!(snr_at_coverage(f, &p), Err(Error::InvalidParameter(_))));
        }
    }
}
