//! BICM-SIC mutual information over AWGN.
//!
//! Every per-bit quantity is an expectation over the transmitted symbol and
//! the channel noise,
//!
//! ```text
//! I(B; Y) = 1 + E_s E_n [ log2( Σ_{k: b_k = b_s} p(y|z_k) / Σ_k p(y|z_k) ) ],  y = z_s + n
//! ```
//!
//! evaluated with a Gauss-Hermite product rule over the noise. Densities are
//! taken relative to `p(y|z_s)`, so the transmitted point always contributes
//! exactly one and both sums stay above one.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::quadrature::{NoiseNode, ProductRule};

const LOG_FLOOR: f64 = 1e-300;

/// AWGN receiver described by its SNR against a reference transmit power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub snr_db: f64,
    pub power_ref: f64,
    sigma: f64,
}

impl ChannelSpec {
    /// `σ² = power_ref / (2 · 10^(snr_db/10))`, i.e. total noise power
    /// `power_ref / snr` split evenly over the two real dimensions.
    pub fn new(snr_db: f64, power_ref: f64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::InvalidParameter(format!("snr_db must be finite, got {snr_db}")));
        }
        if !(power_ref > 0.0) || !power_ref.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "power_ref must be positive, got {power_ref}"
            )));
        }
        let snr = 10f64.powf(snr_db / 10.0);
        let sigma = (power_ref / (2.0 * snr)).sqrt();
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "snr_db = {snr_db} gives a degenerate noise level"
            )));
        }
        Ok(Self {
            snr_db,
            power_ref,
            sigma,
        })
    }

    /// Per-real-dimension noise standard deviation.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Total complex noise power `2σ²`.
    pub fn noise_power(&self) -> f64 {
        2.0 * self.sigma * self.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub nodes_per_dim: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_per_dim: 80,
            mc_samples: 200_000,
            seed: 0,
        }
    }
}

impl QuadratureSpec {
    pub fn with_nodes(nodes_per_dim: usize) -> Self {
        Self {
            nodes_per_dim,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_dim < 4 {
            return Err(Error::InvalidParameter(format!(
                "nodes_per_dim must be at least 4, got {}",
                self.nodes_per_dim
            )));
        }
        if self.mc_samples < 1000 {
            return Err(Error::InvalidParameter(format!(
                "mc_samples must be at least 1000, got {}",
                self.mc_samples
            )));
        }
        Ok(())
    }
}

/// `p(y|z)` for per-dimension noise variance `σ²`.
pub fn transition_density(y: Complex64, z: Complex64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    (-(y - z).norm_sqr() / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2)
}

/// Per-bit mutual informations of a labeled point set (labels are the
/// indices), plus optionally the gradient of their sum with respect to each
/// point, written as `∂/∂re + i ∂/∂im`.
#[derive(Debug, Clone)]
pub(crate) struct BlockMi {
    pub per_bit: Vec<f64>,
    pub grad: Option<Vec<Complex64>>,
}

/// `shifts[b]` selects label bit `b` as `(index >> shifts[b]) & 1`.
pub(crate) fn block_mi(
    points: &[Complex64],
    shifts: &[u32],
    sigma: f64,
    rule: &ProductRule,
    with_grad: bool,
) -> BlockMi {
    let m = points.len();
    let nb = shifts.len();
    let masks: Vec<u32> = (0..m)
        .map(|k| {
            shifts
                .iter()
                .enumerate()
                .fold(0u32, |acc, (b, &sh)| acc | ((((k >> sh) & 1) as u32) << b))
        })
        .collect();
    // agree[(s * nb + b) * m + k] = 1 when points s and k share bit b.
    let mut agree = vec![0.0f64; m * nb * m];
    for s in 0..m {
        for b in 0..nb {
            let row = &mut agree[(s * nb + b) * m..(s * nb + b + 1) * m];
            for (k, a) in row.iter_mut().enumerate() {
                if (masks[k] ^ masks[s]) >> b & 1 == 0 {
                    *a = 1.0;
                }
            }
        }
    }
    let re: Vec<f64> = points.iter().map(|z| z.re).collect();
    let im: Vec<f64> = points.iter().map(|z| z.im).collect();
    let inv_2s2 = 1.0 / (2.0 * sigma * sigma);
    let inv_s2 = 2.0 * inv_2s2;
    let scale = sigma * std::f64::consts::SQRT_2;

    let mut acc = vec![0.0; nb];
    let mut grad = if with_grad {
        vec![Complex64::new(0.0, 0.0); m]
    } else {
        Vec::new()
    };
    let mut w = vec![0.0; m];
    let mut inv_same = vec![0.0; nb];

    for (s, &zs) in points.iter().enumerate() {
        let ms = masks[s];
        for &NoiseNode { x, y, r2, weight } in &rule.nodes {
            let yv = zs + Complex64::new(x * scale, y * scale);
            for ((wk, &a), &b) in w.iter_mut().zip(&re).zip(&im) {
                let (dx, dy) = (yv.re - a, yv.im - b);
                *wk = (r2 - (dx * dx + dy * dy) * inv_2s2).exp();
            }
            // The own term is exactly one; set it to avoid rounding.
            w[s] = 1.0;
            let all: f64 = w.iter().sum();
            let ln_all = all.max(LOG_FLOOR).ln();
            for b in 0..nb {
                let row = &agree[(s * nb + b) * m..(s * nb + b + 1) * m];
                let same: f64 = w.iter().zip(row).map(|(wk, a)| wk * a).sum();
                acc[b] += weight * (same.max(LOG_FLOOR).ln() - ln_all);
                inv_same[b] = 1.0 / same;
            }
            if with_grad {
                let inv_all = nb as f64 / all;
                let mut back = Complex64::new(0.0, 0.0);
                for (k, &zk) in points.iter().enumerate() {
                    if k == s || w[k] == 0.0 {
                        continue;
                    }
                    let agree = !(masks[k] ^ ms);
                    let mut ck = -inv_all;
                    for (b, &inv) in inv_same.iter().enumerate() {
                        if (agree >> b) & 1 == 1 {
                            ck += inv;
                        }
                    }
                    let t = (yv - zk) * (weight * ck * w[k] * inv_s2);
                    grad[k] += t;
                    back -= t;
                }
                grad[s] += back;
            }
        }
    }

    let norm = 1.0 / (m as f64 * std::f64::consts::LN_2);
    BlockMi {
        per_bit: acc.into_iter().map(|a| 1.0 + a * norm).collect(),
        grad: with_grad.then(|| grad.into_iter().map(|g| g * norm).collect()),
    }
}

fn hp_shifts(m_h: u32, m_l: u32) -> Vec<u32> {
    (1..=m_h).map(|i| m_h + m_l - i).collect()
}

fn lp_shifts(m_l: u32) -> Vec<u32> {
    (1..=m_l).map(|j| m_l - j).collect()
}

/// HP rate and its gradient with respect to every point.
pub(crate) fn rate_hp_with_grad(
    points: &[Complex64],
    m_h: u32,
    m_l: u32,
    sigma: f64,
    rule: &ProductRule,
    with_grad: bool,
) -> (f64, Option<Vec<Complex64>>) {
    let out = block_mi(points, &hp_shifts(m_h, m_l), sigma, rule, with_grad);
    (out.per_bit.iter().sum(), out.grad)
}

/// Per-bit conditional LP informations, averaged over the HP groups.
pub(crate) fn lp_bits_with_grad(
    points: &[Complex64],
    m_h: u32,
    m_l: u32,
    sigma: f64,
    rule: &ProductRule,
    with_grad: bool,
) -> (Vec<f64>, Option<Vec<Complex64>>) {
    let groups = 1usize << m_h;
    let n = 1usize << m_l;
    let shifts = lp_shifts(m_l);
    let mut per_bit = vec![0.0; m_l as usize];
    let mut grad = with_grad.then(|| Vec::with_capacity(points.len()));
    for g in 0..groups {
        let out = block_mi(&points[g * n..(g + 1) * n], &shifts, sigma, rule, with_grad);
        for (acc, v) in per_bit.iter_mut().zip(&out.per_bit) {
            *acc += v / groups as f64;
        }
        if let (Some(all), Some(part)) = (grad.as_mut(), out.grad) {
            all.extend(part.into_iter().map(|d| d / groups as f64));
        }
    }
    (per_bit, grad)
}

fn checked_rule(q: &QuadratureSpec) -> Result<std::sync::Arc<ProductRule>> {
    q.validate()?;
    Ok(ProductRule::shared(q.nodes_per_dim))
}

/// `I(B_H^i; Y_H)` in bits, `i` counted from 1.
pub fn bit_mi_hp(c: &Constellation, ch: &ChannelSpec, i: usize, q: &QuadratureSpec) -> Result<f64> {
    if i == 0 || i > c.m_h() as usize {
        return Err(Error::IndexOutOfRange {
            index: i,
            max: c.m_h() as usize,
        });
    }
    let rule = checked_rule(q)?;
    let shift = c.bits() - i as u32;
    Ok(block_mi(c.points(), &[shift], ch.sigma(), &rule, false).per_bit[0])
}

/// All HP per-bit informations.
pub fn bit_mis_hp(c: &Constellation, ch: &ChannelSpec, q: &QuadratureSpec) -> Result<Vec<f64>> {
    let rule = checked_rule(q)?;
    Ok(block_mi(c.points(), &hp_shifts(c.m_h(), c.m_l()), ch.sigma(), &rule, false).per_bit)
}

/// `I(B_L^j; Y_L | B_H)` in bits: the per-group bit information averaged
/// uniformly over all HP labels.
pub fn bit_mi_lp_cond(
    c: &Constellation,
    ch: &ChannelSpec,
    j: usize,
    q: &QuadratureSpec,
) -> Result<f64> {
    if j == 0 || j > c.m_l() as usize {
        return Err(Error::IndexOutOfRange {
            index: j,
            max: c.m_l() as usize,
        });
    }
    let rule = checked_rule(q)?;
    let shift = c.m_l() - j as u32;
    let total: f64 = (0..c.group_count())
        .map(|g| block_mi(c.group(g), &[shift], ch.sigma(), &rule, false).per_bit[0])
        .sum();
    Ok(total / c.group_count() as f64)
}

/// All conditional LP per-bit informations.
pub fn bit_mis_lp(c: &Constellation, ch: &ChannelSpec, q: &QuadratureSpec) -> Result<Vec<f64>> {
    if c.m_l() == 0 {
        return Err(Error::NoLpBits);
    }
    let rule = checked_rule(q)?;
    Ok(lp_bits_with_grad(c.points(), c.m_h(), c.m_l(), ch.sigma(), &rule, false).0)
}

/// `I(B_L^j; Y_L)` without SIC, over the full constellation.
pub fn bit_mi_lp_uncond(
    c: &Constellation,
    ch: &ChannelSpec,
    j: usize,
    q: &QuadratureSpec,
) -> Result<f64> {
    if j == 0 || j > c.m_l() as usize {
        return Err(Error::IndexOutOfRange {
            index: j,
            max: c.m_l() as usize,
        });
    }
    let rule = checked_rule(q)?;
    let shift = c.m_l() - j as u32;
    Ok(block_mi(c.points(), &[shift], ch.sigma(), &rule, false).per_bit[0])
}

/// `r_H`: sum of the HP per-bit informations.
pub fn rate_hp(c: &Constellation, ch: &ChannelSpec, q: &QuadratureSpec) -> Result<f64> {
    Ok(bit_mis_hp(c, ch, q)?.iter().sum())
}

/// `r_L`: sum of the conditional LP per-bit informations.
pub fn rate_lp(c: &Constellation, ch: &ChannelSpec, q: &QuadratureSpec) -> Result<f64> {
    Ok(bit_mis_lp(c, ch, q)?.iter().sum())
}

/// Symbol-wise `I(Z; Y)` for uniform symbols.
pub fn joint_mi(c: &Constellation, ch: &ChannelSpec, q: &QuadratureSpec) -> Result<f64> {
    let rule = checked_rule(q)?;
    let points = c.points();
    let sigma = ch.sigma();
    let inv_2s2 = 1.0 / (2.0 * sigma * sigma);
    let scale = sigma * std::f64::consts::SQRT_2;
    let mut acc = 0.0;
    for (s, &zs) in points.iter().enumerate() {
        for node in &rule.nodes {
            let y = zs + Complex64::new(node.x * scale, node.y * scale);
            let all: f64 = points
                .iter()
                .enumerate()
                .map(|(k, &zk)| {
                    if k == s {
                        1.0
                    } else {
                        (node.r2 - (y - zk).norm_sqr() * inv_2s2).exp()
                    }
                })
                .sum();
            acc += node.weight * all.max(LOG_FLOOR).ln();
        }
    }
    let m = points.len() as f64;
    Ok(m.log2() - acc / (m * std::f64::consts::LN_2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Hp,
    Lp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Monte-Carlo estimate of a per-bit information (`Lp` is the SIC-conditioned
/// one). Reproducible for a fixed seed.
pub fn mc_bit_mi(
    c: &Constellation,
    ch: &ChannelSpec,
    layer: Layer,
    bit: usize,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < 1000 {
        return Err(Error::InvalidParameter(format!(
            "Monte-Carlo oracle needs at least 1000 samples, got {samples}"
        )));
    }
    let (max, shift) = match layer {
        Layer::Hp => (c.m_h() as usize, c.bits().wrapping_sub(bit as u32)),
        Layer::Lp => (c.m_l() as usize, c.m_l().wrapping_sub(bit as u32)),
    };
    if bit == 0 || bit > max {
        return Err(Error::IndexOutOfRange { index: bit, max });
    }
    let sigma = ch.sigma();
    let inv_2s2 = 1.0 / (2.0 * sigma * sigma);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let s = rng.random_range(0..c.len());
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        let n = Complex64::new(nx * sigma, ny * sigma);
        let (block, local) = match layer {
            Layer::Hp => (c.points(), s),
            Layer::Lp => (c.group(c.hp_label(s)), c.lp_label(s)),
        };
        let y = block[local] + n;
        let rel = n.norm_sqr() * inv_2s2;
        let bit_s = (local >> shift) & 1;
        let mut same = 0.0;
        let mut all = 0.0;
        for (k, &zk) in block.iter().enumerate() {
            let wk = if k == local {
                1.0
            } else {
                (rel - (y - zk).norm_sqr() * inv_2s2).exp()
            };
            all += wk;
            if (k >> shift) & 1 == bit_s {
                same += wk;
            }
        }
        let v = 1.0 + (same.max(LOG_FLOOR) / all.max(LOG_FLOOR)).log2();
        sum += v;
        sum_sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate {
        estimate: mean,
        stderr: (var / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{expand_central_symmetric, hqam, HqamParams};
    use approx::assert_abs_diff_eq;

    fn q() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn bpsk(amp: f64) -> Constellation {
        Constellation::new_natural(1, 0, vec![Complex64::new(amp, 0.0), Complex64::new(-amp, 0.0)])
            .unwrap()
    }

    fn gray_qpsk() -> Constellation {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        expand_central_symmetric(&[Complex64::new(h, h)], 0).unwrap()
    }

    /// Binary-input AWGN information by adaptive Simpson on the real line,
    /// written against the textbook form `1 - E[log2(1 + e^{-2 a y / s²})]`.
    fn bpsk_mi_oracle(a: f64, s: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
            let h = (hi - lo) / n as f64;
            let mut acc = f(lo) + f(hi);
            for i in 1..n {
                acc += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0
        }
        let f = |y: f64| {
            let pdf = (-(y - a).powi(2) / (2.0 * s * s)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * s);
            let t = -2.0 * a * y / (s * s);
            let softplus = if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
            pdf * (1.0 - softplus / std::f64::consts::LN_2)
        };
        simpson(&f, a - 14.0 * s, a + 14.0 * s, 200_000)
    }

    #[test]
    fn channel_noise_convention() {
        let ch = ChannelSpec::new(10.0, 2.0).unwrap();
        assert_abs_diff_eq!(ch.sigma().powi(2), 2.0 / (2.0 * 10.0), epsilon = 1e-15);
        assert_abs_diff_eq!(ch.noise_power(), 0.2, epsilon = 1e-15);
        assert!(ChannelSpec::new(10.0, 0.0).is_err());
        assert!(ChannelSpec::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn density_values() {
        let z = Complex64::new(0.3, -0.2);
        assert_abs_diff_eq!(
            transition_density(z, z, 1.0),
            1.0 / (2.0 * std::f64::consts::PI),
            epsilon = 1e-15
        );
        let sigma = 0.7;
        let y = z + Complex64::new(sigma, sigma);
        assert_abs_diff_eq!(
            transition_density(y, z, sigma),
            (-1.0f64).exp() / (2.0 * std::f64::consts::PI * sigma * sigma),
            epsilon = 1e-15
        );
        // Grid integral over a wide box.
        let h = 0.01;
        let mut total = 0.0;
        for i in -800..=800 {
            for j in -800..=800 {
                let y = z + Complex64::new(i as f64 * h, j as f64 * h);
                total += transition_density(y, z, sigma) * h * h;
            }
        }
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn bpsk_limits_and_oracle() {
        let ch = ChannelSpec::new(-100.0, 1.0).unwrap();
        assert!(bit_mi_hp(&bpsk(1.0), &ch, 1, &q()).unwrap() < 1e-4);
        for snr_db in [0.0, 2.92, 6.5, 10.0] {
            let ch = ChannelSpec::new(snr_db, 1.0).unwrap();
            let got = bit_mi_hp(&bpsk(1.0), &ch, 1, &q()).unwrap();
            let want = bpsk_mi_oracle(1.0, ch.sigma());
            assert_abs_diff_eq!(got, want, epsilon = 1e-5);
        }
    }

    #[test]
    fn qpsk_separates_into_two_bpsk() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for snr_db in [0.0, 5.0, 10.0, 15.0] {
            let ch = ChannelSpec::new(snr_db, 1.0).unwrap();
            let r_h = rate_hp(&gray_qpsk(), &ch, &q()).unwrap();
            assert_abs_diff_eq!(r_h, 2.0 * bpsk_mi_oracle(h, ch.sigma()), epsilon = 1e-5);
        }
    }

    #[test]
    fn high_snr_saturation() {
        let c = hqam(&HqamParams::new(2.0, 1.0, 2).unwrap()).unwrap().normalize_power(1.0).unwrap();
        let ch = ChannelSpec::new(40.0, 1.0).unwrap();
        for v in bit_mis_hp(&c, &ch, &q()).unwrap() {
            assert!(1.0 - v < 1e-3);
        }
        let ch = ChannelSpec::new(50.0, 1.0).unwrap();
        assert!(2.0 - rate_lp(&c, &ch, &q()).unwrap() < 1e-3);
        let low = ChannelSpec::new(-100.0, 1.0).unwrap();
        assert!(rate_hp(&c, &low, &q()).unwrap() < 1e-3);
        assert!(joint_mi(&c, &low, &q()).unwrap() < 1e-3);
    }

    #[test]
    fn collapsed_clusters_carry_no_lp_information() {
        let c = hqam(&HqamParams::new(0.7, 0.0, 2).unwrap()).unwrap();
        for snr_db in [0.0, 10.0, 30.0] {
            let ch = ChannelSpec::new(snr_db, 1.0).unwrap();
            assert!(rate_lp(&c, &ch, &q()).unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn lp_condition_equals_standalone_cluster() {
        let (d1, d2) = (0.6, 0.25);
        let c = hqam(&HqamParams::new(d1, d2, 2).unwrap()).unwrap();
        let ch = ChannelSpec::new(10.05, 1.0).unwrap();
        let cluster: Vec<_> = crate::constellation::hqam_base(2)
            .unwrap()
            .into_iter()
            .map(|s| s * d2)
            .collect();
        let standalone = Constellation::new_natural(2, 0, cluster).unwrap();
        for j in 1..=2 {
            let cond = bit_mi_lp_cond(&c, &ch, j, &q()).unwrap();
            let direct = bit_mi_hp(&standalone, &ch, j, &q()).unwrap();
            assert_abs_diff_eq!(cond, direct, epsilon = 1e-9);
        }
    }

    #[test]
    fn index_and_order_errors() {
        let c = gray_qpsk();
        let ch = ChannelSpec::new(5.0, 1.0).unwrap();
        assert!(matches!(bit_mi_hp(&c, &ch, 3, &q()), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(bit_mi_lp_cond(&c, &ch, 1, &q()), Err(Error::IndexOutOfRange { .. })));
        assert_eq!(rate_lp(&c, &ch, &q()), Err(Error::NoLpBits));
        let bad = QuadratureSpec::with_nodes(3);
        assert!(rate_hp(&c, &ch, &bad).is_err());
        assert!(mc_bit_mi(&c, &ch, Layer::Hp, 1, 10, 0).is_err());
    }

    #[test]
    fn joint_information_of_antipodal_pair_is_bpsk() {
        for snr_db in [0.0, 5.0] {
            let ch = ChannelSpec::new(snr_db, 1.0).unwrap();
            let c = bpsk(1.0);
            assert_abs_diff_eq!(
                joint_mi(&c, &ch, &q()).unwrap(),
                bpsk_mi_oracle(1.0, ch.sigma()),
                epsilon = 1e-5
            );
        }
    }

    #[test]
    fn monte_carlo_oracle() {
        let low = ChannelSpec::new(-100.0, 1.0).unwrap();
        let est = mc_bit_mi(&bpsk(1.0), &low, Layer::Hp, 1, 20_000, 3).unwrap();
        assert!(est.estimate.abs() <= 3.0 * est.stderr + 1e-12);

        let ch = ChannelSpec::new(10.0, 1.0).unwrap();
        let c = gray_qpsk();
        let half = rate_hp(&c, &ch, &q()).unwrap() / 2.0;
        let est = mc_bit_mi(&c, &ch, Layer::Hp, 1, 200_000, 11).unwrap();
        assert!((est.estimate - half).abs() < 3.0 * est.stderr, "{est:?} vs {half}");

        let again = mc_bit_mi(&c, &ch, Layer::Hp, 1, 200_000, 11).unwrap();
        assert_eq!(est.estimate.to_bits(), again.estimate.to_bits());
        assert_eq!(est.stderr.to_bits(), again.stderr.to_bits());
    }

    #[test]
    fn analytic_gradient_matches_differences() {
        let pts: Vec<Complex64> = (0..8)
            .map(|k| Complex64::from_polar(0.5 + 0.1 * k as f64, 0.9 * k as f64))
            .collect();
        let rule = ProductRule::shared(24);
        let shifts = [2, 0];
        let sigma = 0.3;
        let sum = |p: &[Complex64]| -> f64 { block_mi(p, &shifts, sigma, &rule, false).per_bit.iter().sum() };
        let grad = block_mi(&pts, &shifts, sigma, &rule, true).grad.unwrap();
        let h = 1e-6;
        for k in 0..pts.len() {
            for dir in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
                let mut up = pts.clone();
                up[k] += dir * h;
                let mut dn = pts.clone();
                dn[k] -= dir * h;
                let fd = (sum(&up) - sum(&dn)) / (2.0 * h);
                let an = if dir.re == 1.0 { grad[k].re } else { grad[k].im };
                assert_abs_diff_eq!(fd, an, epsilon = 1e-7);
            }
        }
    }
}
