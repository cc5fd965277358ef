//! Labeled hierarchical constellations.
//!
//! A [`Constellation`] stores `2^(m_h + m_l)` points in natural label order:
//! the point at index `l(b_H) * 2^m_l + l(b_L)` carries the label `(b_H, b_L)`,
//! where `l(.)` is the integer value of a bit vector written MSB first. Labels
//! are never stored or optimized; only point positions move.

use std::ops::Range;

use num_complex::Complex64;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Largest supported total label length.
pub const MAX_BITS: u32 = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    m_h: u32,
    m_l: u32,
    points: Vec<Complex64>,
}

impl Constellation {
    /// Wraps `points` as a natural-order labeled constellation. No reordering
    /// is performed.
    pub fn new_natural(m_h: u32, m_l: u32, points: Vec<Complex64>) -> Result<Self> {
        if m_h == 0 {
            return Err(Error::InvalidParameter("m_h must be at least 1".into()));
        }
        if m_h + m_l > MAX_BITS {
            return Err(Error::InvalidParameter(format!(
                "m_h + m_l = {} exceeds the supported maximum of {MAX_BITS}",
                m_h + m_l
            )));
        }
        let expected = 1usize << (m_h + m_l);
        if points.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                found: points.len(),
            });
        }
        if let Some(index) = points
            .iter()
            .position(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { m_h, m_l, points })
    }

    pub fn m_h(&self) -> u32 {
        self.m_h
    }

    pub fn m_l(&self) -> u32 {
        self.m_l
    }

    /// Total label length `m = m_h + m_l`.
    pub fn bits(&self) -> u32 {
        self.m_h + self.m_l
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Complex64> {
        self.points
    }

    /// Number of points per LP sub-constellation, `2^m_l`.
    pub fn group_size(&self) -> usize {
        1 << self.m_l
    }

    /// Number of LP sub-constellations, `2^m_h`.
    pub fn group_count(&self) -> usize {
        1 << self.m_h
    }

    /// Points of the sub-constellation whose HP label is `group`.
    pub fn group(&self, group: usize) -> &[Complex64] {
        let n = self.group_size();
        &self.points[group * n..(group + 1) * n]
    }

    /// HP label (as an integer) of the point at `index`.
    pub fn hp_label(&self, index: usize) -> usize {
        index >> self.m_l
    }

    /// LP label (as an integer) of the point at `index`.
    pub fn lp_label(&self, index: usize) -> usize {
        index & (self.group_size() - 1)
    }

    /// Mean symbol energy under uniform priors.
    pub fn average_power(&self) -> f64 {
        self.points.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    pub fn peak_power(&self) -> f64 {
        self.points
            .iter()
            .map(|z| z.norm_sqr())
            .fold(0.0, f64::max)
    }

    /// Peak-to-average power ratio.
    pub fn papr(&self) -> Result<f64> {
        let avg = self.average_power();
        if avg <= 0.0 {
            return Err(Error::ZeroPower);
        }
        Ok(self.peak_power() / avg)
    }

    /// Multiplies every point by `rho`.
    pub fn scale(&self, rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::NonPositiveScale(rho));
        }
        Ok(self.map_points(|z| z * rho))
    }

    /// Rescales so that the average power equals `power`.
    pub fn normalize_power(&self, power: f64) -> Result<Self> {
        if !(power > 0.0) || !power.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "target power must be positive, got {power}"
            )));
        }
        let avg = self.average_power();
        if avg <= 0.0 {
            return Err(Error::ZeroPower);
        }
        self.scale((power / avg).sqrt())
    }

    /// Rotates the whole constellation by `theta` radians.
    pub fn rotate(&self, theta: f64) -> Self {
        let r = Complex64::from_polar(1.0, theta);
        self.map_points(|z| z * r)
    }

    fn map_points(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            m_h: self.m_h,
            m_l: self.m_l,
            points: self.points.iter().map(|&z| f(z)).collect(),
        }
    }

    /// Indices of points whose `i`-th HP bit (1-based, MSB first) equals `bit`.
    pub fn hp_bit_partition(&self, i: usize, bit: bool) -> Result<Vec<usize>> {
        if i == 0 || i > self.m_h as usize {
            return Err(Error::IndexOutOfRange {
                index: i,
                max: self.m_h as usize,
            });
        }
        let shift = self.bits() as usize - i;
        Ok((0..self.len())
            .filter(|k| ((k >> shift) & 1 == 1) == bit)
            .collect())
    }

    /// Contiguous index range of the LP sub-constellation labeled by `b_h`
    /// (MSB first).
    pub fn lp_sub_constellation(&self, b_h: &[bool]) -> Result<Range<usize>> {
        if b_h.len() != self.m_h as usize {
            return Err(Error::SizeMismatch {
                expected: self.m_h as usize,
                found: b_h.len(),
            });
        }
        let group = b_h.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        let n = self.group_size();
        Ok(group * n..(group + 1) * n)
    }

    /// Serializes as `{"m_h":..,"m_l":..,"points":[[re,im],..]}` with 17
    /// significant digits per coordinate.
    pub fn to_json(&self) -> String {
        let mut out = format!("{{\"m_h\":{},\"m_l\":{},\"points\":[", self.m_h, self.m_l);
        for (k, z) in self.points.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push_str(&format!("[{:.16e},{:.16e}]", z.re, z.im));
        }
        out.push_str("]}");
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            m_h: u32,
            m_l: u32,
            points: Vec<[f64; 2]>,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        let points = doc
            .points
            .into_iter()
            .map(|[re, im]| Complex64::new(re, im))
            .collect();
        Self::new_natural(doc.m_h, doc.m_l, points)
    }
}

/// Builds a 4-group constellation from the group-`00` cluster as
/// `(z, -conj(z), conj(z), -z)`.
pub fn expand_central_symmetric(cluster: &[Complex64], m_l: u32) -> Result<Constellation> {
    let n = 1usize << m_l;
    if cluster.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: cluster.len(),
        });
    }
    let mut points = Vec::with_capacity(4 * n);
    points.extend_from_slice(cluster);
    points.extend(cluster.iter().map(|z| -z.conj()));
    points.extend(cluster.iter().map(|z| z.conj()));
    points.extend(cluster.iter().map(|z| -z));
    Constellation::new_natural(2, m_l, points)
}

/// Scaling pair of a hierarchical QAM: `d1` places the four quadrant
/// centers at `d1 * (±1 ± j)`, `d2` scales the per-quadrant base layout.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HqamParams {
    pub d1: f64,
    pub d2: f64,
    pub m_l: u32,
}

impl HqamParams {
    pub fn new(d1: f64, d2: f64, m_l: u32) -> Result<Self> {
        if !(d1 > 0.0) || !d1.is_finite() {
            return Err(Error::InvalidParameter(format!("d1 must be positive, got {d1}")));
        }
        if !(d2 >= 0.0) || !d2.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "d2 must be non-negative, got {d2}"
            )));
        }
        if !(2..=3).contains(&m_l) {
            return Err(Error::UnsupportedOrder(m_l));
        }
        Ok(Self { d1, d2, m_l })
    }
}

/// Gray-labeled base layout of one H-QAM quadrant, indexed by LP label.
///
/// `m_l = 2`: `{±1 ± j}`, first bit on the imaginary sign, second on the real
/// sign. `m_l = 3`: a 4x2 grid with the first two bits Gray-coded along the
/// real axis (`00 → 3, 01 → 1, 11 → -1, 10 → -3`) and the third bit on the
/// imaginary sign. Both layouts have zero mean.
pub fn hqam_base(m_l: u32) -> Result<Vec<Complex64>> {
    match m_l {
        2 => Ok((0..4)
            .map(|l| {
                let im = if l & 0b10 == 0 { 1.0 } else { -1.0 };
                let re = if l & 0b01 == 0 { 1.0 } else { -1.0 };
                Complex64::new(re, im)
            })
            .collect()),
        3 => Ok((0..8)
            .map(|l| {
                let re = match l >> 1 {
                    0b00 => 3.0,
                    0b01 => 1.0,
                    0b11 => -1.0,
                    _ => -3.0,
                };
                let im = if l & 1 == 0 { 1.0 } else { -1.0 };
                Complex64::new(re, im)
            })
            .collect()),
        other => Err(Error::UnsupportedOrder(other)),
    }
}

/// Average power of [`hqam_base`], so that `power(hqam) = 2 d1² + base_power · d2²`.
pub fn hqam_base_power(m_l: u32) -> Result<f64> {
    let base = hqam_base(m_l)?;
    Ok(base.iter().map(|z| z.norm_sqr()).sum::<f64>() / base.len() as f64)
}

/// `z(b_H, b_L) = d1 q(b_H) + d2 s(b_L)`, with the base layout mirrored into
/// each quadrant so that the HP bits are Gray-mapped onto quadrants.
pub fn hqam(params: &HqamParams) -> Result<Constellation> {
    let params = HqamParams::new(params.d1, params.d2, params.m_l)?;
    let center = Complex64::new(params.d1, params.d1);
    let cluster: Vec<Complex64> = hqam_base(params.m_l)?
        .into_iter()
        .map(|s| center + s * params.d2)
        .collect();
    expand_central_symmetric(&cluster, params.m_l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn qam16() -> Constellation {
        let mut pts = Vec::new();
        for re in [-3.0, -1.0, 1.0, 3.0] {
            for im in [-3.0, -1.0, 1.0, 3.0] {
                pts.push(c(re, im));
            }
        }
        Constellation::new_natural(2, 2, pts).unwrap()
    }

    fn sorted(points: &[Complex64]) -> Vec<(i64, i64)> {
        let mut v: Vec<_> = points
            .iter()
            .map(|z| ((z.re * 1e9).round() as i64, (z.im * 1e9).round() as i64))
            .collect();
        v.sort();
        v
    }

    #[test]
    fn bpsk_minimal() {
        let bpsk = Constellation::new_natural(1, 0, vec![c(1.0, 0.0), c(-1.0, 0.0)]).unwrap();
        assert_eq!(bpsk.hp_bit_partition(1, false).unwrap(), vec![0]);
        assert_eq!(bpsk.hp_bit_partition(1, true).unwrap(), vec![1]);
    }

    #[test]
    fn natural_labels_of_32_points() {
        let pts = (0..32).map(|k| c(k as f64, 0.0)).collect();
        let con = Constellation::new_natural(2, 3, pts).unwrap();
        assert_eq!((con.hp_label(7), con.lp_label(7)), (0b00, 0b111));
        assert_eq!((con.hp_label(24), con.lp_label(24)), (0b11, 0b000));
    }

    #[test]
    fn construction_errors() {
        let pts = vec![c(0.0, 0.0); 15];
        assert_eq!(
            Constellation::new_natural(2, 2, pts),
            Err(Error::SizeMismatch {
                expected: 16,
                found: 15
            })
        );
        let mut pts = vec![c(1.0, 0.0); 4];
        pts[2] = c(f64::NAN, 0.0);
        assert_eq!(
            Constellation::new_natural(2, 0, pts),
            Err(Error::NonFinite { index: 2 })
        );
    }

    #[test]
    fn power_and_papr() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let qpsk = Constellation::new_natural(
            2,
            0,
            vec![c(s, s), c(-s, s), c(s, -s), c(-s, -s)],
        )
        .unwrap();
        assert_abs_diff_eq!(qpsk.average_power(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(qpsk.papr().unwrap(), 1.0, epsilon = 1e-15);

        let q = qam16();
        assert_abs_diff_eq!(q.average_power(), 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.papr().unwrap(), 1.8, epsilon = 1e-12);

        let zero = Constellation::new_natural(1, 0, vec![c(0.0, 0.0); 2]).unwrap();
        assert_eq!(zero.papr(), Err(Error::ZeroPower));
        assert_eq!(zero.normalize_power(1.0), Err(Error::ZeroPower));
    }

    #[test]
    fn scale_and_normalize() {
        let q = qam16();
        let doubled = q.scale(2.0).unwrap();
        assert_abs_diff_eq!(doubled.average_power(), 40.0, epsilon = 1e-12);
        assert_abs_diff_eq!(doubled.papr().unwrap(), q.papr().unwrap(), epsilon = 1e-12);
        assert_eq!(q.scale(1.0).unwrap(), q);
        assert_eq!(q.scale(0.0), Err(Error::NonPositiveScale(0.0)));
        assert_eq!(q.scale(-1.0), Err(Error::NonPositiveScale(-1.0)));

        let unit = q.normalize_power(1.0).unwrap();
        let r = 10f64.sqrt();
        for (a, b) in unit.points().iter().zip(q.points()) {
            assert_abs_diff_eq!(a.re, b.re / r, epsilon = 1e-12);
            assert_abs_diff_eq!(a.im, b.im / r, epsilon = 1e-12);
        }
        let again = unit.normalize_power(1.0).unwrap();
        for (a, b) in again.points().iter().zip(unit.points()) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-12);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn central_symmetric_expansion() {
        let qpsk = expand_central_symmetric(&[c(1.0, 1.0)], 0).unwrap();
        assert_eq!(
            qpsk.points(),
            &[c(1.0, 1.0), c(-1.0, 1.0), c(1.0, -1.0), c(-1.0, -1.0)]
        );
        let cluster: Vec<_> = (0..8).map(|k| c(1.0 + k as f64 * 0.3, 0.5 - k as f64 * 0.1)).collect();
        let con = expand_central_symmetric(&cluster, 3).unwrap();
        assert_eq!(con.len(), 32);
        let sum: Complex64 = con.points().iter().sum();
        assert_abs_diff_eq!(sum.norm(), 0.0, epsilon = 1e-12);
        let cluster_power = cluster.iter().map(|z| z.norm_sqr()).sum::<f64>() / 8.0;
        assert_abs_diff_eq!(con.average_power(), cluster_power, epsilon = 1e-12);
        assert!(matches!(
            expand_central_symmetric(&cluster[..7], 3),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn hqam_family() {
        let grid = hqam(&HqamParams::new(2.0, 1.0, 2).unwrap()).unwrap();
        assert_eq!(sorted(grid.points()), sorted(qam16().points()));

        let collapsed = hqam(&HqamParams::new(1.0, 0.0, 2).unwrap()).unwrap();
        for g in 0..4 {
            let grp = collapsed.group(g);
            assert!(grp.iter().all(|z| *z == grp[0]));
        }
        assert_eq!(collapsed.group(0)[0], c(1.0, 1.0));

        for (d1, d2) in [(0.7, 0.2), (1.3, 0.9), (0.1, 0.5)] {
            let con = hqam(&HqamParams::new(d1, d2, 2).unwrap()).unwrap();
            let direct = con.points().iter().map(|z| z.norm_sqr()).sum::<f64>() / 16.0;
            assert_abs_diff_eq!(direct, 2.0 * (d1 * d1 + d2 * d2), epsilon = 1e-12);
            let con3 = hqam(&HqamParams::new(d1, d2, 3).unwrap()).unwrap();
            let base = hqam_base_power(3).unwrap();
            assert_abs_diff_eq!(con3.average_power(), 2.0 * d1 * d1 + base * d2 * d2, epsilon = 1e-12);
        }

        assert_eq!(HqamParams::new(1.0, 1.0, 4), Err(Error::UnsupportedOrder(4)));
        assert!(HqamParams::new(0.0, 1.0, 2).is_err());
        assert!(HqamParams::new(1.0, -0.1, 2).is_err());
    }

    #[test]
    fn hqam_base_is_gray_per_axis() {
        for m_l in [2, 3] {
            let base = hqam_base(m_l).unwrap();
            let n = base.len();
            // Nearest neighbours differ in exactly one label bit.
            for a in 0..n {
                let dmin = (0..n)
                    .filter(|&b| b != a)
                    .map(|b| (base[a] - base[b]).norm())
                    .fold(f64::INFINITY, f64::min);
                for b in 0..n {
                    if b != a && ((base[a] - base[b]).norm() - dmin).abs() < 1e-12 {
                        assert_eq!((a ^ b).count_ones(), 1, "m_l={m_l} a={a} b={b}");
                    }
                }
            }
            let mean: Complex64 = base.iter().sum();
            assert_abs_diff_eq!(mean.norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn partitions() {
        let qpsk = expand_central_symmetric(&[c(1.0, 1.0)], 0).unwrap();
        assert_eq!(qpsk.hp_bit_partition(1, false).unwrap(), vec![0, 1]);

        let pts = (0..32).map(|k| c(k as f64, 1.0)).collect();
        let con = Constellation::new_natural(2, 3, pts).unwrap();
        let second: Vec<usize> = (0..32).filter(|k| (k >> 3) & 1 == 1).collect();
        assert_eq!(con.hp_bit_partition(2, true).unwrap(), second);
        assert_eq!(second.len(), 16);
        for i in 1..=2 {
            let mut all = con.hp_bit_partition(i, false).unwrap();
            all.extend(con.hp_bit_partition(i, true).unwrap());
            all.sort();
            assert_eq!(all, (0..32).collect::<Vec<_>>());
        }
        assert!(matches!(
            con.hp_bit_partition(3, true),
            Err(Error::IndexOutOfRange { index: 3, max: 2 })
        ));
        assert!(matches!(
            con.hp_bit_partition(0, true),
            Err(Error::IndexOutOfRange { .. })
        ));

        assert_eq!(con.lp_sub_constellation(&[false, false]).unwrap(), 0..8);
        assert_eq!(con.lp_sub_constellation(&[true, true]).unwrap(), 24..32);
        let mut covered = vec![false; 32];
        for g in 0..4 {
            let r = con.lp_sub_constellation(&[g & 2 != 0, g & 1 != 0]).unwrap();
            for k in r {
                assert!(!covered[k]);
                covered[k] = true;
            }
        }
        assert!(covered.into_iter().all(|x| x));
        assert!(matches!(
            con.lp_sub_constellation(&[true]),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn json_document() {
        let con = hqam(&HqamParams::new(0.6, 0.2, 2).unwrap()).unwrap();
        let text = con.to_json();
        assert!(text.starts_with("{\"m_h\":2,\"m_l\":2,\"points\":[["));
        assert_eq!(Constellation::from_json(&text).unwrap(), con);
        let bad = r#"{"m_h":2,"m_l":2,"points":[[1,0],[0,1]]}"#;
        assert!(matches!(
            Constellation::from_json(bad),
            Err(Error::SizeMismatch { .. })
        ));
        assert!(matches!(Constellation::from_json("{"), Err(Error::Format(_))));
    }
}
