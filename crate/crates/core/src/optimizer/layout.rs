//! Real-vector parameterizations of a constellation.
//!
//! Every layout is linear: point `k` equals `Σ_j v_j c_{jk}` for fixed
//! complex coefficients, which makes power, peak and chain-rule terms
//! closed-form.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constellation::{expand_central_symmetric, hqam_base, Constellation};
use crate::error::{Error, Result};

/// Variable reduction applied to the free constellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    /// Every point is free: `2^(m+1)` real variables.
    #[default]
    None,
    /// Only the `b_H = 00` cluster is free; the other three groups are
    /// `-conj`, `conj` and the negation of it.
    Central,
}

/// `(re(z_1), im(z_1), re(z_2), ...)`. In central mode only the first
/// cluster is read.
pub fn realify(c: &Constellation, symmetry: Symmetry) -> Result<Vec<f64>> {
    let points = match symmetry {
        Symmetry::None => c.points(),
        Symmetry::Central => {
            if c.m_h() != 2 {
                return Err(Error::InvalidParameter(
                    "central symmetry needs m_h = 2".into(),
                ));
            }
            c.group(0)
        }
    };
    Ok(points.iter().flat_map(|z| [z.re, z.im]).collect())
}

/// Inverse of [`realify`].
pub fn complexify(v: &[f64], m_h: u32, m_l: u32, symmetry: Symmetry) -> Result<Constellation> {
    let count = match symmetry {
        Symmetry::None => 1usize << (m_h + m_l),
        Symmetry::Central => {
            if m_h != 2 {
                return Err(Error::InvalidParameter(
                    "central symmetry needs m_h = 2".into(),
                ));
            }
            1usize << m_l
        }
    };
    if v.len() != 2 * count {
        return Err(Error::SizeMismatch {
            expected: 2 * count,
            found: v.len(),
        });
    }
    let points: Vec<Complex64> = v.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    match symmetry {
        Symmetry::None => Constellation::new_natural(m_h, m_l, points),
        Symmetry::Central => expand_central_symmetric(&points, m_l),
    }
}

/// Sign pattern of the four central-symmetric groups applied to `(re, im)`.
const GROUP_SIGNS: [(f64, f64); 4] = [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)];

fn group_image(g: usize, z: Complex64) -> Complex64 {
    let (sr, si) = GROUP_SIGNS[g];
    Complex64::new(sr * z.re, si * z.im)
}

#[derive(Debug, Clone)]
pub(crate) struct LinearMap {
    pub m_h: u32,
    pub m_l: u32,
    dim: usize,
    /// For each point, the variables it depends on and their coefficients.
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl LinearMap {
    pub fn free(m_h: u32, m_l: u32, symmetry: Symmetry) -> Result<Self> {
        let m = 1usize << (m_h + m_l);
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match symmetry {
            Symmetry::None => {
                let rows = (0..m).map(|k| vec![(2 * k, one), (2 * k + 1, i)]).collect();
                Ok(Self { m_h, m_l, dim: 2 * m, rows })
            }
            Symmetry::Central => {
                if m_h != 2 {
                    return Err(Error::InvalidParameter(
                        "central symmetry needs m_h = 2".into(),
                    ));
                }
                let n = 1usize << m_l;
                let rows = (0..4 * n)
                    .map(|k| {
                        let (g, c) = (k / n, k % n);
                        vec![(2 * c, group_image(g, one)), (2 * c + 1, group_image(g, i))]
                    })
                    .collect();
                Ok(Self { m_h, m_l, dim: 2 * n, rows })
            }
        }
    }

    /// `v = (d1, d2)` of an H-QAM with the Gray base of [`hqam_base`].
    pub fn hqam(m_l: u32) -> Result<Self> {
        let base = hqam_base(m_l)?;
        let n = base.len();
        let center = Complex64::new(1.0, 1.0);
        let rows = (0..4 * n)
            .map(|k| {
                let (g, c) = (k / n, k % n);
                vec![(0, group_image(g, center)), (1, group_image(g, base[c]))]
            })
            .collect();
        Ok(Self { m_h: 2, m_l, dim: 2, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_points(&self) -> usize {
        self.rows.len()
    }

    pub fn points(&self, v: &[f64]) -> Vec<Complex64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, c)| c * v[j]).sum())
            .collect()
    }

    pub fn constellation(&self, v: &[f64]) -> Result<Constellation> {
        Constellation::new_natural(self.m_h, self.m_l, self.points(v))
    }

    /// Chain rule: converts `∂f/∂re z_k + i ∂f/∂im z_k` into `∂f/∂v`.
    pub fn pullback(&self, point_grad: &[Complex64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        for (row, gk) in self.rows.iter().zip(point_grad) {
            for &(j, c) in row {
                g[j] += (gk.conj() * c).re;
            }
        }
        g
    }

    /// Gradient of `|z_k|²`.
    pub fn point_energy_grad(&self, k: usize, zk: Complex64) -> Vec<(usize, f64)> {
        self.rows[k]
            .iter()
            .map(|&(j, c)| (j, 2.0 * (zk.conj() * c).re))
            .collect()
    }

    /// Hessian of `|z_k|²` (constant).
    pub fn point_energy_hessian(&self, k: usize) -> Vec<(usize, usize, f64)> {
        let row = &self.rows[k];
        let mut out = Vec::with_capacity(row.len() * row.len());
        for &(i, ci) in row {
            for &(j, cj) in row {
                out.push((i, j, 2.0 * (ci.conj() * cj).re));
            }
        }
        out
    }

    /// `P` with average power `= vᵀ P v`.
    pub fn power_matrix(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.dim, self.dim);
        for k in 0..self.n_points() {
            for (i, j, h) in self.point_energy_hessian(k) {
                p[(i, j)] += h / 2.0;
            }
        }
        p / self.n_points() as f64
    }
}
