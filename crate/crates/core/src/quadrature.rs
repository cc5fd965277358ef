//! Gauss-Hermite rules and the pruned 2-D product rule used to take
//! expectations over circular Gaussian noise.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Product nodes whose weight falls below this are dropped.
const PRUNE_WEIGHT: f64 = 1e-14;

/// Nodes and weights of the `n`-point Gauss-Hermite rule for
/// `∫ e^{-x²} f(x) dx`, nodes in descending order.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
    const EPS: f64 = 1e-15;
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.166667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            // Orthonormal Hermite recurrence.
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= EPS * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NoiseNode {
    pub x: f64,
    pub y: f64,
    /// `x² + y²`, equal to `|n|² / (2σ²)` once scaled.
    pub r2: f64,
    /// Product weight normalised so that the full rule sums to one.
    pub weight: f64,
}

/// Expectation rule for `n ~ N(0, σ² I₂)`: `E[g(n)] ≈ Σ w g(σ√2 (x, y))`.
#[derive(Debug)]
pub(crate) struct ProductRule {
    pub nodes: Vec<NoiseNode>,
}

impl ProductRule {
    fn build(n: usize) -> Self {
        let (x, w) = gauss_hermite(n);
        let norm = 1.0 / std::f64::consts::PI;
        let mut nodes = Vec::with_capacity(n * n);
        for (&xa, &wa) in x.iter().zip(&w) {
            for (&xb, &wb) in x.iter().zip(&w) {
                let weight = wa * wb * norm;
                if weight >= PRUNE_WEIGHT {
                    nodes.push(NoiseNode {
                        x: xa,
                        y: xb,
                        r2: xa * xa + xb * xb,
                        weight,
                    });
                }
            }
        }
        Self { nodes }
    }

    /// Shared rule with `n` nodes per real dimension.
    pub fn shared(n: usize) -> Arc<ProductRule> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<ProductRule>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard
            .entry(n)
            .or_insert_with(|| Arc::new(ProductRule::build(n)))
            .clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_point_rule() {
        let (x, w) = gauss_hermite(2);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(x[0], h, epsilon = 1e-14);
        assert_abs_diff_eq!(x[1], -h, epsilon = 1e-14);
        let half_sqrt_pi = std::f64::consts::PI.sqrt() / 2.0;
        assert_abs_diff_eq!(w[0], half_sqrt_pi, epsilon = 1e-14);
        assert_abs_diff_eq!(w[1], half_sqrt_pi, epsilon = 1e-14);
    }

    #[test]
    fn moments_are_exact() {
        // ∫ x^{2k} e^{-x²} dx = Γ(k + 1/2)
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let gamma_half = [sqrt_pi, sqrt_pi / 2.0, 3.0 * sqrt_pi / 4.0, 15.0 * sqrt_pi / 8.0, 105.0 * sqrt_pi / 16.0];
        for n in [5, 24, 48, 80, 160] {
            let (x, w) = gauss_hermite(n);
            for (k, &expected) in gamma_half.iter().enumerate() {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(2 * k as i32)).sum();
                assert_abs_diff_eq!(got, expected, epsilon = 1e-12 * expected.max(1.0));
            }
            let odd: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(3)).sum();
            assert_abs_diff_eq!(odd, 0.0, epsilon = 1e-12);
            assert!(x.windows(2).all(|p| p[0] > p[1]));
        }
    }

    #[test]
    fn pruned_product_rule_keeps_mass() {
        for n in [24, 80, 160] {
            let rule = ProductRule::shared(n);
            let total: f64 = rule.nodes.iter().map(|q| q.weight).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-11);
            let second: f64 = rule.nodes.iter().map(|q| q.weight * q.r2).sum();
            // E[x² + y²] under e^{-x²-y²}/π is 1; pruned nodes sit far out.
            assert_abs_diff_eq!(second, 1.0, epsilon = 1e-10);
        }
    }
}
