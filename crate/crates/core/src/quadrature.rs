//! Gauss quadrature rules from three-term recurrences (Golub–Welsch).

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and probability weights of a Gauss rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Builds the `n`-point rule for the measure whose monic orthogonal
    /// polynomials satisfy `p_{k+1} = (x − α_k) p_k − β_k p_{k−1}`, with
    /// total mass `mass`.
    pub fn from_recurrence(
        n: usize,
        alpha: impl Fn(usize) -> f64,
        beta: impl Fn(usize) -> f64,
        mass: f64,
    ) -> Self {
        assert!(n >= 1);
        let mut jacobi = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            jacobi[(k, k)] = alpha(k);
            if k + 1 < n {
                let b = beta(k + 1).sqrt();
                jacobi[(k, k + 1)] = b;
                jacobi[(k + 1, k)] = b;
            }
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let v0 = eig.eigenvectors[(0, k)];
                (eig.eigenvalues[k], mass * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Gauss–Legendre rule on `[-1, 1]` (weights sum to 2).
    pub fn legendre(n: usize) -> Self {
        Self::from_recurrence(
            n,
            |_| 0.0,
            |k| {
                let k = k as f64;
                k * k / (4.0 * k * k - 1.0)
            },
            2.0,
        )
    }

    /// `∫_a^b f` by this Legendre rule mapped to `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let r = GaussRule::legendre(8);
        // Exact for degree <= 15.
        let v = r.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
        assert!((r.weights.iter().sum::<f64>() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn hermite_rule_reproduces_normal_moments() {
        let r = GaussRule::from_recurrence(10, |_| 0.0, |k| k as f64, 1.0);
        let m = |p: i32| -> f64 { r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(p)).sum() };
        assert!((m(0) - 1.0).abs() < 1e-13);
        assert!((m(2) - 1.0).abs() < 1e-12);
        assert!((m(4) - 3.0).abs() < 1e-11);
        assert!((m(8) - 105.0).abs() < 1e-8);
    }
}
