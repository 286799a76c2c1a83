//! Gauss–Hermite rules for Gaussian expectations.

use std::f64::consts::PI;

/// Nodes and weights for `∫ e^{-t²} f(t) dt`. Nodes are isolated by Sturm
/// bisection on the Jacobi matrix and polished by Newton steps on the
/// orthonormal Hermite recurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = n.div_ceil(2);
        let upper = (2.0 * n as f64 + 1.0).sqrt() + 1.0;
        for i in 0..m {
            // root i counted from the top has n - 1 - i roots below it
            let target = n - 1 - i;
            let (mut lo, mut hi) = (0.0f64, upper);
            while hi - lo > 1e-15 * hi.max(1.0) {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if roots_below(n, mid) > target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let mut z = 0.5 * (lo + hi);
            for _ in 0..3 {
                let (p, dp) = recurrence(n, z);
                let step = p / dp;
                if !step.is_finite() || step.abs() > hi - lo + 1e-12 {
                    break;
                }
                z -= step;
            }
            let pp = recurrence(n, z).1;
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        if n % 2 == 1 {
            x[m - 1] = 0.0;
        }
        Self {
            nodes: x,
            weights: w,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and probability weights for `E[f(Z)]`, `Z ~ N(0, 1)`.
    pub fn standard_normal(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let s2 = std::f64::consts::SQRT_2;
        let norm = PI.sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (s2 * t, w / norm))
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(t))
            .sum()
    }
}

/// Number of eigenvalues of the Hermite Jacobi matrix below `x`.
fn roots_below(n: usize, x: f64) -> usize {
    let mut count = 0;
    let mut d = -x;
    for j in 0..n {
        if j > 0 {
            let b2 = j as f64 / 2.0;
            d = -x - b2 / d;
        }
        if d == 0.0 {
            d = -f64::MIN_POSITIVE;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Orthonormal `p_n(z)` and its derivative.
fn recurrence(n: usize, z: f64) -> (f64, f64) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    let mut p1 = PIM4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_order_moments() {
        for n in [1, 2, 5, 8, 64, 128, 256, 512] {
            let gh = GaussHermite::new(n);
            assert!((gh.integrate(|_| 1.0) - PI.sqrt()).abs() < 1e-12, "n={n}");
            if n >= 2 {
                assert!((gh.integrate(|t| t * t) - PI.sqrt() / 2.0).abs() < 1e-12);
            }
            if n >= 3 {
                assert!((gh.integrate(|t| t.powi(4)) - 3.0 * PI.sqrt() / 4.0).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn known_nodes() {
        let gh = GaussHermite::new(2);
        assert!((gh.nodes()[0] - 0.5f64.sqrt()).abs() < 1e-15);
        let gh = GaussHermite::new(3);
        assert!((gh.nodes()[0] - 1.5f64.sqrt()).abs() < 1e-14);
        assert_eq!(gh.nodes()[1], 0.0);
        assert!((gh.weights()[1] - 2.0 * PI.sqrt() / 3.0).abs() < 1e-14);
    }

    #[test]
    fn cosine_transform() {
        // ∫ e^{-t²} cos t dt = √π e^{-1/4}
        let gh = GaussHermite::new(20);
        assert!((gh.integrate(f64::cos) - PI.sqrt() * (-0.25f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn standard_normal_expectations() {
        let gh = GaussHermite::new(40);
        let m2: f64 = gh.standard_normal().map(|(z, w)| w * z * z).sum();
        let m4: f64 = gh.standard_normal().map(|(z, w)| w * z.powi(4)).sum();
        assert!((m2 - 1.0).abs() < 1e-13);
        assert!((m4 - 3.0).abs() < 1e-12);
    }
}
