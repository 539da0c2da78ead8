//! One-dimensional Gauss rules and the Becke fuzzy-cell partition.

use std::f64::consts::PI;

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on `P_n` from the Chebyshev guess.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
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

    /// Nodes and weights mapped affinely onto `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    /// Semi-infinite rule for `∫_0^∞ f(r) dr` with `r = s (1+x)/(1-x)`.
    /// Points cluster near `r ~ s`.
    pub fn semi_infinite(&self, scale: f64) -> Vec<(f64, f64)> {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| {
                let r = scale * (1.0 + x) / (1.0 - x);
                let dr = scale * 2.0 / ((1.0 - x) * (1.0 - x));
                (r, w * dr)
            })
            .collect()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Becke's smoothed step, three iterations of `1.5μ - 0.5μ³`.
#[inline]
fn becke_step(mu: f64) -> f64 {
    let mut f = mu;
    for _ in 0..3 {
        f = 1.5 * f - 0.5 * f * f * f;
    }
    0.5 * (1.0 - f)
}

/// Normalized Becke cell weights of `point` for each of `centers`.
/// `out` must have one slot per center.
pub fn becke_weights(point: [f64; 3], centers: &[[f64; 3]], out: &mut [f64]) {
    let nc = centers.len();
    if nc == 1 {
        out[0] = 1.0;
        return;
    }
    let mut dist = [0.0f64; 64];
    assert!(nc <= dist.len(), "too many partition centers");
    for (a, c) in centers.iter().enumerate() {
        dist[a] = norm(sub(point, *c));
    }
    let mut total = 0.0;
    for a in 0..nc {
        let mut p = 1.0;
        for b in 0..nc {
            if a == b {
                continue;
            }
            let rab = norm(sub(centers[a], centers[b]));
            p *= becke_step((dist[a] - dist[b]) / rab);
            if p == 0.0 {
                break;
            }
        }
        out[a] = p;
        total += p;
    }
    for v in out.iter_mut().take(nc) {
        *v /= total;
    }
}

#[inline]
pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        let rule = GaussLegendre::new(12);
        for k in 0..24 {
            let q: f64 = rule.nodes().iter().zip(rule.weights()).map(|(x, w)| w * x.powi(k)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert_abs_diff_eq!(q, exact, epsilon = 1e-14);
        }
    }

    #[test]
    fn semi_infinite_exponential_moments() {
        let rule = GaussLegendre::new(120);
        for k in 0..6 {
            let q: f64 = rule.semi_infinite(0.5).iter().map(|(r, w)| w * r.powi(k) * (-2.0 * r).exp()).sum();
            let exact = crate::specfun::ln_factorial(k as u32).exp() / 2f64.powi(k + 1);
            assert!((q - exact).abs() < 1e-11 * exact, "k={k}: {q} vs {exact}");
        }
    }

    #[test]
    fn becke_partition_of_unity() {
        let centers = [[0.0, 0.0, -1.5], [0.0, 0.0, 1.5], [0.3, 2.0, 0.0]];
        let mut w = [0.0; 3];
        for p in [[0.0, 0.0, 0.0], [1.0, -2.0, 3.0], [0.0, 0.0, -1.5]] {
            becke_weights(p, &centers, &mut w);
            assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        }
        becke_weights([0.0, 0.0, -1.5], &centers, &mut w);
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-12);
    }
}
