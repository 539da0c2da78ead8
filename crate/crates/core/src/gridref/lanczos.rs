//! Thick-restart Lanczos for a few extreme eigenpairs of a symmetric
//! operator. The projected matrix is formed explicitly against a fully
//! reorthogonalized basis, which keeps the restart bookkeeping trivial.

use log::debug;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Target {
    Largest,
    Smallest,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LanczosSpec {
    pub count: usize,
    pub target: Target,
    /// Basis size at which the iteration restarts.
    pub basis: usize,
    pub max_products: usize,
    pub tolerance: f64,
}

/// Converged Ritz pair as reported by the caller's residual check.
#[derive(Debug, Clone)]
pub(crate) struct RitzPair {
    pub value: f64,
    pub residual: f64,
    pub vector: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

/// Fixed start vector: smooth, sign-changing and not aligned with any
/// symmetry of the regular grids it is used on.
pub(crate) fn start_vector(n: usize) -> Vec<f64> {
    (0..n).map(|i| 1.0 + 0.5 * (0.7071 * i as f64).sin() + 0.25 * (0.01 * (i * i % 9973) as f64).cos()).collect()
}

/// Removes the span of `basis` from `v` (twice, for stability) and returns
/// the remaining norm.
fn orthogonalize(basis: &[Vec<f64>], v: &mut [f64]) -> f64 {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, v);
            axpy(-c, b, v);
        }
    }
    dot(v, v).sqrt()
}

/// `apply(x, y)` computes `y = A x`. `check(θ, y)` maps a unit Ritz pair of
/// `A` to the caller's (eigenvalue, residual); the iteration stops when the
/// `count` wanted pairs all have residual at most `tolerance`.
pub(crate) fn eigenpairs(
    n: usize,
    spec: LanczosSpec,
    mut apply: impl FnMut(&[f64], &mut [f64]) -> Result<()>,
    mut check: impl FnMut(f64, &[f64]) -> Result<(f64, f64)>,
) -> Result<Vec<RitzPair>> {
    let count = spec.count.min(n);
    if count == 0 {
        return Ok(Vec::new());
    }
    let m = spec.basis.max(2 * count + 8).min(n);
    let keep = (count + count.max(4)).min(m - 1).max(count);
    let mut v_basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut w_basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut t = DMatrix::<f64>::zeros(m, m);
    let mut products = 0usize;

    let mut next = start_vector(n);
    loop {
        // extend to the full basis
        while v_basis.len() < m {
            let mut nrm = orthogonalize(&v_basis, &mut next);
            if !(nrm > 1e-10 * (n as f64).sqrt()) {
                // invariant subspace: continue from a fresh direction
                next = start_vector(n).iter().enumerate().map(|(i, x)| x * ((i + v_basis.len()) as f64).cos()).collect();
                nrm = orthogonalize(&v_basis, &mut next);
                if !(nrm > 1e-10) {
                    break;
                }
            }
            next.iter_mut().for_each(|x| *x /= nrm);
            let mut w = vec![0.0; n];
            apply(&next, &mut w)?;
            products += 1;
            let k = v_basis.len();
            v_basis.push(std::mem::take(&mut next));
            for (i, vi) in v_basis.iter().enumerate() {
                let c = dot(vi, &w);
                t[(i, k)] = c;
                t[(k, i)] = c;
            }
            next = w.clone();
            w_basis.push(w);
        }
        let k = v_basis.len();
        let proj = t.view((0, 0), (k, k)).into_owned();
        let eig = SymmetricEigen::new(proj);
        let mut order: Vec<usize> = (0..k).collect();
        match spec.target {
            Target::Largest => order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a])),
            Target::Smallest => order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b])),
        }
        let combine = |basis: &[Vec<f64>], c: usize| -> Vec<f64> {
            let mut y = vec![0.0; n];
            for (j, b) in basis.iter().enumerate() {
                axpy(eig.eigenvectors[(j, c)], b, &mut y);
            }
            y
        };
        let mut pairs = Vec::with_capacity(count);
        let mut worst = 0.0f64;
        for &c in order.iter().take(count) {
            let y = combine(&v_basis, c);
            let (value, residual) = check(eig.eigenvalues[c], &y)?;
            worst = worst.max(residual);
            pairs.push(RitzPair { value, residual, vector: y });
        }
        if worst <= spec.tolerance || k < m {
            if worst > spec.tolerance {
                return Err(Error::Stagnation { iterations: products, residual: worst });
            }
            debug!("lanczos: {count} pairs after {products} products");
            return Ok(pairs);
        }
        if products >= spec.max_products {
            return Err(Error::Stagnation { iterations: products, residual: worst });
        }
        // thick restart on the leading Ritz vectors
        let kept: Vec<usize> = order.iter().take(keep).cloned().collect();
        let new_v: Vec<Vec<f64>> = kept.iter().map(|&c| combine(&v_basis, c)).collect();
        let new_w: Vec<Vec<f64>> = kept.iter().map(|&c| combine(&w_basis, c)).collect();
        // all Ritz residuals share one direction; take the largest
        let mut best = (0.0, Vec::new());
        for w in &new_w {
            let mut r = w.clone();
            let nrm = orthogonalize(&new_v, &mut r);
            if nrm > best.0 {
                best = (nrm, r);
            }
        }
        t.fill(0.0);
        for (i, &c) in kept.iter().enumerate() {
            t[(i, i)] = eig.eigenvalues[c];
        }
        v_basis = new_v;
        w_basis = new_w;
        next = if best.0 > 0.0 { best.1 } else { start_vector(n) };
        debug!("lanczos restart after {products} products, worst residual {worst:.2e}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1D Dirichlet Laplacian, eigenvalues 2 - 2 cos(kπ/(n+1)).
    fn laplacian(x: &[f64], y: &mut [f64]) -> Result<()> {
        let n = x.len();
        for i in 0..n {
            let l = if i > 0 { x[i - 1] } else { 0.0 };
            let r = if i + 1 < n { x[i + 1] } else { 0.0 };
            y[i] = 2.0 * x[i] - l - r;
        }
        Ok(())
    }

    #[test]
    fn smallest_laplacian_modes() {
        let n = 200;
        let spec = LanczosSpec { count: 3, target: Target::Smallest, basis: 40, max_products: 20000, tolerance: 1e-9 };
        let pairs = eigenpairs(n, spec, laplacian, |theta, y| {
            let mut ay = vec![0.0; n];
            laplacian(y, &mut ay)?;
            axpy(-theta, y, &mut ay);
            Ok((theta, dot(&ay, &ay).sqrt()))
        })
        .unwrap();
        for (k, p) in pairs.iter().enumerate() {
            let exact = 2.0 - 2.0 * (((k + 1) as f64) * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((p.value - exact).abs() < 1e-10, "{k}: {} vs {exact}", p.value);
        }
    }

    #[test]
    fn stagnation_is_reported() {
        let n = 400;
        let spec = LanczosSpec { count: 2, target: Target::Smallest, basis: 12, max_products: 30, tolerance: 1e-12 };
        let r = eigenpairs(n, spec, laplacian, |theta, y| {
            let mut ay = vec![0.0; n];
            laplacian(y, &mut ay)?;
            axpy(-theta, y, &mut ay);
            Ok((theta, dot(&ay, &ay).sqrt()))
        });
        assert!(matches!(r, Err(Error::Stagnation { .. })));
    }
}
