//! Special functions behind the Sturmian and hyperspherical bases.
//!
//! All polynomial families are evaluated by their three-term recurrences.
//! Spherical harmonics are the real (tesseral) ones, orthonormal on the unit
//! sphere, without the Condon-Shortley phase:
//!
//! * `m > 0`: `sqrt(2) N_lm P_l^m(cos θ) cos(m φ)`
//! * `m = 0`: `N_l0 P_l(cos θ)`
//! * `m < 0`: `sqrt(2) N_l|m| P_l^|m|(cos θ) sin(|m| φ)`

use std::f64::consts::PI;

use crate::error::{invalid, Result};

/// Ultraspherical polynomial `C_j^λ(x)` with `C_1^λ(x) = 2λx`.
pub fn gegenbauer(lambda: f64, degree: i32, x: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return invalid(format!("Gegenbauer order must be positive, got {lambda}"));
    }
    if degree < 0 {
        return invalid(format!("Gegenbauer degree must be non-negative, got {degree}"));
    }
    if !(x.abs() <= 1.0 + 1e-12) {
        return invalid(format!("Gegenbauer argument {x} outside [-1, 1]"));
    }
    Ok(gegenbauer_unchecked(lambda, degree as usize, x))
}

pub(crate) fn gegenbauer_unchecked(lambda: f64, degree: usize, x: f64) -> f64 {
    if degree == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = 2.0 * lambda * x;
    for k in 1..degree {
        let kf = k as f64;
        let next = (2.0 * x * (kf + lambda) * cur - (kf + 2.0 * lambda - 1.0) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Associated Laguerre polynomial `L_i^j(x)` with `L_1^j(x) = 1 + j - x`.
pub fn assoc_laguerre(degree: i32, alpha: i32, x: f64) -> Result<f64> {
    if degree < 0 || alpha < 0 {
        return invalid(format!("Laguerre indices must be non-negative, got ({degree}, {alpha})"));
    }
    if !(x >= 0.0) {
        return invalid(format!("Laguerre argument must be non-negative, got {x}"));
    }
    Ok(assoc_laguerre_unchecked(degree as usize, alpha as f64, x))
}

pub(crate) fn assoc_laguerre_unchecked(degree: usize, alpha: f64, x: f64) -> f64 {
    if degree == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = 1.0 + alpha - x;
    for k in 1..degree {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * cur - (kf + alpha) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `ln(n!)`, exact summation below 64 and Stirling series above.
pub fn ln_factorial(n: u32) -> f64 {
    if n < 64 {
        (2..=n).map(|k| (k as f64).ln()).sum()
    } else {
        let x = n as f64 + 1.0;
        // ln Γ(x) Stirling series; error far below 1e-15 for x > 64.
        (x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x.powi(3))
            + 1.0 / (1260.0 * x.powi(5))
    }
}

/// Associated Legendre function `P_l^m(x)`, `m >= 0`, no Condon-Shortley phase.
pub(crate) fn assoc_legendre(l: usize, m: usize, x: f64) -> f64 {
    if m > l {
        return 0.0;
    }
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    for k in 0..m {
        pmm *= (2 * k + 1) as f64 * s;
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pm1;
    }
    let mut pm2 = pmm;
    for ll in (m + 2)..=l {
        let p = ((2 * ll - 1) as f64 * x * pm1 - (ll + m - 1) as f64 * pm2) / (ll - m) as f64;
        pm2 = pm1;
        pm1 = p;
    }
    pm1
}

/// Normalization `N_lm = sqrt((2l+1)/(4π) (l-m)!/(l+m)!)`.
pub(crate) fn harmonic_norm(l: usize, m: usize) -> f64 {
    let ln = ln_factorial((l - m) as u32) - ln_factorial((l + m) as u32);
    ((2 * l + 1) as f64 / (4.0 * PI)).sqrt() * (0.5 * ln).exp()
}

/// Real spherical harmonic of unit L² norm on the sphere.
pub fn spherical_harmonic(l: i32, m: i32, theta: f64, phi: f64) -> Result<f64> {
    if l < 0 || m.abs() > l {
        return invalid(format!("invalid harmonic indices (l={l}, m={m})"));
    }
    if !(0.0..=PI).contains(&theta) {
        return invalid(format!("polar angle {theta} outside [0, π]"));
    }
    let (l, am) = (l as usize, m.unsigned_abs() as usize);
    let p = harmonic_norm(l, am) * assoc_legendre(l, am, theta.cos());
    Ok(match m.signum() {
        0 => p,
        1 => std::f64::consts::SQRT_2 * p * (am as f64 * phi).cos(),
        _ => std::f64::consts::SQRT_2 * p * (am as f64 * phi).sin(),
    })
}

/// Index of `(l, m)` in a packed harmonic table: `l² + l + m`.
#[inline]
pub fn lm_index(l: usize, m: i32) -> usize {
    ((l * l + l) as i64 + m as i64) as usize
}

const MAX_TABLE_L: usize = 32;

/// Precomputed normalizations for evaluating every real harmonic up to
/// `lmax` at once from Cartesian direction cosines.
#[derive(Debug, Clone)]
pub struct HarmonicTable {
    lmax: usize,
    norms: Vec<f64>,
}

impl HarmonicTable {
    pub fn new(lmax: usize) -> Self {
        assert!(lmax < MAX_TABLE_L, "harmonic table limited to l < {MAX_TABLE_L}");
        let mut norms = vec![0.0; (lmax + 1) * (lmax + 1)];
        for l in 0..=lmax {
            for m in 0..=l {
                norms[l * (lmax + 1) + m] = harmonic_norm(l, m);
            }
        }
        Self { lmax, norms }
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    /// Fill `out[lm_index(l, m)]` for the direction of `(x, y, z)`.
    /// The origin maps to the north pole.
    pub fn eval(&self, x: f64, y: f64, z: f64, out: &mut [f64]) {
        let lmax = self.lmax;
        let rho = (x * x + y * y).sqrt();
        let r = (rho * rho + z * z).sqrt();
        let (ct, st) = if r > 0.0 { (z / r, rho / r) } else { (1.0, 0.0) };
        let (cp, sp) = if rho > 0.0 { (x / rho, y / rho) } else { (1.0, 0.0) };
        // cos(mφ), sin(mφ) by angle addition
        let mut cm = [0.0f64; MAX_TABLE_L];
        let mut sm = [0.0f64; MAX_TABLE_L];
        cm[0] = 1.0;
        for m in 1..=lmax {
            cm[m] = cm[m - 1] * cp - sm[m - 1] * sp;
            sm[m] = sm[m - 1] * cp + cm[m - 1] * sp;
        }
        let mut pmm = 1.0;
        for m in 0..=lmax {
            if m > 0 {
                pmm *= (2 * m - 1) as f64 * st;
            }
            let mut pl2 = 0.0;
            let mut pl1 = pmm;
            for l in m..=lmax {
                let p = if l == m {
                    pmm
                } else if l == m + 1 {
                    ct * (2 * m + 1) as f64 * pmm
                } else {
                    ((2 * l - 1) as f64 * ct * pl1 - (l + m - 1) as f64 * pl2) / (l - m) as f64
                };
                if l > m {
                    pl2 = pl1;
                    pl1 = p;
                }
                let v = self.norms[l * (lmax + 1) + m] * p;
                if m == 0 {
                    out[lm_index(l, 0)] = v;
                } else {
                    out[lm_index(l, m as i32)] = std::f64::consts::SQRT_2 * v * cm[m];
                    out[lm_index(l, -(m as i32))] = std::f64::consts::SQRT_2 * v * sm[m];
                }
            }
        }
    }
}

/// Spherical Bessel function of the first kind `j_L(x)`, `x >= 0`.
pub fn spherical_bessel_j(order: usize, x: f64) -> f64 {
    if x == 0.0 {
        return if order == 0 { 1.0 } else { 0.0 };
    }
    if x > order as f64 + 0.5 {
        let j0 = x.sin() / x;
        if order == 0 {
            return j0;
        }
        let mut prev = j0;
        let mut cur = x.sin() / (x * x) - x.cos() / x;
        for k in 1..order {
            let next = (2 * k + 1) as f64 / x * cur - prev;
            prev = cur;
            cur = next;
        }
        return cur;
    }
    // power series x^L/(2L+1)!! Σ (-x²/2)^k / (k! (2L+3)(2L+5)...(2L+2k+1))
    let mut lead = 1.0;
    for k in 0..order {
        lead *= x / (2 * k + 3) as f64;
    }
    let h = -0.5 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= h / (k as f64 * (2 * order + 2 * k + 1) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    lead * sum
}
