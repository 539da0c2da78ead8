//! Coulomb-weighted overlap integrals over equal-exponent Sturmians.
//!
//! The per-integral routines here use lab-frame real harmonics and adaptive
//! quadrature with doubling refinement:
//!
//! * two-center integrals in prolate spheroidal coordinates, where the
//!   Jacobian cancels the Coulomb singularity exactly;
//! * three-center integrals on a Becke-partitioned molecular grid with a
//!   spherical sub-grid on each orbital center and on the singularity;
//! * the hyperspherical overlap as an independent oracle (see [`fock`]).
//!
//! Production matrix assembly uses the batched grid in
//! [`crate::hamiltonian`]; these routines back the reference assembly path
//! and the consistency checks.

mod cache;
pub mod fock;

pub use cache::{IntegralCache, IntegralKey, IntegralKind};
pub use fock::overlap_via_fock_sphere;

use std::f64::consts::PI;

use crate::basis::{CenterOrbitals, QuantumNumbers};
use crate::error::{invalid, Error, Result};
use crate::geometry::{cross, dot};
use crate::quadrature::{becke_weights, norm, sub, GaussLegendre};

/// Point counts and error control for adaptive integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub radial_points: usize,
    pub angular_points: usize,
    pub tolerance: f64,
    pub max_refinements: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { radial_points: 48, angular_points: 24, tolerance: 1e-9, max_refinements: 4 }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.radial_points < 8 || self.angular_points < 8 {
            return invalid("quadrature needs at least 8 points per dimension");
        }
        if !(self.tolerance > 0.0) {
            return invalid(format!("quadrature tolerance must be positive, got {}", self.tolerance));
        }
        Ok(())
    }

    /// Same spec with the tolerance halved, for self-consistency checks.
    pub fn tightened(&self) -> Self {
        Self { tolerance: 0.5 * self.tolerance, ..*self }
    }
}

/// Absolute floor below which values count as zero.
const ABS_FLOOR: f64 = 1e-12;
/// Displacements shorter than this are treated as exactly zero.
const ZERO_DISPLACEMENT: f64 = 1e-14;

pub(crate) fn converged(current: f64, previous: f64, tol: f64) -> bool {
    (current - previous).abs() <= (tol * current.abs()).max(ABS_FLOOR)
}

fn check_p0(p0: f64) -> Result<()> {
    if p0 > 0.0 && p0.is_finite() {
        Ok(())
    } else {
        invalid(format!("p0 must be positive, got {p0}"))
    }
}

/// `∫ χ_N χ_N' / |r| d³r = (p0/n) δ_NN'`.
pub fn one_center(bra: QuantumNumbers, ket: QuantumNumbers, p0: f64) -> f64 {
    if bra == ket {
        p0 / bra.n as f64
    } else {
        0.0
    }
}

/// Lab-frame evaluator for a single orbital.
struct Single {
    set: CenterOrbitals,
    scratch: Vec<f64>,
    out: [f64; 1],
}

impl Single {
    fn new(qn: QuantumNumbers) -> Self {
        let set = CenterOrbitals::new(vec![qn]);
        let scratch = vec![0.0; set.scratch_len()];
        Self { set, scratch, out: [0.0] }
    }

    #[inline]
    fn at(&mut self, p0: f64, d: [f64; 3]) -> f64 {
        self.set.eval(p0, d, &mut self.scratch, &mut self.out);
        self.out[0]
    }
}

/// Orthonormal frame with `z` along `dir`.
fn frame_along(dir: [f64; 3]) -> [[f64; 3]; 3] {
    let n = norm(dir);
    let ez = [dir[0] / n, dir[1] / n, dir[2] / n];
    let seed = if ez[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let p = dot(seed, ez);
    let ex = sub(seed, [p * ez[0], p * ez[1], p * ez[2]]);
    let nx = norm(ex);
    let ex = [ex[0] / nx, ex[1] / nx, ex[2] / nx];
    [ex, cross(ez, ex), ez]
}

/// Prolate spheroidal quadrature of `g(point, r_a, r_b) · J` with foci at
/// the origin and `r`, where `J = (R/2)³ (λ² - μ²)`. The λ - 1 coordinate
/// uses a mapped semi-infinite rule with the given scale.
fn prolate_sum(
    r: [f64; 3],
    n_lambda: usize,
    n_mu: usize,
    n_phi: usize,
    scale: f64,
    mut g: impl FnMut([f64; 3], f64, f64) -> f64,
) -> f64 {
    let big_r = norm(r);
    let half = 0.5 * big_r;
    let axes = frame_along(r);
    let mid = [0.5 * r[0], 0.5 * r[1], 0.5 * r[2]];
    let lam_rule = GaussLegendre::new(n_lambda).semi_infinite(scale);
    let mu_rule = GaussLegendre::new(n_mu);
    let dphi = 2.0 * PI / n_phi as f64;
    let trig: Vec<(f64, f64)> = (0..n_phi).map(|k| ((k as f64 + 0.5) * dphi).sin_cos()).collect();
    let mut total = 0.0;
    for &(x, wl) in &lam_rule {
        let lam = 1.0 + x;
        for (&mu, &wm) in mu_rule.nodes().iter().zip(mu_rule.weights()) {
            let ra = half * (lam + mu);
            let rb = half * (lam - mu);
            let rho = half * ((lam * lam - 1.0) * (1.0 - mu * mu)).max(0.0).sqrt();
            let z = half * lam * mu;
            let jac = half * half * half * (lam * lam - mu * mu);
            let mut inner = 0.0;
            for &(s, c) in &trig {
                let (u, v) = (rho * c, rho * s);
                let p = [
                    mid[0] + u * axes[0][0] + v * axes[1][0] + z * axes[2][0],
                    mid[1] + u * axes[0][1] + v * axes[1][1] + z * axes[2][1],
                    mid[2] + u * axes[0][2] + v * axes[1][2] + z * axes[2][2],
                ];
                inner += g(p, ra, rb);
            }
            total += wl * wm * jac * inner * dphi;
        }
    }
    total
}

/// `∫ χ_N(r) χ_N'(r - R) / |r| d³r`.
pub fn two_center_bra(
    bra: QuantumNumbers,
    ket: QuantumNumbers,
    r: [f64; 3],
    p0: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_p0(p0)?;
    let big_r = norm(r);
    if big_r < ZERO_DISPLACEMENT {
        return Ok(one_center(bra, ket, p0));
    }
    let n_phi = 2 * (bra.l + ket.l) as usize + 2;
    let scale = 0.5 * (bra.n + ket.n) as f64 / (p0 * big_r);
    let mut a = Single::new(bra);
    let mut b = Single::new(ket);
    refine(
        || format!("two-center integral <{bra}|1/r|{ket}> at |R|={big_r}"),
        spec,
        |level| {
            let k = 1usize << level;
            prolate_sum(r, spec.radial_points * k, spec.angular_points * k, n_phi, scale, |p, ra, _| {
                a.at(p0, p) * b.at(p0, sub(p, r)) / ra
            })
        },
    )
}

/// `∫ χ_N(r) χ_N'(r) / |r - R| d³r`.
pub fn two_center_ket(
    bra: QuantumNumbers,
    ket: QuantumNumbers,
    r: [f64; 3],
    p0: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_p0(p0)?;
    let big_r = norm(r);
    if big_r < ZERO_DISPLACEMENT {
        return Ok(one_center(bra, ket, p0));
    }
    let n_phi = 2 * (bra.l + ket.l) as usize + 2;
    let scale = 0.5 * (bra.n + ket.n) as f64 / (p0 * big_r);
    let mut a = Single::new(bra);
    let mut b = Single::new(ket);
    refine(
        || format!("two-center integral <{bra}|1/|r-R||{ket}> at |R|={big_r}"),
        spec,
        |level| {
            let k = 1usize << level;
            prolate_sum(r, spec.radial_points * k, spec.angular_points * k, n_phi, scale, |p, _, rb| {
                a.at(p0, p) * b.at(p0, p) / rb
            })
        },
    )
}

/// Doubling refinement that reports the last two estimates on failure.
fn refine(what: impl Fn() -> String, spec: &QuadratureSpec, mut estimate: impl FnMut(usize) -> f64) -> Result<f64> {
    spec.validate()?;
    let mut prev = estimate(0);
    for level in 1..=spec.max_refinements {
        let cur = estimate(level);
        if converged(cur, prev, spec.tolerance) {
            return Ok(cur);
        }
        if level == spec.max_refinements {
            return Err(Error::Convergence { what: what(), last: cur, previous: prev });
        }
        prev = cur;
    }
    Err(Error::Convergence { what: what(), last: prev, previous: f64::NAN })
}

/// `∫ χ_N(r) χ_N'(r - R1) / |r - R2| d³r`. Coincident points reduce to the
/// two-center forms.
pub fn three_center(
    bra: QuantumNumbers,
    ket: QuantumNumbers,
    r1: [f64; 3],
    r2: [f64; 3],
    p0: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_p0(p0)?;
    if norm(r1) < ZERO_DISPLACEMENT {
        return two_center_ket(bra, ket, r2, p0, spec);
    }
    if norm(r2) < ZERO_DISPLACEMENT {
        return two_center_bra(bra, ket, r1, p0, spec);
    }
    if norm(sub(r1, r2)) < ZERO_DISPLACEMENT {
        // singularity on the ket: shift the origin to R1
        return two_center_bra(ket, bra, [-r1[0], -r1[1], -r1[2]], p0, spec);
    }
    let centers = [[0.0; 3], r1, r2];
    let mut a = Single::new(bra);
    let mut b = Single::new(ket);
    refine(
        || format!("three-center integral <{bra}|1/|r-R2||{ket}(R1)>"),
        spec,
        |level| {
            let k = 1usize << level;
            becke_sum(&centers, spec.radial_points * k, spec.angular_points * k, 1.0 / p0, |p| {
                let d = norm(sub(p, r2));
                if d == 0.0 {
                    0.0
                } else {
                    a.at(p0, p) * b.at(p0, sub(p, r1)) / d
                }
            })
        },
    )
}

/// Becke-partitioned sum of `f` over spherical product grids on `centers`.
pub(crate) fn becke_sum(
    centers: &[[f64; 3]],
    n_radial: usize,
    n_theta: usize,
    scale: f64,
    mut f: impl FnMut([f64; 3]) -> f64,
) -> f64 {
    let radial = GaussLegendre::new(n_radial).semi_infinite(scale);
    let polar = GaussLegendre::new(n_theta);
    let n_phi = 2 * n_theta;
    let dphi = 2.0 * PI / n_phi as f64;
    let trig: Vec<(f64, f64)> = (0..n_phi).map(|k| ((k as f64 + 0.5) * dphi).sin_cos()).collect();
    let mut cell = vec![0.0; centers.len()];
    let mut total = 0.0;
    for (a, c) in centers.iter().enumerate() {
        for &(r, wr) in &radial {
            for (&ct, &wt) in polar.nodes().iter().zip(polar.weights()) {
                let st = (1.0 - ct * ct).sqrt();
                for &(s, co) in &trig {
                    let p = [c[0] + r * st * co, c[1] + r * st * s, c[2] + r * ct];
                    becke_weights(p, centers, &mut cell);
                    if cell[a] == 0.0 {
                        continue;
                    }
                    total += wr * r * r * wt * dphi * cell[a] * f(p);
                }
            }
        }
    }
    total
}

/// `S_N^N'(dR) = (n/p0) ∫ χ_N(r) χ_N'(r + dR) / |r| d³r`, the displaced
/// overlap with `dR = R_k - R_k'`.
pub fn overlap_s(
    bra: QuantumNumbers,
    ket: QuantumNumbers,
    dr: [f64; 3],
    p0: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_p0(p0)?;
    if norm(dr) < ZERO_DISPLACEMENT {
        return Ok(if bra == ket { 1.0 } else { 0.0 });
    }
    let v = two_center_bra(bra, ket, [-dr[0], -dr[1], -dr[2]], p0, spec)?;
    Ok(bra.n as f64 / p0 * v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn qn(n: u32, l: u32, m: i32) -> QuantumNumbers {
        QuantumNumbers::new(n, l, m).unwrap()
    }

    fn s1() -> QuantumNumbers {
        qn(1, 0, 0)
    }

    #[test]
    fn one_center_values() {
        assert_eq!(one_center(s1(), s1(), 2.0), 2.0);
        assert_eq!(one_center(s1(), qn(2, 0, 0), 1.0), 0.0);
        assert_eq!(one_center(qn(2, 1, 0), qn(2, 1, 0), 1.0), 0.5);
    }

    /// Coulomb potential of the normalized 1s density `p0³/π e^{-2 p0 r}`.
    fn ket_closed_form(p0: f64, r: f64) -> f64 {
        (1.0 - (-2.0 * p0 * r).exp() * (1.0 + p0 * r)) / r
    }

    #[test]
    fn two_center_ket_matches_closed_form() {
        let spec = QuadratureSpec { tolerance: 1e-11, ..Default::default() };
        for &r in &[0.5, 1.0, 2.0, 3.7, 6.0, 10.0] {
            for &p0 in &[0.7, 1.0, 2.0] {
                let dir = [0.36, -0.48, 0.8];
                let v = two_center_ket(s1(), s1(), [r * dir[0], r * dir[1], r * dir[2]], p0, &spec).unwrap();
                assert_abs_diff_eq!(v, ket_closed_form(p0, r), epsilon = 1e-8);
            }
        }
    }

    /// `∫ (p0³/π) e^{-p0 r_a} e^{-p0 r_b} / r_a`, from the prolate integral
    /// `(p0³/π)(R²/4) 2π ∫∫ e^{-p0 R λ} (λ - μ) dλ dμ = p0³ R² e^{-a} (1 + a)/a²` with `a = p0 R`.
    fn bra_closed_form(p0: f64, r: f64) -> f64 {
        let a = p0 * r;
        p0 * (-a).exp() * (1.0 + a)
    }

    #[test]
    fn two_center_bra_matches_closed_form() {
        let spec = QuadratureSpec { tolerance: 1e-11, ..Default::default() };
        let v = two_center_bra(s1(), s1(), [0.0, 0.0, 2.0], 1.0, &spec).unwrap();
        assert_abs_diff_eq!(v, bra_closed_form(1.0, 2.0), epsilon = 1e-8);
        let far = two_center_bra(s1(), s1(), [20.0, 0.0, 0.0], 1.0, &spec).unwrap();
        assert!(far.abs() < 1e-6);
    }

    #[test]
    fn zero_displacement_reduces_to_one_center() {
        let spec = QuadratureSpec::default();
        let (a, b) = (qn(2, 1, 1), qn(2, 1, 1));
        assert_eq!(two_center_bra(a, b, [0.0; 3], 1.4, &spec).unwrap(), 0.7);
        assert_eq!(two_center_ket(a, b, [0.0; 3], 1.4, &spec).unwrap(), 0.7);
        assert_eq!(overlap_s(a, b, [0.0; 3], 1.4, &spec).unwrap(), 1.0);
    }

    #[test]
    fn ket_far_field_is_monopole() {
        let spec = QuadratureSpec { tolerance: 1e-10, ..Default::default() };
        let r = 40.0;
        let v = two_center_ket(qn(2, 1, 0), qn(2, 1, 0), [0.0, r, 0.0], 1.5, &spec).unwrap();
        // hydrogenic <r²> = 10/3 at Z = 3, angular factor <P2> = -1/5 off axis
        let quad = -(10.0 / 3.0) / 5.0;
        assert!((v - 1.0 / r - quad / r.powi(3)).abs() < 1e-6, "{v}");
    }

    #[test]
    fn three_center_degenerate_cases() {
        let spec = QuadratureSpec { tolerance: 1e-8, ..Default::default() };
        let (a, b) = (qn(2, 1, 1), qn(2, 0, 0));
        let r = [0.4, 1.1, -0.3];
        assert_eq!(three_center(a, b, [0.0; 3], r, 0.9, &spec).unwrap(), two_center_ket(a, b, r, 0.9, &spec).unwrap());
        assert_eq!(three_center(a, b, r, [0.0; 3], 0.9, &spec).unwrap(), two_center_bra(a, b, r, 0.9, &spec).unwrap());
    }

    #[test]
    fn three_center_is_continuous_at_vanishing_displacement() {
        let spec = QuadratureSpec { radial_points: 40, angular_points: 20, tolerance: 1e-7, max_refinements: 3 };
        let (a, b) = (s1(), qn(2, 1, 0));
        let r2 = [0.0, 0.0, 1.3];
        let limit = two_center_ket(a, b, r2, 1.0, &spec).unwrap();
        let mut last = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3] {
            let v = three_center(a, b, [eps, 0.0, 0.0], r2, 1.0, &spec).unwrap();
            let err = (v - limit).abs();
            assert!(err < last.max(1e-6), "eps={eps}: {err}");
            last = err;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn two_center_bra_is_continuous_in_displacement() {
        let spec = QuadratureSpec { tolerance: 1e-10, ..Default::default() };
        let (a, b) = (qn(2, 1, -1), qn(2, 1, -1));
        let limit = one_center(a, b, 1.2);
        for eps in [1e-1, 1e-2, 1e-3] {
            let v = two_center_bra(a, b, [0.0, eps, 0.0], 1.2, &spec).unwrap();
            assert!((v - limit).abs() < 2.0 * eps, "eps={eps}: {v} vs {limit}");
        }
    }

    #[test]
    fn halving_tolerance_is_self_consistent() {
        let spec = QuadratureSpec { tolerance: 1e-8, ..Default::default() };
        let (a, b) = (qn(3, 1, 1), qn(2, 1, 0));
        let r = [1.2, -0.4, 2.1];
        let v1 = two_center_bra(a, b, r, 0.8, &spec).unwrap();
        let v2 = two_center_bra(a, b, r, 0.8, &spec.tightened()).unwrap();
        assert!((v1 - v2).abs() <= (spec.tolerance * v2.abs()).max(ABS_FLOOR));
    }

    #[test]
    fn unconverged_quadrature_reports_estimates() {
        let spec = QuadratureSpec { radial_points: 8, angular_points: 8, tolerance: 1e-15, max_refinements: 1 };
        let err = three_center(qn(3, 2, 1), qn(2, 1, 0), [1.0, 0.0, 0.0], [0.0, 2.0, 0.0], 1.0, &spec).unwrap_err();
        match err {
            Error::Convergence { last, previous, .. } => assert!(last.is_finite() && previous.is_finite()),
            other => panic!("unexpected {other:?}"),
        }
    }
}
