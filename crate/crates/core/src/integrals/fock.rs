//! Displaced overlap evaluated on the Fock sphere.
//!
//! The plane wave is expanded in spherical waves,
//! `e^{i p·d} = 4π Σ_L i^L j_L(|p||d|) Σ_M Y_LM(p̂) Y_LM(d̂)`,
//! so the two-sphere part reduces to real Gaunt coefficients (computed by
//! an exact product rule) and the remaining α integral becomes, with
//! `t = tan(α/2)`,
//! `∫_0^∞ 8t²/(1+t²)³ A_nl A_n'l' j_L(p0 |d| t) dt`,
//! integrated on uniform Gauss panels up to a cutoff fixed by an
//! analytic tail bound.
//!
//! With the orbital sign conventions used here the displaced overlap is
//! `S = (-i)^(l-l') ∫ dΩ Y_N Y_N' e^{i p·d}`, which is real.

use std::f64::consts::PI;

use crate::basis::{fock_radial, QuantumNumbers};
use crate::error::{invalid, Error, Result};
use crate::integrals::{converged, QuadratureSpec};
use crate::quadrature::{norm, GaussLegendre};
use crate::specfun::{lm_index, spherical_bessel_j, HarmonicTable};

/// Largest `p0 |dR|` handled before the α integrand becomes too oscillatory.
pub const MAX_OSCILLATION: f64 = 100.0;

/// Real Gaunt coefficient `∫ Y_l1m1 Y_l2m2 Y_LM dΩ` for all `(L, M)` up to
/// `l1 + l2`, indexed by `lm_index(L, M)`.
fn gaunt_row(l1: usize, m1: i32, l2: usize, m2: i32) -> Vec<f64> {
    let lmax = l1 + l2;
    let table = HarmonicTable::new(lmax);
    let n_theta = lmax + 2;
    let n_phi = 2 * lmax + 2;
    let rule = GaussLegendre::new(n_theta);
    let size = (lmax + 1) * (lmax + 1);
    let mut y = vec![0.0; size];
    let mut out = vec![0.0; size];
    for (&ct, &wt) in rule.nodes().iter().zip(rule.weights()) {
        let st = (1.0 - ct * ct).sqrt();
        for k in 0..n_phi {
            let phi = 2.0 * PI * k as f64 / n_phi as f64;
            table.eval(st * phi.cos(), st * phi.sin(), ct, &mut y);
            let w = wt * 2.0 * PI / n_phi as f64 * y[lm_index(l1, m1)] * y[lm_index(l2, m2)];
            for (o, v) in out.iter_mut().zip(&y) {
                *o += w * v;
            }
        }
    }
    out
}

/// `sup |A_nl(α)|` bound used for the tail estimate.
fn radial_bound(n: u32, l: u32) -> f64 {
    (0..=400)
        .map(|i| fock_radial(n, l, PI * i as f64 / 400.0).abs())
        .fold(0.0, f64::max)
        * 1.1
}

/// `∫_0^T 8t²/(1+t²)³ A A' j_L(c t) dt` on `panels` uniform panels.
fn alpha_integral(bra: QuantumNumbers, ket: QuantumNumbers, order: usize, c: f64, cutoff: f64, panels: usize) -> f64 {
    let rule = GaussLegendre::new(16);
    let width = cutoff / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let a = k as f64 * width;
        for (t, w) in rule.on_interval(a, a + width) {
            let u = 1.0 + t * t;
            let alpha = 2.0 * t.atan();
            let f = 8.0 * t * t / (u * u * u)
                * fock_radial(bra.n, bra.l, alpha)
                * fock_radial(ket.n, ket.l, alpha)
                * spherical_bessel_j(order, c * t);
            total += w * f;
        }
    }
    total
}

/// `S_N^N'(dR)` from the hyperspherical integral over the Fock sphere.
pub fn overlap_via_fock_sphere(
    bra: QuantumNumbers,
    ket: QuantumNumbers,
    dr: [f64; 3],
    p0: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    spec.validate()?;
    if !(p0 > 0.0) {
        return invalid(format!("p0 must be positive, got {p0}"));
    }
    let d = norm(dr);
    let c = p0 * d;
    if c > MAX_OSCILLATION {
        return Err(Error::Convergence {
            what: format!("Fock-sphere overlap at p0|dR| = {c:.3} (limit {MAX_OSCILLATION})"),
            last: f64::NAN,
            previous: f64::NAN,
        });
    }
    let (l1, l2) = (bra.l as usize, ket.l as usize);
    let gaunt = gaunt_row(l1, bra.m, l2, ket.m);
    let lmax = l1 + l2;
    let table = HarmonicTable::new(lmax);
    let mut ydir = vec![0.0; (lmax + 1) * (lmax + 1)];
    if d > 0.0 {
        table.eval(dr[0], dr[1], dr[2], &mut ydir);
    }

    // Tail beyond T: |integrand| ≤ 8 K² t^-4 min(1, 1/(c t)).
    let k2 = radial_bound(bra.n, bra.l) * radial_bound(ket.n, ket.l);
    let budget = 1e-3 * spec.tolerance;
    let t_plain = (8.0 * k2 / (3.0 * budget)).cbrt();
    let cutoff = if c > 0.0 { t_plain.min((2.0 * k2 / (c * budget)).powf(0.25)) } else { t_plain };
    let base_panels = ((cutoff * c.max(1.0) / PI).ceil() as usize).max(spec.radial_points);

    let mut total = 0.0;
    for order in 0..=lmax {
        if (order + l1 + l2) % 2 == 1 {
            continue;
        }
        let angular: f64 = (-(order as i32)..=order as i32)
            .map(|m| gaunt[lm_index(order, m)] * if d > 0.0 { ydir[lm_index(order, m)] } else { 0.0 })
            .sum();
        let angular = if d > 0.0 {
            angular
        } else if order == 0 {
            // j_0(0) = 1 and Σ_M Y_00² = 1/(4π)
            gaunt[0] / (4.0 * PI).sqrt()
        } else {
            0.0
        };
        if angular.abs() < 1e-15 {
            continue;
        }
        let mut panels = base_panels;
        let mut prev = alpha_integral(bra, ket, order, c, cutoff, panels);
        let mut radial = None;
        for _ in 0..spec.max_refinements.max(1) {
            panels *= 2;
            let cur = alpha_integral(bra, ket, order, c, cutoff, panels);
            if converged(cur, prev, spec.tolerance) {
                radial = Some(cur);
                break;
            }
            prev = cur;
        }
        let radial = radial.ok_or_else(|| Error::Convergence {
            what: format!("Fock-sphere α integral for <{bra}|{ket}> at L={order}"),
            last: prev,
            previous: f64::NAN,
        })?;
        // i^(L + l - l') is real because L + l + l' is even
        let phase = if ((order + l1) as i64 - l2 as i64).rem_euclid(4) == 0 { 1.0 } else { -1.0 };
        total += 4.0 * PI * phase * angular * radial;
    }
    Ok(total)
}
