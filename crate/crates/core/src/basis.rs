//! Sturmian basis functions, their Fock-sphere images and basis-set
//! bookkeeping.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::geometry::{ClusterGeometry, Frame};
use crate::specfun::{
    assoc_laguerre_unchecked, gegenbauer_unchecked, lm_index, ln_factorial, spherical_harmonic, HarmonicTable,
};

/// Highest principal quantum number supported by the basis.
pub const MAX_N: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QuantumNumbers {
    pub n: u32,
    pub l: u32,
    pub m: i32,
}

impl QuantumNumbers {
    pub fn new(n: u32, l: u32, m: i32) -> Result<Self> {
        if n == 0 || n > MAX_N || l >= n || m.unsigned_abs() > l {
            return invalid(format!("invalid quantum numbers (n={n}, l={l}, m={m})"));
        }
        Ok(Self { n, l, m })
    }
}

impl fmt::Display for QuantumNumbers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{:+}", self.n, SHELL_LETTERS[self.l as usize], self.m)
    }
}

const SHELL_LETTERS: [char; 8] = ['S', 'P', 'D', 'F', 'G', 'H', 'I', 'K'];

/// An `(n, l)` shell contributing `2l + 1` orbitals per center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shell {
    pub n: u32,
    pub l: u32,
}

impl Shell {
    pub fn new(n: u32, l: u32) -> Result<Self> {
        QuantumNumbers::new(n, l, 0).map(|_| Self { n, l })
    }

    pub fn size(&self) -> usize {
        2 * self.l as usize + 1
    }

    /// The nested shell sets with 5, 14 and 23 orbitals per center.
    pub fn standard_set(per_center: usize) -> Option<Vec<Shell>> {
        let tokens: &[&str] = match per_center {
            1 => &["1S"],
            5 => &["1S", "2S", "2P"],
            14 => &["1S", "2S", "2P", "3S", "3P", "3D"],
            23 => &["1S", "2S", "2P", "3S", "3P", "3D", "4S", "4P", "4D"],
            _ => return None,
        };
        Some(tokens.iter().map(|t| t.parse().unwrap()).collect())
    }
}

impl FromStr for Shell {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        let letter = t.chars().last().ok_or_else(|| Error::InvalidArgument("empty shell token".into()))?;
        let n: u32 = t[..t.len() - letter.len_utf8()]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad shell token {s:?}")))?;
        let l = SHELL_LETTERS
            .iter()
            .position(|&c| c == letter)
            .ok_or_else(|| Error::InvalidArgument(format!("bad shell letter in {s:?}")))?;
        Shell::new(n, l as u32)
    }
}

impl fmt::Display for Shell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.n, SHELL_LETTERS[self.l as usize])
    }
}

/// Basis function label: ion index and quantum numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OrbitalIndex {
    pub ion: usize,
    pub qn: QuantumNumbers,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    orbitals: Vec<OrbitalIndex>,
    shells: Vec<Shell>,
    shell_label: String,
}

impl BasisSet {
    pub fn orbitals(&self) -> &[OrbitalIndex] {
        &self.orbitals
    }

    pub fn shells(&self) -> &[Shell] {
        &self.shells
    }

    /// `"M<count>"` with the per-center orbital count.
    pub fn shell_label(&self) -> &str {
        &self.shell_label
    }

    pub fn per_center(&self) -> usize {
        self.shells.iter().map(Shell::size).sum()
    }

    pub fn len(&self) -> usize {
        self.orbitals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbitals.is_empty()
    }

    pub fn max_l(&self) -> usize {
        self.shells.iter().map(|s| s.l as usize).max().unwrap_or(0)
    }
}

/// Every `(ion, n, l, m)` combination, ion-major, shells in the given order,
/// `m` ascending.
pub fn build_basis(geometry: &ClusterGeometry, shells: &[Shell]) -> Result<BasisSet> {
    if shells.is_empty() {
        return invalid("shell list is empty");
    }
    for (i, s) in shells.iter().enumerate() {
        Shell::new(s.n, s.l)?;
        if shells[..i].contains(s) {
            return invalid(format!("shell {s} listed twice"));
        }
    }
    let mut orbitals = Vec::new();
    for ion in 0..geometry.len() {
        for s in shells {
            for m in -(s.l as i32)..=(s.l as i32) {
                orbitals.push(OrbitalIndex { ion, qn: QuantumNumbers { n: s.n, l: s.l, m } });
            }
        }
    }
    let per_center: usize = shells.iter().map(Shell::size).sum();
    Ok(BasisSet {
        orbitals,
        shells: shells.to_vec(),
        shell_label: format!("M{per_center}"),
    })
}

/// Signed radial normalization `(-1)^(n-l-1) 2 [(n-l-1)!/(n (n+l)!)]^(1/2)`,
/// without the `p0^(3/2)` factor.
pub(crate) fn radial_norm(n: u32, l: u32) -> f64 {
    let ln = 0.5 * (ln_factorial(n - l - 1) - (n as f64).ln() - ln_factorial(n + l));
    let sign = if (n - l - 1) % 2 == 0 { 1.0 } else { -1.0 };
    sign * 2.0 * ln.exp()
}

/// Radial factor of the Sturmian at `t = p0 r`, excluding `p0^(3/2)`.
#[inline]
pub(crate) fn radial_shape(n: u32, l: u32, t: f64, norm: f64) -> f64 {
    let x = 2.0 * t;
    norm * x.powi(l as i32) * (-t).exp() * assoc_laguerre_unchecked((n - l - 1) as usize, (2 * l + 1) as f64, x)
}

/// Sturmian orbital `χ_N(r - center)` with lab-frame real harmonics.
pub fn sturmian_orbital(qn: QuantumNumbers, p0: f64, r: [f64; 3], center: [f64; 3]) -> Result<f64> {
    if !(p0 > 0.0) {
        return invalid(format!("p0 must be positive, got {p0}"));
    }
    let d = [r[0] - center[0], r[1] - center[1], r[2] - center[2]];
    let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let theta = if dist > 0.0 { (d[2] / dist).clamp(-1.0, 1.0).acos() } else { 0.0 };
    let phi = d[1].atan2(d[0]);
    let y = spherical_harmonic(qn.l as i32, qn.m, theta, phi)?;
    Ok(p0.powf(1.5) * radial_shape(qn.n, qn.l, p0 * dist, radial_norm(qn.n, qn.l)) * y)
}

/// Batched evaluation of all orbitals on one center at local (frame)
/// displacements. Used by the grid assembly and the wavefunction sampler.
#[derive(Debug, Clone)]
pub(crate) struct CenterOrbitals {
    qns: Vec<QuantumNumbers>,
    radial: Vec<(u32, u32, f64)>,
    radial_of: Vec<usize>,
    harmonics: HarmonicTable,
}

impl CenterOrbitals {
    pub fn new(qns: Vec<QuantumNumbers>) -> Self {
        let mut radial: Vec<(u32, u32, f64)> = Vec::new();
        let mut radial_of = Vec::with_capacity(qns.len());
        for q in &qns {
            let pos = radial.iter().position(|&(n, l, _)| n == q.n && l == q.l).unwrap_or_else(|| {
                radial.push((q.n, q.l, radial_norm(q.n, q.l)));
                radial.len() - 1
            });
            radial_of.push(pos);
        }
        let lmax = qns.iter().map(|q| q.l as usize).max().unwrap_or(0);
        Self { qns, radial, radial_of, harmonics: HarmonicTable::new(lmax) }
    }

    pub fn len(&self) -> usize {
        self.qns.len()
    }

    /// Scratch length needed by [`Self::eval`].
    pub fn scratch_len(&self) -> usize {
        let l = self.harmonics.lmax() + 1;
        l * l + self.radial.len()
    }

    /// `out[i] = χ_i(d)` for local displacement `d`.
    pub fn eval(&self, p0: f64, d: [f64; 3], scratch: &mut [f64], out: &mut [f64]) {
        let (ylm, rad) = scratch.split_at_mut({
            let l = self.harmonics.lmax() + 1;
            l * l
        });
        self.harmonics.eval(d[0], d[1], d[2], ylm);
        let t = p0 * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let scale = p0.powf(1.5);
        for (k, &(n, l, norm)) in self.radial.iter().enumerate() {
            rad[k] = scale * radial_shape(n, l, t, norm);
        }
        for (i, q) in self.qns.iter().enumerate() {
            out[i] = rad[self.radial_of[i]] * ylm[lm_index(q.l as usize, q.m)];
        }
    }
}

/// Hyperspherical angles of a momentum vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockAngles {
    pub alpha: f64,
    pub theta: f64,
    pub phi: f64,
}

impl FockAngles {
    /// Angles of momentum `p` (local frame components) on the sphere of
    /// radius `p0`.
    pub fn from_momentum(p: [f64; 3], p0: f64) -> Result<Self> {
        let pm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let alpha = fock_angle(pm, p0)?;
        let theta = if pm > 0.0 { (p[2] / pm).clamp(-1.0, 1.0).acos() } else { 0.0 };
        let phi = p[1].atan2(p[0]).rem_euclid(2.0 * PI);
        Ok(Self { alpha, theta, phi })
    }
}

/// `α = 2 arctan(|p| / p0)`.
pub fn fock_angle(p_mag: f64, p0: f64) -> Result<f64> {
    if !(p0 > 0.0) {
        return invalid(format!("p0 must be positive, got {p0}"));
    }
    if !(p_mag >= 0.0) {
        return invalid(format!("momentum magnitude must be non-negative, got {p_mag}"));
    }
    Ok(2.0 * (p_mag / p0).atan())
}

/// Unit-norm `α` factor on S³: `N_nl sin^l α C_{n-l-1}^{l+1}(cos α)` with
/// `N_nl = 2^l l! [2n (n-l-1)! / (π (n+l)!)]^(1/2)`.
pub(crate) fn fock_radial(n: u32, l: u32, alpha: f64) -> f64 {
    let ln = l as f64 * 2f64.ln()
        + ln_factorial(l)
        + 0.5 * ((2.0 * n as f64).ln() + ln_factorial(n - l - 1) - PI.ln() - ln_factorial(n + l));
    ln.exp()
        * alpha.sin().powi(l as i32)
        * gegenbauer_unchecked((l + 1) as f64, (n - l - 1) as usize, alpha.cos())
}

/// Four-dimensional harmonic `Y_N(Ω) = (-1)^l A_nl(α) Y_lm(θ, φ)`.
pub fn hyperspherical_harmonic(qn: QuantumNumbers, angles: FockAngles) -> f64 {
    let sign = if qn.l % 2 == 0 { 1.0 } else { -1.0 };
    let theta = angles.theta.clamp(0.0, PI);
    let y = spherical_harmonic(qn.l as i32, qn.m, theta, angles.phi).expect("validated quantum numbers");
    sign * fock_radial(qn.n, qn.l, angles.alpha) * y
}

/// `i^k` for integer `k`.
pub(crate) fn i_pow(k: i64) -> Complex64 {
    match k.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Momentum-space amplitude `4 p0^(5/2) (p² + p0²)^(-2) Σ a e^{-i p·R_k} i^l Y_N`
/// for a normalized level. The `i^l` converts the real-orbital phase
/// convention into the Fourier transform of the position-space expansion.
pub fn momentum_wavefunction(
    level: &crate::solver::SpectrumLevel,
    geometry: &ClusterGeometry,
    basis: &BasisSet,
    p: [f64; 3],
) -> Result<Complex64> {
    let coeffs = level
        .coefficients
        .get(level.member)
        .ok_or_else(|| Error::InvalidArgument("level carries no coefficient vector".into()))?;
    momentum_amplitude(coeffs, level.p0, geometry, basis, &geometry.orbital_frame(), p)
}

pub(crate) fn momentum_amplitude(
    coeffs: &[f64],
    p0: f64,
    geometry: &ClusterGeometry,
    basis: &BasisSet,
    frame: &Frame,
    p: [f64; 3],
) -> Result<Complex64> {
    if coeffs.len() != basis.len() {
        return invalid("coefficient length does not match basis");
    }
    let angles = FockAngles::from_momentum(frame.to_local(p), p0)?;
    let p2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
    let pref = 4.0 * p0.powf(2.5) / (p2 + p0 * p0).powi(2);
    let mut sum = Complex64::new(0.0, 0.0);
    for (a, orb) in coeffs.iter().zip(basis.orbitals()) {
        if *a == 0.0 {
            continue;
        }
        let r = geometry.ions()[orb.ion].position;
        let phase = -(p[0] * r[0] + p[1] * r[1] + p[2] * r[2]);
        let y = hyperspherical_harmonic(orb.qn, angles);
        sum += Complex64::from_polar(*a, phase) * i_pow(orb.qn.l as i64) * y;
    }
    Ok(pref * sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;
    use approx::assert_abs_diff_eq;

    fn qn(n: u32, l: u32, m: i32) -> QuantumNumbers {
        QuantumNumbers::new(n, l, m).unwrap()
    }

    #[test]
    fn basis_counts() {
        let g4 = ClusterGeometry::chain_x(2.0, &[-3.9, -1.5, 1.5, 3.9]).unwrap();
        let b = build_basis(&g4, &Shell::standard_set(5).unwrap()).unwrap();
        assert_eq!((b.len(), b.shell_label()), (20, "M5"));
        let g1 = ClusterGeometry::chain_x(2.0, &[0.0]).unwrap();
        assert_eq!(build_basis(&g1, &Shell::standard_set(14).unwrap()).unwrap().len(), 14);
        let g6 = ClusterGeometry::chain_x(2.0, &[-6.0, -4.0, -1.0, 1.0, 4.0, 6.0]).unwrap();
        let b23 = build_basis(&g6, &Shell::standard_set(23).unwrap()).unwrap();
        assert_eq!((b23.len(), b23.shell_label()), (138, "M23"));
        assert!(build_basis(&g1, &[]).is_err());
        assert!("2D".parse::<Shell>().is_err());
        assert_eq!("3p".parse::<Shell>().unwrap(), Shell { n: 3, l: 1 });
    }

    #[test]
    fn orbital_point_values() {
        let c = [0.3, -0.2, 1.0];
        let v = sturmian_orbital(qn(1, 0, 0), 1.0, c, c).unwrap();
        assert_abs_diff_eq!(v, 1.0 / PI.sqrt(), epsilon = 1e-15);
        assert_eq!(sturmian_orbital(qn(2, 1, 0), 1.7, c, c).unwrap(), 0.0);
        assert!(sturmian_orbital(qn(1, 0, 0), 0.0, c, c).is_err());
    }

    fn radial_integral(n: u32, l: u32, n2: u32, p0: f64, power: i32) -> f64 {
        let rule = GaussLegendre::new(120);
        rule.semi_infinite(1.0 / p0)
            .iter()
            .map(|&(r, w)| {
                let t = p0 * r;
                let a = p0.powf(1.5) * radial_shape(n, l, t, radial_norm(n, l));
                let b = p0.powf(1.5) * radial_shape(n2, l, t, radial_norm(n2, l));
                w * r * r * a * b * r.powi(power)
            })
            .sum()
    }

    #[test]
    fn sturmians_are_unit_norm_and_weighted_orthogonal() {
        assert_abs_diff_eq!(radial_integral(1, 0, 1, 0.5, 0), 1.0, epsilon = 1e-12);
        for p0 in [0.5, 1.3, 2.0] {
            for n in 1..=5u32 {
                for l in 0..n {
                    assert_abs_diff_eq!(radial_integral(n, l, n, p0, 0), 1.0, epsilon = 1e-10);
                    for n2 in (l + 1)..=5 {
                        let v = radial_integral(n, l, n2, p0, -1);
                        let expect = if n == n2 { p0 / n as f64 } else { 0.0 };
                        assert!((v - expect).abs() < 1e-8, "n={n} n'={n2} l={l}: {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn fock_angle_limits() {
        assert_eq!(fock_angle(0.0, 2.0).unwrap(), 0.0);
        assert_abs_diff_eq!(fock_angle(1.3, 1.3).unwrap(), PI / 2.0, epsilon = 1e-15);
        let a = fock_angle(1e6 * 0.7, 0.7).unwrap();
        assert!(a < PI && PI - a < 1e-5);
        assert!(fock_angle(1.0, -1.0).is_err());
    }

    #[test]
    fn ground_harmonic_is_constant() {
        let y = hyperspherical_harmonic(qn(1, 0, 0), FockAngles { alpha: 1.1, theta: 0.4, phi: 2.0 });
        assert_abs_diff_eq!(y, 1.0 / (2.0 * PI * PI).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn hyperspherical_parity_in_alpha() {
        let a = FockAngles { alpha: 0.8, theta: 1.0, phi: 0.3 };
        let b = FockAngles { alpha: PI - 0.8, ..a };
        for n in 1..=4u32 {
            for l in 0..n {
                let q = qn(n, l, 0);
                let s = if (n - l - 1) % 2 == 0 { 1.0 } else { -1.0 };
                assert_abs_diff_eq!(hyperspherical_harmonic(q, b), s * hyperspherical_harmonic(q, a), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn hyperspherical_orthonormal() {
        let ga = GaussLegendre::new(24);
        let gt = GaussLegendre::new(12);
        let nphi = 16;
        let mut all = Vec::new();
        for n in 1..=4u32 {
            for l in 0..n {
                for m in -(l as i32)..=(l as i32) {
                    all.push(qn(n, l, m));
                }
            }
        }
        let mut gram = vec![0.0; all.len() * all.len()];
        let mut vals = vec![0.0; all.len()];
        for (alpha, wa) in ga.on_interval(0.0, PI) {
            for (ct, wt) in gt.on_interval(-1.0, 1.0) {
                for k in 0..nphi {
                    let phi = 2.0 * PI * k as f64 / nphi as f64;
                    let ang = FockAngles { alpha, theta: ct.acos(), phi };
                    let w = wa * alpha.sin().powi(2) * wt * 2.0 * PI / nphi as f64;
                    for (v, q) in vals.iter_mut().zip(&all) {
                        *v = hyperspherical_harmonic(*q, ang);
                    }
                    for i in 0..all.len() {
                        for j in 0..all.len() {
                            gram[i * all.len() + j] += w * vals[i] * vals[j];
                        }
                    }
                }
            }
        }
        for i in 0..all.len() {
            for j in 0..all.len() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((gram[i * all.len() + j] - e).abs() <= 1e-10, "{} {}", all[i], all[j]);
            }
        }
    }

    #[test]
    fn center_orbitals_match_scalar_evaluation() {
        let qns: Vec<_> = Shell::standard_set(23)
            .unwrap()
            .iter()
            .flat_map(|s| (-(s.l as i32)..=s.l as i32).map(move |m| qn(s.n, s.l, m)))
            .collect();
        let set = CenterOrbitals::new(qns.clone());
        let mut scratch = vec![0.0; set.scratch_len()];
        let mut out = vec![0.0; set.len()];
        let d = [0.4, -1.1, 0.7];
        set.eval(1.3, d, &mut scratch, &mut out);
        for (i, q) in qns.iter().enumerate() {
            let s = sturmian_orbital(*q, 1.3, d, [0.0; 3]).unwrap();
            assert_abs_diff_eq!(out[i], s, epsilon = 1e-13);
        }
    }
}
