//! The energy matrix `H(p0)` and its singularity diagnostics.
//!
//! Writing `W^C_ij = <χ_i| 1/|r - R_C| |χ_j>` for each ion `C`, the inner
//! sums over intermediate orbitals collapse exactly and
//!
//! ```text
//! H_ij = n_i W^{k_i}_ij - (1/p0) Σ_C Z_C W^C_ij,
//! ```
//!
//! where `n_i W^{k_i}_ij = p0 S_ij` is the displaced overlap term. All the
//! `W^C` come out of one molecular quadrature grid per `p0`: a Becke
//! partition with a spherical sub-grid on every ion. Chains use a meridian
//! `(ρ, z)` grid with the azimuth done analytically, which also splits `H`
//! into independent blocks per `|m|`, the `±m` blocks being identical.
//!
//! [`assemble_reference`] builds the same matrix entry by entry from the
//! one-, two- and three-center integrals, and [`assemble_truncated`] from
//! the untruncated-in-principle double sum over displaced overlaps cut at a
//! finite principal quantum number.

use std::io::Write;

use nalgebra::DMatrix;

use crate::basis::{BasisSet, CenterOrbitals, QuantumNumbers};
use crate::error::{invalid, Error, Result};
use crate::geometry::{ClusterGeometry, Frame};
use crate::integrals::{IntegralCache, IntegralKey, IntegralKind, QuadratureSpec};
use crate::quadrature::{becke_weights, GaussLegendre};

/// Molecular grid resolution for batched assembly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblySpec {
    pub radial_points: usize,
    pub polar_points: usize,
}

impl Default for AssemblySpec {
    fn default() -> Self {
        Self { radial_points: 80, polar_points: 40 }
    }
}

impl AssemblySpec {
    pub fn validate(&self) -> Result<()> {
        if self.radial_points < 8 || self.polar_points < 8 {
            return invalid("assembly grid needs at least 8 points per dimension");
        }
        Ok(())
    }
}

/// Dense `H(p0)` in basis order.
#[derive(Debug, Clone)]
pub struct EnergyMatrix {
    pub p0: f64,
    pub entries: DMatrix<f64>,
}

impl EnergyMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Row-major text dump at full precision.
    pub fn write_dump(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# p0 {:.17e} dim {}", self.p0, self.dim())?;
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim()).map(|j| format!("{:.17e}", self.entries[(i, j)])).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Orbitals that couple only among themselves.
#[derive(Debug, Clone)]
pub struct SectorLayout {
    /// `|m|` for axial geometries, `None` for the single full block.
    pub abs_m: Option<u32>,
    /// Basis indices of the block (the `+|m|` orbitals for axial blocks).
    pub indices: Vec<usize>,
    /// Basis indices of the `-|m|` copy, in matching order.
    pub partner: Option<Vec<usize>>,
}

impl SectorLayout {
    pub fn multiplicity(&self) -> usize {
        if self.partner.is_some() {
            2
        } else {
            1
        }
    }
}

/// One diagonal block of `H` and of the plain overlap matrix at `p0`.
#[derive(Debug, Clone)]
pub struct SectorMatrix {
    pub h: DMatrix<f64>,
    pub overlap: DMatrix<f64>,
}

/// Batched assembler bound to one geometry and basis.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    geometry: ClusterGeometry,
    basis: BasisSet,
    frame: Frame,
    centers: Vec<[f64; 3]>,
    axial: bool,
    layouts: Vec<SectorLayout>,
    center_orbitals: CenterOrbitals,
    spec: AssemblySpec,
}

impl Hamiltonian {
    pub fn new(geometry: &ClusterGeometry, basis: &BasisSet, spec: AssemblySpec) -> Result<Self> {
        spec.validate()?;
        let per = basis.per_center();
        if basis.len() != per * geometry.len() {
            return invalid("basis was built for a different number of ions");
        }
        let frame = geometry.orbital_frame();
        let axial = geometry.is_axial();
        let centers: Vec<[f64; 3]> = match geometry.axial_coordinates() {
            Some(zs) => zs.iter().map(|&z| [0.0, 0.0, z]).collect(),
            None => geometry.positions().iter().map(|&p| frame.to_local(p)).collect(),
        };
        let local: Vec<QuantumNumbers> = basis.orbitals()[..per].iter().map(|o| o.qn).collect();
        let layouts = if axial {
            (0..=basis.max_l() as u32)
                .map(|am| {
                    let pick = |m: i32| -> Vec<usize> {
                        basis
                            .orbitals()
                            .iter()
                            .enumerate()
                            .filter(|(_, o)| o.qn.m == m)
                            .map(|(i, _)| i)
                            .collect()
                    };
                    SectorLayout {
                        abs_m: Some(am),
                        indices: pick(am as i32),
                        partner: (am > 0).then(|| pick(-(am as i32))),
                    }
                })
                .collect()
        } else {
            vec![SectorLayout { abs_m: None, indices: (0..basis.len()).collect(), partner: None }]
        };
        Ok(Self {
            geometry: geometry.clone(),
            basis: basis.clone(),
            frame,
            centers,
            axial,
            layouts,
            center_orbitals: CenterOrbitals::new(local),
            spec,
        })
    }

    pub fn geometry(&self) -> &ClusterGeometry {
        &self.geometry
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn is_axial(&self) -> bool {
        self.axial
    }

    pub fn spec(&self) -> AssemblySpec {
        self.spec
    }

    pub fn layouts(&self) -> &[SectorLayout] {
        &self.layouts
    }

    /// Ion positions in the orbital frame, as used by the assembly grid.
    pub(crate) fn local_centers(&self) -> &[[f64; 3]] {
        &self.centers
    }

    pub(crate) fn center_orbitals(&self) -> &CenterOrbitals {
        &self.center_orbitals
    }

    /// Quadrature points (orbital frame) and weights. Axial grids lie in
    /// the `y = 0` half plane and carry no azimuthal factor.
    pub(crate) fn grid(&self, p0: f64) -> (Vec<[f64; 3]>, Vec<f64>) {
        let radial = GaussLegendre::new(self.spec.radial_points).semi_infinite(1.0 / p0);
        let polar = GaussLegendre::new(self.spec.polar_points);
        let n_phi = if self.axial { 1 } else { 2 * self.spec.polar_points };
        let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        let mut pts = Vec::new();
        let mut wts = Vec::new();
        let mut cell = vec![0.0; self.centers.len()];
        for (a, c) in self.centers.iter().enumerate() {
            for &(r, wr) in &radial {
                for (&ct, &wt) in polar.nodes().iter().zip(polar.weights()) {
                    let st = (1.0 - ct * ct).sqrt();
                    for k in 0..n_phi {
                        let (s, co) = if self.axial { (0.0, 1.0) } else { ((k as f64 + 0.5) * dphi).sin_cos() };
                        let p = [c[0] + r * st * co, c[1] + r * st * s, c[2] + r * ct];
                        becke_weights(p, &self.centers, &mut cell);
                        let w = wr * r * r * wt * cell[a] * if self.axial { 1.0 } else { dphi };
                        if w != 0.0 {
                            pts.push(p);
                            wts.push(w);
                        }
                    }
                }
            }
        }
        (pts, wts)
    }

    /// Orbital values: one column per grid point, rows in basis order.
    fn orbital_table(&self, p0: f64, pts: &[[f64; 3]]) -> DMatrix<f64> {
        let per = self.center_orbitals.len();
        let nb = self.basis.len();
        let mut table = DMatrix::zeros(nb, pts.len());
        let mut scratch = vec![0.0; self.center_orbitals.scratch_len()];
        let mut vals = vec![0.0; per];
        for (j, p) in pts.iter().enumerate() {
            for (k, c) in self.centers.iter().enumerate() {
                let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
                self.center_orbitals.eval(p0, d, &mut scratch, &mut vals);
                for (i, v) in vals.iter().enumerate() {
                    table[(k * per + i, j)] = *v;
                }
            }
        }
        table
    }

    /// Diagonal blocks of `H` and of the overlap, one per layout.
    pub fn sector_matrices(&self, p0: f64) -> Result<Vec<SectorMatrix>> {
        self.blocks(p0, None)
    }

    /// A single diagonal block.
    pub fn sector_matrix(&self, p0: f64, sector: usize) -> Result<SectorMatrix> {
        if sector >= self.layouts.len() {
            return invalid(format!("no sector {sector}"));
        }
        Ok(self.blocks(p0, Some(sector))?.pop().unwrap())
    }

    fn blocks(&self, p0: f64, only: Option<usize>) -> Result<Vec<SectorMatrix>> {
        if !(p0 > 0.0) || !p0.is_finite() {
            return invalid(format!("p0 must be positive, got {p0}"));
        }
        let (pts, wts) = self.grid(p0);
        let table = self.orbital_table(p0, &pts);
        let ions = self.geometry.ions();
        let mut out = Vec::with_capacity(self.layouts.len());
        for (si, layout) in self.layouts.iter().enumerate() {
            if only.is_some_and(|o| o != si) {
                continue;
            }
            let azimuth = match layout.abs_m {
                Some(0) => 2.0 * std::f64::consts::PI,
                Some(_) => std::f64::consts::PI,
                None => 1.0,
            };
            let nb = layout.indices.len();
            let phi = table.select_rows(layout.indices.iter());
            let mut scaled = phi.clone();
            for (j, &w) in wts.iter().enumerate() {
                scaled.column_mut(j).scale_mut(w * azimuth);
            }
            let overlap = &phi * scaled.transpose();
            let mut coulomb = Vec::with_capacity(ions.len());
            for c in &self.centers {
                let mut s = scaled.clone();
                for (j, p) in pts.iter().enumerate() {
                    let d = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt();
                    s.column_mut(j).scale_mut(if d > 0.0 { 1.0 / d } else { 0.0 });
                }
                coulomb.push(&phi * s.transpose());
            }
            let mut h = DMatrix::zeros(nb, nb);
            for (a, &i) in layout.indices.iter().enumerate() {
                let orb = self.basis.orbitals()[i];
                let n = orb.qn.n as f64;
                for b in 0..nb {
                    let mut v = n * coulomb[orb.ion][(a, b)];
                    for (ion, w) in ions.iter().zip(&coulomb) {
                        v -= ion.charge * w[(a, b)] / p0;
                    }
                    h[(a, b)] = v;
                }
            }
            if h.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite H entry at p0 = {p0}")));
            }
            out.push(SectorMatrix { h, overlap });
        }
        Ok(out)
    }

    /// Full matrix in basis order.
    pub fn assemble(&self, p0: f64) -> Result<EnergyMatrix> {
        let (h, _) = self.full(p0)?;
        Ok(EnergyMatrix { p0, entries: h })
    }

    /// Full `H` and plain overlap in basis order.
    pub fn full(&self, p0: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let nb = self.basis.len();
        let mut h = DMatrix::zeros(nb, nb);
        let mut o = DMatrix::zeros(nb, nb);
        for (layout, block) in self.layouts.iter().zip(self.sector_matrices(p0)?) {
            let mut place = |idx: &[usize]| {
                for (a, &i) in idx.iter().enumerate() {
                    for (b, &j) in idx.iter().enumerate() {
                        h[(i, j)] = block.h[(a, b)];
                        o[(i, j)] = block.overlap[(a, b)];
                    }
                }
            };
            place(&layout.indices);
            if let Some(p) = &layout.partner {
                place(p);
            }
        }
        Ok((h, o))
    }
}

/// Convenience wrapper: batched assembly with the given grid.
pub fn assemble(geometry: &ClusterGeometry, basis: &BasisSet, p0: f64, spec: AssemblySpec) -> Result<EnergyMatrix> {
    Hamiltonian::new(geometry, basis, spec)?.assemble(p0)
}

fn assembly_error(i: usize, j: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Assembly { bra: i, ket: j, source: Box::new(e) }
}

fn diff(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Entry-by-entry assembly from the one-, two- and three-center integrals
/// with lab-frame harmonics, memoized through `cache`.
pub fn assemble_reference(
    geometry: &ClusterGeometry,
    basis: &BasisSet,
    p0: f64,
    spec: &QuadratureSpec,
    cache: &IntegralCache,
) -> Result<EnergyMatrix> {
    if !(p0 > 0.0) {
        return invalid(format!("p0 must be positive, got {p0}"));
    }
    let ions = geometry.ions();
    let orbs = basis.orbitals();
    let nb = orbs.len();
    let mut h = DMatrix::zeros(nb, nb);
    for i in 0..nb {
        for j in 0..nb {
            let (oi, oj) = (orbs[i], orbs[j]);
            let (k, kp) = (oi.ion, oj.ion);
            let (rk, rkp) = (ions[k].position, ions[kp].position);
            let s_key = IntegralKey {
                kind: if k == kp { IntegralKind::OneCenter } else { IntegralKind::TwoCenterBra },
                bra: oi.qn,
                ket: oj.qn,
                r1: if k == kp { [0.0; 3] } else { diff(rkp, rk) },
                r2: [0.0; 3],
                p0,
            };
            let s = oi.qn.n as f64 / p0 * cache.get_or_compute(&s_key, spec).map_err(assembly_error(i, j))?;
            let mut v = p0 * s;
            for (kpp, ion) in ions.iter().enumerate() {
                let t = if kpp == k {
                    s / oi.qn.n as f64
                } else if kpp == kp {
                    s / oj.qn.n as f64
                } else {
                    let key = if k == kp {
                        IntegralKey {
                            kind: IntegralKind::TwoCenterKet,
                            bra: oi.qn,
                            ket: oj.qn,
                            r1: [0.0; 3],
                            r2: diff(ion.position, rk),
                            p0,
                        }
                    } else {
                        IntegralKey {
                            kind: IntegralKind::ThreeCenter,
                            bra: oi.qn,
                            ket: oj.qn,
                            r1: diff(rkp, rk),
                            r2: diff(ion.position, rk),
                            p0,
                        }
                    };
                    cache.get_or_compute(&key, spec).map_err(assembly_error(i, j))? / p0
                };
                v -= ion.charge * t;
            }
            h[(i, j)] = v;
        }
    }
    Ok(EnergyMatrix { p0, entries: h })
}

/// Every `(n, l, m)` with `n ≤ n_max`.
pub fn intermediate_set(n_max: u32) -> Vec<QuantumNumbers> {
    let mut out = Vec::new();
    for n in 1..=n_max {
        for l in 0..n {
            for m in -(l as i32)..=(l as i32) {
                out.push(QuantumNumbers { n, l, m });
            }
        }
    }
    out
}

/// `H` from the double sum over displaced overlaps, with the intermediate
/// orbitals cut at principal quantum number `n_max`.
pub fn assemble_truncated(
    geometry: &ClusterGeometry,
    basis: &BasisSet,
    p0: f64,
    n_max: u32,
    spec: &QuadratureSpec,
    cache: &IntegralCache,
) -> Result<EnergyMatrix> {
    let ions = geometry.ions();
    let orbs = basis.orbitals();
    let nb = orbs.len();
    let mids = intermediate_set(n_max);
    let overlap = |bra: QuantumNumbers, ket: QuantumNumbers, from: usize, to: usize| -> Result<f64> {
        if from == to {
            return Ok(if bra == ket { 1.0 } else { 0.0 });
        }
        // S(R_from - R_to) = (n/p0) <bra| 1/r |ket(R_to - R_from)>
        let key = IntegralKey {
            kind: IntegralKind::TwoCenterBra,
            bra,
            ket,
            r1: diff(ions[to].position, ions[from].position),
            r2: [0.0; 3],
            p0,
        };
        Ok(bra.n as f64 / p0 * cache.get_or_compute(&key, spec)?)
    };
    let mut h = DMatrix::zeros(nb, nb);
    for i in 0..nb {
        for j in 0..nb {
            let (oi, oj) = (orbs[i], orbs[j]);
            let mut v = p0 * overlap(oi.qn, oj.qn, oi.ion, oj.ion).map_err(assembly_error(i, j))?;
            for (kpp, ion) in ions.iter().enumerate() {
                let mut t = 0.0;
                for &mid in &mids {
                    let a = overlap(oi.qn, mid, oi.ion, kpp).map_err(assembly_error(i, j))?;
                    if a == 0.0 {
                        continue;
                    }
                    let b = overlap(mid, oj.qn, kpp, oj.ion).map_err(assembly_error(i, j))?;
                    t += a * b / mid.n as f64;
                }
                v -= ion.charge * t;
            }
            h[(i, j)] = v;
        }
    }
    Ok(EnergyMatrix { p0, entries: h })
}

/// `log|det H|`, the sign of `det H`, and the smallest singular value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singularity {
    pub log_abs_det: f64,
    pub det_sign: f64,
    pub sigma_min: f64,
}

pub fn singularity_indicator(h: &EnergyMatrix) -> Result<Singularity> {
    let m = &h.entries;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let lu = m.clone().lu();
    let mut sign: f64 = lu.p().determinant();
    let mut log_abs = 0.0;
    for d in lu.u().diagonal().iter() {
        if *d == 0.0 {
            log_abs = f64::NEG_INFINITY;
        } else {
            log_abs += d.abs().ln();
        }
        sign *= d.signum();
    }
    if log_abs == f64::NEG_INFINITY {
        sign = 0.0;
    }
    let sv = m.clone().singular_values();
    let sigma_min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(Singularity { log_abs_det: log_abs, det_sign: sign, sigma_min })
}
