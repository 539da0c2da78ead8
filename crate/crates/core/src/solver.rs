//! Roots of `det H(p0) = 0`, their null vectors, and the resulting levels
//! and wave functions.
//!
//! `H` is symmetric in exact arithmetic, so the scan works with the
//! eigenvalues of its symmetric part block by block: a root of the
//! determinant is a zero crossing of one eigenvalue branch. Counting
//! crossings per branch (rather than tracking only the sign of the
//! determinant) keeps pairs of nearby roots, which would leave the
//! determinant sign unchanged, apart. Local minima of `min |λ|` without a
//! crossing are examined as well and accepted only if the smallest
//! singular value passes the null threshold.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use log::{debug, warn};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::basis::{build_basis, BasisSet, CenterOrbitals};
use crate::error::{invalid, Error, Result};
use crate::geometry::{ClusterGeometry, Frame, Ion};
use crate::hamiltonian::{assemble_reference, AssemblySpec, Hamiltonian, SectorMatrix};
use crate::integrals::{IntegralCache, QuadratureSpec};
use crate::par::Execution;

/// Scan window and acceptance thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig {
    pub p0_min: f64,
    pub p0_max: f64,
    pub samples: usize,
    pub refine_tolerance: f64,
    pub null_threshold: f64,
    /// Stop refining once this many levels (counting degeneracy) are found,
    /// working down from the deepest; the last multiplet is completed.
    pub max_levels: Option<usize>,
}

impl ScanConfig {
    /// `[0.05, ΣZ + 1]` with 400 samples.
    pub fn for_geometry(geometry: &ClusterGeometry) -> Self {
        Self {
            p0_min: 0.05,
            p0_max: geometry.total_charge() + 1.0,
            samples: 400,
            refine_tolerance: 1e-8,
            null_threshold: 1e-8,
            max_levels: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0_min > 0.0) || !(self.p0_min < self.p0_max) || !self.p0_max.is_finite() {
            return invalid(format!("scan window [{}, {}] is not a positive interval", self.p0_min, self.p0_max));
        }
        if self.samples < 10 {
            return invalid("scan needs at least 10 samples");
        }
        if !(self.refine_tolerance > 0.0) || !(self.null_threshold > 0.0) {
            return invalid("scan thresholds must be positive");
        }
        Ok(())
    }
}

/// One converged energy level. Degenerate partners share energy and
/// coefficient set but get their own index.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumLevel {
    pub index: usize,
    pub energy: f64,
    pub p0: f64,
    /// Orthonormal (in `L²`) coefficient vectors spanning the multiplet.
    pub coefficients: Vec<Vec<f64>>,
    pub degeneracy: usize,
    /// Which multiplet vector belongs to this index.
    pub member: usize,
    /// `|m|` of the block that produced the root, for chains.
    pub abs_m: Option<u32>,
    /// `‖H a‖ / (σ_max ‖a‖)` at the root, worst over the multiplet.
    pub residual: f64,
    /// Set when refinement stopped before reaching the tolerance.
    pub diagnostic: Option<String>,
}

impl SpectrumLevel {
    /// This level's own coefficient vector.
    pub fn vector(&self) -> &[f64] {
        &self.coefficients[self.member]
    }
}

/// Scan-and-refine driver with a per-`p0` memo of assembled blocks.
pub struct Solver {
    ham: Hamiltonian,
    exec: Execution,
    memo: Mutex<HashMap<(u64, usize), SectorMatrix>>,
    reference: Option<Reference>,
}

/// Entry-by-entry assembly from the individual integrals, done on a copy
/// of the geometry expressed in the orbital frame so that its blocks line
/// up with the batched layouts.
struct Reference {
    geometry: ClusterGeometry,
    basis: BasisSet,
    spec: QuadratureSpec,
    cache: Arc<IntegralCache>,
}

/// Refined root before null-space extraction.
#[derive(Debug, Clone)]
struct Root {
    p0: f64,
    sector: usize,
    diagnostic: Option<String>,
}

impl Solver {
    pub fn new(geometry: &ClusterGeometry, basis: &BasisSet, spec: AssemblySpec, exec: Execution) -> Result<Self> {
        Ok(Self { ham: Hamiltonian::new(geometry, basis, spec)?, exec, memo: Mutex::new(HashMap::new()), reference: None })
    }

    /// Like [`Solver::new`], but `H` comes from the individual one-, two-
    /// and three-center integrals, memoized in `cache`. Much slower; meant
    /// for small systems and for checking the batched assembly.
    pub fn with_reference(
        geometry: &ClusterGeometry,
        basis: &BasisSet,
        spec: AssemblySpec,
        exec: Execution,
        quadrature: QuadratureSpec,
        cache: Arc<IntegralCache>,
    ) -> Result<Self> {
        quadrature.validate()?;
        let mut solver = Self::new(geometry, basis, spec, exec)?;
        let ions = geometry
            .ions()
            .iter()
            .zip(solver.ham.local_centers())
            .map(|(ion, &position)| Ion { charge: ion.charge, position })
            .collect();
        let local = ClusterGeometry::new(ions)?;
        let local_basis = build_basis(&local, basis.shells())?;
        solver.reference = Some(Reference { geometry: local, basis: local_basis, spec: quadrature, cache });
        Ok(solver)
    }

    /// Assembles the requested blocks, symmetrized.
    fn compute(&self, p0: f64, only: Option<usize>) -> Result<Vec<(usize, SectorMatrix)>> {
        let mut blocks: Vec<(usize, SectorMatrix)> = match only {
            Some(s) => vec![(s, self.ham.sector_matrix(p0, s)?)],
            None => self.ham.sector_matrices(p0)?.into_iter().enumerate().collect(),
        };
        if let Some(r) = &self.reference {
            let full = assemble_reference(&r.geometry, &r.basis, p0, &r.spec, &r.cache)?.entries;
            for (s, b) in blocks.iter_mut() {
                let idx = &self.ham.layouts()[*s].indices;
                b.h = full.select_rows(idx.iter()).select_columns(idx.iter());
            }
        }
        for (_, b) in blocks.iter_mut() {
            symmetrize(&mut b.h);
            symmetrize(&mut b.overlap);
        }
        Ok(blocks)
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.ham
    }

    fn block(&self, p0: f64, sector: usize) -> Result<SectorMatrix> {
        let key = (p0.to_bits(), sector);
        if let Some(b) = self.memo.lock().unwrap().get(&key) {
            return Ok(b.clone());
        }
        let (_, b) = self.compute(p0, Some(sector))?.pop().unwrap();
        self.memo.lock().unwrap().insert(key, b.clone());
        Ok(b)
    }

    fn all_blocks(&self, p0: f64) -> Result<Vec<SectorMatrix>> {
        let blocks = self.compute(p0, None)?;
        let mut memo = self.memo.lock().unwrap();
        for (s, b) in &blocks {
            memo.insert((p0.to_bits(), *s), b.clone());
        }
        Ok(blocks.into_iter().map(|(_, b)| b).collect())
    }

    fn branch(&self, p0: f64, sector: usize, j: usize) -> Result<f64> {
        Ok(sorted_eigenvalues(&self.block(p0, sector)?.h)[j])
    }

    /// All levels in the window, ascending in energy.
    pub fn find_levels(&self, scan: &ScanConfig) -> Result<Vec<SpectrumLevel>> {
        scan.validate()?;
        let n = scan.samples;
        let grid: Vec<f64> =
            (0..n).map(|i| scan.p0_min + (scan.p0_max - scan.p0_min) * i as f64 / (n - 1) as f64).collect();
        let spectra: Vec<Result<Vec<Vec<f64>>>> = self.exec.map_slice(&grid, |&p0| {
            Ok(self.all_blocks(p0)?.iter().map(|b| sorted_eigenvalues(&b.h)).collect())
        });
        let spectra: Vec<Vec<Vec<f64>>> = spectra.into_iter().collect::<Result<_>>()?;
        let nsec = self.ham.layouts().len();

        #[derive(Clone, Copy)]
        enum Candidate {
            Crossing { sector: usize, branch: usize, lo: f64, hi: f64 },
            Minimum { sector: usize, lo: f64, hi: f64 },
        }
        let mut cands = Vec::new();
        for s in 0..nsec {
            let dim = spectra[0][s].len();
            let mut crossed = vec![false; n];
            for i in 0..n - 1 {
                for j in 0..dim {
                    let (a, b) = (spectra[i][s][j], spectra[i + 1][s][j]);
                    if a == 0.0 || a.signum() != b.signum() {
                        cands.push(Candidate::Crossing { sector: s, branch: j, lo: grid[i], hi: grid[i + 1] });
                        crossed[i] = true;
                    }
                }
            }
            let smallest: Vec<f64> =
                (0..n).map(|i| spectra[i][s].iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))).collect();
            for i in 1..n - 1 {
                if smallest[i] < smallest[i - 1] && smallest[i] < smallest[i + 1] && !crossed[i - 1] && !crossed[i] {
                    cands.push(Candidate::Minimum { sector: s, lo: grid[i - 1], hi: grid[i + 1] });
                }
            }
        }
        // deepest first so a level cap can stop early
        let upper = |c: &Candidate| match *c {
            Candidate::Crossing { hi, .. } | Candidate::Minimum { hi, .. } => hi,
        };
        cands.sort_by(|a, b| upper(b).total_cmp(&upper(a)));

        let refine = |c: &Candidate| -> Result<Option<Root>> {
            match *c {
                Candidate::Crossing { sector, branch, lo, hi } => self.refine_crossing(scan, sector, branch, lo, hi),
                Candidate::Minimum { sector, lo, hi } => self.refine_minimum(scan, sector, lo, hi),
            }
        };
        let mut roots: Vec<Root> = Vec::new();
        match scan.max_levels {
            None => {
                for r in self.exec.map_slice(&cands, refine) {
                    roots.extend(r?);
                }
            }
            Some(cap) => {
                let mut count = 0usize;
                let mut cutoff: Option<f64> = None;
                for c in &cands {
                    if let Some(lowest) = cutoff {
                        // only brackets that may still hold a partner of the last level
                        if upper(c) < lowest - 2.0 * scan.refine_tolerance {
                            break;
                        }
                    }
                    if let Some(r) = refine(c)? {
                        count += self.ham.layouts()[r.sector].multiplicity();
                        if count >= cap && cutoff.is_none() {
                            cutoff = Some(r.p0);
                        }
                        roots.push(r);
                    }
                }
            }
        }
        self.assemble_levels(scan, roots)
    }

    fn refine_crossing(&self, scan: &ScanConfig, sector: usize, branch: usize, lo: f64, hi: f64) -> Result<Option<Root>> {
        let f = |p: f64| self.branch(p, sector, branch);
        let xtol = 1e-3 * scan.refine_tolerance;
        let (p0, diagnostic) = match brent(f, lo, hi, xtol, 100)? {
            BrentOutcome::Converged(x) => (x, None),
            BrentOutcome::Exhausted(x) => {
                (x, Some(format!("root refinement stopped after 100 iterations near p0 = {x:.12}")))
            }
        };
        self.accept(scan, sector, p0, diagnostic)
    }

    fn refine_minimum(&self, scan: &ScanConfig, sector: usize, lo: f64, hi: f64) -> Result<Option<Root>> {
        let f = |p: f64| -> Result<f64> {
            Ok(sorted_eigenvalues(&self.block(p, sector)?.h).iter().fold(f64::INFINITY, |m, v| m.min(v.abs())))
        };
        let p0 = golden_section(f, lo, hi, 1e-3 * scan.refine_tolerance)?;
        self.accept(scan, sector, p0, None)
    }

    /// Largest singular value of the whole of `H`, but at least `p0`, the
    /// size of the diagonal one-center terms. Small blocks on their own can
    /// have a vanishing spectrum at a root.
    fn scale(&self, p0: f64) -> Result<f64> {
        let mut sigma = p0;
        for s in 0..self.ham.layouts().len() {
            sigma = sorted_eigenvalues(&self.block(p0, s)?.h).iter().fold(sigma, |m, v| m.max(v.abs()));
        }
        Ok(sigma)
    }

    /// Residual test `min |λ| / σ_max` at a refined root.
    fn accept(&self, scan: &ScanConfig, sector: usize, p0: f64, diagnostic: Option<String>) -> Result<Option<Root>> {
        let ev = sorted_eigenvalues(&self.block(p0, sector)?.h);
        let sigma_max = self.scale(p0)?;
        let residual = ev.iter().fold(f64::INFINITY, |m, v| m.min(v.abs())) / sigma_max;
        if !(residual <= scan.null_threshold) {
            debug!("rejected candidate at p0 = {p0:.10} (block {sector}): residual {residual:.3e}");
            return Ok(None);
        }
        Ok(Some(Root { p0, sector, diagnostic }))
    }

    /// Null vectors of one block at a cluster of `k` coincident roots:
    /// the `k` eigenvectors of smallest `|λ|`, orthonormalized in `L²`.
    fn null_space(&self, scan: &ScanConfig, sector: usize, p0: f64, k: usize) -> Result<(Vec<DVector<f64>>, f64)> {
        let block = self.block(p0, sector)?;
        let eig = SymmetricEigen::new(block.h.clone());
        let sigma_max = self.scale(p0)?;
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].abs().total_cmp(&eig.eigenvalues[b].abs()));
        let mut out: Vec<DVector<f64>> = Vec::new();
        let mut worst = 0.0f64;
        for &c in order.iter().take(k) {
            let mut v: DVector<f64> = eig.eigenvectors.column(c).into_owned();
            let residual = (&block.h * &v).norm() / (sigma_max * v.norm());
            if !(residual <= scan.null_threshold) {
                debug!("dropping null vector at p0 = {p0:.10} (block {sector}): residual {residual:.3e}");
                continue;
            }
            worst = worst.max(residual);
            for u in &out {
                let proj = u.dot(&(&block.overlap * &v));
                v -= u * proj;
            }
            let norm2 = v.dot(&(&block.overlap * &v));
            if !(norm2 > 0.0) {
                return Err(Error::Numeric(format!("null vector at p0 = {p0} has non-positive norm")));
            }
            v /= norm2.sqrt();
            fix_sign(v.as_mut_slice());
            out.push(v);
        }
        Ok((out, worst))
    }

    fn assemble_levels(&self, scan: &ScanConfig, mut roots: Vec<Root>) -> Result<Vec<SpectrumLevel>> {
        let tol = 2.0 * scan.refine_tolerance;
        roots.sort_by(|a, b| b.p0.total_cmp(&a.p0).then(a.sector.cmp(&b.sector)));
        // coincident roots of one block share a null space
        let mut found: Vec<(f64, usize, Vec<DVector<f64>>, f64, Option<String>)> = Vec::new();
        let mut done = vec![false; roots.len()];
        for i in 0..roots.len() {
            if done[i] {
                continue;
            }
            let members: Vec<usize> = (i..roots.len())
                .filter(|&j| !done[j] && roots[j].sector == roots[i].sector && (roots[j].p0 - roots[i].p0).abs() <= tol)
                .collect();
            let p0 = members.iter().map(|&j| roots[j].p0).sum::<f64>() / members.len() as f64;
            let diagnostic = members.iter().find_map(|&j| roots[j].diagnostic.clone());
            members.iter().for_each(|&j| done[j] = true);
            let (vectors, residual) = self.null_space(scan, roots[i].sector, p0, members.len())?;
            if !vectors.is_empty() {
                found.push((p0, roots[i].sector, vectors, residual, diagnostic));
            }
        }
        found.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        let nb = self.ham.basis().len();
        let mut levels = Vec::new();
        let mut i = 0;
        while i < found.len() {
            let mut j = i + 1;
            while j < found.len() && (found[j - 1].0 - found[j].0).abs() <= tol {
                j += 1;
            }
            let group = &found[i..j];
            let p0 = group[0].0;
            let mut vectors = Vec::new();
            let mut abs_m = None;
            let mut residual = 0.0f64;
            let mut diagnostic = None;
            for (_, sector, vs, res, diag) in group {
                let layout = &self.ham.layouts()[*sector];
                abs_m = layout.abs_m;
                residual = residual.max(*res);
                if diag.is_some() {
                    diagnostic = diag.clone();
                }
                for v in vs {
                    let mut spread = |idx: &[usize]| {
                        let mut full = vec![0.0; nb];
                        for (a, &k) in idx.iter().enumerate() {
                            full[k] = v[a];
                        }
                        vectors.push(full);
                    };
                    spread(&layout.indices);
                    if let Some(partner) = &layout.partner {
                        spread(partner);
                    }
                }
            }
            let degeneracy = vectors.len();
            for member in 0..degeneracy {
                levels.push(SpectrumLevel {
                    index: levels.len() + 1,
                    energy: -0.5 * p0 * p0,
                    p0,
                    coefficients: vectors.clone(),
                    degeneracy,
                    member,
                    abs_m,
                    residual,
                    diagnostic: diagnostic.clone(),
                });
            }
            i = j;
        }
        if let Some(cap) = scan.max_levels {
            // keep whole multiplets
            if let Some(k) = levels.iter().position(|l| l.index > cap && l.member == 0) {
                levels.truncate(k);
            }
        }
        for l in levels.iter().filter(|l| l.member == 0) {
            if let Some(d) = &l.diagnostic {
                warn!("level {}: {d}", l.index);
            }
        }
        Ok(levels)
    }

    /// Orbital frame used by the coefficient vectors.
    pub fn frame(&self) -> &Frame {
        self.ham.frame()
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn sorted_eigenvalues(h: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = h.clone().symmetric_eigenvalues().iter().cloned().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Make the entry of largest magnitude positive.
pub(crate) fn fix_sign(v: &mut [f64]) {
    let big = v.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if big < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

enum BrentOutcome {
    Converged(f64),
    Exhausted(f64),
}

/// Brent's bracketing root finder.
fn brent(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64, xtol: f64, max_iter: usize) -> Result<BrentOutcome> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(BrentOutcome::Converged(a));
    }
    if fb == 0.0 {
        return Ok(BrentOutcome::Converged(b));
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Numeric(format!("bracket [{lo}, {hi}] does not change sign")));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(BrentOutcome::Converged(b));
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Ok(BrentOutcome::Exhausted(b))
}

fn golden_section(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64, xtol: f64) -> Result<f64> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while b - a > xtol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// One-shot convenience: scan, refine and return levels.
pub fn find_levels(
    geometry: &ClusterGeometry,
    basis: &BasisSet,
    scan: &ScanConfig,
    spec: AssemblySpec,
    exec: Execution,
) -> Result<Vec<SpectrumLevel>> {
    Solver::new(geometry, basis, spec, exec)?.find_levels(scan)
}

/// Where to sample a wave function.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampling {
    /// Points `origin + s·direction` for `s` from `start` to `stop` in
    /// steps of `step`; `direction` is normalized.
    Line { origin: [f64; 3], direction: [f64; 3], start: f64, stop: f64, step: f64 },
    /// Regular grid including both corners.
    Grid { min: [f64; 3], max: [f64; 3], counts: [usize; 3] },
}

impl Sampling {
    pub fn points(&self) -> Result<Vec<[f64; 3]>> {
        match *self {
            Sampling::Line { origin, direction, start, stop, step } => {
                let len = (direction[0].powi(2) + direction[1].powi(2) + direction[2].powi(2)).sqrt();
                if !(step > 0.0) || !(stop > start) || !(len > 0.0) {
                    return invalid("line needs step > 0, stop > start and a non-zero direction");
                }
                let u = [direction[0] / len, direction[1] / len, direction[2] / len];
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                Ok((0..count)
                    .map(|i| {
                        let s = start + i as f64 * step;
                        [origin[0] + s * u[0], origin[1] + s * u[1], origin[2] + s * u[2]]
                    })
                    .collect())
            }
            Sampling::Grid { min, max, counts } => {
                if counts.iter().any(|&c| c < 2) || (0..3).any(|k| !(max[k] > min[k])) {
                    return invalid("grid needs at least 2 points and a positive extent per axis");
                }
                let at = |k: usize, i: usize| min[k] + (max[k] - min[k]) * i as f64 / (counts[k] - 1) as f64;
                let mut pts = Vec::with_capacity(counts.iter().product());
                for i in 0..counts[0] {
                    for j in 0..counts[1] {
                        for k in 0..counts[2] {
                            pts.push([at(0, i), at(1, j), at(2, k)]);
                        }
                    }
                }
                Ok(pts)
            }
        }
    }

    /// Box used for the normalization check. A line is thickened to a cube
    /// around its own extent.
    fn bounding_box(&self, pts: &[[f64; 3]]) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in pts {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if let Sampling::Line { .. } = self {
            let half = (0..3).map(|k| 0.5 * (hi[k] - lo[k])).fold(0.0, f64::max);
            for k in 0..3 {
                let mid = 0.5 * (lo[k] + hi[k]);
                lo[k] = lo[k].min(mid - half);
                hi[k] = hi[k].max(mid + half);
            }
        }
        (lo, hi)
    }
}

/// Sampled wave function.
#[derive(Debug, Clone, PartialEq)]
pub struct WavefunctionField {
    pub samples: Vec<([f64; 3], f64)>,
    /// `∫_box |Ψ|²` of the full-space normalized state.
    pub capture: f64,
    pub warning: Option<String>,
}

/// Full-space `L²` norm squared of a coefficient vector.
pub(crate) fn coefficient_norm2(ham: &Hamiltonian, coeffs: &[f64], p0: f64) -> Result<f64> {
    let (_, o) = ham.full(p0)?;
    let a = DVector::from_column_slice(coeffs);
    Ok(a.dot(&(&o * &a)))
}

/// Evaluates `Σ a χ(r - R_k)` at lab points.
pub(crate) struct Expansion<'a> {
    pub ham: &'a Hamiltonian,
    pub coeffs: &'a [f64],
    pub p0: f64,
}

impl Expansion<'_> {
    /// Value at a point given in the orbital frame (assembly grid frame).
    pub fn at_local(&self, p: [f64; 3], scratch: &mut [f64], vals: &mut [f64]) -> f64 {
        let set: &CenterOrbitals = self.ham.center_orbitals();
        let per = set.len();
        let mut psi = 0.0;
        for (k, c) in self.ham.local_centers().iter().enumerate() {
            let block = &self.coeffs[k * per..(k + 1) * per];
            if block.iter().all(|a| *a == 0.0) {
                continue;
            }
            set.eval(self.p0, [p[0] - c[0], p[1] - c[1], p[2] - c[2]], scratch, vals);
            psi += block.iter().zip(vals.iter()).map(|(a, v)| a * v).sum::<f64>();
        }
        psi
    }

    /// Lab point to the assembly grid frame.
    pub fn to_local(&self, lab: [f64; 3]) -> [f64; 3] {
        let g = self.ham.geometry();
        let origin = g.axis_origin().filter(|_| self.ham.is_axial()).unwrap_or([0.0; 3]);
        self.ham.frame().to_local([lab[0] - origin[0], lab[1] - origin[1], lab[2] - origin[2]])
    }

    pub fn scratch(&self) -> (Vec<f64>, Vec<f64>) {
        let set = self.ham.center_orbitals();
        (vec![0.0; set.scratch_len()], vec![0.0; set.len()])
    }
}

impl Solver {
    /// Samples the level's own vector, normalized to unit norm over the
    /// sampling box, with the largest-magnitude sample made positive.
    pub fn wavefunction(&self, level: &SpectrumLevel, sampling: &Sampling) -> Result<WavefunctionField> {
        let pts = sampling.points()?;
        let coeffs = level.vector();
        if coeffs.len() != self.ham.basis().len() {
            return invalid("level does not belong to this basis");
        }
        let ex = Expansion { ham: &self.ham, coeffs, p0: level.p0 };
        let (mut scratch, mut vals) = ex.scratch();
        let total = coefficient_norm2(&self.ham, coeffs, level.p0)?;

        // ∫_box |Ψ|² on the molecular grid, at two resolutions
        let (lo, hi) = sampling.bounding_box(&pts);
        let inside = |p: [f64; 3]| (0..3).all(|k| p[k] >= lo[k] - 1e-12 && p[k] <= hi[k] + 1e-12);
        let box_integral = |ham: &Hamiltonian, scratch: &mut [f64], vals: &mut [f64]| -> f64 {
            let (gp, gw) = ham.grid(level.p0);
            let frame = ham.frame();
            let origin = ham.geometry().axis_origin().filter(|_| ham.is_axial()).unwrap_or([0.0; 3]);
            let e = Expansion { ham, coeffs, p0: level.p0 };
            let mut sum = 0.0;
            for (p, w) in gp.iter().zip(&gw) {
                if ham.is_axial() {
                    // revolve the meridian point: integrate the azimuth numerically
                    let nphi = 4 * (ham.basis().max_l() + 2);
                    let dphi = 2.0 * std::f64::consts::PI / nphi as f64;
                    for k in 0..nphi {
                        let (s, c) = ((k as f64 + 0.5) * dphi).sin_cos();
                        let q = [p[0] * c, p[0] * s, p[2]];
                        let lab = frame.to_lab(q);
                        let lab = [lab[0] + origin[0], lab[1] + origin[1], lab[2] + origin[2]];
                        if inside(lab) {
                            let v = e.at_local(q, scratch, vals);
                            sum += w * dphi * v * v;
                        }
                    }
                } else {
                    let lab = frame.to_lab(*p);
                    if inside(lab) {
                        let v = e.at_local(*p, scratch, vals);
                        sum += w * v * v;
                    }
                }
            }
            sum
        };
        let fine = box_integral(&self.ham, &mut scratch, &mut vals);
        let spec = self.ham_spec();
        let coarse_ham = Hamiltonian::new(
            self.ham.geometry(),
            self.ham.basis(),
            AssemblySpec { radial_points: (spec.radial_points / 2).max(8), polar_points: (spec.polar_points / 2).max(8) },
        )?;
        let coarse = box_integral(&coarse_ham, &mut scratch, &mut vals);
        let capture = fine / total;
        let mut warning = None;
        if capture < 0.99 {
            warning = Some(format!("sampling box captures only {:.2}% of the norm", 100.0 * capture));
        } else if (fine - coarse).abs() > 1e-3 * fine {
            warning = Some(format!("box norm not converged ({fine:.6} vs {coarse:.6})"));
        }
        if let Some(w) = &warning {
            warn!("level {}: {w}", level.index);
        }
        let scale = 1.0 / fine.sqrt();
        let mut amps: Vec<f64> = pts.iter().map(|&p| scale * ex.at_local(ex.to_local(p), &mut scratch, &mut vals)).collect();
        fix_sign(&mut amps);
        Ok(WavefunctionField { samples: pts.into_iter().zip(amps).collect(), capture, warning })
    }

    fn ham_spec(&self) -> AssemblySpec {
        self.ham.spec()
    }
}

/// `E₁..E₄` of one symmetric four-ion chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub r23: f64,
    pub energies: std::result::Result<[f64; 4], Error>,
}

/// Symmetric chain `-R12-R23-R12-` centered at the origin on the x axis.
pub fn symmetric_chain(charge: f64, r12: f64, r23: f64) -> Result<ClusterGeometry> {
    let h = 0.5 * r23;
    ClusterGeometry::chain_x(charge, &[-h - r12, -h, h, h + r12])
}

/// Four lowest energies across inner separations. The previous point's
/// roots narrow the next window; the full window is the fallback.
pub fn geometry_scan(
    charge: f64,
    r12: f64,
    r23_values: &[f64],
    shells: &[crate::basis::Shell],
    scan: &ScanConfig,
    spec: AssemblySpec,
    exec: Execution,
) -> Result<Vec<ScanRow>> {
    geometry_scan_with(charge, r12, r23_values, shells, scan, |g, b| Solver::new(g, b, spec, exec))
}

/// [`geometry_scan`] with a caller-built solver per geometry.
pub fn geometry_scan_with(
    charge: f64,
    r12: f64,
    r23_values: &[f64],
    shells: &[crate::basis::Shell],
    scan: &ScanConfig,
    make_solver: impl Fn(&ClusterGeometry, &BasisSet) -> Result<Solver>,
) -> Result<Vec<ScanRow>> {
    if r23_values.is_empty() {
        return invalid("no separations to scan");
    }
    if r23_values.windows(2).any(|w| !(w[0] < w[1])) {
        return invalid("separations must be sorted ascending");
    }
    let mut rows = Vec::new();
    let mut hint: Option<(f64, f64)> = None;
    let density = scan.samples as f64 / (scan.p0_max - scan.p0_min);
    for &r23 in r23_values {
        let point = || -> Result<[f64; 4]> {
            let g = symmetric_chain(charge, r12, r23)?;
            let basis = crate::basis::build_basis(&g, shells)?;
            let solver = make_solver(&g, &basis)?;
            let lowest4 = |cfg: &ScanConfig| -> Result<Option<Vec<SpectrumLevel>>> {
                let levels = solver.find_levels(&ScanConfig { max_levels: Some(4), ..*cfg })?;
                Ok((levels.len() >= 4).then_some(levels))
            };
            let mut found = None;
            if let Some((lo, hi)) = hint {
                let lo = (lo - 0.5).max(scan.p0_min);
                let hi = (hi + 0.5).min(scan.p0_max);
                let samples = ((density * (hi - lo)).ceil() as usize).max(10);
                let narrow = ScanConfig { p0_min: lo, p0_max: hi, samples, ..*scan };
                // the window must reach above the deepest root
                if let Some(levels) = lowest4(&narrow)? {
                    if levels[0].p0 < hi - 0.1 {
                        found = Some(levels);
                    }
                }
            }
            let levels = match found {
                Some(l) => l,
                None => lowest4(scan)?.ok_or_else(|| Error::Numeric(format!("fewer than four levels at R23 = {r23}")))?,
            };
            Ok([levels[0].energy, levels[1].energy, levels[2].energy, levels[3].energy])
        };
        let energies = point();
        match &energies {
            Ok(e) => {
                let p: Vec<f64> = e.iter().map(|x| (-2.0 * x).sqrt()).collect();
                hint = Some((p[3], p[0]));
            }
            Err(err) => warn!("R23 = {r23}: {err}"),
        }
        rows.push(ScanRow { r23, energies });
    }
    Ok(rows)
}
