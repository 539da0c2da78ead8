//! Cylindrical `(ρ, z)` discretization of one `|m|` sector for ions on
//! the z axis.
//!
//! Cells are staggered in ρ (`ρ_i = (i + ½) h`), so the axis is never
//! sampled and no boundary row is needed there. The radial operator is
//! written in flux form and symmetrized with `v = √ρ u`, which makes the
//! whole matrix symmetric with bandwidth `n_ρ` in the `iz · n_ρ + iρ`
//! ordering.

use crate::error::{invalid, Result};
use crate::par::Execution;
use crate::quadrature::GaussLegendre;

use super::banded::BandedCholesky;
use super::lanczos::{eigenpairs, LanczosSpec, RitzPair, Target};

/// Subsamples per cell edge for the cell-averaged potential.
const CELL_POINTS: usize = 6;

#[derive(Debug, Clone)]
pub(crate) struct AxialGrid {
    pub h: f64,
    pub m: u32,
    pub n_rho: usize,
    pub n_z: usize,
    /// z of the first node row.
    pub z_start: f64,
    rho: Vec<f64>,
    /// Diagonal of the radial operator (including the centrifugal term).
    rad_diag: Vec<f64>,
    /// Coupling between `ρ_i` and `ρ_{i+1}`.
    rad_off: Vec<f64>,
    pot: Vec<f64>,
}

impl AxialGrid {
    /// Grid covering `ρ < rho_max` and `z_lo <= z <= z_hi`, with node rows
    /// half a spacing away from `z_anchor`.
    pub fn new(
        centers: &[(f64, f64)],
        h: f64,
        m: u32,
        rho_max: f64,
        (z_lo, z_hi): (f64, f64),
        z_anchor: f64,
        exec: Execution,
    ) -> Result<Self> {
        if !(h > 0.0) || !(rho_max > h) || !(z_hi - z_lo > 2.0 * h) {
            return invalid("axial grid needs h > 0 and a domain spanning several cells");
        }
        let n_rho = (rho_max / h).round() as usize;
        let first = z_anchor - 0.5 * h;
        let z_start = first - h * ((first - z_lo) / h).floor();
        let n_z = ((z_hi - z_start) / h).floor() as usize + 1;
        let rho: Vec<f64> = (0..n_rho).map(|i| (i as f64 + 0.5) * h).collect();
        let h2 = h * h;
        let m2 = (m * m) as f64;
        let rad_diag = rho.iter().map(|&r| ((r + 0.5 * h) + (r - 0.5 * h)) / (r * h2) + m2 / (r * r)).collect();
        let rad_off = (0..n_rho.saturating_sub(1)).map(|i| -(rho[i] + 0.5 * h) / (h2 * (rho[i] * rho[i + 1]).sqrt())).collect();

        let rule = GaussLegendre::new(CELL_POINTS);
        let sub: Vec<(f64, f64)> = rule.nodes().iter().zip(rule.weights()).map(|(x, w)| (0.5 * h * x, 0.5 * w)).collect();
        let mut pot = vec![0.0; n_rho * n_z];
        exec.for_each_chunk_mut(&mut pot, n_rho, |iz, row| {
            let z = z_start + iz as f64 * h;
            for (ir, v) in row.iter_mut().enumerate() {
                let r = rho[ir];
                let (mut num, mut den) = (0.0, 0.0);
                for &(da, wa) in &sub {
                    let rr = r + da;
                    for &(db, wb) in &sub {
                        let zz = z + db;
                        let vv: f64 = centers.iter().map(|&(zc, q)| -q / (rr * rr + (zz - zc) * (zz - zc)).sqrt()).sum();
                        num += wa * wb * rr * vv;
                        den += wa * wb * rr;
                    }
                }
                *v = num / den;
            }
        });
        Ok(Self { h, m, n_rho, n_z, z_start, rho, rad_diag, rad_off, pot })
    }

    pub fn len(&self) -> usize {
        self.n_rho * self.n_z
    }

    pub fn rho(&self, ir: usize) -> f64 {
        self.rho[ir]
    }

    pub fn z(&self, iz: usize) -> f64 {
        self.z_start + iz as f64 * self.h
    }

    fn diag(&self, i: usize) -> f64 {
        let ir = i % self.n_rho;
        0.5 * (self.rad_diag[ir] + 2.0 / (self.h * self.h)) + self.pot[i]
    }

    /// Lower-band entry `(i, j)`, `j <= i`.
    fn entry(&self, i: usize, j: usize) -> f64 {
        let ir = i % self.n_rho;
        if i == j {
            self.diag(i)
        } else if j + 1 == i && ir > 0 {
            0.5 * self.rad_off[ir - 1]
        } else if j + self.n_rho == i {
            -0.5 / (self.h * self.h)
        } else {
            0.0
        }
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (nr, nz) = (self.n_rho, self.n_z);
        let cz = -0.5 / (self.h * self.h);
        for iz in 0..nz {
            for ir in 0..nr {
                let i = iz * nr + ir;
                let mut s = self.diag(i) * x[i];
                if ir > 0 {
                    s += 0.5 * self.rad_off[ir - 1] * x[i - 1];
                }
                if ir + 1 < nr {
                    s += 0.5 * self.rad_off[ir] * x[i + 1];
                }
                if iz > 0 {
                    s += cz * x[i - nr];
                }
                if iz + 1 < nz {
                    s += cz * x[i + nr];
                }
                y[i] = s;
            }
        }
    }

    /// `H ≥ min V` because the discrete kinetic part is positive semidefinite.
    pub fn lower_bound(&self) -> f64 {
        self.pot.iter().cloned().fold(f64::INFINITY, f64::min) - 1e-3
    }

    pub fn factor_shifted(&self, sigma: f64) -> Result<BandedCholesky> {
        BandedCholesky::factor(self.len(), self.n_rho, |i, j| self.entry(i, j) - if i == j { sigma } else { 0.0 })
    }

    /// Lowest `count` eigenpairs by shift-invert Lanczos below `sigma`.
    pub fn lowest(&self, count: usize, sigma: f64, tolerance: f64) -> Result<Vec<RitzPair>> {
        let chol = self.factor_shifted(sigma)?;
        let n = self.len();
        let mut hy = vec![0.0; n];
        let spec = LanczosSpec { count, target: Target::Largest, basis: 3 * count + 20, max_products: 4000, tolerance };
        let mut pairs = eigenpairs(
            n,
            spec,
            |x, y| {
                y.copy_from_slice(x);
                chol.solve(y);
                Ok(())
            },
            |theta, y| {
                let lambda = sigma + 1.0 / theta;
                self.apply(y, &mut hy);
                let r: f64 = hy.iter().zip(y).map(|(a, b)| (a - lambda * b).powi(2)).sum();
                Ok((lambda, r.sqrt()))
            },
        )?;
        pairs.sort_by(|a, b| a.value.total_cmp(&b.value));
        Ok(pairs)
    }

    /// Same grid at twice the spacing, used to place the shift.
    pub fn coarsened(&self, centers: &[(f64, f64)], exec: Execution) -> Result<Self> {
        let z_hi = self.z(self.n_z - 1);
        Self::new(
            centers,
            2.0 * self.h,
            self.m,
            self.n_rho as f64 * self.h,
            (self.z_start, z_hi),
            centers[0].0,
            exec,
        )
    }

    /// Cell value `u(ρ_i, z_j)` from the symmetrized vector.
    pub fn u(&self, v: &[f64], ir: usize, iz: usize) -> f64 {
        v[iz * self.n_rho + ir] / self.rho[ir].sqrt()
    }
}
