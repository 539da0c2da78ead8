//! Coarse three-dimensional grid for geometries without a common axis.

use crate::error::{invalid, Result};
use crate::par::Execution;
use crate::quadrature::GaussLegendre;

use super::lanczos::{eigenpairs, LanczosSpec, RitzPair, Target};

const CELL_POINTS: usize = 4;

#[derive(Debug, Clone)]
pub(crate) struct CartesianGrid {
    pub h: f64,
    pub counts: [usize; 3],
    pub start: [f64; 3],
    pot: Vec<f64>,
}

impl CartesianGrid {
    /// Box `[lo, hi]` with nodes offset by `h/2` from `anchor` along x.
    pub fn new(ions: &[([f64; 3], f64)], h: f64, lo: [f64; 3], hi: [f64; 3], anchor: [f64; 3], exec: Execution) -> Result<Self> {
        if !(h > 0.0) || (0..3).any(|k| !(hi[k] - lo[k] > 2.0 * h)) {
            return invalid("cartesian grid needs h > 0 and a box spanning several cells");
        }
        let mut start = [0.0; 3];
        let mut counts = [0usize; 3];
        for k in 0..3 {
            let first = anchor[k] - if k == 0 { 0.5 * h } else { 0.0 };
            start[k] = first - h * ((first - lo[k]) / h).floor();
            counts[k] = ((hi[k] - start[k]) / h).floor() as usize + 1;
        }
        let rule = GaussLegendre::new(CELL_POINTS);
        let sub: Vec<(f64, f64)> = rule.nodes().iter().zip(rule.weights()).map(|(x, w)| (0.5 * h * x, 0.5 * w)).collect();
        let [nx, ny, nz] = counts;
        let mut pot = vec![0.0; nx * ny * nz];
        exec.for_each_chunk_mut(&mut pot, nx * ny, |iz, plane| {
            let z = start[2] + iz as f64 * h;
            for iy in 0..ny {
                let y = start[1] + iy as f64 * h;
                for ix in 0..nx {
                    let x = start[0] + ix as f64 * h;
                    let mut acc = 0.0;
                    for &(dx, wx) in &sub {
                        for &(dy, wy) in &sub {
                            for &(dz, wz) in &sub {
                                let p = [x + dx, y + dy, z + dz];
                                let v: f64 = ions
                                    .iter()
                                    .map(|(c, q)| {
                                        -q / ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt()
                                    })
                                    .sum();
                                acc += wx * wy * wz * v;
                            }
                        }
                    }
                    plane[iy * nx + ix] = acc;
                }
            }
        });
        Ok(Self { h, counts, start, pot })
    }

    pub fn len(&self) -> usize {
        self.pot.len()
    }

    pub fn node(&self, i: usize) -> [f64; 3] {
        let [nx, ny, _] = self.counts;
        let (ix, iy, iz) = (i % nx, (i / nx) % ny, i / (nx * ny));
        [
            self.start[0] + ix as f64 * self.h,
            self.start[1] + iy as f64 * self.h,
            self.start[2] + iz as f64 * self.h,
        ]
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let [nx, ny, nz] = self.counts;
        let c = 0.5 / (self.h * self.h);
        for iz in 0..nz {
            for iy in 0..ny {
                for ix in 0..nx {
                    let i = (iz * ny + iy) * nx + ix;
                    let mut s = (6.0 * c + self.pot[i]) * x[i];
                    if ix > 0 {
                        s -= c * x[i - 1];
                    }
                    if ix + 1 < nx {
                        s -= c * x[i + 1];
                    }
                    if iy > 0 {
                        s -= c * x[i - nx];
                    }
                    if iy + 1 < ny {
                        s -= c * x[i + nx];
                    }
                    if iz > 0 {
                        s -= c * x[i - nx * ny];
                    }
                    if iz + 1 < nz {
                        s -= c * x[i + nx * ny];
                    }
                    y[i] = s;
                }
            }
        }
    }

    /// Lowest eigenpairs by plain Lanczos on `H`.
    pub fn lowest(&self, count: usize, tolerance: f64) -> Result<Vec<RitzPair>> {
        let n = self.len();
        let mut hy = vec![0.0; n];
        let spec = LanczosSpec { count, target: Target::Smallest, basis: 4 * count + 60, max_products: 60_000, tolerance };
        let mut pairs = eigenpairs(
            n,
            spec,
            |x, y| {
                self.apply(x, y);
                Ok(())
            },
            |theta, y| {
                self.apply(y, &mut hy);
                let r: f64 = hy.iter().zip(y).map(|(a, b)| (a - theta * b).powi(2)).sum();
                Ok((theta, r.sqrt()))
            },
        )?;
        pairs.sort_by(|a, b| a.value.total_cmp(&b.value));
        Ok(pairs)
    }
}
