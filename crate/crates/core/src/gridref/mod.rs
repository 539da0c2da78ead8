//! Finite-difference reference solutions of `(-Δ/2 + V) ψ = E ψ` for the
//! same ion arrays, used to check the momentum-space results.
//!
//! Chains are solved per `|m|` sector on a cylindrical `(ρ, z)` grid; any
//! other geometry falls back to a coarse Cartesian grid. The potential is
//! averaged over each cell, which keeps every sample finite and restores
//! second-order convergence in `h` despite the Coulomb cusps. Two spacings
//! `h` and `h/2` are combined by Richardson extrapolation.

mod axial;
mod banded;
mod cartesian;
mod lanczos;

use std::io::Write;

use log::warn;

use crate::error::{invalid, Error, Result};
use crate::geometry::{ClusterGeometry, Frame};
use crate::par::Execution;

use axial::AxialGrid;
use cartesian::CartesianGrid;
use lanczos::RitzPair;

/// Residual bound for the axial eigenpairs, `‖Hv - λv‖ ≤ tol ‖v‖`.
pub const AXIAL_TOLERANCE: f64 = 1e-8;
/// Relaxed bound for the Cartesian mode.
pub const CARTESIAN_TOLERANCE: f64 = 1e-5;

/// Grids above this size get their shift from a grid at twice the spacing.
const DIRECT_SHIFT_LIMIT: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    Axial2d,
    Cartesian3d,
}

/// Discretization parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub mode: GridMode,
    pub spacing: f64,
    /// `|m|` of the sector; ignored in Cartesian mode.
    pub m_sector: u32,
    pub eigencount: usize,
    /// Axial: `[ρ_max, unused, z half-length about the chain midpoint]`.
    /// Cartesian: box half-lengths about the center of the ion bounding
    /// box, lab axes.
    pub half_lengths: [f64; 3],
}

impl GridSpec {
    /// Domain enclosing every ion with `margin` to spare on each side.
    pub fn around(
        geometry: &ClusterGeometry,
        mode: GridMode,
        spacing: f64,
        margin: f64,
        m_sector: u32,
        eigencount: usize,
    ) -> Result<Self> {
        let half_lengths = match mode {
            GridMode::Axial2d => {
                let zs = geometry
                    .axial_coordinates()
                    .ok_or_else(|| Error::InvalidArgument("axial grid needs collinear ions".into()))?;
                let (lo, hi) = min_max(&zs);
                [margin, margin, 0.5 * (hi - lo) + margin]
            }
            GridMode::Cartesian3d => {
                let (lo, hi) = bounding_box(geometry);
                [0, 1, 2].map(|k| 0.5 * (hi[k] - lo[k]) + margin)
            }
        };
        let spec = Self { mode, spacing, m_sector, eigencount, half_lengths };
        spec.validate(geometry)?;
        Ok(spec)
    }

    /// Smallest distance from an ion to the domain boundary.
    pub fn margin(&self, geometry: &ClusterGeometry) -> Result<f64> {
        match self.mode {
            GridMode::Axial2d => {
                let zs = geometry
                    .axial_coordinates()
                    .ok_or_else(|| Error::InvalidArgument("axial grid needs collinear ions".into()))?;
                let (lo, hi) = min_max(&zs);
                Ok(self.half_lengths[0].min(self.half_lengths[2] - 0.5 * (hi - lo)))
            }
            GridMode::Cartesian3d => {
                let (lo, hi) = bounding_box(geometry);
                Ok((0..3).map(|k| self.half_lengths[k] - 0.5 * (hi[k] - lo[k])).fold(f64::INFINITY, f64::min))
            }
        }
    }

    pub fn validate(&self, geometry: &ClusterGeometry) -> Result<()> {
        if !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return invalid(format!("grid spacing must be positive, got {}", self.spacing));
        }
        if self.eigencount == 0 {
            return invalid("eigencount must be at least 1");
        }
        let margin = self.margin(geometry)?;
        if !(margin > 2.0 * self.spacing) {
            return invalid(format!("domain leaves only {margin} bohr around the ions"));
        }
        Ok(())
    }

    /// Smallest margin that keeps a level at energy `e` away from the walls.
    pub fn required_margin(e: f64) -> f64 {
        8.0 / (2.0 * e.abs()).sqrt()
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

fn bounding_box(geometry: &ClusterGeometry) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in geometry.positions() {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridLevel {
    pub energy: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
enum Discretization {
    Axial { grid: AxialGrid, origin: [f64; 3], frame: Frame },
    Cartesian(CartesianGrid),
}

/// Eigenpairs of one grid problem. States are normalized to unit `L²`
/// norm in three dimensions.
#[derive(Debug, Clone)]
pub struct GridSolution {
    pub spec: GridSpec,
    pub levels: Vec<GridLevel>,
    /// Levels lying too close to the domain walls for their decay length.
    pub warnings: Vec<String>,
    states: Vec<Vec<f64>>,
    disc: Discretization,
}

/// Lowest `count` eigenpairs of an axial sector, choosing the shift from a
/// coarser copy of the grid.
fn axial_lowest(grid: &AxialGrid, centers: &[(f64, f64)], count: usize, tol: f64, exec: Execution) -> Result<Vec<RitzPair>> {
    let lb = grid.lower_bound();
    let estimate = if grid.len() <= DIRECT_SHIFT_LIMIT {
        grid.lowest(1, lb, 1e-6)?[0].value
    } else {
        let coarse = grid.coarsened(centers, exec)?;
        axial_lowest(&coarse, centers, 1, 1e-6, exec)?[0].value
    };
    let mut delta = 0.05 + 0.1 * estimate.abs();
    loop {
        let sigma = estimate - delta;
        if sigma <= lb {
            return grid.lowest(count, lb, tol);
        }
        match grid.lowest(count, sigma, tol) {
            Err(Error::NotPositiveDefinite { .. }) => delta *= 2.0,
            other => return other,
        }
    }
}

/// Solves one grid problem.
pub fn solve_grid(geometry: &ClusterGeometry, grid: &GridSpec) -> Result<GridSolution> {
    solve_grid_with(geometry, grid, Execution::default())
}

pub fn solve_grid_with(geometry: &ClusterGeometry, grid: &GridSpec, exec: Execution) -> Result<GridSolution> {
    grid.validate(geometry)?;
    let h = grid.spacing;
    let (disc, pairs, scale) = match grid.mode {
        GridMode::Axial2d => {
            let zs = geometry
                .axial_coordinates()
                .ok_or_else(|| Error::InvalidArgument("axial grid needs collinear ions".into()))?;
            let centers: Vec<(f64, f64)> = zs.iter().zip(geometry.ions()).map(|(&z, i)| (z, i.charge)).collect();
            let (lo, hi) = min_max(&zs);
            let mid = 0.5 * (lo + hi);
            let half = grid.half_lengths[2];
            let ag = AxialGrid::new(&centers, h, grid.m_sector, grid.half_lengths[0], (mid - half, mid + half), zs[0], exec)?;
            let pairs = axial_lowest(&ag, &centers, grid.eigencount, AXIAL_TOLERANCE, exec)?;
            let origin = geometry.axis_origin().unwrap_or([0.0; 3]);
            // Σ v² = 1 on the cells means Σ u² ρ h² = 1/h²
            (Discretization::Axial { grid: ag, origin, frame: geometry.orbital_frame() }, pairs, 1.0 / h)
        }
        GridMode::Cartesian3d => {
            let (lo, hi) = bounding_box(geometry);
            let c = [0, 1, 2].map(|k| 0.5 * (lo[k] + hi[k]));
            let blo = [0, 1, 2].map(|k| c[k] - grid.half_lengths[k]);
            let bhi = [0, 1, 2].map(|k| c[k] + grid.half_lengths[k]);
            let ions: Vec<([f64; 3], f64)> = geometry.ions().iter().map(|i| (i.position, i.charge)).collect();
            let cg = CartesianGrid::new(&ions, h, blo, bhi, ions[0].0, exec)?;
            let pairs = cg.lowest(grid.eigencount, CARTESIAN_TOLERANCE)?;
            (Discretization::Cartesian(cg), pairs, h.powf(-1.5))
        }
    };
    let margin = grid.margin(geometry)?;
    let mut warnings = Vec::new();
    for (k, p) in pairs.iter().enumerate() {
        if p.value < 0.0 && margin < GridSpec::required_margin(p.value) {
            let msg = format!(
                "grid level {} (E = {:.6}) needs margin {:.2}, domain has {margin:.2}",
                k + 1,
                p.value,
                GridSpec::required_margin(p.value)
            );
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    let levels = pairs.iter().map(|p| GridLevel { energy: p.value, residual: p.residual }).collect();
    let states = pairs
        .into_iter()
        .map(|p| {
            let mut v = p.vector;
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x *= scale / nrm);
            v
        })
        .collect();
    Ok(GridSolution { spec: *grid, levels, warnings, states, disc })
}

impl GridSolution {
    pub fn energies(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.energy).collect()
    }

    fn state(&self, level: usize) -> Result<&[f64]> {
        self.states
            .get(level)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::InvalidArgument(format!("grid solution has no level {}", level + 1)))
    }

    /// `ψ` at a lab point, by interpolation; zero outside the domain. In
    /// an `|m| > 0` sector the azimuthal factor is `cos(mφ)/√π` with `φ`
    /// measured from the orbital frame's x axis.
    pub fn value_at(&self, level: usize, lab: [f64; 3]) -> Result<f64> {
        let v = self.state(level)?;
        match &self.disc {
            Discretization::Axial { grid, origin, frame } => {
                let d = frame.to_local([lab[0] - origin[0], lab[1] - origin[1], lab[2] - origin[2]]);
                let rho = d[0].hypot(d[1]);
                let m = grid.m;
                let angular = if m == 0 {
                    1.0 / (2.0 * std::f64::consts::PI).sqrt()
                } else {
                    (m as f64 * d[1].atan2(d[0])).cos() / std::f64::consts::PI.sqrt()
                };
                Ok(angular * axial_interpolate(grid, v, rho, d[2]))
            }
            Discretization::Cartesian(g) => Ok(cartesian_interpolate(g, v, lab)),
        }
    }

    /// Text export, one point per row: `rho z u` (axial, radial function
    /// `u` with `ψ = u Φ_m(φ)`) or `x y z psi` (Cartesian).
    pub fn write_state(&self, level: usize, mut w: impl Write) -> Result<()> {
        let v = self.state(level)?;
        let io = |e: std::io::Error| Error::Numeric(format!("writing grid state: {e}"));
        match &self.disc {
            Discretization::Axial { grid, .. } => {
                writeln!(w, "rho z u").map_err(io)?;
                for iz in 0..grid.n_z {
                    for ir in 0..grid.n_rho {
                        writeln!(w, "{:.17e} {:.17e} {:.17e}", grid.rho(ir), grid.z(iz), grid.u(v, ir, iz)).map_err(io)?;
                    }
                }
            }
            Discretization::Cartesian(g) => {
                writeln!(w, "x y z psi").map_err(io)?;
                for (i, val) in v.iter().enumerate() {
                    let p = g.node(i);
                    writeln!(w, "{:.17e} {:.17e} {:.17e} {:.17e}", p[0], p[1], p[2], val).map_err(io)?;
                }
            }
        }
        Ok(())
    }
}

fn axial_interpolate(grid: &AxialGrid, v: &[f64], rho: f64, z: f64) -> f64 {
    let s = (z - grid.z_start) / grid.h;
    if s < -1.0 || s > grid.n_z as f64 {
        return 0.0;
    }
    // Dirichlet walls: zero one node beyond the grid
    let at = |ir: usize, iz: isize| -> f64 {
        if iz < 0 || iz as usize >= grid.n_z || ir >= grid.n_rho {
            0.0
        } else {
            grid.u(v, ir, iz as usize)
        }
    };
    let radial = |iz: isize| -> f64 {
        let t = rho / grid.h - 0.5;
        if t < 0.0 {
            let (u0, u1) = (at(0, iz), at(1, iz));
            if grid.m == 0 {
                // even in ρ near the axis: u = a + b ρ²
                let a = (9.0 * u0 - u1) / 8.0;
                let b = (u1 - u0) / (2.0 * grid.h * grid.h);
                a + b * rho * rho
            } else {
                u0 * (rho / grid.rho(0)).powi(grid.m as i32)
            }
        } else {
            let i0 = t.floor() as usize;
            let f = t - i0 as f64;
            (1.0 - f) * at(i0, iz) + f * at(i0 + 1, iz)
        }
    };
    let j0 = s.floor() as isize;
    let f = s - j0 as f64;
    (1.0 - f) * radial(j0) + f * radial(j0 + 1)
}

fn cartesian_interpolate(g: &CartesianGrid, v: &[f64], p: [f64; 3]) -> f64 {
    let [nx, ny, nz] = g.counts;
    let s = [0, 1, 2].map(|k| (p[k] - g.start[k]) / g.h);
    let i0 = s.map(|x| x.floor() as isize);
    let mut acc = 0.0;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let idx = [i0[0] + dx, i0[1] + dy, i0[2] + dz];
                if idx.iter().zip([nx, ny, nz]).any(|(&i, n)| i < 0 || i as usize >= n) {
                    continue;
                }
                let w: f64 = (0..3)
                    .map(|k| {
                        let f = s[k] - i0[k] as f64;
                        if [dx, dy, dz][k] == 1 { f } else { 1.0 - f }
                    })
                    .product();
                let i = (idx[2] as usize * ny + idx[1] as usize) * nx + idx[0] as usize;
                acc += w * v[i];
            }
        }
    }
    acc
}

/// `(4 E_{h/2} - E_h) / 3` level by level.
pub fn richardson(coarse: &[f64], fine: &[f64]) -> Result<Vec<f64>> {
    if coarse.len() != fine.len() {
        return Err(Error::Pairing(format!("{} levels at h but {} at h/2", coarse.len(), fine.len())));
    }
    Ok(coarse.iter().zip(fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect())
}

/// Default spacing pair and margin for the reference runs.
pub const DEFAULT_SPACING: f64 = 0.1;
pub const DEFAULT_MARGIN: f64 = 12.0;

/// One physical level of a multi-sector reference run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleLevel {
    pub index: usize,
    pub abs_m: u32,
    /// Position within its sector.
    pub state: usize,
    pub coarse: f64,
    pub fine: f64,
    pub extrapolated: f64,
}

/// Reference spectrum of a chain over several `|m|` sectors. Levels with
/// `|m| > 0` are listed twice, like their `±m` partners.
#[derive(Debug, Clone)]
pub struct OracleRun {
    pub levels: Vec<OracleLevel>,
    /// `(h, h/2)` solutions per sector, in the order requested.
    pub sectors: Vec<(u32, GridSolution, GridSolution)>,
}

impl OracleRun {
    /// Extrapolated `ψ` of a level at a lab point: both resolutions are
    /// sign-aligned at the point of largest fine-grid magnitude among
    /// `probe`, then combined like the energies.
    pub fn profile(&self, level: &OracleLevel, probe: &[[f64; 3]]) -> Result<Vec<f64>> {
        let (_, coarse, fine) = self
            .sectors
            .iter()
            .find(|(m, _, _)| *m == level.abs_m)
            .ok_or_else(|| Error::InvalidArgument(format!("no sector |m| = {}", level.abs_m)))?;
        let f: Vec<f64> = probe.iter().map(|&p| fine.value_at(level.state, p)).collect::<Result<_>>()?;
        let c: Vec<f64> = probe.iter().map(|&p| coarse.value_at(level.state, p)).collect::<Result<_>>()?;
        let overlap: f64 = f.iter().zip(&c).map(|(a, b)| a * b).sum();
        let sign = if overlap < 0.0 { -1.0 } else { 1.0 };
        Ok(f.iter().zip(&c).map(|(a, b)| (4.0 * a - sign * b) / 3.0).collect())
    }
}

/// Runs every sector at `h` and `h/2` and extrapolates.
pub fn oracle_spectrum(
    geometry: &ClusterGeometry,
    sectors: &[u32],
    per_sector: usize,
    spacing: f64,
    margin: f64,
    exec: Execution,
) -> Result<OracleRun> {
    if sectors.is_empty() {
        return invalid("no sectors requested");
    }
    let jobs: Vec<(u32, f64)> = sectors.iter().flat_map(|&m| [(m, spacing), (m, 0.5 * spacing)]).collect();
    let solved = exec.map_slice(&jobs, |&(m, h)| {
        let spec = GridSpec::around(geometry, GridMode::Axial2d, h, margin, m, per_sector)?;
        // the sector jobs already run side by side
        solve_grid_with(geometry, &spec, Execution::Sequential)
    });
    let mut solved = solved.into_iter();
    let mut runs = Vec::new();
    let mut levels = Vec::new();
    for &m in sectors {
        let coarse = solved.next().unwrap()?;
        let fine = solved.next().unwrap()?;
        let ext = richardson(&coarse.energies(), &fine.energies())?;
        for (k, e) in ext.iter().enumerate() {
            let lvl = OracleLevel {
                index: 0,
                abs_m: m,
                state: k,
                coarse: coarse.levels[k].energy,
                fine: fine.levels[k].energy,
                extrapolated: *e,
            };
            levels.push(lvl);
            if m > 0 {
                levels.push(lvl);
            }
        }
        runs.push((m, coarse, fine));
    }
    levels.sort_by(|a, b| a.extrapolated.total_cmp(&b.extrapolated).then(a.abs_m.cmp(&b.abs_m)));
    for (i, l) in levels.iter_mut().enumerate() {
        l.index = i + 1;
    }
    Ok(OracleRun { levels, sectors: runs })
}
