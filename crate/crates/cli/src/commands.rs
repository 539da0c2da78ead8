use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use sturm_core::gridref::{oracle_spectrum, richardson, solve_grid_with, GridMode, GridSolution, GridSpec, OracleRun};
use sturm_core::integrals::IntegralCache;
use sturm_core::solver::{geometry_scan_with, Solver};
use sturm_core::{BasisSet, ClusterGeometry, Execution, SpectrumLevel};

use crate::config::{Method, OracleTask, RunConfig};
use crate::CliError;

/// Environment variable naming the directory of the persistent integral
/// cache.
pub const CACHE_ENV: &str = "STURM_CACHE_DIR";
const CACHE_FILE: &str = "integrals.bin";

/// Shared state of one invocation.
pub struct Context {
    pub exec: Execution,
    cache: Arc<IntegralCache>,
    cache_path: Option<PathBuf>,
}

impl Context {
    /// Loads the on-disk cache when the configuration uses it.
    pub fn new(cfg: &RunConfig) -> Self {
        let cache = Arc::new(IntegralCache::new());
        let mut cache_path = None;
        if cfg.quadrature.method == Method::Reference {
            if let Some(dir) = std::env::var_os(CACHE_ENV) {
                let path = Path::new(&dir).join(CACHE_FILE);
                if path.exists() {
                    match cache.load(&path) {
                        Ok(n) => info!("loaded {n} cached integrals from {}", path.display()),
                        Err(e) => warn!("ignoring integral cache: {e}"),
                    }
                }
                cache_path = Some(path);
            }
        }
        Self { exec: Execution::default(), cache, cache_path }
    }

    /// Writes the cache back if one is configured.
    pub fn finish(&self) {
        let Some(path) = &self.cache_path else { return };
        if let Some(dir) = path.parent() {
            if let Err(e) = std::fs::create_dir_all(dir) {
                warn!("cannot create {}: {e}", dir.display());
                return;
            }
        }
        if let Err(e) = self.cache.save(path) {
            warn!("integral cache not saved: {e}");
        }
    }

    fn solver(&self, cfg: &RunConfig, g: &ClusterGeometry, b: &BasisSet) -> sturm_core::Result<Solver> {
        match cfg.quadrature.method {
            Method::Batched => Solver::new(g, b, cfg.assembly(), self.exec),
            Method::Reference => {
                Solver::with_reference(g, b, cfg.assembly(), self.exec, cfg.quadrature_spec(), Arc::clone(&self.cache))
            }
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn levels(cfg: &RunConfig, ctx: &Context, cap: Option<usize>) -> Result<(ClusterGeometry, Solver, Vec<SpectrumLevel>), CliError> {
    let g = cfg.geometry()?;
    let b = cfg.basis(&g)?;
    let scan = sturm_core::ScanConfig { max_levels: cap, ..cfg.scan_config(&g) };
    let solver = ctx.solver(cfg, &g, &b)?;
    let found = solver.find_levels(&scan)?;
    for l in &found {
        if let Some(d) = &l.diagnostic {
            warn!("level {}: {d}", l.index);
        }
    }
    Ok((g, solver, found))
}

/// `level,energy,p0,degeneracy`, one row per level.
pub fn spectrum(cfg: &RunConfig, ctx: &Context, out: &mut dyn Write) -> Result<(), CliError> {
    let (_, _, mut found) = levels(cfg, ctx, cfg.task.levels)?;
    if let Some(n) = cfg.task.levels {
        found.truncate(n);
    }
    writeln!(out, "level,energy,p0,degeneracy")?;
    for l in &found {
        writeln!(out, "{},{},{},{}", l.index, num(l.energy), num(l.p0), l.degeneracy)?;
    }
    Ok(())
}

/// `s,x,y,z,psi` along the configured line.
pub fn wavefunction(cfg: &RunConfig, ctx: &Context, out: &mut dyn Write) -> Result<(), CliError> {
    let task = cfg
        .task
        .wavefunction
        .as_ref()
        .ok_or_else(|| CliError::Config("task.wavefunction is required".into()))?;
    let (_, solver, found) = levels(cfg, ctx, Some(task.level))?;
    let level = found
        .get(task.level - 1)
        .ok_or_else(|| CliError::Level(format!("level {} requested, {} found in the window", task.level, found.len())))?;
    let field = solver.wavefunction(level, &task.line.sampling())?;
    if let Some(w) = &field.warning {
        warn!("{w}");
    }
    writeln!(out, "s,x,y,z,psi")?;
    for (i, (p, v)) in field.samples.iter().enumerate() {
        let s = task.line.range[0] + i as f64 * task.line.step;
        writeln!(out, "{},{},{},{},{}", num(s), num(p[0]), num(p[1]), num(p[2]), num(*v))?;
    }
    Ok(())
}

/// `r23,e1,e2,e3,e4` for the symmetric four-ion chain; failed points
/// print `NaN`.
pub fn scan(cfg: &RunConfig, ctx: &Context, out: &mut dyn Write) -> Result<(), CliError> {
    let task = cfg.task.scan.as_ref().ok_or_else(|| CliError::Config("task.scan is required".into()))?;
    let first = sturm_core::solver::symmetric_chain(task.charge, task.r12, task.r23[0])?;
    let window = cfg.scan_config(&first);
    let rows = geometry_scan_with(task.charge, task.r12, &task.r23, &cfg.shells()?, &window, |g, b| {
        ctx.solver(cfg, g, b)
    })?;
    writeln!(out, "r23,e1,e2,e3,e4")?;
    for row in &rows {
        let e = row.energies.clone().unwrap_or([f64::NAN; 4]);
        writeln!(out, "{},{},{},{},{}", num(row.r23), num(e[0]), num(e[1]), num(e[2]), num(e[3]))?;
    }
    if rows.iter().all(|r| r.energies.is_err()) {
        let first_err = rows[0].energies.clone().unwrap_err();
        return Err(CliError::Compute(first_err));
    }
    Ok(())
}

/// Grid reference levels: `(index, |m|, E_h, E_h/2, E_extrapolated)` plus
/// the run for profile lookups when the geometry is a chain.
struct GridLevels {
    rows: Vec<(usize, Option<u32>, f64, f64, f64)>,
    run: Option<OracleRun>,
    cartesian: Option<GridSolution>,
}

fn grid_levels(g: &ClusterGeometry, o: &OracleTask, wanted: usize, exec: Execution) -> Result<GridLevels, CliError> {
    if g.is_axial() {
        let run = oracle_spectrum(g, &o.sectors, o.per_sector, o.spacing, o.margin, exec)?;
        let rows = run.levels.iter().map(|l| (l.index, Some(l.abs_m), l.coarse, l.fine, l.extrapolated)).collect();
        return Ok(GridLevels { rows, run: Some(run), cartesian: None });
    }
    let count = wanted.max(o.per_sector);
    let solve = |h: f64| -> sturm_core::Result<GridSolution> {
        let spec = GridSpec::around(g, GridMode::Cartesian3d, h, o.margin, 0, count)?;
        solve_grid_with(g, &spec, exec)
    };
    let coarse = solve(o.spacing)?;
    let fine = solve(0.5 * o.spacing)?;
    let ext = richardson(&coarse.energies(), &fine.energies())?;
    let rows = (0..ext.len()).map(|k| (k + 1, None, coarse.levels[k].energy, fine.levels[k].energy, ext[k])).collect();
    Ok(GridLevels { rows, run: None, cartesian: Some(fine) })
}

fn oracle_task(cfg: &RunConfig) -> Result<&OracleTask, CliError> {
    cfg.task.oracle.as_ref().ok_or_else(|| CliError::Config("task.oracle is required".into()))
}

/// `level,abs_m,e_h,e_h2,e_extrapolated`; optionally exports the fine-grid
/// states.
pub fn oracle(cfg: &RunConfig, ctx: &Context, out: &mut dyn Write) -> Result<(), CliError> {
    let o = oracle_task(cfg)?;
    let g = cfg.geometry()?;
    let grid = grid_levels(&g, o, cfg.task.levels.unwrap_or(o.per_sector), ctx.exec)?;
    let shown = cfg.task.levels.unwrap_or(grid.rows.len()).min(grid.rows.len());
    writeln!(out, "level,abs_m,e_h,e_h2,e_extrapolated")?;
    for &(k, m, eh, eh2, ext) in &grid.rows[..shown] {
        let m = m.map(|m| m.to_string()).unwrap_or_default();
        writeln!(out, "{k},{m},{},{},{}", num(eh), num(eh2), num(ext))?;
    }
    if let Some(dir) = &o.export_dir {
        std::fs::create_dir_all(dir)?;
        export_states(&grid, shown, Path::new(dir))?;
    }
    Ok(())
}

fn export_states(grid: &GridLevels, shown: usize, dir: &Path) -> Result<(), CliError> {
    let file = |k: usize| std::fs::File::create(dir.join(format!("level_{k:03}.txt"))).map(std::io::BufWriter::new);
    if let Some(run) = &grid.run {
        for l in run.levels.iter().take(shown) {
            let (_, _, fine) = run.sectors.iter().find(|(m, _, _)| *m == l.abs_m).expect("sector of a listed level");
            fine.write_state(l.state, file(l.index)?)?;
        }
    } else if let Some(fine) = &grid.cartesian {
        for k in 0..shown {
            fine.write_state(k, file(k + 1)?)?;
        }
    }
    Ok(())
}

/// Momentum-space levels against the grid reference. The CSV goes to
/// `out`, the summary to `summary`; a bound violation is an error after
/// both are written.
pub fn compare(cfg: &RunConfig, ctx: &Context, out: &mut dyn Write, summary: &mut dyn Write) -> Result<(), CliError> {
    let o = oracle_task(cfg)?;
    let probe = if o.profile_levels.is_empty() {
        None
    } else {
        let w = cfg
            .task
            .wavefunction
            .as_ref()
            .ok_or_else(|| CliError::Config("profile comparison needs task.wavefunction.line".into()))?;
        Some(w.line.sampling())
    };
    let need = o.profile_levels.iter().cloned().max().unwrap_or(0).max(o.levels);
    let (g, solver, found) = levels(cfg, ctx, Some(need))?;
    let grid = grid_levels(&g, o, need, ctx.exec)?;
    if found.len() < o.levels || grid.rows.len() < o.levels {
        return Err(CliError::Compute(sturm_core::Error::Pairing(format!(
            "{} levels requested, momentum space found {}, grid found {}",
            o.levels,
            found.len(),
            grid.rows.len()
        ))));
    }

    writeln!(out, "level,e_momentum,e_grid,e_grid_extrapolated,abs_delta")?;
    let mut worst: f64 = 0.0;
    for (l, &(_, _, _, fine, ext)) in found.iter().zip(&grid.rows).take(o.levels) {
        let d = (l.energy - ext).abs();
        worst = worst.max(d);
        writeln!(out, "{},{},{},{},{}", l.index, num(l.energy), num(fine), num(ext), num(d))?;
    }
    writeln!(summary, "max |delta E| = {worst:.3e} over {} levels (bound {:.1e})", o.levels, o.bound)?;
    let mut failures = Vec::new();
    if worst > o.bound {
        failures.push(format!("energy difference {worst:.3e} > {:.1e}", o.bound));
    }

    if let Some(sampling) = probe {
        let run = grid
            .run
            .as_ref()
            .ok_or_else(|| CliError::Config("profile comparison needs ions on one axis".into()))?;
        for &k in &o.profile_levels {
            let level = found
                .get(k.wrapping_sub(1))
                .ok_or_else(|| CliError::Level(format!("profile level {k} not among {} levels", found.len())))?;
            let diff = profile_difference(&solver, run, level, &sampling)?;
            writeln!(summary, "level {k} profile: max |delta psi| = {diff:.3e} (bound {:.1e})", o.profile_bound)?;
            if diff > o.profile_bound {
                failures.push(format!("level {k} profile difference {diff:.3e} > {:.1e}", o.profile_bound));
            }
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Bound(failures.join("; ")))
    }
}

/// Largest pointwise difference between the momentum-space profile and the
/// extrapolated grid profile of the same `|m|` nearest in energy, after
/// sign alignment.
pub fn profile_difference(
    solver: &Solver,
    run: &OracleRun,
    level: &SpectrumLevel,
    sampling: &sturm_core::solver::Sampling,
) -> Result<f64, CliError> {
    let m = level.abs_m.unwrap_or(0);
    let target = run
        .levels
        .iter()
        .filter(|l| l.abs_m == m)
        .min_by(|a, b| (a.extrapolated - level.energy).abs().total_cmp(&(b.extrapolated - level.energy).abs()))
        .ok_or_else(|| CliError::Config(format!("no grid sector with |m| = {m}")))?;
    let field = solver.wavefunction(level, sampling)?;
    let points: Vec<[f64; 3]> = field.samples.iter().map(|(p, _)| *p).collect();
    let grid = run.profile(target, &points)?;
    let overlap: f64 = field.samples.iter().zip(&grid).map(|((_, a), b)| a * b).sum();
    let sign = if overlap < 0.0 { -1.0 } else { 1.0 };
    Ok(field.samples.iter().zip(&grid).map(|((_, a), b)| (a - sign * b).abs()).fold(0.0, f64::max))
}
