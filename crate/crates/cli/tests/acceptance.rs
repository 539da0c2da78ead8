//! Acceptance run: one PASS/FAIL line per criterion with its tolerance.
//! Not part of `cargo test`; run with
//! `cargo test --release -p sturm-cli --test acceptance`.

use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sturm_cli::commands::profile_difference;
use sturm_core::gridref::{oracle_spectrum, DEFAULT_MARGIN, DEFAULT_SPACING};
use sturm_core::hamiltonian::{assemble, assemble_truncated, AssemblySpec};
use sturm_core::integrals::{overlap_s, overlap_via_fock_sphere, two_center_ket, IntegralCache};
use sturm_core::solver::{geometry_scan, Sampling, Solver};
use sturm_core::{build_basis, ClusterGeometry, Execution, Ion, QuadratureSpec, QuantumNumbers, ScanConfig, Shell};

const TABLE_M5: [f64; 15] = [
    -3.8961, -3.8460, -3.4430, -3.4348, -2.0881, -1.9496, -1.9496, -1.8304, -1.8304, -1.7869, -1.6536, -1.4881, -1.4881,
    -1.4177, -1.4177,
];
const TABLE_M14: [f64; 15] = [
    -3.9151, -3.8584, -3.4543, -3.4433, -2.3063, -2.2043, -2.2043, -2.0570, -2.0570, -1.9504, -1.9431, -1.7440, -1.7440,
    -1.6308, -1.5386,
];
const TABLE_M23: [f64; 15] = [
    -3.9157, -3.8586, -3.4543, -3.4434, -2.3149, -2.2237, -2.2237, -2.0678, -2.0678, -1.9848, -1.9532, -1.7712, -1.7712,
    -1.6657, -1.5621,
];
const CHAIN: [f64; 4] = [-3.9, -1.5, 1.5, 3.9];

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

fn report(n: usize, title: &str, o: &Outcome, seconds: f64) {
    println!("[{}] criterion {n}: {title}: {} ({seconds:.0} s)", if o.pass { "PASS" } else { "FAIL" }, o.summary);
    for d in &o.details {
        println!("        {d}");
    }
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

/// Runs `sturm spectrum` and returns the energy column.
fn cli_energies(config_name: &str, shells: &str) -> Result<Vec<f64>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sturm"))
        .args(["spectrum", "--config"])
        .arg(config(config_name))
        .args(["--set", &format!("basis.shells={shells}")])
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    let text = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    text.lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).and_then(|v| v.parse().ok()).ok_or_else(|| format!("bad row {l:?}")))
        .collect()
}

fn table1(spectra: &[(usize, &[f64; 15], Vec<f64>)]) -> Outcome {
    let mut details = Vec::new();
    let (mut worst_all, mut worst_four) = (0.0f64, 0.0f64);
    let mut pass = true;
    for (m, table, got) in spectra {
        if got.len() < 15 {
            details.push(format!("M={m}: only {} levels", got.len()));
            pass = false;
            continue;
        }
        for (i, (&want, &e)) in table.iter().zip(got).enumerate() {
            let d = (e - want).abs();
            worst_all = worst_all.max(d);
            if i < 4 {
                worst_four = worst_four.max(d);
            }
            if d > 2e-3 || (i < 4 && d > 5e-4) {
                pass = false;
                details.push(format!("M={m} level {}: {e:.6} vs {want:.4} (|dE| = {d:.2e})", i + 1));
            }
        }
    }
    Outcome {
        pass,
        summary: format!("max |dE| = {worst_all:.2e} (tol 2e-3), first four {worst_four:.2e} (tol 5e-4)"),
        details,
    }
}

fn he6_level10() -> Outcome {
    let mut details = Vec::new();
    let mut worst = 0.0f64;
    let mut pass = true;
    for (shells, want) in [("M5", -2.414), ("M14", -2.828), ("M23", -2.872)] {
        match cli_energies("he6_fig4.json", shells) {
            Ok(e) if e.len() >= 10 => {
                let d = (e[9] - want).abs();
                worst = worst.max(d);
                pass &= d <= 2e-3;
                details.push(format!("{shells}: E10 = {:.6} vs {want} (|dE| = {d:.2e})", e[9]));
            }
            Ok(e) => {
                pass = false;
                details.push(format!("{shells}: only {} levels", e.len()));
            }
            Err(err) => {
                pass = false;
                details.push(format!("{shells}: {err}"));
            }
        }
    }
    Outcome { pass, summary: format!("max |dE| = {worst:.2e} (tol 2e-3)"), details }
}

fn single_ion() -> Outcome {
    let mut details = Vec::new();
    let mut worst = 0.0f64;
    let mut pass = true;
    for z in [1.0, 2.0] {
        let g = ClusterGeometry::chain_x(z, &[0.0]).unwrap();
        let basis = build_basis(&g, &Shell::standard_set(23).unwrap()).unwrap();
        let levels = sturm_core::find_levels(
            &g,
            &basis,
            &ScanConfig::for_geometry(&g),
            AssemblySpec::default(),
            Execution::default(),
        )
        .unwrap();
        // one root per basis function: every orbital is an exact eigenstate
        if levels.len() != basis.len() {
            pass = false;
        }
        for l in &levels {
            let n = (z / l.p0).round();
            let dp = (l.p0 - z / n).abs();
            let de = (l.energy + z * z / (2.0 * n * n)).abs();
            worst = worst.max(dp);
            pass &= dp <= 1e-9 && de <= 1e-8 && l.energy == -0.5 * l.p0 * l.p0;
        }
        details.push(format!("Z={z}: {} roots", levels.len()));
    }
    Outcome { pass, summary: format!("max |p0 - Z/n| = {worst:.2e} (tol 1e-9)"), details }
}

fn degeneracy(spectra: &[(usize, &[f64; 15], Vec<f64>)]) -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for (m, _, e) in spectra {
        if e.len() < 15 {
            pass = false;
            continue;
        }
        let pairs: Vec<f64> = [(6, 7), (8, 9), (12, 13)].iter().map(|&(a, b)| (e[a - 1] - e[b - 1]).abs()).collect();
        let worst = pairs.iter().cloned().fold(0.0, f64::max);
        let split = (e[13] - e[14]).abs();
        let ok_pairs = worst <= 1e-6;
        let ok_split = if *m == 5 { split <= 1e-6 } else { split >= 0.05 };
        pass &= ok_pairs && ok_split;
        details.push(format!(
            "M={m}: pairs (6,7),(8,9),(12,13) max gap {worst:.1e} (tol 1e-6); (14,15) gap {split:.4} ({})",
            if *m == 5 { "tol 1e-6" } else { "needs >= 0.05" }
        ));
    }
    Outcome { pass, summary: "degenerate pairs and the (14,15) splitting".into(), details }
}

fn monotone(spectra: &[(usize, &[f64; 15], Vec<f64>)]) -> Outcome {
    let mut details = Vec::new();
    let e5 = &spectra[0].2;
    let e14 = &spectra[1].2;
    let e23 = &spectra[2].2;
    let n = e5.len().min(e14.len()).min(e23.len()).min(15);
    let mut pass = n == 15;
    for i in 0..n {
        if !(e5[i] >= e14[i] && e14[i] >= e23[i]) {
            pass = false;
            details.push(format!("level {}: {:.6} {:.6} {:.6}", i + 1, e5[i], e14[i], e23[i]));
        }
    }
    Outcome { pass, summary: format!("E(M=5) >= E(M=14) >= E(M=23) checked on {n} levels"), details }
}

fn oracle(e23: &[f64]) -> Outcome {
    let g = ClusterGeometry::chain_x(2.0, &CHAIN).unwrap();
    let run = match oracle_spectrum(&g, &[0, 1], 8, DEFAULT_SPACING, DEFAULT_MARGIN, Execution::default()) {
        Ok(r) => r,
        Err(e) => return Outcome { pass: false, summary: format!("grid solve failed: {e}"), details: vec![] },
    };
    let mut details = Vec::new();
    let mut worst = 0.0f64;
    for (k, l) in run.levels.iter().take(4).enumerate() {
        let d = (l.extrapolated - e23[k]).abs();
        worst = worst.max(d);
        details.push(format!("level {}: grid {:.6}, momentum {:.6}", k + 1, l.extrapolated, e23[k]));
    }
    let mut pass = worst <= 5e-3;
    let basis = build_basis(&g, &Shell::standard_set(23).unwrap()).unwrap();
    let solver = Solver::new(&g, &basis, AssemblySpec::default(), Execution::default()).unwrap();
    let levels = solver.find_levels(&ScanConfig { max_levels: Some(14), ..ScanConfig::for_geometry(&g) }).unwrap();
    let line = Sampling::Line { origin: [0.0; 3], direction: [1.0, 0.0, 0.0], start: -10.0, stop: 10.0, step: 0.1 };
    let mut profile_worst = 0.0f64;
    for k in [5usize, 14] {
        match profile_difference(&solver, &run, &levels[k - 1], &line) {
            Ok(d) => {
                profile_worst = profile_worst.max(d);
                details.push(format!("level {k} profile on x in [-10, 10]: max |dpsi| = {d:.2e}"));
            }
            Err(e) => {
                pass = false;
                details.push(format!("level {k} profile: {e}"));
            }
        }
    }
    pass &= profile_worst <= 2e-2;
    Outcome {
        pass,
        summary: format!("max |dE| = {worst:.2e} (tol 5e-3), max profile diff {profile_worst:.2e} (tol 2e-2)"),
        details,
    }
}

fn scan() -> Outcome {
    let r23 = [2.0, 2.5, 3.0, 4.0, 5.0, 6.0];
    let probe = ClusterGeometry::chain_x(2.0, &CHAIN).unwrap();
    let rows = geometry_scan(
        2.0,
        2.4,
        &r23,
        &Shell::standard_set(23).unwrap(),
        &ScanConfig::for_geometry(&probe),
        AssemblySpec::default(),
        Execution::default(),
    )
    .unwrap();
    let mut details = Vec::new();
    let mut pass = true;
    let mut gaps = Vec::new();
    for row in &rows {
        match &row.energies {
            Ok(e) => {
                let (g12, g34) = (e[1] - e[0], e[3] - e[2]);
                pass &= g12 > g34;
                gaps.push(g12);
                details.push(format!("R23 = {}: E2-E1 = {g12:.6}, E4-E3 = {g34:.6}", row.r23));
            }
            Err(err) => {
                pass = false;
                details.push(format!("R23 = {}: {err}", row.r23));
            }
        }
    }
    pass &= gaps.len() == r23.len() && gaps.windows(2).all(|w| w[1] < w[0]);
    Outcome { pass, summary: "E2-E1 decreasing in R23 and above E4-E3 at every point".into(), details }
}

fn qn(n: u32, l: u32, m: i32) -> QuantumNumbers {
    QuantumNumbers::new(n, l, m).unwrap()
}

/// Σ over the intermediate orbitals at R2 with principal number ≤ n_max.
fn three_center_expansion(r1: [f64; 3], r2: [f64; 3], p0: f64, n_max: u32, spec: &QuadratureSpec) -> f64 {
    let s = qn(1, 0, 0);
    let d = [r2[0] - r1[0], r2[1] - r1[1], r2[2] - r1[2]];
    sturm_core::hamiltonian::intermediate_set(n_max)
        .into_iter()
        .map(|mid| {
            let a = overlap_s(mid, s, r2, p0, spec).unwrap();
            let b = overlap_s(mid, s, d, p0, spec).unwrap();
            p0 * a * b / mid.n as f64
        })
        .sum()
}

fn properties() -> Outcome {
    let mut details = Vec::new();
    let spec = QuadratureSpec { tolerance: 1e-10, ..Default::default() };

    // Fock sphere against position space
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let mut pick = || {
            let n = rng.random_range(1..=3u32);
            let l = rng.random_range(0..n);
            let m = rng.random_range(-(l as i32)..=(l as i32));
            qn(n, l, m)
        };
        let (a, b) = (pick(), pick());
        let d = [0, 1, 2].map(|_| rng.random_range(-2.0..2.0));
        let p0 = rng.random_range(0.5..1.5);
        let f = overlap_via_fock_sphere(a, b, d, p0, &spec).unwrap();
        let s = overlap_s(a, b, d, p0, &spec).unwrap();
        worst = worst.max((f - s).abs());
    }
    let fock_ok = worst <= 1e-7;
    details.push(format!("Fock sphere vs position space, 50 cases: max diff {worst:.2e} (tol 1e-7)"));

    // 1s-1s ket against the potential of the 1s density
    let mut ket_worst = 0.0f64;
    let tight = QuadratureSpec { tolerance: 1e-11, ..Default::default() };
    for r in [0.5, 1.0, 2.0, 3.7, 6.0, 10.0] {
        for p0 in [0.7, 1.0, 2.0] {
            let v = two_center_ket(qn(1, 0, 0), qn(1, 0, 0), [0.36 * r, -0.48 * r, 0.8 * r], p0, &tight).unwrap();
            let exact = (1.0 - (-2.0 * p0 * r).exp() * (1.0 + p0 * r)) / r;
            ket_worst = ket_worst.max((v - exact).abs());
        }
    }
    let ket_ok = ket_worst <= 1e-8;
    details.push(format!("1s-1s ket vs closed form: max diff {ket_worst:.2e} (tol 1e-8)"));

    // three-center integral against its truncated expansion
    let (r1, r2, p0) = ([1.0, 0.0, 0.0], [0.0, 0.8, 0.0], 0.5);
    let exact = sturm_core::integrals::three_center(qn(1, 0, 0), qn(1, 0, 0), r1, r2, p0, &tight).unwrap();
    let residuals: Vec<f64> =
        (1..=6).map(|n| ((three_center_expansion(r1, r2, p0, n, &spec) - exact) / exact).abs()).collect();
    let mono_ok = residuals.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = residuals.iter().map(|r| format!("{r:.2e}")).collect();
    details.push(format!("three-center expansion residual, n'' = 1..6: {}", shown.join(" ")));

    // exact reduction against the truncated double sum on a triangle
    let h = 0.5 * 3f64.sqrt();
    let tri = ClusterGeometry::new(vec![
        Ion { charge: 1.0, position: [0.0, 0.0, 0.0] },
        Ion { charge: 1.0, position: [1.0, 0.0, 0.0] },
        Ion { charge: 1.0, position: [0.5, h, 0.0] },
    ])
    .unwrap();
    let basis = build_basis(&tri, &Shell::standard_set(1).unwrap()).unwrap();
    let cache = Arc::new(IntegralCache::new());
    let exact_h = assemble(&tri, &basis, 1.0, AssemblySpec::default()).unwrap().entries;
    let trunc_h = assemble_truncated(&tri, &basis, 1.0, 8, &spec, &cache).unwrap().entries;
    let red = (&exact_h - &trunc_h).abs().max();
    let red_ok = red <= 1e-7;
    details.push(format!("H reduction vs n'' <= 8 double sum (unit triangle, 1s, p0 = 1): max diff {red:.2e} (tol 1e-7)"));

    // orthonormality of the four-dimensional harmonics
    let s3 = s3_gram_error();
    let s3_ok = s3 <= 1e-10;
    details.push(format!("S3 harmonics n <= 4: max Gram error {s3:.2e} (tol 1e-10)"));

    let pass = fock_ok && ket_ok && mono_ok && red_ok && s3_ok;
    let failed: Vec<&str> = [
        (fock_ok, "fock"),
        (ket_ok, "ket"),
        (mono_ok, "three-center monotone"),
        (red_ok, "reduction"),
        (s3_ok, "S3"),
    ]
    .iter()
    .filter(|(ok, _)| !ok)
    .map(|(_, n)| *n)
    .collect();
    let summary =
        if failed.is_empty() { "all five suites within tolerance".into() } else { format!("failed: {}", failed.join(", ")) };
    Outcome { pass, summary, details }
}

/// Gauss-Legendre in cos α and cos θ, uniform in φ; exact for the
/// polynomial degrees of `n ≤ 4`.
fn s3_gram_error() -> f64 {
    use sturm_core::basis::{hyperspherical_harmonic, FockAngles};
    use sturm_core::quadrature::GaussLegendre;
    use std::f64::consts::PI;
    let all = sturm_core::hamiltonian::intermediate_set(4);
    let ga = GaussLegendre::new(24);
    let gt = GaussLegendre::new(12);
    let nphi = 16;
    let dim = all.len();
    let mut gram = vec![0.0; dim * dim];
    let mut vals = vec![0.0; dim];
    for (alpha, wa) in ga.on_interval(0.0, PI) {
        for (ct, wt) in gt.on_interval(-1.0, 1.0) {
            for k in 0..nphi {
                let phi = 2.0 * PI * k as f64 / nphi as f64;
                let ang = FockAngles { alpha, theta: ct.acos(), phi };
                let w = wa * alpha.sin().powi(2) * wt * 2.0 * PI / nphi as f64;
                for (v, q) in vals.iter_mut().zip(&all) {
                    *v = hyperspherical_harmonic(*q, ang);
                }
                for i in 0..dim {
                    for j in 0..dim {
                        gram[i * dim + j] += w * vals[i] * vals[j];
                    }
                }
            }
        }
    }
    let mut worst = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            let e = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[i * dim + j] - e).abs());
        }
    }
    worst
}

fn main() {
    let started = Instant::now();
    let mut all_pass = true;
    let mut spectra = Vec::new();
    let t = Instant::now();
    for (m, table) in [(5usize, &TABLE_M5), (14, &TABLE_M14), (23, &TABLE_M23)] {
        let got = cli_energies("he4_table1.json", &format!("M{m}")).unwrap_or_else(|e| {
            println!("spectrum M={m} failed: {e}");
            Vec::new()
        });
        spectra.push((m, table, got));
    }
    let spectra_time = t.elapsed().as_secs_f64();

    let mut run = |n: usize, title: &str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        all_pass &= o.pass;
        report(n, title, &o, t.elapsed().as_secs_f64());
    };
    run(1, "Table I reproduction", &|| table1(&spectra));
    println!("        (spectra for criteria 1, 4, 5 took {spectra_time:.0} s)");
    run(2, "He6 level 10", &he6_level10);
    run(3, "single-ion limit", &single_ion);
    run(4, "degeneracy pattern", &|| degeneracy(&spectra));
    run(5, "monotone basis convergence", &|| monotone(&spectra));
    let e23 = spectra[2].2.clone();
    run(6, "grid oracle agreement", &|| {
        if e23.len() < 4 {
            return Outcome { pass: false, summary: "no M=23 spectrum".into(), details: vec![] };
        }
        oracle(&e23)
    });
    run(7, "geometry scan", &scan);
    run(8, "property suites", &properties);
    println!("total {:.0} s", started.elapsed().as_secs_f64());
    if !all_pass {
        std::process::exit(1);
    }
}
