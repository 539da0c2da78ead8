use sturm_core::gridref::{richardson, solve_grid, GridMode, GridSpec};
use sturm_core::ClusterGeometry;

fn hydrogen_energy(h: f64, margin: f64) -> f64 {
    let g = ClusterGeometry::chain_x(1.0, &[0.0]).unwrap();
    let spec = GridSpec::around(&g, GridMode::Axial2d, h, margin, 0, 1).unwrap();
    solve_grid(&g, &spec).unwrap().levels[0].energy
}

#[test]
fn hydrogen_converges_at_second_order() {
    let errs: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|&h| (hydrogen_energy(h, 15.0) + 0.5).abs()).collect();
    assert!(errs[2] < 5e-3, "error at h = 0.05: {}", errs[2]);
    let slope = (errs[0] / errs[2]).log2() / 2.0;
    assert!(slope >= 1.8, "observed order {slope}, errors {errs:?}");

    let coarse = hydrogen_energy(0.1, 15.0);
    let fine = hydrogen_energy(0.05, 15.0);
    let ext = richardson(&[coarse], &[fine]).unwrap()[0];
    assert!((ext + 0.5).abs() < (fine + 0.5).abs());
}

#[test]
fn helium_ion_excited_sector() {
    let g = ClusterGeometry::chain_x(2.0, &[0.0]).unwrap();
    // the 2p0 and 2s levels of He+ sit at -0.5
    let spec = GridSpec::around(&g, GridMode::Axial2d, 0.1, 14.0, 0, 3).unwrap();
    let sol = solve_grid(&g, &spec).unwrap();
    let e = sol.energies();
    assert!((e[0] + 2.0).abs() < 2e-2, "{e:?}");
    assert!((e[1] + 0.5).abs() < 5e-3 && (e[2] + 0.5).abs() < 5e-3, "{e:?}");
    // |m| = 1 sector starts at n = 2
    let spec = GridSpec::around(&g, GridMode::Axial2d, 0.1, 14.0, 1, 1).unwrap();
    let e1 = solve_grid(&g, &spec).unwrap().levels[0].energy;
    assert!((e1 + 0.5).abs() < 5e-3, "{e1}");
}

#[test]
fn cartesian_mode_hydrogen() {
    let g = ClusterGeometry::chain_x(1.0, &[0.0]).unwrap();
    let spec = GridSpec::around(&g, GridMode::Cartesian3d, 0.3, 8.0, 0, 1).unwrap();
    let sol = solve_grid(&g, &spec).unwrap();
    // coarse grid: only a loose check
    assert!((sol.levels[0].energy + 0.5).abs() < 5e-2, "{}", sol.levels[0].energy);
    let mut out = Vec::new();
    sol.write_state(0, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("x y z psi\n"));
}

#[test]
fn axial_export_has_header_and_rows() {
    let g = ClusterGeometry::chain_x(1.0, &[-0.7, 0.7]).unwrap();
    let spec = GridSpec::around(&g, GridMode::Axial2d, 0.25, 8.0, 0, 1).unwrap();
    let sol = solve_grid(&g, &spec).unwrap();
    let mut out = Vec::new();
    sol.write_state(0, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rho z u"));
    let row: Vec<f64> = lines.next().unwrap().split(' ').map(|s| s.parse().unwrap()).collect();
    assert_eq!(row.len(), 3);
    assert!(sol.value_at(5, [0.0; 3]).is_err());
}
