use coulomb_lab::equilibrium::*;
use coulomb_lab::grid::Grid;
use coulomb_lab::kernel::Dimension;
use coulomb_lab::potential::ZeroPotential;
use coulomb_lab::{Error, PowerPotential};
use proptest::prelude::*;
use std::f64::consts::PI;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|t| t * t).sum::<f64>().sqrt()
}

#[test]
fn quartic_support_radius() {
    // Delta |x|^4 = 16 r^2, density 4 r^2 / pi, mass 2 R^4
    let v = PowerPotential::new(1.0, 4.0, vec![0.0, 0.0]).unwrap();
    let mu = solve_equilibrium_radial(&v, Dimension::Two).unwrap();
    assert!((mu.support_radius().unwrap() - 0.5f64.powf(0.25)).abs() < 1e-12);
    assert!((mu.density_at(&[0.5, 0.0]) - 1.0 / PI).abs() < 1e-12);
    assert!((mu.mass() - 1.0).abs() < 1e-3);
}

#[test]
fn obstacle_solver_matches_the_quartic_closed_form() {
    let v = PowerPotential::new(1.0, 4.0, vec![0.0, 0.0]).unwrap();
    let exact = solve_equilibrium_radial(&v, Dimension::Two).unwrap();
    let grid = Grid::cube(Dimension::Two, &[0.0, 0.0], 1.1, 0.02).unwrap();
    let mu = solve_equilibrium_obstacle(&v, &grid, 1e-10).unwrap();
    assert!((mu.mass() - 1.0).abs() < 1e-6);
    let l1 = mu.l1_distance_to(|x| exact.density_at(x), 4);
    assert!(l1 < 0.02, "{l1}");
    assert!((mu.robin_constant - exact.robin_constant).abs() < 1e-2);
    let z = zeta_potential(&mu, &v);
    assert!(z.min_value > -1e-6);
}

#[test]
fn obstacle_solver_follows_a_shifted_center() {
    let v = PowerPotential::quadratic(Dimension::Two).centered_at(&[0.3, -0.2]);
    let grid = Grid::cube(Dimension::Two, &[0.3, -0.2], 1.3, 0.04).unwrap();
    let mu = solve_equilibrium_obstacle(&v, &grid, 1e-10).unwrap();
    let c = mu.centroid();
    assert!((c[0] - 0.3).abs() < 1e-3 && (c[1] + 0.2).abs() < 1e-3, "{c:?}");
}

#[test]
fn non_confining_potentials_have_no_equilibrium() {
    let grid = Grid::cube(Dimension::Two, &[0.0, 0.0], 1.0, 0.1).unwrap();
    assert!(matches!(solve_equilibrium_obstacle(&ZeroPotential, &grid, 1e-8), Err(Error::NoEquilibrium(_))));
    assert!(solve_equilibrium_obstacle(&PowerPotential::quadratic(Dimension::Two), &grid, 0.0).is_err());
}

#[test]
fn zeta_vanishes_on_the_support_and_grows_outside() {
    for dim in [Dimension::Two, Dimension::Three] {
        let d = dim.get();
        let v = PowerPotential::quadratic(dim);
        let mu = solve_equilibrium_radial(&v, dim).unwrap();
        let mut prev = 0.0;
        for k in 0..40 {
            let mut x = vec![0.0; d];
            x[0] = 0.05 * k as f64;
            let z = mu.zeta_at(&x, &v);
            if norm(&x) <= 1.0 {
                assert!(z.abs() < 1e-12);
            } else {
                assert!(z > prev);
                prev = z;
            }
        }
    }
}

fn mu_beta(v: &PowerPotential, n: usize, beta: f64, grid: &Grid) -> EquilibriumMeasure {
    solve_mu_beta(v, n, beta, grid).unwrap()
}

#[test]
fn mean_field_density_concentrates_at_low_temperature() {
    let v = PowerPotential::quadratic(Dimension::Two);
    let exact = solve_equilibrium_radial(&v, Dimension::Two).unwrap();
    let grid = Grid::cube(Dimension::Two, &[0.0, 0.0], 1.6, 0.025).unwrap();
    let mut prev = f64::INFINITY;
    for nb in [10.0, 100.0, 1000.0] {
        let mu = mu_beta(&v, 10, nb / 10.0, &grid);
        assert!((mu.mass() - 1.0).abs() < 1e-9);
        let l1 = mu.l1_distance_to(|x| exact.density_at(x), 2);
        assert!(l1 < prev, "n beta {nb}: {l1}");
        prev = l1;
    }
    assert!(prev < 0.15, "{prev}");
}

#[test]
fn mean_field_free_energy_tends_to_the_equilibrium_energy() {
    let v = PowerPotential::quadratic(Dimension::Two);
    let grid = Grid::cube(Dimension::Two, &[0.0, 0.0], 1.5, 0.02).unwrap();
    let mu = mu_beta(&v, 100, 100.0, &grid);
    let f = mf_free_energy(&mu, &v, 100, 100.0).unwrap();
    assert!((f - 0.75).abs() < 0.01, "{f}");
}

#[test]
fn sidecar_round_trips() {
    let mu = solve_equilibrium_radial(&PowerPotential::quadratic(Dimension::Three), Dimension::Three).unwrap();
    let text = serde_json::to_string(&mu.sidecar()).unwrap();
    let back: MeasureSidecar = serde_json::from_str(&text).unwrap();
    assert_eq!(back.support_radius, mu.support_radius());
    assert_eq!(back.grid, mu.grid);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn quadratic_support_scales_with_the_strength(alpha in 0.2f64..5.0, three in any::<bool>()) {
        let dim = if three { Dimension::Three } else { Dimension::Two };
        let d = dim.get();
        let v = PowerPotential::new(alpha, 2.0, vec![0.0; d]).unwrap();
        let mu = solve_equilibrium_radial(&v, dim).unwrap();
        let r = mu.support_radius().unwrap();
        let expect = if three { alpha.powf(-1.0 / 3.0) } else { alpha.powf(-0.5) };
        prop_assert!((r - expect).abs() < 1e-12 * expect);
        let e = mf_energy(&mu, &v).unwrap();
        prop_assert!(e.is_finite());
    }

    #[test]
    fn energy_is_minimal_at_the_equilibrium(t in 0.5f64..2.0) {
        prop_assume!((t - 1.0).abs() > 0.02);
        // the uniform disk of radius t has E = -log t + 1/4 + t^2 / 2
        let v = PowerPotential::quadratic(Dimension::Two);
        let e0 = mf_energy(&solve_equilibrium_radial(&v, Dimension::Two).unwrap(), &v).unwrap();
        let et = -t.ln() + 0.25 + 0.5 * t * t;
        prop_assert!(et > e0);
    }
}
