use approx::assert_relative_eq;
use coulomb_lab::jellium::*;
use coulomb_lab::kernel::{kernel_r, Dimension};
use coulomb_lab::Error;
use proptest::prelude::*;
use std::f64::consts::PI;

const TOL: f64 = DEFAULT_EWALD_TOL;

fn rotation(t: f64) -> Vec<Vec<f64>> {
    vec![vec![t.cos(), -t.sin()], vec![t.sin(), t.cos()]]
}

#[test]
fn catalog_energies_at_unit_density() {
    let expect = [
        ("triangular", -8.300825615358),
        ("square", -8.234321224662),
        ("rhombic45", -8.174213125591),
        ("sc", -35.6545),
        ("bcc", -36.2975),
        ("fcc", -36.2952),
    ];
    for dim in [Dimension::Two, Dimension::Three] {
        for lat in Lattice::catalog(dim) {
            let w = lattice_energy(&lat, TOL).unwrap();
            let (_, e) = expect.iter().find(|(n, _)| *n == lat.name).unwrap();
            let tol = if dim == Dimension::Two { 1e-10 } else { 1e-4 };
            assert!((w - e).abs() < tol, "{}: {w}", lat.name);
        }
    }
}

#[test]
fn simple_cubic_madelung_matches_literature() {
    // jellium Madelung constant of the unit simple cubic lattice, 2.837297479...
    let t = Lattice::simple_cubic().unit_torus();
    let r = madelung_constant(&t, &EwaldParameters::for_torus(&t, TOL).unwrap());
    assert_relative_eq!(4.0 * PI * r, -2.837_297_479_48, max_relative = 1e-10);
}

#[test]
fn green_is_independent_of_the_splitting() {
    for lat in [Lattice::triangular(), Lattice::rhombic(70.0), Lattice::fcc()] {
        let t = lat.unit_torus();
        let base = EwaldParameters::for_torus(&t, TOL).unwrap();
        let x: Vec<f64> = (0..lat.d()).map(|k| 0.13 + 0.21 * k as f64).collect();
        let g0 = torus_green(&x, &t, &base).unwrap();
        for f in [0.3, 0.7, 1.5, 3.0] {
            let p = EwaldParameters::with_alpha(&t, f * base.alpha, TOL).unwrap();
            assert!((torus_green(&x, &t, &p).unwrap() - g0).abs() < 1e-10, "{} alpha x{f}", lat.name);
            assert!((madelung_constant(&t, &p) - madelung_constant(&t, &base)).abs() < 1e-10);
        }
    }
}

#[test]
fn green_is_periodic_and_singular_at_lattice_points() {
    let lat = Lattice::triangular();
    let t = lat.unit_torus();
    let p = EwaldParameters::for_torus(&t, TOL).unwrap();
    let x = [0.3, 0.1];
    let y = [0.3 + lat.basis[0][0] - 2.0 * lat.basis[1][0], 0.1 - 2.0 * lat.basis[1][1]];
    assert!((torus_green(&x, &t, &p).unwrap() - torus_green(&y, &t, &p).unwrap()).abs() < 1e-12);
    let on = [lat.basis[1][0], lat.basis[1][1]];
    assert!(matches!(torus_green(&on, &t, &p), Err(Error::Singularity(_))));
}

#[test]
fn green_minus_kernel_tends_to_madelung() {
    let t = Lattice::square().unit_torus();
    let p = EwaldParameters::for_torus(&t, TOL).unwrap();
    let r = madelung_constant(&t, &p);
    let eps = 1e-5;
    let g = torus_green(&[eps, 0.0], &t, &p).unwrap();
    // G = w / (2 pi) + R + O(|x|^2)
    assert!((g - kernel_r(eps, Dimension::Two) / (2.0 * PI) - r).abs() < 1e-8);
}

#[test]
fn green_has_zero_mean_over_the_cell() {
    let t = Lattice::square().unit_torus();
    let ew = Ewald::new(&t, &EwaldParameters::for_torus(&t, TOL).unwrap());
    // midpoint rule in polar-free form: the log singularity sits on no node
    let m = 160;
    let mut acc = 0.0;
    for i in 0..m {
        for j in 0..m {
            let x = [(i as f64 + 0.5) / m as f64, (j as f64 + 0.5) / m as f64];
            acc += ew.green(&x).unwrap();
        }
    }
    assert!((acc / (m * m) as f64).abs() < 2e-4, "{}", acc / (m * m) as f64);
}

#[test]
fn supercells_keep_the_energy_per_volume() {
    for lat in [Lattice::triangular(), Lattice::bcc()] {
        let w = lattice_energy_direct(&lat, TOL).unwrap();
        for k in [2, 3] {
            let t = lat.supercell_torus(k);
            let wk = periodic_renormalized_energy(&t, &EwaldParameters::for_torus(&t, TOL).unwrap()).unwrap();
            assert!((wk - w).abs() < 1e-9 * w.abs(), "{} k={k}: {wk} vs {w}", lat.name);
        }
    }
}

#[test]
fn triangular_is_the_best_catalog_lattice_in_the_plane() {
    let (name, _) = catalog_minimum(Dimension::Two).unwrap();
    assert_eq!(name, "triangular");
    let tri = lattice_energy(&Lattice::triangular(), TOL).unwrap();
    for angle in [50.0, 55.0, 65.0, 75.0, 85.0, 90.0] {
        assert!(tri < lattice_energy(&Lattice::rhombic(angle), TOL).unwrap(), "{angle}");
    }
}

#[test]
fn bcc_beats_sc_and_fcc_in_space() {
    let (name, _) = catalog_minimum(Dimension::Three).unwrap();
    assert_eq!(name, "bcc");
}

#[test]
fn zeta_differences_track_the_energy_ordering() {
    let z = zeta_renorm_consistency(&Lattice::triangular(), &Lattice::square(), &[0.1, 0.5, 1.0, 2.0], TOL).unwrap();
    assert!(z.same_sign && z.w_difference < 0.0);
    assert!(z.fitted_constant.is_finite() && z.fitted_constant > 0.0);
    let same = zeta_renorm_consistency(&Lattice::square(), &Lattice::square(), &[0.5], TOL).unwrap();
    assert!(same.fitted_constant.is_nan() && same.same_sign);
    assert!(matches!(
        zeta_renorm_consistency(&Lattice::bcc(), &Lattice::fcc(), &[0.5], TOL),
        Err(Error::Domain(_))
    ));
}

#[test]
fn theta_and_direct_epstein_sums_agree() {
    for (lat, s) in [(Lattice::square(), 1.0), (Lattice::triangular(), 2.5), (Lattice::simple_cubic(), 2.0), (Lattice::fcc(), 4.0)] {
        let theta = epstein_zeta(&lat, s, 1e-15).unwrap();
        let direct = epstein_zeta_direct(&lat, s, 12.0).unwrap();
        assert!((theta - direct).abs() < 1e-9 * theta.abs(), "{} s={s}: {theta} vs {direct}", lat.name);
    }
    assert!(matches!(epstein_zeta_direct(&Lattice::square(), -0.5, 10.0), Err(Error::Domain(_))));
}

#[test]
fn box_average_approaches_the_periodic_energy() {
    let t = Lattice::triangular().unit_torus();
    let w = lattice_energy_direct(&Lattice::triangular(), TOL).unwrap();
    let mut prev = f64::INFINITY;
    for eta in [0.2, 0.1, 0.05, 0.01] {
        let b = box_averaged_w_eta(&t, eta, &[1, 2], TOL).unwrap();
        let gap = (b.value - w).abs();
        assert!(gap < prev, "eta {eta}");
        assert!(b.spread < 1e-9);
        prev = gap;
    }
    assert!(prev < 1e-2 * w.abs());
}

#[test]
fn overlapping_smearing_balls_are_rejected() {
    let t = Lattice::square().unit_torus();
    assert!(matches!(box_averaged_w_eta(&t, 0.6, &[1], TOL), Err(Error::Separation { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rotation_leaves_the_energy_unchanged(t in 0.0..(2.0 * PI), angle in 50.0f64..90.0) {
        let lat = Lattice::rhombic(angle);
        let w = lattice_energy(&lat, TOL).unwrap();
        let wr = lattice_energy(&lat.transformed(&rotation(t)), TOL).unwrap();
        prop_assert!((w - wr).abs() < 1e-10 * w.abs());
    }

    #[test]
    fn scaling_relation_holds(m in 0.2f64..5.0, three in any::<bool>()) {
        let lat = if three { Lattice::bcc() } else { Lattice::triangular() };
        let w1 = lattice_energy_direct(&lat, TOL).unwrap();
        let wm = lattice_energy_direct(&lat.with_density(m), TOL).unwrap();
        let pred = scale_energy(w1, m, lat.dimension);
        prop_assert!((wm - pred).abs() < 1e-9 * pred.abs().max(1.0));
    }

    #[test]
    fn epstein_zeta_scales_homogeneously(t in 0.5f64..2.0, s in 0.2f64..3.0) {
        let lat = Lattice::square();
        let z = epstein_zeta(&lat, s, 1e-15).unwrap();
        let zt = epstein_zeta(&lat.scaled(t), s, 1e-15).unwrap();
        prop_assert!((zt - t.powf(-(2.0 + s)) * z).abs() < 1e-10 * z.abs());
    }

    #[test]
    fn energy_does_not_depend_on_the_basis_choice(k in -3i32..=3) {
        // unimodular change of basis: (b1, b2) -> (b1, b2 + k b1)
        let lat = Lattice::triangular();
        let b = &lat.basis;
        let nb = vec![b[0].clone(), vec![b[1][0] + k as f64 * b[0][0], b[1][1] + k as f64 * b[0][1]]];
        let other = Lattice::new("sheared", Dimension::Two, nb).unwrap();
        let w = lattice_energy(&lat, TOL).unwrap();
        prop_assert!((lattice_energy(&other, TOL).unwrap() - w).abs() < 1e-9 * w.abs());
    }
}
