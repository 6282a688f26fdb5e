use coulomb_lab::diagnostics::*;
use coulomb_lab::equilibrium::solve_equilibrium_radial;
use coulomb_lab::grid::Grid;
use coulomb_lab::jellium::{Lattice, TorusConfiguration};
use coulomb_lab::kernel::{Configuration, Dimension};
use coulomb_lab::sampler::sample_iid;
use coulomb_lab::PowerPotential;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn disk() -> coulomb_lab::equilibrium::EquilibriumMeasure {
    solve_equilibrium_radial(&PowerPotential::quadratic(Dimension::Two), Dimension::Two).unwrap()
}

fn lattice_patch(basis: [[f64; 2]; 2], k: i32) -> Configuration {
    let mut pts = Vec::new();
    for i in -k..=k {
        for j in -k..=k {
            pts.push(vec![i as f64 * basis[0][0] + j as f64 * basis[1][0], i as f64 * basis[0][1] + j as f64 * basis[1][1]]);
        }
    }
    Configuration::from_points(Dimension::Two, &pts).unwrap()
}

#[test]
fn discrepancy_is_unbiased_for_iid_samples() {
    let mu0 = disk();
    let n = 50;
    let m = 4000;
    let vals: Vec<f64> = (0..m)
        .map(|k| charge_discrepancy(&sample_iid(&mu0, n, 1, k).unwrap(), &mu0, &[0.2, -0.1], 0.4).unwrap())
        .collect();
    let mean = vals.iter().sum::<f64>() / m as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    assert!(mean.abs() < 4.0 * (var / m as f64).sqrt(), "{mean}");
    // binomial variance n p (1 - p) with p = 0.16
    assert!((var - n as f64 * 0.16 * 0.84).abs() < 0.1 * var, "{var}");
}

#[test]
fn discrepancy_bookkeeping() {
    let mu0 = disk();
    let c = sample_iid(&mu0, 30, 2, 0).unwrap();
    assert!(charge_discrepancy(&c, &mu0, &[0.0, 0.0], 1.0).unwrap().abs() < 1e-9);
    assert_eq!(charge_discrepancy(&c, &mu0, &[5.0, 5.0], 0.5).unwrap(), 0.0);
    assert!(charge_discrepancy(&c, &mu0, &[0.0, 0.0], 0.0).is_err());
}

#[test]
fn scales_are_tagged_around_the_micro_radius() {
    let rn = micro_radius(100, Dimension::Two);
    assert!((rn - 100f64.powf(-0.25)).abs() < 1e-15);
    assert_eq!(Scale::of(rn, 100, Dimension::Two), Scale::Micro);
    assert_eq!(Scale::of(3.0 * rn, 100, Dimension::Two), Scale::Macro);
}

#[test]
fn tails_decrease_in_lambda_and_warn_when_short() {
    let mu0 = disk();
    let samples: Vec<Configuration> = (0..200).map(|k| sample_iid(&mu0, 60, 3, k).unwrap()).collect();
    let t = fluctuation_tails(&samples, &mu0, &[0.2, 0.4], &[0.1, 0.3, 0.6], 1).unwrap();
    assert!(t.wide_intervals);
    assert_eq!(t.samples.len(), 400);
    for w in t.rows.windows(2).filter(|w| w[0].radius == w[1].radius) {
        assert!(w[1].probability <= w[0].probability);
    }
    for r in &t.rows {
        assert!(r.lower <= r.probability && r.probability <= r.upper);
    }
}

#[test]
fn density_profile_converges_for_iid_samples() {
    let mu0 = disk();
    let grid = Grid::cube(Dimension::Two, &[0.0, 0.0], 1.1, 0.1).unwrap();
    let mut prev = f64::INFINITY;
    for m in [10u64, 100, 1000] {
        let samples: Vec<Configuration> = (0..m).map(|k| sample_iid(&mu0, 100, 4, k).unwrap()).collect();
        let p = density_profile(&samples, &mu0, &grid).unwrap();
        assert!(p.l1 < prev);
        assert_eq!(p.outside, 0.0);
        assert_eq!(p.gaps.len(), 75);
        assert!(p.gaps.iter().all(|g| g.normalized <= p.weak_proxy));
        prev = p.l1;
    }
    assert!(prev < 0.1, "{prev}");
}

#[test]
fn triangular_order_is_one_and_square_order_is_zero() {
    let a = 1.0;
    let tri = lattice_patch([[a, 0.0], [0.5 * a, 0.5 * 3f64.sqrt() * a]], 6);
    let b = bond_order_psi6(&tri).unwrap();
    for (v, &inside) in b.values.iter().zip(&b.interior) {
        if inside {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }
    let sq = lattice_patch([[1.0, 0.0], [0.0, 1.0]], 6);
    let b = bond_order_psi6(&sq).unwrap();
    assert!(b.interior_mean().unwrap() < 1e-9, "{:?}", b.interior_mean());
}

#[test]
fn poisson_scatter_is_disordered() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<Vec<f64>> = (0..500).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
    let c = Configuration::from_points(Dimension::Two, &pts).unwrap();
    assert!(bond_order_psi6(&c).unwrap().interior_mean().unwrap() < 0.5);
}

#[test]
fn bond_order_needs_planar_input() {
    let c = Configuration::new(Dimension::Three, vec![0.0; 24]).unwrap();
    assert!(bond_order_psi6(&c).is_err());
    let few = Configuration::new(Dimension::Two, (0..8).map(|k| k as f64).collect()).unwrap();
    assert!(bond_order_psi6(&few).is_err());
}

#[test]
fn lattice_density_is_exact_on_whole_periods() {
    let t = Lattice::square().unit_torus();
    let r = period_density_check(&t, &[1.0, 2.0, 5.0]).unwrap();
    assert!(r.rungs.iter().all(|g| (g.ratio - 1.0).abs() < 1e-12));
    let dense = Lattice::simple_cubic().with_density(8.0).unit_torus();
    let r = period_density_check(&dense, &[1.0, 2.0]).unwrap();
    assert!(r.rungs.iter().all(|g| (g.ratio - 8.0).abs() < 1e-12));
}

#[test]
fn incommensurate_cubes_stay_in_the_envelope() {
    let t = Lattice::triangular().unit_torus();
    let r = period_density_check(&t, &[1.3, 2.7, 5.1, 10.3, 20.9]).unwrap();
    assert!(r.converges);
    assert!(r.rungs.iter().all(|g| g.within_envelope));
    assert!(r.rungs.last().unwrap().deviation < r.rungs[0].deviation);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pts: Vec<Vec<f64>> = (0..7).map(|_| vec![rng.gen_range(0.0..2.0), rng.gen_range(0.0..3.0)]).collect();
    let tc = TorusConfiguration::new(Dimension::Two, vec![vec![2.0, 0.0], vec![0.0, 3.0]], pts).unwrap();
    let r = period_density_check(&tc, &[3.3, 7.1, 15.2]).unwrap();
    assert!(r.rungs.iter().all(|g| g.within_envelope));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn discrepancy_is_rotation_invariant(t in 0.0..std::f64::consts::TAU, seed in 0u64..100, r in 0.05f64..0.8) {
        let mu0 = disk();
        let c = sample_iid(&mu0, 40, seed, 0).unwrap();
        let rot = |p: &[f64]| vec![t.cos() * p[0] - t.sin() * p[1], t.sin() * p[0] + t.cos() * p[1]];
        let rc = Configuration::from_points(Dimension::Two, &c.points().map(rot).collect::<Vec<_>>()).unwrap();
        let x = [0.3, -0.2];
        let d0 = charge_discrepancy(&c, &mu0, &x, r).unwrap();
        let d1 = charge_discrepancy(&rc, &mu0, &rot(&x), r).unwrap();
        prop_assert!((d0 - d1).abs() < 1e-9);
    }

    #[test]
    fn bond_order_is_bounded(seed in 0u64..1000) {
        let mu0 = disk();
        let b = bond_order_psi6(&sample_iid(&mu0, 60, seed, 0).unwrap()).unwrap();
        prop_assert!(b.values.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
    }

    #[test]
    fn wilson_interval_brackets_the_rate(n in 1usize..5000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).floor() as usize;
        let (lo, hi) = wilson_interval(k, n);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }
}
