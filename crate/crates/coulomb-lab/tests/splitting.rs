use coulomb_lab::equilibrium::{solve_equilibrium_radial, EquilibriumMeasure};
use coulomb_lab::kernel::{hamiltonian, Configuration, Dimension};
use coulomb_lab::sampler::sample_iid;
use coulomb_lab::splitting::*;
use coulomb_lab::{Error, PowerPotential};
use proptest::prelude::*;

fn setup(three: bool) -> (PowerPotential, EquilibriumMeasure) {
    let dim = if three { Dimension::Three } else { Dimension::Two };
    let v = PowerPotential::quadratic(dim);
    let mu = solve_equilibrium_radial(&v, dim).unwrap();
    (v, mu)
}

#[test]
fn blow_up_round_trips() {
    let (_, mu) = setup(false);
    let c = sample_iid(&mu, 25, 1, 0).unwrap();
    let b = blow_up(&c);
    assert_eq!(b.factor, 5.0);
    let back = b.blow_down();
    for (x, y) in back.coords().iter().zip(c.coords()) {
        assert!((x - y).abs() < 1e-15);
    }
    assert_eq!(b.source().coords(), c.coords());
}

#[test]
fn eta_must_lie_in_the_unit_interval() {
    let (v, mu) = setup(false);
    let c = sample_iid(&mu, 5, 1, 0).unwrap();
    assert!(matches!(onsager_split(&c, &mu, &v, 0.0), Err(Error::InvalidInput(_))));
    assert!(onsager_split(&c, &mu, &v, 1.5).is_err());
}

#[test]
fn dimension_mismatch_is_reported() {
    let (v, mu) = setup(false);
    let c = Configuration::new(Dimension::Three, vec![0.1, 0.2, 0.3, -0.1, 0.0, 0.2]).unwrap();
    assert!(onsager_split(&c, &mu, &v, 0.5).is_err());
}

#[test]
fn coincident_points_give_infinite_energy_and_hold_the_bound() {
    let (v, mu) = setup(false);
    let c = Configuration::new(Dimension::Two, vec![0.1, 0.1, 0.1, 0.1, -0.4, 0.2]).unwrap();
    let r = onsager_split(&c, &mu, &v, 0.1).unwrap();
    assert!(r.hamiltonian.is_infinite() && r.inequality_holds());
    assert_eq!(r.overlapping_pairs, vec![(0, 1)]);
}

#[test]
fn renormalized_w_needs_separated_points() {
    let (_, mu) = setup(false);
    let c = Configuration::new(Dimension::Two, vec![0.0, 0.0, 0.001, 0.0]).unwrap();
    assert!(matches!(renormalized_w_of_config(&c, &mu, &Region::Whole), Err(Error::Separation { .. })));
}

#[test]
fn whole_space_w_matches_the_next_order_energy() {
    // for points in the support, n * next_order = W / c_d as eta -> 0
    let (v, mu) = setup(false);
    let config = Configuration::from_points(
        Dimension::Two,
        &[vec![0.3, 0.1], vec![-0.4, 0.2], vec![0.0, -0.5], vec![0.2, 0.6], vec![-0.3, -0.3]],
    )
    .unwrap();
    let w = renormalized_w_of_config(&config, &mu, &Region::Whole).unwrap();
    let e = next_order_energy(&config, &mu, &v).unwrap();
    assert!((w.value / (2.0 * std::f64::consts::PI * 5.0) - e).abs() < 1e-6, "{} vs {e}", w.value);
    assert!(w.tolerance < 1e-8);
}

#[test]
fn box_w_of_a_square_patch_is_near_the_lattice_value() {
    let k = 8;
    let mut pts = Vec::new();
    for i in 0..k {
        for j in 0..k {
            pts.push(vec![i as f64 + 0.5, j as f64 + 0.5]);
        }
    }
    let c = Configuration::from_points(Dimension::Two, &pts).unwrap();
    let (_, mu) = setup(false);
    let r = Region::Box { lo: vec![0.0, 0.0], hi: vec![k as f64, k as f64] };
    let w = renormalized_w_of_config(&c, &mu, &r).unwrap();
    let per_point = w.value / (k * k) as f64;
    // boundary layers cost O(1/k) relative to -8.234
    assert!((per_point + 8.234).abs() < 0.5, "{per_point}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn identity_holds_without_overlaps(n in 3usize..30, seed in 0u64..1000, three in any::<bool>()) {
        let (v, mu) = setup(three);
        let c = sample_iid(&mu, n, seed, 0).unwrap();
        let (sep, _, _) = c.min_separation().unwrap();
        let d = mu.dim().get() as f64;
        let eta = (0.4 * sep * (n as f64).powf(1.0 / d)).min(1.0);
        let r = onsager_split(&c, &mu, &v, eta).unwrap();
        prop_assert!(r.equality_flag);
        prop_assert!(r.relative_gap < 1e-9, "gap {}", r.relative_gap);
        // balls inside the flat support attain the bound
        prop_assert!(r.lieb_term <= 1e-12 && -r.lieb_term <= r.lieb_bound * (1.0 + 1e-8));
        prop_assert!(r.hamiltonian >= r.lower_bound - 1e-9 * r.hamiltonian.abs());
    }

    #[test]
    fn next_order_respects_the_universal_bound(n in 2usize..40, seed in 0u64..1000, three in any::<bool>()) {
        let (v, mu) = setup(three);
        let c = sample_iid(&mu, n, seed, 1).unwrap();
        prop_assert!(next_order_energy(&c, &mu, &v).unwrap() >= next_order_lower_bound(&mu));
    }

    #[test]
    fn smeared_field_energy_is_nonnegative(n in 2usize..20, seed in 0u64..500, ell in 0.01f64..0.5) {
        let (_, mu) = setup(false);
        let c = sample_iid(&mu, n, seed, 2).unwrap();
        prop_assert!(smeared_field_energy(&c, &mu, ell).unwrap() >= -1e-9);
    }

    #[test]
    fn splitting_sum_never_exceeds_h(n in 3usize..25, seed in 0u64..1000, eta in 0.05f64..1.0) {
        let (v, mu) = setup(false);
        let c = sample_iid(&mu, n, seed, 3).unwrap();
        let r = onsager_split(&c, &mu, &v, eta).unwrap();
        let h = hamiltonian(&c, &v).unwrap();
        prop_assert!(r.splitting_sum <= h + 1e-9 * h.abs());
    }
}

