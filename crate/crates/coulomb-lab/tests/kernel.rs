use coulomb_lab::kernel::*;
use coulomb_lab::{Error, PowerPotential};
use proptest::prelude::*;

fn dim_of(three: bool) -> Dimension {
    if three {
        Dimension::Three
    } else {
        Dimension::Two
    }
}

fn points(d: usize, n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, d * n)
}

#[test]
fn smearing_constants_match_quadrature() {
    for (dim, c) in [(Dimension::Two, 0.25), (Dimension::Three, 1.2)] {
        let d = dim.get() as i32;
        let q = coulomb_lab::quad::integrate(|r| smeared_potential(r, 1.0, dim) * d as f64 * r.powi(d - 1), 0.0, 1.0, 1e-14);
        assert!((q - c).abs() < 1e-12 && (self_energy(1.0, dim) - c).abs() < 1e-12);
    }
}

#[test]
fn touching_balls_meet_the_newton_value() {
    for dim in [Dimension::Two, Dimension::Three] {
        let inside = smeared_pair_energy_at(2.0 * 0.3 * (1.0 - 1e-9), 0.3, dim);
        assert!((inside - kernel_r(0.6, dim)).abs() < 1e-7);
        assert!((smeared_pair_energy_at(0.0, 0.3, dim) - self_energy(0.3, dim)).abs() < 1e-10);
    }
}

#[test]
fn kernel_rejects_the_origin() {
    assert!(matches!(coulomb_kernel(&[0.0, 0.0], Dimension::Two), Err(Error::Singularity(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smearing_never_exceeds_the_point_kernel(s in 1e-3f64..3.0, eta in 0.01f64..1.0, three in any::<bool>()) {
        let dim = dim_of(three);
        prop_assert!(smeared_pair_energy_at(s, eta, dim) <= kernel_r(s, dim) + 1e-12);
        prop_assert!(smeared_potential(s, eta, dim) <= kernel_r(s, dim) + 1e-14);
    }

    #[test]
    fn smeared_pair_decreases_with_distance(a in 0.0f64..1.0, b in 0.0f64..1.0, three in any::<bool>()) {
        let dim = dim_of(three);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(smeared_pair_energy_at(hi, 0.5, dim) <= smeared_pair_energy_at(lo, 0.5, dim) + 1e-12);
    }

    #[test]
    fn hamiltonian_is_permutation_invariant(c in points(2, 8), seed in 0usize..40320) {
        let config = Configuration::new(Dimension::Two, c).unwrap();
        prop_assume!(config.coincident_pair().is_none());
        let mut perm: Vec<usize> = (0..8).collect();
        let mut s = seed;
        for i in (1..8).rev() {
            perm.swap(i, s % (i + 1));
            s /= i + 1;
        }
        let v = PowerPotential::quadratic(Dimension::Two);
        let h = hamiltonian(&config, &v).unwrap();
        let hp = hamiltonian(&config.permuted(&perm), &v).unwrap();
        prop_assert!((h - hp).abs() <= 1e-12 * h.abs().max(1.0));
    }

    #[test]
    fn pair_energy_is_translation_invariant(c in points(3, 6), shift in prop::collection::vec(-5.0f64..5.0, 3)) {
        let config = Configuration::new(Dimension::Three, c).unwrap();
        prop_assume!(config.min_separation().map_or(false, |s| s.0 > 1e-3));
        let a = pair_energy(&config).unwrap();
        let b = pair_energy(&config.translated(&shift)).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn logarithmic_pair_energy_shifts_under_dilation(c in points(2, 5), t in 0.1f64..10.0) {
        let config = Configuration::new(Dimension::Two, c).unwrap();
        prop_assume!(config.min_separation().map_or(false, |s| s.0 > 1e-3));
        let n = 5.0;
        let a = pair_energy(&config).unwrap();
        let b = pair_energy(&config.scaled(t)).unwrap();
        prop_assert!((b - (a - n * (n - 1.0) * t.ln())).abs() < 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn confinement_gradient_sums_to_zero_pair_force(c in points(2, 6)) {
        // pair forces cancel, so the total gradient is the confinement force n grad V
        let config = Configuration::new(Dimension::Two, c).unwrap();
        prop_assume!(config.min_separation().map_or(false, |s| s.0 > 1e-2));
        let v = PowerPotential::quadratic(Dimension::Two);
        let g = hamiltonian_gradient(&config, &v).unwrap();
        for k in 0..2 {
            let total: f64 = (0..6).map(|i| g[2 * i + k]).sum();
            let conf: f64 = config.points().map(|p| 6.0 * 2.0 * p[k]).sum();
            prop_assert!((total - conf).abs() < 1e-9 * conf.abs().max(1.0));
        }
    }
}
