use coulomb_lab::equilibrium::solve_equilibrium_radial;
use coulomb_lab::kernel::{hamiltonian, Configuration, Dimension};
use coulomb_lab::sampler::*;
use coulomb_lab::splitting::{next_order_energy, next_order_lower_bound};
use coulomb_lab::{Error, PowerPotential};
use proptest::prelude::*;

fn quadratic(dim: Dimension) -> PowerPotential {
    PowerPotential::quadratic(dim)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[test]
fn two_particles_sit_at_unit_distance() {
    // H = 2 w(2a) + 4 a^2 is minimal at a = 1/2 in both dimensions
    for dim in [Dimension::Two, Dimension::Three] {
        let d = dim.get();
        let mut c = vec![0.0; 2 * d];
        c[0] = 0.31;
        c[1] = 0.07;
        c[d] = -0.8;
        let p = polish(&Configuration::new(dim, c).unwrap(), &quadratic(dim), 10_000, 1e-12).unwrap();
        assert!((dist(p.config.point(0), p.config.point(1)) - 1.0).abs() < 1e-6);
        let mid: Vec<f64> = (0..d).map(|k| 0.5 * (p.config.point(0)[k] + p.config.point(1)[k])).collect();
        assert!(mid.iter().all(|x| x.abs() < 1e-6));
    }
}

#[test]
fn three_particles_form_a_unit_triangle() {
    for dim in [Dimension::Two, Dimension::Three] {
        let d = dim.get();
        let pts: Vec<Vec<f64>> = [[0.5, 0.1, 0.05], [-0.3, 0.4, -0.02], [0.0, -0.6, 0.03]].iter().map(|p| p[..d].to_vec()).collect();
        let p = polish(&Configuration::from_points(dim, &pts).unwrap(), &quadratic(dim), 10_000, 1e-12).unwrap();
        for (i, j) in [(0, 1), (1, 2), (0, 2)] {
            assert!((dist(p.config.point(i), p.config.point(j)) - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn ground_state_beats_every_restart_and_the_bound() {
    let dim = Dimension::Two;
    let v = quadratic(dim);
    let mu0 = solve_equilibrium_radial(&v, dim).unwrap();
    let gs = find_ground_state(30, &v, &mu0, &AnnealSchedule::default(), 3).unwrap();
    assert!(gs.converged && gs.grad_inf <= gs.grad_tol);
    assert_eq!(gs.restart_energies.len(), 4);
    assert!(gs.restart_energies.iter().all(|&e| gs.energy <= e));
    assert!((hamiltonian(&gs.config, &v).unwrap() - gs.energy).abs() < 1e-9 * gs.energy);
    assert!(next_order_energy(&gs.config, &mu0, &v).unwrap() >= next_order_lower_bound(&mu0));
}

#[test]
fn invalid_schedules_are_rejected() {
    let s = AnnealSchedule { betas: vec![10.0, 5.0], ..AnnealSchedule::default() };
    assert!(matches!(s.validate(), Err(Error::InvalidInput(_))));
    let s = AnnealSchedule { restarts: 0, ..AnnealSchedule::default() };
    assert!(s.validate().is_err());
}

#[test]
fn metropolis_reproduces_the_two_particle_law() {
    // relative coordinate r has density r^2 e^{-r^2/2} on the plane at beta = 1, so <r^2> = 3
    let dim = Dimension::Two;
    let v = quadratic(dim);
    let mut chain = Chain::new(Configuration::new(dim, vec![0.5, 0.0, -0.5, 0.0]).unwrap(), &v, 1.0, 11, 0).unwrap();
    tune(&mut chain, &v, 2000);
    let mut acc = 0.0;
    let m = 200_000;
    for _ in 0..m {
        metropolis_sweep(&mut chain, &v);
        acc += dist(chain.config.point(0), chain.config.point(1)).powi(2);
    }
    let mean = acc / m as f64;
    assert!((mean - 3.0).abs() < 0.06, "{mean}");
}

#[test]
fn langevin_reproduces_the_two_particle_law() {
    let dim = Dimension::Two;
    let v = quadratic(dim);
    let mut chain = Chain::new(Configuration::new(dim, vec![0.5, 0.0, -0.5, 0.0]).unwrap(), &v, 1.0, 12, 0).unwrap();
    let mut acc = 0.0;
    let m = 300_000;
    for _ in 0..m {
        langevin_step(&mut chain, &v, 0.3).unwrap();
        acc += dist(chain.config.point(0), chain.config.point(1)).powi(2);
    }
    let mean = acc / m as f64;
    assert!((mean - 3.0).abs() < 0.08, "{mean}");
}

#[test]
fn langevin_acceptance_tends_to_one() {
    let dim = Dimension::Three;
    let v = quadratic(dim);
    let mu0 = solve_equilibrium_radial(&v, dim).unwrap();
    let start = sample_iid(&mu0, 12, 1, 0).unwrap();
    let mut rates = Vec::new();
    for dt in [1e-2, 1e-4, 1e-6] {
        let mut chain = Chain::new(start.clone(), &v, 1.0, 2, 0).unwrap();
        for _ in 0..400 {
            langevin_step(&mut chain, &v, dt).unwrap();
        }
        rates.push(chain.acceptance_rate());
    }
    assert!(rates[2] > 0.99 && rates[2] >= rates[0], "{rates:?}");
    let mut chain = Chain::new(start, &v, 1.0, 2, 0).unwrap();
    assert!(langevin_step(&mut chain, &v, -1.0).is_err());
}

#[test]
fn zero_temperature_limit_only_descends() {
    let dim = Dimension::Two;
    let v = quadratic(dim);
    let mu0 = solve_equilibrium_radial(&v, dim).unwrap();
    let mut chain = Chain::new(sample_iid(&mu0, 25, 4, 0).unwrap(), &v, 1e12, 4, 0).unwrap();
    let mut e = chain.energy();
    for _ in 0..200 {
        metropolis_sweep(&mut chain, &v);
        assert!(chain.energy() <= e + 1e-9 * e.abs());
        e = chain.energy();
    }
}

#[test]
fn cached_energy_stays_exact_over_long_runs() {
    let dim = Dimension::Two;
    let v = quadratic(dim);
    let mu0 = solve_equilibrium_radial(&v, dim).unwrap();
    let mut chain = Chain::new(sample_iid(&mu0, 50, 5, 0).unwrap(), &v, 1.0, 5, 0).unwrap();
    for k in 0..10_000 {
        metropolis_sweep(&mut chain, &v);
        if k % 2500 == 0 {
            assert!(chain.audit(&v).unwrap() < 1e-9);
        }
    }
    assert!(chain.audit(&v).unwrap() < 1e-9);
}

#[test]
fn chains_are_reproducible_per_seed_and_stream() {
    let dim = Dimension::Three;
    let v = quadratic(dim);
    let mu0 = solve_equilibrium_radial(&v, dim).unwrap();
    let start = sample_iid(&mu0, 15, 9, 0).unwrap();
    let run = |seed, stream| {
        let mut c = Chain::new(start.clone(), &v, 2.0, seed, stream).unwrap();
        for _ in 0..100 {
            metropolis_sweep(&mut c, &v);
        }
        c.config
    };
    assert_eq!(run(1, 0).coords(), run(1, 0).coords());
    assert_ne!(run(1, 0).coords(), run(1, 1).coords());
    assert_ne!(run(1, 0).coords(), run(2, 0).coords());
}

#[test]
fn checkpoints_survive_json() {
    let dim = Dimension::Two;
    let v = quadratic(dim);
    let mu0 = solve_equilibrium_radial(&v, dim).unwrap();
    let mut a = Chain::new(sample_iid(&mu0, 10, 3, 0).unwrap(), &v, 1.0, 3, 0).unwrap();
    for _ in 0..50 {
        metropolis_sweep(&mut a, &v);
    }
    let text = serde_json::to_string(&a.checkpoint()).unwrap();
    let mut b = Chain::from_checkpoint(serde_json::from_str(&text).unwrap(), &v).unwrap();
    for _ in 0..50 {
        metropolis_sweep(&mut a, &v);
        metropolis_sweep(&mut b, &v);
    }
    assert_eq!(a.config.coords(), b.config.coords());
    assert_eq!(a.energy(), b.energy());
}

#[test]
fn gibbs_runs_tune_into_the_window() {
    let dim = Dimension::Two;
    let v = quadratic(dim);
    let mu0 = solve_equilibrium_radial(&v, dim).unwrap();
    let mut chain = Chain::new(sample_iid(&mu0, 40, 6, 0).unwrap(), &v, 3.0, 6, 0).unwrap();
    let run = sample_gibbs(&mut chain, &v, &GibbsOptions { burn_in: 500, samples: 50, thin: None }).unwrap();
    assert!(chain.frozen);
    assert_eq!(run.samples.len(), 50);
    assert!(run.acceptance > ACCEPTANCE_WINDOW.0 - 0.05 && run.acceptance < ACCEPTANCE_WINDOW.1 + 0.05, "{}", run.acceptance);
    assert!(run.autocorrelation_time >= 1.0 && run.thin >= 1);
}

#[test]
fn autocorrelation_of_an_ar1_series() {
    // x_{t+1} = phi x_t + noise has tau = (1 + phi) / (1 - phi)
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let phi = 0.5;
    let mut x = 0.0;
    let series: Vec<f64> = (0..200_000)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            x = phi * x + z;
            x
        })
        .collect();
    let tau = integrated_autocorrelation_time(&series);
    assert!((tau - 3.0).abs() < 0.15, "{tau}");
}

#[test]
fn gelman_rubin_separates_mixed_from_stuck_chains() {
    let a: Vec<f64> = (0..1000).map(|k| ((k * 7919) % 1000) as f64 / 1000.0).collect();
    let b: Vec<f64> = (0..1000).map(|k| ((k * 104_729) % 1000) as f64 / 1000.0).collect();
    assert!((gelman_rubin(&[&a, &b]) - 1.0).abs() < 0.01);
    let shifted: Vec<f64> = b.iter().map(|x| x + 5.0).collect();
    assert!(gelman_rubin(&[&a, &shifted]) > 2.0);
}

#[test]
fn free_energy_of_two_particles() {
    let dim = Dimension::Three;
    let v = quadratic(dim);
    let beta = 1.0;
    let exact = two_particle_log_partition(dim, 1.0, beta).unwrap();
    let p = TiProtocol { sweeps: 10_000, ..TiProtocol::default() };
    let est = free_energy(2, dim, &v, beta, &p).unwrap();
    assert!(!est.flagged);
    assert!((-0.5 * beta * est.value - exact).abs() < 0.02, "{} vs {exact} +- {}", -0.5 * beta * est.value, est.error);
    assert_eq!(est.nodes.len(), p.lambda_nodes);
    assert!((est.nodes.iter().map(|n| n.weight).sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn free_energy_bounds_are_ordered() {
    let dim = Dimension::Two;
    let v = quadratic(dim);
    let mu0 = solve_equilibrium_radial(&v, dim).unwrap();
    let grid = coulomb_lab::grid::Grid::cube(dim, &[0.0, 0.0], 2.0, 2.0 / 64.0).unwrap();
    for beta in [0.5, 2.0] {
        let (lo, ell) = free_energy_lower_bound(6, beta, &mu0, &v).unwrap();
        let (up, _) = free_energy_upper_bound(6, beta, &v, &grid).unwrap();
        assert!(lo < up && ell > 0.0, "beta {beta}: {lo} {up}");
    }
    assert!(free_energy(6, dim, &v, -1.0, &TiProtocol::default()).is_err());
}

#[test]
fn tiling_is_exact_separated_and_above_the_ground_state() {
    let dim = Dimension::Two;
    let v = quadratic(dim);
    let mu0 = solve_equilibrium_radial(&v, dim).unwrap();
    let mut gaps = Vec::new();
    for n in [100usize, 400] {
        let t = tile_configuration(&mu0, n, None, 1).unwrap();
        assert_eq!(t.config.n(), n);
        let (sep, _, _) = t.config.min_separation().unwrap();
        assert!(sep * (n as f64).sqrt() >= t.r0 - 1e-12);
        let e = next_order_energy(&t.config, &mu0, &v).unwrap();
        let polished = polish(&t.config, &v, 20_000, 1e-6 * n as f64).unwrap();
        let e_min = next_order_energy(&polished.config, &mu0, &v).unwrap();
        assert!(e >= e_min);
        gaps.push((e - e_min) / e_min.abs());
    }
    assert!(gaps[0] < 0.10, "{gaps:?}");
    assert!(gaps[1] < gaps[0], "{gaps:?}");
}

#[test]
fn tiling_works_in_space() {
    let dim = Dimension::Three;
    let v = quadratic(dim);
    let mu0 = solve_equilibrium_radial(&v, dim).unwrap();
    let t = tile_configuration(&mu0, 200, None, 2).unwrap();
    assert_eq!(t.config.n(), 200);
    assert!(!t.cells.is_empty());
    assert!(t.config.min_separation().unwrap().0 * 200f64.cbrt() >= t.r0 - 1e-12);
    assert!(next_order_energy(&t.config, &mu0, &v).unwrap() >= next_order_lower_bound(&mu0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn tiled_count_matches_any_n(n in 50usize..300, seed in 0u64..100) {
        let dim = Dimension::Two;
        let mu0 = solve_equilibrium_radial(&quadratic(dim), dim).unwrap();
        let t = tile_configuration(&mu0, n, None, seed).unwrap();
        prop_assert_eq!(t.config.n(), n);
        prop_assert!(t.config.coincident_pair().is_none());
    }

    #[test]
    fn iid_draws_stay_in_the_support(n in 1usize..200, seed in 0u64..1000, three in any::<bool>()) {
        let dim = if three { Dimension::Three } else { Dimension::Two };
        let mu0 = solve_equilibrium_radial(&quadratic(dim), dim).unwrap();
        let c = sample_iid(&mu0, n, seed, 0).unwrap();
        prop_assert!(c.points().all(|p| p.iter().map(|x| x * x).sum::<f64>() <= 1.0 + 1e-12));
    }
}
