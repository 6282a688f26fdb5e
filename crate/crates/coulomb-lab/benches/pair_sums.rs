use coulomb_lab::equilibrium::solve_equilibrium_radial;
use coulomb_lab::grid::{FreeSpaceOperator, Grid};
use coulomb_lab::jellium::{lattice_energy, Lattice};
use coulomb_lab::kernel::{hamiltonian_gradient, pair_energy, Configuration, Dimension};
use coulomb_lab::sampler::sample_iid;
use coulomb_lab::PowerPotential;
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn configuration(n: usize, dim: Dimension) -> Configuration {
    let mu0 = solve_equilibrium_radial(&PowerPotential::quadratic(dim), dim).unwrap();
    sample_iid(&mu0, n, 11, 0).unwrap()
}

/// Runs `f` once per thread setting: a single worker and the full pool.
/// Without the `parallel` feature only the sequential path exists.
fn with_threads(c: &mut Criterion, group: &str, param: usize, f: impl Fn() + Sync) {
    let mut g = c.benchmark_group(group);
    #[cfg(feature = "parallel")]
    {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        g.bench_with_input(BenchmarkId::new("one_thread", param), &param, |b, _| b.iter(|| one.install(&f)));
        g.bench_with_input(BenchmarkId::new("parallel", param), &param, |b, _| b.iter(&f));
    }
    #[cfg(not(feature = "parallel"))]
    g.bench_with_input(BenchmarkId::new("sequential", param), &param, |b, _| b.iter(&f));
    g.finish();
}

fn pair_sums(c: &mut Criterion) {
    for n in [200, 1000] {
        let config = configuration(n, Dimension::Two);
        with_threads(c, "pair_energy_2d", n, || {
            black_box(pair_energy(&config).unwrap());
        });
    }
    let v = PowerPotential::quadratic(Dimension::Three);
    for n in [200, 1000] {
        let config = configuration(n, Dimension::Three);
        with_threads(c, "hamiltonian_gradient_3d", n, || {
            black_box(hamiltonian_gradient(&config, &v).unwrap());
        });
    }
}

fn ewald(c: &mut Criterion) {
    let tri = Lattice::triangular();
    with_threads(c, "ewald_triangular", 1, || {
        black_box(lattice_energy(&tri, 1e-10).unwrap());
    });
    let bcc = Lattice::bcc();
    with_threads(c, "ewald_bcc", 1, || {
        black_box(lattice_energy(&bcc, 1e-8).unwrap());
    });
}

fn convolution(c: &mut Criterion) {
    let grid = Grid::cube(Dimension::Two, &[0.0, 0.0], 1.5, 0.01).unwrap();
    let op = FreeSpaceOperator::new(&grid).unwrap();
    let rho = grid.sample(|x| (1.0 - x[0] * x[0] - x[1] * x[1]).max(0.0));
    with_threads(c, "free_space_potential", grid.len(), || {
        black_box(op.apply(&rho));
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = pair_sums, ewald, convolution
}
criterion_main!(benches);
