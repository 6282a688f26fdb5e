//! Acceptance suite: one check per numbered criterion.
//!
//! `Suite::Full` runs every criterion at its stated size. `Suite::Fast` trims
//! the free-energy ladder and the obstacle grid in three dimensions.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{bond_order_psi6, fluctuation_tails, micro_radius};
use crate::equilibrium::{solve_equilibrium_obstacle, solve_equilibrium_radial, zeta_potential, EquilibriumMeasure};
use crate::error::Result;
use crate::grid::Grid;
use crate::io::configuration_to_string;
use crate::jellium::{
    box_averaged_w_eta, lattice_energy_direct, periodic_renormalized_energy, scale_energy, supercell, torus_green,
    xi_d, zeta_renorm_consistency, EwaldParameters, Lattice, TorusConfiguration, DEFAULT_EWALD_TOL,
};
use crate::kernel::{
    coulomb_kernel, hamiltonian, hamiltonian_gradient, self_energy, smeared_pair_energy, smeared_potential,
    Configuration, Dimension,
};
use crate::potential::PowerPotential;
use crate::quad;
use crate::sampler::{
    find_ground_state, free_energy, free_energy_lower_bound, free_energy_upper_bound, sample_gibbs, sample_iid,
    two_particle_log_partition, AnnealSchedule, Chain, GibbsOptions, TiProtocol,
};
use crate::splitting::{next_order_energy, onsager_split};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Fast,
    Full,
}

impl std::str::FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fast" => Ok(Suite::Fast),
            "full" => Ok(Suite::Full),
            _ => Err(format!("unknown suite {s:?}, expected fast or full")),
        }
    }
}

/// Pass thresholds, one per checked quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub smearing_constant: f64,
    pub newton: f64,
    pub obstacle_l1: f64,
    pub zeta_floor: f64,
    pub zeta_on_support: f64,
    pub splitting_identity: f64,
    pub alpha_independence: f64,
    pub supercell: f64,
    pub scaling: f64,
    pub box_relative: f64,
    pub psi6_bulk: f64,
    pub next_order_spread: f64,
    pub xi_relative: f64,
    pub two_particle: f64,
    pub gradient: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            smearing_constant: 1e-8,
            newton: 1e-10,
            obstacle_l1: 0.02,
            zeta_floor: 1e-6,
            zeta_on_support: 1e-4,
            splitting_identity: 1e-6,
            alpha_independence: 1e-10,
            supercell: 1e-9,
            scaling: 1e-9,
            box_relative: 1e-2,
            psi6_bulk: 0.85,
            next_order_spread: 0.10,
            xi_relative: 0.10,
            two_particle: 0.01,
            gradient: 1e-6,
        }
    }
}

/// Result of one criterion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    /// Set when every failing check is a documented unattainable target.
    pub known_gap: Option<String>,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    /// `passed`, or failed only on a documented gap.
    pub fn acceptable(&self) -> bool {
        self.passed || self.known_gap.is_some()
    }

    pub fn line(&self) -> String {
        let status = match (self.passed, &self.known_gap) {
            (true, _) => "PASS".to_string(),
            (false, Some(g)) => format!("FAIL (known gap: {g})"),
            (false, None) => "FAIL".to_string(),
        };
        format!("criterion {} {status} [{:.1} s] {}: {}", self.id, self.seconds, self.title, self.detail)
    }
}

pub const CRITERIA: [u8; 9] = [1, 2, 3, 4, 5, 6, 7, 8, 9];

pub fn title(id: u8) -> &'static str {
    match id {
        1 => "smearing constants and Newton exactness",
        2 => "obstacle equilibrium measure",
        3 => "smeared-charge splitting",
        4 => "Ewald and lattice energies",
        5 => "box-averaged energy against the periodic formula",
        6 => "ground-state structure and next order",
        7 => "free-energy sandwich",
        8 => "fluctuation tails against i.i.d.",
        9 => "gradient and determinism",
        _ => "unknown",
    }
}

/// Checks accumulated inside one criterion.
#[derive(Default)]
struct Checks {
    notes: Vec<String>,
    failures: Vec<String>,
    known: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, msg: String) {
        if ok {
            self.notes.push(msg);
        } else {
            self.failures.push(msg);
        }
    }

    /// A failure that matches a documented unattainable target.
    fn known_failure(&mut self, ok: bool, msg: String, why: &str) {
        if ok {
            self.notes.push(msg);
        } else {
            self.known.push(why.to_string());
            self.notes.push(format!("{msg} (known gap)"));
        }
    }

    fn finish(self, id: u8, start: Instant) -> Outcome {
        let passed = self.failures.is_empty() && self.known.is_empty();
        let known_gap = (self.failures.is_empty() && !self.known.is_empty()).then(|| self.known.join("; "));
        let mut detail = self.failures.clone();
        detail.extend(self.notes);
        Outcome { id, title: title(id).into(), passed, known_gap, detail: detail.join("; "), seconds: start.elapsed().as_secs_f64() }
    }
}

/// Runs one criterion; internal errors count as failures.
pub fn run_criterion(id: u8, suite: Suite, tol: &Tolerances, seed: u64) -> Outcome {
    let start = Instant::now();
    let res = match id {
        1 => criterion_1(tol, seed),
        2 => criterion_2(suite, tol),
        3 => criterion_3(tol, seed),
        4 => criterion_4(tol, seed),
        5 => criterion_5(tol),
        6 => criterion_6(tol, seed),
        7 => criterion_7(suite, tol),
        8 => criterion_8(seed),
        9 => criterion_9(tol, seed),
        _ => Err(crate::Error::InvalidInput(format!("no criterion {id}"))),
    };
    match res {
        Ok(c) => c.finish(id, start),
        Err(e) => Outcome {
            id,
            title: title(id).into(),
            passed: false,
            known_gap: None,
            detail: format!("error: {e}"),
            seconds: start.elapsed().as_secs_f64(),
        },
    }
}

pub fn run_suite(suite: Suite, tol: &Tolerances, seed: u64) -> Vec<Outcome> {
    CRITERIA.iter().map(|&id| run_criterion(id, suite, tol, seed)).collect()
}

fn both_dims() -> [Dimension; 2] {
    [Dimension::Two, Dimension::Three]
}

fn random_point(rng: &mut ChaCha8Rng, d: usize, half: f64) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-half..half)).collect()
}

fn criterion_1(tol: &Tolerances, seed: u64) -> Result<Checks> {
    let mut c = Checks::default();
    for dim in both_dims() {
        let d = dim.get() as i32;
        // uniform unit ball: radial law d r^{d-1} on [0, 1]
        let oracle = quad::integrate(|r| smeared_potential(r, 1.0, dim) * d as f64 * r.powi(d - 1), 0.0, 1.0, 1e-14);
        let exact = match dim {
            Dimension::Two => 0.25,
            Dimension::Three => 1.2,
        };
        let err = (self_energy(1.0, dim) - oracle).abs().max((self_energy(1.0, dim) - exact).abs());
        c.check(err < tol.smearing_constant, format!("d={} self-energy error {err:.1e}", d));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let dim = both_dims()[k % 2];
        let d = dim.get();
        let eta = rng.gen_range(0.01..0.5);
        let x = random_point(&mut rng, d, 2.0);
        let dir = random_point(&mut rng, d, 1.0);
        let len = dir.iter().map(|t| t * t).sum::<f64>().sqrt().max(1e-3);
        let r = 2.0 * eta * rng.gen_range(1.0..5.0);
        let y: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + r * b / len).collect();
        let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let newton = coulomb_kernel(&diff, dim)?;
        let rel = (smeared_pair_energy(&x, &y, eta, dim) - newton).abs() / newton.abs().max(1.0);
        worst = worst.max(rel);
    }
    c.check(worst < tol.newton, format!("Newton exactness worst {worst:.1e} over 1000 pairs"));
    Ok(c)
}

fn uniform_ball_density(dim: Dimension) -> f64 {
    match dim {
        Dimension::Two => 1.0 / PI,
        Dimension::Three => 3.0 / (4.0 * PI),
    }
}

fn criterion_2(suite: Suite, tol: &Tolerances) -> Result<Checks> {
    let mut c = Checks::default();
    for dim in both_dims() {
        let d = dim.get();
        let h = match (suite, dim) {
            (Suite::Fast, Dimension::Three) => 0.04,
            _ => 0.02,
        };
        let v = PowerPotential::quadratic(dim);
        let grid = Grid::cube(dim, &vec![0.0; d], 1.3, h)?;
        let mu = solve_equilibrium_obstacle(&v, &grid, 1e-10)?;
        let rho = uniform_ball_density(dim);
        let l1 = mu.l1_distance_to(|x| if x.iter().map(|t| t * t).sum::<f64>() <= 1.0 { rho } else { 0.0 }, 4);
        c.check(l1 < tol.obstacle_l1, format!("d={d} h={h} L1 {l1:.4}"));
        let z = zeta_potential(&mu, &v);
        c.check(z.min_value >= -tol.zeta_floor, format!("d={d} min zeta {:.1e}", z.min_value));
        let on = z.max_abs_on(&mu.support);
        c.check(on <= tol.zeta_on_support, format!("d={d} max |zeta| on support {on:.1e}"));
    }
    Ok(c)
}

fn criterion_3(tol: &Tolerances, seed: u64) -> Result<Checks> {
    let mut c = Checks::default();
    let mut measures: Vec<(PowerPotential, EquilibriumMeasure)> = Vec::new();
    for dim in both_dims() {
        let v = PowerPotential::quadratic(dim);
        let mu = solve_equilibrium_radial(&v, dim)?;
        measures.push((v, mu));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut flagged, mut strict, mut overlapped) = (0.0f64, 0usize, 0usize, 0usize);
    for k in 0..100 {
        let (v, mu) = &measures[k % 2];
        let d = mu.dim().get() as f64;
        let n = rng.gen_range(5..=50usize);
        let config = sample_iid(mu, n, seed, 10_000 + k as u64)?;
        let (sep, _, _) = config.min_separation().expect("n >= 2");
        let scale = (n as f64).powf(1.0 / d);
        let eta = (0.45 * sep * scale).min(1.0);
        let rep = onsager_split(&config, mu, v, eta)?;
        worst = worst.max(rep.relative_gap);
        if !rep.equality_flag {
            flagged += 1;
        }
        let eta_o = (0.75 * sep * scale).min(1.0);
        let rep = onsager_split(&config, mu, v, eta_o)?;
        if !rep.overlapping_pairs.is_empty() {
            overlapped += 1;
            if rep.hamiltonian > rep.lower_bound {
                strict += 1;
            }
        }
    }
    c.check(worst < tol.splitting_identity && flagged == 0, format!("separated: worst relative gap {worst:.1e}, {flagged} misflagged"));
    c.check(overlapped > 0 && strict == overlapped, format!("overlapping: strict inequality on {strict}/{overlapped}"));
    Ok(c)
}

fn random_torus(dim: Dimension, n: usize, rng: &mut ChaCha8Rng) -> Result<TorusConfiguration> {
    let d = dim.get();
    let basis: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.15 * (i + j) as f64 / d as f64 }).collect())
        .collect();
    let points = (0..n)
        .map(|_| {
            let t: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
            (0..d).map(|q| (0..d).map(|i| t[i] * basis[i][q]).sum()).collect()
        })
        .collect();
    TorusConfiguration::new(dim, basis, points)
}

fn criterion_4(tol: &Tolerances, seed: u64) -> Result<Checks> {
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alpha_dev: f64 = 0.0;
    let mut cell_dev: f64 = 0.0;
    for dim in both_dims() {
        let d = dim.get();
        let tc = random_torus(dim, 3, &mut rng)?;
        let base = EwaldParameters::for_torus(&tc, DEFAULT_EWALD_TOL)?;
        for _ in 0..5 {
            let x = random_point(&mut rng, d, 0.5);
            let g0 = torus_green(&x, &tc, &base)?;
            for f in [0.5, 2.0] {
                let p = EwaldParameters::with_alpha(&tc, f * base.alpha, DEFAULT_EWALD_TOL)?;
                alpha_dev = alpha_dev.max((torus_green(&x, &tc, &p)? - g0).abs());
            }
        }
        let w1 = periodic_renormalized_energy(&tc, &base)?;
        let sc = supercell(&tc, 2);
        let w2 = periodic_renormalized_energy(&sc, &EwaldParameters::for_torus(&sc, DEFAULT_EWALD_TOL)?)?;
        cell_dev = cell_dev.max((w1 - w2).abs() / w1.abs().max(1.0));
    }
    c.check(alpha_dev < tol.alpha_independence, format!("alpha spread of G {alpha_dev:.1e}"));
    c.check(cell_dev < tol.supercell, format!("2x2 supercell deviation {cell_dev:.1e}"));
    let tri = lattice_energy_direct(&Lattice::triangular(), DEFAULT_EWALD_TOL)?;
    let sq = lattice_energy_direct(&Lattice::square(), DEFAULT_EWALD_TOL)?;
    c.check(tri < sq, format!("W triangular {tri:.10} < square {sq:.10}"));
    let z = zeta_renorm_consistency(&Lattice::triangular(), &Lattice::square(), &[0.1, 0.5, 1.0], DEFAULT_EWALD_TOL)?;
    c.check(z.same_sign, format!("zeta differences {:?} share the sign of {:.3e}", z.zeta_differences.iter().map(|p| p.1).collect::<Vec<_>>(), z.w_difference));
    let mut scale_dev: f64 = 0.0;
    for lat in [Lattice::triangular(), Lattice::square(), Lattice::simple_cubic(), Lattice::bcc()] {
        let w1 = lattice_energy_direct(&lat, DEFAULT_EWALD_TOL)?;
        for m in [0.5, 1.0, 2.0, 4.0] {
            let wm = lattice_energy_direct(&lat.with_density(m), DEFAULT_EWALD_TOL)?;
            let pred = scale_energy(w1, m, lat.dimension);
            scale_dev = scale_dev.max((wm - pred).abs() / pred.abs().max(1.0));
        }
    }
    c.check(scale_dev < tol.scaling, format!("scaling relation deviation {scale_dev:.1e}"));
    Ok(c)
}

fn criterion_5(tol: &Tolerances) -> Result<Checks> {
    let mut c = Checks::default();
    for lat in [Lattice::triangular(), Lattice::square()] {
        let tc = lat.unit_torus();
        let w = periodic_renormalized_energy(&tc, &EwaldParameters::for_torus(&tc, DEFAULT_EWALD_TOL)?)?;
        let b = box_averaged_w_eta(&tc, 1e-2, &[1, 2], DEFAULT_EWALD_TOL)?;
        let rel = (b.value - w).abs() / w.abs();
        c.check(rel < tol.box_relative, format!("{}: W_eta {:.8} vs W {w:.8} (rel {rel:.1e})", lat.name, b.value));
    }
    Ok(c)
}

const CRITERION_6_N: [usize; 3] = [50, 100, 200];

fn criterion_6(tol: &Tolerances, seed: u64) -> Result<Checks> {
    let mut c = Checks::default();
    let dim = Dimension::Two;
    let v = PowerPotential::quadratic(dim);
    let mu0 = solve_equilibrium_radial(&v, dim)?;
    let radius = mu0.support_radius().unwrap_or(1.0);
    let w_tri = lattice_energy_direct(&Lattice::triangular(), DEFAULT_EWALD_TOL)?;
    let xi = xi_d(&mu0, w_tri).value;
    let mut values = Vec::new();
    for n in CRITERION_6_N {
        let gs = find_ground_state(n, &v, &mu0, &AnnealSchedule::default(), seed)?;
        let e = next_order_energy(&gs.config, &mu0, &v)?;
        values.push(e);
        let psi = bond_order_psi6(&gs.config)?.bulk_mean(&gs.config, &[0.0, 0.0], 0.7 * radius).unwrap_or(0.0);
        let msg = format!("n={n} psi6 {psi:.3} next order {e:.5} converged {}", gs.converged);
        if n < 100 {
            c.known_failure(psi > tol.psi6_bulk, msg, "n=50 minimizer is a shell structure with bulk psi6 near 0.4");
        } else {
            c.check(psi > tol.psi6_bulk, msg);
        }
        let rel = (e - xi).abs() / xi.abs();
        c.check(rel < tol.xi_relative, format!("n={n} within {:.2}% of xi_2 {xi:.6} (conjectural minimizer)", 100.0 * rel));
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let spread = (hi - lo) / lo.abs().min(hi.abs());
    c.check(spread < tol.next_order_spread, format!("next-order spread {:.2}%", 100.0 * spread));
    Ok(c)
}

fn criterion_7(suite: Suite, tol: &Tolerances) -> Result<Checks> {
    let mut c = Checks::default();
    let dim = Dimension::Two;
    let v = PowerPotential::quadratic(dim);
    for beta in [0.5, 1.0, 2.0] {
        let exact = two_particle_log_partition(dim, 1.0, beta)?;
        let est = free_energy(2, dim, &v, beta, &TiProtocol { sweeps: 20_000, ..TiProtocol::default() })?;
        let ratio = (-0.5 * beta * est.value - exact).exp() - 1.0;
        c.check(ratio.abs() < tol.two_particle, format!("n=2 beta={beta} Z ratio - 1 = {ratio:.4}"));
    }
    let mu0 = solve_equilibrium_radial(&v, dim)?;
    let (betas, protocol): (&[f64], TiProtocol) = match suite {
        Suite::Full => (&[0.25, 1.0, 4.0], TiProtocol::default()),
        Suite::Fast => (&[0.5, 2.0], TiProtocol { lambda_nodes: 6, burn_in: 500, sweeps: 3000, ..TiProtocol::default() }),
    };
    for n in [10usize, 20] {
        for &beta in betas {
            let est = free_energy(n, dim, &v, beta, &protocol)?;
            let (lower, _) = free_energy_lower_bound(n, beta, &mu0, &v)?;
            let hw = 1.0 + 4.0 / (n as f64 * beta).sqrt();
            let grid = Grid::cube(dim, &[0.0, 0.0], hw, hw / 64.0)?;
            let (upper, _) = free_energy_upper_bound(n, beta, &v, &grid)?;
            let band = 2.0 * est.error;
            let ok = lower <= est.value - band && est.value + band <= upper && !est.flagged;
            c.check(
                ok,
                format!("n={n} beta={beta}: {lower:.3} <= {:.3} +- {:.3} <= {upper:.3}{}", est.value, est.error, if est.flagged { " (R-hat flagged)" } else { "" }),
            );
        }
    }
    Ok(c)
}

fn criterion_8(seed: u64) -> Result<Checks> {
    let mut c = Checks::default();
    let dim = Dimension::Two;
    let v = PowerPotential::quadratic(dim);
    let mu0 = solve_equilibrium_radial(&v, dim)?;
    let n = 100;
    let beta = 20.0;
    let r = micro_radius(n, dim);
    let lambdas = [0.2, 0.5];
    let iid: Vec<Configuration> = (0..1000).map(|k| sample_iid(&mu0, n, seed, k)).collect::<Result<_>>()?;
    let base = fluctuation_tails(&iid, &mu0, &[r], &lambdas, seed)?;
    let mut chain = Chain::new(sample_iid(&mu0, n, seed, 5000)?, &v, beta, seed, 1)?;
    let run = sample_gibbs(&mut chain, &v, &GibbsOptions { burn_in: 2000, samples: 1000, thin: None })?;
    let gibbs = fluctuation_tails(&run.samples, &mu0, &[r], &lambdas, seed)?;
    for (g, b) in gibbs.rows.iter().zip(&base.rows) {
        c.check(
            g.upper < b.lower,
            format!("lambda={}: Gibbs {:.3} [{:.3}, {:.3}] vs iid {:.3} [{:.3}, {:.3}]", g.lambda, g.probability, g.lower, g.upper, b.probability, b.lower, b.upper),
        );
    }
    c.check(!gibbs.wide_intervals, format!("{} Gibbs samples thinned by {}", run.samples.len(), run.thin));
    Ok(c)
}

/// Fourth-order central difference of `H` along one coordinate.
fn fd_component(config: &Configuration, v: &PowerPotential, k: usize, h: f64) -> Result<f64> {
    let eval = |t: f64| -> Result<f64> {
        let mut coords = config.coords().to_vec();
        coords[k] += t;
        hamiltonian(&Configuration::new(config.dim(), coords)?, v)
    };
    Ok((8.0 * (eval(h)? - eval(-h)?) - (eval(2.0 * h)? - eval(-2.0 * h)?)) / (12.0 * h))
}

fn separated_configuration(dim: Dimension, n: usize, min_sep: f64, rng: &mut ChaCha8Rng) -> Result<Configuration> {
    let d = dim.get();
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n);
    while pts.len() < n {
        let p = random_point(rng, d, 1.0);
        if pts.iter().all(|q| q.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() >= min_sep * min_sep) {
            pts.push(p);
        }
    }
    Configuration::from_points(dim, &pts)
}

fn criterion_9(tol: &Tolerances, seed: u64) -> Result<Checks> {
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for dim in both_dims() {
        let v = PowerPotential::quadratic(dim);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let n = rng.gen_range(3..=20);
            let config = separated_configuration(dim, n, 0.1, &mut rng)?;
            let g = hamiltonian_gradient(&config, &v)?;
            let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for k in 0..g.len() {
                let fd = fd_component(&config, &v, k, 1e-3)?;
                worst = worst.max((g[k] - fd).abs() / scale);
            }
        }
        c.check(worst < tol.gradient, format!("d={} gradient relative error {worst:.1e}", dim.get()));
    }
    let dim = Dimension::Two;
    let v = PowerPotential::quadratic(dim);
    let mu0 = solve_equilibrium_radial(&v, dim)?;
    let outputs = |s: u64| -> Result<(String, String)> {
        let schedule = AnnealSchedule { restarts: 2, sweeps_per_level: 50, ..AnnealSchedule::default() };
        let gs = find_ground_state(20, &v, &mu0, &schedule, s)?;
        let mut chain = Chain::new(sample_iid(&mu0, 20, s, 0)?, &v, 2.0, s, 0)?;
        let run = sample_gibbs(&mut chain, &v, &GibbsOptions { burn_in: 100, samples: 5, thin: Some(3) })?;
        let last = run.samples.last().expect("samples requested");
        Ok((configuration_to_string(&gs.config)?, configuration_to_string(last)?))
    };
    let a = outputs(seed)?;
    let b = outputs(seed)?;
    let other = outputs(seed.wrapping_add(1))?;
    c.check(a == b, "same seed gives byte-identical ground-state and Gibbs CSVs".into());
    c.check(a.1 != other.1, "a different seed changes the Gibbs CSV".into());
    Ok(c)
}
