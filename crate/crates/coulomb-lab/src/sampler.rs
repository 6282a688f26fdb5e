//! Gibbs sampling, ground states, free energies and tiled configurations.
//!
//! Every chain owns a ChaCha8 generator addressed by `(seed, stream)`, so a run
//! is reproducible from its manifest and independent chains can be spread over
//! threads without changing any output bit.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{solve_mu_beta_with, EquilibriumMeasure, MuBetaOptions};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernel::{
    dist, dist2, hamiltonian, hamiltonian_gradient, interaction_with_others, kernel_r, pair_energy,
    potential_energy, self_energy, Configuration, Dimension,
};
use crate::potential::{Potential, ZeroPotential};
use crate::special::{unit_ball_volume, unit_sphere_area};
use crate::splitting::golden_argmax_tol;
use crate::{par, quad};

/// Target acceptance window for the tuned random-walk proposal.
pub const ACCEPTANCE_WINDOW: (f64, f64) = (0.25, 0.40);
const ACCEPTANCE_TARGET: f64 = 0.325;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Running compensated sum, so that millions of incremental updates do not drift.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    fn new(v: f64) -> Self {
        Self { sum: v, comp: 0.0 }
    }
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// State of one Markov chain targeting `exp(-(beta/2) H_lambda)` with
/// `H_lambda = lambda * sum_{i != j} w + n sum V`.
#[derive(Clone, Debug)]
pub struct Chain {
    pub config: Configuration,
    pub beta: f64,
    /// Interaction switching parameter; 1 for the physical Hamiltonian.
    pub coupling: f64,
    /// Standard deviation of the Gaussian single-particle proposal.
    pub step: f64,
    pub accepted: u64,
    pub proposed: u64,
    pub sweeps: u64,
    /// Set once burn-in adaptation is over; the step is no longer touched.
    pub frozen: bool,
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
    pair: Accumulator,
    confinement: Accumulator,
}

/// Serializable snapshot of a [`Chain`], including the generator position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainCheckpoint {
    pub config: Configuration,
    pub beta: f64,
    pub coupling: f64,
    pub step: f64,
    pub accepted: u64,
    pub proposed: u64,
    pub sweeps: u64,
    pub frozen: bool,
    pub seed: u64,
    pub stream: u64,
    /// Word position of the generator, split into high and low halves.
    pub word_pos: [u64; 2],
}

impl Chain {
    pub fn new(config: Configuration, v: &dyn Potential, beta: f64, seed: u64, stream: u64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::InvalidInput(format!("beta must be positive, got {beta}")));
        }
        let pair = pair_energy(&config)?;
        let confinement = potential_energy(&config, v);
        let step = 0.3 * default_spacing(&config);
        Ok(Self {
            config,
            beta,
            coupling: 1.0,
            step,
            accepted: 0,
            proposed: 0,
            sweeps: 0,
            frozen: false,
            seed,
            stream,
            rng: rng_for(seed, stream),
            pair: Accumulator::new(pair),
            confinement: Accumulator::new(confinement),
        })
    }

    /// Same chain targeting `H_lambda` with the given coupling.
    pub fn with_coupling(mut self, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidInput(format!("coupling must lie in [0, 1], got {lambda}")));
        }
        self.coupling = lambda;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.config.n()
    }

    /// Cached `H_lambda`.
    pub fn energy(&self) -> f64 {
        self.coupling * self.pair.value() + self.n() as f64 * self.confinement.value()
    }

    /// Cached pair term `sum_{i != j} w(x_i - x_j)`.
    pub fn pair_term(&self) -> f64 {
        self.pair.value()
    }

    /// Cached `sum_i V(x_i)`.
    pub fn confinement_term(&self) -> f64 {
        self.confinement.value()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn reset_counters(&mut self) {
        self.accepted = 0;
        self.proposed = 0;
    }

    /// Relative difference between the cached energy and a fresh evaluation.
    pub fn audit(&self, v: &dyn Potential) -> Result<f64> {
        let pair = pair_energy(&self.config)?;
        let fresh = self.coupling * pair + self.n() as f64 * potential_energy(&self.config, v);
        Ok((self.energy() - fresh).abs() / fresh.abs().max(1.0))
    }

    /// Recomputes the energy caches from scratch.
    pub fn refresh(&mut self, v: &dyn Potential) -> Result<()> {
        self.pair = Accumulator::new(pair_energy(&self.config)?);
        self.confinement = Accumulator::new(potential_energy(&self.config, v));
        Ok(())
    }

    pub fn checkpoint(&self) -> ChainCheckpoint {
        let pos = self.rng.get_word_pos();
        ChainCheckpoint {
            config: self.config.clone(),
            beta: self.beta,
            coupling: self.coupling,
            step: self.step,
            accepted: self.accepted,
            proposed: self.proposed,
            sweeps: self.sweeps,
            frozen: self.frozen,
            seed: self.seed,
            stream: self.stream,
            word_pos: [(pos >> 64) as u64, pos as u64],
        }
    }

    pub fn from_checkpoint(cp: ChainCheckpoint, v: &dyn Potential) -> Result<Self> {
        let mut chain = Self::new(cp.config, v, cp.beta, cp.seed, cp.stream)?.with_coupling(cp.coupling)?;
        chain.step = cp.step;
        chain.accepted = cp.accepted;
        chain.proposed = cp.proposed;
        chain.sweeps = cp.sweeps;
        chain.frozen = cp.frozen;
        chain.rng.set_word_pos(((cp.word_pos[0] as u128) << 64) | cp.word_pos[1] as u128);
        Ok(chain)
    }

    fn gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }
}

/// Typical interparticle distance `n^{-1/d}` times the spread of the points.
fn default_spacing(config: &Configuration) -> f64 {
    let n = config.n();
    let d = config.dim().get();
    let mut mean = vec![0.0; d];
    for p in config.points() {
        mean.iter_mut().zip(p).for_each(|(m, x)| *m += x / n as f64);
    }
    let spread = config.points().map(|p| dist2(p, &mean)).sum::<f64>() / n as f64;
    let scale = spread.sqrt().max(1e-3);
    scale * (n as f64).powf(-1.0 / d as f64)
}

/// One systematic-scan sweep of single-particle Gaussian Metropolis moves.
///
/// Each move costs `O(n)`; moves onto another particle have `dH = +inf` and are rejected.
pub fn metropolis_sweep(chain: &mut Chain, v: &dyn Potential) {
    let n = chain.n();
    let d = chain.config.dim().get();
    let nf = n as f64;
    let mut y = vec![0.0; d];
    for i in 0..n {
        for k in 0..d {
            y[k] = chain.config.point(i)[k] + chain.step * chain.gaussian();
        }
        let u = chain.uniform();
        chain.proposed += 1;
        let old_int = interaction_with_others(&chain.config, i, chain.config.point(i));
        let new_int = interaction_with_others(&chain.config, i, &y);
        let d_pair = 2.0 * (new_int - old_int);
        let d_conf = v.value(&y) - v.value(chain.config.point(i));
        let dh = chain.coupling * d_pair + nf * d_conf;
        let accept = if dh.is_nan() {
            false
        } else {
            dh <= 0.0 || u < (-0.5 * chain.beta * dh).exp()
        };
        if accept && y.iter().all(|c| c.is_finite()) {
            chain.config.set_point(i, &y);
            chain.pair.add(d_pair);
            chain.confinement.add(d_conf);
            chain.accepted += 1;
        }
    }
    chain.sweeps += 1;
}

/// Burn-in with proposal adaptation toward 32.5% acceptance, then freezes the step.
///
/// Returns the acceptance rate of the final adaptation window.
pub fn tune(chain: &mut Chain, v: &dyn Potential, sweeps: usize) -> f64 {
    let mut last = chain.acceptance_rate();
    let window = 10usize;
    let mut done = 0;
    while done < sweeps {
        chain.reset_counters();
        let block = window.min(sweeps - done);
        for _ in 0..block {
            metropolis_sweep(chain, v);
        }
        done += block;
        last = chain.acceptance_rate();
        let factor = (2.0 * (last - ACCEPTANCE_TARGET)).exp().clamp(0.5, 2.0);
        chain.step *= factor;
    }
    chain.reset_counters();
    chain.frozen = true;
    last
}

/// `grad H_lambda`, flattened.
fn coupled_gradient(config: &Configuration, v: &dyn Potential, lambda: f64) -> Result<Vec<f64>> {
    let mut g = hamiltonian_gradient(config, &ZeroPotential)?;
    let n = config.n() as f64;
    let d = config.dim().get();
    let mut gv = vec![0.0; d];
    for (i, p) in config.points().enumerate() {
        v.gradient(p, &mut gv);
        for k in 0..d {
            g[i * d + k] = lambda * g[i * d + k] + n * gv[k];
        }
    }
    Ok(g)
}

/// One Metropolis-adjusted Langevin move of the whole configuration.
///
/// Proposal `y = x - (beta dt / 4) grad H + sqrt(dt) xi`, the Langevin
/// discretization for the density `exp(-(beta/2) H)`. Returns whether the move
/// was accepted.
pub fn langevin_step(chain: &mut Chain, v: &dyn Potential, dt: f64) -> Result<bool> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let lambda = chain.coupling;
    let drift = 0.25 * chain.beta * dt;
    let x = chain.config.coords().to_vec();
    let gx = coupled_gradient(&chain.config, v, lambda)?;
    let sq = dt.sqrt();
    let mut y = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let xi = chain.gaussian();
        y.push(x[k] - drift * gx[k] + sq * xi);
    }
    let u = chain.uniform();
    chain.proposed += 1;
    if y.iter().any(|c| !c.is_finite()) {
        return Err(Error::StepBlowUp { dt });
    }
    let proposal = Configuration::new(chain.config.dim(), y)?;
    let pair_y = match pair_energy(&proposal) {
        Ok(p) => p,
        Err(_) => return Ok(false),
    };
    let conf_y = potential_energy(&proposal, v);
    let n = chain.n() as f64;
    let hy = lambda * pair_y + n * conf_y;
    let hx = chain.energy();
    let gy = coupled_gradient(&proposal, v, lambda)?;
    let y = proposal.coords();
    let mut fwd = 0.0;
    let mut bwd = 0.0;
    for k in 0..x.len() {
        let a = y[k] - x[k] + drift * gx[k];
        let b = x[k] - y[k] + drift * gy[k];
        fwd += a * a;
        bwd += b * b;
    }
    let log_alpha = -0.5 * chain.beta * (hy - hx) - bwd / (2.0 * dt) + fwd / (2.0 * dt);
    if log_alpha.is_nan() {
        return Err(Error::StepBlowUp { dt });
    }
    if log_alpha >= 0.0 || u < log_alpha.exp() {
        chain.config = proposal;
        chain.pair = Accumulator::new(pair_y);
        chain.confinement = Accumulator::new(conf_y);
        chain.accepted += 1;
        return Ok(true);
    }
    Ok(false)
}

/// Options for [`sample_gibbs`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsOptions {
    pub burn_in: usize,
    pub samples: usize,
    /// Sweeps between stored samples; `None` picks twice the integrated
    /// autocorrelation time of `H` measured on a pilot run.
    pub thin: Option<usize>,
}

impl Default for GibbsOptions {
    fn default() -> Self {
        Self { burn_in: 500, samples: 1000, thin: None }
    }
}

/// Output of [`sample_gibbs`].
#[derive(Clone, Debug)]
pub struct GibbsRun {
    pub samples: Vec<Configuration>,
    pub energies: Vec<f64>,
    pub thin: usize,
    pub acceptance: f64,
    pub step: f64,
    pub autocorrelation_time: f64,
}

/// Burn-in (with tuning), optional pilot for the thinning interval, then `samples` stored states.
pub fn sample_gibbs(chain: &mut Chain, v: &dyn Potential, opts: &GibbsOptions) -> Result<GibbsRun> {
    tune(chain, v, opts.burn_in);
    let (thin, tau) = match opts.thin {
        Some(t) => (t.max(1), f64::NAN),
        None => {
            let pilot: Vec<f64> = (0..400)
                .map(|_| {
                    metropolis_sweep(chain, v);
                    chain.energy()
                })
                .collect();
            let tau = integrated_autocorrelation_time(&pilot);
            (((2.0 * tau).ceil() as usize).max(1), tau)
        }
    };
    chain.reset_counters();
    let mut samples = Vec::with_capacity(opts.samples);
    let mut energies = Vec::with_capacity(opts.samples);
    for _ in 0..opts.samples {
        for _ in 0..thin {
            metropolis_sweep(chain, v);
        }
        samples.push(chain.config.clone());
        energies.push(chain.energy());
    }
    let drift = chain.audit(v)?;
    if drift > 1e-9 {
        return Err(Error::Contract(format!("energy cache drifted by {drift:e}")));
    }
    Ok(GibbsRun { samples, energies, thin, acceptance: chain.acceptance_rate(), step: chain.step, autocorrelation_time: tau })
}

/// Integrated autocorrelation time with Sokal's self-consistent window (`c = 5`).
pub fn integrated_autocorrelation_time(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return 1.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let c: f64 = (0..n - lag).map(|i| (series[i] - mean) * (series[i + lag] - mean)).sum::<f64>() / n as f64;
        tau += 2.0 * c / var;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Draws i.i.d. points from an equilibrium measure.
#[derive(Clone, Debug)]
pub struct MeasureSampler {
    dim: Dimension,
    kind: SamplerKind,
}

#[derive(Clone, Debug)]
enum SamplerKind {
    Radial { center: Vec<f64>, radii: Vec<f64>, cdf: Vec<f64> },
    Grid { grid: Grid, nodes: Vec<usize>, cdf: Vec<f64> },
}

impl MeasureSampler {
    pub fn new(mu0: &EquilibriumMeasure) -> Result<Self> {
        let dim = mu0.dim();
        let d = dim.get();
        let kind = match &mu0.radial {
            Some(p) => {
                let k = 8192;
                let radii: Vec<f64> = (0..=k).map(|i| p.radius * i as f64 / k as f64).collect();
                let f = |r: f64| p.density(r.min(p.radius * (1.0 - 1e-15))) * r.powi(d as i32 - 1);
                let mut cdf = vec![0.0; k + 1];
                for i in 1..=k {
                    let (a, b) = (radii[i - 1], radii[i]);
                    cdf[i] = cdf[i - 1] + quad::integrate(f, a, b, 1e-14);
                }
                let total = cdf[k];
                if !(total > 0.0) {
                    return Err(Error::InvalidInput("measure has no mass".into()));
                }
                cdf.iter_mut().for_each(|c| *c /= total);
                SamplerKind::Radial { center: p.center.clone(), radii, cdf }
            }
            None => {
                let mut nodes = Vec::new();
                let mut cdf = Vec::new();
                let mut acc = 0.0;
                for (i, &rho) in mu0.density.iter().enumerate() {
                    if rho > 0.0 {
                        acc += rho;
                        nodes.push(i);
                        cdf.push(acc);
                    }
                }
                if !(acc > 0.0) {
                    return Err(Error::InvalidInput("measure has no mass".into()));
                }
                cdf.iter_mut().for_each(|c| *c /= acc);
                SamplerKind::Grid { grid: mu0.grid.clone(), nodes, cdf }
            }
        };
        Ok(Self { dim, kind })
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim.get();
        match &self.kind {
            SamplerKind::Radial { center, radii, cdf } => {
                let u: f64 = rng.gen();
                let k = cdf.partition_point(|&c| c < u).clamp(1, cdf.len() - 1);
                let t = if cdf[k] > cdf[k - 1] { (u - cdf[k - 1]) / (cdf[k] - cdf[k - 1]) } else { 0.5 };
                let r = radii[k - 1] + t * (radii[k] - radii[k - 1]);
                let mut dir: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                dir.iter_mut().zip(center).for_each(|(x, c)| *x = c + r * *x / norm);
                dir
            }
            SamplerKind::Grid { grid, nodes, cdf } => {
                let u: f64 = rng.gen();
                let k = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
                let node = grid.node(nodes[k]);
                (0..d).map(|a| node[a] + grid.h * (rng.gen::<f64>() - 0.5)).collect()
            }
        }
    }

    pub fn configuration<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Configuration> {
        let coords: Vec<f64> = (0..n).flat_map(|_| self.draw(rng)).collect();
        Configuration::new(self.dim, coords)
    }
}

/// `n` i.i.d. draws from `mu0`, reproducible from `(seed, stream)`.
pub fn sample_iid(mu0: &EquilibriumMeasure, n: usize, seed: u64, stream: u64) -> Result<Configuration> {
    let mut rng = rng_for(seed, stream);
    MeasureSampler::new(mu0)?.configuration(n, &mut rng)
}

/// Result of a local minimization of `H_n`.
#[derive(Clone, Debug)]
pub struct Polished {
    pub config: Configuration,
    pub energy: f64,
    pub grad_inf: f64,
    pub iterations: usize,
}

/// L-BFGS descent with Armijo backtracking on `H_n`.
pub fn polish(config: &Configuration, v: &dyn Potential, max_iterations: usize, grad_tol: f64) -> Result<Polished> {
    let dim = config.dim();
    let n = config.n();
    let eval = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
        let c = Configuration::new(dim, x.to_vec()).ok()?;
        let f = hamiltonian(&c, v).ok()?;
        let g = hamiltonian_gradient(&c, v).ok()?;
        f.is_finite().then_some((f, g))
    };
    let inf_norm = |g: &[f64]| g.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = config.coords().to_vec();
    let (mut f, mut g) = eval(&x).ok_or(Error::CoincidentPoints { i: 0, j: 0 })?;
    let spacing = default_spacing(config);
    let memory = 12;
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    while iterations < max_iterations && inf_norm(&g) >= grad_tol {
        iterations += 1;
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = match hist.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 0.1 * spacing / inf_norm(&g).max(f64::MIN_POSITIVE),
        };
        q.iter_mut().for_each(|qi| *qi *= gamma);
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            hist.clear();
            let scale = 0.1 * spacing / inf_norm(&g).max(f64::MIN_POSITIVE);
            dir = g.iter().map(|v| -scale * v).collect();
            slope = dot(&g, &dir);
        }
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            if let Some((ft, gt)) = eval(&trial) {
                let flat = (ft - f).abs() <= 4.0 * f64::EPSILON * f.abs() && inf_norm(&gt) < inf_norm(&g);
                if ft <= f + 1e-4 * t * slope || flat {
                    next = Some((trial, ft, gt));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gn)) = next else {
            if hist.is_empty() {
                break;
            }
            hist.clear();
            continue;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            hist.push_back((s, y, 1.0 / sy));
            if hist.len() > memory {
                hist.pop_front();
            }
        }
        x = xn;
        f = fnew;
        g = gn;
    }
    let grad_inf = inf_norm(&g);
    let config = Configuration::new(dim, x)?;
    debug_assert_eq!(config.n(), n);
    Ok(Polished { config, energy: f, grad_inf, iterations })
}

/// Annealing ladder for [`find_ground_state`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnealSchedule {
    /// Strictly increasing inverse temperatures.
    pub betas: Vec<f64>,
    pub sweeps_per_level: usize,
    /// Descent iterations applied after the sweeps of each level.
    pub descent_steps: usize,
    pub restarts: usize,
    /// Iteration cap of the final polish.
    pub polish_iterations: usize,
    /// Declared tolerance on `max |grad H_n|`; `None` means `1e-6 n`.
    pub grad_tol: Option<f64>,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            betas: vec![10.0, 30.0, 100.0, 300.0, 1000.0, 3000.0],
            sweeps_per_level: 200,
            descent_steps: 50,
            restarts: 4,
            polish_iterations: 20_000,
            grad_tol: None,
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(Error::InvalidInput("anneal schedule needs at least one beta".into()));
        }
        if self.betas.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(Error::InvalidInput("anneal betas must be positive and finite".into()));
        }
        if self.betas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("anneal betas must be strictly increasing".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidInput("anneal schedule needs at least one restart".into()));
        }
        Ok(())
    }

    pub fn tolerance(&self, n: usize) -> f64 {
        self.grad_tol.unwrap_or(1e-6 * n as f64)
    }
}

/// Best configuration found by [`find_ground_state`].
#[derive(Clone, Debug)]
pub struct GroundState {
    pub config: Configuration,
    pub energy: f64,
    pub grad_inf: f64,
    pub grad_tol: f64,
    pub converged: bool,
    /// Final energy of every restart, in restart order.
    pub restart_energies: Vec<f64>,
    pub best_restart: usize,
}

/// Best-of-restarts annealing followed by an L-BFGS polish.
///
/// Restart 0 starts from the tiled construction when it is feasible; the
/// others start from i.i.d. draws of `mu0`. Restarts run in parallel on
/// separate generator streams.
pub fn find_ground_state(
    n: usize,
    v: &dyn Potential,
    mu0: &EquilibriumMeasure,
    schedule: &AnnealSchedule,
    seed: u64,
) -> Result<GroundState> {
    schedule.validate()?;
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    let tol = schedule.tolerance(n);
    let sampler = MeasureSampler::new(mu0)?;
    let runs = par::map_range(schedule.restarts, |r| -> Result<Polished> {
        let mut rng = rng_for(seed, 1_000_000 + r as u64);
        let start = match r {
            0 => generate_tiled_configuration(mu0, n, None, seed).or_else(|_| sampler.configuration(n, &mut rng))?,
            _ => sampler.configuration(n, &mut rng)?,
        };
        let mut chain = Chain::new(start, v, schedule.betas[0], seed, r as u64)?;
        for &beta in &schedule.betas {
            chain.beta = beta;
            tune(&mut chain, v, schedule.sweeps_per_level);
            if schedule.descent_steps > 0 && n > 1 {
                let p = polish(&chain.config, v, schedule.descent_steps, tol)?;
                chain.config = p.config;
                chain.refresh(v)?;
            }
        }
        polish(&chain.config, v, schedule.polish_iterations, tol)
    });
    let mut best: Option<(usize, Polished)> = None;
    let mut energies = Vec::with_capacity(runs.len());
    for (r, run) in runs.into_iter().enumerate() {
        let run = run?;
        energies.push(run.energy);
        if best.as_ref().map_or(true, |(_, b)| run.energy < b.energy) {
            best = Some((r, run));
        }
    }
    let (best_restart, p) = best.expect("at least one restart");
    Ok(GroundState {
        converged: p.grad_inf < tol,
        config: p.config,
        energy: p.energy,
        grad_inf: p.grad_inf,
        grad_tol: tol,
        restart_energies: energies,
        best_restart,
    })
}

/// Thermodynamic-integration protocol for [`free_energy`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TiProtocol {
    /// Gauss–Legendre nodes in the coupling.
    pub lambda_nodes: usize,
    pub chains: usize,
    pub burn_in: usize,
    pub sweeps: usize,
    pub batches: usize,
    pub rhat_threshold: f64,
    pub seed: u64,
}

impl Default for TiProtocol {
    fn default() -> Self {
        Self { lambda_nodes: 8, chains: 4, burn_in: 1000, sweeps: 10_000, batches: 20, rhat_threshold: 1.1, seed: 1 }
    }
}

/// Statistics at one coupling node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiNode {
    pub lambda: f64,
    pub weight: f64,
    /// Estimate of the mean pair term under `H_lambda`.
    pub mean: f64,
    pub error: f64,
    pub rhat: f64,
    pub acceptance: f64,
}

/// Free energy `F = -(2/beta) log Z` with its batch-means error bar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyEstimate {
    pub value: f64,
    pub error: f64,
    /// Closed-form value at zero coupling.
    pub f0: f64,
    pub nodes: Vec<TiNode>,
    /// Set when some node has `rhat` above the protocol threshold.
    pub flagged: bool,
}

/// `log int exp(-coeff V(x)) dx` for a radial potential.
pub fn log_single_particle_integral(v: &dyn Potential, dim: Dimension, coeff: f64) -> Result<f64> {
    let center = v
        .radial_center()
        .ok_or_else(|| Error::InvalidInput("closed-form one-body integral needs a radial potential".into()))?
        .to_vec();
    let d = dim.get();
    let at = |r: f64| {
        let mut x = center.clone();
        x[0] += r;
        v.value(&x)
    };
    let v0 = at(0.0);
    log_radial_integral(|r| coeff * (at(r) - v0), d, 1e-14).map(|l| l - coeff * v0)
}

/// `log(|S^{d-1}| int_0^inf r^{d-1} exp(-phi(r)) dr)` for increasing-at-infinity `phi >= 0`-ish.
fn log_radial_integral<F: Fn(f64) -> f64>(phi: F, d: usize, tol: f64) -> Result<f64> {
    let (argmin, min) = (0..=400)
        .map(|k| (k as f64 * 0.05, phi(k as f64 * 0.05)))
        .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let mut hi = argmin.max(1e-3);
    while phi(hi) - min < 80.0 {
        hi *= 1.5;
        if hi > 1e8 {
            return Err(Error::InvalidInput("one-body weight is not integrable".into()));
        }
    }
    let f = |r: f64| r.powi(d as i32 - 1) * (-(phi(r) - min)).exp();
    let pieces = 64;
    let mut total = 0.0;
    for k in 0..pieces {
        let a = hi * k as f64 / pieces as f64;
        let b = hi * (k + 1) as f64 / pieces as f64;
        total += quad::integrate(f, a, b, tol);
    }
    Ok((unit_sphere_area(d) * total).ln() - min)
}

/// Thermodynamic integration `F(1) = F(0) + int_0^1 <pair>_lambda dlambda`.
///
/// Chains at every `(node, chain)` pair are independent and run in parallel;
/// the reduction is ordered by node and chain index.
pub fn free_energy(n: usize, dim: Dimension, v: &dyn Potential, beta: f64, protocol: &TiProtocol) -> Result<FreeEnergyEstimate> {
    if !(beta > 0.0) {
        return Err(Error::InvalidInput(format!("beta must be positive, got {beta}")));
    }
    if n < 2 || protocol.lambda_nodes == 0 || protocol.chains < 2 || protocol.batches < 2 {
        return Err(Error::InvalidInput("free energy needs n >= 2, one node, two chains and two batches".into()));
    }
    let nf = n as f64;
    let f0 = -2.0 * nf / beta * log_single_particle_integral(v, dim, 0.5 * beta * nf)?;
    let (lambdas, weights) = quad::gauss_legendre_on(protocol.lambda_nodes, 0.0, 1.0);
    let width = (2.0 / (beta * nf)).sqrt();
    let center = v.radial_center().map(|c| c.to_vec()).unwrap_or_else(|| vec![0.0; dim.get()]);
    let jobs = protocol.lambda_nodes * protocol.chains;
    let series = par::map_range(jobs, |job| -> Result<(Vec<f64>, f64)> {
        let (node, c) = (job / protocol.chains, job % protocol.chains);
        let mut rng = rng_for(protocol.seed, 2_000_000 + job as u64);
        let coords: Vec<f64> =
            (0..n).flat_map(|_| center.clone()).map(|c0| c0 + width * rng.sample::<f64, _>(StandardNormal)).collect();
        let config = Configuration::new(dim, coords)?;
        let mut chain = Chain::new(config, v, beta, protocol.seed, job as u64)?.with_coupling(lambdas[node])?;
        let _ = c;
        tune(&mut chain, v, protocol.burn_in);
        let mut out = Vec::with_capacity(protocol.sweeps);
        for _ in 0..protocol.sweeps {
            metropolis_sweep(&mut chain, v);
            out.push(chain.pair_term());
        }
        let drift = chain.audit(v)?;
        if drift > 1e-9 {
            return Err(Error::Contract(format!("energy cache drifted by {drift:e}")));
        }
        Ok((out, chain.acceptance_rate()))
    });
    let mut series_ok = Vec::with_capacity(jobs);
    for s in series {
        series_ok.push(s?);
    }
    let mut nodes = Vec::with_capacity(protocol.lambda_nodes);
    let mut value = f0;
    let mut var = 0.0;
    let mut flagged = false;
    for node in 0..protocol.lambda_nodes {
        let chunk = &series_ok[node * protocol.chains..(node + 1) * protocol.chains];
        let runs: Vec<&[f64]> = chunk.iter().map(|(s, _)| s.as_slice()).collect();
        let (mean, error) = batch_means(&runs, protocol.batches);
        let rhat = gelman_rubin(&runs);
        flagged |= !(rhat <= protocol.rhat_threshold);
        let acceptance = chunk.iter().map(|(_, a)| a).sum::<f64>() / chunk.len() as f64;
        value += weights[node] * mean;
        var += (weights[node] * error).powi(2);
        nodes.push(TiNode { lambda: lambdas[node], weight: weights[node], mean, error, rhat, acceptance });
    }
    Ok(FreeEnergyEstimate { value, error: var.sqrt(), f0, nodes, flagged })
}

/// Pooled mean and standard error from `batches` contiguous batches per run.
pub fn batch_means(runs: &[&[f64]], batches: usize) -> (f64, f64) {
    let mut means = Vec::new();
    for run in runs {
        let len = run.len() / batches;
        if len == 0 {
            continue;
        }
        for b in 0..batches {
            let s = &run[b * len..(b + 1) * len];
            means.push(s.iter().sum::<f64>() / len as f64);
        }
    }
    let k = means.len() as f64;
    if k < 2.0 {
        return (means.first().copied().unwrap_or(f64::NAN), f64::INFINITY);
    }
    let mean = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Potential scale reduction factor across equal-length runs.
pub fn gelman_rubin(runs: &[&[f64]]) -> f64 {
    let m = runs.len();
    let len = runs.iter().map(|r| r.len()).min().unwrap_or(0);
    if m < 2 || len < 2 {
        return f64::NAN;
    }
    let l = len as f64;
    let means: Vec<f64> = runs.iter().map(|r| r[..len].iter().sum::<f64>() / l).collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = l / (m as f64 - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = runs
        .iter()
        .zip(&means)
        .map(|(r, mu)| r[..len].iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (l - 1.0))
        .sum::<f64>()
        / m as f64;
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    (((l - 1.0) / l * w + b / l) / w).sqrt()
}

/// Rigorous lower bound on `F_{n,beta}` with the smearing length that realizes it.
///
/// From the smeared-charge inequality, `H_n >= -n^2 D(mu0, mu0) - n D(delta^l, delta^l) + sum_i g(x_i)`
/// with `g = 2n D(mu0, delta^l_x) + n V`, so
/// `F >= -n^2 D(mu0, mu0) - n D(delta^l, delta^l) - (2n/beta) log int exp(-(beta/2) g)`.
pub fn free_energy_lower_bound(n: usize, beta: f64, mu0: &EquilibriumMeasure, v: &dyn Potential) -> Result<(f64, f64)> {
    let profile = mu0
        .radial
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("free-energy lower bound needs a radial equilibrium measure".into()))?;
    let dim = mu0.dim();
    let d = dim.get();
    let nf = n as f64;
    let dmu = mu0.self_energy();
    let center = profile.center.clone();
    let bound = |ell: f64| -> f64 {
        let g = |r: f64| {
            let mut x = center.clone();
            x[0] += r;
            0.5 * beta * (2.0 * nf * profile.smeared_cross(r, ell) + nf * v.value(&x))
        };
        match log_radial_integral(g, d, 1e-9) {
            Ok(l) => -nf * nf * dmu - nf * self_energy(ell, dim) - 2.0 * nf / beta * l,
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let spacing = nf.powf(-1.0 / d as f64);
    let (t, value) = golden_argmax_tol(|t| bound(t.exp()), (1e-3 * spacing).ln(), (2.0 * spacing).ln(), 1e-4);
    Ok((value, t.exp()))
}

/// Upper bound `n^2 F[mu] - n D(mu, mu)` from the product trial state `mu^{(x) n}`,
/// evaluated at the mean-field minimizer `mu_beta` on `grid`.
pub fn free_energy_upper_bound(n: usize, beta: f64, v: &dyn Potential, grid: &Grid) -> Result<(f64, EquilibriumMeasure)> {
    let opts = MuBetaOptions { tol: 1e-9, ..MuBetaOptions::default() };
    let mu = solve_mu_beta_with(v, n, beta, grid, &opts, None)?;
    let nf = n as f64;
    let f = crate::equilibrium::mf_free_energy(&mu, v, n, beta)?;
    Ok((nf * nf * f - nf * mu.self_energy(), mu))
}

/// Exact partition function of two particles in `alpha |x|^2`:
/// `Z = (pi / (2 beta alpha))^{d/2} int exp(-(beta/2)(2 w(r) + alpha r^2)) dr`.
pub fn two_particle_log_partition(dim: Dimension, alpha: f64, beta: f64) -> Result<f64> {
    let d = dim.get();
    let com = 0.5 * d as f64 * (std::f64::consts::PI / (2.0 * beta * alpha)).ln();
    let rel = log_radial_integral(|r| 0.5 * beta * (2.0 * kernel_r(r.max(1e-300), dim) + alpha * r * r), d, 1e-14)?;
    Ok(com + rel)
}

/// Tiled configuration built from lattice patches on a tiling of the blown-up support.
#[derive(Clone, Debug)]
pub struct Tiling {
    pub config: Configuration,
    /// Blown-up cells as `(lo, hi, count)`.
    pub cells: Vec<(Vec<f64>, Vec<f64>, usize)>,
    pub boundary_points: usize,
    /// Minimum separation enforced at blown-up scale.
    pub r0: f64,
    pub cell_radius: f64,
}

/// See [`tile_configuration`]; returns the configuration only.
pub fn generate_tiled_configuration(mu0: &EquilibriumMeasure, n: usize, r_cell: Option<f64>, seed: u64) -> Result<Configuration> {
    tile_configuration(mu0, n, r_cell, seed).map(|t| t.config)
}

/// Blown-up support volume `|Sigma|`.
fn support_volume(mu0: &EquilibriumMeasure) -> f64 {
    match &mu0.radial {
        Some(p) => unit_ball_volume(p.dim.get()) * p.radius.powi(p.dim.get() as i32),
        None => mu0.support.iter().filter(|&&s| s).count() as f64 * mu0.grid.cell_volume(),
    }
}

/// Lattice spacings at density `rho`: nearest-neighbor distance, row spacing, layer spacing.
///
/// Triangular rows in the plane; close-packed (111) layers in space.
fn patch_spacings(rho: f64, d: usize) -> (f64, f64, f64) {
    if d == 2 {
        let a = (2.0 / (3f64.sqrt() * rho)).sqrt();
        (a, 0.5 * 3f64.sqrt() * a, 0.0)
    } else {
        let a = (2f64.sqrt() / rho).cbrt();
        (a, 0.5 * 3f64.sqrt() * a, (2.0 / 3.0f64).sqrt() * a)
    }
}

const RELAX_SWEEPS: usize = 200;

/// Builds the tiled configuration.
///
/// The support is blown up by `n^{1/d}` and cut into strips along the first
/// axis whose cross-sections are whole numbers of lattice rows (and layers in
/// three dimensions), about `2 r_cell` across; the default is `1.5 / m^{1/d}`
/// with `m` the mean blown-up density. Along each strip, cells are grown
/// greedily until they carry an integer mass that is a multiple of the number
/// of rows, and each cell is filled with a triangular (d = 2) or close-packed
/// ABC-stacked (d = 3) patch with that many points. Strips start on a common
/// lattice phase, so patches of equal density join without seams. The
/// remaining mass is placed in the boundary layer by best-candidate dart
/// throwing from `mu0` with minimum separation `r0 = 0.5 / m^{1/d}`, then
/// relaxed by zero-temperature local moves that keep that separation.
pub fn tile_configuration(mu0: &EquilibriumMeasure, n: usize, r_cell: Option<f64>, seed: u64) -> Result<Tiling> {
    let dim = mu0.dim();
    let d = dim.get();
    let nf = n as f64;
    let scale = nf.powf(1.0 / d as f64);
    let mean_density = 1.0 / support_volume(mu0);
    let r0 = 0.5 / mean_density.powf(1.0 / d as f64);
    let rc = r_cell.unwrap_or(1.5 / mean_density.powf(1.0 / d as f64));
    if !(rc > 0.0 && rc.is_finite()) {
        return Err(Error::InvalidInput(format!("cell radius must be positive, got {rc}")));
    }
    let (a_lat, dy, dz) = patch_spacings(mean_density, d);
    let rows = ((2.0 * rc / dy).round() as usize).max(1);
    let layers = if d == 3 { ((2.0 * rc / dz).round() as usize).max(1) } else { 1 };
    let block = rows * layers;
    let heights: Vec<f64> = match d {
        2 => vec![rows as f64 * dy],
        _ => vec![rows as f64 * dy, layers as f64 * dz],
    };
    let density = |y: &[f64]| -> f64 {
        let x: Vec<f64> = y.iter().map(|c| c / scale).collect();
        mu0.density_at(&x)
    };
    let inside = |y: &[f64]| density(y) > 0.0;
    let (lo, hi) = support_box(mu0);
    let lo: Vec<f64> = lo.iter().map(|c| c * scale).collect();
    let hi: Vec<f64> = hi.iter().map(|c| c * scale).collect();

    let (gx, gw) = quad::gauss_legendre(6);
    let cell_mass = |a: &[f64], b: &[f64]| -> f64 {
        let mut total = 0.0;
        let mut idx = vec![0usize; d];
        loop {
            let mut y = vec![0.0; d];
            let mut w = 1.0;
            for k in 0..d {
                let half = 0.5 * (b[k] - a[k]);
                y[k] = a[k] + half * (1.0 + gx[idx[k]]);
                w *= half * gw[idx[k]];
            }
            total += w * density(&y);
            let mut k = 0;
            while k < d {
                idx[k] += 1;
                if idx[k] < gx.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == d {
                break;
            }
        }
        total
    };
    // every corner, edge midpoint and face center of the box lies in the support
    let box_inside = |a: &[f64], b: &[f64]| -> bool {
        (0..3usize.pow(d as u32)).all(|code| {
            let mut c = code;
            let y: Vec<f64> = (0..d)
                .map(|k| {
                    let t = (c % 3) as f64 * 0.5;
                    c /= 3;
                    a[k] + t * (b[k] - a[k])
                })
                .collect();
            inside(&y)
        })
    };

    // odd strip counts put one strip on the center line
    let counts: Vec<usize> = (1..d)
        .map(|k| {
            let c = ((hi[k] - lo[k]) / heights[k - 1]).floor().max(0.0) as usize;
            if c % 2 == 0 {
                c.saturating_sub(1)
            } else {
                c
            }
        })
        .collect();
    let offsets: Vec<f64> =
        (1..d).map(|k| lo[k] + 0.5 * ((hi[k] - lo[k]) - counts[k - 1] as f64 * heights[k - 1])).collect();
    let strips: usize = counts.iter().product();
    let mut cells: Vec<(Vec<f64>, Vec<f64>, usize)> = Vec::new();
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(n);
    let probe = 400usize;
    for s in 0..strips {
        let mut a = vec![0.0; d];
        let mut b = vec![0.0; d];
        let mut strip_index = vec![0usize; d - 1];
        let mut rem = s;
        for k in 1..d {
            let j = rem % counts[k - 1];
            rem /= counts[k - 1];
            strip_index[k - 1] = j;
            a[k] = offsets[k - 1] + j as f64 * heights[k - 1];
            b[k] = a[k] + heights[k - 1];
        }
        // longest run of x-positions where a thin slab of the strip is inside the support
        let dx = (hi[0] - lo[0]) / probe as f64;
        let mut best = (0usize, 0usize);
        let mut start = None;
        for i in 0..=probe {
            let ok = i < probe && {
                a[0] = lo[0] + i as f64 * dx;
                b[0] = a[0] + dx;
                box_inside(&a, &b)
            };
            match (ok, start) {
                (true, None) => start = Some(i),
                (false, Some(st)) => {
                    if i - st > best.1 - best.0 {
                        best = (st, i);
                    }
                    start = None;
                }
                _ => {}
            }
        }
        if best.1 == best.0 {
            continue;
        }
        let x_hi = lo[0] + best.1 as f64 * dx;
        // snap the strip start to the common lattice phase
        let x_lo = lo[0] + ((best.0 as f64 * dx) / a_lat).ceil() * a_lat;
        let row_base = strip_index[0] * rows;
        let layer_base = strip_index.get(1).map_or(0, |&j| j * layers);
        let mut x0 = x_lo;
        while x0 < x_hi {
            let mut ca = a.clone();
            let mut cb = b.clone();
            ca[0] = x0;
            cb[0] = (x0 + 2.0 * rc).min(x_hi);
            let target = ((cell_mass(&ca, &cb) / block as f64).round() as usize * block) as f64;
            if target < 1.0 {
                break;
            }
            cb[0] = x_hi;
            if cell_mass(&ca, &cb) < target {
                break;
            }
            let (mut l, mut r) = (x0, x_hi);
            for _ in 0..80 {
                let mid = 0.5 * (l + r);
                cb[0] = mid;
                if cell_mass(&ca, &cb) < target {
                    l = mid;
                } else {
                    r = mid;
                }
            }
            cb[0] = r;
            if !box_inside(&ca, &cb) {
                break;
            }
            let count = target as usize;
            fill_cell(&ca, &cb, count, rows, layers, row_base, layer_base, &mut points);
            cells.push((ca, cb, count));
            x0 = r;
        }
    }
    if cells.is_empty() {
        return Err(Error::TilingInfeasible(format!(
            "no cell of size {:.3} fits inside the blown-up support at n = {n}; use a larger n or a smaller cell radius",
            2.0 * rc
        )));
    }
    let placed = points.len();
    if placed > n {
        return Err(Error::TilingInfeasible(format!("cells carry {placed} points but n = {n}")));
    }
    let mut rng = rng_for(seed, 3_000_000);
    let sampler = MeasureSampler::new(mu0)?;
    let in_cell = |y: &[f64]| cells.iter().any(|(a, b, _)| (0..d).all(|k| y[k] >= a[k] && y[k] <= b[k]));
    let boundary = n - placed;
    let candidates = 128;
    // cost of adding y at macroscopic scale; on the support n V = 2n (c - h_mu0)
    let increment = |y: &[f64], points: &[Vec<f64>]| -> f64 {
        let pair: f64 = points.iter().map(|p| kernel_r(dist(p, y) / scale, dim)).sum();
        let x: Vec<f64> = y.iter().map(|c| c / scale).collect();
        2.0 * pair - 2.0 * nf * mu0.potential_at(&x)
    };
    for _ in 0..boundary {
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut tries = 0usize;
        let mut found = 0usize;
        while found < candidates && tries < 20_000 {
            tries += 1;
            let y: Vec<f64> = sampler.draw(&mut rng).into_iter().map(|c| c * scale).collect();
            if in_cell(&y) {
                continue;
            }
            let sep = points.iter().map(|p| dist(p, &y)).fold(f64::INFINITY, f64::min);
            if sep < r0 {
                continue;
            }
            found += 1;
            let e = increment(&y, &points);
            if best.as_ref().map_or(true, |(s, _)| e < *s) {
                best = Some((e, y));
            }
        }
        match best {
            Some((_, y)) => points.push(y),
            None => {
                return Err(Error::TilingInfeasible(format!(
                    "could not place boundary point {} of {boundary} with separation {r0:.3}; use a larger n or a smaller cell radius",
                    points.len() - placed + 1
                )))
            }
        }
    }
    // zero-temperature local moves of the boundary points; patches stay fixed
    let mut step = 0.5 * r0;
    for _ in 0..RELAX_SWEEPS {
        for i in placed..points.len() {
            let y: Vec<f64> = points[i].iter().map(|c| c + step * rng.sample::<f64, _>(StandardNormal)).collect();
            if !inside(&y) || in_cell(&y) {
                continue;
            }
            let others: Vec<Vec<f64>> = points.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, p)| p.clone()).collect();
            if others.iter().any(|p| dist(p, &y) < r0) {
                continue;
            }
            if increment(&y, &others) < increment(&points[i], &others) {
                points[i] = y;
            }
        }
        step *= 0.98;
    }
    let blown = Configuration::from_points(dim, &points)?;
    if let Some((sep, _, _)) = blown.min_separation() {
        if sep < r0 {
            return Err(Error::TilingInfeasible(format!(
                "lattice patches came out {sep:.3} apart, below r0 = {r0:.3}; use a larger cell radius"
            )));
        }
    }
    Ok(Tiling { config: blown.scaled(1.0 / scale), cells, boundary_points: boundary, r0, cell_radius: rc })
}

/// Bounding box of the support at macroscopic scale.
fn support_box(mu0: &EquilibriumMeasure) -> (Vec<f64>, Vec<f64>) {
    let d = mu0.dim().get();
    match &mu0.radial {
        Some(p) => (p.center.iter().map(|c| c - p.radius).collect(), p.center.iter().map(|c| c + p.radius).collect()),
        None => {
            let mut lo = vec![f64::INFINITY; d];
            let mut hi = vec![f64::NEG_INFINITY; d];
            for (i, &s) in mu0.support.iter().enumerate() {
                if s {
                    let x = mu0.grid.node(i);
                    for k in 0..d {
                        lo[k] = lo[k].min(x[k] - 0.5 * mu0.grid.h);
                        hi[k] = hi[k].max(x[k] + 0.5 * mu0.grid.h);
                    }
                }
            }
            (lo, hi)
        }
    }
}

/// Lattice patch with `rows x layers` rows of `count / (rows layers)` points each.
///
/// Row `j` of layer `l` (global indices) sits at height `(j + 1/2) dy` in the
/// plane, or `(j + 1/6 + (l mod 3)/3) dy` in space, and its points at
/// `(k + f) dx` with `f` in `{1/4, 3/4}` chosen by row parity and stacking.
#[allow(clippy::too_many_arguments)]
fn fill_cell(
    a: &[f64],
    b: &[f64],
    count: usize,
    rows: usize,
    layers: usize,
    row_base: usize,
    layer_base: usize,
    out: &mut Vec<Vec<f64>>,
) {
    let d = a.len();
    let per_row = count / (rows * layers);
    let dx = (b[0] - a[0]) / per_row as f64;
    let dy = (b[1] - a[1]) / rows as f64;
    for l in 0..layers {
        let gl = layer_base + l;
        let stack = if d == 3 { gl % 3 } else { 0 };
        for j in 0..rows {
            let gj = row_base + j;
            let f = 0.25 + 0.5 * ((gj % 2 + stack) % 2) as f64;
            let y = if d == 3 {
                a[1] + (j as f64 + 1.0 / 6.0 + stack as f64 / 3.0) * dy
            } else {
                a[1] + (j as f64 + 0.5) * dy
            };
            for k in 0..per_row {
                let mut p = vec![a[0] + (k as f64 + f) * dx, y];
                if d == 3 {
                    p.push(a[2] + (l as f64 + 0.5) * (b[2] - a[2]) / layers as f64);
                }
                out.push(p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::solve_equilibrium_radial;
    use crate::potential::PowerPotential;

    fn quad2() -> PowerPotential {
        PowerPotential::quadratic(Dimension::Two)
    }

    #[test]
    fn checkpoint_resumes_bit_identically() {
        let v = quad2();
        let c = Configuration::new(Dimension::Two, vec![0.1, 0.2, -0.3, 0.1, 0.0, -0.4]).unwrap();
        let mut a = Chain::new(c, &v, 2.0, 9, 0).unwrap();
        for _ in 0..20 {
            metropolis_sweep(&mut a, &v);
        }
        let cp = a.checkpoint();
        let json = serde_json::to_string(&cp).unwrap();
        let mut b = Chain::from_checkpoint(serde_json::from_str(&json).unwrap(), &v).unwrap();
        for _ in 0..20 {
            metropolis_sweep(&mut a, &v);
            metropolis_sweep(&mut b, &v);
        }
        assert_eq!(a.config, b.config);
    }

    #[test]
    fn batch_means_of_constant_series() {
        let s = vec![2.0; 100];
        let (m, e) = batch_means(&[&s, &s], 10);
        assert_eq!(m, 2.0);
        assert_eq!(e, 0.0);
    }

    #[test]
    fn log_integral_of_gaussian() {
        let v = quad2();
        // int exp(-a |x|^2) = pi / a in the plane
        let got = log_single_particle_integral(&v, Dimension::Two, 3.0).unwrap();
        assert!((got - (std::f64::consts::PI / 3.0).ln()).abs() < 1e-11);
    }

    #[test]
    fn tiled_count_is_exact() {
        let v = quad2();
        let mu0 = solve_equilibrium_radial(&v, Dimension::Two).unwrap();
        let t = tile_configuration(&mu0, 100, None, 1).unwrap();
        assert_eq!(t.config.n(), 100);
        assert!(t.boundary_points < 100);
    }
}
