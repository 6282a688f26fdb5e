//! Mean-field energy, equilibrium measures, the effective potential and the
//! finite-temperature mean-field density.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{free_space_potential, FreeSpaceOperator, Grid};
use crate::kernel::{dist, kernel_r, Dimension, SpaceConstants};
use crate::par;
use crate::potential::Potential;
use crate::quad;
use crate::special::unit_sphere_area;

/// Mass tolerance every returned measure satisfies.
pub const MASS_TOL: f64 = 1e-6;
/// Support threshold relative to the maximal density.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

const RADIAL_TOL: f64 = 1e-13;

/// Closed-form description of a radial equilibrium measure.
#[derive(Clone, Debug)]
pub struct RadialProfile {
    pub dim: Dimension,
    pub center: Vec<f64>,
    pub radius: f64,
    pub robin_constant: f64,
    potential: Arc<dyn Potential>,
}

impl RadialProfile {
    fn point_at(&self, r: f64) -> Vec<f64> {
        let mut x = self.center.clone();
        x[0] += r;
        x
    }

    fn v(&self, r: f64) -> f64 {
        self.potential.value(&self.point_at(r))
    }

    pub fn density(&self, r: f64) -> f64 {
        if r > self.radius {
            return 0.0;
        }
        let c = SpaceConstants::of(self.dim).c_d;
        self.potential.laplacian(&self.point_at(r)) / (2.0 * c)
    }

    /// `h_mu(r)`: `c - V/2` on the support, `w(r)` outside.
    pub fn potential(&self, r: f64) -> f64 {
        if r <= self.radius {
            self.robin_constant - 0.5 * self.v(r)
        } else {
            kernel_r(r, self.dim)
        }
    }

    /// Integral of `f(r)` against the measure.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let d = self.dim.get();
        let s = unit_sphere_area(d);
        quad::integrate(
            |r| f(r) * self.density(r) * s * r.powi(d as i32 - 1),
            0.0,
            self.radius,
            RADIAL_TOL,
        )
    }

    /// `D(mu, mu) = c - (1/2) int V dmu`.
    pub fn self_energy(&self) -> f64 {
        self.robin_constant - 0.5 * self.integrate(|r| self.v(r))
    }

    /// `D(mu, delta_x^(ell))` with `|x - center| = s`.
    pub fn smeared_cross(&self, s: f64, ell: f64) -> f64 {
        if s >= self.radius + ell {
            // harmonic outside the support: mean value property
            return self.potential(s);
        }
        let f = |r: f64| self.potential(r);
        quad::ball_average_radial(&f, s, ell, self.dim.get(), &[self.radius], RADIAL_TOL)
    }

    /// `mu(B(x, rho))` with `|x - center| = s`.
    pub fn mass_in_ball(&self, s: f64, rho: f64) -> f64 {
        let d = self.dim.get();
        let area = unit_sphere_area(d);
        // fraction of the sphere of radius r (around the center) inside the ball
        let frac = |r: f64| -> f64 {
            if r + s <= rho {
                return 1.0;
            }
            if (r - s).abs() >= rho {
                return 0.0;
            }
            let cos_t = ((r * r + s * s - rho * rho) / (2.0 * r * s)).clamp(-1.0, 1.0);
            match self.dim {
                Dimension::Two => cos_t.acos() / std::f64::consts::PI,
                Dimension::Three => 0.5 * (1.0 - cos_t),
            }
        };
        let hi = self.radius.min(s + rho);
        let lo = (s - rho).max(0.0);
        if lo >= hi {
            return 0.0;
        }
        let breaks = [rho - s, s + rho, (s - rho).abs()];
        quad::integrate_split(
            |r| frac(r) * self.density(r) * area * r.powi(d as i32 - 1),
            lo,
            hi,
            &breaks,
            RADIAL_TOL,
        )
    }
}

/// Solver bookkeeping attached to a measure.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub method: String,
    pub iterations: usize,
    pub residual: f64,
    pub mass_before_normalization: f64,
}

/// A probability measure on a grid, optionally with a closed-form radial description.
#[derive(Clone, Debug)]
pub struct EquilibriumMeasure {
    pub grid: Grid,
    /// Node densities (probability per unit volume).
    pub density: Vec<f64>,
    /// Support mask: density above [`SUPPORT_THRESHOLD`] times the maximum.
    pub support: Vec<bool>,
    /// The constant `c` of the variational inequality (NaN for arbitrary measures).
    pub robin_constant: f64,
    /// `h_mu = w * mu` at the nodes.
    pub potential: Vec<f64>,
    pub radial: Option<RadialProfile>,
    pub report: SolverReport,
}

fn support_mask(density: &[f64]) -> Vec<bool> {
    let max = density.iter().copied().fold(0.0, f64::max);
    density.iter().map(|&r| r > SUPPORT_THRESHOLD * max).collect()
}

impl EquilibriumMeasure {
    /// Wraps an arbitrary non-negative grid density; the potential is computed by FFT.
    pub fn from_grid_density(grid: Grid, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.len() {
            return Err(Error::InvalidInput("density length does not match the grid".into()));
        }
        if density.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidInput("density must be finite and non-negative".into()));
        }
        let potential = free_space_potential(&grid, &density)?;
        let support = support_mask(&density);
        Ok(Self {
            grid,
            density,
            support,
            robin_constant: f64::NAN,
            potential,
            radial: None,
            report: SolverReport { method: "grid density".into(), ..Default::default() },
        })
    }

    pub fn dim(&self) -> Dimension {
        self.grid.dim
    }

    pub fn mass(&self) -> f64 {
        match &self.radial {
            Some(p) => p.integrate(|_| 1.0),
            None => self.grid.integrate(&self.density),
        }
    }

    pub fn max_density(&self) -> f64 {
        self.density.iter().copied().fold(0.0, f64::max)
    }

    /// Center of mass of the grid density.
    pub fn centroid(&self) -> Vec<f64> {
        if let Some(p) = &self.radial {
            return p.center.clone();
        }
        let d = self.grid.d();
        let m = self.mass();
        (0..d)
            .map(|k| {
                par::sum((0..self.grid.len()).map(|i| self.density[i] * self.grid.node(i)[k]))
                    * self.grid.cell_volume()
                    / m
            })
            .collect()
    }

    pub fn density_at(&self, x: &[f64]) -> f64 {
        match &self.radial {
            Some(p) => p.density(dist(x, &p.center)),
            None => self.grid.interpolate(&self.density, x).unwrap_or(0.0),
        }
    }

    /// `h_mu(x)`; outside the grid the monopole approximation is used.
    pub fn potential_at(&self, x: &[f64]) -> f64 {
        match &self.radial {
            Some(p) => p.potential(dist(x, &p.center)),
            None => match self.grid.interpolate(&self.potential, x) {
                Some(v) => v,
                None => self.mass() * kernel_r(dist(x, &self.centroid()), self.dim()),
            },
        }
    }

    /// `zeta(x) = h_mu(x) + V(x)/2 - c`.
    pub fn zeta_at(&self, x: &[f64], v: &dyn Potential) -> f64 {
        self.potential_at(x) + 0.5 * v.value(x) - self.robin_constant
    }

    /// `D(mu, mu)`.
    pub fn self_energy(&self) -> f64 {
        match &self.radial {
            Some(p) => p.self_energy(),
            None => {
                par::sum((0..self.grid.len()).map(|i| self.density[i] * self.potential[i])) * self.grid.cell_volume()
            }
        }
    }

    /// `int V dmu`.
    pub fn potential_moment(&self, v: &dyn Potential) -> f64 {
        match &self.radial {
            Some(p) => p.integrate(|r| v.value(&p.point_at(r))),
            None => {
                let d = self.grid.d();
                par::sum(par::map_range(self.grid.len(), |i| {
                    let x = self.grid.node(i);
                    self.density[i] * v.value(&x[..d])
                })) * self.grid.cell_volume()
            }
        }
    }

    /// `D(mu, delta_x^(ell))`, the interaction with a smeared unit charge at `x`.
    pub fn smeared_cross(&self, x: &[f64], ell: f64) -> f64 {
        match &self.radial {
            Some(p) => p.smeared_cross(dist(x, &p.center), ell),
            None => ball_cubature(self.dim(), x, ell, |y| self.potential_at(y)),
        }
    }

    /// Lieb smearing constant: `h_mu(x) - D(mu, delta_x^(ell)) <= C ell^2`.
    ///
    /// Follows from `-Delta h_mu = c_d mu <= c_d ||mu||_inf` and the mean-value inequality.
    pub fn lieb_constant(&self) -> f64 {
        let d = self.grid.d() as f64;
        let max = match &self.radial {
            Some(p) => {
                let m = (0..=400).map(|k| p.density(p.radius * k as f64 / 400.0)).fold(0.0, f64::max);
                m.max(self.max_density())
            }
            None => self.max_density(),
        };
        SpaceConstants::of(self.dim()).c_d * max / (2.0 * (d + 2.0))
    }

    /// `mu(B(x, rho))`.
    pub fn mass_in_ball(&self, x: &[f64], rho: f64) -> f64 {
        match &self.radial {
            Some(p) => p.mass_in_ball(dist(x, &p.center), rho),
            None => {
                let d = self.grid.d();
                let sub = 4usize;
                let vol = self.grid.cell_volume() / (sub.pow(d as u32)) as f64;
                par::sum(par::map_range(self.grid.len(), |i| {
                    if self.density[i] == 0.0 {
                        return 0.0;
                    }
                    let c = self.grid.node(i);
                    if dist(&c[..d], x) > rho + self.grid.h {
                        return 0.0;
                    }
                    let mut cnt = 0usize;
                    for s in 0..sub.pow(d as u32) {
                        let mut y = [0.0; 3];
                        let mut r = s;
                        for k in 0..d {
                            let t = r % sub;
                            r /= sub;
                            y[k] = c[k] + self.grid.h * ((t as f64 + 0.5) / sub as f64 - 0.5);
                        }
                        if dist(&y[..d], x) <= rho {
                            cnt += 1;
                        }
                    }
                    self.density[i] * vol * cnt as f64
                }))
            }
        }
    }

    /// Support radius for radial measures.
    pub fn support_radius(&self) -> Option<f64> {
        self.radial.as_ref().map(|p| p.radius)
    }

    /// `sum_i |mu(cell_i) - nu(cell_i)|` where `nu` has density `exact` (cells sampled `sub^d` times).
    pub fn l1_distance_to<F: Fn(&[f64]) -> f64 + Sync + Send>(&self, exact: F, sub: usize) -> f64 {
        let d = self.grid.d();
        let vol = self.grid.cell_volume();
        let per = sub.pow(d as u32);
        par::sum(par::map_range(self.grid.len(), |i| {
            let c = self.grid.node(i);
            let mut acc = 0.0;
            for s in 0..per {
                let mut y = [0.0; 3];
                let mut r = s;
                for k in 0..d {
                    let t = r % sub;
                    r /= sub;
                    y[k] = c[k] + self.grid.h * ((t as f64 + 0.5) / sub as f64 - 0.5);
                }
                acc += exact(&y[..d]);
            }
            (self.density[i] - acc / per as f64).abs() * vol
        }))
    }

    /// `sum_i |rho_i - rho(x_i)| h^d` comparing node values.
    pub fn nodal_l1_distance_to<F: Fn(&[f64]) -> f64 + Sync + Send>(&self, exact: F) -> f64 {
        let d = self.grid.d();
        par::sum(par::map_range(self.grid.len(), |i| {
            let c = self.grid.node(i);
            (self.density[i] - exact(&c[..d])).abs()
        })) * self.grid.cell_volume()
    }

    /// Values of `zeta` at the nodes.
    pub fn zeta(&self, v: &dyn Potential) -> EffectivePotential {
        zeta_potential(self, v)
    }
}

/// Ball average of `f` over `B(x, ell)` with a tensor Gauss rule (radial x angular).
fn ball_cubature<F: Fn(&[f64]) -> f64>(dim: Dimension, x: &[f64], ell: f64, f: F) -> f64 {
    let d = dim.get();
    let (rn, rw) = quad::gauss_legendre_on(8, 0.0, 1.0);
    let mut acc = 0.0;
    match dim {
        Dimension::Two => {
            let na = 16;
            for (r, w) in rn.iter().zip(&rw) {
                for a in 0..na {
                    let t = 2.0 * std::f64::consts::PI * (a as f64 + 0.5) / na as f64;
                    let y = [x[0] + ell * r * t.cos(), x[1] + ell * r * t.sin()];
                    acc += w * 2.0 * r * f(&y) / na as f64;
                }
            }
        }
        Dimension::Three => {
            let (zn, zw) = quad::gauss_legendre(8);
            let na = 16;
            for (r, w) in rn.iter().zip(&rw) {
                for (z, wz) in zn.iter().zip(&zw) {
                    let s = (1.0 - z * z).sqrt();
                    for a in 0..na {
                        let t = 2.0 * std::f64::consts::PI * (a as f64 + 0.5) / na as f64;
                        let y = [x[0] + ell * r * s * t.cos(), x[1] + ell * r * s * t.sin(), x[2] + ell * r * z];
                        acc += w * 3.0 * r * r * f(&y) * wz / (2.0 * na as f64);
                    }
                }
            }
        }
    }
    let _ = d;
    acc
}

/// `E[mu] = D(mu, mu) + int V dmu`.
pub fn mf_energy(mu: &EquilibriumMeasure, v: &dyn Potential) -> Result<f64> {
    let m = mu.mass();
    if (m - 1.0).abs() > MASS_TOL {
        return Err(Error::Contract(format!("mean-field energy needs a probability measure, mass is {m}")));
    }
    Ok(mu.self_energy() + mu.potential_moment(v))
}

fn default_radial_grid(dim: Dimension, center: &[f64], radius: f64) -> Result<Grid> {
    Grid::cube(dim, center, 1.25 * radius, radius / 50.0)
}

/// Equilibrium measure of a radial potential: density `Delta V / (2 c_d)` on `B(center, R*)`.
///
/// `R*` makes the mass one; by the divergence theorem the mass of `B(0, R)` is
/// `|S^{d-1}| R^{d-1} V'(R) / (2 c_d)`.
pub fn solve_equilibrium_radial<P: Potential + Clone + 'static>(v: &P, dim: Dimension) -> Result<EquilibriumMeasure> {
    solve_equilibrium_radial_on(v, dim, None)
}

/// [`solve_equilibrium_radial`] with an explicit node grid for the tabulated fields.
pub fn solve_equilibrium_radial_on<P: Potential + Clone + 'static>(
    v: &P,
    dim: Dimension,
    grid: Option<Grid>,
) -> Result<EquilibriumMeasure> {
    let center = v
        .radial_center()
        .ok_or_else(|| Error::InvalidInput("radial solver needs a radial potential".into()))?
        .to_vec();
    if center.len() != dim.get() {
        return Err(Error::InvalidInput("potential center does not match the dimension".into()));
    }
    let d = dim.get();
    let c_d = SpaceConstants::of(dim).c_d;
    let area = unit_sphere_area(d);
    let at = |r: f64| {
        let mut x = center.clone();
        x[0] += r;
        x
    };
    let dv = |r: f64| {
        let mut g = vec![0.0; d];
        v.gradient(&at(r), &mut g);
        g[0]
    };
    let mass = |r: f64| area * r.powi(d as i32 - 1) * dv(r) / (2.0 * c_d);
    if (0..200).any(|k| v.laplacian(&at(0.05 * k as f64 + 1e-3)) < 0.0) {
        return Err(Error::NoEquilibrium("Laplacian of V is negative near the center".into()));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut tries = 0;
    while mass(hi) < 1.0 {
        lo = hi;
        hi *= 2.0;
        tries += 1;
        if tries > 60 || !mass(hi).is_finite() {
            return Err(Error::NoEquilibrium("mass equation has no root in [0, 2^60]".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    let radius = 0.5 * (lo + hi);
    let robin = kernel_r(radius, dim) + 0.5 * v.value(&at(radius));
    let profile = RadialProfile {
        dim,
        center: center.clone(),
        radius,
        robin_constant: robin,
        potential: Arc::new(v.clone()),
    };
    let grid = match grid {
        Some(g) => g,
        None => default_radial_grid(dim, &center, radius)?,
    };
    let density = grid.sample(|x| profile.density(dist(x, &center)));
    let potential = grid.sample(|x| profile.potential(dist(x, &center)));
    let support = grid.sample(|x| if dist(x, &center) <= radius { 1.0 } else { 0.0 });
    Ok(EquilibriumMeasure {
        grid,
        density,
        support: support.into_iter().map(|s| s > 0.5).collect(),
        robin_constant: robin,
        potential,
        radial: Some(profile),
        report: SolverReport {
            method: "radial closed form".into(),
            iterations: 0,
            residual: 0.0,
            mass_before_normalization: 1.0,
        },
    })
}

/// Tuning knobs for the obstacle solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObstacleOptions {
    /// Over-relaxation factor; `None` picks the optimal SOR value for the grid.
    pub omega: Option<f64>,
    pub max_sweeps: usize,
    pub mass_tol: f64,
    pub max_mass_iterations: usize,
    /// Refresh of the multipole boundary data.
    pub boundary_updates: usize,
}

impl Default for ObstacleOptions {
    fn default() -> Self {
        Self { omega: None, max_sweeps: 50_000, mass_tol: 1e-7, max_mass_iterations: 80, boundary_updates: 3 }
    }
}

struct ObstacleLevel<'a> {
    grid: &'a Grid,
    base_phi: Vec<f64>,
    boundary: Vec<bool>,
    omega: f64,
    c_d: f64,
}

impl<'a> ObstacleLevel<'a> {
    fn new(grid: &'a Grid, v: &dyn Potential, omega: Option<f64>) -> Self {
        let base_phi = grid.sample(|x| -0.5 * v.value(x));
        let boundary = (0..grid.len()).map(|i| grid.is_boundary(i)).collect();
        let n = *grid.shape.iter().max().expect("shape") as f64;
        let omega = omega.unwrap_or(2.0 / (1.0 + (std::f64::consts::PI / (n - 1.0)).sin()));
        Self { grid, base_phi, boundary, omega, c_d: SpaceConstants::of(grid.dim).c_d }
    }

    fn strides(&self) -> [usize; 3] {
        let s = &self.grid.shape;
        match self.grid.d() {
            2 => [s[1], 1, 0],
            _ => [s[1] * s[2], s[2], 1],
        }
    }

    /// Projected red-black SOR until the sweep increment drops below `tol`.
    fn solve(&self, h: &mut Vec<f64>, c: f64, tol: f64, max_sweeps: usize) -> Result<usize> {
        let grid = self.grid;
        let d = grid.d();
        let strides = self.strides();
        let row = grid.row_len();
        let mut next = h.clone();
        let inv = 1.0 / (2 * d) as f64;
        for sweep in 0..max_sweeps {
            let mut inc = 0.0_f64;
            for color in 0..2usize {
                let cur: &Vec<f64> = h;
                let incs = par::map_chunks_mut(&mut next, row, |r, out| {
                    let mut local = 0.0_f64;
                    let base = r * row;
                    let lead = grid.multi_index(base);
                    let lead_par: usize = lead[..d - 1].iter().sum();
                    for t in 0..row {
                        let idx = base + t;
                        let old = cur[idx];
                        if self.boundary[idx] || (lead_par + t) % 2 != color {
                            out[t] = old;
                            continue;
                        }
                        let mut nb = 0.0;
                        for k in 0..d {
                            nb += cur[idx - strides[k]] + cur[idx + strides[k]];
                        }
                        let mut val = old + self.omega * (nb * inv - old);
                        let obst = c + self.base_phi[idx];
                        if val < obst {
                            val = obst;
                        }
                        let diff = (val - old).abs();
                        local = if diff.is_nan() || local.is_nan() { f64::NAN } else { local.max(diff) };
                        out[t] = val;
                    }
                    local
                });
                for x in incs {
                    inc = if x.is_nan() || inc.is_nan() { f64::NAN } else { inc.max(x) };
                }
                std::mem::swap(h, &mut next);
            }
            if !inc.is_finite() {
                return Err(Error::NonConvergence { what: "obstacle relaxation".into(), iterations: sweep, residual: inc });
            }
            if inc < tol {
                return Ok(sweep + 1);
            }
        }
        Err(Error::NonConvergence { what: "obstacle relaxation".into(), iterations: max_sweeps, residual: f64::NAN })
    }

    /// Density `-Delta_h h / c_d` on the coincidence set, zero elsewhere.
    fn density(&self, h: &[f64], c: f64) -> Vec<f64> {
        let grid = self.grid;
        let d = grid.d();
        let strides = self.strides();
        let h2 = grid.h * grid.h;
        par::map_range(grid.len(), |idx| {
            if self.boundary[idx] {
                return 0.0;
            }
            let obst = c + self.base_phi[idx];
            if h[idx] > obst + 1e-13 * obst.abs().max(1.0) {
                return 0.0;
            }
            let mut lap = -2.0 * d as f64 * h[idx];
            for k in 0..d {
                lap += h[idx - strides[k]] + h[idx + strides[k]];
            }
            (-lap / h2 / self.c_d).max(0.0)
        })
    }

    fn mass(&self, h: &[f64], c: f64) -> f64 {
        self.grid.integrate(&self.density(h, c))
    }
}

/// Multipole description of the far field of a unit mass.
#[derive(Clone, Debug)]
struct FarField {
    dim: Dimension,
    origin: Vec<f64>,
    /// d = 2: complex moments `M_k = int (z - z0)^k dmu`; d = 3: dipole and quadrupole.
    moments2: Vec<(f64, f64)>,
    dipole: [f64; 3],
    quad: [[f64; 3]; 3],
}

impl FarField {
    fn monopole(dim: Dimension, origin: Vec<f64>) -> Self {
        Self { dim, origin, moments2: Vec::new(), dipole: [0.0; 3], quad: [[0.0; 3]; 3] }
    }

    fn from_density(grid: &Grid, density: &[f64], origin: Vec<f64>) -> Self {
        let d = grid.d();
        let vol = grid.cell_volume();
        let mass = grid.integrate(density);
        let mut ff = Self::monopole(grid.dim, origin.clone());
        match grid.dim {
            Dimension::Two => {
                for k in 1..=6 {
                    let mut re = Vec::new();
                    let mut im = Vec::new();
                    for (i, &r) in density.iter().enumerate() {
                        if r == 0.0 {
                            continue;
                        }
                        let x = grid.node(i);
                        let z = num_complex::Complex64::new(x[0] - origin[0], x[1] - origin[1]).powi(k);
                        re.push(r * vol * z.re);
                        im.push(r * vol * z.im);
                    }
                    ff.moments2.push((par::sum(re) / mass, par::sum(im) / mass));
                }
            }
            Dimension::Three => {
                let mut acc = vec![Vec::new(); 12];
                for (i, &r) in density.iter().enumerate() {
                    if r == 0.0 {
                        continue;
                    }
                    let x = grid.node(i);
                    let y = [x[0] - origin[0], x[1] - origin[1], x[2] - origin[2]];
                    let m = r * vol;
                    let y2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
                    for a in 0..3 {
                        acc[a].push(m * y[a]);
                        for b in 0..3 {
                            let delta = if a == b { y2 } else { 0.0 };
                            acc[3 + 3 * a + b].push(m * (3.0 * y[a] * y[b] - delta));
                        }
                    }
                }
                for a in 0..3 {
                    ff.dipole[a] = par::sum(acc[a].iter().copied()) / mass;
                    for b in 0..3 {
                        ff.quad[a][b] = par::sum(acc[3 + 3 * a + b].iter().copied()) / mass;
                    }
                }
            }
        }
        let _ = d;
        ff
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match self.dim {
            Dimension::Two => {
                let z = num_complex::Complex64::new(x[0] - self.origin[0], x[1] - self.origin[1]);
                let mut v = -z.norm().ln();
                for (k, &(re, im)) in self.moments2.iter().enumerate() {
                    let kk = (k + 1) as i32;
                    let m = num_complex::Complex64::new(re, im);
                    v += (m / (z.powi(kk) * kk as f64)).re;
                }
                v
            }
            Dimension::Three => {
                let y = [x[0] - self.origin[0], x[1] - self.origin[1], x[2] - self.origin[2]];
                let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
                let r = r2.sqrt();
                let mut v = 1.0 / r;
                let r3 = r2 * r;
                v += (self.dipole[0] * y[0] + self.dipole[1] * y[1] + self.dipole[2] * y[2]) / r3;
                let mut q = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        q += self.quad[a][b] * y[a] * y[b];
                    }
                }
                v + 0.5 * q / (r3 * r2)
            }
        }
    }
}

fn apply_boundary(grid: &Grid, h: &mut [f64], ff: &FarField) {
    let d = grid.d();
    for idx in 0..grid.len() {
        if grid.is_boundary(idx) {
            let x = grid.node(idx);
            h[idx] = ff.eval(&x[..d]);
        }
    }
}

/// Root of the monotone map `c -> mass(c) - 1` on one grid level.
fn solve_level(
    level: &ObstacleLevel,
    h: &mut Vec<f64>,
    c_guess: f64,
    step: f64,
    tol: f64,
    opts: &ObstacleOptions,
    sweeps: &mut usize,
) -> Result<f64> {
    let mut eval = |c: f64, h: &mut Vec<f64>| -> Result<f64> {
        for (i, v) in h.iter_mut().enumerate() {
            if !level.boundary[i] {
                let obst = c + level.base_phi[i];
                if *v < obst {
                    *v = obst;
                }
            }
        }
        *sweeps += level.solve(h, c, tol, opts.max_sweeps)?;
        Ok(level.mass(h, c) - 1.0)
    };
    let mut a = c_guess;
    let mut fa = eval(a, h)?;
    if fa.abs() < opts.mass_tol {
        return Ok(a);
    }
    let dir = if fa < 0.0 { 1.0 } else { -1.0 };
    let mut step = step;
    let mut b;
    let mut fb;
    let mut expansions = 0;
    loop {
        b = a + dir * step;
        fb = eval(b, h)?;
        if fb.abs() < opts.mass_tol {
            return Ok(b);
        }
        if fb.signum() != fa.signum() {
            break;
        }
        a = b;
        fa = fb;
        step *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::NoEquilibrium("could not bracket the Robin constant".into()));
        }
    }
    // Illinois regula falsi on [a, b]
    let mut side = 0i32;
    for _ in 0..opts.max_mass_iterations {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = eval(c, h)?;
        if fc.abs() < opts.mass_tol || (b - a).abs() < 1e-13 * c.abs().max(1.0) {
            return Ok(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Err(Error::NonConvergence {
        what: "Robin constant search".into(),
        iterations: opts.max_mass_iterations,
        residual: fa.abs().min(fb.abs()),
    })
}

/// Equilibrium measure on a grid by the obstacle problem
/// `h >= c - V/2`, `-Delta h >= 0`, with equality of one of them at every node.
///
/// Projected red-black SOR solves each obstacle problem; the constant `c` is tuned
/// by regula falsi until the coincidence-set mass `-Delta h / c_d` is one. Coarser
/// grids provide warm starts. Boundary values come from a multipole expansion
/// of the current density.
pub fn solve_equilibrium_obstacle(v: &dyn Potential, grid: &Grid, tol: f64) -> Result<EquilibriumMeasure> {
    solve_equilibrium_obstacle_with(v, grid, tol, &ObstacleOptions::default())
}

/// [`solve_equilibrium_obstacle`] with explicit options.
pub fn solve_equilibrium_obstacle_with(
    v: &dyn Potential,
    grid: &Grid,
    tol: f64,
    opts: &ObstacleOptions,
) -> Result<EquilibriumMeasure> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("obstacle tolerance must be positive, got {tol}")));
    }
    if !v.is_confining(grid.dim) {
        return Err(Error::NoEquilibrium("potential is not certified confining".into()));
    }
    let origin = match v.radial_center() {
        Some(c) if c.len() == grid.d() => c.to_vec(),
        _ => grid.center(),
    };
    // coarse-to-fine hierarchy
    let mut grids = vec![grid.clone()];
    loop {
        let g = grids.last().expect("non-empty");
        let n = *g.shape.iter().min().expect("shape");
        if n < 48 {
            break;
        }
        grids.push(g.coarsened(2.0)?);
    }
    grids.reverse();
    let mut ff = FarField::monopole(grid.dim, origin.clone());
    let mut c = 0.0;
    let mut step = 0.5;
    let mut h_prev: Option<(Grid, Vec<f64>)> = None;
    let mut sweeps = 0usize;
    let mut result = None;
    for (li, g) in grids.iter().enumerate() {
        let level = ObstacleLevel::new(g, v, opts.omega);
        let mut h = match &h_prev {
            Some((pg, ph)) => {
                let d = g.d();
                g.sample(|x| pg.interpolate(ph, x).unwrap_or_else(|| ff.eval(&x[..d])))
            }
            None => vec![0.0; g.len()],
        };
        let last = li + 1 == grids.len();
        let updates = if last { opts.boundary_updates.max(1) } else { 1 };
        let mut c_level = c;
        for u in 0..updates {
            apply_boundary(g, &mut h, &ff);
            let c_new = solve_level(&level, &mut h, c_level, step, tol, opts, &mut sweeps)?;
            step = (c_new - c_level).abs().max(1e-4) * 2.0;
            c_level = c_new;
            let dens = level.density(&h, c_level);
            let new_ff = FarField::from_density(g, &dens, origin.clone());
            let change: f64 = (0..g.len())
                .filter(|&i| level.boundary[i])
                .map(|i| {
                    let x = g.node(i);
                    (new_ff.eval(&x[..g.d()]) - ff.eval(&x[..g.d()])).abs()
                })
                .fold(0.0, f64::max);
            ff = new_ff;
            if change < tol || u + 1 == updates {
                if change >= tol && last && updates > 1 {
                    // final boundary refresh did not settle; one more solve with the new data
                    apply_boundary(g, &mut h, &ff);
                    c_level = solve_level(&level, &mut h, c_level, step, tol, opts, &mut sweeps)?;
                }
                break;
            }
        }
        c = c_level;
        if last {
            let dens = level.density(&h, c);
            result = Some((dens, h.clone()));
        }
        h_prev = Some((g.clone(), h));
    }
    let (mut density, potential) = result.expect("at least one level");
    let mass = grid.integrate(&density);
    density.iter_mut().for_each(|r| *r /= mass);
    let support = support_mask(&density);
    Ok(EquilibriumMeasure {
        grid: grid.clone(),
        density,
        support,
        robin_constant: c,
        potential,
        radial: None,
        report: SolverReport {
            method: "projected red-black SOR obstacle solver".into(),
            iterations: sweeps,
            residual: tol,
            mass_before_normalization: mass,
        },
    })
}

/// `zeta = h_mu + V/2 - c` on the grid nodes.
#[derive(Clone, Debug)]
pub struct EffectivePotential {
    pub grid: Grid,
    pub values: Vec<f64>,
    /// Most negative value found (reported, not clipped).
    pub min_value: f64,
}

impl EffectivePotential {
    /// Largest `|zeta|` over the nodes selected by `mask`.
    pub fn max_abs_on(&self, mask: &[bool]) -> f64 {
        self.values.iter().zip(mask).filter(|(_, &m)| m).map(|(z, _)| z.abs()).fold(0.0, f64::max)
    }
}

/// Effective potential of an equilibrium measure.
pub fn zeta_potential(mu0: &EquilibriumMeasure, v: &dyn Potential) -> EffectivePotential {
    let d = mu0.grid.d();
    let values: Vec<f64> = match &mu0.radial {
        Some(_) => mu0.grid.sample(|x| mu0.zeta_at(x, v)),
        None => par::map_range(mu0.grid.len(), |i| {
            let x = mu0.grid.node(i);
            mu0.potential[i] + 0.5 * v.value(&x[..d]) - mu0.robin_constant
        }),
    };
    let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
    EffectivePotential { grid: mu0.grid.clone(), values, min_value }
}

/// Options for the finite-temperature mean-field iteration.
///
/// `anderson_depth = 0` gives the plain damped iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MuBetaOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iterations: usize,
    pub anderson_depth: usize,
}

impl Default for MuBetaOptions {
    fn default() -> Self {
        Self { damping: 0.5, tol: 1e-10, max_iterations: 20_000, anderson_depth: 10 }
    }
}

/// Minimizer `mu_beta` of `E[mu] + (2/(n beta)) int mu log mu`.
///
/// Fixed point of `h = w * normalize(exp(-(n beta/2)(2 h + V)))` in the potential `h`,
/// with mixing `damping` and Anderson acceleration over the last `anderson_depth` iterates.
/// Large `n beta` is reached by continuation from `n beta = 20` in factors of 3; a stage that
/// diverges is retried with half the damping.
/// Convergence: `int mu |log target - log mu| < tol * max(1, n beta)`.
/// The returned `robin_constant` is the Euler–Lagrange constant of
/// `2 h + V + (2/(n beta)) log mu`, and `report.residual` its oscillation over the grid.
pub fn solve_mu_beta(v: &dyn Potential, n: usize, beta: f64, grid: &Grid) -> Result<EquilibriumMeasure> {
    solve_mu_beta_with(v, n, beta, grid, &MuBetaOptions::default(), None)
}

/// [`solve_mu_beta`] with options and an optional warm start density.
pub fn solve_mu_beta_with(
    v: &dyn Potential,
    n: usize,
    beta: f64,
    grid: &Grid,
    opts: &MuBetaOptions,
    start: Option<&[f64]>,
) -> Result<EquilibriumMeasure> {
    let nb = n as f64 * beta;
    if !(nb > 0.0 && nb.is_finite()) {
        return Err(Error::InvalidInput(format!("need n beta > 0, got {nb}")));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidInput(format!("damping must lie in (0, 1], got {}", opts.damping)));
    }
    let vals = grid.sample(|x| v.value(x));
    let op = FreeSpaceOperator::new(grid)?;
    let (mut h, mut ladder) = match start {
        Some(s) if s.len() == grid.len() => {
            let z = grid.integrate(s);
            let mu: Vec<f64> = s.iter().map(|r| (r / z).max(f64::MIN_POSITIVE)).collect();
            (op.apply(&mu), vec![nb])
        }
        _ => {
            let mut ladder = vec![nb];
            while ladder[ladder.len() - 1] > 20.0 {
                let next = (ladder[ladder.len() - 1] / 3.0).max(20.0);
                ladder.push(next);
            }
            let nb0 = ladder[ladder.len() - 1];
            let mu0 = boltzmann_density(grid, &vec![0.0; grid.len()], &vals, nb0);
            (op.apply(&mu0), ladder)
        }
    };
    ladder.reverse();
    let mut total = 0;
    let mut damping = opts.damping;
    for &stage in &ladder {
        loop {
            match mu_beta_stage(&op, &vals, stage, h.clone(), damping, opts) {
                Ok((g, its)) => {
                    total += its;
                    h = g;
                    break;
                }
                Err(Error::Divergence { .. }) if damping > 1e-3 => damping /= 2.0,
                Err(e) => return Err(e),
            }
        }
    }
    let mu = boltzmann_density(grid, &h, &vals, nb);
    let h = op.apply(&mu);
    Ok(finish_mu_beta(grid, mu, h, &vals, nb, total))
}

fn boltzmann_density(grid: &Grid, h: &[f64], vals: &[f64], nb: f64) -> Vec<f64> {
    let logs: Vec<f64> = h.iter().zip(vals).map(|(h, v)| -0.5 * nb * (2.0 * h + v)).collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|l| (l - m).exp().max(f64::MIN_POSITIVE)).collect();
    let z = grid.integrate(&out);
    out.iter_mut().for_each(|r| *r /= z);
    out
}

/// One Anderson-mixed solve at fixed `nb`; returns the converged potential and iteration count.
fn mu_beta_stage(
    op: &FreeSpaceOperator,
    vals: &[f64],
    nb: f64,
    mut h: Vec<f64>,
    damping: f64,
    opts: &MuBetaOptions,
) -> Result<(Vec<f64>, usize)> {
    let grid = op.grid();
    let depth = opts.anderson_depth;
    let tol = opts.tol * nb.max(1.0);
    let mut dx: VecDeque<Vec<f64>> = VecDeque::new();
    let mut df: VecDeque<Vec<f64>> = VecDeque::new();
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut first = f64::NAN;
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    for it in 0..opts.max_iterations {
        let mu = boltzmann_density(grid, &h, vals, nb);
        let g = op.apply(&mu);
        let f: Vec<f64> = g.iter().zip(&h).map(|(g, h)| g - h).collect();
        let change = nb * grid.integrate(&mu.iter().zip(&f).map(|(m, f)| m * f.abs()).collect::<Vec<_>>());
        if it == 0 {
            first = change;
        }
        if !change.is_finite() || change > 100.0 * first {
            return Err(Error::Divergence { residual: change, damping: damping / 2.0 });
        }
        if change < tol {
            return Ok((g, it + 1));
        }
        if change < best {
            best = change;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > 100 {
                return Err(Error::Divergence { residual: change, damping: damping / 2.0 });
            }
        }
        if depth > 0 {
            if let Some((ph, pf)) = prev.take() {
                dx.push_back(h.iter().zip(&ph).map(|(a, b)| a - b).collect());
                df.push_back(f.iter().zip(&pf).map(|(a, b)| a - b).collect());
                if dx.len() > depth {
                    dx.pop_front();
                    df.pop_front();
                }
            }
            prev = Some((h.clone(), f.clone()));
        }
        let mut next: Vec<f64> = h.iter().zip(&f).map(|(h, f)| h + damping * f).collect();
        if !df.is_empty() {
            let m = df.len();
            let dot = |a: &[f64], b: &[f64]| par::sum(a.iter().zip(b).map(|(x, y)| x * y));
            let mut gram = DMatrix::from_fn(m, m, |i, j| if i <= j { dot(&df[i], &df[j]) } else { 0.0 });
            gram.fill_lower_triangle_with_upper_triangle();
            let ridge = 1e-12 * gram.trace() / m as f64;
            gram.iter_mut().step_by(m + 1).for_each(|g| *g += ridge);
            let rhs = DVector::from_fn(m, |i, _| dot(&df[i], &f));
            match gram.cholesky().map(|c| c.solve(&rhs)).ok_or(()) {
                Ok(gamma) if gamma.iter().all(|g| g.is_finite()) => {
                    for (j, &gj) in gamma.iter().enumerate() {
                        for i in 0..next.len() {
                            next[i] -= gj * (dx[j][i] + damping * df[j][i]);
                        }
                    }
                }
                _ => {
                    dx.clear();
                    df.clear();
                }
            }
        }
        h = next;
    }
    Err(Error::NonConvergence { what: "mu_beta fixed point".into(), iterations: opts.max_iterations, residual: best })
}

fn finish_mu_beta(grid: &Grid, mu: Vec<f64>, h: Vec<f64>, vals: &[f64], nb: f64, iterations: usize) -> EquilibriumMeasure {
    let max = mu.iter().copied().fold(0.0, f64::max);
    let el: Vec<f64> = (0..grid.len())
        .filter(|&i| mu[i] > 1e-12 * max)
        .map(|i| 2.0 * h[i] + vals[i] + 2.0 / nb * mu[i].ln())
        .collect();
    let lo = el.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = el.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mass = grid.integrate(&mu);
    let weights: Vec<f64> = (0..grid.len()).filter(|&i| mu[i] > 1e-12 * max).map(|i| mu[i]).collect();
    let wsum: f64 = par::sum(weights.iter().copied());
    let constant = par::sum(el.iter().zip(&weights).map(|(e, w)| e * w)) / wsum;
    EquilibriumMeasure {
        grid: grid.clone(),
        support: vec![true; mu.len()],
        density: mu,
        robin_constant: constant,
        potential: h,
        radial: None,
        report: SolverReport {
            method: "damped mean-field fixed point".into(),
            iterations,
            residual: hi - lo,
            mass_before_normalization: mass,
        },
    }
}

/// `F[mu] = E[mu] + (2/(n beta)) int mu log mu`.
pub fn mf_free_energy(mu: &EquilibriumMeasure, v: &dyn Potential, n: usize, beta: f64) -> Result<f64> {
    let e = mf_energy(mu, v)?;
    let ent = mu.grid.integrate(
        &mu.density.iter().map(|&r| if r > 0.0 { r * r.ln() } else { 0.0 }).collect::<Vec<_>>(),
    );
    Ok(e + 2.0 / (n as f64 * beta) * ent)
}

/// JSON sidecar describing a measure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasureSidecar {
    pub dimension: Dimension,
    pub grid: Grid,
    pub robin_constant: f64,
    pub mass: f64,
    pub support_radius: Option<f64>,
    pub solver: SolverReport,
}

impl EquilibriumMeasure {
    pub fn sidecar(&self) -> MeasureSidecar {
        MeasureSidecar {
            dimension: self.dim(),
            grid: self.grid.clone(),
            robin_constant: self.robin_constant,
            mass: self.mass(),
            support_radius: self.support_radius(),
            solver: self.report.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{PowerPotential, ZeroPotential};
    use std::f64::consts::PI;

    #[test]
    fn radial_quadratic_2d() {
        let v = PowerPotential::quadratic(Dimension::Two);
        let mu = solve_equilibrium_radial(&v, Dimension::Two).unwrap();
        assert!((mu.support_radius().unwrap() - 1.0).abs() < 1e-14);
        assert!((mu.density_at(&[0.3, 0.2]) - 1.0 / PI).abs() < 1e-15);
        assert!((mu.robin_constant - 0.5).abs() < 1e-14);
        assert!((mu.self_energy() - 0.25).abs() < 1e-12);
        assert!((mf_energy(&mu, &v).unwrap() - 0.75).abs() < 1e-12);
        let z = mu.zeta_at(&[2.0, 0.0], &v);
        assert!((z - (-(2f64.ln()) + 2.0 - 0.5)).abs() < 1e-14);
    }

    #[test]
    fn radial_examples_3d_and_scaled() {
        let v = PowerPotential::quadratic(Dimension::Three);
        let mu = solve_equilibrium_radial(&v, Dimension::Three).unwrap();
        assert!((mu.density_at(&[0.1, 0.1, 0.1]) - 3.0 / (4.0 * PI)).abs() < 1e-15);
        assert!((mu.support_radius().unwrap() - 1.0).abs() < 1e-14);
        assert!((mu.mass() - 1.0).abs() < 1e-12);
        let v2 = PowerPotential::new(2.0, 2.0, vec![0.0, 0.0]).unwrap();
        let mu2 = solve_equilibrium_radial(&v2, Dimension::Two).unwrap();
        assert!((mu2.density_at(&[0.0, 0.0]) - 2.0 / PI).abs() < 1e-15);
        assert!((mu2.support_radius().unwrap() - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn grid_self_energy_of_uniform_disk() {
        let g = Grid::cube(Dimension::Two, &[0.0, 0.0], 1.1, 0.01).unwrap();
        let dens = g.sample(|x| if x[0] * x[0] + x[1] * x[1] <= 1.0 { 1.0 } else { 0.0 });
        let m = g.integrate(&dens);
        let dens: Vec<f64> = dens.iter().map(|r| r / m).collect();
        let mu = EquilibriumMeasure::from_grid_density(g, dens).unwrap();
        assert!((mf_energy(&mu, &ZeroPotential).unwrap() - 0.25).abs() < 2e-3);
    }

    #[test]
    fn unnormalized_measure_is_rejected() {
        let g = Grid::cube(Dimension::Two, &[0.0, 0.0], 1.0, 0.1).unwrap();
        let dens = vec![1.0; g.len()];
        let mu = EquilibriumMeasure::from_grid_density(g, dens).unwrap();
        assert!(matches!(mf_energy(&mu, &ZeroPotential), Err(Error::Contract(_))));
    }
}
