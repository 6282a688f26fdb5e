//! Coulomb kernels, dimensional constants, smeared charges and the n-body Hamiltonian.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::potential::Potential;
use crate::quad;

/// Spatial dimension. Only 2 and 3 are supported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Dimension {
    Two,
    Three,
}

impl Dimension {
    pub fn new(d: usize) -> Result<Self> {
        match d {
            2 => Ok(Self::Two),
            3 => Ok(Self::Three),
            _ => Err(Error::InvalidInput(format!("dimension must be 2 or 3, got {d}"))),
        }
    }

    #[inline]
    pub fn get(self) -> usize {
        match self {
            Self::Two => 2,
            Self::Three => 3,
        }
    }

    pub fn constants(self) -> SpaceConstants {
        SpaceConstants::of(self)
    }
}

impl TryFrom<u8> for Dimension {
    type Error = Error;
    fn try_from(d: u8) -> Result<Self> {
        Self::new(d as usize)
    }
}

impl From<Dimension> for u8 {
    fn from(d: Dimension) -> u8 {
        d.get() as u8
    }
}

impl std::fmt::Display for Dimension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.get())
    }
}

/// Coulomb self-interaction of the uniform unit ball, `D(delta^(1), delta^(1))`, d = 3.
pub const UNIT_BALL_SELF_ENERGY_3D: f64 = 6.0 / 5.0;
/// Logarithmic self-interaction of the uniform unit disk, d = 2.
pub const UNIT_DISK_SELF_ENERGY_2D: f64 = 0.25;

/// `c_d`, `kappa_d`, `gamma_2` for the ball-indicator smearing profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceConstants {
    pub c_d: f64,
    pub kappa_d: f64,
    pub gamma_2: f64,
}

impl SpaceConstants {
    pub fn of(dim: Dimension) -> Self {
        match dim {
            Dimension::Two => Self {
                c_d: 2.0 * PI,
                kappa_d: 2.0 * PI,
                gamma_2: 2.0 * PI * UNIT_DISK_SELF_ENERGY_2D,
            },
            Dimension::Three => Self {
                c_d: 4.0 * PI,
                kappa_d: 4.0 * PI * UNIT_BALL_SELF_ENERGY_3D,
                gamma_2: 0.0,
            },
        }
    }

    /// `kappa_d w(eta) + gamma_2 1_{d=2}`: the per-point renormalization.
    pub fn renormalization(&self, dim: Dimension, eta: f64) -> f64 {
        self.kappa_d * kernel_r(eta, dim) + self.gamma_2
    }
}

/// A smearing length at blown-up scale (`eta`) and macroscopic scale (`ell = eta n^{-1/d}`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmearingScale {
    pub eta: f64,
    pub ell: f64,
    pub n: usize,
}

impl SmearingScale {
    pub fn from_eta(eta: f64, n: usize, dim: Dimension) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) || n == 0 {
            return Err(Error::InvalidInput(format!("need eta > 0 and n >= 1, got eta={eta}, n={n}")));
        }
        let ell = eta * (n as f64).powf(-1.0 / dim.get() as f64);
        Ok(Self { eta, ell, n })
    }
}

/// A configuration of `n` points in `R^d`, stored as a flat coordinate vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    dim: Dimension,
    coords: Vec<f64>,
}

impl Configuration {
    pub fn new(dim: Dimension, coords: Vec<f64>) -> Result<Self> {
        let d = dim.get();
        if coords.is_empty() || coords.len() % d != 0 {
            return Err(Error::InvalidInput(format!(
                "configuration needs a positive multiple of {d} coordinates, got {}",
                coords.len()
            )));
        }
        if let Some(k) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!("coordinate {} of point {} is not finite", k % d, k / d)));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_points(dim: Dimension, points: &[Vec<f64>]) -> Result<Self> {
        let d = dim.get();
        if let Some(p) = points.iter().position(|p| p.len() != d) {
            return Err(Error::InvalidInput(format!("point {p} does not have {d} coordinates")));
        }
        Self::new(dim, points.iter().flatten().copied().collect())
    }

    #[inline]
    pub fn dim(&self) -> Dimension {
        self.dim
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.coords.len() / self.dim.get()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim.get();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim.get())
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// Replaces point `i`. Panics if `p` has the wrong length or is not finite.
    pub fn set_point(&mut self, i: usize, p: &[f64]) {
        let d = self.dim.get();
        assert_eq!(p.len(), d);
        assert!(p.iter().all(|c| c.is_finite()), "non-finite coordinate");
        self.coords[i * d..(i + 1) * d].copy_from_slice(p);
    }

    /// Smallest pairwise distance with the realizing pair, or `None` when `n = 1`.
    pub fn min_separation(&self) -> Option<(f64, usize, usize)> {
        let n = self.n();
        if n < 2 {
            return None;
        }
        let rows = par::map_range(n - 1, |i| {
            let xi = self.point(i);
            let mut best = (f64::INFINITY, i, i + 1);
            for j in i + 1..n {
                let r = dist(xi, self.point(j));
                if r < best.0 {
                    best = (r, i, j);
                }
            }
            best
        });
        rows.into_iter().fold(None, |acc: Option<(f64, usize, usize)>, row| match acc {
            Some(a) if a.0 <= row.0 => Some(a),
            _ => Some(row),
        })
    }

    /// First pair of coincident points, in lexicographic order.
    pub fn coincident_pair(&self) -> Option<(usize, usize)> {
        match self.min_separation() {
            Some((r, i, j)) if r == 0.0 => {
                // min_separation returns the first minimal pair per row; rescan for the first overall
                let n = self.n();
                for a in 0..n {
                    for b in a + 1..n {
                        if self.point(a) == self.point(b) {
                            return Some((a, b));
                        }
                    }
                }
                Some((i, j))
            }
            _ => None,
        }
    }

    /// Configuration with points reordered so that new point `k` is old point `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n());
        let coords = perm.iter().flat_map(|&i| self.point(i).iter().copied()).collect();
        Self { dim: self.dim, coords }
    }

    /// All coordinates multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { dim: self.dim, coords: self.coords.iter().map(|c| c * factor).collect() }
    }

    /// All points shifted by `shift`.
    pub fn translated(&self, shift: &[f64]) -> Self {
        let d = self.dim.get();
        Self {
            dim: self.dim,
            coords: self.coords.iter().enumerate().map(|(k, c)| c + shift[k % d]).collect(),
        }
    }
}

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// The kernel `w` as a function of the distance: `1/r` (d = 3) or `-log r` (d = 2).
#[inline]
pub fn kernel_r(r: f64, dim: Dimension) -> f64 {
    match dim {
        Dimension::Two => -r.ln(),
        Dimension::Three => 1.0 / r,
    }
}

/// `dw/dr`.
#[inline]
pub fn kernel_dr(r: f64, dim: Dimension) -> f64 {
    match dim {
        Dimension::Two => -1.0 / r,
        Dimension::Three => -1.0 / (r * r),
    }
}

/// `w(x)` for a vector `x`; errors at the origin.
pub fn coulomb_kernel(x: &[f64], dim: Dimension) -> Result<f64> {
    let r = norm(x);
    if r == 0.0 {
        return Err(Error::Singularity("Coulomb kernel evaluated at the origin".into()));
    }
    Ok(kernel_r(r, dim))
}

/// Potential at distance `r` generated by the uniform unit-mass ball of radius `eta`.
pub fn smeared_potential(r: f64, eta: f64, dim: Dimension) -> f64 {
    if r >= eta {
        return kernel_r(r, dim);
    }
    match dim {
        Dimension::Three => (3.0 * eta * eta - r * r) / (2.0 * eta * eta * eta),
        Dimension::Two => -eta.ln() + 0.5 * (1.0 - r * r / (eta * eta)),
    }
}

const PAIR_TOL: f64 = 1e-13;

/// `D(delta_x^(eta), delta_y^(eta))`: interaction of two uniform balls of radius `eta`.
///
/// Disjoint balls interact like point charges. Overlapping balls are handled by
/// nested radial quadrature of [`smeared_potential`] over the second ball.
pub fn smeared_pair_energy(x: &[f64], y: &[f64], eta: f64, dim: Dimension) -> f64 {
    smeared_pair_energy_at(dist(x, y), eta, dim)
}

/// [`smeared_pair_energy`] as a function of the center distance.
pub fn smeared_pair_energy_at(s: f64, eta: f64, dim: Dimension) -> f64 {
    if s >= 2.0 * eta {
        return kernel_r(s, dim);
    }
    // The 2-d value is -log(eta) + (value at eta = 1 and distance s/eta).
    let (scale, shift) = match dim {
        Dimension::Three => (1.0 / eta, 0.0),
        Dimension::Two => (1.0, -eta.ln()),
    };
    let u = s / eta;
    let f = |r: f64| smeared_potential(r, 1.0, dim);
    shift + scale * quad::ball_average_radial(&f, u, 1.0, dim.get(), &[1.0], PAIR_TOL)
}

/// `D(delta^(eta), delta^(eta))` in closed form.
pub fn self_energy(eta: f64, dim: Dimension) -> f64 {
    let k = SpaceConstants::of(dim);
    match dim {
        Dimension::Three => k.kappa_d / k.c_d * kernel_r(eta, dim),
        Dimension::Two => kernel_r(eta, dim) + k.gamma_2 / k.c_d,
    }
}

fn first_coincidence(config: &Configuration) -> Error {
    let (i, j) = config.coincident_pair().unwrap_or((0, 0));
    Error::CoincidentPoints { i, j }
}

/// `sum_{i != j} w(x_i - x_j)` over ordered pairs.
pub fn pair_energy(config: &Configuration) -> Result<f64> {
    let n = config.n();
    let dim = config.dim();
    let rows = par::map_range(n, |i| {
        let xi = config.point(i);
        let mut terms = Vec::with_capacity(n - i);
        for j in i + 1..n {
            let r = dist(xi, config.point(j));
            if r == 0.0 {
                return None;
            }
            terms.push(kernel_r(r, dim));
        }
        Some(par::sum(terms))
    });
    let mut sums = Vec::with_capacity(n);
    for r in rows {
        match r {
            Some(v) => sums.push(v),
            None => return Err(first_coincidence(config)),
        }
    }
    Ok(2.0 * par::sum(sums))
}

/// `sum_i V(x_i)`.
pub fn potential_energy(config: &Configuration, v: &dyn Potential) -> f64 {
    par::sum(config.points().map(|p| v.value(p)))
}

/// `H_n = sum_{i != j} w(x_i - x_j) + n sum_i V(x_i)`.
pub fn hamiltonian(config: &Configuration, v: &dyn Potential) -> Result<f64> {
    let n = config.n() as f64;
    Ok(pair_energy(config)? + n * potential_energy(config, v))
}

/// `grad_i H_n = 2 sum_{j != i} grad w(x_i - x_j) + n grad V(x_i)`, flattened.
pub fn hamiltonian_gradient(config: &Configuration, v: &dyn Potential) -> Result<Vec<f64>> {
    let n = config.n();
    let d = config.dim().get();
    let dim = config.dim();
    let nf = n as f64;
    let rows = par::map_range(n, |i| {
        let xi = config.point(i);
        let mut g = vec![0.0; d];
        let mut comps: Vec<Vec<f64>> = vec![Vec::with_capacity(n); d];
        for j in 0..n {
            if j == i {
                continue;
            }
            let xj = config.point(j);
            let r = dist(xi, xj);
            if r == 0.0 {
                return None;
            }
            let f = 2.0 * kernel_dr(r, dim) / r;
            for k in 0..d {
                comps[k].push(f * (xi[k] - xj[k]));
            }
        }
        v.gradient(xi, &mut g);
        for k in 0..d {
            comps[k].push(nf * g[k]);
            g[k] = par::sum(comps[k].iter().copied());
        }
        Some(g)
    });
    let mut out = Vec::with_capacity(n * d);
    for r in rows {
        match r {
            Some(g) => out.extend(g),
            None => return Err(first_coincidence(config)),
        }
    }
    Ok(out)
}

/// `sum_{j != i} w(y - x_j)`: interaction of a trial position `y` for particle `i` with the rest.
pub fn interaction_with_others(config: &Configuration, i: usize, y: &[f64]) -> f64 {
    let dim = config.dim();
    let mut s = 0.0;
    for (j, xj) in config.points().enumerate() {
        if j != i {
            let r = dist(y, xj);
            s += if r == 0.0 { f64::INFINITY } else { kernel_r(r, dim) };
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{PowerPotential, ZeroPotential};

    fn d2() -> Dimension {
        Dimension::Two
    }
    fn d3() -> Dimension {
        Dimension::Three
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(coulomb_kernel(&[1.0, 0.0, 0.0], d3()).unwrap(), 1.0);
        assert_eq!(coulomb_kernel(&[0.0, 1.0], d2()).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((coulomb_kernel(&[e, 0.0], d2()).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(coulomb_kernel(&[0.0, 0.0], d2()), Err(Error::Singularity(_))));
    }

    #[test]
    fn smeared_potential_examples() {
        assert_eq!(smeared_potential(2.0, 1.0, d3()), 0.5);
        assert_eq!(smeared_potential(0.0, 1.0, d3()), 1.5);
        assert_eq!(smeared_potential(0.0, 1.0, d2()), 0.5);
    }

    #[test]
    fn constants() {
        let k2 = SpaceConstants::of(d2());
        let k3 = SpaceConstants::of(d3());
        assert_eq!(k2.c_d, 2.0 * PI);
        assert_eq!(k2.kappa_d, k2.c_d);
        assert_eq!(k3.c_d, 4.0 * PI);
        assert!((k3.kappa_d - 4.0 * PI * 1.2).abs() < 1e-14);
        assert!((k2.gamma_2 - PI / 2.0).abs() < 1e-15);
        assert_eq!(k3.gamma_2, 0.0);
    }

    #[test]
    fn self_energy_examples() {
        assert!((self_energy(1.0, d3()) - 1.2).abs() < 1e-15);
        assert!((self_energy(0.5, d3()) - 2.4).abs() < 1e-15);
        assert!((self_energy(0.5, d2()) - (2f64.ln() + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn smeared_pair_examples() {
        let x = [0.0, 0.0, 0.0];
        assert_eq!(smeared_pair_energy(&x, &[1.0, 0.0, 0.0], 0.1, d3()), 1.0);
        assert!((smeared_pair_energy(&x, &x, 1.0, d3()) - 1.2).abs() < 1e-10);
        assert!((smeared_pair_energy(&[0.0, 0.0], &[0.0, 0.0], 1.0, d2()) - 0.25).abs() < 1e-10);
    }

    #[test]
    fn hamiltonian_examples() {
        let v2 = PowerPotential::quadratic(d2());
        let c = Configuration::new(d2(), vec![1.0, 0.0]).unwrap();
        assert_eq!(hamiltonian(&c, &v2).unwrap(), 1.0);
        let c = Configuration::new(d3(), vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(hamiltonian(&c, &ZeroPotential).unwrap(), 2.0);
        let g = hamiltonian_gradient(&Configuration::new(d2(), vec![1.0, 0.0]).unwrap(), &v2).unwrap();
        assert_eq!(g, vec![2.0, 0.0]);
    }

    #[test]
    fn coincident_points_are_reported() {
        let c = Configuration::new(d2(), vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        match hamiltonian(&c, &ZeroPotential) {
            Err(Error::CoincidentPoints { i, j }) => assert_eq!((i, j), (0, 2)),
            other => panic!("expected coincidence error, got {other:?}"),
        }
        assert!(hamiltonian_gradient(&c, &ZeroPotential).is_err());
    }

    #[test]
    fn configuration_validation() {
        assert!(Configuration::new(d2(), vec![]).is_err());
        assert!(Configuration::new(d2(), vec![1.0, 2.0, 3.0]).is_err());
        assert!(Configuration::new(d3(), vec![1.0, f64::NAN, 3.0]).is_err());
        assert!(Dimension::new(4).is_err());
    }
}
