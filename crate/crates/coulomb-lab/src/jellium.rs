//! Periodic jellium: lattices, torus configurations, Ewald-summed torus Green functions,
//! renormalized energies, Epstein zeta functions and the next-order constant.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumMeasure;
use crate::error::{Error, Result};
use crate::kernel::{Dimension, SpaceConstants};
use crate::par;
use crate::quad;
use crate::special::{ein, erfc, e1, gamma, unit_sphere_area, upper_gamma, EULER_GAMMA};

type Mat = [[f64; 3]; 3];

fn to_mat(basis: &[Vec<f64>], d: usize) -> Mat {
    let mut m = [[0.0; 3]; 3];
    for i in 0..d {
        for j in 0..d {
            m[i][j] = basis[i][j];
        }
    }
    if d == 2 {
        m[2][2] = 1.0;
    }
    m
}

fn det3(m: &Mat) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn inv3(m: &Mat) -> Mat {
    let det = det3(m);
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = ((j + 1) % 3, (j + 2) % 3);
            let (c, e) = ((i + 1) % 3, (i + 2) % 3);
            r[i][j] = (m[a][c] * m[b][e] - m[a][e] * m[b][c]) / det;
        }
    }
    r
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A Bravais lattice given by `d` basis vectors (rows).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lattice {
    pub name: String,
    pub dimension: Dimension,
    pub basis: Vec<Vec<f64>>,
}

impl Lattice {
    pub fn new(name: impl Into<String>, dimension: Dimension, basis: Vec<Vec<f64>>) -> Result<Self> {
        let lat = Self { name: name.into(), dimension, basis };
        lat.validate()?;
        Ok(lat)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dimension.get();
        if self.basis.len() != d || self.basis.iter().any(|b| b.len() != d) {
            return Err(Error::InvalidInput(format!("lattice '{}' needs {d} basis vectors of length {d}", self.name)));
        }
        if self.basis.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("lattice '{}' has non-finite basis entries", self.name)));
        }
        let v = self.covolume();
        if !(v > 1e-12 * self.basis.iter().map(|b| norm(b)).product::<f64>()) {
            return Err(Error::InvalidInput(format!("lattice '{}' has a degenerate basis", self.name)));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.dimension.get()
    }

    pub fn covolume(&self) -> f64 {
        det3(&to_mat(&self.basis, self.d())).abs()
    }

    /// Points per unit volume.
    pub fn density(&self) -> f64 {
        1.0 / self.covolume()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            name: self.name.clone(),
            dimension: self.dimension,
            basis: self.basis.iter().map(|b| b.iter().map(|x| x * factor).collect()).collect(),
        }
    }

    /// Same shape rescaled to `m` points per unit volume.
    pub fn with_density(&self, m: f64) -> Self {
        self.scaled((self.density() / m).powf(1.0 / self.d() as f64))
    }

    /// Basis vectors multiplied by a `d x d` matrix (rows), e.g. a rotation.
    pub fn transformed(&self, m: &[Vec<f64>]) -> Self {
        let d = self.d();
        let basis = self
            .basis
            .iter()
            .map(|b| (0..d).map(|j| (0..d).map(|k| m[j][k] * b[k]).sum()).collect())
            .collect();
        Self { name: self.name.clone(), dimension: self.dimension, basis }
    }

    /// Dual lattice `{q : q . p in Z}`.
    pub fn dual(&self) -> Self {
        let d = self.d();
        let inv = inv3(&to_mat(&self.basis, d));
        let basis = (0..d).map(|j| (0..d).map(|i| inv[i][j]).collect()).collect();
        Self { name: format!("{}*", self.name), dimension: self.dimension, basis }
    }

    pub fn square() -> Self {
        Self { name: "square".into(), dimension: Dimension::Two, basis: vec![vec![1.0, 0.0], vec![0.0, 1.0]] }
    }

    pub fn triangular() -> Self {
        let a = (2.0 / 3f64.sqrt()).sqrt();
        Self {
            name: "triangular".into(),
            dimension: Dimension::Two,
            basis: vec![vec![a, 0.0], vec![0.5 * a, 0.5 * 3f64.sqrt() * a]],
        }
    }

    /// Rhombic lattice (equal basis lengths) with the given angle, at density one.
    pub fn rhombic(angle_deg: f64) -> Self {
        let t = angle_deg.to_radians();
        let a = (1.0 / t.sin()).sqrt();
        Self {
            name: format!("rhombic{angle_deg}"),
            dimension: Dimension::Two,
            basis: vec![vec![a, 0.0], vec![a * t.cos(), a * t.sin()]],
        }
    }

    pub fn simple_cubic() -> Self {
        Self {
            name: "sc".into(),
            dimension: Dimension::Three,
            basis: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        }
    }

    pub fn bcc() -> Self {
        let a = 2f64.powf(1.0 / 3.0);
        let h = 0.5 * a;
        Self {
            name: "bcc".into(),
            dimension: Dimension::Three,
            basis: vec![vec![-h, h, h], vec![h, -h, h], vec![h, h, -h]],
        }
    }

    pub fn fcc() -> Self {
        let a = 4f64.powf(1.0 / 3.0);
        let h = 0.5 * a;
        Self {
            name: "fcc".into(),
            dimension: Dimension::Three,
            basis: vec![vec![0.0, h, h], vec![h, 0.0, h], vec![h, h, 0.0]],
        }
    }

    /// Built-in lattices of the given dimension, all at density one.
    pub fn catalog(dim: Dimension) -> Vec<Self> {
        match dim {
            Dimension::Two => vec![Self::triangular(), Self::square(), Self::rhombic(45.0)],
            Dimension::Three => vec![Self::simple_cubic(), Self::bcc(), Self::fcc()],
        }
    }

    /// The one-point torus spanned by the basis.
    pub fn unit_torus(&self) -> TorusConfiguration {
        TorusConfiguration { dimension: self.dimension, basis: self.basis.clone(), points: vec![vec![0.0; self.d()]] }
    }

    /// The `k^d`-point torus spanned by `k` times the basis.
    pub fn supercell_torus(&self, k: usize) -> TorusConfiguration {
        let d = self.d();
        let kf = k as f64;
        let mut points = Vec::new();
        for idx in 0..k.pow(d as u32) {
            let mut r = idx;
            let mut p = vec![0.0; d];
            for i in 0..d {
                let c = (r % k) as f64;
                r /= k;
                for (pj, bj) in p.iter_mut().zip(&self.basis[i]) {
                    *pj += c * bj;
                }
            }
            points.push(p);
        }
        TorusConfiguration {
            dimension: self.dimension,
            basis: self.basis.iter().map(|b| b.iter().map(|x| x * kf).collect()).collect(),
            points,
        }
    }
}

/// Reads a JSON array of lattices.
pub fn read_catalog(path: &Path) -> Result<Vec<Lattice>> {
    let text = std::fs::read_to_string(path)?;
    let lats: Vec<Lattice> = serde_json::from_str(&text)?;
    for l in &lats {
        l.validate()?;
    }
    Ok(lats)
}

pub fn write_catalog(path: &Path, lattices: &[Lattice]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(lattices)?)?;
    Ok(())
}

/// `N` points on the flat torus spanned by `basis` (rows).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusConfiguration {
    pub dimension: Dimension,
    pub basis: Vec<Vec<f64>>,
    pub points: Vec<Vec<f64>>,
}

impl TorusConfiguration {
    pub fn new(dimension: Dimension, basis: Vec<Vec<f64>>, points: Vec<Vec<f64>>) -> Result<Self> {
        Lattice::new("torus", dimension, basis.clone())?;
        let d = dimension.get();
        if points.is_empty() || points.iter().any(|p| p.len() != d || p.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidInput("torus points must be non-empty finite d-vectors".into()));
        }
        Ok(Self { dimension, basis, points })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn volume(&self) -> f64 {
        det3(&to_mat(&self.basis, self.dimension.get())).abs()
    }

    /// Points per unit volume (one for the unit-density convention).
    pub fn density(&self) -> f64 {
        self.n() as f64 / self.volume()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let s = |v: &Vec<Vec<f64>>| v.iter().map(|b| b.iter().map(|x| x * factor).collect()).collect();
        Self { dimension: self.dimension, basis: s(&self.basis), points: s(&self.points) }
    }
}

/// Ewald splitting parameter and cutoffs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EwaldParameters {
    pub alpha: f64,
    pub real_cutoff: f64,
    pub recip_cutoff: f64,
    pub tolerance: f64,
    /// Estimated truncation error of the real-space sum.
    pub real_tail: f64,
    /// Estimated truncation error of the reciprocal sum.
    pub recip_tail: f64,
}

pub const DEFAULT_EWALD_TOL: f64 = 1e-14;

impl EwaldParameters {
    /// Default `alpha = sqrt(pi) |T|^{-1/d}` for the given torus.
    pub fn for_torus(tc: &TorusConfiguration, tol: f64) -> Result<Self> {
        let alpha = PI.sqrt() * tc.volume().powf(-1.0 / tc.dimension.get() as f64);
        Self::with_alpha(tc, alpha, tol)
    }

    /// Cutoffs from the Gaussian tail bounds, enlarged until both tail estimates are below `tol`.
    pub fn with_alpha(tc: &TorusConfiguration, alpha: f64, tol: f64) -> Result<Self> {
        if !(alpha > 0.0 && tol > 0.0 && tol < 1.0) {
            return Err(Error::InvalidInput(format!("need alpha > 0 and 0 < tol < 1, got {alpha}, {tol}")));
        }
        let dim = tc.dimension;
        let d = dim.get();
        let vol = tc.volume();
        let diam: f64 = tc.basis.iter().map(|b| norm(b)).sum();
        let lat = Lattice { name: String::new(), dimension: dim, basis: tc.basis.clone() };
        let ddiam: f64 = lat.dual().basis.iter().map(|b| 2.0 * PI * norm(b)).sum();
        let l = (-tol.ln()).sqrt();
        let mut rc = l / alpha;
        let mut kc = 2.0 * alpha * l;
        let area = unit_sphere_area(d);
        let real_term = |r: f64| match dim {
            Dimension::Two => e1(alpha * alpha * r * r) / (4.0 * PI),
            Dimension::Three => erfc(alpha * r) / (4.0 * PI * r),
        };
        let real_tail = |rc: f64| {
            quad::integrate(|r| area * (r + diam).powi(d as i32 - 1) * real_term(r), rc, rc + 12.0 / alpha, 1e-20)
                / vol
        };
        let recip_tail = |kc: f64| {
            quad::integrate(
                |k| area * (k + ddiam).powi(d as i32 - 1) * (-k * k / (4.0 * alpha * alpha)).exp() / (k * k),
                kc,
                kc + 24.0 * alpha,
                1e-20,
            ) / (2.0 * PI).powi(d as i32)
        };
        let mut rt = real_tail(rc);
        while rt > tol {
            rc *= 1.05;
            rt = real_tail(rc);
        }
        let mut kt = recip_tail(kc);
        while kt > tol {
            kc *= 1.05;
            kt = recip_tail(kc);
        }
        Ok(Self { alpha, real_cutoff: rc, recip_cutoff: kc, tolerance: tol, real_tail: rt, recip_tail: kt })
    }
}

/// Precomputed Ewald sums for one torus.
#[derive(Clone, Debug)]
pub struct Ewald {
    dim: Dimension,
    basis: Mat,
    inv: Mat,
    volume: f64,
    alpha: f64,
    real: Vec<[f64; 3]>,
    /// Half of the reciprocal vectors (one per `+-k` pair) with weights `2 e^{-k^2/4a^2} / (k^2 |T|)`.
    recip: Vec<([f64; 3], f64)>,
    pub params: EwaldParameters,
}

impl Ewald {
    pub fn new(tc: &TorusConfiguration, params: &EwaldParameters) -> Self {
        let d = tc.dimension.get();
        let basis = to_mat(&tc.basis, d);
        let inv = inv3(&basis);
        let volume = tc.volume();
        let alpha = params.alpha;
        let diam: f64 = tc.basis.iter().map(|b| norm(b)).sum();
        // real-space images n.B with |n.B| <= rc + diam; n_i = L . b*_i
        let rmax = params.real_cutoff + diam;
        let bounds: Vec<i64> = (0..d)
            .map(|i| {
                let col: Vec<f64> = (0..d).map(|k| inv[k][i]).collect();
                (rmax * norm(&col)).ceil() as i64 + 1
            })
            .collect();
        let mut real = Vec::new();
        for_each_index(&bounds, |n| {
            let mut l = [0.0; 3];
            for i in 0..d {
                for k in 0..d {
                    l[k] += n[i] as f64 * basis[i][k];
                }
            }
            if norm(&l[..d]) <= rmax {
                real.push(l);
            }
        });
        // reciprocal k = 2 pi sum m_j b*_j, |m_j| <= kc |b_j| / (2 pi)
        let kc = params.recip_cutoff;
        let kb: Vec<i64> = (0..d).map(|j| (kc * norm(&basis[j][..d]) / (2.0 * PI)).ceil() as i64 + 1).collect();
        let mut recip = Vec::new();
        for_each_index(&kb, |m| {
            // keep one of each +-k pair: first nonzero index positive
            match m[..d].iter().find(|&&x| x != 0) {
                Some(&x) if x > 0 => {}
                _ => return,
            }
            let mut k = [0.0; 3];
            for j in 0..d {
                for c in 0..d {
                    k[c] += 2.0 * PI * m[j] as f64 * inv[c][j];
                }
            }
            let k2 = dot(&k[..d], &k[..d]);
            if k2.sqrt() <= kc {
                recip.push((k, 2.0 * (-k2 / (4.0 * alpha * alpha)).exp() / (k2 * volume)));
            }
        });
        Self { dim: tc.dimension, basis, inv, volume, alpha, real, recip, params: params.clone() }
    }

    fn d(&self) -> usize {
        self.dim.get()
    }

    /// `x` shifted by a lattice vector into the cell with fractional coordinates in `[-1/2, 1/2)`.
    pub fn reduce(&self, x: &[f64]) -> [f64; 3] {
        let d = self.d();
        let mut frac = [0.0; 3];
        for i in 0..d {
            frac[i] = (0..d).map(|k| x[k] * self.inv[k][i]).sum::<f64>();
            frac[i] -= frac[i].round();
        }
        let mut y = [0.0; 3];
        for i in 0..d {
            for k in 0..d {
                y[k] += frac[i] * self.basis[i][k];
            }
        }
        y
    }

    /// Distance from `x` to the nearest lattice point.
    pub fn min_image_norm(&self, x: &[f64]) -> f64 {
        let d = self.d();
        let y = self.reduce(x);
        let mut best = f64::INFINITY;
        for idx in 0..3usize.pow(d as u32) {
            let mut r = idx;
            let mut z = y;
            for i in 0..d {
                let c = (r % 3) as f64 - 1.0;
                r /= 3;
                for k in 0..d {
                    z[k] += c * self.basis[i][k];
                }
            }
            best = best.min(norm(&z[..d]));
        }
        best
    }

    /// Length of the shortest nonzero lattice vector.
    pub fn shortest_period(&self) -> f64 {
        let d = self.d();
        let mut best = f64::INFINITY;
        for idx in 0..5usize.pow(d as u32) {
            let mut r = idx;
            let mut z = [0.0; 3];
            for i in 0..d {
                let c = (r % 5) as f64 - 2.0;
                r /= 5;
                for k in 0..d {
                    z[k] += c * self.basis[i][k];
                }
            }
            let l = norm(&z[..d]);
            if l > 0.0 {
                best = best.min(l);
            }
        }
        best
    }

    fn real_term(&self, r: f64) -> f64 {
        match self.dim {
            Dimension::Two => e1(self.alpha * self.alpha * r * r) / (4.0 * PI),
            Dimension::Three => erfc(self.alpha * r) / (4.0 * PI * r),
        }
    }

    fn recip_sum(&self, y: &[f64]) -> f64 {
        let d = self.d();
        par::sum(self.recip.iter().map(|(k, w)| w * dot(&k[..d], y).cos()))
    }

    fn background(&self) -> f64 {
        -1.0 / (4.0 * self.alpha * self.alpha * self.volume)
    }

    /// Torus Green function `-Delta G = delta_0 - 1/|T|`, mean zero.
    pub fn green(&self, x: &[f64]) -> Result<f64> {
        let d = self.d();
        let y = self.reduce(x);
        let rc = self.params.real_cutoff;
        let mut terms = Vec::with_capacity(self.real.len());
        for l in &self.real {
            let r = norm(&[y[0] + l[0], y[1] + l[1], y[2] + l[2]][..d]);
            if r == 0.0 {
                return Err(Error::Singularity(format!("torus Green function at a lattice point {x:?}")));
            }
            if r <= rc {
                terms.push(self.real_term(r));
            }
        }
        Ok(par::sum(terms) + self.recip_sum(&y[..d]) + self.background())
    }

    /// `G(x) - w(x)/c_d` for `x` near the origin, with the singular image removed analytically.
    pub fn green_regular(&self, x: &[f64]) -> f64 {
        let d = self.d();
        let a = self.alpha;
        let r0 = norm(&x[..d]);
        let rc = self.params.real_cutoff;
        let mut terms = Vec::with_capacity(self.real.len());
        for l in &self.real {
            if l.iter().all(|c| *c == 0.0) {
                continue;
            }
            let mut y = [0.0; 3];
            for k in 0..d {
                y[k] = x[k] + l[k];
            }
            let r = norm(&y[..d]);
            if r <= rc {
                terms.push(self.real_term(r));
            }
        }
        let own = match self.dim {
            // E1(a^2 r^2) = -gamma - ln(a^2 r^2) + Ein(a^2 r^2); the -ln r part is w/c_2
            Dimension::Two => (-EULER_GAMMA - 2.0 * a.ln() + ein(a * a * r0 * r0)) / (4.0 * PI),
            Dimension::Three => {
                let u = a * r0;
                let erf_over_r = if u < 1e-4 {
                    2.0 * a / PI.sqrt() * (1.0 - u * u / 3.0)
                } else {
                    (1.0 - erfc(u)) / r0
                };
                -erf_over_r / (4.0 * PI)
            }
        };
        terms.push(own);
        par::sum(terms) + self.recip_sum(&x[..d]) + self.background()
    }

    /// The Madelung constant `R = lim_{x -> 0} G(x) - w(x)/c_d`.
    pub fn madelung(&self) -> f64 {
        self.green_regular(&[0.0; 3])
    }
}

fn for_each_index<F: FnMut(&[i64; 3])>(bounds: &[i64], mut f: F) {
    let d = bounds.len();
    let mut n = [0i64; 3];
    let b2 = if d == 3 { bounds[2] } else { 0 };
    for a in -bounds[0]..=bounds[0] {
        for b in -bounds[1]..=bounds[1] {
            for c in -b2..=b2 {
                n[0] = a;
                n[1] = b;
                n[2] = c;
                f(&n);
            }
        }
    }
}

/// Torus Green function at `x`.
pub fn torus_green(x: &[f64], tc: &TorusConfiguration, ewald: &EwaldParameters) -> Result<f64> {
    Ewald::new(tc, ewald).green(x)
}

/// Madelung constant of the torus.
pub fn madelung_constant(tc: &TorusConfiguration, ewald: &EwaldParameters) -> f64 {
    Ewald::new(tc, ewald).madelung()
}

/// `W = (c_d^2 / |T|) (sum_{i != j} G(a_i - a_j) + N R)`, i.e. `c_d^2 (1/N) sum G + c_d^2 R`
/// at unit density.
pub fn periodic_renormalized_energy(tc: &TorusConfiguration, ewald: &EwaldParameters) -> Result<f64> {
    let ew = Ewald::new(tc, ewald);
    periodic_energy_with(tc, &ew)
}

fn periodic_energy_with(tc: &TorusConfiguration, ew: &Ewald) -> Result<f64> {
    let n = tc.n();
    let d = tc.dimension.get();
    let c = SpaceConstants::of(tc.dimension).c_d;
    let rows = par::map_range(n, |i| -> Result<f64> {
        let mut s = Vec::with_capacity(n);
        for j in 0..n {
            if j != i {
                let x: Vec<f64> = (0..d).map(|k| tc.points[i][k] - tc.points[j][k]).collect();
                s.push(ew.green(&x).map_err(|_| Error::CoincidentPoints { i: i.min(j), j: i.max(j) })?);
            }
        }
        Ok(par::sum(s))
    });
    let mut sums = Vec::with_capacity(n);
    for r in rows {
        sums.push(r?);
    }
    Ok(c * c / ew.volume * (par::sum(sums) + n as f64 * ew.madelung()))
}

/// `W` of a lattice: the density-one value from the one-point torus, then the scaling relation
/// `W(m) = m^{2-2/d} W(1)` (d = 3) or `W(m) = m (W(1) - (kappa_2/2) log m)` (d = 2).
pub fn lattice_energy(lattice: &Lattice, tol: f64) -> Result<f64> {
    let m = lattice.density();
    let unit = lattice.with_density(1.0).unit_torus();
    let params = EwaldParameters::for_torus(&unit, tol)?;
    let w1 = periodic_renormalized_energy(&unit, &params)?;
    Ok(scale_energy(w1, m, lattice.dimension))
}

/// The scaling relation applied to a density-one value.
pub fn scale_energy(w1: f64, m: f64, dim: Dimension) -> f64 {
    match dim {
        Dimension::Two => m * (w1 - 0.5 * SpaceConstants::of(dim).kappa_d * m.ln()),
        Dimension::Three => m.powf(4.0 / 3.0) * w1,
    }
}

/// `W` of a lattice evaluated directly on its own torus, without the scaling relation.
pub fn lattice_energy_direct(lattice: &Lattice, tol: f64) -> Result<f64> {
    let t = lattice.unit_torus();
    periodic_renormalized_energy(&t, &EwaldParameters::for_torus(&t, tol)?)
}

/// Epstein zeta `sum_{p != 0} |p|^{-(2+s)}` by the theta-function splitting, valid for every `s > 0`
/// (the analytic continuation where the direct sum diverges).
pub fn epstein_zeta(lattice: &Lattice, s: f64, tol: f64) -> Result<f64> {
    let (z, _) = epstein_parts(lattice, s, tol)?;
    Ok(z)
}

/// Epstein zeta minus its pole term; finite at `s = 0` in d = 2.
pub fn epstein_zeta_regular(lattice: &Lattice, s: f64, tol: f64) -> Result<f64> {
    let (z, pole) = epstein_parts(lattice, s, tol)?;
    Ok(z - pole)
}

fn epstein_parts(lattice: &Lattice, s: f64, tol: f64) -> Result<(f64, f64)> {
    lattice.validate()?;
    let d = lattice.d();
    let df = d as f64;
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("Epstein zeta needs s > 0, got {s}")));
    }
    let sigma = 1.0 + 0.5 * s;
    if s == 0.0 && d == 2 {
        // only the regular part is meaningful here
    } else if s == 0.0 {
        return Err(Error::Domain("Epstein zeta needs s > 0".into()));
    }
    let lambda = lattice.covolume().powf(1.0 / df);
    let unit = lattice.scaled(1.0 / lambda);
    let dual = unit.dual();
    let pref = PI.powf(sigma) / gamma(sigma);
    let cut = (-(tol.min(1e-3)).ln() + 10.0) / PI;
    let direct = shell_sum(&unit, cut.sqrt(), |r2| {
        let x = PI * r2;
        upper_gamma(sigma, x) * x.powf(-sigma)
    });
    let a = 0.5 * df - sigma;
    let recip = shell_sum(&dual, cut.sqrt(), |r2| {
        let x = PI * r2;
        upper_gamma(a, x) * x.powf(-a)
    });
    let pole_raw = if (sigma - 0.5 * df).abs() < 1e-300 { 0.0 } else { 1.0 / (sigma - 0.5 * df) };
    let body = direct + recip - 1.0 / sigma;
    let scale = lambda.powf(-2.0 * sigma);
    let pole = pref * pole_raw * scale;
    Ok((pref * body * scale + pole, pole))
}

/// `sum_{p != 0, |p| <= rmax} f(|p|^2)`, deterministic order.
fn shell_sum<F: Fn(f64) -> f64 + Sync + Send>(lattice: &Lattice, rmax: f64, f: F) -> f64 {
    let d = lattice.d();
    let basis = to_mat(&lattice.basis, d);
    let inv = inv3(&basis);
    let bounds: Vec<i64> = (0..d)
        .map(|i| {
            let col: Vec<f64> = (0..d).map(|k| inv[k][i]).collect();
            (rmax * norm(&col)).ceil() as i64 + 1
        })
        .collect();
    let mut pts = Vec::new();
    for_each_index(&bounds, |n| {
        if n.iter().all(|&x| x == 0) {
            return;
        }
        let mut p = [0.0; 3];
        for i in 0..d {
            for k in 0..d {
                p[k] += n[i] as f64 * basis[i][k];
            }
        }
        let r2 = dot(&p[..d], &p[..d]);
        if r2 <= rmax * rmax {
            pts.push(r2);
        }
    });
    par::sum(par::map_slice(&pts, |&r2| f(r2)))
}

/// Epstein zeta by direct summation with the smooth cutoff `exp(-(|p|/R)^8)` and the
/// complementary integral added analytically; valid for `d - 2 < s < d + 6`.
pub fn epstein_zeta_direct(lattice: &Lattice, s: f64, cutoff_radius: f64) -> Result<f64> {
    lattice.validate()?;
    let d = lattice.d();
    let df = d as f64;
    if !(s > df - 2.0 && s < df + 6.0) {
        return Err(Error::Domain(format!("direct Epstein sum needs {} < s < {}, got {s}", df - 2.0, df + 6.0)));
    }
    let rc = cutoff_radius;
    let p = 2.0 + s;
    let sum = shell_sum(lattice, 2.2 * rc, |r2| {
        let r = r2.sqrt();
        r.powf(-p) * (-(r / rc).powi(8)).exp()
    });
    // (1/V) int |x|^{-p} (1 - exp(-(|x|/R)^8)) dx = |S| R^{d-p} (-Gamma((d-p)/8)/8) / V
    let b = (df - p) / 8.0;
    let tail = unit_sphere_area(d) * rc.powf(df - p) * (-gamma(b) / 8.0) / lattice.covolume();
    Ok(sum + tail)
}

/// Comparison of two lattices through `W` and through the Epstein zeta of the dual lattices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZetaConsistency {
    pub lattice_1: String,
    pub lattice_2: String,
    /// `W(lat1) - W(lat2)`.
    pub w_difference: f64,
    /// `(s, zeta_{lat1*}(s) - zeta_{lat2*}(s))`.
    pub zeta_differences: Vec<(f64, f64)>,
    /// The `s -> 0+` limit of the zeta difference (analytic continuation, pole removed).
    pub zeta_limit: f64,
    /// `w_difference / zeta_limit`, or NaN when the lattices coincide.
    pub fitted_constant: f64,
    pub same_sign: bool,
}

/// Relates `W` differences to Epstein zeta differences in d = 2.
pub fn zeta_renorm_consistency(lat1: &Lattice, lat2: &Lattice, s_ladder: &[f64], tol: f64) -> Result<ZetaConsistency> {
    if lat1.dimension != Dimension::Two || lat2.dimension != Dimension::Two {
        return Err(Error::Domain("zeta/energy consistency is only defined in d = 2".into()));
    }
    let l1 = lat1.with_density(1.0);
    let l2 = lat2.with_density(1.0);
    let w = lattice_energy(&l1, DEFAULT_EWALD_TOL)? - lattice_energy(&l2, DEFAULT_EWALD_TOL)?;
    let (d1, d2) = (l1.dual(), l2.dual());
    let mut diffs = Vec::with_capacity(s_ladder.len());
    for &s in s_ladder {
        diffs.push((s, epstein_zeta(&d1, s, tol)? - epstein_zeta(&d2, s, tol)?));
    }
    let limit = epstein_zeta_regular(&d1, 0.0, tol)? - epstein_zeta_regular(&d2, 0.0, tol)?;
    let scale = w.abs().max(limit.abs());
    let degenerate = scale < 1e-12;
    let same_sign = degenerate
        || (w.signum() == limit.signum() && diffs.iter().all(|(_, z)| z.signum() == w.signum()));
    Ok(ZetaConsistency {
        lattice_1: lat1.name.clone(),
        lattice_2: lat2.name.clone(),
        w_difference: w,
        zeta_differences: diffs,
        zeta_limit: limit,
        fitted_constant: if degenerate { f64::NAN } else { w / limit },
        same_sign,
    })
}

/// The conjectured next-order constant built from a trial minimal `W` at density one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiEstimate {
    pub value: f64,
    pub alpha: f64,
    /// `int mu0^{2-2/d}` (d = 3) or `int mu0 log mu0` (d = 2).
    pub density_integral: f64,
    /// Always true: the minimizer of `W` is not known, the input is a catalog minimum.
    pub conjectural: bool,
}

/// `xi_d = alpha int mu0^{2-2/d} / c_d` (d = 3), `alpha/(2 pi) - (1/2) int mu0 log mu0` (d = 2).
pub fn xi_d(mu0: &EquilibriumMeasure, alpha: f64) -> XiEstimate {
    let dim = mu0.dim();
    let f = |r: f64| -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match dim {
            Dimension::Two => r * r.ln(),
            Dimension::Three => r.powf(4.0 / 3.0),
        }
    };
    let integral = match &mu0.radial {
        Some(p) => p.integrate(|r| {
            let rho = p.density(r);
            f(rho) / rho
        }),
        None => mu0.grid.integrate(&mu0.density.iter().map(|&r| f(r)).collect::<Vec<_>>()),
    };
    let value = match dim {
        Dimension::Two => alpha / (2.0 * PI) - 0.5 * integral,
        Dimension::Three => alpha * integral / SpaceConstants::of(dim).c_d,
    };
    XiEstimate { value, alpha, density_integral: integral, conjectural: true }
}

/// Smallest catalog energy at density one with the lattice name.
pub fn catalog_minimum(dim: Dimension) -> Result<(String, f64)> {
    let mut best: Option<(String, f64)> = None;
    for lat in Lattice::catalog(dim) {
        let w = lattice_energy(&lat, DEFAULT_EWALD_TOL)?;
        if best.as_ref().map_or(true, |(_, b)| w < *b) {
            best = Some((lat.name.clone(), w));
        }
    }
    best.ok_or_else(|| Error::InvalidInput("empty catalog".into()))
}

/// Smeared energy per unit volume of a periodic configuration at smearing radius `eta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxAverage {
    pub eta: f64,
    /// `(k, W_eta)` computed on the `k^d` supercell.
    pub ladder: Vec<(usize, f64)>,
    pub value: f64,
    /// Largest deviation across the ladder.
    pub spread: f64,
}

/// Mean over two independent uniform points of `B(0, eta)` of the regular part of `G`.
fn self_regular_average(ew: &Ewald, eta: f64) -> f64 {
    let dim = ew.dim;
    let d = dim.get();
    // distance density of two uniform points in a ball of radius eta
    let p = |r: f64| -> f64 {
        let t = r / (2.0 * eta);
        match dim {
            Dimension::Two => {
                (2.0 * r / (eta * eta)) * (2.0 / PI) * (t.min(1.0).acos() - t * (1.0 - t * t).max(0.0).sqrt())
            }
            Dimension::Three => {
                let u = r / eta;
                (3.0 * r * r / eta.powi(3)) * (1.0 - 0.75 * u + u.powi(3) / 16.0)
            }
        }
    };
    let sphere_mean = |r: f64| -> f64 {
        match dim {
            Dimension::Two => {
                let m = 32;
                let vals: Vec<f64> = (0..m)
                    .map(|k| {
                        let t = 2.0 * PI * k as f64 / m as f64;
                        ew.green_regular(&[r * t.cos(), r * t.sin()])
                    })
                    .collect();
                par::sum(vals) / m as f64
            }
            Dimension::Three => {
                let (z, wz) = quad::gauss_legendre(12);
                let m = 24;
                let mut vals = Vec::new();
                for (zi, wi) in z.iter().zip(&wz) {
                    let s = (1.0 - zi * zi).sqrt();
                    for k in 0..m {
                        let t = 2.0 * PI * k as f64 / m as f64;
                        vals.push(wi * 0.5 * ew.green_regular(&[r * s * t.cos(), r * s * t.sin(), r * zi]) / m as f64);
                    }
                }
                par::sum(vals)
            }
        }
    };
    let _ = d;
    quad::integrate(|r| p(r) * sphere_mean(r), 0.0, 2.0 * eta, 1e-13)
}

/// `W_eta`: the average over one period of `|E_eta|^2` minus `m (kappa_d w(eta) + gamma_2)`.
///
/// With smeared charges `-Delta h = c_d (sum delta^(eta) - m)`, the period integral is
/// `c_d^2 sum_{i,j} <G>_{ij}` with `G` averaged over both balls. Distinct pairs (balls disjoint)
/// use the mean-value property of `G`; each self pair splits into the exact smeared self-energy,
/// which cancels the renormalization, plus a quadrature of the regular part of `G`.
/// The ladder repeats the computation on `k^d` supercells.
pub fn box_averaged_w_eta(tc: &TorusConfiguration, eta: f64, ladder: &[usize], tol: f64) -> Result<BoxAverage> {
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    let ks: Vec<usize> = if ladder.is_empty() { vec![1] } else { ladder.to_vec() };
    let mut out = Vec::with_capacity(ks.len());
    for &k in &ks {
        let sc = supercell(tc, k);
        let params = EwaldParameters::for_torus(&sc, tol)?;
        let ew = Ewald::new(&sc, &params);
        let c = SpaceConstants::of(sc.dimension).c_d;
        let d = sc.dimension.get();
        let n = sc.n();
        let vol = sc.volume();
        let corr = eta * eta / ((d as f64 + 2.0) * vol);
        if ew.shortest_period() < 2.0 * eta {
            return Err(Error::Separation { pairs: (0..n).map(|i| (i, i)).collect() });
        }
        let rows = par::map_range(n, |i| -> Result<f64> {
            let mut s = Vec::with_capacity(n);
            for j in 0..n {
                if j != i {
                    let x: Vec<f64> = (0..d).map(|q| sc.points[i][q] - sc.points[j][q]).collect();
                    if ew.min_image_norm(&x) < 2.0 * eta {
                        return Err(Error::Separation { pairs: vec![(i.min(j), i.max(j))] });
                    }
                    s.push(ew.green(&x)? + corr);
                }
            }
            Ok(par::sum(s))
        });
        let mut sums = Vec::with_capacity(n);
        for r in rows {
            sums.push(r?);
        }
        let selfr = self_regular_average(&ew, eta);
        out.push((k, c * c / vol * (par::sum(sums) + n as f64 * selfr)));
    }
    let v0 = out[0].1;
    let spread = out.iter().map(|(_, v)| (v - v0).abs()).fold(0.0, f64::max);
    Ok(BoxAverage { eta, value: out[out.len() - 1].1, ladder: out, spread })
}

/// The `k^d` supercell of a torus configuration.
pub fn supercell(tc: &TorusConfiguration, k: usize) -> TorusConfiguration {
    if k <= 1 {
        return tc.clone();
    }
    let d = tc.dimension.get();
    let mut points = Vec::new();
    for idx in 0..k.pow(d as u32) {
        let mut r = idx;
        let mut shift = vec![0.0; d];
        for i in 0..d {
            let c = (r % k) as f64;
            r /= k;
            for (s, b) in shift.iter_mut().zip(&tc.basis[i]) {
                *s += c * b;
            }
        }
        for p in &tc.points {
            points.push(p.iter().zip(&shift).map(|(a, b)| a + b).collect());
        }
    }
    TorusConfiguration {
        dimension: tc.dimension,
        basis: tc.basis.iter().map(|b| b.iter().map(|x| x * k as f64).collect()).collect(),
        points,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_is_unit_density() {
        for dim in [Dimension::Two, Dimension::Three] {
            for l in Lattice::catalog(dim) {
                assert!((l.density() - 1.0).abs() < 1e-14, "{}", l.name);
            }
        }
    }

    #[test]
    fn epstein_square_at_two() {
        // 4 zeta(2) beta(2)
        let z = epstein_zeta(&Lattice::square(), 2.0, 1e-15).unwrap();
        assert!((z - 6.026_812_039_691_94).abs() < 1e-12, "{z}");
    }
}
