//! Charge discrepancies, density profiles, bond order and density checks.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumMeasure;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::jellium::{Lattice, TorusConfiguration};
use crate::kernel::{dist, dist2, Configuration, Dimension};
use crate::sampler::MeasureSampler;
use crate::{par, quad};

/// Samples below this count get a wide-interval warning in tail tables.
pub const MIN_TAIL_SAMPLES: usize = 1000;

/// Two-sided 95% normal quantile used for Wilson intervals.
const Z95: f64 = 1.959_963_984_540_054;

/// `#{i : |x_i - x| <= R} - n mu0(B(x, R))`.
pub fn charge_discrepancy(config: &Configuration, mu0: &EquilibriumMeasure, x: &[f64], r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidInput(format!("radius must be positive, got {r}")));
    }
    let r2 = r * r;
    let count = config.points().filter(|p| dist2(p, x) <= r2).count() as f64;
    Ok(count - config.n() as f64 * mu0.mass_in_ball(x, r))
}

/// Microscopic radius `n^{-1/(d+2)}`.
pub fn micro_radius(n: usize, dim: Dimension) -> f64 {
    (n as f64).powf(-1.0 / (dim.get() as f64 + 2.0))
}

/// Whether a radius is read at the microscopic or the macroscopic scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Micro,
    Macro,
}

impl Scale {
    /// Micro when `R <= 2 n^{-1/(d+2)}`.
    pub fn of(r: f64, n: usize, dim: Dimension) -> Self {
        if r <= 2.0 * micro_radius(n, dim) {
            Self::Micro
        } else {
            Self::Macro
        }
    }
}

/// One evaluation of the discrepancy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluctuationSample {
    pub center: Vec<f64>,
    pub radius: f64,
    pub value: f64,
    pub scale: Scale,
}

/// Wilson score interval for `k` successes out of `n` at 95%.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// One row of a tail table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub radius: f64,
    pub scale: Scale,
    pub lambda: f64,
    /// `lambda n R^d`.
    pub threshold: f64,
    pub exceed: usize,
    pub total: usize,
    pub probability: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Empirical `P(|D(x, R)| >= lambda n R^d)` over samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailTable {
    pub rows: Vec<TailRow>,
    /// Set when fewer than [`MIN_TAIL_SAMPLES`] samples were supplied.
    pub wide_intervals: bool,
    /// Every discrepancy, sample-major then radius.
    pub samples: Vec<FluctuationSample>,
}

/// A center drawn from `mu0` whose ball of radius `r` stays in the support.
fn bulk_center(sampler: &MeasureSampler, mu0: &EquilibriumMeasure, r: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let d = mu0.dim().get();
    for _ in 0..10_000 {
        let x = sampler.draw(rng);
        let ok = (0..d).all(|k| {
            [-1.0, 1.0].iter().all(|s| {
                let mut y = x.clone();
                y[k] += s * r;
                mu0.density_at(&y) > 0.0
            })
        });
        if ok {
            return Ok(x);
        }
    }
    Err(Error::InvalidInput(format!("no ball of radius {r} fits inside the support")))
}

/// Tail probabilities of the discrepancy at one random bulk center per sample and radius.
///
/// Centers are drawn from `mu0` conditioned on the ball lying in the support,
/// with a generator seeded by `seed`; Wilson intervals treat samples as independent.
pub fn fluctuation_tails(
    samples: &[Configuration],
    mu0: &EquilibriumMeasure,
    radii: &[f64],
    lambdas: &[f64],
    seed: u64,
) -> Result<TailTable> {
    let Some(first) = samples.first() else {
        return Err(Error::InvalidInput("no samples".into()));
    };
    let n = first.n();
    let dim = first.dim();
    let d = dim.get() as i32;
    let sampler = MeasureSampler::new(mu0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Vec::with_capacity(samples.len() * radii.len());
    for _ in samples {
        for &r in radii {
            centers.push(bulk_center(&sampler, mu0, r, &mut rng)?);
        }
    }
    let values = par::map_range(centers.len(), |k| {
        let (s, j) = (k / radii.len(), k % radii.len());
        charge_discrepancy(&samples[s], mu0, &centers[k], radii[j])
    });
    let mut fl = Vec::with_capacity(values.len());
    for (k, v) in values.into_iter().enumerate() {
        let r = radii[k % radii.len()];
        fl.push(FluctuationSample { center: centers[k].clone(), radius: r, value: v?, scale: Scale::of(r, n, dim) });
    }
    let mut rows = Vec::new();
    for (j, &r) in radii.iter().enumerate() {
        for &lambda in lambdas {
            let threshold = lambda * n as f64 * r.powi(d);
            let exceed = fl.iter().skip(j).step_by(radii.len()).filter(|s| s.value.abs() >= threshold).count();
            let total = samples.len();
            let (lower, upper) = wilson_interval(exceed, total);
            rows.push(TailRow {
                radius: r,
                scale: Scale::of(r, n, dim),
                lambda,
                threshold,
                exceed,
                total,
                probability: exceed as f64 / total as f64,
                lower,
                upper,
            });
        }
    }
    Ok(TailTable { rows, wide_intervals: samples.len() < MIN_TAIL_SAMPLES, samples: fl })
}

/// Smooth bump `(1 - |x - c|^2 / s^2)^2` on `B(c, s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub scale: f64,
}

impl Bump {
    pub fn value(&self, x: &[f64]) -> f64 {
        let t = 1.0 - dist2(x, &self.center) / (self.scale * self.scale);
        if t > 0.0 {
            t * t
        } else {
            0.0
        }
    }

    /// `sup |grad phi| = 8 / (3 sqrt(3) s)`.
    pub fn lipschitz(&self) -> f64 {
        8.0 / (3.0 * 3f64.sqrt() * self.scale)
    }

    /// `int phi dmu0` by tensor Gauss–Legendre over the bump's bounding box.
    pub fn integrate(&self, mu0: &EquilibriumMeasure) -> f64 {
        let d = self.center.len();
        let (x, w) = quad::gauss_legendre(24);
        let m = x.len();
        let total = m.pow(d as u32);
        par::sum_range(total, |k| {
            let mut rem = k;
            let mut y = vec![0.0; d];
            let mut wt = 1.0;
            for a in 0..d {
                let i = rem % m;
                rem /= m;
                y[a] = self.center[a] + self.scale * x[i];
                wt *= self.scale * w[i];
            }
            let f = self.value(&y);
            if f > 0.0 {
                wt * f * mu0.density_at(&y)
            } else {
                0.0
            }
        })
    }
}

/// Bump dictionary: three scales, each on a regular lattice of centers over the support box.
pub fn bump_dictionary(mu0: &EquilibriumMeasure) -> Vec<Bump> {
    let d = mu0.dim().get();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    match &mu0.radial {
        Some(p) => {
            for k in 0..d {
                lo[k] = p.center[k] - p.radius;
                hi[k] = p.center[k] + p.radius;
            }
        }
        None => {
            for (i, &s) in mu0.support.iter().enumerate() {
                if s {
                    let x = mu0.grid.node(i);
                    for k in 0..d {
                        lo[k] = lo[k].min(x[k]);
                        hi[k] = hi[k].max(x[k]);
                    }
                }
            }
        }
    }
    let size = (0..d).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
    let per_axis = 5usize;
    let mut out = Vec::new();
    for frac in [0.1, 0.2, 0.4] {
        let s = frac * size;
        for code in 0..per_axis.pow(d as u32) {
            let mut c = code;
            let center = (0..d)
                .map(|k| {
                    let i = c % per_axis;
                    c /= per_axis;
                    lo[k] + (hi[k] - lo[k]) * i as f64 / (per_axis - 1) as f64
                })
                .collect();
            out.push(Bump { center, scale: s });
        }
    }
    out
}

/// Per-bump discrepancy of the averaged empirical measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpGap {
    pub bump: Bump,
    /// `|int (nu_hat - n mu0) phi|`.
    pub raw: f64,
    /// `raw / (n sup |grad phi|)`.
    pub normalized: f64,
}

/// Histogram estimate of the one-point marginal against `mu0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityProfile {
    pub grid: Grid,
    /// Empirical density per node, normalized to mass one.
    pub empirical: Vec<f64>,
    /// Cell averages of `mu0`.
    pub reference: Vec<f64>,
    pub l1: f64,
    /// `max_phi |int (nu_hat - n mu0) phi| / (n sup |grad phi|)` over the dictionary.
    pub weak_proxy: f64,
    pub gaps: Vec<BumpGap>,
    /// Points that fell outside the grid, as a fraction of all points.
    pub outside: f64,
}

/// Histogram of the points of all samples on `grid` (nearest node), L1 distance to `mu0`
/// and the bump-dictionary proxy for the weak norm.
pub fn density_profile(samples: &[Configuration], mu0: &EquilibriumMeasure, grid: &Grid) -> Result<DensityProfile> {
    let Some(first) = samples.first() else {
        return Err(Error::InvalidInput("no samples".into()));
    };
    let d = grid.d();
    let n = first.n();
    let total = (samples.len() * n) as f64;
    let mut counts = vec![0.0; grid.len()];
    let mut outside = 0usize;
    for s in samples {
        for p in s.points() {
            let mut m = [0usize; 3];
            let mut ok = true;
            for k in 0..d {
                let t = ((p[k] - grid.lo[k]) / grid.h).round();
                if t < 0.0 || t >= grid.shape[k] as f64 {
                    ok = false;
                    break;
                }
                m[k] = t as usize;
            }
            if ok {
                counts[grid.linear(&m[..d])] += 1.0;
            } else {
                outside += 1;
            }
        }
    }
    let vol = grid.cell_volume();
    let empirical: Vec<f64> = counts.iter().map(|c| c / (total * vol)).collect();
    let sub = 4usize;
    let reference = grid.sample(|x| {
        let m = sub.pow(d as u32);
        let mut acc = 0.0;
        for code in 0..m {
            let mut c = code;
            let y: Vec<f64> = (0..d)
                .map(|k| {
                    let i = c % sub;
                    c /= sub;
                    x[k] + grid.h * ((i as f64 + 0.5) / sub as f64 - 0.5)
                })
                .collect();
            acc += mu0.density_at(&y);
        }
        acc / m as f64
    });
    let l1 = par::sum(empirical.iter().zip(&reference).map(|(a, b)| (a - b).abs())) * vol
        + outside as f64 / total;
    let nf = n as f64;
    let gaps: Vec<BumpGap> = par::map_slice(&bump_dictionary(mu0), |bump| {
        let emp = samples.iter().map(|s| s.points().map(|p| bump.value(p)).sum::<f64>()).sum::<f64>()
            / samples.len() as f64;
        let raw = (emp - nf * bump.integrate(mu0)).abs();
        BumpGap { bump: bump.clone(), raw, normalized: raw / (nf * bump.lipschitz()) }
    });
    let weak_proxy = gaps.iter().map(|g| g.normalized).fold(0.0, f64::max);
    Ok(DensityProfile { grid: grid.clone(), empirical, reference, l1, weak_proxy, gaps, outside: outside as f64 / total })
}

/// Per-point bond order `|psi_6|` with the interior mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BondOrder {
    pub values: Vec<f64>,
    /// Points off the convex hull whose Voronoi cell is bounded.
    pub interior: Vec<bool>,
    pub neighbors: Vec<Vec<usize>>,
    /// Voronoi facet length shared with each neighbor; empty under the k = 6 fallback.
    pub weights: Vec<Vec<f64>>,
}

impl BondOrder {
    /// Mean over interior points within `radius` of `center`.
    pub fn bulk_mean(&self, config: &Configuration, center: &[f64], radius: f64) -> Option<f64> {
        let vals: Vec<f64> = (0..config.n())
            .filter(|&i| self.interior[i] && dist(config.point(i), center) <= radius)
            .map(|i| self.values[i])
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Mean over all interior points.
    pub fn interior_mean(&self) -> Option<f64> {
        let vals: Vec<f64> = (0..self.values.len()).filter(|&i| self.interior[i]).map(|i| self.values[i]).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

fn circumcenter(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> [f64; 2] {
    let (bx, by) = (b[0] - a[0], b[1] - a[1]);
    let (cx, cy) = (c[0] - a[0], c[1] - a[1]);
    let d = 2.0 * (bx * cy - by * cx);
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    [a[0] + (cy * b2 - by * c2) / d, a[1] + (bx * c2 - cx * b2) / d]
}

/// `|sum_j l_j e^{6 i theta_ij}| / sum_j l_j` over Delaunay neighbors, where
/// `l_j` is the length of the Voronoi facet between `i` and `j`.
///
/// Facet weights make the value continuous under the degenerate splits of a
/// square lattice. If the points admit no triangulation (all collinear), the
/// six nearest neighbors are used with equal weights and every point counts
/// as interior.
pub fn bond_order_psi6(config: &Configuration) -> Result<BondOrder> {
    if config.dim() != Dimension::Two {
        return Err(Error::InvalidInput("bond order is defined in two dimensions".into()));
    }
    let n = config.n();
    if n < 7 {
        return Err(Error::InvalidInput(format!("bond order needs at least 7 points, got {n}")));
    }
    let pts: Vec<delaunator::Point> = config.points().map(|p| delaunator::Point { x: p[0], y: p[1] }).collect();
    let tri = delaunator::triangulate(&pts);
    if tri.triangles.is_empty() {
        return Ok(knn_bond_order(config));
    }
    let xy = |i: usize| [pts[i].x, pts[i].y];
    let centers: Vec<[f64; 2]> = tri
        .triangles
        .chunks_exact(3)
        .map(|t| circumcenter(xy(t[0]), xy(t[1]), xy(t[2])))
        .collect();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in 0..tri.triangles.len() {
        let a = tri.triangles[e];
        let b = tri.triangles[if e % 3 == 2 { e - 2 } else { e + 1 }];
        let opp = tri.halfedges[e];
        let len = if opp == delaunator::EMPTY {
            f64::INFINITY
        } else {
            let (p, q) = (centers[e / 3], centers[opp / 3]);
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
        };
        adj[a].push((b, len));
        if opp == delaunator::EMPTY {
            adj[b].push((a, len));
        }
    }
    let mut on_hull = vec![false; n];
    tri.hull.iter().for_each(|&i| on_hull[i] = true);
    let mut out = BondOrder {
        values: Vec::with_capacity(n),
        interior: Vec::with_capacity(n),
        neighbors: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
    };
    for (i, mut list) in adj.into_iter().enumerate() {
        list.sort_by(|x, y| x.0.cmp(&y.0));
        list.dedup_by(|x, y| x.0 == y.0);
        let xi = config.point(i);
        let bounded = list.iter().all(|(_, l)| l.is_finite());
        let interior = !on_hull[i] && bounded && !list.is_empty();
        let total: f64 = list.iter().map(|(_, l)| l).sum();
        let value = if interior && total > 0.0 {
            let s: Complex64 = list
                .iter()
                .map(|&(j, l)| {
                    let p = config.point(j);
                    Complex64::from_polar(l, 6.0 * (p[1] - xi[1]).atan2(p[0] - xi[0]))
                })
                .sum();
            (s.norm() / total).min(1.0)
        } else {
            0.0
        };
        out.values.push(value);
        out.interior.push(interior);
        out.neighbors.push(list.iter().map(|x| x.0).collect());
        out.weights.push(list.iter().map(|x| x.1).collect());
    }
    Ok(out)
}

fn knn_bond_order(config: &Configuration) -> BondOrder {
    let n = config.n();
    let rows = par::map_range(n, |i| {
        let xi = config.point(i);
        let mut others: Vec<(f64, usize)> =
            (0..n).filter(|&j| j != i).map(|j| (dist(xi, config.point(j)), j)).collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nb: Vec<usize> = others.iter().take(6).map(|&(_, j)| j).collect();
        let s: Complex64 = nb
            .iter()
            .map(|&j| {
                let p = config.point(j);
                Complex64::from_polar(1.0, 6.0 * (p[1] - xi[1]).atan2(p[0] - xi[0]))
            })
            .sum();
        ((s.norm() / nb.len() as f64).min(1.0), nb)
    });
    let (values, neighbors): (Vec<f64>, Vec<Vec<usize>>) = rows.into_iter().unzip();
    BondOrder { values, interior: vec![true; n], neighbors, weights: vec![Vec::new(); n] }
}

/// One rung of [`period_density_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityRung {
    pub half_width: f64,
    pub count: usize,
    pub ratio: f64,
    pub deviation: f64,
    /// `m ((2R + 2 delta)^d - (2R - 2 delta)^d) / (2R)^d` with `delta` the cell diameter.
    pub envelope: f64,
    pub within_envelope: bool,
}

/// Counting-density report for a periodic configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub density: f64,
    pub rungs: Vec<DensityRung>,
    pub converges: bool,
}

/// `nu(K_R) / |K_R|` on the half-open cubes `K_R = [-R, R)^d`.
pub fn period_density_check(tc: &TorusConfiguration, half_widths: &[f64]) -> Result<DensityReport> {
    let d = tc.dimension.get();
    let lat = Lattice::new("period", tc.dimension, tc.basis.clone())?;
    let dual = lat.dual();
    let m = tc.density();
    let cell_diam: f64 = tc.basis.iter().map(|b| b.iter().map(|x| x * x).sum::<f64>().sqrt()).sum();
    let mut rungs = Vec::with_capacity(half_widths.len());
    for &r in half_widths {
        if !(r > 0.0) {
            return Err(Error::InvalidInput(format!("half width must be positive, got {r}")));
        }
        let mut count = 0usize;
        for p in &tc.points {
            // k_i = (y - p) . b*_i ranges over the cube image
            let bounds: Vec<(i64, i64)> = (0..d)
                .map(|i| {
                    let b = &dual.basis[i];
                    let c: f64 = -b.iter().zip(p).map(|(x, y)| x * y).sum::<f64>();
                    let spread: f64 = r * b.iter().map(|x| x.abs()).sum::<f64>();
                    ((c - spread).floor() as i64 - 1, (c + spread).ceil() as i64 + 1)
                })
                .collect();
            let mut k: Vec<i64> = bounds.iter().map(|b| b.0).collect();
            loop {
                let mut y = p.clone();
                for (i, ki) in k.iter().enumerate() {
                    for a in 0..d {
                        y[a] += *ki as f64 * tc.basis[i][a];
                    }
                }
                if y.iter().all(|&c| c >= -r && c < r) {
                    count += 1;
                }
                let mut i = 0;
                while i < d {
                    k[i] += 1;
                    if k[i] <= bounds[i].1 {
                        break;
                    }
                    k[i] = bounds[i].0;
                    i += 1;
                }
                if i == d {
                    break;
                }
            }
        }
        let vol = (2.0 * r).powi(d as i32);
        let ratio = count as f64 / vol;
        let inner = (2.0 * r - 2.0 * cell_diam).max(0.0).powi(d as i32);
        let envelope = m * ((2.0 * r + 2.0 * cell_diam).powi(d as i32) - inner) / vol;
        let deviation = (ratio - m).abs();
        rungs.push(DensityRung { half_width: r, count, ratio, deviation, envelope, within_envelope: deviation <= envelope });
    }
    let converges = rungs.iter().all(|r| r.within_envelope);
    Ok(DensityReport { density: m, rungs, converges })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_interval_contains_estimate() {
        let (lo, hi) = wilson_interval(30, 100);
        assert!(lo < 0.3 && 0.3 < hi);
        assert_eq!(wilson_interval(0, 10).0, 0.0);
    }

    #[test]
    fn triangular_patch_has_unit_order() {
        let a = 1.0;
        let mut pts = Vec::new();
        for i in -5i32..=5 {
            for j in -5i32..=5 {
                pts.push(vec![a * (i as f64 + 0.5 * j as f64), a * 0.75f64.sqrt() * j as f64]);
            }
        }
        let c = Configuration::from_points(Dimension::Two, &pts).unwrap();
        let bo = bond_order_psi6(&c).unwrap();
        let mut checked = 0;
        for i in 0..c.n() {
            if bo.interior[i] {
                assert!((bo.values[i] - 1.0).abs() < 1e-12, "{}", bo.values[i]);
                checked += 1;
            }
        }
        assert!(checked > 50);
    }
}
