//! Blow-up, smeared field energies, splitting of `H_n` and the renormalized energy of
//! finite configurations.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{mf_energy, EquilibriumMeasure};
use crate::error::{Error, Result};
use crate::kernel::{
    dist, hamiltonian, self_energy, smeared_pair_energy, Configuration, Dimension, SpaceConstants,
};
use crate::par;
use crate::potential::Potential;
use crate::quad;

/// A configuration rescaled by `n^{1/d}` so that the mean spacing is of order one.
#[derive(Clone, Debug, PartialEq)]
pub struct BlownUpConfiguration {
    pub n: usize,
    pub factor: f64,
    pub points: Configuration,
    source: Configuration,
}

impl BlownUpConfiguration {
    pub fn source(&self) -> &Configuration {
        &self.source
    }

    /// Scales the blown-up points back by `n^{-1/d}`.
    pub fn blow_down(&self) -> Configuration {
        self.points.scaled(1.0 / self.factor)
    }
}

pub fn blow_up(config: &Configuration) -> BlownUpConfiguration {
    let n = config.n();
    let factor = (n as f64).powf(1.0 / config.dim().get() as f64);
    BlownUpConfiguration { n, factor, points: config.scaled(factor), source: config.clone() }
}

/// `D(mu0, delta_{x_i}^(ell))` for every point.
pub fn cross_terms(config: &Configuration, mu0: &EquilibriumMeasure, ell: f64) -> Vec<f64> {
    par::map_range(config.n(), |i| mu0.smeared_cross(config.point(i), ell))
}

/// `sum_{i != j} D(delta_{x_i}^(ell), delta_{x_j}^(ell))` over ordered pairs.
pub fn smeared_pair_sum(config: &Configuration, ell: f64) -> f64 {
    let n = config.n();
    let dim = config.dim();
    let rows = par::map_range(n, |i| {
        let xi = config.point(i);
        par::sum((i + 1..n).map(|j| smeared_pair_energy(xi, config.point(j), ell, dim)))
    });
    2.0 * par::sum(rows)
}

/// Pairs closer than `2 ell`, in lexicographic order.
pub fn overlapping_pairs(config: &Configuration, ell: f64) -> Vec<(usize, usize)> {
    let n = config.n();
    let rows = par::map_range(n, |i| {
        let xi = config.point(i);
        (i + 1..n).filter(|&j| dist(xi, config.point(j)) < 2.0 * ell).map(|j| (i, j)).collect::<Vec<_>>()
    });
    rows.into_iter().flatten().collect()
}

fn field_energy_from(config: &Configuration, mu0: &EquilibriumMeasure, ell: f64, cross: &[f64]) -> f64 {
    let n = config.n() as f64;
    let c_d = SpaceConstants::of(config.dim()).c_d;
    let d00 = mu0.self_energy();
    let pairs = smeared_pair_sum(config, ell);
    let selfs = n * self_energy(ell, config.dim());
    c_d * (n * n * d00 - 2.0 * n * par::sum(cross.iter().copied()) + pairs + selfs)
}

/// `int |grad h_{n,ell}|^2 = c_d D(n mu0 - sum_i delta_{x_i}^(ell), same)`.
pub fn smeared_field_energy(config: &Configuration, mu0: &EquilibriumMeasure, ell: f64) -> Result<f64> {
    if !(ell > 0.0 && ell.is_finite()) {
        return Err(Error::InvalidInput(format!("smearing length must be positive, got {ell}")));
    }
    check_dims(config, mu0)?;
    let cross = cross_terms(config, mu0, ell);
    Ok(field_energy_from(config, mu0, ell, &cross))
}

/// `2n sum_i (D(mu0, delta_{x_i}^(ell)) - h_mu0(x_i))`; non-positive by superharmonicity of `h_mu0`.
pub fn lieb_term(config: &Configuration, mu0: &EquilibriumMeasure, ell: f64) -> f64 {
    let cross = cross_terms(config, mu0, ell);
    lieb_from(config, mu0, &cross)
}

fn lieb_from(config: &Configuration, mu0: &EquilibriumMeasure, cross: &[f64]) -> f64 {
    let n = config.n() as f64;
    2.0 * n * par::sum(config.points().zip(cross).map(|(x, c)| c - mu0.potential_at(x)))
}

fn check_dims(config: &Configuration, mu0: &EquilibriumMeasure) -> Result<()> {
    if config.dim() != mu0.dim() {
        return Err(Error::InvalidInput(format!(
            "configuration is {}-dimensional but the measure is {}-dimensional",
            config.dim(),
            mu0.dim()
        )));
    }
    Ok(())
}

/// Every term of the smeared-charge splitting of `H_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingReport {
    pub dimension: Dimension,
    pub n: usize,
    pub eta: f64,
    pub ell: f64,
    /// `H_n`, infinite when two points coincide.
    pub hamiltonian: f64,
    /// `n^2 E[mu0]`.
    pub mean_field_term: f64,
    /// `(n/2) log n` in d = 2, zero in d = 3.
    pub log_term: f64,
    /// `2n sum_i zeta(x_i)`.
    pub zeta_term: f64,
    /// `int |grad h_{n,ell}|^2`.
    pub smeared_energy: f64,
    /// `n (kappa_d w(ell) + gamma_2 1_{d=2})`.
    pub renormalization: f64,
    /// Exact smearing correction of the potential terms (non-positive).
    pub lieb_term: f64,
    /// `2 C_L eta^2 n^{2-2/d}`, the bound on `|lieb_term|`.
    pub lieb_bound: f64,
    pub lieb_constant: f64,
    /// `mean_field + zeta + (smeared - renormalization)/c_d + lieb`: equals `H_n` without overlaps.
    pub splitting_sum: f64,
    /// Right side of the splitting lower bound (with `-lieb_bound` in place of `lieb_term`).
    pub lower_bound: f64,
    /// `(1/c_d)(n^{2/d-2} smeared - (kappa_d w(eta) + gamma_2 1_{d=2}))`.
    pub j_n: f64,
    /// `(H_n - n^2 E + (n/2) log n 1_{d=2}) / n^{2-2/d}`.
    pub next_order: f64,
    /// Minimal separation at least `2 ell`.
    pub equality_flag: bool,
    /// `H_n - splitting_sum`.
    pub identity_gap: f64,
    /// `|identity_gap| / |H_n|`.
    pub relative_gap: f64,
    pub overlapping_pairs: Vec<(usize, usize)>,
}

impl SplittingReport {
    /// `H_n >= lower_bound` (trivially true for coincident points).
    pub fn inequality_holds(&self) -> bool {
        self.hamiltonian >= self.lower_bound
    }
}

/// Smeared-charge splitting at blown-up scale `eta`.
pub fn onsager_split(
    config: &Configuration,
    mu0: &EquilibriumMeasure,
    v: &dyn Potential,
    eta: f64,
) -> Result<SplittingReport> {
    check_dims(config, mu0)?;
    let dim = config.dim();
    let n = config.n();
    let nf = n as f64;
    let d = dim.get() as f64;
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidInput(format!("eta must lie in (0, 1], got {eta}")));
    }
    let ell = eta * nf.powf(-1.0 / d);
    let consts = SpaceConstants::of(dim);
    let h = match hamiltonian(config, v) {
        Ok(h) => h,
        Err(Error::CoincidentPoints { .. }) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let e0 = mf_energy(mu0, v)?;
    let mean_field_term = nf * nf * e0;
    let log_term = match dim {
        Dimension::Two => 0.5 * nf * nf.ln(),
        Dimension::Three => 0.0,
    };
    let zeta_term = 2.0 * nf * par::sum(config.points().map(|x| mu0.zeta_at(x, v)));
    let cross = cross_terms(config, mu0, ell);
    let smeared_energy = field_energy_from(config, mu0, ell, &cross);
    let renormalization = nf * consts.renormalization(dim, ell);
    let lieb = lieb_from(config, mu0, &cross);
    let lieb_constant = mu0.lieb_constant();
    let scale = nf.powf(2.0 - 2.0 / d);
    let lieb_bound = 2.0 * lieb_constant * eta * eta * scale;
    let field = (smeared_energy - renormalization) / consts.c_d;
    let splitting_sum = mean_field_term + zeta_term + field + lieb;
    let lower_bound = mean_field_term + zeta_term + field - lieb_bound;
    let j_n = (nf.powf(2.0 / d - 2.0) * smeared_energy - consts.renormalization(dim, eta)) / consts.c_d;
    let next_order = (h - mean_field_term + log_term) / scale;
    let overlaps = overlapping_pairs(config, ell);
    let identity_gap = h - splitting_sum;
    Ok(SplittingReport {
        dimension: dim,
        n,
        eta,
        ell,
        hamiltonian: h,
        mean_field_term,
        log_term,
        zeta_term,
        smeared_energy,
        renormalization,
        lieb_term: lieb,
        lieb_bound,
        lieb_constant,
        splitting_sum,
        lower_bound,
        j_n,
        next_order,
        equality_flag: overlaps.is_empty(),
        identity_gap,
        relative_gap: identity_gap.abs() / h.abs(),
        overlapping_pairs: overlaps,
    })
}

/// `(H_n - n^2 E[mu0] + (n/2) log n 1_{d=2}) / n^{2-2/d}`.
pub fn next_order_energy(config: &Configuration, mu0: &EquilibriumMeasure, v: &dyn Potential) -> Result<f64> {
    check_dims(config, mu0)?;
    let nf = config.n() as f64;
    let d = config.dim().get() as f64;
    let h = hamiltonian(config, v)?;
    let e0 = mf_energy(mu0, v)?;
    let log_term = match config.dim() {
        Dimension::Two => 0.5 * nf * nf.ln(),
        Dimension::Three => 0.0,
    };
    Ok((h - nf * nf * e0 + log_term) / nf.powf(2.0 - 2.0 / d))
}

/// Lower bound on [`next_order_energy`] valid for every configuration:
/// `max_{eta in (0,1]} -(kappa_d w(eta) + gamma_2)/c_d - 2 C_L eta^2`.
pub fn next_order_lower_bound(mu0: &EquilibriumMeasure) -> f64 {
    let dim = mu0.dim();
    let consts = SpaceConstants::of(dim);
    let cl = mu0.lieb_constant();
    let f = |eta: f64| -consts.renormalization(dim, eta) / consts.c_d - 2.0 * cl * eta * eta;
    golden_max(f, 1e-6, 1.0)
}

pub(crate) fn golden_max<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    golden_argmax(f, a, b).1
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`; returns `(x, f(x))`.
pub(crate) fn golden_argmax<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> (f64, f64) {
    golden_argmax_tol(f, a, b, 1e-12)
}

/// Golden-section search stopping once the bracket is below `tol (1 + |a|)`.
pub(crate) fn golden_argmax_tol<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < tol * (1.0 + a.abs()) {
            break;
        }
    }
    let (fa, fb) = (f(a), f(b));
    [(a, fa), (b, fb), (c, fc), (d, fd)]
        .into_iter()
        .fold((a, f64::NEG_INFINITY), |best, cand| if cand.1 > best.1 { cand } else { best })
}

/// Region over which the renormalized energy of a finite configuration is taken.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// All of space, background `mu0(n^{-1/d} x)` of mass `n`; the configuration is macroscopic.
    Whole,
    /// Neutral box: the configuration is at blown-up scale and the background is uniform
    /// on the box with total mass equal to the number of points.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

/// Ladder settings for the `eta -> 0` extrapolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LadderOptions {
    /// Largest smearing radius at blown-up scale; points must be `2 eta0` apart.
    pub eta0: f64,
    /// Number of halvings (at least 2).
    pub levels: usize,
}

impl Default for LadderOptions {
    fn default() -> Self {
        Self { eta0: 0.1, levels: 3 }
    }
}

/// An extrapolated renormalized energy with its ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WEstimate {
    pub value: f64,
    /// Difference between the last two Richardson values.
    pub tolerance: f64,
    pub ladder: Vec<(f64, f64)>,
}

/// Renormalized energy `W` of the electric field of a finite configuration, as the
/// Richardson-extrapolated `eta -> 0` limit of `int |E_eta|^2 - #points (kappa_d w(eta) + gamma_2)`.
pub fn renormalized_w_of_config(config: &Configuration, mu0: &EquilibriumMeasure, region: &Region) -> Result<WEstimate> {
    renormalized_w_of_config_with(config, mu0, region, &LadderOptions::default())
}

/// [`renormalized_w_of_config`] with explicit ladder settings.
pub fn renormalized_w_of_config_with(
    config: &Configuration,
    mu0: &EquilibriumMeasure,
    region: &Region,
    opts: &LadderOptions,
) -> Result<WEstimate> {
    if opts.levels < 2 || !(opts.eta0 > 0.0) {
        return Err(Error::InvalidInput("ladder needs eta0 > 0 and at least two levels".into()));
    }
    let dim = config.dim();
    let consts = SpaceConstants::of(dim);
    let nf = config.n() as f64;
    let etas: Vec<f64> = (0..=opts.levels).map(|k| opts.eta0 * 0.5f64.powi(k as i32)).collect();
    let values: Vec<f64> = match region {
        Region::Whole => {
            check_dims(config, mu0)?;
            let blown = blow_up(config);
            check_separation(&blown.points, opts.eta0)?;
            let scale = nf.powf(2.0 / dim.get() as f64 - 1.0);
            etas.iter()
                .map(|&eta| {
                    let ell = eta / blown.factor;
                    let s = smeared_field_energy(config, mu0, ell)?;
                    Ok(scale * s - nf * consts.renormalization(dim, eta))
                })
                .collect::<Result<_>>()?
        }
        Region::Box { lo, hi } => {
            let d = dim.get();
            if lo.len() != d || hi.len() != d || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                return Err(Error::InvalidInput("box corners must satisfy lo < hi in every coordinate".into()));
            }
            check_separation(config, opts.eta0)?;
            for (i, x) in config.points().enumerate() {
                let gap = (0..d).map(|k| (x[k] - lo[k]).min(hi[k] - x[k])).fold(f64::INFINITY, f64::min);
                if gap < opts.eta0 {
                    return Err(Error::Separation { pairs: vec![(i, i)] });
                }
            }
            let vol: f64 = (0..d).map(|k| hi[k] - lo[k]).product();
            let m = nf / vol;
            let dkk = box_self_energy(lo, hi, dim);
            let phis: Vec<f64> = par::map_range(config.n(), |i| box_potential(lo, hi, config.point(i), dim));
            let sum_phi = par::sum(phis.iter().copied());
            etas.iter()
                .map(|&eta| {
                    // the box potential has Laplacian -c_d inside, so its ball mean is exact
                    let ball = sum_phi - nf * consts.c_d * eta * eta / (2.0 * (d as f64 + 2.0));
                    let pairs = smeared_pair_sum(config, eta);
                    let dd = m * m * dkk - 2.0 * m * ball + pairs + nf * self_energy(eta, dim);
                    Ok(consts.c_d * dd - nf * consts.renormalization(dim, eta))
                })
                .collect::<Result<_>>()?
        }
    };
    let rich: Vec<f64> = values.windows(2).map(|w| (4.0 * w[1] - w[0]) / 3.0).collect();
    let k = rich.len();
    Ok(WEstimate {
        value: rich[k - 1],
        tolerance: (rich[k - 1] - rich[k - 2]).abs(),
        ladder: etas.into_iter().zip(values).collect(),
    })
}

fn check_separation(config: &Configuration, eta0: f64) -> Result<()> {
    let pairs = overlapping_pairs(config, eta0);
    if pairs.is_empty() {
        Ok(())
    } else {
        Err(Error::Separation { pairs })
    }
}

fn rect_log_antiderivative(a: f64, b: f64) -> f64 {
    // int_0^a int_0^b ln(u^2 + v^2) dv du, odd in each argument
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    let s = a.signum() * b.signum();
    let (a, b) = (a.abs(), b.abs());
    s * (a * b * (a * a + b * b).ln() - 3.0 * a * b + a * a * (b / a).atan() + b * b * (a / b).atan())
}

fn box_inverse_antiderivative(a: f64, b: f64, c: f64) -> f64 {
    // int_0^a int_0^b int_0^c 1/r, odd in each argument
    if a == 0.0 || b == 0.0 || c == 0.0 {
        return 0.0;
    }
    let s = a.signum() * b.signum() * c.signum();
    let (a, b, c) = (a.abs(), b.abs(), c.abs());
    let p = |a: f64, b: f64, c: f64| -> f64 {
        let r = (a * a + b * b + c * c).sqrt();
        let lg = |coef: f64, x: f64| if coef == 0.0 { 0.0 } else { coef * (x + r).ln() };
        let at = |x: f64, y: f64, z: f64| if x == 0.0 { 0.0 } else { 0.5 * x * x * (y * z / (x * r)).atan() };
        lg(b * c, a) + lg(a * c, b) + lg(a * b, c) - at(a, b, c) - at(b, a, c) - at(c, a, b)
    };
    let mut acc = 0.0;
    for (ia, xa) in [(1.0, a), (-1.0, 0.0)] {
        for (ib, xb) in [(1.0, b), (-1.0, 0.0)] {
            for (ic, xc) in [(1.0, c), (-1.0, 0.0)] {
                acc += ia * ib * ic * p(xa, xb, xc);
            }
        }
    }
    s * acc
}

/// `int_K w(x - y) dy` for the axis-aligned box `K = [lo, hi]` (unit density).
pub fn box_potential(lo: &[f64], hi: &[f64], x: &[f64], dim: Dimension) -> f64 {
    match dim {
        Dimension::Two => {
            let f = rect_log_antiderivative;
            let (a0, a1) = (lo[0] - x[0], hi[0] - x[0]);
            let (b0, b1) = (lo[1] - x[1], hi[1] - x[1]);
            -0.5 * (f(a1, b1) - f(a0, b1) - f(a1, b0) + f(a0, b0))
        }
        Dimension::Three => {
            let mut acc = 0.0;
            for (sa, a) in [(1.0, hi[0] - x[0]), (-1.0, lo[0] - x[0])] {
                for (sb, b) in [(1.0, hi[1] - x[1]), (-1.0, lo[1] - x[1])] {
                    for (sc, c) in [(1.0, hi[2] - x[2]), (-1.0, lo[2] - x[2])] {
                        acc += sa * sb * sc * box_inverse_antiderivative(a, b, c);
                    }
                }
            }
            acc
        }
    }
}

/// `int_K int_K w(x - y) dx dy` (unit density).
pub fn box_self_energy(lo: &[f64], hi: &[f64], dim: Dimension) -> f64 {
    let d = dim.get();
    // the potential is smooth inside the box with mild edge singularities: nested tanh-sinh
    let tol = 1e-12;
    match d {
        2 => quad::integrate(
            |x0| quad::integrate(|x1| box_potential(lo, hi, &[x0, x1], dim), lo[1], hi[1], tol),
            lo[0],
            hi[0],
            tol,
        ),
        _ => {
            let (nodes, weights) = quad::gauss_legendre_on(24, lo[0], hi[0]);
            let rows = par::map_range(nodes.len(), |k| {
                let x0 = nodes[k];
                weights[k]
                    * quad::integrate(
                        |x1| quad::integrate(|x2| box_potential(lo, hi, &[x0, x1, x2], dim), lo[2], hi[2], 1e-10),
                        lo[1],
                        hi[1],
                        1e-10,
                    )
            });
            par::sum(rows)
        }
    }
}

/// `D(mu0, delta_x)` shortcut: `h_mu0(x)`, accurate to `C_L ell^2`.
pub fn cross_term_shortcut(mu0: &EquilibriumMeasure, x: &[f64]) -> f64 {
    mu0.potential_at(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blow_up_examples() {
        let c = Configuration::from_points(Dimension::Two, &[vec![1.0, 0.0]]).unwrap();
        assert_eq!(blow_up(&c).points, c);
        let pts: Vec<Vec<f64>> = (0..16).map(|k| vec![1.0 + k as f64, 0.0]).collect();
        let c = Configuration::from_points(Dimension::Two, &pts).unwrap();
        assert_eq!(blow_up(&c).points.point(0), &[4.0, 0.0]);
        let pts: Vec<Vec<f64>> = (0..8).map(|k| vec![1.0, 1.0, 1.0 + k as f64]).collect();
        let c = Configuration::from_points(Dimension::Three, &pts).unwrap();
        let b = blow_up(&c);
        assert!((b.points.point(0)[0] - 2.0).abs() < 1e-15);
        let back = b.blow_down();
        for (x, y) in back.coords().iter().zip(c.coords()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn box_potentials_match_brute_force() {
        // midpoint sums with the singular cell skipped converge slowly, so compare away from the box
        let lo = [0.0, 0.0];
        let hi = [1.0, 2.0];
        let x = [2.5, -0.7];
        let m = 400;
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..2 * m {
                let y = [(i as f64 + 0.5) / m as f64, (j as f64 + 0.5) / m as f64];
                s -= dist(&x, &y).ln();
            }
        }
        s /= (m * m) as f64;
        assert!((box_potential(&lo, &hi, &x, Dimension::Two) - s).abs() < 1e-5);
        let lo = [0.0, 0.0, 0.0];
        let hi = [1.0, 1.0, 1.0];
        let x = [1.7, 0.3, -0.4];
        let m = 60;
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let y = [(i as f64 + 0.5) / m as f64, (j as f64 + 0.5) / m as f64, (k as f64 + 0.5) / m as f64];
                    s += 1.0 / dist(&x, &y);
                }
            }
        }
        s /= (m * m * m) as f64;
        assert!((box_potential(&lo, &hi, &x, Dimension::Three) - s).abs() < 1e-5);
    }

    #[test]
    fn box_self_energy_of_unit_cells() {
        let k2 = crate::grid::unit_cell_self_interaction(Dimension::Two);
        let k3 = crate::grid::unit_cell_self_interaction(Dimension::Three);
        assert!((box_self_energy(&[0.0, 0.0], &[1.0, 1.0], Dimension::Two) - k2).abs() < 1e-10);
        assert!((box_self_energy(&[0.0; 3], &[1.0; 3], Dimension::Three) - k3).abs() < 1e-8);
    }
}
