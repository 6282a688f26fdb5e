//! Uniform Cartesian grids, multilinear interpolation and free-space potentials.

use std::sync::OnceLock;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{kernel_r, Dimension};
use crate::par;
use crate::quad;

/// Nodes `lo + h * (i_0, .., i_{d-1})` with `0 <= i_k < shape[k]`; last axis fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: Dimension,
    pub lo: Vec<f64>,
    pub h: f64,
    pub shape: Vec<usize>,
}

impl Grid {
    pub fn new(dim: Dimension, lo: Vec<f64>, h: f64, shape: Vec<usize>) -> Result<Self> {
        let d = dim.get();
        if lo.len() != d || shape.len() != d {
            return Err(Error::InvalidInput(format!("grid needs {d} lower corners and {d} sizes")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidInput(format!("grid spacing must be positive, got {h}")));
        }
        if shape.iter().any(|&s| s < 3) {
            return Err(Error::InvalidInput("grid needs at least 3 nodes per axis".into()));
        }
        Ok(Self { dim, lo, h, shape })
    }

    /// Cube centered at `center` with half-width at least `half_width`; `center` is a node.
    pub fn cube(dim: Dimension, center: &[f64], half_width: f64, h: f64) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(Error::InvalidInput(format!("grid half-width must be positive, got {half_width}")));
        }
        if center.len() != dim.get() {
            return Err(Error::InvalidInput("grid center has the wrong dimension".into()));
        }
        let m = (half_width / h - 1e-9).ceil().max(1.0) as usize;
        let lo = center.iter().map(|c| c - m as f64 * h).collect();
        Self::new(dim, lo, h, vec![2 * m + 1; dim.get()])
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.dim.get()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.d() as i32)
    }

    /// Length of the last axis: nodes with equal leading indices are contiguous.
    #[inline]
    pub fn row_len(&self) -> usize {
        *self.shape.last().expect("non-empty shape")
    }

    #[inline]
    pub fn multi_index(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for k in (0..self.d()).rev() {
            out[k] = idx % self.shape[k];
            idx /= self.shape[k];
        }
        out
    }

    #[inline]
    pub fn linear(&self, m: &[usize]) -> usize {
        let mut idx = 0;
        for k in 0..self.d() {
            idx = idx * self.shape[k] + m[k];
        }
        idx
    }

    /// Coordinates of a node; unused trailing entries are zero.
    #[inline]
    pub fn node(&self, idx: usize) -> [f64; 3] {
        let m = self.multi_index(idx);
        let mut x = [0.0; 3];
        for k in 0..self.d() {
            x[k] = self.lo[k] + self.h * m[k] as f64;
        }
        x
    }

    #[inline]
    pub fn is_boundary(&self, idx: usize) -> bool {
        let m = self.multi_index(idx);
        (0..self.d()).any(|k| m[k] == 0 || m[k] + 1 == self.shape[k])
    }

    pub fn hi(&self) -> Vec<f64> {
        (0..self.d()).map(|k| self.lo[k] + self.h * (self.shape[k] - 1) as f64).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        let hi = self.hi();
        (0..self.d()).map(|k| 0.5 * (self.lo[k] + hi[k])).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let hi = self.hi();
        (0..self.d()).all(|k| x[k] >= self.lo[k] && x[k] <= hi[k])
    }

    /// Multilinear interpolation of node values; `None` outside the grid.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> Option<f64> {
        let d = self.d();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for k in 0..d {
            let t = (x[k] - self.lo[k]) / self.h;
            if !(t >= 0.0 && t <= (self.shape[k] - 1) as f64) {
                return None;
            }
            let i = (t.floor() as usize).min(self.shape[k] - 2);
            base[k] = i;
            frac[k] = t - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut m = [0usize; 3];
            for k in 0..d {
                let bit = (corner >> k) & 1;
                m[k] = base[k] + bit;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            if w != 0.0 {
                acc += w * values[self.linear(&m[..d])];
            }
        }
        Some(acc)
    }

    /// Same box (or slightly larger) with spacing multiplied by `factor`.
    pub fn coarsened(&self, factor: f64) -> Result<Self> {
        let h = self.h * factor;
        let c = self.center();
        let hi = self.hi();
        let half = (0..self.d()).map(|k| 0.5 * (hi[k] - self.lo[k])).fold(0.0, f64::max);
        Self::cube(self.dim, &c, half, h)
    }

    /// Values of `f` at every node, computed in parallel.
    pub fn sample<F: Fn(&[f64]) -> f64 + Sync + Send>(&self, f: F) -> Vec<f64> {
        let d = self.d();
        par::map_range(self.len(), |i| {
            let x = self.node(i);
            f(&x[..d])
        })
    }

    /// `sum_i values_i * h^d`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        par::sum(values.iter().copied()) * self.cell_volume()
    }
}

/// Mean of `w(x - y)` over two independent uniform points of the unit cell.
pub fn unit_cell_self_interaction(dim: Dimension) -> f64 {
    static K2: OnceLock<f64> = OnceLock::new();
    static K3: OnceLock<f64> = OnceLock::new();
    match dim {
        Dimension::Two => *K2.get_or_init(|| {
            // int_0^1 (1-v) log(u^2+v^2) dv in closed form
            let inner = |u: f64| {
                let u2 = u * u;
                let i1 = (1.0 + u2).ln() - 2.0 + if u > 0.0 { 2.0 * u * (1.0 / u).atan() } else { 0.0 };
                let i2 = 0.5 * ((1.0 + u2) * (1.0 + u2).ln() - if u > 0.0 { u2 * u2.ln() } else { 0.0 } - 1.0);
                i1 - i2
            };
            -2.0 * quad::integrate(|u| (1.0 - u) * inner(u), 0.0, 1.0, 1e-15)
        }),
        Dimension::Three => *K3.get_or_init(|| {
            // int_0^1 (1-w)/sqrt(a^2+w^2) dw in closed form
            let j = |a: f64| (1.0 / a).asinh() - ((1.0 + a * a).sqrt() - a);
            let outer = |u: f64| {
                (1.0 - u) * quad::integrate(|v| (1.0 - v) * j((u * u + v * v).sqrt()), 0.0, 1.0, 1e-15)
            };
            8.0 * quad::integrate(outer, 0.0, 1.0, 1e-14)
        }),
    }
}

/// Mean of `w(x - y)` over pairs of points in a cell of side `h`.
pub fn cell_self_interaction(dim: Dimension, h: f64) -> f64 {
    match dim {
        Dimension::Two => unit_cell_self_interaction(dim) - h.ln(),
        Dimension::Three => unit_cell_self_interaction(dim) / h,
    }
}

fn fft_axis(data: &mut [Complex64], shape: &[usize], axis: usize, fft: &std::sync::Arc<dyn Fft<f64>>) {
    let len = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    if stride == 1 {
        par::for_each_chunk_mut(data, len, |_, line| fft.process(line));
        return;
    }
    // gather lines of this axis, transform, scatter back
    let block = len * stride;
    par::for_each_chunk_mut(data, block, |_, blk| {
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for s in 0..stride {
            for t in 0..len {
                buf[t] = blk[t * stride + s];
            }
            fft.process(&mut buf);
            for t in 0..len {
                blk[t * stride + s] = buf[t];
            }
        }
    });
}

type Plans = Vec<std::sync::Arc<dyn Fft<f64>>>;

fn plans(shape: &[usize], inverse: bool) -> Plans {
    let mut planner = FftPlanner::<f64>::new();
    shape
        .iter()
        .map(|&n| if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) })
        .collect()
}

fn fft_nd(data: &mut [Complex64], shape: &[usize], plans: &Plans) {
    for (axis, fft) in plans.iter().enumerate() {
        fft_axis(data, shape, axis, fft);
    }
}

/// Largest zero-padded FFT volume accepted by [`free_space_potential`].
pub const MAX_FFT_NODES: usize = 1 << 25;

/// Free-space potential `h_i = sum_j w(x_i - x_j) rho_j h^d` of a grid density.
///
/// The singular diagonal uses the exact mean self-interaction of a grid cell.
/// Zero padding to at least twice the grid size makes the cyclic convolution exact.
pub fn free_space_potential(grid: &Grid, density: &[f64]) -> Result<Vec<f64>> {
    Ok(FreeSpaceOperator::new(grid)?.apply(density))
}

/// [`free_space_potential`] with the kernel transform computed once, for repeated use on one grid.
#[derive(Clone)]
pub struct FreeSpaceOperator {
    grid: Grid,
    pshape: Vec<usize>,
    kernel_hat: Vec<Complex64>,
    forward: Plans,
    inverse: Plans,
}

impl std::fmt::Debug for FreeSpaceOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FreeSpaceOperator").field("grid", &self.grid).field("pshape", &self.pshape).finish()
    }
}

impl FreeSpaceOperator {
    pub fn new(grid: &Grid) -> Result<Self> {
        let d = grid.d();
        let pshape: Vec<usize> = grid.shape.iter().map(|&s| smooth_length(2 * s)).collect();
        let total: usize = pshape.iter().product();
        if total > MAX_FFT_NODES {
            return Err(Error::InvalidInput(format!(
                "padded FFT grid of {total} nodes exceeds the limit {MAX_FFT_NODES}; use a coarser grid"
            )));
        }
        let self_term = cell_self_interaction(grid.dim, grid.h);
        let mut kernel_hat: Vec<Complex64> = par::map_range(total, |idx| {
            let m = unpad(idx, &pshape);
            let mut r2 = 0.0;
            for k in 0..d {
                let off = if m[k] < grid.shape[k] { m[k] as f64 } else { m[k] as f64 - pshape[k] as f64 };
                r2 += off * off;
            }
            let v = if r2 == 0.0 { self_term } else { kernel_r(r2.sqrt() * grid.h, grid.dim) };
            Complex64::new(v, 0.0)
        });
        let forward = plans(&pshape, false);
        let inverse = plans(&pshape, true);
        fft_nd(&mut kernel_hat, &pshape, &forward);
        Ok(Self { grid: grid.clone(), pshape, kernel_hat, forward, inverse })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn apply(&self, density: &[f64]) -> Vec<f64> {
        let grid = &self.grid;
        let pshape = &self.pshape;
        let d = grid.d();
        let total = self.kernel_hat.len();
        let vol = grid.cell_volume();
        let mut rho: Vec<Complex64> = par::map_range(total, |idx| {
            let m = unpad(idx, pshape);
            if (0..d).all(|k| m[k] < grid.shape[k]) {
                Complex64::new(density[grid.linear(&m[..d])] * vol, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        fft_nd(&mut rho, pshape, &self.forward);
        let kern = &self.kernel_hat;
        par::for_each_chunk_mut(&mut rho, 4096, |ci, chunk| {
            for (t, z) in chunk.iter_mut().enumerate() {
                *z *= kern[ci * 4096 + t];
            }
        });
        fft_nd(&mut rho, pshape, &self.inverse);
        let scale = 1.0 / total as f64;
        par::map_range(grid.len(), |i| {
            let m = grid.multi_index(i);
            let mut idx = 0;
            for k in 0..d {
                idx = idx * pshape[k] + m[k];
            }
            rho[idx].re * scale
        })
    }
}

/// Smallest `2^a 3^b 5^c >= n`.
fn smooth_length(n: usize) -> usize {
    (n..)
        .find(|&m| {
            let mut r = m;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            r == 1
        })
        .unwrap_or(n)
}

fn unpad(idx: usize, pshape: &[usize]) -> [usize; 3] {
    let mut m = [0usize; 3];
    let mut r = idx;
    for k in (0..pshape.len()).rev() {
        m[k] = r % pshape[k];
        r /= pshape[k];
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_has_center_node() {
        let g = Grid::cube(Dimension::Two, &[0.5, -0.5], 1.0, 0.1).unwrap();
        assert_eq!(g.shape, vec![21, 21]);
        let mid = g.linear(&[10, 10]);
        let x = g.node(mid);
        assert!((x[0] - 0.5).abs() < 1e-14 && (x[1] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn interpolation_reproduces_affine_functions() {
        let g = Grid::cube(Dimension::Three, &[0.0, 0.0, 0.0], 1.0, 0.25).unwrap();
        let vals = g.sample(|x| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[2]);
        let p = [0.13, -0.71, 0.42];
        let got = g.interpolate(&vals, &p).unwrap();
        assert!((got - (1.0 + 0.26 + 0.71 + 0.21)).abs() < 1e-12);
        assert!(g.interpolate(&vals, &[2.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn free_space_potential_matches_direct_sum() {
        let g = Grid::cube(Dimension::Two, &[0.0, 0.0], 0.5, 0.1).unwrap();
        let rho = g.sample(|x| (1.0 - x[0] * x[0] - x[1] * x[1]).max(0.0));
        let pot = free_space_potential(&g, &rho).unwrap();
        let vol = g.cell_volume();
        let self_term = cell_self_interaction(g.dim, g.h);
        for i in [0usize, 17, 60] {
            let xi = g.node(i);
            let mut s = 0.0;
            for j in 0..g.len() {
                let xj = g.node(j);
                let r = ((xi[0] - xj[0]).powi(2) + (xi[1] - xj[1]).powi(2)).sqrt();
                s += rho[j] * vol * if i == j { self_term } else { -r.ln() };
            }
            assert!((s - pot[i]).abs() < 1e-12, "node {i}: {s} vs {}", pot[i]);
        }
    }
}
