//! Confining one-body potentials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Dimension;

/// A confining external potential `V`.
///
/// Implementors supply the value, gradient and Laplacian. Potentials that are
/// radial about some center report it through [`Potential::radial_center`],
/// which unlocks the closed-form equilibrium solver.
pub trait Potential: Send + Sync + std::fmt::Debug {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    fn laplacian(&self, x: &[f64]) -> f64;

    /// Center of radial symmetry, if any.
    fn radial_center(&self) -> Option<&[f64]> {
        None
    }

    /// Whether `V/2 - log|x|` (d = 2) or `V` (d = 3) is known to grow to infinity.
    fn is_confining(&self, dim: Dimension) -> bool;
}

/// `V(x) = alpha |x - center|^power` with `alpha > 0` and `power >= 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerPotential {
    pub alpha: f64,
    pub power: f64,
    #[serde(default)]
    pub center: Vec<f64>,
}

impl PowerPotential {
    pub fn new(alpha: f64, power: f64, center: Vec<f64>) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidInput(format!("potential alpha must be positive, got {alpha}")));
        }
        if !(power >= 2.0 && power.is_finite()) {
            return Err(Error::InvalidInput(format!("potential power must be >= 2, got {power}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("potential center must be finite".into()));
        }
        Ok(Self { alpha, power, center })
    }

    /// `|x|^2`, centered at the origin of `R^d`.
    pub fn quadratic(dim: Dimension) -> Self {
        Self { alpha: 1.0, power: 2.0, center: vec![0.0; dim.get()] }
    }

    /// Same potential with the center moved to `center`.
    pub fn centered_at(mut self, center: &[f64]) -> Self {
        self.center = center.to_vec();
        self
    }

    /// Checks the center length against the dimension (an empty center means the origin).
    pub fn for_dimension(mut self, dim: Dimension) -> Result<Self> {
        if self.center.is_empty() {
            self.center = vec![0.0; dim.get()];
        }
        if self.center.len() != dim.get() {
            return Err(Error::InvalidInput(format!(
                "potential center has {} coordinates, expected {}",
                self.center.len(),
                dim.get()
            )));
        }
        Ok(self)
    }

    /// Value as a function of the distance to the center.
    pub fn radial_value(&self, r: f64) -> f64 {
        self.alpha * r.powf(self.power)
    }

    /// Radial derivative `dV/dr`.
    pub fn radial_derivative(&self, r: f64) -> f64 {
        self.alpha * self.power * r.powf(self.power - 1.0)
    }

    fn offset_norm(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.center.iter().chain(std::iter::repeat(&0.0)))
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            .sqrt()
    }
}

impl Potential for PowerPotential {
    fn value(&self, x: &[f64]) -> f64 {
        if self.power == 2.0 {
            let r2: f64 = x
                .iter()
                .zip(self.center.iter().chain(std::iter::repeat(&0.0)))
                .map(|(a, c)| (a - c) * (a - c))
                .sum();
            return self.alpha * r2;
        }
        self.radial_value(self.offset_norm(x))
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let r = self.offset_norm(x);
        let coeff = if self.power == 2.0 {
            2.0 * self.alpha
        } else if r == 0.0 {
            0.0
        } else {
            self.alpha * self.power * r.powf(self.power - 2.0)
        };
        for (k, o) in out.iter_mut().enumerate() {
            let c = self.center.get(k).copied().unwrap_or(0.0);
            *o = coeff * (x[k] - c);
        }
    }

    fn laplacian(&self, x: &[f64]) -> f64 {
        let d = x.len() as f64;
        if self.power == 2.0 {
            return 2.0 * d * self.alpha;
        }
        let r = self.offset_norm(x);
        self.alpha * self.power * (self.power + d - 2.0) * r.powf(self.power - 2.0)
    }

    fn radial_center(&self) -> Option<&[f64]> {
        Some(&self.center)
    }

    fn is_confining(&self, _dim: Dimension) -> bool {
        self.alpha > 0.0 && self.power >= 2.0
    }
}

/// The zero potential. Not confining; useful for pure-interaction checks.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroPotential;

impl Potential for ZeroPotential {
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }
    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
    fn laplacian(&self, _x: &[f64]) -> f64 {
        0.0
    }
    fn is_confining(&self, _dim: Dimension) -> bool {
        false
    }
}

/// `lambda * V`, used to rescale a potential without touching its definition.
#[derive(Debug)]
pub struct Scaled<P: Potential> {
    pub inner: P,
    pub factor: f64,
}

impl<P: Potential> Potential for Scaled<P> {
    fn value(&self, x: &[f64]) -> f64 {
        self.factor * self.inner.value(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.inner.gradient(x, out);
        out.iter_mut().for_each(|o| *o *= self.factor);
    }
    fn laplacian(&self, x: &[f64]) -> f64 {
        self.factor * self.inner.laplacian(x)
    }
    fn radial_center(&self) -> Option<&[f64]> {
        self.inner.radial_center()
    }
    fn is_confining(&self, dim: Dimension) -> bool {
        self.factor > 0.0 && self.inner.is_confining(dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_laplacian_is_two_d_alpha() {
        let v = PowerPotential::new(1.5, 2.0, vec![0.0; 3]).unwrap();
        assert_eq!(v.laplacian(&[0.3, -0.2, 0.9]), 2.0 * 3.0 * 1.5);
    }

    #[test]
    fn quartic_gradient_matches_finite_difference() {
        let v = PowerPotential::new(1.0, 4.0, vec![0.1, -0.2]).unwrap();
        let x = [0.4, 0.7];
        let mut g = [0.0; 2];
        v.gradient(&x, &mut g);
        for k in 0..2 {
            let h = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (v.value(&xp) - v.value(&xm)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(PowerPotential::new(-1.0, 2.0, vec![]).is_err());
        assert!(PowerPotential::new(1.0, 1.0, vec![]).is_err());
    }
}
