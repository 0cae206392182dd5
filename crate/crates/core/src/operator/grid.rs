use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

/// Uniform `n × n × n` velocity grid over the box `[lo, hi]`, endpoints included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub lo: Vec3,
    pub hi: Vec3,
}

impl GridSpec {
    pub fn new(n: usize, lo: Vec3, hi: Vec3) -> Result<Self> {
        if n < 3 {
            return Err(Error::config("grid.n", "need at least 3 points per axis"));
        }
        if (0..3).any(|a| !(hi[a] > lo[a])) {
            return Err(Error::config("grid.extent", "upper corner must exceed lower corner"));
        }
        Ok(Self { n, lo, hi })
    }

    /// The cube `[-half_width, half_width]^3`.
    pub fn cube(n: usize, half_width: f64) -> Result<Self> {
        Self::new(n, Vec3::repeat(-half_width), Vec3::repeat(half_width))
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spacing(&self) -> Vec3 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn cell_volume(&self) -> f64 {
        let h = self.spacing();
        h.x * h.y * h.z
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn unindex(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.n;
        (idx / (n * n), (idx / n) % n, idx % n)
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Vec3 {
        let (i, j, k) = self.unindex(idx);
        let h = self.spacing();
        self.lo + Vec3::new(i as f64 * h.x, j as f64 * h.y, k as f64 * h.z)
    }

    /// Trapezoid weight times the cell volume.
    #[inline]
    pub fn weight(&self, idx: usize) -> f64 {
        let (i, j, k) = self.unindex(idx);
        let e = |m: usize| if m == 0 || m == self.n - 1 { 0.5 } else { 1.0 };
        e(i) * e(j) * e(k) * self.cell_volume()
    }

    /// Errors unless `[mean - w, mean + w]` fits inside the box on every axis.
    pub fn require_envelope(&self, mean: &Vec3, half_width: f64) -> Result<()> {
        for a in 0..3 {
            if self.lo[a] > mean[a] - half_width || self.hi[a] < mean[a] + half_width {
                return Err(Error::config(
                    "grid.extent",
                    format!(
                        "axis {a}: box [{}, {}] does not hold the envelope {} ± {half_width}",
                        self.lo[a], self.hi[a], mean[a]
                    ),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mass: f64,
    pub momentum: Vec3,
    pub energy: f64,
}

/// Values sampled on a [`GridSpec`], with the trapezoidal mass kept in sync.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    spec: GridSpec,
    values: Vec<f64>,
    mass: f64,
}

impl DensityGrid {
    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::config("grid.values", "length does not match grid"));
        }
        let mass = trapezoid(&spec, &values);
        Ok(Self { spec, values, mass })
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(&Vec3) -> f64) -> Self {
        let values: Vec<f64> = (0..spec.len()).map(|i| f(&spec.point(i))).collect();
        let mass = trapezoid(&spec, &values);
        Self { spec, values, mass }
    }

    pub fn zeros(spec: GridSpec) -> Self {
        let values = vec![0.0; spec.len()];
        Self { spec, values, mass: 0.0 }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn map(&mut self, f: impl Fn(f64) -> f64) {
        for v in &mut self.values {
            *v = f(*v);
        }
        self.mass = trapezoid(&self.spec, &self.values);
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.map(|v| c * v);
        out
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|v| *v >= 0.0)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoidal `∫ ψ f`.
    pub fn integrate_against(&self, psi: impl Fn(&Vec3) -> f64) -> f64 {
        (0..self.spec.len())
            .map(|i| self.spec.weight(i) * self.values[i] * psi(&self.spec.point(i)))
            .sum()
    }

    /// Centered differences with zero ghost values outside the box.
    pub fn gradient(&self) -> [Vec<f64>; 3] {
        centered_gradient(&self.spec, &self.values)
    }
}

fn trapezoid(spec: &GridSpec, values: &[f64]) -> f64 {
    values.iter().enumerate().map(|(i, v)| spec.weight(i) * v).sum()
}

pub(crate) fn centered_gradient(spec: &GridSpec, f: &[f64]) -> [Vec<f64>; 3] {
    let n = spec.n;
    let h = spec.spacing();
    let mut out = [vec![0.0; f.len()], vec![0.0; f.len()], vec![0.0; f.len()]];
    let strides = [n * n, n, 1];
    for idx in 0..f.len() {
        let (i, j, k) = spec.unindex(idx);
        let pos = [i, j, k];
        for a in 0..3 {
            let s = strides[a];
            let up = if pos[a] + 1 < n { f[idx + s] } else { 0.0 };
            let dn = if pos[a] > 0 { f[idx - s] } else { 0.0 };
            out[a][idx] = (up - dn) / (2.0 * h[a]);
        }
    }
    out
}

/// Normalized Maxwellian `(b/π)^{3/2} exp(-b |v - mean|^2)`.
pub fn maxwellian(b: f64, mean: &Vec3, spec: &GridSpec) -> Result<DensityGrid> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::config("maxwellian.b", "must be positive"));
    }
    spec.require_envelope(mean, 4.0 / b.sqrt())?;
    let c = (b / std::f64::consts::PI).powf(1.5);
    Ok(DensityGrid::from_fn(spec.clone(), |v| c * (-b * (v - mean).norm_squared()).exp()))
}

pub fn moments(f: &DensityGrid) -> Moments {
    let spec = f.spec();
    let mut m = Moments { mass: 0.0, momentum: Vec3::zeros(), energy: 0.0 };
    for (i, val) in f.values().iter().enumerate() {
        let w = spec.weight(i) * val;
        let v = spec.point(i);
        m.mass += w;
        m.momentum += v * w;
        m.energy += v.norm_squared() * w;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maxwellian_moments() {
        let spec = GridSpec::cube(48, 4.5).unwrap();
        let m = moments(&maxwellian(1.0, &Vec3::zeros(), &spec).unwrap());
        assert!((m.mass - 1.0).abs() < 1e-8);
        assert!(m.momentum.norm() < 1e-12);
        assert!((m.energy - 1.5).abs() < 1e-7);
        let mean = Vec3::new(0.3, 0.0, -0.2);
        let m = moments(&maxwellian(2.0, &mean, &spec).unwrap());
        assert!((m.momentum - mean).norm() < 1e-8);
        assert!((m.energy - (0.75 + mean.norm_squared())).abs() < 1e-7);
    }

    #[test]
    fn envelope_is_enforced() {
        let spec = GridSpec::cube(32, 3.0).unwrap();
        assert!(maxwellian(1.0, &Vec3::zeros(), &spec).is_err());
        assert!(maxwellian(4.0, &Vec3::zeros(), &spec).is_ok());
    }

    #[test]
    fn zero_and_linearity() {
        let spec = GridSpec::cube(16, 4.5).unwrap();
        let z = moments(&DensityGrid::zeros(spec.clone()));
        assert_eq!((z.mass, z.momentum, z.energy), (0.0, Vec3::zeros(), 0.0));
        let f = maxwellian(1.0, &Vec3::new(0.1, 0.2, 0.3), &GridSpec::cube(24, 4.5).unwrap()).unwrap();
        let (a, b) = (moments(&f), moments(&f.scaled(2.0)));
        assert!((b.mass - 2.0 * a.mass).abs() < 1e-14);
        assert!((b.momentum - 2.0 * a.momentum).norm() < 1e-14);
        assert!((b.energy - 2.0 * a.energy).abs() < 1e-14);
        assert_eq!(f.scaled(2.0).mass(), b.mass);
    }
}
