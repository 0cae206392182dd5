//! Compactly supported radial pair potentials.
//!
//! Every potential vanishes outside the unit ball. Callers pass the micro
//! argument `(x_i - x_j) / eps`, so nothing in here depends on `eps`.

use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::quad::{adaptive_simpson, GaussLegendre};
use crate::real::Real;

/// Radial profile `phi(r)` on `[0, 1]`.
#[derive(Clone, Debug)]
pub enum RadialProfile<T: Real> {
    /// `strength * (1 - r^2)^k`.
    Polynomial { k: u32, strength: T },
    /// Clamped cubic spline through tabulated `(r, phi)` pairs.
    Tabulated(TabulatedProfile<T>),
}

#[derive(Clone, Debug)]
pub struct RadialPotential<T: Real> {
    profile: RadialProfile<T>,
    /// Absolute tolerance of the radial Fourier quadrature for a unit-amplitude profile.
    pub fourier_tol: T,
    /// Truncation threshold on `rho^3 phi_hat(rho)^2` for a unit-amplitude profile.
    pub tail_threshold: T,
}

impl<T: Real> RadialPotential<T> {
    pub fn polynomial(k: u32, strength: T) -> Result<Self> {
        if k < 3 {
            return Err(Error::config(
                "potential.k",
                format!("smoothness order must be at least 3, got {k}"),
            ));
        }
        Ok(Self::from_profile(RadialProfile::Polynomial { k, strength }))
    }

    /// `phi = 0`: every derived quantity collapses to its free value.
    pub fn zero() -> Self {
        Self::from_profile(RadialProfile::Polynomial {
            k: 3,
            strength: T::zero(),
        })
    }

    pub fn tabulated(r: Vec<T>, phi: Vec<T>) -> Result<Self> {
        Ok(Self::from_profile(RadialProfile::Tabulated(
            TabulatedProfile::new(r, phi)?,
        )))
    }

    /// Reads a whitespace separated two-column `(r, phi)` table. `#` starts a comment.
    pub fn from_table_str(text: &str) -> Result<Self> {
        let mut r = Vec::new();
        let mut phi = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 2 {
                return Err(Error::Parse {
                    line: i + 1,
                    reason: format!("expected 2 columns, found {}", cols.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    reason: e.to_string(),
                })
            };
            r.push(T::lit(parse(cols[0])?));
            phi.push(T::lit(parse(cols[1])?));
        }
        Self::tabulated(r, phi)
    }

    pub fn from_table_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_table_str(&std::fs::read_to_string(path)?)
    }

    fn from_profile(profile: RadialProfile<T>) -> Self {
        Self {
            profile,
            fourier_tol: T::lit(1e-10),
            tail_threshold: T::lit(1e-14),
        }
    }

    pub fn profile(&self) -> &RadialProfile<T> {
        &self.profile
    }

    /// The potential multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        let profile = match &self.profile {
            RadialProfile::Polynomial { k, strength } => RadialProfile::Polynomial {
                k: *k,
                strength: *strength * factor,
            },
            RadialProfile::Tabulated(t) => RadialProfile::Tabulated(t.scaled(factor)),
        };
        Self { profile, ..*self }
    }

    /// Scale of `|phi|`, used to make tolerances amplitude-relative.
    pub fn amplitude(&self) -> T {
        match &self.profile {
            RadialProfile::Polynomial { strength, .. } => strength.abs(),
            RadialProfile::Tabulated(t) => t.phi.iter().fold(T::zero(), |m, p| m.max(p.abs())),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude() == T::zero()
    }

    /// `phi(r)` for `r >= 0`.
    #[inline]
    pub fn phi_radial(&self, r: T) -> T {
        if r >= T::one() {
            return T::zero();
        }
        match &self.profile {
            RadialProfile::Polynomial { k, strength } => {
                *strength * (T::one() - r * r).powi(*k as i32)
            }
            RadialProfile::Tabulated(t) => t.value(r),
        }
    }

    /// `d phi / d r`.
    #[inline]
    pub fn dphi_radial(&self, r: T) -> T {
        if r >= T::one() {
            return T::zero();
        }
        match &self.profile {
            RadialProfile::Polynomial { k, strength } => {
                let kk = T::from_u32(*k).unwrap();
                -T::lit(2.0) * kk * *strength * r * (T::one() - r * r).powi(*k as i32 - 1)
            }
            RadialProfile::Tabulated(t) => t.derivative(r),
        }
    }

    #[inline]
    pub fn eval_phi(&self, x: &Vector3<T>) -> T {
        let r2 = x.norm_squared();
        if r2 >= T::one() {
            return T::zero();
        }
        match &self.profile {
            RadialProfile::Polynomial { k, strength } => *strength * (T::one() - r2).powi(*k as i32),
            RadialProfile::Tabulated(t) => t.value(r2.sqrt()),
        }
    }

    /// `F(x) = -grad phi(x)`.
    #[inline]
    pub fn eval_force(&self, x: &Vector3<T>) -> Vector3<T> {
        let r2 = x.norm_squared();
        if r2 >= T::one() {
            return Vector3::zeros();
        }
        let coeff = match &self.profile {
            RadialProfile::Polynomial { k, strength } => {
                let kk = T::from_u32(*k).unwrap();
                T::lit(2.0) * kk * *strength * (T::one() - r2).powi(*k as i32 - 1)
            }
            RadialProfile::Tabulated(t) => {
                let r = r2.sqrt();
                if r <= T::default_epsilon() {
                    return Vector3::zeros();
                }
                -t.derivative(r) / r
            }
        };
        x * coeff
    }

    /// `sup_x |F(x)|`, exact for the polynomial family.
    pub fn sup_force(&self) -> T {
        match &self.profile {
            RadialProfile::Polynomial { k, strength } => {
                // maximum of 2k r (1-r^2)^(k-1) sits at r^2 = 1/(2k-1)
                let kk = T::from_u32(*k).unwrap();
                let r2 = T::one() / (T::lit(2.0) * kk - T::one());
                T::lit(2.0) * kk * strength.abs() * r2.sqrt() * (T::one() - r2).powi(*k as i32 - 1)
            }
            RadialProfile::Tabulated(_) => {
                let n = 4096;
                let h = T::one() / T::from_usize(n).unwrap();
                let (mut best, mut at) = (T::zero(), T::zero());
                for i in 0..=n {
                    let r = h * T::from_usize(i).unwrap();
                    let v = self.dphi_radial(r).abs();
                    if v > best {
                        best = v;
                        at = r;
                    }
                }
                // golden-section refinement around the best sample
                let (mut a, mut b) = ((at - h).max(T::zero()), (at + h).min(T::one()));
                let g = T::lit(0.618_033_988_749_894_9);
                for _ in 0..60 {
                    let c = b - g * (b - a);
                    let d = a + g * (b - a);
                    if self.dphi_radial(c).abs() > self.dphi_radial(d).abs() {
                        b = d;
                    } else {
                        a = c;
                    }
                }
                best.max(self.dphi_radial((a + b) * T::lit(0.5)).abs())
            }
        }
    }

    /// The velocity cutoff constant `4 sqrt(sup |F|)`.
    pub fn cutoff_constant(&self) -> T {
        T::lit(4.0) * self.sup_force().sqrt()
    }

    fn scaled_tol(&self, tol: T) -> T {
        let floor = T::lit(100.0) * T::default_epsilon();
        tol.max(floor) * self.amplitude()
    }

    /// Radial Fourier transform `phi_hat(kappa) = (4 pi / kappa) int_0^1 r sin(kappa r) phi(r) dr`.
    pub fn fourier_transform(&self, kappa: T) -> Result<T> {
        if kappa < T::zero() || !kappa.is_finite() {
            return Err(Error::domain(format!(
                "Fourier wavenumber must be finite and nonnegative, got {kappa:e}"
            )));
        }
        if self.is_zero() {
            return Ok(T::zero());
        }
        let tol = self.scaled_tol(self.fourier_tol);
        // one piece per half period keeps the adaptive rule away from aliasing
        let pieces = (kappa.as_f64() / std::f64::consts::PI).ceil().max(1.0) as usize;
        let width = T::one() / T::from_usize(pieces).unwrap();
        let piece_tol = tol / T::from_usize(pieces).unwrap();
        let mut acc = T::zero();
        for p in 0..pieces {
            let a = width * T::from_usize(p).unwrap();
            let b = if p + 1 == pieces { T::one() } else { a + width };
            acc += adaptive_simpson(
                |r: T| r * r * self.phi_radial(r) * sinc(kappa * r),
                a,
                b,
                piece_tol,
                40,
            )?;
        }
        Ok(T::lit(4.0) * T::pi() * acc)
    }

    /// `A = (1 / 8 pi) int_0^inf rho^3 phi_hat(rho)^2 d rho`.
    ///
    /// The range is processed in chunks of width `pi`; integration stops after
    /// two consecutive chunks whose integrand stays below the tail threshold.
    pub fn landau_constant(&self) -> Result<T> {
        if self.is_zero() {
            return Ok(T::zero());
        }
        let amp2 = self.amplitude() * self.amplitude();
        let threshold = self.tail_threshold * amp2;
        let integrand = |rho: T| -> Result<T> {
            let f = self.fourier_transform(rho)?;
            Ok(rho * rho * rho * f * f)
        };
        // rho^3 phi_hat^2 is entire and oscillates with period ~pi, so a fixed
        // Gauss rule per chunk is far below the inner quadrature noise
        let gl = GaussLegendre::<T>::new(24);
        let mut total = T::zero();
        let mut quiet = 0;
        let width = T::pi();
        for j in 0..100_000usize {
            let a = width * T::from_usize(j).unwrap();
            let mut chunk = T::zero();
            let mut peak = T::zero();
            for (x, w) in gl.on(a, a + width) {
                let v = integrand(x)?;
                chunk += w * v;
                peak = peak.max(v.abs());
            }
            total += chunk;
            if peak < threshold && j >= 4 {
                quiet += 1;
                if quiet >= 2 {
                    return Ok(total / (T::lit(8.0) * T::pi()));
                }
            } else {
                quiet = 0;
            }
        }
        Err(Error::Numeric(
            "Landau constant integrand did not decay below the tail threshold".into(),
        ))
    }
}

#[inline]
fn sinc<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-4) {
        let x2 = x * x;
        T::one() - x2 / T::lit(6.0) + x2 * x2 / T::lit(120.0)
    } else {
        x.sin() / x
    }
}

/// Clamped cubic spline with zero end slopes.
#[derive(Clone, Debug)]
pub struct TabulatedProfile<T: Real> {
    r: Vec<T>,
    phi: Vec<T>,
    second: Vec<T>,
}

impl<T: Real> TabulatedProfile<T> {
    pub fn new(r: Vec<T>, phi: Vec<T>) -> Result<Self> {
        let field = "potential.table";
        if r.len() != phi.len() {
            return Err(Error::config(field, "column lengths differ"));
        }
        if r.len() < 4 {
            return Err(Error::config(field, "need at least 4 rows"));
        }
        if r[0] != T::zero() {
            return Err(Error::config(field, "first radius must be 0"));
        }
        if (r[r.len() - 1] - T::one()).abs() > T::lit(1e-12) {
            return Err(Error::config(field, "last radius must be 1 (range is normalized)"));
        }
        if r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config(field, "radii must be strictly increasing"));
        }
        let scale = phi.iter().fold(T::zero(), |m, p| m.max(p.abs()));
        if phi[phi.len() - 1].abs() > T::lit(1e-8) * scale {
            return Err(Error::config(
                field,
                "phi(1) must vanish so the potential is continuous at the range",
            ));
        }
        let second = clamped_second_derivatives(&r, &phi);
        Ok(Self { r, phi, second })
    }

    fn scaled(&self, f: T) -> Self {
        Self {
            r: self.r.clone(),
            phi: self.phi.iter().map(|&p| p * f).collect(),
            second: self.second.iter().map(|&m| m * f).collect(),
        }
    }

    fn locate(&self, x: T) -> usize {
        let n = self.r.len();
        match self.r.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    fn value(&self, x: T) -> T {
        let i = self.locate(x);
        let h = self.r[i + 1] - self.r[i];
        let a = (self.r[i + 1] - x) / h;
        let b = T::one() - a;
        a * self.phi[i]
            + b * self.phi[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h
                / T::lit(6.0)
    }

    fn derivative(&self, x: T) -> T {
        let i = self.locate(x);
        let h = self.r[i + 1] - self.r[i];
        let a = (self.r[i + 1] - x) / h;
        let b = T::one() - a;
        (self.phi[i + 1] - self.phi[i]) / h
            - (T::lit(3.0) * a * a - T::one()) / T::lit(6.0) * h * self.second[i]
            + (T::lit(3.0) * b * b - T::one()) / T::lit(6.0) * h * self.second[i + 1]
    }
}

fn clamped_second_derivatives<T: Real>(x: &[T], y: &[T]) -> Vec<T> {
    let n = x.len();
    let six = T::lit(6.0);
    let two = T::lit(2.0);
    let h: Vec<T> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sub = vec![T::zero(); n];
    let mut diag = vec![T::zero(); n];
    let mut sup = vec![T::zero(); n];
    let mut rhs = vec![T::zero(); n];
    diag[0] = two * h[0];
    sup[0] = h[0];
    rhs[0] = six * ((y[1] - y[0]) / h[0]);
    for i in 1..n - 1 {
        sub[i] = h[i - 1];
        diag[i] = two * (h[i - 1] + h[i]);
        sup[i] = h[i];
        rhs[i] = six * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
    }
    sub[n - 1] = h[n - 2];
    diag[n - 1] = two * h[n - 2];
    rhs[n - 1] = -six * ((y[n - 1] - y[n - 2]) / h[n - 2]);
    // Thomas algorithm
    for i in 1..n {
        let m = sub[i] / diag[i - 1];
        diag[i] -= m * sup[i - 1];
        rhs[i] = rhs[i] - m * rhs[i - 1];
    }
    let mut out = vec![T::zero(); n];
    out[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = (rhs[i] - sup[i] * out[i + 1]) / diag[i];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k3() -> RadialPotential<f64> {
        RadialPotential::polynomial(3, 1.0).unwrap()
    }

    #[test]
    fn phi_examples() {
        let p = k3();
        assert_eq!(p.eval_phi(&Vector3::new(2.0, 0.0, 0.0)), 0.0);
        assert_eq!(p.eval_phi(&Vector3::zeros()), 1.0);
        assert_relative_eq!(p.eval_phi(&Vector3::new(0.5, 0.0, 0.0)), 0.421875, epsilon = 1e-15);
    }

    #[test]
    fn force_examples() {
        let p = k3();
        assert_eq!(p.eval_force(&Vector3::new(2.0, 0.0, 0.0)), Vector3::zeros());
        assert_eq!(p.eval_force(&Vector3::zeros()), Vector3::zeros());
        let f = p.eval_force(&Vector3::new(0.5, 0.0, 0.0));
        assert_relative_eq!(f.x, 1.6875, epsilon = 1e-14);
        assert_eq!((f.y, f.z), (0.0, 0.0));
    }

    #[test]
    fn k_below_three_rejected() {
        assert!(RadialPotential::<f64>::polynomial(2, 1.0).is_err());
    }

    #[test]
    fn force_is_odd() {
        let p = k3();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x = Vector3::new(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2));
            assert_eq!(p.eval_force(&(-x)), -p.eval_force(&x));
        }
    }

    #[test]
    fn force_matches_finite_differences() {
        let p = k3();
        let h = 1e-4;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = Vector3::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6));
            let f = p.eval_force(&x);
            let mut fd = Vector3::zeros();
            for a in 0..3 {
                let mut e = Vector3::zeros();
                e[a] = h;
                fd[a] = -(p.eval_phi(&(x + e)) - p.eval_phi(&(x - e))) / (2.0 * h);
            }
            assert!((f - fd).norm() <= 1e-6 * f.norm().max(1e-3), "{f} vs {fd}");
        }
    }

    #[test]
    fn fourier_at_zero_is_beta_integral() {
        let v = k3().fourier_transform(0.0).unwrap();
        assert_relative_eq!(v, 64.0 * std::f64::consts::PI / 315.0, epsilon = 1e-10);
    }

    #[test]
    fn fourier_rejects_negative_kappa() {
        assert!(matches!(k3().fourier_transform(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn fourier_against_closed_form_and_fine_simpson() {
        // closed form of (4 pi / k) int_0^1 r sin(kr) (1-r^2)^3 dr
        let exact = |k: f64| {
            let (s, c) = k.sin_cos();
            4.0 * std::f64::consts::PI / k * 48.0
                * (k.powi(4) * s + 10.0 * k.powi(3) * c - 45.0 * k * k * s - 105.0 * k * c + 105.0 * s)
                / k.powi(8)
        };
        let p = k3();
        let v5 = p.fourier_transform(5.0).unwrap();
        assert!((v5 - 0.180_490_227_340_213_8).abs() < 1e-10);
        // plain composite Simpson at ten times the resolution an adaptive rule would need
        let n = 20_000;
        let h = 1.0 / n as f64;
        let w = simpson_like(n, h, |r| r * (5.0 * r).sin() * (1.0 - r * r).powi(3));
        assert!((v5 - 4.0 * std::f64::consts::PI / 5.0 * w).abs() < 1e-10);
        for k in [10.0, 20.0, 40.0] {
            let v = p.fourier_transform(k).unwrap();
            assert!((v - exact(k)).abs() < 1e-10, "k={k}");
        }
    }

    fn simpson_like(n: usize, h: f64, f: impl Fn(f64) -> f64) -> f64 {
        (0..=n)
            .map(|i| {
                let c = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                c * f(i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
    }

    #[test]
    fn fourier_decays_like_inverse_square_or_faster() {
        let p = k3();
        for k in [10.0, 20.0, 40.0] {
            let v = p.fourier_transform(k).unwrap();
            assert!(v.abs() * k * k <= 1.0, "k={k}: {v}");
        }
    }

    #[test]
    fn landau_constant_frozen_value() {
        let a = k3().landau_constant().unwrap();
        assert!((a - 0.765_950_208_875_226).abs() < 1e-9 * 0.766, "A = {a:.15}");
        // A is quadratic in the strength
        let a2 = k3().scaled(2.0).landau_constant().unwrap();
        assert!((a2 - 4.0 * a).abs() < 1e-9 * a2);
    }

    #[test]
    fn zero_potential_constants_vanish() {
        let p = RadialPotential::<f64>::zero();
        assert_eq!(p.landau_constant().unwrap(), 0.0);
        assert_eq!(p.cutoff_constant(), 0.0);
        assert_eq!(p.fourier_transform(3.0).unwrap(), 0.0);
    }

    #[test]
    fn cutoff_constant_closed_form() {
        let p = k3();
        let sup = 96.0 / (25.0 * 5f64.sqrt());
        assert_relative_eq!(p.sup_force(), sup, epsilon = 1e-14);
        assert_relative_eq!(p.cutoff_constant(), 4.0 * sup.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(p.scaled(2.0).cutoff_constant(), 2f64.sqrt() * p.cutoff_constant(), epsilon = 1e-13);
    }

    #[test]
    fn tabulated_reproduces_polynomial() {
        let n = 401;
        let r: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let phi: Vec<f64> = r.iter().map(|r| (1.0 - r * r).powi(3)).collect();
        let t = RadialPotential::tabulated(r, phi).unwrap();
        let p = k3();
        for x in [0.0, 0.13, 0.5, 0.77, 0.99] {
            assert!((t.phi_radial(x) - p.phi_radial(x)).abs() < 1e-8);
            assert!((t.dphi_radial(x) - p.dphi_radial(x)).abs() < 1e-5);
        }
        assert!((t.sup_force() - p.sup_force()).abs() < 1e-5);
    }

    #[test]
    fn table_parsing_and_validation() {
        let text = "# r phi\n0 1\n0.25 0.8\n0.5 0.4\n0.75 0.1\n1 0\n";
        assert!(RadialPotential::<f64>::from_table_str(text).is_ok());
        let bad = "0 1\n0.5 0.4\n0.4 0.1\n1 0\n";
        assert!(RadialPotential::<f64>::from_table_str(bad).is_err());
        let discontinuous = "0 1\n0.25 0.8\n0.5 0.4\n1 0.2\n";
        assert!(RadialPotential::<f64>::from_table_str(discontinuous).is_err());
        let cols = "0 1 2\n";
        assert!(matches!(
            RadialPotential::<f64>::from_table_str(cols),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let p = RadialPotential::<f32>::polynomial(3, 1.0).unwrap();
        let f = p.eval_force(&Vector3::new(0.5f32, 0.0, 0.0));
        assert!((f.x - 1.6875).abs() < 1e-6);
    }

    proptest::proptest! {
        #[test]
        fn force_is_odd_and_compactly_supported(x in -1.5..1.5f64, y in -1.5..1.5f64, z in -1.5..1.5f64, k in 3u32..7) {
            let p = RadialPotential::polynomial(k, 1.0).unwrap();
            let r = Vector3::new(x, y, z);
            proptest::prop_assert_eq!(p.eval_force(&-r), -p.eval_force(&r));
            if r.norm() >= 1.0 {
                proptest::prop_assert_eq!(p.eval_force(&r), Vector3::zeros());
            }
            proptest::prop_assert!(p.eval_force(&r).norm() <= p.sup_force() * (1.0 + 1e-9));
        }
    }
}
