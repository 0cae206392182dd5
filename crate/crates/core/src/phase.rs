//! Phase-space functions: initial data, test functions and free transport.

use nalgebra::Matrix3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

/// `(1 - |z - c|^2 / R^2)^4` inside the ball of radius `R`, zero outside. C³ across the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec3,
    pub radius: f64,
}

impl Bump {
    pub fn new(center: Vec3, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::config("bump.radius", "must be positive and finite"));
        }
        Ok(Self { center, radius })
    }

    /// `∫ bump = 4 π R^3 · 128/3465`.
    pub fn integral(&self) -> f64 {
        4.0 * std::f64::consts::PI * self.radius.powi(3) * 128.0 / 3465.0
    }

    #[inline]
    pub fn value(&self, z: &Vec3) -> f64 {
        let q = 1.0 - (z - self.center).norm_squared() / (self.radius * self.radius);
        if q <= 0.0 {
            0.0
        } else {
            let q2 = q * q;
            q2 * q2
        }
    }

    #[inline]
    pub fn grad(&self, z: &Vec3) -> Vec3 {
        let d = z - self.center;
        let r2 = self.radius * self.radius;
        let q = 1.0 - d.norm_squared() / r2;
        if q <= 0.0 {
            Vec3::zeros()
        } else {
            d * (-8.0 * q * q * q / r2)
        }
    }

    #[inline]
    pub fn value_and_grad(&self, z: &Vec3) -> (f64, Vec3) {
        let d = z - self.center;
        let r2 = self.radius * self.radius;
        let q = 1.0 - d.norm_squared() / r2;
        if q <= 0.0 {
            (0.0, Vec3::zeros())
        } else {
            let q3 = q * q * q;
            (q3 * q, d * (-8.0 * q3 / r2))
        }
    }

    pub fn hessian(&self, z: &Vec3) -> Matrix3<f64> {
        let d = z - self.center;
        let r2 = self.radius * self.radius;
        let q = 1.0 - d.norm_squared() / r2;
        if q <= 0.0 {
            return Matrix3::zeros();
        }
        Matrix3::identity() * (-8.0 * q * q * q / r2) + d * d.transpose() * (48.0 * q * q / (r2 * r2))
    }

    pub fn on_z_axis(&self) -> bool {
        self.center.x == 0.0 && self.center.y == 0.0
    }

    /// Uniform draw from the support ball.
    pub fn sample_support<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        self.center + uniform_ball(rng) * self.radius
    }
}

/// Uniform draw from the unit ball by rejection.
pub fn uniform_ball<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let p = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if p.norm_squared() < 1.0 {
            return p;
        }
    }
}

/// Equal mixture of two Maxwellians with inverse temperature `b`, drifting by `±drift`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiMaxwellian {
    pub b: f64,
    pub drift: Vec3,
}

impl BiMaxwellian {
    pub fn new(b: f64, drift: Vec3) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::config("f0.b", "must be positive and finite"));
        }
        Ok(Self { b, drift })
    }

    pub fn maxwellian(b: f64) -> Result<Self> {
        Self::new(b, Vec3::zeros())
    }

    #[inline]
    fn gauss(&self, d: &Vec3) -> f64 {
        (self.b / std::f64::consts::PI).powf(1.5) * (-self.b * d.norm_squared()).exp()
    }

    #[inline]
    pub fn value(&self, v: &Vec3) -> f64 {
        0.5 * (self.gauss(&(v - self.drift)) + self.gauss(&(v + self.drift)))
    }

    #[inline]
    pub fn grad(&self, v: &Vec3) -> Vec3 {
        let a = v - self.drift;
        let c = v + self.drift;
        (a * self.gauss(&a) + c * self.gauss(&c)) * (-self.b)
    }

    #[inline]
    pub fn value_and_grad(&self, v: &Vec3) -> (f64, Vec3) {
        let a = v - self.drift;
        let c = v + self.drift;
        let (ga, gc) = (self.gauss(&a), self.gauss(&c));
        (0.5 * (ga + gc), (a * ga + c * gc) * (-self.b))
    }

    pub fn hessian(&self, v: &Vec3) -> Matrix3<f64> {
        let mut h = Matrix3::zeros();
        for d in [v - self.drift, v + self.drift] {
            let g = self.gauss(&d);
            h += (d * d.transpose() * (2.0 * self.b) - Matrix3::identity()) * (self.b * g);
        }
        h
    }

    /// Half-width of the region holding the Gaussian envelope: `4/√b` plus the drift.
    pub fn envelope(&self) -> f64 {
        4.0 / self.b.sqrt() + self.drift.norm()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let s = (0.5 / self.b).sqrt();
        let n = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        self.drift * sign + n * s
    }

    pub fn axisymmetric(&self) -> bool {
        self.drift.x == 0.0 && self.drift.y == 0.0
    }
}

/// Separable initial density `f0(x, v) = rho(x) g(v)` with `rho` a normalized bump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub rho: Bump,
    pub g: BiMaxwellian,
}

impl InitialData {
    pub fn new(rho: Bump, g: BiMaxwellian) -> Self {
        Self { rho, g }
    }

    #[inline]
    pub fn rho(&self, x: &Vec3) -> f64 {
        self.rho.value(x) / self.rho.integral()
    }

    #[inline]
    pub fn grad_rho(&self, x: &Vec3) -> Vec3 {
        self.rho.grad(x) / self.rho.integral()
    }

    #[inline]
    pub fn value(&self, x: &Vec3, v: &Vec3) -> f64 {
        self.rho(x) * self.g.value(v)
    }

    /// `(∇_x f0, ∇_v f0)`.
    #[inline]
    pub fn grad(&self, x: &Vec3, v: &Vec3) -> (Vec3, Vec3) {
        let (r, gr) = self.rho.value_and_grad(x);
        let (g, gg) = self.g.value_and_grad(v);
        let n = self.rho.integral();
        (gr * (g / n), gg * (r / n))
    }

    /// `S(t) f0 (x, v) = f0(x - v t, v)`.
    #[inline]
    pub fn transported(&self, x: &Vec3, v: &Vec3, t: f64) -> f64 {
        self.value(&(x - v * t), v)
    }

    /// `∇_v` of `S(t) f0` at `(x, v)`.
    #[inline]
    pub fn transported_grad_v(&self, x: &Vec3, v: &Vec3, t: f64) -> Vec3 {
        let (gx, gv) = self.grad(&(x - v * t), v);
        gv - gx * t
    }

    pub fn axisymmetric(&self) -> bool {
        self.rho.on_z_axis() && self.g.axisymmetric()
    }
}

/// `u(x, v) = amplitude · χ(x) η(v)` with unnormalized bumps `χ`, `η`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub chi: Bump,
    pub eta: Bump,
    pub amplitude: f64,
}

impl TestFunction {
    pub fn new(chi: Bump, eta: Bump) -> Self {
        Self { chi, eta, amplitude: 1.0 }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { amplitude: self.amplitude * a, ..*self }
    }

    #[inline]
    pub fn value(&self, x: &Vec3, v: &Vec3) -> f64 {
        self.amplitude * self.chi.value(x) * self.eta.value(v)
    }

    /// `(∇_x u, ∇_v u)`.
    #[inline]
    pub fn grad(&self, x: &Vec3, v: &Vec3) -> (Vec3, Vec3) {
        let (c, gc) = self.chi.value_and_grad(x);
        let (e, ge) = self.eta.value_and_grad(v);
        (gc * (e * self.amplitude), ge * (c * self.amplitude))
    }

    /// `R = ∇_v [S(τ - t) u](x, v) = ∇_v u(x + v (t - τ), v)`; `lag = t - τ`.
    #[inline]
    pub fn transported_grad_v(&self, x: &Vec3, v: &Vec3, lag: f64) -> Vec3 {
        let (gx, gv) = self.grad(&(x + v * lag), v);
        gv + gx * lag
    }

    pub fn support_radius(&self) -> (f64, f64) {
        (self.chi.radius, self.eta.radius)
    }

    pub fn axisymmetric(&self) -> bool {
        self.chi.on_z_axis() && self.eta.on_z_axis()
    }
}

/// A scalar function on phase space.
pub trait PhaseSpaceFn {
    fn eval(&self, x: &Vec3, v: &Vec3) -> f64;
}

impl<F: Fn(&Vec3, &Vec3) -> f64> PhaseSpaceFn for F {
    fn eval(&self, x: &Vec3, v: &Vec3) -> f64 {
        self(x, v)
    }
}

impl PhaseSpaceFn for InitialData {
    fn eval(&self, x: &Vec3, v: &Vec3) -> f64 {
        self.value(x, v)
    }
}

impl PhaseSpaceFn for TestFunction {
    fn eval(&self, x: &Vec3, v: &Vec3) -> f64 {
        self.value(x, v)
    }
}

/// `S(t) f : (x, v) ↦ f(x - v t, v)`, evaluated lazily.
#[derive(Clone, Copy, Debug)]
pub struct FreeTransport<F> {
    pub inner: F,
    pub t: f64,
}

impl<F: PhaseSpaceFn> PhaseSpaceFn for FreeTransport<F> {
    fn eval(&self, x: &Vec3, v: &Vec3) -> f64 {
        self.inner.eval(&(x - v * self.t), v)
    }
}

pub fn free_transport<F: PhaseSpaceFn>(f: F, t: f64) -> FreeTransport<F> {
    FreeTransport { inner: f, t }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::BallQuadrature;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fd_grad(f: impl Fn(&Vec3) -> f64, z: &Vec3) -> Vec3 {
        let h = 1e-5;
        let mut g = Vec3::zeros();
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = h;
            g[a] = (f(&(z + e)) - f(&(z - e))) / (2.0 * h);
        }
        g
    }

    #[test]
    fn bump_integral_matches_quadrature() {
        let b = Bump::new(Vec3::new(0.3, -0.1, 0.2), 0.7).unwrap();
        let q = BallQuadrature::<f64>::new(20, 12, 8, b.radius);
        let s: f64 = q.points.iter().zip(&q.weights).map(|(p, w)| w * b.value(&(p + b.center))).sum();
        assert!((s - b.integral()).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let b = Bump::new(Vec3::new(0.0, 0.0, 0.5), 1.2).unwrap();
        let g = BiMaxwellian::new(1.3, Vec3::new(0.0, 0.0, 0.8)).unwrap();
        let u = TestFunction::new(b, Bump::new(Vec3::new(0.0, 0.0, 0.3), 1.5).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let z = uniform_ball(&mut rng);
            let w = uniform_ball(&mut rng);
            assert!((b.grad(&z) - fd_grad(|p| b.value(p), &z)).norm() < 1e-8);
            assert!((g.grad(&z) - fd_grad(|p| g.value(p), &z)).norm() < 1e-8);
            for a in 0..3 {
                let hb = fd_grad(|p| b.grad(p)[a], &z);
                let hg = fd_grad(|p| g.grad(p)[a], &z);
                assert!((b.hessian(&z).row(a).transpose() - hb).norm() < 1e-7);
                assert!((g.hessian(&z).row(a).transpose() - hg).norm() < 1e-7);
            }
            let (gx, gv) = u.grad(&z, &w);
            assert!((gx - fd_grad(|p| u.value(p, &w), &z)).norm() < 1e-8);
            assert!((gv - fd_grad(|p| u.value(&z, p), &w)).norm() < 1e-8);
            let lag = 0.4;
            let r = u.transported_grad_v(&z, &w, lag);
            assert!((r - fd_grad(|p| u.value(&(z + p * lag), p), &w)).norm() < 1e-8);
        }
    }

    #[test]
    fn bump_vanishes_outside_support() {
        let b = Bump::new(Vec3::zeros(), 0.5).unwrap();
        assert_eq!(b.value(&Vec3::new(0.5, 0.0, 0.0)), 0.0);
        assert_eq!(b.grad(&Vec3::new(0.6, 0.0, 0.0)), Vec3::zeros());
    }

    #[test]
    fn free_transport_group_property() {
        let f = InitialData::new(
            Bump::new(Vec3::zeros(), 1.0).unwrap(),
            BiMaxwellian::new(1.0, Vec3::new(0.0, 0.0, 1.0)).unwrap(),
        );
        let x = Vec3::new(0.1, 0.2, -0.3);
        let v = Vec3::new(0.5, -0.4, 0.2);
        assert_eq!(free_transport(f, 0.0).eval(&x, &v), f.eval(&x, &v));
        let back = free_transport(free_transport(f, 0.7), -0.7);
        assert!((back.eval(&x, &v) - f.eval(&x, &v)).abs() < 1e-15);
        let vfree = |x: &Vec3, _v: &Vec3| x.norm();
        assert_eq!(free_transport(vfree, 0.3).eval(&x, &Vec3::zeros()), x.norm());
    }

    #[test]
    fn bimaxwellian_samples_have_right_moments() {
        let g = BiMaxwellian::new(2.0, Vec3::new(0.0, 0.0, 1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200_000;
        let (mut m, mut e) = (Vec3::zeros(), 0.0);
        for _ in 0..n {
            let v = g.sample(&mut rng);
            m += v;
            e += v.norm_squared();
        }
        m /= n as f64;
        e /= n as f64;
        assert!(m.norm() < 0.02);
        // 3/(2b) + |d|^2
        assert!((e - 1.75).abs() < 0.02);
    }
}
