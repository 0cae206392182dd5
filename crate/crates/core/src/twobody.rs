//! Two-particle (and small-cluster) flows in macro variables.
//!
//! The pair is integrated in the relative micro coordinate `y = (x1 - x2)/ε`
//! with micro time `σ = t/ε`, where `y'' = 2√ε F(y)`. The centre of mass moves
//! freely and is propagated analytically. Free segments, where every sampled
//! position lies outside the force range, are jumped over in one step; velocity
//! Verlet is exact there, so this does not change the trajectory.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::potential::RadialPotential;
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairState<T: Real> {
    pub x1: Vector3<T>,
    pub x2: Vector3<T>,
    pub v1: Vector3<T>,
    pub v2: Vector3<T>,
    pub eps: T,
}

impl<T: Real> PairState<T> {
    pub fn new(x1: Vector3<T>, v1: Vector3<T>, x2: Vector3<T>, v2: Vector3<T>, eps: T) -> Self {
        Self { x1, x2, v1, v2, eps }
    }

    /// Pair with `x1 - x2 = ε r` centred at `centre`, velocities `v1`, `v2`.
    pub fn from_relative(centre: Vector3<T>, r: Vector3<T>, v1: Vector3<T>, v2: Vector3<T>, eps: T) -> Self {
        let half = r * (eps * T::lit(0.5));
        Self { x1: centre + half, x2: centre - half, v1, v2, eps }
    }

    pub fn relative_velocity(&self) -> Vector3<T> {
        self.v1 - self.v2
    }

    pub fn norm(&self) -> T {
        (self.x1.norm_squared() + self.x2.norm_squared() + self.v1.norm_squared() + self.v2.norm_squared()).sqrt()
    }

    pub fn distance(&self, other: &Self) -> T {
        ((self.x1 - other.x1).norm_squared()
            + (self.x2 - other.x2).norm_squared()
            + (self.v1 - other.v1).norm_squared()
            + (self.v2 - other.v2).norm_squared())
        .sqrt()
    }

    fn reversed(&self) -> Self {
        Self { v1: -self.v1, v2: -self.v2, ..*self }
    }
}

/// `|v1|^2 + |v2|^2 + 2√ε φ((x1 - x2)/ε)`.
pub fn pair_energy<T: Real>(potential: &RadialPotential<T>, s: &PairState<T>) -> T {
    s.v1.norm_squared()
        + s.v2.norm_squared()
        + T::lit(2.0) * s.eps.sqrt() * potential.eval_phi(&((s.x1 - s.x2) / s.eps))
}

fn check_step<T: Real>(eps: T, dt_micro: T) -> Result<()> {
    if !(eps > T::zero()) || !(eps <= T::one()) {
        return Err(Error::domain(format!("eps must lie in (0, 1], got {eps:e}")));
    }
    if !(dt_micro > T::zero()) || dt_micro > eps / T::lit(100.0) {
        return Err(Error::config(
            "dt_micro",
            format!("must lie in (0, eps/100] = (0, {:e}], got {dt_micro:e}", eps / T::lit(100.0)),
        ));
    }
    Ok(())
}

/// Smallest `s > 0` with `|y + u s| < radius`, if the line enters the ball.
fn entry_time<T: Real>(y: &Vector3<T>, u: &Vector3<T>, radius: T) -> Option<T> {
    let a = u.norm_squared();
    if a == T::zero() {
        return None;
    }
    let b = y.dot(u);
    let c = y.norm_squared() - radius * radius;
    let disc = b * b - a * c;
    if disc <= T::zero() {
        return None;
    }
    let s = (-b - disc.sqrt()) / a;
    if s > T::zero() {
        Some(s)
    } else if (-b + disc.sqrt()) / a > T::zero() {
        Some(T::zero())
    } else {
        None
    }
}

/// Samples of the relative trajectory handed to an observer: micro time, position, velocity.
struct RelativeRun<T: Real> {
    y: Vector3<T>,
    u: Vector3<T>,
    interacted: bool,
}

/// Velocity Verlet for `y'' = c F(y)` on `n` uniform steps of size `h`.
///
/// `observe(k, y, u)` is called at every step index where the force is
/// nonzero, plus at `k = 0` and `k = n`. Skipped free stretches are not reported.
fn relative_verlet<T: Real>(
    potential: &RadialPotential<T>,
    coupling: T,
    mut y: Vector3<T>,
    mut u: Vector3<T>,
    h: T,
    n: usize,
    mut observe: impl FnMut(usize, &Vector3<T>, &Vector3<T>),
) -> RelativeRun<T> {
    let half = h * T::lit(0.5);
    let mut acc = potential.eval_force(&y) * coupling;
    observe(0, &y, &u);
    let mut interacted = acc != Vector3::zeros();
    let mut k = 0usize;
    while k < n {
        if acc == Vector3::zeros() {
            // free flight until the last grid point before entering the unit ball
            let jump = match entry_time(&y, &u, T::one()) {
                Some(s) => (s / h).floor().to_usize().unwrap_or(usize::MAX).max(1),
                None => n - k,
            };
            let jump = jump.min(n - k);
            y += u * (h * T::from_usize(jump).unwrap());
            k += jump;
            acc = potential.eval_force(&y) * coupling;
            // closing half kick of the last skipped step
            u += acc * half;
            if acc != Vector3::zeros() || k == n {
                interacted |= acc != Vector3::zeros();
                observe(k, &y, &u);
            }
            continue;
        }
        u += acc * half;
        y += u * h;
        acc = potential.eval_force(&y) * coupling;
        u += acc * half;
        k += 1;
        if acc != Vector3::zeros() || k == n {
            interacted = true;
            observe(k, &y, &u);
        }
    }
    RelativeRun { y, u, interacted }
}

fn step_grid<T: Real>(sigma: T, h_max: T) -> (T, usize) {
    if sigma == T::zero() {
        return (h_max, 0);
    }
    let n = (sigma / h_max).ceil().to_usize().unwrap().max(1);
    (sigma / T::from_usize(n).unwrap(), n)
}

/// Exact pair flow `U_2(t)` up to the Verlet error, for either sign of `t`.
pub fn evolve_pair<T: Real>(
    potential: &RadialPotential<T>,
    s: &PairState<T>,
    t: T,
    dt_micro: T,
) -> Result<PairState<T>> {
    check_step(s.eps, dt_micro)?;
    if t < T::zero() {
        return Ok(evolve_pair(potential, &s.reversed(), -t, dt_micro)?.reversed());
    }
    let free = PairState { x1: s.x1 + s.v1 * t, x2: s.x2 + s.v2 * t, ..*s };
    if potential.is_zero() {
        return Ok(free);
    }
    let eps = s.eps;
    let centre = (s.x1 + s.x2) * T::lit(0.5);
    let vbar = (s.v1 + s.v2) * T::lit(0.5);
    let (h, n) = step_grid(t / eps, dt_micro / eps);
    let coupling = T::lit(2.0) * eps.sqrt();
    let run = relative_verlet(potential, coupling, (s.x1 - s.x2) / eps, s.v1 - s.v2, h, n, |_, _, _| {});
    if !run.y.iter().chain(run.u.iter()).all(|c| c.is_finite()) {
        return Err(Error::Integrator("non-finite state".into()));
    }
    if !run.interacted {
        return Ok(free);
    }
    let c = centre + vbar * t;
    let half = run.y * (eps * T::lit(0.5));
    Ok(PairState {
        x1: c + half,
        x2: c - half,
        v1: vbar + run.u * T::lit(0.5),
        v2: vbar - run.u * T::lit(0.5),
        eps,
    })
}

/// `γ̃_2 = f(U_2(-τ) Z) - f(Z - V τ)`, the difference between the interacting and free backward pullbacks.
pub fn gamma_tilde<T: Real>(
    potential: &RadialPotential<T>,
    f0_pair: impl Fn(&PairState<T>) -> T,
    s: &PairState<T>,
    tau: T,
    dt_micro: T,
) -> Result<T> {
    if tau < T::zero() {
        return Err(Error::domain("gamma_tilde needs tau >= 0"));
    }
    if tau == T::zero() || potential.is_zero() {
        return Ok(T::zero());
    }
    let back = evolve_pair(potential, s, -tau, dt_micro)?;
    let free = PairState { x1: s.x1 - s.v1 * tau, x2: s.x2 - s.v2 * tau, ..*s };
    Ok(f0_pair(&back) - f0_pair(&free))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatteringDiagnostics<T: Real> {
    /// Macro time spent at separation below ε, as `dt × (in-ball samples)`.
    pub interaction_time: T,
    /// `sup_s |v_i(s) - v_i(0)|`, equal for both particles.
    pub max_velocity_deviation: T,
    pub entered: bool,
    pub relative_speed: T,
    /// `max_velocity_deviation · |w| / √ε`.
    pub deviation_constant: T,
    /// Resolution of `interaction_time`.
    pub dt: T,
}

impl<T: Real> ScatteringDiagnostics<T> {
    /// `4 ε / |w|`.
    pub fn time_bound(&self, eps: T) -> T {
        T::lit(4.0) * eps / self.relative_speed
    }
}

pub fn scattering_diagnostics<T: Real>(
    potential: &RadialPotential<T>,
    s: &PairState<T>,
    horizon: T,
    dt_micro: T,
) -> Result<ScatteringDiagnostics<T>> {
    if !(horizon > T::zero()) {
        return Err(Error::domain("scattering horizon must be positive"));
    }
    check_step(s.eps, dt_micro)?;
    let eps = s.eps;
    let (h, n) = step_grid(horizon / eps, dt_micro / eps);
    let u0 = s.v1 - s.v2;
    let mut inside = 0usize;
    let mut dev = T::zero();
    relative_verlet(potential, T::lit(2.0) * eps.sqrt(), (s.x1 - s.x2) / eps, u0, h, n, |_, y, u| {
        if y.norm_squared() < T::one() {
            inside += 1;
        }
        dev = dev.max(((u - u0) * T::lit(0.5)).norm());
    });
    let w = u0.norm();
    Ok(ScatteringDiagnostics {
        interaction_time: h * eps * T::from_usize(inside).unwrap(),
        max_velocity_deviation: dev,
        entered: inside > 0,
        relative_speed: w,
        deviation_constant: if w > T::zero() { dev * w / eps.sqrt() } else { T::zero() },
        dt: h * eps,
    })
}

/// `sup_{σ ≤ smax} |y(-σ) - (r - w σ)|` for a pair starting at `x1 - x2 = ε r`.
pub fn deflection_defect<T: Real>(
    potential: &RadialPotential<T>,
    s: &PairState<T>,
    smax: T,
    dt_micro: T,
) -> Result<T> {
    check_step(s.eps, dt_micro)?;
    let eps = s.eps;
    if potential.is_zero() {
        return Ok(T::zero());
    }
    let r = (s.x1 - s.x2) / eps;
    if r.norm() > T::one() + T::lit(1e-12) {
        return Err(Error::domain("deflection defect needs |x1 - x2| <= eps"));
    }
    let w = s.v1 - s.v2;
    let (h, n) = step_grid(smax, dt_micro / eps);
    let mut y = r;
    let mut u = -w;
    let coupling = T::lit(2.0) * eps.sqrt();
    let half = h * T::lit(0.5);
    let mut acc = potential.eval_force(&y) * coupling;
    let mut sup = T::zero();
    for k in 1..=n {
        u += acc * half;
        y += u * h;
        acc = potential.eval_force(&y) * coupling;
        u += acc * half;
        let sigma = h * T::from_usize(k).unwrap();
        sup = sup.max((y - (r - w * sigma)).norm());
    }
    Ok(sup)
}

/// A few particles at a common ε, integrated with Verlet on a uniform macro grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Cluster<T: Real> {
    pub x: Vec<Vector3<T>>,
    pub v: Vec<Vector3<T>>,
    pub eps: T,
}

impl<T: Real> Cluster<T> {
    fn accelerations(&self, potential: &RadialPotential<T>) -> Vec<Vector3<T>> {
        let n = self.x.len();
        let mut a = vec![Vector3::zeros(); n];
        let c = T::one() / self.eps.sqrt();
        for i in 0..n {
            for j in i + 1..n {
                let f = potential.eval_force(&((self.x[i] - self.x[j]) / self.eps)) * c;
                a[i] += f;
                a[j] -= f;
            }
        }
        a
    }

    /// Earliest time at which some pair comes within `ε` moving freely, if any.
    fn next_contact(&self) -> Option<T> {
        let mut best: Option<T> = None;
        for i in 0..self.x.len() {
            for j in i + 1..self.x.len() {
                let y = (self.x[i] - self.x[j]) / self.eps;
                let u = self.v[i] - self.v[j];
                if let Some(s) = entry_time(&y, &u, T::one()) {
                    let t = s * self.eps;
                    best = Some(best.map_or(t, |b: T| b.min(t)));
                }
            }
        }
        best
    }

    pub fn kinetic_energy(&self) -> T {
        self.v.iter().map(|v| v.norm_squared()).sum::<T>() * T::lit(0.5)
    }

    /// `Σ ½|v|^2 + √ε Σ_{i<j} φ`.
    pub fn energy(&self, potential: &RadialPotential<T>) -> T {
        let mut pot = T::zero();
        for i in 0..self.x.len() {
            for j in i + 1..self.x.len() {
                pot += potential.eval_phi(&((self.x[i] - self.x[j]) / self.eps));
            }
        }
        self.kinetic_energy() + self.eps.sqrt() * pot
    }
}

/// `U_j(t)` for a small cluster; negative `t` runs the flow backward.
pub fn evolve_cluster<T: Real>(
    potential: &RadialPotential<T>,
    c: &Cluster<T>,
    t: T,
    dt_micro: T,
) -> Result<Cluster<T>> {
    if t < T::zero() {
        return backward_cluster(potential, c, -t, dt_micro, |_, _, _| {});
    }
    cluster_verlet(potential, c.clone(), t, dt_micro, |_, _, _| {})
}

/// `U_j(-tau)` applied to `c`, calling `observe(s, weight, state)` on the trapezoid grid in `s ∈ [0, tau]`.
///
/// The observer sees states in their physical orientation, at every grid
/// point where some force acts and at both ends. Grid points inside skipped
/// free stretches are not reported; integrands that vanish without forces
/// are integrated exactly by summing `weight × value` over the calls.
pub fn backward_cluster<T: Real>(
    potential: &RadialPotential<T>,
    c: &Cluster<T>,
    tau: T,
    dt_micro: T,
    mut observe: impl FnMut(T, T, &Cluster<T>),
) -> Result<Cluster<T>> {
    let flip = |c: &Cluster<T>| Cluster { x: c.x.clone(), v: c.v.iter().map(|v| -v).collect(), eps: c.eps };
    let out = cluster_verlet(potential, flip(c), tau, dt_micro, |s, w, st| observe(s, w, &flip(st)))?;
    Ok(flip(&out))
}

fn cluster_verlet<T: Real>(
    potential: &RadialPotential<T>,
    mut s: Cluster<T>,
    t: T,
    dt_micro: T,
    mut observe: impl FnMut(T, T, &Cluster<T>),
) -> Result<Cluster<T>> {
    check_step(s.eps, dt_micro)?;
    let (h, n) = step_grid(t, dt_micro);
    let half = h * T::lit(0.5);
    let weight = |k: usize| if k == 0 || k == n { half } else { h };
    let at = |k: usize| h * T::from_usize(k).unwrap();
    let mut a = s.accelerations(potential);
    observe(T::zero(), if n == 0 { T::zero() } else { half }, &s);
    let mut k = 0usize;
    while k < n {
        if a.iter().all(|ai| *ai == Vector3::zeros()) {
            let jump = match s.next_contact() {
                Some(tc) => (tc / h).floor().to_usize().unwrap_or(usize::MAX).max(1),
                None => n - k,
            };
            let jump = jump.min(n - k);
            let dt = h * T::from_usize(jump).unwrap();
            for (x, v) in s.x.iter_mut().zip(&s.v) {
                *x += v * dt;
            }
            k += jump;
            a = s.accelerations(potential);
            for (v, ai) in s.v.iter_mut().zip(&a) {
                *v += ai * half;
            }
        } else {
            for (v, ai) in s.v.iter_mut().zip(&a) {
                *v += ai * half;
            }
            for (x, v) in s.x.iter_mut().zip(&s.v) {
                *x += v * h;
            }
            a = s.accelerations(potential);
            for (v, ai) in s.v.iter_mut().zip(&a) {
                *v += ai * half;
            }
            k += 1;
        }
        if k == n || a.iter().any(|ai| *ai != Vector3::zeros()) {
            observe(at(k), weight(k), &s);
        }
    }
    if !s.x.iter().chain(&s.v).all(|p| p.iter().all(|c| c.is_finite())) {
        return Err(Error::Integrator("non-finite cluster state".into()));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type V = Vector3<f64>;

    fn k3() -> RadialPotential<f64> {
        RadialPotential::polynomial(3, 1.0).unwrap()
    }

    fn grazing(eps: f64, b: f64, w: f64) -> PairState<f64> {
        // approach from far away along x with impact parameter b·ε in y
        let r = V::new(-3.0, b, 0.0);
        PairState::from_relative(V::new(0.1, 0.2, 0.3), r, V::new(0.3 + w / 2.0, 0.1, 0.0), V::new(0.3 - w / 2.0, 0.1, 0.0), eps)
    }

    #[test]
    fn zero_potential_is_free_flight() {
        let s = grazing(0.05, 0.2, 1.5);
        let out = evolve_pair(&RadialPotential::zero(), &s, 0.7, 0.05 / 500.0).unwrap();
        assert!((out.x1 - (s.x1 + s.v1 * 0.7)).norm() < 1e-14);
        assert!((out.x2 - (s.x2 + s.v2 * 0.7)).norm() < 1e-14);
        assert_eq!((out.v1, out.v2), (s.v1, s.v2));
    }

    #[test]
    fn far_pair_never_interacts() {
        let eps = 0.05;
        let s = PairState::new(V::new(0.0, 0.0, 0.0), V::new(1.0, 0.0, 0.0), V::new(0.0, 1.0, 0.0), V::new(1.0, 0.1, 0.0), eps);
        let out = evolve_pair(&k3(), &s, 2.0, eps / 500.0).unwrap();
        assert_eq!((out.v1, out.v2), (s.v1, s.v2));
        let d = scattering_diagnostics(&k3(), &s, 2.0, eps / 500.0).unwrap();
        assert_eq!((d.interaction_time, d.max_velocity_deviation, d.entered), (0.0, 0.0, false));
    }

    #[test]
    fn step_size_is_validated() {
        let s = grazing(0.05, 0.2, 1.5);
        assert!(matches!(evolve_pair(&k3(), &s, 1.0, 0.05 / 50.0), Err(Error::Config { .. })));
    }

    #[test]
    fn head_on_collision_keeps_reflection_symmetry() {
        let eps = 0.05;
        let s = PairState::new(V::new(-0.1, 0.0, 0.0), V::new(1.0, 0.0, 0.0), V::new(0.1, 0.0, 0.0), V::new(-1.0, 0.0, 0.0), eps);
        let out = evolve_pair(&k3(), &s, 0.3, eps / 500.0).unwrap();
        assert!((out.x1 + out.x2).norm() < 1e-14);
        assert!((out.v1 + out.v2).norm() < 1e-14);
    }

    #[test]
    fn reversible_energy_and_momentum() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = k3();
        for _ in 0..50 {
            let eps = rng.gen_range(0.01..0.2);
            let b = rng.gen_range(0.0..1.0);
            let s = grazing(eps, b, rng.gen_range(0.8..3.0));
            let dt = eps / 1000.0;
            let fwd = evolve_pair(&p, &s, 8.0 * eps, dt).unwrap();
            let back = evolve_pair(&p, &fwd, -8.0 * eps, dt).unwrap();
            assert!(back.distance(&s) <= 1e-8 * s.norm(), "roundtrip {}", back.distance(&s));
            let (e0, e1) = (pair_energy(&p, &s), pair_energy(&p, &fwd));
            assert!(((e1 - e0) / e0).abs() < 1e-8, "eps={eps} b={b} drift={:e}", (e1 - e0) / e0);
            assert!((fwd.v1 + fwd.v2 - s.v1 - s.v2).norm() <= 4.0 * f64::EPSILON * (s.v1.norm() + s.v2.norm()));
        }
    }

    #[test]
    fn pair_energy_examples() {
        let p = k3();
        let s = PairState::new(V::zeros(), V::new(1.0, 0.0, 0.0), V::zeros(), V::new(0.0, 2.0, 0.0), 0.04);
        assert!((pair_energy(&p, &s) - (5.0 + 2.0 * 0.2)).abs() < 1e-15);
        let far = PairState { x2: V::new(1.0, 0.0, 0.0), ..s };
        assert_eq!(pair_energy(&p, &far), 5.0);
    }

    #[test]
    fn gamma_tilde_basics() {
        let p = k3();
        let f = |s: &PairState<f64>| (-(s.x1.norm_squared() + s.x2.norm_squared() + s.v1.norm_squared() + s.v2.norm_squared())).exp();
        let s = PairState::from_relative(V::zeros(), V::new(0.3, 0.1, 0.0), V::new(0.5, 0.0, 0.0), V::new(-0.5, 0.0, 0.0), 0.05);
        assert_eq!(gamma_tilde(&p, f, &s, 0.0, 1e-4).unwrap(), 0.0);
        assert_eq!(gamma_tilde(&RadialPotential::zero(), f, &s, 0.5, 1e-4).unwrap(), 0.0);
        assert!(gamma_tilde(&p, f, &s, 0.5, 1e-4).unwrap() != 0.0);
        // a pair whose backward free motion never comes within eps
        let apart = PairState::new(V::zeros(), V::new(1.0, 0.0, 0.0), V::new(0.0, 0.5, 0.0), V::new(-1.0, 0.0, 0.0), 0.05);
        assert!(gamma_tilde(&p, f, &apart, 0.5, 1e-4).unwrap().abs() < 1e-15);
    }

    #[test]
    fn grazing_pair_interaction_time_matches_chord() {
        let eps = 0.01;
        let w = 2.0;
        let s = grazing(eps, 0.5, w);
        let d = scattering_diagnostics(&k3(), &s, 10.0 * eps, eps / 500.0).unwrap();
        assert!(d.entered);
        // straight chord is 2·√(1 - 0.25)·ε/|w| = 0.00866
        assert!((d.interaction_time - 0.00866).abs() < 2e-4);
        assert!(d.interaction_time <= 4.0 * eps / w);
    }

    #[test]
    fn deflection_defect_vanishes_without_force() {
        let s = PairState::from_relative(V::zeros(), V::new(0.2, 0.3, 0.0), V::new(1.0, 0.0, 0.0), V::new(-1.0, 0.0, 0.0), 0.05);
        assert_eq!(deflection_defect(&RadialPotential::zero(), &s, 2.0, 1e-4).unwrap(), 0.0);
        assert!(deflection_defect(&k3(), &s, 2.0, 1e-4).unwrap() > 0.0);
    }

    #[test]
    fn cluster_of_two_matches_pair_flow() {
        let p = k3();
        let s = grazing(0.05, 0.3, 1.2);
        let c = Cluster { x: vec![s.x1, s.x2], v: vec![s.v1, s.v2], eps: s.eps };
        let t = 0.4;
        let a = evolve_pair(&p, &s, t, 1e-4).unwrap();
        let b = evolve_cluster(&p, &c, t, 1e-4).unwrap();
        assert!((a.x1 - b.x[0]).norm() < 1e-10 && (a.v2 - b.v[1]).norm() < 1e-10);
        let e0 = c.energy(&p);
        assert!((b.energy(&p) - e0).abs() < 1e-8 * e0);
    }

    #[test]
    fn flow_difference_equals_duhamel_integral() {
        // γ̃ = -(1/√ε) ∫_0^τ ds F_12(-s) · (∇_1 - ∇_2)[S(τ - s) f](Z(-s))
        let p = k3();
        let eps = 0.05;
        let tau = 0.3;
        let g = |x: &V, v: &V| (-(x - V::new(0.1, 0.0, 0.0)).norm_squared() - 0.7 * (v - V::new(0.0, 0.2, 0.0)).norm_squared()).exp();
        let gv = |x: &V, v: &V| (v - V::new(0.0, 0.2, 0.0)) * (-1.4 * g(x, v));
        let gx = |x: &V, v: &V| (x - V::new(0.1, 0.0, 0.0)) * (-2.0 * g(x, v));
        let f2 = |s: &PairState<f64>| g(&s.x1, &s.v1) * g(&s.x2, &s.v2);
        let pair = PairState::from_relative(V::new(0.05, 0.0, 0.0), V::new(0.4, 0.3, 0.0), V::new(0.7, 0.0, 0.0), V::new(-0.6, 0.1, 0.0), eps);
        let direct = gamma_tilde(&p, f2, &pair, tau, eps / 1000.0).unwrap();
        let c = Cluster { x: vec![pair.x1, pair.x2], v: vec![pair.v1, pair.v2], eps };
        let mut integral = 0.0;
        backward_cluster(&p, &c, tau, eps / 1000.0, |s, w, st| {
            let lag = tau - s;
            let force = p.eval_force(&((st.x[0] - st.x[1]) / eps));
            let (a, b) = ((st.x[0] - st.v[0] * lag, st.v[0]), (st.x[1] - st.v[1] * lag, st.v[1]));
            let da = gv(&a.0, &a.1) - gx(&a.0, &a.1) * lag;
            let db = gv(&b.0, &b.1) - gx(&b.0, &b.1) * lag;
            integral += w * force.dot(&(da * g(&b.0, &b.1) - db * g(&a.0, &a.1)));
        })
        .unwrap();
        let duhamel = -integral / eps.sqrt();
        assert!(direct.abs() > 1e-4);
        assert!((direct - duhamel).abs() < 1e-5 * direct.abs(), "{direct} vs {duhamel}");
    }

    #[test]
    fn pair_flow_in_single_precision() {
        let s = PairState::<f32>::from_relative(Vector3::zeros(), Vector3::new(-3.0, 0.3, 0.0), Vector3::new(0.6, 0.0, 0.0), Vector3::new(-0.6, 0.0, 0.0), 0.05);
        let p = RadialPotential::<f32>::polynomial(3, 1.0).unwrap();
        let out = evolve_pair(&p, &s, 0.5, 1e-4).unwrap();
        assert!(((pair_energy(&p, &out) - pair_energy(&p, &s)) / pair_energy(&p, &s)).abs() < 1e-4);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn pair_flow_conserves_momentum_and_reverses(b in 0.0..0.99f64, w in 0.5..3.0f64, eps in 0.02..0.2f64) {
            let p = k3();
            let s = PairState::from_relative(V::zeros(), V::new(-2.0, b, 0.0), V::new(w / 2.0, 0.1, 0.0), V::new(-w / 2.0, 0.1, 0.0), eps);
            let dt = eps / 1000.0;
            let f = evolve_pair(&p, &s, 5.0 * eps / w, dt).unwrap();
            let back = evolve_pair(&p, &f, -5.0 * eps / w, dt).unwrap();
            proptest::prop_assert!(((f.v1 + f.v2) - (s.v1 + s.v2)).norm() <= 1e-13);
            proptest::prop_assert!(back.distance(&s) <= 1e-8);
            let (e0, e1) = (pair_energy(&p, &s), pair_energy(&p, &f));
            proptest::prop_assert!((e1 - e0).abs() <= 1e-8 * e0);
        }
    }
}
