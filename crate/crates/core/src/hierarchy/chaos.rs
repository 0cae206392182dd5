//! Two-particle marginal: the repeated-index leading term and one cross term.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::straight::{line_integral, StraightKernel};
use super::{
    ball_volume, check_ladder, collision_term_first, estimate, non_increasing_within_3sigma, prefactor, validate,
    chord_time, McSettings, PairingEstimate,
};
use crate::error::Result;
use crate::kernel::a_matrix;
use crate::operator::{free_pairing, landau_collision_pairing, PairingResolution};
use crate::phase::{uniform_ball, BiMaxwellian, InitialData, TestFunction};
use crate::quad::GaussLegendre;
use crate::report::{fit_loglog, slope_error_from_noise, ExperimentReport};
use crate::twobody::{backward_cluster, evolve_pair, Cluster, PairState};
use crate::{Potential, Vec3};

/// Leading term for one tagged particle, with its sampled Landau analogue on the same stream.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeadingTerm {
    pub memory: PairingEstimate,
    /// Converges to the Landau collision pairing of the tagged function times the free pairing of the other.
    pub landau: PairingEstimate,
    pub controlled: PairingEstimate,
}

/// The `(k, l) = (i, 3)` part of the two-particle memory term for tagged particle `i`.
///
/// Particle 3 sits at `x_i - ε r` with velocity drawn from `f0`. The three
/// particles move under the genuine three-body flow, and only the force
/// between the tagged particle and particle 3 enters the Duhamel integral
/// `-(1/√ε) ∫_0^τ ds F_{i3}(-s) · (∇_i - ∇_3)[S(τ - s) f0^{⊗3}](Z(-s))`.
pub fn leading_term_pairing(
    potential: &Potential,
    tagged: &TestFunction,
    other: &TestFunction,
    f0: &InitialData,
    t: f64,
    eps: f64,
    mc: &McSettings,
) -> Result<LeadingTerm> {
    validate(t, eps, mc)?;
    if t == 0.0 {
        let z = PairingEstimate { value: 0.0, std_error: 0.0, samples: mc.n_samples, eps, t };
        return Ok(LeadingTerm { memory: z, landau: z, controlled: z });
    }
    let landau_const = potential.landau_constant()?;
    let kernel = StraightKernel::new(potential)?;
    let gl = GaussLegendre::new(8);
    let dt = mc.dt(eps);
    let weight = t
        * ball_volume(tagged.chi.radius)
        * ball_volume(tagged.eta.radius)
        * ball_volume(other.chi.radius)
        * ball_volume(other.eta.radius);
    let triple_weight = prefactor(eps, 2.0) * weight * ball_volume(1.0);
    let s = estimate(mc.n_samples, mc.seed, |rng| {
        let tau = t * rng.gen::<f64>();
        let lag = t - tau;
        let v1 = tagged.eta.sample_support(rng);
        let x1 = tagged.chi.center - v1 * lag + uniform_ball(rng) * tagged.chi.radius;
        let v2 = other.eta.sample_support(rng);
        let x2 = other.chi.center - v2 * lag + uniform_ball(rng) * other.chi.radius;
        let r = uniform_ball(rng);
        let v3 = f0.g.sample(rng);
        let lever_u = tagged.transported_grad_v(&x1, &v1, lag);
        let u2 = other.value(&(x2 + v2 * lag), &v2);
        let g3 = f0.g.value(&v3);
        if lever_u == Vec3::zeros() || u2 == 0.0 || g3 == 0.0 {
            return Ok([0.0; 3]);
        }
        let lever = lever_u.dot(&potential.eval_force(&r));
        let w = v1 - v3;
        let spectator = f0.transported(&x2, &v2, tau);
        // (∇_1 - ∇_3)[S(τ) f0^{⊗3}] with particles 1 and 3 at x1
        let h = (f0.transported_grad_v(&x1, &v1, tau) * f0.transported(&x1, &v3, tau)
            - f0.transported_grad_v(&x1, &v3, tau) * f0.transported(&x1, &v1, tau))
            * spectator;
        let mut memory = 0.0;
        if lever != 0.0 {
            let c = Cluster { x: vec![x1, x2, x1 - r * eps], v: vec![v1, v2, v3], eps };
            let mut duhamel = 0.0;
            backward_cluster(potential, &c, tau, dt, |s, w, z| {
                let force = potential.eval_force(&((z.x[0] - z.x[2]) / eps));
                if force == Vec3::zeros() {
                    return;
                }
                let l = tau - s;
                let (fa, ga) = (f0.transported(&z.x[0], &z.v[0], l), f0.transported_grad_v(&z.x[0], &z.v[0], l));
                let (fb, gb) = (f0.transported(&z.x[2], &z.v[2], l), f0.transported_grad_v(&z.x[2], &z.v[2], l));
                let fc = f0.transported(&z.x[1], &z.v[1], l);
                duhamel += w * force.dot(&(ga * fb - gb * fa)) * fc;
            })?;
            memory = triple_weight * lever * u2 * (-duhamel / eps.sqrt()) / g3;
        }
        let mut landau = 0.0;
        if w != Vec3::zeros() {
            // straight-path control variate on the same r, plus its exact mean over r
            let window = tau / eps;
            let line = line_integral(potential, &gl, &r, &w, window);
            let straight = -triple_weight * eps.sqrt() * lever * u2 * line.dot(&h) / g3;
            let mean = -(eps.powi(-3) - 2.0) * eps.powi(3) * weight * u2 * lever_u.dot(&(kernel.matrix(&w, window) * h)) / g3;
            memory += mean - straight;
            let a = a_matrix(&w, landau_const)?;
            landau = -weight * lever_u.dot(&(a.entries * h)) * u2 / g3;
        }
        Ok([memory, landau, memory - landau])
    })?;
    let e = |k: usize| PairingEstimate::from_stat(s[k], eps, t);
    Ok(LeadingTerm { memory: e(0), landau: e(1), controlled: e(2) })
}

/// Share of Monte-Carlo draws for the cross term taken uniformly over the support instead of from the tube.
const DEFENSIVE: f64 = 0.1;
/// Tube radius in units of ε around the post-collision line of the tagged particle.
const TUBE: f64 = 1.5;

/// Size of the cross term with `(k, l) = (1, 2)` for tagged particle 1 at fixed `τ`:
/// `((N - 2)/ε) ∫_0^τ ds ∫ dX dV φ |F((x_1 - x_3)/ε)| |F((x_1(-s) - x_2(-s))/ε)|`
/// with `φ = χ_1(x_1) χ_2(x_2) e^{-b|V|^2}`.
///
/// Particle 2 is drawn near the backward path of particle 1 after its
/// encounter with particle 3, mixed with a uniform draw over `χ_2`.
pub fn cross_term_bound(
    potential: &Potential,
    u1: &TestFunction,
    u2: &TestFunction,
    b: f64,
    tau: f64,
    eps: f64,
    mc: &McSettings,
) -> Result<PairingEstimate> {
    validate(tau, eps, mc)?;
    if tau == 0.0 || potential.is_zero() {
        return Ok(PairingEstimate { value: 0.0, std_error: 0.0, samples: mc.n_samples, eps, t: tau });
    }
    let maxwell = BiMaxwellian::maxwellian(b)?;
    let dt = mc.dt(eps);
    let rho = TUBE * eps;
    let (vol1, vol2) = (ball_volume(u1.chi.radius), ball_volume(u2.chi.radius));
    let gauss_ratio = (std::f64::consts::PI / b).powf(4.5);
    let scale = (eps.powi(-3) - 2.0) / eps * eps.powi(3) * ball_volume(1.0) * vol1 * gauss_ratio;
    let [s] = estimate(mc.n_samples, mc.seed, |rng| {
        let x1 = u1.chi.sample_support(rng);
        let r = uniform_ball(rng);
        let (v1, v2, v3) = (maxwell.sample(rng), maxwell.sample(rng), maxwell.sample(rng));
        let x3 = x1 - r * eps;
        let back = evolve_pair(potential, &PairState::new(x1, v1, x3, v3, eps), -tau, dt)?;
        let p0 = back.x1 + back.v1 * tau;
        let w = back.v1 - v2;
        let x2 = if rng.gen::<f64>() < DEFENSIVE {
            u2.chi.sample_support(rng)
        } else {
            p0 - w * (tau * rng.gen::<f64>()) - uniform_ball(rng) * rho
        };
        let phi = u1.chi.value(&x1) * u2.chi.value(&x2);
        let fr = potential.eval_force(&r).norm();
        if phi == 0.0 || fr == 0.0 {
            return Ok([0.0]);
        }
        let q = (1.0 - DEFENSIVE) * chord_time(&(p0 - x2), &w, rho, tau) / (tau * ball_volume(rho)) + DEFENSIVE / vol2;
        let c = Cluster { x: vec![x1, x2, x3], v: vec![v1, v2, v3], eps };
        let mut contact = 0.0;
        backward_cluster(potential, &c, tau, dt, |_, wt, z| {
            contact += wt * potential.eval_force(&((z.x[0] - z.x[1]) / eps)).norm();
        })?;
        Ok([scale * phi * fr * contact / q])
    })?;
    Ok(PairingEstimate::from_stat(s, eps, tau))
}

/// `⟨u_1 ⊗ u_2, g̃_2(t)⟩` from the leading term, against `P_1 P_2 + L_1 P_2 + L_2 P_1`.
///
/// `P_i` are free pairings and `L_i` Landau collision pairings. The cross
/// term is measured separately by [`cross_term_bound`] at `τ = t`.
pub fn chaos_experiment(
    potential: &Potential,
    f0: &InitialData,
    u1: &TestFunction,
    u2: &TestFunction,
    t: f64,
    ladder: &[f64],
    mc: &McSettings,
    res: &PairingResolution,
) -> Result<ExperimentReport> {
    check_ladder(ladder)?;
    let landau_const = potential.landau_constant()?;
    let (p1, p2) = (free_pairing(u1, f0, t, res), free_pairing(u2, f0, t, res));
    let l1 = landau_collision_pairing(u1, f0, t, landau_const, res)?;
    let l2 = if u2 == u1 { l1 } else { landau_collision_pairing(u2, f0, t, landau_const, res)? };
    let rhs = p1 * p2 + l1 * p2 + l2 * p1;
    let mut rep = ExperimentReport::new(
        "chaos",
        &[
            "eps",
            "value",
            "std_error",
            "reference",
            "gap",
            "gap_cv",
            "gap_cv_std_error",
            "cross_term",
            "cross_term_std_error",
        ],
    );
    let stream = |k: u64| McSettings { seed: mc.seed.wrapping_add(k), ..*mc };
    for &eps in ladder {
        let ratio = (eps.powi(-3) - 2.0) / (eps.powi(-3) - 1.0);
        let c1 = collision_term_first(potential, u1, f0, t, eps, &stream(0))?;
        let c2 = collision_term_first(potential, u2, f0, t, eps, &stream(1))?;
        let m1 = leading_term_pairing(potential, u1, u2, f0, t, eps, &stream(2))?;
        let m2 = leading_term_pairing(potential, u2, u1, f0, t, eps, &stream(3))?;
        let coll = ratio * (c1.value * p2 + c2.value * p1);
        let coll_var = (ratio * c1.std_error * p2).powi(2) + (ratio * c2.std_error * p1).powi(2);
        let value = p1 * p2 + coll + m1.memory.value + m2.memory.value;
        let sd = (coll_var + m1.memory.std_error.powi(2) + m2.memory.std_error.powi(2)).sqrt();
        let gap_cv = coll + m1.controlled.value + m2.controlled.value;
        let sd_cv = (coll_var + m1.controlled.std_error.powi(2) + m2.controlled.std_error.powi(2)).sqrt();
        let cross = cross_term_bound(potential, u1, u2, f0.g.b, t, eps, &stream(4))?;
        rep.push_row(vec![
            eps,
            value,
            sd,
            rhs,
            (value - rhs).abs(),
            gap_cv.abs(),
            sd_cv,
            cross.value,
            cross.std_error,
        ]);
    }
    rep.note(format!("P1 {p1:e}, P2 {p2:e}, L1 {l1:e}, L2 {l2:e}"));
    if t == 0.0 {
        let v = rep.column("value").unwrap();
        rep.check("factorizes at t = 0", v.iter().all(|x| *x == p1 * p2), format!("{v:?} vs {:e}", p1 * p2));
    }
    if ladder.len() < 2 || t == 0.0 {
        return Ok(rep);
    }
    let col = |n: &str| rep.column(n).unwrap();
    let eps = col("eps");
    let (gap, sd) = (col("gap"), col("std_error"));
    let (gcv, gcv_sd) = (col("gap_cv"), col("gap_cv_std_error"));
    let (cross, cross_sd) = (col("cross_term"), col("cross_term_std_error"));
    rep.check(
        "leading-term gap non-increasing beyond 3 sigma",
        non_increasing_within_3sigma(&gap, &sd),
        format!("gaps {gap:?}, sigma {sd:?}"),
    );
    rep.check(
        "control-variate gap non-increasing beyond 3 sigma",
        non_increasing_within_3sigma(&gcv, &gcv_sd),
        format!("gaps {gcv:?}, sigma {gcv_sd:?}"),
    );
    match (fit_loglog("cross_term", &eps, &cross), slope_error_from_noise(&eps, &cross, &cross_sd)) {
        (Some(f), Some(noise)) => {
            rep.check(
                "cross term O(eps): slope at least 0.85",
                f.slope - 3.0 * noise >= 0.85,
                format!("slope {:.3} +- {:.3} (MC)", f.slope, noise),
            );
            rep.fits.push(f);
        }
        _ => rep.check("cross term O(eps): slope at least 0.85", false, "no fit: zero estimate"),
    }
    if let Some(f) = fit_loglog("gap", &eps, &gap) {
        rep.fits.push(f);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::Bump;

    fn setup() -> (Potential, InitialData, TestFunction, TestFunction) {
        let p = Potential::polynomial(3, 0.2).unwrap();
        let f0 = InitialData::new(
            Bump::new(Vec3::zeros(), 1.0).unwrap(),
            BiMaxwellian::new(1.0, Vec3::new(0.0, 0.0, 1.0)).unwrap(),
        );
        let u1 = TestFunction::new(
            Bump::new(Vec3::new(0.0, 0.0, 0.2), 0.8).unwrap(),
            Bump::new(Vec3::new(0.0, 0.0, 0.5), 1.5).unwrap(),
        );
        let u2 = TestFunction::new(
            Bump::new(Vec3::new(0.0, 0.0, -0.2), 0.8).unwrap(),
            Bump::new(Vec3::new(0.0, 0.0, -0.5), 1.5).unwrap(),
        );
        (p, f0, u1, u2)
    }

    #[test]
    fn factorizes_at_time_zero() {
        let (p, f0, u1, u2) = setup();
        let mc = McSettings { n_samples: 64, seed: 1, steps_per_eps: 200.0 };
        let res = PairingResolution::default();
        let rep = chaos_experiment(&p, &f0, &u1, &u2, 0.0, &[0.2, 0.1], &mc, &res).unwrap();
        assert!(rep.all_passed(), "{:?}", rep.checks);
    }

    #[test]
    fn leading_term_tracks_two_body_memory() {
        // with the spectator free, the leading term is the pair memory term times a free pairing
        let (p, f0, u1, u2) = setup();
        let mc = McSettings { n_samples: 40_000, seed: 5, steps_per_eps: 200.0 };
        let eps = 0.2;
        let lead = leading_term_pairing(&p, &u1, &u2, &f0, 0.5, eps, &mc).unwrap();
        let pair = super::super::memory_term(&p, &u1, &f0, 0.5, eps, &mc).unwrap();
        let p2 = free_pairing(&u2, &f0, 0.5, &PairingResolution::default());
        let ratio = (eps.powi(-3) - 2.0) / (eps.powi(-3) - 1.0);
        let expect = ratio * pair.value * p2;
        let sd = (lead.memory.std_error.powi(2) + (ratio * pair.std_error * p2).powi(2)).sqrt();
        assert!((lead.memory.value - expect).abs() < 4.0 * sd + 0.05 * expect.abs(), "{lead:?} vs {expect} +- {sd}");
    }
}
