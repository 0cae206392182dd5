//! Monte-Carlo pairings of the first-order Duhamel expansion, and the
//! consistency and chaos experiments built on them.
//!
//! Every pairing is sampled over `(τ, x₁, v₁, r, v₂)` with `x₂ = x₁ - ε r`:
//! `τ` uniform on `[0, t]`, `(x₁, v₁)` uniform on the transported support of
//! the test function, `r` uniform on the unit ball and `v₂` from the velocity
//! profile of `f0`. All weights are carried analytically.

mod chaos;
mod mc;
mod straight;

use straight::{line_integral, StraightKernel};

pub use chaos::{chaos_experiment, cross_term_bound, leading_term_pairing, LeadingTerm};
pub use mc::{block_rng, estimate, estimate_channels, Stat, BLOCK};

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::a_matrix;
use crate::operator::{free_pairing, landau_collision_pairing, PairingResolution};
use crate::phase::{uniform_ball, InitialData, TestFunction};
use crate::quad::GaussLegendre;
use crate::report::{fit_loglog, slope_error_from_noise, ExperimentReport, SlopeFit};
use crate::twobody::{gamma_tilde, PairState};
use crate::{Potential, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub eps: f64,
    pub t: f64,
}

impl PairingEstimate {
    fn from_stat(s: Stat, eps: f64, t: f64) -> Self {
        Self { value: s.mean, std_error: s.std_error, samples: s.n, eps, t }
    }

    fn exact(value: f64, samples: usize, eps: f64, t: f64) -> Self {
        Self { value, std_error: 0.0, samples, eps, t }
    }
}

/// Sample budget, master seed and the two-body step `dt_micro = ε / steps_per_eps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub n_samples: usize,
    pub seed: u64,
    pub steps_per_eps: f64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self { n_samples: 100_000, seed: 0, steps_per_eps: 500.0 }
    }
}

impl McSettings {
    fn dt(&self, eps: f64) -> f64 {
        eps / self.steps_per_eps
    }
}

fn validate(t: f64, eps: f64, mc: &McSettings) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("t must be finite and nonnegative, got {t}")));
    }
    if mc.n_samples == 0 {
        return Err(Error::domain("n_samples must be positive"));
    }
    if !(mc.steps_per_eps >= 100.0) {
        return Err(Error::config("steps_per_eps", "must be at least 100"));
    }
    Ok(())
}

pub(crate) fn ball_volume(r: f64) -> f64 {
    4.0 / 3.0 * PI * r.powi(3)
}

/// `(N - k) ε^{5/2}` with `N = ε^{-3}`.
pub(crate) fn prefactor(eps: f64, k: f64) -> f64 {
    (eps.powi(-3) - k) * eps.powf(2.5)
}

/// `f0^{⊗2}` on a pair state.
pub(crate) fn f0_pair(f0: &InitialData, s: &PairState<f64>) -> f64 {
    f0.value(&s.x1, &s.v1) * f0.value(&s.x2, &s.v2)
}

/// Which of the expensive channels a first-order run evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Channels {
    memory: bool,
    landau: bool,
}

/// Estimates sharing one sample stream.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderTerms {
    /// The collision term, which vanishes like `√ε`.
    pub collision: PairingEstimate,
    /// Memory term restricted to `|v₁ - v₂| ≤ a ε^{1/4}`.
    pub memory_le: PairingEstimate,
    pub memory_gt: PairingEstimate,
    /// `memory_le + memory_gt`; the value is that sum exactly.
    pub memory: PairingEstimate,
    /// The Landau collision pairing sampled on the same stream.
    pub landau: PairingEstimate,
    /// `collision + memory`.
    pub collision_plus_memory: PairingEstimate,
    /// `collision + memory - landau`, the gap to the Landau pairing with the Landau integrand as control variate.
    pub controlled_gap: PairingEstimate,
    /// The memory term without the straight-path control variate; same mean, larger error.
    pub memory_plain: PairingEstimate,
}

/// One draw of `(τ, x₁, v₁, r, v₂)`; `lag = t - τ`.
struct Draw {
    tau: f64,
    lag: f64,
    x1: Vec3,
    v1: Vec3,
    r: Vec3,
    v2: Vec3,
}

impl Draw {
    fn new<R: Rng>(u: &TestFunction, f0: &InitialData, t: f64, rng: &mut R) -> Self {
        let tau = t * rng.gen::<f64>();
        let lag = t - tau;
        let v1 = u.eta.sample_support(rng);
        let x1 = u.chi.center - v1 * lag + uniform_ball(rng) * u.chi.radius;
        let r = uniform_ball(rng);
        let v2 = f0.g.sample(rng);
        Self { tau, lag, x1, v1, r, v2 }
    }

    /// Collision-term sample, antithetic in `r`; the velocity weight `1/g(v₂)` cancels against `f0`.
    fn collision(&self, potential: &Potential, u: &TestFunction, f0: &InitialData, t: f64, eps: f64) -> f64 {
        let lever = u.transported_grad_v(&self.x1, &self.v1, self.lag).dot(&potential.eval_force(&self.r));
        if lever == 0.0 {
            return 0.0;
        }
        let weight = t * ball_volume(u.eta.radius) * ball_volume(u.chi.radius) * ball_volume(1.0);
        let shift = self.v2 * self.tau;
        let odd = f0.rho(&(self.x1 - self.r * eps - shift)) - f0.rho(&(self.x1 + self.r * eps - shift));
        prefactor(eps, 1.0) * weight * lever * f0.transported(&self.x1, &self.v1, self.tau) * 0.5 * odd
    }
}

/// Per-run constants of the first-order sampler.
struct FirstOrderContext<'a> {
    potential: &'a Potential,
    u: &'a TestFunction,
    f0: &'a InitialData,
    t: f64,
    eps: f64,
    dt: f64,
    landau_const: f64,
    cutoff: f64,
    kernel: Option<StraightKernel>,
    gl: GaussLegendre<f64>,
    which: Channels,
}

/// Channels: collision, memory ≤, memory >, memory, Landau, collision + memory,
/// collision + memory - Landau, memory without control variate.
///
/// The memory channels subtract the straight-path Duhamel integrand on the
/// same `r` and add back its exact conditional mean over `r`.
fn first_order_sample<R: Rng>(c: &FirstOrderContext, rng: &mut R) -> Result<[f64; 8]> {
    let (u, f0, eps) = (c.u, c.f0, c.eps);
    let d = Draw::new(u, f0, c.t, rng);
    let (tau, x1, v1, r, v2) = (d.tau, d.x1, d.v1, d.r, d.v2);
    let mut out = [0.0; 8];
    let lever_u = u.transported_grad_v(&x1, &v1, d.lag);
    let g2 = f0.g.value(&v2);
    if lever_u == Vec3::zeros() || g2 == 0.0 {
        return Ok(out);
    }
    let weight = c.t * ball_volume(u.eta.radius) * ball_volume(u.chi.radius);
    let pair_weight = prefactor(eps, 1.0) * weight * ball_volume(1.0);
    let lever = lever_u.dot(&c.potential.eval_force(&r));
    let w = v1 - v2;
    // (∇_1 - ∇_2)[S(τ) f0 ⊗ f0] with both particles at x1
    let h = f0.transported_grad_v(&x1, &v1, tau) * f0.transported(&x1, &v2, tau)
        - f0.transported_grad_v(&x1, &v2, tau) * f0.transported(&x1, &v1, tau);
    out[0] = d.collision(c.potential, u, f0, c.t, eps);
    if c.which.memory {
        let pair = PairState::new(x1, v1, x1 - r * eps, v2, eps);
        let gt = gamma_tilde(c.potential, |s| f0_pair(f0, s), &pair, tau, c.dt)?;
        let raw = pair_weight * lever * gt / g2;
        let mut m = raw;
        if let (Some(k), true) = (&c.kernel, w != Vec3::zeros()) {
            let window = tau / eps;
            let line = line_integral(c.potential, &c.gl, &r, &w, window);
            let straight = -pair_weight * eps.sqrt() * lever * line.dot(&h) / g2;
            let mean = -(eps.powi(-3) - 1.0) * eps.powi(3) * weight * lever_u.dot(&(k.matrix(&w, window) * h)) / g2;
            m = raw - straight + mean;
        }
        if w.norm() <= c.cutoff * eps.powf(0.25) {
            out[1] = m;
        } else {
            out[2] = m;
        }
        out[3] = m;
        out[7] = raw;
    }
    if c.which.landau && w != Vec3::zeros() {
        let a = a_matrix(&w, c.landau_const)?;
        out[4] = -weight * lever_u.dot(&(a.entries * h)) / g2;
    }
    out[5] = out[0] + out[3];
    out[6] = out[5] - out[4];
    Ok(out)
}

fn first_order_run(
    potential: &Potential,
    u: &TestFunction,
    f0: &InitialData,
    t: f64,
    eps: f64,
    mc: &McSettings,
    which: Channels,
) -> Result<FirstOrderTerms> {
    validate(t, eps, mc)?;
    let s = if t == 0.0 {
        [Stat { mean: 0.0, std_error: 0.0, n: mc.n_samples }; 8]
    } else {
        let ctx = FirstOrderContext {
            potential,
            u,
            f0,
            t,
            eps,
            dt: mc.dt(eps),
            landau_const: if which.landau { potential.landau_constant()? } else { 0.0 },
            cutoff: potential.cutoff_constant(),
            kernel: if which.memory && !potential.is_zero() { Some(StraightKernel::new(potential)?) } else { None },
            gl: GaussLegendre::new(8),
            which,
        };
        estimate(mc.n_samples, mc.seed, |rng| first_order_sample(&ctx, rng))?
    };
    let e = |k: usize| PairingEstimate::from_stat(s[k], eps, t);
    let mut memory = e(3);
    memory.value = s[1].mean + s[2].mean;
    Ok(FirstOrderTerms {
        collision: e(0),
        memory_le: e(1),
        memory_gt: e(2),
        memory,
        landau: e(4),
        collision_plus_memory: e(5),
        controlled_gap: e(6),
        memory_plain: e(7),
    })
}

/// The collision term of the first-order expansion, `O(√ε)` for smooth data.
pub fn collision_term_first(
    potential: &Potential,
    u: &TestFunction,
    f0: &InitialData,
    t: f64,
    eps: f64,
    mc: &McSettings,
) -> Result<PairingEstimate> {
    let which = Channels { memory: false, landau: false };
    Ok(first_order_run(potential, u, f0, t, eps, mc, which)?.collision)
}

/// The collision term at every ε of a ladder, evaluated on one shared sample stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionLadder {
    pub estimates: Vec<PairingEstimate>,
    pub fit: Option<SlopeFit>,
    /// Monte-Carlo standard error of the fitted slope, including the correlation between ε values.
    pub slope_error: f64,
}

/// [`collision_term_first`] along a ladder with common random numbers.
///
/// The slope error uses the delta method on the shared stream: the slope is
/// `Σ c_i log|m_i|`, so its error is the standard error of `Σ c_i X_i / m_i`,
/// computed in a second pass over the same draws.
pub fn collision_ladder(
    potential: &Potential,
    u: &TestFunction,
    f0: &InitialData,
    t: f64,
    ladder: &[f64],
    mc: &McSettings,
) -> Result<CollisionLadder> {
    check_ladder(ladder)?;
    for &eps in ladder {
        validate(t, eps, mc)?;
    }
    let k = ladder.len();
    let pass = |coef: Option<&[f64]>| {
        mc::estimate_channels(mc.n_samples, mc.seed, coef.map_or(k, |_| 1), |rng, out| {
            let d = Draw::new(u, f0, t, rng);
            for (i, &eps) in ladder.iter().enumerate() {
                let x = d.collision(potential, u, f0, t, eps);
                match coef {
                    None => out[i] = x,
                    Some(c) => out[0] += c[i] * x,
                }
            }
            Ok(())
        })
    };
    let stats = if t == 0.0 { vec![Stat { mean: 0.0, std_error: 0.0, n: mc.n_samples }; k] } else { pass(None)? };
    let estimates: Vec<PairingEstimate> =
        stats.iter().zip(ladder).map(|(s, &eps)| PairingEstimate::from_stat(*s, eps, t)).collect();
    let abs: Vec<f64> = estimates.iter().map(|e| e.value.abs()).collect();
    let fit = fit_loglog("collision", ladder, &abs);
    let mut slope_error = 0.0;
    if fit.is_some() {
        let lx: Vec<f64> = ladder.iter().map(|e| e.ln()).collect();
        let mx = lx.iter().sum::<f64>() / k as f64;
        let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
        let coef: Vec<f64> = lx.iter().zip(&estimates).map(|(a, e)| (a - mx) / sxx / e.value).collect();
        slope_error = pass(Some(&coef))?[0].std_error;
    }
    Ok(CollisionLadder { estimates, fit, slope_error })
}

/// The memory term `𝒯_ε`, one backward two-body solve per sample.
pub fn memory_term(
    potential: &Potential,
    u: &TestFunction,
    f0: &InitialData,
    t: f64,
    eps: f64,
    mc: &McSettings,
) -> Result<PairingEstimate> {
    let which = Channels { memory: true, landau: false };
    Ok(first_order_run(potential, u, f0, t, eps, mc, which)?.memory)
}

/// `(𝒯^≤, 𝒯^>)` split at `|v₁ - v₂| = a ε^{1/4}` on the stream of [`memory_term`].
pub fn memory_term_split(
    potential: &Potential,
    u: &TestFunction,
    f0: &InitialData,
    t: f64,
    eps: f64,
    mc: &McSettings,
) -> Result<(PairingEstimate, PairingEstimate)> {
    let which = Channels { memory: true, landau: false };
    let r = first_order_run(potential, u, f0, t, eps, mc, which)?;
    Ok((r.memory_le, r.memory_gt))
}

/// Collision, memory and sampled Landau terms on one stream.
pub fn first_order_terms(
    potential: &Potential,
    u: &TestFunction,
    f0: &InitialData,
    t: f64,
    eps: f64,
    mc: &McSettings,
) -> Result<FirstOrderTerms> {
    first_order_run(potential, u, f0, t, eps, mc, Channels { memory: true, landau: true })
}

/// `⟨u, g̃₁(t)⟩ = ⟨u, S(t) f0⟩ + collision + memory`. The free part is a deterministic quadrature.
pub fn g1_pairing(
    potential: &Potential,
    u: &TestFunction,
    f0: &InitialData,
    t: f64,
    eps: f64,
    mc: &McSettings,
    res: &PairingResolution,
) -> Result<PairingEstimate> {
    let which = Channels { memory: true, landau: false };
    let mut e = first_order_run(potential, u, f0, t, eps, mc, which)?.collision_plus_memory;
    e.value += free_pairing(u, f0, t, res);
    Ok(e)
}

/// `⟨u, γ̃₁⟩`, identically zero because a single particle feels no force.
pub fn gamma1_pairing(_u: &TestFunction, _f0: &InitialData, _t: f64, _eps: f64) -> f64 {
    0.0
}

/// Measure of `{s ∈ [0, t] : |d - w s| < ρ}`.
pub(crate) fn chord_time(d: &Vec3, w: &Vec3, rho: f64, t: f64) -> f64 {
    let ww = w.norm_squared();
    let dw = d.dot(w);
    let c = d.norm_squared() - rho * rho;
    if ww == 0.0 {
        return if c < 0.0 { t } else { 0.0 };
    }
    let disc = dw * dw - ww * c;
    if disc <= 0.0 {
        return 0.0;
    }
    let root = disc.sqrt();
    let lo = ((dw - root) / ww).max(0.0);
    let hi = ((dw + root) / ww).min(t);
    (hi - lo).max(0.0)
}

/// `⟨u₁ ⊗ u₂, γ̃₂(t)⟩` with `γ̃₂(t) = f0^{⊗2}(Z(-t)) - f0^{⊗2}(Z - V t)`.
///
/// `γ̃₂` vanishes unless the free backward path of the pair enters the
/// interaction ball before time `t`, so `x₂` is drawn from that tube: a
/// backward time `s` uniform on `[0, t]` and a point of the ε-ball around
/// the relative position at `s`.
pub fn gamma2_pairing(
    potential: &Potential,
    u1: &TestFunction,
    u2: &TestFunction,
    f0: &InitialData,
    t: f64,
    eps: f64,
    mc: &McSettings,
) -> Result<PairingEstimate> {
    validate(t, eps, mc)?;
    if t == 0.0 || potential.is_zero() {
        return Ok(PairingEstimate::exact(0.0, mc.n_samples, eps, t));
    }
    let dt = mc.dt(eps);
    let outer = ball_volume(u1.chi.radius) * ball_volume(u1.eta.radius) * ball_volume(u2.eta.radius);
    let tube = t * ball_volume(eps);
    let [s] = estimate(mc.n_samples, mc.seed, |rng| {
        let x1 = u1.chi.sample_support(rng);
        let v1 = u1.eta.sample_support(rng);
        let v2 = u2.eta.sample_support(rng);
        let w = v1 - v2;
        let d = w * (t * rng.gen::<f64>()) + uniform_ball(rng) * eps;
        let x2 = x1 - d;
        let uu = u1.value(&x1, &v1) * u2.value(&x2, &v2);
        let chord = chord_time(&d, &w, eps, t);
        if uu == 0.0 || chord == 0.0 {
            return Ok([0.0]);
        }
        let pair = PairState::new(x1, v1, x2, v2, eps);
        let gt = gamma_tilde(potential, |s| f0_pair(f0, s), &pair, t, dt)?;
        Ok([outer * uu * gt * tube / chord])
    })?;
    Ok(PairingEstimate::from_stat(s, eps, t))
}

fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::config("eps_ladder", "must not be empty"));
    }
    if ladder.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::config("eps_ladder", "must be strictly decreasing"));
    }
    Ok(())
}

/// `b ≤ a + 3 sqrt(σ_a^2 + σ_b^2)` for consecutive entries.
fn non_increasing_within_3sigma(values: &[f64], sigma: &[f64]) -> bool {
    values
        .windows(2)
        .zip(sigma.windows(2))
        .all(|(v, s)| v[1] <= v[0] + 3.0 * s[0].hypot(s[1]))
}

/// Gap between `⟨u, g̃₁(t)⟩` and the first-order Landau pairing along an ε ladder.
///
/// Besides the plain gap the report carries the gap with the sampled Landau
/// integrand as control variate, which measures the distance to the exact
/// Landau pairing without the grid error of the reference.
pub fn consistency_experiment(
    potential: &Potential,
    f0: &InitialData,
    u: &TestFunction,
    t: f64,
    ladder: &[f64],
    mc: &McSettings,
    res: &PairingResolution,
) -> Result<ExperimentReport> {
    check_ladder(ladder)?;
    let landau_const = potential.landau_constant()?;
    let free = free_pairing(u, f0, t, res);
    let landau = landau_collision_pairing(u, f0, t, landau_const, res)?;
    let reference = free + landau;
    let mut rep = ExperimentReport::new(
        "consistency",
        &[
            "eps",
            "value",
            "std_error",
            "reference",
            "gap",
            "gap_cv",
            "gap_cv_std_error",
            "collision",
            "memory",
            "memory_std_error",
            "landau_mc",
            "landau_mc_std_error",
        ],
    );
    for &eps in ladder {
        let r = first_order_terms(potential, u, f0, t, eps, mc)?;
        let value = free + r.collision_plus_memory.value;
        rep.push_row(vec![
            eps,
            value,
            r.collision_plus_memory.std_error,
            reference,
            (value - reference).abs(),
            r.controlled_gap.value.abs(),
            r.controlled_gap.std_error,
            r.collision.value,
            r.memory.value,
            r.memory.std_error,
            r.landau.value,
            r.landau.std_error,
        ]);
    }
    rep.note(format!("free pairing {free:e}, Landau collision pairing {landau:e}, A = {landau_const:e}"));
    if ladder.len() < 2 {
        return Ok(rep);
    }
    let col = |n: &str| rep.column(n).unwrap();
    let (eps, gap, sd) = (col("eps"), col("gap"), col("std_error"));
    let (gcv, gcv_sd) = (col("gap_cv"), col("gap_cv_std_error"));
    let (lmc, lmc_sd) = (col("landau_mc"), col("landau_mc_std_error"));
    let last = ladder.len() - 1;
    if let Some(f) = fit_loglog("gap", &eps, &gap) {
        rep.fits.push(f);
    }
    if let Some(f) = fit_loglog("gap_cv", &eps, &gcv) {
        rep.fits.push(f);
    }
    rep.check(
        "gap non-increasing beyond 3 sigma",
        non_increasing_within_3sigma(&gap, &sd),
        format!("gaps {gap:?}, sigma {sd:?}"),
    );
    rep.check(
        "gap at smallest eps at most half the gap at largest eps",
        gap[last] <= 0.5 * gap[0],
        format!("{:e} vs {:e}", gap[last], gap[0]),
    );
    rep.check(
        "control-variate gap non-increasing beyond 3 sigma",
        non_increasing_within_3sigma(&gcv, &gcv_sd),
        format!("gaps {gcv:?}, sigma {gcv_sd:?}"),
    );
    let worst = lmc
        .iter()
        .zip(&lmc_sd)
        .map(|(m, s)| (m - landau).abs() / (3.0 * s + 0.02 * landau.abs()))
        .fold(0.0, f64::max);
    rep.check(
        "sampled Landau integrand matches the grid Landau pairing",
        worst <= 1.0,
        format!("grid {landau:e}, sampled {lmc:?}; worst ratio to 3 sigma + 2% is {worst:.3}"),
    );
    rep.note(format!(
        "gap at smallest eps is {:.3} of the largest-eps gap (3 sigma = {:e})",
        gap[last] / gap[0],
        3.0 * sd[last]
    ));
    Ok(rep)
}

/// Collision term and memory split along an ε ladder.
pub fn split_experiment(
    potential: &Potential,
    f0: &InitialData,
    u: &TestFunction,
    t: f64,
    ladder: &[f64],
    mc: &McSettings,
) -> Result<ExperimentReport> {
    check_ladder(ladder)?;
    let mut rep = ExperimentReport::new(
        "first-order-terms",
        &[
            "eps",
            "collision",
            "collision_std_error",
            "memory_le",
            "memory_le_std_error",
            "memory_gt",
            "memory_gt_std_error",
            "memory",
            "memory_std_error",
        ],
    );
    let which = Channels { memory: true, landau: false };
    for &eps in ladder {
        let r = first_order_run(potential, u, f0, t, eps, mc, which)?;
        rep.push_row(vec![
            eps,
            r.collision.value,
            r.collision.std_error,
            r.memory_le.value,
            r.memory_le.std_error,
            r.memory_gt.value,
            r.memory_gt.std_error,
            r.memory.value,
            r.memory.std_error,
        ]);
        let exact = r.memory_le.value + r.memory_gt.value == r.memory.value;
        rep.check(&format!("split sums to total at eps {eps}"), exact, "shared stream");
    }
    if ladder.len() < 2 {
        return Ok(rep);
    }
    let col = |n: &str| rep.column(n).unwrap();
    let eps = col("eps");
    let abs = |v: Vec<f64>| v.into_iter().map(f64::abs).collect::<Vec<_>>();
    let (le, le_sd) = (abs(col("memory_le")), col("memory_le_std_error"));
    let gt = abs(col("memory_gt"));
    let cl = collision_ladder(potential, u, f0, t, ladder, mc)?;
    match &cl.fit {
        Some(f) => {
            let (lo, hi) = (f.slope - 3.0 * cl.slope_error, f.slope + 3.0 * cl.slope_error);
            rep.check(
                "collision slope 0.5 +- 0.15 with 3 sigma band inside",
                lo >= 0.35 && hi <= 0.65,
                format!("slope {:.3}, 3 sigma band [{lo:.3}, {hi:.3}] (shared stream)", f.slope),
            );
            rep.fits.push(f.clone());
        }
        None => rep.check("collision slope 0.5 +- 0.15 with 3 sigma band inside", false, "no fit: zero estimate"),
    }
    match (fit_loglog("memory_le", &eps, &le), slope_error_from_noise(&eps, &le, &le_sd)) {
        (Some(f), Some(noise)) => {
            rep.check(
                "memory_le slope at least 0.2",
                f.slope >= 0.2,
                format!("slope {:.3} +- {:.3} (MC)", f.slope, noise),
            );
            rep.fits.push(f);
        }
        _ => rep.check("memory_le slope at least 0.2", false, "no fit: zero estimate"),
    }
    let ratio: Vec<f64> = le.iter().zip(&gt).map(|(a, b)| a / b).collect();
    rep.check(
        "memory_le / memory_gt decreasing",
        ratio.windows(2).all(|w| w[1] < w[0]),
        format!("ratios {ratio:?}"),
    );
    Ok(rep)
}

/// `|⟨u ⊗ u, γ̃₂(t)⟩|` along an ε ladder.
pub fn gamma2_limit_check(
    potential: &Potential,
    f0: &InitialData,
    u: &TestFunction,
    t: f64,
    ladder: &[f64],
    mc: &McSettings,
) -> Result<ExperimentReport> {
    check_ladder(ladder)?;
    let mut rep = ExperimentReport::new("gamma2", &["eps", "value", "std_error", "abs_value"]);
    for &eps in ladder {
        let e = gamma2_pairing(potential, u, u, f0, t, eps, mc)?;
        rep.push_row(vec![eps, e.value, e.std_error, e.value.abs()]);
    }
    rep.check("gamma1 pairing is zero", gamma1_pairing(u, f0, t, ladder[0]) == 0.0, "identity");
    if ladder.len() > 1 {
        let (eps, abs) = (rep.column("eps").unwrap(), rep.column("abs_value").unwrap());
        if let Some(f) = fit_loglog("gamma2", &eps, &abs) {
            rep.fits.push(f);
        }
        rep.check(
            "|<u, gamma2>| decreasing",
            abs.windows(2).all(|w| w[1] < w[0]),
            format!("{abs:?}"),
        );
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::{BiMaxwellian, Bump};

    fn setup() -> (Potential, InitialData, TestFunction) {
        let p = Potential::polynomial(3, 0.2).unwrap();
        let f0 = InitialData::new(
            Bump::new(Vec3::zeros(), 1.0).unwrap(),
            BiMaxwellian::new(1.0, Vec3::new(0.0, 0.0, 1.0)).unwrap(),
        );
        let u = TestFunction::new(
            Bump::new(Vec3::new(0.0, 0.0, 0.2), 0.8).unwrap(),
            Bump::new(Vec3::new(0.0, 0.0, 0.5), 1.5).unwrap(),
        );
        (p, f0, u)
    }

    fn mc(n: usize) -> McSettings {
        McSettings { n_samples: n, seed: 11, steps_per_eps: 200.0 }
    }

    #[test]
    fn zero_time_and_zero_potential_are_exact() {
        let (p, f0, u) = setup();
        let res = PairingResolution::default();
        let g = g1_pairing(&p, &u, &f0, 0.0, 0.1, &mc(100), &res).unwrap();
        assert_eq!(g.value, free_pairing(&u, &f0, 0.0, &res));
        let z = Potential::zero();
        assert_eq!(collision_term_first(&z, &u, &f0, 0.5, 0.1, &mc(500)).unwrap().value, 0.0);
        assert_eq!(memory_term(&z, &u, &f0, 0.5, 0.1, &mc(500)).unwrap().value, 0.0);
        let g = g1_pairing(&z, &u, &f0, 0.5, 0.1, &mc(500), &res).unwrap();
        assert_eq!(g.value, free_pairing(&u, &f0, 0.5, &res));
        assert_eq!(gamma2_pairing(&z, &u, &u, &f0, 0.5, 0.1, &mc(100)).unwrap().value, 0.0);
        assert_eq!(gamma2_pairing(&p, &u, &u, &f0, 0.0, 0.1, &mc(100)).unwrap().value, 0.0);
        assert_eq!(gamma1_pairing(&u, &f0, 0.5, 0.1), 0.0);
    }

    #[test]
    fn split_sums_exactly_and_is_seeded() {
        let (p, f0, u) = setup();
        let (le, gt) = memory_term_split(&p, &u, &f0, 0.5, 0.2, &mc(3000)).unwrap();
        let total = memory_term(&p, &u, &f0, 0.5, 0.2, &mc(3000)).unwrap();
        assert_eq!(le.value + gt.value, total.value);
        assert!(total.value != 0.0);
        let again = memory_term(&p, &u, &f0, 0.5, 0.2, &mc(3000)).unwrap();
        assert_eq!(total, again);
    }

    #[test]
    fn rejects_bad_input() {
        let (p, f0, u) = setup();
        assert!(collision_term_first(&p, &u, &f0, 0.5, 0.1, &mc(0)).is_err());
        assert!(collision_term_first(&p, &u, &f0, 0.5, 1.5, &mc(10)).is_err());
        assert!(collision_term_first(&p, &u, &f0, -1.0, 0.1, &mc(10)).is_err());
        let res = PairingResolution::default();
        assert!(consistency_experiment(&p, &f0, &u, 0.5, &[0.1, 0.2], &mc(10), &res).is_err());
    }

    #[test]
    fn chord_time_of_a_crossing() {
        let d = Vec3::new(2.0, 0.0, 0.0);
        let w = Vec3::new(1.0, 0.0, 0.0);
        assert!((chord_time(&d, &w, 1.0, 10.0) - 2.0).abs() < 1e-12);
        assert!((chord_time(&d, &w, 1.0, 2.0) - 1.0).abs() < 1e-12);
        assert_eq!(chord_time(&Vec3::new(0.0, 2.0, 0.0), &w, 1.0, 10.0), 0.0);
    }

    #[test]
    fn sampled_landau_integrand_matches_grid_pairing() {
        let (p, f0, u) = setup();
        let a = p.landau_constant().unwrap();
        let res = PairingResolution { grid_n: 16, n_tau: 8, ..Default::default() };
        let grid = landau_collision_pairing(&u, &f0, 0.5, a, &res).unwrap();
        let which = Channels { memory: false, landau: true };
        let r = first_order_run(&p, &u, &f0, 0.5, 0.1, &mc(200_000), which).unwrap();
        assert!(
            (r.landau.value - grid).abs() < 3.0 * r.landau.std_error + 0.1 * grid.abs(),
            "{:?} vs {grid}",
            r.landau
        );
    }

    #[test]
    fn control_variate_keeps_the_mean() {
        let (p, f0, u) = setup();
        let r = first_order_run(&p, &u, &f0, 0.5, 0.1, &mc(20_000), Channels { memory: true, landau: false }).unwrap();
        let (a, b) = (r.memory, r.memory_plain);
        assert!(a.std_error < 0.5 * b.std_error, "{a:?} {b:?}");
        assert!((a.value - b.value).abs() < 3.0 * b.std_error);
    }

    #[test]
    fn collision_ladder_matches_single_runs() {
        let (p, f0, u) = setup();
        let ladder = [0.2, 0.1];
        let cl = collision_ladder(&p, &u, &f0, 0.5, &ladder, &mc(5000)).unwrap();
        for (e, &eps) in cl.estimates.iter().zip(&ladder) {
            assert_eq!(*e, collision_term_first(&p, &u, &f0, 0.5, eps, &mc(5000)).unwrap());
        }
        assert!(cl.slope_error > 0.0 && cl.slope_error < 0.1);
    }

    proptest::proptest! {
        #[test]
        fn chord_time_matches_a_fine_grid(dx in -2.0..2.0f64, dy in -1.0..1.0f64, wx in -3.0..3.0f64, wy in -1.0..1.0f64, t in 0.1..2.0f64) {
            let (d, w) = (Vec3::new(dx, dy, 0.0), Vec3::new(wx, wy, 0.0));
            let n = 200_000;
            let h = t / n as f64;
            let inside = (0..n).filter(|k| (d - w * ((*k as f64 + 0.5) * h)).norm() < 0.7).count();
            proptest::prop_assert!((chord_time(&d, &w, 0.7, t) - inside as f64 * h).abs() <= 2.0 * h);
        }
    }
}
