use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use super::landau::LandauOperator;
use crate::error::{Error, Result};
use crate::phase::{InitialData, TestFunction};
use crate::quad::{simpson_weights, BallQuadrature, GaussLegendre};
use crate::Vec3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingResolution {
    /// Velocity grid points per axis for the collision operator.
    pub grid_n: usize,
    /// Simpson subintervals of `[0, t]`.
    pub n_tau: usize,
    /// Gauss nodes in the cylindrical radius and axial direction for axisymmetric data.
    pub n_radial: usize,
    pub n_axial: usize,
    /// Gauss nodes per direction of the 3-D spatial rule used otherwise.
    pub n_spatial: usize,
    /// Ball rule `(radial, polar, azimuth)` for the free pairing, applied in both `x` and `v`.
    pub free_rule: (usize, usize, usize),
}

impl Default for PairingResolution {
    fn default() -> Self {
        Self {
            grid_n: 32,
            n_tau: 16,
            n_radial: 10,
            n_axial: 16,
            n_spatial: 8,
            free_rule: (12, 10, 12),
        }
    }
}

/// `⟨u, S(t) f0⟩ = ∫∫ u(x, v) f0(x - v t, v)` by a product ball rule over the support of `u`.
pub fn free_pairing(u: &TestFunction, f0: &InitialData, t: f64, res: &PairingResolution) -> f64 {
    let (nr, np, na) = res.free_rule;
    let bx = BallQuadrature::<f64>::new(nr, np, na, u.chi.radius);
    let bv = BallQuadrature::<f64>::new(nr, np, na, u.eta.radius);
    let partial: Vec<f64> = (0..bv.len())
        .into_par_iter()
        .map(|j| {
            let v = bv.points[j] + u.eta.center;
            let g = f0.g.value(&v);
            if g == 0.0 {
                return 0.0;
            }
            let mut acc = 0.0;
            for (px, wx) in bx.points.iter().zip(&bx.weights) {
                let x = px + u.chi.center;
                acc += wx * u.value(&x, &v) * f0.rho(&(x - v * t));
            }
            acc * g * bv.weights[j]
        })
        .collect();
    partial.iter().sum()
}

/// Spatial nodes `(y, weight)` covering the set where `ψ_y(v) = u(y + v·lag, v)` can be nonzero.
fn spatial_nodes(u: &TestFunction, f0: &InitialData, lag: f64, res: &PairingResolution) -> Vec<(Vec3, f64)> {
    let center = u.chi.center - u.eta.center * lag;
    let radius = u.chi.radius + u.eta.radius * lag.abs();
    let mut nodes = Vec::new();
    if u.axisymmetric() && f0.axisymmetric() {
        let gr = GaussLegendre::<f64>::new(res.n_radial);
        let gz = GaussLegendre::<f64>::new(res.n_axial);
        for (r, wr) in gr.on(0.0, radius) {
            for (z, wz) in gz.on(center.z - radius, center.z + radius) {
                if r * r + (z - center.z).powi(2) < radius * radius {
                    nodes.push((Vec3::new(r, 0.0, z), wr * wz * 2.0 * std::f64::consts::PI * r));
                }
            }
        }
    } else {
        let g = GaussLegendre::<f64>::new(res.n_spatial);
        for (a, wa) in g.on(-radius, radius) {
            for (b, wb) in g.on(-radius, radius) {
                for (c, wc) in g.on(-radius, radius) {
                    let d = Vec3::new(a, b, c);
                    if d.norm() < radius {
                        nodes.push((center + d, wa * wb * wc));
                    }
                }
            }
        }
    }
    nodes
}

/// `⟨u, S(t) f0⟩ + ∫_0^t dτ ⟨u, S(t - τ) Q_L(S(τ) f0, S(τ) f0)⟩`.
///
/// At every spatial node `y` the collision integral is taken in weak form
/// against `ψ_y(v) = u(y + v (t - τ), v)`, with `Q_L` acting on
/// `v ↦ f0(y - v τ, v)` sampled on the velocity grid. Gradients of the
/// sampled density are analytic.
pub fn landau_first_order_pairing(
    u: &TestFunction,
    f0: &InitialData,
    t: f64,
    landau_const: f64,
    res: &PairingResolution,
) -> Result<f64> {
    let free = free_pairing(u, f0, t, res);
    Ok(free + landau_collision_pairing(u, f0, t, landau_const, res)?)
}

/// The collision part of [`landau_first_order_pairing`] alone.
pub fn landau_collision_pairing(
    u: &TestFunction,
    f0: &InitialData,
    t: f64,
    landau_const: f64,
    res: &PairingResolution,
) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("pairing time must be nonnegative, got {t}")));
    }
    if t == 0.0 || landau_const == 0.0 {
        return Ok(0.0);
    }
    let half = f0.g.envelope().max(u.eta.center.amax() + u.eta.radius);
    let spec = GridSpec::cube(res.grid_n, half)?;
    let op = LandauOperator::new(&spec, landau_const)?;
    // grid nodes inside the velocity support of u
    let v_support: Vec<usize> = (0..spec.len())
        .filter(|&i| u.eta.value(&spec.point(i)) > 0.0)
        .collect();
    let n_tau = res.n_tau + res.n_tau % 2;
    let h = t / n_tau as f64;
    let tau_w = simpson_weights(n_tau, h);
    let mut total = 0.0;
    for (it, wt) in tau_w.iter().enumerate() {
        let tau = it as f64 * h;
        let lag = t - tau;
        let nodes = spatial_nodes(u, f0, lag, res);
        let parts: Vec<Result<f64>> = nodes
            .par_iter()
            .map(|(y, wy)| {
                let mut f = vec![0.0; spec.len()];
                let mut g = [vec![0.0; spec.len()], vec![0.0; spec.len()], vec![0.0; spec.len()]];
                let mut any = false;
                for idx in 0..spec.len() {
                    let v = spec.point(idx);
                    let val = f0.transported(y, &v, tau);
                    if val != 0.0 {
                        any = true;
                        f[idx] = val;
                        let d = f0.transported_grad_v(y, &v, tau);
                        for a in 0..3 {
                            g[a][idx] = d[a];
                        }
                    }
                }
                if !any {
                    return Ok(0.0);
                }
                let j = op.flux_with_gradient(&f, &g)?;
                let mut acc = 0.0;
                for &idx in &v_support {
                    let v = spec.point(idx);
                    let r = u.transported_grad_v(y, &v, lag);
                    acc -= spec.weight(idx) * (r.x * j[0][idx] + r.y * j[1][idx] + r.z * j[2][idx]);
                }
                Ok(acc * wy)
            })
            .collect();
        let mut at_tau = 0.0;
        for p in parts {
            at_tau += p?;
        }
        total += wt * at_tau;
    }
    Ok(total)
}
