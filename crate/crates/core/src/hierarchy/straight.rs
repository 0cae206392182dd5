//! The straight-path kernel with a finite window, used as a control-variate mean.

use rayon::prelude::*;

use crate::error::Result;
use crate::quad::{BallQuadrature, GaussLegendre};
use crate::{Mat3, Potential, Vec3};

/// `∫_0^T F(r - w σ) dσ` for `|r| < 1`, integrating only where the line is inside the unit ball.
pub(crate) fn line_integral(potential: &Potential, gl: &GaussLegendre<f64>, r: &Vec3, w: &Vec3, window: f64) -> Vec3 {
    let ww = w.norm_squared();
    if ww == 0.0 || window <= 0.0 {
        return potential.eval_force(r) * window.max(0.0);
    }
    let rw = r.dot(w);
    let exit = (rw + (rw * rw + ww * (1.0 - r.norm_squared()).max(0.0)).sqrt()) / ww;
    gl.on(0.0, window.min(exit)).map(|(s, wt)| potential.eval_force(&(r - w * s)) * wt).sum()
}

/// `K(w, T) = ∫_{|r|<1} dr F(r) ⊗ ∫_0^T F(r - w σ) dσ`.
///
/// By rotation invariance `K(w, T) = (k_⊥(s) (I - ŵ⊗ŵ) + k_∥(s) ŵ⊗ŵ) / |w|`
/// with `s = |w| T`. Both scalars are tabulated on `[0, 2]` together with
/// their exact `s`-derivatives and interpolated by cubic Hermite; for `s ≥ 2`
/// the line has left the ball and `K = a(w)`.
pub(crate) struct StraightKernel {
    h: f64,
    perp: Vec<[f64; 2]>,
    par: Vec<[f64; 2]>,
    landau_const: f64,
}

const S_MAX: f64 = 2.0;
const NODES: usize = 128;

impl StraightKernel {
    pub fn new(potential: &Potential) -> Result<Self> {
        let landau_const = potential.landau_constant()?;
        let ball = BallQuadrature::<f64>::new(24, 12, 24, 1.0);
        let gl = GaussLegendre::<f64>::new(8);
        let h = S_MAX / NODES as f64;
        let z = Vec3::z();
        let rows: Vec<([f64; 2], [f64; 2])> = (0..=NODES)
            .into_par_iter()
            .map(|j| {
                let s = h * j as f64;
                let (mut k, mut dk) = (Mat3::zeros(), Mat3::zeros());
                for (r, wt) in ball.points.iter().zip(&ball.weights) {
                    let fr = potential.eval_force(r) * *wt;
                    k += fr * line_integral(potential, &gl, r, &z, s).transpose();
                    dk += fr * potential.eval_force(&(r - z * s)).transpose();
                }
                (
                    [0.5 * (k[(0, 0)] + k[(1, 1)]), 0.5 * (dk[(0, 0)] + dk[(1, 1)])],
                    [k[(2, 2)], dk[(2, 2)]],
                )
            })
            .collect();
        let (perp, par) = rows.into_iter().unzip();
        Ok(Self { h, perp, par, landau_const })
    }

    fn interp(&self, table: &[[f64; 2]], s: f64) -> f64 {
        let j = ((s / self.h) as usize).min(NODES - 1);
        let x = s / self.h - j as f64;
        let ([y0, d0], [y1, d1]) = (table[j], table[j + 1]);
        let (x2, x3) = (x * x, x * x * x);
        (2.0 * x3 - 3.0 * x2 + 1.0) * y0
            + (x3 - 2.0 * x2 + x) * self.h * d0
            + (-2.0 * x3 + 3.0 * x2) * y1
            + (x3 - x2) * self.h * d1
    }

    /// `K(w, T)`; `w` must be nonzero.
    pub fn matrix(&self, w: &Vec3, window: f64) -> Mat3 {
        let n = w.norm();
        let e = w / n;
        let p = e * e.transpose();
        let s = n * window;
        let (kp, kz) = if s >= S_MAX {
            (self.landau_const, 0.0)
        } else {
            (self.interp(&self.perp, s), self.interp(&self.par, s))
        };
        ((Mat3::identity() - p) * kp + p * kz) / n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_window_is_the_landau_kernel() {
        let p = Potential::polynomial(3, 1.0).unwrap();
        let k = StraightKernel::new(&p).unwrap();
        let a = p.landau_constant().unwrap();
        let (perp, par) = (k.perp[NODES], k.par[NODES]);
        assert!((perp[0] - a).abs() < 1e-6 * a, "{} vs {a}", perp[0]);
        assert!(par[0].abs() < 1e-6 * a);
        assert!(perp[1].abs() < 1e-9 && par[1].abs() < 1e-9);
        assert_eq!(k.perp[0][0], 0.0);
    }

    #[test]
    fn interpolation_matches_direct_quadrature() {
        let p = Potential::polynomial(3, 1.0).unwrap();
        let k = StraightKernel::new(&p).unwrap();
        let w = Vec3::new(0.3, -1.1, 0.4);
        let window = 0.77 / w.norm();
        let ball = BallQuadrature::<f64>::new(24, 12, 24, 1.0);
        let gl = GaussLegendre::<f64>::new(8);
        let mut direct = Mat3::zeros();
        for (r, wt) in ball.points.iter().zip(&ball.weights) {
            direct += p.eval_force(r) * line_integral(&p, &gl, r, &w, window).transpose() * *wt;
        }
        // the ball rule is not rotation invariant, so the tilted direct sum differs at the 1e-6 level
        let err = (k.matrix(&w, window) - direct).norm() / direct.norm();
        assert!(err < 1e-5, "{err}");
    }
}
