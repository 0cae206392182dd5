use num_complex::Complex64;

use super::fft::{fft_friendly, Fft3};
use super::grid::{centered_gradient, DensityGrid, GridSpec};
use crate::error::{Error, Result};
use crate::Vec3;

const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

#[inline]
fn pair_index(a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    PAIRS.iter().position(|p| *p == (a, b)).unwrap()
}

/// Discrete Landau operator on a fixed velocity grid.
///
/// The `v1` integral is a trapezoid sum evaluated as a zero-padded FFT
/// convolution. The kernel cell at `w = 0` is set to zero. Kernel transforms
/// are computed once per grid.
pub struct LandauOperator {
    spec: GridSpec,
    landau_const: f64,
    fft: Fft3,
    m: usize,
    /// Transforms of the six independent entries of `a(w)`; real because `a` is even.
    kernel_hat: Vec<Vec<f64>>,
}

impl LandauOperator {
    pub fn new(spec: &GridSpec, landau_const: f64) -> Result<Self> {
        if spec.n < 16 {
            return Err(Error::config("grid.n", "the Landau operator needs at least 16 points per axis"));
        }
        let n = spec.n;
        let m = fft_friendly(2 * n - 1);
        let fft = Fft3::new(m);
        let h = spec.spacing();
        let wrap = |i: usize| -> Option<f64> {
            // index i of the padded axis stands for offset i or i - m
            if i < n {
                Some(i as f64)
            } else if i + n > m {
                Some(i as f64 - m as f64)
            } else {
                None
            }
        };
        let mut kernel_hat = Vec::with_capacity(6);
        for &(a, b) in &PAIRS {
            let mut buf = vec![Complex64::default(); m * m * m];
            for i in 0..m {
                let Some(oi) = wrap(i) else { continue };
                for j in 0..m {
                    let Some(oj) = wrap(j) else { continue };
                    for k in 0..m {
                        let Some(ok) = wrap(k) else { continue };
                        let w = Vec3::new(oi * h.x, oj * h.y, ok * h.z);
                        let r2 = w.norm_squared();
                        if r2 == 0.0 {
                            continue;
                        }
                        let delta = if a == b { 1.0 } else { 0.0 };
                        let val = landau_const / r2.sqrt() * (delta - w[a] * w[b] / r2);
                        buf[(i * m + j) * m + k] = Complex64::new(val, 0.0);
                    }
                }
            }
            fft.process(&mut buf, false);
            kernel_hat.push(buf.into_iter().map(|z| z.re).collect());
        }
        Ok(Self { spec: spec.clone(), landau_const, fft, m, kernel_hat })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn landau_const(&self) -> f64 {
        self.landau_const
    }

    fn check(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.spec.len() {
            return Err(Error::config("grid", "density does not live on the operator grid"));
        }
        Ok(())
    }

    fn padded_hat(&self, values: &[f64]) -> Vec<Complex64> {
        let m = self.m;
        let mut buf = vec![Complex64::default(); m * m * m];
        for idx in 0..values.len() {
            let (i, j, k) = self.spec.unindex(idx);
            buf[(i * m + j) * m + k] = Complex64::new(values[idx] * self.spec.weight(idx), 0.0);
        }
        self.fft.process(&mut buf, false);
        buf
    }

    /// `Σ_b (a_ab * hat_b)` for one output component, back on the unpadded grid.
    fn convolve(&self, terms: &[(usize, &[Complex64])]) -> Vec<f64> {
        let m = self.m;
        let mut buf = vec![Complex64::default(); m * m * m];
        for (kidx, hat) in terms {
            let kh = &self.kernel_hat[*kidx];
            for ((o, z), k) in buf.iter_mut().zip(hat.iter()).zip(kh) {
                *o += z * *k;
            }
        }
        self.fft.process(&mut buf, true);
        let scale = 1.0 / (m * m * m) as f64;
        (0..self.spec.len())
            .map(|idx| {
                let (i, j, k) = self.spec.unindex(idx);
                buf[(i * m + j) * m + k].re * scale
            })
            .collect()
    }

    /// Collision flux `J(v) = ∫ a(v - v1) (f1 ∇f - f ∇f1) dv1` using the supplied gradient.
    pub fn flux_with_gradient(&self, f: &[f64], grad: &[Vec<f64>; 3]) -> Result<[Vec<f64>; 3]> {
        self.check(f)?;
        for g in grad {
            self.check(g)?;
        }
        let f_hat = self.padded_hat(f);
        let g_hat: Vec<Vec<Complex64>> = grad.iter().map(|g| self.padded_hat(g)).collect();
        let mut conv_f = Vec::with_capacity(6);
        for p in 0..6 {
            conv_f.push(self.convolve(&[(p, &f_hat)]));
        }
        let mut out = [vec![0.0; f.len()], vec![0.0; f.len()], vec![0.0; f.len()]];
        for a in 0..3 {
            let terms: Vec<(usize, &[Complex64])> =
                (0..3).map(|b| (pair_index(a, b), g_hat[b].as_slice())).collect();
            let conv_g = self.convolve(&terms);
            for idx in 0..f.len() {
                let mut s = -f[idx] * conv_g[idx];
                for b in 0..3 {
                    s += conv_f[pair_index(a, b)][idx] * grad[b][idx];
                }
                out[a][idx] = s;
            }
        }
        Ok(out)
    }

    /// Flux with centered-difference gradients.
    pub fn flux(&self, f: &DensityGrid) -> Result<[Vec<f64>; 3]> {
        let grad = centered_gradient(&self.spec, f.values());
        self.flux_with_gradient(f.values(), &grad)
    }

    /// Strong form `Q_L(f, f) = ∇ · J`, centered differences with zero ghosts.
    pub fn apply(&self, f: &DensityGrid) -> Result<DensityGrid> {
        let j = self.flux(f)?;
        let mut q = vec![0.0; f.values().len()];
        for (a, ja) in j.iter().enumerate() {
            let d = centered_gradient(&self.spec, ja);
            for (qi, di) in q.iter_mut().zip(&d[a]) {
                *qi += di;
            }
        }
        DensityGrid::from_values(self.spec.clone(), q)
    }

    /// Weak form `-Σ ω ∇ψ · J`, equal to the symmetrized double sum
    /// `-½ ΣΣ (∇ψ(v) - ∇ψ(v1)) · a(v - v1) (∇ - ∇1) f f1`.
    pub fn weak(&self, f: &DensityGrid, grad_psi: impl Fn(&Vec3) -> Vec3) -> Result<f64> {
        let j = self.flux(f)?;
        Ok(self.pair_with_flux(&j, |idx| grad_psi(&self.spec.point(idx))))
    }

    /// Weak form against a gradient given per grid node.
    pub fn weak_with_gradient_grid(&self, f: &DensityGrid, grad_psi: &[Vec<f64>; 3]) -> Result<f64> {
        let j = self.flux(f)?;
        Ok(self.pair_with_flux(&j, |idx| Vec3::new(grad_psi[0][idx], grad_psi[1][idx], grad_psi[2][idx])))
    }

    /// Weak form against a flux from [`Self::flux`], so several test functions can share one flux.
    pub fn pair_with_flux(&self, j: &[Vec<f64>; 3], grad_psi: impl Fn(usize) -> Vec3) -> f64 {
        let mut acc = 0.0;
        for idx in 0..self.spec.len() {
            let g = grad_psi(idx);
            acc -= self.spec.weight(idx) * (g.x * j[0][idx] + g.y * j[1][idx] + g.z * j[2][idx]);
        }
        acc
    }

    /// `Σ ω |∇ψ · J|`, the scale against which cancellation in [`Self::weak`] is judged.
    pub fn weak_magnitude(&self, f: &DensityGrid, grad_psi: impl Fn(&Vec3) -> Vec3) -> Result<f64> {
        let j = self.flux(f)?;
        let mut acc = 0.0;
        for idx in 0..self.spec.len() {
            let g = grad_psi(&self.spec.point(idx));
            acc += self.spec.weight(idx) * (g.x * j[0][idx] + g.y * j[1][idx] + g.z * j[2][idx]).abs();
        }
        Ok(acc)
    }

    /// `-Σ ω Q log f` computed in weak form with `∇ log f = Df / f`; nonnegative by construction.
    pub fn entropy_production(&self, f: &DensityGrid) -> Result<f64> {
        if f.values().iter().any(|v| !(*v > 0.0)) {
            return Err(Error::domain("entropy production needs a strictly positive density"));
        }
        let d = f.gradient();
        let vals = f.values();
        let g: [Vec<f64>; 3] = std::array::from_fn(|a| d[a].iter().zip(vals).map(|(x, v)| x / v).collect());
        Ok(-self.weak_with_gradient_grid(f, &g)?)
    }
}

/// `Q_L(f, f)` on the grid of `f`.
pub fn q_landau(f: &DensityGrid, landau_const: f64) -> Result<DensityGrid> {
    LandauOperator::new(f.spec(), landau_const)?.apply(f)
}

/// Symmetrized weak form of `Q_L(f, f)` against `ψ`, given its gradient.
pub fn q_landau_weak(f: &DensityGrid, landau_const: f64, grad_psi: impl Fn(&Vec3) -> Vec3) -> Result<f64> {
    LandauOperator::new(f.spec(), landau_const)?.weak(f, grad_psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::grid::maxwellian;
    use crate::phase::BiMaxwellian;

    const A3: f64 = 0.765_950_208_875_226;

    fn bimax(n: usize) -> DensityGrid {
        let g = BiMaxwellian::new(1.5, Vec3::new(0.3, 0.2, 1.0)).unwrap();
        DensityGrid::from_fn(GridSpec::cube(n, 5.0).unwrap(), |v| g.value(v))
    }

    /// Direct `O(n^6)` evaluation of the symmetric double sum.
    fn brute_weak(f: &DensityGrid, grad_psi: impl Fn(&Vec3) -> Vec3) -> f64 {
        let spec = f.spec();
        let d = f.gradient();
        let vals = f.values();
        let mut acc = 0.0;
        for i in 0..spec.len() {
            let vi = spec.point(i);
            let gi = Vec3::new(d[0][i], d[1][i], d[2][i]);
            for j in 0..spec.len() {
                if i == j {
                    continue;
                }
                let vj = spec.point(j);
                let gj = Vec3::new(d[0][j], d[1][j], d[2][j]);
                let a = crate::kernel::a_matrix(&(vi - vj), A3).unwrap().entries;
                let h = gi * vals[j] - gj * vals[i];
                acc -= 0.5 * spec.weight(i) * spec.weight(j) * (grad_psi(&vi) - grad_psi(&vj)).dot(&(a * h));
            }
        }
        acc
    }

    #[test]
    fn fft_weak_form_matches_direct_double_sum() {
        let f = bimax(16);
        let op = LandauOperator::new(f.spec(), A3).unwrap();
        let psi = |v: &Vec3| Vec3::new(v.y.cos(), v.x * v.z, (0.3 * v.x).sin());
        let fast = op.weak(&f, psi).unwrap();
        let slow = brute_weak(&f, psi);
        assert!((fast - slow).abs() < 1e-10 * slow.abs().max(1e-3), "{fast} vs {slow}");
    }

    #[test]
    fn conservation_to_rounding() {
        let f = bimax(24);
        let op = LandauOperator::new(f.spec(), A3).unwrap();
        let scale = op.weak_magnitude(&f, |v| *v * 2.0).unwrap();
        assert!(scale > 1e-4);
        assert_eq!(op.weak(&f, |_| Vec3::zeros()).unwrap(), 0.0);
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = 1.0;
            assert!(op.weak(&f, |_| e).unwrap().abs() < 1e-12 * scale);
        }
        assert!(op.weak(&f, |v| *v * 2.0).unwrap().abs() < 1e-12 * scale);
    }

    #[test]
    fn entropy_is_produced() {
        let f = bimax(24);
        let op = LandauOperator::new(f.spec(), A3).unwrap();
        assert!(op.entropy_production(&f).unwrap() > 0.0);
    }

    #[test]
    fn maxwellian_flux_vanishes_with_exact_gradient() {
        let spec = GridSpec::cube(20, 4.5).unwrap();
        let m = maxwellian(1.0, &Vec3::new(0.2, 0.0, -0.1), &spec).unwrap();
        let grad: [Vec<f64>; 3] = std::array::from_fn(|a| {
            (0..spec.len())
                .map(|i| -2.0 * (spec.point(i)[a] - [0.2, 0.0, -0.1][a]) * m.values()[i])
                .collect()
        });
        let op = LandauOperator::new(&spec, A3).unwrap();
        let j = op.flux_with_gradient(m.values(), &grad).unwrap();
        let jmax = j.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(jmax < 1e-14, "{jmax}");
    }

    #[test]
    fn maxwellian_defect_shrinks_under_refinement() {
        let defect = |n: usize| {
            let spec = GridSpec::cube(n, 4.5).unwrap();
            let m = maxwellian(1.0, &Vec3::zeros(), &spec).unwrap();
            q_landau(&m, A3).unwrap().sup_norm()
        };
        let (coarse, fine) = (defect(24), defect(48));
        assert!(fine <= 0.5 * coarse, "{coarse} -> {fine}");
    }

    #[test]
    fn zero_density_gives_zero() {
        let spec = GridSpec::cube(16, 4.0).unwrap();
        let q = q_landau(&DensityGrid::zeros(spec), A3).unwrap();
        assert_eq!(q.sup_norm(), 0.0);
    }

    #[test]
    fn coarse_grid_rejected() {
        let spec = GridSpec::cube(12, 4.0).unwrap();
        assert!(matches!(LandauOperator::new(&spec, A3), Err(Error::Config { .. })));
    }

    #[test]
    fn strong_and_weak_forms_converge_together() {
        let c = Vec3::new(0.2, -0.1, 0.4);
        let psi = |v: &Vec3| (-(v - c).norm_squared() / 4.0).exp();
        let dpsi = |v: &Vec3| (v - c) * (-0.5 * psi(v));
        let mismatch = |n: usize| {
            let f = bimax(n);
            let op = LandauOperator::new(f.spec(), A3).unwrap();
            let strong = op.apply(&f).unwrap().integrate_against(psi);
            let weak = op.weak(&f, dpsi).unwrap();
            ((strong - weak) / weak).abs()
        };
        let (m24, m32) = (mismatch(24), mismatch(32));
        assert!(m32 < 0.1 && m32 < m24, "{m24} -> {m32}");
    }
}
