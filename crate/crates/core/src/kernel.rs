//! The Landau kernel `a(w)` and its finite-ε force-force approximation.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::potential::RadialPotential;
use crate::quad::{simpson_weights, BallQuadrature};
use crate::real::Real;
use crate::report::{fit_loglog, ExperimentReport};

#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix<T: Real> {
    pub entries: Matrix3<T>,
    pub w: Vector3<T>,
}

impl<T: Real> KernelMatrix<T> {
    pub fn frobenius_distance(&self, other: &Self) -> T {
        (self.entries - other.entries).norm()
    }

    /// `max |K - K^T|`.
    pub fn asymmetry(&self) -> T {
        (self.entries - self.entries.transpose()).amax()
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn eigenvalues(&self) -> [T; 3] {
        let sym = (self.entries + self.entries.transpose()) * T::lit(0.5);
        let ev = sym.symmetric_eigenvalues();
        let mut out = [ev[0], ev[1], ev[2]];
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }
}

fn nonzero<T: Real>(w: &Vector3<T>) -> Result<T> {
    let n = w.norm();
    if n == T::zero() || !n.is_finite() {
        return Err(Error::Singular("the Landau kernel needs a nonzero relative velocity"));
    }
    Ok(n)
}

/// `a(w) = (A/|w|) (I - w⊗w/|w|^2)`.
pub fn a_matrix<T: Real>(w: &Vector3<T>, landau_const: T) -> Result<KernelMatrix<T>> {
    let n = nonzero(w)?;
    let e = w / n;
    let entries = (Matrix3::identity() - e * e.transpose()) * (landau_const / n);
    Ok(KernelMatrix { entries, w: *w })
}

/// `a(w)` as `A/(π|w|)` times the integral of `k⊗k` over the great circle orthogonal to `w`.
///
/// The circle integral is done by the trapezoid rule, which is exact here
/// because the integrand is a trigonometric polynomial of degree 2.
pub fn spherical_delta_matrix<T: Real>(w: &Vector3<T>, landau_const: T) -> Result<KernelMatrix<T>> {
    let n = nonzero(w)?;
    let e = w / n;
    let (u1, u2) = orthonormal_complement(&e);
    let m = 16;
    let dtheta = T::two_pi() / T::from_usize(m).unwrap();
    let mut acc = Matrix3::zeros();
    for i in 0..m {
        let th = dtheta * T::from_usize(i).unwrap();
        let k = u1 * th.cos() + u2 * th.sin();
        acc += k * k.transpose() * dtheta;
    }
    Ok(KernelMatrix {
        entries: acc * (landau_const / (T::pi() * n)),
        w: *w,
    })
}

/// Two unit vectors completing `e` to an orthonormal basis.
pub fn orthonormal_complement<T: Real>(e: &Vector3<T>) -> (Vector3<T>, Vector3<T>) {
    let pick = if e.x.abs() <= e.y.abs() && e.x.abs() <= e.z.abs() {
        Vector3::x()
    } else if e.y.abs() <= e.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let u1 = (pick - e * e.dot(&pick)).normalize();
    let u2 = e.cross(&u1);
    (u1, u2)
}

/// Trajectory used for the second force factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelPath {
    /// Free relative motion `r - w s`.
    Straight,
    /// The backward relative trajectory of the interacting pair, integrated by velocity Verlet.
    Scattered,
}

#[derive(Clone, Debug)]
pub struct KernelResolution {
    pub n_radial: usize,
    pub n_polar: usize,
    pub n_azimuth: usize,
    /// Simpson steps per unit of `1/|w|` along `s`.
    pub steps_per_transit: usize,
    pub path: KernelPath,
}

impl Default for KernelResolution {
    fn default() -> Self {
        Self {
            n_radial: 32,
            n_polar: 16,
            n_azimuth: 32,
            steps_per_transit: 64,
            path: KernelPath::Straight,
        }
    }
}

impl KernelResolution {
    pub fn doubled(&self) -> Self {
        Self {
            n_radial: 2 * self.n_radial,
            n_polar: 2 * self.n_polar,
            n_azimuth: 2 * self.n_azimuth,
            steps_per_transit: 2 * self.steps_per_transit,
            path: self.path,
        }
    }
}

/// `K_ε(w) = ∫_{|r|≤1} dr ∫_0^{τ/ε} ds F(r) ⊗ F(y(s))`, with `y(s) = r - ws` on the straight path.
///
/// Along the straight path the integrand vanishes once `s > 2/|w|`, so the `s`
/// window is `min(τ/ε, 4/|w|)`.
pub fn kernel_quadrature<T: Real>(
    potential: &RadialPotential<T>,
    w: &Vector3<T>,
    tau: T,
    eps: T,
    res: &KernelResolution,
) -> Result<KernelMatrix<T>> {
    let wn = nonzero(w)?;
    if !(eps > T::zero()) || !(tau > T::zero()) {
        return Err(Error::domain("kernel quadrature needs eps > 0 and tau > 0"));
    }
    if potential.is_zero() {
        return Ok(KernelMatrix { entries: Matrix3::zeros(), w: *w });
    }
    let window = (tau / eps).min(T::lit(4.0) / wn);
    let h_target = T::one() / (wn * T::from_usize(res.steps_per_transit).unwrap());
    let mut n_steps = (window / h_target).ceil().to_usize().unwrap().max(2);
    n_steps += n_steps % 2;
    let h = window / T::from_usize(n_steps).unwrap();
    let sw = simpson_weights(n_steps, h);
    let ball = BallQuadrature::<T>::new(res.n_radial, res.n_polar, res.n_azimuth, T::one());
    let coupling = match res.path {
        KernelPath::Straight => T::zero(),
        KernelPath::Scattered => T::lit(2.0) * eps.sqrt(),
    };

    let chunk = 256;
    let idx: Vec<usize> = (0..ball.len()).collect();
    let partial: Vec<Matrix3<T>> = idx
        .par_chunks(chunk)
        .map(|ids| {
            let mut acc = Matrix3::zeros();
            for &i in ids {
                let r = ball.points[i];
                let fr = potential.eval_force(&r);
                if fr == Vector3::zeros() {
                    continue;
                }
                let line = if coupling == T::zero() {
                    straight_integral(potential, &r, w, h, &sw)
                } else {
                    scattered_integral(potential, &r, w, h, &sw, coupling)
                };
                acc += fr * line.transpose() * ball.weights[i];
            }
            acc
        })
        .collect();
    let entries = partial.into_iter().fold(Matrix3::zeros(), |a, b| a + b);
    Ok(KernelMatrix { entries, w: *w })
}

fn straight_integral<T: Real>(
    potential: &RadialPotential<T>,
    r: &Vector3<T>,
    w: &Vector3<T>,
    h: T,
    sw: &[T],
) -> Vector3<T> {
    let mut acc = Vector3::zeros();
    for (j, &wt) in sw.iter().enumerate() {
        let s = h * T::from_usize(j).unwrap();
        acc += potential.eval_force(&(r - w * s)) * wt;
    }
    acc
}

/// Velocity Verlet for `y'' = c F(y)` started at `y = r`, `y' = -w`, sampled on the Simpson nodes.
fn scattered_integral<T: Real>(
    potential: &RadialPotential<T>,
    r: &Vector3<T>,
    w: &Vector3<T>,
    h: T,
    sw: &[T],
    coupling: T,
) -> Vector3<T> {
    let half = T::lit(0.5) * h;
    let mut y = *r;
    let mut v = -w;
    let mut f = potential.eval_force(&y);
    let mut acc = f * sw[0];
    for &wt in &sw[1..] {
        v += f * (coupling * half);
        y += v * h;
        f = potential.eval_force(&y);
        v += f * (coupling * half);
        acc += f * wt;
    }
    acc
}

/// Relative Frobenius error of `K_ε(w)` against `a(w)` along an ε ladder.
///
/// Columns: `eps`, the nine entries `K11..K33`, `frob_err_rel`, the quadrature
/// error estimate from a doubled-resolution rerun, and the same relative error
/// for the scattered path.
pub fn kernel_convergence_study(
    potential: &RadialPotential<f64>,
    w: &Vector3<f64>,
    eps_ladder: &[f64],
    tau: f64,
    res: &KernelResolution,
) -> Result<ExperimentReport> {
    if eps_ladder.is_empty() || eps_ladder.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::domain("the eps ladder must be nonempty and positive"));
    }
    if eps_ladder.windows(2).any(|p| p[1] >= p[0]) {
        return Err(Error::domain("the eps ladder must be strictly decreasing"));
    }
    let a = a_matrix(w, potential.landau_constant()?)?;
    let a_norm = a.entries.norm();
    let straight = KernelResolution { path: KernelPath::Straight, ..res.clone() };
    let scattered = KernelResolution { path: KernelPath::Scattered, ..res.clone() };
    let fine = straight.doubled();

    let mut report = ExperimentReport::new(
        "kernel-limit",
        &[
            "eps", "K11", "K12", "K13", "K21", "K22", "K23", "K31", "K32", "K33",
            "frob_err_rel", "quad_err_rel", "scattered_err_rel",
        ],
    );
    for &eps in eps_ladder {
        let k = kernel_quadrature(potential, w, tau, eps, &straight)?;
        let k_fine = kernel_quadrature(potential, w, tau, eps, &fine)?;
        let k_sc = kernel_quadrature(potential, w, tau, eps, &scattered)?;
        let mut row = vec![eps];
        for i in 0..3 {
            for j in 0..3 {
                row.push(k.entries[(i, j)]);
            }
        }
        row.push(k.frobenius_distance(&a) / a_norm);
        row.push(k.frobenius_distance(&k_fine) / a_norm);
        row.push(k_sc.frobenius_distance(&a) / a_norm);
        report.push_row(row);
    }
    let errs = report.column("frob_err_rel").unwrap();
    let quad = report.column("quad_err_rel").unwrap();
    let scat = report.column("scattered_err_rel").unwrap();
    if let Some(fit) = fit_loglog("scattered_err_rel", eps_ladder, &scat) {
        report.fits.push(fit);
    }
    if eps_ladder.len() > 1 {
        let decreasing = errs.windows(2).all(|p| p[1] < p[0]);
        report.check(
            "frob_err_rel strictly decreasing",
            decreasing,
            format!("{errs:?}"),
        );
        let max_quad = quad.iter().cloned().fold(0.0, f64::max);
        report.note(format!(
            "largest quadrature error estimate {max_quad:e}; scattered-path errors {scat:?}"
        ));
    }
    Ok(report)
}
