//! One-dimensional and ball quadrature rules.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::real::Real;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> GaussLegendre<T> {
    /// Nodes are found by Newton iteration on `P_n` in `f64` and then cast.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre needs at least one node");
        let mut nodes = vec![T::zero(); n];
        let mut weights = vec![T::zero(); n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = T::lit(-x);
            nodes[n - 1 - i] = T::lit(x);
            weights[i] = T::lit(w);
            weights[n - 1 - i] = T::lit(w);
        }
        if n % 2 == 1 {
            nodes[n / 2] = T::zero();
        }
        Self { nodes, weights }
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn on(&self, a: T, b: T) -> impl Iterator<Item = (T, T)> + '_ {
        let half = (b - a) * T::lit(0.5);
        let mid = (b + a) * T::lit(0.5);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: T, b: T, mut f: impl FnMut(T) -> T) -> T {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Adaptive Simpson quadrature with Richardson correction.
///
/// `tol` is an absolute tolerance on the whole interval.
pub fn adaptive_simpson<T: Real>(
    mut f: impl FnMut(T) -> T,
    a: T,
    b: T,
    tol: T,
    max_depth: u32,
) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    let fa = f(a);
    let fb = f(b);
    let m = (a + b) * T::lit(0.5);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    let mut failed = false;
    let v = simpson_rec(&mut f, a, b, fa, fm, fb, whole, tol, max_depth, &mut failed);
    if !v.is_finite() {
        return Err(Error::Numeric("non-finite integrand in adaptive Simpson".into()));
    }
    if failed {
        return Err(Error::Numeric(format!(
            "adaptive Simpson reached depth {max_depth} without meeting tolerance {tol:e}"
        )));
    }
    Ok(v)
}

#[inline]
fn simpson<T: Real>(a: T, b: T, fa: T, fm: T, fb: T) -> T {
    (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<T: Real>(
    f: &mut impl FnMut(T) -> T,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
    failed: &mut bool,
) -> T {
    let m = (a + b) * T::lit(0.5);
    let lm = (a + m) * T::lit(0.5);
    let rm = (m + b) * T::lit(0.5);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    let converged = delta.abs() <= T::lit(15.0) * tol;
    if converged || depth == 0 {
        if !converged {
            *failed = true;
        }
        return left + right + delta / T::lit(15.0);
    }
    let half = tol * T::lit(0.5);
    simpson_rec(f, a, m, fa, flm, fm, left, half, depth - 1, failed)
        + simpson_rec(f, m, b, fm, frm, fb, right, half, depth - 1, failed)
}

/// Composite Simpson weights for `n` (even) sub-intervals of width `h`.
pub fn simpson_weights<T: Real>(n: usize, h: T) -> Vec<T> {
    assert!(n >= 2 && n % 2 == 0, "Simpson needs an even number of intervals");
    let third = h / T::lit(3.0);
    (0..=n)
        .map(|i| {
            if i == 0 || i == n {
                third
            } else if i % 2 == 1 {
                T::lit(4.0) * third
            } else {
                T::lit(2.0) * third
            }
        })
        .collect()
}

/// Product rule over a ball: Gauss–Legendre in radius and `cos θ`, uniform in azimuth.
#[derive(Clone, Debug)]
pub struct BallQuadrature<T: Real> {
    pub points: Vec<Vector3<T>>,
    pub weights: Vec<T>,
}

impl<T: Real> BallQuadrature<T> {
    pub fn new(n_radial: usize, n_polar: usize, n_azimuth: usize, radius: T) -> Self {
        let gr = GaussLegendre::<T>::new(n_radial);
        let gt = GaussLegendre::<T>::new(n_polar);
        let dphi = T::two_pi() / T::from_usize(n_azimuth).unwrap();
        let mut points = Vec::with_capacity(n_radial * n_polar * n_azimuth);
        let mut weights = Vec::with_capacity(points.capacity());
        for (r, wr) in gr.on(T::zero(), radius) {
            for (ct, wt) in gt.on(-T::one(), T::one()) {
                let st = (T::one() - ct * ct).max(T::zero()).sqrt();
                for k in 0..n_azimuth {
                    let ph = dphi * T::from_usize(k).unwrap();
                    points.push(Vector3::new(r * st * ph.cos(), r * st * ph.sin(), r * ct));
                    weights.push(wr * r * r * wt * dphi);
                }
            }
        }
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
