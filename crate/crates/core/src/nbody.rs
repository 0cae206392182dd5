//! N-particle weak-coupling dynamics in a periodic box with `ε = N^{-1/3}`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::BiMaxwellian;
use crate::potential::RadialPotential;
use crate::Vec3;

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub x: Vec<Vec3>,
    pub v: Vec<Vec3>,
    pub eps: f64,
    pub box_len: f64,
    pub time: f64,
    pub seed: u64,
}

/// `N^{-1/3}`, exact when `N` is a perfect cube.
pub fn eps_for(n: usize) -> f64 {
    let m = (n as f64).cbrt().round() as usize;
    if m * m * m == n {
        1.0 / m as f64
    } else {
        (n as f64).powf(-1.0 / 3.0)
    }
}

/// I.i.d. particles: uniform positions in `[0, L)^3`, velocities from `g`.
pub fn init_ensemble(n: usize, g: &BiMaxwellian, box_len: f64, seed: u64) -> Result<Ensemble> {
    if n < 2 {
        return Err(Error::domain("an ensemble needs at least 2 particles"));
    }
    if !(box_len > 0.0) {
        return Err(Error::config("nbody.box_len", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        x.push(Vec3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()) * box_len);
        v.push(g.sample(&mut rng));
    }
    Ok(Ensemble { x, v, eps: eps_for(n), box_len, time: 0.0, seed })
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn momentum(&self) -> Vec3 {
        self.v.iter().sum()
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.v.iter().map(|v| v.norm_squared()).sum::<f64>()
    }

    #[inline]
    fn min_image(&self, d: Vec3) -> Vec3 {
        let l = self.box_len;
        d.map(|c| c - l * (c / l).round())
    }
}

/// Neighbour search over cells of side at least `ε`.
struct CellList {
    m: usize,
    side: f64,
    heads: Vec<Vec<usize>>,
}

impl CellList {
    /// `None` when fewer than 3 cells fit per side and direct summation is used instead.
    fn build(e: &Ensemble) -> Option<Self> {
        let m = (e.box_len / e.eps).floor() as usize;
        if m < 3 {
            return None;
        }
        let side = e.box_len / m as f64;
        let mut heads = vec![Vec::new(); m * m * m];
        for (i, x) in e.x.iter().enumerate() {
            let c = Self::cell_of(x, side, m);
            heads[(c[0] * m + c[1]) * m + c[2]].push(i);
        }
        Some(Self { m, side, heads })
    }

    fn cell_of(x: &Vec3, side: f64, m: usize) -> [usize; 3] {
        let f = |c: f64| ((c / side).floor() as isize).rem_euclid(m as isize) as usize;
        [f(x.x), f(x.y), f(x.z)]
    }

    /// Calls `visit(j)` for every particle in the 27 cells around `x`, in a fixed order.
    fn for_neighbours(&self, x: &Vec3, mut visit: impl FnMut(usize)) {
        let m = self.m as isize;
        let c = Self::cell_of(x, self.side, self.m);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let ix = (c[0] as isize + dx).rem_euclid(m) as usize;
                    let iy = (c[1] as isize + dy).rem_euclid(m) as usize;
                    let iz = (c[2] as isize + dz).rem_euclid(m) as usize;
                    for &j in &self.heads[(ix * self.m + iy) * self.m + iz] {
                        visit(j);
                    }
                }
            }
        }
    }
}

fn pair_sum<T: Send>(
    e: &Ensemble,
    cells: Option<&CellList>,
    zero: T,
    f: impl Fn(T, Vec3) -> T + Sync,
) -> Vec<T>
where
    T: Copy + Sync,
{
    (0..e.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = zero;
            let mut visit = |j: usize| {
                if j != i {
                    acc = f(acc, e.min_image(e.x[i] - e.x[j]) / e.eps);
                }
            };
            match cells {
                Some(c) => c.for_neighbours(&e.x[i], &mut visit),
                None => (0..e.len()).for_each(&mut visit),
            }
            acc
        })
        .collect()
}

/// Accelerations `ε^{-1/2} Σ_j F((x_i - x_j)/ε)`, via cell lists or direct summation.
pub fn accelerations(potential: &RadialPotential<f64>, e: &Ensemble, use_cells: bool) -> Vec<Vec3> {
    let cells = if use_cells { CellList::build(e) } else { None };
    let scale = 1.0 / e.eps.sqrt();
    pair_sum(e, cells.as_ref(), Vec3::zeros(), |acc, y| acc + potential.eval_force(&y))
        .into_iter()
        .map(|a| a * scale)
        .collect()
}

/// `Σ ½|v|^2 + √ε Σ_{i<j} φ((x_i - x_j)/ε)`.
pub fn total_energy(potential: &RadialPotential<f64>, e: &Ensemble) -> f64 {
    potential_energy(potential, e) + e.kinetic_energy()
}

pub fn potential_energy(potential: &RadialPotential<f64>, e: &Ensemble) -> f64 {
    let cells = CellList::build(e);
    let per: Vec<f64> = pair_sum(e, cells.as_ref(), 0.0, |acc, y| acc + potential.eval_phi(&y));
    0.5 * e.eps.sqrt() * per.iter().sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub t: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub momentum: Vec3,
}

impl EnergySample {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential
    }
}

fn sample_energy(potential: &RadialPotential<f64>, e: &Ensemble) -> EnergySample {
    EnergySample {
        t: e.time,
        kinetic: e.kinetic_energy(),
        potential: potential_energy(potential, e),
        momentum: e.momentum(),
    }
}

/// Velocity Verlet over `[0, t]` on `ceil(t/dt)` equal steps.
pub fn evolve(potential: &RadialPotential<f64>, e: &Ensemble, t: f64, dt: f64) -> Result<Ensemble> {
    Ok(evolve_recording(potential, e, t, dt, 0)?.0)
}

/// As [`evolve`], also sampling energies every `every` steps (never if 0) and at the end.
pub fn evolve_recording(
    potential: &RadialPotential<f64>,
    e: &Ensemble,
    t: f64,
    dt: f64,
    every: usize,
) -> Result<(Ensemble, Vec<EnergySample>)> {
    if !(dt > 0.0) || dt > e.eps / 100.0 {
        return Err(Error::config(
            "nbody.dt",
            format!("must lie in (0, eps/100] = (0, {:e}], got {dt:e}", e.eps / 100.0),
        ));
    }
    if !(t >= 0.0) {
        return Err(Error::domain("evolution time must be nonnegative"));
    }
    let mut s = e.clone();
    let mut series = Vec::new();
    if every > 0 {
        series.push(sample_energy(potential, &s));
    }
    let n = (t / dt).ceil() as usize;
    if n == 0 {
        return Ok((s, series));
    }
    let h = t / n as f64;
    let l = s.box_len;
    let t0 = s.time;
    let mut a = accelerations(potential, &s, true);
    for k in 1..=n {
        for (v, ai) in s.v.iter_mut().zip(&a) {
            *v += ai * (0.5 * h);
        }
        for (x, v) in s.x.iter_mut().zip(&s.v) {
            *x += v * h;
            *x = x.map(|c| c.rem_euclid(l));
        }
        a = accelerations(potential, &s, true);
        for (v, ai) in s.v.iter_mut().zip(&a) {
            *v += ai * (0.5 * h);
        }
        s.time = t0 + k as f64 * h;
        if every > 0 && (k % every == 0 || k == n) {
            series.push(sample_energy(potential, &s));
        }
    }
    Ok((s, series))
}

/// Velocity bins: `nb` per axis over `[-vmax, vmax]`; velocities outside are clamped into edge bins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub nb: usize,
    pub vmax: f64,
}

impl BinSpec {
    pub fn cells(&self) -> usize {
        self.nb * self.nb * self.nb
    }

    pub fn bin(&self, v: &Vec3) -> usize {
        let f = |c: f64| {
            let u = ((c + self.vmax) / (2.0 * self.vmax) * self.nb as f64).floor();
            u.clamp(0.0, (self.nb - 1) as f64) as usize
        };
        (f(v.x) * self.nb + f(v.y)) * self.nb + f(v.z)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalEstimate {
    pub order: usize,
    pub bins: BinSpec,
    /// Bin masses; for order 2 the index is `b1 * cells + b2`.
    pub mass: Vec<f64>,
    pub samples: usize,
    pub std_error: Vec<f64>,
}

const MAX_PAIRS: usize = 1_000_000;

/// Unordered pairs: all of them when there are at most 10⁶, otherwise 10⁶ drawn without replacement.
fn pair_list(n: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = n * (n - 1) / 2;
    let decode = |mut k: usize| {
        // row i holds pairs (i, j) for j > i
        let mut i = 0;
        let mut row = n - 1;
        while k >= row {
            k -= row;
            i += 1;
            row -= 1;
        }
        (i, i + 1 + k)
    };
    if total <= MAX_PAIRS {
        (0..total).map(decode).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, total, MAX_PAIRS).into_vec();
        idx.sort_unstable();
        let mut out = Vec::with_capacity(idx.len());
        // walk rows once instead of decoding each index from scratch
        let (mut i, mut start, mut row) = (0usize, 0usize, n - 1);
        for k in idx {
            while k >= start + row {
                start += row;
                i += 1;
                row -= 1;
            }
            out.push((i, i + 1 + (k - start)));
        }
        out
    }
}

fn histogram(bins: &BinSpec, order: usize, keys: impl Iterator<Item = (usize, f64)>, samples: usize) -> MarginalEstimate {
    let size = if order == 1 { bins.cells() } else { bins.cells() * bins.cells() };
    let mut mass = vec![0.0; size];
    for (k, w) in keys {
        mass[k] += w;
    }
    let n = samples as f64;
    for m in &mut mass {
        *m /= n;
    }
    let std_error = mass.iter().map(|p| (p * (1.0 - p) / n).max(0.0).sqrt()).collect();
    MarginalEstimate { order, bins: *bins, mass, samples, std_error }
}

pub fn empirical_marginal(e: &Ensemble, order: usize, bins: &BinSpec) -> Result<MarginalEstimate> {
    if e.is_empty() {
        return Err(Error::domain("empty ensemble"));
    }
    match order {
        1 => Ok(histogram(bins, 1, e.v.iter().map(|v| (bins.bin(v), 1.0)), e.len())),
        2 => {
            if e.len() < 2 {
                return Err(Error::domain("order-2 marginal needs two particles"));
            }
            let pairs = pair_list(e.len(), e.seed ^ 0x5eed_0002);
            let c = bins.cells();
            let keys = pairs.iter().flat_map(|&(i, j)| {
                let (a, b) = (bins.bin(&e.v[i]), bins.bin(&e.v[j]));
                [(a * c + b, 0.5), (b * c + a, 0.5)]
            });
            Ok(histogram(bins, 2, keys, pairs.len()))
        }
        _ => Err(Error::domain("marginal order must be 1 or 2")),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosDefect {
    pub defect: f64,
    /// Mean defect of pair samples built from independent particle draws of the same size.
    pub noise_floor: f64,
    pub noise_std: f64,
}

fn l1_to_product(f2: &[f64], f1: &[f64]) -> f64 {
    let c = f1.len();
    let mut acc = 0.0;
    for a in 0..c {
        for b in 0..c {
            acc += (f2[a * c + b] - f1[a] * f1[b]).abs();
        }
    }
    acc
}

/// L¹ distance between the order-2 histogram and the product of order-1 histograms.
///
/// The noise floor comes from 8 resamples in which the second member of every
/// sampled pair is replaced by a uniformly drawn particle.
pub fn chaos_defect(e: &Ensemble, bins: &BinSpec) -> Result<ChaosDefect> {
    let f1 = empirical_marginal(e, 1, bins)?;
    let f2 = empirical_marginal(e, 2, bins)?;
    let defect = l1_to_product(&f2.mass, &f1.mass);
    let pairs = pair_list(e.len(), e.seed ^ 0x5eed_0002);
    let c = bins.cells();
    let floors: Vec<f64> = (0..8u64)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(e.seed ^ 0xf100_0000 ^ r);
            let mut mass = vec![0.0; c * c];
            for &(i, _) in &pairs {
                let j = rng.gen_range(0..e.len());
                let (a, b) = (bins.bin(&e.v[i]), bins.bin(&e.v[j]));
                mass[a * c + b] += 0.5;
                mass[b * c + a] += 0.5;
            }
            let n = pairs.len() as f64;
            mass.iter_mut().for_each(|m| *m /= n);
            l1_to_product(&mass, &f1.mass)
        })
        .collect();
    let mean = floors.iter().sum::<f64>() / floors.len() as f64;
    let var = floors.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (floors.len() - 1) as f64;
    Ok(ChaosDefect { defect, noise_floor: mean, noise_std: var.sqrt() })
}
