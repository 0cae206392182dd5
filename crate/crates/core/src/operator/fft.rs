use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

/// In-place 3-D complex FFT on an `m × m × m` row-major cube.
pub(crate) struct Fft3 {
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    pub fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            m,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
        }
    }

    pub fn len(&self) -> usize {
        self.m * self.m * self.m
    }

    /// Unnormalized transform; the inverse must be divided by `m^3` by the caller.
    pub fn process(&self, data: &mut [Complex64], inverse: bool) {
        let m = self.m;
        assert_eq!(data.len(), self.len());
        let plan = if inverse { &self.inverse } else { &self.forward };
        // last axis: contiguous lines
        data.par_chunks_mut(m * m).for_each(|plane| plan.process(plane));
        // middle axis: transpose each plane
        data.par_chunks_mut(m * m).for_each(|plane| {
            let mut buf = vec![Complex64::default(); m * m];
            for j in 0..m {
                for k in 0..m {
                    buf[k * m + j] = plane[j * m + k];
                }
            }
            plan.process(&mut buf);
            for j in 0..m {
                for k in 0..m {
                    plane[j * m + k] = buf[k * m + j];
                }
            }
        });
        // first axis: gather one j-slab at a time
        let mut buf = vec![Complex64::default(); m * m];
        for j in 0..m {
            for i in 0..m {
                let row = (i * m + j) * m;
                for k in 0..m {
                    buf[k * m + i] = data[row + k];
                }
            }
            plan.process(&mut buf);
            for i in 0..m {
                let row = (i * m + j) * m;
                for k in 0..m {
                    data[row + k] = buf[k * m + i];
                }
            }
        }
    }
}

/// Smallest `m >= min` of the form `2^a 3^b 5^c`.
pub(crate) fn fft_friendly(min: usize) -> usize {
    let mut m = min.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_delta() {
        let m = 6;
        let f = Fft3::new(m);
        let mut d: Vec<Complex64> = (0..f.len()).map(|i| Complex64::new((i as f64).sin(), 0.0)).collect();
        let orig = d.clone();
        f.process(&mut d, false);
        f.process(&mut d, true);
        let scale = f.len() as f64;
        for (a, b) in d.iter().zip(&orig) {
            assert!((a / scale - b).norm() < 1e-12);
        }
        let mut delta = vec![Complex64::default(); f.len()];
        delta[0] = Complex64::new(1.0, 0.0);
        f.process(&mut delta, false);
        assert!(delta.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn friendly_sizes() {
        assert_eq!(fft_friendly(63), 64);
        assert_eq!(fft_friendly(95), 96);
        assert_eq!(fft_friendly(191), 192);
        assert_eq!(fft_friendly(47), 48);
    }
}
