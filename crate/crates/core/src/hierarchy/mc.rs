//! Blocked Monte-Carlo with per-block ChaCha streams and a fixed-order reduction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Samples per block. Block `b` draws from stream `b` of the master seed.
pub const BLOCK: usize = 2048;

/// Sample mean and its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

#[derive(Clone, Copy, Default)]
struct Acc {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Acc {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, o: &Acc) {
        if o.n == 0.0 {
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n / n;
        self.m2 += o.m2 + d * d * self.n * o.n / n;
        self.n = n;
    }

    fn stat(&self) -> Stat {
        let var = if self.n > 1.0 { self.m2 / (self.n - 1.0) } else { 0.0 };
        Stat { mean: self.mean, std_error: (var / self.n).sqrt(), n: self.n as usize }
    }
}

pub fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Means of `K` sample channels over `n` draws. The result does not depend on the thread count.
pub fn estimate<const K: usize, F>(n: usize, seed: u64, sample: F) -> Result<[Stat; K]>
where
    F: Fn(&mut ChaCha8Rng) -> Result<[f64; K]> + Sync,
{
    let v = estimate_channels(n, seed, K, |rng, out| {
        out.copy_from_slice(&sample(rng)?);
        Ok(())
    })?;
    Ok(std::array::from_fn(|k| v[k]))
}

/// [`estimate`] with a channel count known only at run time; `sample` fills a zeroed slice.
pub fn estimate_channels<F>(n: usize, seed: u64, channels: usize, sample: F) -> Result<Vec<Stat>>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) -> Result<()> + Sync,
{
    if n == 0 {
        return Err(Error::domain("Monte-Carlo estimate needs at least one sample"));
    }
    let blocks = n.div_ceil(BLOCK);
    let parts: Vec<Vec<Acc>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, b as u64);
            let mut acc = vec![Acc::default(); channels];
            let mut x = vec![0.0; channels];
            for _ in 0..BLOCK.min(n - b * BLOCK) {
                x.fill(0.0);
                sample(&mut rng, &mut x)?;
                if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!("non-finite Monte-Carlo sample {bad} in block {b}")));
                }
                for (a, v) in acc.iter_mut().zip(&x) {
                    a.push(*v);
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![Acc::default(); channels];
    for p in &parts {
        for (t, a) in total.iter_mut().zip(p) {
            t.merge(a);
        }
    }
    Ok(total.iter().map(Acc::stat).collect())
}
