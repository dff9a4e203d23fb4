use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::MixRatio;
use crate::error::{Error, Result};

/// A draw from one of two datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleRef {
    pub source: usize,
    pub index: usize,
}

/// Default epoch size: twice the smaller dataset.
pub fn default_epoch_size(len_a: usize, len_b: usize) -> usize {
    2 * len_a.min(len_b)
}

/// Per-dataset stream of indices: concatenated seeded permutations, so
/// every index appears once per pass over its dataset.
struct IndexStream {
    len: usize,
    seed: u64,
    pass: u64,
    order: Vec<usize>,
    pos: usize,
}

impl IndexStream {
    fn new(len: usize, seed: u64) -> Self {
        IndexStream { len, seed, pass: 0, order: Vec::new(), pos: 0 }
    }

    fn next(&mut self) -> usize {
        if self.pos == self.order.len() {
            self.order = (0..self.len).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ self.pass.wrapping_mul(0xA24B_AED4_963E_E407));
            self.order.shuffle(&mut rng);
            self.pass += 1;
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

/// Interleaves draws from `a` and `b` so every run of `a + b` draws holds
/// the ratio to within one. Within each dataset the indices run through
/// seeded permutations that continue across epochs. Returns the draws of
/// `epochs` consecutive epochs of `epoch_size` each.
pub fn mix_sampler(len_a: usize, len_b: usize, ratio: MixRatio, epoch_size: usize, epochs: usize, seed: u64) -> Result<Vec<Vec<SampleRef>>> {
    if (ratio.a > 0 && len_a == 0) || (ratio.b > 0 && len_b == 0) {
        return Err(Error::Contract(format!("cannot sample from an empty dataset ({len_a} and {len_b} items)")));
    }
    let (ra, rb) = (ratio.a as u64, ratio.b as u64);
    let mut streams = [IndexStream::new(len_a, seed), IndexStream::new(len_b, seed.wrapping_add(1))];
    let mut taken_a = 0u64;
    let mut draw = 0u64;
    let mut out = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut epoch = Vec::with_capacity(epoch_size);
        for _ in 0..epoch_size {
            draw += 1;
            // Bresenham: dataset a's quota after `draw` draws is
            // floor(draw * a / (a + b)).
            let source = if (draw * ra) / (ra + rb) > taken_a { 0 } else { 1 };
            if source == 0 {
                taken_a += 1;
            }
            epoch.push(SampleRef { source, index: streams[source].next() });
        }
        out.push(epoch);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_to_zero_uses_only_a() {
        let e = mix_sampler(5, 0, MixRatio::new(1, 0).unwrap(), 12, 2, 3).unwrap();
        assert!(e.iter().flatten().all(|s| s.source == 0 && s.index < 5));
    }

    #[test]
    fn even_ratio_splits_evenly() {
        let e = mix_sampler(40, 70, MixRatio::new(1, 1).unwrap(), 100, 1, 0).unwrap();
        let a = e[0].iter().filter(|s| s.source == 0).count();
        assert!((49..=51).contains(&a), "{a}");
    }

    #[test]
    fn ratio_holds_in_every_window() {
        for (ra, rb) in [(1, 1), (3, 1), (2, 5), (1, 4)] {
            let draws: Vec<_> = mix_sampler(9, 11, MixRatio::new(ra, rb).unwrap(), 97, 3, 5).unwrap().concat();
            let period = (ra + rb) as usize;
            for win in draws.windows(period) {
                let a = win.iter().filter(|s| s.source == 0).count() as i64;
                assert!((a - ra as i64).abs() <= 1, "ratio {ra}:{rb}");
            }
        }
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(mix_sampler(0, 4, MixRatio::new(1, 1).unwrap(), 10, 1, 0).is_err());
    }

    #[test]
    fn deterministic() {
        let r = MixRatio::new(1, 1).unwrap();
        assert_eq!(mix_sampler(7, 9, r, 30, 4, 11).unwrap(), mix_sampler(7, 9, r, 30, 4, 11).unwrap());
    }

    #[test]
    fn coverage_is_uniform() {
        // Chi-square of per-index counts over 10 epochs against uniform.
        let (la, lb) = (13, 17);
        let e = mix_sampler(la, lb, MixRatio::new(1, 1).unwrap(), default_epoch_size(la, lb), 10, 42).unwrap();
        for (source, len) in [(0, la), (1, lb)] {
            let mut counts = vec![0f64; len];
            for s in e.iter().flatten().filter(|s| s.source == source) {
                counts[s.index] += 1.0;
            }
            let total: f64 = counts.iter().sum();
            let expected = total / len as f64;
            let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
            // 99.9% quantile of chi-square with 16 degrees of freedom is 39.25.
            assert!(chi2 < 39.25, "source {source}: chi2 {chi2}");
        }
    }
}
