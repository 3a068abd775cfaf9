use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Labels for the independent randomness sources of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StreamId {
    PtaJitter,
    SeciJitter,
    Fuzzer,
    Traffic,
}

impl StreamId {
    pub fn label(self) -> &'static str {
        match self {
            StreamId::PtaJitter => "pta-jitter",
            StreamId::SeciJitter => "seci-jitter",
            StreamId::Fuzzer => "fuzzer",
            StreamId::Traffic => "traffic",
        }
    }
}

// FNV-1a; stable across platforms and releases, unlike std's hasher.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A seeded ChaCha8 stream. The run seed picks the key and the stream label
/// picks the ChaCha stream, so draws on one source never shift another.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    label: &'static str,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, id: StreamId) -> Self {
        Self::with_label(seed, id.label())
    }

    pub fn with_label(seed: u64, label: &'static str) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(label_hash(label));
        RngStream { seed, label, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &'static str {
        self.label
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.rng.random_range(0..n)
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        // Fisher-Yates over our own draws keeps the sequence tied to this stream.
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Zero-mean Gaussian jitter with standard deviation `sigma_ns`, truncated to
/// `[-bound_ns, +bound_ns]` by rejection.
///
/// When the bound is tiny relative to sigma the truncated density is nearly
/// flat, so the draw falls back to uniform over the bound instead of spinning.
pub fn sample_jitter(stream: &mut RngStream, sigma_ns: u64, bound_ns: u64) -> i64 {
    assert!(bound_ns > 0, "jitter bound must be positive");
    if sigma_ns == 0 {
        return 0;
    }
    let sigma = sigma_ns as f64;
    let bound = bound_ns as f64;
    if bound * 8.0 < sigma {
        let u = stream.unit() * 2.0 - 1.0;
        return (u * bound).round() as i64;
    }
    loop {
        let x = stream.standard_normal() * sigma;
        if x.abs() <= bound {
            return (x.round() as i64).clamp(-(bound_ns as i64), bound_ns as i64);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_label_reproduce() {
        let mut a = RngStream::new(42, StreamId::Traffic);
        let mut b = RngStream::new(42, StreamId::Traffic);
        let xs: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn streams_are_independent() {
        let mut a = RngStream::new(42, StreamId::Traffic);
        let mut b = RngStream::new(42, StreamId::Fuzzer);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn zero_sigma_is_degenerate() {
        let mut s = RngStream::new(1, StreamId::PtaJitter);
        assert!((0..100).all(|_| sample_jitter(&mut s, 0, 312_500) == 0));
    }

    #[test]
    fn sigma_200_matches_within_five_percent() {
        let mut s = RngStream::new(9, StreamId::SeciJitter);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_jitter(&mut s, 200, 312_500) as f64).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        assert!((sd - 200.0).abs() / 200.0 < 0.05, "sample sigma {sd}");
        assert!(mean.abs() < 5.0, "mean {mean}");
    }

    #[test]
    fn draws_respect_bound() {
        let mut s = RngStream::new(3, StreamId::PtaJitter);
        for _ in 0..20_000 {
            assert!(sample_jitter(&mut s, 200_000, 312_500).unsigned_abs() <= 312_500);
        }
        for _ in 0..1_000 {
            assert!(sample_jitter(&mut s, 1_000_000, 10).unsigned_abs() <= 10);
        }
    }
}
