use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// What a stream of draws is used for. Occupies the top byte of a [`StreamId`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StreamPurpose {
    Init = 1,
    Shuffle = 2,
    WeightUpdate = 3,
    Gibbs = 4,
    ChainInit = 5,
    Sampling = 6,
    KMeans = 7,
    Subsample = 8,
    Synthetic = 9,
    Test = 255,
}

/// 64-bit stream identifier packed as `purpose:8 | tensor:8 | epoch:20 | batch:28`.
///
/// The packing is injective within those ranges, so two distinct
/// (purpose, tensor, epoch, batch) keys never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId(u64);

impl StreamId {
    const EPOCH_BITS: u32 = 20;
    const BATCH_BITS: u32 = 28;

    pub fn new(purpose: StreamPurpose, tensor: u8, epoch: usize, batch: usize) -> Self {
        assert!(epoch < 1 << Self::EPOCH_BITS, "epoch {epoch} exceeds stream id range");
        assert!(batch < 1 << Self::BATCH_BITS, "batch {batch} exceeds stream id range");
        let id = (purpose as u64) << 56
            | (tensor as u64) << 48
            | (epoch as u64) << Self::BATCH_BITS
            | batch as u64;
        Self(id)
    }

    pub fn from_raw(raw: u64) -> Self {
        Self(raw)
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}

/// Counter-based uniform stream: the `n`-th draw of `(seed, stream_id)` is a
/// pure function of those three numbers.
///
/// Backed by ChaCha8, whose 64-bit stream selector and random-access word
/// position give exactly that addressing.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: StreamId,
    counter: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: StreamId) -> Self {
        Self::at(seed, stream_id, 0)
    }

    /// Stream positioned so that the next draw is draw number `counter`.
    pub fn at(seed: u64, stream_id: StreamId, counter: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id.raw());
        // Each 64-bit draw consumes two 32-bit words.
        inner.set_word_pos(u128::from(counter) * 2);
        Self {
            seed,
            stream_id,
            counter,
            inner,
        }
    }

    /// A fresh stream with the same seed.
    pub fn fork(&self, stream_id: StreamId) -> Self {
        Self::new(self.seed, stream_id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> StreamId {
        self.stream_id
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 random mantissa bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `0..n`, unbiased (rejection on the top range).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}
