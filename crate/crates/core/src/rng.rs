//! Seeded, splittable random number generation.
//!
//! The generator is PCG XSL-RR 128/64 (`rand_pcg::Pcg64`): 128-bit state,
//! 64-bit output, identical stream for a given seed on every platform.
//! Child generators are derived from `(seed, label)` only — never from the
//! parent's current position — so any subcomputation can be re-derived in
//! isolation.

use crate::tensor::Tensor;
use rand_core::{RngCore, SeedableRng};
use rand_pcg::Pcg64;

const TWO_POW_NEG53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: Pcg64,
    seed: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            inner: Pcg64::seed_from_u64(seed),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child generator, a pure function of `(self.seed, label)`.
    pub fn split(&self, label: &str) -> SeededRng {
        SeededRng::new(splitmix64(self.seed ^ fnv1a64(label.as_bytes())))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw on `[0, 1)` with 53 bits of precision. One raw draw.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_NEG53
    }

    /// One standard normal via Box–Muller. Consumes exactly two raw u64
    /// draws; the sine companion of the pair is discarded rather than cached
    /// so the stream position is a fixed function of the element count.
    pub fn standard_normal(&mut self) -> f64 {
        // u1 ∈ (0, 1] keeps ln(u1) finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * TWO_POW_NEG53;
        let u2 = (self.next_u64() >> 11) as f64 * TWO_POW_NEG53;
        let r = (-2.0 * crate::mathfn::ln(u1)).sqrt();
        r * crate::mathfn::cos(std::f64::consts::TAU * u2)
    }

    /// Tensor of i.i.d. N(0,1) draws, filled in flat row-major order.
    pub fn gaussian(&mut self, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| self.standard_normal()).collect();
        Tensor::from_parts(shape.to_vec(), data)
    }

    /// Unbiased uniform integer in `[0, n)` by rejection.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let threshold = n.wrapping_neg() % n; // 2^64 mod n
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % n;
            }
        }
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// `count` distinct indices out of `[0, n)`, in draw order.
    pub fn choose_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(count <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        self.shuffle(&mut pool);
        pool.truncate(count);
        pool
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
