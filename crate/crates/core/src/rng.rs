//! Counter-based random numbers.
//!
//! Every draw is a pure function of `(seed, stream, counter)`:
//!
//! ```text
//! mix(z)  = z ^= z >> 30; z *= 0xbf58476d1ce4e5b9;
//!           z ^= z >> 27; z *= 0x94d049bb133111eb;
//!           z ^ (z >> 31)                          (wrapping u64 arithmetic)
//! G       = 0x9e3779b97f4a7c15
//! h       = mix(seed ^ G)
//! h       = mix(h ^ (stream + G))
//! draw    = mix(h ^ (counter + G))
//! uniform = (draw >> 11) * 2^-53                   (in [0, 1))
//! ```
//!
//! Learning-set sample `i` uses `stream = i`, so any sample can be regenerated
//! in isolation on any machine. The counter starts at zero for each stream and
//! increments by one per 64-bit draw.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
pub fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Raw draw number `counter` of `stream` under `seed`.
#[inline]
pub fn draw(seed: u64, stream: u64, counter: u64) -> u64 {
    let h = mix(seed ^ GOLDEN);
    let h = mix(h ^ stream.wrapping_add(GOLDEN));
    mix(h ^ counter.wrapping_add(GOLDEN))
}

#[derive(Debug, Clone)]
pub struct SampleRng {
    key: u64,
    counter: u64,
}

impl SampleRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let h = mix(seed ^ GOLDEN);
        Self {
            key: mix(h ^ stream.wrapping_add(GOLDEN)),
            counter: 0,
        }
    }

    /// Number of draws consumed so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = mix(self.key ^ self.counter.wrapping_add(GOLDEN));
        self.counter += 1;
        v
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`.
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Uniform on the closed interval spanned by `a` and `b` (either order).
    pub fn uniform_between(&mut self, a: f64, b: f64) -> f64 {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if lo == hi {
            return lo;
        }
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`. Uses the multiply-shift reduction.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "bound must be non-zero");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal via Box-Muller (consumes two draws).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// `k` distinct indices from `[0, n)` by partial Fisher-Yates, in draw order.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot draw {k} distinct values from {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
