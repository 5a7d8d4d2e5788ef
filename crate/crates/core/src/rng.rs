//! xorshift64* generator. Shared by every implementation of the workload
//! runner so that random choices line up for a given seed:
//!
//! ```text
//! state ^= state >> 12; state ^= state << 25; state ^= state >> 27;
//! output = state * 0x2545F4914F6CDD1D   (wrapping)
//! ```
//!
//! A zero seed is replaced by `0x9E3779B97F4A7C15`, since zero is a fixed
//! point of the shift steps.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XorShift64Star {
    state: u64,
}

pub const ZERO_SEED_REPLACEMENT: u64 = 0x9E37_79B9_7F4A_7C15;

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        Self {
            state: if seed == 0 { ZERO_SEED_REPLACEMENT } else { seed },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_output_for_seed_one() {
        // 1 -> 1 ^ (1 << 25); the right shifts contribute nothing.
        let mut r = XorShift64Star::new(1);
        assert_eq!(r.next_u64(), 0x0200_0001u64.wrapping_mul(0x2545_F491_4F6C_DD1D));
    }

    #[test]
    fn zero_seed_is_not_stuck() {
        let mut a = XorShift64Star::new(0);
        let mut b = XorShift64Star::new(ZERO_SEED_REPLACEMENT);
        assert_ne!(a.next_u64(), 0);
        assert_eq!(a, {
            b.next_u64();
            b
        });
    }

    #[test]
    fn bernoulli_rate() {
        let mut r = XorShift64Star::new(42);
        let hits = (0..100_000).filter(|_| r.bernoulli(0.5)).count();
        assert!((hits as f64 / 100_000.0 - 0.5).abs() < 0.01);
        assert!(!(0..1000).any(|_| r.bernoulli(0.0)));
        assert!((0..1000).all(|_| r.bernoulli(1.0)));
    }
}
