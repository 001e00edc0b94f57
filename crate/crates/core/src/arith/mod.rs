//! Word-sized modular arithmetic.
//!
//! All residues are `u64` values in `[0, p)` for an odd prime `p < 2^60`.
//! Products are reduced with the improved Barrett scheme (one wide and one
//! low multiplication) or, when one operand is fixed, with Shoup's method.

mod prime;

pub use prime::{generate_prime_chain, is_prime, PrimeChain};

use crate::error::{Error, Result};

/// Largest admissible prime width in bits.
pub const MAX_PRIME_BITS: u32 = 60;

/// An odd prime modulus together with its Barrett constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Modulus {
    value: u64,
    bits: u32,
    barrett: u64,
    /// `2^64 mod p`.
    wrap: u64,
}

/// An operand with its precomputed Shoup quotient `floor(operand * 2^64 / p)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct ShoupConstant {
    pub operand: u64,
    pub quotient: u64,
}

impl Modulus {
    pub fn new(value: u64) -> Result<Self> {
        if value < 3 || value.is_multiple_of(2) || value >= 1u64 << MAX_PRIME_BITS {
            return Err(Error::InvalidModulus(value));
        }
        let bits = 64 - value.leading_zeros();
        Ok(Self {
            value,
            bits,
            barrett: Self::barrett_constant(value),
            wrap: ((1u128 << 64) % value as u128) as u64,
        })
    }

    /// `floor(2^(2k+1) / p)` where `k` is the bit length of `p`.
    pub fn barrett_constant(value: u64) -> u64 {
        let bits = 64 - value.leading_zeros();
        ((1u128 << (2 * bits + 1)) / value as u128) as u64
    }

    #[inline(always)]
    pub fn value(&self) -> u64 {
        self.value
    }

    #[inline(always)]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    #[inline(always)]
    pub fn barrett_factor(&self) -> u64 {
        self.barrett
    }

    #[inline(always)]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.value && b < self.value);
        let s = a + b;
        if s >= self.value {
            s - self.value
        } else {
            s
        }
    }

    #[inline(always)]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.value && b < self.value);
        if a >= b {
            a - b
        } else {
            a + self.value - b
        }
    }

    #[inline(always)]
    pub fn neg(&self, a: u64) -> u64 {
        debug_assert!(a < self.value);
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    /// Reduces `x < p^2` into `[0, 2p)`.
    #[inline(always)]
    pub fn barrett_reduce_lazy(&self, x: u128) -> u64 {
        let shifted = (x >> (self.bits - 2)) as u64;
        let quotient = ((shifted as u128 * self.barrett as u128) >> (self.bits + 3)) as u64;
        (x as u64).wrapping_sub(quotient.wrapping_mul(self.value))
    }

    /// Reduces `x < p^2` into `[0, p)`.
    #[inline(always)]
    pub fn barrett_reduce(&self, x: u128) -> u64 {
        debug_assert!(x < (self.value as u128) * (self.value as u128));
        let r = self.barrett_reduce_lazy(x);
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }

    #[inline(always)]
    pub fn barrett_mul(&self, a: u64, b: u64) -> u64 {
        self.barrett_reduce(a as u128 * b as u128)
    }

    /// Reduces an arbitrary 64-bit word.
    #[inline(always)]
    pub fn reduce_u64(&self, x: u64) -> u64 {
        if x < self.value {
            x
        } else if (x as u128) < (self.value as u128) * (self.value as u128) {
            self.barrett_reduce(x as u128)
        } else {
            x % self.value
        }
    }

    /// Reduces an arbitrary 128-bit accumulator.
    #[inline(always)]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let hi = self.reduce_u64((x >> 64) as u64);
        let lo = self.reduce_u64(x as u64);
        if hi == 0 {
            return lo;
        }
        self.barrett_reduce(hi as u128 * self.wrap as u128 + lo as u128)
    }

    pub fn shoup(&self, operand: u64) -> ShoupConstant {
        debug_assert!(operand < self.value);
        ShoupConstant {
            operand,
            quotient: (((operand as u128) << 64) / self.value as u128) as u64,
        }
    }

    /// `a * s.operand mod p` in `[0, 2p)`.
    #[inline(always)]
    pub fn shoup_mul_lazy(&self, a: u64, s: ShoupConstant) -> u64 {
        let q = ((a as u128 * s.quotient as u128) >> 64) as u64;
        a.wrapping_mul(s.operand).wrapping_sub(q.wrapping_mul(self.value))
    }

    #[inline(always)]
    pub fn shoup_mul(&self, a: u64, s: ShoupConstant) -> u64 {
        let r = self.shoup_mul_lazy(a, s);
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }

    pub fn pow(&self, base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.value;
        let mut b = self.reduce_u64(base);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.barrett_mul(acc, b);
            }
            b = self.barrett_mul(b, b);
            exp >>= 1;
        }
        acc
    }

    /// Inverse via Fermat's little theorem.
    pub fn inv(&self, a: u64) -> Result<u64> {
        let a = self.reduce_u64(a);
        if a == 0 {
            return Err(Error::NotInvertible {
                value: a,
                modulus: self.value,
            });
        }
        Ok(self.pow(a, self.value - 2))
    }

    /// Maps a signed integer into `[0, p)`.
    #[inline(always)]
    pub fn from_i64(&self, v: i64) -> u64 {
        if v >= 0 {
            self.reduce_u64(v as u64)
        } else {
            self.neg(self.reduce_u64(v.unsigned_abs()))
        }
    }

    pub fn from_i128(&self, v: i128) -> u64 {
        let r = (v.unsigned_abs() % self.value as u128) as u64;
        if v < 0 {
            self.neg(r)
        } else {
            r
        }
    }

    /// Centered representative in `(-p/2, p/2]`.
    #[inline(always)]
    pub fn centered(&self, a: u64) -> i64 {
        if a > self.value / 2 {
            a as i64 - self.value as i64
        } else {
            a as i64
        }
    }

    /// Re-reduces a residue modulo `self` taken with respect to another modulus,
    /// using the centered lift from `from`.
    #[inline(always)]
    pub fn switch_from(&self, a: u64, from: u64) -> u64 {
        if a > from / 2 {
            // a - from < 0
            self.neg(self.reduce_u64(from - a))
        } else {
            self.reduce_u64(a)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const P60: u64 = 1152921504606830593; // 2^60 - 2^14 + 1

    #[test]
    fn add_sub_by_hand() {
        let p = Modulus::new(7).unwrap();
        assert_eq!(p.add(3, 5), 1);
        assert_eq!(p.add(0, 0), 0);
        assert_eq!(p.sub(3, 5), 5);
        assert_eq!(p.sub(4, 4), 0);
    }

    #[test]
    fn barrett_identities() {
        for &v in &[17u64, 97, 65537, P60] {
            let p = Modulus::new(v).unwrap();
            assert_eq!(p.barrett_reduce(0), 0);
            let pm1 = (v - 1) as u128;
            assert_eq!(p.barrett_reduce(pm1 * pm1), 1);
            assert_eq!(p.barrett_mul(1, v - 3), v - 3);
            assert_eq!(p.barrett_mul(v - 1, v - 1), 1);
        }
    }

    #[test]
    fn barrett_exhaustive_small_prime() {
        let p = Modulus::new(17).unwrap();
        for x in 0..(17u128 * 17) {
            assert_eq!(p.barrett_reduce(x) as u128, x % 17);
        }
    }

    #[test]
    fn barrett_factor_is_rederivable() {
        let p = Modulus::new(P60).unwrap();
        assert_eq!(p.barrett_factor(), Modulus::barrett_constant(P60));
        assert_eq!(
            p.barrett_factor() as u128,
            (1u128 << 121) / P60 as u128
        );
    }

    #[test]
    fn shoup_identities() {
        let p = Modulus::new(P60).unwrap();
        let one = p.shoup(1);
        assert_eq!(p.shoup_mul(12345, one), 12345);
        let s = p.shoup(987654321);
        assert_eq!(p.shoup_mul(0, s), 0);
        // hand-checked on a tiny prime
        let q = Modulus::new(13).unwrap();
        assert_eq!(q.shoup_mul(4, q.shoup(5)), 7);
    }

    #[test]
    fn inverse_and_pow() {
        let p = Modulus::new(P60).unwrap();
        assert_eq!(p.pow(1234, 0), 1);
        assert_eq!(p.inv(1).unwrap(), 1);
        let a = 0x1234_5678_9abc_def0 % P60;
        assert_eq!(p.barrett_mul(p.inv(a).unwrap(), a), 1);
        assert!(p.inv(0).is_err());
        assert!(p.inv(P60).is_err());
    }

    #[test]
    fn wide_reduction() {
        let p = Modulus::new(P60).unwrap();
        let x = u128::MAX - 12345;
        assert_eq!(p.reduce_u128(x) as u128, x % P60 as u128);
        let q = Modulus::new(17).unwrap();
        assert_eq!(q.reduce_u128(x) as u128, x % 17);
    }

    #[test]
    fn switch_modulus_is_centered() {
        let from = 97u64;
        let to = Modulus::new(13).unwrap();
        assert_eq!(to.switch_from(96, from), 12); // -1
        assert_eq!(to.switch_from(48, from), 48 % 13);
        assert_eq!(to.switch_from(49, from), to.from_i64(49 - 97));
    }

    #[test]
    fn rejects_bad_moduli() {
        assert!(Modulus::new(16).is_err());
        assert!(Modulus::new(1).is_err());
        assert!(Modulus::new((1u64 << 60) + 1).is_err());
    }

    proptest! {
        #[test]
        fn prop_ops_match_wide_oracle(a in 0u64..P60, b in 0u64..P60) {
            let p = Modulus::new(P60).unwrap();
            let pw = P60 as u128;
            prop_assert_eq!(p.add(a, b) as u128, (a as u128 + b as u128) % pw);
            prop_assert_eq!(p.sub(a, b) as u128, (a as u128 + pw - b as u128) % pw);
            let prod = a as u128 * b as u128;
            prop_assert_eq!(p.barrett_mul(a, b) as u128, prod % pw);
            prop_assert_eq!(p.shoup_mul(a, p.shoup(b)), p.barrett_mul(a, b));
            prop_assert!(p.shoup_mul_lazy(a, p.shoup(b)) < 2 * P60);
            prop_assert!(p.barrett_reduce_lazy(prod) < 2 * P60);
        }

        #[test]
        fn prop_small_primes_barrett(p in prop::sample::select(vec![3u64, 5, 7, 11, 13, 251, 257, 65521])) {
            let m = Modulus::new(p).unwrap();
            for x in 0..(p as u128 * p as u128).min(70_000) {
                prop_assert_eq!(m.barrett_reduce(x) as u128, x % p as u128);
            }
        }
    }
}
