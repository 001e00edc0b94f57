use std::collections::HashSet;

use super::MAX_PRIME_BITS;
use crate::error::{Error, Result};

/// Witnesses sufficient for a deterministic Miller-Rabin test below 2^64.
const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    acc
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for &w in &WITNESSES {
        if n == w {
            return true;
        }
        if n.is_multiple_of(w) {
            return false;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'outer: for &a in &WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// Prime moduli for one parameter set: `depth + 1` chain primes followed by
/// the extension primes whose product is `P`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrimeChain {
    pub chain: Vec<u64>,
    pub extension: Vec<u64>,
}

/// Walks candidates `k * 2N + 1` in one direction.
struct CandidateWalk {
    step: u64,
    k: u64,
    upward: bool,
}

impl CandidateWalk {
    fn next_prime(&mut self, limit: u64, used: &HashSet<u64>) -> Option<u64> {
        loop {
            if self.upward {
                self.k = self.k.checked_add(1)?;
            } else {
                self.k = self.k.checked_sub(1)?;
                if self.k == 0 {
                    return None;
                }
            }
            let c = self.k.checked_mul(self.step)?.checked_add(1)?;
            if c >= limit {
                return None;
            }
            if is_prime(c) && !used.contains(&c) {
                return Some(c);
            }
        }
    }
}

/// Deterministically selects NTT-friendly primes (`p = 1 mod 2N`).
///
/// Extension primes are the largest primes below `2^60`; `q_0` is the largest
/// unused prime below `2^first_bits`; the remaining chain primes alternate
/// below and above `2^delta_bits` so that the tracked scale stays balanced.
pub fn generate_prime_chain(
    ring_degree: usize,
    depth: usize,
    delta_bits: u32,
    first_bits: u32,
    extension_count: usize,
) -> Result<PrimeChain> {
    if !ring_degree.is_power_of_two() || ring_degree < 2 {
        return Err(Error::InvalidParameters(format!(
            "ring degree {ring_degree} is not a power of two"
        )));
    }
    if delta_bits > MAX_PRIME_BITS || first_bits > MAX_PRIME_BITS || delta_bits < 10 {
        return Err(Error::InvalidParameters(format!(
            "prime widths must lie in [10, {MAX_PRIME_BITS}] bits"
        )));
    }
    let step = 2 * ring_degree as u64;
    let limit = 1u64 << MAX_PRIME_BITS;
    let mut used = HashSet::new();
    let exhausted = |what: &str| Error::PrimeExhaustion(format!("{what} (2N = {step})"));

    let mut top = CandidateWalk {
        step,
        k: limit / step,
        upward: false,
    };
    let mut extension = Vec::with_capacity(extension_count);
    for _ in 0..extension_count {
        let p = top
            .next_prime(limit, &used)
            .ok_or_else(|| exhausted("extension primes"))?;
        used.insert(p);
        extension.push(p);
    }

    let mut first = CandidateWalk {
        step,
        k: ((1u64 << first_bits) / step).max(1),
        upward: false,
    };
    let q0 = first
        .next_prime(limit.min((1u64 << first_bits) + 1), &used)
        .ok_or_else(|| exhausted("first chain prime"))?;
    used.insert(q0);

    let centre = (1u64 << delta_bits) / step;
    let mut down = CandidateWalk {
        step,
        k: centre + 1,
        upward: false,
    };
    let mut up = CandidateWalk {
        step,
        k: centre,
        upward: true,
    };
    let mut chain = Vec::with_capacity(depth + 1);
    chain.push(q0);
    let mut up_open = true;
    let mut down_open = true;
    while chain.len() < depth + 1 {
        let take_down = (chain.len() % 2 == 1 && down_open) || !up_open;
        let next = if take_down {
            let p = down.next_prime(limit, &used);
            if p.is_none() {
                down_open = false;
            }
            p
        } else {
            let p = up.next_prime(limit, &used);
            if p.is_none() {
                up_open = false;
            }
            p
        };
        match next {
            Some(p) => {
                used.insert(p);
                chain.push(p);
            }
            None if !up_open && !down_open => return Err(exhausted("scale-sized chain primes")),
            None => {}
        }
    }
    Ok(PrimeChain { chain, extension })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn miller_rabin_known_values() {
        assert!(is_prime(2));
        assert!(is_prime(17));
        assert!(is_prime(1152921504606830593));
        assert!(!is_prime(1));
        assert!(!is_prime(561)); // Carmichael
        assert!(!is_prime(3215031751)); // strong pseudoprime to bases 2,3,5,7
        assert!(!is_prime(1152921504606830592));
    }

    #[test]
    fn small_chain_shape() {
        let c = generate_prime_chain(1 << 13, 2, 40, 60, 1).unwrap();
        assert_eq!(c.chain.len(), 3);
        assert_eq!(c.extension.len(), 1);
        let mut all: Vec<u64> = c.chain.iter().chain(&c.extension).copied().collect();
        for &p in &all {
            assert!(is_prime(p));
            assert_eq!(p % (1 << 14), 1);
        }
        for &q in &c.chain[1..] {
            assert!(((q as f64).log2() - 40.0).abs() < 1.0);
        }
        assert!(c.extension[0] >= *c.chain.iter().max().unwrap());
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 4);
    }

    #[test]
    fn chain_alternates_around_scale() {
        let c = generate_prime_chain(1 << 10, 8, 30, 40, 2).unwrap();
        let below = c.chain[1..].iter().filter(|&&q| q < 1 << 30).count();
        let above = c.chain[1..].iter().filter(|&&q| q > 1 << 30).count();
        assert_eq!(below, 4);
        assert_eq!(above, 4);
    }

    #[test]
    fn deterministic() {
        let a = generate_prime_chain(1 << 12, 5, 45, 55, 3).unwrap();
        let b = generate_prime_chain(1 << 12, 5, 45, 55, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exhaustion_is_reported() {
        // 2N = 2^20 leaves no room for 16-bit primes
        assert!(matches!(
            generate_prime_chain(1 << 19, 3, 16, 16, 1),
            Err(Error::PrimeExhaustion(_))
        ));
    }
}
