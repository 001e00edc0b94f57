use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::sampling::{discrete_gaussian, small_poly_eval, ternary, uniform_poly};
use crate::context::Context;
use crate::error::{Error, Result};
use crate::poly::{Format, RnsPoly};

/// Ternary secret, kept in evaluation form over every prime of the context.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretKey {
    pub(crate) coeffs: Vec<i64>,
    pub(crate) poly: RnsPoly,
}

impl SecretKey {
    pub fn coefficients(&self) -> &[i64] {
        &self.coeffs
    }

    /// Secret over chain primes `0..=level`.
    pub fn at_level(&self, level: usize) -> RnsPoly {
        let idx: Vec<usize> = (0..=level).collect();
        self.poly.select(&idx).expect("secret covers the chain")
    }

    pub fn full(&self) -> &RnsPoly {
        &self.poly
    }
}

/// `(b, a)` with `b = -a·s + e`, over the full chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    pub b: RnsPoly,
    pub a: RnsPoly,
}

/// Hybrid key-switching key from `s'` to `s`: for each digit `j`, the pair
/// `(-a_j·s + e_j + P·1_{D_j}·s', a_j)` over all chain and extension primes,
/// where `1_{D_j}` is one on the primes of digit `j` and zero elsewhere.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeySwitchingKey {
    pub digits: Vec<(RnsPoly, RnsPoly)>,
}

impl KeySwitchingKey {
    pub fn digit_count(&self) -> usize {
        self.digits.len()
    }
}

/// Relinearization, rotation and conjugation keys.
#[derive(Clone, Debug, Default)]
pub struct EvaluationKeys {
    pub relin: Option<KeySwitchingKey>,
    pub conjugation: Option<KeySwitchingKey>,
    /// Keyed by Galois exponent.
    pub galois: BTreeMap<usize, KeySwitchingKey>,
}

impl EvaluationKeys {
    pub fn relin(&self) -> Result<&KeySwitchingKey> {
        self.relin
            .as_ref()
            .ok_or_else(|| Error::MissingKey("relinearization".into()))
    }

    pub fn conjugation(&self) -> Result<&KeySwitchingKey> {
        self.conjugation
            .as_ref()
            .ok_or_else(|| Error::MissingKey("conjugation".into()))
    }

    pub fn galois(&self, exponent: usize) -> Result<&KeySwitchingKey> {
        self.galois
            .get(&exponent)
            .ok_or_else(|| Error::MissingKey(format!("Galois exponent {exponent}")))
    }
}

/// `5^r mod 2N` for a left rotation by `r` slots out of `slots`.
pub fn rotation_exponent(ring_degree: usize, slots: usize, r: i64) -> usize {
    let m = 2 * ring_degree as u64;
    let steps = r.rem_euclid(slots.max(1) as i64) as u64;
    let mut acc = 1u64;
    let mut base = 5u64;
    let mut e = steps;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base % m;
        }
        base = base * base % m;
        e >>= 1;
    }
    acc as usize
}

pub fn conjugation_exponent(ring_degree: usize) -> usize {
    2 * ring_degree - 1
}

/// Deterministic key generation from a seed.
pub struct KeyGenerator {
    ctx: Context,
    rng: ChaCha20Rng,
}

impl KeyGenerator {
    pub fn new(ctx: &Context, seed: u64) -> Self {
        Self {
            ctx: ctx.clone(),
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    fn all_indices(&self) -> Vec<usize> {
        (0..self.ctx.moduli().len()).collect()
    }

    pub fn secret_key(&mut self) -> SecretKey {
        let coeffs = ternary(&mut self.rng, self.ctx.n());
        let poly = small_poly_eval(&self.ctx, &coeffs, &self.all_indices());
        SecretKey { coeffs, poly }
    }

    pub fn public_key(&mut self, sk: &SecretKey) -> PublicKey {
        let ctx = &self.ctx;
        let idx: Vec<usize> = (0..ctx.chain_len()).collect();
        let a = uniform_poly(&mut self.rng, ctx, &idx, Format::Eval);
        let e = small_poly_eval(ctx, &discrete_gaussian(&mut self.rng, ctx.n()), &idx);
        let s = sk.at_level(ctx.max_level());
        let mut b = a.mul(ctx, &s).expect("same limbs").neg(ctx);
        b.add_assign(ctx, &e).expect("same limbs");
        PublicKey { b, a }
    }

    pub fn key_pair(&mut self) -> (SecretKey, PublicKey) {
        let sk = self.secret_key();
        let pk = self.public_key(&sk);
        (sk, pk)
    }

    /// Key switching from `from` (any polynomial over all primes, evaluation
    /// form) to the secret `to`.
    pub fn switching_key(&mut self, from: &RnsPoly, to: &SecretKey) -> KeySwitchingKey {
        let ctx = self.ctx.clone();
        let idx = self.all_indices();
        let chain = ctx.chain_len();
        let p_mod_q = ctx.p_mod_q();
        let digits = ctx.digit_bases(ctx.max_level());
        let mut out = Vec::with_capacity(digits.len());
        for digit in digits {
            let a = uniform_poly(&mut self.rng, &ctx, &idx, Format::Eval);
            let e = small_poly_eval(&ctx, &discrete_gaussian(&mut self.rng, ctx.n()), &idx);
            let mut b = a.mul(&ctx, &to.poly).expect("same limbs").neg(&ctx);
            b.add_assign(&ctx, &e).expect("same limbs");
            let mut gadget: Vec<u64> = vec![0; idx.len()];
            for i in digit.clone() {
                gadget[i] = p_mod_q[i];
            }
            debug_assert!(digit.end <= chain);
            let mut term = from.clone();
            term.mul_scalar_assign(&ctx, &gadget).expect("one scalar per limb");
            b.add_assign(&ctx, &term).expect("same limbs");
            out.push((b, a));
        }
        KeySwitchingKey { digits: out }
    }

    /// Relinearization key: switches from `s^2` to `s`.
    pub fn relin_key(&mut self, sk: &SecretKey) -> KeySwitchingKey {
        let s2 = sk.poly.mul(&self.ctx, &sk.poly).expect("same limbs");
        self.switching_key(&s2, sk)
    }

    /// Key for the automorphism `X -> X^exponent`.
    pub fn galois_key(&mut self, sk: &SecretKey, exponent: usize) -> Result<KeySwitchingKey> {
        let s_k = sk.poly.automorphism(&self.ctx, exponent)?;
        Ok(self.switching_key(&s_k, sk))
    }

    /// Key for a left rotation by `r` slots.
    pub fn rotation_key(&mut self, sk: &SecretKey, r: i64) -> Result<KeySwitchingKey> {
        let k = rotation_exponent(self.ctx.n(), self.ctx.slots(), r);
        self.galois_key(sk, k)
    }

    pub fn conjugation_key(&mut self, sk: &SecretKey) -> KeySwitchingKey {
        self.galois_key(sk, conjugation_exponent(self.ctx.n()))
            .expect("2N - 1 is odd")
    }

    /// Relinearization, conjugation and the given rotation keys together.
    pub fn evaluation_keys(&mut self, sk: &SecretKey, rotations: &[i64], slots: usize) -> Result<EvaluationKeys> {
        let mut keys = EvaluationKeys {
            relin: Some(self.relin_key(sk)),
            conjugation: Some(self.conjugation_key(sk)),
            galois: BTreeMap::new(),
        };
        for &r in rotations {
            let k = rotation_exponent(self.ctx.n(), slots, r);
            if k != 1 && !keys.galois.contains_key(&k) {
                let key = self.galois_key(sk, k)?;
                keys.galois.insert(k, key);
            }
        }
        Ok(keys)
    }
}
