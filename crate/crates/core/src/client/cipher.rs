use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::keys::{PublicKey, SecretKey};
use super::sampling::{discrete_gaussian, small_poly_eval, ternary, uniform_poly, SIGMA};
use crate::context::Context;
use crate::error::{Error, Result};
use crate::poly::{Format, RnsPoly};
use crate::serial::{put_f64, put_u32, Reader};

#[derive(Clone, Debug, PartialEq)]
pub struct Plaintext {
    pub poly: RnsPoly,
    pub scale: f64,
    pub level: usize,
    pub slots: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ciphertext {
    pub c0: RnsPoly,
    pub c1: RnsPoly,
    pub scale: f64,
    pub level: usize,
    pub slots: usize,
    /// Rough bound on the coefficient-domain error; informational only.
    pub noise_estimate: f64,
}

impl Plaintext {
    /// Polynomial, then `f64 scale, u32 level, u32 slots`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.poly.to_bytes();
        put_f64(&mut out, self.scale);
        put_u32(&mut out, self.level as u32);
        put_u32(&mut out, self.slots as u32);
        out
    }

    /// Parses one plaintext from the front of `bytes`; returns it and the
    /// number of bytes consumed.
    pub fn from_bytes(ctx: &Context, bytes: &[u8]) -> Result<(Self, usize)> {
        let (poly, used) = RnsPoly::from_bytes(ctx, bytes)?;
        let mut r = Reader::new(&bytes[used..]);
        let pt = Self {
            poly,
            scale: r.f64()?,
            level: r.u32()? as usize,
            slots: r.u32()? as usize,
        };
        if pt.poly.limb_count() != pt.level + 1 {
            return Err(Error::Malformed("plaintext level".into()));
        }
        Ok((pt, used + r.position()))
    }
}

impl Ciphertext {
    /// Both polynomials, then `f64 scale, u32 level, u32 slots, f64 noise`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.c0.to_bytes();
        out.extend_from_slice(&self.c1.to_bytes());
        put_f64(&mut out, self.scale);
        put_u32(&mut out, self.level as u32);
        put_u32(&mut out, self.slots as u32);
        put_f64(&mut out, self.noise_estimate);
        out
    }

    pub fn from_bytes(ctx: &Context, bytes: &[u8]) -> Result<(Self, usize)> {
        let (c0, a) = RnsPoly::from_bytes(ctx, bytes)?;
        let (c1, b) = RnsPoly::from_bytes(ctx, &bytes[a..])?;
        let mut r = Reader::new(&bytes[a + b..]);
        let ct = Self {
            c0,
            c1,
            scale: r.f64()?,
            level: r.u32()? as usize,
            slots: r.u32()? as usize,
            noise_estimate: r.f64()?,
        };
        ct.check(ctx)?;
        Ok((ct, a + b + r.position()))
    }

    pub fn check(&self, ctx: &Context) -> Result<()> {
        if self.c0.indices() != self.c1.indices()
            || self.c0.format() != Format::Eval
            || self.c1.format() != Format::Eval
            || self.c0.level(ctx) != self.level
            || self.c0.limb_count() != self.level + 1
        {
            return Err(Error::Level("inconsistent ciphertext".into()));
        }
        if self.scale <= 0.0 {
            return Err(Error::ScaleMismatch(self.scale, self.scale));
        }
        Ok(())
    }
}

/// Fresh-encryption error bound used to seed the noise estimate.
fn fresh_noise(ctx: &Context) -> f64 {
    6.0 * SIGMA * (ctx.n() as f64).sqrt() * 2.0
}

pub struct Encryptor {
    ctx: Context,
    rng: ChaCha20Rng,
}

impl Encryptor {
    pub fn new(ctx: &Context, seed: u64) -> Self {
        Self {
            ctx: ctx.clone(),
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    fn chain(level: usize) -> Vec<usize> {
        (0..=level).collect()
    }

    fn check_level(&self, pt: &Plaintext) -> Result<()> {
        if pt.level > self.ctx.max_level() || pt.poly.limb_count() != pt.level + 1 {
            return Err(Error::Level(format!("plaintext level {}", pt.level)));
        }
        Ok(())
    }

    /// Public-key encryption: `(v·b + e0 + m, v·a + e1)` with ternary `v`.
    pub fn encrypt(&mut self, pt: &Plaintext, pk: &PublicKey) -> Result<Ciphertext> {
        self.check_level(pt)?;
        let ctx = &self.ctx;
        let idx = Self::chain(pt.level);
        let v = small_poly_eval(ctx, &ternary(&mut self.rng, ctx.n()), &idx);
        let e0 = small_poly_eval(ctx, &discrete_gaussian(&mut self.rng, ctx.n()), &idx);
        let e1 = small_poly_eval(ctx, &discrete_gaussian(&mut self.rng, ctx.n()), &idx);
        let b = pk.b.select(&idx)?;
        let a = pk.a.select(&idx)?;
        let mut m = pt.poly.clone();
        m.to_eval(ctx);
        let mut c0 = v.mul(ctx, &b)?;
        c0.add_assign(ctx, &e0)?;
        c0.add_assign(ctx, &m)?;
        let mut c1 = v.mul(ctx, &a)?;
        c1.add_assign(ctx, &e1)?;
        Ok(Ciphertext {
            c0,
            c1,
            scale: pt.scale,
            level: pt.level,
            slots: pt.slots,
            noise_estimate: fresh_noise(ctx),
        })
    }

    /// Secret-key encryption: `(-a·s + e + m, a)`.
    pub fn encrypt_sk(&mut self, pt: &Plaintext, sk: &SecretKey) -> Result<Ciphertext> {
        self.check_level(pt)?;
        let ctx = &self.ctx;
        let idx = Self::chain(pt.level);
        let a = uniform_poly(&mut self.rng, ctx, &idx, Format::Eval);
        let e = small_poly_eval(ctx, &discrete_gaussian(&mut self.rng, ctx.n()), &idx);
        let s = sk.at_level(pt.level);
        let mut m = pt.poly.clone();
        m.to_eval(ctx);
        let mut c0 = a.mul(ctx, &s)?.neg(ctx);
        c0.add_assign(ctx, &e)?;
        c0.add_assign(ctx, &m)?;
        Ok(Ciphertext {
            c0,
            c1: a,
            scale: pt.scale,
            level: pt.level,
            slots: pt.slots,
            noise_estimate: 6.0 * SIGMA,
        })
    }

    /// Encryption of zero at `level` with the given scale and slot count.
    pub fn encrypt_zero(&mut self, pk: &PublicKey, level: usize, scale: f64, slots: usize) -> Result<Ciphertext> {
        let pt = Plaintext {
            poly: RnsPoly::zero(&self.ctx, &Self::chain(level), Format::Eval),
            scale,
            level,
            slots,
        };
        self.encrypt(&pt, pk)
    }
}

pub struct Decryptor {
    ctx: Context,
}

impl Decryptor {
    pub fn new(ctx: &Context) -> Self {
        Self { ctx: ctx.clone() }
    }

    /// `c0 + c1·s` at the ciphertext's level.
    pub fn decrypt(&self, ct: &Ciphertext, sk: &SecretKey) -> Result<Plaintext> {
        let ctx = &self.ctx;
        ct.check(ctx)?;
        if ct.level == 0 && ct.scale > ctx.modulus(0).value() as f64 / 2.0 {
            log::warn!(
                "decrypting at the last level with scale {:.3e} above q0/2; precision is lost",
                ct.scale
            );
        }
        let s = sk.at_level(ct.level);
        let mut m = ct.c1.mul(ctx, &s)?;
        m.add_assign(ctx, &ct.c0)?;
        Ok(Plaintext {
            poly: m,
            scale: ct.scale,
            level: ct.level,
            slots: ct.slots,
        })
    }
}
