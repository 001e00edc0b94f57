//! Homomorphic operations on ciphertexts.
//!
//! Scales are tracked exactly as real numbers. Multiplications multiply
//! scales and leave rescaling to the caller; the `*_rescale` helpers combine
//! both. Additions first bring their operands to one level and scale: a
//! higher operand is truncated to one limb above the target, multiplied by
//! the integer `round(target_scale * q / scale)` and rescaled, which lands on
//! the target scale up to a relative error of about `1 / (2 * factor)`.

mod keyswitch;
mod rotation;

pub use keyswitch::{
    decompose, key_switch, key_switch_decomposed, key_switch_ext, key_switch_unfused, mod_down,
    mod_down_unfused, mod_up, ExtendedPoly,
};
pub use rotation::HoistedCiphertext;

use std::borrow::Cow;

use rayon::prelude::*;

use crate::client::{Ciphertext, EvaluationKeys, KeySwitchingKey, Plaintext};
use crate::context::Context;
use crate::error::{Error, Result};
use crate::poly::{rescale, Format, Limb, RnsPoly};

/// Relative scale difference below which two scales count as equal.
pub const SCALE_TOLERANCE: f64 = 1.0 / (1u64 << 30) as f64;

/// Smallest integer factor accepted when re-aligning a scale.
const MIN_ADJUST_FACTOR: f64 = 65536.0;

pub fn scales_match(a: f64, b: f64) -> bool {
    ((a - b) / a.max(b)).abs() <= SCALE_TOLERANCE
}

/// Equality up to floating-point rounding of the scale bookkeeping. A
/// difference inside [`SCALE_TOLERANCE`] still shifts every slot by that
/// relative amount, so level-lowering adjustments correct anything larger.
fn scales_equal(a: f64, b: f64) -> bool {
    ((a - b) / a.max(b)).abs() <= f64::EPSILON * 64.0
}

/// Weight of one term in [`Evaluator::fused_weighted_sum`].
#[derive(Clone, Copy, Debug)]
pub enum Weight<'a> {
    Scalar(f64),
    Plain(&'a Plaintext),
}

#[derive(Clone, Debug)]
pub struct Evaluator {
    ctx: Context,
}

impl Evaluator {
    pub fn new(ctx: &Context) -> Self {
        Self { ctx: ctx.clone() }
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    fn chain(level: usize) -> Vec<usize> {
        (0..=level).collect()
    }

    /// Truncates to `level` without touching the scale.
    pub fn drop_to_level(&self, ct: &Ciphertext, level: usize) -> Result<Ciphertext> {
        if level > ct.level {
            return Err(Error::Level(format!("cannot raise {} to {level}", ct.level)));
        }
        let mut out = ct.clone();
        out.c0.truncate_to_level(&self.ctx, level)?;
        out.c1.truncate_to_level(&self.ctx, level)?;
        out.level = level;
        Ok(out)
    }

    pub fn rescale(&self, ct: &Ciphertext) -> Result<Ciphertext> {
        if ct.level == 0 {
            return Err(Error::Level("cannot rescale at level 0".into()));
        }
        let q = self.ctx.modulus(ct.level).value() as f64;
        let (c0, c1) = rayon::join(|| rescale(&self.ctx, &ct.c0), || rescale(&self.ctx, &ct.c1));
        Ok(Ciphertext {
            c0: c0?,
            c1: c1?,
            scale: ct.scale / q,
            level: ct.level - 1,
            slots: ct.slots,
            noise_estimate: ct.noise_estimate / q + (self.ctx.n() as f64).sqrt(),
        })
    }

    /// Multiplies by an integer without changing the scale. Combined with a
    /// manual scale update this realizes exact scale adjustments.
    pub fn mul_integer(&self, ct: &Ciphertext, k: i128) -> Ciphertext {
        let mut out = ct.clone();
        out.c0.mul_integer_assign(&self.ctx, k);
        out.c1.mul_integer_assign(&self.ctx, k);
        out.noise_estimate *= k.unsigned_abs() as f64;
        out
    }

    /// Brings `ct` to `level` and (approximately) `scale`.
    pub fn adjust(&self, ct: &Ciphertext, level: usize, scale: f64) -> Result<Ciphertext> {
        if level > ct.level {
            return Err(Error::Level(format!("cannot raise {} to {level}", ct.level)));
        }
        if scales_equal(ct.scale, scale) {
            return self.drop_to_level(ct, level);
        }
        if level < ct.level {
            let mut t = self.drop_to_level(ct, level + 1)?;
            let q = self.ctx.modulus(level + 1).value() as f64;
            let factor = (scale * q / t.scale).round();
            if factor < MIN_ADJUST_FACTOR || factor >= 2f64.powi(100) {
                return Err(Error::ScaleMismatch(ct.scale, scale));
            }
            t = self.mul_integer(&t, factor as i128);
            t.scale *= factor;
            let mut r = self.rescale(&t)?;
            if scales_match(r.scale, scale) {
                r.scale = scale;
                return Ok(r);
            }
            return Err(Error::ScaleMismatch(r.scale, scale));
        }
        // same level: only an integer ratio helps
        if scales_match(ct.scale, scale) {
            return Ok(ct.clone());
        }
        let ratio = scale / ct.scale;
        let k = ratio.round();
        if k >= 1.0 && scales_match(ct.scale * k, scale) {
            let mut r = self.mul_integer(ct, k as i128);
            r.scale = scale;
            return Ok(r);
        }
        Err(Error::ScaleMismatch(ct.scale, scale))
    }

    /// Brings two ciphertexts to a common level and scale.
    fn align<'a>(&self, a: &'a Ciphertext, b: &'a Ciphertext) -> Result<(Cow<'a, Ciphertext>, Cow<'a, Ciphertext>)> {
        if a.slots != b.slots {
            return Err(Error::InvalidSlots(b.slots));
        }
        if a.level == b.level && scales_match(a.scale, b.scale) {
            if (a.scale / b.scale - 1.0).abs() > 1e-14 { eprintln!("DBG align l{} rel {:e}", a.level, a.scale / b.scale - 1.0); }
            return Ok((Cow::Borrowed(a), Cow::Borrowed(b)));
        }
        if a.level > b.level {
            Ok((Cow::Owned(self.adjust(a, b.level, b.scale)?), Cow::Borrowed(b)))
        } else if b.level > a.level {
            Ok((Cow::Borrowed(a), Cow::Owned(self.adjust(b, a.level, a.scale)?)))
        } else if a.scale < b.scale {
            Ok((Cow::Owned(self.adjust(a, b.level, b.scale)?), Cow::Borrowed(b)))
        } else {
            Ok((Cow::Borrowed(a), Cow::Owned(self.adjust(b, a.level, a.scale)?)))
        }
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        let (a, b) = self.align(a, b)?;
        let mut out = a.into_owned();
        out.c0.add_assign(&self.ctx, &b.c0)?;
        out.c1.add_assign(&self.ctx, &b.c1)?;
        out.noise_estimate += b.noise_estimate;
        Ok(out)
    }

    pub fn sub(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        let (a, b) = self.align(a, b)?;
        let mut out = a.into_owned();
        out.c0.sub_assign(&self.ctx, &b.c0)?;
        out.c1.sub_assign(&self.ctx, &b.c1)?;
        out.noise_estimate += b.noise_estimate;
        Ok(out)
    }

    pub fn neg(&self, ct: &Ciphertext) -> Ciphertext {
        let mut out = ct.clone();
        out.c0.neg_assign(&self.ctx);
        out.c1.neg_assign(&self.ctx);
        out
    }

    fn plain_at<'a>(&self, pt: &'a Plaintext, level: usize) -> Result<Cow<'a, RnsPoly>> {
        if pt.level < level {
            return Err(Error::Level(format!(
                "plaintext at level {} below ciphertext level {level}",
                pt.level
            )));
        }
        let mut p = if pt.level == level {
            Cow::Borrowed(&pt.poly)
        } else {
            Cow::Owned(pt.poly.select(&Self::chain(level))?)
        };
        if p.format() != Format::Eval {
            p.to_mut().to_eval(&self.ctx);
        }
        Ok(p)
    }

    pub fn add_plain(&self, ct: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
        if !scales_match(ct.scale, pt.scale) {
            return Err(Error::ScaleMismatch(ct.scale, pt.scale));
        }
        let p = self.plain_at(pt, ct.level)?;
        let mut out = ct.clone();
        out.c0.add_assign(&self.ctx, &p)?;
        Ok(out)
    }

    pub fn sub_plain(&self, ct: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
        if !scales_match(ct.scale, pt.scale) {
            return Err(Error::ScaleMismatch(ct.scale, pt.scale));
        }
        let p = self.plain_at(pt, ct.level)?;
        let mut out = ct.clone();
        out.c0.sub_assign(&self.ctx, &p)?;
        Ok(out)
    }

    /// Slot-wise product with a plaintext; scales multiply.
    pub fn mul_plain(&self, ct: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
        let p = self.plain_at(pt, ct.level)?;
        let mut out = ct.clone();
        out.c0.mul_assign(&self.ctx, &p)?;
        out.c1.mul_assign(&self.ctx, &p)?;
        out.scale *= pt.scale;
        out.noise_estimate *= pt.scale;
        Ok(out)
    }

    pub fn mul_plain_rescale(&self, ct: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
        self.rescale(&self.mul_plain(ct, pt)?)
    }

    /// Adds the real constant `c` to every slot.
    pub fn add_scalar(&self, ct: &Ciphertext, c: f64) -> Result<Ciphertext> {
        let v = (c * ct.scale).round();
        if !v.is_finite() || v.abs() >= 2f64.powi(126) {
            return Err(Error::Overflow(format!("constant {c}")));
        }
        let mut out = ct.clone();
        out.c0.add_integer_assign(&self.ctx, v as i128);
        Ok(out)
    }

    /// Integer multiplier used to encode constants for a ciphertext: chosen
    /// so that a following rescale lands exactly on the standard scale of the
    /// next level.
    pub fn constant_factor(&self, ct: &Ciphertext) -> f64 {
        if ct.level == 0 {
            self.ctx.scale_at(0)
        } else {
            let q = self.ctx.modulus(ct.level).value() as f64;
            self.ctx.scale_at(ct.level - 1) * q / ct.scale
        }
    }

    /// Multiplies every slot by the real constant `c`; the scale grows by
    /// [`constant_factor`](Self::constant_factor) and the caller rescales.
    pub fn mul_scalar(&self, ct: &Ciphertext, c: f64) -> Result<Ciphertext> {
        let f = self.constant_factor(ct);
        let v = (c * f).round();
        if !v.is_finite() || v.abs() >= 2f64.powi(120) {
            return Err(Error::Overflow(format!("constant {c}")));
        }
        let mut out = self.mul_integer(ct, v as i128);
        out.scale = ct.scale * f;
        out.noise_estimate = ct.noise_estimate * f * c.abs().max(1.0 / f);
        Ok(out)
    }

    pub fn mul_scalar_rescale(&self, ct: &Ciphertext, c: f64) -> Result<Ciphertext> {
        self.rescale(&self.mul_scalar(ct, c)?)
    }

    /// Multiplies by the monomial `X^power`; `X^(N/2)` multiplies slots by `i`.
    pub fn mul_monomial(&self, ct: &Ciphertext, power: usize) -> Ciphertext {
        let idx = Self::chain(ct.level);
        let mono = RnsPoly::monomial(&self.ctx, power, &idx, Format::Eval);
        let mut out = ct.clone();
        out.c0.mul_assign(&self.ctx, &mono).expect("same limbs");
        out.c1.mul_assign(&self.ctx, &mono).expect("same limbs");
        out
    }

    pub fn mul_by_i(&self, ct: &Ciphertext) -> Ciphertext {
        self.mul_monomial(ct, self.ctx.n() / 2)
    }

    fn tensor_operands<'a>(&self, a: &'a Ciphertext, b: &'a Ciphertext) -> Result<(Cow<'a, Ciphertext>, Cow<'a, Ciphertext>)> {
        if a.slots != b.slots {
            return Err(Error::InvalidSlots(b.slots));
        }
        Ok(match a.level.cmp(&b.level) {
            std::cmp::Ordering::Equal => (Cow::Borrowed(a), Cow::Borrowed(b)),
            std::cmp::Ordering::Greater => (Cow::Owned(self.drop_to_level(a, b.level)?), Cow::Borrowed(b)),
            std::cmp::Ordering::Less => (Cow::Borrowed(a), Cow::Owned(self.drop_to_level(b, a.level)?)),
        })
    }

    fn relinearize(&self, d0: RnsPoly, d1: RnsPoly, d2: &RnsPoly, relin: &KeySwitchingKey) -> Result<(RnsPoly, RnsPoly)> {
        let (k0, k1) = keyswitch::key_switch(&self.ctx, d2, relin)?;
        let mut c0 = d0;
        let mut c1 = d1;
        c0.add_assign(&self.ctx, &k0)?;
        c1.add_assign(&self.ctx, &k1)?;
        Ok((c0, c1))
    }

    /// Tensor product followed by relinearization; scales multiply.
    pub fn mul(&self, a: &Ciphertext, b: &Ciphertext, relin: &KeySwitchingKey) -> Result<Ciphertext> {
        let (a, b) = self.tensor_operands(a, b)?;
        let ctx = &self.ctx;
        let ((d0, d2), d1) = rayon::join(
            || (a.c0.mul(ctx, &b.c0), a.c1.mul(ctx, &b.c1)),
            || -> Result<RnsPoly> {
                let mut x = a.c0.mul(ctx, &b.c1)?;
                x.add_assign(ctx, &a.c1.mul(ctx, &b.c0)?)?;
                Ok(x)
            },
        );
        let (c0, c1) = self.relinearize(d0?, d1?, &d2?, relin)?;
        Ok(self.product(c0, c1, &a, &b))
    }

    fn product(&self, c0: RnsPoly, c1: RnsPoly, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        Ciphertext {
            c0,
            c1,
            scale: a.scale * b.scale,
            level: a.level,
            slots: a.slots,
            noise_estimate: a.noise_estimate * b.scale + b.noise_estimate * a.scale + self.ctx.n() as f64,
        }
    }

    /// Squaring with one cross product instead of two.
    pub fn square(&self, a: &Ciphertext, relin: &KeySwitchingKey) -> Result<Ciphertext> {
        let ctx = &self.ctx;
        let d0 = a.c0.mul(ctx, &a.c0)?;
        let mut d1 = a.c0.mul(ctx, &a.c1)?;
        let t = d1.clone();
        d1.add_assign(ctx, &t)?;
        let d2 = a.c1.mul(ctx, &a.c1)?;
        let (c0, c1) = self.relinearize(d0, d1, &d2, relin)?;
        Ok(self.product(c0, c1, a, a))
    }

    /// Multiplication where the quadratic term is folded in as `P·d0` before a
    /// single ModDown, as in the textbook fused dataflow. Bitwise identical to
    /// [`mul`](Self::mul); kept as a reference path.
    pub fn mul_prescaled(&self, a: &Ciphertext, b: &Ciphertext, relin: &KeySwitchingKey) -> Result<Ciphertext> {
        let (a, b) = self.tensor_operands(a, b)?;
        let ctx = &self.ctx;
        let d0 = a.c0.mul(ctx, &b.c0)?;
        let mut d1 = a.c0.mul(ctx, &b.c1)?;
        d1.add_assign(ctx, &a.c1.mul(ctx, &b.c0)?)?;
        let d2 = a.c1.mul(ctx, &b.c1)?;
        let (mut e0, mut e1) = keyswitch::key_switch_ext(ctx, &d2, relin)?;
        let p_scaled = |d: &RnsPoly| -> Result<RnsPoly> {
            let mut limbs: Vec<Limb> = d.limbs().to_vec();
            for (l, &p) in limbs.iter_mut().zip(ctx.p_mod_q()) {
                let m = ctx.modulus(l.modulus_index);
                let s = m.shoup(p);
                l.coeffs.iter_mut().for_each(|x| *x = m.shoup_mul(*x, s));
            }
            // P vanishes modulo the extension primes
            for i in ctx.extension_indices() {
                limbs.push(Limb {
                    modulus_index: i,
                    coeffs: vec![0; ctx.n()],
                });
            }
            RnsPoly::from_limbs(ctx, limbs, Format::Eval)
        };
        e0.add_assign(ctx, &p_scaled(&d0)?)?;
        e1.add_assign(ctx, &p_scaled(&d1)?)?;
        let c0 = keyswitch::mod_down(ctx, &e0)?;
        let c1 = keyswitch::mod_down(ctx, &e1)?;
        Ok(self.product(c0, c1, &a, &b))
    }

    pub fn mul_rescale(&self, a: &Ciphertext, b: &Ciphertext, relin: &KeySwitchingKey) -> Result<Ciphertext> {
        self.rescale(&self.mul(a, b, relin)?)
    }

    pub fn square_rescale(&self, a: &Ciphertext, relin: &KeySwitchingKey) -> Result<Ciphertext> {
        self.rescale(&self.square(a, relin)?)
    }

    /// Re-encrypts `(c0, c1)` with `c1` under the automorphed secret back to `s`.
    fn apply_switch(&self, c0: RnsPoly, c1: &RnsPoly, ksk: &KeySwitchingKey, ct: &Ciphertext) -> Result<Ciphertext> {
        let (k0, k1) = keyswitch::key_switch(&self.ctx, c1, ksk)?;
        let mut c0 = c0;
        c0.add_assign(&self.ctx, &k0)?;
        Ok(Ciphertext {
            c0,
            c1: k1,
            scale: ct.scale,
            level: ct.level,
            slots: ct.slots,
            noise_estimate: ct.noise_estimate + self.ctx.n() as f64,
        })
    }

    /// Applies `X -> X^exponent` and switches back to the original key.
    pub fn apply_galois(&self, ct: &Ciphertext, exponent: usize, ksk: &KeySwitchingKey) -> Result<Ciphertext> {
        let c0 = ct.c0.automorphism(&self.ctx, exponent)?;
        let c1 = ct.c1.automorphism(&self.ctx, exponent)?;
        self.apply_switch(c0, &c1, ksk, ct)
    }

    /// Left rotation of the slot vector by `r` positions.
    pub fn rotate(&self, ct: &Ciphertext, r: i64, keys: &EvaluationKeys) -> Result<Ciphertext> {
        let k = crate::client::rotation_exponent(self.ctx.n(), ct.slots, r);
        if k == 1 {
            return Ok(ct.clone());
        }
        self.apply_galois(ct, k, keys.galois(k)?)
    }

    pub fn conjugate(&self, ct: &Ciphertext, keys: &EvaluationKeys) -> Result<Ciphertext> {
        let k = crate::client::conjugation_exponent(self.ctx.n());
        self.apply_galois(ct, k, keys.conjugation()?)
    }

    /// `Σ w_i · ct_i` in a single pass per limb with lazily reduced sums.
    ///
    /// All ciphertexts must share level and scale. Scalar weights are encoded
    /// with [`constant_factor`](Self::constant_factor); plaintext weights must
    /// share one scale. Mixing the two kinds is rejected.
    pub fn fused_weighted_sum(&self, cts: &[&Ciphertext], weights: &[Weight<'_>]) -> Result<Ciphertext> {
        if cts.is_empty() || cts.len() != weights.len() {
            return Err(Error::SizeMismatch {
                expected: cts.len(),
                got: weights.len(),
            });
        }
        let first = cts[0];
        for ct in cts {
            if ct.level != first.level || !scales_match(ct.scale, first.scale) || ct.slots != first.slots {
                return Err(Error::ScaleMismatch(first.scale, ct.scale));
            }
        }
        let level = first.level;
        let ctx = &self.ctx;
        let idx = Self::chain(level);
        let n = ctx.n();
        let (scale, terms): (f64, Vec<Term<'_>>) = match weights[0] {
            Weight::Scalar(_) => {
                let f = self.constant_factor(first);
                let ts = weights
                    .iter()
                    .zip(cts)
                    .map(|(w, ct)| match w {
                        Weight::Scalar(c) => {
                            // scales within tolerance are folded into the weight exactly
                            let v = (c * f * (first.scale / ct.scale)).round();
                            if v.abs() >= 2f64.powi(120) {
                                return Err(Error::Overflow(format!("weight {c}")));
                            }
                            Ok(Term::Integer(v as i128))
                        }
                        Weight::Plain(_) => Err(Error::FormatMismatch("mixed weight kinds")),
                    })
                    .collect::<Result<_>>()?;
                (first.scale * f, ts)
            }
            Weight::Plain(p0) => {
                let ts = weights
                    .iter()
                    .map(|w| match w {
                        Weight::Plain(p) => {
                            if !scales_match(p.scale, p0.scale) {
                                return Err(Error::ScaleMismatch(p0.scale, p.scale));
                            }
                            Ok(Term::Poly(self.plain_at(p, level)?))
                        }
                        Weight::Scalar(_) => Err(Error::FormatMismatch("mixed weight kinds")),
                    })
                    .collect::<Result<_>>()?;
                (first.scale * p0.scale, ts)
            }
        };
        let build = |pick: fn(&Ciphertext) -> &RnsPoly| -> RnsPoly {
            let limbs: Vec<Limb> = idx
                .par_iter()
                .map(|&i| {
                    let m = ctx.modulus(i);
                    let mut acc = vec![0u128; n];
                    for (count, (ct, t)) in cts.iter().zip(&terms).enumerate() {
                        if count > 0 && count % 255 == 0 {
                            // keep the lazy sums below 2^128
                            acc.iter_mut().for_each(|a| *a = m.reduce_u128(*a) as u128);
                        }
                        let x = &pick(ct).limbs()[i].coeffs;
                        match t {
                            Term::Integer(v) => {
                                let w = m.from_i128(*v) as u128;
                                for (a, &xv) in acc.iter_mut().zip(x) {
                                    *a += xv as u128 * w;
                                }
                            }
                            Term::Poly(p) => {
                                let w = &p.limbs()[i].coeffs;
                                for ((a, &xv), &wv) in acc.iter_mut().zip(x).zip(w) {
                                    *a += xv as u128 * wv as u128;
                                }
                            }
                        }
                    }
                    Limb {
                        modulus_index: i,
                        coeffs: acc.iter().map(|&a| m.reduce_u128(a)).collect(),
                    }
                })
                .collect();
            RnsPoly::from_limbs(ctx, limbs, Format::Eval).expect("reduced residues")
        };
        let c0 = build(|c| &c.c0);
        let c1 = build(|c| &c.c1);
        Ok(Ciphertext {
            c0,
            c1,
            scale,
            level,
            slots: first.slots,
            noise_estimate: cts.iter().map(|c| c.noise_estimate).sum::<f64>() * scale / first.scale,
        })
    }
}

enum Term<'a> {
    Integer(i128),
    Poly(Cow<'a, RnsPoly>),
}

#[cfg(test)]
mod tests;
