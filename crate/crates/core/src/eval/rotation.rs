//! Hoisted rotations: the digit decomposition of `c1` is computed once and
//! each rotation permutes the decomposed limbs instead of repeating ModUp.
//!
//! Base conversion commutes with the automorphism only up to multiples of the
//! digit modulus, so hoisted outputs decrypt to the same message as plain
//! rotations but are not bitwise equal to them.

use rayon::prelude::*;

use super::keyswitch::{decompose, key_switch_decomposed};
use super::Evaluator;
use crate::client::{rotation_exponent, Ciphertext, EvaluationKeys};
use crate::error::Result;
use crate::poly::{permute_eval, Format, RnsPoly};

pub struct HoistedCiphertext<'a> {
    ct: &'a Ciphertext,
    digits: Vec<RnsPoly>,
}

impl HoistedCiphertext<'_> {
    pub fn ciphertext(&self) -> &Ciphertext {
        self.ct
    }
}

impl Evaluator {
    pub fn hoist<'a>(&self, ct: &'a Ciphertext) -> Result<HoistedCiphertext<'a>> {
        Ok(HoistedCiphertext {
            ct,
            digits: decompose(self.context(), &ct.c1)?,
        })
    }

    /// Rotation by `r` reusing a shared decomposition.
    pub fn rotate_hoisted(&self, h: &HoistedCiphertext<'_>, r: i64, keys: &EvaluationKeys) -> Result<Ciphertext> {
        let ctx = self.context();
        let ct = h.ct;
        let k = rotation_exponent(ctx.n(), ct.slots, r);
        if k == 1 {
            return Ok(ct.clone());
        }
        let ksk = keys.galois(k)?;
        let map = ctx.galois_eval_map(k)?;
        let permuted: Vec<RnsPoly> = h
            .digits
            .par_iter()
            .map(|d| {
                let mut out = d.clone();
                permute_eval(ctx, d.limbs(), out.limbs_mut(), &map);
                out
            })
            .collect();
        let (k0, k1) = key_switch_decomposed(ctx, &permuted, ksk)?;
        let mut c0 = RnsPoly::zero(ctx, &ct.c0.indices(), Format::Eval);
        permute_eval(ctx, ct.c0.limbs(), c0.limbs_mut(), &map);
        c0.add_assign(ctx, &k0)?;
        Ok(Ciphertext {
            c0,
            c1: k1,
            scale: ct.scale,
            level: ct.level,
            slots: ct.slots,
            noise_estimate: ct.noise_estimate + ctx.n() as f64,
        })
    }

    /// All rotations of `ct` by `offsets`, sharing one decomposition.
    pub fn rotate_many(&self, ct: &Ciphertext, offsets: &[i64], keys: &EvaluationKeys) -> Result<Vec<Ciphertext>> {
        let h = self.hoist(ct)?;
        offsets.iter().map(|&r| self.rotate_hoisted(&h, r, keys)).collect()
    }
}
