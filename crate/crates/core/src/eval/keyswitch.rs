//! Hybrid key switching: digit decomposition, ModUp, multiply-accumulate
//! against the key, and ModDown.

use std::ops::Range;

use rayon::prelude::*;

use crate::client::KeySwitchingKey;
use crate::context::Context;
use crate::error::{Error, Result};
use crate::ntt::{Epilogue, Prologue};
use crate::poly::{fast_base_convert_into, Format, Limb, RnsPoly};

/// A polynomial over chain limbs `0..=level` followed by every extension limb.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtendedPoly {
    pub poly: RnsPoly,
    /// Digit whose residues produced this polynomial.
    pub origin_digit: usize,
}

fn extended_indices(ctx: &Context, level: usize) -> Vec<usize> {
    (0..=level).chain(ctx.extension_indices()).collect()
}

/// Raises one digit of `d` (coefficient form, chain limbs `0..=level`) to the
/// extended base `q_0..q_level, p_0..p_{K-1}`. Limbs of the digit itself are
/// copied; all others come from fast base conversion.
pub fn mod_up(ctx: &Context, d: &RnsPoly, digit: Range<usize>, origin_digit: usize) -> Result<ExtendedPoly> {
    if d.format() != Format::Coeff {
        return Err(Error::FormatMismatch("ModUp expects coefficient form"));
    }
    let level = d.level(ctx);
    if digit.end > level + 1 {
        return Err(Error::Level(format!("digit {digit:?} above level {level}")));
    }
    let source = &d.limbs()[digit.clone()];
    let targets: Vec<usize> = extended_indices(ctx, level)
        .into_iter()
        .filter(|i| !digit.contains(i))
        .collect();
    let mut converted = RnsPoly::zero(ctx, &targets, Format::Coeff).into_limbs();
    fast_base_convert_into(ctx, source, Format::Coeff, &mut converted)?;
    let mut converted = converted.into_iter();
    let limbs: Vec<Limb> = extended_indices(ctx, level)
        .into_iter()
        .map(|i| {
            if digit.contains(&i) {
                d.limbs()[i].clone()
            } else {
                converted.next().expect("one converted limb per target")
            }
        })
        .collect();
    Ok(ExtendedPoly {
        poly: RnsPoly::from_limbs(ctx, limbs, Format::Coeff)?,
        origin_digit,
    })
}

/// Approximate division by `P`: maps an extended polynomial in evaluation
/// form to `round(x / P)` over its chain limbs.
pub fn mod_down(ctx: &Context, x: &RnsPoly) -> Result<RnsPoly> {
    mod_down_impl(ctx, x, true)
}

/// [`mod_down`] with the NTT, subtraction and scaling as separate passes.
pub fn mod_down_unfused(ctx: &Context, x: &RnsPoly) -> Result<RnsPoly> {
    mod_down_impl(ctx, x, false)
}

fn mod_down_impl(ctx: &Context, x: &RnsPoly, fused: bool) -> Result<RnsPoly> {
    if x.format() != Format::Eval {
        return Err(Error::FormatMismatch("ModDown expects evaluation form"));
    }
    let level = x.level(ctx);
    let k = ctx.extension_len();
    if x.limb_count() != level + 1 + k
        || x.limbs()[level + 1..]
            .iter()
            .zip(ctx.extension_indices())
            .any(|(l, i)| l.modulus_index != i)
    {
        return Err(Error::LimbMismatch);
    }
    let mut ext: Vec<Limb> = x.limbs()[level + 1..].to_vec();
    let variant = ctx.ntt_variant();
    ext.par_iter_mut().for_each(|l| {
        ctx.ntt_table(l.modulus_index)
            .inverse_fused(&mut l.coeffs, variant, Epilogue::None)
            .expect("lengths match");
    });
    let chain: Vec<usize> = (0..=level).collect();
    let mut conv = RnsPoly::zero(ctx, &chain, Format::Coeff).into_limbs();
    fast_base_convert_into(ctx, &ext, Format::Coeff, &mut conv)?;
    let p_inv = ctx.p_inv_mod_q();
    let chunk = ctx.limb_chunk();
    conv.par_chunks_mut(chunk)
        .zip(x.limbs()[..=level].par_chunks(chunk))
        .for_each(|(cs, xs)| {
            for (c, xl) in cs.iter_mut().zip(xs) {
                let i = xl.modulus_index;
                let table = ctx.ntt_table(i);
                if fused {
                    table
                        .forward_fused(
                            &mut c.coeffs,
                            variant,
                            Prologue::None,
                            Epilogue::ScaleSubtract {
                                minuend: &xl.coeffs,
                                factor: p_inv[i],
                            },
                        )
                        .expect("lengths match");
                } else {
                    let m = ctx.modulus(i);
                    table.forward(&mut c.coeffs).expect("lengths match");
                    for (o, &v) in c.coeffs.iter_mut().zip(&xl.coeffs) {
                        *o = m.barrett_mul(m.sub(v, *o), p_inv[i].operand);
                    }
                }
            }
        });
    RnsPoly::from_limbs(ctx, conv, Format::Eval)
}

fn check_key(ctx: &Context, ksk: &KeySwitchingKey, digits: usize) -> Result<()> {
    if ksk.digit_count() < digits {
        return Err(Error::MissingKey(format!(
            "key has {} digits, {} needed",
            ksk.digit_count(),
            digits
        )));
    }
    let total = ctx.moduli().len();
    if ksk.digits.iter().any(|(a, b)| a.limb_count() != total || b.limb_count() != total) {
        return Err(Error::LimbMismatch);
    }
    Ok(())
}

/// Position of modulus `i` inside an extended polynomial at `level`.
fn ext_position(ctx: &Context, level: usize, i: usize) -> usize {
    if i < ctx.chain_len() {
        i
    } else {
        level + 1 + (i - ctx.chain_len())
    }
}

fn finish_accumulators(
    ctx: &Context,
    indices: &[usize],
    acc0: Vec<Vec<u128>>,
    acc1: Vec<Vec<u128>>,
) -> (RnsPoly, RnsPoly) {
    let reduce = |accs: Vec<Vec<u128>>| -> Vec<Limb> {
        accs.into_par_iter()
            .zip(indices.par_iter())
            .map(|(a, &i)| {
                let m = ctx.modulus(i);
                Limb {
                    modulus_index: i,
                    coeffs: a.iter().map(|&v| m.reduce_u128(v)).collect(),
                }
            })
            .collect()
    };
    let p0 = RnsPoly::from_limbs(ctx, reduce(acc0), Format::Eval).expect("reduced");
    let p1 = RnsPoly::from_limbs(ctx, reduce(acc1), Format::Eval).expect("reduced");
    (p0, p1)
}

/// Inner products `(Σ_j x_j·ksk0_j, Σ_j x_j·ksk1_j)` over the extended base,
/// computed in one fused pass: each converted ModUp limb is transformed with
/// a multiply-accumulate epilogue and the sums stay unreduced until the end.
pub fn key_switch_ext(ctx: &Context, d: &RnsPoly, ksk: &KeySwitchingKey) -> Result<(RnsPoly, RnsPoly)> {
    if d.format() != Format::Eval {
        return Err(Error::FormatMismatch("key switching expects evaluation form"));
    }
    let level = d.level(ctx);
    let digits = ctx.digit_bases(level);
    check_key(ctx, ksk, digits.len())?;
    let d_coeff = d.clone().into_coeff(ctx);
    let raised: Vec<ExtendedPoly> = digits
        .iter()
        .enumerate()
        .map(|(j, r)| mod_up(ctx, &d_coeff, r.clone(), j))
        .collect::<Result<_>>()?;
    let indices = extended_indices(ctx, level);
    let n = ctx.n();
    let variant = ctx.ntt_variant();
    let (acc0, acc1): (Vec<Vec<u128>>, Vec<Vec<u128>>) = indices
        .par_iter()
        .enumerate()
        .map(|(pos, &i)| {
            let mut a0 = vec![0u128; n];
            let mut a1 = vec![0u128; n];
            for (j, r) in digits.iter().enumerate() {
                let (k0, k1) = &ksk.digits[j];
                let k0 = &k0.limbs()[i].coeffs;
                let k1 = &k1.limbs()[i].coeffs;
                if r.contains(&i) {
                    // the digit's own limbs are already known in evaluation form
                    let x = &d.limbs()[i].coeffs;
                    for c in 0..n {
                        a0[c] += x[c] as u128 * k0[c] as u128;
                        a1[c] += x[c] as u128 * k1[c] as u128;
                    }
                } else {
                    let mut x = raised[j].poly.limbs()[pos].coeffs.clone();
                    ctx.ntt_table(i)
                        .forward_fused(
                            &mut x,
                            variant,
                            Prologue::None,
                            Epilogue::KskMulAcc {
                                ksk0: k0,
                                ksk1: k1,
                                acc0: &mut a0,
                                acc1: &mut a1,
                            },
                        )
                        .expect("lengths match");
                }
            }
            (a0, a1)
        })
        .unzip();
    Ok(finish_accumulators(ctx, &indices, acc0, acc1))
}

/// Full key switch of `d` (evaluation form, level `l`): returns the pair that,
/// added to a ciphertext, replaces `d·s'` by an encryption under `s`.
pub fn key_switch(ctx: &Context, d: &RnsPoly, ksk: &KeySwitchingKey) -> Result<(RnsPoly, RnsPoly)> {
    let (e0, e1) = key_switch_ext(ctx, d, ksk)?;
    Ok((mod_down(ctx, &e0)?, mod_down(ctx, &e1)?))
}

/// Every stage as a separate pass: ModUp, full NTT, reduced products, sums,
/// unfused ModDown. Agrees with [`key_switch`] bit for bit.
pub fn key_switch_unfused(ctx: &Context, d: &RnsPoly, ksk: &KeySwitchingKey) -> Result<(RnsPoly, RnsPoly)> {
    let level = d.level(ctx);
    let digits = ctx.digit_bases(level);
    check_key(ctx, ksk, digits.len())?;
    let d_coeff = d.clone().into_coeff(ctx);
    let indices = extended_indices(ctx, level);
    let mut s0 = RnsPoly::zero(ctx, &indices, Format::Eval);
    let mut s1 = s0.clone();
    for (j, r) in digits.iter().enumerate() {
        let x = mod_up(ctx, &d_coeff, r.clone(), j)?.poly.into_eval(ctx);
        let k0 = ksk.digits[j].0.select(&indices)?;
        let k1 = ksk.digits[j].1.select(&indices)?;
        s0.add_assign(ctx, &x.mul(ctx, &k0)?)?;
        s1.add_assign(ctx, &x.mul(ctx, &k1)?)?;
    }
    Ok((mod_down_unfused(ctx, &s0)?, mod_down_unfused(ctx, &s1)?))
}

/// ModUp outputs of every active digit of `d`, in evaluation form. Shared by
/// hoisted rotations.
pub fn decompose(ctx: &Context, d: &RnsPoly) -> Result<Vec<RnsPoly>> {
    if d.format() != Format::Eval {
        return Err(Error::FormatMismatch("decomposition expects evaluation form"));
    }
    let level = d.level(ctx);
    let d_coeff = d.clone().into_coeff(ctx);
    ctx.digit_bases(level)
        .into_iter()
        .enumerate()
        .map(|(j, r)| {
            let mut x = mod_up(ctx, &d_coeff, r.clone(), j)?.poly;
            // only the converted limbs need a transform
            let variant = ctx.ntt_variant();
            x.limbs_mut().par_iter_mut().for_each(|l| {
                if r.contains(&l.modulus_index) {
                    l.coeffs.clone_from(&d.limbs()[l.modulus_index].coeffs);
                } else {
                    ctx.ntt_table(l.modulus_index)
                        .forward_fused(&mut l.coeffs, variant, Prologue::None, Epilogue::None)
                        .expect("lengths match");
                }
            });
            let limbs = x.into_limbs();
            RnsPoly::from_limbs(ctx, limbs, Format::Eval)
        })
        .collect()
}

/// Multiply-accumulate of pre-decomposed digits against a key, then ModDown.
pub fn key_switch_decomposed(
    ctx: &Context,
    digits: &[RnsPoly],
    ksk: &KeySwitchingKey,
) -> Result<(RnsPoly, RnsPoly)> {
    check_key(ctx, ksk, digits.len())?;
    let first = digits.first().ok_or(Error::LimbMismatch)?;
    let level = first.level(ctx);
    let indices = extended_indices(ctx, level);
    let n = ctx.n();
    let (acc0, acc1): (Vec<Vec<u128>>, Vec<Vec<u128>>) = indices
        .par_iter()
        .map(|&i| {
            let pos = ext_position(ctx, level, i);
            let mut a0 = vec![0u128; n];
            let mut a1 = vec![0u128; n];
            for (j, x) in digits.iter().enumerate() {
                let x = &x.limbs()[pos].coeffs;
                let k0 = &ksk.digits[j].0.limbs()[i].coeffs;
                let k1 = &ksk.digits[j].1.limbs()[i].coeffs;
                for c in 0..n {
                    a0[c] += x[c] as u128 * k0[c] as u128;
                    a1[c] += x[c] as u128 * k1[c] as u128;
                }
            }
            (a0, a1)
        })
        .unzip();
    let (e0, e1) = finish_accumulators(ctx, &indices, acc0, acc1);
    Ok((mod_down(ctx, &e0)?, mod_down(ctx, &e1)?))
}
