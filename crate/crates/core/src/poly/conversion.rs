use rayon::prelude::*;

use super::{Format, Limb, RnsPoly};
use crate::context::Context;
use crate::error::{Error, Result};

/// Approximate base extension of `x` (coefficient form, limbs over one
/// contiguous range of primes) to the primes listed in `targets`.
///
/// Each output coefficient equals `v + u * Q'` modulo the target prime, where
/// `v` is the value represented by the source residues in `[0, Q')` and
/// `0 <= u < source limb count`.
pub fn fast_base_convert(ctx: &Context, x: &RnsPoly, targets: &[usize]) -> Result<RnsPoly> {
    let mut out = RnsPoly::zero(ctx, targets, Format::Coeff);
    fast_base_convert_into(ctx, x.limbs(), x.format(), &mut out.limbs)?;
    Ok(out)
}

/// Scratch-friendly form of [`fast_base_convert`]: fills `targets` in place.
pub fn fast_base_convert_into(
    ctx: &Context,
    source: &[Limb],
    format: Format,
    targets: &mut [Limb],
) -> Result<()> {
    if format != Format::Coeff {
        return Err(Error::FormatMismatch("base conversion expects coefficient form"));
    }
    let start = source.first().ok_or(Error::LimbMismatch)?.modulus_index;
    if source
        .iter()
        .enumerate()
        .any(|(k, l)| l.modulus_index != start + k)
    {
        return Err(Error::LimbMismatch);
    }
    let table = ctx.conversion(start..start + source.len())?;
    let n = ctx.n();

    // limb-wise scaling by q_hat_i^{-1}
    let scaled: Vec<Vec<u64>> = source
        .par_iter()
        .zip(table.q_hat_inv.par_iter())
        .map(|(l, &inv)| {
            let m = ctx.modulus(l.modulus_index);
            l.coeffs.iter().map(|&c| m.shoup_mul(c, inv)).collect()
        })
        .collect();

    // one matrix-vector product per coefficient, accumulated in 128 bits
    targets
        .par_chunks_mut(ctx.limb_chunk())
        .for_each(|group| {
            let mut acc = vec![0u128; n];
            for t in group.iter_mut() {
                let m = ctx.modulus(t.modulus_index);
                let row = &table.q_hat[t.modulus_index];
                acc.iter_mut().for_each(|a| *a = 0);
                for (y, &h) in scaled.iter().zip(row) {
                    for (a, &v) in acc.iter_mut().zip(y) {
                        *a += v as u128 * h as u128;
                    }
                }
                for (o, &a) in t.coeffs.iter_mut().zip(&acc) {
                    *o = m.reduce_u128(a);
                }
            }
        });
    Ok(())
}
