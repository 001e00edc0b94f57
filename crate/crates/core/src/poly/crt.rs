use num_bigint::{BigInt, BigUint, Sign};
use num_traits::ToPrimitive;
use rayon::prelude::*;

use super::{Format, RnsPoly};
use crate::context::Context;
use crate::error::{Error, Result};

/// CRT-reconstructs each coefficient of a chain-prefix polynomial as a signed
/// integer in `(-Q/2, Q/2]`.
pub fn centered_coefficients(ctx: &Context, x: &RnsPoly) -> Result<Vec<BigInt>> {
    let all: Vec<usize> = (0..ctx.n()).collect();
    centered_at(ctx, x, &all)
}

/// Like [`centered_coefficients`] but only for the listed coefficient positions.
pub fn centered_at(ctx: &Context, x: &RnsPoly, positions: &[usize]) -> Result<Vec<BigInt>> {
    let x = chain_prefix_coeff(ctx, x)?;
    let level = x.limb_count() - 1;
    let crt = ctx.crt(level);
    let half = &crt.product >> 1;
    Ok(positions
        .par_iter()
        .map(|&c| {
            let mut acc = BigUint::default();
            for (l, b) in x.limbs().iter().zip(&crt.basis) {
                acc += b * l.coeffs[c];
            }
            let v = acc % &crt.product;
            if v > half {
                BigInt::from_biguint(Sign::Minus, &crt.product - v)
            } else {
                BigInt::from_biguint(Sign::Plus, v)
            }
        })
        .collect())
}

/// Centered coefficients divided by `scale`, as floating point.
pub fn coefficients_f64(ctx: &Context, x: &RnsPoly, scale: f64) -> Result<Vec<f64>> {
    let all: Vec<usize> = (0..ctx.n()).collect();
    coefficients_f64_at(ctx, x, &all, scale)
}

pub fn coefficients_f64_at(
    ctx: &Context,
    x: &RnsPoly,
    positions: &[usize],
    scale: f64,
) -> Result<Vec<f64>> {
    if x.limb_count() == 1 {
        let x = chain_prefix_coeff(ctx, x)?;
        let m = ctx.modulus(0);
        return Ok(positions
            .iter()
            .map(|&c| m.centered(x.limbs()[0].coeffs[c]) as f64 / scale)
            .collect());
    }
    Ok(centered_at(ctx, x, positions)?
        .iter()
        .map(|v| big_to_f64(v) / scale)
        .collect())
}

fn big_to_f64(v: &BigInt) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

fn chain_prefix_coeff(ctx: &Context, x: &RnsPoly) -> Result<RnsPoly> {
    let ok = x
        .limbs()
        .iter()
        .enumerate()
        .all(|(k, l)| l.modulus_index == k && k < ctx.chain_len());
    if !ok || x.limb_count() == 0 {
        return Err(Error::LimbMismatch);
    }
    let mut y = x.clone();
    if y.format() == Format::Eval {
        y.to_coeff(ctx);
    }
    Ok(y)
}
