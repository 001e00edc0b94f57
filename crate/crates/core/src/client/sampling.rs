use rand::Rng;

use crate::context::Context;
use crate::poly::{Format, Limb, RnsPoly};

/// Standard deviation of the error distribution.
pub const SIGMA: f64 = 3.19;

/// Tail cut of the discrete Gaussian, in standard deviations.
pub const TAIL: f64 = 6.0;

/// Uniform ternary coefficients in `{-1, 0, 1}`.
pub fn ternary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<i64> {
    (0..n).map(|_| rng.gen_range(-1i64..=1)).collect()
}

/// Discrete Gaussian of width [`SIGMA`], cut at [`TAIL`] standard deviations,
/// drawn by rejection from the uniform distribution on the support.
pub fn discrete_gaussian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<i64> {
    let bound = (TAIL * SIGMA).ceil() as i64;
    let denom = 2.0 * SIGMA * SIGMA;
    (0..n)
        .map(|_| loop {
            let z = rng.gen_range(-bound..=bound);
            let accept = (-((z * z) as f64) / denom).exp();
            if rng.gen::<f64>() < accept {
                break z;
            }
        })
        .collect()
}

/// Uniformly random residues over the given limbs, declared to be in `format`.
///
/// A uniform vector is uniform in either representation, so no transform is
/// needed.
pub fn uniform_poly<R: Rng + ?Sized>(
    rng: &mut R,
    ctx: &Context,
    indices: &[usize],
    format: Format,
) -> RnsPoly {
    let limbs = indices
        .iter()
        .map(|&i| {
            let p = ctx.modulus(i).value();
            Limb {
                modulus_index: i,
                coeffs: (0..ctx.n()).map(|_| rng.gen_range(0..p)).collect(),
            }
        })
        .collect();
    RnsPoly::from_limbs(ctx, limbs, format).expect("sampled residues are reduced")
}

/// Small signed coefficients lifted to the limbs and put in evaluation form.
pub fn small_poly_eval(ctx: &Context, coeffs: &[i64], indices: &[usize]) -> RnsPoly {
    RnsPoly::from_signed(ctx, coeffs, indices)
        .expect("length is N")
        .into_eval(ctx)
}
