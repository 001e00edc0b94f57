//! Polynomials in `Z_Q[X]/(X^N + 1)` stored as stacks of per-prime limbs.

mod conversion;
mod crt;

pub use conversion::{fast_base_convert, fast_base_convert_into};
pub use crt::{centered_at, centered_coefficients, coefficients_f64, coefficients_f64_at};

use rayon::prelude::*;

use crate::context::Context;
use crate::error::{Error, Result};
use crate::ntt::{Epilogue, Prologue};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Format {
    Coeff,
    Eval,
}

impl Format {
    fn tag(self) -> u8 {
        match self {
            Format::Coeff => 0,
            Format::Eval => 1,
        }
    }
}

/// Residues of one polynomial modulo a single prime of the context.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Limb {
    pub modulus_index: usize,
    pub coeffs: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RnsPoly {
    limbs: Vec<Limb>,
    format: Format,
}

/// Runs `f` over mutable limbs, `chunk` limbs per parallel task.
pub(crate) fn for_each_limb<F>(limbs: &mut [Limb], chunk: usize, f: F)
where
    F: Fn(&mut Limb) + Sync + Send,
{
    limbs
        .par_chunks_mut(chunk.max(1))
        .for_each(|group| group.iter_mut().for_each(&f));
}

impl RnsPoly {
    pub fn zero(ctx: &Context, indices: &[usize], format: Format) -> Self {
        let n = ctx.n();
        Self {
            limbs: indices
                .iter()
                .map(|&i| Limb {
                    modulus_index: i,
                    coeffs: vec![0; n],
                })
                .collect(),
            format,
        }
    }

    pub fn from_limbs(ctx: &Context, limbs: Vec<Limb>, format: Format) -> Result<Self> {
        let n = ctx.n();
        let mut seen = std::collections::HashSet::new();
        for l in &limbs {
            if l.coeffs.len() != n {
                return Err(Error::SizeMismatch {
                    expected: n,
                    got: l.coeffs.len(),
                });
            }
            if l.modulus_index >= ctx.moduli().len() || !seen.insert(l.modulus_index) {
                return Err(Error::LimbMismatch);
            }
            let p = ctx.modulus(l.modulus_index).value();
            if l.coeffs.iter().any(|&c| c >= p) {
                return Err(Error::Malformed(format!("residue not below {p}")));
            }
        }
        Ok(Self { limbs, format })
    }

    /// Lifts signed integer coefficients into the given limbs (coefficient form).
    pub fn from_signed(ctx: &Context, coeffs: &[i64], indices: &[usize]) -> Result<Self> {
        if coeffs.len() != ctx.n() {
            return Err(Error::SizeMismatch {
                expected: ctx.n(),
                got: coeffs.len(),
            });
        }
        let limbs = indices
            .iter()
            .map(|&i| {
                let m = ctx.modulus(i);
                Limb {
                    modulus_index: i,
                    coeffs: coeffs.iter().map(|&c| m.from_i64(c)).collect(),
                }
            })
            .collect();
        Ok(Self {
            limbs,
            format: Format::Coeff,
        })
    }

    /// `X^power` (with sign) over the given limbs, in the requested format.
    pub fn monomial(ctx: &Context, power: usize, indices: &[usize], format: Format) -> Self {
        let n = ctx.n();
        let power = power % (2 * n);
        let (pos, negative) = if power >= n { (power - n, true) } else { (power, false) };
        let mut coeffs = vec![0i64; n];
        coeffs[pos] = if negative { -1 } else { 1 };
        let mut p = Self::from_signed(ctx, &coeffs, indices).expect("length matches");
        if format == Format::Eval {
            p.to_eval(ctx);
        }
        p
    }

    pub fn format(&self) -> Format {
        self.format
    }

    pub fn limbs(&self) -> &[Limb] {
        &self.limbs
    }

    pub fn limbs_mut(&mut self) -> &mut [Limb] {
        &mut self.limbs
    }

    pub fn into_limbs(self) -> Vec<Limb> {
        self.limbs
    }

    pub fn limb_count(&self) -> usize {
        self.limbs.len()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.limbs.iter().map(|l| l.modulus_index).collect()
    }

    /// Number of chain limbs minus one.
    pub fn level(&self, ctx: &Context) -> usize {
        self.limbs
            .iter()
            .filter(|l| l.modulus_index < ctx.chain_len())
            .count()
            .saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.limbs.iter().all(|l| l.coeffs.iter().all(|&c| c == 0))
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.format != other.format {
            return Err(Error::FormatMismatch("operands differ in format"));
        }
        if self.limbs.len() != other.limbs.len()
            || self
                .limbs
                .iter()
                .zip(&other.limbs)
                .any(|(a, b)| a.modulus_index != b.modulus_index)
        {
            return Err(Error::LimbMismatch);
        }
        Ok(())
    }

    fn zip_assign<F>(&mut self, ctx: &Context, other: &Self, f: F) -> Result<()>
    where
        F: Fn(&crate::arith::Modulus, u64, u64) -> u64 + Sync + Send,
    {
        self.check_compatible(other)?;
        let chunk = ctx.limb_chunk();
        self.limbs
            .par_chunks_mut(chunk)
            .zip(other.limbs.par_chunks(chunk))
            .for_each(|(mine, theirs)| {
                for (a, b) in mine.iter_mut().zip(theirs) {
                    let m = ctx.modulus(a.modulus_index);
                    for (x, &y) in a.coeffs.iter_mut().zip(&b.coeffs) {
                        *x = f(m, *x, y);
                    }
                }
            });
        Ok(())
    }

    pub fn add_assign(&mut self, ctx: &Context, other: &Self) -> Result<()> {
        self.zip_assign(ctx, other, |m, a, b| m.add(a, b))
    }

    pub fn sub_assign(&mut self, ctx: &Context, other: &Self) -> Result<()> {
        self.zip_assign(ctx, other, |m, a, b| m.sub(a, b))
    }

    pub fn mul_assign(&mut self, ctx: &Context, other: &Self) -> Result<()> {
        if self.format != Format::Eval {
            return Err(Error::FormatMismatch("multiplication needs evaluation form"));
        }
        self.zip_assign(ctx, other, |m, a, b| m.barrett_mul(a, b))
    }

    pub fn add(&self, ctx: &Context, other: &Self) -> Result<Self> {
        let mut r = self.clone();
        r.add_assign(ctx, other)?;
        Ok(r)
    }

    pub fn sub(&self, ctx: &Context, other: &Self) -> Result<Self> {
        let mut r = self.clone();
        r.sub_assign(ctx, other)?;
        Ok(r)
    }

    pub fn mul(&self, ctx: &Context, other: &Self) -> Result<Self> {
        let mut r = self.clone();
        r.mul_assign(ctx, other)?;
        Ok(r)
    }

    pub fn neg_assign(&mut self, ctx: &Context) {
        for_each_limb(&mut self.limbs, ctx.limb_chunk(), |l| {
            let m = ctx.modulus(l.modulus_index);
            l.coeffs.iter_mut().for_each(|x| *x = m.neg(*x));
        });
    }

    pub fn neg(&self, ctx: &Context) -> Self {
        let mut r = self.clone();
        r.neg_assign(ctx);
        r
    }

    /// Multiplies limb `i` by `scalars[i]`, a residue modulo that limb's prime.
    pub fn mul_scalar_assign(&mut self, ctx: &Context, scalars: &[u64]) -> Result<()> {
        if scalars.len() != self.limbs.len() {
            return Err(Error::SizeMismatch {
                expected: self.limbs.len(),
                got: scalars.len(),
            });
        }
        let chunk = ctx.limb_chunk();
        self.limbs
            .par_chunks_mut(chunk)
            .zip(scalars.par_chunks(chunk))
            .for_each(|(limbs, s)| {
                for (l, &c) in limbs.iter_mut().zip(s) {
                    let m = ctx.modulus(l.modulus_index);
                    let sc = m.shoup(m.reduce_u64(c));
                    l.coeffs.iter_mut().for_each(|x| *x = m.shoup_mul(*x, sc));
                }
            });
        Ok(())
    }

    /// Multiplies by a signed integer constant.
    pub fn mul_integer_assign(&mut self, ctx: &Context, v: i128) {
        let s = self.integer_residues(ctx, v);
        self.mul_scalar_assign(ctx, &s).expect("one residue per limb");
    }

    /// Residues of `v` modulo each limb's prime.
    pub fn integer_residues(&self, ctx: &Context, v: i128) -> Vec<u64> {
        self.limbs
            .iter()
            .map(|l| ctx.modulus(l.modulus_index).from_i128(v))
            .collect()
    }

    /// Adds `v` to the constant coefficient (or its evaluation-form image).
    pub fn add_integer_assign(&mut self, ctx: &Context, v: i128) {
        let format = self.format;
        for_each_limb(&mut self.limbs, ctx.limb_chunk(), |l| {
            let m = ctx.modulus(l.modulus_index);
            let r = m.from_i128(v);
            match format {
                Format::Coeff => l.coeffs[0] = m.add(l.coeffs[0], r),
                Format::Eval => l.coeffs.iter_mut().for_each(|x| *x = m.add(*x, r)),
            }
        });
    }

    pub fn to_eval(&mut self, ctx: &Context) {
        if self.format == Format::Eval {
            return;
        }
        let variant = ctx.ntt_variant();
        for_each_limb(&mut self.limbs, ctx.limb_chunk(), |l| {
            ctx.ntt_table(l.modulus_index)
                .forward_fused(&mut l.coeffs, variant, Prologue::None, Epilogue::None)
                .expect("limb length matches the table");
        });
        self.format = Format::Eval;
    }

    pub fn to_coeff(&mut self, ctx: &Context) {
        if self.format == Format::Coeff {
            return;
        }
        let variant = ctx.ntt_variant();
        for_each_limb(&mut self.limbs, ctx.limb_chunk(), |l| {
            ctx.ntt_table(l.modulus_index)
                .inverse_fused(&mut l.coeffs, variant, Epilogue::None)
                .expect("limb length matches the table");
        });
        self.format = Format::Coeff;
    }

    pub fn into_eval(mut self, ctx: &Context) -> Self {
        self.to_eval(ctx);
        self
    }

    pub fn into_coeff(mut self, ctx: &Context) -> Self {
        self.to_coeff(ctx);
        self
    }

    /// Removes the last `count` limbs.
    pub fn drop_limbs(&mut self, count: usize) -> Result<()> {
        if count >= self.limbs.len() {
            return Err(Error::Level(format!(
                "cannot drop {count} of {} limbs",
                self.limbs.len()
            )));
        }
        self.limbs.truncate(self.limbs.len() - count);
        Ok(())
    }

    /// Keeps only chain limbs `0..=level`, discarding higher and extension limbs.
    pub fn truncate_to_level(&mut self, ctx: &Context, level: usize) -> Result<()> {
        if level > self.level(ctx) {
            return Err(Error::Level(format!(
                "cannot raise from {} to {level} by truncation",
                self.level(ctx)
            )));
        }
        self.limbs.retain(|l| l.modulus_index <= level);
        Ok(())
    }

    /// Keeps the limbs whose modulus index lies in `indices`.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let limbs = indices
            .iter()
            .map(|&i| {
                self.limbs
                    .iter()
                    .find(|l| l.modulus_index == i)
                    .cloned()
                    .ok_or(Error::LimbMismatch)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            limbs,
            format: self.format,
        })
    }

    /// Applies `X -> X^k` for odd `k`.
    pub fn automorphism(&self, ctx: &Context, k: usize) -> Result<Self> {
        let n = ctx.n();
        if k.is_multiple_of(2) {
            return Err(Error::InvalidGaloisExponent(k));
        }
        let k = k % (2 * n);
        let mut out = self.clone();
        match self.format {
            Format::Coeff => {
                let mask = 2 * n - 1;
                out.limbs
                    .par_chunks_mut(ctx.limb_chunk())
                    .zip(self.limbs.par_chunks(ctx.limb_chunk()))
                    .for_each(|(dst, src)| {
                        for (d, s) in dst.iter_mut().zip(src) {
                            let m = ctx.modulus(s.modulus_index);
                            for (j, &c) in s.coeffs.iter().enumerate() {
                                let e = (j * k) & mask;
                                if e < n {
                                    d.coeffs[e] = c;
                                } else {
                                    d.coeffs[e - n] = m.neg(c);
                                }
                            }
                        }
                    });
            }
            Format::Eval => {
                let map = ctx.galois_eval_map(k)?;
                permute_eval(ctx, &self.limbs, &mut out.limbs, &map);
            }
        }
        Ok(out)
    }

    /// Binary form: `u32 N, u32 limb count, u8 format, u32 indices[]`, then the
    /// residues of each limb as little-endian `u64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.limbs.first().map_or(0, |l| l.coeffs.len());
        let mut out = Vec::with_capacity(9 + 4 * self.limbs.len() + 8 * n * self.limbs.len());
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&(self.limbs.len() as u32).to_le_bytes());
        out.push(self.format.tag());
        for l in &self.limbs {
            out.extend_from_slice(&(l.modulus_index as u32).to_le_bytes());
        }
        for l in &self.limbs {
            for c in &l.coeffs {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }

    /// Parses one polynomial from the front of `bytes`; returns it and the
    /// number of bytes consumed.
    pub fn from_bytes(ctx: &Context, bytes: &[u8]) -> Result<(Self, usize)> {
        let mut r = crate::serial::Reader::new(bytes);
        let n = r.u32()? as usize;
        if n != ctx.n() {
            return Err(Error::ContextMismatch(format!("ring degree {n}")));
        }
        let count = r.u32()? as usize;
        let format = match r.u8()? {
            0 => Format::Coeff,
            1 => Format::Eval,
            t => return Err(Error::Malformed(format!("format tag {t}"))),
        };
        let indices = (0..count)
            .map(|_| r.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut limbs = Vec::with_capacity(count);
        for i in indices {
            let coeffs = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
            limbs.push(Limb {
                modulus_index: i,
                coeffs,
            });
        }
        let poly = Self::from_limbs(ctx, limbs, format)?;
        Ok((poly, r.position()))
    }
}

/// `dst[i] = src[map[i]]` for every limb.
pub(crate) fn permute_eval(ctx: &Context, src: &[Limb], dst: &mut [Limb], map: &[usize]) {
    dst.par_chunks_mut(ctx.limb_chunk())
        .zip(src.par_chunks(ctx.limb_chunk()))
        .for_each(|(d, s)| {
            for (dl, sl) in d.iter_mut().zip(s) {
                for (o, &j) in dl.coeffs.iter_mut().zip(map) {
                    *o = sl.coeffs[j];
                }
            }
        });
}

/// Rescale: divides by the top chain prime `q_l` with rounding and drops it.
///
/// Works in evaluation form: the top limb is brought to coefficient form once,
/// then each lower limb is produced by a single transform that lifts it to
/// `q_i`, transforms, subtracts from `x_i` and multiplies by `q_l^{-1}`.
pub fn rescale(ctx: &Context, x: &RnsPoly) -> Result<RnsPoly> {
    rescale_impl(ctx, x, true)
}

/// Same result as [`rescale`], computed with separate passes.
pub fn rescale_unfused(ctx: &Context, x: &RnsPoly) -> Result<RnsPoly> {
    rescale_impl(ctx, x, false)
}

fn rescale_impl(ctx: &Context, x: &RnsPoly, fused: bool) -> Result<RnsPoly> {
    if x.format != Format::Eval {
        return Err(Error::FormatMismatch("rescale expects evaluation form"));
    }
    let level = x.level(ctx);
    if level == 0 || x.limbs.len() != level + 1 {
        return Err(Error::Level(format!(
            "rescale needs a chain-only polynomial above level 0 (level {level})"
        )));
    }
    let top_index = x.limbs[level].modulus_index;
    let q_top = ctx.modulus(top_index).value();
    let mut top = x.limbs[level].coeffs.clone();
    let variant = ctx.ntt_variant();
    ctx.ntt_table(top_index)
        .inverse_fused(&mut top, variant, Epilogue::None)?;
    let factors = ctx.rescale_factors(level);
    let mut limbs: Vec<Limb> = x.limbs[..level].to_vec();
    for_each_limb(&mut limbs, ctx.limb_chunk(), |l| {
        let i = l.modulus_index;
        let m = ctx.modulus(i);
        let table = ctx.ntt_table(i);
        if fused {
            let mut t = top.clone();
            table
                .forward_fused(
                    &mut t,
                    variant,
                    Prologue::SwitchModulus { from: q_top },
                    Epilogue::ScaleSubtract {
                        minuend: &l.coeffs,
                        factor: factors[i],
                    },
                )
                .expect("lengths match");
            l.coeffs = t;
        } else {
            let mut t: Vec<u64> = top.iter().map(|&v| m.switch_from(v, q_top)).collect();
            table.forward(&mut t).expect("lengths match");
            for (xi, ti) in l.coeffs.iter_mut().zip(&t) {
                *xi = m.barrett_mul(m.sub(*xi, *ti), factors[i].operand);
            }
        }
    });
    Ok(RnsPoly {
        limbs,
        format: Format::Eval,
    })
}
