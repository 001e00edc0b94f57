//! Plaintext-matrix × ciphertext-vector products with baby-step giant-step.
//!
//! A diagonal offset `r` is split as `r = g + k` with baby offsets `k` below
//! `n1·stride` and giant offsets `g` multiples of it, so that
//! `M·z = Σ_g rot(Σ_k rot(diag_{g+k}, -g) ⊙ rot(z, k), g)`.
//! Baby rotations share one decomposition; each inner sum is a single fused
//! weighted sum, and one rescale closes the transform.

use std::collections::BTreeSet;

use num_complex::Complex64;

use super::dft::DiagonalMatrix;
use crate::client::{Ciphertext, Encoder, EvaluationKeys, Plaintext};
use crate::context::Context;
use crate::error::{Error, Result};
use crate::eval::{scales_match, Evaluator, Weight};
use crate::serial::{put_f64, put_u32, put_u64, Reader};

#[derive(Clone, Debug, PartialEq)]
pub struct GiantStep {
    pub offset: usize,
    /// `(index into the baby offsets, pre-rotated diagonal)`.
    pub terms: Vec<(usize, Plaintext)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearTransform {
    pub slots: usize,
    /// Level at which the transform consumes its input.
    pub level: usize,
    pub input_scale: f64,
    pub baby: Vec<usize>,
    pub giants: Vec<GiantStep>,
}

impl LinearTransform {
    /// Encodes `m` for inputs at `level` with `input_scale`; the output lands
    /// on the standard scale of `level - 1`.
    pub fn new(ctx: &Context, m: &DiagonalMatrix, level: usize, input_scale: f64) -> Result<Self> {
        if level == 0 {
            return Err(Error::Level("a linear transform needs one level".into()));
        }
        let n = m.n;
        let offsets: Vec<usize> = m.diagonals.keys().copied().collect();
        let stride = offsets
            .iter()
            .filter(|&&r| r != 0)
            .map(|&r| 1usize << r.trailing_zeros())
            .min()
            .unwrap_or(n);
        let width = n / stride;
        let n1 = best_split(&offsets, stride, width);
        let block = n1 * stride;
        let mut baby: Vec<usize> = offsets.iter().map(|r| r % block).collect::<BTreeSet<_>>().into_iter().collect();
        if !baby.contains(&0) {
            baby.insert(0, 0);
        }
        let giant_offsets: BTreeSet<usize> = offsets.iter().map(|r| r - r % block).collect();

        let enc = Encoder::new(ctx);
        let q = ctx.modulus(level).value() as f64;
        let pt_scale = ctx.scale_at(level - 1) * q / input_scale;
        let giants = giant_offsets
            .into_iter()
            .map(|g| {
                let terms = offsets
                    .iter()
                    .filter(|&&r| r - r % block == g)
                    .map(|&r| {
                        let d = &m.diagonals[&r];
                        let shifted: Vec<Complex64> = (0..n).map(|i| d[(i + n - g) % n]).collect();
                        let k = baby.binary_search(&(r % block)).expect("collected");
                        Ok((k, enc.encode_with_scale(&shifted, level, pt_scale)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(GiantStep { offset: g, terms })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            slots: n,
            level,
            input_scale,
            baby,
            giants,
        })
    }

    /// Every nonzero rotation the evaluation performs.
    pub fn rotations(&self) -> BTreeSet<usize> {
        self.baby
            .iter()
            .copied()
            .chain(self.giants.iter().map(|g| g.offset))
            .filter(|&r| r != 0)
            .collect()
    }

    /// `(baby count, giant count)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.baby.len(), self.giants.len())
    }

    pub fn diagonal_count(&self) -> usize {
        self.giants.iter().map(|g| g.terms.len()).sum()
    }

    /// Applies the transform; `hoisted` selects shared-decomposition baby steps.
    pub fn apply(&self, eval: &Evaluator, ct: &Ciphertext, keys: &EvaluationKeys, hoisted: bool) -> Result<Ciphertext> {
        let ctx = eval.context();
        if ct.slots != self.slots {
            return Err(Error::InvalidSlots(ct.slots));
        }
        let ct = match ct.level.cmp(&self.level) {
            std::cmp::Ordering::Less => {
                return Err(Error::Level(format!("transform at level {} got {}", self.level, ct.level)))
            }
            std::cmp::Ordering::Greater => eval.adjust(ct, self.level, self.input_scale)?,
            std::cmp::Ordering::Equal => ct.clone(),
        };
        if !scales_match(ct.scale, self.input_scale) {
            return Err(Error::ScaleMismatch(ct.scale, self.input_scale));
        }
        let offsets: Vec<i64> = self.baby.iter().map(|&b| b as i64).collect();
        let rotated = if hoisted {
            eval.rotate_many(&ct, &offsets, keys)?
        } else {
            offsets
                .iter()
                .map(|&r| eval.rotate(&ct, r, keys))
                .collect::<Result<Vec<_>>>()?
        };
        let mut acc: Option<Ciphertext> = None;
        for g in &self.giants {
            let cts: Vec<&Ciphertext> = g.terms.iter().map(|(k, _)| &rotated[*k]).collect();
            let weights: Vec<Weight> = g.terms.iter().map(|(_, p)| Weight::Plain(p)).collect();
            let inner = eval.fused_weighted_sum(&cts, &weights)?;
            let inner = if g.offset == 0 {
                inner
            } else {
                eval.rotate(&inner, g.offset as i64, keys)?
            };
            acc = Some(match acc {
                None => inner,
                Some(a) => eval.add(&a, &inner)?,
            });
        }
        let mut out = eval.rescale(&acc.ok_or(Error::InvalidParameters("empty transform".into()))?)?;
        let standard = ctx.scale_at(self.level - 1);
        if scales_match(out.scale, standard) {
            out.scale = standard;
        }
        Ok(out)
    }

    pub(crate) fn write(&self, out: &mut Vec<u8>) {
        put_u32(out, self.slots as u32);
        put_u32(out, self.level as u32);
        put_f64(out, self.input_scale);
        put_u32(out, self.baby.len() as u32);
        for &b in &self.baby {
            put_u64(out, b as u64);
        }
        put_u32(out, self.giants.len() as u32);
        for g in &self.giants {
            put_u64(out, g.offset as u64);
            put_u32(out, g.terms.len() as u32);
            for (k, p) in &g.terms {
                put_u32(out, *k as u32);
                out.extend_from_slice(&p.to_bytes());
            }
        }
    }

    pub(crate) fn read(ctx: &Context, r: &mut Reader<'_>) -> Result<Self> {
        let slots = r.u32()? as usize;
        let level = r.u32()? as usize;
        let input_scale = r.f64()?;
        let baby = (0..r.u32()?).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let giant_count = r.u32()?;
        let mut giants = Vec::new();
        for _ in 0..giant_count {
            let offset = r.u64()? as usize;
            let count = r.u32()?;
            let mut terms = Vec::new();
            for _ in 0..count {
                let k = r.u32()? as usize;
                if k >= baby.len() {
                    return Err(Error::Malformed("baby index".into()));
                }
                let (p, used) = Plaintext::from_bytes(ctx, r.remaining())?;
                r.skip(used)?;
                terms.push((k, p));
            }
            giants.push(GiantStep { offset, terms });
        }
        Ok(Self {
            slots,
            level,
            input_scale,
            baby,
            giants,
        })
    }
}

/// Baby-step count (a power of two) minimizing the number of distinct
/// nonzero rotations; ties go to more baby steps, which are hoisted.
fn best_split(offsets: &[usize], stride: usize, width: usize) -> usize {
    let mut best = (usize::MAX, 1);
    let mut n1 = 1;
    while n1 <= width {
        let block = n1 * stride;
        let babies: BTreeSet<usize> = offsets.iter().map(|r| r % block).filter(|&k| k != 0).collect();
        let giants: BTreeSet<usize> = offsets.iter().map(|r| r - r % block).filter(|&g| g != 0).collect();
        let cost = babies.len() + giants.len();
        if cost <= best.0 {
            best = (cost, n1);
        }
        n1 *= 2;
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_covers_a_band_of_offsets() {
        // 31 consecutive multiples of 4 around zero, as produced by four merged stages
        let n = 1024;
        let offsets: Vec<usize> = (-15i64..=15).map(|t| (t * 4).rem_euclid(n as i64) as usize).collect();
        let n1 = best_split(&offsets, 4, n / 4);
        assert!(n1 == 8 || n1 == 4, "{n1}");
        let block = n1 * 4;
        for &r in &offsets {
            let k = r % block;
            let g = r - k;
            assert_eq!((g + k) % n, r);
        }
    }
}
