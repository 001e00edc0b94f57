//! CKKS bootstrapping: ModRaise, CoeffToSlot, ApproxModEval, SlotToCoeff.
//!
//! After ModRaise the plaintext is `t = m + q0·I` with a small integer
//! polynomial `I`. CoeffToSlot moves the (folded, for sparse slot counts)
//! coefficients of `t` into slots, normalized to `x = t / (q0·K)`.
//! ApproxModEval evaluates `w = exp(2πiK·x / 2^r)` through Chebyshev
//! interpolants of its real and imaginary parts, squares it `r` times and
//! keeps `w − conj(w) = 2i·sin(2π t / q0)`. Squaring the complex exponential
//! amplifies noise by `2^r` at every phase, whereas the real recurrence
//! `2c² − 1` loses accuracy wherever the phase is close to a multiple of π.
//! SlotToCoeff multiplies by `q0 / 4π` while moving slots back to
//! coefficients.
//!
//! ModRaise keeps the input scale `S`. The pipeline relabels it as the level-0
//! standard scale `Δ0` so that the precomputation is independent of `S`, and
//! multiplies the output scale by `S / Δ0` at the end.
//!
//! The sine is only close to the identity while `m / q0` is small. When `Δ0`
//! sits close to `q0`, [`BootstrapConfig::input_shrink_bits`] multiplies the
//! input by `2^-c` (spending one of its own levels) before ModRaise; the
//! factor is folded back into the output scale.

pub mod chebyshev;
pub mod dft;
pub mod lintrans;

use std::collections::BTreeSet;
use std::f64::consts::PI;

use num_complex::Complex64;

use self::chebyshev::{paterson_stockmeyer_many, Backend};
use self::dft::DiagonalMatrix;
use self::lintrans::LinearTransform;
use crate::client::{rotation_exponent, Ciphertext, EvaluationKeys, KeyGenerator, KeySwitchingKey, SecretKey};
use crate::context::Context;
use crate::error::{Error, Result};
use crate::eval::Evaluator;
use crate::poly::{Format, Limb, RnsPoly};
use crate::serial::{put_f64, put_string, put_u32, put_u64, Reader};

const MAGIC: &str = "rnsckks-bootstrap/1";

/// Tunable parameters of one bootstrapping configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapConfig {
    pub slots: usize,
    pub cts_levels: usize,
    pub stc_levels: usize,
    /// Bound on `|I|` (plus message) covered by the cosine approximation.
    pub k_range: f64,
    /// Number of squarings `r` after the polynomial.
    pub double_angle: u32,
    pub degree: usize,
    pub hoisted: bool,
    /// Bits `c` by which the message is shrunk before ModRaise; a nonzero
    /// value requires inputs at level 1 or above.
    pub input_shrink_bits: u32,
}

impl BootstrapConfig {
    /// Desk-scale defaults for dense ternary secrets.
    pub fn new(slots: usize) -> Self {
        Self {
            slots,
            cts_levels: 3,
            stc_levels: 3,
            k_range: 256.0,
            double_angle: 6,
            degree: 59,
            hoisted: true,
            input_shrink_bits: 0,
        }
    }

    /// Configuration for `N = 2^16` chains with `Δ` one bit below `q0`: a
    /// wider range, a 7-bit input shrink, and stage levels growing with the
    /// slot count (CoeffToSlot gets one more level than SlotToCoeff).
    pub fn wide(slots: usize) -> Self {
        let (cts, stc) = match slots {
            0..=64 => (2, 1),
            65..=512 => (3, 2),
            _ => (4, 3),
        };
        Self {
            slots,
            cts_levels: cts,
            stc_levels: stc,
            k_range: 512.0,
            double_angle: 6,
            degree: 88,
            hoisted: true,
            input_shrink_bits: 7,
        }
    }

    pub fn with_input_shrink(mut self, bits: u32) -> Self {
        self.input_shrink_bits = bits;
        self
    }

    pub fn with_levels(mut self, cts: usize, stc: usize) -> Self {
        self.cts_levels = cts;
        self.stc_levels = stc;
        self
    }

    pub fn with_approximation(mut self, k_range: f64, degree: usize, double_angle: u32) -> Self {
        self.k_range = k_range;
        self.degree = degree;
        self.double_angle = double_angle;
        self
    }

    /// Chebyshev coefficients of `cos(θ)` and `sin(θ)` on `[-1, 1]`, where
    /// `θ = 2πK·x / 2^r`.
    pub fn exponential_coefficients(&self) -> (Vec<f64>, Vec<f64>) {
        let w = 2.0 * PI * self.k_range / 2f64.powi(self.double_angle as i32);
        (
            chebyshev::interpolate(|x| (w * x).cos(), self.degree),
            chebyshev::interpolate(|x| (w * x).sin(), self.degree),
        )
    }

    /// Levels consumed by ApproxModEval.
    pub fn eval_mod_depth(&self) -> usize {
        let (c, s) = self.exponential_coefficients();
        chebyshev::depth(&c).max(chebyshev::depth(&s)) + self.double_angle as usize
    }

    /// Total levels consumed after ModRaise.
    pub fn depth(&self) -> usize {
        self.cts_levels + self.eval_mod_depth() + self.stc_levels
    }

    /// Level of the refreshed ciphertext for a chain with top level `max_level`.
    pub fn remaining_levels(&self, max_level: usize) -> Option<usize> {
        max_level.checked_sub(self.depth())
    }
}

/// Everything bootstrapping needs besides keys: encoded DFT stages,
/// approximation coefficients and the rotation plan.
#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapPrecomputation {
    pub config: BootstrapConfig,
    pub cts: Vec<LinearTransform>,
    pub stc: Vec<LinearTransform>,
    /// Chebyshev coefficients of the real and imaginary part of the
    /// exponential, see [`BootstrapConfig::exponential_coefficients`].
    pub cos_coeffs: Vec<f64>,
    pub sin_coeffs: Vec<f64>,
    /// Galois exponents of the sparse-slot folding, in application order.
    pub fold_exponents: Vec<usize>,
    record: String,
}

fn check_slots(ctx: &Context, n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() || n > ctx.n() / 2 {
        return Err(Error::InvalidSlots(n));
    }
    Ok(())
}

/// `Δ0·n / (q0·K·N)`: maps raised, folded slots to `t / (2·q0·K)` in
/// coefficient order (the conjugate split later doubles it).
fn cts_constant(ctx: &Context, cfg: &BootstrapConfig) -> f64 {
    let q0 = ctx.modulus(0).value() as f64;
    ctx.scale_at(0) * cfg.slots as f64 / (q0 * cfg.k_range * ctx.n() as f64)
}

/// `q0 / (4π·Δ0)`: undoes the normalization of `2·sin`.
fn stc_constant(ctx: &Context) -> f64 {
    ctx.modulus(0).value() as f64 / (4.0 * PI * ctx.scale_at(0))
}

impl BootstrapPrecomputation {
    /// Builds the stage matrices and encodes each at the level it is consumed.
    pub fn new(ctx: &Context, config: BootstrapConfig) -> Result<Self> {
        let n = config.slots;
        check_slots(ctx, n)?;
        if config.cts_levels == 0 || config.stc_levels == 0 {
            return Err(Error::InvalidParameters("each DFT needs at least one level".into()));
        }
        let top = ctx.max_level();
        match config.remaining_levels(top) {
            Some(r) if r >= 1 => {}
            _ => {
                return Err(Error::Level(format!(
                    "bootstrapping needs {} levels, the chain has {top}",
                    config.depth() + 1
                )))
            }
        }
        let (cos_coeffs, sin_coeffs) = config.exponential_coefficients();

        let mut level = top;
        let mut scale = ctx.scale_at(0);
        let mut cts = Vec::new();
        for m in dft::coeff_to_slot_factors(n, config.cts_levels, cts_constant(ctx, &config)) {
            cts.push(LinearTransform::new(ctx, &m, level, scale)?);
            level -= 1;
            scale = ctx.scale_at(level);
        }
        level -= config.eval_mod_depth();
        let mut stc = Vec::new();
        for m in dft::slot_to_coeff_factors(n, config.stc_levels, stc_constant(ctx)) {
            stc.push(LinearTransform::new(ctx, &m, level, ctx.scale_at(level))?);
            level -= 1;
        }

        let fold_exponents = (0..(ctx.n() / (2 * n)).trailing_zeros())
            .map(|i| rotation_exponent(ctx.n(), ctx.n() / 2, (n as i64) << i))
            .collect();
        Ok(Self {
            config,
            cts,
            stc,
            cos_coeffs,
            sin_coeffs,
            fold_exponents,
            record: ctx.record(),
        })
    }

    pub fn slots(&self) -> usize {
        self.config.slots
    }

    /// Level of bootstrapped ciphertexts.
    pub fn output_level(&self) -> usize {
        self.stc.last().map_or(0, |t| t.level - 1)
    }

    /// Rotation amounts (in slots) used by all linear transforms.
    pub fn rotation_indices(&self) -> BTreeSet<usize> {
        self.cts.iter().chain(&self.stc).flat_map(|t| t.rotations()).collect()
    }

    /// `(baby, giant)` step counts per stage, CoeffToSlot first.
    pub fn bsgs_dims(&self) -> Vec<(usize, usize)> {
        self.cts.iter().chain(&self.stc).map(|t| t.dims()).collect()
    }

    /// Every Galois exponent needed, except conjugation.
    pub fn galois_exponents(&self, ctx: &Context) -> BTreeSet<usize> {
        self.rotation_indices()
            .into_iter()
            .map(|r| rotation_exponent(ctx.n(), self.slots(), r as i64))
            .chain(self.fold_exponents.iter().copied())
            .filter(|&k| k != 1)
            .collect()
    }

    /// Relinearization, conjugation and all Galois keys for bootstrapping.
    pub fn generate_keys(&self, ctx: &Context, kg: &mut KeyGenerator, sk: &SecretKey) -> Result<EvaluationKeys> {
        let mut keys = kg.evaluation_keys(sk, &[], self.slots())?;
        for k in self.galois_exponents(ctx) {
            keys.galois.insert(k, kg.galois_key(sk, k)?);
        }
        Ok(keys)
    }

    /// Cleartext check of the encoded stages: applies every CoeffToSlot and
    /// SlotToCoeff factor to probe vectors and returns the largest relative
    /// deviation from `constant · identity`.
    pub fn composition_error(&self, ctx: &Context, probes: usize) -> f64 {
        let n = self.slots();
        let constant = cts_constant(ctx, &self.config) * stc_constant(ctx);
        let cts = dft::coeff_to_slot_factors(n, self.config.cts_levels, cts_constant(ctx, &self.config));
        let stc = dft::slot_to_coeff_factors(n, self.config.stc_levels, stc_constant(ctx));
        let mut worst: f64 = 0.0;
        for p in 0..probes.max(1) {
            let z: Vec<Complex64> = (0..n)
                .map(|i| {
                    let a = ((i * 7 + p * 13) % 17) as f64 - 8.0;
                    let b = ((i * 5 + p * 3) % 11) as f64 - 5.0;
                    if p == 0 && i > 0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(a, b)
                    }
                })
                .collect();
            let mut v = z.clone();
            for m in cts.iter().chain(&stc) {
                v = m.apply(&v);
            }
            let scale = z.iter().map(|x| x.norm()).fold(0.0, f64::max) * constant;
            for (a, b) in v.iter().zip(&z) {
                worst = worst.max((a - b * constant).norm() / scale);
            }
        }
        worst
    }

    /// Cleartext matrices of the stages, CoeffToSlot first.
    pub fn stage_matrices(&self, ctx: &Context) -> (Vec<DiagonalMatrix>, Vec<DiagonalMatrix>) {
        let n = self.slots();
        (
            dft::coeff_to_slot_factors(n, self.config.cts_levels, cts_constant(ctx, &self.config)),
            dft::slot_to_coeff_factors(n, self.config.stc_levels, stc_constant(ctx)),
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_string(&mut out, MAGIC);
        put_string(&mut out, &self.record);
        let c = &self.config;
        put_u64(&mut out, c.slots as u64);
        put_u32(&mut out, c.cts_levels as u32);
        put_u32(&mut out, c.stc_levels as u32);
        put_f64(&mut out, c.k_range);
        put_u32(&mut out, c.double_angle);
        put_u32(&mut out, c.degree as u32);
        out.push(u8::from(c.hoisted));
        put_u32(&mut out, c.input_shrink_bits);
        for coeffs in [&self.cos_coeffs, &self.sin_coeffs] {
            put_u32(&mut out, coeffs.len() as u32);
            for &v in coeffs {
                put_f64(&mut out, v);
            }
        }
        put_u32(&mut out, self.fold_exponents.len() as u32);
        for &k in &self.fold_exponents {
            put_u64(&mut out, k as u64);
        }
        for group in [&self.cts, &self.stc] {
            put_u32(&mut out, group.len() as u32);
            for t in group {
                t.write(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(ctx: &Context, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.string()? != MAGIC {
            return Err(Error::Malformed("not a bootstrap precomputation".into()));
        }
        let record = r.string()?;
        ctx.check_record(&record)?;
        let config = BootstrapConfig {
            slots: r.u64()? as usize,
            cts_levels: r.u32()? as usize,
            stc_levels: r.u32()? as usize,
            k_range: r.f64()?,
            double_angle: r.u32()?,
            degree: r.u32()? as usize,
            hoisted: r.u8()? != 0,
            input_shrink_bits: r.u32()?,
        };
        let cos_coeffs = (0..r.u32()?).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let sin_coeffs = (0..r.u32()?).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let fold_exponents = (0..r.u32()?).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let mut groups = Vec::new();
        for _ in 0..2 {
            let count = r.u32()?;
            groups.push((0..count).map(|_| LinearTransform::read(ctx, &mut r)).collect::<Result<Vec<_>>>()?);
        }
        if !r.remaining().is_empty() {
            return Err(Error::Malformed("trailing bytes".into()));
        }
        let stc = groups.pop().expect("two groups");
        let cts = groups.pop().expect("two groups");
        Ok(Self {
            config,
            cts,
            stc,
            cos_coeffs,
            sin_coeffs,
            fold_exponents,
            record,
        })
    }
}

/// Reinterprets a level-0 ciphertext modulo the whole chain. Its plaintext
/// becomes `m + q0·I` for a small integer polynomial `I`; the scale is kept.
pub fn mod_raise(ctx: &Context, ct: &Ciphertext) -> Result<Ciphertext> {
    let eval = Evaluator::new(ctx);
    let low = if ct.level > 0 { eval.drop_to_level(ct, 0)? } else { ct.clone() };
    let q0 = ctx.modulus(0);
    let top = ctx.max_level();
    let raise = |p: &RnsPoly| -> Result<RnsPoly> {
        let coeff = p.clone().into_coeff(ctx);
        let centered: Vec<i64> = coeff.limbs()[0].coeffs.iter().map(|&c| q0.centered(c)).collect();
        let limbs = (0..=top)
            .map(|i| {
                let m = ctx.modulus(i);
                Limb {
                    modulus_index: i,
                    coeffs: centered.iter().map(|&c| m.from_i64(c)).collect(),
                }
            })
            .collect();
        Ok(RnsPoly::from_limbs(ctx, limbs, Format::Coeff)?.into_eval(ctx))
    };
    Ok(Ciphertext {
        c0: raise(&low.c0)?,
        c1: raise(&low.c1)?,
        scale: low.scale,
        level: top,
        slots: low.slots,
        noise_estimate: low.noise_estimate,
    })
}

/// Ciphertext backend for the polynomial schedule. Operands are kept on the
/// standard scale of their level, so alignment never needs a fractional factor.
struct CipherBackend<'a> {
    eval: &'a Evaluator,
    relin: &'a KeySwitchingKey,
}

impl CipherBackend<'_> {
    /// Brings the higher operand down to the other's level with the scale
    /// that makes the rescaled product land on the standard scale.
    fn align_for_product(&self, a: &Ciphertext, b: &Ciphertext) -> Result<(Ciphertext, Ciphertext)> {
        let ctx = self.eval.context();
        let target = |low: &Ciphertext| {
            ctx.scale_at(low.level - 1) * ctx.modulus(low.level).value() as f64 / low.scale
        };
        Ok(match a.level.cmp(&b.level) {
            std::cmp::Ordering::Greater => (self.eval.adjust(a, b.level, target(b))?, b.clone()),
            std::cmp::Ordering::Less => (a.clone(), self.eval.adjust(b, a.level, target(a))?),
            std::cmp::Ordering::Equal => (a.clone(), b.clone()),
        })
    }
}

impl Backend for CipherBackend<'_> {
    type Value = Ciphertext;
    type Error = Error;

    fn mul(&mut self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        if a.level == 0 || b.level == 0 {
            return Err(Error::Level("product needs a level".into()));
        }
        let (a, b) = self.align_for_product(a, b)?;
        self.eval.mul_rescale(&a, &b, self.relin)
    }

    fn square(&mut self, a: &Ciphertext) -> Result<Ciphertext> {
        self.eval.square_rescale(a, self.relin)
    }

    fn add(&mut self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.eval.add(a, b)
    }

    fn sub(&mut self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.eval.sub(a, b)
    }

    fn mul_integer(&mut self, a: &Ciphertext, k: i64) -> Result<Ciphertext> {
        Ok(self.eval.mul_integer(a, k as i128))
    }

    fn add_constant(&mut self, a: &Ciphertext, c: f64) -> Result<Ciphertext> {
        self.eval.add_scalar(a, c)
    }

    fn linear_combination(&mut self, terms: &[(&Ciphertext, f64)], constant: f64) -> Result<Ciphertext> {
        let low = terms
            .iter()
            .min_by_key(|t| t.0.level)
            .ok_or_else(|| Error::InvalidParameters("empty combination".into()))?
            .0;
        let aligned = terms
            .iter()
            .map(|(ct, _)| {
                if ct.level == low.level {
                    Ok((*ct).clone())
                } else {
                    self.eval.adjust(ct, low.level, low.scale)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Ciphertext> = aligned.iter().collect();
        let weights: Vec<crate::eval::Weight> = terms.iter().map(|t| crate::eval::Weight::Scalar(t.1)).collect();
        let sum = self.eval.rescale(&self.eval.fused_weighted_sum(&refs, &weights)?)?;
        if constant == 0.0 {
            Ok(sum)
        } else {
            self.eval.add_scalar(&sum, constant)
        }
    }
}

/// Bootstraps ciphertexts with the slot count of one precomputation.
pub struct Bootstrapper {
    eval: Evaluator,
    pre: BootstrapPrecomputation,
}

impl Bootstrapper {
    pub fn new(ctx: &Context, pre: BootstrapPrecomputation) -> Result<Self> {
        ctx.check_record(&pre.record)?;
        Ok(Self {
            eval: Evaluator::new(ctx),
            pre,
        })
    }

    pub fn precomputation(&self) -> &BootstrapPrecomputation {
        &self.pre
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.eval
    }

    /// Sums the Galois conjugates that fix the sparse subring, leaving
    /// `N / 2n` times the coefficients at multiples of `N / 2n`.
    pub fn fold(&self, ct: &Ciphertext, keys: &EvaluationKeys) -> Result<Ciphertext> {
        let mut acc = ct.clone();
        for &k in &self.pre.fold_exponents {
            let rotated = self.eval.apply_galois(&acc, k, keys.galois(k)?)?;
            acc = self.eval.add(&acc, &rotated)?;
        }
        Ok(acc)
    }

    pub fn linear_transforms(&self, ct: &Ciphertext, stages: &[LinearTransform], keys: &EvaluationKeys) -> Result<Ciphertext> {
        let mut acc = ct.clone();
        for t in stages {
            acc = t.apply(&self.eval, &acc, keys, self.pre.config.hoisted)?;
        }
        Ok(acc)
    }

    /// Slots hold `t / (2·q0·K)` in bit-reversed coefficient order afterwards;
    /// real parts of `t` come from the first half of the coefficients and
    /// imaginary parts from the second.
    pub fn coeff_to_slot(&self, raised: &Ciphertext, keys: &EvaluationKeys) -> Result<Ciphertext> {
        let folded = self.fold(raised, keys)?;
        self.linear_transforms(&folded, &self.pre.cts, keys)
    }

    /// `2·sin(2π·K·x)` for real slot values `x` in `[-1, 1]`.
    pub fn approx_mod_eval(&self, ct: &Ciphertext, keys: &EvaluationKeys) -> Result<Ciphertext> {
        let relin = keys.relin()?;
        let mut be = CipherBackend { eval: &self.eval, relin };
        let mut parts = paterson_stockmeyer_many(&mut be, ct, &[&self.pre.cos_coeffs, &self.pre.sin_coeffs])?;
        let sin = parts.pop().expect("two parts");
        let cos = parts.pop().expect("two parts");
        let mut w = self.eval.add(&cos, &self.eval.mul_by_i(&sin))?;
        for _ in 0..self.pre.config.double_angle {
            w = self.eval.square_rescale(&w, relin)?;
        }
        // i·(conj(w) − w) = 2·Im(w)
        let conj = self.eval.conjugate(&w, keys)?;
        Ok(self.eval.mul_by_i(&self.eval.sub(&conj, &w)?))
    }

    pub fn slot_to_coeff(&self, ct: &Ciphertext, keys: &EvaluationKeys) -> Result<Ciphertext> {
        self.linear_transforms(ct, &self.pre.stc, keys)
    }

    /// Refreshes `ct`. Any level works (it is dropped to level 0 first),
    /// except that an input shrink needs level 1 or above.
    pub fn bootstrap(&self, ct: &Ciphertext, keys: &EvaluationKeys) -> Result<Ciphertext> {
        let ctx = self.eval.context();
        if ct.slots != self.pre.slots() {
            return Err(Error::InvalidSlots(ct.slots));
        }
        let shrink = self.pre.config.input_shrink_bits;
        let shrunk;
        let ct = if shrink == 0 {
            ct
        } else {
            if ct.level == 0 {
                return Err(Error::Level("the input shrink needs a ciphertext above level 0".into()));
            }
            shrunk = self.eval.mul_scalar_rescale(ct, 2f64.powi(-(shrink as i32)))?;
            &shrunk
        };
        let delta0 = ctx.scale_at(0);
        let rho = ct.scale / delta0;
        let mut raised = mod_raise(ctx, ct)?;
        raised.scale = delta0;

        let v = self.coeff_to_slot(&raised, keys)?;
        let conj = self.eval.conjugate(&v, keys)?;
        let re = self.eval.add(&v, &conj)?;
        let im = self.eval.neg(&self.eval.mul_by_i(&self.eval.sub(&v, &conj)?));
        let (re, im) = rayon::join(|| self.approx_mod_eval(&re, keys), || self.approx_mod_eval(&im, keys));
        let (re, im) = (re?, im?);
        let combined = self.eval.add(&re, &self.eval.mul_by_i(&im))?;
        let mut out = self.slot_to_coeff(&combined, keys)?;
        out.scale *= rho * 2f64.powi(-(shrink as i32));
        Ok(out)
    }
}
