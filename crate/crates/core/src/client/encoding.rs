//! Canonical-embedding encoder.
//!
//! Slot `j` of an `n`-slot plaintext holds the evaluation of the message
//! polynomial at `ζ^(5^j)`, where `ζ` is a primitive `4n`-th root of unity
//! and the polynomial lives in the subring generated by `X^(N/2n)`. The
//! transform is the usual "special FFT" on the orbit of 5; rotating slots by
//! one is the Galois map `X -> X^5` and conjugation is `X -> X^(-1)`.

use num_complex::Complex64;

use super::cipher::Plaintext;
use crate::context::Context;
use crate::error::{Error, Result};
use crate::poly::{coefficients_f64_at, Limb, RnsPoly};

/// Special FFT over the `n` slot roots.
#[derive(Clone, Debug)]
pub struct SpecialFft {
    n: usize,
    /// `5^j mod 4n`.
    rot_group: Vec<usize>,
    /// `exp(2πi k / 4n)` for `k` in `0..=4n`.
    roots: Vec<Complex64>,
}

fn bit_reverse_in_place<T>(v: &mut [T]) {
    let n = v.len();
    let bits = n.trailing_zeros();
    if bits == 0 {
        return;
    }
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            v.swap(i, j);
        }
    }
}

impl SpecialFft {
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two(), "slot count must be a power of two");
        let m = 4 * n;
        let mut rot_group = Vec::with_capacity(n);
        let mut r = 1usize;
        for _ in 0..n {
            rot_group.push(r);
            r = r * 5 % m;
        }
        let roots = (0..=m)
            .map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / m as f64))
            .collect();
        Self { n, rot_group, roots }
    }

    pub fn slots(&self) -> usize {
        self.n
    }

    pub fn rot_group(&self) -> &[usize] {
        &self.rot_group
    }

    /// Butterfly stage over blocks of `len`: `(u, v) -> (u + w v, u - w v)`
    /// with `w = ζ_{4len}^{5^j}`.
    pub fn forward_stage(&self, vals: &mut [Complex64], len: usize) {
        let lenh = len / 2;
        let lenq = 4 * len;
        let step = 4 * self.n / lenq;
        for i in (0..self.n).step_by(len) {
            for j in 0..lenh {
                let w = self.roots[(self.rot_group[j] % lenq) * step];
                let u = vals[i + j];
                let v = vals[i + j + lenh] * w;
                vals[i + j] = u + v;
                vals[i + j + lenh] = u - v;
            }
        }
    }

    /// Twice the inverse of [`forward_stage`](Self::forward_stage).
    pub fn inverse_stage(&self, vals: &mut [Complex64], len: usize) {
        let lenh = len / 2;
        let lenq = 4 * len;
        let step = 4 * self.n / lenq;
        for i in (0..self.n).step_by(len) {
            for j in 0..lenh {
                let w = self.roots[(lenq - self.rot_group[j] % lenq) * step];
                let u = vals[i + j] + vals[i + j + lenh];
                let v = (vals[i + j] - vals[i + j + lenh]) * w;
                vals[i + j] = u;
                vals[i + j + lenh] = v;
            }
        }
    }

    /// Coefficients (of the subring polynomial, packed as `re + i·im`) to slots.
    pub fn forward(&self, vals: &mut [Complex64]) {
        assert_eq!(vals.len(), self.n);
        bit_reverse_in_place(vals);
        let mut len = 2;
        while len <= self.n {
            self.forward_stage(vals, len);
            len <<= 1;
        }
    }

    /// Slots to packed coefficients; exact inverse of [`forward`](Self::forward).
    pub fn inverse(&self, vals: &mut [Complex64]) {
        assert_eq!(vals.len(), self.n);
        let mut len = self.n;
        while len >= 2 {
            self.inverse_stage(vals, len);
            len >>= 1;
        }
        bit_reverse_in_place(vals);
        let inv = 1.0 / self.n as f64;
        vals.iter_mut().for_each(|v| *v *= inv);
    }
}

/// Coefficient positions used by an `n`-slot message: real parts at `k·gap`,
/// imaginary parts at `N/2 + k·gap`.
pub fn slot_positions(ring_degree: usize, slots: usize) -> (Vec<usize>, Vec<usize>) {
    let gap = ring_degree / (2 * slots);
    let re = (0..slots).map(|k| k * gap).collect();
    let im = (0..slots).map(|k| ring_degree / 2 + k * gap).collect();
    (re, im)
}

#[derive(Clone, Debug)]
pub struct Encoder {
    ctx: Context,
}

impl Encoder {
    pub fn new(ctx: &Context) -> Self {
        Self { ctx: ctx.clone() }
    }

    fn check_slots(&self, slots: usize) -> Result<()> {
        if slots == 0 || !slots.is_power_of_two() || slots > self.ctx.n() / 2 {
            return Err(Error::InvalidSlots(slots));
        }
        Ok(())
    }

    /// Integer coefficients `round(scale · embedding^{-1}(values))`.
    pub fn encode_coefficients(&self, values: &[Complex64], scale: f64) -> Result<Vec<i128>> {
        let slots = values.len();
        self.check_slots(slots)?;
        let n = self.ctx.n();
        let mut v = values.to_vec();
        SpecialFft::new(slots).inverse(&mut v);
        let (re, im) = slot_positions(n, slots);
        let mut coeffs = vec![0i128; n];
        for k in 0..slots {
            let a = (v[k].re * scale).round();
            let b = (v[k].im * scale).round();
            if !a.is_finite() || !b.is_finite() || a.abs() >= 2f64.powi(126) || b.abs() >= 2f64.powi(126) {
                return Err(Error::Overflow(format!("coefficient at slot {k}")));
            }
            coeffs[re[k]] = a as i128;
            coeffs[im[k]] = b as i128;
        }
        Ok(coeffs)
    }

    /// Encodes `values` (one per slot) at `level` with an explicit scale.
    pub fn encode_with_scale(&self, values: &[Complex64], level: usize, scale: f64) -> Result<Plaintext> {
        if level > self.ctx.max_level() {
            return Err(Error::Level(format!("level {level} above {}", self.ctx.max_level())));
        }
        let coeffs = self.encode_coefficients(values, scale)?;
        let log_q: f64 = (0..=level)
            .map(|i| (self.ctx.modulus(i).value() as f64).log2())
            .sum();
        let max = coeffs.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0);
        if max > 0 && (max as f64).log2() >= log_q - 1.0 {
            return Err(Error::Overflow(format!(
                "encoded coefficient of {:.1} bits exceeds Q at level {level}",
                (max as f64).log2()
            )));
        }
        let indices: Vec<usize> = (0..=level).collect();
        let poly = integer_poly(&self.ctx, &coeffs, &indices).into_eval(&self.ctx);
        Ok(Plaintext {
            poly,
            scale,
            level,
            slots: values.len(),
        })
    }

    /// Encodes at `level` using that level's standard scale.
    pub fn encode(&self, values: &[Complex64], level: usize) -> Result<Plaintext> {
        self.encode_with_scale(values, level, self.ctx.scale_at(level))
    }

    pub fn encode_real(&self, values: &[f64], level: usize) -> Result<Plaintext> {
        let v: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.encode(&v, level)
    }

    pub fn decode(&self, pt: &Plaintext) -> Result<Vec<Complex64>> {
        self.check_slots(pt.slots)?;
        let n = self.ctx.n();
        let (re, im) = slot_positions(n, pt.slots);
        let mut positions = re;
        positions.extend(im);
        let c = coefficients_f64_at(&self.ctx, &pt.poly, &positions, pt.scale)?;
        let mut v: Vec<Complex64> = (0..pt.slots)
            .map(|k| Complex64::new(c[k], c[pt.slots + k]))
            .collect();
        SpecialFft::new(pt.slots).forward(&mut v);
        Ok(v)
    }

    pub fn decode_real(&self, pt: &Plaintext) -> Result<Vec<f64>> {
        Ok(self.decode(pt)?.iter().map(|z| z.re).collect())
    }
}

/// Lifts signed integer coefficients into the given limbs (coefficient form).
pub(crate) fn integer_poly(ctx: &Context, coeffs: &[i128], indices: &[usize]) -> RnsPoly {
    let small = coeffs.iter().all(|c| c.unsigned_abs() < 1u128 << 62);
    let limbs = indices
        .iter()
        .map(|&i| {
            let m = ctx.modulus(i);
            let coeffs = if small {
                coeffs.iter().map(|&c| m.from_i64(c as i64)).collect()
            } else {
                coeffs.iter().map(|&c| m.from_i128(c)).collect()
            };
            Limb {
                modulus_index: i,
                coeffs,
            }
        })
        .collect();
    RnsPoly::from_limbs(ctx, limbs, crate::poly::Format::Coeff).expect("residues are reduced")
}
