//! Negacyclic number-theoretic transform over `Z_p[X]/(X^N + 1)`.
//!
//! The forward transform is a Cooley–Tukey decimation-in-time network with
//! the `ψ` pre-twist folded into the twiddles; it reads natural order and
//! writes bit-reversed order. The inverse is the matching Gentleman–Sande
//! network, so neither direction needs an explicit bit-reversal permutation.
//! Butterflies keep values lazily reduced (below `4p` forward, below `2p`
//! inverse) and normalize once at the end.
//!
//! Besides the flat iterative network there is a two-level variant that runs
//! the first half of the stages as strided sub-transforms over gathered
//! column tiles and the second half as contiguous row transforms. Both run
//! exactly the same butterflies, so their outputs agree bit for bit.

use crate::arith::{Modulus, ShoupConstant};
use crate::error::{Error, Result};

/// Which butterfly schedule to use. The result is identical either way.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NttVariant {
    #[default]
    Flat,
    Hierarchical,
}

/// Elementwise pass applied to the input before a forward transform.
#[derive(Clone, Copy, Debug)]
pub enum Prologue {
    None,
    /// The input holds residues modulo `from`; lift each one centrally into
    /// the table's modulus first.
    SwitchModulus { from: u64 },
}

/// Elementwise pass applied to the normalized output of a transform.
#[derive(Debug)]
pub enum Epilogue<'a> {
    None,
    /// `out[j] = factor * (minuend[j] - out[j])`.
    ScaleSubtract {
        minuend: &'a [u64],
        factor: ShoupConstant,
    },
    /// `acc0[j] += out[j] * ksk0[j]` and `acc1[j] += out[j] * ksk1[j]`,
    /// left unreduced in 128 bits.
    KskMulAcc {
        ksk0: &'a [u64],
        ksk1: &'a [u64],
        acc0: &'a mut [u128],
        acc1: &'a mut [u128],
    },
}

/// Gathered columns per tile in the hierarchical schedule.
const TILE: usize = 8;

#[derive(Clone, Debug)]
pub struct NttTable {
    modulus: Modulus,
    n: usize,
    log_n: u32,
    psi: u64,
    psi_rev: Vec<ShoupConstant>,
    psi_inv_rev: Vec<ShoupConstant>,
    n_inv: ShoupConstant,
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

/// Smallest-generator primitive `2N`-th root of unity modulo `p`.
pub fn primitive_root_2n(modulus: &Modulus, n: usize) -> Result<u64> {
    let p = modulus.value();
    let two_n = 2 * n as u64;
    if !(p - 1).is_multiple_of(two_n) {
        return Err(Error::InvalidParameters(format!(
            "{p} is not 1 mod {two_n}"
        )));
    }
    let cofactor = (p - 1) / two_n;
    for g in 2..p {
        let candidate = modulus.pow(g, cofactor);
        if modulus.pow(candidate, n as u64) == p - 1 {
            return Ok(candidate);
        }
    }
    Err(Error::InvalidParameters(format!("no 2N-th root modulo {p}")))
}

impl NttTable {
    pub fn new(modulus: Modulus, n: usize) -> Result<Self> {
        if !n.is_power_of_two() || n < 2 {
            return Err(Error::InvalidParameters(format!(
                "transform length {n} is not a power of two"
            )));
        }
        let log_n = n.trailing_zeros();
        let psi = primitive_root_2n(&modulus, n)?;
        let psi_inv = modulus.inv(psi)?;
        let mut psi_rev = vec![ShoupConstant::default(); n];
        let mut psi_inv_rev = vec![ShoupConstant::default(); n];
        let (mut pw, mut pw_inv) = (1u64, 1u64);
        for i in 0..n {
            let r = bit_reverse(i, log_n);
            psi_rev[r] = modulus.shoup(pw);
            psi_inv_rev[r] = modulus.shoup(pw_inv);
            pw = modulus.barrett_mul(pw, psi);
            pw_inv = modulus.barrett_mul(pw_inv, psi_inv);
        }
        let n_inv = modulus.shoup(modulus.inv(n as u64)?);
        Ok(Self {
            modulus,
            n,
            log_n,
            psi,
            psi_rev,
            psi_inv_rev,
            n_inv,
        })
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn psi(&self) -> u64 {
        self.psi
    }

    /// Twiddles in bit-reversed order, `psi_rev[br(i)] = ψ^i`.
    pub fn psi_powers(&self) -> &[ShoupConstant] {
        &self.psi_rev
    }

    pub fn psi_inv_powers(&self) -> &[ShoupConstant] {
        &self.psi_inv_rev
    }

    pub fn n_inv(&self) -> ShoupConstant {
        self.n_inv
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::SizeMismatch {
                expected: self.n,
                got: len,
            });
        }
        Ok(())
    }

    pub fn forward(&self, a: &mut [u64]) -> Result<()> {
        self.forward_fused(a, NttVariant::Flat, Prologue::None, Epilogue::None)
    }

    pub fn inverse(&self, a: &mut [u64]) -> Result<()> {
        self.inverse_fused(a, NttVariant::Flat, Epilogue::None)
    }

    pub fn forward_hierarchical(&self, a: &mut [u64]) -> Result<()> {
        self.forward_fused(a, NttVariant::Hierarchical, Prologue::None, Epilogue::None)
    }

    pub fn inverse_hierarchical(&self, a: &mut [u64]) -> Result<()> {
        self.inverse_fused(a, NttVariant::Hierarchical, Epilogue::None)
    }

    pub fn forward_fused(
        &self,
        a: &mut [u64],
        variant: NttVariant,
        prologue: Prologue,
        epilogue: Epilogue<'_>,
    ) -> Result<()> {
        self.check_len(a.len())?;
        check_epilogue(&epilogue, self.n)?;
        if let Prologue::SwitchModulus { from } = prologue {
            for x in a.iter_mut() {
                *x = self.modulus.switch_from(*x, from);
            }
        }
        match variant {
            NttVariant::Flat => self.forward_flat_lazy(a),
            NttVariant::Hierarchical => self.forward_two_level_lazy(a),
        }
        let p = self.modulus.value();
        for x in a.iter_mut() {
            let mut v = *x;
            if v >= 2 * p {
                v -= 2 * p;
            }
            if v >= p {
                v -= p;
            }
            *x = v;
        }
        self.apply_epilogue(a, epilogue);
        Ok(())
    }

    pub fn inverse_fused(
        &self,
        a: &mut [u64],
        variant: NttVariant,
        epilogue: Epilogue<'_>,
    ) -> Result<()> {
        self.check_len(a.len())?;
        check_epilogue(&epilogue, self.n)?;
        match variant {
            NttVariant::Flat => self.inverse_flat_lazy(a),
            NttVariant::Hierarchical => self.inverse_two_level_lazy(a),
        }
        for x in a.iter_mut() {
            *x = self.modulus.shoup_mul(*x, self.n_inv);
        }
        self.apply_epilogue(a, epilogue);
        Ok(())
    }

    fn apply_epilogue(&self, a: &mut [u64], epilogue: Epilogue<'_>) {
        let m = &self.modulus;
        match epilogue {
            Epilogue::None => {}
            Epilogue::ScaleSubtract { minuend, factor } => {
                for (x, &y) in a.iter_mut().zip(minuend) {
                    *x = m.shoup_mul(m.sub(y, *x), factor);
                }
            }
            Epilogue::KskMulAcc {
                ksk0,
                ksk1,
                acc0,
                acc1,
            } => {
                for j in 0..a.len() {
                    let x = a[j] as u128;
                    acc0[j] += x * ksk0[j] as u128;
                    acc1[j] += x * ksk1[j] as u128;
                }
            }
        }
    }

    /// One Cooley–Tukey butterfly group: pairs `(j, j + t)` for `j` in `block`.
    #[inline(always)]
    fn ct_group(&self, a: &mut [u64], start: usize, t: usize, stride: usize, w: ShoupConstant) {
        let two_p = 2 * self.modulus.value();
        for k in 0..t {
            let j = start + k * stride;
            let jt = j + t * stride;
            let mut x = a[j];
            if x >= two_p {
                x -= two_p;
            }
            let v = self.modulus.shoup_mul_lazy(a[jt], w);
            a[j] = x + v;
            a[jt] = x + two_p - v;
        }
    }

    #[inline(always)]
    fn gs_group(&self, a: &mut [u64], start: usize, t: usize, stride: usize, w: ShoupConstant) {
        let two_p = 2 * self.modulus.value();
        for k in 0..t {
            let j = start + k * stride;
            let jt = j + t * stride;
            let u = a[j];
            let v = a[jt];
            let mut s = u + v;
            if s >= two_p {
                s -= two_p;
            }
            a[j] = s;
            a[jt] = self.modulus.shoup_mul_lazy(u + two_p - v, w);
        }
    }

    fn forward_flat_lazy(&self, a: &mut [u64]) {
        let n = self.n;
        let mut t = n;
        let mut m = 1;
        while m < n {
            t >>= 1;
            for i in 0..m {
                self.ct_group(a, 2 * i * t, t, 1, self.psi_rev[m + i]);
            }
            m <<= 1;
        }
    }

    fn inverse_flat_lazy(&self, a: &mut [u64]) {
        let n = self.n;
        let mut t = 1;
        let mut m = n;
        while m > 1 {
            let h = m >> 1;
            for i in 0..h {
                self.gs_group(a, 2 * i * t, t, 1, self.psi_inv_rev[h + i]);
            }
            t <<= 1;
            m = h;
        }
    }

    /// Splits `N = C * R` with `C = 2^ceil(log N / 2)` columns of length `C`
    /// strided by `R`, and `C` contiguous rows of length `R`.
    fn split(&self) -> (usize, usize) {
        let log_c = self.log_n.div_ceil(2);
        let c = 1usize << log_c;
        (c, self.n / c)
    }

    fn forward_two_level_lazy(&self, a: &mut [u64]) {
        let (c, r) = self.split();
        // Column pass: the first log C stages only pair indices that agree
        // modulo R, so each residue class is an independent C-point network.
        let tile = TILE.min(r);
        let mut scratch = vec![0u64; c * tile];
        for col0 in (0..r).step_by(tile) {
            for (k, col) in (col0..col0 + tile).enumerate() {
                for row in 0..c {
                    scratch[k * c + row] = a[row * r + col];
                }
            }
            for k in 0..tile {
                let column = &mut scratch[k * c..(k + 1) * c];
                let mut t = c;
                let mut m = 1;
                while m < c {
                    t >>= 1;
                    for i in 0..m {
                        self.ct_group(column, 2 * i * t, t, 1, self.psi_rev[m + i]);
                    }
                    m <<= 1;
                }
            }
            for (k, col) in (col0..col0 + tile).enumerate() {
                for row in 0..c {
                    a[row * r + col] = scratch[k * c + row];
                }
            }
        }
        // Row pass: the remaining stages stay inside contiguous blocks of R.
        for (b, block) in a.chunks_exact_mut(r).enumerate() {
            let mut t = r;
            let mut ml = 1;
            while ml < r {
                t >>= 1;
                let base = c * ml + b * ml;
                for i in 0..ml {
                    self.ct_group(block, 2 * i * t, t, 1, self.psi_rev[base + i]);
                }
                ml <<= 1;
            }
        }
    }

    fn inverse_two_level_lazy(&self, a: &mut [u64]) {
        let (c, r) = self.split();
        for (b, block) in a.chunks_exact_mut(r).enumerate() {
            let mut t = 1;
            let mut ml = r;
            while ml > 1 {
                let hl = ml >> 1;
                // global group count at this stage is C * hl
                let base = c * hl + b * hl;
                for i in 0..hl {
                    self.gs_group(block, 2 * i * t, t, 1, self.psi_inv_rev[base + i]);
                }
                t <<= 1;
                ml = hl;
            }
        }
        let tile = TILE.min(r);
        let mut scratch = vec![0u64; c * tile];
        for col0 in (0..r).step_by(tile) {
            for (k, col) in (col0..col0 + tile).enumerate() {
                for row in 0..c {
                    scratch[k * c + row] = a[row * r + col];
                }
            }
            for k in 0..tile {
                let column = &mut scratch[k * c..(k + 1) * c];
                let mut t = 1;
                let mut m = c;
                while m > 1 {
                    let h = m >> 1;
                    for i in 0..h {
                        self.gs_group(column, 2 * i * t, t, 1, self.psi_inv_rev[h + i]);
                    }
                    t <<= 1;
                    m = h;
                }
            }
            for (k, col) in (col0..col0 + tile).enumerate() {
                for row in 0..c {
                    a[row * r + col] = scratch[k * c + row];
                }
            }
        }
    }
}

fn check_epilogue(epilogue: &Epilogue<'_>, n: usize) -> Result<()> {
    let lens: Vec<usize> = match epilogue {
        Epilogue::None => vec![],
        Epilogue::ScaleSubtract { minuend, .. } => vec![minuend.len()],
        Epilogue::KskMulAcc {
            ksk0,
            ksk1,
            acc0,
            acc1,
        } => vec![ksk0.len(), ksk1.len(), acc0.len(), acc1.len()],
    };
    match lens.into_iter().find(|&l| l != n) {
        Some(got) => Err(Error::SizeMismatch { expected: n, got }),
        None => Ok(()),
    }
}

/// Schoolbook product in `Z_p[X]/(X^N + 1)`; quadratic, for testing.
pub fn negacyclic_convolve_reference(a: &[u64], b: &[u64], p: &Modulus) -> Result<Vec<u64>> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let n = a.len();
    let mut out = vec![0u64; n];
    for i in 0..n {
        for j in 0..n {
            let prod = p.barrett_mul(a[i], b[j]);
            let k = i + j;
            if k < n {
                out[k] = p.add(out[k], prod);
            } else {
                out[k - n] = p.sub(out[k - n], prod);
            }
        }
    }
    Ok(out)
}
