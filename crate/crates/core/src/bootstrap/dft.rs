//! Cleartext factorization of the slot DFT into sparse butterfly stages.
//!
//! Matrices are stored by generalized diagonals: `diag_r[i] = M[i][(i + r) mod n]`,
//! so that `M·z = Σ_r diag_r ⊙ rot(z, r)` with `rot(z, r)[i] = z[(i + r) mod n]`.
//!
//! The encoder applies a bit reversal followed by `log n` butterfly stages.
//! CoeffToSlot uses only the inverse stages, leaving the slots in bit-reversed
//! order; ApproxModEval is slot-wise, and SlotToCoeff consumes bit-reversed
//! input, so the permutation never has to be evaluated.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::client::SpecialFft;

/// A square matrix by its nonzero generalized diagonals.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalMatrix {
    pub n: usize,
    pub diagonals: BTreeMap<usize, Vec<Complex64>>,
}

impl DiagonalMatrix {
    pub fn identity(n: usize) -> Self {
        let mut diagonals = BTreeMap::new();
        diagonals.insert(0, vec![Complex64::new(1.0, 0.0); n]);
        Self { n, diagonals }
    }

    fn entry(&mut self, row: usize, col: usize, v: Complex64) {
        let n = self.n;
        let r = (col + n - row) % n;
        self.diagonals.entry(r).or_insert_with(|| vec![Complex64::new(0.0, 0.0); n])[row] += v;
    }

    pub fn apply(&self, z: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (&r, d) in &self.diagonals {
            for i in 0..n {
                out[i] += d[i] * z[(i + r) % n];
            }
        }
        out
    }

    /// `self · other` (apply `other` first).
    pub fn compose(&self, other: &Self) -> Self {
        let n = self.n;
        let mut diagonals: BTreeMap<usize, Vec<Complex64>> = BTreeMap::new();
        for (&s, a) in &self.diagonals {
            for (&t, b) in &other.diagonals {
                let d = diagonals
                    .entry((s + t) % n)
                    .or_insert_with(|| vec![Complex64::new(0.0, 0.0); n]);
                for i in 0..n {
                    d[i] += a[i] * b[(i + s) % n];
                }
            }
        }
        diagonals.retain(|_, d| d.iter().any(|v| v.norm() > 0.0));
        Self { n, diagonals }
    }

    pub fn scale(&mut self, c: f64) {
        self.diagonals
            .values_mut()
            .flat_map(|d| d.iter_mut())
            .for_each(|v| *v *= c);
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let n = self.n;
        let mut m = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for (&r, d) in &self.diagonals {
            for i in 0..n {
                m[i][(i + r) % n] += d[i];
            }
        }
        m
    }
}

fn stage_twiddles(fft: &SpecialFft, len: usize) -> Vec<Complex64> {
    // the twiddles of one stage, read off by running it on unit pairs
    let lenh = len / 2;
    (0..lenh)
        .map(|j| {
            let mut v = vec![Complex64::new(0.0, 0.0); fft.slots()];
            v[j + lenh] = Complex64::new(1.0, 0.0);
            fft.forward_stage(&mut v, len);
            v[j]
        })
        .collect()
}

/// The butterfly stage of block length `len`, as applied by the encoder.
pub fn forward_stage_matrix(fft: &SpecialFft, len: usize) -> DiagonalMatrix {
    let n = fft.slots();
    let lenh = len / 2;
    let w = stage_twiddles(fft, len);
    let mut m = DiagonalMatrix {
        n,
        diagonals: BTreeMap::new(),
    };
    let one = Complex64::new(1.0, 0.0);
    for i in (0..n).step_by(len) {
        for (j, &wj) in w.iter().enumerate() {
            let (p, q) = (i + j, i + j + lenh);
            m.entry(p, p, one);
            m.entry(p, q, wj);
            m.entry(q, p, one);
            m.entry(q, q, -wj);
        }
    }
    m
}

/// Exact inverse of [`forward_stage_matrix`].
pub fn inverse_stage_matrix(fft: &SpecialFft, len: usize) -> DiagonalMatrix {
    let n = fft.slots();
    let lenh = len / 2;
    let w = stage_twiddles(fft, len);
    let mut m = DiagonalMatrix {
        n,
        diagonals: BTreeMap::new(),
    };
    let half = Complex64::new(0.5, 0.0);
    for i in (0..n).step_by(len) {
        for (j, &wj) in w.iter().enumerate() {
            let (p, q) = (i + j, i + j + lenh);
            let wi = half / wj;
            m.entry(p, p, half);
            m.entry(p, q, half);
            m.entry(q, p, wi);
            m.entry(q, q, -wi);
        }
    }
    m
}

/// Splits `total` stages into `groups` contiguous runs, larger runs first.
pub fn split_stages(total: usize, groups: usize) -> Vec<usize> {
    (0..groups)
        .map(|g| total / groups + usize::from(g < total % groups))
        .collect()
}

/// Stage lengths `2, 4, …, n`.
fn lengths(n: usize) -> Vec<usize> {
    (1..=n.trailing_zeros()).map(|k| 1usize << k).collect()
}

/// CoeffToSlot factors in application order, each multiplied by
/// `constant^(1/groups)`: their product maps slots to bit-reversed
/// coefficients, i.e. `BR · F^{-1}` up to the constant.
pub fn coeff_to_slot_factors(n: usize, groups: usize, constant: f64) -> Vec<DiagonalMatrix> {
    let fft = SpecialFft::new(n);
    let mut lens = lengths(n);
    lens.reverse(); // the inverse applies the widest stage first
    grouped(&fft, &lens, groups, constant, inverse_stage_matrix)
}

/// SlotToCoeff factors in application order: their product is `F · BR` up
/// to the constant.
pub fn slot_to_coeff_factors(n: usize, groups: usize, constant: f64) -> Vec<DiagonalMatrix> {
    let fft = SpecialFft::new(n);
    grouped(&fft, &lengths(n), groups, constant, forward_stage_matrix)
}

fn grouped(
    fft: &SpecialFft,
    lens: &[usize],
    groups: usize,
    constant: f64,
    stage: fn(&SpecialFft, usize) -> DiagonalMatrix,
) -> Vec<DiagonalMatrix> {
    let n = fft.slots();
    let per = constant.abs().powf(1.0 / groups as f64);
    let mut it = lens.iter();
    split_stages(lens.len(), groups)
        .into_iter()
        .enumerate()
        .map(|(g, count)| {
            let mut m = DiagonalMatrix::identity(n);
            for &len in it.by_ref().take(count) {
                m = stage(fft, len).compose(&m);
            }
            m.scale(if g == 0 { per * constant.signum() } else { per });
            m
        })
        .collect()
}

/// Product of factors given in application order.
pub fn product(factors: &[DiagonalMatrix]) -> DiagonalMatrix {
    let mut m = DiagonalMatrix::identity(factors[0].n);
    for f in factors {
        m = f.compose(&m);
    }
    m
}
