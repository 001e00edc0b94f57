//! Encrypted logistic-regression training with per-iteration bootstrapping.
//!
//! Labels are `y ∈ {-1, +1}` and each sample is stored as the row
//! `z_i = y_i · (1, x_i)`, padded to `align` slots. One ciphertext holds
//! `samples` rows back to back; the weight ciphertext holds `w` repeated in
//! every row. A gradient-ascent step on the log-likelihood is
//! `w ← w + (lr/n) · Σ_i σ(-w·z_i) · z_i`, with `σ` replaced by a
//! least-squares polynomial whose coefficients absorb `lr/n`.
//!
//! The cleartext reference runs the same recurrence with the same polynomial,
//! so the comparison isolates the error of the encrypted evaluation.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context as _, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use rnsckks::bootstrap::{BootstrapPrecomputation, Bootstrapper};
use rnsckks::client::{rotation_exponent, Ciphertext, Decryptor, Encoder, Encryptor, EvaluationKeys, KeyGenerator, SecretKey};
use rnsckks::context::{Context, Parameters};
use rnsckks::eval::Evaluator;

use crate::presets::bootstrap_config;
use crate::stats::summarize;

/// Half-width of the interval on which the sigmoid is fitted.
pub const SIGMOID_RANGE: f64 = 8.0;

#[derive(Clone, Debug, PartialEq)]
pub struct LrConfig {
    /// CSV file; a synthetic separable set is generated when absent.
    pub data: Option<PathBuf>,
    pub samples: usize,
    /// Slots per row; a power of two covering the features plus the bias.
    pub align: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub bootstrap: bool,
    pub sigmoid_degree: usize,
    pub seed: u64,
}

impl Default for LrConfig {
    fn default() -> Self {
        Self {
            data: None,
            samples: 1024,
            align: 32,
            learning_rate: 1.0,
            iterations: 5,
            bootstrap: true,
            sigmoid_degree: 3,
            seed: 1,
        }
    }
}

impl LrConfig {
    pub fn validate(&self, features: usize, slots: usize) -> Result<()> {
        ensure!(self.align.is_power_of_two(), "feature alignment {} is not a power of two", self.align);
        ensure!(
            features < self.align,
            "{features} features plus the bias column exceed the alignment {}",
            self.align
        );
        ensure!(self.samples.is_power_of_two(), "samples per ciphertext must be a power of two");
        ensure!(
            self.samples * self.align <= slots,
            "{} samples × {} slots exceed the {slots} slots of a ciphertext",
            self.samples,
            self.align
        );
        ensure!(self.sigmoid_degree >= 1, "the sigmoid polynomial needs degree 1 or more");
        Ok(())
    }
}

/// Features (one row per sample) and labels in `{-1, +1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Divides every column by its largest magnitude.
    pub fn normalized(&self) -> Self {
        let d = self.feature_count();
        let scale: Vec<f64> = (0..d)
            .map(|j| self.features.iter().map(|r| r[j].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE))
            .collect();
        Self {
            features: self.features.iter().map(|r| r.iter().zip(&scale).map(|(v, s)| v / s).collect()).collect(),
            labels: self.labels.clone(),
        }
    }

    /// `z_i = y_i · (1, x_i)`.
    pub fn signed_rows(&self) -> Vec<Vec<f64>> {
        self.features
            .iter()
            .zip(&self.labels)
            .map(|(x, &y)| std::iter::once(y).chain(x.iter().map(|v| v * y)).collect())
            .collect()
    }

    /// Fraction of samples with `w·z_i > 0`.
    pub fn accuracy(&self, w: &[f64]) -> f64 {
        let rows = self.signed_rows();
        let good = rows.iter().filter(|z| dot(w, z) > 0.0).count();
        good as f64 / rows.len().max(1) as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two features uniform in `[-1, 1]`, labelled by a fixed hyperplane, with a
/// margin of `0.05` around it left empty.
pub fn synthetic(samples: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let plane = [0.2f64, 1.0, -0.7];
    let mut features = Vec::with_capacity(samples);
    let mut labels = Vec::with_capacity(samples);
    while labels.len() < samples {
        let x: [f64; 2] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let score = plane[0] + plane[1] * x[0] + plane[2] * x[1];
        if score.abs() < 0.05 {
            continue;
        }
        features.push(x.to_vec());
        labels.push(score.signum());
    }
    Dataset { features, labels }
}

/// Reads a CSV file: a header row, numeric feature columns, and a final
/// label column holding `0/1` or `-1/1`.
pub fn read_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let width = reader.headers()?.len();
    ensure!(width >= 2, "{}: need at least one feature and a label", path.display());
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{} row {}", path.display(), i + 2))?;
        ensure!(record.len() == width, "row {} has {} fields, expected {width}", i + 2, record.len());
        let values = record
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|_| anyhow::anyhow!("row {}: {f:?} is not a number", i + 2)))
            .collect::<Result<Vec<f64>>>()?;
        let label = values[width - 1];
        let y = if label == 1.0 {
            1.0
        } else if label == 0.0 || label == -1.0 {
            -1.0
        } else {
            bail!("row {}: label {label} is not binary", i + 2)
        };
        ensure!(values.iter().all(|v| v.is_finite()), "row {}: non-finite value", i + 2);
        features.push(values[..width - 1].to_vec());
        labels.push(y);
    }
    ensure!(!labels.is_empty(), "{} holds no samples", path.display());
    Ok(Dataset { features, labels })
}

/// Monomial coefficients (constant first) of the least-squares fit of the
/// logistic function on `[-range, range]`.
pub fn sigmoid_fit(degree: usize, range: f64) -> Vec<f64> {
    let m = 4001;
    // fit in u = x / range for conditioning
    let u: Vec<f64> = (0..m).map(|i| -1.0 + 2.0 * i as f64 / (m - 1) as f64).collect();
    let a = DMatrix::from_fn(m, degree + 1, |i, k| u[i].powi(k as i32));
    let b = DVector::from_iterator(m, u.iter().map(|&t| 1.0 / (1.0 + (-t * range).exp())));
    let fit = a.svd(true, true).solve(&b, 1e-14).expect("full-rank Vandermonde");
    fit.iter().enumerate().map(|(k, c)| c / range.powi(k as i32)).collect()
}

pub fn eval_poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Coefficients `c_k` of `(lr/n) · g(-t)` where `g` fits the sigmoid.
pub fn step_coefficients(sigmoid: &[f64], learning_rate: f64, n: usize) -> Vec<f64> {
    sigmoid
        .iter()
        .enumerate()
        .map(|(k, c)| if k % 2 == 0 { *c } else { -c } * learning_rate / n as f64)
        .collect()
}

/// Mini-batches of signed rows.
pub fn batches(data: &Dataset, samples: usize) -> Vec<Vec<Vec<f64>>> {
    data.signed_rows().chunks(samples).map(<[_]>::to_vec).collect()
}

/// Cleartext training with the polynomial sigmoid; returns the weights after
/// every iteration, starting with the initial zero vector.
pub fn train_reference(batches: &[Vec<Vec<f64>>], width: usize, sigmoid: &[f64], cfg: &LrConfig) -> Vec<Vec<f64>> {
    let mut w = vec![0.0; width];
    let mut history = vec![w.clone()];
    for it in 0..cfg.iterations {
        let rows = &batches[it % batches.len()];
        let c = step_coefficients(sigmoid, cfg.learning_rate, rows.len());
        let mut grad = vec![0.0; width];
        for z in rows {
            let s = eval_poly(&c, dot(&w, z));
            grad.iter_mut().zip(z).for_each(|(g, v)| *g += s * v);
        }
        w.iter_mut().zip(&grad).for_each(|(a, g)| *a += g);
        history.push(w.clone());
    }
    history
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LrReport {
    pub log_n: u32,
    pub depth: usize,
    pub delta_bits: u32,
    pub dnum: usize,
    pub fingerprint: String,
    pub samples: usize,
    pub align: usize,
    pub features: usize,
    pub batches: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub sigmoid_coefficients: Vec<f64>,
    pub bootstrap: bool,
    /// Seconds per iteration, without the bootstrap.
    pub iteration_s: Vec<f64>,
    /// Seconds per bootstrap (empty when disabled).
    pub bootstrap_s: Vec<f64>,
    pub iteration_median_s: f64,
    pub iteration_bootstrap_median_s: f64,
    pub encrypted_weights: Vec<f64>,
    pub reference_weights: Vec<f64>,
    /// `‖w_enc - w_ref‖∞` before training (index 0) and after every iteration.
    pub weight_diff: Vec<f64>,
    pub max_weight_diff: f64,
    pub encrypted_accuracy: f64,
    pub reference_accuracy: f64,
}

/// One CSV row of [`LrReport`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LrIterationRow {
    pub iteration: usize,
    pub iteration_s: f64,
    pub bootstrap_s: f64,
    pub weight_diff: f64,
}

impl LrReport {
    pub fn rows(&self) -> Vec<LrIterationRow> {
        (0..self.iteration_s.len())
            .map(|i| LrIterationRow {
                iteration: i + 1,
                iteration_s: self.iteration_s[i],
                bootstrap_s: self.bootstrap_s.get(i).copied().unwrap_or(0.0),
                weight_diff: self.weight_diff[i + 1],
            })
            .collect()
    }
}

/// Homomorphic side of the demo: keys, layout helpers and one iteration.
struct Trainer {
    ctx: Context,
    sk: SecretKey,
    keys: EvaluationKeys,
    eval: Evaluator,
    enc: Encoder,
    dec: Decryptor,
    encryptor: Encryptor,
    boot: Option<Bootstrapper>,
    slots: usize,
    align: usize,
    samples: usize,
}

impl Trainer {
    fn rotations(align: usize, samples: usize) -> Vec<i64> {
        let inner = (0..align.trailing_zeros()).map(|k| 1i64 << k);
        let outer = (0..samples.trailing_zeros()).map(|k| (align as i64) << k);
        inner.clone().chain(inner.map(|r| -r)).chain(outer).collect()
    }

    fn new(params: &Parameters, cfg: &LrConfig) -> Result<Self> {
        let ctx = Context::new(params.clone())?;
        let slots = cfg.samples * cfg.align;
        let mut kg = KeyGenerator::new(&ctx, cfg.seed);
        let sk = kg.secret_key();
        let (mut keys, boot) = if cfg.bootstrap {
            let pre = BootstrapPrecomputation::new(&ctx, bootstrap_config(params, slots))?;
            let keys = pre.generate_keys(&ctx, &mut kg, &sk)?;
            (keys, Some(Bootstrapper::new(&ctx, pre)?))
        } else {
            (kg.evaluation_keys(&sk, &[], slots)?, None)
        };
        for r in Self::rotations(cfg.align, cfg.samples) {
            let k = rotation_exponent(ctx.n(), slots, r);
            if k != 1 && !keys.galois.contains_key(&k) {
                keys.galois.insert(k, kg.galois_key(&sk, k)?);
            }
        }
        Ok(Self {
            eval: Evaluator::new(&ctx),
            enc: Encoder::new(&ctx),
            dec: Decryptor::new(&ctx),
            encryptor: Encryptor::new(&ctx, cfg.seed.wrapping_add(1)),
            ctx,
            sk,
            keys,
            boot,
            slots,
            align: cfg.align,
            samples: cfg.samples,
        })
    }

    fn encrypt_rows(&mut self, rows: &[Vec<f64>], level: usize) -> Result<Ciphertext> {
        let mut v = vec![Complex64::new(0.0, 0.0); self.slots];
        for (i, z) in rows.iter().enumerate() {
            for (j, &x) in z.iter().enumerate() {
                v[i * self.align + j] = Complex64::new(x, 0.0);
            }
        }
        let pt = self.enc.encode(&v, level)?;
        Ok(self.encryptor.encrypt_sk(&pt, &self.sk)?)
    }

    fn encrypt_weights(&mut self, w: &[f64], level: usize) -> Result<Ciphertext> {
        let rows = vec![w.to_vec(); self.samples];
        self.encrypt_rows(&rows, level)
    }

    /// Weights read from the first row.
    fn decrypt_weights(&self, ct: &Ciphertext, width: usize) -> Result<Vec<f64>> {
        let v = self.enc.decode(&self.dec.decrypt(ct, &self.sk)?)?;
        Ok(v[..width].iter().map(|z| z.re).collect())
    }

    /// Adds `ct` rotated by each `offsets` entry in turn (doubling sums).
    fn rotate_sum(&self, ct: &Ciphertext, offsets: impl Iterator<Item = i64>) -> Result<Ciphertext> {
        let mut acc = ct.clone();
        for r in offsets {
            acc = self.eval.add(&acc, &self.eval.rotate(&acc, r, &self.keys)?)?;
        }
        Ok(acc)
    }

    /// `Σ_k c_k t^k`, with each `c_k` folded into one factor of `t^k`.
    fn polynomial(&self, t: &Ciphertext, coeffs: &[f64]) -> Result<Ciphertext> {
        let relin = self.keys.relin()?;
        let degree = coeffs.len() - 1;
        let mut powers: Vec<Option<Ciphertext>> = vec![None; degree.max(1) + 1];
        powers[1] = Some(t.clone());
        for k in 2..degree {
            let mut a = 1usize << (usize::BITS - 1 - k.leading_zeros());
            if a == k {
                a = k / 2;
            }
            let (x, y) = (powers[a].as_ref().expect("lower power"), powers[k - a].as_ref().expect("lower power"));
            powers[k] = Some(self.eval.mul_rescale(x, y, relin)?);
        }
        let largest = coeffs.iter().map(|c| c.abs()).fold(0.0, f64::max);
        let mut acc: Option<Ciphertext> = None;
        for (k, &c) in coeffs.iter().enumerate().skip(1) {
            if c.abs() <= largest * 1e-12 {
                continue;
            }
            let scaled = self.eval.mul_scalar_rescale(t, c)?;
            let term = if k == 1 {
                scaled
            } else {
                self.eval.mul_rescale(&scaled, powers[k - 1].as_ref().expect("power"), relin)?
            };
            acc = Some(match acc {
                None => term,
                Some(a) => self.eval.add(&a, &term)?,
            });
        }
        let acc = match acc {
            Some(a) => a,
            None => self.eval.mul_scalar_rescale(t, 0.0)?,
        };
        Ok(self.eval.add_scalar(&acc, coeffs[0])?)
    }

    /// Levels one iteration consumes: the product with the rows, the mask,
    /// the polynomial and the second product.
    fn iteration_depth(degree: usize) -> usize {
        let ceil_log2 = |x: usize| (usize::BITS - x.saturating_sub(1).leading_zeros()) as usize;
        let poly = if degree <= 1 { 1 } else { 1 + ceil_log2(degree - 1).max(1) };
        3 + poly
    }

    fn iterate(&self, w: &Ciphertext, z: &Ciphertext, coeffs: &[f64]) -> Result<Ciphertext> {
        let relin = self.keys.relin()?;
        let e = &self.eval;
        let a = self.align as i64;
        let prod = e.mul_rescale(w, z, relin)?;
        let block = self.rotate_sum(&prod, (0..self.align.trailing_zeros()).map(|k| 1i64 << k))?;
        let mask: Vec<f64> = (0..self.slots).map(|i| if i % self.align == 0 { 1.0 } else { 0.0 }).collect();
        let mask = self.enc.encode_real(&mask, block.level)?;
        let t = e.mul_plain_rescale(&block, &mask)?;
        let t = self.rotate_sum(&t, (0..self.align.trailing_zeros()).map(|k| -(1i64 << k)))?;
        let s = self.polynomial(&t, coeffs)?;
        let g = e.mul_rescale(&s, z, relin)?;
        let g = self.rotate_sum(&g, (0..self.samples.trailing_zeros()).map(|k| a << k))?;
        Ok(e.add(w, &g)?)
    }
}

/// Trains encrypted and in the clear and reports both.
pub fn run_lr_demo(params: &Parameters, cfg: &LrConfig) -> Result<LrReport> {
    let raw = match &cfg.data {
        Some(p) => read_csv(p)?,
        None => synthetic(cfg.samples, cfg.seed),
    };
    let data = raw.normalized();
    let features = data.feature_count();
    cfg.validate(features, params.ring_degree() / 2)?;
    let width = features + 1;
    let sigmoid = sigmoid_fit(cfg.sigmoid_degree, SIGMOID_RANGE);
    let batches = batches(&data, cfg.samples);
    let reference = train_reference(&batches, width, &sigmoid, cfg);

    let mut tr = Trainer::new(params, cfg)?;
    let top = tr.ctx.max_level();
    let need = Trainer::iteration_depth(cfg.sigmoid_degree);
    let start_level = match &tr.boot {
        Some(b) => b.precomputation().output_level(),
        None => top,
    };
    ensure!(
        start_level >= need,
        "an iteration needs {need} levels but weights start at level {start_level}"
    );
    if tr.boot.is_none() {
        ensure!(
            cfg.iterations * need <= top,
            "{} iterations need {} levels without bootstrapping; the chain has {top}",
            cfg.iterations,
            cfg.iterations * need
        );
    }
    let zs = batches
        .iter()
        .map(|rows| tr.encrypt_rows(rows, top))
        .collect::<Result<Vec<_>>>()?;
    let mut w = tr.encrypt_weights(&vec![0.0; width], start_level)?;

    let mut iteration_s = Vec::new();
    let mut bootstrap_s = Vec::new();
    let mut weight_diff = vec![diff(&tr.decrypt_weights(&w, width)?, &reference[0])];
    for it in 0..cfg.iterations {
        let b = it % batches.len();
        let coeffs = step_coefficients(&sigmoid, cfg.learning_rate, batches[b].len());
        let start = Instant::now();
        w = tr.iterate(&w, &zs[b], &coeffs)?;
        iteration_s.push(start.elapsed().as_secs_f64());
        if let Some(boot) = &tr.boot {
            let start = Instant::now();
            w = boot.bootstrap(&w, &tr.keys)?;
            bootstrap_s.push(start.elapsed().as_secs_f64());
        }
        let got = tr.decrypt_weights(&w, width)?;
        weight_diff.push(diff(&got, &reference[it + 1]));
        log::info!("iteration {}: w = {got:?}, diff {:e}", it + 1, weight_diff[it + 1]);
    }
    let encrypted_weights = tr.decrypt_weights(&w, width)?;
    let reference_weights = reference.last().expect("initial weights").clone();
    let total: Vec<f64> = iteration_s
        .iter()
        .enumerate()
        .map(|(i, t)| t + bootstrap_s.get(i).copied().unwrap_or(0.0))
        .collect();
    let median = |v: &[f64]| if v.is_empty() { 0.0 } else { summarize(v).median };
    Ok(LrReport {
        log_n: params.log_n,
        depth: params.depth,
        delta_bits: params.delta_bits,
        dnum: params.dnum,
        fingerprint: tr.ctx.fingerprint().to_string(),
        samples: cfg.samples,
        align: cfg.align,
        features,
        batches: batches.len(),
        iterations: cfg.iterations,
        learning_rate: cfg.learning_rate,
        sigmoid_coefficients: sigmoid,
        bootstrap: cfg.bootstrap,
        iteration_median_s: median(&iteration_s),
        iteration_bootstrap_median_s: median(&total),
        iteration_s,
        bootstrap_s,
        max_weight_diff: weight_diff.iter().copied().fold(0.0, f64::max),
        weight_diff,
        encrypted_accuracy: data.accuracy(&encrypted_weights),
        reference_accuracy: data.accuracy(&reference_weights),
        encrypted_weights,
        reference_weights,
    })
}

fn diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
