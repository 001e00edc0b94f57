//! Per-primitive microbenchmarks with level, limb-batch and parameter sweeps.

use std::hint::black_box;
use std::time::Instant;

use anyhow::{bail, ensure, Result};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use rnsckks::client::{Ciphertext, Decryptor, Encoder, Encryptor, EvaluationKeys, KeyGenerator, Plaintext, SecretKey};
use rnsckks::context::{Context, Parameters};
use rnsckks::eval::Evaluator;
use rnsckks::poly::RnsPoly;

use crate::presets::digits_at;
use crate::stats::summarize;

/// Largest decrypt error accepted before an operation is timed.
pub const CORRECTNESS_TOLERANCE: f64 = 1e-4;

/// Offsets used by the hoisted-rotation benchmark.
pub const HOISTED_OFFSETS: [i64; 4] = [1, 2, 3, 4];

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Op {
    /// Ciphertext + ciphertext.
    Hadd,
    /// Ciphertext + plaintext.
    Padd,
    /// Ciphertext + constant.
    Cadd,
    /// Ciphertext · constant (no rescale).
    Cmult,
    /// Ciphertext · plaintext (no rescale).
    Pmult,
    /// Ciphertext · ciphertext with relinearization (no rescale).
    Hmult,
    /// Squaring with relinearization.
    Hsquare,
    /// Rescale of a fresh product.
    Rescale,
    /// Rotation by one slot.
    Hrotate,
    /// Four rotations sharing one decomposition.
    HoistedRotate,
    /// Complex conjugation.
    Conjugate,
    /// Forward NTT of every limb of one polynomial.
    Ntt,
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Hadd => "hadd",
            Op::Padd => "padd",
            Op::Cadd => "cadd",
            Op::Cmult => "cmult",
            Op::Pmult => "pmult",
            Op::Hmult => "hmult",
            Op::Hsquare => "hsquare",
            Op::Rescale => "rescale",
            Op::Hrotate => "hrotate",
            Op::HoistedRotate => "hoisted-rotate",
            Op::Conjugate => "conjugate",
            Op::Ntt => "ntt",
        }
    }

    /// Lowest level at which the operation is well defined and its result
    /// still decrypts: products need room for the squared scale.
    pub fn min_level(self) -> usize {
        match self {
            Op::Cmult | Op::Pmult | Op::Hmult | Op::Hsquare | Op::Rescale => 1,
            _ => 0,
        }
    }
}

/// One sweep point. Times are wall-clock seconds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchResult {
    pub op: String,
    pub log_n: u32,
    pub depth: usize,
    pub delta_bits: u32,
    pub dnum: usize,
    pub fingerprint: String,
    pub limb_batch: usize,
    pub level: usize,
    pub digits: usize,
    pub iterations: usize,
    pub median_s: f64,
    pub p10_s: f64,
    pub p90_s: f64,
    /// Operations per second at the median time.
    pub throughput_ops_s: f64,
    /// Decrypt error of the checked result.
    pub max_error: f64,
    /// Truncated SHA-256 of the serialized output.
    pub output_digest: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Sweep {
    /// One point at the configured level and limb batch.
    Single,
    /// Levels from the top down to the operation's minimum, or the listed ones.
    Level(Option<Vec<usize>>),
    LimbBatch(Vec<usize>),
    Params(Vec<Parameters>),
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub params: Parameters,
    /// Defaults to the top level.
    pub level: Option<usize>,
    /// `0` puts all limbs in one task group.
    pub limb_batch: usize,
    pub iters: usize,
    pub seed: u64,
}

/// Context, keys and client objects for one parameter set. Key generation
/// happens here, outside every timed region.
pub struct Fixture {
    pub ctx: Context,
    pub sk: SecretKey,
    pub keys: EvaluationKeys,
    pub encoder: Encoder,
    pub decryptor: Decryptor,
    encryptor: Encryptor,
    rng: ChaCha20Rng,
}

/// Operands prepared at one level.
pub struct Inputs {
    pub level: usize,
    x: Vec<Complex64>,
    y: Vec<Complex64>,
    w: Vec<Complex64>,
    c: f64,
    cx: Ciphertext,
    cy: Ciphertext,
    pw: Plaintext,
    product: Option<Ciphertext>,
    poly: RnsPoly,
}

pub enum Output {
    One(Ciphertext),
    Many(Vec<Ciphertext>),
    Poly(RnsPoly),
}

impl Output {
    fn digest(&self) -> String {
        let mut h = Sha256::new();
        match self {
            Output::One(ct) => h.update(ct.to_bytes()),
            Output::Many(cts) => cts.iter().for_each(|ct| h.update(ct.to_bytes())),
            Output::Poly(p) => h.update(p.to_bytes()),
        }
        hex::encode(&h.finalize()[..8])
    }
}

pub fn random_slots(rng: &mut impl Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

fn rotated(v: &[Complex64], r: i64) -> Vec<Complex64> {
    let n = v.len() as i64;
    (0..n).map(|i| v[(i + r).rem_euclid(n) as usize]).collect()
}

pub fn max_error(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

impl Fixture {
    pub fn new(params: &Parameters, seed: u64) -> Result<Self> {
        let ctx = Context::new(params.clone())?;
        let mut kg = KeyGenerator::new(&ctx, seed);
        let sk = kg.secret_key();
        let keys = kg.evaluation_keys(&sk, &HOISTED_OFFSETS, ctx.slots())?;
        Ok(Self {
            encoder: Encoder::new(&ctx),
            decryptor: Decryptor::new(&ctx),
            encryptor: Encryptor::new(&ctx, seed.wrapping_add(1)),
            rng: ChaCha20Rng::seed_from_u64(seed.wrapping_add(2)),
            ctx,
            sk,
            keys,
        })
    }

    pub fn encrypt(&mut self, v: &[Complex64], level: usize) -> Result<Ciphertext> {
        let pt = self.encoder.encode(v, level)?;
        Ok(self.encryptor.encrypt_sk(&pt, &self.sk)?)
    }

    pub fn decrypt(&self, ct: &Ciphertext) -> Result<Vec<Complex64>> {
        Ok(self.encoder.decode(&self.decryptor.decrypt(ct, &self.sk)?)?)
    }

    pub fn inputs(&mut self, level: usize) -> Result<Inputs> {
        let n = self.ctx.slots();
        let x = random_slots(&mut self.rng, n);
        let y = random_slots(&mut self.rng, n);
        let w = random_slots(&mut self.rng, n);
        let c = self.rng.gen_range(-1.0..1.0);
        let cx = self.encrypt(&x, level)?;
        let cy = self.encrypt(&y, level)?;
        let pw = self.encoder.encode(&w, level)?;
        let product = if level >= 1 {
            Some(Evaluator::new(&self.ctx).mul(&cx, &cy, self.keys.relin()?)?)
        } else {
            None
        };
        let mut poly = cx.c0.clone();
        poly.to_coeff(&self.ctx);
        Ok(Inputs {
            level,
            x,
            y,
            w,
            c,
            cx,
            cy,
            pw,
            product,
            poly,
        })
    }

    /// Runs `op` once with `eval` (which may carry a different limb batch).
    pub fn run(&self, op: Op, inp: &Inputs, eval: &Evaluator) -> Result<Output> {
        let relin = self.keys.relin()?;
        Ok(match op {
            Op::Hadd => Output::One(eval.add(&inp.cx, &inp.cy)?),
            Op::Padd => Output::One(eval.add_plain(&inp.cx, &inp.pw)?),
            Op::Cadd => Output::One(eval.add_scalar(&inp.cx, inp.c)?),
            Op::Cmult => Output::One(eval.mul_scalar(&inp.cx, inp.c)?),
            Op::Pmult => Output::One(eval.mul_plain(&inp.cx, &inp.pw)?),
            Op::Hmult => Output::One(eval.mul(&inp.cx, &inp.cy, relin)?),
            Op::Hsquare => Output::One(eval.square(&inp.cx, relin)?),
            Op::Rescale => match &inp.product {
                Some(p) => Output::One(eval.rescale(p)?),
                None => bail!("rescale needs level 1 or above"),
            },
            Op::Hrotate => Output::One(eval.rotate(&inp.cx, 1, &self.keys)?),
            Op::HoistedRotate => Output::Many(eval.rotate_many(&inp.cx, &HOISTED_OFFSETS, &self.keys)?),
            Op::Conjugate => Output::One(eval.conjugate(&inp.cx, &self.keys)?),
            Op::Ntt => {
                let mut p = inp.poly.clone();
                p.to_eval(eval.context());
                Output::Poly(p)
            }
        })
    }

    /// Decrypt-oracle check of one output; returns the error.
    pub fn check(&self, op: Op, inp: &Inputs, out: &Output) -> Result<f64> {
        let (x, y, w, c) = (&inp.x, &inp.y, &inp.w, inp.c);
        let zip = |f: &dyn Fn(Complex64, Complex64) -> Complex64, a: &[Complex64], b: &[Complex64]| -> Vec<Complex64> {
            a.iter().zip(b).map(|(&p, &q)| f(p, q)).collect()
        };
        let want: Vec<Vec<Complex64>> = match op {
            Op::Hadd => vec![zip(&|p, q| p + q, x, y)],
            Op::Padd => vec![zip(&|p, q| p + q, x, w)],
            Op::Cadd => vec![x.iter().map(|v| v + c).collect()],
            Op::Cmult => vec![x.iter().map(|v| v * c).collect()],
            Op::Pmult => vec![zip(&|p, q| p * q, x, w)],
            Op::Hmult | Op::Rescale => vec![zip(&|p, q| p * q, x, y)],
            Op::Hsquare => vec![x.iter().map(|v| v * v).collect()],
            Op::Hrotate => vec![rotated(x, 1)],
            Op::HoistedRotate => HOISTED_OFFSETS.iter().map(|&r| rotated(x, r)).collect(),
            Op::Conjugate => vec![x.iter().map(|v| v.conj()).collect()],
            Op::Ntt => {
                let Output::Poly(p) = out else { bail!("ntt produces a polynomial") };
                let mut back = p.clone();
                back.to_coeff(&self.ctx);
                ensure!(back == inp.poly, "NTT round trip changed the polynomial");
                return Ok(0.0);
            }
        };
        let got: Vec<&Ciphertext> = match out {
            Output::One(ct) => vec![ct],
            Output::Many(cts) => cts.iter().collect(),
            Output::Poly(_) => bail!("{} produces ciphertexts", op.name()),
        };
        ensure!(got.len() == want.len(), "output count");
        let mut worst: f64 = 0.0;
        for (ct, v) in got.iter().zip(&want) {
            worst = worst.max(max_error(&self.decrypt(ct)?, v));
        }
        Ok(worst)
    }

    /// Checks `op` at `inp.level`, then times `iters` sequential runs.
    pub fn measure(&self, op: Op, inp: &Inputs, limb_batch: usize, iters: usize) -> Result<BenchResult> {
        ensure!(iters >= 1, "at least one iteration");
        let eval = Evaluator::new(&self.ctx.with_limb_batch(limb_batch));
        let out = self.run(op, inp, &eval)?;
        let err = self.check(op, inp, &out)?;
        ensure!(
            err < CORRECTNESS_TOLERANCE,
            "{} at level {} decrypts with error {err:e}; not timing an incorrect result",
            op.name(),
            inp.level
        );
        let digest = out.digest();
        let times: Vec<f64> = (0..iters)
            .map(|_| self.time_once(op, inp, &eval))
            .collect::<Result<_>>()?;
        Ok(self.result(op, inp.level, limb_batch, &times, err, digest))
    }

    pub fn time_once(&self, op: Op, inp: &Inputs, eval: &Evaluator) -> Result<f64> {
        let start = Instant::now();
        let out = self.run(op, inp, eval)?;
        let t = start.elapsed().as_secs_f64();
        black_box(out);
        Ok(t.max(1e-9))
    }

    fn result(&self, op: Op, level: usize, limb_batch: usize, times: &[f64], err: f64, digest: String) -> BenchResult {
        let p = self.ctx.params();
        let s = summarize(times);
        BenchResult {
            op: op.name().to_string(),
            log_n: p.log_n,
            depth: p.depth,
            delta_bits: p.delta_bits,
            dnum: p.dnum,
            fingerprint: self.ctx.fingerprint().to_string(),
            limb_batch,
            level,
            digits: digits_at(p, level),
            iterations: times.len(),
            median_s: s.median,
            p10_s: s.p10,
            p90_s: s.p90,
            throughput_ops_s: 1.0 / s.median,
            max_error: err,
            output_digest: digest,
        }
    }

    /// Level sweep with repetitions interleaved across levels, so that slow
    /// drift of the machine affects every level alike. Every level is checked
    /// before any timing starts.
    pub fn level_sweep(&mut self, op: Op, levels: &[usize], limb_batch: usize, iters: usize) -> Result<Vec<BenchResult>> {
        let eval = Evaluator::new(&self.ctx.with_limb_batch(limb_batch));
        let mut prepared = Vec::new();
        for &l in levels {
            ensure!(l <= self.ctx.max_level(), "level {l} above the top level {}", self.ctx.max_level());
            ensure!(l >= op.min_level(), "{} needs level {} or above", op.name(), op.min_level());
            let inp = self.inputs(l)?;
            let out = self.run(op, &inp, &eval)?;
            let err = self.check(op, &inp, &out)?;
            ensure!(err < CORRECTNESS_TOLERANCE, "{} at level {l}: error {err:e}", op.name());
            prepared.push((inp, err, out.digest()));
        }
        let mut times = vec![Vec::with_capacity(iters); levels.len()];
        for _ in 0..iters {
            for (k, (inp, _, _)) in prepared.iter().enumerate() {
                times[k].push(self.time_once(op, inp, &eval)?);
            }
        }
        Ok(prepared
            .into_iter()
            .zip(times)
            .map(|((inp, err, digest), t)| self.result(op, inp.level, limb_batch, &t, err, digest))
            .collect())
    }
}

/// Runs one benchmark sweep. Every point is checked against the decrypt
/// oracle before it is timed.
pub fn run_microbench(op: Op, sweep: &Sweep, opts: &BenchOptions) -> Result<Vec<BenchResult>> {
    let point = |fx: &mut Fixture, level: Option<usize>, batch: usize| -> Result<BenchResult> {
        let level = level.unwrap_or(fx.ctx.max_level());
        ensure!(level >= op.min_level(), "{} needs level {} or above", op.name(), op.min_level());
        ensure!(level <= fx.ctx.max_level(), "level {level} above the top level {}", fx.ctx.max_level());
        let inp = fx.inputs(level)?;
        fx.measure(op, &inp, batch, opts.iters)
    };
    match sweep {
        Sweep::Single => {
            let mut fx = Fixture::new(&opts.params, opts.seed)?;
            Ok(vec![point(&mut fx, opts.level, opts.limb_batch)?])
        }
        Sweep::Level(levels) => {
            let mut fx = Fixture::new(&opts.params, opts.seed)?;
            let levels = levels
                .clone()
                .unwrap_or_else(|| (op.min_level()..=fx.ctx.max_level()).rev().collect());
            fx.level_sweep(op, &levels, opts.limb_batch, opts.iters)
        }
        Sweep::LimbBatch(batches) => {
            let mut fx = Fixture::new(&opts.params, opts.seed)?;
            let level = opts.level.unwrap_or(fx.ctx.max_level());
            let inp = fx.inputs(level)?;
            let results = batches
                .iter()
                .map(|&b| fx.measure(op, &inp, b, opts.iters))
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = results.first() {
                ensure!(
                    results.iter().all(|r| r.output_digest == first.output_digest),
                    "limb batching changed the output of {}",
                    op.name()
                );
            }
            Ok(results)
        }
        Sweep::Params(sets) => sets
            .iter()
            .map(|p| {
                let mut fx = Fixture::new(p, opts.seed)?;
                point(&mut fx, opts.level.map(|l| l.min(p.depth)), opts.limb_batch)
            })
            .collect(),
    }
}

