//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=1,4,7` restricts the run to the listed criteria.
//! `ACCEPTANCE_EXTENDED=1` adds the full-scale bootstrapping run to
//! criterion 8 (needs a machine with tens of gigabytes of memory).

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use rnsckks::arith::{generate_prime_chain, Modulus};
use rnsckks::bootstrap::{BootstrapConfig, BootstrapPrecomputation};
use rnsckks::client::sampling::uniform_poly;
use rnsckks::client::{Ciphertext, Decryptor, Encoder, Encryptor, EvaluationKeys, KeyGenerator, PublicKey, SecretKey};
use rnsckks::context::{Context, Parameters};
use rnsckks::eval::{key_switch, key_switch_unfused, mod_down, mod_down_unfused, Evaluator, Weight};
use rnsckks::ntt::{Epilogue, NttTable, NttVariant, Prologue};
use rnsckks::poly::{fast_base_convert, rescale, rescale_unfused, Format};

use rnsckks_bench::boot::run_bootstrap_report;
use rnsckks_bench::lr::{run_lr_demo, LrConfig};
use rnsckks_bench::micro::{Fixture, Op};
use rnsckks_bench::presets::{self, digits_at};
use rnsckks_bench::stats::{mann_whitney_greater, summarize};
use rnsckks_bench::vectors::{default_params, dump_test_vectors, replay};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn random_slots(r: &mut ChaCha20Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))
        .collect()
}

fn max_error(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------- criterion 1

fn modular_arithmetic() -> Outcome {
    let mut exhaustive = 0u64;
    for p in (3u64..256).step_by(2) {
        let m = Modulus::new(p).map_err(|e| e.to_string())?;
        for x in 0..p * p {
            check!(m.barrett_reduce(x as u128) == x % p, "barrett_reduce({x}) mod {p}");
            exhaustive += 1;
        }
    }
    let mut r = rng(1);
    let mut random = 0u64;
    for _ in 0..1000 {
        let bits = r.gen_range(40..=60);
        let p = (r.gen_range(1u64 << (bits - 1)..1u64 << bits)) | 1;
        let m = Modulus::new(p).map_err(|e| e.to_string())?;
        let big_p = BigUint::from(p);
        for _ in 0..1000 {
            let (a, b) = (r.gen_range(0..p), r.gen_range(0..p));
            let want = ((BigUint::from(a) * BigUint::from(b)) % &big_p).to_u64().unwrap();
            check!(m.barrett_mul(a, b) == want, "barrett_mul({a}, {b}) mod {p}");
            check!(m.shoup_mul(a, m.shoup(b)) == want, "shoup_mul({a}, {b}) mod {p}");
            check!(m.barrett_reduce(a as u128 * b as u128) == want, "barrett_reduce mod {p}");
            random += 1;
        }
    }
    Ok(format!("{exhaustive} exhaustive residues below 2^8, {random} random pairs up to 60 bits"))
}

// ---------------------------------------------------------------- criterion 2

fn schoolbook(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
    let n = a.len();
    let mut acc = vec![0u128; n];
    let mut neg = vec![0u128; n];
    for i in 0..n {
        for j in 0..n {
            let prod = a[i] as u128 * b[j] as u128 % p as u128;
            if i + j < n {
                acc[i + j] += prod;
            } else {
                neg[i + j - n] += prod;
            }
        }
    }
    (0..n)
        .map(|k| ((acc[k] % p as u128 + p as u128 - neg[k] % p as u128) % p as u128) as u64)
        .collect()
}

fn ntt_suite() -> Outcome {
    let mut r = rng(2);
    let mut pairs = 0;
    for log_n in 4..=14u32 {
        let n = 1usize << log_n;
        let chain = generate_prime_chain(n, 0, 59, 59, 0).map_err(|e| e.to_string())?;
        let p = chain.chain[0];
        let table = NttTable::new(Modulus::new(p).unwrap(), n).map_err(|e| e.to_string())?;
        for _ in 0..3 {
            let a: Vec<u64> = (0..n).map(|_| r.gen_range(0..p)).collect();
            let mut flat = a.clone();
            table.forward(&mut flat).unwrap();
            let mut hier = a.clone();
            table.forward_hierarchical(&mut hier).unwrap();
            check!(flat == hier, "hierarchical forward differs at N=2^{log_n}");
            let mut back = flat.clone();
            table.inverse(&mut back).unwrap();
            check!(back == a, "round trip at N=2^{log_n}");
            let mut back_h = hier;
            table.inverse_hierarchical(&mut back_h).unwrap();
            check!(back_h == a, "hierarchical round trip at N=2^{log_n}");
        }
        if n <= 64 {
            let m = table.modulus();
            for _ in 0..100 {
                let a: Vec<u64> = (0..n).map(|_| r.gen_range(0..p)).collect();
                let b: Vec<u64> = (0..n).map(|_| r.gen_range(0..p)).collect();
                let (mut fa, mut fb) = (a.clone(), b.clone());
                table.forward(&mut fa).unwrap();
                table.forward(&mut fb).unwrap();
                let mut c: Vec<u64> = fa.iter().zip(&fb).map(|(&x, &y)| m.barrett_mul(x, y)).collect();
                table.inverse(&mut c).unwrap();
                check!(c == schoolbook(&a, &b, p), "NTT product differs from schoolbook at N={n}");
                pairs += 1;
            }
        }
    }
    Ok(format!("round trips N=2^4..2^14, {pairs} products vs schoolbook, hierarchical == flat"))
}

// ---------------------------------------------------------------- criterion 3

fn crt_value(residues: &[u64], primes: &[u64]) -> BigUint {
    let q: BigUint = primes.iter().map(|&p| BigUint::from(p)).product();
    let mut v = BigUint::zero();
    for (&x, &p) in residues.iter().zip(primes) {
        let bp = BigUint::from(p);
        let hat = &q / &bp;
        let inv = (&hat % &bp).modpow(&(&bp - 2u32), &bp);
        v += BigUint::from(x) * &hat * inv;
    }
    v % q
}

fn base_conversion() -> Outcome {
    let ctx = Context::new(Parameters::new(10, 8, 40, 3).toy()).map_err(|e| e.to_string())?;
    let all = ctx.moduli().len();
    let ext = ctx.extension_indices();
    // ModUp from whole and truncated digits, and the ModDown direction
    let configs: [(std::ops::Range<usize>, Vec<usize>); 4] = [
        (0..3, (3..all).collect()),
        (3..6, (0..3).chain(6..all).collect()),
        (6..8, (0..6).chain(ext.clone()).collect()),
        (ext.clone(), (0..ext.start).collect()),
    ];
    let mut r = rng(3);
    let mut coefficients = 0;
    for (source, targets) in &configs {
        let src: Vec<usize> = source.clone().collect();
        let src_primes: Vec<u64> = src.iter().map(|&i| ctx.modulus(i).value()).collect();
        let q_src: BigUint = src_primes.iter().map(|&p| BigUint::from(p)).product();
        let k = src.len() as u64;
        for _ in 0..4 {
            let x = uniform_poly(&mut r, &ctx, &src, Format::Coeff);
            let y = fast_base_convert(&ctx, &x, targets).map_err(|e| e.to_string())?;
            for c in 0..ctx.n() {
                let residues: Vec<u64> = x.limbs().iter().map(|l| l.coeffs[c]).collect();
                let v = crt_value(&residues, &src_primes);
                let matches = |u: u64| {
                    let w = &v + &q_src * u;
                    y.limbs().iter().all(|l| {
                        let p = ctx.modulus(l.modulus_index).value();
                        (&w % p).to_u64().unwrap() == l.coeffs[c]
                    })
                };
                check!((0..k).any(matches), "coefficient {c} of source {source:?} off by more than u·Q'");
                coefficients += 1;
            }
        }
    }
    Ok(format!("{coefficients} coefficients over 4 base configurations within u·Q', 0 <= u < k"))
}

// ---------------------------------------------------------------- criterion 4

struct Keys {
    ctx: Context,
    sk: SecretKey,
    pk: PublicKey,
    keys: EvaluationKeys,
}

const ROTATIONS: [i64; 6] = [1, 2, 5, -1, -3, 64];

fn homomorphism() -> Outcome {
    let ctx = Context::new(Parameters::new(13, 6, 40, 2).toy()).map_err(|e| e.to_string())?;
    let mut kg = KeyGenerator::new(&ctx, 4);
    let sk = kg.secret_key();
    let pk = kg.public_key(&sk);
    let keys = kg.evaluation_keys(&sk, &ROTATIONS, ctx.slots()).map_err(|e| e.to_string())?;
    let k = Keys { ctx, sk, pk, keys };
    let enc = Encoder::new(&k.ctx);
    let dec = Decryptor::new(&k.ctx);
    let eval = Evaluator::new(&k.ctx);
    let mut encryptor = Encryptor::new(&k.ctx, 5);
    let relin = k.keys.relin().map_err(|e| e.to_string())?;
    let n = k.ctx.slots();
    let top = k.ctx.max_level();
    let mut r = rng(6);

    let add_bound = 2f64.powi(-20);
    let mult_bound = 2f64.powi(-18);
    let rot_bound = 2f64.powi(-20);
    let names = [
        "CAdd", "PAdd", "HAdd", "CMult", "PMult", "HMult", "HSquare", "Rescale", "HRotate", "Conjugate", "Hoisted",
        "FusedSum",
    ];
    let mut worst = vec![0f64; names.len()];
    let trials = 100;
    for t in 0..trials {
        let level = 1 + t % top;
        let x = random_slots(&mut r, n);
        let y = random_slots(&mut r, n);
        let w = random_slots(&mut r, n);
        let c: f64 = r.gen_range(-1.0..1.0);
        let encrypt = |e: &mut Encryptor, v: &[Complex64]| -> Ciphertext {
            e.encrypt(&enc.encode(v, level).unwrap(), &k.pk).unwrap()
        };
        let cx = encrypt(&mut encryptor, &x);
        let cy = encrypt(&mut encryptor, &y);
        let pw = enc.encode(&w, level).unwrap();
        let decrypt = |ct: &Ciphertext| enc.decode(&dec.decrypt(ct, &k.sk).unwrap()).unwrap();
        let std_scale = k.ctx.scale_at(level);
        let lower = k.ctx.scale_at(level - 1);
        let same = |ct: &Ciphertext| ct.level == level && ct.scale == std_scale;
        let down = |ct: &Ciphertext| ct.level == level - 1 && ((ct.scale - lower) / lower).abs() <= 4.0 * f64::EPSILON;
        let zip = |f: fn(Complex64, Complex64) -> Complex64, a: &[Complex64], b: &[Complex64]| -> Vec<Complex64> {
            a.iter().zip(b).map(|(&p, &q)| f(p, q)).collect()
        };
        let rot = |v: &[Complex64], s: i64| -> Vec<Complex64> {
            (0..n as i64).map(|i| v[(i + s).rem_euclid(n as i64) as usize]).collect()
        };

        let mut record = |i: usize, ct: &Ciphertext, want: &[Complex64], book: bool| -> Result<(), String> {
            check!(book, "{} bookkeeping: level {} scale {:e}", names[i], ct.level, ct.scale);
            worst[i] = worst[i].max(max_error(&decrypt(ct), want));
            Ok(())
        };

        let o = eval.add_scalar(&cx, c).unwrap();
        record(0, &o, &x.iter().map(|v| v + c).collect::<Vec<_>>(), same(&o))?;
        let o = eval.add_plain(&cx, &pw).unwrap();
        record(1, &o, &zip(|p, q| p + q, &x, &w), same(&o))?;
        let o = eval.add(&cx, &cy).unwrap();
        record(2, &o, &zip(|p, q| p + q, &x, &y), same(&o))?;
        let o = eval.mul_scalar_rescale(&cx, c).unwrap();
        record(3, &o, &x.iter().map(|v| v * c).collect::<Vec<_>>(), down(&o))?;
        let o = eval.mul_plain_rescale(&cx, &pw).unwrap();
        record(4, &o, &zip(|p, q| p * q, &x, &w), down(&o))?;
        let prod = eval.mul(&cx, &cy, relin).unwrap();
        check!(prod.level == level && prod.scale == std_scale * std_scale, "HMult scale before rescale");
        let o = eval.rescale(&prod).unwrap();
        record(5, &o, &zip(|p, q| p * q, &x, &y), down(&o))?;
        let o = eval.square_rescale(&cx, relin).unwrap();
        record(6, &o, &x.iter().map(|v| v * v).collect::<Vec<_>>(), down(&o))?;
        let pp = eval.mul_plain(&cx, &pw).unwrap();
        let o = eval.rescale(&pp).unwrap();
        record(7, &o, &zip(|p, q| p * q, &x, &w), down(&o))?;
        let s = ROTATIONS[t % ROTATIONS.len()];
        let o = eval.rotate(&cx, s, &k.keys).unwrap();
        record(8, &o, &rot(&x, s), same(&o))?;
        let o = eval.conjugate(&cx, &k.keys).unwrap();
        record(9, &o, &x.iter().map(|v| v.conj()).collect::<Vec<_>>(), same(&o))?;
        let many = eval.rotate_many(&cx, &ROTATIONS, &k.keys).unwrap();
        for (&s, o) in ROTATIONS.iter().zip(&many) {
            record(10, o, &rot(&x, s), same(o))?;
        }
        let weights = [Weight::Scalar(c), Weight::Scalar(0.5)];
        let o = eval.rescale(&eval.fused_weighted_sum(&[&cx, &cy], &weights).unwrap()).unwrap();
        let want: Vec<_> = x.iter().zip(&y).map(|(a, b)| a * c + b * 0.5).collect();
        record(11, &o, &want, down(&o))?;
    }
    let bounds = [
        add_bound, add_bound, add_bound, mult_bound, mult_bound, mult_bound, mult_bound, mult_bound, rot_bound, rot_bound,
        rot_bound, mult_bound,
    ];
    let mut summary = Vec::new();
    for ((name, &err), &bound) in names.iter().zip(&worst).zip(&bounds) {
        check!(err <= bound, "{name}: error 2^{:.1} above 2^{:.0}", err.log2(), bound.log2());
        summary.push(format!("{name} 2^{:.1}", err.log2()));
    }
    Ok(format!("{trials} trials each; {}", summary.join(", ")))
}

// ---------------------------------------------------------------- criterion 5

fn fusion_and_batching() -> Outcome {
    let ctx = Context::new(Parameters::new(12, 5, 40, 3).toy()).map_err(|e| e.to_string())?;
    let mut kg = KeyGenerator::new(&ctx, 7);
    let sk = kg.secret_key();
    let keys = kg.evaluation_keys(&sk, &[1, 3], ctx.slots()).map_err(|e| e.to_string())?;
    let relin = keys.relin().unwrap();
    let enc = Encoder::new(&ctx);
    let eval = Evaluator::new(&ctx);
    let mut encryptor = Encryptor::new(&ctx, 8);
    let mut r = rng(9);
    let n = ctx.slots();
    let top = ctx.max_level();
    let mut checks = 0;

    // rescale and ModDown, fused vs separate passes
    for level in 1..=top {
        let idx: Vec<usize> = (0..=level).collect();
        let x = uniform_poly(&mut r, &ctx, &idx, Format::Eval);
        check!(rescale(&ctx, &x).unwrap() == rescale_unfused(&ctx, &x).unwrap(), "rescale at level {level}");
        let ext: Vec<usize> = idx.iter().copied().chain(ctx.extension_indices()).collect();
        let y = uniform_poly(&mut r, &ctx, &ext, Format::Eval);
        check!(mod_down(&ctx, &y).unwrap() == mod_down_unfused(&ctx, &y).unwrap(), "ModDown at level {level}");
        let d = uniform_poly(&mut r, &ctx, &idx, Format::Eval);
        check!(key_switch(&ctx, &d, relin).unwrap() == key_switch_unfused(&ctx, &d, relin).unwrap(), "key switch at level {level}");
        checks += 3;
    }

    // NTT prologue and epilogue vs explicit passes
    let table = ctx.ntt_table(1);
    let m = *table.modulus();
    let from = ctx.modulus(2).value();
    let a: Vec<u64> = (0..ctx.n()).map(|_| r.gen_range(0..from)).collect();
    let minuend: Vec<u64> = (0..ctx.n()).map(|_| r.gen_range(0..m.value())).collect();
    let factor = m.shoup(r.gen_range(1..m.value()));
    for variant in [NttVariant::Flat, NttVariant::Hierarchical] {
        let mut fused = a.clone();
        table
            .forward_fused(&mut fused, variant, Prologue::SwitchModulus { from }, Epilogue::ScaleSubtract { minuend: &minuend, factor })
            .unwrap();
        let mut plain: Vec<u64> = a.iter().map(|&v| m.switch_from(v, from)).collect();
        table.forward(&mut plain).unwrap();
        for (o, &s) in plain.iter_mut().zip(&minuend) {
            *o = m.shoup_mul(m.sub(s, *o), factor);
        }
        check!(fused == plain, "fused forward NTT ({variant:?})");
        checks += 1;
    }

    // ciphertext-level fused paths
    let cts: Vec<Ciphertext> = (0..4)
        .map(|_| encryptor.encrypt_sk(&enc.encode(&random_slots(&mut r, n), top).unwrap(), &sk).unwrap())
        .collect();
    let (cx, cy) = (&cts[0], &cts[1]);
    check!(eval.mul(cx, cy, relin).unwrap() == eval.mul_prescaled(cx, cy, relin).unwrap(), "HMult dataflows");
    check!(eval.square(cx, relin).unwrap() == eval.mul(cx, cx, relin).unwrap(), "HSquare vs HMult");
    let refs: Vec<&Ciphertext> = cts.iter().collect();
    let coeffs = [0.25, -1.5, 2.0, 1e-3];
    let weights: Vec<Weight> = coeffs.iter().map(|&c| Weight::Scalar(c)).collect();
    let fused = eval.fused_weighted_sum(&refs, &weights).unwrap();
    let mut naive = eval.mul_scalar(&cts[0], coeffs[0]).unwrap();
    for (ct, &c) in cts.iter().zip(&coeffs).skip(1) {
        naive = eval.add(&naive, &eval.mul_scalar(ct, c).unwrap()).unwrap();
    }
    check!(fused.c0 == naive.c0 && fused.c1 == naive.c1, "scalar weighted sum");
    let pts: Vec<_> = (0..4).map(|_| enc.encode(&random_slots(&mut r, n), top).unwrap()).collect();
    let weights: Vec<Weight> = pts.iter().map(Weight::Plain).collect();
    let fused = eval.fused_weighted_sum(&refs, &weights).unwrap();
    let mut naive = eval.mul_plain(&cts[0], &pts[0]).unwrap();
    for (ct, pt) in cts.iter().zip(&pts).skip(1) {
        naive = eval.add(&naive, &eval.mul_plain(ct, pt).unwrap()).unwrap();
    }
    check!(fused.c0 == naive.c0 && fused.c1 == naive.c1, "plaintext weighted sum");
    checks += 4;

    // limb batching and the NTT schedule leave every output unchanged
    let run = |e: &Evaluator| -> Vec<Ciphertext> {
        let mut out = vec![
            e.mul_rescale(cx, cy, relin).unwrap(),
            e.square(cx, relin).unwrap(),
            e.rotate(cx, 3, &keys).unwrap(),
            e.conjugate(cx, &keys).unwrap(),
            e.add(cx, cy).unwrap(),
            e.fused_weighted_sum(&refs, &weights).unwrap(),
        ];
        out.extend(e.rotate_many(cx, &[1, 3], &keys).unwrap());
        out
    };
    let reference = run(&eval);
    let all = ctx.moduli().len();
    for batch in [1, 2, 4, all, 0] {
        for variant in [NttVariant::Flat, NttVariant::Hierarchical] {
            let e = Evaluator::new(&ctx.with_limb_batch(batch).with_ntt_variant(variant));
            check!(run(&e) == reference, "limb batch {batch} with {variant:?} NTT changed an output");
            checks += 1;
        }
    }
    let ds = ctx.digit_size();
    let digit = uniform_poly(&mut r, &ctx, &(0..ds).collect::<Vec<_>>(), Format::Coeff);
    let targets: Vec<usize> = (ds..all).collect();
    let base = fast_base_convert(&ctx, &digit, &targets).unwrap();
    for batch in [1, 2, 4, all] {
        let converted = fast_base_convert(&ctx.with_limb_batch(batch), &digit, &targets).unwrap();
        check!(converted == base, "base conversion with limb batch {batch}");
        checks += 1;
    }
    Ok(format!("{checks} bit-equality checks (fused vs unfused, limb batch 1/2/4/all, flat vs hierarchical)"))
}

// ---------------------------------------------------------------- criterion 6

fn digit_drop() -> Outcome {
    let params = presets::preset("digits").unwrap().params();
    let mut fx = Fixture::new(&params, 10).map_err(|e| e.to_string())?;
    let levels: Vec<usize> = (1..=params.depth).rev().collect();
    let reps = 50;
    // level_sweep validates correctness at every level before any timing
    fx.level_sweep(Op::Hmult, &levels, 0, 3).map_err(|e| e.to_string())?;
    let eval = Evaluator::new(&fx.ctx);
    let inputs: Vec<_> = levels.iter().map(|&l| fx.inputs(l).unwrap()).collect();
    let mut samples = vec![Vec::with_capacity(reps); levels.len()];
    for _ in 0..reps {
        for (k, inp) in inputs.iter().enumerate() {
            samples[k].push(fx.time_once(Op::Hmult, inp, &eval).unwrap());
        }
    }
    let medians: Vec<f64> = samples.iter().map(|s| summarize(s).median).collect();
    let alpha = 1e-3;
    let mut drops = Vec::new();
    for k in 0..levels.len() - 1 {
        let (hi, lo) = (levels[k], levels[k + 1]);
        let slower_below = mann_whitney_greater(&samples[k + 1], &samples[k]);
        check!(
            !(slower_below < alpha && medians[k + 1] > medians[k] * 1.02),
            "HMult at level {lo} ({:.2} ms) significantly slower than at {hi} ({:.2} ms), p = {slower_below:.1e}",
            medians[k + 1] * 1e3,
            medians[k] * 1e3
        );
        if digits_at(&params, hi) != digits_at(&params, lo) {
            let p = mann_whitney_greater(&samples[k], &samples[k + 1]);
            check!(
                p < alpha,
                "no significant drop from level {hi} to {lo} (digits {} -> {}), p = {p:.2e}",
                digits_at(&params, hi),
                digits_at(&params, lo)
            );
            drops.push(format!("{hi}->{lo}: {:.1}% (p={p:.0e})", 100.0 * (1.0 - medians[k + 1] / medians[k])));
        }
    }
    Ok(format!(
        "{reps} reps per level, median {:.1} ms at level {} to {:.1} ms at level 1; digit drops {}",
        medians[0] * 1e3,
        levels[0],
        medians[levels.len() - 1] * 1e3,
        drops.join(", ")
    ))
}

// ---------------------------------------------------------------- criterion 7

fn desk_bootstrap() -> Outcome {
    let params = presets::preset("desk").unwrap().params();
    let ctx = Context::new(params.clone()).map_err(|e| e.to_string())?;
    let slots = ctx.slots();
    let cfg = BootstrapConfig::new(slots);
    let pre = BootstrapPrecomputation::new(&ctx, cfg.clone()).map_err(|e| e.to_string())?;
    let composition = pre.composition_error(&ctx, 3);
    check!(composition < 1e-8, "stage composition deviates by {composition:e}");
    drop(pre);
    let trials = 20;
    let report = run_bootstrap_report(&params, &[cfg.clone()], trials, 11).map_err(|e| e.to_string())?;
    let r = &report[0];
    check!(r.remaining_levels == r.expected_levels, "levels {} vs configured {}", r.remaining_levels, r.expected_levels);
    check!(r.remaining_levels > 0, "no level gained");
    check!(r.max_error < 2f64.powi(-10), "max error 2^{:.2}", r.max_error.log2());
    Ok(format!(
        "{trials} ciphertexts, {slots} slots: max error 2^{:.2}, {} levels left, {:.1} s median, composition {:.1e}",
        r.max_error.log2(),
        r.remaining_levels,
        r.median_s,
        composition
    ))
}

// ---------------------------------------------------------------- criterion 8

const TABLE: [(usize, usize); 4] = [(64, 13), (512, 11), (16384, 9), (32768, 9)];

fn configuration_fidelity() -> Outcome {
    let params = presets::preset("boot-large").unwrap().params();
    params.validate().map_err(|e| e.to_string())?;
    generate_prime_chain(params.ring_degree(), params.depth, params.delta_bits, params.first_bits, params.extension_count())
        .map_err(|e| e.to_string())?;
    for (slots, levels) in TABLE {
        let cfg = presets::bootstrap_config(&params, slots);
        check!(
            cfg.remaining_levels(params.depth) == Some(levels),
            "{slots} slots leave {:?} levels, expected {levels}",
            cfg.remaining_levels(params.depth)
        );
    }
    let mut detail = "configurations for 64->13, 512->11, 16384->9, 32768->9 at [2^16, 29, 59, 4]".to_string();
    if std::env::var("ACCEPTANCE_EXTENDED").is_ok_and(|v| v == "1") {
        let configs: Vec<_> = TABLE.iter().map(|&(s, _)| presets::bootstrap_config(&params, s)).collect();
        let reports = run_bootstrap_report(&params, &configs, 20, 12).map_err(|e| e.to_string())?;
        for r in &reports {
            check!(r.meets_floor, "{} slots: precision 2^{:.2}", r.slots, r.max_error.log2());
            check!(r.remaining_levels == r.expected_levels, "{} slots: {} levels", r.slots, r.remaining_levels);
        }
        detail.push_str("; extended run passed");
    } else {
        detail.push_str("; full-scale precision run not executed (set ACCEPTANCE_EXTENDED=1)");
    }
    Ok(detail)
}

// ---------------------------------------------------------------- criterion 9

fn logistic_regression() -> Outcome {
    let params = presets::preset("desk").unwrap().params();
    let cfg = LrConfig {
        align: 8,
        ..LrConfig::default()
    };
    let still = run_lr_demo(
        &params,
        &LrConfig {
            iterations: 0,
            bootstrap: false,
            ..cfg.clone()
        },
    )
    .map_err(|e| e.to_string())?;
    check!(still.reference_weights.iter().all(|&w| w == 0.0), "zero iterations moved the reference");
    check!(still.max_weight_diff < 1e-6, "zero iterations moved the encrypted weights by {:e}", still.max_weight_diff);

    let report = run_lr_demo(&params, &cfg).map_err(|e| e.to_string())?;
    let d = report.weight_diff[cfg.iterations];
    check!(d < 0.01, "‖Δw‖∞ = {d:e} after {} iterations", cfg.iterations);
    Ok(format!(
        "1024 samples x 8 slots, {} iterations with bootstrap: ‖Δw‖∞ = {d:.2e}, w = {:?}, iteration {:.2} s, with bootstrap {:.1} s, accuracy {:.3}",
        cfg.iterations,
        report.encrypted_weights.iter().map(|w| (w * 1e4).round() / 1e4).collect::<Vec<_>>(),
        report.iteration_median_s,
        report.iteration_bootstrap_median_s,
        report.encrypted_accuracy
    ))
}

// ---------------------------------------------------------------- criterion 10

fn determinism() -> Outcome {
    let params = default_params();
    let a = dump_test_vectors(&params, 42).map_err(|e| e.to_string())?;
    let b = dump_test_vectors(&params, 42).map_err(|e| e.to_string())?;
    check!(a == b, "two runs with seed 42 differ");
    let golden = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/golden_vectors.bin")).map_err(|e| e.to_string())?;
    let fresh = dump_test_vectors(&params, 1).map_err(|e| e.to_string())?;
    check!(fresh == golden, "golden file differs from a fresh seed-1 dump");
    let r = replay(&golden).map_err(|e| e.to_string())?;
    check!(r.ok(), "golden replay: mismatched {:?}, error {:e}", r.mismatched, r.max_error);
    Ok(format!("{} identical bytes twice; golden file matches a fresh dump and replays ({} sections)", a.len(), r.sections))
}

// ----------------------------------------------------------------------------

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let only: Option<HashSet<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let secs = |s| Some(Duration::from_secs(s));
    let criteria = [
        Criterion { id: 1, name: "modular arithmetic oracle", budget: secs(30), run: modular_arithmetic },
        Criterion { id: 2, name: "NTT suite", budget: secs(60), run: ntt_suite },
        Criterion { id: 3, name: "base conversion oracle", budget: secs(60), run: base_conversion },
        Criterion { id: 4, name: "homomorphism suite", budget: secs(300), run: homomorphism },
        Criterion { id: 5, name: "fusion and batching transparency", budget: secs(120), run: fusion_and_batching },
        Criterion { id: 6, name: "digit-drop trend", budget: None, run: digit_drop },
        Criterion { id: 7, name: "desk-scale bootstrapping", budget: secs(900), run: desk_bootstrap },
        Criterion { id: 8, name: "bootstrap configuration fidelity", budget: None, run: configuration_fidelity },
        Criterion { id: 9, name: "logistic regression end to end", budget: secs(1800), run: logistic_regression },
        Criterion { id: 10, name: "determinism", budget: None, run: determinism },
    ];
    let mut failed = 0;
    for c in &criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&c.id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(d), Some(b)) if elapsed > b => Err(format!("{d}; took {:.0} s, budget {} s", elapsed.as_secs_f64(), b.as_secs())),
            (o, _) => o,
        };
        match outcome {
            Ok(d) => println!("criterion {:>2} {}: PASS ({d}) [{:.1} s]", c.id, c.name, elapsed.as_secs_f64()),
            Err(e) => {
                failed += 1;
                println!("criterion {:>2} {}: FAIL ({e}) [{:.1} s]", c.id, c.name, elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
