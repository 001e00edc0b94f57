use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::client::sampling::uniform_poly;
use crate::client::{Decryptor, Encoder, Encryptor, KeyGenerator, SecretKey};
use crate::context::Parameters;
use crate::poly::centered_coefficients;

struct Fixture {
    ctx: Context,
    sk: SecretKey,
    keys: EvaluationKeys,
    enc: Encoder,
    encryptor: Encryptor,
    dec: Decryptor,
    eval: Evaluator,
}

fn fixture(dnum: usize) -> Fixture {
    let ctx = Context::new(Parameters::new(11, 5, 40, dnum).toy()).unwrap();
    let mut kg = KeyGenerator::new(&ctx, 7);
    let sk = kg.secret_key();
    let keys = kg.evaluation_keys(&sk, &[1, 2, 3, -1, 5], ctx.slots()).unwrap();
    Fixture {
        enc: Encoder::new(&ctx),
        encryptor: Encryptor::new(&ctx, 8),
        dec: Decryptor::new(&ctx),
        eval: Evaluator::new(&ctx),
        ctx,
        sk,
        keys,
    }
}

fn random_values(seed: u64, n: usize) -> Vec<Complex64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

impl Fixture {
    fn encrypt(&mut self, v: &[Complex64], level: usize) -> Ciphertext {
        let pt = self.enc.encode(v, level).unwrap();
        self.encryptor.encrypt_sk(&pt, &self.sk).unwrap()
    }

    fn decrypt(&self, ct: &Ciphertext) -> Vec<Complex64> {
        self.enc.decode(&self.dec.decrypt(ct, &self.sk).unwrap()).unwrap()
    }

    fn max_error(&self, ct: &Ciphertext, want: &[Complex64]) -> f64 {
        self.decrypt(ct)
            .iter()
            .zip(want)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

#[test]
fn arithmetic_matches_cleartext() {
    let mut f = fixture(2);
    let n = f.ctx.slots();
    let (x, y) = (random_values(1, n), random_values(2, n));
    let (cx, cy) = (f.encrypt(&x, 5), f.encrypt(&y, 5));
    let e = &f.eval;
    let relin = f.keys.relin().unwrap();

    let sum: Vec<_> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
    assert!(f.max_error(&e.add(&cx, &cy).unwrap(), &sum) < 1e-6);
    let diff: Vec<_> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
    assert!(f.max_error(&e.sub(&cx, &cy).unwrap(), &diff) < 1e-6);

    let prod: Vec<_> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
    let m = e.mul_rescale(&cx, &cy, relin).unwrap();
    assert_eq!(m.level, 4);
    assert!(f.max_error(&m, &prod) < 1e-5);
    let sq: Vec<_> = x.iter().map(|a| a * a).collect();
    assert!(f.max_error(&e.square_rescale(&cx, relin).unwrap(), &sq) < 1e-5);

    let pt = f.enc.encode(&y, 5).unwrap();
    assert!(f.max_error(&e.add_plain(&cx, &pt).unwrap(), &sum) < 1e-6);
    assert!(f.max_error(&e.mul_plain_rescale(&cx, &pt).unwrap(), &prod) < 1e-5);

    let shifted: Vec<_> = x.iter().map(|a| a + 0.75).collect();
    assert!(f.max_error(&e.add_scalar(&cx, 0.75).unwrap(), &shifted) < 1e-6);
    let scaled: Vec<_> = x.iter().map(|a| a * -1.5).collect();
    let s = e.mul_scalar_rescale(&cx, -1.5).unwrap();
    assert!((s.scale - f.ctx.scale_at(4)).abs() / s.scale < 1e-12);
    assert!(f.max_error(&s, &scaled) < 1e-5);

    let times_i: Vec<_> = x.iter().map(|a| a * Complex64::i()).collect();
    assert!(f.max_error(&e.mul_by_i(&cx), &times_i) < 1e-6);
    let negated: Vec<_> = x.iter().map(|a| -a).collect();
    assert!(f.max_error(&e.neg(&cx), &negated) < 1e-6);
}

#[test]
fn rotation_and_conjugation() {
    let mut f = fixture(3);
    let n = f.ctx.slots();
    let x = random_values(3, n);
    let cx = f.encrypt(&x, 4);
    for r in [1i64, 3, -1] {
        let want: Vec<_> = (0..n).map(|i| x[(i as i64 + r).rem_euclid(n as i64) as usize]).collect();
        let rot = f.eval.rotate(&cx, r, &f.keys).unwrap();
        assert!(f.max_error(&rot, &want) < 1e-6, "rotation {r}");
    }
    let conj: Vec<_> = x.iter().map(|a| a.conj()).collect();
    assert!(f.max_error(&f.eval.conjugate(&cx, &f.keys).unwrap(), &conj) < 1e-6);
    assert!(matches!(f.eval.rotate(&cx, 4, &f.keys), Err(Error::MissingKey(_))));
}

#[test]
fn hoisted_rotations_decrypt_like_plain_ones() {
    let mut f = fixture(2);
    let n = f.ctx.slots();
    let x = random_values(4, n);
    let cx = f.encrypt(&x, 3);
    let offsets = [1i64, 2, 5, 0];
    let many = f.eval.rotate_many(&cx, &offsets, &f.keys).unwrap();
    for (&r, h) in offsets.iter().zip(&many) {
        let plain = f.eval.rotate(&cx, r, &f.keys).unwrap();
        let a = f.decrypt(h);
        let b = f.decrypt(&plain);
        let d = a.iter().zip(&b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        assert!(d < 1e-6, "offset {r}: {d}");
    }
}

#[test]
fn multiplication_paths_are_bit_identical() {
    let mut f = fixture(3);
    let n = f.ctx.slots();
    let (cx, cy) = (f.encrypt(&random_values(5, n), 5), f.encrypt(&random_values(6, n), 5));
    let relin = f.keys.relin().unwrap();
    let a = f.eval.mul(&cx, &cy, relin).unwrap();
    let b = f.eval.mul_prescaled(&cx, &cy, relin).unwrap();
    assert_eq!(a, b);
    let sq = f.eval.square(&cx, relin).unwrap();
    assert_eq!(sq, f.eval.mul(&cx, &cx, relin).unwrap());
    let (u0, u1) = key_switch_unfused(&f.ctx, &cx.c1, relin).unwrap();
    let (k0, k1) = key_switch(&f.ctx, &cx.c1, relin).unwrap();
    assert_eq!((u0, u1), (k0, k1));
}

#[test]
fn results_do_not_depend_on_limb_batch() {
    let mut f = fixture(2);
    let n = f.ctx.slots();
    let (cx, cy) = (f.encrypt(&random_values(7, n), 5), f.encrypt(&random_values(8, n), 5));
    let relin = f.keys.relin().unwrap();
    let reference = f.eval.mul_rescale(&cx, &cy, relin).unwrap();
    for batch in [1, 2, 4] {
        let e = Evaluator::new(&f.ctx.with_limb_batch(batch));
        assert_eq!(e.mul_rescale(&cx, &cy, relin).unwrap(), reference, "batch {batch}");
    }
}

#[test]
fn fused_weighted_sum_is_exact() {
    let mut f = fixture(2);
    let n = f.ctx.slots();
    let cts: Vec<Ciphertext> = (0..5).map(|i| f.encrypt(&random_values(10 + i, n), 4)).collect();
    let refs: Vec<&Ciphertext> = cts.iter().collect();
    let coeffs = [0.5, -1.25, 3.0, 0.0, 1e-3];
    let weights: Vec<Weight> = coeffs.iter().map(|&c| Weight::Scalar(c)).collect();
    let fused = f.eval.fused_weighted_sum(&refs, &weights).unwrap();
    let mut naive = f.eval.mul_scalar(&cts[0], coeffs[0]).unwrap();
    for (ct, &c) in cts.iter().zip(&coeffs).skip(1) {
        naive = f.eval.add(&naive, &f.eval.mul_scalar(ct, c).unwrap()).unwrap();
    }
    assert_eq!(fused.c0, naive.c0);
    assert_eq!(fused.c1, naive.c1);
    assert_eq!(fused.scale, naive.scale);

    let pts: Vec<Plaintext> = (0..5).map(|i| f.enc.encode(&random_values(20 + i, n), 4).unwrap()).collect();
    let weights: Vec<Weight> = pts.iter().map(Weight::Plain).collect();
    let fused = f.eval.fused_weighted_sum(&refs, &weights).unwrap();
    let mut naive = f.eval.mul_plain(&cts[0], &pts[0]).unwrap();
    for (ct, pt) in cts.iter().zip(&pts).skip(1) {
        naive = f.eval.add(&naive, &f.eval.mul_plain(ct, pt).unwrap()).unwrap();
    }
    assert_eq!(fused.c0, naive.c0);
    assert_eq!(fused.c1, naive.c1);

    let mixed = [Weight::Scalar(1.0), Weight::Plain(&pts[0])];
    assert!(f.eval.fused_weighted_sum(&refs[..2], &mixed).is_err());
}

#[test]
fn adding_across_levels_adjusts_the_higher_operand() {
    let mut f = fixture(2);
    let n = f.ctx.slots();
    let (x, y) = (random_values(30, n), random_values(31, n));
    let cx = f.encrypt(&x, 5);
    let cy = f.encrypt(&y, 5);
    let relin = f.keys.relin().unwrap();
    let low = f.eval.mul_rescale(&cx, &cy, relin).unwrap();
    let low = f.eval.mul_scalar_rescale(&low, 1.0).unwrap();
    assert_eq!(low.level, 3);
    let high = f.encrypt(&x, 5);
    let s = f.eval.add(&high, &low).unwrap();
    assert_eq!(s.level, 3);
    assert_eq!(s.scale, low.scale);
    let want: Vec<_> = x.iter().zip(&y).map(|(a, b)| a * b + a).collect();
    assert!(f.max_error(&s, &want) < 1e-5);

    // equal level, scales differ by a non-integer ratio
    let mut odd = f.encrypt(&x, 3);
    odd.scale *= 1.37;
    assert!(matches!(f.eval.sub(&odd, &low), Err(Error::ScaleMismatch(..))));
    // integer ratio works at the same level; halving the declared scale doubles the values
    let mut double = f.encrypt(&x, 3);
    double.scale = low.scale / 2.0;
    let want: Vec<_> = x.iter().zip(&y).map(|(a, b)| a * b + 2.0 * a).collect();
    let r = f.eval.add(&low, &double).unwrap();
    assert!(f.max_error(&r, &want) < 1e-4);
}

#[test]
fn lowering_a_level_corrects_small_scale_differences() {
    let mut f = fixture(2);
    let n = f.ctx.slots();
    let x: Vec<Complex64> = random_values(32, n).iter().map(|v| v * 1000.0).collect();
    let mut ct = f.encrypt(&x, 5);
    let eps = 5e-10;
    ct.scale *= 1.0 + eps;
    assert!(scales_match(ct.scale, f.ctx.scale_at(5)));
    let declared: Vec<_> = x.iter().map(|v| v / (1.0 + eps)).collect();
    let target = f.ctx.scale_at(3);
    let low = f.eval.adjust(&ct, 3, target).unwrap();
    assert_eq!((low.level, low.scale), (3, target));
    // the slot values keep the declared scale instead of absorbing the mismatch
    assert!(f.max_error(&low, &declared) < 1e-7);
    assert!(f.max_error(&f.eval.drop_to_level(&ct, 3).unwrap(), &declared) < 1e-7);
}

#[test]
fn mod_down_inverts_multiplication_by_p() {
    let f = fixture(3);
    let ctx = &f.ctx;
    let level = 3;
    let idx: Vec<usize> = (0..=level).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(40);
    let x = uniform_poly(&mut rng, ctx, &idx, Format::Eval);
    let mut limbs: Vec<Limb> = x.limbs().to_vec();
    for l in &mut limbs {
        let m = ctx.modulus(l.modulus_index);
        let s = m.shoup(ctx.p_mod_q()[l.modulus_index]);
        l.coeffs.iter_mut().for_each(|c| *c = m.shoup_mul(*c, s));
    }
    for i in ctx.extension_indices() {
        limbs.push(Limb { modulus_index: i, coeffs: vec![0; ctx.n()] });
    }
    let px = RnsPoly::from_limbs(ctx, limbs, Format::Eval).unwrap();
    assert_eq!(mod_down(ctx, &px).unwrap(), x);
    assert_eq!(mod_down_unfused(ctx, &px).unwrap(), x);
}

#[test]
fn mod_up_agrees_with_integer_lift() {
    let f = fixture(3);
    let ctx = &f.ctx;
    let level = 4;
    let idx: Vec<usize> = (0..=level).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(41);
    let x = uniform_poly(&mut rng, ctx, &idx, Format::Coeff);
    for (j, digit) in ctx.digit_bases(level).into_iter().enumerate() {
        let up = mod_up(ctx, &x, digit.clone(), j).unwrap();
        assert_eq!(up.origin_digit, j);
        let q_d: BigInt = digit.clone().map(|i| BigInt::from(ctx.modulus(i).value())).product();
        let digit_poly = x.select(&digit.clone().collect::<Vec<_>>()).unwrap();
        // reconstruct the digit's value in [0, Q_j) via CRT on its own primes
        let residues: Vec<Vec<u64>> = digit_poly.limbs().iter().map(|l| l.coeffs.clone()).collect();
        for c in [0usize, 1, ctx.n() - 1] {
            let mut v = BigInt::zero();
            for (k, i) in digit.clone().enumerate() {
                let q = BigInt::from(ctx.modulus(i).value());
                let rest = &q_d / &q;
                let inv = rest.modpow(&(&q - 2), &q);
                v += BigInt::from(residues[k][c]) * &rest * inv;
            }
            v %= &q_d;
            for l in up.poly.limbs() {
                let p = BigInt::from(ctx.modulus(l.modulus_index).value());
                let got = BigInt::from(l.coeffs[c]);
                // fast conversion may add a small multiple of Q_j
                let ok = (0..=digit.len()).any(|e| ((&v + BigInt::from(e) * &q_d - &got) % &p).is_zero());
                assert!(ok, "digit {j} limb {} coeff {c}", l.modulus_index);
            }
        }
    }
}

#[test]
fn key_switch_error_is_small_for_every_digit_count() {
    let mut norms = Vec::new();
    for dnum in [1usize, 2, 6] {
        let mut f = fixture(dnum);
        let n = f.ctx.slots();
        let cx = f.encrypt(&random_values(50, n), 5);
        let rot = f.eval.rotate(&cx, 1, &f.keys).unwrap();
        // compare the rotated noise polynomial against a fresh decryption
        let want: Vec<_> = (0..n).map(|i| random_values(50, n)[(i + 1) % n]).collect();
        let pt = f.enc.encode(&want, 5).unwrap();
        let diff = f.dec.decrypt(&rot, &f.sk).unwrap().poly.sub(&f.ctx, &pt.poly.clone().into_eval(&f.ctx)).unwrap();
        let coeffs = centered_coefficients(&f.ctx, &diff).unwrap();
        let max = coeffs.iter().map(|c| c.to_f64().unwrap().abs()).fold(0.0, f64::max);
        norms.push(max);
    }
    assert!(norms.iter().all(|&m| m < 2f64.powi(20)), "{norms:?}");
}
