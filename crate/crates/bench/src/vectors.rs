//! Deterministic test vectors for golden-file regression.
//!
//! File layout: one ASCII header line
//! `rnsckks-vectors/1 seed=<u64> fingerprint=<hex> record=<parameter record>\n`
//! followed by sections, each `u32 name length, name, u64 payload length,
//! payload` (little endian). Ciphertexts and plaintexts use the library's
//! byte format; key sections are SHA-256 digests of the key polynomials.

use anyhow::{bail, ensure, Context as _, Result};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use rnsckks::client::{Ciphertext, Decryptor, Encoder, Encryptor, KeyGenerator, KeySwitchingKey, SecretKey};
use rnsckks::context::{Context, Parameters};
use rnsckks::eval::Evaluator;

use crate::micro::{max_error, random_slots};

pub const MAGIC: &str = "rnsckks-vectors/1";

/// Decrypt error tolerated when replaying operation outputs.
pub const REPLAY_TOLERANCE: f64 = 1e-4;

/// Small default set: `N = 2^7` keeps the golden file a few tens of kilobytes.
pub fn default_params() -> Parameters {
    Parameters::new(7, 2, 30, 1).toy()
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorFile {
    pub seed: u64,
    pub fingerprint: String,
    pub record: String,
    pub sections: Vec<(String, Vec<u8>)>,
}

impl VectorFile {
    pub fn section(&self, name: &str) -> Result<&[u8]> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
            .with_context(|| format!("missing section {name}"))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("{MAGIC} seed={} fingerprint={} record={}\n", self.seed, self.fingerprint, self.record).into_bytes();
        for (name, payload) in &self.sections {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(payload);
        }
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let end = bytes.iter().position(|&b| b == b'\n').context("missing header line")?;
        let header = std::str::from_utf8(&bytes[..end]).context("header is not UTF-8")?;
        let rest = header.strip_prefix(MAGIC).context("bad magic")?.trim_start();
        let (seed, rest) = rest.split_once(' ').context("truncated header")?;
        let (fingerprint, record) = rest.split_once(' ').context("truncated header")?;
        let seed = seed.strip_prefix("seed=").context("seed field")?.parse()?;
        let fingerprint = fingerprint.strip_prefix("fingerprint=").context("fingerprint field")?.to_string();
        let record = record.strip_prefix("record=").context("record field")?.to_string();

        let mut sections = Vec::new();
        let mut pos = end + 1;
        let take = |pos: &mut usize, len: usize| -> Result<&[u8]> {
            ensure!(bytes.len() - *pos >= len, "truncated section");
            let s = &bytes[*pos..*pos + len];
            *pos += len;
            Ok(s)
        };
        while pos < bytes.len() {
            let n = u32::from_le_bytes(take(&mut pos, 4)?.try_into()?) as usize;
            let name = String::from_utf8(take(&mut pos, n)?.to_vec())?;
            let len = u64::from_le_bytes(take(&mut pos, 8)?.try_into()?) as usize;
            sections.push((name, take(&mut pos, len)?.to_vec()));
        }
        Ok(Self {
            seed,
            fingerprint,
            record,
            sections,
        })
    }
}

/// Ciphertext-producing operations recorded in the file, with the cleartext
/// function each one computes.
const OPERATIONS: &[&str] = &["hadd", "pmult", "cmult", "hmult", "hsquare", "rotate1", "conjugate"];

const CONSTANT: f64 = 0.375;

fn key_digest(ksk: &KeySwitchingKey) -> Vec<u8> {
    let mut h = Sha256::new();
    for (b, a) in &ksk.digits {
        h.update(b.to_bytes());
        h.update(a.to_bytes());
    }
    h.finalize().to_vec()
}

fn complex_bytes(v: &[Complex64]) -> Vec<u8> {
    v.iter().flat_map(|z| z.re.to_le_bytes().into_iter().chain(z.im.to_le_bytes())).collect()
}

fn complex_from(bytes: &[u8]) -> Result<Vec<Complex64>> {
    ensure!(bytes.len().is_multiple_of(16), "complex vector length");
    Ok(bytes
        .chunks(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect())
}

fn expected(op: &str, x: &[Complex64], y: &[Complex64], w: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    match op {
        "hadd" => x.iter().zip(y).map(|(a, b)| a + b).collect(),
        "pmult" => x.iter().zip(w).map(|(a, b)| a * b).collect(),
        "cmult" => x.iter().map(|a| a * CONSTANT).collect(),
        "hmult" => x.iter().zip(y).map(|(a, b)| a * b).collect(),
        "hsquare" => x.iter().map(|a| a * a).collect(),
        "rotate1" => (0..n).map(|i| x[(i + 1) % n]).collect(),
        "conjugate" => x.iter().map(|a| a.conj()).collect(),
        _ => unreachable!("listed operation"),
    }
}

struct Generated {
    ctx: Context,
    sk: SecretKey,
    file: VectorFile,
}

fn generate(params: &Parameters, seed: u64) -> Result<Generated> {
    let ctx = Context::new(params.clone())?;
    let mut kg = KeyGenerator::new(&ctx, seed);
    let sk = kg.secret_key();
    let pk = kg.public_key(&sk);
    let keys = kg.evaluation_keys(&sk, &[1], ctx.slots())?;
    let enc = Encoder::new(&ctx);
    let eval = Evaluator::new(&ctx);
    let mut encryptor = Encryptor::new(&ctx, seed.wrapping_add(1));
    let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(2));
    let top = ctx.max_level();
    let n = ctx.slots();
    let (x, y, w) = (random_slots(&mut rng, n), random_slots(&mut rng, n), random_slots(&mut rng, n));
    let cx = encryptor.encrypt(&enc.encode(&x, top)?, &pk)?;
    let cy = encryptor.encrypt_sk(&enc.encode(&y, top)?, &sk)?;
    let pw = enc.encode(&w, top)?;
    let relin = keys.relin()?;

    let mut sections: Vec<(String, Vec<u8>)> = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| sections.push((name.to_string(), bytes));
    put("secret", sk.coefficients().iter().flat_map(|c| c.to_le_bytes()).collect());
    let mut h = Sha256::new();
    h.update(pk.b.to_bytes());
    h.update(pk.a.to_bytes());
    put("key.public.sha256", h.finalize().to_vec());
    put("key.relin.sha256", key_digest(relin));
    put("key.conjugation.sha256", key_digest(keys.conjugation()?));
    for (k, ksk) in &keys.galois {
        put(&format!("key.galois.{k}.sha256"), key_digest(ksk));
    }
    put("input.x", complex_bytes(&x));
    put("input.y", complex_bytes(&y));
    put("input.w", complex_bytes(&w));
    put("ct.x", cx.to_bytes());
    put("ct.y", cy.to_bytes());
    put("pt.w", pw.to_bytes());
    for &op in OPERATIONS {
        let out: Ciphertext = match op {
            "hadd" => eval.add(&cx, &cy)?,
            "pmult" => eval.mul_plain_rescale(&cx, &pw)?,
            "cmult" => eval.mul_scalar_rescale(&cx, CONSTANT)?,
            "hmult" => eval.mul_rescale(&cx, &cy, relin)?,
            "hsquare" => eval.square_rescale(&cx, relin)?,
            "rotate1" => eval.rotate(&cx, 1, &keys)?,
            "conjugate" => eval.conjugate(&cx, &keys)?,
            _ => unreachable!("listed operation"),
        };
        put(&format!("out.{op}"), out.to_bytes());
    }
    Ok(Generated {
        file: VectorFile {
            seed,
            fingerprint: ctx.fingerprint().to_string(),
            record: ctx.record(),
            sections,
        },
        ctx,
        sk,
    })
}

/// Serialized vectors for `params` and `seed`.
pub fn dump_test_vectors(params: &Parameters, seed: u64) -> Result<Vec<u8>> {
    Ok(generate(params, seed)?.file.to_bytes())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayReport {
    pub sections: usize,
    /// Sections whose bytes differ from a fresh run.
    pub mismatched: Vec<String>,
    /// Largest decrypt error of the recorded operation outputs.
    pub max_error: f64,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.mismatched.is_empty() && self.max_error < REPLAY_TOLERANCE
    }
}

/// Regenerates a recorded file from its header and compares section by
/// section; also decrypts every recorded output with the regenerated secret
/// and checks it against the recorded inputs.
pub fn replay(bytes: &[u8]) -> Result<ReplayReport> {
    let recorded = VectorFile::parse(bytes)?;
    let params = Parameters::from_record(&recorded.record)?;
    let fresh = generate(&params, recorded.seed)?;
    if fresh.file.fingerprint != recorded.fingerprint {
        bail!(
            "prime chain fingerprint changed: recorded {}, now {}",
            recorded.fingerprint,
            fresh.file.fingerprint
        );
    }
    let mut mismatched: Vec<String> = fresh
        .file
        .sections
        .iter()
        .filter(|(name, bytes)| recorded.section(name).map_or(true, |r| r != bytes.as_slice()))
        .map(|(name, _)| name.clone())
        .collect();
    mismatched.extend(
        recorded
            .sections
            .iter()
            .filter(|(name, _)| fresh.file.section(name).is_err())
            .map(|(name, _)| name.clone()),
    );

    let ctx = &fresh.ctx;
    let (enc, dec) = (Encoder::new(ctx), Decryptor::new(ctx));
    let x = complex_from(recorded.section("input.x")?)?;
    let y = complex_from(recorded.section("input.y")?)?;
    let w = complex_from(recorded.section("input.w")?)?;
    let mut worst: f64 = 0.0;
    for &op in OPERATIONS {
        let (ct, _) = Ciphertext::from_bytes(ctx, recorded.section(&format!("out.{op}"))?)?;
        let got = enc.decode(&dec.decrypt(&ct, &fresh.sk)?)?;
        worst = worst.max(max_error(&got, &expected(op, &x, &y, &w)));
    }
    Ok(ReplayReport {
        sections: recorded.sections.len(),
        mismatched,
        max_error: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trips_through_the_parser() {
        let bytes = dump_test_vectors(&default_params(), 3).unwrap();
        let f = VectorFile::parse(&bytes).unwrap();
        assert_eq!(f.seed, 3);
        assert_eq!(f.to_bytes(), bytes);
        assert!(f.record.starts_with("rnsckks/1 "));
        let r = replay(&bytes).unwrap();
        assert!(r.ok(), "{r:?}");
    }

    #[test]
    fn corrupted_sections_are_reported() {
        let bytes = dump_test_vectors(&default_params(), 4).unwrap();
        let mut f = VectorFile::parse(&bytes).unwrap();
        let (_, payload) = f.sections.iter_mut().find(|(n, _)| n == "key.relin.sha256").unwrap();
        payload[0] ^= 1;
        let r = replay(&f.to_bytes()).unwrap();
        assert_eq!(r.mismatched, vec!["key.relin.sha256".to_string()]);
    }

    #[test]
    fn truncated_files_are_rejected() {
        let bytes = dump_test_vectors(&default_params(), 5).unwrap();
        assert!(VectorFile::parse(&bytes[..bytes.len() - 3]).is_err());
        assert!(VectorFile::parse(b"nonsense\n").is_err());
    }
}
