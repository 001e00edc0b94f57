//! Scheme parameters and every table precomputed from them.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::sync::{Arc, RwLock};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use sha2::{Digest, Sha256};

use crate::arith::{generate_prime_chain, Modulus, ShoupConstant, MAX_PRIME_BITS};
use crate::error::{Error, Result};
use crate::ntt::{NttTable, NttVariant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum SecurityProfile {
    /// No lattice-security check; meant for tests and experiments.
    Toy,
    /// Enforces the usual 128-bit classical bounds on `log2(QP)` for ternary
    /// secrets.
    #[default]
    Classical128,
}

impl SecurityProfile {
    fn tag(self) -> &'static str {
        match self {
            SecurityProfile::Toy => "toy",
            SecurityProfile::Classical128 => "128",
        }
    }

    fn from_tag(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(SecurityProfile::Toy),
            "128" => Ok(SecurityProfile::Classical128),
            _ => Err(Error::Malformed(format!("unknown security tag {s}"))),
        }
    }
}

/// Largest admissible `log2(QP)` at 128-bit classical security (ternary
/// secret), by ring degree.
pub fn max_log_qp_128(ring_degree: usize) -> Option<u32> {
    Some(match ring_degree {
        1024 => 27,
        2048 => 54,
        4096 => 109,
        8192 => 218,
        16384 => 438,
        32768 => 881,
        65536 => 1747,
        _ => return None,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Parameters {
    pub log_n: u32,
    /// Maximum multiplicative depth `L`; the chain has `L + 1` primes.
    pub depth: usize,
    pub delta_bits: u32,
    /// Width of the base prime `q_0`.
    pub first_bits: u32,
    pub dnum: usize,
    pub slots: usize,
    pub security: SecurityProfile,
}

impl Parameters {
    /// Fully packed parameters with a 60-bit `q_0` and the 128-bit profile.
    pub fn new(log_n: u32, depth: usize, delta_bits: u32, dnum: usize) -> Self {
        Self {
            log_n,
            depth,
            delta_bits,
            first_bits: MAX_PRIME_BITS,
            dnum,
            slots: 1usize << log_n.saturating_sub(1),
            security: SecurityProfile::Classical128,
        }
    }

    pub fn toy(mut self) -> Self {
        self.security = SecurityProfile::Toy;
        self
    }

    pub fn with_slots(mut self, slots: usize) -> Self {
        self.slots = slots;
        self
    }

    pub fn with_first_bits(mut self, bits: u32) -> Self {
        self.first_bits = bits;
        self
    }

    pub fn ring_degree(&self) -> usize {
        1usize << self.log_n
    }

    /// Number of extension primes, `ceil((L + 1) / dnum)`.
    pub fn extension_count(&self) -> usize {
        (self.depth + 1).div_ceil(self.dnum)
    }

    pub fn digit_size(&self) -> usize {
        (self.depth + 1).div_ceil(self.dnum)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameters(m));
        if !(1..=17).contains(&self.log_n) {
            return bad(format!("log N = {} outside [1, 17]", self.log_n));
        }
        if self.dnum == 0 || self.dnum > self.depth + 1 {
            return bad(format!("dnum = {} outside [1, L+1]", self.dnum));
        }
        if self.delta_bits > MAX_PRIME_BITS || self.first_bits > MAX_PRIME_BITS {
            return bad("prime widths above 60 bits".into());
        }
        if self.first_bits < self.delta_bits {
            return bad("q0 must be at least as wide as the scale".into());
        }
        let half = self.ring_degree() / 2;
        if !self.slots.is_power_of_two() || self.slots > half.max(1) {
            return Err(Error::InvalidSlots(self.slots));
        }
        Ok(())
    }

    /// One-line self-describing record, without the prime fingerprint.
    pub fn record(&self) -> String {
        format!(
            "rnsckks/1 logn={} depth={} delta={} q0={} dnum={} slots={} security={}",
            self.log_n,
            self.depth,
            self.delta_bits,
            self.first_bits,
            self.dnum,
            self.slots,
            self.security.tag()
        )
    }

    pub fn from_record(record: &str) -> Result<Self> {
        let mut fields = record.split_whitespace();
        if fields.next() != Some("rnsckks/1") {
            return Err(Error::Malformed("missing record magic".into()));
        }
        let mut map = HashMap::new();
        for f in fields {
            let (k, v) = f
                .split_once('=')
                .ok_or_else(|| Error::Malformed(format!("field {f}")))?;
            map.insert(k, v);
        }
        let get = |k: &str| -> Result<&str> {
            map.get(k)
                .copied()
                .ok_or_else(|| Error::Malformed(format!("missing {k}")))
        };
        let num = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Malformed(format!("bad {k}")))
        };
        Ok(Self {
            log_n: num("logn")? as u32,
            depth: num("depth")? as usize,
            delta_bits: num("delta")? as u32,
            first_bits: num("q0")? as u32,
            dnum: num("dnum")? as usize,
            slots: num("slots")? as usize,
            security: SecurityProfile::from_tag(get("security")?)?,
        })
    }
}

/// Tables for fast base conversion out of one contiguous source range.
#[derive(Debug)]
pub struct ConversionTable {
    pub source: Range<usize>,
    /// `[ (Q'/q_i)^{-1} ]_{q_i}` for each source prime.
    pub q_hat_inv: Vec<ShoupConstant>,
    /// `q_hat[t][i] = [Q'/q_i]_{m_t}` for every modulus `m_t` of the context.
    pub q_hat: Vec<Vec<u64>>,
}

/// CRT reconstruction data for the chain prefix `q_0..q_level`.
#[derive(Debug)]
pub struct CrtLevel {
    pub product: BigUint,
    /// `(Q/q_i) * [(Q/q_i)^{-1}]_{q_i}` for each prime.
    pub basis: Vec<BigUint>,
}

#[derive(Debug)]
struct Tables {
    params: Parameters,
    fingerprint: String,
    moduli: Vec<Modulus>,
    ntt: Vec<NttTable>,
    chain_len: usize,
    scale_by_level: Vec<f64>,
    /// `[q_l^{-1}]_{q_i}` for `i < l`, indexed `[l][i]`.
    rescale_inv: Vec<Vec<ShoupConstant>>,
    p_mod_q: Vec<u64>,
    p_inv_mod_q: Vec<ShoupConstant>,
    conversions: HashMap<(usize, usize), Arc<ConversionTable>>,
    crt: Vec<CrtLevel>,
    galois: RwLock<HashMap<usize, Arc<Vec<usize>>>>,
}

/// Immutable, cheaply clonable handle on all precomputed tables.
#[derive(Clone, Debug)]
pub struct Context {
    tables: Arc<Tables>,
    limb_batch: usize,
    ntt_variant: NttVariant,
}

impl PartialEq for Context {
    fn eq(&self, other: &Self) -> bool {
        self.tables.fingerprint == other.tables.fingerprint
    }
}

impl Context {
    pub fn new(params: Parameters) -> Result<Self> {
        params.validate()?;
        let n = params.ring_degree();
        let k = params.extension_count();
        let primes = generate_prime_chain(
            n,
            params.depth,
            params.delta_bits,
            params.first_bits,
            k,
        )?;
        let chain_len = primes.chain.len();
        let all: Vec<u64> = primes.chain.iter().chain(&primes.extension).copied().collect();
        let moduli = all
            .iter()
            .map(|&p| Modulus::new(p))
            .collect::<Result<Vec<_>>>()?;

        let big = |range: Range<usize>| -> BigUint {
            all[range].iter().fold(BigUint::one(), |acc, &p| acc * p)
        };
        let p_big = big(chain_len..all.len());
        let ds = params.digit_size();
        let largest_digit = (0..params.dnum)
            .map(|j| big(j * ds..((j + 1) * ds).min(chain_len)))
            .max()
            .unwrap_or_default();
        if p_big <= largest_digit {
            return Err(Error::InvalidParameters(
                "extension product P does not exceed the largest digit product".into(),
            ));
        }
        let log_qp = (big(0..all.len()).bits()) as u32;
        if params.security == SecurityProfile::Classical128 {
            match max_log_qp_128(n) {
                Some(bound) if log_qp <= bound => {}
                Some(bound) => {
                    return Err(Error::Insecure(format!(
                        "log QP = {log_qp} exceeds {bound} for N = {n}"
                    )))
                }
                None => return Err(Error::Insecure(format!("no bound tabulated for N = {n}"))),
            }
        }

        let ntt = moduli
            .iter()
            .map(|&m| NttTable::new(m, n))
            .collect::<Result<Vec<_>>>()?;

        let mut scale_by_level = vec![0.0; chain_len];
        scale_by_level[chain_len - 1] = (params.delta_bits as f64).exp2();
        for l in (1..chain_len).rev() {
            let s = scale_by_level[l];
            scale_by_level[l - 1] = s * s / all[l] as f64;
        }

        let mut rescale_inv = vec![Vec::new()];
        for l in 1..chain_len {
            let row = (0..l)
                .map(|i| Ok(moduli[i].shoup(moduli[i].inv(all[l])?)))
                .collect::<Result<Vec<_>>>()?;
            rescale_inv.push(row);
        }

        let mut p_mod_q = Vec::with_capacity(chain_len);
        let mut p_inv_mod_q = Vec::with_capacity(chain_len);
        for m in &moduli[..chain_len] {
            let r = (&p_big % m.value()).to_u64().unwrap_or(0);
            p_mod_q.push(r);
            p_inv_mod_q.push(m.shoup(m.inv(r)?));
        }

        let mut ranges: Vec<(usize, usize)> = Vec::new();
        for level in 0..chain_len {
            for r in digit_ranges(level, ds) {
                ranges.push((r.start, r.len()));
            }
        }
        ranges.push((chain_len, k));
        if chain_len > 1 {
            ranges.push((0, 1));
        }
        ranges.sort_unstable();
        ranges.dedup();
        let mut conversions = HashMap::new();
        for (start, len) in ranges {
            let table = conversion_table(&moduli, start..start + len)?;
            conversions.insert((start, len), Arc::new(table));
        }

        let crt = (0..chain_len)
            .map(|level| crt_level(&all[..=level]))
            .collect();

        let record = params.record();
        let fingerprint = fingerprint(&record, &all);
        Ok(Self {
            tables: Arc::new(Tables {
                params,
                fingerprint,
                moduli,
                ntt,
                chain_len,
                scale_by_level,
                rescale_inv,
                p_mod_q,
                p_inv_mod_q,
                conversions,
                crt,
                galois: RwLock::new(HashMap::new()),
            }),
            limb_batch: 0,
            ntt_variant: NttVariant::Flat,
        })
    }

    /// Same tables, different parallel granularity (`0` means all limbs in one
    /// task group).
    pub fn with_limb_batch(&self, limb_batch: usize) -> Self {
        Self {
            limb_batch,
            ..self.clone()
        }
    }

    pub fn with_ntt_variant(&self, variant: NttVariant) -> Self {
        Self {
            ntt_variant: variant,
            ..self.clone()
        }
    }

    pub fn limb_batch(&self) -> usize {
        self.limb_batch
    }

    /// Limbs handled by each parallel task.
    pub fn limb_chunk(&self) -> usize {
        if self.limb_batch == 0 {
            self.tables.moduli.len()
        } else {
            self.limb_batch
        }
    }

    pub fn ntt_variant(&self) -> NttVariant {
        self.ntt_variant
    }

    pub fn params(&self) -> &Parameters {
        &self.tables.params
    }

    pub fn n(&self) -> usize {
        self.tables.params.ring_degree()
    }

    pub fn max_level(&self) -> usize {
        self.tables.chain_len - 1
    }

    pub fn slots(&self) -> usize {
        self.tables.params.slots
    }

    pub fn chain_len(&self) -> usize {
        self.tables.chain_len
    }

    pub fn extension_len(&self) -> usize {
        self.tables.moduli.len() - self.tables.chain_len
    }

    /// Modulus indices of the extension primes.
    pub fn extension_indices(&self) -> Range<usize> {
        self.tables.chain_len..self.tables.moduli.len()
    }

    pub fn moduli(&self) -> &[Modulus] {
        &self.tables.moduli
    }

    pub fn modulus(&self, index: usize) -> &Modulus {
        &self.tables.moduli[index]
    }

    pub fn chain_primes(&self) -> Vec<u64> {
        self.tables.moduli[..self.tables.chain_len]
            .iter()
            .map(|m| m.value())
            .collect()
    }

    pub fn extension_primes(&self) -> Vec<u64> {
        self.tables.moduli[self.tables.chain_len..]
            .iter()
            .map(|m| m.value())
            .collect()
    }

    pub fn ntt_table(&self, index: usize) -> &NttTable {
        &self.tables.ntt[index]
    }

    pub fn scale_at(&self, level: usize) -> f64 {
        self.tables.scale_by_level[level]
    }

    pub fn scale_by_level(&self) -> &[f64] {
        &self.tables.scale_by_level
    }

    /// `[q_level^{-1}]_{q_i}` for `i < level`.
    pub fn rescale_factors(&self, level: usize) -> &[ShoupConstant] {
        &self.tables.rescale_inv[level]
    }

    pub fn p_mod_q(&self) -> &[u64] {
        &self.tables.p_mod_q
    }

    pub fn p_inv_mod_q(&self) -> &[ShoupConstant] {
        &self.tables.p_inv_mod_q
    }

    pub fn digit_size(&self) -> usize {
        self.tables.params.digit_size()
    }

    /// Active key-switching digits at `level`, as ranges of chain indices.
    pub fn digit_bases(&self, level: usize) -> Vec<Range<usize>> {
        digit_ranges(level, self.digit_size())
    }

    pub fn conversion(&self, source: Range<usize>) -> Result<Arc<ConversionTable>> {
        self.tables
            .conversions
            .get(&(source.start, source.len()))
            .cloned()
            .ok_or_else(|| {
                Error::InvalidParameters(format!("no conversion table for base {source:?}"))
            })
    }

    pub fn crt(&self, level: usize) -> &CrtLevel {
        &self.tables.crt[level]
    }

    pub fn fingerprint(&self) -> &str {
        &self.tables.fingerprint
    }

    /// Parameter record followed by the prime fingerprint.
    pub fn record(&self) -> String {
        format!("{} primes={}", self.tables.params.record(), self.tables.fingerprint)
    }

    /// Checks that a serialized record was produced by an identical context.
    pub fn check_record(&self, record: &str) -> Result<()> {
        if record.trim() == self.record() {
            Ok(())
        } else {
            Err(Error::ContextMismatch(record.trim().to_string()))
        }
    }

    /// Evaluation-form index map of `X -> X^k`: `out[i] = in[map[i]]`.
    pub fn galois_eval_map(&self, k: usize) -> Result<Arc<Vec<usize>>> {
        let n = self.n();
        if k.is_multiple_of(2) {
            return Err(Error::InvalidGaloisExponent(k));
        }
        let k = k % (2 * n);
        if let Some(m) = self.tables.galois.read().unwrap().get(&k) {
            return Ok(m.clone());
        }
        let log_n = n.trailing_zeros();
        let br = |x: usize| if log_n == 0 { 0 } else { x.reverse_bits() >> (usize::BITS - log_n) };
        let mask = 2 * n - 1;
        let map: Vec<usize> = (0..n)
            .map(|i| {
                let e = ((2 * br(i) + 1) * k) & mask;
                br((e - 1) / 2)
            })
            .collect();
        let map = Arc::new(map);
        self.tables
            .galois
            .write()
            .unwrap()
            .insert(k, map.clone());
        Ok(map)
    }
}

pub(crate) fn digit_ranges(level: usize, digit_size: usize) -> Vec<Range<usize>> {
    let limbs = level + 1;
    (0..limbs.div_ceil(digit_size))
        .map(|j| j * digit_size..((j + 1) * digit_size).min(limbs))
        .collect()
}

fn conversion_table(moduli: &[Modulus], source: Range<usize>) -> Result<ConversionTable> {
    let mut q_hat_inv = Vec::with_capacity(source.len());
    for i in source.clone() {
        let m = &moduli[i];
        let mut prod = 1u64;
        for j in source.clone().filter(|&j| j != i) {
            prod = m.barrett_mul(prod, m.reduce_u64(moduli[j].value()));
        }
        q_hat_inv.push(m.shoup(m.inv(prod)?));
    }
    let q_hat = moduli
        .iter()
        .map(|t| {
            source
                .clone()
                .map(|i| {
                    source
                        .clone()
                        .filter(|&j| j != i)
                        .fold(1u64, |acc, j| t.barrett_mul(acc, t.reduce_u64(moduli[j].value())))
                })
                .collect()
        })
        .collect();
    Ok(ConversionTable {
        source,
        q_hat_inv,
        q_hat,
    })
}

fn crt_level(primes: &[u64]) -> CrtLevel {
    let product = primes.iter().fold(BigUint::one(), |acc, &p| acc * p);
    let basis = primes
        .iter()
        .map(|&p| {
            let q_hat = &product / p;
            let r = (&q_hat % p).to_u64().unwrap_or(0);
            let m = Modulus::new(p).expect("chain primes are valid moduli");
            let inv = m.inv(r).expect("chain primes are coprime");
            let b = q_hat * inv;
            debug_assert!(!b.is_zero());
            b
        })
        .collect();
    CrtLevel { product, basis }
}

fn fingerprint(record: &str, primes: &[u64]) -> String {
    let mut h = Sha256::new();
    h.update(record.as_bytes());
    for p in primes {
        h.update(p.to_le_bytes());
    }
    let digest = h.finalize();
    let mut s = String::with_capacity(16);
    for b in &digest[..8] {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extension_count_rule() {
        assert_eq!(Parameters::new(16, 29, 59, 4).extension_count(), 8);
        let ctx = Context::new(Parameters::new(13, 2, 40, 1).toy()).unwrap();
        assert_eq!(ctx.chain_len(), 3);
        assert_eq!(ctx.extension_len(), 3);
    }

    #[test]
    fn digit_partition() {
        let p = Parameters::new(16, 29, 59, 4);
        let ds = p.digit_size();
        assert_eq!(ds, 8);
        let sizes: Vec<usize> = digit_ranges(29, ds).iter().map(|r| r.len()).collect();
        assert_eq!(sizes, vec![8, 8, 8, 6]);
        assert_eq!(digit_ranges(7, ds).len(), 1);
        assert_eq!(digit_ranges(8, ds).len(), 2);
        let counts: Vec<usize> = (0..30).map(|l| digit_ranges(l, ds).len()).collect();
        assert!(counts.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn conversion_tables_are_consistent() {
        let ctx = Context::new(Parameters::new(10, 5, 30, 2).toy()).unwrap();
        for r in ctx.digit_bases(5) {
            let t = ctx.conversion(r.clone()).unwrap();
            for (k, i) in r.clone().enumerate() {
                let m = ctx.modulus(i);
                assert_eq!(m.barrett_mul(t.q_hat[i][k], t.q_hat_inv[k].operand), 1);
            }
        }
    }

    #[test]
    fn scale_recurrence() {
        let ctx = Context::new(Parameters::new(12, 4, 36, 5).toy()).unwrap();
        let q = ctx.chain_primes();
        let s = ctx.scale_by_level();
        assert_eq!(s[4], 2f64.powi(36));
        for l in 1..5 {
            assert_eq!(s[l - 1], s[l] * s[l] / q[l] as f64);
        }
    }

    #[test]
    fn security_and_headroom_checks() {
        assert!(matches!(
            Context::new(Parameters::new(12, 10, 40, 2)),
            Err(Error::Insecure(_))
        ));
        assert!(Context::new(Parameters::new(13, 1, 40, 2)).is_ok());
        assert!(Parameters::new(12, 3, 40, 0).validate().is_err());
        assert!(Parameters::new(12, 3, 40, 5).validate().is_err());
    }

    #[test]
    fn deterministic_and_record_roundtrip() {
        let p = Parameters::new(11, 3, 30, 2).toy().with_slots(64);
        let a = Context::new(p.clone()).unwrap();
        let b = Context::new(p.clone()).unwrap();
        assert_eq!(a.chain_primes(), b.chain_primes());
        assert_eq!(a.record(), b.record());
        assert_eq!(Parameters::from_record(&p.record()).unwrap(), p);
        assert!(a.check_record(&b.record()).is_ok());
        let other = Context::new(Parameters::new(11, 3, 31, 2).toy()).unwrap();
        assert!(a.check_record(&other.record()).is_err());
    }

    #[test]
    fn crt_basis_is_idempotent() {
        let ctx = Context::new(Parameters::new(10, 3, 30, 2).toy()).unwrap();
        let q = ctx.chain_primes();
        let crt = ctx.crt(3);
        for (i, b) in crt.basis.iter().enumerate() {
            for (j, &p) in q.iter().enumerate() {
                let r = (b % p).to_u64().unwrap();
                assert_eq!(r, u64::from(i == j));
            }
        }
    }
}
