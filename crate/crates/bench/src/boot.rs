//! Bootstrapping wall time, precision and remaining levels per slot count.

use std::time::Instant;

use anyhow::{ensure, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use rnsckks::bootstrap::{BootstrapConfig, BootstrapPrecomputation, Bootstrapper};
use rnsckks::client::{Decryptor, Encoder, Encryptor, KeyGenerator};
use rnsckks::context::{Context, Parameters};

use crate::micro::{max_error, random_slots};
use crate::stats::summarize;

/// Frozen precision floor: bootstrapped slots must be within `2^-10`.
pub const PRECISION_FLOOR_BITS: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BootstrapReport {
    pub log_n: u32,
    pub depth: usize,
    pub delta_bits: u32,
    pub dnum: usize,
    pub fingerprint: String,
    pub slots: usize,
    pub trials: usize,
    pub median_s: f64,
    /// Median time in microseconds per `slots · remaining_levels`.
    pub amortized_us: f64,
    pub max_error: f64,
    /// `-log2(max_error)`.
    pub precision_bits: f64,
    pub remaining_levels: usize,
    /// Level promised by the configuration.
    pub expected_levels: usize,
    pub meets_floor: bool,
}

/// `time / (slots · levels)` in microseconds.
pub fn amortized_us(seconds: f64, slots: usize, levels: usize) -> f64 {
    seconds * 1e6 / (slots * levels) as f64
}

/// Bootstraps `trials` random ciphertexts per configuration. Key generation
/// and precomputation are excluded from the timings.
pub fn run_bootstrap_report(
    params: &Parameters,
    configs: &[BootstrapConfig],
    trials: usize,
    seed: u64,
) -> Result<Vec<BootstrapReport>> {
    ensure!(trials >= 1, "at least one trial");
    let ctx = Context::new(params.clone())?;
    let mut kg = KeyGenerator::new(&ctx, seed);
    let sk = kg.secret_key();
    let (enc, dec) = (Encoder::new(&ctx), Decryptor::new(&ctx));
    let mut encryptor = Encryptor::new(&ctx, seed.wrapping_add(1));
    let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(2));
    let mut reports = Vec::new();
    for cfg in configs {
        let expected = cfg.remaining_levels(ctx.max_level()).unwrap_or(0);
        let pre = BootstrapPrecomputation::new(&ctx, cfg.clone())?;
        let keys = pre.generate_keys(&ctx, &mut kg, &sk)?;
        let boot = Bootstrapper::new(&ctx, pre)?;
        // with an input shrink the message must sit one level above the bottom
        let input_level = usize::from(cfg.input_shrink_bits > 0);
        let mut times = Vec::with_capacity(trials);
        let mut worst: f64 = 0.0;
        let mut level = 0;
        for t in 0..trials {
            let z = random_slots(&mut rng, cfg.slots);
            let ct = encryptor.encrypt_sk(&enc.encode(&z, input_level)?, &sk)?;
            let start = Instant::now();
            let out = boot.bootstrap(&ct, &keys)?;
            times.push(start.elapsed().as_secs_f64());
            level = out.level;
            let back = enc.decode(&dec.decrypt(&out, &sk)?)?;
            worst = worst.max(max_error(&back, &z));
            log::info!("slots {} trial {t}: {:.2} s, error 2^{:.2}", cfg.slots, times[t], worst.log2());
        }
        let median = summarize(&times).median;
        let bits = -worst.log2();
        reports.push(BootstrapReport {
            log_n: params.log_n,
            depth: params.depth,
            delta_bits: params.delta_bits,
            dnum: params.dnum,
            fingerprint: ctx.fingerprint().to_string(),
            slots: cfg.slots,
            trials,
            median_s: median,
            amortized_us: amortized_us(median, cfg.slots, level.max(1)),
            max_error: worst,
            precision_bits: bits,
            remaining_levels: level,
            expected_levels: expected,
            meets_floor: bits >= PRECISION_FLOOR_BITS,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amortized_time_divides_by_slots_and_levels() {
        // 2 s over 64 slots and 13 levels
        assert!((amortized_us(2.0, 64, 13) - 2e6 / 832.0).abs() < 1e-9);
    }
}
