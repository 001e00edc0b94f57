//! Named parameter sets.
//!
//! Every preset uses the toy security profile: the sets with long chains
//! exceed the 128-bit `log2(QP)` bound for their ring degree, and the small
//! ones exist only to keep runs short.

use anyhow::{bail, Result};
use rnsckks::bootstrap::BootstrapConfig;
use rnsckks::context::Parameters;

pub struct Preset {
    pub name: &'static str,
    pub about: &'static str,
    pub log_n: u32,
    pub depth: usize,
    pub delta_bits: u32,
    pub dnum: usize,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "toy",
        about: "N=2^10, quick smoke runs",
        log_n: 10,
        depth: 6,
        delta_bits: 40,
        dnum: 2,
    },
    Preset {
        name: "hom",
        about: "N=2^13 homomorphism checks",
        log_n: 13,
        depth: 6,
        delta_bits: 40,
        dnum: 2,
    },
    Preset {
        name: "digits",
        about: "N=2^14 digit-drop level sweep",
        log_n: 14,
        depth: 13,
        delta_bits: 40,
        dnum: 3,
    },
    Preset {
        name: "desk",
        about: "N=2^14 reduced chain for bootstrapping and LR",
        log_n: 14,
        depth: 24,
        delta_bits: 52,
        dnum: 3,
    },
    Preset {
        name: "lr-large",
        about: "N=2^16 logistic-regression set",
        log_n: 16,
        depth: 26,
        delta_bits: 59,
        dnum: 4,
    },
    Preset {
        name: "boot-large",
        about: "N=2^16 bootstrapping set",
        log_n: 16,
        depth: 29,
        delta_bits: 59,
        dnum: 4,
    },
];

pub fn preset(name: &str) -> Result<&'static Preset> {
    match PRESETS.iter().find(|p| p.name == name) {
        Some(p) => Ok(p),
        None => {
            let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
            bail!("unknown preset {name:?}; known: {}", names.join(", "))
        }
    }
}

impl Preset {
    pub fn params(&self) -> Parameters {
        Parameters::new(self.log_n, self.depth, self.delta_bits, self.dnum).toy()
    }
}

/// Default bootstrapping configuration for a parameter set: the wide variant
/// when `Δ` sits one bit below `q0` on a ring of at least `2^16`, otherwise
/// the desk defaults.
pub fn bootstrap_config(params: &Parameters, slots: usize) -> BootstrapConfig {
    if params.log_n >= 16 && params.delta_bits + 1 >= params.first_bits {
        BootstrapConfig::wide(slots)
    } else {
        BootstrapConfig::new(slots)
    }
}

/// Number of key-switching digits active at `level`.
pub fn digits_at(params: &Parameters, level: usize) -> usize {
    (level + 1).div_ceil(params.digit_size())
}
