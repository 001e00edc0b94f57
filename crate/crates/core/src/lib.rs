//! RNS-CKKS approximate homomorphic encryption.

pub mod arith;
pub mod bootstrap;
pub mod client;
pub mod context;
pub mod error;
pub mod eval;
pub mod ntt;
pub mod poly;
pub mod serial;

pub use error::{Error, Result};
