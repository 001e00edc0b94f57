//! Client-side operations: encoding, key generation, encryption, decryption.

mod cipher;
mod encoding;
mod keys;
pub mod sampling;

pub use cipher::{Ciphertext, Decryptor, Encryptor, Plaintext};
pub use encoding::{slot_positions, Encoder, SpecialFft};
pub use keys::{
    conjugation_exponent, rotation_exponent, EvaluationKeys, KeyGenerator, KeySwitchingKey,
    PublicKey, SecretKey,
};
