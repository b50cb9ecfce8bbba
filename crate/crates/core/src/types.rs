//! Shared primitives: 20-byte addresses, 32-byte hashes, 256-bit words,
//! and the hex conventions used by every file format in this crate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use primitive_types::{U256, U512};

/// One ETH in Wei.
pub const WEI_PER_ETH: u64 = 1_000_000_000_000_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HexError {
    #[error("odd-length hex string")]
    OddLength,
    #[error("invalid hex digit")]
    InvalidDigit,
    #[error("expected {expected} bytes, got {got}")]
    BadLength { expected: usize, got: usize },
}

/// Decodes hex with an optional `0x` prefix, case-insensitive.
/// Odd-length input is rejected rather than padded.
pub fn parse_hex_bytes(s: &str) -> Result<Vec<u8>, HexError> {
    let s = s.trim();
    let s = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .unwrap_or(s);
    if !s.len().is_multiple_of(2) {
        return Err(HexError::OddLength);
    }
    hex::decode(s).map_err(|_| HexError::InvalidDigit)
}

/// `0x`-prefixed lowercase hex.
pub fn to_hex(bytes: &[u8]) -> String {
    format!("0x{}", hex::encode(bytes))
}

/// Parses a U256 from decimal text or `0x`-prefixed hex.
pub fn parse_u256(s: &str) -> Result<U256, String> {
    let s = s.trim();
    if let Some(h) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        if h.is_empty() {
            return Ok(U256::zero());
        }
        U256::from_str_radix(h, 16).map_err(|e| format!("bad hex amount {s:?}: {e}"))
    } else {
        U256::from_dec_str(s).map_err(|e| format!("bad decimal amount {s:?}: {e}"))
    }
}

macro_rules! fixed_bytes {
    ($name:ident, $len:expr, $doc:expr) => {
        #[doc = $doc]
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn from_slice(bytes: &[u8]) -> Result<Self, HexError> {
                if bytes.len() != $len {
                    return Err(HexError::BadLength {
                        expected: $len,
                        got: bytes.len(),
                    });
                }
                let mut out = [0u8; $len];
                out.copy_from_slice(bytes);
                Ok(Self(out))
            }

            pub fn as_bytes(&self) -> &[u8] {
                &self.0
            }

            pub fn is_zero(&self) -> bool {
                self.0.iter().all(|b| *b == 0)
            }
        }

        impl FromStr for $name {
            type Err = HexError;

            fn from_str(s: &str) -> Result<Self, HexError> {
                Self::from_slice(&parse_hex_bytes(s)?)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "0x{}", hex::encode(self.0))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}(0x{})", stringify!($name), hex::encode(self.0))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
                ser.serialize_str(&self.to_string())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
                let s = String::deserialize(de)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

fixed_bytes!(Address, 20, "A 20-byte account address.");
fixed_bytes!(
    Hash32,
    32,
    "A 32-byte hash (transaction id or storage root)."
);

impl Address {
    /// Truncates a 256-bit word to its low 160 bits, the EVM address coercion.
    pub fn from_word(word: &U256) -> Self {
        let buf = word.to_big_endian();
        let mut out = [0u8; 20];
        out.copy_from_slice(&buf[12..]);
        Address(out)
    }

    pub fn to_word(&self) -> U256 {
        U256::from_big_endian(&self.0)
    }

    /// Short display form: first three bytes followed by "..", e.g. `0x863df6..`.
    pub fn short(&self) -> String {
        format!("0x{}..", hex::encode(&self.0[..3]))
    }
}

/// Serde adapter for Wei/U256 amounts: serialized as decimal strings,
/// accepted back as decimal strings, 0x-hex strings, or plain integers.
pub mod u256_serde {
    use super::*;

    pub fn serialize<S: Serializer>(value: &U256, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&value.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<U256, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(n) => Ok(U256::from(n)),
            Raw::Text(s) => parse_u256(&s).map_err(serde::de::Error::custom),
        }
    }
}

/// Serde adapter for byte strings carried as hex text (`"0x..."`, possibly empty).
pub mod hex_serde {
    use super::*;

    // serde's `with` passes the field type itself, hence &Vec rather than a slice.
    #[allow(clippy::ptr_arg)]
    pub fn serialize<S: Serializer>(value: &Vec<u8>, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&to_hex(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<u8>, D::Error> {
        let s = Option::<String>::deserialize(de)?;
        match s {
            None => Ok(Vec::new()),
            Some(s) => parse_hex_bytes(&s).map_err(serde::de::Error::custom),
        }
    }
}
