use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A 20-byte contract address, held in lowercase `0x`-prefixed hex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed address `{0}`: expected 0x followed by 40 hex digits")]
pub struct MalformedAddress(pub String);

impl Address {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Deterministic synthetic address, handy for fixtures and benches.
    pub fn from_index(i: u64) -> Address {
        Address(format!("0x{i:040x}"))
    }
}

impl FromStr for Address {
    type Err = MalformedAddress;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let hex = t
            .strip_prefix("0x")
            .or_else(|| t.strip_prefix("0X"))
            .ok_or_else(|| MalformedAddress(t.to_string()))?;
        if hex.len() != 40 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(MalformedAddress(t.to_string()));
        }
        Ok(Address(format!("0x{}", hex.to_ascii_lowercase())))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_case() {
        let a: Address = "0xABCDEFabcdef0123456789012345678901234567".parse().unwrap();
        assert_eq!(a.as_str(), "0xabcdefabcdef0123456789012345678901234567");
    }

    #[test]
    fn rejects_wrong_shapes() {
        for bad in ["", "0x", "abcdefabcdef0123456789012345678901234567", "0x123", "0xzzcdefabcdef0123456789012345678901234567"] {
            assert!(bad.parse::<Address>().is_err(), "{bad}");
        }
    }

    #[test]
    fn synthetic_addresses_are_well_formed() {
        let a = Address::from_index(255);
        assert_eq!(a.as_str().parse::<Address>().unwrap(), a);
    }
}
