use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One of the eight vulnerability classes of the labelled corpus.
///
/// Discriminants follow the canonical ordering used everywhere a class list
/// is rendered: prompts, parsed outputs, and report columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum VulnClass {
    /// Locked Ether
    LE = 0,
    /// Arithmetic (integer overflow and underflow)
    ARTHM = 1,
    /// Denial of Service
    DOS = 2,
    /// Reentrancy
    RENT = 3,
    /// Time manipulation (block values as a proxy for time)
    TimeM = 4,
    /// Timestamp ordering (transaction order dependence)
    TimeO = 5,
    /// Authorization through tx.origin
    TxOrigin = 6,
    /// Unhandled exception (unchecked call return value)
    UE = 7,
}

impl VulnClass {
    pub const COUNT: usize = 8;

    pub const ALL: [VulnClass; 8] = [
        VulnClass::LE,
        VulnClass::ARTHM,
        VulnClass::DOS,
        VulnClass::RENT,
        VulnClass::TimeM,
        VulnClass::TimeO,
        VulnClass::TxOrigin,
        VulnClass::UE,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<VulnClass> {
        Self::ALL.get(i).copied()
    }

    /// Abbreviation used in config files, label files and report headers.
    pub fn abbrev(self) -> &'static str {
        match self {
            VulnClass::LE => "LE",
            VulnClass::ARTHM => "ARTHM",
            VulnClass::DOS => "DOS",
            VulnClass::RENT => "RENT",
            VulnClass::TimeM => "TimeM",
            VulnClass::TimeO => "TimeO",
            VulnClass::TxOrigin => "TxOrigin",
            VulnClass::UE => "UE",
        }
    }
}

impl fmt::Display for VulnClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown vulnerability class `{0}`")]
pub struct UnknownClass(pub String);

impl FromStr for VulnClass {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        // "Tx-Origin" is how the results tables spell it.
        let normalized: String = t.chars().filter(|c| *c != '-' && *c != '_').collect();
        VulnClass::ALL
            .iter()
            .copied()
            .find(|c| c.abbrev().eq_ignore_ascii_case(&normalized))
            .ok_or_else(|| UnknownClass(t.to_string()))
    }
}

impl Serialize for VulnClass {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.abbrev())
    }
}

impl<'de> Deserialize<'de> for VulnClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A subset of the eight classes, stored as a bitmask.
///
/// Iteration always yields classes in canonical order, so two equal sets
/// render identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct LabelSet(u8);

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet(0);
    pub const FULL: LabelSet = LabelSet(0xff);

    pub fn from_bits(bits: u8) -> LabelSet {
        LabelSet(bits)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn insert(&mut self, c: VulnClass) {
        self.0 |= 1 << c.index();
    }

    pub fn remove(&mut self, c: VulnClass) {
        self.0 &= !(1 << c.index());
    }

    pub fn contains(self, c: VulnClass) -> bool {
        self.0 & (1 << c.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 | other.0)
    }

    pub fn intersection(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 & other.0)
    }

    pub fn is_subset(self, other: LabelSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = VulnClass> {
        VulnClass::ALL.into_iter().filter(move |c| self.contains(*c))
    }

    /// Every one of the 256 subsets, in bitmask order.
    pub fn all_subsets() -> impl Iterator<Item = LabelSet> {
        (0..=255u8).map(LabelSet)
    }
}

impl FromIterator<VulnClass> for LabelSet {
    fn from_iter<I: IntoIterator<Item = VulnClass>>(iter: I) -> Self {
        let mut set = LabelSet::EMPTY;
        for c in iter {
            set.insert(c);
        }
        set
    }
}

impl<const N: usize> From<[VulnClass; N]> for LabelSet {
    fn from(classes: [VulnClass; N]) -> Self {
        classes.into_iter().collect()
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, c) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(c.abbrev())?;
        }
        f.write_str("}")
    }
}

impl Serialize for LabelSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let classes = Vec::<VulnClass>::deserialize(d)?;
        Ok(classes.into_iter().collect())
    }
}
