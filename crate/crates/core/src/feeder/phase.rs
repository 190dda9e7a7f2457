use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A single conductor phase. Ordering is canonical: `a < b < c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        match self {
            Phase::A => 0,
            Phase::B => 1,
            Phase::C => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Phase> {
        Phase::ALL.get(i).copied()
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::A => "a",
            Phase::B => "b",
            Phase::C => "c",
        };
        f.write_str(s)
    }
}

/// Non-empty subset of `{a, b, c}`, stored as a 3-bit mask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const ABC: PhaseSet = PhaseSet(0b111);

    /// Returns `None` for the empty set.
    pub fn new<I: IntoIterator<Item = Phase>>(phases: I) -> Option<PhaseSet> {
        let mask = phases.into_iter().fold(0u8, |m, p| m | (1 << p.index()));
        (mask != 0).then_some(PhaseSet(mask))
    }

    pub fn single(p: Phase) -> PhaseSet {
        PhaseSet(1 << p.index())
    }

    pub fn contains(self, p: Phase) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn is_subset(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersection(self, other: PhaseSet) -> Option<PhaseSet> {
        let m = self.0 & other.0;
        (m != 0).then_some(PhaseSet(m))
    }

    pub fn union(self, other: PhaseSet) -> PhaseSet {
        PhaseSet(self.0 | other.0)
    }

    /// Phases in canonical order.
    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    /// Position of `p` within this set's canonical ordering.
    pub fn position(self, p: Phase) -> Option<usize> {
        self.iter().position(|q| q == p)
    }
}

impl fmt::Debug for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl Serialize for PhaseSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for PhaseSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let phases = Vec::<Phase>::deserialize(d)?;
        let n = phases.len();
        let set = PhaseSet::new(phases.iter().copied())
            .ok_or_else(|| serde::de::Error::custom("phase set must not be empty"))?;
        if set.len() != n {
            return Err(serde::de::Error::custom("phase set contains duplicates"));
        }
        Ok(set)
    }
}

/// Per-phase scalar quantity, e.g. demand in kW. Serialized as `{"a": .., "b": ..}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PerPhase(pub BTreeMap<Phase, f64>);

impl PerPhase {
    pub fn uniform(phases: PhaseSet, value: f64) -> PerPhase {
        PerPhase(phases.iter().map(|p| (p, value)).collect())
    }

    pub fn get(&self, p: Phase) -> f64 {
        self.0.get(&p).copied().unwrap_or(0.0)
    }

    pub fn phases(&self) -> Option<PhaseSet> {
        PhaseSet::new(self.0.keys().copied())
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.values().copied()
    }

    pub fn add_assign(&mut self, other: &PerPhase) {
        for (p, v) in &other.0 {
            *self.0.entry(*p).or_insert(0.0) += v;
        }
    }
}
