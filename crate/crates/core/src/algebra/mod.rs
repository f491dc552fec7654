//! Five-relation temporal algebra over intervals.
//!
//! Every event is an interval `[start, end]` with `start < end`. Two events
//! stand in exactly one of five relations:
//!
//! | relation       | endpoint constraint                         |
//! |----------------|---------------------------------------------|
//! | `BEFORE`       | `end(a) < start(b)`                         |
//! | `AFTER`        | `end(b) < start(a)`                         |
//! | `INCLUDES`     | `start(a) < start(b)` and `end(b) < end(a)` |
//! | `IS_INCLUDED`  | `start(b) < start(a)` and `end(a) < end(b)` |
//! | `SIMULTANEOUS` | `start(a) = start(b)` and `end(a) = end(b)` |
//!
//! Any other endpoint configuration (partial overlap, shared single
//! endpoints) lies outside the vocabulary, so a model of a relation graph is
//! an interval assignment where *every* pair realizes one of the five.

mod graph;
mod oracle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use graph::{propagate, RelationGraph};
pub use oracle::{
    enumerate_models, oracle_closure, oracle_closure_with_witnesses, relation_of_intervals,
    OracleClosure, Witness, ORACLE_MAX_EVENTS,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("inconsistent constraints: {a} -> {b}{}", via.as_ref().map(|v| format!(" via {v}")).unwrap_or_default())]
    Inconsistent {
        a: String,
        b: String,
        via: Option<String>,
    },
    #[error("unknown temporal relation label {0:?}")]
    UnknownRelation(String),
    #[error("unknown event id {0:?}")]
    UnknownEvent(String),
    #[error("self relation on {0:?}")]
    SelfEdge(String),
    #[error("oracle supports at most {max} events, got {got}")]
    TooManyEvents { got: usize, max: usize },
    #[error("bad relation line {line}: {msg}")]
    BadLine { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TemporalRelation {
    Before,
    After,
    Includes,
    IsIncluded,
    Simultaneous,
}

impl TemporalRelation {
    pub const ALL: [TemporalRelation; 5] = [
        TemporalRelation::Before,
        TemporalRelation::After,
        TemporalRelation::Includes,
        TemporalRelation::IsIncluded,
        TemporalRelation::Simultaneous,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn invert(self) -> Self {
        use TemporalRelation::*;
        match self {
            Before => After,
            After => Before,
            Includes => IsIncluded,
            IsIncluded => Includes,
            Simultaneous => Simultaneous,
        }
    }

    pub fn label(self) -> &'static str {
        use TemporalRelation::*;
        match self {
            Before => "BEFORE",
            After => "AFTER",
            Includes => "INCLUDES",
            IsIncluded => "IS_INCLUDED",
            Simultaneous => "SIMULTANEOUS",
        }
    }

    pub fn bit(self) -> u8 {
        1 << self.index()
    }
}

impl fmt::Display for TemporalRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TemporalRelation {
    type Err = AlgebraError;

    /// Case-insensitive. `DURING` is read as `IS_INCLUDED`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        use TemporalRelation::*;
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "BEFORE" => Ok(Before),
            "AFTER" => Ok(After),
            "INCLUDES" => Ok(Includes),
            "IS_INCLUDED" | "DURING" => Ok(IsIncluded),
            "SIMULTANEOUS" => Ok(Simultaneous),
            _ => Err(AlgebraError::UnknownRelation(s.to_string())),
        }
    }
}

/// A disjunction of relations. The empty set marks an inconsistency.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct RelationSet(u8);

impl RelationSet {
    pub const FULL: RelationSet = RelationSet(0b1_1111);
    pub const INCONSISTENT: RelationSet = RelationSet(0);

    pub fn from_bits(bits: u8) -> Self {
        RelationSet(bits & Self::FULL.0)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn single(r: TemporalRelation) -> Self {
        RelationSet(r.bit())
    }

    pub fn contains(self, r: TemporalRelation) -> bool {
        self.0 & r.bit() != 0
    }

    pub fn insert(&mut self, r: TemporalRelation) {
        self.0 |= r.bit();
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_full(self) -> bool {
        self == Self::FULL
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// The relation if this set is a singleton.
    pub fn as_single(self) -> Option<TemporalRelation> {
        if self.len() == 1 {
            TemporalRelation::from_index(self.0.trailing_zeros() as usize)
        } else {
            None
        }
    }

    pub fn intersect(self, other: Self) -> Self {
        RelationSet(self.0 & other.0)
    }

    pub fn union(self, other: Self) -> Self {
        RelationSet(self.0 | other.0)
    }

    pub fn invert(self) -> Self {
        self.iter().map(TemporalRelation::invert).collect()
    }

    pub fn iter(self) -> impl Iterator<Item = TemporalRelation> {
        TemporalRelation::ALL
            .into_iter()
            .filter(move |r| self.contains(*r))
    }

    /// Labels joined with `|`, in vocabulary order.
    pub fn to_label(self) -> String {
        if self.is_empty() {
            return "INCONSISTENT".to_string();
        }
        self.iter().map(|r| r.label()).collect::<Vec<_>>().join("|")
    }
}

impl FromIterator<TemporalRelation> for RelationSet {
    fn from_iter<I: IntoIterator<Item = TemporalRelation>>(iter: I) -> Self {
        let mut s = RelationSet::INCONSISTENT;
        for r in iter {
            s.insert(r);
        }
        s
    }
}

impl FromStr for RelationSet {
    type Err = AlgebraError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("INCONSISTENT") {
            return Ok(RelationSet::INCONSISTENT);
        }
        s.split('|').map(str::parse).collect()
    }
}

impl fmt::Debug for RelationSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.to_label())
    }
}

impl fmt::Display for RelationSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_label())
    }
}

pub fn invert(r: TemporalRelation) -> TemporalRelation {
    r.invert()
}

// Row r1, column r2: relations possible between a and c given r1(a, b) and
// r2(b, c). Generated by enumerating endpoint orderings of three intervals;
// `composition_table_matches_enumeration` regenerates and compares it.
const B: u8 = 1;
const A: u8 = 2;
const I: u8 = 4;
const II: u8 = 8;
const S: u8 = 16;
const F: u8 = 31;
const COMPOSITION: [[u8; 5]; 5] = [
    [B, F, B, B | II, B],
    [F, A, A, A | II, A],
    [B | I, A | I, I, I | II | S, I],
    [B, A, F, II, II],
    [B, A, I, II, S],
];

/// Relations between `a` and `c` entailed by `r1(a, b)` and `r2(b, c)`.
pub fn compose(r1: TemporalRelation, r2: TemporalRelation) -> RelationSet {
    RelationSet(COMPOSITION[r1.index()][r2.index()])
}

/// Composition lifted to disjunctions.
pub fn compose_sets(s1: RelationSet, s2: RelationSet) -> RelationSet {
    let mut out = RelationSet::INCONSISTENT;
    for r1 in s1.iter() {
        for r2 in s2.iter() {
            out = out.union(compose(r1, r2));
            if out.is_full() {
                return out;
            }
        }
    }
    out
}
