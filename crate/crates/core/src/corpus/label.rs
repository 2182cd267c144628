//! The rank-number label grammar used by annotators.
//!
//! A label is a single Top 25 rank (`"4"`) or a causal chain of ranks joined
//! by `-`, where each element leads to the next (`"2-25"`: cross-site
//! scripting leads to code injection).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::catalog::CweRank;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("empty label")]
    Empty,
    #[error("label token {0:?} is not a number")]
    NotNumeric(String),
    #[error("label rank {0} is outside 1..=25")]
    OutOfRange(u64),
    #[error("rank {0} repeats immediately in the chain")]
    ImmediateRepeat(u8),
}

/// A single label or an ordered causal chain of CWE ranks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelAssignment {
    chain: Vec<CweRank>,
}

impl LabelAssignment {
    pub fn new(chain: Vec<CweRank>) -> Result<Self, LabelError> {
        if chain.is_empty() {
            return Err(LabelError::Empty);
        }
        for pair in chain.windows(2) {
            if pair[0] == pair[1] {
                return Err(LabelError::ImmediateRepeat(pair[0].get()));
            }
        }
        Ok(Self { chain })
    }

    pub fn single(rank: CweRank) -> Self {
        Self { chain: vec![rank] }
    }

    pub fn chain(&self) -> &[CweRank] {
        &self.chain
    }

    pub fn is_single(&self) -> bool {
        self.chain.len() == 1
    }

    pub fn is_causal(&self) -> bool {
        self.chain.len() > 1
    }

    /// First element of the chain; the whole label for single assignments.
    pub fn head(&self) -> CweRank {
        self.chain[0]
    }
}

/// Parses the `a-b-c` grammar into a chain of ranks.
pub fn parse_label(s: &str) -> Result<LabelAssignment, LabelError> {
    if s.is_empty() {
        return Err(LabelError::Empty);
    }
    let mut chain = Vec::new();
    for token in s.split('-') {
        if token.is_empty() || !token.bytes().all(|b| b.is_ascii_digit()) {
            return Err(if token.is_empty() {
                LabelError::Empty
            } else {
                LabelError::NotNumeric(token.to_string())
            });
        }
        let value: u64 = token
            .parse()
            .map_err(|_| LabelError::OutOfRange(u64::MAX))?;
        let rank = u8::try_from(value)
            .ok()
            .and_then(|v| CweRank::new(v).ok())
            .ok_or(LabelError::OutOfRange(value))?;
        chain.push(rank);
    }
    LabelAssignment::new(chain)
}

pub fn format_label(assignment: &LabelAssignment) -> String {
    assignment.to_string()
}

impl fmt::Display for LabelAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, rank) in self.chain.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{}", rank.get())?;
        }
        Ok(())
    }
}

impl FromStr for LabelAssignment {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_label(s)
    }
}

impl Serialize for LabelAssignment {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LabelAssignment {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_label(&s).map_err(serde::de::Error::custom)
    }
}
