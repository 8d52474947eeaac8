use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// A calendar quarter, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QuarterIndex {
    year: i32,
    quarter: u8,
}

impl QuarterIndex {
    pub fn new(year: i32, quarter: u8) -> Result<Self, Error> {
        if !(1..=4).contains(&quarter) {
            return Err(Error::Domain(format!("quarter must be in 1..=4, got {quarter}")));
        }
        Ok(QuarterIndex { year, quarter })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn quarter(self) -> u8 {
        self.quarter
    }

    /// Quarters since year 0 Q1.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 4 + (self.quarter as i64 - 1)
    }

    pub fn from_ordinal(ord: i64) -> Self {
        QuarterIndex {
            year: ord.div_euclid(4) as i32,
            quarter: (ord.rem_euclid(4) + 1) as u8,
        }
    }

    pub fn succ(self) -> Self {
        self.offset(1)
    }

    pub fn pred(self) -> Self {
        self.offset(-1)
    }

    pub fn offset(self, quarters: i64) -> Self {
        Self::from_ordinal(self.ordinal() + quarters)
    }

    /// Signed number of quarters from `self` to `other`.
    pub fn distance_to(self, other: QuarterIndex) -> i64 {
        other.ordinal() - self.ordinal()
    }
}

impl fmt::Display for QuarterIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} Q{}", self.year, self.quarter)
    }
}

impl FromStr for QuarterIndex {
    type Err = Error;

    /// Accepts `YYYY Qn` (canonical), `YYYYQn` and `YYYY-Qn`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let bad = || Error::Ingestion(format!("cannot parse quarter `{s}` (expected `YYYY Qn`)"));
        let pos = t.find(['Q', 'q']).ok_or_else(bad)?;
        let year: i32 = t[..pos]
            .trim_end_matches([' ', '-'])
            .parse()
            .map_err(|_| bad())?;
        let q: u8 = t[pos + 1..].trim().parse().map_err(|_| bad())?;
        QuarterIndex::new(year, q).map_err(|_| bad())
    }
}

impl Serialize for QuarterIndex {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QuarterIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Closed interval of quarters `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuarterRange {
    pub start: QuarterIndex,
    pub end: QuarterIndex,
}

impl QuarterRange {
    pub fn new(start: QuarterIndex, end: QuarterIndex) -> Result<Self, Error> {
        if end < start {
            return Err(Error::Domain(format!("empty quarter range {start}..{end}")));
        }
        Ok(QuarterRange { start, end })
    }

    pub fn len(&self) -> usize {
        (self.start.distance_to(self.end) + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, q: QuarterIndex) -> bool {
        self.start <= q && q <= self.end
    }

    pub fn iter(&self) -> impl Iterator<Item = QuarterIndex> {
        let s = self.start.ordinal();
        (s..=self.end.ordinal()).map(QuarterIndex::from_ordinal)
    }
}

impl fmt::Display for QuarterRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} to {}", self.start, self.end)
    }
}

/// Shorthand used heavily in tests and defaults. Panics on an invalid quarter.
pub fn q(year: i32, quarter: u8) -> QuarterIndex {
    QuarterIndex::new(year, quarter).expect("valid quarter")
}
