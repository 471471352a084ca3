use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// A calendar month, ordered by time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month(i32);

impl Month {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month {month} out of range");
        Month(year * 12 + month as i32 - 1)
    }

    pub fn year(self) -> i32 {
        self.0.div_euclid(12)
    }

    /// Month of year, 1..=12.
    pub fn month(self) -> u32 {
        self.0.rem_euclid(12) as u32 + 1
    }

    pub fn is_quarter_end(self) -> bool {
        self.month().is_multiple_of(3)
    }

    pub fn is_year_end(self) -> bool {
        self.month() == 12
    }

    /// Position within the quarter, 1..=3.
    pub fn month_in_quarter(self) -> u32 {
        (self.month() - 1) % 3 + 1
    }

    /// Last month of the quarter containing `self`.
    pub fn quarter_end(self) -> Month {
        self.offset((3 - self.month_in_quarter()) as i32)
    }

    pub fn quarter(self) -> Quarter {
        Quarter {
            year: self.year(),
            q: (self.month() - 1) / 3 + 1,
        }
    }

    pub fn offset(self, months: i32) -> Month {
        Month(self.0 + months)
    }

    /// Signed number of months from `other` to `self`.
    pub fn since(self, other: Month) -> i32 {
        self.0 - other.0
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

impl FromStr for Month {
    type Err = Error;

    /// Accepts `YYYY-MM` and `YYYY-MM-DD` (the day is ignored).
    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        let mut parts = s.split('-');
        let bad = || Error::Parse(format!("invalid month `{s}`, expected YYYY-MM"));
        let year: i32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let month: u32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if let Some(day) = parts.next() {
            let d: u32 = day.parse().map_err(|_| bad())?;
            if !(1..=31).contains(&d) {
                return Err(bad());
            }
        }
        if parts.next().is_some() || !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(Month::new(year, month))
    }
}

impl Serialize for Month {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A calendar quarter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    pub year: i32,
    pub q: u32,
}

impl Quarter {
    pub fn end_month(self) -> Month {
        Month::new(self.year, self.q * 3)
    }

    pub fn first_month(self) -> Month {
        self.end_month().offset(-2)
    }

    pub fn next(self) -> Quarter {
        self.end_month().offset(3).quarter()
    }

    pub fn prev(self) -> Quarter {
        self.end_month().offset(-3).quarter()
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.q)
    }
}

impl FromStr for Quarter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = || Error::Parse(format!("invalid quarter `{s}`, expected YYYYQn"));
        let (y, q) = s.trim().split_once(['Q', 'q']).ok_or_else(bad)?;
        let year: i32 = y.parse().map_err(|_| bad())?;
        let q: u32 = q.parse().map_err(|_| bad())?;
        if !(1..=4).contains(&q) {
            return Err(bad());
        }
        Ok(Quarter { year, q })
    }
}

impl Serialize for Quarter {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quarter {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
