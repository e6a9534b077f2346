//! Calendar months as first-class keys.
//!
//! A [`Month`] is stored as a linear index (`year * 12 + month0`) so lag
//! arithmetic and range iteration are plain integer operations. Formatting
//! and parsing use the `YYYY-MM` form used by all external files.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq, Eq, Clone)]
pub enum MonthError {
    #[error("invalid month string {0:?}: expected YYYY-MM")]
    Syntax(String),
    #[error("month out of range in {0:?}: month must be 01-12")]
    MonthRange(String),
    #[error("year out of range in {0:?}")]
    YearRange(String),
    #[error("invalid month range {0:?}: expected START:END with START < END")]
    Range(String),
}

/// A calendar month in the proleptic Gregorian calendar, UTC.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month(i32);

impl Month {
    pub fn new(year: i32, month: u32) -> Option<Month> {
        if !(1..=12).contains(&month) || !(0..=9999).contains(&year) {
            return None;
        }
        Some(Month(year * 12 + (month as i32 - 1)))
    }

    pub fn from_date(d: NaiveDate) -> Month {
        use chrono::Datelike;
        Month(d.year() * 12 + d.month0() as i32)
    }

    pub fn year(self) -> i32 {
        self.0.div_euclid(12)
    }

    /// 1-based month number.
    pub fn month(self) -> u32 {
        (self.0.rem_euclid(12) + 1) as u32
    }

    /// Linear index; consecutive months differ by exactly 1.
    pub fn index(self) -> i32 {
        self.0
    }

    pub fn from_index(ix: i32) -> Month {
        Month(ix)
    }

    /// The month `n` steps later (or earlier for negative `n`).
    pub fn offset(self, n: i32) -> Month {
        Month(self.0 + n)
    }

    pub fn n_days(self) -> u32 {
        match self.month() {
            1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
            4 | 6 | 9 | 11 => 30,
            2 => {
                let y = self.year();
                if y % 4 == 0 && (y % 100 != 0 || y % 400 == 0) {
                    29
                } else {
                    28
                }
            }
            _ => unreachable!(),
        }
    }

    /// Total minutes in the month: 60 * 24 * days.
    pub fn n_minutes(self) -> u64 {
        60 * 24 * self.n_days() as u64
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year(), self.month(), 1).expect("valid month")
    }

    pub fn day(self, day: u32) -> Option<NaiveDate> {
        NaiveDate::from_ymd_opt(self.year(), self.month(), day)
    }

    pub fn days(self) -> impl Iterator<Item = NaiveDate> {
        let first = self.first_day();
        (0..self.n_days()).map(move |i| first + chrono::Days::new(i as u64))
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

impl fmt::Debug for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Month({self})")
    }
}

impl FromStr for Month {
    type Err = MonthError;

    fn from_str(s: &str) -> Result<Month, MonthError> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| MonthError::Syntax(s.to_string()))?;
        if y.len() != 4 || m.len() != 2 {
            return Err(MonthError::Syntax(s.to_string()));
        }
        let year: i32 = y
            .parse()
            .map_err(|_| MonthError::Syntax(s.to_string()))?;
        let month: u32 = m
            .parse()
            .map_err(|_| MonthError::Syntax(s.to_string()))?;
        if !(1..=12).contains(&month) {
            return Err(MonthError::MonthRange(s.to_string()));
        }
        Month::new(year, month).ok_or_else(|| MonthError::YearRange(s.to_string()))
    }
}

impl Serialize for Month {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Month, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Inclusive month range, e.g. `2012-01:2019-09`.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct MonthRange {
    pub start: Month,
    pub end: Month,
}

impl MonthRange {
    /// Requires `start < end`: a window narrower than two months is not a
    /// usable analysis window.
    pub fn new(start: Month, end: Month) -> Result<MonthRange, MonthError> {
        if start >= end {
            return Err(MonthError::Range(format!("{start}:{end}")));
        }
        Ok(MonthRange { start, end })
    }

    pub fn contains(&self, m: Month) -> bool {
        self.start <= m && m <= self.end
    }

    pub fn contains_date(&self, d: NaiveDate) -> bool {
        self.contains(Month::from_date(d))
    }

    pub fn months(&self) -> impl Iterator<Item = Month> + '_ {
        (self.start.index()..=self.end.index()).map(Month::from_index)
    }

    pub fn len(&self) -> usize {
        (self.end.index() - self.start.index() + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for MonthRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

impl FromStr for MonthRange {
    type Err = MonthError;

    fn from_str(s: &str) -> Result<MonthRange, MonthError> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| MonthError::Range(s.to_string()))?;
        MonthRange::new(a.parse()?, b.parse()?)
    }
}
