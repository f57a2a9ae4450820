use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, TimeZone, Utc, Weekday};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    /// ISO-8601 weeks.
    Week,
    Month,
    /// Jan–Feb, Mar–Apr, ..., Nov–Dec.
    TwoMonth,
}

impl FromStr for Granularity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "week" | "weekly" => Ok(Granularity::Week),
            "month" | "monthly" => Ok(Granularity::Month),
            "two-month" | "bimonth" | "bimonthly" => Ok(Granularity::TwoMonth),
            other => Err(format!("unknown granularity {other:?} (week|month|two-month)")),
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Week => "week",
            Granularity::Month => "month",
            Granularity::TwoMonth => "two-month",
        })
    }
}

/// A calendar period. `ordinal` is the ISO week (1..=53), the month
/// (1..=12) or the two-month block (1..=6) depending on granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeBucket {
    pub granularity: Granularity,
    pub year: i32,
    pub ordinal: u32,
}

fn midnight(date: NaiveDate) -> DateTime<Utc> {
    Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("valid time"))
}

impl TimeBucket {
    pub fn of(ts: DateTime<Utc>, granularity: Granularity) -> TimeBucket {
        let (year, ordinal) = match granularity {
            Granularity::Week => {
                let w = ts.iso_week();
                (w.year(), w.week())
            }
            Granularity::Month => (ts.year(), ts.month()),
            Granularity::TwoMonth => (ts.year(), (ts.month() - 1) / 2 + 1),
        };
        TimeBucket { granularity, year, ordinal }
    }

    fn start_date(&self) -> NaiveDate {
        match self.granularity {
            Granularity::Week => NaiveDate::from_isoywd_opt(self.year, self.ordinal, Weekday::Mon),
            Granularity::Month => NaiveDate::from_ymd_opt(self.year, self.ordinal, 1),
            Granularity::TwoMonth => NaiveDate::from_ymd_opt(self.year, self.ordinal * 2 - 1, 1),
        }
        .expect("bucket constructed from a valid date")
    }

    pub fn start(&self) -> DateTime<Utc> {
        midnight(self.start_date())
    }

    /// Exclusive end, equal to the start of [`TimeBucket::next`].
    pub fn end(&self) -> DateTime<Utc> {
        self.next().start()
    }

    pub fn contains(&self, ts: DateTime<Utc>) -> bool {
        self.start() <= ts && ts < self.end()
    }

    pub fn next(&self) -> TimeBucket {
        let start = self.start_date();
        let next = match self.granularity {
            Granularity::Week => start + chrono::Duration::days(7),
            Granularity::Month | Granularity::TwoMonth => {
                let step = if self.granularity == Granularity::Month { 1 } else { 2 };
                let m0 = start.month0() + step;
                NaiveDate::from_ymd_opt(start.year() + (m0 / 12) as i32, m0 % 12 + 1, 1).expect("valid month")
            }
        };
        TimeBucket::of(midnight(next), self.granularity)
    }

    pub fn prev(&self) -> TimeBucket {
        let before = self.start() - chrono::Duration::seconds(1);
        TimeBucket::of(before, self.granularity)
    }

    /// `n` buckets later (n may be zero).
    pub fn advance(&self, n: u32) -> TimeBucket {
        (0..n).fold(*self, |b, _| b.next())
    }

    /// Inclusive iteration from `self` to `last`.
    pub fn range_to(&self, last: TimeBucket) -> impl Iterator<Item = TimeBucket> {
        let mut cur = Some(*self);
        std::iter::from_fn(move || {
            let b = cur?;
            cur = if b < last { Some(b.next()) } else { None };
            Some(b)
        })
    }
}

impl fmt::Display for TimeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.granularity {
            Granularity::Week => write!(f, "{}-W{:02}", self.year, self.ordinal),
            Granularity::Month => write!(f, "{}-{:02}", self.year, self.ordinal),
            Granularity::TwoMonth => write!(f, "{}-B{}", self.year, self.ordinal),
        }
    }
}

impl FromStr for TimeBucket {
    type Err = String;

    /// Accepts `2019-W01`, `2019-01` and `2019-B1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("bad time bucket {s:?} (expected 2019-W01, 2019-01 or 2019-B1)");
        let (year, rest) = s.trim().split_once('-').ok_or_else(bad)?;
        let year: i32 = year.parse().map_err(|_| bad())?;
        let (granularity, ord) = if let Some(w) = rest.strip_prefix('W') {
            (Granularity::Week, w)
        } else if let Some(b) = rest.strip_prefix('B') {
            (Granularity::TwoMonth, b)
        } else {
            (Granularity::Month, rest)
        };
        let ordinal: u32 = ord.parse().map_err(|_| bad())?;
        let valid = match granularity {
            Granularity::Week => NaiveDate::from_isoywd_opt(year, ordinal, Weekday::Mon).is_some(),
            Granularity::Month => (1..=12).contains(&ordinal),
            Granularity::TwoMonth => (1..=6).contains(&ordinal),
        };
        if !valid {
            return Err(bad());
        }
        Ok(TimeBucket { granularity, year, ordinal })
    }
}

impl Serialize for TimeBucket {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TimeBucket {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}
