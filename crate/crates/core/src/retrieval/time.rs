//! Natural-language time phrases to inclusive UTC ranges, by a fixed rule
//! table evaluated against a caller-supplied "now".
//!
//! | phrase                              | range                                   |
//! |-------------------------------------|-----------------------------------------|
//! | `between A and B`, `from A to B`    | A 00:00:00 ..= B 23:59:59               |
//! | `on A`                              | that day                                |
//! | `in <Month> <Year>`, `<Month> <Year>` | that calendar month                   |
//! | `today`, `yesterday`                | that day                                |
//! | `this week`, `last week`            | ISO week (Monday..Sunday)               |
//! | `this month`, `last month`          | calendar month                          |
//!
//! Dates are `YYYY-MM-DD`. Ranges are returned in order of appearance.

use std::sync::LazyLock;

use chrono::{Datelike, Duration, NaiveDate};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::value::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub phrase: String,
    pub start: Timestamp,
    pub end: Timestamp,
}

const MONTHS: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

static EXPLICIT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:between\s+(\d{4}-\d{2}-\d{2})\s+and\s+(\d{4}-\d{2}-\d{2})|from\s+(\d{4}-\d{2}-\d{2})\s+(?:to|until|through)\s+(\d{4}-\d{2}-\d{2})|on\s+(\d{4}-\d{2}-\d{2}))\b")
        .expect("valid regex")
});

static RELATIVE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(today|yesterday|this\s+week|last\s+week|this\s+month|last\s+month)\b").expect("valid regex")
});

static MONTH_YEAR: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(january|february|march|april|may|june|july|august|september|october|november|december)\s+(\d{4})\b")
        .expect("valid regex")
});

fn day_start(d: NaiveDate) -> Timestamp {
    Timestamp(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp())
}

fn day_end(d: NaiveDate) -> Timestamp {
    Timestamp(d.and_hms_opt(23, 59, 59).expect("end of day").and_utc().timestamp())
}

fn days(phrase: &str, a: NaiveDate, b: NaiveDate) -> TimeRange {
    TimeRange {
        phrase: phrase.to_string(),
        start: day_start(a),
        end: day_end(b),
    }
}

fn month_bounds(year: i32, month: u32) -> Option<(NaiveDate, NaiveDate)> {
    let first = NaiveDate::from_ymd_opt(year, month, 1)?;
    let next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)?
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)?
    };
    Some((first, next - Duration::days(1)))
}

fn date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

fn relative(phrase: &str, today: NaiveDate) -> Option<TimeRange> {
    let norm = phrase.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let monday = today - Duration::days(today.weekday().num_days_from_monday() as i64);
    let (a, b) = match norm.as_str() {
        "today" => (today, today),
        "yesterday" => {
            let y = today - Duration::days(1);
            (y, y)
        }
        "this week" => (monday, monday + Duration::days(6)),
        "last week" => (monday - Duration::days(7), monday - Duration::days(1)),
        "this month" => month_bounds(today.year(), today.month())?,
        "last month" => {
            let (y, m) = if today.month() == 1 {
                (today.year() - 1, 12)
            } else {
                (today.year(), today.month() - 1)
            };
            month_bounds(y, m)?
        }
        _ => return None,
    };
    Some(days(phrase, a, b))
}

/// Every time range mentioned in `text`, in order of appearance.
pub fn resolve_ranges(text: &str, now: Timestamp) -> Vec<TimeRange> {
    let today = now.to_datetime().date_naive();
    let mut found: Vec<(usize, TimeRange)> = Vec::new();
    for c in EXPLICIT.captures_iter(text) {
        let whole = c.get(0).expect("match");
        let range = if let (Some(a), Some(b)) = (c.get(1).or(c.get(3)), c.get(2).or(c.get(4))) {
            date(a.as_str()).zip(date(b.as_str())).map(|(a, b)| days(whole.as_str(), a, b))
        } else {
            c.get(5).and_then(|d| date(d.as_str())).map(|d| days(whole.as_str(), d, d))
        };
        if let Some(r) = range {
            found.push((whole.start(), r));
        }
    }
    for m in RELATIVE.find_iter(text) {
        if let Some(r) = relative(m.as_str(), today) {
            found.push((m.start(), r));
        }
    }
    for c in MONTH_YEAR.captures_iter(text) {
        let whole = c.get(0).expect("match");
        let month = MONTHS
            .iter()
            .position(|m| m.eq_ignore_ascii_case(&c[1]))
            .map(|i| i as u32 + 1);
        let year: Option<i32> = c[2].parse().ok();
        if let Some((a, b)) = month.zip(year).and_then(|(m, y)| month_bounds(y, m)) {
            found.push((whole.start(), days(whole.as_str(), a, b)));
        }
    }
    found.sort_by_key(|(pos, _)| *pos);
    found.into_iter().map(|(_, r)| r).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> Timestamp {
        Timestamp::parse(s).unwrap()
    }

    #[test]
    fn weeks_are_iso() {
        // Wednesday
        let now = ts("2024-06-12T15:00:00Z");
        let r = resolve_ranges("Did I drink more coffee this week than last week?", now);
        assert_eq!(r.len(), 2);
        assert_eq!((r[0].start, r[0].end), (ts("2024-06-10"), ts("2024-06-16T23:59:59Z")));
        assert_eq!((r[1].start, r[1].end), (ts("2024-06-03"), ts("2024-06-09T23:59:59Z")));
    }

    #[test]
    fn explicit_and_month_ranges() {
        let now = ts("2024-01-15T00:00:00Z");
        let r = resolve_ranges("average close between 2024-06-03 and 2024-06-07 vs from 2024-05-01 to 2024-05-02", now);
        assert_eq!(r[0].start, ts("2024-06-03"));
        assert_eq!(r[0].end, ts("2024-06-07T23:59:59Z"));
        assert_eq!(r[1].start, ts("2024-05-01"));
        let r = resolve_ranges("average close in April 2024", now);
        assert_eq!((r[0].start, r[0].end), (ts("2024-04-01"), ts("2024-04-30T23:59:59Z")));
        let r = resolve_ranges("what about last month and yesterday", now);
        assert_eq!((r[0].start, r[0].end), (ts("2023-12-01"), ts("2023-12-31T23:59:59Z")));
        assert_eq!(r[1].start, ts("2024-01-14"));
        let r = resolve_ranges("on 2024-02-29 only", now);
        assert_eq!(r[0].end, ts("2024-02-29T23:59:59Z"));
        assert!(resolve_ranges("nothing here", now).is_empty());
    }
}
