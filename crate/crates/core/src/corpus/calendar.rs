//! Exchange calendars and the news-to-trading-day assignment rule.
//!
//! A trading day `t` owns every timestamp in
//! `[open(t-1) - cutoff, open(t) - cutoff)`, where `t-1` is the previous
//! trading day. Timestamps on weekends and holidays therefore roll into the
//! window of the next session.

use std::path::Path;

use chrono::{DateTime, Datelike, Duration, FixedOffset, NaiveDate, NaiveTime, TimeZone, Utc, Weekday};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// On-disk calendar description.
///
/// Either `trading_days` is listed explicitly, or it is generated from
/// weekdays in `[start, end]` minus `holidays`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalendarSpec {
    pub exchange: String,
    pub timezone: String,
    /// Local market open, `HH:MM`.
    pub market_open: String,
    #[serde(default = "default_cutoff_minutes")]
    pub cutoff_minutes: i64,
    #[serde(default)]
    pub start: Option<NaiveDate>,
    #[serde(default)]
    pub end: Option<NaiveDate>,
    #[serde(default)]
    pub holidays: Vec<NaiveDate>,
    #[serde(default)]
    pub trading_days: Vec<NaiveDate>,
}

fn default_cutoff_minutes() -> i64 {
    30
}

#[derive(Debug, Clone)]
pub struct ExchangeCalendar {
    exchange: String,
    timezone: Tz,
    market_open: NaiveTime,
    cutoff: Duration,
    days: Vec<NaiveDate>,
    /// `open(day) - cutoff` for every trading day, as UTC instants.
    cutoffs: Vec<DateTime<Utc>>,
}

impl ExchangeCalendar {
    pub fn new(
        exchange: impl Into<String>,
        timezone: Tz,
        market_open: NaiveTime,
        cutoff: Duration,
        days: Vec<NaiveDate>,
    ) -> Result<Self> {
        if cutoff <= Duration::zero() {
            return Err(Error::Parameter("calendar cutoff offset must be positive".into()));
        }
        if days.is_empty() {
            return Err(Error::Parameter("calendar has no trading days".into()));
        }
        if days.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter("trading days must be strictly increasing".into()));
        }
        let cutoffs = days
            .iter()
            .map(|d| {
                let local = d.and_time(market_open);
                let open = timezone
                    .from_local_datetime(&local)
                    .earliest()
                    .ok_or_else(|| Error::Parameter(format!("market open does not exist on {d}")))?;
                Ok(open.with_timezone(&Utc) - cutoff)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            exchange: exchange.into(),
            timezone,
            market_open,
            cutoff,
            days,
            cutoffs,
        })
    }

    /// Weekdays in `[start, end]` that are not holidays.
    pub fn weekdays(
        exchange: impl Into<String>,
        timezone: Tz,
        market_open: NaiveTime,
        cutoff: Duration,
        start: NaiveDate,
        end: NaiveDate,
        holidays: &[NaiveDate],
    ) -> Result<Self> {
        let days = start
            .iter_days()
            .take_while(|d| *d <= end)
            .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
            .filter(|d| !holidays.contains(d))
            .collect();
        Self::new(exchange, timezone, market_open, cutoff, days)
    }

    pub fn from_spec(spec: &CalendarSpec) -> Result<Self> {
        let timezone: Tz = spec
            .timezone
            .parse()
            .map_err(|_| Error::Parameter(format!("unknown timezone `{}`", spec.timezone)))?;
        let market_open = NaiveTime::parse_from_str(&spec.market_open, "%H:%M")
            .map_err(|_| Error::Parameter(format!("market_open `{}` is not HH:MM", spec.market_open)))?;
        let cutoff = Duration::minutes(spec.cutoff_minutes);
        if !spec.trading_days.is_empty() {
            return Self::new(&spec.exchange, timezone, market_open, cutoff, spec.trading_days.clone());
        }
        match (spec.start, spec.end) {
            (Some(start), Some(end)) => Self::weekdays(
                &spec.exchange,
                timezone,
                market_open,
                cutoff,
                start,
                end,
                &spec.holidays,
            ),
            _ => Err(Error::Parameter(
                "calendar needs either trading_days or start/end".into(),
            )),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: CalendarSpec = toml::from_str(&text)
            .map_err(|e| Error::Parameter(format!("calendar {}: {e}", path.display())))?;
        Self::from_spec(&spec)
    }

    pub fn exchange(&self) -> &str {
        &self.exchange
    }

    pub fn timezone(&self) -> Tz {
        self.timezone
    }

    pub fn market_open(&self) -> NaiveTime {
        self.market_open
    }

    pub fn cutoff(&self) -> Duration {
        self.cutoff
    }

    pub fn trading_days(&self) -> &[NaiveDate] {
        &self.days
    }

    /// Assigns a publication time to the trading day whose news window
    /// contains it.
    ///
    /// The first listed trading day only anchors the window of the second,
    /// so coverage is `[cutoff(first), cutoff(last))`.
    pub fn assign_trading_day(&self, publish_time: DateTime<FixedOffset>) -> Result<NaiveDate> {
        let t = publish_time.with_timezone(&Utc);
        // Index of the first cutoff strictly after `t`.
        let idx = self.cutoffs.partition_point(|c| *c <= t);
        if idx == 0 || idx == self.cutoffs.len() {
            return Err(Error::CalendarGap(publish_time));
        }
        Ok(self.days[idx])
    }
}

/// Tokyo Stock Exchange style calendar over weekdays, handy for tests and
/// synthetic corpora.
pub fn tokyo_weekdays(start: NaiveDate, end: NaiveDate) -> ExchangeCalendar {
    ExchangeCalendar::weekdays(
        "XTKS",
        chrono_tz::Asia::Tokyo,
        NaiveTime::from_hms_opt(9, 0, 0).expect("valid time"),
        Duration::minutes(30),
        start,
        end,
        &[],
    )
    .expect("weekday calendar over a non-empty range")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jst(s: &str) -> DateTime<FixedOffset> {
        DateTime::parse_from_rfc3339(s).unwrap()
    }

    fn cal() -> ExchangeCalendar {
        tokyo_weekdays(
            NaiveDate::from_ymd_opt(2023, 1, 2).unwrap(),
            NaiveDate::from_ymd_opt(2023, 1, 31).unwrap(),
        )
    }

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2023, 1, d).unwrap()
    }

    #[test]
    fn before_cutoff_goes_to_same_day() {
        assert_eq!(cal().assign_trading_day(jst("2023-01-11T08:28:00+09:00")).unwrap(), day(11));
    }

    #[test]
    fn after_cutoff_goes_to_next_day() {
        assert_eq!(cal().assign_trading_day(jst("2023-01-11T08:50:00+09:00")).unwrap(), day(12));
    }

    #[test]
    fn exact_cutoff_belongs_to_next_window() {
        assert_eq!(cal().assign_trading_day(jst("2023-01-11T08:30:00+09:00")).unwrap(), day(12));
        assert_eq!(
            cal().assign_trading_day(jst("2023-01-11T08:29:59.999+09:00")).unwrap(),
            day(11)
        );
    }

    #[test]
    fn other_offsets_are_converted() {
        // 23:28 UTC on the 10th is 08:28 JST on the 11th.
        assert_eq!(cal().assign_trading_day(jst("2023-01-10T23:28:00+00:00")).unwrap(), day(11));
    }

    #[test]
    fn weekend_rolls_forward() {
        // Jan 6 2023 is a Friday.
        assert_eq!(cal().assign_trading_day(jst("2023-01-06T12:00:00+09:00")).unwrap(), day(9));
        assert_eq!(cal().assign_trading_day(jst("2023-01-08T22:00:00+09:00")).unwrap(), day(9));
    }

    #[test]
    fn holidays_are_skipped() {
        let c = ExchangeCalendar::weekdays(
            "XTKS",
            chrono_tz::Asia::Tokyo,
            NaiveTime::from_hms_opt(9, 0, 0).unwrap(),
            Duration::minutes(30),
            day(2),
            day(31),
            &[day(9)],
        )
        .unwrap();
        assert_eq!(c.assign_trading_day(jst("2023-01-06T12:00:00+09:00")).unwrap(), day(10));
    }

    #[test]
    fn outside_range_is_a_gap() {
        let c = cal();
        assert!(matches!(
            c.assign_trading_day(jst("2022-12-30T12:00:00+09:00")),
            Err(Error::CalendarGap(_))
        ));
        assert!(matches!(
            c.assign_trading_day(jst("2023-01-31T12:00:00+09:00")),
            Err(Error::CalendarGap(_))
        ));
    }

    #[test]
    fn rejects_bad_calendars() {
        let tz = chrono_tz::Asia::Tokyo;
        let open = NaiveTime::from_hms_opt(9, 0, 0).unwrap();
        assert!(ExchangeCalendar::new("X", tz, open, Duration::zero(), vec![day(3)]).is_err());
        assert!(ExchangeCalendar::new("X", tz, open, Duration::minutes(30), vec![day(4), day(3)]).is_err());
    }

    #[test]
    fn spec_round_trip_from_toml() {
        let spec: CalendarSpec = toml::from_str(
            r#"
            exchange = "XTKS"
            timezone = "Asia/Tokyo"
            market_open = "09:00"
            start = "2023-01-02"
            end = "2023-01-31"
            holidays = ["2023-01-09"]
            "#,
        )
        .unwrap();
        let c = ExchangeCalendar::from_spec(&spec).unwrap();
        assert_eq!(c.cutoff(), Duration::minutes(30));
        assert!(!c.trading_days().contains(&day(9)));
    }

    #[test]
    fn dst_exchange_uses_local_open() {
        let c = ExchangeCalendar::weekdays(
            "XNYS",
            chrono_tz::America::New_York,
            NaiveTime::from_hms_opt(9, 30, 0).unwrap(),
            Duration::minutes(30),
            NaiveDate::from_ymd_opt(2023, 3, 9).unwrap(),
            NaiveDate::from_ymd_opt(2023, 3, 16).unwrap(),
            &[],
        )
        .unwrap();
        // After the March 12 switch the cutoff is 13:00 UTC rather than 14:00.
        let t = jst("2023-03-13T13:30:00+00:00");
        assert_eq!(
            c.assign_trading_day(t).unwrap(),
            NaiveDate::from_ymd_opt(2023, 3, 14).unwrap()
        );
    }
}
