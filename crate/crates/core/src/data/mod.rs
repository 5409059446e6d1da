//! OD movement-count series: ingestion, differencing, masking and the
//! train/test calendar split.

mod adf;
mod features;
mod panel;

pub use adf::{adf_test, schwert_max_lag, AdfResult};
pub use features::{build_features, FeatureConfig, LagFeatures, N_DOW, N_TOD, TOD_FIRST_HOUR};
pub use panel::{check_stationarity, Panel, WorkingSeries};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Timestamps are truncated to the hour; on disk they are written as
/// `YYYY-MM-DDTHH`.
pub type Lag = NaiveDateTime;

pub fn parse_lag(s: &str) -> Option<Lag> {
    let s = s.trim();
    let (date, hour) = s.split_once('T')?;
    let date = NaiveDate::parse_from_str(date, "%Y-%m-%d").ok()?;
    // Accept "08", "08:00" and "08:00:00".
    let hour: u32 = hour.split(':').next()?.parse().ok()?;
    date.and_hms_opt(hour, 0, 0)
}

pub fn format_lag(t: &Lag) -> String {
    t.format("%Y-%m-%dT%H").to_string()
}

/// Hour of day, 0..=23.
pub fn hour_of(t: &Lag) -> u32 {
    t.hour()
}

/// Day of week with 0 = Monday.
pub fn dow_of(t: &Lag) -> u32 {
    t.weekday().num_days_from_monday()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: usize,
    pub label: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OdPair {
    pub origin: usize,
    pub destination: usize,
}

impl OdPair {
    pub fn new(origin: usize, destination: usize) -> Result<Self> {
        if origin == destination {
            return Err(Error::Invalid(format!(
                "self-loop OD pair ({origin}, {destination})"
            )));
        }
        Ok(Self {
            origin,
            destination,
        })
    }
}

impl fmt::Display for OdPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.origin, self.destination)
    }
}

/// Dense label <-> id mapping for the serviced locations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationIndex {
    labels: Vec<String>,
}

impl LocationIndex {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        let unique: BTreeSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(Error::Invalid("duplicate location labels".into()));
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn pair_label(&self, pair: OdPair) -> String {
        format!("{}->{}", self.label(pair.origin), self.label(pair.destination))
    }

    /// All ordered pairs of distinct locations, origin-major.
    pub fn all_pairs(&self) -> Vec<OdPair> {
        let n = self.len();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1));
        for o in 0..n {
            for d in 0..n {
                if o != d {
                    out.push(OdPair {
                        origin: o,
                        destination: d,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OdCountSeries {
    pub pair: OdPair,
    pub observations: Vec<(Lag, u32)>,
}

impl OdCountSeries {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn mask(&self, spec: &SplitSpec) -> Self {
        Self {
            pair: self.pair,
            observations: mask_lags(&self.observations, spec),
        }
    }
}

/// Count data for every OD pair, keyed by pair, together with the label
/// index that resolves pair ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OdCounts {
    pub locations: LocationIndex,
    pub series: BTreeMap<OdPair, OdCountSeries>,
}

impl OdCounts {
    pub fn pairs(&self) -> Vec<OdPair> {
        self.series.keys().copied().collect()
    }

    /// Count of `pair` at `t`, if observed.
    pub fn count_at(&self, pair: OdPair, t: &Lag) -> Option<u32> {
        let s = self.series.get(&pair)?;
        s.observations
            .binary_search_by(|(lag, _)| lag.cmp(t))
            .ok()
            .map(|i| s.observations[i].1)
    }
}

/// Parses the canonical CSV: header row, then
/// `timestamp, origin_label, destination_label, count`.
///
/// Locations are indexed in sorted label order so that ids do not depend on
/// row order.
pub fn read_od_counts<R: Read>(reader: R) -> Result<OdCounts> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut rows: Vec<(usize, Lag, String, String, u32)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if rec.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let t = parse_lag(&rec[0]).ok_or_else(|| Error::Parse {
            line,
            message: format!("bad timestamp {:?}", &rec[0]),
        })?;
        let origin = rec[1].to_string();
        let destination = rec[2].to_string();
        if origin.is_empty() || destination.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty location label".into(),
            });
        }
        if origin == destination {
            return Err(Error::Parse {
                line,
                message: format!("self-loop OD pair {origin}->{destination}"),
            });
        }
        let count: u32 = rec[3].parse().map_err(|_| Error::Parse {
            line,
            message: format!("count {:?} is not a non-negative integer", &rec[3]),
        })?;
        rows.push((line, t, origin, destination, count));
    }

    let labels: BTreeSet<&String> = rows.iter().flat_map(|r| [&r.2, &r.3]).collect();
    let locations = LocationIndex::new(labels.into_iter().cloned().collect())?;

    let mut seen: BTreeMap<(OdPair, Lag), usize> = BTreeMap::new();
    let mut series: BTreeMap<OdPair, OdCountSeries> = BTreeMap::new();
    for (line, t, o, d, count) in rows {
        let pair = OdPair {
            origin: locations.id(&o).expect("indexed"),
            destination: locations.id(&d).expect("indexed"),
        };
        if let Some(first) = seen.insert((pair, t), line) {
            return Err(Error::Parse {
                line,
                message: format!(
                    "duplicate row for {o}->{d} at {} (first seen on line {first})",
                    format_lag(&t)
                ),
            });
        }
        series
            .entry(pair)
            .or_insert_with(|| OdCountSeries {
                pair,
                observations: Vec::new(),
            })
            .observations
            .push((t, count));
    }
    for s in series.values_mut() {
        s.observations.sort_by_key(|(t, _)| *t);
    }
    Ok(OdCounts { locations, series })
}

pub fn load_od_counts(path: &Path) -> Result<OdCounts> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_od_counts(std::io::BufReader::new(f))
}

/// Rows are written in timestamp order, then origin/destination label order.
pub fn write_od_counts<W: Write>(counts: &OdCounts, writer: W) -> Result<()> {
    let mut rows: Vec<(Lag, &str, &str, u32)> = Vec::new();
    for s in counts.series.values() {
        let o = counts.locations.label(s.pair.origin);
        let d = counts.locations.label(s.pair.destination);
        for (t, c) in &s.observations {
            rows.push((*t, o, d, *c));
        }
    }
    rows.sort();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "origin", "destination", "count"])?;
    for (t, o, d, c) in rows {
        w.write_record([format_lag(&t), o.to_string(), d.to_string(), c.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_od_counts(counts: &OdCounts, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_od_counts(counts, std::io::BufWriter::new(f))
}

/// One differenced lag: `value = y_t - y_{t-1}`, with the previous count
/// kept for reconstruction on the count scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffPoint {
    pub t: Lag,
    pub value: i64,
    pub prev: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffSeries {
    pub pair: OdPair,
    pub points: Vec<DiffPoint>,
}

impl DiffSeries {
    pub fn values(&self) -> Vec<i64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn mask(&self, spec: &SplitSpec) -> Self {
        Self {
            pair: self.pair,
            points: mask_lags(&self.points, spec),
        }
    }
}

/// First differences within each contiguous hourly block. The first lag of a
/// block has no predecessor and is dropped, so no difference spans a gap.
pub fn difference(series: &OdCountSeries) -> Result<DiffSeries> {
    if series.len() < 2 {
        return Err(Error::Precondition(format!(
            "series {} has {} observations; differencing needs at least 2",
            series.pair,
            series.len()
        )));
    }
    let points = series
        .observations
        .windows(2)
        .filter(|w| w[1].0 - w[0].0 == chrono::Duration::hours(1))
        .map(|w| DiffPoint {
            t: w[1].0,
            value: w[1].1 as i64 - w[0].1 as i64,
            prev: w[0].1,
        })
        .collect();
    Ok(DiffSeries {
        pair: series.pair,
        points,
    })
}

/// Inverse of [`difference`] on one contiguous block.
pub fn cumulative_sum(start: i64, diffs: &[i64]) -> Vec<i64> {
    let mut out = Vec::with_capacity(diffs.len() + 1);
    out.push(start);
    let mut acc = start;
    for d in diffs {
        acc += d;
        out.push(acc);
    }
    out
}

pub trait Timestamped {
    fn lag(&self) -> Lag;
}

impl Timestamped for (Lag, u32) {
    fn lag(&self) -> Lag {
        self.0
    }
}

impl Timestamped for DiffPoint {
    fn lag(&self) -> Lag {
        self.t
    }
}

impl Timestamped for Lag {
    fn lag(&self) -> Lag {
        *self
    }
}

/// Drops every lag whose hour is masked or whose date falls in a masked
/// date range. Order is preserved.
pub fn mask_lags<T: Timestamped + Clone>(points: &[T], spec: &SplitSpec) -> Vec<T> {
    points
        .iter()
        .filter(|p| !spec.is_masked(&p.lag()))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::Invalid(format!("date range {start}..{end} is reversed")));
        }
        Ok(Self { start, end })
    }

    /// Inclusive on both ends.
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    pub fn contains_lag(&self, t: &Lag) -> bool {
        self.contains(t.date())
    }

    pub fn overlaps(&self, other: &DateRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.start.iter_days().take_while(move |d| *d <= self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: DateRange,
    pub test: DateRange,
    pub masked_hours: BTreeSet<u32>,
    pub masked_dates: Vec<DateRange>,
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

impl SplitSpec {
    /// Campus case-study calendar: 52 training days, a 7-day test week,
    /// night hours 23:00-06:59 and the Christmas break masked.
    pub fn campus_preset() -> Self {
        Self {
            train: DateRange {
                start: ymd(2017, 11, 17),
                end: ymd(2018, 1, 7),
            },
            test: DateRange {
                start: ymd(2018, 1, 8),
                end: ymd(2018, 1, 14),
            },
            masked_hours: [23, 0, 1, 2, 3, 4, 5, 6].into_iter().collect(),
            masked_dates: vec![DateRange {
                start: ymd(2017, 12, 23),
                end: ymd(2018, 1, 1),
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train.end >= self.test.start {
            return Err(Error::Invalid(format!(
                "train range {}..{} must end before test range starts ({})",
                self.train.start, self.train.end, self.test.start
            )));
        }
        if let Some(h) = self.masked_hours.iter().find(|h| **h > 23) {
            return Err(Error::Invalid(format!("masked hour {h} out of range")));
        }
        Ok(())
    }

    pub fn is_masked(&self, t: &Lag) -> bool {
        self.masked_hours.contains(&t.hour())
            || self.masked_dates.iter().any(|r| r.contains_lag(t))
    }

    pub fn in_train(&self, t: &Lag) -> bool {
        self.train.contains_lag(t)
    }

    pub fn in_test(&self, t: &Lag) -> bool {
        self.test.contains_lag(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lag(s: &str) -> Lag {
        parse_lag(s).unwrap()
    }

    fn series(start: &str, counts: &[u32]) -> OdCountSeries {
        let t0 = lag(start);
        OdCountSeries {
            pair: OdPair::new(0, 1).unwrap(),
            observations: counts
                .iter()
                .enumerate()
                .map(|(i, c)| (t0 + chrono::Duration::hours(i as i64), *c))
                .collect(),
        }
    }

    #[test]
    fn parses_small_file() {
        let csv = "timestamp,origin,destination,count\n\
                   2017-11-17T08,g10,g20,5\n\
                   2017-11-17T09,g10,g20,7\n\
                   2017-11-17T08,g20,g10,1\n\
                   2017-11-17T09,g20,g10,0\n";
        let counts = read_od_counts(csv.as_bytes()).unwrap();
        assert_eq!(counts.series.len(), 2);
        assert!(counts.series.values().all(|s| s.len() == 2));
        let p = OdPair::new(0, 1).unwrap();
        assert_eq!(counts.count_at(p, &lag("2017-11-17T09")), Some(7));
    }

    #[test]
    fn rejects_self_loop_with_line_number() {
        let csv = "timestamp,origin,destination,count\n2017-11-17T08,g10,g10,5\n";
        match read_od_counts(csv.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("self-loop"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_integer_and_duplicates() {
        let bad = "timestamp,origin,destination,count\n2017-11-17T08,a,b,2.5\n";
        assert!(matches!(
            read_od_counts(bad.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let neg = "timestamp,origin,destination,count\n2017-11-17T08,a,b,-1\n";
        assert!(read_od_counts(neg.as_bytes()).is_err());
        let dup = "timestamp,origin,destination,count\n\
                   2017-11-17T08,a,b,1\n2017-11-17T09,a,b,1\n2017-11-17T08,a,b,3\n";
        assert!(matches!(
            read_od_counts(dup.as_bytes()),
            Err(Error::Parse { line: 4, .. })
        ));
    }

    #[test]
    fn difference_examples() {
        let d = difference(&series("2017-11-17T08", &[5, 8, 6])).unwrap();
        assert_eq!(d.values(), vec![3, -2]);
        let d = difference(&series("2017-11-17T08", &[4, 4, 4, 4])).unwrap();
        assert_eq!(d.values(), vec![0, 0, 0]);
        assert!(difference(&series("2017-11-17T08", &[4])).is_err());
    }

    #[test]
    fn difference_skips_gaps() {
        let mut s = series("2017-11-17T08", &[1, 2, 3]);
        s.observations.push((lag("2017-11-17T20"), 10));
        s.observations.push((lag("2017-11-17T21"), 4));
        let d = difference(&s).unwrap();
        assert_eq!(d.values(), vec![1, 1, -6]);
        assert_eq!(d.points[2].prev, 10);
    }

    #[test]
    fn mask_hours_and_dates() {
        let s = series("2017-12-20T00", &vec![1; 24 * 6]);
        let spec = SplitSpec::campus_preset();
        let masked = s.mask(&spec);
        // 20, 21, 22 Dec kept (16 hours each); 23..25 Dec inside the break.
        assert_eq!(masked.len(), 3 * 16);
        assert!(masked
            .observations
            .iter()
            .all(|(t, _)| (7..=22).contains(&t.hour())));

        let mut everything = spec.clone();
        everything.masked_dates = vec![DateRange::new(ymd(2017, 1, 1), ymd(2019, 1, 1)).unwrap()];
        assert!(s.mask(&everything).is_empty());
    }

    #[test]
    fn preset_is_valid() {
        let spec = SplitSpec::campus_preset();
        spec.validate().unwrap();
        assert_eq!(spec.train.days().count(), 52);
        assert_eq!(spec.test.days().count(), 7);
        let mut bad = spec;
        bad.test.start = bad.train.end;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn dow_monday_is_zero() {
        // 8 Jan 2018 was a Monday.
        assert_eq!(dow_of(&lag("2018-01-08T08")), 0);
        assert_eq!(dow_of(&lag("2018-01-14T08")), 6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn difference_cumsum_roundtrip(counts in proptest::collection::vec(0u32..500, 2..60)) {
                let s = series("2017-11-20T00", &counts);
                let d = difference(&s).unwrap();
                let rebuilt = cumulative_sum(counts[0] as i64, &d.values());
                let original: Vec<i64> = counts.iter().map(|c| *c as i64).collect();
                prop_assert_eq!(rebuilt, original);
            }

            #[test]
            fn mask_is_idempotent(counts in proptest::collection::vec(0u32..50, 1..200), start_hour in 0u32..24) {
                let s = series(&format!("2017-12-21T{start_hour:02}"), &counts);
                let spec = SplitSpec::campus_preset();
                let once = s.mask(&spec);
                let twice = once.mask(&spec);
                prop_assert_eq!(once, twice);
            }
        }
    }
}
