use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::level_index;
use crate::data::{format_lag, parse_lag, Lag, LocationIndex, OdPair};
use crate::error::{Error, Result};

/// Predicted quantiles of one OD pair at one lag, on the count scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileForecast {
    pub pair: OdPair,
    pub lag: Lag,
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
}

impl QuantileForecast {
    pub fn value_at(&self, q: f64) -> Option<f64> {
        level_index(&self.levels, q).map(|i| self.values[i])
    }

    pub fn require(&self, q: f64) -> Result<f64> {
        self.value_at(q).ok_or_else(|| Error::Missing {
            what: "quantile level",
            detail: format!("{q} not forecast for pair {} at {}", self.pair, format_lag(&self.lag)),
        })
    }

    pub fn is_sorted(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }

    /// A point-mass forecast: every level takes `value`.
    pub fn constant(pair: OdPair, lag: Lag, levels: &[f64], value: f64) -> Self {
        Self {
            pair,
            lag,
            levels: levels.to_vec(),
            values: vec![value; levels.len()],
        }
    }

    /// Clips at zero and optionally sorts ascending across levels.
    pub(crate) fn finish(pair: OdPair, lag: Lag, levels: &[f64], mut values: Vec<f64>, sort: bool) -> Self {
        for v in values.iter_mut() {
            *v = v.max(0.0);
        }
        if sort {
            values.sort_by(f64::total_cmp);
        }
        Self {
            pair,
            lag,
            levels: levels.to_vec(),
            values,
        }
    }
}

/// CSV with columns `timestamp, origin, destination, q, value`.
pub fn write_forecasts<W: Write>(
    forecasts: &[QuantileForecast],
    locations: &LocationIndex,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "origin", "destination", "q", "value"])?;
    for f in forecasts {
        for (q, v) in f.levels.iter().zip(&f.values) {
            w.write_record([
                format_lag(&f.lag),
                locations.label(f.pair.origin).to_string(),
                locations.label(f.pair.destination).to_string(),
                format!("{q}"),
                format!("{v}"),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Inverse of [`write_forecasts`]. Rows for the same (lag, pair) are grouped
/// and ordered by level.
pub fn read_forecasts<R: Read>(reader: R, locations: &LocationIndex) -> Result<Vec<QuantileForecast>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut grouped: BTreeMap<(Lag, OdPair), Vec<(f64, f64)>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let bad = |m: String| Error::Parse { line, message: m };
        if rec.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", rec.len())));
        }
        let t = parse_lag(&rec[0]).ok_or_else(|| bad(format!("bad timestamp {:?}", &rec[0])))?;
        let o = locations
            .id(&rec[1])
            .ok_or_else(|| bad(format!("unknown location {:?}", &rec[1])))?;
        let d = locations
            .id(&rec[2])
            .ok_or_else(|| bad(format!("unknown location {:?}", &rec[2])))?;
        let pair = OdPair::new(o, d).map_err(|e| bad(e.to_string()))?;
        let q: f64 = rec[3].parse().map_err(|_| bad(format!("bad level {:?}", &rec[3])))?;
        let v: f64 = rec[4].parse().map_err(|_| bad(format!("bad value {:?}", &rec[4])))?;
        grouped.entry((t, pair)).or_default().push((q, v));
    }
    Ok(grouped
        .into_iter()
        .map(|((lag, pair), mut qv)| {
            qv.sort_by(|a, b| a.0.total_cmp(&b.0));
            QuantileForecast {
                pair,
                lag,
                levels: qv.iter().map(|x| x.0).collect(),
                values: qv.iter().map(|x| x.1).collect(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finish_clips_and_sorts() {
        let pair = OdPair::new(0, 1).unwrap();
        let t = parse_lag("2018-01-08T08").unwrap();
        let f = QuantileForecast::finish(pair, t, &[0.25, 0.5, 0.75], vec![3.0, 2.0, 5.0], true);
        assert_eq!(f.values, vec![2.0, 3.0, 5.0]);
        let g = QuantileForecast::finish(pair, t, &[0.25, 0.5, 0.75], vec![-4.0, 2.0, 1.0], false);
        assert_eq!(g.values, vec![0.0, 2.0, 1.0]);
        assert!(!g.is_sorted());
    }

    #[test]
    fn csv_roundtrip() {
        let loc = LocationIndex::new(vec!["a".into(), "b".into()]).unwrap();
        let t = parse_lag("2018-01-08T08").unwrap();
        let fs = vec![
            QuantileForecast {
                pair: OdPair::new(0, 1).unwrap(),
                lag: t,
                levels: vec![0.05, 0.5, 0.95],
                values: vec![0.1, 2.0 / 3.0, 7.25],
            },
            QuantileForecast {
                pair: OdPair::new(1, 0).unwrap(),
                lag: t,
                levels: vec![0.05, 0.5, 0.95],
                values: vec![0.0, 1e-17, 1e6],
            },
        ];
        let mut buf = Vec::new();
        write_forecasts(&fs, &loc, &mut buf).unwrap();
        let back = read_forecasts(buf.as_slice(), &loc).unwrap();
        assert_eq!(back, fs);
    }
}
