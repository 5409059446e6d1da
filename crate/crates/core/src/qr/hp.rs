use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{percentile_linear, QuantileForecast};
use crate::data::{dow_of, hour_of, DateRange, Lag, OdPair, Panel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpBucket {
    pub pair: OdPair,
    pub dow: u32,
    pub hour: u32,
    /// Training counts in time order.
    pub history: Vec<(Lag, f64)>,
}

/// Historical percentiles: the forecast for lag `t` is the percentile of the
/// counts observed at the same weekday and hour strictly before `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpModel {
    pub levels: Vec<f64>,
    /// Location labels by index.
    pub labels: Vec<String>,
    pub buckets: Vec<HpBucket>,
}

/// Buckets the count-scale training data of every pair by (weekday, hour).
/// Levels may include 0 and 1 (min and max).
pub fn fit_hp(panel: &Panel, train: &DateRange, levels: &[f64]) -> Result<HpModel> {
    if levels.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(Error::Invalid(format!("levels must lie in [0, 1]: {levels:?}")));
    }
    let mut map: BTreeMap<(OdPair, u32, u32), Vec<(Lag, f64)>> = BTreeMap::new();
    for s in &panel.series {
        for (t, c) in s.t.iter().zip(&s.count) {
            if train.contains_lag(t) {
                map.entry((s.pair, dow_of(t), hour_of(t))).or_default().push((*t, *c));
            }
        }
    }
    let labels = panel.locations.labels().to_vec();
    Ok(HpModel {
        levels: levels.to_vec(),
        labels,
        buckets: map
            .into_iter()
            .map(|((pair, dow, hour), history)| HpBucket {
                pair,
                dow,
                hour,
                history,
            })
            .collect(),
    })
}

impl HpModel {
    pub fn predict(&self, pair: OdPair, t: &Lag) -> Result<QuantileForecast> {
        let (dow, hour) = (dow_of(t), hour_of(t));
        let empty = || {
            let label = |i: usize| self.labels.get(i).cloned().unwrap_or_else(|| i.to_string());
            Error::EmptyBucket {
                pair: format!("{}->{}", label(pair.origin), label(pair.destination)),
                dow,
                hour,
            }
        };
        let bucket = self
            .buckets
            .binary_search_by(|b| (b.pair, b.dow, b.hour).cmp(&(pair, dow, hour)))
            .map(|i| &self.buckets[i])
            .map_err(|_| empty())?;
        let mut vals: Vec<f64> = bucket
            .history
            .iter()
            .filter(|(k, _)| k < t)
            .map(|(_, v)| *v)
            .collect();
        if vals.is_empty() {
            return Err(empty());
        }
        vals.sort_by(f64::total_cmp);
        let values = self.levels.iter().map(|q| percentile_linear(&vals, *q)).collect();
        Ok(QuantileForecast::finish(pair, *t, &self.levels, values, true))
    }
}
