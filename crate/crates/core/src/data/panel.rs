use log::warn;

use super::{
    adf_test, difference, format_lag, schwert_max_lag, AdfResult, DateRange, Lag, LocationIndex,
    OdCounts, OdPair, SplitSpec,
};
use crate::error::{Error, Result};

/// Retained lags of one OD pair after differencing and masking.
///
/// `value` holds the working scale the models are fit on (differenced counts
/// unless rescaled); `prev` and `count` stay on the count scale.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingSeries {
    pub pair: OdPair,
    pub t: Vec<Lag>,
    pub value: Vec<f64>,
    pub prev: Vec<f64>,
    pub count: Vec<f64>,
}

impl WorkingSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn position(&self, t: &Lag) -> Option<usize> {
        self.t.binary_search(t).ok()
    }
}

/// All OD pairs on a shared pair order.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub locations: LocationIndex,
    pub series: Vec<WorkingSeries>,
}

impl Panel {
    /// Differences each pair within contiguous blocks, then removes masked
    /// lags.
    pub fn from_counts(counts: &OdCounts, spec: &SplitSpec) -> Result<Self> {
        let mut series = Vec::with_capacity(counts.series.len());
        for (pair, s) in &counts.series {
            let diff = difference(s)?.mask(spec);
            series.push(WorkingSeries {
                pair: *pair,
                t: diff.points.iter().map(|p| p.t).collect(),
                value: diff.points.iter().map(|p| p.value as f64).collect(),
                prev: diff.points.iter().map(|p| p.prev as f64).collect(),
                count: diff.points.iter().map(|p| (p.prev as i64 + p.value) as f64).collect(),
            });
        }
        Ok(Self {
            locations: counts.locations.clone(),
            series,
        })
    }

    pub fn pairs(&self) -> Vec<OdPair> {
        self.series.iter().map(|s| s.pair).collect()
    }

    pub fn n_pairs(&self) -> usize {
        self.series.len()
    }

    pub fn pair_index(&self, pair: OdPair) -> Option<usize> {
        self.series.iter().position(|s| s.pair == pair)
    }

    pub fn get(&self, pair: OdPair) -> Result<&WorkingSeries> {
        self.series
            .iter()
            .find(|s| s.pair == pair)
            .ok_or_else(|| Error::Missing {
                what: "OD pair",
                detail: self.locations.pair_label(pair),
            })
    }

    /// Same panel with every working value passed through `f(pair_index,
    /// lag, value)`.
    pub fn map_values<F>(&self, mut f: F) -> Self
    where
        F: FnMut(usize, &Lag, f64) -> f64,
    {
        let mut out = self.clone();
        for (i, s) in out.series.iter_mut().enumerate() {
            for (t, v) in s.t.iter().zip(s.value.iter_mut()) {
                *v = f(i, t, *v);
            }
        }
        out
    }

    /// Positions of lags in `range` that have at least `min_history` earlier
    /// retained lags.
    pub fn rows_in(&self, pair_idx: usize, range: &DateRange, min_history: usize) -> Vec<usize> {
        let s = &self.series[pair_idx];
        (0..s.len())
            .filter(|&i| i >= min_history && range.contains_lag(&s.t[i]))
            .collect()
    }
}

/// ADF on each pair's differenced training series. Pairs that fail to reject
/// a unit root are logged and kept.
pub fn check_stationarity(panel: &Panel, spec: &SplitSpec) -> Vec<(OdPair, Result<AdfResult>)> {
    panel
        .series
        .iter()
        .map(|s| {
            let values: Vec<f64> = s
                .t
                .iter()
                .zip(&s.value)
                .filter(|(t, _)| spec.in_train(t))
                .map(|(_, v)| *v)
                .collect();
            let lag = schwert_max_lag(values.len()).min(values.len().saturating_sub(4) / 2);
            let res = adf_test(&values, lag);
            match &res {
                Ok(r) if !r.reject_unit_root => warn!(
                    "pair {} may be non-stationary after differencing (ADF {:.3} vs {:.3})",
                    panel.locations.pair_label(s.pair),
                    r.statistic,
                    r.critical_value_1pct
                ),
                Err(e) => warn!(
                    "ADF failed for pair {}: {e}",
                    panel.locations.pair_label(s.pair)
                ),
                _ => {}
            }
            (s.pair, res)
        })
        .collect()
}

pub(crate) fn history_error(panel: &Panel, pair: OdPair, t: &Lag, detail: String) -> Error {
    Error::InsufficientHistory {
        pair: panel.locations.pair_label(pair),
        at: format_lag(t),
        detail,
    }
}
