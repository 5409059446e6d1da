use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{dow_of, hour_of, DateRange, Lag, OdPair, Panel};

/// Mean and population standard deviation of the training values in one
/// (pair, day-of-week, hour) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonalCell {
    pub pair: OdPair,
    pub dow: u32,
    pub hour: u32,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalStats {
    cells: Vec<SeasonalCell>,
}

impl SeasonalStats {
    /// Statistics over lags of `panel` that fall in `train`.
    pub fn fit(panel: &Panel, train: &DateRange) -> Self {
        let mut acc: BTreeMap<(OdPair, u32, u32), Vec<f64>> = BTreeMap::new();
        for s in &panel.series {
            for (t, v) in s.t.iter().zip(&s.value) {
                if train.contains_lag(t) {
                    acc.entry((s.pair, dow_of(t), hour_of(t))).or_default().push(*v);
                }
            }
        }
        let mut zero_std = 0usize;
        let cells: Vec<SeasonalCell> = acc
            .into_iter()
            .map(|((pair, dow, hour), vals)| {
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let std = var.sqrt();
                if std == 0.0 {
                    zero_std += 1;
                }
                SeasonalCell {
                    pair,
                    dow,
                    hour,
                    mean,
                    std,
                }
            })
            .collect();
        if zero_std > 0 {
            warn!("{zero_std} seasonal cells have zero spread and pass through unscaled");
        }
        Self { cells }
    }

    pub fn cells(&self) -> &[SeasonalCell] {
        &self.cells
    }

    fn cell(&self, pair: OdPair, t: &Lag) -> Option<&SeasonalCell> {
        let key = (pair, dow_of(t), hour_of(t));
        self.cells
            .binary_search_by(|c| (c.pair, c.dow, c.hour).cmp(&key))
            .ok()
            .map(|i| &self.cells[i])
    }

    /// `(v - mean) / std`; identity for cells with zero spread or no
    /// training data.
    pub fn forward(&self, pair: OdPair, t: &Lag, v: f64) -> f64 {
        match self.cell(pair, t) {
            Some(c) if c.std > 0.0 => (v - c.mean) / c.std,
            _ => v,
        }
    }

    pub fn inverse(&self, pair: OdPair, t: &Lag, v: f64) -> f64 {
        match self.cell(pair, t) {
            Some(c) if c.std > 0.0 => v * c.std + c.mean,
            _ => v,
        }
    }

    pub fn normalize(&self, panel: &Panel) -> Panel {
        let pairs = panel.pairs();
        panel.map_values(|i, t, v| self.forward(pairs[i], t, v))
    }
}

/// The scale a model's targets and autoregressive features live on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum WorkingScale {
    #[default]
    Differenced,
    SeasonalNormalized(SeasonalStats),
}

impl WorkingScale {
    pub fn apply(&self, panel: &Panel) -> Panel {
        match self {
            WorkingScale::Differenced => panel.clone(),
            WorkingScale::SeasonalNormalized(s) => s.normalize(panel),
        }
    }

    /// Back to the differenced scale.
    pub fn invert(&self, pair: OdPair, t: &Lag, v: f64) -> f64 {
        match self {
            WorkingScale::Differenced => v,
            WorkingScale::SeasonalNormalized(s) => s.inverse(pair, t, v),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{parse_lag, LocationIndex, WorkingSeries};
    use chrono::NaiveDate;

    fn panel() -> (Panel, DateRange) {
        let loc = LocationIndex::new(vec!["a".into(), "b".into()]).unwrap();
        let t0 = parse_lag("2018-01-01T00").unwrap();
        let n = 24 * 28;
        let series = loc
            .all_pairs()
            .into_iter()
            .enumerate()
            .map(|(j, pair)| {
                let t: Vec<Lag> = (0..n).map(|i| t0 + chrono::Duration::hours(i as i64)).collect();
                let value = (0..n)
                    .map(|i| {
                        if j == 1 && i % 24 == 10 {
                            // constant cell
                            4.0
                        } else {
                            ((i * 31 + j * 7) % 17) as f64 - 8.0 + (i % 24) as f64
                        }
                    })
                    .collect();
                WorkingSeries {
                    pair,
                    t,
                    value,
                    prev: vec![0.0; n],
                    count: vec![0.0; n],
                }
            })
            .collect();
        let train = DateRange::new(
            NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2018, 1, 21).unwrap(),
        )
        .unwrap();
        (Panel { locations: loc, series }, train)
    }

    #[test]
    fn normalized_train_cells_are_standard() {
        let (p, train) = panel();
        let stats = SeasonalStats::fit(&p, &train);
        let norm = stats.normalize(&p);
        let mut cells: BTreeMap<(usize, u32, u32), Vec<f64>> = BTreeMap::new();
        for (j, s) in norm.series.iter().enumerate() {
            for (t, v) in s.t.iter().zip(&s.value) {
                if train.contains_lag(t) {
                    cells.entry((j, dow_of(t), hour_of(t))).or_default().push(*v);
                }
            }
        }
        for ((j, _, hour), vals) in cells {
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            if j == 1 && hour == 10 {
                // passthrough
                assert!(vals.iter().all(|v| *v == 4.0));
            } else {
                assert!(mean.abs() < 1e-9, "mean {mean}");
                assert!((std - 1.0).abs() < 1e-9, "std {std}");
            }
        }
    }

    #[test]
    fn inverse_is_exact() {
        let (p, train) = panel();
        let stats = SeasonalStats::fit(&p, &train);
        let norm = stats.normalize(&p);
        for (s, n) in p.series.iter().zip(&norm.series) {
            for ((t, v), w) in s.t.iter().zip(&s.value).zip(&n.value) {
                assert!((stats.inverse(s.pair, t, *w) - v).abs() < 1e-12);
            }
        }
    }
}
