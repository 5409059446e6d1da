use serde::{Deserialize, Serialize};

use super::panel::history_error;
use super::{dow_of, hour_of, DateRange, Lag, OdPair, Panel};
use crate::error::{Error, Result};

pub const TOD_FIRST_HOUR: u32 = 7;
pub const N_TOD: usize = 16;
pub const N_DOW: usize = 7;

/// Which blocks go into a feature vector.
///
/// The univariate models use `ar_order` own lags. Setting `od_onehot`
/// appends a pair indicator (one model shared by all pairs); setting
/// `cross_lag_order = Some(p)` replaces the own lags by the last `p` lags of
/// every pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub ar_order: usize,
    pub exam_period: Option<DateRange>,
    pub od_onehot: bool,
    pub cross_lag_order: Option<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            ar_order: 24,
            exam_period: None,
            od_onehot: false,
            cross_lag_order: None,
        }
    }
}

impl FeatureConfig {
    pub fn with_exam(mut self, period: DateRange) -> Self {
        self.exam_period = Some(period);
        self
    }

    pub fn history_needed(&self) -> usize {
        self.cross_lag_order.unwrap_or(self.ar_order)
    }

    pub fn len(&self, n_pairs: usize) -> usize {
        let lags = match self.cross_lag_order {
            Some(p) => p * n_pairs,
            None => self.ar_order,
        };
        N_TOD
            + N_DOW
            + usize::from(self.exam_period.is_some())
            + lags
            + if self.od_onehot { n_pairs } else { 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagFeatures {
    pub tod_onehot: [u8; N_TOD],
    pub dow_onehot: [u8; N_DOW],
    pub exam_flag: u8,
    /// `y_{t-1}, ..., y_{t-ar_order}`, most recent first. Empty in
    /// cross-lag mode.
    pub ar_lags: Vec<f64>,
    pub od_onehot: Option<Vec<u8>>,
    /// Pair-major: `y^(1)_{t-1}..y^(1)_{t-p}, y^(2)_{t-1}, ...`.
    pub cross_lags: Option<Vec<f64>>,
    include_exam: bool,
}

impl LagFeatures {
    /// Flattened layout: TOD, DOW, exam (if enabled), own or cross lags, OD
    /// indicator.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v: Vec<f64> = Vec::with_capacity(64);
        v.extend(self.tod_onehot.iter().map(|b| *b as f64));
        v.extend(self.dow_onehot.iter().map(|b| *b as f64));
        if self.include_exam {
            v.push(self.exam_flag as f64);
        }
        match &self.cross_lags {
            Some(c) => v.extend_from_slice(c),
            None => v.extend_from_slice(&self.ar_lags),
        }
        if let Some(o) = &self.od_onehot {
            v.extend(o.iter().map(|b| *b as f64));
        }
        v
    }
}

/// Feature vector for `pair` at lag `t`, using the retained lags that
/// precede `t` positionally in `history`.
pub fn build_features(
    history: &Panel,
    t: &Lag,
    pair: OdPair,
    cfg: &FeatureConfig,
) -> Result<LagFeatures> {
    let hour = hour_of(t);
    if !(TOD_FIRST_HOUR..TOD_FIRST_HOUR + N_TOD as u32).contains(&hour) {
        return Err(Error::Precondition(format!(
            "hour {hour} is outside the modelled service hours {}..={}",
            TOD_FIRST_HOUR,
            TOD_FIRST_HOUR + N_TOD as u32 - 1
        )));
    }
    let mut tod_onehot = [0u8; N_TOD];
    tod_onehot[(hour - TOD_FIRST_HOUR) as usize] = 1;
    let mut dow_onehot = [0u8; N_DOW];
    dow_onehot[dow_of(t) as usize] = 1;
    let exam_flag = cfg
        .exam_period
        .map(|r| u8::from(r.contains_lag(t)))
        .unwrap_or(0);

    let own_idx = history
        .pair_index(pair)
        .ok_or_else(|| history_error(history, pair, t, "pair not in history".into()))?;

    let (ar_lags, cross_lags) = match cfg.cross_lag_order {
        None => {
            let s = &history.series[own_idx];
            let pos = s
                .position(t)
                .ok_or_else(|| history_error(history, pair, t, "lag not in series".into()))?;
            if pos < cfg.ar_order {
                return Err(history_error(
                    history,
                    pair,
                    t,
                    format!("{pos} earlier lags, need {}", cfg.ar_order),
                ));
            }
            let lags = (1..=cfg.ar_order).map(|k| s.value[pos - k]).collect();
            (lags, None)
        }
        Some(p) => {
            let mut cross = Vec::with_capacity(p * history.n_pairs());
            for s in &history.series {
                let pos = s.position(t).ok_or_else(|| {
                    history_error(
                        history,
                        pair,
                        t,
                        format!("lag missing for pair {}", history.locations.pair_label(s.pair)),
                    )
                })?;
                if pos < p {
                    return Err(history_error(
                        history,
                        pair,
                        t,
                        format!("{pos} earlier lags, need {p}"),
                    ));
                }
                cross.extend((1..=p).map(|k| s.value[pos - k]));
            }
            (Vec::new(), Some(cross))
        }
    };

    let od_onehot = cfg.od_onehot.then(|| {
        let mut o = vec![0u8; history.n_pairs()];
        o[own_idx] = 1;
        o
    });

    Ok(LagFeatures {
        tod_onehot,
        dow_onehot,
        exam_flag,
        ar_lags,
        od_onehot,
        cross_lags,
        include_exam: cfg.exam_period.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{parse_lag, LocationIndex, WorkingSeries};
    use chrono::NaiveDate;

    /// Full-calendar panel with `n_pairs` pairs, values = position + 100*pair.
    fn panel(n_locations: usize, start: &str, hours: usize) -> Panel {
        let loc = LocationIndex::new((0..n_locations).map(|i| format!("g{i}")).collect()).unwrap();
        let t0 = parse_lag(start).unwrap();
        let series = loc
            .all_pairs()
            .into_iter()
            .enumerate()
            .map(|(j, pair)| {
                let t: Vec<Lag> = (0..hours)
                    .map(|i| t0 + chrono::Duration::hours(i as i64))
                    .collect();
                let value: Vec<f64> = (0..hours).map(|i| (i + 100 * j) as f64).collect();
                WorkingSeries {
                    pair,
                    prev: vec![0.0; hours],
                    count: value.clone(),
                    t,
                    value,
                }
            })
            .collect();
        Panel {
            locations: loc,
            series,
        }
    }

    #[test]
    fn monday_eight_am() {
        let p = panel(2, "2018-01-06T00", 80);
        let t = parse_lag("2018-01-08T08").unwrap();
        let f = build_features(&p, &t, p.pairs()[0], &FeatureConfig::default()).unwrap();
        assert_eq!(f.dow_onehot[0], 1);
        assert_eq!(f.tod_onehot.iter().sum::<u8>(), 1);
        assert_eq!(f.tod_onehot[(8 - TOD_FIRST_HOUR) as usize], 1);
        assert_eq!(f.ar_lags.len(), 24);
        // position of t is 56; most recent lag first
        assert_eq!(f.ar_lags[0], 55.0);
        assert_eq!(f.ar_lags[23], 32.0);
    }

    #[test]
    fn exam_flag_inside_period() {
        let exam = DateRange::new(
            NaiveDate::from_ymd_opt(2017, 12, 8).unwrap(),
            NaiveDate::from_ymd_opt(2017, 12, 22).unwrap(),
        )
        .unwrap();
        let cfg = FeatureConfig::default().with_exam(exam);
        let p = panel(2, "2017-12-05T00", 24 * 20);
        let inside = parse_lag("2017-12-10T12").unwrap();
        let outside = parse_lag("2017-12-23T12").unwrap();
        let f = build_features(&p, &inside, p.pairs()[0], &cfg).unwrap();
        assert_eq!(f.exam_flag, 1);
        assert_eq!(f.to_vec().len(), cfg.len(2));
        let g = build_features(&p, &outside, p.pairs()[0], &cfg).unwrap();
        assert_eq!(g.exam_flag, 0);
    }

    #[test]
    fn cross_lag_block_dimension() {
        let p = panel(6, "2018-01-08T00", 30);
        assert_eq!(p.n_pairs(), 30);
        let cfg = FeatureConfig {
            cross_lag_order: Some(1),
            ..FeatureConfig::default()
        };
        let t = parse_lag("2018-01-08T10").unwrap();
        let f = build_features(&p, &t, p.pairs()[3], &cfg).unwrap();
        let cross = f.cross_lags.as_ref().unwrap();
        assert_eq!(cross.len(), 30);
        assert_eq!(cross[1], 9.0 + 100.0);
        assert_eq!(f.to_vec().len(), N_TOD + N_DOW + 30);
    }

    #[test]
    fn od_onehot_marks_own_pair() {
        let p = panel(3, "2018-01-08T00", 40);
        let cfg = FeatureConfig {
            od_onehot: true,
            ..FeatureConfig::default()
        };
        let t = parse_lag("2018-01-09T09").unwrap();
        let f = build_features(&p, &t, p.pairs()[4], &cfg).unwrap();
        let o = f.od_onehot.unwrap();
        assert_eq!(o.len(), 6);
        assert_eq!(o[4], 1);
        assert_eq!(o.iter().map(|b| *b as usize).sum::<usize>(), 1);
    }

    #[test]
    fn insufficient_history_and_masked_hour() {
        let p = panel(2, "2018-01-08T00", 40);
        let early = parse_lag("2018-01-08T10").unwrap();
        assert!(matches!(
            build_features(&p, &early, p.pairs()[0], &FeatureConfig::default()),
            Err(Error::InsufficientHistory { .. })
        ));
        let night = parse_lag("2018-01-09T03").unwrap();
        assert!(build_features(&p, &night, p.pairs()[0], &FeatureConfig::default()).is_err());
    }

    #[test]
    fn features_are_deterministic() {
        let p = panel(3, "2018-01-08T00", 60);
        let t = parse_lag("2018-01-09T15").unwrap();
        let cfg = FeatureConfig::default();
        let a = build_features(&p, &t, p.pairs()[2], &cfg).unwrap().to_vec();
        let b = build_features(&p, &t, p.pairs()[2], &cfg).unwrap().to_vec();
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
}
