//! Synthetic hourly OD counts with a seasonal profile and cross-pair
//! correlated noise.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{dow_of, hour_of, DateRange, Lag, LocationIndex, OdCountSeries, OdCounts, OdPair};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_locations: usize,
    /// Location labels; `L1`, `L2`, ... when absent.
    pub labels: Option<Vec<String>>,
    pub dates: DateRange,
    /// Mean count of a pair with scale 1 at a profile peak.
    pub intensity: f64,
    /// Multiplier per hour of day.
    pub tod_profile: Vec<f64>,
    /// Multiplier per day of week, Monday first.
    pub dow_profile: Vec<f64>,
    /// Per-pair multiplier in origin-major pair order; drawn from
    /// `[0.5, 1.5]` when absent.
    pub pair_scale: Option<Vec<f64>>,
    pub exam_period: Option<DateRange>,
    pub exam_multiplier: f64,
    /// Equicorrelation of the noise across pairs.
    pub rho: f64,
    /// Noise standard deviation relative to the square root of the mean.
    pub dispersion: f64,
    pub seed: u64,
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_locations: 6,
            labels: None,
            dates: DateRange {
                start: ymd(2017, 11, 17),
                end: ymd(2018, 1, 14),
            },
            intensity: 20.0,
            tod_profile: vec![
                0.02, 0.01, 0.01, 0.01, 0.01, 0.02, 0.05, 0.4, 1.0, 0.8, 0.6, 0.7, 1.0, 0.8, 0.6, 0.6, 0.8, 0.6,
                0.4, 0.3, 0.2, 0.15, 0.1, 0.05,
            ],
            dow_profile: vec![1.0, 1.0, 1.0, 1.0, 0.9, 0.3, 0.25],
            pair_scale: None,
            exam_period: Some(DateRange {
                start: ymd(2018, 1, 2),
                end: ymd(2018, 1, 14),
            }),
            exam_multiplier: 0.7,
            rho: 0.5,
            dispersion: 1.0,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_locations < 2 {
            return Err(Error::Invalid("n_locations: at least two locations are needed".into()));
        }
        if let Some(l) = &self.labels {
            if l.len() != self.n_locations {
                return Err(Error::Invalid(format!(
                    "labels: {} labels for {} locations",
                    l.len(),
                    self.n_locations
                )));
            }
        }
        if self.dates.start > self.dates.end {
            return Err(Error::Invalid("dates: start after end".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Invalid(format!("rho: {} is outside [0, 1]", self.rho)));
        }
        let nonneg = |name: &str, v: &[f64], len: usize| {
            if v.len() != len {
                return Err(Error::Invalid(format!("{name}: expected {len} values, found {}", v.len())));
            }
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::Invalid(format!("{name}: values must be finite and non-negative")));
            }
            Ok(())
        };
        nonneg("tod_profile", &self.tod_profile, 24)?;
        nonneg("dow_profile", &self.dow_profile, 7)?;
        let n_pairs = self.n_locations * (self.n_locations - 1);
        if let Some(s) = &self.pair_scale {
            nonneg("pair_scale", s, n_pairs)?;
        }
        nonneg("intensity", &[self.intensity], 1)?;
        nonneg("exam_multiplier", &[self.exam_multiplier], 1)?;
        nonneg("dispersion", &[self.dispersion], 1)?;
        Ok(())
    }

    pub fn locations(&self) -> Result<LocationIndex> {
        let labels = match &self.labels {
            Some(l) => l.clone(),
            None => {
                let w = self.n_locations.to_string().len();
                (1..=self.n_locations).map(|i| format!("L{i:0w$}")).collect()
            }
        };
        LocationIndex::new(labels)
    }

    /// Noise-free mean of `pair_scale * profile` at `t`.
    pub fn seasonal_mean(&self, scale: f64, t: &Lag) -> f64 {
        let exam = match &self.exam_period {
            Some(r) if r.contains_lag(t) => self.exam_multiplier,
            _ => 1.0,
        };
        self.intensity
            * scale
            * self.tod_profile[hour_of(t) as usize]
            * self.dow_profile[dow_of(t) as usize]
            * exam
    }
}

/// Counts for every ordered pair at every hour of the date range:
/// `round(max(0, mean + dispersion * sqrt(mean) * z))` where the `z` of one
/// hour are standard normal with pairwise correlation `rho`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<OdCounts> {
    spec.validate()?;
    let locations = spec.locations()?;
    // pair order follows the sorted labels so ids survive a CSV round trip
    let mut sorted = locations.labels().to_vec();
    sorted.sort();
    let locations = LocationIndex::new(sorted)?;
    let pairs: Vec<OdPair> = locations.all_pairs();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale: Vec<f64> = match &spec.pair_scale {
        Some(s) => s.clone(),
        None => pairs.iter().map(|_| rng.gen_range(0.5..1.5)).collect(),
    };
    let (common, own) = (spec.rho.sqrt(), (1.0 - spec.rho).sqrt());
    let mut obs: Vec<Vec<(Lag, u32)>> = vec![Vec::new(); pairs.len()];
    for day in spec.dates.days() {
        for h in 0..24 {
            let t = day.and_hms_opt(h, 0, 0).expect("valid hour");
            let w: f64 = rng.sample(StandardNormal);
            for (i, s) in scale.iter().enumerate() {
                let e: f64 = rng.sample(StandardNormal);
                let mean = spec.seasonal_mean(*s, &t);
                let z = common * w + own * e;
                let y = (mean + spec.dispersion * mean.sqrt() * z).max(0.0).round();
                obs[i].push((t, y as u32));
            }
        }
    }
    let series: BTreeMap<OdPair, OdCountSeries> = pairs
        .into_iter()
        .zip(obs)
        .map(|(pair, observations)| (pair, OdCountSeries { pair, observations }))
        .collect();
    Ok(OdCounts { locations, series })
}
