use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GBoostQrModel, HpModel, LinearQrModel, QuantileForecast, WorkingScale};
use crate::data::{build_features, format_lag, DateRange, FeatureConfig, Lag, OdPair, Panel};
use crate::error::{Error, Result};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// A fitted map from a feature vector to one quantile on the working scale.
pub trait Regressor {
    fn predict(&self, x: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scope {
    /// One model for all pairs (features carry the pair indicator).
    Shared,
    Pair(OdPair),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopedFit<R> {
    pub scope: Scope,
    pub level: f64,
    pub regressor: R,
}

/// Regression-based quantile model: one regressor per (scope, level) on a
/// working scale, mapped back to counts by adding the previous observed
/// count, clipping at zero and (optionally) sorting across levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedQuantileModel<R> {
    pub levels: Vec<f64>,
    pub features: FeatureConfig,
    pub scale: WorkingScale,
    pub sort_quantiles: bool,
    pub pairs: Vec<OdPair>,
    pub fits: Vec<ScopedFit<R>>,
}

impl<R: Regressor> FittedQuantileModel<R> {
    fn scope_for(&self, pair: OdPair) -> Scope {
        if self.features.od_onehot {
            Scope::Shared
        } else {
            Scope::Pair(pair)
        }
    }

    fn check_layout(&self, panel: &Panel) -> Result<()> {
        if panel.pairs() != self.pairs {
            return Err(Error::Invalid(format!(
                "feature layout mismatch: model was fit on {} pairs, panel has {}",
                self.pairs.len(),
                panel.n_pairs()
            )));
        }
        Ok(())
    }

    /// Forecasts for each `(pair, lag)`; `panel` is on the differenced scale
    /// and must contain the queried lags (one-step-ahead).
    pub fn predict_many(&self, panel: &Panel, queries: &[(OdPair, Lag)]) -> Result<Vec<QuantileForecast>> {
        self.check_layout(panel)?;
        let working = self.scale.apply(panel);
        queries
            .iter()
            .map(|(pair, t)| self.predict_on(panel, &working, *pair, t))
            .collect()
    }

    pub fn predict(&self, panel: &Panel, pair: OdPair, t: &Lag) -> Result<QuantileForecast> {
        Ok(self.predict_many(panel, &[(pair, *t)])?.remove(0))
    }

    fn predict_on(&self, raw: &Panel, working: &Panel, pair: OdPair, t: &Lag) -> Result<QuantileForecast> {
        let scope = self.scope_for(pair);
        let series = raw.get(pair)?;
        let pos = series.position(t).ok_or_else(|| Error::Missing {
            what: "lag",
            detail: format!("{} for pair {}", format_lag(t), raw.locations.pair_label(pair)),
        })?;
        let x = build_features(working, t, pair, &self.features)?.to_vec();
        let prev = series.prev[pos];
        let mut values = Vec::with_capacity(self.levels.len());
        for level in &self.levels {
            let fit = self
                .fits
                .iter()
                .find(|f| f.scope == scope && (f.level - level).abs() < 1e-12)
                .ok_or_else(|| Error::Missing {
                    what: "fitted regressor",
                    detail: format!("scope {scope:?}, level {level}"),
                })?;
            let working_value = fit.regressor.predict(&x);
            values.push(self.scale.invert(pair, t, working_value) + prev);
        }
        Ok(QuantileForecast::finish(pair, *t, &self.levels, values, self.sort_quantiles))
    }
}

/// Feature rows and working-scale targets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rows {
    /// (pair index, position in that pair's series)
    pub keys: Vec<(usize, usize)>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Rows {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Rows for every lag of the given pairs inside `range`. Lags without
/// enough history for the feature configuration are skipped.
pub fn collect_rows(
    working: &Panel,
    pair_indices: &[usize],
    range: &DateRange,
    cfg: &FeatureConfig,
) -> Result<Rows> {
    let mut rows = Rows::default();
    for &j in pair_indices {
        let s = &working.series[j];
        for pos in working.rows_in(j, range, cfg.history_needed()) {
            match build_features(working, &s.t[pos], s.pair, cfg) {
                Ok(f) => {
                    let x = f.to_vec();
                    if x.iter().any(|v| !v.is_finite()) || !s.value[pos].is_finite() {
                        return Err(Error::Invalid(format!(
                            "non-finite feature or target for {} at {}",
                            working.locations.pair_label(s.pair),
                            format_lag(&s.t[pos])
                        )));
                    }
                    rows.keys.push((j, pos));
                    rows.x.push(x);
                    rows.y.push(s.value[pos]);
                }
                Err(Error::InsufficientHistory { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(rows)
}

/// Fits one regressor per (scope, level) in parallel.
pub(crate) fn fit_scoped<R, F>(
    panel: &Panel,
    train: &DateRange,
    levels: &[f64],
    features: &FeatureConfig,
    scale: WorkingScale,
    sort_quantiles: bool,
    fit_one: F,
) -> Result<FittedQuantileModel<R>>
where
    R: Send,
    F: Fn(&Rows, f64, Scope) -> Result<R> + Sync,
{
    let working = scale.apply(panel);
    let scopes: Vec<(Scope, Vec<usize>)> = if features.od_onehot {
        vec![(Scope::Shared, (0..panel.n_pairs()).collect())]
    } else {
        panel
            .series
            .iter()
            .enumerate()
            .map(|(j, s)| (Scope::Pair(s.pair), vec![j]))
            .collect()
    };
    let row_sets: Vec<(Scope, Rows)> = scopes
        .into_par_iter()
        .map(|(scope, idx)| Ok((scope, collect_rows(&working, &idx, train, features)?)))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, f64)> = (0..row_sets.len())
        .flat_map(|i| levels.iter().map(move |q| (i, *q)))
        .collect();
    let fits = jobs
        .into_par_iter()
        .map(|(i, q)| {
            let (scope, rows) = &row_sets[i];
            Ok(ScopedFit {
                scope: *scope,
                level: q,
                regressor: fit_one(rows, q, *scope)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FittedQuantileModel {
        levels: levels.to_vec(),
        features: features.clone(),
        scale,
        sort_quantiles,
        pairs: panel.pairs(),
        fits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum QuantileModel {
    HistoricalPercentiles(HpModel),
    Linear(LinearQrModel),
    GradientBoosting(GBoostQrModel),
}

impl QuantileModel {
    pub fn levels(&self) -> &[f64] {
        match self {
            QuantileModel::HistoricalPercentiles(m) => &m.levels,
            QuantileModel::Linear(m) => &m.levels,
            QuantileModel::GradientBoosting(m) => &m.levels,
        }
    }

    pub fn predict_many(&self, panel: &Panel, queries: &[(OdPair, Lag)]) -> Result<Vec<QuantileForecast>> {
        match self {
            QuantileModel::HistoricalPercentiles(m) => {
                queries.iter().map(|(p, t)| m.predict(*p, t)).collect()
            }
            QuantileModel::Linear(m) => m.predict_many(panel, queries),
            QuantileModel::GradientBoosting(m) => m.predict_many(panel, queries),
        }
    }
}

/// Versioned on-disk form of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub name: String,
    pub model: QuantileModel,
}

pub fn save_model(doc: &ModelDocument, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(doc)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: ModelDocument = serde_json::from_str(&text)?;
    if doc.schema_version != MODEL_SCHEMA_VERSION {
        return Err(Error::Invalid(format!(
            "model schema version {} is not supported (expected {MODEL_SCHEMA_VERSION})",
            doc.schema_version
        )));
    }
    Ok(doc)
}
