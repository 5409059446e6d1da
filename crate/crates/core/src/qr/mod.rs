//! Quantile-regression demand models. Each model turns the differenced,
//! masked OD history into per-pair marginal predictive distributions
//! expressed as a small set of quantiles.

mod forecast;
mod gboost;
mod grid;
mod hp;
pub mod ipm;
mod linear;
mod model;
mod seasonal;

pub use forecast::{read_forecasts, write_forecasts, QuantileForecast};
pub use gboost::{
    fit_ensemble, fit_gboost, EarlyStop, GBoostHyper, GBoostOptions, GBoostQrModel, RegressionTree,
    TreeEnsemble,
};
pub use grid::{grid_search, gboost_grid_search, OptSplit};
pub use hp::{fit_hp, HpModel};
pub use linear::{fit_linear_quantile, fit_lqr, LinearFit, LinearQrModel, LqrOptions};
pub use model::{
    collect_rows, load_model, save_model, FittedQuantileModel, ModelDocument, QuantileModel,
    Regressor, Rows, ScopedFit, Scope, MODEL_SCHEMA_VERSION,
};
pub use seasonal::{SeasonalCell, SeasonalStats, WorkingScale};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing quantile levels in (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileSet(Vec<f64>);

impl QuantileSet {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Invalid("empty quantile set".into()));
        }
        if levels.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            return Err(Error::Invalid(format!("quantile levels must lie in (0, 1): {levels:?}")));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid(format!(
                "quantile levels must be strictly increasing: {levels:?}"
            )));
        }
        Ok(Self(levels))
    }

    pub fn levels(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, q: f64) -> Option<usize> {
        level_index(&self.0, q)
    }
}

impl Default for QuantileSet {
    fn default() -> Self {
        Self(vec![0.05, 0.25, 0.50, 0.75, 0.95])
    }
}

impl TryFrom<Vec<f64>> for QuantileSet {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<QuantileSet> for Vec<f64> {
    fn from(q: QuantileSet) -> Self {
        q.0
    }
}

pub(crate) fn level_index(levels: &[f64], q: f64) -> Option<usize> {
    levels.iter().position(|l| (l - q).abs() < 1e-12)
}

/// Pinball loss `max(q*(y - yhat), (q - 1)*(y - yhat))`.
#[inline]
pub fn tilted_loss(q: f64, y: f64, yhat: f64) -> f64 {
    let e = y - yhat;
    (q * e).max((q - 1.0) * e)
}

/// Percentile with linear interpolation between order statistics
/// (position `(n - 1) * q`). `q = 0` and `q = 1` give the min and max.
pub fn percentile_linear(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// An order statistic minimizing the mean tilted loss over constants: the
/// `ceil(n*q)`-th smallest value.
pub fn quantile_minimizer(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty sample");
    let mut v = values.to_vec();
    let k = ((v.len() as f64 * q).ceil() as usize).clamp(1, v.len()) - 1;
    let (_, kth, _) = v.select_nth_unstable_by(k, f64::total_cmp);
    *kth
}
