use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::{fit_gboost, tilted_loss, GBoostHyper, GBoostOptions};
use crate::data::{DateRange, Panel};
use crate::error::{Error, Result};

/// Scores every grid point and returns the index and score of the lowest.
/// Ties go to the earliest point.
pub fn grid_search<P, F>(grid: &[P], mut score: F) -> Result<(usize, Vec<f64>)>
where
    F: FnMut(&P) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(Error::Invalid("empty hyperparameter grid".into()));
    }
    let scores = grid.iter().map(&mut score).collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = i;
        }
    }
    Ok((best, scores))
}

/// Partition of the training period for hyperparameter search: the first
/// seven days score, the next seven drive early stopping, the rest fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptSplit {
    pub opt_test: DateRange,
    pub opt_val: DateRange,
    pub opt_train: DateRange,
}

impl OptSplit {
    pub fn from_train(train: &DateRange) -> Result<Self> {
        let days = (train.end - train.start).num_days() + 1;
        if days < 15 {
            return Err(Error::Precondition(format!(
                "training period of {days} days is too short to carve out two held-out weeks"
            )));
        }
        let d = |n: i64| train.start + Duration::days(n);
        Ok(Self {
            opt_test: DateRange::new(d(0), d(6))?,
            opt_val: DateRange::new(d(7), d(13))?,
            opt_train: DateRange::new(d(14), train.end)?,
        })
    }
}

/// Mean tilted loss, over all levels and scored lags, of a boosted model
/// fit on `opt_train` with early stopping on `opt_val`, evaluated on
/// `opt_test`. Returns the best hyperparameters and every grid score.
pub fn gboost_grid_search(
    panel: &Panel,
    split: &OptSplit,
    levels: &[f64],
    base: &GBoostOptions,
    grid: &[GBoostHyper],
) -> Result<(GBoostHyper, Vec<f64>)> {
    let (best, scores) = grid_search(grid, |hyper| {
        let opts = GBoostOptions {
            hyper: *hyper,
            validation: Some(split.opt_val),
            ..base.clone()
        };
        let model = fit_gboost(panel, &split.opt_train, levels, &opts)?;
        let mut total = 0.0;
        let mut n = 0usize;
        for (j, s) in panel.series.iter().enumerate() {
            for pos in panel.rows_in(j, &split.opt_test, opts.features.history_needed()) {
                let f = match model.predict(panel, s.pair, &s.t[pos]) {
                    Ok(f) => f,
                    Err(Error::InsufficientHistory { .. }) => continue,
                    Err(e) => return Err(e),
                };
                for (q, v) in f.levels.iter().zip(&f.values) {
                    total += tilted_loss(*q, s.count[pos], *v);
                    n += 1;
                }
            }
        }
        if n == 0 {
            return Err(Error::Precondition("no scorable lags in the opt-test period".into()));
        }
        Ok(total / n as f64)
    })?;
    Ok((grid[best], scores))
}
