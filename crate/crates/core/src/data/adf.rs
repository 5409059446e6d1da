use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Response-surface coefficients for the 1% critical value of the
/// constant-only Dickey-Fuller tau statistic (MacKinnon 2010, one variable).
const TAU_C_1PCT: [f64; 4] = [-3.43035, -6.5393, -16.786, -79.433];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdfResult {
    pub statistic: f64,
    pub critical_value_1pct: f64,
    pub n_obs: usize,
    pub lags: usize,
    pub reject_unit_root: bool,
}

/// Schwert's rule, `floor(12 * (n / 100)^(1/4))`.
pub fn schwert_max_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

fn critical_value_1pct(n_obs: usize) -> f64 {
    let t = n_obs as f64;
    TAU_C_1PCT[0] + TAU_C_1PCT[1] / t + TAU_C_1PCT[2] / (t * t) + TAU_C_1PCT[3] / (t * t * t)
}

/// Augmented Dickey-Fuller test with a constant and `max_lag` lagged
/// differences:
///
/// `dy_t = a + g*y_{t-1} + sum_i c_i*dy_{t-i} + e_t`
///
/// The statistic is `g / se(g)`; the unit root is rejected at 1% when it
/// falls below the sample-size adjusted critical value.
pub fn adf_test(series: &[f64], max_lag: usize) -> Result<AdfResult> {
    if series.len() <= max_lag + 2 {
        return Err(Error::Precondition(format!(
            "ADF needs more than max_lag + 2 = {} observations, got {}",
            max_lag + 2,
            series.len()
        )));
    }
    let dy: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    // dy[i] = y[i+1] - y[i]; regress dy[i] on y[i] and dy[i-1..i-max_lag].
    let rows: Vec<usize> = (max_lag..dy.len()).collect();
    let n_obs = rows.len();
    let k = 2 + max_lag;
    if n_obs <= k {
        return Err(Error::Precondition(format!(
            "ADF regression has {n_obs} rows for {k} regressors"
        )));
    }

    let mut x = DMatrix::<f64>::zeros(n_obs, k);
    let mut y = DVector::<f64>::zeros(n_obs);
    for (r, &i) in rows.iter().enumerate() {
        y[r] = dy[i];
        x[(r, 0)] = 1.0;
        x[(r, 1)] = series[i];
        for j in 1..=max_lag {
            x[(r, 1 + j)] = dy[i - j];
        }
    }

    let xtx = x.transpose() * &x;
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("ADF regression matrix is not positive definite".into()))?;
    let beta = chol.solve(&(x.transpose() * &y));
    let resid = &y - &x * &beta;
    let dof = (n_obs - k) as f64;
    let sigma2 = resid.dot(&resid) / dof;
    let inv = chol.inverse();
    let var_g = sigma2 * inv[(1, 1)];
    if !(var_g.is_finite() && var_g > 0.0) {
        return Err(Error::Singular(
            "ADF coefficient variance is degenerate (constant series?)".into(),
        ));
    }
    let statistic = beta[1] / var_g.sqrt();
    let cv = critical_value_1pct(n_obs);
    Ok(AdfResult {
        statistic,
        critical_value_1pct: cv,
        n_obs,
        lags: max_lag,
        reject_unit_root: statistic < cv,
    })
}
