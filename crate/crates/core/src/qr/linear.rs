use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ipm::{solve_quantile_lp, IpmOptions};
use super::model::{fit_scoped, FittedQuantileModel, Regressor};
use super::{SeasonalStats, WorkingScale};
use crate::data::{DateRange, FeatureConfig, Panel};
use crate::error::{Error, Result};

/// Coefficients of one linear quantile function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl Regressor for LinearFit {
    fn predict(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum()
    }
}

pub type LinearQrModel = FittedQuantileModel<LinearFit>;

/// Columns not in the span of earlier columns, by Gram-Schmidt. Aliased
/// columns (a full set of dummies next to an intercept) get coefficient 0.
fn independent_columns(x: &[Vec<f64>], p: usize) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut keep = Vec::new();
    for j in 0..p {
        let mut c: Vec<f64> = x.iter().map(|r| r[j]).collect();
        let norm0 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        // twice for stability
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = c.iter().zip(b).map(|(u, v)| u * v).sum();
                c.iter_mut().zip(b).for_each(|(u, v)| *u -= d * v);
            }
        }
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-9 * norm0 {
            c.iter_mut().for_each(|v| *v /= norm);
            basis.push(c);
            keep.push(j);
        }
    }
    keep
}

/// Minimizes the mean tilted loss of `y - x·β` over β. Requires at least
/// twice as many rows as features. A solve that hits the iteration limit is
/// returned with `converged = false`.
pub fn fit_linear_quantile(x: &[Vec<f64>], y: &[f64], q: f64, opts: &IpmOptions) -> Result<LinearFit> {
    let n = y.len();
    let p = x.first().map_or(0, Vec::len);
    if x.len() != n {
        return Err(Error::Invalid(format!("{} feature rows for {n} targets", x.len())));
    }
    if p == 0 || n < 2 * p {
        return Err(Error::Precondition(format!(
            "{n} training rows for {p} features; need at least {}",
            2 * p.max(1)
        )));
    }
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::Invalid("ragged feature rows".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite feature or target".into()));
    }
    let keep = independent_columns(x, p);
    let xm = DMatrix::from_fn(n, keep.len(), |i, j| x[i][keep[j]]);
    let yv = DVector::from_column_slice(y);
    let sol = solve_quantile_lp(&xm, &yv, q, opts)?;
    let mut coefficients = vec![0.0; p];
    for (j, b) in keep.iter().zip(&sol.coefficients) {
        coefficients[*j] = *b;
    }
    if !sol.converged {
        warn!(
            "quantile LP at q={q} stopped after {} iterations with gap {:.3e}",
            sol.iterations, sol.gap
        );
    }
    Ok(LinearFit {
        coefficients,
        converged: sol.converged,
        iterations: sol.iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrOptions {
    pub features: FeatureConfig,
    /// Fit on per-(pair, weekday, hour) standardized differences.
    pub seasonal: bool,
    pub sort_quantiles: bool,
    pub ipm: IpmOptions,
}

impl Default for LqrOptions {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            seasonal: false,
            sort_quantiles: true,
            ipm: IpmOptions::default(),
        }
    }
}

/// One linear quantile function per (pair, level), or per level when the
/// features carry a pair indicator.
pub fn fit_lqr(panel: &Panel, train: &DateRange, levels: &[f64], opts: &LqrOptions) -> Result<LinearQrModel> {
    let scale = if opts.seasonal {
        WorkingScale::SeasonalNormalized(SeasonalStats::fit(panel, train))
    } else {
        WorkingScale::Differenced
    };
    fit_scoped(
        panel,
        train,
        levels,
        &opts.features,
        scale,
        opts.sort_quantiles,
        |rows, q, _| fit_linear_quantile(&rows.x, &rows.y, q, &opts.ipm),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qr::tilted_loss;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Uniform};

    #[test]
    fn exact_linear_targets_are_recovered() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![1.0, i as f64, ((i * 7) % 11) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 - 0.5 * r[1] + 3.0 * r[2]).collect();
        for q in [0.05, 0.25, 0.5, 0.75, 0.95] {
            let fit = fit_linear_quantile(&x, &y, q, &IpmOptions::default()).unwrap();
            let mtl = x
                .iter()
                .zip(&y)
                .map(|(r, t)| tilted_loss(q, *t, fit.predict(r)))
                .sum::<f64>()
                / y.len() as f64;
            assert!(mtl <= 1e-6, "q={q} mtl={mtl}");
        }
    }

    #[test]
    fn intercept_matches_grid_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = Uniform::new(0.0, 100.0);
        let y: Vec<f64> = (0..200).map(|_| u.sample(&mut rng)).collect();
        let x = vec![vec![1.0]; y.len()];
        let loss = |c: f64, q: f64| y.iter().map(|t| tilted_loss(q, *t, c)).sum::<f64>();
        for q in [0.05, 0.5, 0.95] {
            let fit = fit_linear_quantile(&x, &y, q, &IpmOptions::default()).unwrap();
            let c = fit.coefficients[0];
            // brute-force 1-D search over the sample points (the optimum is one of them)
            let best = y.iter().cloned().fold(f64::INFINITY, |m, v| m.min(loss(v, q)));
            assert!(loss(c, q) <= best + 1e-6, "q={q}");
        }
    }

    #[test]
    fn heteroscedastic_slopes_fan_out() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = Uniform::new(0.0, 10.0);
        let eps = Normal::new(0.0, 1.0).unwrap();
        let n = 5000;
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let xi: f64 = u.sample(&mut rng);
            x.push(vec![1.0, xi]);
            y.push(xi + eps.sample(&mut rng) * xi);
        }
        let lo = fit_linear_quantile(&x, &y, 0.05, &IpmOptions::default()).unwrap();
        let hi = fit_linear_quantile(&x, &y, 0.95, &IpmOptions::default()).unwrap();
        assert!(hi.coefficients[1] > lo.coefficients[1]);
    }

    #[test]
    fn aliased_dummies_converge() {
        // intercept plus a full set of three dummies
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = Uniform::new(0.0, 4.0);
        let x: Vec<Vec<f64>> = (0..90)
            .map(|i| {
                let g = i % 3;
                vec![1.0, (g == 0) as u8 as f64, (g == 1) as u8 as f64, (g == 2) as u8 as f64]
            })
            .collect();
        let y: Vec<f64> = (0..90).map(|i| (i % 3) as f64 * 10.0 + u.sample(&mut rng)).collect();
        let fit = fit_linear_quantile(&x, &y, 0.5, &IpmOptions::default()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.coefficients[3], 0.0);
        for g in 0..3 {
            let mut v: Vec<f64> = (0..90).filter(|i| i % 3 == g).map(|i| y[i]).collect();
            v.sort_by(f64::total_cmp);
            let pred = fit.predict(&x[g]);
            assert!(pred >= v[14] - 1e-6 && pred <= v[15] + 1e-6, "group {g}: {pred}");
        }
    }

    #[test]
    fn too_few_rows_rejected() {
        let x = vec![vec![1.0, 2.0, 3.0]; 5];
        let y = vec![0.0; 5];
        assert!(matches!(
            fit_linear_quantile(&x, &y, 0.5, &IpmOptions::default()),
            Err(Error::Precondition(_))
        ));
        let mut x = vec![vec![1.0]; 4];
        x[2][0] = f64::NAN;
        assert!(fit_linear_quantile(&x, &[0.0; 4], 0.5, &IpmOptions::default()).is_err());
    }
}
