use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qr::QuantileForecast;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CdfShape {
    /// Constant between knots, jumping at each knot value.
    Step,
    /// Linear between consecutive knots.
    Linear,
}

/// Right-continuous CDF through `(value, level)` knots with non-decreasing
/// values and strictly increasing levels ending at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    knots: Vec<(f64, f64)>,
    shape: CdfShape,
}

impl EmpiricalCdf {
    pub fn new(knots: Vec<(f64, f64)>, shape: CdfShape) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Invalid("CDF without knots".into()));
        }
        if knots.iter().any(|(v, l)| !v.is_finite() || !l.is_finite()) {
            return Err(Error::Invalid("non-finite CDF knot".into()));
        }
        if knots.windows(2).any(|w| w[1].0 < w[0].0 || w[1].1 <= w[0].1) {
            return Err(Error::Invalid(format!("CDF knots out of order: {knots:?}")));
        }
        let last = knots[knots.len() - 1].1;
        if (last - 1.0).abs() > 1e-12 || knots[0].1 < 0.0 {
            return Err(Error::Invalid(format!("CDF levels must end at 1: {knots:?}")));
        }
        Ok(Self { knots, shape })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn shape(&self) -> CdfShape {
        self.shape
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let j = self.knots.partition_point(|(v, _)| *v <= x);
        if j == 0 {
            return 0.0;
        }
        let (v0, l0) = self.knots[j - 1];
        match (self.shape, self.knots.get(j)) {
            (CdfShape::Linear, Some(&(v1, l1))) => l0 + (l1 - l0) * (x - v0) / (v1 - v0),
            _ => l0,
        }
    }

    /// `inf { x : F(x) >= u }`.
    pub fn inverse(&self, u: f64) -> f64 {
        let k = self.knots.partition_point(|(_, l)| *l < u);
        if k == 0 {
            return self.knots[0].0;
        }
        if k == self.knots.len() {
            return self.knots[k - 1].0;
        }
        let (v0, l0) = self.knots[k - 1];
        let (v1, l1) = self.knots[k];
        match self.shape {
            CdfShape::Step => v1,
            CdfShape::Linear => v0 + (u - l0) / (l1 - l0) * (v1 - v0),
        }
    }
}

/// Step CDF `F(x) = #{ y_i <= x } / n`.
pub fn ecdf_from_history(counts: &[f64]) -> Result<EmpiricalCdf> {
    if counts.is_empty() {
        return Err(Error::Precondition("empty history".into()));
    }
    let mut v = counts.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut knots: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let level = (i + 1) as f64 / n;
        match knots.last_mut() {
            Some(last) if last.0 == *x => last.1 = level,
            _ => knots.push((*x, level)),
        }
    }
    EmpiricalCdf::new(knots, CdfShape::Step)
}

/// Piecewise-linear CDF through `(0, 0)`, the forecast quantiles, and
/// `(ŷ_last + ŷ_first, 1)`. Values are sorted first so crossed forecasts
/// still give a valid CDF. A forecast with all quantiles equal is a point
/// mass.
pub fn ecdf_from_forecast(f: &QuantileForecast) -> Result<EmpiricalCdf> {
    if f.levels.is_empty() || f.levels.len() != f.values.len() {
        return Err(Error::Missing {
            what: "quantile level",
            detail: format!("forecast for pair {} has no usable levels", f.pair),
        });
    }
    if f.levels.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
        return Err(Error::Invalid(format!("forecast levels must lie in (0, 1): {:?}", f.levels)));
    }
    let mut vals: Vec<f64> = f.values.iter().map(|v| v.max(0.0)).collect();
    vals.sort_by(f64::total_cmp);
    if vals[0] == vals[vals.len() - 1] {
        return EmpiricalCdf::new(vec![(vals[0], 1.0)], CdfShape::Linear);
    }
    let mut knots = Vec::with_capacity(vals.len() + 2);
    knots.push((0.0, 0.0));
    knots.extend(vals.iter().copied().zip(f.levels.iter().copied()));
    knots.push((vals[vals.len() - 1] + vals[0], 1.0));
    EmpiricalCdf::new(knots, CdfShape::Linear)
}
