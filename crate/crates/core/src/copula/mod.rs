//! Gaussian copula over OD pairs: correlation fit on rank-transformed
//! history, joint sampling through the forecast marginals.

mod ecdf;

pub use ecdf::{ecdf_from_forecast, ecdf_from_history, CdfShape, EmpiricalCdf};

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{DateRange, Lag, LocationIndex, OdPair, Panel};
use crate::error::{Error, Result};
use crate::qr::QuantileForecast;

pub const MIN_EIGENVALUE: f64 = 1e-8;
pub const MIN_ALIGNED_LAGS: usize = 30;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// `(r - 0.5) / n` with average ranks for ties.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their average
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = (r - 0.5) / n as f64;
        }
        i = j + 1;
    }
    out
}

/// Symmetric, unit diagonal, eigenvalues at least [`MIN_EIGENVALUE`].
pub fn repair_correlation(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut c = (m + m.transpose()) * 0.5;
    for _ in 0..100 {
        let eig = SymmetricEigen::new(c.clone());
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite eigenvalue in correlation repair".into()));
        }
        if eig.eigenvalues.min() >= MIN_EIGENVALUE && (0..n).all(|i| (c[(i, i)] - 1.0).abs() <= 1e-12) {
            break;
        }
        let clipped = eig.eigenvalues.map(|v| v.max(1.5 * MIN_EIGENVALUE));
        let r = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        let d = DVector::from_fn(n, |i, _| 1.0 / r[(i, i)].sqrt());
        c = DMatrix::from_fn(n, n, |i, j| r[(i, j)] * d[i] * d[j]);
        c = (&c + c.transpose()) * 0.5;
    }
    for i in 0..n {
        c[(i, i)] = 1.0;
    }
    let min = SymmetricEigen::new(c.clone()).eigenvalues.min();
    if min < MIN_EIGENVALUE * (1.0 - 1e-6) {
        return Err(Error::Numerical(format!(
            "correlation repair left minimum eigenvalue {min:.3e}"
        )));
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCopula {
    pub pair_order: Vec<OdPair>,
    pub corr: DMatrix<f64>,
    pub chol: DMatrix<f64>,
}

impl GaussianCopula {
    /// Takes a correlation matrix over `pair_order`, repairs it if needed and
    /// factors it.
    pub fn from_correlation(pair_order: Vec<OdPair>, corr: DMatrix<f64>) -> Result<Self> {
        let n = pair_order.len();
        if corr.nrows() != n || corr.ncols() != n {
            return Err(Error::Invalid(format!(
                "{}x{} correlation matrix for {n} pairs",
                corr.nrows(),
                corr.ncols()
            )));
        }
        if corr.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite correlation entry".into()));
        }
        let corr = repair_correlation(&corr)?;
        let chol = corr
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("repaired correlation matrix is not positive definite".into()))?
            .l();
        Ok(Self { pair_order, corr, chol })
    }

    pub fn independent(pair_order: Vec<OdPair>) -> Self {
        let n = pair_order.len();
        Self {
            pair_order,
            corr: DMatrix::identity(n, n),
            chol: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.pair_order.len()
    }

    /// Correlation of the normal scores `Φ⁻¹((r - 0.5)/n)` of each column.
    /// Columns are aligned observations of the pairs in `pair_order`.
    pub fn fit(pair_order: Vec<OdPair>, columns: &[Vec<f64>]) -> Result<Self> {
        if columns.len() != pair_order.len() {
            return Err(Error::Invalid(format!(
                "{} history columns for {} pairs",
                columns.len(),
                pair_order.len()
            )));
        }
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Invalid("history columns are not aligned".into()));
        }
        if n < MIN_ALIGNED_LAGS {
            return Err(Error::Precondition(format!(
                "{n} aligned lags; need at least {MIN_ALIGNED_LAGS}"
            )));
        }
        let phi = std_normal();
        let scores: Vec<Vec<f64>> = columns
            .iter()
            .map(|c| mid_ranks(c).into_iter().map(|u| phi.inverse_cdf(u)).collect())
            .collect();
        if scores.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite normal score".into()));
        }
        let d = pair_order.len();
        let means: Vec<f64> = scores.iter().map(|s| s.iter().sum::<f64>() / n as f64).collect();
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let c = scores[i]
                    .iter()
                    .zip(&scores[j])
                    .map(|(a, b)| (a - means[i]) * (b - means[j]))
                    .sum::<f64>()
                    / (n - 1) as f64;
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
        }
        let corr = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                1.0
            } else {
                cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt()
            }
        });
        Self::from_correlation(pair_order, corr)
    }

    /// Fits on the observed counts of every pair at the training lags that
    /// all pairs share.
    pub fn fit_panel(panel: &Panel, train: &DateRange) -> Result<Self> {
        let mut common: Option<Vec<Lag>> = None;
        for s in &panel.series {
            let lags: Vec<Lag> = s.t.iter().filter(|t| train.contains_lag(t)).copied().collect();
            common = Some(match common {
                None => lags,
                Some(c) => c.into_iter().filter(|t| lags.binary_search(t).is_ok()).collect(),
            });
        }
        let common = common.unwrap_or_default();
        let columns: Vec<Vec<f64>> = panel
            .series
            .iter()
            .map(|s| {
                common
                    .iter()
                    .map(|t| s.count[s.position(t).expect("common lag")])
                    .collect()
            })
            .collect();
        Self::fit(panel.pairs(), &columns)
    }

    /// `k` joint demand vectors ordered as `pair_order`. Sample `i` draws
    /// from its own stream of `seed`, so results do not depend on threading.
    pub fn sample(
        &self,
        forecasts: &BTreeMap<OdPair, QuantileForecast>,
        k: usize,
        seed: u64,
    ) -> Result<Vec<Vec<f64>>> {
        let marginals: Vec<EmpiricalCdf> = self
            .pair_order
            .iter()
            .map(|p| {
                let f = forecasts.get(p).ok_or_else(|| Error::Missing {
                    what: "forecast",
                    detail: format!("pair {p}"),
                })?;
                ecdf_from_forecast(f)
            })
            .collect::<Result<_>>()?;
        let phi = std_normal();
        let d = self.dim();
        Ok((0..k)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let e = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                let z = &self.chol * e;
                z.iter()
                    .zip(&marginals)
                    .map(|(zi, m)| m.inverse(phi.cdf(*zi)).max(0.0))
                    .collect()
            })
            .collect())
    }

    /// CSV with a header row of pair labels followed by the matrix rows.
    pub fn write_correlation<W: Write>(&self, locations: &LocationIndex, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.pair_order.iter().map(|p| locations.pair_label(*p)))?;
        for i in 0..self.dim() {
            w.write_record((0..self.dim()).map(|j| self.corr[(i, j)].to_string()))?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn read_correlation<R: Read>(reader: R, locations: &LocationIndex) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let mut pairs = Vec::with_capacity(header.len());
        for h in header.iter() {
            let (o, d) = h.split_once("->").ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("bad pair label {h:?}"),
            })?;
            let id = |l: &str| {
                locations.id(l).ok_or_else(|| Error::Parse {
                    line: 1,
                    message: format!("unknown location {l:?}"),
                })
            };
            pairs.push(OdPair::new(id(o)?, id(d)?)?);
        }
        let n = pairs.len();
        let mut values = Vec::with_capacity(n * n);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for v in rec.iter() {
                values.push(v.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 2,
                    message: format!("bad correlation {v:?}"),
                })?);
            }
        }
        if values.len() != n * n {
            return Err(Error::Invalid(format!("expected {n}x{n} correlation entries")));
        }
        Self::from_correlation(pairs, DMatrix::from_row_slice(n, n, &values))
    }
}

/// One row per sample, one column per pair.
pub fn write_samples<W: Write>(
    samples: &[Vec<f64>],
    pair_order: &[OdPair],
    locations: &LocationIndex,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["sample".to_string()];
    header.extend(pair_order.iter().map(|p| locations.pair_label(*p)));
    w.write_record(&header)?;
    for (i, s) in samples.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(s.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn pairs(n: usize) -> Vec<OdPair> {
        (1..=n).map(|d| OdPair::new(0, d).unwrap()).collect()
    }

    #[test]
    fn mid_ranks_with_ties() {
        let r = mid_ranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![3.0 / 4.0, 0.5 / 4.0, 3.0 / 4.0, 1.5 / 4.0]);
    }

    #[test]
    fn comonotone_series_are_correlated() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..200).map(|_| rng.gen_range(0..20) as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let c = GaussianCopula::fit(pairs(2), &[a, b]).unwrap();
        assert!(c.corr[(0, 1)] >= 0.99);
        assert_eq!(c.corr[(0, 0)], 1.0);
        assert_eq!(c.corr[(1, 1)], 1.0);
    }

    #[test]
    fn independent_series_are_nearly_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..2000).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..2000).map(|_| rng.gen_range(0.0..1.0)).collect();
        let c = GaussianCopula::fit(pairs(2), &[a, b]).unwrap();
        assert!(c.corr[(0, 1)].abs() <= 0.1);
    }

    #[test]
    fn repair_restores_definiteness() {
        // not positive semidefinite
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        let c = repair_correlation(&m).unwrap();
        assert!(SymmetricEigen::new(c.clone()).eigenvalues.min() >= MIN_EIGENVALUE * (1.0 - 1e-6));
        for i in 0..3 {
            assert_eq!(c[(i, i)], 1.0);
            for j in 0..3 {
                assert_eq!(c[(i, j)], c[(j, i)]);
            }
        }
        let cop = GaussianCopula::from_correlation(pairs(3), m).unwrap();
        let back = &cop.chol * cop.chol.transpose();
        assert!((back - &cop.corr).abs().max() < 1e-10);
    }

    #[test]
    fn too_short_history_rejected() {
        assert!(GaussianCopula::fit(pairs(2), &[vec![1.0; 10], vec![2.0; 10]]).is_err());
    }

    #[test]
    fn correlation_csv_roundtrip() {
        let loc = LocationIndex::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let ps = vec![OdPair::new(0, 1).unwrap(), OdPair::new(2, 0).unwrap()];
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 1.0]);
        let c = GaussianCopula::from_correlation(ps, m).unwrap();
        let mut buf = Vec::new();
        c.write_correlation(&loc, &mut buf).unwrap();
        let back = GaussianCopula::read_correlation(buf.as_slice(), &loc).unwrap();
        assert_eq!(back.pair_order, c.pair_order);
        assert!((back.corr - c.corr).abs().max() < 1e-15);
    }
}
