//! Evaluation of quantile forecasts: mean tilted loss, 5–95% band coverage
//! and width, and quantile crossings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{format_lag, Lag, LocationIndex, OdPair, Panel};
use crate::error::{Error, Result};
use crate::qr::{tilted_loss, QuantileForecast};

pub const BAND_LOW: f64 = 0.05;
pub const BAND_HIGH: f64 = 0.95;

fn check_aligned(forecasts: &[QuantileForecast], truths: &[f64]) -> Result<()> {
    if forecasts.len() != truths.len() {
        return Err(Error::Invalid(format!(
            "{} forecasts but {} observations",
            forecasts.len(),
            truths.len()
        )));
    }
    Ok(())
}

/// Σ_q mean_t tilted_loss(q, y_t, ŷ_t^(q)). All forecasts must share one
/// level set.
pub fn mtl(forecasts: &[QuantileForecast], truths: &[f64]) -> Result<f64> {
    check_aligned(forecasts, truths)?;
    let Some(first) = forecasts.first() else {
        return Ok(0.0);
    };
    let mut total = 0.0;
    for f in forecasts {
        if f.levels != first.levels {
            return Err(Error::Invalid(format!(
                "forecast at {} uses levels {:?}, expected {:?}",
                format_lag(&f.lag),
                f.levels,
                first.levels
            )));
        }
    }
    for (f, y) in forecasts.iter().zip(truths) {
        total += f
            .levels
            .iter()
            .zip(&f.values)
            .map(|(q, v)| tilted_loss(*q, *y, *v))
            .sum::<f64>();
    }
    Ok(total / forecasts.len() as f64)
}

/// Share of lags with ŷ^(0.05) ≤ y ≤ ŷ^(0.95).
pub fn icp(forecasts: &[QuantileForecast], truths: &[f64]) -> Result<f64> {
    check_aligned(forecasts, truths)?;
    if forecasts.is_empty() {
        return Ok(0.0);
    }
    let mut inside = 0usize;
    for (f, y) in forecasts.iter().zip(truths) {
        if f.require(BAND_LOW)? <= *y && *y <= f.require(BAND_HIGH)? {
            inside += 1;
        }
    }
    Ok(inside as f64 / forecasts.len() as f64)
}

/// Mean of ŷ^(0.95) − ŷ^(0.05).
pub fn mil(forecasts: &[QuantileForecast]) -> Result<f64> {
    if forecasts.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for f in forecasts {
        total += f.require(BAND_HIGH)? - f.require(BAND_LOW)?;
    }
    Ok(total / forecasts.len() as f64)
}

/// Number of level pairs `q_i < q_j` with ŷ^(q_i) > ŷ^(q_j), summed over lags.
pub fn crossings(forecasts: &[QuantileForecast]) -> usize {
    forecasts
        .iter()
        .map(|f| {
            let mut n = 0;
            for i in 0..f.levels.len() {
                for j in 0..f.levels.len() {
                    if f.levels[i] < f.levels[j] && f.values[i] > f.values[j] {
                        n += 1;
                    }
                }
            }
            n
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub pair: OdPair,
    pub n_lags: usize,
    pub mtl: f64,
    pub icp: f64,
    pub mil: f64,
    pub crossings: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation across pairs.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub pairs: Vec<PairMetrics>,
    pub total_mtl: f64,
    pub icp: MeanStd,
    pub mil: MeanStd,
    pub crossings: MeanStd,
}

impl EvalReport {
    pub fn from_pairs(model: &str, pairs: Vec<PairMetrics>) -> Self {
        let col = |f: fn(&PairMetrics) -> f64| pairs.iter().map(f).collect::<Vec<_>>();
        Self {
            model: model.to_string(),
            total_mtl: pairs.iter().map(|p| p.mtl).sum(),
            icp: MeanStd::of(&col(|p| p.icp)),
            mil: MeanStd::of(&col(|p| p.mil)),
            crossings: MeanStd::of(&col(|p| p.crossings as f64)),
            pairs,
        }
    }
}

/// Scores forecasts against `truth(pair, lag)`, grouped by pair.
pub fn evaluate<F>(model: &str, forecasts: &[QuantileForecast], truth: F) -> Result<EvalReport>
where
    F: Fn(OdPair, &Lag) -> Option<f64>,
{
    let mut by_pair: BTreeMap<OdPair, (Vec<QuantileForecast>, Vec<f64>)> = BTreeMap::new();
    for f in forecasts {
        let y = truth(f.pair, &f.lag).ok_or_else(|| Error::Missing {
            what: "observation",
            detail: format!("pair {} at {}", f.pair, format_lag(&f.lag)),
        })?;
        let e = by_pair.entry(f.pair).or_default();
        e.0.push(f.clone());
        e.1.push(y);
    }
    let mut pairs = Vec::with_capacity(by_pair.len());
    for (pair, (fs, ys)) in by_pair {
        pairs.push(PairMetrics {
            pair,
            n_lags: fs.len(),
            mtl: mtl(&fs, &ys)?,
            icp: icp(&fs, &ys)?,
            mil: mil(&fs)?,
            crossings: crossings(&fs),
        });
    }
    Ok(EvalReport::from_pairs(model, pairs))
}

/// [`evaluate`] with observed counts taken from `panel`.
pub fn evaluate_on_panel(model: &str, forecasts: &[QuantileForecast], panel: &Panel) -> Result<EvalReport> {
    evaluate(model, forecasts, |pair, t| {
        let s = panel.get(pair).ok()?;
        s.position(t).map(|i| s.count[i])
    })
}

/// One row per model: total MTL and mean ± std of ICP, MIL and #cross.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>10} {:>16} {:>16} {:>16}",
        "model", "MTL", "ICP 5-95", "MIL 5-95", "#cross"
    );
    for r in reports {
        let ms = |m: &MeanStd, p: usize| format!("{:.p$} ± {:.p$}", m.mean, m.std);
        let _ = writeln!(
            out,
            "{:<16} {:>10.2} {:>16} {:>16} {:>16}",
            r.model,
            r.total_mtl,
            ms(&r.icp, 3),
            ms(&r.mil, 2),
            ms(&r.crossings, 2)
        );
    }
    out
}

/// Per-pair rows followed by an aggregate row per report.
pub fn write_report_csv<W: Write>(reports: &[EvalReport], locations: &LocationIndex, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "origin", "destination", "n_lags", "mtl", "icp", "mil", "crossings"])?;
    for r in reports {
        for p in &r.pairs {
            w.write_record([
                r.model.clone(),
                locations.label(p.pair.origin).to_string(),
                locations.label(p.pair.destination).to_string(),
                p.n_lags.to_string(),
                p.mtl.to_string(),
                p.icp.to_string(),
                p.mil.to_string(),
                p.crossings.to_string(),
            ])?;
        }
        w.write_record([
            r.model.clone(),
            "*".into(),
            "*".into(),
            r.pairs.iter().map(|p| p.n_lags).sum::<usize>().to_string(),
            r.total_mtl.to_string(),
            r.icp.mean.to_string(),
            r.mil.mean.to_string(),
            r.crossings.mean.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_lag;

    fn fc(i: usize, levels: &[f64], values: &[f64]) -> QuantileForecast {
        QuantileForecast {
            pair: OdPair::new(0, 1).unwrap(),
            lag: parse_lag(&format!("2018-01-08T{:02}", 7 + i)).unwrap(),
            levels: levels.to_vec(),
            values: values.to_vec(),
        }
    }

    const Q5: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

    #[test]
    fn mtl_examples() {
        assert_eq!(mtl(&[fc(0, &[0.5], &[8.0])], &[10.0]).unwrap(), 1.0);
        assert_eq!(mtl(&[fc(0, &Q5, &[3.0; 5])], &[3.0]).unwrap(), 0.0);
        let fs = [fc(0, &Q5, &[1.0, 2.0, 3.0, 4.0, 5.0]), fc(1, &Q5, &[0.0, 1.0, 1.0, 2.0, 9.0])];
        let base = mtl(&fs, &[2.5, 7.0]).unwrap();
        let doubled: Vec<_> = fs
            .iter()
            .map(|f| fc(0, &Q5, &f.values.iter().map(|v| 2.0 * v).collect::<Vec<_>>()))
            .collect();
        assert!((mtl(&doubled, &[5.0, 14.0]).unwrap() - 2.0 * base).abs() < 1e-12);
        let swapped = [fs[1].clone(), fs[0].clone()];
        assert!((mtl(&swapped, &[7.0, 2.5]).unwrap() - base).abs() < 1e-12);
        assert!(mtl(&fs, &[1.0]).is_err());
    }

    #[test]
    fn icp_and_mil_examples() {
        let wide: Vec<_> = (0..5).map(|i| fc(i, &[0.05, 0.95], &[0.0, f64::INFINITY])).collect();
        assert_eq!(icp(&wide, &[0.0, 1.0, 5.0, 100.0, 1e9]).unwrap(), 1.0);
        let low: Vec<_> = (0..3).map(|i| fc(i, &[0.05, 0.95], &[1.0, 2.0])).collect();
        assert_eq!(icp(&low, &[3.0, 2.5, 10.0]).unwrap(), 0.0);
        let ten: Vec<_> = (0..10).map(|i| fc(i, &[0.05, 0.95], &[0.0, 5.0])).collect();
        let mut ys = vec![5.0; 10];
        ys[3] = 6.0;
        ys[0] = 0.0;
        assert!((icp(&ten, &ys).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(mil(&[fc(0, &[0.05, 0.95], &[3.0, 3.0])]).unwrap(), 0.0);
        assert_eq!(mil(&[fc(0, &[0.05, 0.95], &[1.0, 5.0])]).unwrap(), 4.0);
        assert_eq!(mil(&[fc(0, &[0.05, 0.95], &[0.0, 2.0]), fc(1, &[0.05, 0.95], &[1.0, 7.0])]).unwrap(), 4.0);
        assert!(mil(&[fc(0, &[0.5], &[1.0])]).is_err());
    }

    #[test]
    fn crossing_examples() {
        assert_eq!(crossings(&[fc(0, &Q5, &[1.0, 2.0, 2.0, 3.0, 9.0])]), 0);
        assert_eq!(crossings(&[fc(0, &Q5, &[5.0, 4.0, 3.0, 2.0, 1.0])]), 10);
        assert_eq!(crossings(&[fc(0, &Q5, &[1.0, 3.0, 2.0, 4.0, 5.0])]), 1);
    }

    #[test]
    fn report_aggregates() {
        let mut fs = vec![fc(0, &Q5, &[1.0, 2.0, 3.0, 4.0, 5.0])];
        let mut other = fc(0, &Q5, &[5.0, 4.0, 3.0, 2.0, 1.0]);
        other.pair = OdPair::new(1, 0).unwrap();
        fs.push(other);
        let r = evaluate("m", &fs, |_, _| Some(3.0)).unwrap();
        assert_eq!(r.pairs.len(), 2);
        assert!((r.total_mtl - r.pairs.iter().map(|p| p.mtl).sum::<f64>()).abs() < 1e-15);
        assert_eq!(r.crossings.mean, 5.0);
        assert_eq!(r.crossings.std, 5.0);
        assert!(evaluate("m", &fs, |_, _| None).is_err());
        let table = format_table(&[r]);
        assert!(table.contains("MTL") && table.lines().count() == 2);
    }
}
