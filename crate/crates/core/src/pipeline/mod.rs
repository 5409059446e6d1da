//! Scenario-based supply optimization: sample joint demand from the copula,
//! solve each sample, and keep the most frequent allocation. Also the
//! comparison against ground truth and point-forecast baselines.

mod report;

pub use report::{format_comparison, write_comparison_csv, write_histogram_csv};

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::GaussianCopula;
use crate::data::{format_lag, Lag, LocationIndex, OdPair};
use crate::error::{Error, Result};
use crate::qr::QuantileForecast;
use crate::tndfs::{evaluate_allocation, solve_instance, AllocationKey, DemandVector, Network, NetworkInstance, RouteDesign};

pub const DEFAULT_SAMPLES: usize = 100;
pub const MEDIAN_LEVEL: f64 = 0.5;
pub const WORST_CASE_LEVEL: f64 = 0.95;

/// Forecasts of every pair at one lag.
pub type ForecastSet = BTreeMap<OdPair, QuantileForecast>;

/// Maps location ids of the count data onto the network's demand nodes by
/// label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMap {
    nodes: Vec<Option<usize>>,
    labels: Vec<String>,
}

impl NodeMap {
    pub fn new(locations: &LocationIndex, instance: &NetworkInstance) -> Self {
        Self {
            nodes: locations.labels().iter().map(|l| instance.demand_id(l)).collect(),
            labels: locations.labels().to_vec(),
        }
    }

    /// Location `i` is demand node `i`.
    pub fn identity(n: usize) -> Self {
        Self {
            nodes: (0..n).map(Some).collect(),
            labels: (0..n).map(|i| i.to_string()).collect(),
        }
    }

    pub fn map(&self, pair: OdPair) -> Result<OdPair> {
        let node = |id: usize| {
            self.nodes.get(id).copied().flatten().ok_or_else(|| Error::Missing {
                what: "demand node",
                detail: format!(
                    "location {} has no demand node in the network",
                    self.labels.get(id).map(String::as_str).unwrap_or("?")
                ),
            })
        };
        OdPair::new(node(pair.origin)?, node(pair.destination)?)
    }

    /// Sums demand onto node pairs.
    pub fn demand(&self, values: impl IntoIterator<Item = (OdPair, f64)>) -> Result<DemandVector> {
        let mut out = DemandVector::new();
        for (p, v) in values {
            *out.entry(self.map(p)?).or_insert(0.0) += v;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSolution {
    pub key: AllocationKey,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub lag: Lag,
    pub samples: Vec<SampleSolution>,
    #[serde(with = "entries")]
    pub histogram: BTreeMap<AllocationKey, usize>,
    /// The modal allocation, with flows for the mean sampled demand.
    pub chosen: RouteDesign,
    /// Mean of the per-sample optima.
    pub mean_time_savings: f64,
    /// Mean objective of the chosen allocation across the samples.
    pub chosen_expected_savings: f64,
}

/// Maps with non-string keys as `[key, value]` lists.
mod entries {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<K: Serialize, V: Serialize, S: Serializer>(m: &BTreeMap<K, V>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, K, V, D>(d: D) -> Result<BTreeMap<K, V>, D::Error>
    where
        K: Deserialize<'de> + Ord,
        V: Deserialize<'de>,
        D: Deserializer<'de>,
    {
        Ok(Vec::<(K, V)>::deserialize(d)?.into_iter().collect())
    }
}

impl ScenarioResult {
    pub fn chosen_key(&self) -> AllocationKey {
        self.chosen.key()
    }

    pub fn chosen_count(&self) -> usize {
        self.histogram.get(&self.chosen_key()).copied().unwrap_or(0)
    }

    /// Allocations by count, most frequent first.
    pub fn ranked(&self) -> Vec<(AllocationKey, usize)> {
        let mean = mean_objectives(&self.samples);
        let mut v: Vec<(AllocationKey, usize)> = self.histogram.iter().map(|(k, c)| (k.clone(), *c)).collect();
        v.sort_by(|a, b| rank_order((&a.0, a.1, mean[&a.0]), (&b.0, b.1, mean[&b.0])));
        v
    }
}

fn mean_objectives(samples: &[SampleSolution]) -> BTreeMap<AllocationKey, f64> {
    let mut acc: BTreeMap<AllocationKey, (f64, usize)> = BTreeMap::new();
    for s in samples {
        let e = acc.entry(s.key.clone()).or_insert((0.0, 0));
        e.0 += s.objective;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// More samples first, then higher mean objective, then the smaller key.
fn rank_order(a: (&AllocationKey, usize, f64), b: (&AllocationKey, usize, f64)) -> std::cmp::Ordering {
    b.1.cmp(&a.1).then(b.2.total_cmp(&a.2)).then(a.0.cmp(b.0))
}

/// The most frequent allocation among `samples`.
pub fn modal_key(samples: &[SampleSolution]) -> Option<AllocationKey> {
    let mean = mean_objectives(samples);
    let mut counts: BTreeMap<&AllocationKey, usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(&s.key).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .min_by(|a, b| rank_order((a.0, a.1, mean[a.0]), (b.0, b.1, mean[b.0])))
        .map(|(k, _)| k.clone())
}

fn forecast_lag(forecasts: &ForecastSet) -> Result<Lag> {
    let lag = forecasts
        .values()
        .next()
        .ok_or_else(|| Error::Precondition("no forecasts".into()))?
        .lag;
    if let Some(f) = forecasts.values().find(|f| f.lag != lag) {
        return Err(Error::Invalid(format!(
            "forecasts mix lags {} and {}",
            format_lag(&lag),
            format_lag(&f.lag)
        )));
    }
    Ok(lag)
}

/// Demand network plus the location mapping shared by every strategy.
#[derive(Debug, Clone)]
pub struct Planner {
    pub net: Network,
    pub nodes: NodeMap,
}

impl Planner {
    pub fn new(net: Network, nodes: NodeMap) -> Self {
        Self { net, nodes }
    }

    /// Draws `k` joint demand samples, solves each and returns the modal
    /// allocation.
    pub fn optimize_lag(
        &self,
        copula: &GaussianCopula,
        forecasts: &ForecastSet,
        k: usize,
        seed: u64,
    ) -> Result<ScenarioResult> {
        if k == 0 {
            return Err(Error::Precondition("at least one sample is needed".into()));
        }
        let lag = forecast_lag(forecasts)?;
        let draws = copula.sample(forecasts, k, seed)?;
        let demands: Vec<DemandVector> = draws
            .iter()
            .map(|d| self.nodes.demand(copula.pair_order.iter().copied().zip(d.iter().copied())))
            .collect::<Result<_>>()?;
        let samples: Vec<SampleSolution> = demands
            .par_iter()
            .map(|lambda| {
                solve_instance(&self.net, lambda).map(|d| SampleSolution {
                    key: d.key(),
                    objective: d.objective,
                })
            })
            .collect::<Result<_>>()?;
        let mut histogram = BTreeMap::new();
        for s in &samples {
            *histogram.entry(s.key.clone()).or_insert(0) += 1;
        }
        let key = modal_key(&samples).expect("k >= 1");
        let expected: Vec<f64> = demands
            .par_iter()
            .map(|lambda| evaluate_allocation(&self.net, lambda, &key).map(|d| d.objective))
            .collect::<Result<_>>()?;
        let mut mean_demand = DemandVector::new();
        for lambda in &demands {
            for (p, v) in lambda {
                *mean_demand.entry(*p).or_insert(0.0) += v / k as f64;
            }
        }
        let chosen = evaluate_allocation(&self.net, &mean_demand, &key)?;
        Ok(ScenarioResult {
            lag,
            mean_time_savings: samples.iter().map(|s| s.objective).sum::<f64>() / k as f64,
            chosen_expected_savings: expected.iter().sum::<f64>() / k as f64,
            samples,
            histogram,
            chosen,
        })
    }

    /// Solves once with every pair at its level-`q` forecast.
    pub fn optimize_point(&self, forecasts: &ForecastSet, q: f64) -> Result<RouteDesign> {
        let values = forecasts
            .iter()
            .map(|(p, f)| f.require(q).map(|v| (*p, v)))
            .collect::<Result<Vec<_>>>()?;
        solve_instance(&self.net, &self.nodes.demand(values)?)
    }

    /// Solves once with the observed counts.
    pub fn optimize_ground_truth(&self, truth: &BTreeMap<OdPair, f64>) -> Result<RouteDesign> {
        solve_instance(&self.net, &self.nodes.demand(truth.iter().map(|(p, v)| (*p, *v)))?)
    }
}

/// Seed of the `i`-th lag in a comparison run.
pub fn lag_seed(seed: u64, i: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64 + 1);
    rng.next_u64()
}

/// A candidate model's forecasts, by lag.
#[derive(Debug, Clone)]
pub struct ModelForecasts {
    pub name: String,
    pub by_lag: BTreeMap<Lag, ForecastSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub key: AllocationKey,
    pub itinerary: String,
    pub objective: f64,
    pub matches_truth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub lag: Lag,
    pub model: String,
    pub truth: StrategyOutcome,
    pub proposed: StrategyOutcome,
    pub proposed_count: usize,
    pub samples: usize,
    pub median: StrategyOutcome,
    pub robust: StrategyOutcome,
    pub mean_time_savings: f64,
    pub chosen_expected_savings: f64,
    /// Allocations and their sample counts, most frequent first.
    pub histogram: Vec<(AllocationKey, usize)>,
}

fn outcome(net: &Network, d: &RouteDesign, truth: &AllocationKey) -> StrategyOutcome {
    let key = d.key();
    StrategyOutcome {
        itinerary: key.itinerary(net),
        matches_truth: &key == truth,
        objective: d.objective,
        key,
    }
}

/// Ground truth, proposed (sampled mode), median and worst-case solutions
/// for every lag and model. Rows are lag-major.
pub fn compare_strategies(
    planner: &Planner,
    lags: &[Lag],
    models: &[ModelForecasts],
    truth: &BTreeMap<Lag, BTreeMap<OdPair, f64>>,
    copula: &GaussianCopula,
    k: usize,
    seed: u64,
) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::with_capacity(lags.len() * models.len());
    for (i, lag) in lags.iter().enumerate() {
        let observed = truth.get(lag).ok_or_else(|| Error::Missing {
            what: "ground truth",
            detail: format!("lag {}", format_lag(lag)),
        })?;
        let gt = planner.optimize_ground_truth(observed)?;
        let gt_key = gt.key();
        let seed = lag_seed(seed, i);
        for m in models {
            let forecasts = m.by_lag.get(lag).ok_or_else(|| Error::Missing {
                what: "forecast",
                detail: format!("model {} at {}", m.name, format_lag(lag)),
            })?;
            if let Some(p) = forecasts.keys().find(|p| !observed.contains_key(p)) {
                return Err(Error::Missing {
                    what: "ground truth",
                    detail: format!("pair {p} at {}", format_lag(lag)),
                });
            }
            let scenario = planner.optimize_lag(copula, forecasts, k, seed)?;
            let median = planner.optimize_point(forecasts, MEDIAN_LEVEL)?;
            let robust = planner.optimize_point(forecasts, WORST_CASE_LEVEL)?;
            rows.push(ComparisonRow {
                lag: *lag,
                model: m.name.clone(),
                truth: outcome(&planner.net, &gt, &gt_key),
                proposed: outcome(&planner.net, &scenario.chosen, &gt_key),
                proposed_count: scenario.chosen_count(),
                samples: k,
                median: outcome(&planner.net, &median, &gt_key),
                robust: outcome(&planner.net, &robust, &gt_key),
                mean_time_savings: scenario.mean_time_savings,
                chosen_expected_savings: scenario.chosen_expected_savings,
                histogram: scenario.ranked(),
            });
        }
    }
    Ok(rows)
}
