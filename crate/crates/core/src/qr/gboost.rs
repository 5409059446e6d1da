//! Gradient-boosted regression trees on the tilted loss.

use serde::{Deserialize, Serialize};

use super::model::{collect_rows, fit_scoped, FittedQuantileModel, Regressor, Scope};
use super::{quantile_minimizer, tilted_loss, SeasonalStats, WorkingScale};
use crate::data::{DateRange, FeatureConfig, Panel};
use crate::error::{Error, Result};

const MAX_BINS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GBoostHyper {
    pub learning_rate: f64,
    /// 0 makes every tree a single leaf.
    pub max_depth: usize,
    pub n_trees: usize,
    pub min_samples_leaf: usize,
}

impl Default for GBoostHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_depth: 3,
            n_trees: 100,
            min_samples_leaf: 5,
        }
    }
}

impl GBoostHyper {
    pub fn validate(&self) -> Result<()> {
        let lr = self.learning_rate;
        if !(lr == 0.0 || (1e-8..=1.0).contains(&lr)) {
            return Err(Error::Invalid(format!("learning rate {lr} outside [1e-8, 1]")));
        }
        if self.max_depth > 6 {
            return Err(Error::Invalid(format!("max depth {} outside 0..=6", self.max_depth)));
        }
        if !(1..=200).contains(&self.n_trees) {
            return Err(Error::Invalid(format!("tree count {} outside 1..=200", self.n_trees)));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Invalid("min_samples_leaf must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    /// Mean training tilted loss after the initial constant and after each
    /// stage.
    pub stage_losses: Vec<f64>,
}

impl Regressor for TreeEnsemble {
    fn predict(&self, x: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

/// Held-out rows that stop boosting once their loss has not improved for
/// `patience` stages. The ensemble is cut back to its best stage.
#[derive(Debug, Clone, Copy)]
pub struct EarlyStop<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [f64],
    pub patience: usize,
}

/// Per-feature split candidates and the bin of every training value.
struct Binned {
    thresholds: Vec<Vec<f64>>,
    /// `bins[f][i]`: bin of row `i` on feature `f`
    bins: Vec<Vec<u8>>,
}

impl Binned {
    fn new(x: &[Vec<f64>], p: usize) -> Self {
        let mut thresholds = Vec::with_capacity(p);
        let mut bins = Vec::with_capacity(p);
        for f in 0..p {
            let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            let th: Vec<f64> = if vals.len() <= MAX_BINS {
                vals.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            } else {
                let mut th: Vec<f64> = (1..MAX_BINS)
                    .map(|k| {
                        let i = k * vals.len() / MAX_BINS;
                        0.5 * (vals[i - 1] + vals[i])
                    })
                    .collect();
                th.dedup();
                th
            };
            bins.push(
                x.iter()
                    .map(|r| th.partition_point(|t| *t < r[f]) as u8)
                    .collect(),
            );
            thresholds.push(th);
        }
        Self { thresholds, bins }
    }
}

struct TreeBuilder<'a> {
    binned: &'a Binned,
    grad: &'a [f64],
    resid: &'a [f64],
    q: f64,
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<TreeNode>,
}

impl TreeBuilder<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let r: Vec<f64> = rows.iter().map(|&i| self.resid[i]).collect();
        self.nodes.push(TreeNode::Leaf {
            value: quantile_minimizer(&r, self.q),
        });
        self.nodes.len() - 1
    }

    /// Best (feature, bin) by squared-error reduction on the gradient.
    fn best_split(&self, rows: &[usize]) -> Option<(usize, usize)> {
        let n = rows.len() as f64;
        let total: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let base = total * total / n;
        let mut best: Option<(f64, usize, usize)> = None;
        for (f, th) in self.binned.thresholds.iter().enumerate() {
            if th.is_empty() {
                continue;
            }
            let nb = th.len() + 1;
            let mut sum = vec![0.0; nb];
            let mut cnt = vec![0usize; nb];
            for &i in rows {
                let b = self.binned.bins[f][i] as usize;
                sum[b] += self.grad[i];
                cnt[b] += 1;
            }
            let (mut sl, mut cl) = (0.0, 0usize);
            for b in 0..nb - 1 {
                sl += sum[b];
                cl += cnt[b];
                let cr = rows.len() - cl;
                if cl < self.min_leaf || cr < self.min_leaf {
                    continue;
                }
                let sr = total - sl;
                let gain = sl * sl / cl as f64 + sr * sr / cr as f64 - base;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, b));
                }
            }
        }
        best.map(|(_, f, b)| (f, b))
    }

    fn grow(&mut self, rows: &[usize], depth: usize) -> usize {
        if depth >= self.max_depth || rows.len() < 2 * self.min_leaf {
            return self.leaf(rows);
        }
        let Some((f, b)) = self.best_split(rows) else {
            return self.leaf(rows);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| (self.binned.bins[f][i] as usize) <= b);
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: 0.0 });
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        self.nodes[at] = TreeNode::Split {
            feature: f,
            threshold: self.binned.thresholds[f][b],
            left,
            right,
        };
        at
    }
}

fn mean_loss(q: f64, y: &[f64], f: &[f64]) -> f64 {
    y.iter().zip(f).map(|(a, b)| tilted_loss(q, *a, *b)).sum::<f64>() / y.len() as f64
}

/// Boosts `hyper.n_trees` trees on the tilted loss at level `q`, starting
/// from the sample median. Each tree is grown on the negative gradient and
/// its leaves are set to the loss-minimizing constant of the residuals in
/// the leaf, so training loss never increases from one stage to the next.
pub fn fit_ensemble(
    x: &[Vec<f64>],
    y: &[f64],
    q: f64,
    hyper: &GBoostHyper,
    early_stop: Option<EarlyStop<'_>>,
) -> Result<TreeEnsemble> {
    hyper.validate()?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Invalid(format!("quantile level {q} not in (0, 1)")));
    }
    if y.is_empty() || x.len() != y.len() {
        return Err(Error::Precondition(format!(
            "{} feature rows for {} targets",
            x.len(),
            y.len()
        )));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::Invalid("ragged feature rows".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite feature or target".into()));
    }
    let binned = Binned::new(x, p);
    let init = quantile_minimizer(y, 0.5);
    let lr = hyper.learning_rate;
    let mut fitted = vec![init; y.len()];
    let mut trees = Vec::with_capacity(hyper.n_trees);
    let mut stage_losses = vec![mean_loss(q, y, &fitted)];

    let mut val_fit = early_stop.map(|e| vec![init; e.y.len()]);
    let mut best_val = early_stop.map(|e| (mean_loss(q, e.y, val_fit.as_ref().unwrap()), 0usize));
    let all: Vec<usize> = (0..y.len()).collect();

    for m in 0..hyper.n_trees {
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let grad: Vec<f64> = resid.iter().map(|r| if *r > 0.0 { q } else { q - 1.0 }).collect();
        let mut builder = TreeBuilder {
            binned: &binned,
            grad: &grad,
            resid: &resid,
            q,
            max_depth: hyper.max_depth,
            min_leaf: hyper.min_samples_leaf,
            nodes: Vec::new(),
        };
        builder.grow(&all, 0);
        let tree = RegressionTree { nodes: builder.nodes };
        for (fv, row) in fitted.iter_mut().zip(x) {
            *fv += lr * tree.predict(row);
        }
        stage_losses.push(mean_loss(q, y, &fitted));
        if let (Some(es), Some(vf), Some((best, at))) = (early_stop, val_fit.as_mut(), best_val.as_mut()) {
            for (fv, row) in vf.iter_mut().zip(es.x) {
                *fv += lr * tree.predict(row);
            }
            let loss = mean_loss(q, es.y, vf);
            trees.push(tree);
            if loss < *best {
                *best = loss;
                *at = m + 1;
            } else if m + 1 - *at >= es.patience {
                break;
            }
        } else {
            trees.push(tree);
        }
    }
    if let Some((_, at)) = best_val {
        trees.truncate(at);
        stage_losses.truncate(at + 1);
    }
    Ok(TreeEnsemble {
        init,
        learning_rate: lr,
        trees,
        stage_losses,
    })
}

pub type GBoostQrModel = FittedQuantileModel<TreeEnsemble>;

#[derive(Debug, Clone, PartialEq)]
pub struct GBoostOptions {
    pub features: FeatureConfig,
    pub hyper: GBoostHyper,
    pub seasonal: bool,
    pub sort_quantiles: bool,
    /// Lags whose loss decides when to stop adding trees.
    pub validation: Option<DateRange>,
    pub patience: usize,
}

impl Default for GBoostOptions {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            hyper: GBoostHyper::default(),
            seasonal: false,
            sort_quantiles: true,
            validation: None,
            patience: 10,
        }
    }
}

pub fn fit_gboost(panel: &Panel, train: &DateRange, levels: &[f64], opts: &GBoostOptions) -> Result<GBoostQrModel> {
    opts.hyper.validate()?;
    let scale = if opts.seasonal {
        WorkingScale::SeasonalNormalized(SeasonalStats::fit(panel, train))
    } else {
        WorkingScale::Differenced
    };
    let working = scale.apply(panel);
    fit_scoped(
        panel,
        train,
        levels,
        &opts.features,
        scale,
        opts.sort_quantiles,
        |rows, q, scope| {
            let val = match &opts.validation {
                Some(range) => {
                    let idx: Vec<usize> = match scope {
                        Scope::Shared => (0..working.n_pairs()).collect(),
                        Scope::Pair(p) => working.pair_index(p).into_iter().collect(),
                    };
                    Some(collect_rows(&working, &idx, range, &opts.features)?)
                }
                None => None,
            };
            let es = val.as_ref().filter(|v| !v.is_empty()).map(|v| EarlyStop {
                x: &v.x,
                y: &v.y,
                patience: opts.patience,
            });
            fit_ensemble(&rows.x, &rows.y, q, &opts.hyper, es)
        },
    )
}
