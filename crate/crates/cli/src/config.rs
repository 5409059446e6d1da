use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use transit_predopt::data::{parse_lag, DateRange, FeatureConfig, Lag, SplitSpec};
use transit_predopt::pipeline::DEFAULT_SAMPLES;
use transit_predopt::qr::{GBoostHyper, QuantileSet};
use transit_predopt::synth::SyntheticSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Required, from the file or `--seed`.
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub quantiles: Vec<f64>,
    pub models: Vec<ModelConfig>,
    pub copula: CopulaConfig,
    pub optimize: OptimizeConfig,
    pub synth: SyntheticSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// OD count CSV; relative paths resolve against `output_dir`.
    pub counts: PathBuf,
    /// Network instance JSON; the built-in campus network when absent.
    pub network: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            counts: PathBuf::from("counts.csv"),
            network: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: DateRange,
    pub test: DateRange,
    pub masked_hours: BTreeSet<u32>,
    pub masked_dates: Vec<DateRange>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let s = SplitSpec::campus_preset();
        Self {
            train: s.train,
            test: s.test,
            masked_hours: s.masked_hours,
            masked_dates: s.masked_dates,
        }
    }
}

impl SplitConfig {
    pub fn spec(&self) -> SplitSpec {
        SplitSpec {
            train: self.train,
            test: self.test,
            masked_hours: self.masked_hours.clone(),
            masked_dates: self.masked_dates.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Hp,
    Lqr,
    Gboost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub learning_rate: Vec<f64>,
    pub max_depth: Vec<usize>,
    pub n_trees: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            learning_rate: vec![0.05, 0.1],
            max_depth: vec![2, 3],
            n_trees: vec![100],
            min_samples_leaf: vec![5],
        }
    }
}

impl GridConfig {
    pub fn points(&self) -> Vec<GBoostHyper> {
        let mut out = Vec::new();
        for &learning_rate in &self.learning_rate {
            for &max_depth in &self.max_depth {
                for &n_trees in &self.n_trees {
                    for &min_samples_leaf in &self.min_samples_leaf {
                        out.push(GBoostHyper {
                            learning_rate,
                            max_depth,
                            n_trees,
                            min_samples_leaf,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub family: Family,
    pub ar_order: usize,
    pub exam_period: Option<DateRange>,
    pub od_onehot: bool,
    pub cross_lag_order: Option<usize>,
    pub seasonal: bool,
    pub sort_quantiles: bool,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    /// Early stopping on the second training week, patience in trees.
    pub patience: Option<usize>,
    /// Grid-search the boosting hyperparameters on the training period.
    pub grid: Option<GridConfig>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let h = GBoostHyper::default();
        Self {
            name: "model".into(),
            family: Family::Lqr,
            ar_order: 24,
            exam_period: None,
            od_onehot: false,
            cross_lag_order: None,
            seasonal: false,
            sort_quantiles: true,
            learning_rate: h.learning_rate,
            max_depth: h.max_depth,
            n_trees: h.n_trees,
            min_samples_leaf: h.min_samples_leaf,
            patience: None,
            grid: None,
        }
    }
}

impl ModelConfig {
    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            ar_order: self.ar_order,
            exam_period: self.exam_period,
            od_onehot: self.od_onehot,
            cross_lag_order: self.cross_lag_order,
        }
    }

    pub fn hyper(&self) -> GBoostHyper {
        GBoostHyper {
            learning_rate: self.learning_rate,
            max_depth: self.max_depth,
            n_trees: self.n_trees,
            min_samples_leaf: self.min_samples_leaf,
        }
    }
}

fn default_models() -> Vec<ModelConfig> {
    let exam = SyntheticSpec::default().exam_period;
    vec![
        ModelConfig {
            name: "HP".into(),
            family: Family::Hp,
            ..ModelConfig::default()
        },
        ModelConfig {
            name: "LQR".into(),
            family: Family::Lqr,
            exam_period: exam,
            ..ModelConfig::default()
        },
        ModelConfig {
            name: "GBoost".into(),
            family: Family::Gboost,
            exam_period: exam,
            n_trees: 50,
            ..ModelConfig::default()
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CopulaConfig {
    /// Fit the correlation on training counts; otherwise pairs are
    /// independent.
    pub fit: bool,
}

impl Default for CopulaConfig {
    fn default() -> Self {
        Self { fit: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub k: usize,
    /// Lags as `YYYY-MM-DDTHH`; every `hours` entry of the first test day
    /// when empty.
    pub lags: Vec<String>,
    pub hours: Vec<u32>,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_SAMPLES,
            lags: Vec::new(),
            hours: (8..=18).collect(),
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: None,
            output_dir: PathBuf::from("out"),
            threads: None,
            data: DataConfig::default(),
            split: SplitConfig::default(),
            quantiles: QuantileSet::default().levels().to_vec(),
            models: default_models(),
            copula: CopulaConfig::default(),
            optimize: OptimizeConfig::default(),
            synth: SyntheticSpec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("field `{path}`: {}", e.into_inner().message().trim())
        })
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .context("no seed given: set `seed` in the config or pass --seed")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.output_dir.join(p)
        }
    }

    pub fn counts_path(&self) -> PathBuf {
        self.resolve(&self.data.counts)
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        let range = |name: &str, r: &DateRange| -> Result<()> {
            if r.start > r.end {
                bail!("field `{name}`: start {} is after end {}", r.start, r.end);
            }
            Ok(())
        };
        range("split.train", &self.split.train)?;
        range("split.test", &self.split.test)?;
        self.split.spec().validate().context("field `split`")?;
        QuantileSet::new(self.quantiles.clone()).context("field `quantiles`")?;
        if self.models.is_empty() {
            bail!("field `models`: at least one model is needed");
        }
        let mut names = BTreeSet::new();
        for (i, m) in self.models.iter().enumerate() {
            if m.name.is_empty() || m.name.contains(['/', '\\', ',']) {
                bail!("field `models[{i}].name`: {:?} is not a usable name", m.name);
            }
            if !names.insert(&m.name) {
                bail!("field `models[{i}].name`: duplicate name {:?}", m.name);
            }
            if m.family == Family::Gboost {
                m.hyper().validate().with_context(|| format!("field `models[{i}]`"))?;
                if let Some(g) = &m.grid {
                    if g.points().is_empty() {
                        bail!("field `models[{i}].grid`: empty grid");
                    }
                    for h in g.points() {
                        h.validate().with_context(|| format!("field `models[{i}].grid`"))?;
                    }
                }
            }
        }
        if self.optimize.k == 0 {
            bail!("field `optimize.k`: at least one sample is needed");
        }
        if let Some(h) = self.optimize.hours.iter().find(|h| **h > 23) {
            bail!("field `optimize.hours`: hour {h} out of range");
        }
        for (i, l) in self.optimize.lags.iter().enumerate() {
            if parse_lag(l).is_none() {
                bail!("field `optimize.lags[{i}]`: bad timestamp {l:?}");
            }
        }
        if self.threads == Some(0) {
            bail!("field `threads`: must be positive");
        }
        self.synth.validate().context("field `synth`")?;
        Ok(())
    }

    /// Lags to optimize, in time order.
    pub fn optimize_lags(&self) -> Vec<Lag> {
        let mut lags: Vec<Lag> = if self.optimize.lags.is_empty() {
            self.optimize
                .hours
                .iter()
                .filter_map(|h| self.split.test.start.and_hms_opt(*h, 0, 0))
                .collect()
        } else {
            self.optimize.lags.iter().filter_map(|l| parse_lag(l)).collect()
        };
        lags.sort();
        lags.dedup();
        lags
    }
}
