use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use transit_predopt::copula::GaussianCopula;
use transit_predopt::data::{
    check_stationarity, format_lag, load_od_counts, save_od_counts, Lag, OdCounts, OdPair, Panel,
};
use transit_predopt::metrics::{evaluate_on_panel, format_table, write_report_csv, EvalReport};
use transit_predopt::pipeline::{
    compare_strategies, format_comparison, lag_seed, write_comparison_csv, write_histogram_csv, ForecastSet,
    ModelForecasts, NodeMap, Planner,
};
use transit_predopt::qr::{
    fit_gboost, fit_hp, fit_lqr, gboost_grid_search, load_model, read_forecasts, save_model, write_forecasts,
    GBoostOptions, LqrOptions, ModelDocument, OptSplit, QuantileForecast, QuantileModel, MODEL_SCHEMA_VERSION,
};
use transit_predopt::synth::generate_synthetic;
use transit_predopt::tndfs::NetworkInstance;

use crate::config::{Family, ModelConfig, PipelineConfig};
use crate::network::default_network;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn model_path(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.output_dir.join("models").join(format!("{name}.json"))
}

fn forecast_path(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.output_dir.join("forecasts").join(format!("{name}.csv"))
}

fn copula_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("copula.csv")
}

fn load_counts(cfg: &PipelineConfig) -> Result<OdCounts> {
    let path = cfg.counts_path();
    load_od_counts(&path).with_context(|| format!("loading counts {}", path.display()))
}

fn load_network(cfg: &PipelineConfig) -> Result<NetworkInstance> {
    match &cfg.data.network {
        Some(p) => {
            let path = cfg.resolve(p);
            NetworkInstance::load(&path).with_context(|| format!("loading network {}", path.display()))
        }
        None => Ok(default_network()),
    }
}

fn panel(cfg: &PipelineConfig, counts: &OdCounts) -> Result<Panel> {
    Ok(Panel::from_counts(counts, &cfg.split.spec())?)
}

pub fn synth(cfg: &PipelineConfig, out: Option<&Path>) -> Result<()> {
    let mut spec = cfg.synth.clone();
    spec.seed = cfg.seed()?;
    let counts = generate_synthetic(&spec)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.counts_path());
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    save_od_counts(&counts, &path)?;
    info!(
        "wrote {} pairs x {} lags to {}",
        counts.series.len(),
        counts.series.values().next().map_or(0, |s| s.len()),
        path.display()
    );
    Ok(())
}

fn fit_model(cfg: &PipelineConfig, panel: &Panel, m: &ModelConfig) -> Result<QuantileModel> {
    let train = cfg.split.train;
    let levels = &cfg.quantiles;
    Ok(match m.family {
        Family::Hp => QuantileModel::HistoricalPercentiles(fit_hp(panel, &train, levels)?),
        Family::Lqr => {
            let opts = LqrOptions {
                features: m.features(),
                seasonal: m.seasonal,
                sort_quantiles: m.sort_quantiles,
                ..LqrOptions::default()
            };
            QuantileModel::Linear(fit_lqr(panel, &train, levels, &opts)?)
        }
        Family::Gboost => {
            let mut opts = GBoostOptions {
                features: m.features(),
                hyper: m.hyper(),
                seasonal: m.seasonal,
                sort_quantiles: m.sort_quantiles,
                ..GBoostOptions::default()
            };
            if let Some(p) = m.patience {
                opts.patience = p;
            }
            if m.grid.is_some() || m.patience.is_some() {
                let split = OptSplit::from_train(&train)?;
                if let Some(grid) = &m.grid {
                    let points = grid.points();
                    let (best, scores) = gboost_grid_search(panel, &split, levels, &opts, &points)?;
                    for (h, s) in points.iter().zip(&scores) {
                        info!("{}: {h:?} scores {s:.4}", m.name);
                    }
                    opts.hyper = best;
                }
                if m.patience.is_some() {
                    opts.validation = Some(split.opt_val);
                }
            }
            QuantileModel::GradientBoosting(fit_gboost(panel, &train, levels, &opts)?)
        }
    })
}

pub fn train(cfg: &PipelineConfig) -> Result<()> {
    let counts = load_counts(cfg)?;
    let panel = panel(cfg, &counts)?;
    for (pair, r) in check_stationarity(&panel, &cfg.split.spec()) {
        if let Err(e) = r {
            warn!("stationarity check skipped for {}: {e}", counts.locations.pair_label(pair));
        }
    }
    for m in &cfg.models {
        info!("training {}", m.name);
        let model = fit_model(cfg, &panel, m).with_context(|| format!("training model {}", m.name))?;
        let doc = ModelDocument {
            schema_version: MODEL_SCHEMA_VERSION,
            name: m.name.clone(),
            model,
        };
        let path = model_path(cfg, &m.name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        save_model(&doc, &path)?;
    }
    let copula = if cfg.copula.fit {
        GaussianCopula::fit_panel(&panel, &cfg.split.train)?
    } else {
        GaussianCopula::independent(panel.pairs())
    };
    let mut w = create(&copula_path(cfg))?;
    copula.write_correlation(&counts.locations, &mut w)?;
    w.flush()?;
    info!("trained {} models", cfg.models.len());
    Ok(())
}

fn forecast_test_period(cfg: &PipelineConfig, panel: &Panel, model: &QuantileModel) -> Result<Vec<QuantileForecast>> {
    let history = match model {
        QuantileModel::HistoricalPercentiles(_) => 0,
        QuantileModel::Linear(m) => m.features.history_needed(),
        QuantileModel::GradientBoosting(m) => m.features.history_needed(),
    };
    let mut queries: Vec<(OdPair, Lag)> = Vec::new();
    for (j, s) in panel.series.iter().enumerate() {
        queries.extend(panel.rows_in(j, &cfg.split.test, history).into_iter().map(|i| (s.pair, s.t[i])));
    }
    queries.sort_by_key(|(p, t)| (*t, *p));
    Ok(model.predict_many(panel, &queries)?)
}

pub fn predict(cfg: &PipelineConfig) -> Result<()> {
    let counts = load_counts(cfg)?;
    let panel = panel(cfg, &counts)?;
    for m in &cfg.models {
        let path = model_path(cfg, &m.name);
        let doc = load_model(&path).with_context(|| format!("loading {} (run `train` first)", path.display()))?;
        let forecasts = forecast_test_period(cfg, &panel, &doc.model)?;
        let mut w = create(&forecast_path(cfg, &m.name))?;
        write_forecasts(&forecasts, &counts.locations, &mut w)?;
        w.flush()?;
        info!("{}: {} forecasts", m.name, forecasts.len());
    }
    Ok(())
}

fn load_forecasts(cfg: &PipelineConfig, counts: &OdCounts, name: &str) -> Result<Vec<QuantileForecast>> {
    let path = forecast_path(cfg, name);
    let f = File::open(&path).with_context(|| format!("opening {} (run `predict` first)", path.display()))?;
    Ok(read_forecasts(std::io::BufReader::new(f), &counts.locations)?)
}

pub fn evaluate(cfg: &PipelineConfig) -> Result<()> {
    let counts = load_counts(cfg)?;
    let panel = panel(cfg, &counts)?;
    let reports: Vec<EvalReport> = cfg
        .models
        .iter()
        .map(|m| {
            let f = load_forecasts(cfg, &counts, &m.name)?;
            Ok(evaluate_on_panel(&m.name, &f, &panel)?)
        })
        .collect::<Result<_>>()?;
    let mut w = create(&cfg.output_dir.join("evaluation.csv"))?;
    write_report_csv(&reports, &counts.locations, &mut w)?;
    w.flush()?;
    let table = format_table(&reports);
    write_text(&cfg.output_dir.join("evaluation.txt"), &table)?;
    for line in table.lines() {
        info!("{line}");
    }
    Ok(())
}

fn by_lag(forecasts: Vec<QuantileForecast>) -> BTreeMap<Lag, ForecastSet> {
    let mut out: BTreeMap<Lag, ForecastSet> = BTreeMap::new();
    for f in forecasts {
        out.entry(f.lag).or_default().insert(f.pair, f);
    }
    out
}

struct Scenario {
    counts: OdCounts,
    planner: Planner,
    copula: GaussianCopula,
    models: Vec<ModelForecasts>,
    lags: Vec<Lag>,
}

fn scenario(cfg: &PipelineConfig, lags: Option<&[Lag]>, only: Option<&str>) -> Result<Scenario> {
    let counts = load_counts(cfg)?;
    let inst = load_network(cfg)?;
    let nodes = NodeMap::new(&counts.locations, &inst);
    let planner = Planner::new(inst.prepare()?, nodes);
    let path = copula_path(cfg);
    let f = File::open(&path).with_context(|| format!("opening {} (run `train` first)", path.display()))?;
    let copula = GaussianCopula::read_correlation(std::io::BufReader::new(f), &counts.locations)?;
    let mut models = Vec::new();
    for m in cfg.models.iter().filter(|m| only.is_none_or(|o| o == m.name)) {
        models.push(ModelForecasts {
            name: m.name.clone(),
            by_lag: by_lag(load_forecasts(cfg, &counts, &m.name)?),
        });
    }
    if let Some(o) = only {
        if models.is_empty() {
            bail!("no model named {o:?} in the config");
        }
    }
    let lags = lags.map(<[Lag]>::to_vec).unwrap_or_else(|| cfg.optimize_lags());
    for t in &lags {
        if !cfg.split.test.contains_lag(t) {
            bail!("lag {} lies outside the test period", format_lag(t));
        }
    }
    Ok(Scenario {
        counts,
        planner,
        copula,
        models,
        lags,
    })
}

pub fn optimize(cfg: &PipelineConfig, lags: Option<&[Lag]>, only: Option<&str>) -> Result<()> {
    let seed = cfg.seed()?;
    let sc = scenario(cfg, lags, only)?;
    for m in &sc.models {
        let mut results = Vec::with_capacity(sc.lags.len());
        for (i, t) in sc.lags.iter().enumerate() {
            let f = m.by_lag.get(t).with_context(|| format!("{} has no forecasts at {}", m.name, format_lag(t)))?;
            let r = sc.planner.optimize_lag(&sc.copula, f, cfg.optimize.k, lag_seed(seed, i))?;
            info!(
                "{} {}: {} ({}/{})",
                m.name,
                format_lag(t),
                r.chosen.itinerary(),
                r.chosen_count(),
                cfg.optimize.k
            );
            results.push(r);
        }
        let json = serde_json::to_string_pretty(&results)?;
        write_text(&cfg.output_dir.join("scenarios").join(format!("{}.json", m.name)), &json)?;
    }
    Ok(())
}

fn truth(counts: &OdCounts, lags: &[Lag]) -> Result<BTreeMap<Lag, BTreeMap<OdPair, f64>>> {
    lags.iter()
        .map(|t| {
            let obs = counts
                .pairs()
                .into_iter()
                .map(|p| {
                    counts
                        .count_at(p, t)
                        .map(|c| (p, c as f64))
                        .with_context(|| format!("no count for {} at {}", counts.locations.pair_label(p), format_lag(t)))
                })
                .collect::<Result<_>>()?;
            Ok((*t, obs))
        })
        .collect()
}

pub fn pipeline(cfg: &PipelineConfig) -> Result<()> {
    let seed = cfg.seed()?;
    let trained = cfg.models.iter().all(|m| model_path(cfg, &m.name).exists()) && copula_path(cfg).exists();
    if trained {
        info!("using trained models in {}", cfg.output_dir.join("models").display());
    } else {
        train(cfg)?;
    }
    predict(cfg)?;
    evaluate(cfg)?;
    let sc = scenario(cfg, None, None)?;
    let truth = truth(&sc.counts, &sc.lags)?;
    let rows = compare_strategies(&sc.planner, &sc.lags, &sc.models, &truth, &sc.copula, cfg.optimize.k, seed)?;
    let mut w = create(&cfg.output_dir.join("comparison.csv"))?;
    write_comparison_csv(&rows, &mut w)?;
    w.flush()?;
    let mut w = create(&cfg.output_dir.join("histogram.csv"))?;
    write_histogram_csv(&rows, &sc.planner.net, &mut w)?;
    w.flush()?;
    let table = format_comparison(&rows);
    write_text(&cfg.output_dir.join("comparison.txt"), &table)?;
    for line in table.lines() {
        info!("{line}");
    }
    Ok(())
}
