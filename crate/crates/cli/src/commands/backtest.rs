use std::path::PathBuf;

use nirvar::evalbench::{run_backtest, BacktestConfig, ForecastModel, MetricTable, DAILY_ANNUALISATION};
use nirvar::pipeline::PipelineConfig;
use nirvar::rng::SeedStream;
use nirvar::{NirvarError, Result};
use serde::{Deserialize, Serialize};

use crate::config::{default_out, resolve, run_config, CommonArgs};
use crate::io::{create, feature_index, read_panel};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestRunConfig {
    pub input: Option<PathBuf>,
    /// Response feature, 1-based.
    pub target: usize,
    pub window: usize,
    /// `null` fits once on the first window.
    pub refit_every: Option<usize>,
    /// `null` clusters once on the first window.
    pub recluster_every: Option<usize>,
    pub annualisation: f64,
    pub flip_cost: f64,
    pub models: Vec<ForecastModel>,
    /// Model whose cumulative MSE is the numerator of `Δ_t`.
    pub reference: ForecastModel,
    pub pipeline: PipelineConfig,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for BacktestRunConfig {
    fn default() -> Self {
        let lib = BacktestConfig::default();
        Self {
            input: None,
            target: 1,
            window: lib.window,
            refit_every: lib.refit_every,
            recluster_every: lib.recluster_every,
            annualisation: DAILY_ANNUALISATION,
            flip_cost: lib.flip_cost,
            models: vec![ForecastModel::Nirvar, ForecastModel::Ar1, ForecastModel::Var],
            reference: ForecastModel::Nirvar,
            pipeline: lib.pipeline,
            seed: 0,
            out: default_out(),
        }
    }
}

run_config!(BacktestRunConfig, input);

pub fn run(args: &CommonArgs) -> Result<()> {
    let cfg: BacktestRunConfig = resolve(args)?;
    if cfg.models.is_empty() {
        return Err(NirvarError::Config("no models to backtest".into()));
    }
    for (i, m) in cfg.models.iter().enumerate() {
        if cfg.models[..i].contains(m) {
            return Err(NirvarError::Config(format!("model {} listed twice", m.name())));
        }
    }
    let panel = read_panel(cfg.input.as_deref())?;
    let lib = BacktestConfig {
        window: cfg.window,
        target: feature_index(cfg.target, panel.q())?,
        refit_every: cfg.refit_every,
        recluster_every: cfg.recluster_every,
        annualisation: cfg.annualisation,
        flip_cost: cfg.flip_cost,
        pipeline: cfg.pipeline.clone(),
    };
    let seeds = SeedStream::new(cfg.seed);
    let mut reports = Vec::with_capacity(cfg.models.len());
    for &model in &cfg.models {
        log::info!("backtesting {}", model.name());
        let report = run_backtest(&panel, &lib, model, &seeds)?;
        report.write_json(create(&cfg.out, &format!("report_{}.json", model.name()))?)?;
        report.write_predictions_csv(create(&cfg.out, &format!("predictions_{}.csv", model.name()))?)?;
        reports.push(report);
    }
    let table = MetricTable::from_reports(&reports)?;
    table.write_csv(create(&cfg.out, "metrics.csv")?)?;
    if cfg.models.len() > 1 && cfg.models.contains(&cfg.reference) {
        table.write_delta_csv(cfg.reference.name(), create(&cfg.out, "delta.csv")?)?;
    }
    for (name, m) in &table.rows {
        let sr = m.sharpe.map_or_else(|| "n/a".to_string(), |s| format!("{s:.3}"));
        println!("{name}: sharpe {sr}, hit {:.2}%, mse {:.6}", m.hit_ratio, m.mse);
    }
    Ok(())
}
