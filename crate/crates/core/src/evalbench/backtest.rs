//! Rolling-window one-step forecasting and the simple baselines.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{
    cumulative_mse_ratio, flip_costs, hit_long_ratios, mae_rmse, max_drawdown, mse_by_step, pnl_series, sharpe,
    sortino, DAILY_ANNUALISATION,
};
use crate::dgp::PanelTensor;
use crate::error::{NirvarError, Result};
use crate::graph::{AdjacencyStack, CommunityAssignment};
use crate::pipeline::{fit_structure, refit, PipelineConfig};
use crate::restricted_var::{restriction_matrix, RestrictionSet};
use crate::rng::SeedStream;
use crate::spectral::CovarianceMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestConfig {
    /// Look-back window length `W`.
    pub window: usize,
    /// Response feature (0-based).
    pub target: usize,
    /// Re-estimate `Φ̂` every this many steps; `None` fits once.
    pub refit_every: Option<usize>,
    /// Recompute the embedding and clusters every this many steps; `None`
    /// clusters once.
    pub recluster_every: Option<usize>,
    pub annualisation: f64,
    /// Flat cost per position flip subtracted from the PnL.
    pub flip_cost: f64,
    pub pipeline: PipelineConfig,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            window: 252,
            target: 0,
            refit_every: Some(1),
            recluster_every: Some(21),
            annualisation: DAILY_ANNUALISATION,
            flip_cost: 0.0,
            pipeline: PipelineConfig::default(),
        }
    }
}

impl BacktestConfig {
    fn validate(&self, panel: &PanelTensor) -> Result<()> {
        if self.window < 2 {
            return Err(NirvarError::Config(format!("window {} is too short", self.window)));
        }
        if panel.t() <= self.window + 1 {
            return Err(NirvarError::Config(format!(
                "panel has {} time points; a window of {} needs more than {}",
                panel.t(),
                self.window,
                self.window + 1
            )));
        }
        if self.target >= panel.q() {
            return Err(NirvarError::Config(format!("target feature {} but the panel has {}", self.target, panel.q())));
        }
        if self.pipeline.mode == CovarianceMode::Precision && self.window <= panel.n() {
            return Err(NirvarError::Config(format!(
                "precision mode needs a window longer than N = {}, got {}",
                panel.n(),
                self.window
            )));
        }
        if self.refit_every == Some(0) || self.recluster_every == Some(0) {
            return Err(NirvarError::Config("refit and recluster cadences must be positive".into()));
        }
        if !(self.annualisation > 0.0) || !(self.flip_cost >= 0.0) {
            return Err(NirvarError::Config("annualisation must be positive and flip cost non-negative".into()));
        }
        Ok(())
    }
}

/// Forecasting model run through the rolling protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecastModel {
    Nirvar,
    /// Each series on its own lag.
    Ar1,
    /// Unrestricted VAR(1) by OLS.
    Var,
}

impl ForecastModel {
    pub fn name(self) -> &'static str {
        match self {
            ForecastModel::Nirvar => "nirvar",
            ForecastModel::Ar1 => "ar1",
            ForecastModel::Var => "var",
        }
    }

    /// Fixed support of the baselines for response `target`.
    fn fixed_support(self, n: usize, q: usize, target: usize) -> Option<AdjacencyStack> {
        match self {
            ForecastModel::Nirvar => None,
            ForecastModel::Var => Some(AdjacencyStack::ones(n, q)),
            ForecastModel::Ar1 => {
                let blocks =
                    (0..q).map(|c| if c == target { DMatrix::identity(n, n) } else { DMatrix::zeros(n, n) }).collect();
                Some(AdjacencyStack::new(blocks).expect("square binary blocks"))
            }
        }
    }
}

/// Scalar summary of one backtest. Undefined ratios are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestMetrics {
    pub sharpe: Option<f64>,
    pub sortino: Option<f64>,
    pub max_drawdown: Option<f64>,
    pub max_drawdown_abs: f64,
    pub hit_ratio: f64,
    pub long_ratio: f64,
    pub mae: f64,
    pub rmse: f64,
    pub mse: f64,
}

fn defined(name: &str, r: Result<f64>) -> Option<f64> {
    r.map_err(|e| log::warn!("{name}: {e}")).ok()
}

impl BacktestMetrics {
    /// Metrics of predictions against realised values; ratios use `pnl`.
    pub fn compute(pred: &DMatrix<f64>, real: &DMatrix<f64>, pnl: &[f64], annualisation: f64) -> Result<Self> {
        let (hit_ratio, long_ratio) = hit_long_ratios(pred, real)?;
        let (mae, rmse) = mae_rmse(pred, real)?;
        let dd = max_drawdown(pnl)?;
        Ok(Self {
            sharpe: defined("Sharpe ratio", sharpe(pnl, annualisation)),
            sortino: defined("Sortino ratio", sortino(pnl, annualisation)),
            max_drawdown: dd.ratio,
            max_drawdown_abs: dd.absolute,
            hit_ratio,
            long_ratio,
            mae,
            rmse,
            mse: rmse * rmse,
        })
    }
}

/// Clusters in force from `start` (0-based time index of the first
/// prediction that used them).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEpoch {
    pub start: usize,
    /// 1-based labels per feature.
    pub labels: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub model: ForecastModel,
    pub target: usize,
    /// 0-based time index of each predicted observation.
    pub times: Vec<usize>,
    /// Rows are steps, columns series.
    pub predictions: DMatrix<f64>,
    pub realized: DMatrix<f64>,
    /// `Σ_i sign(ŝ_i) s_i` per step.
    pub pnl: Vec<f64>,
    /// PnL after flip costs; the ratios are computed from this series.
    pub net_pnl: Vec<f64>,
    pub mse_by_step: Vec<f64>,
    pub metrics: BacktestMetrics,
    pub clusters: Vec<ClusterEpoch>,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    model: ForecastModel,
    target: usize,
    steps: usize,
    series: usize,
    metrics: &'a BacktestMetrics,
    times: Vec<usize>,
    pnl: &'a [f64],
    net_pnl: &'a [f64],
    mse_by_step: &'a [f64],
    clusters: &'a [ClusterEpoch],
}

impl BacktestReport {
    fn assemble(
        model: ForecastModel,
        cfg: &BacktestConfig,
        times: Vec<usize>,
        predictions: DMatrix<f64>,
        realized: DMatrix<f64>,
        clusters: Vec<ClusterEpoch>,
    ) -> Result<Self> {
        let pnl = pnl_series(&predictions, &realized)?;
        let net_pnl: Vec<f64> = pnl.iter().zip(flip_costs(&predictions, cfg.flip_cost)).map(|(p, c)| p - c).collect();
        let metrics = BacktestMetrics::compute(&predictions, &realized, &net_pnl, cfg.annualisation)?;
        let mse_by_step = mse_by_step(&predictions, &realized)?;
        Ok(Self {
            model,
            target: cfg.target,
            times,
            predictions,
            realized,
            pnl,
            net_pnl,
            mse_by_step,
            metrics,
            clusters,
        })
    }

    /// Report JSON (metrics, PnL and MSE series, clusters); 1-based times.
    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        let view = ReportJson {
            model: self.model,
            target: self.target + 1,
            steps: self.times.len(),
            series: self.predictions.ncols(),
            metrics: &self.metrics,
            times: self.times.iter().map(|t| t + 1).collect(),
            pnl: &self.pnl,
            net_pnl: &self.net_pnl,
            mse_by_step: &self.mse_by_step,
            clusters: &self.clusters,
        };
        serde_json::to_writer_pretty(writer, &view)?;
        Ok(())
    }

    /// Long-format predictions with header `t,series,pred,real` (1-based).
    pub fn write_predictions_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_predictions_csv(&self.times, &self.predictions, &self.realized, writer)
    }
}

/// Write predictions in the `t,series,pred,real` layout (1-based indices).
pub fn write_predictions_csv<W: Write>(
    times: &[usize],
    pred: &DMatrix<f64>,
    real: &DMatrix<f64>,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "series", "pred", "real"])?;
    for (s, t) in times.iter().enumerate() {
        for i in 0..pred.ncols() {
            w.write_record([
                (t + 1).to_string(),
                (i + 1).to_string(),
                pred[(s, i)].to_string(),
                real[(s, i)].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Predictions read back from the `t,series,pred,real` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    /// 0-based time indices.
    pub times: Vec<usize>,
    pub predictions: DMatrix<f64>,
    pub realized: DMatrix<f64>,
}

#[derive(Deserialize)]
struct PredictionRow {
    t: usize,
    series: usize,
    pred: f64,
    real: f64,
}

/// Parse a predictions CSV; every time point must list the same series.
pub fn read_predictions_csv<R: Read>(reader: R) -> Result<PredictionTable> {
    let mut r = csv::Reader::from_reader(reader);
    let mut rows: BTreeMap<usize, BTreeMap<usize, (f64, f64)>> = BTreeMap::new();
    for rec in r.deserialize() {
        let row: PredictionRow = rec?;
        if row.t == 0 || row.series == 0 {
            return Err(NirvarError::Parse("time and series indices are 1-based".into()));
        }
        if rows.entry(row.t).or_default().insert(row.series, (row.pred, row.real)).is_some() {
            return Err(NirvarError::Parse(format!("duplicate entry t={} series={}", row.t, row.series)));
        }
    }
    let n = rows.values().next().map_or(0, BTreeMap::len);
    if n == 0 {
        return Err(NirvarError::Parse("predictions file has no rows".into()));
    }
    let w = rows.len();
    let mut pred = DMatrix::zeros(w, n);
    let mut real = DMatrix::zeros(w, n);
    for (s, (t, series)) in rows.iter().enumerate() {
        if series.len() != n || series.keys().copied().ne(1..=n) {
            return Err(NirvarError::Parse(format!("time {t} does not list series 1..={n}")));
        }
        for (i, (p, v)) in series.values().enumerate() {
            pred[(s, i)] = *p;
            real[(s, i)] = *v;
        }
    }
    Ok(PredictionTable { times: rows.keys().map(|t| t - 1).collect(), predictions: pred, realized: real })
}

struct Fitted {
    means: DVector<f64>,
    phi: DMatrix<f64>,
}

/// Rolling NIRVAR backtest of `cfg.target`.
pub fn rolling_backtest(panel: &PanelTensor, cfg: &BacktestConfig, seeds: &SeedStream) -> Result<BacktestReport> {
    run_backtest(panel, cfg, ForecastModel::Nirvar, seeds)
}

/// Rolling backtest of any model: for each step `t >= W` the model fitted on
/// `[t' - W, t')`, with `t'` the latest refit point, predicts `X_t` from
/// `X_{t-1}`. Structure epochs and refits run in parallel.
pub fn run_backtest(
    panel: &PanelTensor,
    cfg: &BacktestConfig,
    model: ForecastModel,
    seeds: &SeedStream,
) -> Result<BacktestReport> {
    cfg.validate(panel)?;
    let (w, t_end, n, q) = (cfg.window, panel.t(), panel.n(), panel.q());
    let refit_point = |t: usize| match cfg.refit_every {
        Some(k) => w + (t - w) / k * k,
        None => w,
    };
    let epoch_of = |t: usize| match cfg.recluster_every {
        Some(k) => (t - w) / k,
        None => 0,
    };
    let epoch_start = |e: usize| w + e * cfg.recluster_every.unwrap_or(0);

    let mut refits: Vec<usize> = (w..t_end).map(refit_point).collect();
    refits.dedup();

    let fixed = model.fixed_support(n, q, cfg.target).map(|a| restriction_matrix(&a));
    let mut epochs: Vec<usize> = refits.iter().map(|&r| epoch_of(r)).collect();
    epochs.dedup();
    let structures: BTreeMap<usize, (RestrictionSet, Vec<CommunityAssignment>)> = match &fixed {
        Some(r) => epochs.iter().map(|&e| (e, (r.clone(), Vec::new()))).collect(),
        None => epochs
            .par_iter()
            .map(|&e| {
                let start = epoch_start(e);
                let win = panel.window(start - w, w)?;
                let work = if cfg.pipeline.demean { win.demeaned().0 } else { win };
                let s = fit_structure(&work, &cfg.pipeline, &seeds.child("epoch", e as u64))?;
                Ok((e, (s.restrictions, s.assignments)))
            })
            .collect::<Result<_>>()?,
    };

    let fits: BTreeMap<usize, Fitted> = refits
        .par_iter()
        .map(|&r| {
            let win = panel.window(r - w, w)?;
            let (restrictions, _) = &structures[&epoch_of(r)];
            let (means, est) = refit(&win, cfg.target, restrictions, cfg.pipeline.demean, None)?;
            Ok((r, Fitted { means, phi: est.phi }))
        })
        .collect::<Result<_>>()?;

    let steps = t_end - w;
    let mut pred = DMatrix::zeros(steps, n);
    let mut real = DMatrix::zeros(steps, n);
    let target = panel.feature(cfg.target);
    for (s, t) in (w..t_end).enumerate() {
        let f = &fits[&refit_point(t)];
        let x_prev = panel.observation(t - 1) - &f.means;
        let yhat = f.means.rows(cfg.target * n, n) + &f.phi * x_prev;
        pred.row_mut(s).copy_from(&yhat.transpose());
        real.row_mut(s).copy_from(&target.column(t).transpose());
    }

    let clusters = structures
        .iter()
        .filter(|(_, (_, z))| !z.is_empty())
        .map(|(&e, (_, z))| ClusterEpoch {
            start: refits.iter().copied().find(|&r| epoch_of(r) == e).unwrap_or(epoch_start(e)),
            labels: z.iter().map(CommunityAssignment::one_based).collect(),
        })
        .collect();
    BacktestReport::assemble(model, cfg, (w..t_end).collect(), pred, real, clusters)
}

/// Per-model metrics and MSE series over a common set of steps.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub times: Vec<usize>,
    pub rows: Vec<(String, BacktestMetrics)>,
    pub mse_series: Vec<(String, Vec<f64>)>,
}

impl MetricTable {
    pub fn from_reports(reports: &[BacktestReport]) -> Result<Self> {
        let times = reports.first().map(|r| r.times.clone()).unwrap_or_default();
        if reports.iter().any(|r| r.times != times) {
            return Err(NirvarError::Dimension("reports cover different steps".into()));
        }
        Ok(Self {
            times,
            rows: reports.iter().map(|r| (r.model.name().to_string(), r.metrics.clone())).collect(),
            mse_series: reports.iter().map(|r| (r.model.name().to_string(), r.mse_by_step.clone())).collect(),
        })
    }

    fn series(&self, name: &str) -> Result<&[f64]> {
        self.mse_series
            .iter()
            .find(|(m, _)| m == name)
            .map(|(_, s)| s.as_slice())
            .ok_or_else(|| NirvarError::Config(format!("no model named {name}")))
    }

    /// `Δ_t` of `reference` against every other model.
    pub fn delta(&self, reference: &str) -> Result<Vec<(String, Vec<f64>)>> {
        let base = self.series(reference)?;
        self.mse_series
            .iter()
            .filter(|(m, _)| m != reference)
            .map(|(m, s)| Ok((m.clone(), cumulative_mse_ratio(base, s)?)))
            .collect()
    }

    /// One row per model.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "model",
            "sharpe",
            "sortino",
            "max_drawdown",
            "max_drawdown_abs",
            "hit_ratio",
            "long_ratio",
            "mae",
            "rmse",
            "mse",
        ])?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        for (name, m) in &self.rows {
            w.write_record([
                name.clone(),
                opt(m.sharpe),
                opt(m.sortino),
                opt(m.max_drawdown),
                m.max_drawdown_abs.to_string(),
                m.hit_ratio.to_string(),
                m.long_ratio.to_string(),
                m.mae.to_string(),
                m.rmse.to_string(),
                m.mse.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `t` plus one `Δ_t` column per compared model.
    pub fn write_delta_csv<W: Write>(&self, reference: &str, writer: W) -> Result<()> {
        let deltas = self.delta(reference)?;
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend(deltas.iter().map(|(m, _)| format!("{reference}_vs_{m}")));
        w.write_record(&header)?;
        for (s, t) in self.times.iter().enumerate() {
            let mut rec = vec![(t + 1).to_string()];
            rec.extend(deltas.iter().map(|(_, d)| d[s].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// NIRVAR, per-series AR(1) and dense VAR(1) under the same protocol.
pub fn baselines(
    panel: &PanelTensor,
    cfg: &BacktestConfig,
    seeds: &SeedStream,
) -> Result<(MetricTable, Vec<BacktestReport>)> {
    let reports = [ForecastModel::Nirvar, ForecastModel::Ar1, ForecastModel::Var]
        .iter()
        .map(|&m| run_backtest(panel, cfg, m, seeds))
        .collect::<Result<Vec<_>>>()?;
    Ok((MetricTable::from_reports(&reports)?, reports))
}
