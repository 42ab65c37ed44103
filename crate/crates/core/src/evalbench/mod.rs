//! Evaluation: forecast and trading metrics, rolling backtests with simple
//! baselines, and the simulation-study drivers.

pub mod backtest;
pub mod metrics;
pub mod study;

pub use backtest::{
    baselines, read_predictions_csv, rolling_backtest, run_backtest, write_predictions_csv, BacktestConfig,
    BacktestMetrics, BacktestReport, ClusterEpoch, ForecastModel, MetricTable, PredictionTable,
};
pub use metrics::*;
