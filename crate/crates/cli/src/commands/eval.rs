use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use nirvar::cluster::read_clusters_csv;
use nirvar::evalbench::study::{
    between_block_sweep, latent_recovery, normality_study, spectral_radius_grid, summarize_grid,
    variance_inflation_study, GridConfig, InflationConfig, LatentConfig, NormalityConfig, SweepConfig,
};
use nirvar::evalbench::{
    flip_costs, flow_imbalance, mse_by_step, pnl_series, read_predictions_csv, BacktestMetrics, MetricTable,
    DAILY_ANNUALISATION,
};
use nirvar::graph::{AdjacencyStack, GroundTruth};
use nirvar::restricted_var::ModelFile;
use nirvar::rng::SeedStream;
use nirvar::{NirvarError, Result};
use serde::{Deserialize, Serialize};

use crate::config::{default_out, resolve, run_config, CommonArgs};
use crate::io::{create, open, read_json, write_json};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedPredictions {
    pub name: String,
    pub path: PathBuf,
}

/// Metrics and `Δ_t` from prediction files in the `t,series,pred,real` layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub predictions: Vec<NamedPredictions>,
    pub reference: String,
    #[serde(default = "default_annualisation")]
    pub annualisation: f64,
    #[serde(default)]
    pub flip_cost: f64,
}

fn default_annualisation() -> f64 {
    DAILY_ANNUALISATION
}

/// A fitted model against the simulated truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryConfig {
    pub truth: PathBuf,
    pub model: PathBuf,
    pub clusters: Option<PathBuf>,
}

/// Headerless square matrix of pairwise flows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub input: PathBuf,
}

/// Every section present is run; outputs are named after the section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub grid: Option<GridConfig>,
    pub sweep: Option<SweepConfig>,
    pub normality: Option<NormalityConfig>,
    pub latent: Option<LatentConfig>,
    pub inflation: Option<InflationConfig>,
    pub compare: Option<CompareConfig>,
    pub recovery: Option<RecoveryConfig>,
    pub flow: Option<FlowConfig>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            grid: None,
            sweep: None,
            normality: None,
            latent: None,
            inflation: None,
            compare: None,
            recovery: None,
            flow: None,
            seed: 0,
            out: default_out(),
        }
    }
}

run_config!(EvalConfig);

pub fn run(args: &CommonArgs) -> Result<()> {
    let cfg: EvalConfig = resolve(args)?;
    let seeds = SeedStream::new(cfg.seed);
    let out = cfg.out.as_path();
    let mut ran = 0;
    if let Some(g) = &cfg.grid {
        let rows = spectral_radius_grid(g, &seeds.child("grid", 0))?;
        write_rows(out, "grid.csv", &rows)?;
        let summary = summarize_grid(&rows);
        write_rows(out, "grid_summary.csv", &summary)?;
        println!("grid: {} cells, {} rows", summary.len(), rows.len());
        ran += 1;
    }
    if let Some(s) = &cfg.sweep {
        let rows = between_block_sweep(s, &seeds.child("sweep", 0))?;
        write_rows(out, "sweep.csv", &rows)?;
        println!("sweep: {} rows", rows.len());
        ran += 1;
    }
    if let Some(n) = &cfg.normality {
        let report = normality_study(n, &seeds.child("normality", 0))?;
        write_json(out, "normality.json", &report)?;
        println!("normality: median KS {:.4}, max KS {:.4}", report.median_ks, report.max_ks);
        ran += 1;
    }
    if let Some(l) = &cfg.latent {
        let report = latent_recovery(l, &seeds.child("latent", 0))?;
        write_json(out, "latent.json", &report)?;
        println!("latent: block mean distances {:?}", report.distances);
        ran += 1;
    }
    if let Some(i) = &cfg.inflation {
        let report = variance_inflation_study(i, &seeds.child("inflation", 0))?;
        write_json(out, "inflation.json", &report)?;
        println!("variance inflation: {:.4} (se {:.4})", report.mean_alpha_v, report.se_alpha_v);
        ran += 1;
    }
    if let Some(c) = &cfg.compare {
        compare(c, out)?;
        ran += 1;
    }
    if let Some(r) = &cfg.recovery {
        let truth: GroundTruth = read_json(&r.truth)?;
        let model: ModelFile = read_json(&r.model)?;
        let phi = model.phi()?;
        let dense = DMatrix::from_fn(model.n, model.n * model.q_features, |i, j| {
            model.a_hat.get(i).and_then(|row| row.get(j)).copied().unwrap_or(0)
        });
        let a_hat = AdjacencyStack::from_dense(&dense, model.q_features)?;
        let clusters = r.clusters.as_deref().map(|p| read_clusters_csv(open(p)?)).transpose()?;
        let q = crate::io::feature_index(model.q, model.q_features)?;
        let rec = super::recovery(&truth, q, &a_hat, &phi, clusters.as_deref())?;
        write_json(out, "recovery.json", &rec)?;
        println!("recovery: restriction error {:.3}%", rec.restriction_error_pct);
        ran += 1;
    }
    if let Some(f) = &cfg.flow {
        let imbalance = flow_imbalance(&read_matrix(&f.input)?)?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(out, "flow_imbalance.csv")?);
        for row in imbalance.row_iter() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        ran += 1;
    }
    if ran == 0 {
        return Err(NirvarError::Config("nothing to evaluate: add at least one section".into()));
    }
    Ok(())
}

fn compare(cfg: &CompareConfig, out: &Path) -> Result<()> {
    let mut table = MetricTable { times: Vec::new(), rows: Vec::new(), mse_series: Vec::new() };
    let mut series = 0;
    for (i, entry) in cfg.predictions.iter().enumerate() {
        if cfg.predictions[..i].iter().any(|e| e.name == entry.name) {
            return Err(NirvarError::Config(format!("prediction set {} listed twice", entry.name)));
        }
        let p = read_predictions_csv(open(&entry.path)?)?;
        if i == 0 {
            table.times = p.times.clone();
            series = p.predictions.ncols();
        } else if p.times != table.times || p.predictions.ncols() != series {
            return Err(NirvarError::Dimension(format!("{} covers different steps or series", entry.name)));
        }
        let gross = pnl_series(&p.predictions, &p.realized)?;
        let net: Vec<f64> = gross.iter().zip(flip_costs(&p.predictions, cfg.flip_cost)).map(|(g, c)| g - c).collect();
        let metrics = BacktestMetrics::compute(&p.predictions, &p.realized, &net, cfg.annualisation)?;
        table.rows.push((entry.name.clone(), metrics));
        table.mse_series.push((entry.name.clone(), mse_by_step(&p.predictions, &p.realized)?));
    }
    if table.rows.is_empty() {
        return Err(NirvarError::Config("compare needs at least one prediction file".into()));
    }
    table.write_csv(create(out, "compare_metrics.csv")?)?;
    table.write_delta_csv(&cfg.reference, create(out, "compare_delta.csv")?)?;
    Ok(())
}

fn write_rows<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(dir, name)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| NirvarError::Parse(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(NirvarError::Dimension("flow matrix must be square and non-empty".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}
